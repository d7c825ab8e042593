import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drrnlog.engine import (
    DARKNESS,
    EMPTY_HANDED,
    NOTHING_HAPPENS,
    GAMES_DIR,
    EnvDoneError,
    GameParseError,
    GameValidationError,
    SnapshotMismatchError,
    TextGameEnv,
    brute_force_valid_actions,
    bundled_game,
    enumerate_states,
    grammar_actions,
    load_game,
    reset,
)
from drrnlog.gallery import build_gallery, render

BUNDLED = ["lantern", "maze", "memory", "twins", "corridor", "gallery"]

SEALED = {
    "meta": {"name": "sealed", "max_score": 0, "start_room": "cell"},
    "rooms": [{"id": "cell", "name": "Cell", "desc": "Four blank walls."}],
}


def doc(**over):
    d = json.loads(json.dumps(SEALED))
    d.update(over)
    return json.dumps(d)


@pytest.fixture
def lantern():
    return bundled_game("lantern")


def test_lantern_loads(lantern):
    assert len(lantern.rooms) == 4
    assert len(lantern.objects) == 1
    assert lantern.max_score == 30
    assert lantern.start_room == "field"


def test_gallery_file_matches_generator():
    path = GAMES_DIR / "gallery.game"
    assert path.read_text(encoding="utf-8") == render(build_gallery())


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_games_load(name):
    g = bundled_game(name)
    assert g.room(g.start_room)


def test_empty_document_is_parse_error():
    with pytest.raises(GameParseError) as err:
        load_game("")
    assert err.value.line == 1


def test_parse_error_reports_position():
    with pytest.raises(GameParseError) as err:
        load_game('{\n  "meta": {,\n}')
    assert err.value.line == 2


def test_dangling_exit_is_named():
    rooms = [{"id": "cell", "name": "Cell", "exits": {"north": "attic"}}]
    with pytest.raises(GameValidationError, match="north.*attic"):
        load_game(doc(rooms=rooms))


@pytest.mark.parametrize(
    "over, pattern",
    [
        ({"rooms": [{"id": "a", "name": "A"}, {"id": "a", "name": "B"}], "meta": {"name": "x", "max_score": 0, "start_room": "a"}}, "duplicate room"),
        ({"meta": {"name": "x", "max_score": 0, "start_room": "nowhere_room"}}, "start_room"),
        ({"rooms": [{"id": "cell", "name": "Cell", "exits": {"sideways": "cell"}}]}, "canonical"),
        ({"objects": [{"id": "o1", "name": "rock", "initial_location": "cell"},
                      {"id": "o2", "name": "rock", "initial_location": "cell"}]}, "repeats"),
        ({"triggers": [{"id": "t", "verb_phrase": "dance", "effects": [{"reward": -1}]}]}, "negative"),
        ({"triggers": [{"id": "t", "verb_phrase": "dance", "effects": [{"reward": 5}]}]}, "exceeds"),
        ({"triggers": [{"id": "t", "verb_phrase": "dance", "effects": [{"explode": 1}]}]}, "bad effect"),
    ],
)
def test_validation_errors(over, pattern):
    with pytest.raises(GameValidationError, match=pattern):
        load_game(doc(**over))


def test_max_score_above_total_rewards_rejected():
    d = doc(meta={"name": "x", "max_score": 10, "start_room": "cell"},
            triggers=[{"id": "t", "verb_phrase": "dance", "effects": [{"reward": 5}], "once": True}])
    with pytest.raises(GameValidationError, match="max_score"):
        load_game(d)


def test_reset(lantern):
    env, obs = reset(lantern)
    assert "Field" in obs.response
    assert obs.inventory_text == EMPTY_HANDED
    assert obs.look_text == env.look_text()
    assert obs.look_text.startswith("Field. ")
    assert env.state.score == 0 and not env.done
    assert env.reset() == obs


def test_reset_after_finished_episode(lantern):
    env, _ = reset(lantern)
    h0 = env.gt_state_hash()
    for a in ["east", "down"]:
        env.step(a)
    assert env.done
    with pytest.raises(EnvDoneError):
        env.step("look")
    env.reset()
    assert env.gt_state_hash() == h0


def test_step_examples(lantern):
    env, _ = reset(lantern)
    r = env.step("east")
    assert env.gt_room_id() == "entrance" and r.world_changed and r.reward == 0
    r = env.step("xyzzy-unknown")
    assert r.observation.response == NOTHING_HAPPENS
    assert not r.world_changed and r.reward == 0
    env.step("west")
    r = env.step("  TAKE   Lantern ")
    assert r.world_changed
    assert env.state.object_locations["lantern"] == "inventory"


def test_lantern_walkthrough(lantern):
    env, _ = reset(lantern)
    total = 0
    for a in ["take lantern", "turn on lantern", "east", "down"]:
        total += env.step(a).reward
    assert total == 10
    assert env.look_text() != DARKNESS
    env.step("turn off lantern")
    assert env.look_text() == DARKNESS
    env.step("turn on lantern")
    while "open chest" not in env.valid_actions():
        exits = [a for a in env.valid_actions() if a in ("east", "north", "south", "west")]
        env.step(exits[0])
    r = env.step("open chest")
    total += r.reward
    assert r.done and total == 30 == env.state.score


def test_death_gives_zero_reward(lantern):
    env, _ = reset(lantern)
    env.step("east")
    r = env.step("down")
    assert r.done and r.reward == 0


def test_valid_actions_examples(lantern):
    env, _ = reset(lantern)
    assert env.valid_actions() == ["east", "inventory", "look", "take lantern"]
    sealed, _ = reset(load_game(doc()))
    assert sealed.valid_actions() == ["inventory", "look"]


def test_state_hash_examples(lantern):
    a, _ = reset(lantern)
    b, _ = reset(lantern)
    assert a.gt_state_hash() == b.gt_state_hash()
    h = a.gt_state_hash()
    a.step("east")
    assert a.gt_state_hash() != h
    a.step("west")
    assert a.gt_state_hash() == h


def test_room_ids_distinct_for_same_names():
    g = bundled_game("maze")
    mazes = [r.id for r in g.rooms if r.name == "Maze"]
    assert len(mazes) >= 6 and len(set(mazes)) == len(mazes)


def test_snapshot_restore(lantern):
    env, _ = reset(lantern)
    snap = env.snapshot()
    h = env.gt_state_hash()
    env.step("east")
    env.restore(snap)
    assert env.gt_state_hash() == h
    seq = ["take lantern", "east", "turn on lantern", "down", "look", "east", "inventory", "west", "up", "west"]

    def replay():
        env.restore(snap)
        return [env.step(a) for a in seq if not env.done]

    assert replay() == replay()
    other = TextGameEnv(bundled_game("maze"))
    with pytest.raises(SnapshotMismatchError):
        other.restore(snap)


def test_snapshot_isolated_from_later_steps(lantern):
    env, _ = reset(lantern)
    snap = env.snapshot()
    env.step("take lantern")
    assert snap.state.object_locations["lantern"] == "field"


@pytest.mark.parametrize("name", ["lantern", "maze", "memory", "twins", "corridor"])
def test_valid_actions_match_oracle_everywhere(name):
    g = bundled_game(name)
    env = TextGameEnv(g)
    for snap in enumerate_states(g):
        env.restore(snap)
        assert env.valid_actions() == brute_force_valid_actions(env)


def test_grammar_covers_triggers(lantern):
    acts = grammar_actions(lantern)
    assert "open chest" in acts and "turn on lantern" in acts and "north" in acts


def action_seqs():
    return st.lists(st.integers(0, 10_000), min_size=1, max_size=40)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUNDLED), action_seqs())
def test_rollout_properties(name, picks):
    g = bundled_game(name)
    env, _ = reset(g)
    grammar = grammar_actions(g)
    total = 0
    last_score = 0
    for n, p in enumerate(picks):
        if env.done:
            break
        # mix valid actions with arbitrary grammar actions
        pool = env.valid_actions() if n % 2 else grammar
        a = pool[p % len(pool)]
        before = env.state.serialize()
        r = env.step(a)
        assert r.world_changed == (env.state.serialize() != before)
        total += r.reward
        assert r.reward >= 0
        assert env.state.score == total >= last_score
        last_score = env.state.score
        assert r.observation.inventory_text == env.inventory_text()
        assert r.observation.look_text == env.look_text()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(BUNDLED), action_seqs())
def test_determinism(name, picks):
    g = bundled_game(name)

    def run():
        env, obs = reset(g)
        out = [obs]
        for p in picks:
            if env.done:
                break
            acts = env.valid_actions()
            out.append(env.step(acts[p % len(acts)]))
        return out

    assert run() == run()


def test_darkness_rule(lantern):
    env, _ = reset(lantern)
    env.step("take lantern")
    env.step("east")
    env.step("turn on lantern")
    env.step("down")
    assert env.look_text() != DARKNESS
    env.step("drop lantern")
    assert env.look_text() != DARKNESS  # lit lantern on the floor still lights the room
    env.step("take lantern")
    env.step("turn off lantern")
    assert env.look_text() == DARKNESS


def test_state_counts_small():
    for name in ("lantern", "maze"):
        assert len(enumerate_states(bundled_game(name))) <= 1000
