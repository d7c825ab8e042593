"""Deterministic text-adventure engine.

Games are declared in JSON documents (``*.game``) with four top-level keys:

    meta      {name, max_score, start_room}
    rooms     [{id, name, desc, exits: {direction: room-id}, dark, alt_descs}]
    objects   [{id, name, initial_location, portable, light_source, switchable}]
    triggers  [{id, verb_phrase, room, requires, effects, once, response}]

``alt_descs`` is an optional list of ``{"when": [conditions], "desc": text}``;
the first entry whose conditions hold replaces the room description.

Conditions (all must hold):
    {"flag": f}  {"not_flag": f}  {"carrying": obj}  {"not_carrying": obj}
    {"object_at": [obj, location]}  {"object_on": obj}  {"object_off": obj}
    {"has_light": bool}        a lit light source is carried (or not)

Effects (applied in order):
    {"set_flag": f}  {"move_player": room}  {"move_object": [obj, location]}
    {"reveal_exit": [room, direction, target]}  {"reward": points}
    {"end_episode": true}  {"kill_player": true}

Besides the triggers the parser knows navigation (ten canonical directions),
``look``, ``inventory``, ``take X``, ``drop X``, ``turn on X`` and
``turn off X``.  Triggers are matched before built-ins.  Anything else is a
no-op.  The environment also exposes handicaps used by the agents: the exact
state hash, the room id, valid actions, and snapshot/restore.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .hashrep import str_hash

DIRECTIONS = (
    "north",
    "south",
    "east",
    "west",
    "northeast",
    "northwest",
    "southeast",
    "southwest",
    "up",
    "down",
)
INVENTORY = "inventory"
NOWHERE = "nowhere"
ANY_ROOM = "any"

DARKNESS = "It is pitch black. You are likely to be eaten by a grue."
EMPTY_HANDED = "You are empty-handed."
NOTHING_HAPPENS = "Nothing happens."

GAMES_DIR = Path(__file__).parent / "games"

CONDITION_KINDS = {"flag", "not_flag", "carrying", "not_carrying", "object_at", "object_on", "object_off", "has_light"}
EFFECT_KINDS = {"set_flag", "move_player", "move_object", "reveal_exit", "reward", "end_episode", "kill_player"}


class GameError(Exception):
    pass


class GameParseError(GameError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class GameValidationError(GameError):
    pass


class EnvDoneError(RuntimeError):
    """Raised when stepping or querying an environment whose episode ended."""


class SnapshotMismatchError(ValueError):
    pass


# -- definitions -----------------------------------------------------------


@dataclass(frozen=True)
class RoomDef:
    id: str
    name: str
    desc: str
    exits: dict[str, str]
    dark: bool = False
    alt_descs: tuple[tuple[tuple[dict, ...], str], ...] = ()


@dataclass(frozen=True)
class ObjectDef:
    id: str
    name: str
    initial_location: str
    portable: bool = True
    light_source: bool = False
    switchable: bool = False


@dataclass(frozen=True)
class TriggerDef:
    id: str
    verb_phrase: str
    room: str
    requires: tuple[dict, ...]
    effects: tuple[dict, ...]
    once: bool = True
    response: str = ""


@dataclass(frozen=True)
class GameDef:
    name: str
    max_score: int
    start_room: str
    rooms: tuple[RoomDef, ...]
    objects: tuple[ObjectDef, ...]
    triggers: tuple[TriggerDef, ...]
    fingerprint: int = 0

    def room(self, room_id: str) -> RoomDef:
        return self._rooms[room_id]

    def obj(self, obj_id: str) -> ObjectDef:
        return self._objects[obj_id]

    def __post_init__(self):
        object.__setattr__(self, "_rooms", {r.id: r for r in self.rooms})
        object.__setattr__(self, "_objects", {o.id: o for o in self.objects})

    def corpus(self) -> list[str]:
        """Every piece of text the game can print or accept, for vocabularies."""
        texts = [DARKNESS, EMPTY_HANDED, NOTHING_HAPPENS, "You are carrying:", "Taken.", "Dropped.",
                 "There is a here.", "providing light", "is now on.", "is now off.", "You can't take that.",
                 "You don't have that.", "You can't go that way.", "You can't see any such thing.",
                 "is already on.", "is already off.", "look", "inventory", "take", "drop", "turn on", "turn off"]
        texts += DIRECTIONS
        for r in self.rooms:
            texts += [r.name, r.desc] + [d for _, d in r.alt_descs]
        for o in self.objects:
            texts.append(o.name)
        for t in self.triggers:
            texts += [t.verb_phrase, t.response]
        return texts


def _normalize(action: str) -> str:
    return " ".join(action.lower().split())


def _parse_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise GameParseError("game document must be an object", 1, 1)
    return doc


def _need(d: dict, key: str, where: str) -> Any:
    if key not in d:
        raise GameValidationError(f"{where}: missing key {key!r}")
    return d[key]


def _check_conditions(conds, where: str) -> tuple[dict, ...]:
    out = []
    for c in conds:
        if not isinstance(c, dict) or len(c) != 1 or next(iter(c)) not in CONDITION_KINDS:
            raise GameValidationError(f"{where}: bad condition {c!r}")
        out.append(dict(c))
    return tuple(out)


def load_game(text: str) -> GameDef:
    """Parse and validate a game definition document."""
    doc = _parse_document(text)
    meta = _need(doc, "meta", "game")
    rooms = []
    for r in _need(doc, "rooms", "game"):
        rid = _need(r, "id", "room")
        alts = tuple(
            (_check_conditions(a.get("when", []), f"room {rid!r} alt_descs"), a["desc"]) for a in r.get("alt_descs", [])
        )
        rooms.append(
            RoomDef(
                id=rid,
                name=_need(r, "name", f"room {rid!r}"),
                desc=r.get("desc", ""),
                exits=dict(r.get("exits", {})),
                dark=bool(r.get("dark", False)),
                alt_descs=alts,
            )
        )
    objects = [
        ObjectDef(
            id=_need(o, "id", "object"),
            name=_need(o, "name", f"object {o.get('id')!r}"),
            initial_location=_need(o, "initial_location", f"object {o.get('id')!r}"),
            portable=bool(o.get("portable", True)),
            light_source=bool(o.get("light_source", False)),
            switchable=bool(o.get("switchable", False)),
        )
        for o in doc.get("objects", [])
    ]
    triggers = []
    for t in doc.get("triggers", []):
        tid = _need(t, "id", "trigger")
        effects = []
        for e in t.get("effects", []):
            if not isinstance(e, dict) or len(e) != 1 or next(iter(e)) not in EFFECT_KINDS:
                raise GameValidationError(f"trigger {tid!r}: bad effect {e!r}")
            effects.append(dict(e))
        triggers.append(
            TriggerDef(
                id=tid,
                verb_phrase=_normalize(_need(t, "verb_phrase", f"trigger {tid!r}")),
                room=t.get("room", ANY_ROOM),
                requires=_check_conditions(t.get("requires", []), f"trigger {tid!r}"),
                effects=tuple(effects),
                once=bool(t.get("once", True)),
                response=t.get("response", ""),
            )
        )
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    game = GameDef(
        name=_need(meta, "name", "meta"),
        max_score=int(_need(meta, "max_score", "meta")),
        start_room=_need(meta, "start_room", "meta"),
        rooms=tuple(rooms),
        objects=tuple(objects),
        triggers=tuple(triggers),
        fingerprint=str_hash(canonical),
    )
    validate_game(game)
    return game


def load_game_file(path) -> GameDef:
    path = Path(path)
    if not path.exists() and not path.suffix and (GAMES_DIR / f"{path}.game").exists():
        path = GAMES_DIR / f"{path}.game"
    return load_game(path.read_text(encoding="utf-8"))


def bundled_game(name: str) -> GameDef:
    return load_game_file(GAMES_DIR / f"{name.removesuffix('.game')}.game")


def validate_game(game: GameDef) -> None:
    room_ids = [r.id for r in game.rooms]
    obj_ids = [o.id for o in game.objects]
    for kind, ids in (("room", room_ids), ("object", obj_ids), ("trigger", [t.id for t in game.triggers])):
        seen = set()
        for i in ids:
            if i in seen:
                raise GameValidationError(f"duplicate {kind} id {i!r}")
            seen.add(i)
    if not game.rooms:
        raise GameValidationError("game declares no rooms")
    rooms = set(room_ids)
    objs = set(obj_ids)
    if game.start_room not in rooms:
        raise GameValidationError(f"start_room {game.start_room!r} is not a declared room")
    for r in game.rooms:
        for direction, target in r.exits.items():
            if direction not in DIRECTIONS:
                raise GameValidationError(f"room {r.id!r}: exit {direction!r} is not a canonical direction")
            if target not in rooms:
                raise GameValidationError(f"room {r.id!r}: exit {direction!r} targets undeclared room {target!r}")
    locations = rooms | objs | {INVENTORY, NOWHERE}
    for o in game.objects:
        if o.initial_location not in locations:
            raise GameValidationError(f"object {o.id!r}: unknown initial_location {o.initial_location!r}")
    names_by_room: dict[str, set[str]] = {}
    for o in game.objects:
        seen_names = names_by_room.setdefault(o.initial_location, set())
        if o.name in seen_names:
            raise GameValidationError(f"object {o.id!r}: name {o.name!r} repeats within {o.initial_location!r}")
        seen_names.add(o.name)

    def check_cond(c, where):
        kind, arg = next(iter(c.items()))
        if kind in ("carrying", "not_carrying", "object_on", "object_off") and arg not in objs:
            raise GameValidationError(f"{where}: unknown object {arg!r}")
        if kind == "object_at" and (arg[0] not in objs or arg[1] not in locations):
            raise GameValidationError(f"{where}: bad object_at {arg!r}")

    for r in game.rooms:
        for conds, _ in r.alt_descs:
            for c in conds:
                check_cond(c, f"room {r.id!r}")
    reward_total = 0
    all_once = True
    for t in game.triggers:
        where = f"trigger {t.id!r}"
        if t.room != ANY_ROOM and t.room not in rooms:
            raise GameValidationError(f"{where}: unknown room {t.room!r}")
        for c in t.requires:
            check_cond(c, where)
        for e in t.effects:
            kind, arg = next(iter(e.items()))
            if kind == "move_player" and arg not in rooms:
                raise GameValidationError(f"{where}: move_player to undeclared room {arg!r}")
            if kind == "move_object" and (arg[0] not in objs or arg[1] not in locations):
                raise GameValidationError(f"{where}: bad move_object {arg!r}")
            if kind == "reveal_exit" and (arg[0] not in rooms or arg[1] not in DIRECTIONS or arg[2] not in rooms):
                raise GameValidationError(f"{where}: bad reveal_exit {arg!r}")
            if kind == "reward":
                if arg < 0:
                    raise GameValidationError(f"{where}: negative reward {arg}")
                if arg > game.max_score:
                    raise GameValidationError(f"{where}: reward {arg} exceeds max_score {game.max_score}")
                reward_total += arg
                all_once = all_once and t.once
    if all_once and game.max_score > reward_total:
        raise GameValidationError(f"max_score {game.max_score} exceeds the {reward_total} points triggers can award")


# -- runtime ---------------------------------------------------------------


@dataclass
class WorldState:
    player_room: str
    object_locations: dict[str, str]
    object_states: dict[str, str]
    flags: set[str] = field(default_factory=set)
    fired_triggers: set[str] = field(default_factory=set)
    revealed_exits: dict[str, str] = field(default_factory=dict)
    score: int = 0
    done: bool = False

    def serialize(self) -> str:
        """Canonical serialization: sorted keys and sets, fixed delimiters."""
        return json.dumps(
            {
                "done": self.done,
                "fired": sorted(self.fired_triggers),
                "flags": sorted(self.flags),
                "objects": self.object_locations,
                "player": self.player_room,
                "revealed": self.revealed_exits,
                "score": self.score,
                "states": self.object_states,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def copy(self) -> "WorldState":
        return WorldState(
            self.player_room,
            dict(self.object_locations),
            dict(self.object_states),
            set(self.flags),
            set(self.fired_triggers),
            dict(self.revealed_exits),
            self.score,
            self.done,
        )


@dataclass(frozen=True)
class Observation:
    response: str
    inventory_text: str
    look_text: str


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: int
    done: bool
    world_changed: bool


@dataclass(frozen=True)
class Snapshot:
    fingerprint: int
    state: WorldState


def initial_state(game: GameDef) -> WorldState:
    return WorldState(
        player_room=game.start_room,
        object_locations={o.id: o.initial_location for o in game.objects},
        object_states={o.id: "off" for o in game.objects if o.switchable},
    )


class TextGameEnv:
    """One running episode of a game.  Not thread-safe; use one per worker."""

    def __init__(self, game: GameDef):
        self.game = game
        self.state = initial_state(game)
        self._by_phrase: dict[str, list[TriggerDef]] = {}
        for t in game.triggers:
            self._by_phrase.setdefault(t.verb_phrase, []).append(t)

    # episode control

    def reset(self) -> Observation:
        self.state = initial_state(self.game)
        look = self.look_text()
        return Observation(look, self.inventory_text(), look)

    def step(self, action: str) -> StepResult:
        if self.state.done:
            raise EnvDoneError("step() called on a finished episode; call reset()")
        before = self.state.serialize()
        response, reward = _apply(self, self.state, _normalize(action))
        changed = self.state.serialize() != before
        obs = Observation(response, self.inventory_text(), self.look_text())
        return StepResult(obs, reward, self.state.done, changed)

    @property
    def done(self) -> bool:
        return self.state.done

    # handicaps

    def gt_state_hash(self) -> int:
        return str_hash(self.state.serialize())

    def gt_room_id(self) -> str:
        return self.state.player_room

    def room_name(self) -> str:
        return self.game.room(self.state.player_room).name

    def snapshot(self) -> Snapshot:
        return Snapshot(self.game.fingerprint, self.state.copy())

    def restore(self, snap: Snapshot) -> None:
        if snap.fingerprint != self.game.fingerprint:
            raise SnapshotMismatchError("snapshot was taken from a different game")
        self.state = snap.state.copy()

    def valid_actions(self) -> list[str]:
        """Actions that would change the world, plus ``look`` and ``inventory``."""
        if self.state.done:
            raise EnvDoneError("valid_actions() on a finished episode")
        before = self.state.serialize()
        valid = {"look", INVENTORY}
        for action in self._candidate_actions():
            trial = self.state.copy()
            _apply(self, trial, action, quiet=True)
            if trial.serialize() != before:
                valid.add(action)
        return sorted(valid)

    def _candidate_actions(self) -> set[str]:
        st = self.state
        here = st.player_room
        cands = set(self.exits(here))
        for t in self.game.triggers:
            if t.room in (ANY_ROOM, here):
                cands.add(t.verb_phrase)
        for o in self.game.objects:
            where = self._top_location(st, o.id)
            if where == INVENTORY:
                cands.add(f"drop {o.name}")
                if o.switchable:
                    cands.add(f"turn {'off' if st.object_states[o.id] == 'on' else 'on'} {o.name}")
            elif where == here and o.portable:
                cands.add(f"take {o.name}")
        return cands

    # text rendering

    def exits(self, room_id: str, state: WorldState | None = None) -> dict[str, str]:
        st = state or self.state
        exits = dict(self.game.room(room_id).exits)
        prefix = room_id + ":"
        for key, target in st.revealed_exits.items():
            if key.startswith(prefix):
                exits[key[len(prefix):]] = target
        return exits

    def _top_location(self, st: WorldState, obj_id: str) -> str:
        loc = st.object_locations[obj_id]
        seen = set()
        while loc in self.game._objects and loc not in seen:
            seen.add(loc)
            loc = st.object_locations[loc]
        return loc

    def _is_lit(self, st: WorldState, obj: ObjectDef) -> bool:
        if not obj.light_source:
            return False
        return not obj.switchable or st.object_states[obj.id] == "on"

    def has_light(self, st: WorldState | None = None) -> bool:
        st = st or self.state
        return any(
            self._is_lit(st, o) and self._top_location(st, o.id) == INVENTORY for o in self.game.objects
        )

    def room_is_visible(self, st: WorldState | None = None) -> bool:
        st = st or self.state
        room = self.game.room(st.player_room)
        if not room.dark:
            return True
        return any(
            self._is_lit(st, o) and self._top_location(st, o.id) in (INVENTORY, st.player_room)
            for o in self.game.objects
        )

    def look_text(self, st: WorldState | None = None) -> str:
        st = st or self.state
        if not self.room_is_visible(st):
            return DARKNESS
        room = self.game.room(st.player_room)
        desc = room.desc
        for conds, alt in room.alt_descs:
            if all(_holds(self, st, c) for c in conds):
                desc = alt
                break
        parts = [f"{room.name}. {desc}".strip()]
        for o in self.game.objects:
            if st.object_locations[o.id] == st.player_room:
                parts.append(f"There is a {o.name} here.")
        return " ".join(parts)

    def inventory_text(self, st: WorldState | None = None) -> str:
        st = st or self.state
        carried = []
        for o in self.game.objects:
            if st.object_locations[o.id] == INVENTORY:
                carried.append(f"a {o.name} (providing light)" if self._is_lit(st, o) else f"a {o.name}")
        if not carried:
            return EMPTY_HANDED
        return "You are carrying: " + ", ".join(carried) + "."


def reset(game: GameDef) -> tuple[TextGameEnv, Observation]:
    env = TextGameEnv(game)
    return env, env.reset()


def _holds(env: TextGameEnv, st: WorldState, cond: dict) -> bool:
    kind, arg = next(iter(cond.items()))
    if kind == "flag":
        return arg in st.flags
    if kind == "not_flag":
        return arg not in st.flags
    if kind == "carrying":
        return env._top_location(st, arg) == INVENTORY
    if kind == "not_carrying":
        return env._top_location(st, arg) != INVENTORY
    if kind == "object_at":
        return st.object_locations[arg[0]] == arg[1]
    if kind == "object_on":
        return st.object_states.get(arg) == "on"
    if kind == "object_off":
        return st.object_states.get(arg) == "off"
    if kind == "has_light":
        return env.has_light(st) == bool(arg)
    raise AssertionError(kind)


def _find_object(env: TextGameEnv, st: WorldState, name: str, where: str) -> ObjectDef | None:
    for o in env.game.objects:
        if o.name == name and env._top_location(st, o.id) == where:
            return o
    return None


def _apply(env: TextGameEnv, st: WorldState, action: str, quiet: bool = False) -> tuple[str, int]:
    """Advance ``st`` in place by one normalized action.  Returns (response, reward)."""
    game = env.game
    here = st.player_room

    for t in env._by_phrase.get(action, ()):
        if t.room not in (ANY_ROOM, here):
            continue
        if t.once and t.id in st.fired_triggers:
            continue
        if not all(_holds(env, st, c) for c in t.requires):
            continue
        return _fire(env, st, t, quiet)

    if action == "look":
        return ("" if quiet else env.look_text(st)), 0
    if action == INVENTORY:
        return ("" if quiet else env.inventory_text(st)), 0

    if action in DIRECTIONS:
        target = env.exits(here, st).get(action)
        if target is None:
            return "You can't go that way.", 0
        st.player_room = target
        return ("" if quiet else env.look_text(st)), 0

    verb, _, noun = action.partition(" ")
    if verb == "turn" and noun.startswith(("on ", "off ")):
        mode, _, noun = noun.partition(" ")
        obj = _find_object(env, st, noun, INVENTORY)
        if obj is None or not obj.switchable:
            return "You don't have that.", 0
        if st.object_states[obj.id] == mode:
            return f"The {obj.name} is already {mode}.", 0
        st.object_states[obj.id] = mode
        return f"The {obj.name} is now {mode}.", 0
    if verb == "take" and noun:
        obj = _find_object(env, st, noun, here)
        if obj is None:
            return "You can't see any such thing.", 0
        if not obj.portable:
            return "You can't take that.", 0
        st.object_locations[obj.id] = INVENTORY
        return "Taken.", 0
    if verb == "drop" and noun:
        obj = _find_object(env, st, noun, INVENTORY)
        if obj is None:
            return "You don't have that.", 0
        st.object_locations[obj.id] = here
        return "Dropped.", 0
    return NOTHING_HAPPENS, 0


def _fire(env: TextGameEnv, st: WorldState, t: TriggerDef, quiet: bool) -> tuple[str, int]:
    if t.once:
        st.fired_triggers.add(t.id)
    reward = 0
    moved = False
    died = False
    for e in t.effects:
        kind, arg = next(iter(e.items()))
        if kind == "set_flag":
            st.flags.add(arg)
        elif kind == "move_player":
            st.player_room = arg
            moved = True
        elif kind == "move_object":
            st.object_locations[arg[0]] = arg[1]
        elif kind == "reveal_exit":
            st.revealed_exits[f"{arg[0]}:{arg[1]}"] = arg[2]
        elif kind == "reward":
            reward += int(arg)
        elif kind == "end_episode":
            st.done = True
        elif kind == "kill_player":
            st.done = True
            died = True
    if died:
        reward = 0
    st.score += reward
    response = t.response or NOTHING_HAPPENS
    if moved and not quiet and not died:
        response = f"{response} {env.look_text(st)}".strip()
    return response, reward


def brute_force_valid_actions(env: TextGameEnv) -> list[str]:
    """Reference oracle for :meth:`TextGameEnv.valid_actions`.

    Steps every action the grammar can produce from a snapshot, through the
    public API only, and keeps those that report ``world_changed``.
    """
    game = env.game
    candidates = set(DIRECTIONS) | {"look", INVENTORY}
    for o in game.objects:
        candidates |= {f"take {o.name}", f"drop {o.name}", f"turn on {o.name}", f"turn off {o.name}"}
    candidates |= {t.verb_phrase for t in game.triggers}
    snap = env.snapshot()
    valid = {"look", INVENTORY}
    for action in sorted(candidates):
        if env.step(action).world_changed:
            valid.add(action)
        env.restore(snap)
    return sorted(valid)


def grammar_actions(game: GameDef) -> list[str]:
    """Every action string the parser gives meaning to."""
    acts = set(DIRECTIONS) | {"look", INVENTORY}
    for o in game.objects:
        acts |= {f"take {o.name}", f"drop {o.name}", f"turn on {o.name}", f"turn off {o.name}"}
    acts |= {t.verb_phrase for t in game.triggers}
    return sorted(acts)


def enumerate_states(game: GameDef, limit: int = 100_000) -> list[Snapshot]:
    """Breadth-first enumeration of every non-terminal state reachable from reset."""
    env = TextGameEnv(game)
    env.reset()
    start = env.snapshot()
    seen = {start.state.serialize()}
    frontier = [start]
    order = [start]
    actions = grammar_actions(game)
    while frontier:
        nxt = []
        for snap in frontier:
            for a in actions:
                env.restore(snap)
                r = env.step(a)
                if not r.world_changed or env.done:
                    continue
                key = env.state.serialize()
                if key not in seen:
                    seen.add(key)
                    s = env.snapshot()
                    nxt.append(s)
                    order.append(s)
                    if len(order) > limit:
                        raise GameError(f"state space exceeds {limit} states")
        frontier = nxt
    return order
