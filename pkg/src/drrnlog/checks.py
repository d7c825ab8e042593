"""Self-checks shared by the ``verify`` command and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import TextGameEnv, brute_force_valid_actions, bundled_game, enumerate_states
from .hashrep import GOLDEN_PATH, check_golden
from .locgraph import locate
from .neural import autograd as ag
from .neural.layers import bidaf, grad_check, gru_encode, init_gru, init_linear, init_mlp, inv_dyn_loss, q_value

GRAD_RTOL = 1e-4
ORACLE_GAMES = ("lantern", "maze", "memory", "twins", "corridor")


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _gru_instance(rng):
    e, h, t = rng.integers(2, 5), rng.integers(2, 5), rng.integers(1, 5)
    p = init_gru(rng, e, h)
    x = ag.parameter(rng.normal(size=(t, e)))
    w = rng.normal(size=h)

    def fn():
        final, hiddens = gru_encode(x, p)
        return ag.tsum(final * ag.constant(w)) + ag.mean(hiddens * hiddens)

    return fn, list(p.values()) + [x]


def _bidaf_instance(rng):
    h, to, ta = rng.integers(2, 5), rng.integers(1, 5), rng.integers(1, 4)
    obs = ag.parameter(rng.normal(size=(to, h)))
    act = ag.parameter(rng.normal(size=(ta, h)))
    proj = init_linear(rng, 4 * h, h)
    w = rng.normal(size=h)

    def fn():
        return ag.tsum(bidaf(obs, act, proj) * ag.constant(w))

    return fn, [obs, act] + list(proj.values())


def _qhead_instance(rng):
    ds, da, hid = rng.integers(2, 6), rng.integers(2, 5), rng.integers(2, 6)
    head = init_mlp(rng, ds + da, hid)
    sr = ag.parameter(rng.normal(size=(3, ds)))
    ar = ag.parameter(rng.normal(size=(3, da)))
    w = rng.normal(size=3)

    def fn():
        return ag.tsum(q_value(sr, ar, head) * ag.constant(w))

    return fn, [sr, ar] + list(head.values())


def _invdy_instance(rng):
    ds, da, k, hid = rng.integers(2, 5), rng.integers(2, 4), rng.integers(1, 5), rng.integers(2, 6)
    head = init_mlp(rng, 2 * ds + da, hid)
    s0 = ag.parameter(rng.normal(size=ds))
    s1 = ag.parameter(rng.normal(size=ds))
    cands = ag.parameter(rng.normal(size=(k, da)))
    taken = int(rng.integers(0, k))

    def fn():
        return inv_dyn_loss(s0, s1, cands, taken, head)

    return fn, [s0, s1, cands] + list(head.values())


GRAD_CASES = {"gru": _gru_instance, "bidaf": _bidaf_instance, "qhead": _qhead_instance, "invdy": _invdy_instance}


def gradient_errors(n_instances: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst relative backprop vs central-difference error per component over random instances."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name, make in GRAD_CASES.items():
        err = 0.0
        for _ in range(n_instances):
            fn, params = make(rng)
            err = max(err, grad_check(fn, params, rng=rng))
        worst[name] = err
    return worst


def engine_oracle_mismatches(game, limit: int = 1000) -> list[str]:
    """States where analytic valid actions differ from the brute-force oracle."""
    env = TextGameEnv(game)
    bad = []
    for snap in enumerate_states(game, limit=limit):
        env.restore(snap)
        fast = env.valid_actions()
        slow = brute_force_valid_actions(env)
        if fast != slow:
            bad.append(f"{env.gt_room_id()}: {fast} != {slow}")
    return bad


def locate_side_effects(game, trials: int = 1000, seed: int = 0, depth: int = 1) -> int:
    """Number of random states where locate changed the environment state."""
    rng = np.random.default_rng(seed)
    env = TextGameEnv(game)
    env.reset()
    changed = 0
    for _ in range(trials):
        if env.done:
            env.reset()
        before = (env.gt_state_hash(), env.state.serialize())
        locate(env, depth)
        if (env.gt_state_hash(), env.state.serialize()) != before:
            changed += 1
        acts = env.valid_actions()
        env.step(acts[int(rng.integers(len(acts)))])
    return changed


def run_all(golden_path=GOLDEN_PATH, grad_instances: int = 100) -> list[CheckResult]:
    results = []
    failures = check_golden(golden_path)
    results.append(CheckResult("golden hashes", not failures, "; ".join(failures[:5])))
    for name, err in gradient_errors(grad_instances).items():
        results.append(CheckResult(f"gradient {name}", bool(err < GRAD_RTOL), f"max rel err {err:.2e}"))
    for g in ORACLE_GAMES:
        bad = engine_oracle_mismatches(bundled_game(g))
        results.append(CheckResult(f"valid actions oracle {g}", not bad, "; ".join(bad[:3])))
    for g in ORACLE_GAMES + ("gallery",):
        n = locate_side_effects(bundled_game(g), trials=300)
        results.append(CheckResult(f"locate side effects {g}", n == 0, f"{n} states changed"))
    return results
