"""DRRN agent with pluggable state representations.

Every variant shares the same loop: interleaved environments, Boltzmann
exploration over the valid actions, uniform experience replay and a TD
regression target computed with the pre-update parameters.  Variants differ
only in what goes into the state representation:

    DRRN        GRU encodings of (response, inventory, look)
    OBS_HASH    hash vectors of the triple and of the action
    DRRN_INVDY  DRRN plus the inverse-dynamics auxiliary loss
    LOG         encodings (optionally attended) + H(nearby profile) + H(location map)
    GT_STATE    encodings + H(exact state hash)
    GT_ROOM     LOG with the location key replaced by the true room id
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .engine import GameDef, Observation, TextGameEnv
from .hashrep import CollisionGuard, HashConfig
from .locgraph import GT_ROOM, LOCATE, location_key, serialize_map, trajectory_record, update_and_get_state
from .neural import autograd as ag
from .neural.model import Adam, Dims, EncoderParams, Layout, QNetwork, StateInputs
from .neural.text import Vocab

TERMINAL_KEY = "<terminal>"


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


class VariantName(str, Enum):
    DRRN = "DRRN"
    OBS_HASH = "OBS_HASH"
    DRRN_INVDY = "DRRN_INVDY"
    LOG = "LOG"
    GT_STATE = "GT_STATE"
    GT_ROOM = "GT_ROOM"


FLAG_NAMES = ("text_enc", "att", "invdy", "use_po1", "use_po2")

_DEFAULT_FLAGS = {
    VariantName.DRRN: (True, False, False, False, False),
    VariantName.OBS_HASH: (False, False, False, False, False),
    VariantName.DRRN_INVDY: (True, False, True, False, False),
    VariantName.LOG: (True, True, True, True, True),
    VariantName.GT_STATE: (True, True, True, False, False),
    VariantName.GT_ROOM: (True, True, True, True, True),
}


@dataclass(frozen=True)
class Variant:
    name: VariantName
    text_enc: bool
    att: bool
    invdy: bool
    use_po1: bool
    use_po2: bool

    @classmethod
    def make(cls, name, **flags) -> "Variant":
        """Build a variant from its name and optional flag overrides.

        Flags left as ``None`` take the variant's default.  Switching the text
        encoder off also switches off attention and inverse dynamics unless
        they were requested explicitly, in which case the combination is
        rejected.
        """
        try:
            name = VariantName(str(name).upper().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"unknown variant {name!r}; choose from {[v.value for v in VariantName]}") from None
        unknown = set(flags) - set(FLAG_NAMES)
        if unknown:
            raise ConfigError(f"unknown variant flags {sorted(unknown)}")
        given = {k: v for k, v in flags.items() if v is not None}
        values = dict(zip(FLAG_NAMES, _DEFAULT_FLAGS[name]))
        values.update(given)
        if not values["text_enc"]:
            for dep in ("att", "invdy"):
                if dep in given and given[dep]:
                    raise ConfigError(f"{name.value}: {dep} needs the text encoder")
                values[dep] = False
        v = cls(name, **values)
        v.validate()
        return v

    def validate(self):
        n = self.name
        if n not in (VariantName.LOG, VariantName.GT_ROOM) and (self.use_po1 or self.use_po2):
            raise ConfigError(f"{n.value} does not use location features (po1/po2)")
        if n == VariantName.OBS_HASH and (self.text_enc or self.att or self.invdy):
            raise ConfigError("OBS_HASH represents observations by hashes only")
        if n in (VariantName.DRRN, VariantName.DRRN_INVDY) and not self.text_enc:
            raise ConfigError(f"{n.value} without the text encoder has no state representation; use OBS_HASH")
        if (self.att or self.invdy) and not self.text_enc:
            raise ConfigError("attention and inverse dynamics need the text encoder")
        if self.layout().n_hash == 0 and not self.text_enc and n != VariantName.OBS_HASH:
            raise ConfigError(f"{n.value} with every component disabled has an empty state representation")

    def layout(self) -> Layout:
        if self.name in (VariantName.LOG, VariantName.GT_ROOM):
            n_hash = int(self.use_po1) + int(self.use_po2)
        elif self.name == VariantName.GT_STATE:
            n_hash = 1
        else:
            n_hash = 0
        return Layout(
            text_enc=self.text_enc,
            att=self.att,
            n_hash=n_hash,
            invdy=self.invdy,
            hash_triple=self.name == VariantName.OBS_HASH,
        )

    @property
    def uses_map(self) -> bool:
        return self.name in (VariantName.LOG, VariantName.GT_ROOM) and (self.use_po1 or self.use_po2)

    @property
    def key_mode(self) -> str:
        return GT_ROOM if self.name == VariantName.GT_ROOM else LOCATE

    def label(self) -> str:
        off = [f"-{f}" for f, d in zip(FLAG_NAMES, _DEFAULT_FLAGS[self.name]) if d and not getattr(self, f)]
        on = [f"+{f}" for f, d in zip(FLAG_NAMES, _DEFAULT_FLAGS[self.name]) if not d and getattr(self, f)]
        return self.name.value + "".join(off + on)

    def to_json(self) -> dict:
        return {"name": self.name.value, **{f: getattr(self, f) for f in FLAG_NAMES}}


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    tau: float = 1.0
    lr: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 100_000
    max_steps: int = 100
    n_envs: int = 8
    episodes: int = 1000
    invdy_weight: float = 1.0
    grad_clip: float = 5.0
    train_every: int = 1
    depth: int = 1
    score_window: int = 100
    emb_dim: int = 64
    hidden_dim: int = 128
    mlp_hidden: int = 256
    hash_dim: int = 128

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("batch_size", "buffer_capacity", "max_steps", "n_envs", "episodes", "train_every", "depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.batch_size > self.buffer_capacity:
            raise ConfigError("batch_size exceeds buffer_capacity")

    @property
    def dims(self) -> Dims:
        return Dims(self.emb_dim, self.hidden_dim, self.mlp_hidden, self.hidden_dim, self.hash_dim)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


# -- replay ---------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    state: StateInputs
    actions: tuple[str, ...]
    action_index: int
    reward: float
    next_state: StateInputs
    next_actions: tuple[str, ...]
    done: bool

    @property
    def action(self) -> str:
        return self.actions[self.action_index]


class ReplayBuffer:
    """Fixed-capacity FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list:
        if n > len(self._items):
            raise ValueError(f"cannot sample {n} items from a buffer holding {len(self._items)}")
        return [self._items[i] for i in rng.integers(0, len(self._items), size=n)]

    def __iter__(self):
        return iter(self._items)


# -- state representations ---------------------------------------------------


def build_state_rep(
    variant: Variant, obs: Observation, env: TextGameEnv, locmap: dict | None = None, key: str | None = None, depth: int = 1
) -> StateInputs:
    """Raw inputs of the state representation for ``variant``.

    For map-based variants ``locmap`` must already hold this step's entry
    (see :func:`observe`); ``key`` is the current location key if known.
    """
    texts = (obs.response, obs.inventory_text, obs.look_text)
    name = variant.name
    if name == VariantName.GT_STATE:
        return StateInputs(texts, (str(env.gt_state_hash()),))
    if name in (VariantName.LOG, VariantName.GT_ROOM):
        keys = []
        if variant.use_po1:
            if key is None:
                key = TERMINAL_KEY if env.done else location_key(env, variant.key_mode, depth)
            keys.append(key)
        if variant.use_po2:
            keys.append(serialize_map(locmap or {}))
        return StateInputs(texts, tuple(keys))
    return StateInputs(texts)


def observe(variant: Variant, obs: Observation, env: TextGameEnv, locmap: dict, depth: int = 1) -> StateInputs:
    """Update the location map for this step (if the variant keeps one) and build the state inputs."""
    key = None
    if variant.uses_map and not env.done:
        key = location_key(env, variant.key_mode, depth)
        update_and_get_state(env, locmap, key=key)
    elif variant.uses_map:
        key = TERMINAL_KEY if variant.key_mode == LOCATE else env.gt_room_id()
    return build_state_rep(variant, obs, env, locmap, key=key, depth=depth)


# -- action selection and targets ---------------------------------------------


def boltzmann_probs(q: np.ndarray, tau: float) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("no actions to choose from")
    z = (q - q.max()) / tau
    e = np.exp(z)
    return e / e.sum()


def select_action(q: np.ndarray, tau: float, rng: np.random.Generator, greedy: bool = False) -> int:
    """Sample an index with probability proportional to exp(Q / tau); argmax if ``greedy``."""
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("no actions to choose from")
    if greedy:
        return int(np.argmax(q))
    cdf = np.cumsum(boltzmann_probs(q, tau))
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), q.size - 1))


def _next_max_q(model: QNetwork, batch: list[Transition]) -> np.ndarray:
    states, actions, pairs = [], [], []
    owner = []
    for n, t in enumerate(batch):
        if t.done or not t.next_actions:
            continue
        si = len(states)
        states.append(t.next_state)
        for a in t.next_actions:
            pairs.append((si, len(actions)))
            actions.append(a)
            owner.append(n)
    best = np.zeros(len(batch))
    if pairs:
        with ag.no_grad():
            q = model.q_values(states, actions, pairs).data
        best_q = np.full(len(batch), -np.inf)
        np.maximum.at(best_q, np.array(owner), q)
        best = np.where(np.isfinite(best_q), best_q, 0.0)
    return best


def td_targets(model: QNetwork, batch: list[Transition], gamma: float) -> np.ndarray:
    """r for terminal transitions, else r + gamma * max_a' Q(s', a') under the current parameters."""
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    done = np.array([t.done or not t.next_actions for t in batch])
    return rewards + np.where(done, 0.0, gamma * _next_max_q(model, batch))


def td_target(transition: Transition, model: QNetwork, gamma: float) -> float:
    return float(td_targets(model, [transition], gamma)[0])


def train_step(
    model: QNetwork, optimizer: Adam, batch: list[Transition], gamma: float, invdy_weight: float = 1.0
) -> dict[str, float]:
    """One gradient update on ``batch``.  Returns the td, invdy and total losses."""
    targets = td_targets(model, batch, gamma)
    model.params.zero_grad()
    states = [t.state for t in batch]
    actions = [t.action for t in batch]
    q = model.q_values(states, actions, [(n, n) for n in range(len(batch))])
    diff = q - ag.constant(targets)
    td = ag.mean(diff * diff)
    total = td
    inv_value = 0.0
    if model.layout.invdy and invdy_weight:
        inv = model.invdy_loss(states, [t.next_state for t in batch], [t.actions for t in batch],
                               [t.action_index for t in batch])
        inv_value = float(inv.data)
        total = td + inv * invdy_weight
    loss = float(total.data)
    if not math.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss (td={float(td.data)}, invdy={inv_value}); "
            f"targets range [{targets.min():.3g}, {targets.max():.3g}], q range [{q.data.min():.3g}, {q.data.max():.3g}]"
        )
    total.backward()
    optimizer.step()
    return {"td": float(td.data), "invdy": inv_value, "total": loss}


# -- run log ---------------------------------------------------------------


@dataclass
class RunLog:
    """Per-episode records of a training run, append only."""

    records: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0

    def append(self, record: dict) -> None:
        self.records.append(record)

    @property
    def scores(self) -> list[float]:
        return [r["score"] for r in self.records]

    def avg_score(self, window: int = 100) -> float:
        s = self.scores[-window:]
        return float(np.mean(s)) if s else 0.0

    def max_score(self) -> float:
        return max(self.scores, default=0)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunLog":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([json.loads(line) for line in lines if line.strip()])


# -- training loop ---------------------------------------------------------


def make_vocab(game: GameDef) -> Vocab:
    return Vocab.from_corpus(game.corpus())


class Trainer:
    """Runs one seeded training job; ``model`` holds the learned network afterwards."""

    def __init__(self, game: GameDef, variant: Variant, cfg: TrainConfig, seed: int, dump_path=None):
        variant.validate()
        self.game = game
        self.variant = variant
        self.cfg = cfg
        self.seed = seed
        init_seq, act_seq, replay_seq = np.random.SeedSequence(seed).spawn(3)
        self.act_rng = np.random.default_rng(act_seq)
        self.replay_rng = np.random.default_rng(replay_seq)
        self.vocab = make_vocab(game)
        params = EncoderParams(cfg.dims, variant.layout(), len(self.vocab), np.random.default_rng(init_seq))
        self.model = QNetwork(params, self.vocab, HashConfig(cfg.hash_dim))
        self.optimizer = Adam(params, lr=cfg.lr, clip=cfg.grad_clip)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.dump_path = dump_path
        self.guard = CollisionGuard()
        self._hashed_triple = variant.layout().hash_triple or not variant.text_enc

    def _observe(self, obs, env, locmap) -> StateInputs:
        state = observe(self.variant, obs, env, locmap, self.cfg.depth)
        # every hashed string passes the collision guard; a collision aborts the run
        for key in state.hash_keys:
            self.guard.check(key)
        if self._hashed_triple:
            for text in state.texts:
                self.guard.check(text)
        return state

    def run(self, on_episode=None) -> RunLog:
        cfg, variant = self.cfg, self.variant
        log = RunLog()
        started = time.perf_counter()
        envs = [TextGameEnv(self.game) for _ in range(cfg.n_envs)]
        maps = [dict() for _ in envs]
        states, valid, steps = [], [], [0] * cfg.n_envs
        for env, m in zip(envs, maps):
            obs = env.reset()
            states.append(self._observe(obs, env, m))
            valid.append(tuple(env.valid_actions()))
        dump = open(self.dump_path, "w", encoding="utf-8") if self.dump_path else None
        if dump:
            dump.write(json.dumps(self._dump_record(envs[0], maps[0], 0, None)) + "\n")
        best = 0
        loss_sums = {"td": 0.0, "invdy": 0.0, "n": 0}
        completed = 0
        try:
            while completed < cfg.episodes:
                flat_actions, pairs, spans = [], [], []
                for k in range(cfg.n_envs):
                    lo = len(flat_actions)
                    for a in valid[k]:
                        pairs.append((k, len(flat_actions)))
                        flat_actions.append(a)
                    spans.append((lo, len(flat_actions)))
                with ag.no_grad():
                    q_all = self.model.q_values(states, flat_actions, pairs).data
                for k, env in enumerate(envs):
                    lo, hi = spans[k]
                    idx = select_action(q_all[lo:hi], cfg.tau, self.act_rng)
                    res = env.step(valid[k][idx])
                    steps[k] += 1
                    next_state = self._observe(res.observation, env, maps[k])
                    next_valid = () if res.done else tuple(env.valid_actions())
                    self.buffer.push(
                        Transition(states[k], valid[k], idx, float(res.reward), next_state, next_valid, res.done)
                    )
                    if dump and k == 0:
                        rec = self._dump_record(env, maps[0], steps[0], valid[k][idx])
                        dump.write(json.dumps(rec) + "\n")
                    if res.done or steps[k] >= cfg.max_steps:
                        score = env.state.score
                        best = max(best, score)
                        n = loss_sums["n"]
                        log.append({
                            "episode": completed,
                            "env": k,
                            "score": score,
                            "max_score": best,
                            "steps": steps[k],
                            "td_loss": loss_sums["td"] / n if n else None,
                            "invdy_loss": loss_sums["invdy"] / n if n and variant.invdy else None,
                        })
                        loss_sums = {"td": 0.0, "invdy": 0.0, "n": 0}
                        if on_episode:
                            on_episode(log.records[-1])
                        completed += 1
                        if completed >= cfg.episodes:
                            break
                        obs = env.reset()
                        maps[k] = {}
                        steps[k] = 0
                        states[k] = self._observe(obs, env, maps[k])
                        valid[k] = tuple(env.valid_actions())
                        if dump and k == 0:
                            dump.write(json.dumps(self._dump_record(env, maps[0], 0, None)) + "\n")
                    else:
                        states[k] = next_state
                        valid[k] = next_valid
                if len(self.buffer) >= cfg.batch_size and completed < cfg.episodes:
                    batch = self.buffer.sample(cfg.batch_size, self.replay_rng)
                    losses = train_step(self.model, self.optimizer, batch, cfg.gamma, cfg.invdy_weight)
                    loss_sums["td"] += losses["td"]
                    loss_sums["invdy"] += losses["invdy"]
                    loss_sums["n"] += 1
        finally:
            if dump:
                dump.close()
        log.wall_clock = time.perf_counter() - started
        return log

    def _dump_record(self, env: TextGameEnv, locmap: dict, step: int, action) -> dict:
        key = TERMINAL_KEY if env.done else location_key(env, self.variant.key_mode, self.cfg.depth)
        return trajectory_record(env, locmap, key, step, action)


def run_training(game: GameDef, variant: Variant, cfg: TrainConfig, seed: int) -> RunLog:
    return Trainer(game, variant, cfg, seed).run()


def evaluate(
    model: QNetwork, game: GameDef, variant: Variant, episodes: int, tau: float = 1.0, greedy: bool = False,
    seed: int = 0, max_steps: int = 100, depth: int = 1,
) -> list[int]:
    """Scores of ``episodes`` rollouts with frozen parameters."""
    rng = np.random.default_rng(seed)
    scores = []
    env = TextGameEnv(game)
    for _ in range(episodes):
        locmap: dict = {}
        obs = env.reset()
        state = observe(variant, obs, env, locmap, depth)
        for _ in range(max_steps):
            actions = env.valid_actions()
            q = model.q_for_actions(state, actions)
            res = env.step(actions[select_action(q, tau, rng, greedy)])
            if res.done:
                break
            state = observe(variant, res.observation, env, locmap, depth)
        scores.append(env.state.score)
    return scores


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
