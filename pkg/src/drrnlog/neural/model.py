"""Batched DRRN-style Q-network built from the functional layers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..hashrep import HashConfig, hash_vec
from . import autograd as ag
from .autograd import Tensor
from .layers import bidaf, init_gru, init_linear, init_mlp, mlp
from .text import Vocab, tokenize

CHECKPOINT_FORMAT = "drrnlog-checkpoint-v1"


@dataclass(frozen=True)
class Dims:
    emb: int = 64
    hidden: int = 128
    mlp_hidden: int = 256
    invdy_hidden: int = 128
    hash_dim: int = 128


@dataclass(frozen=True)
class Layout:
    """Which inputs feed the Q-head.

    ``text_enc``  GRU encodings of the observation triple and the action
    ``att``       observation components attended by the action (BiDAF)
    ``n_hash``    number of extra hashed state components (po1, po2, H(s), ...)
    ``invdy``     an inverse-dynamics head is trained alongside
    ``hash_triple``  without ``text_enc``, hash the triple instead of dropping it
    Without ``text_enc`` the action is represented by its hash vector.
    """

    text_enc: bool = True
    att: bool = False
    n_hash: int = 0
    invdy: bool = False
    hash_triple: bool = False

    @property
    def triple_source(self) -> str:
        if self.text_enc:
            return "gru"
        return "hash" if self.hash_triple else "none"


@dataclass(frozen=True)
class StateInputs:
    """Raw inputs of one state representation: the text triple plus hash keys."""

    texts: tuple[str, str, str]
    hash_keys: tuple[str, ...] = ()


class EncoderParams:
    """Named parameter tensors plus the dimensions that shaped them."""

    def __init__(self, dims: Dims, layout: Layout, vocab_size: int, rng: np.random.Generator):
        self.dims = dims
        self.layout = layout
        self.vocab_size = vocab_size
        p: dict[str, Tensor] = {}
        h = dims.hidden
        if layout.text_enc:
            p["emb"] = ag.parameter(rng.uniform(-1.0, 1.0, size=(vocab_size, dims.emb)) / np.sqrt(dims.emb))
            for k in range(1, 5):
                for name, t in init_gru(rng, dims.emb, h).items():
                    p[f"gru{k}.{name}"] = t
            if layout.att:
                for name, t in init_linear(rng, 4 * h, h).items():
                    p[f"bidaf.{name}"] = t
        for name, t in init_mlp(rng, self.state_dim + self.action_dim, dims.mlp_hidden).items():
            p[f"qhead.{name}"] = t
        if layout.invdy:
            n_in = 2 * self.state_dim + self.action_dim
            for name, t in init_mlp(rng, n_in, dims.invdy_hidden).items():
                p[f"invdy.{name}"] = t
        self.tensors = p

    @property
    def state_dim(self) -> int:
        comp = {"gru": self.dims.hidden, "hash": self.dims.hash_dim, "none": 0}[self.layout.triple_source]
        return 3 * comp + self.layout.n_hash * self.dims.hash_dim

    @property
    def action_dim(self) -> int:
        return self.dims.hidden if self.layout.text_enc else self.dims.hash_dim

    def group(self, prefix: str) -> dict[str, Tensor]:
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.tensors.items() if k.startswith(pre)}

    def count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}


class Adam:
    """Adam with global gradient-norm clipping."""

    def __init__(self, params: EncoderParams, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, clip: float = 5.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.tensors.items()}

    def step(self) -> float:
        grads = {k: t.grad for k, t in self.params.tensors.items() if t.grad is not None}
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        scale = self.clip / norm if self.clip and norm > self.clip else 1.0
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            g = g * scale
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            self.params.tensors[k].data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


def _pad(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    T = max([len(s) for s in seqs] + [1])
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for n, s in enumerate(seqs):
        ids[n, : len(s)] = s
        mask[n, : len(s)] = 1.0
    return ids, mask


class _Encoded:
    """GRU outputs for a set of unique texts."""

    def __init__(self, hiddens: Tensor, mask: np.ndarray, index: dict[str, int]):
        self.hiddens = hiddens
        self.mask = mask
        self.index = index
        self.final = hiddens[:, -1]


class QNetwork:
    def __init__(self, params: EncoderParams, vocab: Vocab, hash_cfg: HashConfig):
        self.params = params
        self.vocab = vocab
        self.hash_cfg = hash_cfg
        if hash_cfg.dim != params.dims.hash_dim:
            raise ValueError("hash config dim disagrees with encoder dims")
        self._tok_cache: dict[str, list[int]] = {}

    @property
    def layout(self) -> Layout:
        return self.params.layout

    def _tokens(self, text: str) -> list[int]:
        toks = self._tok_cache.get(text)
        if toks is None:
            toks = tokenize(text, self.vocab)
            self._tok_cache[text] = toks
        return toks

    def _hash(self, texts: list[str]) -> np.ndarray:
        return np.stack([hash_vec(t, self.hash_cfg).values for t in texts]) if texts else np.zeros((0, self.hash_cfg.dim))

    def _encode(self, texts: list[str], gru: int) -> _Encoded:
        uniq = list(dict.fromkeys(texts))
        ids, mask = _pad([self._tokens(t) for t in uniq])
        x = self.params.tensors["emb"][ids]
        hiddens = ag.gru_sequence(x, mask, self.params.group(f"gru{gru}"))
        return _Encoded(hiddens, mask, {t: n for n, t in enumerate(uniq)})

    def _hash_part(self, states: list[StateInputs]) -> list[Tensor]:
        parts = []
        for k in range(self.layout.n_hash):
            parts.append(ag.constant(self._hash([s.hash_keys[k] for s in states])))
        return parts

    def state_features(self, states: list[StateInputs]) -> Tensor:
        """Action-independent state representation, one row per state."""
        if self.layout.text_enc:
            comps = []
            for slot in range(3):
                enc = self._encode([s.texts[slot] for s in states], slot + 1)
                idx = np.array([enc.index[s.texts[slot]] for s in states])
                comps.append(enc.final[idx])
        elif self.layout.hash_triple:
            comps = [ag.constant(self._hash([s.texts[slot] for s in states])) for slot in range(3)]
        else:
            comps = []
        for s in states:
            if len(s.hash_keys) != self.layout.n_hash:
                raise ValueError(f"expected {self.layout.n_hash} hash keys, got {len(s.hash_keys)}")
        return ag.concat(comps + self._hash_part(states), axis=-1)

    def action_features(self, actions: list[str]) -> Tensor:
        if self.layout.text_enc:
            enc = self._encode(actions, 4)
            return enc.final[np.array([enc.index[a] for a in actions])]
        return ag.constant(self._hash(actions))

    def q_values(self, states: list[StateInputs], actions: list[str], pairs) -> Tensor:
        """Q for every (state index, action index) pair, shape (len(pairs),)."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        si, ai = pairs[:, 0], pairs[:, 1]
        lay = self.layout
        if lay.text_enc and lay.att:
            act_enc = self._encode(actions, 4)
            a_rows = np.array([act_enc.index[actions[n]] for n in ai])
            ar = act_enc.final[a_rows]
            a_h = act_enc.hiddens[a_rows]
            a_mask = act_enc.mask[a_rows]
            comps = []
            proj = self.params.group("bidaf")
            for slot in range(3):
                enc = self._encode([s.texts[slot] for s in states], slot + 1)
                rows = np.array([enc.index[states[n].texts[slot]] for n in si])
                comps.append(bidaf(enc.hiddens[rows], a_h, proj, enc.mask[rows], a_mask))
            hashed = self._hash_part(states)
            comps += [h[si] for h in hashed]
            sr = ag.concat(comps, axis=-1)
        else:
            sr = self.state_features(states)[si]
            ar = self.action_features(actions)[ai]
        return mlp(ag.concat([sr, ar], axis=-1), self.params.group("qhead"))

    def q_for_actions(self, state: StateInputs, actions: list[str]) -> np.ndarray:
        with ag.no_grad():
            return self.q_values([state], actions, [(0, n) for n in range(len(actions))]).data.copy()

    def state_vector(self, state: StateInputs, action: str | None = None) -> np.ndarray:
        """The assembled state representation fed to the Q-head.

        With attention the observation components depend on the action, so
        ``action`` must be given; otherwise it is ignored.
        """
        with ag.no_grad():
            if self.layout.text_enc and self.layout.att:
                if action is None:
                    raise ValueError("attention layouts need an action to build the state vector")
                act_enc = self._encode([action], 4)
                comps = []
                proj = self.params.group("bidaf")
                for slot in range(3):
                    enc = self._encode([state.texts[slot]], slot + 1)
                    comps.append(bidaf(enc.hiddens, act_enc.hiddens, proj, enc.mask, act_enc.mask))
                comps += self._hash_part([state])
                return ag.concat(comps, axis=-1).data[0].copy()
            return self.state_features([state]).data[0].copy()

    def invdy_loss(self, states: list[StateInputs], next_states: list[StateInputs], candidates, taken) -> Tensor:
        """Mean cross-entropy of recovering each taken action among its candidates."""
        B = len(states)
        feats = self.state_features(list(states) + list(next_states))
        s0, s1 = feats[np.arange(B)], feats[np.arange(B, 2 * B)]
        flat_actions = [a for cands in candidates for a in cands]
        owner = np.repeat(np.arange(B), [len(c) for c in candidates])
        if len(flat_actions) == 0:
            raise ValueError("inverse dynamics needs candidate actions")
        uniq = list(dict.fromkeys(flat_actions))
        pos = {a: n for n, a in enumerate(uniq)}
        arows = self.action_features(uniq)[np.array([pos[a] for a in flat_actions])]
        x = ag.concat([s0[owner], s1[owner], arows], axis=-1)
        scores = mlp(x, self.params.group("invdy"))
        K = max(len(c) for c in candidates)
        idx = np.zeros((B, K), dtype=np.int64)
        mask = np.zeros((B, K))
        start = 0
        for b, c in enumerate(candidates):
            idx[b, : len(c)] = np.arange(start, start + len(c))
            mask[b, : len(c)] = 1.0
            start += len(c)
        logp = ag.masked_log_softmax(scores[idx], mask)
        picked = logp[np.arange(B), np.asarray(taken)]
        return -ag.mean(picked)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, params: EncoderParams, vocab: Vocab, extra: dict | None = None) -> None:
    """Write an ``.npz`` archive: a JSON header plus one float64 array per parameter.

    The header records the format tag, dims, layout, vocab tokens and their
    fingerprint, and the parameter names in order.
    """
    header = {
        "format": CHECKPOINT_FORMAT,
        "dims": asdict(params.dims),
        "layout": asdict(params.layout),
        "vocab": vocab.itos,
        "vocab_hash": f"{vocab.fingerprint():#018x}",
        "names": list(params.tensors),
        "extra": extra or {},
    }
    arrays = {f"p{n}": t.data for n, t in enumerate(params.tensors.values())}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path) -> tuple[EncoderParams, Vocab, dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        vocab = Vocab(header["vocab"][2:])
        if f"{vocab.fingerprint():#018x}" != header["vocab_hash"]:
            raise ValueError(f"{path}: vocabulary fingerprint mismatch")
        params = EncoderParams(Dims(**header["dims"]), Layout(**header["layout"]), len(vocab), np.random.default_rng(0))
        if list(params.tensors) != header["names"]:
            raise ValueError(f"{path}: parameter layout mismatch")
        for n, t in enumerate(params.tensors.values()):
            arr = z[f"p{n}"]
            if arr.shape != t.data.shape:
                raise ValueError(f"{path}: shape mismatch for {header['names'][n]}")
            t.data = arr.astype(np.float64)
    return params, vocab, header["extra"]
