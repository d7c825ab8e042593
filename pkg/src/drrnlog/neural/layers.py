"""Functional building blocks: GRU encoder, BiDAF attention, MLP heads."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor

LEAKY_SLOPE = 0.01
GRU_GATES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return ag.parameter(rng.uniform(-bound, bound, size=shape))


def init_gru(rng: np.random.Generator, input_dim: int, hidden: int) -> dict[str, Tensor]:
    p = {}
    for gate in "zrh":
        p[f"W_{gate}"] = uniform_init(rng, (input_dim, hidden), input_dim)
        p[f"U_{gate}"] = uniform_init(rng, (hidden, hidden), hidden)
        p[f"b_{gate}"] = uniform_init(rng, (hidden,), hidden)
    return p


def init_linear(rng: np.random.Generator, n_in: int, n_out: int) -> dict[str, Tensor]:
    return {"W": uniform_init(rng, (n_in, n_out), n_in), "b": uniform_init(rng, (n_out,), n_in)}


def init_mlp(rng: np.random.Generator, n_in: int, hidden: int) -> dict[str, Tensor]:
    return {
        "W1": uniform_init(rng, (n_in, hidden), n_in),
        "b1": uniform_init(rng, (hidden,), n_in),
        "W2": uniform_init(rng, (hidden, 1), hidden),
        "b2": uniform_init(rng, (1,), hidden),
    }


def gru_encode(inputs, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Encode one sequence of input vectors, shape (time, input).

    Returns the final hidden state (hidden,) and all hidden states
    (time, hidden).  An empty sequence gives a zero final state and an empty
    hidden matrix.
    """
    x = inputs if isinstance(inputs, Tensor) else ag.constant(inputs)
    H = params["U_z"].shape[0]
    if x.shape[0] == 0:
        return ag.constant(np.zeros(H)), ag.constant(np.zeros((0, H)))
    if x.ndim != 2:
        raise ValueError(f"expected a (time, input) matrix, got shape {x.shape}")
    seq = ag.gru_sequence(ag.reshape(x, (1,) + x.shape), np.ones((1, x.shape[0])), params)
    hiddens = seq[0]
    return hiddens[-1], hiddens


def gru_step(x: np.ndarray, h: np.ndarray, params: dict) -> np.ndarray:
    """Single GRU update in plain numpy, the reference the fused sequence op must match."""
    v = {k: (t.data if isinstance(t, Tensor) else t) for k, t in params.items()}
    z = 1.0 / (1.0 + np.exp(-(x @ v["W_z"] + h @ v["U_z"] + v["b_z"])))
    r = 1.0 / (1.0 + np.exp(-(x @ v["W_r"] + h @ v["U_r"] + v["b_r"])))
    hh = np.tanh(x @ v["W_h"] + (r * h) @ v["U_h"] + v["b_h"])
    return (1.0 - z) * h + z * hh


def bidaf_attention(obs: Tensor, act: Tensor, act_mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Observation-to-action attention.

    ``obs`` is (..., To, H) and ``act`` is (..., Ta, H).  Scores are dot
    products o_i . a_j, weights are a softmax over action tokens j, and the
    summary for observation token i is the weighted sum of action vectors.
    Returns (weights, summaries).
    """
    scores = _bmm_t(obs, act)
    if act_mask is None:
        act_mask = np.ones(act.shape[:-1])
    weights = ag.masked_softmax(scores, np.expand_dims(act_mask, -2))
    return weights, weights @ act


def _bmm_t(a: Tensor, b: Tensor) -> Tensor:
    # a @ b^T over the last two axes with gradients flowing to both operands
    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data)
        if b.requires_grad:
            b._accumulate(np.swapaxes(g, -1, -2) @ a.data)

    return ag._make(a.data @ np.swapaxes(b.data, -1, -2), (a, b), backward)


def bidaf_features(obs: Tensor, summary: Tensor) -> Tensor:
    return ag.concat([obs, summary, obs * summary, ag.tabs(obs - summary)], axis=-1)


def bidaf(obs_hiddens, act_hiddens, proj: dict[str, Tensor], obs_mask=None, act_mask=None) -> Tensor:
    """Action-attended observation embedding.

    Unbatched inputs are (To, H) and (Ta, H); batched inputs carry a leading
    pair axis plus 0/1 masks for padding.  Each observation token's feature
    [o, c, o*c, |o-c|] goes through a linear layer with leaky ReLU and the
    results are mean-pooled over the (unpadded) observation tokens.
    """
    obs = obs_hiddens if isinstance(obs_hiddens, Tensor) else ag.constant(obs_hiddens)
    act = act_hiddens if isinstance(act_hiddens, Tensor) else ag.constant(act_hiddens)
    if act.shape[-2] == 0 or (act_mask is not None and not np.all(np.asarray(act_mask).sum(-1) > 0)):
        raise ValueError("bidaf needs at least one action token")
    if obs.shape[-1] != act.shape[-1]:
        raise ValueError("observation and action hidden sizes differ")
    _, summary = bidaf_attention(obs, act, act_mask)
    y = ag.leaky_relu(bidaf_features(obs, summary) @ proj["W"] + proj["b"], LEAKY_SLOPE)
    if obs_mask is None:
        obs_mask = np.ones(obs.shape[:-1])
    count = np.maximum(obs_mask.sum(-1, keepdims=True), 1.0)
    weights = (obs_mask / count)[..., None]
    return (y * weights).sum(axis=-2)


def mlp(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    """One hidden layer with leaky ReLU, scalar output per row."""
    h = ag.leaky_relu(x @ p["W1"] + p["b1"], LEAKY_SLOPE)
    out = h @ p["W2"] + p["b2"]
    return ag.reshape(out, out.shape[:-1])


def q_value(state_rep, action_rep, qhead: dict[str, Tensor]) -> Tensor:
    sr = state_rep if isinstance(state_rep, Tensor) else ag.constant(state_rep)
    ar = action_rep if isinstance(action_rep, Tensor) else ag.constant(action_rep)
    expected = qhead["W1"].shape[0]
    if sr.shape[-1] + ar.shape[-1] != expected:
        raise ValueError(f"q head expects {expected} inputs, got {sr.shape[-1]} + {ar.shape[-1]}")
    return mlp(ag.concat([sr, ar], axis=-1), qhead)


def inv_dyn_loss(sr_t, sr_next, candidate_action_reps, taken_index: int, head: dict[str, Tensor]) -> Tensor:
    """Cross-entropy of predicting the taken action from consecutive states."""
    cands = candidate_action_reps if isinstance(candidate_action_reps, Tensor) else ag.constant(candidate_action_reps)
    k = cands.shape[0]
    if k == 0:
        raise ValueError("inverse dynamics needs at least one candidate action")
    if not 0 <= taken_index < k:
        raise IndexError(f"taken_index {taken_index} out of range for {k} candidates")
    s0 = sr_t if isinstance(sr_t, Tensor) else ag.constant(sr_t)
    s1 = sr_next if isinstance(sr_next, Tensor) else ag.constant(sr_next)
    ones = ag.constant(np.ones((k, 1)))
    x = ag.concat([ones @ ag.reshape(s0, (1, -1)), ones @ ag.reshape(s1, (1, -1)), cands], axis=-1)
    scores = mlp(x, head)
    logp = ag.masked_log_softmax(scores, np.ones(k))
    return -logp[taken_index]


def grad_check(
    fn, params: list[Tensor], eps: float = 1e-5, max_entries: int | None = None, rng=None, floor: float = 1e-6
) -> float:
    """Largest relative error between backprop and central differences.

    ``fn`` builds a scalar Tensor from the current parameter values.  With
    ``max_entries`` only that many randomly chosen entries per parameter are
    probed.  Denominators are floored at ``floor`` so entries whose true
    gradient vanishes are judged on absolute, not relative, error.
    """
    for p in params:
        p.zero_grad()
    out = fn()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            with ag.no_grad():
                up = float(fn().data)
            flat[i] = orig - eps
            with ag.no_grad():
                down = float(fn().data)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = grad.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
