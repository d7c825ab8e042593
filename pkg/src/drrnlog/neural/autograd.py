"""A minimal reverse-mode automatic differentiation library on numpy arrays.

Each :class:`Tensor` remembers its parents and a closure that pushes its
gradient back to them.  :meth:`Tensor.backward` walks the graph in reverse
topological order.  Only the operations the encoders need are provided.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward) -> Tensor:
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data)
    return Tensor(data, True, tuple(parents), backward)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: a._accumulate(-g))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim == 1:
        out = matmul(reshape(a, (1, a.shape[0])), b)
        return reshape(out, out.shape[:-2] + out.shape[-1:])
    if b.ndim == 1:
        out = matmul(a, reshape(b, (b.shape[0], 1)))
        return reshape(out, out.shape[:-1])

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ _swap(b.data), a.shape))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                # fold batch dimensions instead of materialising per-batch products
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(_swap(a.data) @ g, b.shape)
            b._accumulate(gb)

    return _make(a.data @ b.data, (a, b), backward)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: a._accumulate(g * scale))


def tabs(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: a._accumulate(g * sign))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * out))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(out, (a,), backward)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def getitem(a: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(a.data[idx], (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def masked_softmax(scores: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to entries where ``mask`` is 1.

    Rows whose mask is entirely zero come out as all zeros.
    """
    mask = np.broadcast_to(mask, scores.shape).astype(bool)
    shifted = np.where(mask, scores.data, -np.inf)
    top = shifted.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, scores.data, 0.0) - top), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    out = e / np.where(z > 0, z, 1.0)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        scores._accumulate(out * (g - inner))

    return _make(out, (scores,), backward)


def masked_log_softmax(scores: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    mask = np.broadcast_to(mask, scores.shape).astype(bool)
    shifted = np.where(mask, scores.data, -np.inf)
    top = shifted.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, scores.data, 0.0) - top), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    logz = np.log(np.where(z > 0, z, 1.0)) + top
    out = np.where(mask, scores.data - logz, 0.0)
    probs = e / np.where(z > 0, z, 1.0)

    def backward(g):
        g = np.where(mask, g, 0.0)
        scores._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return _make(out, (scores,), backward)


def gru_sequence(x: Tensor, mask: np.ndarray, p: dict) -> Tensor:
    """Run a GRU over a right-padded batch and return every hidden state.

    ``x`` is (batch, time, input); ``mask`` is (batch, time) with 1 on real
    tokens.  On padded steps the hidden state is carried over unchanged, so
    ``out[:, -1]`` is the final hidden state of each sequence.  The backward
    pass is written out by hand (backpropagation through time) because a
    primitive-op graph would be orders of magnitude slower here.

    Recurrence with row vectors and weights stored (input, hidden):
        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        hh = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * hh
    """
    Wz, Uz, bz = p["W_z"], p["U_z"], p["b_z"]
    Wr, Ur, br = p["W_r"], p["U_r"], p["b_r"]
    Wh, Uh, bh = p["W_h"], p["U_h"], p["b_h"]
    B, T, E = x.shape
    H = Uz.shape[0]
    if Wz.shape != (E, H):
        raise ValueError(f"GRU input size mismatch: x has {E} features, W_z is {Wz.shape}")
    m = np.asarray(mask, dtype=np.float64).reshape(B, T, 1)
    xz = x.data @ Wz.data + bz.data
    xr = x.data @ Wr.data + br.data
    xh = x.data @ Wh.data + bh.data
    hs = np.zeros((B, T + 1, H))
    zs = np.empty((B, T, H))
    rs = np.empty((B, T, H))
    hhs = np.empty((B, T, H))
    h = hs[:, 0]
    for t in range(T):
        z = 1.0 / (1.0 + np.exp(-(xz[:, t] + h @ Uz.data)))
        r = 1.0 / (1.0 + np.exp(-(xr[:, t] + h @ Ur.data)))
        hh = np.tanh(xh[:, t] + (r * h) @ Uh.data)
        hn = (1.0 - z) * h + z * hh
        mt = m[:, t]
        h = mt * hn + (1.0 - mt) * h
        zs[:, t], rs[:, t], hhs[:, t] = z, r, hh
        hs[:, t + 1] = h
    out = hs[:, 1:].copy()

    def backward(gout):
        dxz = np.zeros((B, T, H))
        dxr = np.zeros((B, T, H))
        dxh = np.zeros((B, T, H))
        dUz = np.zeros((H, H))
        dUr = np.zeros((H, H))
        dUh = np.zeros((H, H))
        dh_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = gout[:, t] + dh_next
            hp = hs[:, t]
            z, r, hh, mt = zs[:, t], rs[:, t], hhs[:, t], m[:, t]
            dhn = mt * dh
            dhp = (1.0 - mt) * dh + dhn * (1.0 - z)
            dz = dhn * (hh - hp)
            dah = dhn * z * (1.0 - hh * hh)
            rh = r * hp
            dUh += rh.T @ dah
            drh = dah @ Uh.data.T
            dr = drh * hp
            dhp += drh * r
            dar = dr * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dUr += hp.T @ dar
            dUz += hp.T @ daz
            dhp += dar @ Ur.data.T + daz @ Uz.data.T
            dxz[:, t], dxr[:, t], dxh[:, t] = daz, dar, dah
            dh_next = dhp
        xf = x.data.reshape(B * T, E)
        for W, b, U, dx_, dU in ((Wz, bz, Uz, dxz, dUz), (Wr, br, Ur, dxr, dUr), (Wh, bh, Uh, dxh, dUh)):
            flat = dx_.reshape(B * T, H)
            if W.requires_grad:
                W._accumulate(xf.T @ flat)
            if b.requires_grad:
                b._accumulate(flat.sum(axis=0))
            if U.requires_grad:
                U._accumulate(dU)
        if x.requires_grad:
            dx = dxz @ Wz.data.T + dxr @ Wr.data.T + dxh @ Wh.data.T
            x._accumulate(dx)

    parents = (x, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh)
    return _make(out, parents, backward)
