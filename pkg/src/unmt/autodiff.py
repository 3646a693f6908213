"""Minimal define-by-run reverse-mode automatic differentiation on numpy.

Every operation returns a new :class:`Tensor`.  When at least one input
requires a gradient (and recording is enabled) the result keeps references
to its parents plus a closure mapping the upstream gradient to one gradient
per parent.  :func:`backward` walks the graph in reverse topological order.

The recurrent kernel :func:`lstm_scan` is fused: it runs the whole masked
time loop in one node and back-propagates through time by hand, which keeps
the Python overhead per minibatch small.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_DTYPE = np.float32
_GRAD_ENABLED = True


def get_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DTYPE
    prev, _DTYPE = _DTYPE, np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference, frozen models, discriminator inputs)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad=False, name=""):
        arr = np.asarray(data)
        if arr.dtype.kind in "fc" or arr.dtype.kind in "iub" and requires_grad:
            arr = arr.astype(_DTYPE, copy=False)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    # -- conveniences -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

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
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def parameter(data, name=""):
    return Tensor(np.array(data, dtype=_DTYPE), requires_grad=True, name=name)


def _wrap(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DTYPE))


def _result(data, parents, backward, op):
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape) from None


# -- elementwise ------------------------------------------------------------
def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), bw, "mul")


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def _sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    s = _sigmoid(a.data)
    return _result(s, (a,), lambda g: (g * s * (1 - s),), "sigmoid")


def tanh(a):
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1 - t * t),), "tanh")


def relu(a):
    pos = a.data > 0
    return _result(np.where(pos, a.data, 0).astype(a.data.dtype), (a,), lambda g: (g * pos,), "relu")


def leaky_relu(a, slope=0.2):
    scale = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return _result(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


# -- linear algebra ---------------------------------------------------------
def matmul(a, b):
    """``a @ b`` for 2-D @ 2-D, N-D @ 2-D (shared right operand) or batched 3-D @ 3-D."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim not in (2, 3) or a.shape[-1] != b.shape[-2] or (
        b.ndim == 3 and (a.ndim != 3 or a.shape[0] != b.shape[0])
    ):
        raise DimensionError("matmul", a.shape, b.shape)
    out = a.data @ b.data

    if b.ndim == 2:
        def bw(g):
            ga = g @ b.data.T
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb
    else:
        def bw(g):
            return g @ b.data.transpose(0, 2, 1), a.data.transpose(0, 2, 1) @ g

    return _result(out, (a, b), bw, "matmul")


def transpose(a):
    """Swap the last two axes."""
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(axes),), "transpose")


# -- shape manipulation -----------------------------------------------------
def reshape(a, shape):
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", old, shape) from None
    return _result(out, (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("concat", *[t.shape for t in tensors]) from None
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(out, tuple(tensors), bw, "concat")


def getitem(a, idx):
    """Basic slicing or advanced (gather) indexing; gradients scatter-add back."""
    out = a.data[idx]

    basic = all(isinstance(i, (int, slice, type(None), type(Ellipsis)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def bw(g):
        ga = np.zeros_like(a.data)
        if basic:
            ga[idx] = g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return _result(np.array(out, copy=True), (a,), bw, "getitem")


def embedding(table, ids):
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"embedding: id out of range [0, {table.shape[0]})")
    out = table.data[ids]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(out, (table,), bw, "embedding")


# -- reductions -------------------------------------------------------------
def sum_(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(a.data.dtype),)

    return _result(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


# -- normalisers and losses -------------------------------------------------
def softmax(a, mask=None):
    """Softmax over the last axis; positions where ``mask`` is False get weight 0."""
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (a,), bw, "softmax")


def log_softmax(a):
    x = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(x).sum(axis=-1, keepdims=True))
    out = x - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _result(out, (a,), bw, "log_softmax")


def cross_entropy(logits, targets, mask=None, reduction="sum"):
    """Token-level cross-entropy from unnormalised logits.

    ``targets`` holds integer class ids with shape ``logits.shape[:-1]``.
    ``mask`` (same shape, 0/1) removes positions from the loss.
    ``reduction`` is ``"sum"``, ``"mean"`` (over unmasked positions) or ``"none"``.
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise DimensionError("cross_entropy", logits.shape, targets.shape)
    x = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(x).sum(axis=-1, keepdims=True))
    logp = x - lse
    nll = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    w = np.ones_like(nll) if mask is None else np.asarray(mask, dtype=nll.dtype)
    nll = nll * w
    if reduction == "sum":
        out, scale = nll.sum(), None
    elif reduction == "mean":
        denom = max(float(w.sum()), 1.0)
        out, scale = nll.sum() / denom, 1.0 / denom
    elif reduction == "none":
        out, scale = nll, None
    else:
        raise ContractError(f"cross_entropy: unknown reduction {reduction!r}")

    def bw(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None], np.take_along_axis(p, targets[..., None], -1) - 1, -1)
        if reduction == "none":
            gw = g * w
        else:
            gw = w * (g if scale is None else g * scale)
        return ((p * gw[..., None]).astype(logits.data.dtype),)

    return _result(np.asarray(out, dtype=logits.data.dtype), (logits,), bw, "cross_entropy")


def bce_with_logits(logits, targets):
    """Elementwise binary cross-entropy of sigmoid(logits) against soft targets."""
    x = logits.data
    t = np.asarray(targets, dtype=x.dtype)
    if t.shape != x.shape:
        raise DimensionError("bce_with_logits", x.shape, t.shape)
    # max(x, 0) - x t + log(1 + exp(-|x|)) avoids overflow for large |x|
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return _result(out, (logits,), lambda g: (g * (s - t),), "bce_with_logits")


# -- fused recurrence -------------------------------------------------------
def lstm_scan(gates_x, w_hh, h0, mask=None, c0=None):
    """Run an LSTM recurrence over time.

    ``gates_x`` (B, T, 4H) holds the input contributions ``x_t W_ih + b`` with
    gate order (input, forget, cell, output).  ``mask`` (B, T) marks real
    tokens; at masked steps the state is carried over unchanged, so the
    output at the last time step is the state after each row's last real
    token.  Returns the hidden states (B, T, H).
    """
    B, T, G = gates_x.shape
    H = w_hh.shape[0]
    if G != 4 * H or w_hh.shape != (H, 4 * H) or h0.shape != (B, H):
        raise DimensionError("lstm_scan", gates_x.shape, w_hh.shape, h0.shape)
    dt = gates_x.data.dtype
    m = np.ones((B, T), dtype=dt) if mask is None else np.asarray(mask, dtype=dt)
    parents = [gates_x, w_hh, h0]
    if c0 is not None:
        parents.append(c0)
    c = np.zeros((B, H), dtype=dt) if c0 is None else c0.data
    h = h0.data
    W = w_hh.data
    gx = gates_x.data
    hs = np.empty((B, T, H), dtype=dt)
    cache = []
    for t in range(T):
        a = gx[:, t] + h @ W
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = _sigmoid(a[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mt = m[:, t, None]
        cache.append((h, c, i, f, g, o, tc))
        c = mt * c_new + (1 - mt) * c
        h = mt * h_new + (1 - mt) * h
        hs[:, t] = h

    def bw(dhs):
        dgx = np.empty_like(gx)
        dW = np.zeros_like(W)
        dh_next = np.zeros((B, H), dtype=dt)
        dc_next = np.zeros((B, H), dtype=dt)
        for t in range(T - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc = cache[t]
            mt = m[:, t, None]
            dh = dhs[:, t] + dh_next
            dh_new, dh_carry = mt * dh, (1 - mt) * dh
            dc_new, dc_carry = mt * dc_next, (1 - mt) * dc_next
            dc = dc_new + dh_new * o * (1 - tc * tc)
            da = np.concatenate(
                [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dc * i * (1 - g * g), dh_new * tc * o * (1 - o)],
                axis=1,
            )
            dgx[:, t] = da
            dW += h_prev.T @ da
            dh_next = da @ W.T + dh_carry
            dc_next = dc * f + dc_carry
        grads = [dgx, dW, dh_next]
        if c0 is not None:
            grads.append(dc_next)
        return tuple(grads)

    return _result(hs, tuple(parents), bw, "lstm_scan")


# -- backprop ---------------------------------------------------------------
def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Back-propagate from a scalar ``loss``.

    Leaf gradients accumulate into ``.grad`` (call :func:`zero_grad` between
    steps); intermediate nodes receive fresh gradients.  Returns a mapping
    from each reachable leaf that requires a gradient to its gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            leaves[node] = node.grad
            continue
        node.grad = g
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            grads[key] = pg if key not in grads else grads[key] + pg
    return leaves


def zero_grad(params):
    for p in params:
        p.grad = None


def grad_check(f, params, eps=1e-4, n_samples=20, seed=0, min_abs=1e-4):
    """Compare backprop gradients of ``f()`` with central finite differences.

    ``f`` is a zero-argument callable returning a scalar Tensor and must be
    deterministic (reseed any randomness inside it).  Per parameter, up to
    ``n_samples`` coordinates are probed, drawn from those whose analytic
    gradient is at least ``min_abs`` in magnitude and topped up with the
    largest remaining ones: below that, central differences in double
    precision are dominated by roundoff.  Returns the maximum of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    rng = np.random.default_rng(seed)
    zero_grad(params)
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        mag = np.abs(ga.reshape(-1))
        big = np.flatnonzero(mag >= min_abs)
        k = min(n_samples, flat.size)
        if len(big) >= k:
            coords = rng.choice(big, size=k, replace=False)
        else:
            rest = np.argsort(-mag, kind="stable")[len(big):]
            coords = np.concatenate([big, rest[:k - len(big)]])
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            fp = f().item()
            flat[c] = orig - eps
            fm = f().item()
            flat[c] = orig
            num = (fp - fm) / (2 * eps)
            ana = float(ga.reshape(-1)[c])
            if not (np.isfinite(num) and np.isfinite(ana)):
                raise NumericError(f"grad_check: non-finite gradient at {p.name or 'param'}[{int(c)}]")
            err = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, err)
    zero_grad(params)
    return worst
