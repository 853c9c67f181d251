"""Reverse-mode differentiation over dense float64 numpy arrays.

Each op records its parents and a closure mapping the output gradient to
parent gradients.  Graph recording is skipped when no input requires a
gradient, so inference does not build a tape.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        order = []
        seen = set()
        stack = [(self, False)]
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
        grads = {id(self): np.ones_like(self.data) if grad is None else np.asarray(grad, DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.shape)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def scatter_add(out, idx, vals) -> None:
    """``out[idx[k]] += vals[k]`` with repeated indices accumulated (faster than ``np.add.at``)."""
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    if idx.size == 0:
        return
    vals = np.asarray(vals).reshape((idx.size,) + out.shape[1:])
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    starts = np.flatnonzero(np.concatenate([[True], sidx[1:] != sidx[:-1]]))
    out[sidx[starts]] += np.add.reduceat(vals[order], starts, axis=0)


def _make(data, parents, backward):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError("add", f"{a.shape} vs {b.shape}") from exc
    return _make(out, (a, b), lambda g: (g, g))


def neg(a) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError("mul", f"{a.shape} vs {b.shape}") from exc
    return _make(out, (a, b), lambda g: (g * b.data, g * a.data))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a) -> Tensor:
    pos = a.data > 0
    return _make(a.data * pos, (a,), lambda g: (g * pos,))


def dropout(a, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not training or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------- shape ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError("matmul", f"{a.shape} @ {b.shape}")

    def bw(g):
        if b.ndim == 1:
            ga = np.multiply.outer(g, b.data)
            gb = np.tensordot(a.data, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim))))
            return ga, gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.ndim == 1:
            gb = np.outer(a.data, g)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if b.ndim == 2 and gb.ndim > 2:
                gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return _make(a.data @ b.data, (a, b), bw)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", str([t.shape for t in tensors])) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(a, idx) -> Tensor:
    def bw(g):
        out = np.zeros_like(a.data)
        if isinstance(idx, slice) or (isinstance(idx, tuple) and all(isinstance(k, slice) for k in idx)):
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), bw)


def take(a, indices, axis=0, unique: bool = False) -> Tensor:
    """Gather along ``axis`` (embedding lookup, span endpoints).

    ``unique=True`` promises distinct indices, which allows a plain scatter.
    """
    indices = np.asarray(indices, dtype=np.intp)

    def bw(g):
        out = np.zeros_like(a.data)
        if unique and axis == 0:
            out[indices] = g
            return (out,)
        moved = np.moveaxis(out, axis, 0)
        k = indices.ndim
        lead = np.moveaxis(g, list(range(axis, axis + k)), list(range(k)))
        scatter_add(moved, indices, lead)
        return (out,)

    return _make(np.take(a.data, indices, axis=axis), (a,), bw)


def span_grid_sum(start, end, k: int) -> Tensor:
    """out[i * k + w] = start[i] + end[i + w] for (N, C) inputs; rows with i + w >= N get start[i] only.

    Lays out every span of width <= k on an (N, k) grid so span features
    need no gather/scatter.
    """
    n, c = start.shape
    pad = np.zeros((n + k - 1, c))
    pad[:n] = end.data
    out = start.data[:, None, :] + np.lib.stride_tricks.sliding_window_view(pad, k, axis=0).transpose(0, 2, 1)

    def bw(g):
        g = g.reshape(n, k, c)
        gend = np.zeros((n + k - 1, c))
        for w in range(k):
            gend[w:w + n] += g[:, w]
        return g.sum(axis=1), gend[:n]

    return _make(out.reshape(n * k, c), (start, end), bw)


def reshape(a, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def tsum(a, axis=None) -> Tensor:
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), bw)


def embedding_bag(table, indices, segments, weights, n_out: int) -> Tensor:
    """out[s] = sum_k weights[k] * table[indices[k]] over k with segments[k] == s."""
    indices = np.asarray(indices, dtype=np.intp)
    segments = np.asarray(segments, dtype=np.intp)
    w = np.asarray(weights, dtype=DTYPE)[:, None]
    out = np.zeros((n_out, table.shape[1]))
    scatter_add(out, segments, table.data[indices] * w)

    def bw(g):
        gt = np.zeros_like(table.data)
        scatter_add(gt, indices, g[segments] * w)
        return (gt,)

    return _make(out, (table,), bw)


# ---------------------------------------------------------------- reductions


def masked_mean(x, mask) -> Tensor:
    """Mean over axis 1 of (B, T, C) counting positions where ``mask`` (B, T) is 1."""
    m = np.asarray(mask, dtype=DTYPE)[:, :, None]
    count = np.maximum(m.sum(axis=1), 1.0)
    out = (x.data * m).sum(axis=1) / count
    return _make(out, (x,), lambda g: (g[:, None, :] * m / count[:, None, :],))


def _masked_logits(x, mask):
    if mask is None:
        return x
    return np.where(np.asarray(mask, dtype=bool), x, -np.inf)


def softmax(a, axis=-1, mask=None) -> Tensor:
    z = _masked_logits(a.data, mask)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (a,), bw)


def log_softmax(a, axis=-1, mask=None) -> Tensor:
    z = _masked_logits(a.data, mask)
    z = z - np.max(z, axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        g = np.where(np.isfinite(out), g, 0.0)
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bw)


# ---------------------------------------------------------------- losses


def bce_loss(logits, targets, weights=None) -> Tensor:
    """Summed binary cross-entropy on logits: -[y log s(z) + (1-y) log(1-s(z))]."""
    z = logits.data
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != z.shape:
        raise ShapeError("bce_loss", f"targets {y.shape} vs logits {z.shape}")
    w = np.ones_like(z) if weights is None else np.asarray(weights, dtype=DTYPE)
    total = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)))
    return _make(total, (logits,), lambda g: (g * w * (_sigmoid(z) - y),))


def ce_loss(logits, targets, mask=None, weights=None) -> Tensor:
    """Summed cross-entropy of rows of (B, T) logits against integer targets (B,)."""
    z = logits.data
    if z.ndim != 2:
        raise ShapeError("ce_loss", f"expected (B, T) logits, got {z.shape}")
    t = np.asarray(targets, dtype=np.intp)
    rows = np.arange(z.shape[0])
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=1).all():
            raise ShapeError("ce_loss", "row with no valid position")
        if not mask[rows, t].all():
            raise ShapeError("ce_loss", "target on a masked position")
    w = np.ones(z.shape[0]) if weights is None else np.asarray(weights, dtype=DTYPE)
    zz = _masked_logits(z, mask)
    zz = zz - zz.max(axis=1, keepdims=True)
    e = np.exp(zz)
    p = e / e.sum(axis=1, keepdims=True)
    logp = np.log(np.maximum(p[rows, t], 1e-300))
    total = float(-(w * logp).sum())

    def bw(g):
        grad = p.copy()
        grad[rows, t] -= 1.0
        return (g * grad * w[:, None],)

    return _make(total, (logits,), bw)


# ---------------------------------------------------------------- convolution


def conv1d(x, weight, bias) -> Tensor:
    """Same-padded 1-D convolution: x (B, T, C), weight (k, C, O), bias (O,) -> (B, T, O)."""
    k, c_in, c_out = weight.shape
    if x.ndim != 3 or x.shape[2] != c_in:
        raise ShapeError("conv1d", f"input {x.shape} vs weight {weight.shape}")
    if k % 2 == 0:
        raise ShapeError("conv1d", "kernel size must be odd for same padding")
    pad = k // 2
    T = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    out = np.broadcast_to(bias.data, (x.shape[0], T, c_out)).copy()
    for j in range(k):
        out += xp[:, j:j + T] @ weight.data[j]

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(weight.data)
        for j in range(k):
            win = xp[:, j:j + T]
            gw[j] = win.reshape(-1, c_in).T @ g.reshape(-1, c_out)
            gxp[:, j:j + T] += g @ weight.data[j].T
        return gxp[:, pad:pad + T], gw, g.sum(axis=(0, 1))

    return _make(out, (x, weight, bias), bw)


# ---------------------------------------------------------------- recurrent


def lstm_step(x, h, c, W, U, b):
    """One LSTM step built from primitives; gate order (input, forget, candidate, output)."""
    H = h.shape[-1]
    z = matmul(x, W) + matmul(h, U) + b
    i = sigmoid(z[..., 0:H])
    f = sigmoid(z[..., H:2 * H])
    g = tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:4 * H])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def _scan_forward(Xp, M, U, b, R=None):
    """Xp (D, T, B, 4H) input projections, M (D, T, B, 1) masks, U (D, H, 4H), b (D, 1, 4H).

    ``R`` (D, T, B, 1), when given, multiplies the carried state before each
    step (0 resets it).  Steps where no row is padded skip the mask blend.
    """
    D, T, B, H4 = Xp.shape
    H = H4 // 4
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so one tanh covers all four gates
    scale = np.full(H4, 0.5)
    scale[2 * H:3 * H] = 1.0
    shift = np.full(H4, 0.5)
    shift[2 * H:3 * H] = 0.0
    # time-major copies keep every per-step slice contiguous
    Xs = np.ascontiguousarray(np.swapaxes((Xp + b[:, None]) * scale, 0, 1))
    Mt = np.ascontiguousarray(np.swapaxes(M, 0, 1))
    full = Mt.reshape(T, -1).all(axis=1)
    Rt = None if R is None else np.ascontiguousarray(np.swapaxes(R, 0, 1))
    Us = U * scale
    gates = np.empty((T, D, B, H4))
    cs_prev = np.empty((T, D, B, H))
    hs_prev = np.empty((T, D, B, H))
    tcs = np.empty((T, D, B, H))
    out = np.empty((T, D, B, H))
    h = np.zeros((D, B, H))
    c = np.zeros((D, B, H))
    for t in range(T):
        if Rt is not None:
            h = h * Rt[t]
            c = c * Rt[t]
        hs_prev[t] = h
        cs_prev[t] = c
        s = gates[t]
        np.matmul(h, Us, out=s)
        s += Xs[t]
        np.tanh(s, out=s)
        s *= scale
        s += shift
        c_new = s[..., H:2 * H] * c
        c_new += s[..., :H] * s[..., 2 * H:3 * H]
        tc = tcs[t]
        np.tanh(c_new, out=tc)
        h_new = out[t]
        np.multiply(s[..., 3 * H:], tc, out=h_new)
        if full[t]:
            h = h_new
            c = c_new
        else:
            m = Mt[t]
            h_new *= m
            h = h + m * (h_new - h)
            c = c + m * (c_new - c)
    return np.swapaxes(out, 0, 1), (gates, cs_prev, hs_prev, tcs, Mt, full, Rt)


def _scan_backward(G, M, U, cache, R=None):
    gates, cs_prev, hs_prev, tcs, Mt, full, Rt = cache
    T, D, B, H = tcs.shape
    Gt = np.ascontiguousarray(np.swapaxes(G, 0, 1))
    i, f, g, o = (gates[..., k * H:(k + 1) * H] for k in range(4))
    # local derivative factors, computed for all steps at once
    K = np.empty((T, D, B, 4, H))
    K[..., 0, :] = g * i * (1.0 - i)
    K[..., 1, :] = cs_prev * f * (1.0 - f)
    K[..., 2, :] = i * (1.0 - g * g)
    K[..., 3, :] = tcs * o * (1.0 - o)
    Ao = o * (1.0 - tcs * tcs)
    f = np.ascontiguousarray(f)
    dz = np.empty((T, D, B, 4 * H))
    dz4 = dz.reshape(T, D, B, 4, H)
    dh = np.zeros((D, B, H))
    dc = np.zeros((D, B, H))
    Ut = np.swapaxes(U, 1, 2)
    for t in range(T - 1, -1, -1):
        if full[t]:
            dh_new = dh + Gt[t]
            dc_new = dh_new * Ao[t]
            dc_new += dc
        else:
            m = Mt[t]
            dh_new = m * (dh + Gt[t])
            dc_new = m * dc + dh_new * Ao[t]
        np.multiply(dc_new[:, :, None, :], K[t, :, :, :3], out=dz4[t, :, :, :3])
        np.multiply(dh_new, K[t, :, :, 3], out=dz4[t, :, :, 3])
        if full[t]:
            dh = dz[t] @ Ut
            dc = dc_new * f[t]
        else:
            mi = 1.0 - Mt[t]
            dh = mi * dh + dz[t] @ Ut
            dc = mi * dc + dc_new * f[t]
        if Rt is not None:
            dh = dh * Rt[t]
            dc = dc * Rt[t]
    dU = np.swapaxes(hs_prev.reshape(T, D, B, H), 0, 1).reshape(D, T * B, H)
    dU = np.swapaxes(dU, 1, 2) @ np.swapaxes(dz, 0, 1).reshape(D, T * B, 4 * H)
    return np.swapaxes(dz, 0, 1), dU


def lstm_layers(x, mask, params, resets=None) -> Tensor:
    """Run one or more LSTM directions over x (B, T, I) and concatenate their outputs.

    ``params`` is a list of ``(W, U, b, reverse)``.  Masked (padded) steps carry
    the state unchanged and emit zeros, so right-padding never leaks into the
    valid prefix in either direction.  All directions advance in the same
    loop, which keeps per-step Python overhead flat in the number of
    directions.

    ``resets`` (B, T), optional, zeroes the carried state just before the
    marked positions are read, separately for each direction's time order:
    entry ``[d][b, t]`` applies to direction ``d`` (a list of one array per
    direction, or ``None`` for a direction without resets).
    """
    B, T, I = x.shape
    m = np.asarray(mask, dtype=DTYPE).reshape(B, T)
    D = len(params)
    H = params[0][1].shape[0]
    for W, U, b, _ in params:
        if W.shape != (I, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
            raise ShapeError("lstm", f"input {x.shape}, W {W.shape}, U {U.shape}, b {b.shape}")
    rev = [p[3] for p in params]

    def time_major(a, r):  # (B, T, ...) -> (T, B, ...), optionally reversed in time
        a = np.swapaxes(a, 0, 1)
        return a[::-1] if r else a

    def batch_major(a, r):  # inverse of time_major
        return np.swapaxes(a[::-1] if r else a, 0, 1)

    Xp = np.stack([time_major(x.data @ W.data, r) for (W, _, _, r) in params])
    M = np.stack([time_major(m, r) for r in rev])[..., None]
    U = np.stack([p[1].data for p in params])
    bb = np.stack([p[2].data for p in params])[:, None, :]
    R = None
    if resets is not None and any(r is not None for r in resets):
        R = np.stack([time_major(np.ones((B, T)) if r_ is None else 1.0 - np.asarray(r_, DTYPE), r)
                      for r_, r in zip(resets, rev)])[..., None]
    out, cache = _scan_forward(Xp, M, U, bb, R)
    result = np.concatenate([batch_major(out[d], rev[d]) for d in range(D)], axis=-1)

    def bw(g):
        G = np.stack([time_major(g[..., d * H:(d + 1) * H], rev[d]) for d in range(D)])
        dXp, dU = _scan_backward(G, M, U, cache, R)
        grads = []
        gx = np.zeros((T, B, I))
        xt = np.ascontiguousarray(np.swapaxes(x.data, 0, 1)).reshape(T * B, I)
        for d, (W, _, _, r) in enumerate(params):
            dxp = dXp[d][::-1] if r else dXp[d]  # (T, B, 4H) in natural time order
            flat = np.ascontiguousarray(dxp).reshape(T * B, 4 * H)
            gx += (flat @ W.data.T).reshape(T, B, I)
            grads.extend([xt.T @ flat, dU[d], flat.sum(axis=0)])
        return (np.swapaxes(gx, 0, 1), *grads)

    parents = [x]
    for W, U_, b, _ in params:
        parents.extend([W, U_, b])
    return _make(result, parents, bw)
