"""Minimal reverse-mode differentiation engine on top of numpy.

Every op takes and returns :class:`Tensor` objects. When any input requires
gradients the result keeps references to its parents and a closure that maps
the output gradient to parent gradients; :meth:`Tensor.backward` walks that
graph in reverse topological order. Arrays are float64 throughout.

Shapes follow a ``(batch, channels, length)`` layout for feature maps. The
convolution-family ops also accept unbatched ``(channels, length)`` input.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "square",
    "sum",
    "mean",
    "reshape",
    "take",
    "concat_channels",
    "matmul",
    "conv1d",
    "tconv1d",
    "layer_norm",
    "linear",
    "relu",
    "sigmoid",
    "softmax",
    "log_clamped",
    "channel_stats",
    "scale_channels",
    "group_norms",
    "row_cosine",
    "select_channels",
    "grad_check",
    "numerical_grad",
]


class Tensor:
    """Array node in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every tracked leaf.

        ``grad`` seeds the output gradient; it may only be omitted for scalar
        outputs. Repeated calls add to existing leaf gradients.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() without a seed needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ValueError(f"seed shape {grad.shape} does not match output shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("output is not connected to any tensor that requires gradients")
        Tape.from_output(self).run(self, grad)


class Tape:
    """Topologically ordered record of the ops that produced an output."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
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
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def run(self, out: Tensor, seed: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(out): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _backward=backward, op=op)
    return Tensor(data, op=op)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ----------------------------------------------------------------------------
# elementwise and reductions


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        return _node(a.data + b, (a,), lambda g: (g,), "add_const")
    if not isinstance(a, Tensor):
        return _node(a + b.data, (b,), lambda g: (g,), "add_const")
    _check_same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return _node(a.data - b, (a,), lambda g: (g,), "sub_const")
    if not isinstance(a, Tensor):
        return _node(a - b.data, (b,), lambda g: (-g,), "rsub_const")
    _check_same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return scale(a, b)
    if not isinstance(a, Tensor):
        return scale(b, a)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(out, (a,), backward, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def take(a: Tensor, index) -> Tensor:
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.data[index], (a,), backward, "take")


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate feature maps along the channel axis (second to last)."""
    parts = [as_tensor(p) for p in parts]
    lead = {p.shape[:-2] + p.shape[-1:] for p in parts}
    if len(lead) != 1:
        raise ValueError(f"concat_channels: incompatible shapes {[p.shape for p in parts]}")
    sizes = [p.shape[-2] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=-2))

    return _node(np.concatenate([p.data for p in parts], axis=-2), parts, backward, "concat")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; ``b`` may be a shared 2-D matrix."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {ad.shape} @ {bd.shape}")
    shared_b = bd.ndim == 2 and ad.ndim > 2

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = np.swapaxes(ad, -1, -2) @ g
            if shared_b:
                gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return _node(ad @ bd, (a, b), backward, "matmul")


# ----------------------------------------------------------------------------
# convolutions


def _pads(kernel: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        left = (kernel - 1) // 2
        return left, kernel - 1 - left
    raise ValueError(f"unknown padding mode {padding!r}")


def _im2col(xp: np.ndarray, kernel: int, stride: int, n_out: int) -> np.ndarray:
    """(B, C, Vp) -> (B * n_out, C * kernel) matrix of strided windows."""
    b, c, _ = xp.shape
    win = sliding_window_view(xp, kernel, axis=2)[:, :, : stride * (n_out - 1) + 1 : stride, :]
    return win.transpose(0, 2, 1, 3).reshape(b * n_out, c * kernel)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int], kernel: int, stride: int, n_out: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add windows back into (B, C, Vp)."""
    b, c, vp = shape
    cols = np.ascontiguousarray(cols.reshape(b, n_out, c, kernel).transpose(0, 2, 3, 1))
    out = np.zeros(shape)
    stop = stride * (n_out - 1) + 1
    for k in range(kernel):
        out[:, :, k : k + stop : stride] += cols[:, :, k, :]
    return out


def _batched(x: Tensor, fn):
    if x.ndim == 2:
        y = fn(reshape(x, (1,) + x.shape))
        return reshape(y, y.shape[1:])
    if x.ndim != 3:
        raise ValueError(f"expected (C, V) or (B, C, V) input, got shape {x.shape}")
    return fn(x)


def conv1d(x: Tensor, k: Tensor, bias: Tensor | None = None, stride: int = 1, padding: str = "valid") -> Tensor:
    """Cross-correlation of ``x[C_in, V]`` with ``k[C_out, C_in, K]``.

    ``same`` padding splits ``K - 1`` zeros with the smaller half on the left.
    Output length is ``(V_padded - K) // stride + 1``.
    """
    k = as_tensor(k)
    return _batched(as_tensor(x), lambda xb: _conv1d(xb, k, bias, stride, padding))


def _conv1d(x: Tensor, k: Tensor, bias, stride, padding) -> Tensor:
    b, c_in, v = x.shape
    c_out, kc_in, kernel = k.shape
    if kc_in != c_in:
        raise ValueError(f"conv1d: input has {c_in} channels, kernel expects {kc_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
    left, right = _pads(kernel, padding)
    vp = v + left + right
    if kernel > vp:
        raise ValueError(f"conv1d: kernel {kernel} longer than padded input {vp}")
    n_out = (vp - kernel) // stride + 1
    xd, kd = x.data, k.data
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if left or right else xd
    wmat = kd.reshape(c_out, c_in * kernel)
    cols = _im2col(xp, kernel, stride, n_out)
    y = (cols @ wmat.T).reshape(b, n_out, c_out).transpose(0, 2, 1)
    if bias is not None:
        y = y + bias.data[None, :, None]

    def backward(g):
        gmat = g.transpose(0, 2, 1).reshape(b * n_out, c_out)
        gx = gk = gb = None
        if x.requires_grad:
            gxp = _col2im(gmat @ wmat, (b, c_in, vp), kernel, stride, n_out)
            gx = gxp[:, :, left : left + v]
        if k.requires_grad:
            gk = (gmat.T @ cols).reshape(kd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gk, gb

    parents = (x, k) if bias is None else (x, k, bias)
    return _node(y, parents, backward, "conv1d")


def tconv1d(x: Tensor, k: Tensor, bias: Tensor | None = None, stride: int = 1, padding: str = "valid") -> Tensor:
    """Transposed convolution with ``k[C_in, C_out, K]``.

    Without bias this is exactly the adjoint of :func:`conv1d` using the same
    kernel array, stride and padding, where the forward convolution maps
    ``C_out`` channels to ``C_in``. Output length is ``(V - 1) * stride + K``
    for ``valid`` and ``V * stride`` for ``same``.
    """
    k = as_tensor(k)
    return _batched(as_tensor(x), lambda xb: _tconv1d(xb, k, bias, stride, padding))


def _tconv1d(x: Tensor, k: Tensor, bias, stride, padding) -> Tensor:
    b, c_in, v = x.shape
    kc_in, c_out, kernel = k.shape
    if kc_in != c_in:
        raise ValueError(f"tconv1d: input has {c_in} channels, kernel expects {kc_in}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"tconv1d: bias shape {bias.shape} != ({c_out},)")
    left, right = _pads(kernel, padding)
    v_out = (v - 1) * stride + kernel if padding == "valid" else v * stride
    vp = v_out + left + right
    xd, kd = x.data, k.data
    wmat = kd.reshape(c_in, c_out * kernel)
    xmat = xd.transpose(0, 2, 1).reshape(b * v, c_in)
    full = _col2im(xmat @ wmat, (b, c_out, vp), kernel, stride, v)
    y = full[:, :, left : left + v_out]
    if bias is not None:
        y = y + bias.data[None, :, None]

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (left, right))) if left or right else g
        cols = _im2col(gp, kernel, stride, v)
        gx = gk = gb = None
        if x.requires_grad:
            gx = (cols @ wmat.T).reshape(b, v, c_in).transpose(0, 2, 1)
        if k.requires_grad:
            gk = (xmat.T @ cols).reshape(kd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gk, gb

    parents = (x, k) if bias is None else (x, k, bias)
    return _node(y, parents, backward, "tconv1d")


# ----------------------------------------------------------------------------
# normalisation and activations


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardise each channel over its length, then apply a per-channel affine map."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    xd = x.data
    c = xd.shape[-2]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ValueError(f"layer_norm: gain/bias must have shape ({c},)")
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data[:, None]
    y = xhat * gd + bias.data[:, None]

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 2)) + (g.ndim - 1,)
        if gain.requires_grad:
            gg = (g * xhat).sum(axis=red)
        if bias.requires_grad:
            gb = g.sum(axis=red)
        return gx, gg, gb

    return _node(y, (x, gain, bias), backward, "layer_norm")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x[..., n_in] @ w[n_out, n_in].T + b``."""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight n_in {w.shape[1]}")
    xd, wd = x.data, w.data
    y = xd @ wd.T
    if b is not None:
        y = y + b.data

    def backward(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.reshape(-1, g.shape[-1]).T @ xd.reshape(-1, xd.shape[-1]) if w.requires_grad else None
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b is not None and b.requires_grad else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, parents, backward, "linear")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), backward, "softmax")


def log_clamped(x: Tensor, floor: float = 1e-12) -> Tensor:
    """``log(max(x, floor))``; zero gradient where clamped."""
    xd = x.data
    live = xd > floor
    safe = np.where(live, xd, floor)
    return _node(np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),), "log")


# ----------------------------------------------------------------------------
# channel-level ops used by the attention gates and losses


def channel_stats(x: Tensor) -> Tensor:
    """Map ``(B, C, V)`` to ``(B, 4C)``: (mean, variance, max, min) per channel."""
    xd = x.data
    squeeze = xd.ndim == 2
    if squeeze:
        xd = xd[None]
    b, c, v = xd.shape
    mu = xd.mean(axis=-1)
    xc = xd - mu[..., None]
    var = (xc * xc).mean(axis=-1)
    imax = xd.argmax(axis=-1)
    imin = xd.argmin(axis=-1)
    bi, ci = np.meshgrid(np.arange(b), np.arange(c), indexing="ij")
    stats = np.stack([mu, var, xd[bi, ci, imax], xd[bi, ci, imin]], axis=-1).reshape(b, 4 * c)

    def backward(g):
        g = g.reshape(b, c, 4)
        gx = g[..., 0:1] / v + g[..., 1:2] * 2.0 * xc / v
        np.add.at(gx, (bi, ci, imax), g[..., 2])
        np.add.at(gx, (bi, ci, imin), g[..., 3])
        return (gx[0] if squeeze else gx,)

    return _node(stats[0] if squeeze else stats, (x,), backward, "channel_stats")


def scale_channels(x: Tensor, w: Tensor) -> Tensor:
    """Multiply channel ``i`` of ``x[..., C, V]`` by ``w[..., i]``."""
    if x.shape[:-1] != w.shape:
        raise ValueError(f"scale_channels: weights {w.shape} do not match map {x.shape}")
    xd, wd = x.data, w.data
    y = xd * wd[..., None]

    def backward(g):
        gx = g * wd[..., None] if x.requires_grad else None
        gw = (g * xd).sum(axis=-1) if w.requires_grad else None
        return gx, gw

    return _node(y, (x, w), backward, "scale_channels")


def select_channels(x: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=int)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[..., index, :] = g
        return (out,)

    return _node(x.data[..., index, :], (x,), backward, "select_channels")


def group_norms(x: Tensor, axis: int) -> Tensor:
    """Euclidean norms along ``axis``; subgradient 0 at the origin."""
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=axis))

    def backward(g):
        nn = np.expand_dims(n, axis)
        safe = np.where(nn > 0, nn, 1.0)
        return (np.where(nn > 0, xd / safe, 0.0) * np.expand_dims(g, axis),)

    return _node(n, (x,), backward, "group_norms")


def row_cosine(a: Tensor, b: Tensor, floor: float = 1e-12) -> Tensor:
    """``G[i, j] = <a_i, b_j> / max(|a_i| |b_j|, floor)`` for rows of ``(..., C, V)`` maps."""
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise ValueError(f"row_cosine: shape mismatch {ad.shape} vs {bd.shape}")
    na = np.sqrt((ad * ad).sum(axis=-1))
    nb = np.sqrt((bd * bd).sum(axis=-1))
    prod = na[..., :, None] * nb[..., None, :]
    live = prod > floor
    denom = np.where(live, prod, floor)
    dot = ad @ np.swapaxes(bd, -1, -2)
    out = dot / denom

    def backward(g):
        m = g / denom
        # only unclamped entries depend on the norms
        gl = np.where(live, g * out, 0.0)
        ga = gb = None
        if a.requires_grad:
            na2 = np.where(na > 0, na * na, 1.0)
            ga = m @ bd - (gl.sum(axis=-1) / na2)[..., None] * ad
        if b.requires_grad:
            nb2 = np.where(nb > 0, nb * nb, 1.0)
            gb = np.swapaxes(m, -1, -2) @ ad - (gl.sum(axis=-2) / nb2)[..., None] * bd
        return ga, gb

    return _node(out, (a, b), backward, "row_cosine")


# ----------------------------------------------------------------------------
# gradient verification


def numerical_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences with per-coordinate step ``h * (1 + |x_i|)``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * (1.0 + abs(orig))
        flat[i] = orig + step
        fp = float(f(Tensor(x)).data)
        flat[i] = orig - step
        fm = float(f(Tensor(x)).data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Largest ``|g_a - g_n| / max(1, |g_a| + |g_n|)`` over the coordinates of ``x``."""
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x, requires_grad=True)
    f(xt).backward()
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x)
    numeric = numerical_grad(f, x, h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0
