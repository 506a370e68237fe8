"""Dense-tensor reverse-mode automatic differentiation.

Tensors wrap row-major numpy arrays (rank <= 4). Operations executed while a
Tape is active append nodes in construction order, which is already a
topological order, so Tape.backward walks the list in reverse and accumulates
gradients. Leaf tensors created with requires_grad=True keep their gradient
across backward calls until zero_grad(); intermediate gradients live only for
the duration of one backward pass.

Training runs in float32; gradient checking builds float64 graphs because
central-difference tolerances are unreachable in single precision.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

_TAPE_STACK: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim > 4:
            raise ValueError(f"rank {arr.ndim} exceeds supported rank 4")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other): return add(self, _as_tensor(other, self.dtype))
    def __radd__(self, other): return add(_as_tensor(other, self.dtype), self)
    def __mul__(self, other): return mul(self, _as_tensor(other, self.dtype))
    def __rmul__(self, other): return mul(_as_tensor(other, self.dtype), self)
    def __neg__(self): return scale(self, -1.0)
    def __sub__(self, other): return add(self, scale(_as_tensor(other, self.dtype), -1.0))
    def __matmul__(self, other): return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Ordered record of operations for one reverse traversal."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable[[np.ndarray], Sequence[np.ndarray | None]]]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def _tracks(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._produced

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._nodes.append((out, inputs, backward))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of every requires_grad tensor reachable from loss."""
        if loss.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ValueError("loss was not produced on this tape")
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._nodes):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            grads = backward_fn(g)
            for inp, gi in zip(inputs, grads):
                if gi is None or not self._tracks(inp):
                    continue
                if inp.requires_grad:
                    inp._accumulate(gi)
                else:
                    key = id(inp)
                    if key in pending:
                        pending[key] += gi
                    else:
                        pending[key] = np.array(gi, copy=True)


def _active() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _maybe_record(out: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = _active()
    if tape is not None and any(tape._tracks(t) for t in inputs):
        tape._record(out, inputs, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    return _maybe_record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _maybe_record(out, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(factor))
    return _maybe_record(out, (a,), lambda g: (g * factor,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.data.ndim == 2:
        k = a.shape[-1]
        a2 = a.data.reshape(-1, k)
        out_data = a2 @ b.data
        out = Tensor(out_data.reshape(a.shape[:-1] + (b.shape[1],)))

        def backward(g):
            g2 = g.reshape(-1, b.shape[1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _maybe_record(out, (a, b), backward)
    if a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g

    return _maybe_record(out, (a, b), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    inverse = tuple(np.argsort(axes))
    return _maybe_record(out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return _maybe_record(out, (a,), lambda g: (g.reshape(a.shape),))


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    return _maybe_record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).astype(a.dtype),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _maybe_record(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean, unit variance over the last axis, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead).reshape(gain.shape)
        dbias = g.sum(axis=lead).reshape(bias.shape)
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _maybe_record(out, (x, gain, bias), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    d = x.data
    u = _GELU_C * (d + 0.044715 * d**3)
    t = np.tanh(u)
    out = Tensor(0.5 * d * (1.0 + t))

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * d * d)
        return (g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * du),)

    return _maybe_record(out, (x,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup. Gradients scatter back into table rows via a one-hot product."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding id out of range for table of {table.shape[0]} rows")
    out = Tensor(table.data[ids])

    def backward(g):
        flat_ids = ids.reshape(-1)
        g2 = g.reshape(len(flat_ids), table.shape[1])
        onehot = np.zeros((len(flat_ids), table.shape[0]), dtype=g2.dtype)
        onehot[np.arange(len(flat_ids)), flat_ids] = 1.0
        return (onehot.T @ g2,)

    return _maybe_record(out, (table,), backward)


def slice_rows(table: Tensor, n: int) -> Tensor:
    """First n rows of a 2-D tensor (positional embeddings for a prefix)."""
    out = Tensor(table.data[:n].copy())

    def backward(g):
        full = np.zeros_like(table.data)
        full[:n] = g
        return (full,)

    return _maybe_record(out, (table,), backward)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """x[b, idx[b], :] for each batch row b: [B, T, H] -> [B, H]."""
    idx = np.asarray(idx)
    batch = np.arange(x.shape[0])
    out = Tensor(x.data[batch, idx])

    def backward(g):
        full = np.zeros_like(x.data)
        full[batch, idx] = g
        return (full,)

    return _maybe_record(out, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode. p = 0 is the identity."""
    if p == 0.0:
        return x
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype)
    factor = x.data.dtype.type(1.0 / (1.0 - p))
    out = Tensor(x.data * keep * factor)
    return _maybe_record(out, (x,), lambda g: (g * keep * factor,))


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_id: int | None = None) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id."""
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
        raise ValueError(f"cross_entropy expects [N, V] logits and [N] targets, got {logits.shape} and {targets.shape}")
    if ignore_id is None:
        valid = np.ones(targets.shape[0], dtype=bool)
    else:
        valid = targets != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no contributing positions: every target is ignored")
    checked = targets[valid]
    if checked.min() < 0 or checked.max() >= logits.shape[1]:
        raise ValueError(f"target id out of range for vocabulary of {logits.shape[1]}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    safe_targets = np.where(valid, targets, 0)
    picked = logp[np.arange(targets.shape[0]), safe_targets]
    loss_val = -(picked * valid).sum() / n_valid
    out = Tensor(np.asarray(loss_val, dtype=logits.dtype))

    def backward(g):
        p = np.exp(logp)
        p[np.arange(targets.shape[0]), safe_targets] -= 1.0
        p *= (valid / n_valid)[:, None] * g
        return (p.astype(logits.dtype),)

    return _maybe_record(out, (logits,), backward)


def finite_difference_check(
    f: Callable[[], Tensor],
    tensors: Iterable[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    f must rebuild its graph on every call from the given tensors, which are
    perturbed in place one coordinate at a time. Use float64 tensors.

    The relative-error denominator is floored at 1e-5: for a loss of order 1
    the central difference itself carries ~1e-11 of cancellation noise, so
    relative comparison against gradients smaller than the floor would only
    measure that noise.
    """
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    worst = 0.0
    for t in tensors:
        ad = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        ad_flat = ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(fd), abs(float(ad_flat[i])), 1e-5)
            worst = max(worst, abs(fd - float(ad_flat[i])) / denom)
        t.zero_grad()
        if t.requires_grad:
            t.grad = ad
    return worst


__all__ = [
    "Tensor",
    "Tape",
    "add",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "sum_all",
    "softmax",
    "layer_norm",
    "gelu",
    "embedding",
    "slice_rows",
    "take_rows",
    "dropout",
    "cross_entropy",
    "finite_difference_check",
]
