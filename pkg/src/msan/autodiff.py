"""Reverse-mode automatic differentiation over dense float64 tensors.

A ``Tape`` records one training step's operations; ``Tape.backward`` replays
them once, in reverse insertion order, and accumulates gradients into the
tensors registered with ``Tape.watch``. Parameters live outside the tape:
after ``backward`` the tape is discarded and the watched tensors are unbound,
so forward passes with unbound tensors are plain numpy evaluation.

The op set is the minimum needed for adversarial MLP training, including the
gradient reversal operator ``grl`` (identity forward, negated and optionally
scaled gradient backward).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "matmul",
    "add_bias",
    "relu",
    "tanh",
    "grl",
    "softmax_cross_entropy",
    "mse",
    "sum_all",
    "add",
    "scale",
    "vstack",
    "slice_rows",
    "grad_check",
    "grl_lambda_schedule",
]


class Tensor:
    """Dense float64 array with an optional gradient and tape handle."""

    __slots__ = ("array", "grad", "tape", "node_id")

    def __init__(self, array):
        arr = np.ascontiguousarray(array, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.array = arr
        self.grad: np.ndarray | None = None
        self.tape: "Tape | None" = None
        self.node_id: int | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def size(self) -> int:
        return self.array.size

    def item(self) -> float:
        if self.array.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.array.shape}")
        return float(self.array.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.array.shape}, tracked={self.tape is not None})"


class _Node:
    __slots__ = ("op", "input_ids", "out_id", "backward_fn")

    def __init__(self, op: str, input_ids: list[int], out_id: int, backward_fn):
        self.op = op
        self.input_ids = input_ids
        self.out_id = out_id
        self.backward_fn = backward_fn


class Tape:
    """Append-only record of one step's operations.

    Node ids are strictly increasing and every input id of a node is smaller
    than its output id, so a single reverse sweep visits each node exactly
    once with its full downstream gradient already accumulated.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._next_id = 0
        self._watched: list[tuple[Tensor, int]] = []
        self._closed = False

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def _enroll(self, t: Tensor) -> int:
        # Re-binding a tensor that sits on a dead tape is fine; two live
        # tapes never share tensors by contract (single-threaded steps).
        if self._closed:
            raise ValueError("tape already consumed by backward")
        if t.tape is not self or t.node_id is None:
            t.tape = self
            t.node_id = self._new_id()
        return t.node_id

    def watch(self, t: Tensor) -> Tensor:
        """Register a parameter: backward will write its gradient (zeros if
        the loss does not reach it)."""
        nid = self._enroll(t)
        if not any(w is t for w, _ in self._watched):
            self._watched.append((t, nid))
        return t

    def record(self, op: str, inputs: Sequence[Tensor], out_array: np.ndarray,
               backward_fn: Callable[[np.ndarray], list[np.ndarray | None]]) -> Tensor:
        input_ids = [self._enroll(t) for t in inputs]
        out = Tensor(out_array)
        out.tape = self
        out.node_id = self._new_id()
        self._nodes.append(_Node(op, input_ids, out.node_id, backward_fn))
        return out

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(param) into every watched tensor's ``grad``.

        Repeating zero-grad + backward on the same tape gives identical
        gradients; gradients add across calls when not zeroed.
        """
        if loss.tape is not self or loss.node_id is None:
            raise ValueError("loss tensor is not on this tape")
        if loss.array.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.array.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.array)}
        for node in reversed(self._nodes):
            g = grads.get(node.out_id)
            if g is None:
                continue
            for tid, ig in zip(node.input_ids, node.backward_fn(g)):
                if ig is None:
                    continue
                acc = grads.get(tid)
                grads[tid] = ig if acc is None else acc + ig
        for t, nid in self._watched:
            g = grads.get(nid)
            if g is None:
                g = np.zeros_like(t.array)
            if t.grad is None:
                t.grad = np.array(g, copy=True)
            else:
                t.grad = t.grad + g
        # Unbind watched parameters: the tape is single-use, parameters
        # must come out as plain values again.
        for t, _ in self._watched:
            if t.tape is self:
                t.tape = None
                t.node_id = None
        self._closed = True


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _live_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None and not t.tape._closed:
            if tape is not None and t.tape is not tape:
                raise ValueError("inputs belong to different tapes")
            tape = t.tape
    return tape


def matmul(a, b) -> Tensor:
    """Matrix product [m,k] @ [k,n] -> [m,n]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.ndim != 2 or b.array.ndim != 2 or a.array.shape[1] != b.array.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.array.shape} x {b.array.shape}")
    out = a.array @ b.array
    tape = _live_tape(a, b)
    if tape is None:
        return Tensor(out)
    aa, ba = a.array, b.array

    def bw(g):
        return [g @ ba.T, aa.T @ g]

    return tape.record("matmul", [a, b], out, bw)


def add_bias(a, b) -> Tensor:
    """Row-broadcast addition of a bias vector: [m,n] + [n]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.ndim != 2 or b.array.ndim != 1 or a.array.shape[1] != b.array.shape[0]:
        raise ShapeError(
            f"add_bias: incompatible shapes {a.array.shape} + {b.array.shape}")
    out = a.array + b.array
    tape = _live_tape(a, b)
    if tape is None:
        return Tensor(out)

    def bw(g):
        return [g, g.sum(axis=0)]

    return tape.record("add_bias", [a, b], out, bw)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.array, 0.0)
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)
    mask = (a.array > 0.0).astype(np.float64)

    def bw(g):
        return [g * mask]

    return tape.record("relu", [a], out, bw)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.array)
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)

    def bw(g):
        return [g * (1.0 - out * out)]

    return tape.record("tanh", [a], out, bw)


def grl(a, lam: float = 1.0) -> Tensor:
    """Gradient reversal: identity forward, -lam * upstream gradient backward."""
    if lam < 0:
        raise ValueError(f"grl: lambda must be >= 0, got {lam}")
    a = _as_tensor(a)
    out = a.array  # forward is bit-identical by construction
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)

    def bw(g):
        return [(-lam) * g]

    return tape.record("grl", [a], out, bw)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[label].

    Backward produces (softmax - onehot) / m for the logits.
    """
    logits = _as_tensor(logits)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.array.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-d, got {logits.array.shape}")
    m, c = logits.array.shape
    if m < 1 or y.shape[0] != m:
        raise ValueError(
            f"softmax_cross_entropy: {m} logit rows vs {y.shape[0]} labels")
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {c})")
    z = logits.array - logits.array.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = np.array([-logp[np.arange(m), y].mean()])
    tape = _live_tape(logits)
    if tape is None:
        return Tensor(out)
    p = np.exp(logp)

    def bw(g):
        d = p.copy()
        d[np.arange(m), y] -= 1.0
        return [(g.reshape(-1)[0] / m) * d]

    return tape.record("softmax_cross_entropy", [logits], out, bw)


def mse(a, b) -> Tensor:
    """Mean squared difference of two same-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.shape != b.array.shape:
        raise ShapeError(f"mse: shape mismatch {a.array.shape} vs {b.array.shape}")
    diff = a.array - b.array
    n = diff.size
    out = np.array([(diff * diff).sum() / n])
    tape = _live_tape(a, b)
    if tape is None:
        return Tensor(out)

    def bw(g):
        s = 2.0 * g.reshape(-1)[0] / n
        return [s * diff, -s * diff]

    return tape.record("mse", [a, b], out, bw)


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    out = np.array([a.array.sum()])
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)
    shape = a.array.shape

    def bw(g):
        return [np.full(shape, g.reshape(-1)[0])]

    return tape.record("sum_all", [a], out, bw)


def add(a, b) -> Tensor:
    """Elementwise sum of two same-shape tensors (used to combine losses)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.shape != b.array.shape:
        raise ShapeError(f"add: shape mismatch {a.array.shape} vs {b.array.shape}")
    out = a.array + b.array
    tape = _live_tape(a, b)
    if tape is None:
        return Tensor(out)

    def bw(g):
        return [g, g]

    return tape.record("add", [a, b], out, bw)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    out = c * a.array
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)

    def bw(g):
        return [c * g]

    return tape.record("scale", [a], out, bw)


def vstack(a, b) -> Tensor:
    """Stack two 2-d tensors row-wise; backward splits the gradient."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.ndim != 2 or b.array.ndim != 2 or a.array.shape[1] != b.array.shape[1]:
        raise ShapeError(f"vstack: incompatible shapes {a.array.shape}, {b.array.shape}")
    out = np.vstack([a.array, b.array])
    tape = _live_tape(a, b)
    if tape is None:
        return Tensor(out)
    na = a.array.shape[0]

    def bw(g):
        return [g[:na], g[na:]]

    return tape.record("vstack", [a, b], out, bw)


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    if a.array.ndim != 2:
        raise ShapeError(f"slice_rows: expected 2-d tensor, got {a.array.shape}")
    if not (0 <= start <= stop <= a.array.shape[0]):
        raise ValueError(f"slice_rows: bad range [{start}, {stop}) for {a.array.shape[0]} rows")
    out = a.array[start:stop].copy()
    tape = _live_tape(a)
    if tape is None:
        return Tensor(out)
    shape = a.array.shape

    def bw(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return [full]

    return tape.record("slice_rows", [a], out, bw)


def grad_check(f, x, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor. The relative error per coordinate
    is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if h <= 0:
        raise ValueError(f"grad_check: h must be positive, got {h}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    tape = Tape()
    xt = Tensor(x.copy())
    tape.watch(xt)
    tape.backward(f(xt))
    analytic = xt.grad.reshape(-1)
    flat = x.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        fp = f(Tensor(xp.reshape(x.shape))).item()
        fm = f(Tensor(xm.reshape(x.shape))).item()
        numeric[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grl_lambda_schedule(progress: float) -> float:
    """Optional warm-up schedule 2/(1+exp(-10 p)) - 1 for p in [0, 1].

    Off by default; training uses a constant lambda unless the caller wires
    this in explicitly.
    """
    p = min(max(float(progress), 0.0), 1.0)
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0
