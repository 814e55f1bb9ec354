"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Everything downstream (the generator, the discriminator, the training loop)
is built from the handful of primitives in this module.  A forward pass run
inside a ``with Tape() as tape:`` block records every operation in execution
order; ``backward(tape, loss)`` then walks the record once in reverse and
accumulates gradients into the trainable :class:`Parameter` leaves.  Outside
a tape the same functions just compute values, which keeps inference cheap.

All arithmetic is 64-bit: the finite-difference gradient checks that anchor
the test suite need the headroom, and nothing here runs at a scale where
memory matters.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, UsageError

# Clamp applied inside both cross-entropy losses and to decode probabilities
# before taking logs, so that no exported operation can return NaN/Inf.
PROB_EPS = 1e-12


class Tensor:
    """A dense row-major float64 array with shape metadata."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """A Tensor with a gradient accumulator and a trainable flag.

    ``grad`` always has the same shape as ``data``.  ``backward`` adds into
    ``grad`` (it never overwrites), so per-example gradients accumulate until
    :func:`zero_grad` is called.  A Parameter with ``trainable=False`` never
    receives gradient and is never moved by :func:`adam_step`.
    """

    __slots__ = ("grad", "trainable", "name")

    def __init__(self, data, name: str = "", trainable: bool = True) -> None:
        super().__init__(data)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable
        self.name = name

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


@dataclass
class _TapeOp:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of executed differentiable operations.

    Operations are appended as they execute, so the record is topologically
    ordered by construction: every op appears after the ops that produced its
    inputs.  A tape is single-owner; nesting tapes is a usage error.
    """

    def __init__(self) -> None:
        self.ops: list[_TapeOp] = []
        self._produced: set[int] = set()
        self._leaf_params: dict[int, Parameter] = {}

    def __enter__(self) -> "Tape":
        if _STATE.__dict__.get("tape") is not None:
            raise UsageError("a Tape is already active; tapes do not nest")
        _STATE.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _STATE.tape = None

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self.ops.append(_TapeOp(out, inputs, backward_fn))
        self._produced.add(id(out))
        for t in inputs:
            if id(t) not in self._produced and isinstance(t, Parameter):
                self._leaf_params[id(t)] = t


_STATE = threading.local()


def _active_tape() -> Tape | None:
    return _STATE.__dict__.get("tape")


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def constant(data) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shaped tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data)
    return _record(out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)
    return _record(out, (a,), lambda g: (g * c,))


def add_n(parts: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors; the usual way per-token losses accumulate."""
    parts = list(parts)
    if not parts:
        raise ValueError("add_n of an empty sequence")
    out = Tensor(sum(p.data for p in parts))
    n = len(parts)
    return _record(out, tuple(parts), lambda g: (g,) * n)


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """W @ x + b for a matrix W (m, n), vector x (n,) and bias b (m,)."""
    if w.data.ndim != 2 or x.data.ndim != 1 or b.data.ndim != 1:
        raise DimensionError(
            f"affine: expected matrix/vector/vector, got {w.shape}/{x.shape}/{b.shape}"
        )
    m, n = w.shape
    if x.shape != (n,) or b.shape != (m,):
        raise DimensionError(
            f"affine: W is {w.shape} but x is {x.shape} and b is {b.shape}"
        )
    out = Tensor(w.data @ x.data + b.data)

    def backward_fn(g):
        return (np.outer(g, x.data), w.data.T @ g, g)

    return _record(out, (w, x, b), backward_fn)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors in order; output length is the sum of part lengths."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat of an empty part list")
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat: parts must be vectors, got shape {p.shape}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _record(out, tuple(parts), backward_fn)


def column(m: Tensor, t: int) -> Tensor:
    """Extract column t of a matrix as a fresh vector."""
    if m.data.ndim != 2:
        raise DimensionError(f"column: expected a matrix, got shape {m.shape}")
    out = Tensor(m.data[:, t].copy())

    def backward_fn(g):
        gm = np.zeros_like(m.data)
        gm[:, t] = g
        return (gm,)

    return _record(out, (m,), backward_fn)


def gather_columns(w: Tensor, indices, skip_index: int | None = None) -> Tensor:
    """Select columns of ``w`` by index, as ``w @ onehot`` without the one-hots.

    ``skip_index`` pins one column: lookups still read it, but no gradient is
    ever accumulated for it (used to keep the PAD embedding at zero).
    """
    idx = np.asarray(indices, dtype=np.int64)
    if w.data.ndim != 2:
        raise DimensionError(f"gather_columns: expected a matrix, got shape {w.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[1]):
        raise DimensionError(
            f"gather_columns: index out of range for {w.shape[1]} columns: "
            f"[{idx.min()}, {idx.max()}]"
        )
    out = Tensor(w.data[:, idx])

    def backward_fn(g):
        gw = np.zeros_like(w.data)
        if skip_index is None:
            np.add.at(gw.T, idx, g.T)
        else:
            keep = idx != skip_index
            np.add.at(gw.T, idx[keep], g[:, keep].T)
        return (gw,)

    return _record(out, (w,), backward_fn)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    return _record(out, (x,), lambda g: (g * (x.data > 0.0),))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = Tensor(s)
    return _record(out, (x,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign so neither exp overflows.
    pos = z >= 0
    result = np.empty_like(z)
    result[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    result[~pos] = ez / (1.0 + ez)
    return result


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t)
    return _record(out, (x,), lambda g: (g * (1.0 - t * t),))


def softmax(x: Tensor) -> Tensor:
    """Probability vector over a non-empty input vector, max-subtracted."""
    if x.data.ndim != 1:
        raise DimensionError(f"softmax: expected a vector, got shape {x.shape}")
    if x.data.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(x.data - x.data.max())
    p = e / e.sum()
    out = Tensor(p)

    def backward_fn(g):
        return (p * (g - np.dot(g, p)),)

    return _record(out, (x,), backward_fn)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax, "tanh": tanh}


def activation(kind: str, x: Tensor) -> Tensor:
    """Apply one of relu / sigmoid / softmax / tanh by name."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation kind {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def categorical_ce(prediction: Tensor, target) -> Tensor:
    """-sum(t * log p) against a one-hot target; p clamped at PROB_EPS."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != prediction.shape:
        raise DimensionError(
            f"categorical_ce: prediction {prediction.shape} vs target {t.shape}"
        )
    p = prediction.data
    pc = np.maximum(p, PROB_EPS)
    out = Tensor(-(t * np.log(pc)).sum())

    def backward_fn(g):
        gp = np.where(p >= PROB_EPS, -t / pc, 0.0)
        return (g * gp,)

    return _record(out, (prediction,), backward_fn)


def binary_ce(prediction: Tensor, target) -> Tensor:
    """Mean binary cross-entropy; predictions clamped into [eps, 1 - eps]."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != prediction.shape:
        raise DimensionError(
            f"binary_ce: prediction {prediction.shape} vs target {t.shape}"
        )
    p = prediction.data
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    n = max(pc.size, 1)
    out = Tensor(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).sum() / n)

    def backward_fn(g):
        inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
        gp = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0) / n
        return (g * gp,)

    return _record(out, (prediction,), backward_fn)


def mse(prediction: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != prediction.shape:
        raise DimensionError(f"mse: prediction {prediction.shape} vs target {t.shape}")
    d = prediction.data - t
    n = max(d.size, 1)
    out = Tensor((d * d).sum() / n)
    return _record(out, (prediction,), lambda g: (g * 2.0 * d / n,))


_LOSSES = {"categorical_ce": categorical_ce, "binary_ce": binary_ce, "mse": mse}


def loss_eval(kind: str, prediction: Tensor, target) -> Tensor:
    """Evaluate a named loss; the result is a scalar recorded on the tape."""
    try:
        fn = _LOSSES[kind]
    except KeyError:
        raise ConfigError(f"unknown loss kind {kind!r}") from None
    return fn(prediction, target)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every trainable Parameter on the tape.

    The tape is walked once in reverse execution order.  Intermediate
    gradients live in a scratch dict and are freed as soon as their producer
    op has consumed them; leaf Parameters receive their total at the end.
    Non-trainable Parameters are left untouched, which is what lets gradients
    flow *through* a frozen model into an upstream trainable one.
    """
    if id(loss) not in tape._produced:
        raise UsageError("loss was not produced on this tape")
    if loss.shape != ():
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for op in reversed(tape.ops):
        g = grads.pop(id(op.out), None)
        if g is None:
            continue
        for parent, pg in zip(op.inputs, op.backward(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for pid, param in tape._leaf_params.items():
        if param.trainable and pid in grads:
            param.grad += grads[pid]


def zero_grad(params) -> None:
    for p in params:
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[int, np.ndarray] = field(default_factory=dict)
    second_moment: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update over ``params`` from their ``grad``s.

    Non-trainable parameters are skipped entirely: value, moments and all.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p in params:
        if not p.trainable:
            continue
        key = id(p)
        m = state.first_moment.get(key)
        if m is None:
            m = state.first_moment[key] = np.zeros_like(p.data)
        v = state.second_moment.get(key)
        if v is None:
            v = state.second_moment[key] = np.zeros_like(p.data)
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------


@dataclass
class GradientCheckEntry:
    name: str
    max_relative_error: float
    passed: bool


@dataclass
class GradientCheckReport:
    entries: list[GradientCheckEntry]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[str]:
        return [e.name for e in self.entries if not e.passed]

    @property
    def max_relative_error(self) -> float:
        return max((e.max_relative_error for e in self.entries), default=0.0)


def gradient_check(
    forward: Callable[[], Tensor],
    params: Sequence[Parameter],
    tolerance: float,
    h: float = 1e-6,
) -> GradientCheckReport:
    """Compare taped gradients against central finite differences.

    ``forward`` must rebuild the loss from the parameters' current values on
    every call.  It is run once under a tape for the analytic gradients, then
    twice per parameter entry (+h / -h) without one.  Per parameter the report
    holds max over entries of |analytic - numeric| / (|analytic| + |numeric|
    + 1e-12); the check passes iff every parameter stays under ``tolerance``.
    """
    if _active_tape() is not None:
        raise UsageError("gradient_check must not run under an active tape")
    params = list(params)
    zero_grad(params)
    with Tape() as tape:
        loss = forward()
    backward(tape, loss)
    analytic = {id(p): p.grad.copy() for p in params}

    entries = []
    for p in params:
        flat = p.data.reshape(-1)
        a = analytic[id(p)].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = forward().item()
            flat[i] = orig - h
            down = forward().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(a[i] - numeric) / (abs(a[i]) + abs(numeric) + 1e-12)
            if err > worst:
                worst = err
        entries.append(GradientCheckEntry(p.name, worst, worst < tolerance))
    return GradientCheckReport(entries, tolerance)
