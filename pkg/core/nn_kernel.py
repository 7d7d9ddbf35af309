"""
Numeric Kernel

Dense float64 tensors on top of numpy, a gradient tape recording the
operations applied to watched tensors, the LSTM cell, activations, losses
and the Adam optimizer. Every operation works on a trailing feature axis and
any number of leading batch axes, so the same code serves single-instance
decoding and padded batch training.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import GradientError, ShapeError
from .log_utils import get_logger

logger = get_logger("nlg.kernel")

DTYPE = np.float64
PROB_FLOOR = 1e-12
GATES = ("input", "forget", "output", "candidate")

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    """A float64 array that may take part in a recorded graph."""

    __slots__ = ("value", "name")

    def __init__(self, value: ArrayLike, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Gradient tape
# ---------------------------------------------------------------------------

_local = threading.local()


def _tape_stack() -> List["GradientTape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional["GradientTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradientTape:
    """Records operations on watched tensors while active.

    Usage:
        with GradientTape() as tape:
            tape.watch(*params)
            loss = ...
        grads = backward(tape, loss)
    """

    def __init__(self):
        self._watched: Dict[int, Tensor] = {}
        self._tracked: Dict[int, Tensor] = {}
        self._nodes: List[Tuple[Tensor, Tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradientTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._watched[id(t)] = t
            self._tracked[id(t)] = t

    def is_tracked(self, tensor: Tensor) -> bool:
        return id(tensor) in self._tracked

    def record(self, out: Tensor, parents: Tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._nodes.append((out, parents, backward_fn))
        self._tracked[id(out)] = out

    def __len__(self) -> int:
        return len(self._nodes)

    def gradient(self, loss: Tensor) -> "Gradients":
        return backward(self, loss)


class Gradients:
    """Result of a backward pass, indexed by tensor."""

    def __init__(self, grads: Dict[int, np.ndarray], tape: GradientTape):
        self._grads = grads
        self._tape = tape

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        key = id(tensor)
        if key in self._grads:
            return self._grads[key]
        if self._tape.is_tracked(tensor):
            return np.zeros_like(tensor.value)
        raise GradientError(
            "Gradient requested for a tensor the tape never recorded",
            field=tensor.name,
            suggestions=["Call tape.watch() on parameters before the forward pass"],
        )

    def for_params(self, params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
        return {name: self[t] for name, t in params.items()}


def backward(tape: GradientTape, loss: Tensor) -> Gradients:
    """Reverse-mode derivatives of a scalar loss over the recorded graph."""
    if not tape.is_tracked(loss):
        raise GradientError("Loss was not produced by recorded operations", field=loss.name)
    if loss.value.size != 1:
        raise ShapeError("Loss must be a scalar", expected=(), actual=loss.shape)

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for out, parents, backward_fn in reversed(tape._nodes):
        g = grads.get(id(out))
        if g is None:
            continue
        for parent, pg in zip(parents, backward_fn(g)):
            if pg is None or not tape.is_tracked(parent):
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return Gradients(grads, tape)


def _record(value: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(tape.is_tracked(p) for p in parents):
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Multiply a (..., n) by a matrix b (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul shapes do not conform", expected=f"(..., {b.shape[0] if b.value.ndim == 2 else '?'})",
                         actual=f"{a.shape} @ {b.shape}")

    def backward_fn(g):
        ga = g @ b.value.T
        gb = a.value.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _record(a.value @ b.value, (a, b), backward_fn)


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: ArrayLike) -> Tensor:
    """Elementwise logistic function, overflow-free for large |x|."""
    x = as_tensor(x)
    e = np.exp(-np.abs(x.value))
    y = np.where(x.value >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


def softmax(logits: ArrayLike, axis: int = -1) -> Tensor:
    """Max-shifted softmax along one axis."""
    logits = as_tensor(logits)
    if logits.value.size == 0 or logits.value.ndim == 0:
        raise ShapeError("softmax of an empty input", actual=logits.shape)
    shifted = logits.value - np.max(logits.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    return _record(y, (logits,),
                   lambda g: (y * (g - np.sum(g * y, axis=axis, keepdims=True)),))


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([p.value for p in parts], axis=axis), tuple(parts),
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_last(x: ArrayLike, start: int, stop: int) -> Tensor:
    """Columns start:stop of the trailing axis."""
    x = as_tensor(x)

    def backward_fn(g):
        grad = np.zeros_like(x.value)
        grad[..., start:stop] = g
        return (grad,)

    return _record(x.value[..., start:stop], (x,), backward_fn)


def take_rows(table: Tensor, ids: Union[np.ndarray, Sequence[int]]) -> Tensor:
    """Embedding lookup: rows of a matrix selected by integer ids."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("Row id out of range", expected=f"[0, {table.shape[0]})",
                         actual=f"[{idx.min()}, {idx.max()}]")

    def backward_fn(g):
        grad = np.zeros_like(table.value)
        np.add.at(grad, idx, g)
        return (grad,)

    return _record(table.value[idx], (table,), backward_fn)


def reshape(x: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _record(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    if not tensors:
        raise ShapeError("Nothing to stack")
    shape = tensors[0].shape
    expanded = [reshape(t, shape[:axis] + (1,) + shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def reduce_sum(x: ArrayLike, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape),)

    return _record(np.sum(x.value, axis=axis), (x,), backward_fn)


def masked_update(mask: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    """Rows where mask is 1 take the new value, the rest keep the old one."""
    m = np.asarray(mask, dtype=DTYPE)
    return _record(m * new.value + (1.0 - m) * old.value, (new, old),
                   lambda g: (_unbroadcast(g * m, new.shape), _unbroadcast(g * (1.0 - m), old.shape)))


def cross_entropy(distribution: Tensor, targets: Union[int, Sequence[int], np.ndarray],
                  mask: Optional[np.ndarray] = None) -> Tensor:
    """Summed negative log probability of the target classes.

    Accepts one distribution (V,) with an integer target, or a batch (B, V)
    with B targets and an optional 0/1 mask. Probabilities below 1e-12 are
    clamped and the event is logged.
    """
    probs = distribution.value
    p2 = probs.reshape(1, -1) if probs.ndim == 1 else probs
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if t.shape[0] != p2.shape[0]:
        raise ShapeError("One target per distribution required", expected=p2.shape[0], actual=t.shape[0])
    if t.size and (t.min() < 0 or t.max() >= p2.shape[1]):
        raise ShapeError("Target index out of range", expected=f"[0, {p2.shape[1]})", actual=t.tolist())
    m = np.ones(t.shape[0], dtype=DTYPE) if mask is None else np.asarray(mask, dtype=DTYPE)
    rows = np.arange(t.shape[0])
    picked = p2[rows, t]
    clamped = np.maximum(picked, PROB_FLOOR)
    n_clamped = int(np.sum((picked < PROB_FLOOR) & (m > 0)))
    if n_clamped:
        logger.warning(f"Clamped {n_clamped} target probabilities at {PROB_FLOOR}")
    value = -np.sum(m * np.log(clamped))

    def backward_fn(g):
        grad = np.zeros_like(p2)
        grad[rows, t] = -g * m / clamped
        return (grad.reshape(probs.shape),)

    return _record(np.asarray(value), (distribution,), backward_fn)


def binary_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Summed elementwise binary cross-entropy of probabilities against 0/1 targets."""
    t = np.asarray(targets, dtype=DTYPE)
    if t.shape != probs.shape:
        raise ShapeError("Targets must match predictions", expected=probs.shape, actual=t.shape)
    p = np.clip(probs.value, PROB_FLOOR, 1.0 - PROB_FLOOR)
    value = -np.sum(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return _record(np.asarray(value), (probs,),
                   lambda g: (g * (-(t / p) + (1.0 - t) / (1.0 - p)),))


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(DTYPE)


@dataclass
class LstmCellParams:
    """Weights of a non-peephole LSTM cell.

    Gate blocks are stored side by side along the last axis in the order
    input, forget, output, candidate.
    """
    input_size: int
    hidden_size: int
    weight_ih: Tensor
    weight_hh: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.input_size <= 0 or self.hidden_size <= 0:
            raise ShapeError("LSTM sizes must be positive", actual=(self.input_size, self.hidden_size))
        four_h = 4 * self.hidden_size
        expected = {
            "weight_ih": (self.input_size, four_h),
            "weight_hh": (self.hidden_size, four_h),
            "bias": (four_h,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeError("LSTM weight has wrong shape", field=name, expected=shape, actual=actual)

    def gate(self, name: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Input-to-hidden matrix, hidden-to-hidden matrix and bias of one gate."""
        k = GATES.index(name)
        cols = slice(k * self.hidden_size, (k + 1) * self.hidden_size)
        return self.weight_ih.value[:, cols], self.weight_hh.value[:, cols], self.bias.value[cols]

    def named_tensors(self, prefix: str) -> Dict[str, Tensor]:
        return {
            f"{prefix}.weight_ih": self.weight_ih,
            f"{prefix}.weight_hh": self.weight_hh,
            f"{prefix}.bias": self.bias,
        }

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
                   scale: float = 0.1) -> "LstmCellParams":
        return cls(
            input_size=input_size,
            hidden_size=hidden_size,
            weight_ih=Tensor(uniform_init(rng, (input_size, 4 * hidden_size), scale)),
            weight_hh=Tensor(uniform_init(rng, (hidden_size, 4 * hidden_size), scale)),
            bias=Tensor(uniform_init(rng, (4 * hidden_size,), scale)),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCellParams":
        return cls(
            input_size=input_size,
            hidden_size=hidden_size,
            weight_ih=Tensor(np.zeros((input_size, 4 * hidden_size))),
            weight_hh=Tensor(np.zeros((hidden_size, 4 * hidden_size))),
            bias=Tensor(np.zeros(4 * hidden_size)),
        )


def lstm_step(cell: LstmCellParams, x: Tensor, h_prev: Tensor, c_prev: Tensor) -> Tuple[Tensor, Tensor]:
    """One LSTM step: returns the new hidden state and memory cell."""
    if x.shape[-1] != cell.input_size:
        raise ShapeError("LSTM input has wrong size", field="x", expected=cell.input_size, actual=x.shape)
    for name, t in (("h_prev", h_prev), ("c_prev", c_prev)):
        if t.shape[-1] != cell.hidden_size:
            raise ShapeError("LSTM state has wrong size", field=name, expected=cell.hidden_size, actual=t.shape)
    if x.shape[:-1] != h_prev.shape[:-1] or h_prev.shape != c_prev.shape:
        raise ShapeError("LSTM batch dimensions disagree", actual=(x.shape, h_prev.shape, c_prev.shape))

    n = cell.hidden_size
    z = add(add(matmul(x, cell.weight_ih), matmul(h_prev, cell.weight_hh)), cell.bias)
    i = sigmoid(slice_last(z, 0, n))
    f = sigmoid(slice_last(z, n, 2 * n))
    o = sigmoid(slice_last(z, 2 * n, 3 * n))
    g = tanh(slice_last(z, 3 * n, 4 * n))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Moment accumulators and hyperparameters of Adam."""
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: AdamState) -> bool:
    """Apply one bias-corrected Adam step in place.

    Parameter arrays are replaced, never modified, so earlier snapshots of
    parameter values stay valid.

    Returns:
        False if the update was rejected because a gradient is not finite
    """
    for name, g in grads.items():
        if name not in params:
            raise GradientError("Gradient for an unknown parameter", field=name)
        if g.shape != params[name].shape:
            raise ShapeError("Gradient shape does not match parameter", field=name,
                             expected=params[name].shape, actual=g.shape)
        if not np.all(np.isfinite(g)):
            logger.warning(f"Non-finite gradient for {name}; update rejected at step {state.t}")
            return False

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.value)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.value)
            v = np.zeros_like(p.value)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        p.value = p.value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return True


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def finite_difference(loss_fn: Callable[[], float], tensor: Tensor, index: Tuple[int, ...],
                      step: float = 1e-4) -> float:
    """Central difference of a scalar loss with respect to one tensor entry."""
    original = tensor.value[index]
    perturbed = tensor.value.copy()
    perturbed[index] = original + step
    tensor.value = perturbed
    plus = loss_fn()
    perturbed = perturbed.copy()
    perturbed[index] = original - step
    tensor.value = perturbed
    minus = loss_fn()
    restored = perturbed.copy()
    restored[index] = original
    tensor.value = restored
    return (plus - minus) / (2.0 * step)


def gradient_check(loss_fn: Callable[[], Tensor], params: Dict[str, Tensor], rng: np.random.Generator,
                   samples_per_tensor: int = 2, step: float = 1e-4,
                   abs_tolerance: float = 1e-7) -> List[Tuple[str, Tuple[int, ...], float, float, float]]:
    """Compare tape gradients with central differences on sampled entries.

    Returns:
        (name, index, analytic, numeric, relative_error) for every sampled entry
        whose absolute difference exceeds abs_tolerance
    """
    with GradientTape() as tape:
        tape.watch(*params.values())
        loss = loss_fn()
    grads = backward(tape, loss).for_params(params)

    def scalar_loss() -> float:
        return float(loss_fn().value)

    report = []
    for name, tensor in params.items():
        for _ in range(samples_per_tensor):
            index = tuple(int(rng.integers(0, d)) for d in tensor.shape)
            analytic = float(grads[name][index])
            numeric = finite_difference(scalar_loss, tensor, index, step)
            diff = abs(analytic - numeric)
            rel = diff / max(abs(analytic) + abs(numeric), 1e-12)
            if diff > abs_tolerance:
                report.append((name, index, analytic, numeric, rel))
    return report
