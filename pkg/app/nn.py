"""Small dense-network substrate with a recording tape for reverse-mode gradients.

Every forward op takes the ``Tape`` first and registers a closure that pushes
the output gradient back into its inputs. Parameters live in a ``ParamStore``
whose tensors own the gradient accumulators.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from typing import Literal

import numpy as np

logger = logging.getLogger(__name__)

Activation = Literal["relu", "linear"]


class NoActionError(RuntimeError):
    pass


class Tensor2:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str | None = None):
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"Tensor2 needs a 2-D array, got shape {array.shape}")
        self.value = array
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor2(name={self.name!r}, shape={self.shape})"


class Tape:
    def __init__(self) -> None:
        self._entries: list[tuple[Tensor2, Callable[[np.ndarray], None]]] = []

    def record(self, out: Tensor2, backward_fn: Callable[[np.ndarray], None]) -> Tensor2:
        self._entries.append((out, backward_fn))
        return out

    def __len__(self) -> int:
        return len(self._entries)

    def reversed_entries(self) -> Iterator[tuple[Tensor2, Callable[[np.ndarray], None]]]:
        return reversed(self._entries)


class ParamStore:
    """Named trainable tensors; each carries a zero-initialised gradient buffer."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor2] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor2:
        if name in self._params:
            raise ValueError(f"Duplicate parameter {name}")
        tensor = Tensor2(np.array(value, dtype=np.float64), name=name)
        if not np.all(np.isfinite(tensor.value)):
            raise ValueError(f"Parameter {name} has non-finite values")
        tensor.grad = np.zeros_like(tensor.value)
        self._params[name] = tensor
        return tensor

    def add_uniform(self, name: str, shape: tuple[int, int], fan_in: int, rng: np.random.Generator) -> Tensor2:
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def __getitem__(self, name: str) -> Tensor2:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor2]]:
        return iter(self._params.items())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = np.zeros_like(tensor.value)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.value)) for t in self._params.values())

    def count(self) -> int:
        return sum(t.value.size for t in self._params.values())


def constant(value: np.ndarray) -> Tensor2:
    return Tensor2(value)


def matmul(tape: Tape, x: Tensor2, w: Tensor2) -> Tensor2:
    if x.cols != w.rows:
        raise ValueError(f"Shape mismatch: {x.shape} @ {w.shape}")
    out = Tensor2(x.value @ w.value)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad @ w.value.T)
        w.accumulate(x.value.T @ grad)

    return tape.record(out, backward)


def add_row(tape: Tape, x: Tensor2, b: Tensor2) -> Tensor2:
    if b.rows != 1 or b.cols != x.cols:
        raise ValueError(f"Bias shape {b.shape} does not match {x.shape}")
    out = Tensor2(x.value + b.value)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad)
        b.accumulate(grad.sum(axis=0, keepdims=True))

    return tape.record(out, backward)


def add(tape: Tape, a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} + {b.shape}")
    out = Tensor2(a.value + b.value)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad)
        b.accumulate(grad)

    return tape.record(out, backward)


def relu(tape: Tape, x: Tensor2) -> Tensor2:
    mask = x.value > 0
    out = Tensor2(np.where(mask, x.value, 0.0))

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad * mask)

    return tape.record(out, backward)


def concat_cols(tape: Tape, parts: Sequence[Tensor2]) -> Tensor2:
    rows = {p.rows for p in parts}
    if len(rows) != 1:
        raise ValueError("concat_cols needs equal row counts")
    out = Tensor2(np.concatenate([p.value for p in parts], axis=1))
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(grad: np.ndarray) -> None:
        for part, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            part.accumulate(grad[:, lo:hi])

    return tape.record(out, backward)


def propagate(tape: Tape, matrix: np.ndarray, x: Tensor2) -> Tensor2:
    """Left-multiply by a constant matrix (neighbour sums, means, row selection)."""
    if matrix.shape[1] != x.rows:
        raise ValueError(f"Shape mismatch: {matrix.shape} @ {x.shape}")
    out = Tensor2(matrix @ x.value)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(matrix.T @ grad)

    return tape.record(out, backward)


def mean_rows(tape: Tape, x: Tensor2) -> Tensor2:
    return propagate(tape, np.full((1, x.rows), 1.0 / x.rows), x)


def repeat_row(tape: Tape, x: Tensor2, n: int) -> Tensor2:
    if x.rows != 1:
        raise ValueError("repeat_row needs a single-row tensor")
    return propagate(tape, np.ones((n, 1)), x)


def take_rows(tape: Tape, x: Tensor2, rows: Sequence[int]) -> Tensor2:
    selector = np.zeros((len(rows), x.rows))
    selector[np.arange(len(rows)), list(rows)] = 1.0
    return propagate(tape, selector, x)


def pick(tape: Tape, x: Tensor2, row: int, col: int = 0) -> Tensor2:
    out = Tensor2(x.value[row : row + 1, col : col + 1].copy())

    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(x.value)
        full[row, col] = grad[0, 0]
        x.accumulate(full)

    return tape.record(out, backward)


def dense_forward(
    tape: Tape,
    x: Tensor2,
    store: ParamStore,
    name: str,
    activation: Activation = "relu",
) -> Tensor2:
    """activation(x @ W + b) with parameters ``{name}.w`` and ``{name}.b``."""
    h = add_row(tape, matmul(tape, x, store[f"{name}.w"]), store[f"{name}.b"])
    if activation == "relu":
        return relu(tape, h)
    return h


def residual_block_forward(tape: Tape, x: Tensor2, store: ParamStore, name: str) -> Tensor2:
    inner = dense_forward(tape, x, store, f"{name}.a", "relu")
    outer = dense_forward(tape, inner, store, f"{name}.b", "linear")
    if outer.shape != x.shape:
        raise ValueError(f"Residual branch changes shape {x.shape} -> {outer.shape}")
    return add(tape, x, outer)


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if scores.shape != mask.shape:
        raise ValueError("scores and mask differ in length")
    if not mask.any():
        raise NoActionError("Every entry is masked")
    shifted = np.where(mask, scores - scores[mask].max(), 0.0)
    weights = np.where(mask, np.exp(shifted), 0.0)
    return weights / weights.sum()


def masked_log_softmax(tape: Tape, scores: Tensor2, mask: np.ndarray) -> Tensor2:
    """Column of log-probabilities; masked rows hold -inf and receive no gradient."""
    if scores.cols != 1:
        raise ValueError("masked_log_softmax expects an n x 1 score column")
    probs = masked_softmax(scores.value[:, 0], mask)
    mask_col = np.asarray(mask, dtype=bool).reshape(-1, 1)
    with np.errstate(divide="ignore"):
        out = Tensor2(np.log(probs).reshape(-1, 1))

    def backward(grad: np.ndarray) -> None:
        g = np.where(mask_col, grad, 0.0)
        scores.accumulate(g - probs.reshape(-1, 1) * g.sum())

    return tape.record(out, backward)


def backward(tape: Tape, output: Tensor2, loss_grad: float | np.ndarray = 1.0) -> None:
    """Propagate ``loss_grad`` from ``output`` into every parameter gradient."""
    output.grad = np.broadcast_to(np.asarray(loss_grad, dtype=np.float64), output.shape).copy()
    for out, fn in tape.reversed_entries():
        if out.grad is None:
            continue
        fn(out.grad)


def sgd_step(store: ParamStore, lr: float) -> None:
    """Gradient ascent: value += lr * grad, then clear the accumulators."""
    if lr != 0.0:
        for _, tensor in store.items():
            if tensor.grad is not None:
                tensor.value += lr * tensor.grad
    store.zero_grad()
