from __future__ import annotations

import math

import numpy as np
import pytest

from app.nn import (
    NoActionError,
    ParamStore,
    Tape,
    Tensor2,
    backward,
    constant,
    dense_forward,
    masked_log_softmax,
    masked_softmax,
    pick,
    residual_block_forward,
    sgd_step,
)


def _store(**arrays: np.ndarray) -> ParamStore:
    store = ParamStore()
    for name, value in arrays.items():
        store.add(name.replace("__", "."), value)
    return store


def _finite_difference(store: ParamStore, name: str, objective, h: float = 1e-6) -> np.ndarray:
    tensor = store[name]
    grad = np.zeros_like(tensor.value)
    for index in np.ndindex(tensor.value.shape):
        original = tensor.value[index]
        tensor.value[index] = original + h
        up = objective()
        tensor.value[index] = original - h
        down = objective()
        tensor.value[index] = original
        grad[index] = (up - down) / (2 * h)
    return grad


def _assert_close(analytic: np.ndarray, numeric: np.ndarray, rel: float = 1e-4) -> None:
    scale = max(1.0, float(np.abs(numeric).max()))
    assert float(np.abs(analytic - numeric).max()) <= rel * scale


def test_dense_identity_and_scalar_arithmetic() -> None:
    store = _store(id__w=np.eye(3), id__b=np.zeros((1, 3)))
    x = constant(np.array([[1.0, -2.0, 3.0]]))
    out = dense_forward(Tape(), x, store, "id", "linear")
    np.testing.assert_array_equal(out.value, x.value)

    store = _store(s__w=np.array([[3.0]]), s__b=np.array([[1.0]]))
    out = dense_forward(Tape(), constant(np.array([[2.0]])), store, "s", "relu")
    assert out.value.tolist() == [[7.0]]


def test_dense_shape_mismatch() -> None:
    store = _store(d__w=np.zeros((2, 2)), d__b=np.zeros((1, 2)))
    with pytest.raises(ValueError):
        dense_forward(Tape(), constant(np.zeros((1, 3))), store, "d")


def test_masked_softmax_cases() -> None:
    np.testing.assert_array_equal(masked_softmax(np.zeros(2), np.array([True, False])), [1.0, 0.0])
    np.testing.assert_allclose(
        masked_softmax(np.array([math.log(2.0), 0.0]), np.array([True, True])), [2 / 3, 1 / 3], atol=1e-12
    )
    rng = np.random.default_rng(0)
    scores = rng.normal(size=50) * 30
    mask = rng.random(50) < 0.6
    probs = masked_softmax(scores, mask)
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert np.all(probs[~mask] == 0.0)
    assert np.all(probs[mask] > 0.0)
    with pytest.raises(NoActionError):
        masked_softmax(np.zeros(3), np.zeros(3, dtype=bool))


def test_dense_gradient_matches_finite_differences() -> None:
    rng = np.random.default_rng(1)
    store = ParamStore()
    store.add_uniform("l.w", (4, 3), 4, rng)
    store.add_uniform("l.b", (1, 3), 4, rng)
    x = rng.normal(size=(5, 4))
    weights = rng.normal(size=(5, 3))

    def objective() -> float:
        out = dense_forward(Tape(), constant(x), store, "l", "linear")
        return float((out.value * weights).sum())

    tape = Tape()
    out = dense_forward(tape, constant(x), store, "l", "linear")
    backward(tape, out, weights)
    for name in ("l.w", "l.b"):
        _assert_close(store[name].grad, _finite_difference(store, name, objective))


def test_residual_block_identity_and_gradient() -> None:
    rng = np.random.default_rng(2)
    zero = _store(r__a__w=np.zeros((3, 3)), r__a__b=np.zeros((1, 3)), r__b__w=np.zeros((3, 3)), r__b__b=np.zeros((1, 3)))
    x = rng.normal(size=(4, 3))
    out = residual_block_forward(Tape(), constant(x), zero, "r")
    np.testing.assert_array_equal(out.value, x)

    store = ParamStore()
    for part in ("a", "b"):
        store.add_uniform(f"r.{part}.w", (3, 3), 3, rng)
        store.add_uniform(f"r.{part}.b", (1, 3), 3, rng)
    for part in ("a", "b"):
        store.add_uniform(f"s.{part}.w", (3, 3), 3, rng)
        store.add_uniform(f"s.{part}.b", (1, 3), 3, rng)
    weights = rng.normal(size=(4, 3))

    def forward(tape: Tape) -> Tensor2:
        h = residual_block_forward(tape, constant(x), store, "r")
        return residual_block_forward(tape, h, store, "s")

    def objective() -> float:
        return float((forward(Tape()).value * weights).sum())

    tape = Tape()
    backward(tape, forward(tape), weights)
    for name in ("r.a.w", "r.b.b", "s.a.w", "s.b.w"):
        _assert_close(store[name].grad, _finite_difference(store, name, objective))


def test_masked_log_softmax_gradient() -> None:
    rng = np.random.default_rng(3)
    store = ParamStore()
    store.add_uniform("h.w", (3, 1), 3, rng)
    store.add_uniform("h.b", (1, 1), 3, rng)
    x = rng.normal(size=(6, 3))
    mask = np.array([True, False, True, True, False, True])

    def forward(tape: Tape) -> Tensor2:
        scores = dense_forward(tape, constant(x), store, "h", "linear")
        return pick(tape, masked_log_softmax(tape, scores, mask), 3)

    tape = Tape()
    backward(tape, forward(tape))
    _assert_close(store["h.w"].grad, _finite_difference(store, "h.w", lambda: float(forward(Tape()).value[0, 0])))


def test_backward_accumulates_and_sgd_ascends() -> None:
    store = _store(s__w=np.array([[2.0]]), s__b=np.array([[0.0]]))
    x = constant(np.array([[3.0]]))
    for _ in range(2):
        tape = Tape()
        backward(tape, dense_forward(tape, x, store, "s", "linear"))
    assert store["s.w"].grad.tolist() == [[6.0]]
    assert store["s.b"].grad.tolist() == [[2.0]]

    sgd_step(store, 0.5)
    assert store["s.w"].value.tolist() == [[5.0]]
    assert store["s.b"].value.tolist() == [[1.0]]
    assert store["s.w"].grad.tolist() == [[0.0]]


def test_step_without_backward_is_a_null_update() -> None:
    store = _store(s__w=np.array([[2.0]]), s__b=np.array([[0.5]]))
    sgd_step(store, 0.1)
    assert store["s.w"].value.tolist() == [[2.0]]
    assert store["s.b"].value.tolist() == [[0.5]]


def test_param_store_rejects_duplicates_and_non_finite() -> None:
    store = ParamStore()
    store.add("a", np.zeros((1, 1)))
    with pytest.raises(ValueError):
        store.add("a", np.zeros((1, 1)))
    with pytest.raises(ValueError):
        store.add("b", np.array([[np.nan]]))
    with pytest.raises(ValueError):
        Tensor2(np.zeros(3))
