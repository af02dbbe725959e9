import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayqpt.errors import Divergence, InvalidArgument
from delayqpt.optim import (
    OptimizerConfig,
    adam_minimize,
    bfgs_minimize,
    finite_diff_gradient,
    linear_least_squares,
    rmsprop_minimize,
    scan_refine_1d,
)


def bowl(x):
    return float(x @ x), 2 * x


def flat(x):
    return 0.0, np.zeros_like(x)


def rosenbrock(x):
    a, b = x
    val = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    grad = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return float(val), grad


def test_config_validation():
    with pytest.raises(InvalidArgument):
        OptimizerConfig(algorithm="sgd")
    with pytest.raises(InvalidArgument):
        OptimizerConfig(learning_rate=-1)
    with pytest.raises(InvalidArgument):
        OptimizerConfig(epochs=0)
    assert OptimizerConfig(algorithm="rmsprop").lr == 0.005


def test_lr_decay_schedule():
    cfg = OptimizerConfig(learning_rate=0.1, epochs=101, lr_final_ratio=0.01)
    assert cfg.lr_at(0) == pytest.approx(0.1)
    assert cfg.lr_at(100) == pytest.approx(0.001)


def test_linear_least_squares_examples(rng):
    y = rng.standard_normal(4)
    c, res, deficient = linear_least_squares(np.eye(4), y)
    assert np.allclose(c, y) and res == 0.0 and not deficient
    A = rng.standard_normal((20, 3))
    c, res, _ = linear_least_squares(A, A @ np.array([1.0, -2.0, 0.5]))
    assert res < 1e-14
    b = rng.standard_normal(20)
    c, _, _ = linear_least_squares(A, b)
    assert np.allclose(c, np.linalg.solve(A.T @ A, A.T @ b), atol=1e-10)


def test_adam_bowl_and_flat(rng):
    x0 = rng.standard_normal(5)
    x, _ = adam_minimize(bowl, x0, OptimizerConfig(learning_rate=0.1, epochs=2000))
    assert np.linalg.norm(x) < 1e-6
    x, _ = adam_minimize(flat, x0, OptimizerConfig(epochs=10))
    assert np.array_equal(x, x0)


def test_adam_deterministic(rng):
    x0 = rng.standard_normal(3)
    cfg = OptimizerConfig(learning_rate=0.05, epochs=200)
    a, ha = adam_minimize(bowl, x0, cfg)
    b, hb = adam_minimize(bowl, x0, cfg)
    assert np.array_equal(a, b) and ha.loss == hb.loss


def test_adam_divergence():
    with pytest.raises(Divergence):
        adam_minimize(lambda x: (float("nan"), x), np.ones(2), OptimizerConfig(epochs=3))


def test_rmsprop_bowl_and_flat(rng):
    x0 = rng.standard_normal(4)
    cfg = OptimizerConfig(algorithm="rmsprop", learning_rate=0.01,
                          epochs=3000, lr_final_ratio=1e-3)
    x, _ = rmsprop_minimize(bowl, x0, cfg)
    assert bowl(x)[0] < 1e-6
    x, _ = rmsprop_minimize(flat, x0, OptimizerConfig(algorithm="rmsprop", epochs=5))
    assert np.array_equal(x, x0)


def test_bfgs_examples(rng):
    cfg = OptimizerConfig(algorithm="bfgs", epochs=500, tolerance=1e-12)
    x, _ = bfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert np.linalg.norm(x - 1) < 1e-6
    A = rng.standard_normal((4, 4))
    A = A @ A.T + 4 * np.eye(4)
    quad = lambda x: (float(0.5 * x @ A @ x), A @ x)  # noqa: E731
    x, hist = bfgs_minimize(quad, rng.standard_normal(4), cfg)
    assert np.linalg.norm(x) < 1e-8
    x, hist = bfgs_minimize(bowl, np.zeros(3), cfg)
    assert len(hist.loss) == 1


def test_finite_diff_examples(rng):
    a = rng.standard_normal(5)
    x = rng.standard_normal(5)
    assert np.allclose(finite_diff_gradient(lambda z: a @ z, x), a, atol=1e-10)
    assert np.allclose(finite_diff_gradient(lambda z: z @ z, x, 1e-6), 2 * x, atol=1e-8)


@given(st.floats(0.5, 9.5))
def test_scan_refine_quadratic(c):
    x, fx = scan_refine_1d(lambda x: (x - c) ** 2, 1e-9, 10.0, 2000)
    assert abs(x - c) < 1e-7
    assert fx < 1e-13


def test_scan_refine_examples():
    x, _ = scan_refine_1d(lambda x: (x - 2.3) ** 2, 0.0, 10.0, 2000)
    assert abs(x - 2.3) < 1e-10
    x, _ = scan_refine_1d(lambda x: -x, 0.0, 10.0, 200)
    assert x == pytest.approx(10.0)
