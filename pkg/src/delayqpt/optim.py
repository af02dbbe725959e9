"""Small optimizer and fitting toolkit shared by the reconstruction pipelines.

Objectives passed to the minimizers return ``(value, gradient)``; whether the
gradient is analytic or from :func:`finite_diff_gradient` is up to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import Divergence, InvalidArgument, Stalled

Objective = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    learning_rate: Optional[float] = None
    epochs: int = 1000
    tolerance: float = 1e-10
    seed: int = 0
    finite_diff_step: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9
    eps: float = 1e-8
    # optional exponential learning-rate decay down to lr * lr_final_ratio
    lr_final_ratio: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ("adam", "rmsprop", "bfgs"):
            raise InvalidArgument(f"unknown algorithm {self.algorithm!r}")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if not 0 < self.finite_diff_step <= 1e-2:
            raise InvalidArgument("finite_diff_step must lie in (0, 1e-2]")
        if not 0 < self.lr_final_ratio <= 1:
            raise InvalidArgument("lr_final_ratio must lie in (0, 1]")

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LR[self.algorithm]

    def lr_at(self, epoch: int) -> float:
        if self.lr_final_ratio == 1.0:
            return self.lr
        return self.lr * self.lr_final_ratio ** (epoch / max(self.epochs - 1, 1))

    def with_(self, **kw) -> "OptimizerConfig":
        return replace(self, **kw)


# RMSProp default is the value used for the lattice experiments.
DEFAULT_LR = {"adam": 0.01, "rmsprop": 0.005, "bfgs": 1.0}


@dataclass
class History:
    loss: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def record(self, value: float, **items) -> None:
        self.loss.append(float(value))
        for k, v in items.items():
            self.extra.setdefault(k, []).append(v)


def _check_finite(value, grad, epoch):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise Divergence(f"non-finite loss at epoch {epoch}; try a smaller learning rate")


def adam_minimize(f: Objective, x0, cfg: OptimizerConfig, callback=None):
    """Adam with bias correction. Returns ``(x_best, history)``.

    ``x_best`` is the iterate with the lowest recorded loss.
    """
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2 = cfg.beta1, cfg.beta2
    hist = History()
    best_x, best_val = x.copy(), np.inf
    for epoch in range(1, cfg.epochs + 1):
        val, g = f(x)
        _check_finite(val, g, epoch)
        hist.record(val)
        if callback is not None:
            callback(epoch - 1, x, val, hist)
        if val < best_val:
            best_val, best_x = val, x.copy()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** epoch)
        vhat = v / (1 - b2 ** epoch)
        x = x - cfg.lr_at(epoch - 1) * mhat / (np.sqrt(vhat) + cfg.eps)
    val, g = f(x)
    if np.isfinite(val) and val < best_val:
        best_x = x
    return best_x, hist


def rmsprop_minimize(f: Objective, x0, cfg: OptimizerConfig, callback=None):
    """RMSProp (running mean of squared gradients). Returns the final iterate.

    Unlike :func:`adam_minimize` the last iterate is returned, so that
    parameter-error histories recorded by ``callback`` end where ``x`` ends.
    """
    x = np.array(x0, dtype=float)
    s = np.zeros_like(x)
    hist = History()
    for epoch in range(cfg.epochs):
        val, g = f(x)
        _check_finite(val, g, epoch)
        hist.record(val)
        if callback is not None:
            callback(epoch, x, val, hist)
        s = cfg.decay * s + (1 - cfg.decay) * g * g
        x = x - cfg.lr_at(epoch) * g / (np.sqrt(s) + cfg.eps)
    return x, hist


def bfgs_minimize(f: Objective, x0, cfg: OptimizerConfig, callback=None):
    """BFGS with an inverse-Hessian update and Armijo backtracking.

    Stops when the gradient norm drops below ``cfg.tolerance`` or after
    ``cfg.epochs`` iterations; raises :class:`Stalled` when the line search
    fails after 50 halvings.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    Hinv = np.eye(n)
    val, g = f(x)
    _check_finite(val, g, 0)
    hist = History()
    hist.record(val)
    for it in range(cfg.epochs):
        if np.linalg.norm(g) < cfg.tolerance:
            break
        p = -Hinv @ g
        slope = g @ p
        if slope >= 0:
            Hinv = np.eye(n)
            p = -g
            slope = -(g @ g)
        step = 1.0
        for _ in range(50):
            x_new = x + step * p
            v_new, g_new = f(x_new)
            if np.isfinite(v_new) and v_new <= val + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            raise Stalled("Armijo line search failed after 50 halvings", x=x, history=hist)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-300:
            rho = 1.0 / sy
            I = np.eye(n)
            Hinv = (I - rho * np.outer(s, y)) @ Hinv @ (I - rho * np.outer(y, s)) \
                + rho * np.outer(s, s)
        x, val, g = x_new, v_new, g_new
        hist.record(val)
        if callback is not None:
            callback(it, x, val, hist)
    return x, hist


MINIMIZERS = {"adam": adam_minimize, "rmsprop": rmsprop_minimize, "bfgs": bfgs_minimize}


def minimize(f: Objective, x0, cfg: OptimizerConfig, callback=None):
    return MINIMIZERS[cfg.algorithm](f, x0, cfg, callback=callback)


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if step <= 0:
        raise InvalidArgument("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = step
        g.flat[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def with_fd_gradient(f: Callable[[np.ndarray], float], step: float = 1e-6) -> Objective:
    return lambda x: (f(x), finite_diff_gradient(f, x, step))


def linear_least_squares(design, targets, rcond: float = 1e-12):
    """Minimum-norm least squares via QR with column pivoting.

    Returns ``(coeffs, rms_residual, rank_deficient)``.
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise InvalidArgument("design matrix must have at least as many rows as columns")
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rcond * max(diag[0], 1e-300))) if diag.size else 0
    deficient = rank < A.shape[1]
    if deficient:
        # minimum-norm solution for the rank-deficient case
        coeffs = np.linalg.lstsq(A, y, rcond=rcond)[0]
    else:
        z = scipy.linalg.solve_triangular(R, Q.T @ y)
        coeffs = np.empty(A.shape[1])
        coeffs[piv] = z
    resid = y - A @ coeffs
    return coeffs, float(np.sqrt(np.mean(resid ** 2))), deficient


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a: float, b: float, xtol: float):
    """Minimize a unimodal function on [a, b] to bracket width ``xtol``."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        if c >= d:
            break
    x = c if fc <= fd else d
    return x, min(fc, fd)


def scan_grid(f, lo: float, hi: float, grid_points: int):
    if not lo < hi:
        raise InvalidArgument("need lo < hi")
    if grid_points < 2:
        raise InvalidArgument("need at least two grid points")
    xs = np.linspace(lo, hi, grid_points)
    return xs, np.array([f(x) for x in xs])


def refine_at(f, xs, vals, k: int, lo: float, hi: float, xtol: float):
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, len(xs) - 1)]
    x, fx = golden_section(f, max(a, lo), min(b, hi), xtol)
    if vals[k] < fx:
        return xs[k], vals[k]
    return x, fx


def scan_refine_1d(f, lo: float, hi: float, grid_points: int = 2000, xtol=None):
    """Dense grid scan, then golden-section refinement around the best point."""
    xs, vals = scan_grid(f, lo, hi, grid_points)
    xtol = 1e-12 * (hi - lo) if xtol is None else xtol
    k = int(np.argmin(vals))
    return refine_at(f, xs, vals, k, lo, hi, xtol)


def local_minima(vals: np.ndarray) -> np.ndarray:
    """Indices of grid local minima sorted by value (ties: smaller index first)."""
    v = np.asarray(vals)
    left = np.r_[np.inf, v[:-1]]
    right = np.r_[v[1:], np.inf]
    idx = np.nonzero((v <= left) & (v <= right))[0]
    return idx[np.lexsort((idx, v[idx]))]
