"""Exact single-qubit Hamiltonian reconstruction from one delayed trajectory.

The Bloch vector of the evolving state rotates about a unit axis v with
angular frequency omega, so a projection onto a measurement direction m is

    y(t) = cos(wt) m.r + sin(wt) m.(v x r) + (1 - cos(wt)) (v.r)(m.v).

The frequency is fitted first (a cosine with free amplitude, phase and
offset), then the two v-dependent coefficients by linear least squares, and
finally v itself up to the signs of its components along u2 and u3.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import rodrigues_apply, state_to_bloch
from .errors import (
    DegenerateGrid,
    DegenerateTrajectory,
    InconsistentData,
    InvalidArgument,
    InvalidGeometry,
    StillAmbiguous,
)
from .optim import golden_section, linear_least_squares, local_minima
from .quantum import PauliSumOperator
from .report import ReconstructionReport, relative_error
from .sampling import Trajectory

AXES = {"X": np.array([1.0, 0, 0]), "Y": np.array([0, 1.0, 0]), "Z": np.array([0, 0, 1.0])}
CLAMP_TOL = 1e-8


@dataclass(frozen=True)
class SingleQubitGeometry:
    r: np.ndarray
    m: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    lambda_plus: float
    lambda_minus: float
    cross_norm: float

    @property
    def K(self) -> np.ndarray:
        return 0.5 * (np.outer(self.m, self.r) + np.outer(self.r, self.m))


def make_geometry(r, m=AXES["Z"]) -> SingleQubitGeometry:
    """Orthonormal frame built from the initial Bloch vector r and direction m."""
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    r = r / np.linalg.norm(r)
    m = m / np.linalg.norm(m)
    cross = np.cross(r, m)
    cn = np.linalg.norm(cross)
    if cn <= 1e-8:
        raise InvalidGeometry("measurement direction is parallel to the initial Bloch vector")
    mr = float(m @ r)
    return SingleQubitGeometry(
        r=r, m=m, u1=cross / cn,
        u2=(r + m) / np.linalg.norm(r + m),
        u3=(r - m) / np.linalg.norm(r - m),
        lambda_plus=0.5 * (1 + mr), lambda_minus=-0.5 * (1 - mr), cross_norm=float(cn))


@dataclass(frozen=True)
class AxisCandidate:
    omega: float
    v: np.ndarray
    signs: tuple
    coeffs: tuple  # components of v along (u1, u2, u3)

    @property
    def h(self) -> np.ndarray:
        return self.omega * self.v / 2


def h_to_operator(h) -> PauliSumOperator:
    return PauliSumOperator(1, tuple(zip("XYZ", np.asarray(h, dtype=float).tolist())))


def predict(omega: float, v, r, m, times) -> np.ndarray:
    return np.array([m @ rodrigues_apply(omega * t, v, r) for t in times])


def _series(traj: Trajectory):
    if len(traj.state_ids) != 1 or len(traj.observables) != 1:
        raise InvalidArgument("expected a single (state, observable) series")
    return traj.select()


def _cosine_residual(times, y):
    """RMS misfit of the best a cos(wt - b) + c, vectorized over omega."""
    def resid(omega):
        wt = np.multiply.outer(np.atleast_1d(omega), times)
        A = np.stack([np.cos(wt), np.sin(wt), np.ones_like(wt)], axis=-1)
        Q, _ = np.linalg.qr(A)
        fit = Q @ np.einsum("...ik,i->...k", Q, y)[..., None]
        out = np.sqrt(np.mean((y - fit[..., 0]) ** 2, axis=-1))
        return out if np.ndim(omega) else float(out[0])
    return resid


def default_omega_max(times) -> float:
    spacing = np.min(np.diff(np.sort(times)))
    return 4 * np.pi / spacing


def frequency_candidates(traj: Trajectory, omega_max=None, grid_points: int = 2000,
                         xtol: float = 1e-14):
    """Yield refined (omega, rms residual) for grid local minima, best first."""
    times, y = _series(traj)
    if len(times) < 4:
        raise InvalidArgument("frequency fit needs at least 4 samples")
    if np.var(y) < 1e-14:
        raise DegenerateTrajectory("trajectory is constant; the frequency is unidentifiable")
    omega_max = default_omega_max(times) if omega_max is None else float(omega_max)
    if not omega_max > 0:
        raise InvalidArgument("omega_max must be positive")
    resid = _cosine_residual(times, y)
    lo = omega_max / grid_points * 1e-3
    xs = np.linspace(lo, omega_max, grid_points)
    vals = resid(xs)
    for k in local_minima(vals):
        a = xs[max(k - 1, 0)]
        b = xs[min(k + 1, len(xs) - 1)]
        w, fw = golden_section(resid, a, b, xtol * max(1.0, omega_max))
        if vals[k] < fw:
            w, fw = xs[k], vals[k]
        yield float(w), float(fw)


def fit_frequency(traj: Trajectory, omega_max=None, grid_points: int = 2000):
    """Global frequency of a single cosine (amplitude/phase/offset profiled out)."""
    return next(frequency_candidates(traj, omega_max, grid_points))


def fit_alpha_kappa(traj: Trajectory, omega: float, geom: SingleQubitGeometry):
    """Linear fit of y - cos(wt) m.r against sin(wt) and 1 - cos(wt).

    Returns ``(alpha1, kappa, rms_residual)`` with alpha1 = m.(v x r) and
    kappa = (v.r)(m.v).
    """
    times, y = _series(traj)
    wt = omega * times
    y_tilde = y - np.cos(wt) * (geom.m @ geom.r)
    A = np.column_stack([np.sin(wt), 1 - np.cos(wt)])
    (alpha1, kappa), res, deficient = linear_least_squares(A, y_tilde)
    if deficient:
        raise DegenerateGrid("sampling times do not separate the sine and cosine terms")
    return float(alpha1), float(kappa), res


def _clamp_square(val: float, name: str) -> float:
    if val < -CLAMP_TOL:
        raise InconsistentData(f"{name} = {val:.3e} < 0: frequency or fit is wrong")
    return max(val, 0.0)


def solve_axis_candidates(alpha1: float, kappa: float, geom: SingleQubitGeometry,
                          omega: float) -> list:
    """All unit axes consistent with (alpha1, kappa): up to four sign choices."""
    a1 = alpha1 / geom.cross_norm  # component of v along u1
    if abs(a1) > 1 + CLAMP_TOL:
        raise InconsistentData(f"|v.u1| = {abs(a1):.6f} exceeds 1")
    a1 = float(np.clip(a1, -1.0, 1.0))
    a2_sq = _clamp_square(kappa - (1 - a1 ** 2) * geom.lambda_minus, "alpha2^2")
    a3_sq = _clamp_square(1 - a1 ** 2 - a2_sq, "alpha3^2")
    a2, a3 = np.sqrt(a2_sq), np.sqrt(a3_sq)
    signs2 = (1, -1) if a2 > 0 else (1,)
    signs3 = (1, -1) if a3 > 0 else (1,)
    out = []
    for s2 in signs2:
        for s3 in signs3:
            v = a1 * geom.u1 + s2 * a2 * geom.u2 + s3 * a3 * geom.u3
            v = v / np.linalg.norm(v)
            out.append(AxisCandidate(float(omega), v, (s2, s3), (a1, s2 * a2, s3 * a3)))
    return out


def disambiguate(candidates: list, aux: Trajectory, r, direction=None,
                 min_margin: float = 1e-10):
    """Pick the candidate that best reproduces a second-basis trajectory.

    Returns ``(candidate, margin, misfits)``; margin is the runner-up misfit
    minus the best one (infinite for a single candidate).
    """
    if not candidates:
        raise InvalidArgument("no candidates to choose from")
    if len(candidates) == 1:
        return candidates[0], float("inf"), [0.0]
    times, y = aux.select()
    if len(times) == 0:
        raise InvalidArgument("auxiliary trajectory is empty")
    if direction is None:
        labels = aux.observables
        if len(labels) != 1 or labels[0] not in AXES:
            raise InvalidArgument("cannot infer the auxiliary measurement direction")
        direction = AXES[labels[0]]
    direction = np.asarray(direction, dtype=float)
    misfits = [float(np.sum((predict(c.omega, c.v, r, direction, times) - y) ** 2))
               for c in candidates]
    order = np.argsort(misfits, kind="stable")
    margin = misfits[order[1]] - misfits[order[0]]
    if margin < min_margin:
        raise StillAmbiguous("auxiliary data do not separate the sign candidates", margin)
    return candidates[order[0]], float(margin), misfits


@dataclass
class SingleQubitResult:
    omega: float
    alpha1: float
    kappa: float
    candidate: AxisCandidate
    candidates: list
    residuals: dict
    margin: float
    restarts_used: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def h(self) -> np.ndarray:
        return self.candidate.h


def reconstruct_single_qubit(traj_main: Trajectory, traj_aux: Trajectory,
                             geom: SingleQubitGeometry, omega_max=None,
                             restarts: int = 5, tol: float = 1e-10,
                             h_true=None) -> ReconstructionReport:
    """Recover h (H = h.sigma) from a main-basis trajectory plus auxiliary data."""
    res = solve_single_qubit(traj_main, traj_aux, geom, omega_max, restarts, tol)
    params = {"omega": res.omega, "v": res.candidate.v, "h": res.h,
              "alpha1": res.alpha1, "kappa": res.kappa,
              "candidates": [c.v for c in res.candidates]}
    errors = {}
    if h_true is not None:
        errors["h"] = relative_error(res.h, h_true)
    info = {"residuals": res.residuals, "margin": res.margin,
            "restarts_used": res.restarts_used,
            "final_loss": res.residuals["frequency"] ** 2}
    return ReconstructionReport("single", params, [], errors, info)


def solve_single_qubit(traj_main, traj_aux, geom, omega_max=None, restarts=5, tol=1e-10):
    times, _ = _series(traj_main)
    if len(times) < 7:
        raise InvalidArgument("need at least 2d + 1 = 7 samples for a single qubit")
    best = None
    used = 0
    for used, (omega, fres) in enumerate(frequency_candidates(traj_main, omega_max)):
        if used > restarts:
            break
        alpha1, kappa, lres = fit_alpha_kappa(traj_main, omega, geom)
        if best is None or fres + lres < best[1] + best[4]:
            best = (omega, fres, alpha1, kappa, lres)
        # zero residual in both fits certifies the solution
        if fres <= tol and lres <= tol:
            break
    omega, fres, alpha1, kappa, lres = best
    cands = solve_axis_candidates(alpha1, kappa, geom, omega)
    chosen, margin, _ = disambiguate(cands, traj_aux, geom.r)
    return SingleQubitResult(omega, alpha1, kappa, chosen, cands,
                             {"frequency": fres, "alpha_kappa": lres}, margin, used)


def geometry_from_state(psi, m=AXES["Z"]) -> SingleQubitGeometry:
    return make_geometry(state_to_bloch(psi), m)
