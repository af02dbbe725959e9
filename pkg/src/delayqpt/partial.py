"""Two-qubit Hamiltonian reconstruction from measurements on the first qubit only.

Two known initial states are evolved under a 15-coefficient ansatz and the
three single-qubit Pauli expectations X(x)I, Y(x)I, Z(x)I are fitted by
multi-start gradient descent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Divergence, InvalidArgument, OptimizationFailure, Stalled
from .optim import OptimizerConfig, adam_minimize, bfgs_minimize
from .quantum import PauliSumOperator, pauli_labels, pauli_matrix
from .report import ReconstructionReport, relative_error
from .sampling import TimeGrid, Trajectory, simulate_trajectory

OBSERVABLES = ("XI", "YI", "ZI")
_PAULIS = np.array([pauli_matrix(l) for l in pauli_labels(2)])


@dataclass(frozen=True)
class PartialMeasSetup:
    states: tuple
    grid: TimeGrid
    observables: tuple = OBSERVABLES
    restarts: int = 10
    # one state is allowed only to demonstrate why two are needed
    allow_single_state: bool = False

    def __post_init__(self):
        states = tuple(np.asarray(s, dtype=complex) for s in self.states)
        object.__setattr__(self, "states", states)
        want = (1, 2) if self.allow_single_state else (2,)
        if len(states) not in want:
            raise InvalidArgument("partial reconstruction needs exactly two initial states")
        for s in states:
            if s.shape != (4,) or abs(np.linalg.norm(s) - 1) > 1e-10:
                raise InvalidArgument("initial states must be normalized two-qubit vectors")
        if len(states) == 2 and abs(np.vdot(*states)) ** 2 > 1 - 1e-6:
            raise InvalidArgument("the two initial states coincide (fidelity > 1 - 1e-6)")
        if self.grid.kind != "geometric":
            raise InvalidArgument("partial reconstruction expects a geometric grid")
        for o in self.observables:
            if len(o) != 2 or o[1] != "I" or o[0] not in "XYZ":
                raise InvalidArgument(f"observable {o!r} does not act on qubit 1 only")
        if self.restarts < 1:
            raise InvalidArgument("restarts must be >= 1")

    @property
    def state_ids(self) -> tuple:
        return tuple(f"s{k}" for k in range(len(self.states)))


def simulate_partial(H: PauliSumOperator, setup: PartialMeasSetup) -> Trajectory:
    states = dict(zip(setup.state_ids, setup.states))
    return simulate_trajectory(H, states, list(setup.observables), setup.grid)


def _targets(setup: PartialMeasSetup, traj: Trajectory) -> np.ndarray:
    """Recorded values as an array indexed (state, time, observable)."""
    times = np.asarray(setup.grid.times)
    table = {(r.state_id, r.observable): {} for r in traj.records}
    for r in traj.records:
        table[(r.state_id, r.observable)][r.time] = r.value
    out = np.empty((len(setup.states), len(times), len(setup.observables)))
    for s, sid in enumerate(setup.state_ids):
        for o, obs in enumerate(setup.observables):
            series = table.get((sid, obs))
            if series is None:
                raise InvalidArgument(f"no records for state {sid}, observable {obs}")
            for q, t in enumerate(times):
                hit = [v for tt, v in series.items() if abs(tt - t) <= 1e-12 * max(1.0, t)]
                if not hit:
                    raise InvalidArgument(f"missing record ({sid}, {obs}, t={t!r})")
                out[s, q, o] = hit[0]
    return out


def _loss_and_grad(h, states, times, M, Y, with_grad=True):
    H = np.einsum("k,kij->ij", h, _PAULIS)
    if not np.all(np.isfinite(H)):
        raise Divergence("non-finite Hamiltonian coefficients; try a smaller learning rate")
    try:
        lam, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise Divergence("eigendecomposition failed; try a smaller learning rate") from exc
    Vh = V.conj().T
    phase = np.exp(-1j * np.multiply.outer(times, lam))  # (T, 4)
    phi = states @ V.conj()  # rows: V^dagger psi_s
    a = phase[None] * phi[:, None, :]  # (S, T, 4) states in the eigenbasis
    Mt = Vh[None] @ M @ V[None]  # (O, 4, 4)
    b = np.einsum("oij,stj->stoi", Mt, a)
    pred = np.einsum("sti,stoi->sto", a.conj(), b).real
    res = pred - Y
    val = float(np.mean(res ** 2))
    if not with_grad:
        return val, None
    coef = 2.0 * res / res.size
    # Daleckii-Krein kernel of exp(-i H t) per time
    diff = lam[:, None] - lam[None, :]
    same = np.abs(diff) < 1e-12
    safe = np.where(same, 1.0, diff)
    kern = np.where(same[None], -1j * times[:, None, None] * phase[:, :, None],
                    (phase[:, :, None] - phase[:, None, :]) / safe[None])
    # sum_sto coef * conj(b_i) Gamma_ij phi_j, then contract with V^dagger P_k V
    W = np.einsum("sto,stoi,tij,sj->ij", coef, b.conj(), kern, phi)
    Pt = Vh[None] @ _PAULIS @ V[None]
    grad = 2.0 * np.einsum("ij,kij->k", W, Pt).real
    return val, grad


def _problem(setup: PartialMeasSetup, traj: Trajectory):
    Y = _targets(setup, traj)
    M = np.array([pauli_matrix(o) for o in setup.observables])
    return np.array(setup.states), np.asarray(setup.grid.times, dtype=float), M, Y


def partial_loss(h_params, setup: PartialMeasSetup, traj: Trajectory) -> float:
    """Mean squared error of the ansatz prediction against the recorded values."""
    h = np.asarray(h_params, dtype=float)
    if h.shape != (15,):
        raise InvalidArgument("expected 15 Pauli coefficients")
    return _loss_and_grad(h, *_problem(setup, traj), with_grad=False)[0]


def partial_loss_grad(h_params, setup: PartialMeasSetup, traj: Trajectory):
    """``(loss, gradient)`` with the analytic gradient."""
    return _loss_and_grad(np.asarray(h_params, dtype=float), *_problem(setup, traj))


DEFAULT_PARTIAL_OPT = OptimizerConfig(algorithm="adam", learning_rate=0.05, epochs=3000)
POLISH_OPT = OptimizerConfig(algorithm="bfgs", epochs=500, tolerance=1e-14)


def _run_restart(f, x0, opt):
    x, hist = adam_minimize(f, x0, opt)
    try:
        xp, hp = bfgs_minimize(f, x, POLISH_OPT)
    except Stalled as exc:
        xp, hp = exc.x, exc.history
    if f(xp)[0] <= f(x)[0]:
        x = xp
    return x, hist.loss, hp.loss[1:]


def reconstruct_partial(traj: Trajectory, setup: PartialMeasSetup,
                        opt: OptimizerConfig = DEFAULT_PARTIAL_OPT, seed=None,
                        h_true=None) -> ReconstructionReport:
    """Best of ``setup.restarts`` descents from standard-normal starting points."""
    problem = _problem(setup, traj)
    f = lambda x: _loss_and_grad(x, *problem)  # noqa: E731
    rng = np.random.default_rng(opt.seed if seed is None else seed)
    starts = rng.standard_normal((setup.restarts, 15))
    results = []
    for k, x0 in enumerate(starts):
        try:
            x, hist, polish = _run_restart(f, x0, opt)
        except Divergence:
            continue
        results.append((f(x)[0], k, x, hist, polish))
    if not results:
        raise OptimizationFailure("all restarts diverged")
    best = min(results, key=lambda r: (r[0], r[1]))
    loss, k, x, hist, polish = best
    params = {"h": x, "labels": pauli_labels(2)}
    errors = {}
    if h_true is not None:
        h_true = np.asarray(h_true, dtype=float)
        errors["max_coeff"] = float(np.max(np.abs(x - h_true)))
        errors["h"] = relative_error(x, h_true)
    restart_losses = [float("nan")] * setup.restarts
    for r in results:
        restart_losses[r[1]] = float(r[0])
    info = {"final_loss": loss, "best_restart": k, "restart_losses": restart_losses,
            "n_states": len(setup.states), "polish_loss": polish}
    return ReconstructionReport("partial", params, hist, errors, info)
