"""Relaxed Bloch-picture reconstruction of one- and two-qubit time steps.

Rather than parametrizing rotations, every Bloch matrix in the squaring
chain U_q ~ U_0^(2^q) is an unconstrained real matrix; orthogonality, the
squaring relation and (two qubits) the unit-circle condition of the
entangling angles enter as penalty terms. In two-qubit mode U_0 itself is
composed from four single-qubit blocks and an entangling gate, which keeps
it representable by an SU(4) element.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from .bloch import (
    EntanglementAngles,
    bloch_map,
    coherence_vector,
    entanglement_gate,
    nearest_rotation,
    su2_from_bloch,
    su4_compose,
    su4_compose_grad,
)
from .errors import Divergence, InvalidArgument, Stalled
from .optim import OptimizerConfig, adam_minimize, bfgs_minimize
from .quantum import (
    PauliSumOperator,
    expm_hermitian,
    expm_hermitian_frechet,
    n_qubits_of,
    pauli_index,
    pauli_labels,
    pauli_matrix,
)
from .report import ReconstructionReport, relative_error
from .sampling import Trajectory


@dataclass
class PenaltyWeights:
    w_data: float = 1.0
    w_orth: float = 1.0
    w_steps: float = 1.0
    w_theta: float = 1.0

    def __post_init__(self):
        vals = (self.w_data, self.w_orth, self.w_steps, self.w_theta)
        if not all(np.isfinite(v) and v >= 0 for v in vals) or self.w_data <= 0:
            raise InvalidArgument("penalty weights must be finite, nonnegative, w_data > 0")


@dataclass
class RelaxParams:
    """Chain of relaxed Bloch matrices.

    In ``two_qubit`` mode ``chain[0]`` is ignored: U_0 is composed from
    ``blocks`` (u_a, u_b, u_c, u_d) and ``angles``.
    """

    mode: str
    chain: list
    blocks: Optional[list] = None
    angles: Optional[EntanglementAngles] = None

    @property
    def dim(self) -> int:
        return 3 if self.mode == "single_qubit" else 15

    @property
    def u0(self) -> np.ndarray:
        if self.mode == "two_qubit":
            return su4_compose(*self.blocks, self.angles)
        return self.chain[0]

    def matrices(self) -> list:
        return [self.u0] + list(self.chain[1:])

    def free_matrices(self) -> list:
        if self.mode == "two_qubit":
            return list(self.chain[1:]) + list(self.blocks)
        return list(self.chain)

    def pack(self) -> np.ndarray:
        parts = [m.ravel() for m in self.free_matrices()]
        if self.mode == "two_qubit":
            parts += [self.angles.c, self.angles.s]
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray) -> "RelaxParams":
        x = np.asarray(x, dtype=float)
        d = self.dim
        q = len(self.chain)
        if self.mode == "single_qubit":
            chain = [x[k * 9:(k + 1) * 9].reshape(3, 3) for k in range(q)]
            return RelaxParams(self.mode, chain)
        off = (q - 1) * d * d
        chain = [None] + [x[k * d * d:(k + 1) * d * d].reshape(d, d) for k in range(q - 1)]
        blocks = [x[off + 9 * k: off + 9 * (k + 1)].reshape(3, 3) for k in range(4)]
        off += 36
        angles = EntanglementAngles(x[off:off + 3], x[off + 3:off + 6])
        return RelaxParams(self.mode, chain, blocks, angles)

    def projected(self) -> "RelaxParams":
        """Nearest valid point: rotations via polar projection, unit-circle angles."""
        chain = [None if m is None else nearest_rotation(m) for m in self.chain]
        if self.mode == "single_qubit":
            return RelaxParams(self.mode, chain)
        blocks = [nearest_rotation(b) for b in self.blocks]
        return RelaxParams(self.mode, chain, blocks, self.angles.normalized())


def chain_from_u0(u0, count: int) -> list:
    out = [np.asarray(u0, dtype=float)]
    for _ in range(count - 1):
        out.append(out[-1] @ out[-1])
    return out


@dataclass
class RelaxData:
    """Trajectory values keyed by chain index and Bloch basis index."""

    r0: np.ndarray
    q: np.ndarray
    k: np.ndarray
    y: np.ndarray
    dt: float
    n_chain: int

    @property
    def n_qubits(self) -> int:
        return {3: 1, 15: 2}[len(self.r0)]


def prepare_data(traj: Trajectory, r0, dt: float | None = None) -> RelaxData:
    """Map trajectory records onto the gamma = 2 squaring chain."""
    if len(traj) == 0:
        raise InvalidArgument("empty trajectory")
    if len(traj.state_ids) != 1:
        raise InvalidArgument("relaxation uses a single initial state")
    r0 = np.asarray(r0, dtype=float)
    if r0.shape not in ((3,), (15,)):
        raise InvalidArgument("initial Bloch vector must have length 3 or 15")
    times = np.array([r.time for r in traj.records])
    if dt is None:
        dt = traj.metadata.get("grid", {}).get("dt", float(times.min()))
    ratio = times / dt
    q = np.rint(np.log2(ratio)).astype(int)
    if np.any(q < 0) or np.any(np.abs(dt * 2.0 ** q - times) > 1e-9 * times):
        raise InvalidArgument("trajectory times are not on the dt * 2**q grid")
    n = {3: 1, 15: 2}[len(r0)]
    k = []
    for r in traj.records:
        if len(r.observable) != n:
            raise InvalidArgument(f"observable {r.observable} is not an {n}-qubit Pauli string")
        k.append(pauli_index(r.observable))
    y = np.array([r.value for r in traj.records])
    return RelaxData(r0, q, np.array(k), y, float(dt), int(q.max()) + 1)


# -- loss terms --------------------------------------------------------------
# Matrices are handled as stacked (count, d, d) arrays.

def _orth_terms(mats):
    mats = np.asarray(mats)
    D = mats @ mats.transpose(0, 2, 1) - np.eye(mats.shape[-1])
    return float(np.sum(D * D)), 4 * D @ mats


def _steps_terms(mats):
    mats = np.asarray(mats)
    grads = np.zeros_like(mats)
    if len(mats) < 2:
        return 0.0, grads
    prev = mats[:-1]
    D = mats[1:] - prev @ prev
    grads[1:] += 2 * D
    grads[:-1] -= 2 * (D @ prev.transpose(0, 2, 1) + prev.transpose(0, 2, 1) @ D)
    return float(np.sum(D * D)), grads


def _theta_terms(angles: EntanglementAngles):
    e = angles.c ** 2 + angles.s ** 2 - 1
    return float(np.sum(e * e)), 4 * e * angles.c, 4 * e * angles.s


def _data_terms(mats, data: RelaxData):
    mats = np.asarray(mats)
    states = mats @ data.r0
    res = states[data.q, data.k] - data.y
    val = float(np.mean(res ** 2))
    rows = np.zeros(states.shape)
    np.add.at(rows, (data.q, data.k), 2.0 * res / len(res))
    return val, rows[:, :, None] * data.r0[None, None, :]


def _orth_all(params: RelaxParams):
    """Orthogonality terms for the free chain entries and (two qubits) the blocks."""
    if params.mode == "single_qubit":
        return _orth_terms(params.chain)
    v1, g1 = _orth_terms(params.chain[1:]) if len(params.chain) > 1 else (0.0, np.zeros((0, 15, 15)))
    v2, g2 = _orth_terms(params.blocks)
    return v1 + v2, (g1, g2)


def loss_orth(params: RelaxParams) -> float:
    return _orth_all(params)[0]


def loss_steps(params: RelaxParams) -> float:
    return _steps_terms(params.matrices())[0]


def loss_theta(angles: EntanglementAngles) -> float:
    return _theta_terms(angles)[0]


def loss_data(params: RelaxParams, traj, r0=None, dt=None) -> float:
    data = traj if isinstance(traj, RelaxData) else prepare_data(traj, r0, dt)
    mats = params.matrices()
    if data.n_chain > len(mats):
        raise InvalidArgument("trajectory needs more chain matrices than provided")
    return _data_terms(mats, data)[0]


def total_loss(params: RelaxParams, data: RelaxData, weights: PenaltyWeights,
               with_grad: bool = True):
    """Weighted sum of all terms; returns ``(value, parts, grad_vector)``."""
    mats = params.matrices()
    vd, gd = _data_terms(mats, data)
    vs, gs = _steps_terms(mats)
    vo, go = _orth_all(params)
    parts = {"data": vd, "steps": vs, "orth": vo}
    value = weights.w_data * vd + weights.w_steps * vs + weights.w_orth * vo
    if params.mode == "two_qubit":
        vt, gc, gsn = _theta_terms(params.angles)
        parts["theta"] = vt
        value += weights.w_theta * vt
    if not with_grad:
        return value, parts, None
    gchain = weights.w_data * gd + weights.w_steps * gs
    if params.mode == "single_qubit":
        return value, parts, (gchain + weights.w_orth * go).ravel()
    gfree = gchain[1:] + weights.w_orth * go[0]
    ga, gb, gcc, gdd, gcos, gsin = su4_compose_grad(gchain[0], *params.blocks, params.angles)
    gblocks = np.array([ga, gb, gcc, gdd]) + weights.w_orth * go[1]
    gcos = gcos + weights.w_theta * gc
    gsin = gsin + weights.w_theta * gsn
    return value, parts, np.concatenate([gfree.ravel(), gblocks.ravel(), gcos, gsin])


# -- optimization ------------------------------------------------------------

def init_params(mode: str, n_chain: int, seed=None, sigma: float = 0.01) -> RelaxParams:
    """Identity plus small Gaussian noise; angles near theta = 0."""
    rng = np.random.default_rng(seed)
    d = 3 if mode == "single_qubit" else 15
    chain = [np.eye(d) + sigma * rng.standard_normal((d, d)) for _ in range(n_chain)]
    if mode == "single_qubit":
        return RelaxParams(mode, chain)
    chain[0] = None
    blocks = [np.eye(3) + sigma * rng.standard_normal((3, 3)) for _ in range(4)]
    angles = EntanglementAngles(1 + sigma * rng.standard_normal(3), sigma * rng.standard_normal(3))
    return RelaxParams(mode, chain, blocks, angles)


DEFAULT_RELAX_OPT = OptimizerConfig(algorithm="adam", learning_rate=0.01, epochs=5000)


@dataclass
class RelaxResult:
    params: RelaxParams
    history: list
    parts: dict
    data: RelaxData = field(repr=False, default=None)
    loss: float = float("nan")  # weighted total at the returned params
    restarts_used: int = 1
    polish_history: list = field(default_factory=list)


def _truncate(data: RelaxData, count: int) -> RelaxData:
    keep = data.q < count
    return RelaxData(data.r0, data.q[keep], data.k[keep], data.y[keep], data.dt, count)


def _adam_run(template: RelaxParams, data: RelaxData, weights, opt):
    def objective(x):
        value, _, grad = total_loss(template.unpack(x), data, weights)
        return value, grad

    x, hist = adam_minimize(objective, template.pack(), opt)
    return template.unpack(x), hist.loss


def _lbfgs_polish(params: RelaxParams, data: RelaxData, weights, maxiter: int = 20000):
    losses = []

    def objective(x):
        value, _, grad = total_loss(params.unpack(x), data, weights)
        return value, grad

    res = scipy.optimize.minimize(
        objective, params.pack(), jac=True, method="L-BFGS-B",
        callback=lambda xk: losses.append(objective(xk)[0]),
        options={"maxiter": maxiter, "maxfun": 2 * maxiter, "ftol": 1e-30, "gtol": 1e-14})
    return params.unpack(res.x), losses


def _extend(params: RelaxParams) -> RelaxParams:
    """Append U_next = U_last^2 to the chain."""
    last = params.u0 if len(params.chain) == 1 else params.chain[-1]
    return RelaxParams(params.mode, list(params.chain) + [last @ last],
                       params.blocks, params.angles)


def optimize_relax(traj: Trajectory, weights: PenaltyWeights = None,
                   opt: OptimizerConfig = DEFAULT_RELAX_OPT, seed=None,
                   r0=None, psi=None, dt=None, schedule="joint",
                   restarts: int = 1, target_loss: float = 0.0, polish: bool = False,
                   init_sigma: float = 0.01, restart_sigma: float | None = None) -> RelaxResult:
    """Adam descent on the penalized relaxation loss.

    The initial state enters through its coherence vector; pass either
    ``r0`` or the statevector ``psi``.

    ``schedule="joint"`` fits the whole chain at once from a near-identity
    start. ``schedule="progressive"`` first fits U_0, U_1 on the two earliest
    times, then repeatedly appends U_{q+1} = U_q^2 and the next time's data;
    ``opt.epochs`` is split evenly over the stages.

    ``polish`` finishes each run with L-BFGS on the same loss. With
    ``restarts > 1`` further starts (noise ``restart_sigma``) are tried
    until one reaches ``target_loss``; the lowest-loss run is returned.
    ``schedule`` may be a sequence, cycled over the restarts.
    """
    weights = weights or PenaltyWeights()
    if len(traj) == 0:
        raise InvalidArgument("empty trajectory")
    if restarts < 1:
        raise InvalidArgument("restarts must be >= 1")
    schedules = (schedule,) if isinstance(schedule, str) else tuple(schedule)
    if not schedules or any(x not in ("joint", "progressive") for x in schedules):
        raise InvalidArgument(f"unknown schedule {schedule!r}")
    if r0 is None:
        if psi is None:
            raise InvalidArgument("need the initial state (r0 or psi)")
        r0 = coherence_vector(psi)
    data = prepare_data(traj, r0, dt)
    mode = "single_qubit" if data.n_qubits == 1 else "two_qubit"
    base = opt.seed if seed is None else seed
    best = None
    for k in range(restarts):
        s = base if k == 0 else [base, k]
        sigma = init_sigma if k == 0 or restart_sigma is None else restart_sigma
        if schedules[k % len(schedules)] == "joint" or data.n_chain <= 2:
            params, history = _adam_run(init_params(mode, data.n_chain, s, sigma),
                                        data, weights, opt)
        else:
            counts = range(2, data.n_chain + 1)
            stage_opt = opt.with_(epochs=max(1, opt.epochs // len(counts)))
            params, history = init_params(mode, 2, s, sigma), []
            for count in counts:
                if count > 2:
                    params = _extend(params)
                params, h = _adam_run(params, _truncate(data, count), weights, stage_opt)
                history += h
        polished = []
        if polish:
            params, polished = _lbfgs_polish(params, data, weights)
        value, parts, _ = total_loss(params, data, weights, with_grad=False)
        if best is None or value < best.loss:
            best = RelaxResult(params, history, parts, data, value, polish_history=polished)
        if value <= target_loss:
            break
    best.restarts_used = k + 1
    return best


# -- Hamiltonian extraction --------------------------------------------------

def _log_hamiltonian(U: np.ndarray, dt: float, warn: bool = True) -> np.ndarray:
    """Principal-branch H with exp(-i H dt) = U (eigenphases in (-pi, pi])."""
    ev, V = np.linalg.eig(U)
    phases = np.angle(ev)
    if warn and np.any(np.pi - np.abs(phases) < 1e-6):
        warnings.warn("eigenphase near +-pi: H is only fixed modulo 2 pi / dt", stacklevel=3)
    # U is normal; re-orthonormalize eigenvectors for degenerate phases
    Q, _ = np.linalg.qr(V)
    H = Q @ np.diag(-phases / dt) @ Q.conj().T
    return 0.5 * (H + H.conj().T)


def _pauli_coeffs(H: np.ndarray) -> np.ndarray:
    n = n_qubits_of(H.shape[0])
    return np.array([np.trace(pauli_matrix(l) @ H).real / (1 << n) for l in pauli_labels(n)])


def bloch_fit_loss(coeffs, target, dt, n):
    """||bloch_map(exp(-i H dt)) - target||_F^2 and its gradient in the Pauli coefficients."""
    P = np.array([pauli_matrix(l) for l in pauli_labels(n)])
    H = np.einsum("k,kij->ij", coeffs, P)
    lam, V = np.linalg.eigh(H)
    U, dU = expm_hermitian_frechet(lam, V, dt, P)
    B = bloch_map(U)
    D = B - target
    val = float(np.sum(D * D))
    # dL = Re tr(G dU) with G = sum_ab D_ab P_b U^dagger P_a
    Ud = U.conj().T
    G = np.einsum("ab,bij,jk,akl->il", D, P, Ud, P)
    grad = np.einsum("ij,kji->k", G, dU).real * (4.0 / (1 << n))
    return val, grad


def extract_hamiltonian(params: RelaxParams, dt: float, opt: OptimizerConfig | None = None
                        ) -> PauliSumOperator:
    """Hamiltonian whose time-dt Bloch matrix matches U_0 of the (projected) chain."""
    valid = params.projected()
    if params.mode == "single_qubit":
        if np.linalg.norm(params.u0 @ params.u0.T - np.eye(3)) > 1e-3:
            warnings.warn("U_0 is far from orthogonal; extraction is unreliable", stacklevel=2)
        U = su2_from_bloch(valid.u0)
        return PauliSumOperator.from_vector(_pauli_coeffs(_log_hamiltonian(U, dt)), 1)
    target = valid.u0
    blocks = [su2_from_bloch(b) for b in valid.blocks]
    U = np.kron(blocks[0], blocks[1]) @ entanglement_gate(valid.angles) \
        @ np.kron(blocks[2], blocks[3])
    # the composed SU(4) element is fixed only up to a fourth root of unity
    starts = []
    for phase in (1, 1j, -1, -1j):
        c = _pauli_coeffs(_log_hamiltonian(phase * U, dt, warn=False))
        starts.append((bloch_fit_loss(c, target, dt, 2)[0], float(np.linalg.norm(c)), c))
    starts.sort(key=lambda s: (s[0], s[1]))
    x0 = starts[0][2]
    opt = opt or OptimizerConfig(algorithm="bfgs", epochs=500, tolerance=1e-10)
    try:
        x, _ = bfgs_minimize(lambda c: bloch_fit_loss(c, target, dt, 2), x0, opt)
    except Stalled as exc:
        x = exc.x
    return PauliSumOperator.from_vector(x, 2)


def reconstruct_relax(traj: Trajectory, psi, weights: PenaltyWeights = None,
                      opt: OptimizerConfig = DEFAULT_RELAX_OPT, seed=None, dt=None,
                      h_true=None, **kw) -> ReconstructionReport:
    """Relaxation fit plus Hamiltonian extraction, packaged as a report.

    Extra keyword arguments go to :func:`optimize_relax`.
    """
    res = optimize_relax(traj, weights, opt, seed=seed, psi=psi, dt=dt, **kw)
    dt = res.data.dt
    H = extract_hamiltonian(res.params, dt)
    u0 = res.params.projected().u0
    params = {"h": H.to_vector(), "labels": pauli_labels(H.n_qubits), "u0": u0}
    errors = {}
    if h_true is not None:
        h_true = np.asarray(h_true, dtype=float)
        H_true = PauliSumOperator.from_vector(h_true, H.n_qubits)
        errors["h"] = relative_error(H.to_vector(), h_true)
        errors["U"] = relative_error(u0, bloch_map(expm_hermitian(H_true, dt)))
    info = {"final_loss": res.loss, "parts": res.parts, "restarts_used": res.restarts_used,
            "polish_loss": res.polish_history, "mode": res.params.mode}
    pipeline = "relax1q" if res.params.mode == "single_qubit" else "relax2q"
    return ReconstructionReport(pipeline, params, res.history, errors, info)


__all__ = [
    "PenaltyWeights", "RelaxParams", "RelaxData", "prepare_data", "loss_orth", "loss_steps",
    "loss_theta", "loss_data", "total_loss", "optimize_relax", "extract_hamiltonian",
    "chain_from_u0", "init_params", "bloch_fit_loss", "reconstruct_relax", "Divergence",
]
