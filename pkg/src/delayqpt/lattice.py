"""Ising-lattice parameter fitting with a Strang-splitting circuit.

The lattice Hamiltonian is

    H = - sum_<j,l> J_jl Z_j Z_l - sum_j h_j . sigma_j

and one time step dt is approximated by half-step local rotations, all
two-site ZZ phases, then the mirrored half-step rotations. Circuit
parameters are fitted so that the Born distributions after 1, 2, 3 steps
match exact reference distributions in Kullback-Leibler divergence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ResourceLimit
from .optim import OptimizerConfig, finite_diff_gradient, rmsprop_minimize
from .quantum import MAX_DENSE_QUBITS, PAULI, PauliSumOperator
from .report import ReconstructionReport
from .sampling import simulate_born, uniform_times

KL_FLOOR = 1e-12
Site = tuple  # (row, col)


def _edges(rows: int, cols: int, periodic: bool) -> list:
    edges = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if periodic:
                    r2, c2 = r2 % rows, c2 % cols
                elif r2 >= rows or c2 >= cols:
                    continue
                e = tuple(sorted(((r, c), (r2, c2))))
                if e[0] != e[1] and e not in edges:
                    edges.append(e)
    return edges


def _site_key(s) -> str:
    return f"{s[0]},{s[1]}"


def _edge_key(e) -> str:
    return f"{_site_key(e[0])}-{_site_key(e[1])}"


def _parse_site(text: str) -> Site:
    r, c = text.split(",")
    return int(r), int(c)


@dataclass(frozen=True)
class LatticeSpec:
    rows: int
    cols: int
    periodic: bool
    couplings: dict  # edge -> J
    fields: dict  # site -> 3-vector h
    uniform: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgument("lattice dimensions must be positive")
        if self.rows * self.cols > MAX_DENSE_QUBITS:
            raise ResourceLimit(f"{self.rows}x{self.cols} exceeds {MAX_DENSE_QUBITS} sites")
        if set(self.couplings) != set(self.edges):
            raise InvalidArgument("couplings must cover exactly the lattice edges")
        if set(self.fields) != set(self.sites):
            raise InvalidArgument("fields must cover exactly the lattice sites")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    @property
    def sites(self) -> list:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    @property
    def edges(self) -> list:
        return _edges(self.rows, self.cols, self.periodic)

    def index(self, site) -> int:
        """Qubit index of a site (row-major; qubit 0 is the leftmost tensor factor)."""
        return site[0] * self.cols + site[1]

    def J_vector(self) -> np.ndarray:
        return np.array([self.couplings[e] for e in self.edges], dtype=float)

    def h_matrix(self) -> np.ndarray:
        return np.array([self.fields[s] for s in self.sites], dtype=float)

    def with_params(self, J, h) -> "LatticeSpec":
        J = np.broadcast_to(np.asarray(J, dtype=float), (len(self.edges),))
        h = np.broadcast_to(np.asarray(h, dtype=float), (self.n_sites, 3))
        return LatticeSpec(self.rows, self.cols, self.periodic,
                           {e: float(j) for e, j in zip(self.edges, J)},
                           {s: tuple(float(v) for v in hv) for s, hv in zip(self.sites, h)},
                           self.uniform)

    def hamiltonian(self) -> PauliSumOperator:
        n = self.n_sites
        terms = []
        for e, J in self.couplings.items():
            label = ["I"] * n
            label[self.index(e[0])] = label[self.index(e[1])] = "Z"
            terms.append(("".join(label), -J))
        for s, hv in self.fields.items():
            for a, coeff in zip("XYZ", hv):
                if coeff != 0:
                    label = ["I"] * n
                    label[self.index(s)] = a
                    terms.append(("".join(label), -coeff))
        return PauliSumOperator(n, tuple(terms))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "periodic": self.periodic,
                "uniform": self.uniform,
                "J": {_edge_key(e): self.couplings[e] for e in self.edges},
                "h": {_site_key(s): list(self.fields[s]) for s in self.sites}}

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        try:
            couplings = {}
            for k, v in d["J"].items():
                a, b = k.split("-")
                couplings[tuple(sorted((_parse_site(a), _parse_site(b))))] = float(v)
            fields = {_parse_site(k): tuple(float(x) for x in v) for k, v in d["h"].items()}
            return cls(int(d["rows"]), int(d["cols"]), bool(d["periodic"]),
                       couplings, fields, bool(d.get("uniform", False)))
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidArgument(f"malformed lattice JSON: {exc}") from exc

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path) -> "LatticeSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_lattice(rows: int, cols: int, periodic: bool = True, J=None, h=None,
                  seed=None) -> LatticeSpec:
    """Uniform lattice from (J, h), or a disordered draw from ``seed``.

    Disorder law: J_jl ~ U[0.8, 1.2] per edge and h_j = (0.5 N(0,1), 0, 0).
    """
    if rows * cols > MAX_DENSE_QUBITS:
        raise ResourceLimit(f"{rows}x{cols} exceeds {MAX_DENSE_QUBITS} sites")
    edges = _edges(rows, cols, periodic)
    sites = [(r, c) for r in range(rows) for c in range(cols)]
    if J is not None or h is not None:
        if seed is not None:
            raise InvalidArgument("pass either explicit parameters or a disorder seed")
        J = 1.0 if J is None else float(J)
        h = np.zeros(3) if h is None else np.asarray(h, dtype=float)
        return LatticeSpec(rows, cols, periodic, {e: J for e in edges},
                           {s: tuple(h.tolist()) for s in sites}, uniform=True)
    rng = np.random.default_rng(seed)
    Js = rng.uniform(0.8, 1.2, size=len(edges))
    hx = 0.5 * rng.standard_normal(len(sites))
    return LatticeSpec(rows, cols, periodic, {e: float(j) for e, j in zip(edges, Js)},
                       {s: (float(x), 0.0, 0.0) for s, x in zip(sites, hx)}, uniform=False)


# -- Strang circuit ----------------------------------------------------------

def _local_gate(h, tau):
    """exp(+i tau h.sigma) and its derivatives with respect to h."""
    h = np.asarray(h, dtype=float)
    nh = np.linalg.norm(h)
    th = tau * nh
    n = h / nh if nh > 0 else np.zeros(3)
    sig = np.array([PAULI[a] for a in "XYZ"])
    ns = np.einsum("a,aij->ij", n, sig)
    g = np.cos(th) * np.eye(2) + 1j * np.sin(th) * ns
    sinc = tau * np.sinc(th / np.pi)  # sin(th) / |h|
    dg = (tau * n[:, None, None] * (-np.sin(th) * np.eye(2) + 1j * np.cos(th) * ns)
          + 1j * sinc * (sig - n[:, None, None] * ns))
    return g, dg


@dataclass
class TrotterCircuit:
    """One Strang step of ``spec`` with time step ``dt``.

    Signs follow the Hamiltonian: local half steps exp(+i dt h.sigma / 2) and
    two-site phases exp(+i dt J Z Z), so the step approximates exp(-i H dt).
    """

    spec: LatticeSpec
    dt: float

    def layers(self) -> list:
        """Gate layout: ("local", site) * n, ("zz", edge) * |E|, ("local", site) * n."""
        loc = [("local", s) for s in self.spec.sites]
        return loc + [("zz", e) for e in self.spec.edges] + loc

    @property
    def gate_count(self) -> int:
        return len(self.layers())

    @cached_property
    def zz_signs(self) -> np.ndarray:
        """(|E|, 2^n) array of the eigenvalues of Z_j Z_l on basis states."""
        n = self.spec.n_sites
        bits = (np.arange(1 << n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
        z = 1 - 2 * bits
        pairs = [(self.spec.index(a), self.spec.index(b)) for a, b in self.spec.edges]
        if not pairs:
            return np.zeros((0, 1 << n))
        return np.array([z[:, i] * z[:, j] for i, j in pairs], dtype=float)


def _apply_1q(psi_t, gate, axis):
    out = np.tensordot(gate, psi_t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _reduced(y_t, b_t, axis):
    """A[m, n] = sum over the other axes of y[.., m, ..] conj(b[.., n, ..])."""
    y = np.moveaxis(y_t, axis, 0).reshape(2, -1)
    b = np.moveaxis(b_t, axis, 0).reshape(2, -1)
    return y @ b.conj().T


class _Step:
    """Strang step with fixed numeric parameters, plus its adjoint."""

    def __init__(self, circ: TrotterCircuit, J, h):
        self.n = circ.spec.n_sites
        self.dt = circ.dt
        self.S = circ.zz_signs
        J = np.asarray(J, dtype=float)
        gates = [_local_gate(hv, circ.dt / 2) for hv in np.asarray(h, dtype=float)]
        self.g = [g for g, _ in gates]
        self.dg = [dg for _, dg in gates]
        self.zphase = np.exp(1j * circ.dt * (J @ self.S)) if len(J) else np.ones(1 << self.n)

    def _local(self, psi, adjoint=False):
        t = psi.reshape((2,) * self.n)
        for j, g in enumerate(self.g):
            t = _apply_1q(t, g.conj().T if adjoint else g, j)
        return t.reshape(-1)

    def forward(self, psi):
        return self._local(self.zphase * self._local(psi))

    def backward(self, x0, a):
        """Given input x0 and adjoint a of the output, return (adjoint of x0, gJ, gh).

        Gradients are of Re <a, d(step) x0> with respect to J (per edge) and h (per site).
        """
        x1 = self._local(x0)
        x2 = self.zphase * x1
        x3 = self._local(x2)
        gh = np.zeros((self.n, 3))
        self._local_grad(x3, a, gh)
        b2 = self._local(a, adjoint=True)
        gJ = -self.dt * (self.S @ (b2.conj() * x2)).imag
        b1 = self.zphase.conj() * b2
        self._local_grad(x1, b1, gh)
        return self._local(b1, adjoint=True), gJ, gh

    def _local_grad(self, y, b, gh):
        yt = y.reshape((2,) * self.n)
        bt = b.reshape((2,) * self.n)
        for j in range(self.n):
            A = _reduced(yt, bt, j)
            K = self.dg[j] @ self.g[j].conj().T
            gh[j] += np.einsum("aij,ji->a", K, A).real


def apply_trotter(circ: TrotterCircuit, psi, steps: int = 1) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (1 << circ.spec.n_sites,):
        raise InvalidArgument("state dimension does not match the lattice")
    if steps < 0:
        raise InvalidArgument("steps must be >= 0")
    step = _Step(circ, circ.spec.J_vector(), circ.spec.h_matrix())
    for _ in range(steps):
        psi = step.forward(psi)
    return psi


def kl_divergence(p, p_tilde, floor: float = KL_FLOOR) -> float:
    """sum_j p_j log(p_j / p~_j) with p~ clamped below at ``floor`` and 0 log 0 = 0."""
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    q = np.asarray(getattr(p_tilde, "probs", p_tilde), dtype=float)
    if p.shape != q.shape:
        raise InvalidArgument("distributions have different lengths")
    q = np.maximum(q, floor)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


# -- parameter layouts -------------------------------------------------------

@dataclass(frozen=True)
class ParamLayout:
    """Maps a flat parameter vector to per-edge J and per-site h.

    ``uniform``: (J, hx, hy, hz) shared by all edges / sites.
    ``disorder``: one J per edge, then one x-field per site.
    """

    mode: str
    n_edges: int
    n_sites: int

    def __post_init__(self):
        if self.mode not in ("uniform", "disorder"):
            raise InvalidArgument(f"unknown parameter mode {self.mode!r}")

    @property
    def size(self) -> int:
        return 4 if self.mode == "uniform" else self.n_edges + self.n_sites

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise InvalidArgument(f"expected {self.size} parameters")
        if self.mode == "uniform":
            return np.full(self.n_edges, x[0]), np.tile(x[1:4], (self.n_sites, 1))
        h = np.zeros((self.n_sites, 3))
        h[:, 0] = x[self.n_edges:]
        return x[:self.n_edges].copy(), h

    def pack_grad(self, gJ, gh):
        if self.mode == "uniform":
            return np.concatenate([[np.sum(gJ)], np.sum(gh, axis=0)])
        return np.concatenate([gJ, gh[:, 0]])

    def from_spec(self, spec: LatticeSpec) -> np.ndarray:
        J, h = spec.J_vector(), spec.h_matrix()
        if self.mode == "uniform":
            return np.concatenate([[J[0]], h[0]])
        return np.concatenate([J, h[:, 0]])


def layout_for(spec: LatticeSpec, mode: str | None = None) -> ParamLayout:
    mode = mode or ("uniform" if spec.uniform else "disorder")
    return ParamLayout(mode, len(spec.edges), spec.n_sites)


def reference_born(spec: LatticeSpec, psi0, dt: float, count: int = 3, tol: float = 1e-10):
    """Exact Born distributions at dt, 2 dt, ..., count dt."""
    return simulate_born(spec.hamiltonian(), psi0, uniform_times(dt, count), tol=tol)


def _check_reference(reference, dt):
    for k, d in enumerate(reference, start=1):
        if abs(d.time - k * dt) > 1e-9 * max(1.0, k * dt):
            raise InvalidArgument("reference times must be dt, 2 dt, 3 dt, ...")


def lattice_loss(params, spec: LatticeSpec, psi0, reference, dt: float,
                 layout: ParamLayout | None = None, with_grad: bool = False):
    """Sum over reference times of KL(p_ref || p_circuit).

    With ``with_grad`` returns ``(loss, gradient)`` using the adjoint of the
    circuit; otherwise the loss alone.
    """
    layout = layout or layout_for(spec)
    _check_reference(reference, dt)
    J, h = layout.unpack(params)
    circ = TrotterCircuit(spec, dt)
    step = _Step(circ, J, h)
    states = [np.asarray(psi0, dtype=complex)]
    for _ in reference:
        states.append(step.forward(states[-1]))
    loss = 0.0
    adj = []
    for d, phi in zip(reference, states[1:]):
        q = np.abs(phi) ** 2
        loss += kl_divergence(d.probs, q)
        if with_grad:
            # dKL/dq = -p / q where unclamped; dq = 2 Re(conj(phi) dphi)
            dq = np.where(q > KL_FLOOR, -d.probs / np.maximum(q, KL_FLOOR), 0.0)
            adj.append(2 * dq * phi)
    if not with_grad:
        return loss
    gJ = np.zeros(len(J))
    gh = np.zeros_like(h)
    a = np.zeros_like(states[0])
    for k in range(len(reference), 0, -1):
        a = a + adj[k - 1]
        a, dJ, dh = step.backward(states[k - 1], a)
        gJ += dJ
        gh += dh
    return loss, layout.pack_grad(gJ, gh)


def _param_errors(x, truth, layout: ParamLayout) -> dict:
    if layout.mode == "uniform":
        return {"J": float(abs(x[0] - truth[0]) / abs(truth[0])),
                "h": float(np.linalg.norm(x[1:] - truth[1:]) / np.linalg.norm(truth[1:]))}
    ne = layout.n_edges
    rel = np.abs(x - truth) / np.abs(truth)
    return {"J": float(np.max(rel[:ne])), "h": float(np.max(rel[ne:]))}


def initial_params(layout: ParamLayout, seed=None, noise: float = 0.01) -> np.ndarray:
    """Uniform: J = 0.5, h = (0, 0, 0.5) + noise. Disorder: law means J = 1, h = 0."""
    rng = np.random.default_rng(seed)
    if layout.mode == "uniform":
        return np.array([0.5, 0.0, 0.0, 0.5]) + np.r_[0.0, noise * rng.standard_normal(3)]
    return np.concatenate([np.ones(layout.n_edges), np.zeros(layout.n_sites)])


DEFAULT_LATTICE_OPT = OptimizerConfig(algorithm="rmsprop", learning_rate=0.005, epochs=500)


def reconstruct_lattice(reference, psi0, spec: LatticeSpec, dt: float,
                        opt: OptimizerConfig = DEFAULT_LATTICE_OPT, mode: str | None = None,
                        truth: LatticeSpec | None = None, gradient: str = "analytic",
                        x0=None, seed=None) -> ReconstructionReport:
    """RMSProp descent of :func:`lattice_loss` from the standard initial guess.

    ``spec`` fixes the lattice geometry (its parameter values are ignored);
    ``truth`` enables per-epoch relative-error histories.
    """
    layout = layout_for(spec, mode)
    if gradient not in ("analytic", "fd"):
        raise InvalidArgument("gradient must be 'analytic' or 'fd'")
    if gradient == "analytic":
        f = lambda x: lattice_loss(x, spec, psi0, reference, dt, layout, with_grad=True)  # noqa: E731
    else:
        g = lambda x: lattice_loss(x, spec, psi0, reference, dt, layout)  # noqa: E731
        f = lambda x: (g(x), finite_diff_gradient(g, x, opt.finite_diff_step))  # noqa: E731
    x0 = initial_params(layout, opt.seed if seed is None else seed) if x0 is None else x0
    t = layout.from_spec(truth) if truth is not None else None
    histories = {"J_error": [], "h_error": []} if t is not None else {}

    def record(epoch, x, val, hist):
        if t is not None:
            e = _param_errors(x, t, layout)
            histories["J_error"].append(e["J"])
            histories["h_error"].append(e["h"])

    x, hist = rmsprop_minimize(f, np.asarray(x0, dtype=float), opt, callback=record)
    final = lattice_loss(x, spec, psi0, reference, dt, layout)
    J, h = layout.unpack(x)
    params = {"x": x, "mode": layout.mode, "J": J, "h": h}
    info = {"final_loss": final, "epochs": opt.epochs, "gradient": gradient}
    errors = {}
    if t is not None:
        errors = _param_errors(x, t, layout)
        info["reference_loss"] = lattice_loss(t, spec, psi0, reference, dt, layout)
    return ReconstructionReport(f"lattice-{layout.mode}", params, hist.loss, errors,
                                info, histories)
