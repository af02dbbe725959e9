"""Dense statevector simulation, Pauli-string algebra and exact propagators.

States and unitaries are plain complex numpy arrays; the qubit count is
inferred from the length (qubit 0 is the leftmost tensor factor, i.e. the
most significant bit of the basis index).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConvergenceFailure,
    InvalidArgument,
    InvalidOperator,
    ResourceLimit,
)

MAX_DENSE_QUBITS = 12
HERMITIAN_TOL = 1e-10

PAULI_LABELS = "IXYZ"
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise InvalidArgument(f"dimension {dim} is not a power of two")
    return n


def _check_qubits(n: int) -> None:
    if n > MAX_DENSE_QUBITS:
        raise ResourceLimit(f"{n} qubits exceeds the dense limit of {MAX_DENSE_QUBITS}")


# -- Pauli strings -----------------------------------------------------------

def _validate_label(label: str) -> str:
    label = label.upper()
    if not label or any(ch not in PAULI_LABELS for ch in label):
        raise InvalidArgument(f"invalid Pauli string {label!r}")
    return label


def pauli_matrix(label: str) -> np.ndarray:
    """Dense Kronecker product for a Pauli string such as ``"XZI"``."""
    label = _validate_label(label)
    _check_qubits(len(label))
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return out


@lru_cache(maxsize=4096)
def _pauli_action(label: str):
    # P|b> = phase(b) |b ^ flip>, so (P psi)[c] = phase(c ^ flip) psi[c ^ flip]
    n = len(label)
    flip = 0
    zmask = 0
    ny = 0
    for k, ch in enumerate(label):
        bit = 1 << (n - 1 - k)
        if ch in "XY":
            flip |= bit
        if ch in "YZ":
            zmask |= bit
        if ch == "Y":
            ny += 1
    idx = np.arange(1 << n)
    src = idx ^ flip
    parity = np.zeros(1 << n, dtype=np.int64)
    masked = src & zmask
    while np.any(masked):
        parity ^= masked & 1
        masked = masked >> 1
    phase = (1j ** ny) * (1 - 2 * parity)
    return src, phase.astype(complex)


def apply_pauli(label: str, psi: np.ndarray) -> np.ndarray:
    """Matrix-free application of a Pauli string to a statevector."""
    src, phase = _pauli_action(_validate_label(label))
    if psi.shape[0] != src.shape[0]:
        raise InvalidArgument("Pauli string and state dimension disagree")
    return phase * psi[src]


def pauli_labels(n: int, include_identity: bool = False) -> list[str]:
    """Pauli strings on n qubits in lexicographic order I < X < Y < Z."""
    labels = [""]
    for _ in range(n):
        labels = [lab + ch for lab in labels for ch in PAULI_LABELS]
    return labels if include_identity else labels[1:]


def pauli_index(label: str) -> int:
    """Position of a non-identity string in :func:`pauli_labels` order."""
    label = _validate_label(label)
    k = 0
    for ch in label:
        k = 4 * k + PAULI_LABELS.index(ch)
    if k == 0:
        raise InvalidArgument("the identity string has no Bloch index")
    return k - 1


# -- Pauli sums --------------------------------------------------------------

@dataclass(frozen=True)
class PauliSumOperator:
    """Hermitian operator sum_k c_k P_k with real coefficients.

    Any all-identity term is dropped on construction (it only contributes a
    global phase to the dynamics), so every instance is traceless.
    """

    n_qubits: int
    terms: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise InvalidArgument("n_qubits must be >= 1")
        merged: dict[str, float] = {}
        for label, coeff in self.terms:
            label = _validate_label(label)
            if len(label) != self.n_qubits:
                raise InvalidArgument(
                    f"string {label!r} has length {len(label)}, expected {self.n_qubits}")
            c = complex(coeff)
            if abs(c.imag) > 0:
                raise InvalidOperator(f"coefficient of {label} is not real")
            merged[label] = merged.get(label, 0.0) + c.real
        ident = "I" * self.n_qubits
        if ident in merged:
            if merged[ident] != 0.0:
                warnings.warn("dropping identity term (global phase only)", stacklevel=3)
            del merged[ident]
        object.__setattr__(self, "terms", tuple(merged.items()))

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[str, float]] | dict) -> "PauliSumOperator":
        terms = list(terms.items()) if isinstance(terms, dict) else list(terms)
        if not terms:
            raise InvalidArgument("cannot infer n_qubits from an empty term list")
        return cls(len(terms[0][0]), tuple(terms))

    @classmethod
    def from_vector(cls, coeffs: Sequence[float], n_qubits: int) -> "PauliSumOperator":
        """Build from coefficients in :func:`pauli_labels` order."""
        labels = pauli_labels(n_qubits)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(labels),):
            raise InvalidArgument(f"expected {len(labels)} coefficients")
        return cls(n_qubits, tuple(zip(labels, coeffs.tolist())))

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSumOperator":
        return cls(n_qubits, ())

    def to_vector(self) -> np.ndarray:
        out = np.zeros(4 ** self.n_qubits - 1)
        for label, c in self.terms:
            out[pauli_index(label)] += c
        return out

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def dense(self) -> np.ndarray:
        return dense_matrix(self)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """H psi without forming the dense matrix."""
        psi = np.asarray(psi, dtype=complex)
        out = np.zeros_like(psi)
        for label, c in self.terms:
            out += c * apply_pauli(label, psi)
        return out

    def norm_bound(self) -> float:
        return float(sum(abs(c) for _, c in self.terms))

    def __add__(self, other: "PauliSumOperator") -> "PauliSumOperator":
        return PauliSumOperator(self.n_qubits, self.terms + other.terms)

    def __mul__(self, scale: float) -> "PauliSumOperator":
        return PauliSumOperator(self.n_qubits, tuple((l, c * scale) for l, c in self.terms))

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits,
                "terms": [{"string": l, "coeff": c} for l, c in self.terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "PauliSumOperator":
        try:
            n = int(data["n_qubits"])
            terms = tuple((t["string"], float(t["coeff"])) for t in data["terms"])
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed operator JSON: {exc}") from exc
        return cls(n, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PauliSumOperator":
        return cls.from_dict(json.loads(text))


def as_operator(op, n_qubits: int | None = None) -> PauliSumOperator:
    """Accept a PauliSumOperator or a bare Pauli label like ``"ZI"``."""
    if isinstance(op, PauliSumOperator):
        return op
    if isinstance(op, str):
        label = _validate_label(op)
        return PauliSumOperator(len(label), ((label, 1.0),))
    raise InvalidArgument(f"cannot interpret {op!r} as an operator")


def dense_matrix(op: PauliSumOperator) -> np.ndarray:
    _check_qubits(op.n_qubits)
    out = np.zeros((op.dim, op.dim), dtype=complex)
    for label, c in op.terms:
        out += c * pauli_matrix(label)
    return out


def pauli_coefficients(matrix: np.ndarray) -> np.ndarray:
    """Real Pauli coefficients tr(P A)/2^n of a Hermitian matrix (identity excluded)."""
    n = n_qubits_of(matrix.shape[0])
    return np.array([np.trace(pauli_matrix(l) @ matrix).real / (1 << n)
                     for l in pauli_labels(n)])


# -- states and propagation --------------------------------------------------

def random_state(n_qubits: int, seed=None) -> np.ndarray:
    """Normalized state with i.i.d. standard complex normal amplitudes."""
    if n_qubits < 1:
        raise InvalidArgument("n_qubits must be >= 1")
    _check_qubits(n_qubits)
    rng = np.random.default_rng(seed)
    dim = 1 << n_qubits
    psi = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
    return psi / np.linalg.norm(psi)


def basis_state(bits: str) -> np.ndarray:
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def _hermitian_matrix(H) -> np.ndarray:
    if isinstance(H, PauliSumOperator):
        return dense_matrix(H)
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidOperator("operator must be a square matrix")
    n_qubits_of(H.shape[0])
    if np.max(np.abs(H - H.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise InvalidOperator("operator is not Hermitian")
    return H


def eigh_hermitian(H):
    """Eigenvalues and eigenvectors of a Hermitian operator (validated)."""
    return np.linalg.eigh(_hermitian_matrix(H))


def expm_hermitian(H, t: float) -> np.ndarray:
    """exp(-i H t) via the eigendecomposition H = V diag(lam) V^dagger."""
    lam, V = eigh_hermitian(H)
    return (V * np.exp(-1j * lam * t)) @ V.conj().T


def expm_hermitian_frechet(lam: np.ndarray, V: np.ndarray, t: float,
                           directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of exp(-i H t) along Hermitian directions E_k.

    Takes the eigendecomposition of H and returns ``(U, dU)`` where
    ``dU[k] = d/ds exp(-i (H + s E_k) t) |_{s=0}`` (Daleckii-Krein formula).
    """
    phase = np.exp(-1j * lam * t)
    diff = lam[:, None] - lam[None, :]
    same = np.abs(diff) < 1e-12
    safe = np.where(same, 1.0, diff)
    kernel = np.where(same, -1j * t * phase[:, None],
                      (phase[:, None] - phase[None, :]) / safe)
    Vh = V.conj().T
    E = Vh[None] @ directions @ V[None]
    dU = V[None] @ (E * kernel[None]) @ Vh[None]
    U = (V * phase) @ Vh
    return U, dU


def evolve(psi: np.ndarray, U: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    U = np.asarray(U, dtype=complex)
    if U.shape != (psi.shape[0], psi.shape[0]):
        raise InvalidArgument(f"state of length {psi.shape[0]} vs unitary {U.shape}")
    return U @ psi


def expectation(psi: np.ndarray, M) -> float:
    """<psi|M|psi> for a Pauli sum (matrix-free) or a dense Hermitian matrix."""
    psi = np.asarray(psi, dtype=complex)
    if isinstance(M, (PauliSumOperator, str)):
        M = as_operator(M)
        if M.dim != psi.shape[0]:
            raise InvalidArgument("observable and state dimensions disagree")
        return float(np.vdot(psi, M.apply(psi)).real)
    M = np.asarray(M)
    if M.shape != (psi.shape[0], psi.shape[0]):
        raise InvalidArgument("observable and state dimensions disagree")
    return float(np.vdot(psi, M @ psi).real)


def _lanczos_step(matvec, v, tau, tol, max_dim):
    """One Krylov step exp(-i H tau) v; returns None if max_dim is not enough."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy()
    basis = [v / beta0]
    alphas, betas = [], []
    for j in range(max_dim):
        w = matvec(basis[j])
        a = np.vdot(basis[j], w).real
        w = w - a * basis[j]
        if j > 0:
            w = w - betas[-1] * basis[j - 1]
        # full reorthogonalisation keeps the small basis clean
        for q in basis:
            w = w - np.vdot(q, w) * q
        b = np.linalg.norm(w)
        alphas.append(a)
        m = j + 1
        T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        theta, S = np.linalg.eigh(T)
        small = S @ (np.exp(-1j * theta * tau) * S[0].conj())
        err = b * abs(small[-1])
        if b < 1e-14 or err < tol:
            return beta0 * (np.array(basis[:m]).T @ small)
        betas.append(b)
        basis.append(w / b)
    return None


def krylov_evolve(H: PauliSumOperator, psi: np.ndarray, t: float, tol: float = 1e-10,
                  max_dim: int = 60, max_substeps: int = 1000) -> np.ndarray:
    """exp(-i H t) psi by Lanczos on the matrix-free action of H.

    The interval is split into substeps whenever ``max_dim`` Krylov vectors do
    not reach the local tolerance; ``max_substeps=1`` disables splitting.
    """
    if not np.isfinite(t):
        raise InvalidArgument("t must be finite")
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[0] != H.dim:
        raise InvalidArgument("state and Hamiltonian dimensions disagree")
    if t == 0.0 or not H.terms:
        return psi.copy()
    matvec = H.apply
    remaining = float(t)
    step = remaining
    n_steps = 0
    out = psi
    while abs(remaining) > 1e-14 * abs(t):
        step = remaining if abs(step) > abs(remaining) else step
        local_tol = tol * abs(step / t)
        nxt = _lanczos_step(matvec, out, step, local_tol, max_dim)
        if nxt is None:
            if max_substeps <= 1 or abs(step) < abs(t) / max_substeps:
                raise ConvergenceFailure(
                    f"Krylov space of dimension {max_dim} did not converge")
            step /= 2
            continue
        out = nxt
        remaining -= step
        n_steps += 1
        if n_steps > max_substeps:
            raise ConvergenceFailure("exceeded the Krylov substep budget")
    return out
