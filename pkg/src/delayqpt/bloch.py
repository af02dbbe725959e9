"""Real Bloch-picture (adjoint) representations of states and unitaries.

Bloch matrices act on Pauli-string coefficient vectors. Basis strings are
ordered lexicographically with I < X < Y < Z and the all-identity string
excluded, so column ``b`` of ``bloch_map(U)`` holds the coefficients of
``U P_b U^dagger``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument, InvalidRotation, ResourceLimit
from .quantum import PAULI, n_qubits_of, pauli_labels, pauli_matrix

BLOCH_MAX_QUBITS = 4


@lru_cache(maxsize=8)
def _pauli_stack(n: int) -> np.ndarray:
    return np.array([pauli_matrix(l) for l in pauli_labels(n)])


def coherence_vector(psi: np.ndarray) -> np.ndarray:
    """Generalized Bloch vector r_a = <psi|P_a|psi> (length 4^n - 1)."""
    psi = np.asarray(psi, dtype=complex)
    n = n_qubits_of(psi.shape[0])
    if n > BLOCH_MAX_QUBITS:
        raise ResourceLimit("coherence vectors are limited to 4 qubits")
    P = _pauli_stack(n)
    return np.einsum("i,aij,j->a", psi.conj(), P, psi).real


def state_to_bloch(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2,):
        raise InvalidArgument("state_to_bloch expects a single-qubit state")
    return coherence_vector(psi)


def bloch_map(U: np.ndarray) -> np.ndarray:
    """B[a, b] = tr(P_a U P_b U^dagger) / 2^n."""
    U = np.asarray(U, dtype=complex)
    n = n_qubits_of(U.shape[0])
    if n > BLOCH_MAX_QUBITS:
        raise ResourceLimit(f"Bloch matrices are limited to {BLOCH_MAX_QUBITS} qubits")
    P = _pauli_stack(n)
    conj = U[None] @ P @ U.conj().T[None]
    return np.einsum("aij,bji->ab", P, conj).real / (1 << n)


def rodrigues_apply(theta: float, v: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Rotate r by angle theta about the unit axis v."""
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise InvalidArgument("rotation axis must be a unit vector")
    c, s = np.cos(theta), np.sin(theta)
    return c * r + s * np.cross(v, r) + (1 - c) * np.dot(v, r) * v


def rotation_matrix(theta: float, v: np.ndarray) -> np.ndarray:
    return np.column_stack([rodrigues_apply(theta, v, e) for e in np.eye(3)])


def nearest_rotation(R: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor of R (nearest orthogonal matrix in Frobenius norm)."""
    W, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    return W @ Vt


def _quaternion_from_rotation(R: np.ndarray) -> np.ndarray:
    # Shepperd's method: branch on the largest of w, x, y, z.
    tr = np.trace(R)
    cand = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(cand))
    if k == 0:
        w = 0.5 * np.sqrt(1 + tr)
        q = [w, (R[2, 1] - R[1, 2]) / (4 * w), (R[0, 2] - R[2, 0]) / (4 * w),
             (R[1, 0] - R[0, 1]) / (4 * w)]
    elif k == 1:
        x = 0.5 * np.sqrt(1 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / (4 * x), x, (R[0, 1] + R[1, 0]) / (4 * x),
             (R[0, 2] + R[2, 0]) / (4 * x)]
    elif k == 2:
        y = 0.5 * np.sqrt(1 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / (4 * y), (R[0, 1] + R[1, 0]) / (4 * y), y,
             (R[1, 2] + R[2, 1]) / (4 * y)]
    else:
        z = 0.5 * np.sqrt(1 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / (4 * z), (R[0, 2] + R[2, 0]) / (4 * z),
             (R[1, 2] + R[2, 1]) / (4 * z), z]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def su2_from_bloch(R: np.ndarray) -> np.ndarray:
    """SU(2) element whose Bloch rotation is (the polar projection of) R.

    The overall sign is fixed by requiring a nonnegative quaternion real part,
    i.e. a nonnegative real trace.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise InvalidArgument("expected a 3x3 Bloch matrix")
    Q = nearest_rotation(R)
    if np.linalg.det(Q) < 0:
        raise InvalidRotation("matrix is closer to an improper rotation (det -1)")
    w, x, y, z = _quaternion_from_rotation(Q)
    return w * PAULI["I"] - 1j * (x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"])


# -- two-qubit building blocks -----------------------------------------------

@dataclass
class EntanglementAngles:
    """Relaxed (cos, sin) pairs standing in for the three entangling angles."""

    c: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(3)
        self.s = np.asarray(self.s, dtype=float).reshape(3)

    @classmethod
    def from_theta(cls, theta) -> "EntanglementAngles":
        theta = np.asarray(theta, dtype=float)
        return cls(np.cos(theta), np.sin(theta))

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(self.s, self.c)

    def is_valid(self, tol: float = 1e-8) -> bool:
        return bool(np.all(np.abs(self.c ** 2 + self.s ** 2 - 1) <= tol))

    def normalized(self) -> "EntanglementAngles":
        return EntanglementAngles.from_theta(self.theta)


_XX = ("XX", "YY", "ZZ")


def entanglement_gate(angles: EntanglementAngles) -> np.ndarray:
    """exp(-i/2 (th1 XX + th2 YY + th3 ZZ)) as a product of commuting factors."""
    if not angles.is_valid():
        raise InvalidArgument("entanglement angles must satisfy c^2 + s^2 = 1")
    out = np.eye(4, dtype=complex)
    for th, label in zip(angles.theta, _XX):
        out = out @ (np.cos(th / 2) * np.eye(4) - 1j * np.sin(th / 2) * pauli_matrix(label))
    return out


@lru_cache(maxsize=1)
def _entangler_blocks():
    """Per-factor (fixed, cos, sin) parts of the adjoint action of exp(-i th PP/2).

    For a basis string Q anticommuting with P the action is
    Q -> cos(th) Q + sin(th) (-i P Q); commuting strings are fixed.
    """
    P = _pauli_stack(2)
    blocks = []
    for gen in _XX:
        G = pauli_matrix(gen)
        fixed = np.zeros((15, 15))
        cos_part = np.zeros((15, 15))
        sin_part = np.zeros((15, 15))
        for b in range(15):
            Q = P[b]
            if np.allclose(G @ Q, Q @ G):
                fixed[b, b] = 1.0
                continue
            cos_part[b, b] = 1.0
            coeffs = np.einsum("aij,ji->a", P, -1j * G @ Q).real / 4
            sin_part[:, b] = coeffs
        blocks.append((fixed, cos_part, sin_part))
    return blocks


def entangler_factors(angles: EntanglementAngles) -> list[np.ndarray]:
    return [F + c * C + s * S
            for (F, C, S), c, s in zip(_entangler_blocks(), angles.c, angles.s)]


def entanglement_bloch(angles: EntanglementAngles) -> np.ndarray:
    """15x15 Bloch matrix of the entangling gate, polynomial in (c_j, s_j)."""
    F1, F2, F3 = entangler_factors(angles)
    return F1 @ F2 @ F3


def _pad(u: np.ndarray) -> np.ndarray:
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1:, 1:] = u
    return out


def kron_bloch(ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """15x15 Bloch matrix of u_a (x) u_b from the two 3x3 single-qubit blocks."""
    A, B = _pad(ua), _pad(ub)
    return (A[:, None, :, None] * B[None, :, None, :]).reshape(16, 16)[1:, 1:]


def kron_bloch_grad(G: np.ndarray, ua: np.ndarray, ub: np.ndarray):
    """Pull back a gradient G wrt kron_bloch(ua, ub) onto (ua, ub)."""
    Gp = np.zeros((16, 16))
    Gp[1:, 1:] = G
    T = Gp.reshape(4, 4, 4, 4)  # [k, l, i, j] -> d/d(A[k,i] B[l,j])
    A, B = _pad(ua), _pad(ub)
    gA = np.einsum("klij,lj->ki", T, B)[1:, 1:]
    gB = np.einsum("klij,ki->lj", T, A)[1:, 1:]
    return gA, gB


def su4_compose(ua, ub, uc, ud, angles: EntanglementAngles) -> np.ndarray:
    """Bloch matrix of (u_a (x) u_b) R (u_c (x) u_d)."""
    return kron_bloch(ua, ub) @ entanglement_bloch(angles) @ kron_bloch(uc, ud)


def su4_compose_grad(G: np.ndarray, ua, ub, uc, ud, angles: EntanglementAngles):
    """Gradients of <G, su4_compose(...)> wrt (ua, ub, uc, ud, c, s)."""
    K1, K2 = kron_bloch(ua, ub), kron_bloch(uc, ud)
    F = entangler_factors(angles)
    E = F[0] @ F[1] @ F[2]
    gK1 = G @ (E @ K2).T
    gE = K1.T @ G @ K2.T
    gK2 = (K1 @ E).T @ G
    ga, gb = kron_bloch_grad(gK1, ua, ub)
    gc, gd = kron_bloch_grad(gK2, uc, ud)
    gF = [gE @ (F[1] @ F[2]).T, F[0].T @ gE @ F[2].T, (F[0] @ F[1]).T @ gE]
    gcos = np.array([np.sum(g * C) for g, (_, C, _) in zip(gF, _entangler_blocks())])
    gsin = np.array([np.sum(g * S) for g, (_, _, S) in zip(gF, _entangler_blocks())])
    return ga, gb, gc, gd, gcos, gsin


def save_bloch_csv(path, B: np.ndarray) -> None:
    B = np.asarray(B, dtype=float)
    n = {3: 1, 15: 2, 63: 3, 255: 4}.get(B.shape[0])
    if n is None or B.shape[0] != B.shape[1]:
        raise InvalidArgument("not a Bloch matrix shape")
    with open(path, "w") as fh:
        fh.write(f"n_qubits={n}\n")
        for row in B:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def load_bloch_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("n_qubits="):
            raise InvalidArgument("missing n_qubits header")
        n = int(header.split("=", 1)[1])
        B = np.loadtxt(fh, delimiter=",", ndmin=2)
    if B.shape != (4 ** n - 1, 4 ** n - 1):
        raise InvalidArgument("Bloch matrix shape does not match header")
    return B
