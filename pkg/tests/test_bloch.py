import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayqpt.bloch import (
    EntanglementAngles,
    bloch_map,
    entanglement_bloch,
    entanglement_gate,
    kron_bloch,
    load_bloch_csv,
    rodrigues_apply,
    save_bloch_csv,
    state_to_bloch,
    su2_from_bloch,
    su4_compose,
    su4_compose_grad,
)
from delayqpt.errors import InvalidArgument, InvalidRotation
from delayqpt.optim import finite_diff_gradient
from delayqpt.quantum import PAULI, basis_state, expectation, pauli_matrix, random_state

from conftest import random_unitary

seeds = st.integers(0, 2**32 - 1)


def unit(v):
    return v / np.linalg.norm(v)


def su2(theta, v):
    vs = sum(c * PAULI[a] for c, a in zip(v, "XYZ"))
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * vs


def test_state_to_bloch_examples():
    assert np.allclose(state_to_bloch(basis_state("0")), [0, 0, 1])
    assert np.allclose(state_to_bloch(np.array([1, 1]) / np.sqrt(2)), [1, 0, 0])
    psi = random_state(1, 9)
    expect = [expectation(psi, PAULI[a]) for a in "XYZ"]
    assert np.allclose(state_to_bloch(psi), expect, atol=1e-12)


def test_bloch_map_identity_and_rodrigues():
    assert np.allclose(bloch_map(np.eye(2)), np.eye(3))
    theta = 0.7
    B = bloch_map(su2(theta, [0, 0, 1]))
    x = np.array([1.0, 0, 0])
    assert np.allclose(B @ x, rodrigues_apply(theta, np.array([0, 0, 1.0]), x), atol=1e-12)


@given(seeds, st.sampled_from([1, 2]))
def test_bloch_map_homomorphism_and_orthogonality(seed, n):
    rng = np.random.default_rng(seed)
    U, V = random_unitary(n, rng), random_unitary(n, rng)
    BU = bloch_map(U)
    assert np.max(np.abs(bloch_map(U @ V) - BU @ bloch_map(V))) < 1e-10
    assert np.max(np.abs(BU @ BU.T - np.eye(BU.shape[0]))) < 1e-10


@given(seeds, st.floats(0, 2 * np.pi))
def test_bloch_map_global_phase(seed, phi):
    U = random_unitary(1, np.random.default_rng(seed))
    assert np.max(np.abs(bloch_map(np.exp(1j * phi) * U) - bloch_map(U))) < 1e-12


def test_rodrigues_examples():
    r = np.array([0.3, -0.2, 0.9])
    assert np.allclose(rodrigues_apply(0.0, unit(np.ones(3)), r), r)
    assert np.allclose(rodrigues_apply(np.pi / 2, np.array([0, 0, 1.0]), np.array([1.0, 0, 0])),
                       [0, 1, 0])
    with pytest.raises(InvalidArgument):
        rodrigues_apply(1.0, np.array([0, 0, 2.0]), r)


@given(seeds, st.floats(-np.pi, np.pi))
def test_rodrigues_matches_bloch_map(seed, theta):
    rng = np.random.default_rng(seed)
    v, r = unit(rng.standard_normal(3)), rng.standard_normal(3)
    assert np.allclose(rodrigues_apply(theta, v, r), bloch_map(su2(theta, v)) @ r, atol=1e-12)


def test_su2_from_bloch_examples():
    assert np.allclose(su2_from_bloch(np.eye(3)), np.eye(2))
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    U = su2_from_bloch(R)
    target = su2(np.pi / 2, [0, 0, 1])
    assert min(np.abs(U - target).max(), np.abs(U + target).max()) < 1e-12
    with pytest.raises(InvalidRotation):
        su2_from_bloch(-np.eye(3))


@given(seeds)
def test_su2_roundtrip_up_to_sign(seed):
    U = random_unitary(1, np.random.default_rng(seed))
    U = U / np.sqrt(np.linalg.det(U))
    W = su2_from_bloch(bloch_map(U))
    assert min(np.abs(W - U).max(), np.abs(W + U).max()) < 1e-10


def test_entanglement_gate_examples():
    assert np.allclose(entanglement_gate(EntanglementAngles.from_theta([0, 0, 0])), np.eye(4))
    G = entanglement_gate(EntanglementAngles.from_theta([np.pi, 0, 0]))
    assert np.allclose(G, -1j * pauli_matrix("XX"), atol=1e-14)
    with pytest.raises(InvalidArgument):
        entanglement_gate(EntanglementAngles([1, 1, 1], [1, 0, 0]))


@given(seeds)
def test_entanglement_factors_commute(seed):
    th = np.random.default_rng(seed).uniform(-np.pi, np.pi, 3)
    f = [np.cos(t / 2) * np.eye(4) - 1j * np.sin(t / 2) * pauli_matrix(l)
         for t, l in zip(th, ("XX", "YY", "ZZ"))]
    assert np.allclose(f[0] @ f[1] @ f[2], f[2] @ f[0] @ f[1], atol=1e-12)
    assert np.allclose(entanglement_gate(EntanglementAngles.from_theta(th)), f[1] @ f[2] @ f[0],
                       atol=1e-12)


def test_entanglement_bloch_examples(rng):
    assert np.allclose(entanglement_bloch(EntanglementAngles([1, 1, 1], [0, 0, 0])), np.eye(15))
    ang = EntanglementAngles.from_theta(rng.uniform(-np.pi, np.pi, 3))
    ref = bloch_map(entanglement_gate(ang))
    assert np.max(np.abs(entanglement_bloch(ang) - ref)) < 1e-10
    # relaxed evaluation at c = s = 0 is allowed and not orthogonal
    E0 = entanglement_bloch(EntanglementAngles([0, 0, 0], [0, 0, 0]))
    assert not np.allclose(E0 @ E0.T, np.eye(15))


def test_su4_compose_examples(rng):
    I3 = np.eye(3)
    ang0 = EntanglementAngles.from_theta([0, 0, 0])
    assert np.allclose(su4_compose(I3, I3, I3, I3, ang0), np.eye(15))
    us = [random_unitary(1, rng) for _ in range(4)]
    ang = EntanglementAngles.from_theta(rng.uniform(-np.pi, np.pi, 3))
    dense = np.kron(us[0], us[1]) @ entanglement_gate(ang) @ np.kron(us[2], us[3])
    B = su4_compose(*[bloch_map(u) for u in us], ang)
    assert np.max(np.abs(B - bloch_map(dense))) < 1e-10
    assert np.allclose(su4_compose(I3, I3, I3, I3, ang), entanglement_bloch(ang))


def test_kron_bloch_matches_dense(rng):
    a, b = random_unitary(1, rng), random_unitary(1, rng)
    assert np.allclose(kron_bloch(bloch_map(a), bloch_map(b)), bloch_map(np.kron(a, b)))


def test_su4_compose_grad_matches_fd(rng):
    blocks = [np.eye(3) + 0.3 * rng.standard_normal((3, 3)) for _ in range(4)]
    c, s = rng.standard_normal(3), rng.standard_normal(3)
    G = rng.standard_normal((15, 15))

    def f(x):
        bl = [x[9 * k:9 * (k + 1)].reshape(3, 3) for k in range(4)]
        return float(np.sum(G * su4_compose(*bl, EntanglementAngles(x[36:39], x[39:42]))))

    x = np.concatenate([b.ravel() for b in blocks] + [c, s])
    analytic = np.concatenate([g.ravel() for g in
                               su4_compose_grad(G, *blocks, EntanglementAngles(c, s))])
    fd = finite_diff_gradient(f, x, 1e-6)
    assert np.linalg.norm(analytic - fd) <= 1e-5 * np.linalg.norm(fd)


def test_bloch_csv_roundtrip(tmp_path, rng):
    B = bloch_map(random_unitary(2, rng))
    save_bloch_csv(tmp_path / "b.csv", B)
    assert np.array_equal(load_bloch_csv(tmp_path / "b.csv"), B)
