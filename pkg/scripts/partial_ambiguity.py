"""Why the partial-measurement pipeline needs two initial states.

With one product state |a>|0>, rotating the unmeasured qubit about z fixes
the state and leaves every first-qubit expectation unchanged, so a different
Hamiltonian fits the data exactly. A second generic state breaks the tie.
"""
import numpy as np

from delayqpt.partial import PartialMeasSetup, partial_loss, simulate_partial
from delayqpt.quantum import PAULI, PauliSumOperator, basis_state, expm_hermitian
from delayqpt.quantum import pauli_coefficients, random_state
from delayqpt.sampling import geometric_times


def main(seed=0):
    rng = np.random.default_rng(seed)
    grid = geometric_times(0.2, 1.15, 12)
    h = rng.standard_normal(15)
    H = PauliSumOperator.from_vector(h, 2)
    prod = np.kron(random_state(1, rng), basis_state("0"))
    W = np.kron(np.eye(2), expm_hermitian(PAULI["Z"], 0.9))
    h_alt = pauli_coefficients(W @ H.dense() @ W.conj().T)
    print(f"max |h_alt - h| = {np.max(np.abs(h_alt - h)):.3f}")
    for states in [(prod,), (prod, random_state(2, rng))]:
        setup = PartialMeasSetup(states, grid, allow_single_state=len(states) == 1)
        traj = simulate_partial(H, setup)
        print(f"{len(states)} state(s): loss(h) = {partial_loss(h, setup, traj):.2e}, "
              f"loss(h_alt) = {partial_loss(h_alt, setup, traj):.2e}")


if __name__ == "__main__":
    main()
