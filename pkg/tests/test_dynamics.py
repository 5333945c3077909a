"""Local Hamiltonians, unitary propagators, Heisenberg dynamics."""

import numpy as np
import pytest

from fermicert import fock, models
from fermicert.dynamics import (Interaction, InteractionTerm, heisenberg,
                                inverse_heisenberg, local_hamiltonian,
                                propagate, scaled_profile, term_operator)
from fermicert.fock import (annihilator, chain, commutator, creator,
                            number_operator, op_norm, parity_operator)


def _spectral_expm(H, z):
    w, v = np.linalg.eigh(H)
    return (v * np.exp(z * w)) @ v.conj().T


def test_local_hamiltonian_two_site_spectrum():
    lam = chain(2)
    H = local_hamiltonian(models.hopping_chain(2), lam)
    assert np.allclose(np.linalg.eigvalsh(H.matrix), [-1, 0, 0, 1], atol=1e-12)
    assert H.parity == fock.EVEN
    assert H.is_hermitian()


def test_local_hamiltonian_empty_and_commutes_with_parity():
    lam = chain(4)
    assert not local_hamiltonian(Interaction(()), lam).matrix.any()
    H = local_hamiltonian(models.hopping_chain(4, mu=0.7), lam)
    th = parity_operator(lam)
    assert op_norm(commutator(H, th)) <= 1e-12


def test_local_hamiltonian_restricts_to_volume():
    phi = models.hopping_chain(6)
    sub = chain(3)
    H = local_hamiltonian(phi, sub)
    direct = local_hamiltonian(models.hopping_chain(3), sub)
    assert np.abs(H.matrix - direct.matrix).max() <= 1e-14


def test_local_hamiltonian_time_domain():
    phi = scaled_profile(models.hopping_chain(3), lambda r: r, (0.0, 1.0))
    with pytest.raises(ValueError):
        local_hamiltonian(phi, chain(3), t=2.0)


def test_propagate_identity_at_equal_times():
    lam = chain(3)
    U = propagate(models.hopping_chain(3), lam, 0.5, 0.5)
    assert np.array_equal(U.matrix, np.eye(8, dtype=complex))


def test_propagate_matches_spectral_exponential():
    lam = chain(4)
    phi = models.hopping_chain(4, mu=0.3)
    H = local_hamiltonian(phi, lam).matrix
    for t in (0.7, 2.0):
        U = propagate(phi, lam, 0.0, t)
        assert np.abs(U.matrix - _spectral_expm(H, -1j * t)).max() <= 1e-8
        assert U.unitarity_defect <= 1e-9


def test_propagate_cocycle():
    lam = chain(4)
    phi = scaled_profile(models.hopping_chain(4), lambda r: 1.0 + 0.5 * np.sin(r), (0.0, 4.0))
    U20 = propagate(phi, lam, 0.0, 2.0, step=0.01)
    U10 = propagate(phi, lam, 0.0, 1.0, step=0.01)
    U21 = propagate(phi, lam, 1.0, 2.0, step=0.01)
    assert op_norm(U20.matrix - U21.matrix @ U10.matrix) <= 1e-8


def test_propagate_step_halving_second_order():
    lam = chain(4)
    phi = scaled_profile(models.hopping_chain(4), lambda r: 1.0 + np.cos(2 * r), (0.0, 2.0))
    steps = [0.2, 0.1, 0.05, 0.025]
    mats = [propagate(phi, lam, 0.0, 1.0, step=h).matrix for h in steps]
    errs = [np.abs(m - mats[-1]).max() for m in mats[:-1]]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert min(orders) >= 1.9


def test_propagate_rejects_odd_interactions(rng):
    lam = chain(3)
    sub = chain(2)
    odd_op = fock.random_local_operator(sub, (0, 1), rng, parity=fock.ODD)
    hermitian_odd = 0.5 * (odd_op + odd_op.adjoint())
    phi = Interaction((InteractionTerm((0, 1), hermitian_odd),), even=False)
    with pytest.raises(ValueError):
        propagate(phi, lam, 0.0, 1.0)


def test_energy_conservation_and_parity_superselection():
    lam = chain(5)
    phi = models.hopping_chain(5, mu=0.2)
    H = local_hamiltonian(phi, lam)
    U = propagate(phi, lam, 0.0, 1.7)
    assert op_norm(U.matrix.conj().T @ H.matrix @ U.matrix - H.matrix) <= 1e-9
    th = parity_operator(lam).matrix
    assert op_norm(th @ U.matrix - U.matrix @ th) <= 1e-9


def test_heisenberg_basics(rng):
    lam = chain(4)
    phi = models.hopping_chain(4)
    U0 = propagate(phi, lam, 0.0, 0.0)
    A = fock.random_local_operator(lam, (1, 2), rng, parity=fock.EVEN)
    assert np.abs(heisenberg(A, U0).matrix - A.matrix).max() == 0
    U = propagate(phi, lam, 0.0, 1.2)
    tau = heisenberg(A, U)
    assert tau.parity == fock.EVEN
    assert op_norm(tau) == pytest.approx(op_norm(A), abs=1e-9)


def test_heisenberg_single_mode_phase():
    # H = omega a*a on one site: closed form gives tau_t(a) = e^{-i omega t} a
    # (equivalently tau_t(a*) = e^{+i omega t} a*)
    omega, t = 0.9, 1.3
    lam = chain(1)
    sub = chain(1)
    n = creator(sub, 0) @ annihilator(sub, 0)
    phi = Interaction((InteractionTerm((0,), omega * n),))
    U = propagate(phi, lam, 0.0, t)
    a = annihilator(lam, 0)
    tau = heisenberg(a, U)
    assert np.abs(tau.matrix - np.exp(-1j * omega * t) * a.matrix).max() <= 1e-9
    tau_dag = heisenberg(a.adjoint(), U)
    assert np.abs(tau_dag.matrix - np.exp(1j * omega * t) * a.adjoint().matrix).max() <= 1e-9


def test_inverse_heisenberg_inverts(rng):
    lam = chain(4)
    phi = models.hopping_chain(4)
    U = propagate(phi, lam, 0.0, 0.8)
    A = fock.random_local_operator(lam, (0, 2), rng)
    back = inverse_heisenberg(heisenberg(A, U), U)
    assert np.abs(back.matrix - A.matrix).max() <= 1e-9
    U0 = propagate(phi, lam, 0.3, 0.3)
    assert np.abs(inverse_heisenberg(A, U0).matrix - A.matrix).max() == 0


def test_inverse_heisenberg_is_reversed_generator():
    lam = chain(4)
    phi = models.hopping_chain(4)
    U = propagate(phi, lam, 0.0, 0.6)
    A = number_operator(lam, [1])
    inv = inverse_heisenberg(A, U)
    # oracle: conjugation by exp(+iHt)
    H = local_hamiltonian(phi, lam).matrix
    V = _spectral_expm(H, 1j * 0.6)
    oracle = V.conj().T @ A.matrix @ V
    assert np.abs(inv.matrix - oracle).max() <= 1e-9


def test_propagate_backward_time_inverts():
    lam = chain(4)
    phi = scaled_profile(models.hopping_chain(4), lambda r: 1.0 + 0.3 * r, (0.0, 3.0))
    fwd = propagate(phi, lam, 0.5, 2.0, step=0.01)
    bwd = propagate(phi, lam, 2.0, 0.5, step=0.01)
    assert op_norm(bwd.matrix @ fwd.matrix - np.eye(16)) <= 1e-8


def test_term_operator_embedding():
    phi = models.hopping_chain(4)
    lam = chain(4)
    T = term_operator(phi.terms[1], lam)
    direct = creator(lam, 1) @ annihilator(lam, 2) + creator(lam, 2) @ annihilator(lam, 1)
    assert np.abs(T.matrix - direct.matrix).max() <= 1e-13


def test_interaction_validation(rng):
    sub = chain(2)
    nonherm = fock.random_local_operator(sub, (0, 1), rng)
    with pytest.raises(ValueError):
        InteractionTerm((0, 1), nonherm)
