"""Light-cone bound evaluation and certification."""

import math

import numpy as np
import pytest

from fermicert import fock, geometry, models
from fermicert.dynamics import scaled_profile
from fermicert.errors import CertificationError
from fermicert.fock import annihilator, chain, number_operator
from fermicert.geometry import DecayFunction, chain_graph, g_from_f
from fermicert.lr_bounds import (ANTICOMMUTATOR, COMMUTATOR, certify,
                                 delta_indicator, lr_rhs, series_diagnostics)


def test_delta_indicator():
    assert delta_indicator({1, 2}, {3}) == 0
    assert delta_indicator({1, 2}, {2, 5}) == 1
    assert delta_indicator(set(), {1}) == 0


def test_lr_rhs_closed_form():
    assert lr_rhs(1.0, 1.0, 0.0, 0.3) == 0.0
    assert lr_rhs(2.0, 3.0, 1.0, 0.0) == 0.0
    val = lr_rhs(1.0, 1.0, 0.5, 0.1)
    assert val == pytest.approx(2 * (math.e - 1) * 0.1, abs=1e-12)
    assert val == pytest.approx(0.343656365691809, abs=1e-12)
    # cross-check against the series sum_n 2 (2*0.5)^n / n! * 0.1
    series = sum(2 * 1.0 ** n / math.factorial(n) * 0.1 for n in range(1, 40))
    assert val == pytest.approx(series, abs=1e-12)
    with pytest.raises(ValueError):
        lr_rhs(-1.0, 1.0, 0.1, 0.1)


@pytest.fixture(scope="module")
def chain_setup():
    L = 8
    lam = chain(L)
    phi = models.hopping_chain(L)
    G = g_from_f(DecayFunction(1, 1.0), chain_graph(L))
    return lam, phi, G


def test_certify_commutator_number_ops(chain_setup):
    lam, phi, G = chain_setup
    A = number_operator(lam, [0])
    B = number_operator(lam, [7])
    times = np.linspace(0.0, 2.0, 21)
    rep = certify(A, B, phi, G, 0.0, times)
    assert rep.mode == COMMUTATOR
    assert rep.measured[0] == 0.0 and rep.bound[0] == 0.0
    assert np.all(rep.measured <= rep.bound * (1 + 1e-9) + 1e-12)
    assert np.all(rep.ratio < 1.0)
    # something nontrivial must actually propagate
    assert rep.measured[-1] > 1e-4
    # trivial a-priori bound respected
    assert np.all(rep.measured <= 2 * rep.norm_a * rep.norm_b + 1e-12)
    assert rep.boundary_sites == (0,)


def test_certify_anticommutator_odd_pair(chain_setup):
    lam, phi, G = chain_setup
    A = annihilator(lam, 0)
    B = annihilator(lam, 7)
    rep = certify(A, B, phi, G, 0.0, np.linspace(0.0, 2.0, 11))
    assert rep.mode == ANTICOMMUTATOR
    assert np.all(rep.measured <= rep.bound * (1 + 1e-9) + 1e-12)
    # number-conserving dynamics keeps tau(a) inside the span of
    # annihilators, so this pair anticommutes for all times
    assert rep.measured[-1] <= 1e-12
    # a creator partner picks up the propagating single-particle amplitude
    rep2 = certify(A, B.adjoint(), phi, G, 0.0, np.linspace(0.0, 2.0, 11))
    assert rep2.mode == ANTICOMMUTATOR
    assert np.all(rep2.measured <= rep2.bound * (1 + 1e-9) + 1e-12)
    assert rep2.measured[-1] > 1e-4


def test_certify_bound_monotone_for_static_interaction(chain_setup):
    lam, phi, G = chain_setup
    A = number_operator(lam, [0])
    B = number_operator(lam, [6, 7])
    rep = certify(A, B, phi, G, 0.0, np.linspace(0.0, 1.5, 16))
    assert np.all(np.diff(rep.bound) >= -1e-12)


def test_certify_light_cone_decay(chain_setup):
    lam, phi, G = chain_setup
    A = number_operator(lam, [0])
    t = np.array([0.5])
    vals = []
    for k in range(2, 8):
        B = number_operator(lam, [k])
        rep = certify(A, B, phi, G, 0.0, t)
        vals.append(rep.measured[0])
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_certify_time_dependent_ramp(chain_setup):
    lam, _, G = chain_setup
    phi = scaled_profile(models.hopping_chain(8), lambda r: 0.5 * r, (0.0, 2.0))
    A = number_operator(lam, [0])
    B = number_operator(lam, [7])
    rep = certify(A, B, phi, G, 0.0, np.linspace(0.0, 2.0, 9))
    assert np.all(rep.measured <= rep.bound * (1 + 1e-9) + 1e-12)
    # ramp integral grows quadratically: early bound much smaller than static
    assert rep.phi_integrals[1] < rep.phi_integrals[-1] / 10


def test_certify_preconditions(chain_setup, rng):
    lam, phi, G = chain_setup
    A = number_operator(lam, [0, 1])
    B = number_operator(lam, [1, 2])
    with pytest.raises(ValueError, match="disjoint"):
        certify(A, B, phi, G, 0.0, [0.0, 1.0])
    A_odd = annihilator(lam, 0)
    B_even = number_operator(lam, [7])
    with pytest.raises(ValueError, match="anticommutator mode"):
        certify(A_odd, B_even, phi, G, 0.0, [0.5], mode=ANTICOMMUTATOR)
    A_mixed = fock.random_local_operator(lam, (0,), rng)
    B_mixed = fock.random_local_operator(lam, (7,), rng)
    with pytest.raises(ValueError, match="no certifiable mode"):
        certify(A_mixed, B_mixed, phi, G, 0.0, [0.5])


def test_certification_error_carries_worst_point(chain_setup):
    # sabotage G on distant pairs only: the interaction decay norm is
    # unchanged (terms are nearest-neighbor) but the geometry factor
    # collapses, so the "bound" is wrong and the checker must fire
    lam, phi, G = chain_setup
    values = np.array(G.values)
    values[G.graph.distances > 2] = 1e-300
    bad = geometry.GFunction(G.graph, values)
    A = number_operator(lam, [0])
    B = number_operator(lam, [7])
    with pytest.raises(CertificationError) as err:
        certify(A, B, phi, bad, 0.0, np.linspace(0.0, 2.0, 9))
    assert err.value.measured > err.value.bound


def test_series_partial_sums_converge_to_closed_form():
    diag = series_diagnostics(1.0, 1.0, 1.0, 0.25, boundary_size=2, g_norm=0.9, nmax=30)
    assert abs(diag.partial_sums[-1] - diag.closed_form) <= 1e-10
    assert diag.remainder <= 1e-12 * max(1.0, diag.closed_form)
    # first order alone: 2 ||A|| ||B|| (2I) * geometry
    assert diag.partial_sums[0] == pytest.approx(2 * 2.0 * 0.25, rel=1e-12)


def test_series_remainder_factorial_decay():
    diag = series_diagnostics(1.0, 2.0, 1.0, 0.25, boundary_size=3, g_norm=1.0, nmax=30)
    # 2 ||B|| |dX| ||G|| 2^31 / 31!
    expect = 2 * 2.0 * 3 * 1.0 * 2.0 ** 31 / math.factorial(31)
    assert diag.remainder == pytest.approx(expect, rel=1e-12)
    assert diag.remainder < 1e-20


def test_certify_with_spatially_weighted_g(chain_setup):
    lam, phi, G = chain_setup
    Gw = geometry.spatially_weighted(G, lambda x: 0.6 + 0.04 * x)
    rep = certify(number_operator(lam, [0]), number_operator(lam, [7]),
                  phi, Gw, 0.0, [0.5, 1.5])
    assert np.all(rep.measured <= rep.bound * (1 + 1e-9) + 1e-12)


def test_certify_periodic_chain():
    L = 8
    lam = chain(L)
    phi = models.hopping_chain(L, boundary="periodic")
    G = g_from_f(DecayFunction(1, 1.0), chain_graph(L, boundary="periodic"))
    rep = certify(number_operator(lam, [0]), number_operator(lam, [4]),
                  phi, G, 0.0, [0.4, 0.9])
    assert np.all(rep.measured <= rep.bound * (1 + 1e-9) + 1e-12)
    # the wrap-around bond puts site 0 on the boundary of {0}
    assert rep.boundary_sites == (0,)
    assert rep.measured[-1] > 1e-6


def test_measured_norms_match_free_fermion_oracle(chain_setup):
    # independent one-particle oracle: for the quadratic hopping chain,
    # tau_t(a_x) = sum_z (e^{-i h t})_{xz} a_z with h the hopping matrix, so
    #   ||{tau_t(a_0), a*_7}|| = |(e^{-i h t})_{07}|
    # and [tau_t(n_0), n_7] is the quadratic operator of the one-particle
    # commutator, whose Fock norm is the sum of its positive eigenvalues.
    lam, phi, G = chain_setup
    L = 8
    h = np.diag(np.ones(L - 1), 1) + np.diag(np.ones(L - 1), -1)
    times = [0.4, 1.1]
    w, v = np.linalg.eigh(h)

    rep_pair = certify(annihilator(lam, 0), fock.creator(lam, 7), phi, G,
                       0.0, times, mode="anticommutator")
    rep_quad = certify(number_operator(lam, [0]), number_operator(lam, [7]),
                       phi, G, 0.0, times)
    for i, t in enumerate(times):
        u1p = (v * np.exp(-1j * w * t)) @ v.conj().T
        c = u1p[0, :]
        assert rep_pair.measured[i] == pytest.approx(abs(c[7]), abs=1e-10)
        M = np.outer(c.conj(), c)
        N = np.zeros((L, L))
        N[7, 7] = 1.0
        K = M @ N - N @ M
        mu = np.linalg.eigvalsh(1j * K)
        assert rep_quad.measured[i] == pytest.approx(mu[mu > 0].sum(), abs=1e-10)


def test_report_serialization(tmp_path, chain_setup):
    lam, phi, G = chain_setup
    A = number_operator(lam, [0])
    B = number_operator(lam, [7])
    rep = certify(A, B, phi, G, 0.0, np.linspace(0.0, 1.0, 5))
    csv_path = tmp_path / "rep.csv"
    json_path = tmp_path / "rep.json"
    rep.write_csv(csv_path)
    rep.write_json(json_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "t,measured,bound,ratio,mode"
    assert len(lines) == 6
    import json as j
    data = j.loads(json_path.read_text())
    assert data["mode"] == COMMUTATOR
    assert len(data["times"]) == 5
