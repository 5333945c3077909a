"""Conditional expectations onto local subalgebras, in Kraus form.

The tracial state is the normalized matrix trace; it is the even product
state with omega(a_x a_y) = 0 and omega(a*_x a_y) = delta_{x,y}/2.  For a
region X inside Lambda, averaging over the single-site unitaries

    u^(0) = 1,  u^(1) = a* + a,  u^(2) = a* - a,  u^(3) = 1 - 2 a*a

at every site outside X defines a unity-preserving completely positive
projection E_X of norm one: operators even and supported in X are fixed,
everything supported outside X collapses to its trace, and the odd part
of the outside algebra is annihilated.  Because the average over a site
commutes with the average over any other site, E_X factorizes into a
site-by-site sweep, which is how it is evaluated here (the full
4^|complement|-term Kraus sum is retained as an independent oracle).

A second family F_X projects onto the honestly local subalgebra A_X and
leaves the tracial state invariant; its Kraus operators acquire a global
parity factor theta_X on the odd-parity index combinations, so it is
evaluated by the explicit (size-capped) Kraus sum only.  On even
observables the two families coincide.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import fock
from .fock import (EVEN, ODD, FockOperator, SiteSet, annihilator, identity,
                   op_norm, parity_operator)

#: parity of the four single-site Kraus indices
KRAUS_PARITY = (1, -1, -1, 1)

#: refuse brute-force Kraus sums beyond this complement size (4^k terms)
BRUTE_FORCE_CAP = 10


def kraus_word_parity(alpha: Iterable) -> int:
    """Parity of a Kraus index word: the product of the per-site index
    parities (+1 for indices 0 and 3, -1 for 1 and 2)."""
    sign = 1
    for i in alpha:
        sign *= KRAUS_PARITY[i]
    return sign


def tracial_state(A: FockOperator) -> complex:
    """Normalized trace tr(A) / 2^|Lambda|."""
    return A.trace() / A.dim


def kraus_unitaries(lam: SiteSet, x) -> tuple:
    """The four single-site Kraus unitaries at x, parities (+, -, -, +)."""
    a = annihilator(lam, x)
    ad = a.adjoint()
    u0 = identity(lam)
    u1 = ad + a
    u2 = FockOperator(ad.matrix - a.matrix, lam, frozenset({x}), ODD)
    u3 = identity(lam) - 2 * (ad @ a)
    return (u0, u1, u2, FockOperator(u3.matrix, lam, frozenset({x}), EVEN))


def _site_average(m: np.ndarray, lam: SiteSet, x) -> np.ndarray:
    """Average of u^(i)* m u^(i) over the four Kraus unitaries at x."""
    a = annihilator(lam, x).matrix
    u1 = a.conj().T + a
    u2 = a.conj().T - a
    signs = np.diag(parity_operator(lam, [x]).matrix).real
    acc = m + signs[:, None] * m * signs[None, :]
    acc = acc + u1 @ m @ u1          # u1 is Hermitian unitary
    acc = acc + u2.conj().T @ m @ u2
    return acc / 4.0


def _complement(lam: SiteSet, X: Iterable) -> tuple:
    X = frozenset(X)
    for x in X:
        lam.position(x)
    return tuple(x for x in lam.sites if x not in X)


def _result_tags(A: FockOperator, X: frozenset, strictly_local: bool) -> tuple:
    if A.parity == EVEN or strictly_local:
        support = X
    else:
        # range contains B theta_Lambda pieces, which are global
        support = frozenset(A.ambient.sites)
    return support, A.parity


def conditional_expectation(A: FockOperator, X: Iterable,
                            method: str = "sweep") -> FockOperator:
    """E_X(A): Kraus average over all single-site unitaries outside X.

    method='sweep' applies the four-term average site by site (the default
    and the fast path); method='direct' evaluates the full
    4^|complement|-term Kraus sum and serves as the independent oracle.
    """
    lam = A.ambient
    X = frozenset(X)
    comp = _complement(lam, X)
    if method == "sweep":
        m = np.array(A.matrix)
        for x in comp:
            m = _site_average(m, lam, x)
    elif method == "direct":
        if len(comp) > BRUTE_FORCE_CAP:
            raise ValueError(f"direct Kraus sum over 4^{len(comp)} terms refused")
        singles = [[u.matrix for u in kraus_unitaries(lam, x)] for x in comp]
        m = np.zeros_like(A.matrix)
        for alpha in itertools.product(range(4), repeat=len(comp)):
            u = None
            for mats, i in zip(singles, alpha):
                u = mats[i] if u is None else u @ mats[i]
            if u is None:
                u = np.eye(lam.dim, dtype=complex)
            m = m + u.conj().T @ A.matrix @ u
        m /= 4.0 ** len(comp)
    else:
        raise ValueError(f"unknown method {method!r}")
    support, parity = _result_tags(A, X, strictly_local=False)
    return FockOperator(m, lam, support, parity)


def trace_invariant_expectation(A: FockOperator, X: Iterable) -> FockOperator:
    """F_X(A): the projection onto the local subalgebra A_X that leaves the
    tracial state invariant.

    Kraus operators are u(alpha) for even index parity and theta_X
    u(alpha) for odd; the latter are global, so only the explicit sum is
    available (size-capped).  Agrees with E_X on even observables.
    """
    lam = A.ambient
    X = frozenset(X)
    comp = _complement(lam, X)
    if len(comp) > BRUTE_FORCE_CAP:
        raise ValueError(f"Kraus sum over 4^{len(comp)} terms refused")
    theta_x = parity_operator(lam, X).matrix
    singles = [[u.matrix for u in kraus_unitaries(lam, x)] for x in comp]
    m = np.zeros_like(A.matrix)
    for alpha in itertools.product(range(4), repeat=len(comp)):
        u = None
        for mats, i in zip(singles, alpha):
            u = mats[i] if u is None else u @ mats[i]
        if u is None:
            u = np.eye(lam.dim, dtype=complex)
        if kraus_word_parity(alpha) < 0:
            u = theta_x @ u
        m = m + u.conj().T @ A.matrix @ u
    m /= 4.0 ** len(comp)
    support, parity = _result_tags(A, X, strictly_local=True)
    return FockOperator(m, lam, support, parity)


def local_approximation(A: FockOperator, X: Iterable) -> tuple:
    """Best strictly-reported local approximation of an even observable:
    (E_X(A), ||A - E_X(A)||).

    The error never exceeds max_alpha ||[A, u(alpha)]|| over the Kraus
    unitaries outside X (see ``kraus_commutator_bound``), which is how
    light-cone estimates turn into localization errors.
    """
    if A.parity != EVEN:
        raise ValueError("local approximation is defined for even observables")
    approx = conditional_expectation(A, X)
    err = op_norm(A - approx)
    return approx, err


def kraus_commutator_bound(A: FockOperator, X: Iterable,
                           exhaustive: bool | None = None) -> float:
    """max_alpha ||[A, u(alpha)]|| over Kraus words outside X.

    Computed exactly when the complement has at most 4 sites (or when
    forced); otherwise bounded by the site-wise triangle estimate
    sum_y max_i ||[A, u_y^(i)]||, valid because each factor is unitary.
    """
    lam = A.ambient
    comp = _complement(lam, X)
    k = len(comp)
    if exhaustive is None:
        exhaustive = k <= 4
    if exhaustive:
        if k > BRUTE_FORCE_CAP:
            raise ValueError(f"exhaustive bound over 4^{k} words refused")
        singles = [[u.matrix for u in kraus_unitaries(lam, x)] for x in comp]
        best = 0.0
        for alpha in itertools.product(range(4), repeat=k):
            u = None
            for mats, i in zip(singles, alpha):
                u = mats[i] if u is None else u @ mats[i]
            if u is None:
                continue
            best = max(best, op_norm(A.matrix @ u - u @ A.matrix))
        return best
    total = 0.0
    for x in comp:
        total += max(op_norm(A.matrix @ u.matrix - u.matrix @ A.matrix)
                     for u in kraus_unitaries(lam, x)[1:])
    return total


@dataclass(frozen=True)
class ExpectationDiagnostics:
    """Defect metrics for one conditional-expectation evaluation."""

    region: tuple
    method: str
    projection_defect: float
    contraction_excess: float
    range_support_defect: float
    range_parity_defect: float


def expectation_diagnostics(A: FockOperator, X: Iterable,
                            method: str = "sweep") -> ExpectationDiagnostics:
    """Evaluate E_X(A) and report how well the output satisfies the
    projection, contraction and range structure."""
    lam = A.ambient
    X = frozenset(X)
    out = conditional_expectation(A, X, method=method)
    twice = conditional_expectation(out, X, method=method)
    projection = op_norm(out - twice)
    contraction = max(0.0, op_norm(out) - op_norm(A))
    # range: even part supported in X, odd part equals (odd in X) * theta
    even, odd = fock.parity_decompose(out)
    support_defect = fock.support_defect(even, X)
    theta = parity_operator(lam)
    odd_local = odd @ theta
    parity_defect = fock.support_defect(odd_local, X)
    return ExpectationDiagnostics(
        region=lam.sorted_subset(X), method=method,
        projection_defect=projection, contraction_excess=contraction,
        range_support_defect=support_defect, range_parity_defect=parity_defect)


@dataclass(frozen=True)
class FamilyReport:
    """Compatibility defects for the family {E_X}: composition,
    idempotence, the even product split, and volume independence."""

    region_x: tuple
    region_y: tuple
    samples: int
    composition_defect: float
    idempotence_defect: float
    product_defect: float
    volume_defect: float

    @property
    def max_defect(self) -> float:
        return max(self.composition_defect, self.idempotence_defect,
                   self.product_defect, self.volume_defect)


def expectation_family_report(lam: SiteSet, X: Iterable, Y: Iterable,
                              samples: int = 10, seed: int = 0,
                              enlarged: SiteSet | None = None) -> FamilyReport:
    """Measure on random inputs that the family behaves like a commuting
    system of projections:

    - composition: E_X . E_Y = E_{X intersect Y};
    - idempotence: E_X . E_X = E_X;
    - product split: E_X(AB) = E_{X u Y}(A) E_{X u Y^c}(B) for even A, B
      supported in Y^c and Y respectively;
    - volume independence: computing E_X inside ``enlarged`` (default: the
      lattice extended by two fresh sites) agrees with computing it in
      ``lam`` for even observables.
    """
    rng = np.random.default_rng(seed)
    X = frozenset(X)
    Y = frozenset(Y)
    inter = X & Y
    comp_d = idem_d = prod_d = vol_d = 0.0
    if enlarged is None:
        extra = []
        probe = 0
        existing = set(lam.sites)
        while len(extra) < 2:
            if probe not in existing:
                extra.append(probe)
            probe += 1
        enlarged = SiteSet(tuple(lam.sites) + tuple(extra))
    y_comp = tuple(s for s in lam.sites if s not in Y)
    for _ in range(samples):
        A = fock.random_local_operator(lam, lam.sites, rng)
        ex = conditional_expectation(A, X)
        comp_d = max(comp_d, op_norm(conditional_expectation(
            conditional_expectation(A, Y), X) - conditional_expectation(A, inter)))
        idem_d = max(idem_d, op_norm(conditional_expectation(ex, X) - ex))

        A_even = fock.random_local_operator(lam, y_comp, rng, parity=EVEN) \
            if y_comp else identity(lam)
        B_even = fock.random_local_operator(lam, Y, rng, parity=EVEN) \
            if Y else identity(lam)
        lhs = conditional_expectation(A_even @ B_even, X)
        rhs = conditional_expectation(A_even, X | Y) @ conditional_expectation(
            B_even, X | frozenset(y_comp))
        prod_d = max(prod_d, op_norm(lhs - rhs))

        C = fock.random_local_operator(lam, lam.sites, rng, parity=EVEN)
        small = conditional_expectation(C, X)
        big = conditional_expectation(fock.embed(C, enlarged), X)
        vol_d = max(vol_d, op_norm(fock.embed(small, enlarged) - big))
    return FamilyReport(
        region_x=lam.sorted_subset(X), region_y=lam.sorted_subset(Y),
        samples=samples, composition_defect=comp_d, idempotence_defect=idem_d,
        product_defect=prod_d, volume_defect=vol_d)
