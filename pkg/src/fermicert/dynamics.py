"""Interactions, finite-volume Hamiltonians, and the Heisenberg dynamics.

An interaction is a finite list of terms, each a self-adjoint even
operator on a small site subset with an optional real time profile.  The
local Hamiltonian on a volume collects every term supported inside it,

    H_Lambda(t) = sum_{X subset Lambda} Phi(X, t),

and the two-parameter unitary propagator solves

    d/dt U(t, s) = -i H(t) U(t, s),   U(s, s) = 1.

Propagation uses second-order midpoint stepping with an exact Hermitian
eigendecomposition exponential per step, so every step is unitary by
construction; the accumulated unitarity defect is tracked and a polar
re-orthonormalization is applied if it ever exceeds the tolerance.
Only even interactions are accepted: evenness is what makes the dynamics
preserve the parity sectors and is assumed by every bound downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse

from . import fock
from .fock import EVEN, MIXED, FockOperator, SiteSet

#: propagator unitarity defect above which a polar correction is applied
UNITARITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class InteractionTerm:
    """One interaction term: a self-adjoint template on its own small
    lattice, scaled by a real profile (None = constant 1)."""

    sites: tuple
    operator: FockOperator
    profile: Callable[[float], float] | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.operator.ambient.sites != self.sites:
            raise ValueError("term operator must live on exactly its sites, in order")
        if not self.operator.is_hermitian(1e-12):
            raise ValueError("term template must be self-adjoint")
        object.__setattr__(self, "norm", fock.op_norm(self.operator))

    norm: float = field(init=False)

    def coefficient(self, t: float) -> float:
        return 1.0 if self.profile is None else float(self.profile(t))


@dataclass(frozen=True, eq=False)
class Interaction:
    """Finite collection of interaction terms with a time interval of
    validity.  With even=True every term must carry the even parity tag."""

    terms: tuple
    interval: tuple = (-math.inf, math.inf)
    even: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.even:
            for term in self.terms:
                if term.operator.parity != EVEN:
                    raise ValueError(
                        f"term on sites {term.sites} is not even-tagged; "
                        "construct with even=False for general interactions")

    @property
    def is_time_dependent(self) -> bool:
        return any(term.profile is not None for term in self.terms)

    def check_time(self, t: float):
        lo, hi = self.interval
        if not (lo <= t <= hi):
            raise ValueError(f"time {t} outside interaction interval [{lo}, {hi}]")

    def all_sites(self) -> frozenset:
        out = frozenset()
        for term in self.terms:
            out |= frozenset(term.sites)
        return out


def term(lam_or_sites, operator: FockOperator, profile=None, label="") -> InteractionTerm:
    """Convenience constructor accepting the sites tuple directly."""
    sites = tuple(lam_or_sites.sites) if isinstance(lam_or_sites, SiteSet) else tuple(lam_or_sites)
    return InteractionTerm(sites, operator, profile, label)


def scaled_profile(phi: Interaction, profile: Callable[[float], float],
                   interval: tuple) -> Interaction:
    """New interaction with every term's coefficient multiplied by
    ``profile``; used e.g. for ramped couplings."""
    new_terms = []
    for t in phi.terms:
        if t.profile is None:
            combined = profile
        else:
            combined = (lambda r, old=t.profile: old(r) * profile(r))
        new_terms.append(InteractionTerm(t.sites, t.operator, combined, t.label))
    return Interaction(tuple(new_terms), interval, phi.even)


@lru_cache(maxsize=4096)
def _embedded_sparse(term_obj: InteractionTerm, lam: SiteSet) -> sparse.csr_matrix:
    """Term template embedded into ``lam``, kept sparse for accumulation."""
    emb = fock.embed(term_obj.operator, lam)
    m = sparse.csr_matrix(emb.matrix)
    m.eliminate_zeros()
    return m


def term_operator(term_obj: InteractionTerm, lam: SiteSet, t: float = 0.0) -> FockOperator:
    """Phi(X, t) represented on the Fock space of ``lam``."""
    m = np.asarray(_embedded_sparse(term_obj, lam).todense()) * term_obj.coefficient(t)
    return FockOperator(m, lam, frozenset(term_obj.sites), term_obj.operator.parity)


def local_hamiltonian(phi: Interaction, lam: SiteSet, t: float = 0.0) -> FockOperator:
    """Sum of all terms supported inside ``lam``, on the ambient Fock space."""
    phi.check_time(t)
    ambient = set(lam.sites)
    acc = np.zeros((lam.dim, lam.dim), dtype=complex)
    support = set()
    for term_obj in phi.terms:
        if not set(term_obj.sites) <= ambient:
            continue
        c = term_obj.coefficient(t)
        if c == 0.0:
            continue
        acc += c * _embedded_sparse(term_obj, lam).toarray()
        support |= set(term_obj.sites)
    parity = EVEN if phi.even else MIXED
    return FockOperator(acc, lam, frozenset(support), parity)


def _expm_hermitian(H: np.ndarray, factor: complex) -> np.ndarray:
    """exp(factor * H) for Hermitian H via eigendecomposition; unitary to
    machine precision when factor is imaginary."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(factor * w)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class Propagator:
    """Unitary U(t, s) solving the Schroedinger equation for the local
    Hamiltonian, with step-size and unitarity metadata."""

    matrix: np.ndarray
    lattice: SiteSet
    s: float
    t: float
    step: float
    unitarity_defect: float
    corrections: int = 0
    steps_taken: int = 0

    def __post_init__(self):
        self.matrix.flags.writeable = False

    def adjoint_matrix(self) -> np.ndarray:
        return self.matrix.conj().T


def propagate(phi: Interaction, lam: SiteSet, s: float, t: float,
              step: float = 1e-2) -> Propagator:
    """Unitary propagator U(t, s) for the volume ``lam``.

    Time-independent interactions are exponentiated in one exact step;
    otherwise second-order midpoint stepping with per-step Hermitian
    exponentials is used.  Rejects non-even interactions.
    """
    if not phi.even:
        raise ValueError("only even interactions generate the certified dynamics")
    if step <= 0:
        raise ValueError("step must be positive")
    phi.check_time(s)
    phi.check_time(t)
    dim = lam.dim
    if t == s:
        return Propagator(np.eye(dim, dtype=complex), lam, s, t, step, 0.0, 0, 0)

    if not phi.is_time_dependent:
        H = local_hamiltonian(phi, lam, s).matrix
        U = _expm_hermitian(H, -1j * (t - s))
        defect = fock.op_norm(U.conj().T @ U - np.eye(dim))
        return Propagator(U, lam, s, t, step, defect, 0, 1)

    pieces = []
    for term_obj in phi.terms:
        if set(term_obj.sites) <= set(lam.sites):
            pieces.append((_embedded_sparse(term_obj, lam), term_obj))
    n_steps = max(1, math.ceil(abs(t - s) / step))
    dt = (t - s) / n_steps
    U = np.eye(dim, dtype=complex)
    for k in range(n_steps):
        tm = s + (k + 0.5) * dt
        H = np.zeros((dim, dim), dtype=complex)
        for mat, term_obj in pieces:
            c = term_obj.coefficient(tm)
            if c != 0.0:
                H += c * mat.toarray()
        U = _expm_hermitian(H, -1j * dt) @ U
    defect = fock.op_norm(U.conj().T @ U - np.eye(dim))
    corrections = 0
    if defect > UNITARITY_TOL:
        w, sv, vh = np.linalg.svd(U)
        U = w @ vh
        corrections = 1
        defect = fock.op_norm(U.conj().T @ U - np.eye(dim))
    return Propagator(U, lam, s, t, abs(dt), defect, corrections, n_steps)


def heisenberg(A: FockOperator, U: Propagator) -> FockOperator:
    """tau_{t,s}(A) = U(t,s)* A U(t,s); norm and parity preserving."""
    if A.ambient != U.lattice:
        raise ValueError("observable and propagator live on different site sets")
    m = U.matrix.conj().T @ A.matrix @ U.matrix
    return FockOperator(m, A.ambient, frozenset(A.ambient.sites), A.parity)


def inverse_heisenberg(A: FockOperator, U: Propagator) -> FockOperator:
    """The inverse automorphism: U(t,s) A U(t,s)*."""
    if A.ambient != U.lattice:
        raise ValueError("observable and propagator live on different site sets")
    m = U.matrix @ A.matrix @ U.matrix.conj().T
    return FockOperator(m, A.ambient, frozenset(A.ambient.sites), A.parity)
