"""Light-cone certification: measured norms of evolved (anti)commutators
against the explicit decay bound.

For disjointly supported A, B with [A, B] = 0 (which parity guarantees
when one of them is even), the evolved commutator obeys

    ||[tau_{t,s}(A), B]|| <= 2 ||A|| ||B|| (e^{2 I(s,t)} - 1) * Sigma,

with I(s,t) the time integral of the interaction decay norm ||Phi||_G and

    Sigma = sum_{x in boundary(X)} sum_{y in Y} G(x, y)

the geometry factor over the interaction boundary of supp(A).  The same
right-hand side bounds ||{tau_{t,s}(A), B}|| when both observables are
odd.  The bound arises as a series: the n-th term is controlled by
(2 I)^n / n! times the geometry factor, and truncating after N terms
leaves a remainder below 2 ||B|| |boundary(X)| ||G|| (2I)^{N+1} / (N+1)!.

``certify`` measures the left-hand side on a time grid, evaluates the
right-hand side, and fails hard if any grid point violates the
inequality.

Single-site terms enter the decay norm like every other term; the sharper
interaction-picture treatment under which purely on-site terms drop out
of the estimate is deliberately not implemented.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dynamics import Interaction, Propagator, heisenberg, propagate
from .errors import CertificationError
from .fock import EVEN, ODD, FockOperator, anticommutator, commutator, op_norm
from .geometry import (GFunction, interaction_g_norm,
                       interaction_norm_integral, phi_boundary)

COMMUTATOR = "commutator"
ANTICOMMUTATOR = "anticommutator"

#: relative slack on the certified inequality, plus a tiny absolute floor
#: (scale 2||A|| ||B||) so the t=s point is decidable on generic inputs
CERT_RTOL = 1e-9
CERT_ATOL_SCALE = 1e-12


def delta_indicator(X: Iterable, Y: Iterable) -> int:
    """1 if the two site sets intersect, else 0."""
    return 1 if frozenset(X) & frozenset(Y) else 0


def lr_rhs(norm_a: float, norm_b: float, phi_norm_integral: float,
           geometry: float) -> float:
    """2 ||A|| ||B|| (exp(2 * integral) - 1) * geometry factor."""
    if min(norm_a, norm_b, phi_norm_integral, geometry) < 0:
        raise ValueError("all bound ingredients must be nonnegative")
    arg = 2.0 * phi_norm_integral
    if arg > 700.0:  # exp overflow; the bound is vacuously +inf
        return math.inf
    return 2.0 * norm_a * norm_b * math.expm1(arg) * geometry


@dataclass(frozen=True, eq=False)
class LRBoundReport:
    """Measured (anti)commutator norms against the closed-form bound on a
    time grid, with the geometry data that produced the bound."""

    mode: str
    start: float
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    norm_a: float
    norm_b: float
    support_a: tuple
    support_b: tuple
    boundary_sites: tuple
    geometry_factor: float
    g_norm: float
    phi_integrals: np.ndarray
    step: float

    def rows(self):
        for t, m, b, r in zip(self.times, self.measured, self.bound, self.ratio):
            yield {"t": float(t), "measured": float(m), "bound": float(b),
                   "ratio": float(r), "mode": self.mode}

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "measured", "bound", "ratio", "mode"],
                                    lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "start": self.start,
            "times": [float(t) for t in self.times],
            "measured": [float(m) for m in self.measured],
            "bound": [float(b) for b in self.bound],
            "ratio": [float(r) for r in self.ratio],
            "norm_a": self.norm_a,
            "norm_b": self.norm_b,
            "support_a": [repr(s) for s in self.support_a],
            "support_b": [repr(s) for s in self.support_b],
            "boundary_sites": [repr(s) for s in self.boundary_sites],
            "geometry_factor": self.geometry_factor,
            "g_norm": self.g_norm,
            "phi_integrals": [float(v) for v in self.phi_integrals],
            "step": self.step,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _infer_mode(A: FockOperator, B: FockOperator) -> str:
    if A.parity == ODD and B.parity == ODD:
        return ANTICOMMUTATOR
    if EVEN in (A.parity, B.parity):
        return COMMUTATOR
    raise ValueError(
        "no certifiable mode: need one even observable (commutator) or two "
        "odd ones (anticommutator); got "
        f"{A.parity!r} and {B.parity!r}")


def certify(A: FockOperator, B: FockOperator, phi: Interaction, G: GFunction,
            s: float, times: Iterable[float], mode: str | None = None,
            step: float = 1e-2) -> LRBoundReport:
    """Propagate A, measure ||[tau_{t,s}(A), B]|| (or the anticommutator)
    on the grid, and certify it against the closed-form bound.

    Raises ValueError on misuse (overlapping supports, illegal parity
    combination, nonvanishing initial bracket) and CertificationError if a
    grid point violates the bound -- the latter signals an implementation
    bug, not a property of the model.
    """
    lam = A.ambient
    if B.ambient != lam:
        raise ValueError("A and B must share one ambient lattice")
    if G.graph.sites != lam:
        raise ValueError("G function lives on a different site set")
    X, Y = A.support, B.support
    if X & Y:
        raise ValueError("supports must be disjoint")
    if mode is None:
        mode = _infer_mode(A, B)
    elif mode not in (COMMUTATOR, ANTICOMMUTATOR):
        raise ValueError(f"unknown mode {mode!r}")
    elif mode == COMMUTATOR and EVEN not in (A.parity, B.parity):
        raise ValueError("commutator mode needs at least one even observable")
    elif mode == ANTICOMMUTATOR and (A.parity, B.parity) != (ODD, ODD):
        raise ValueError("anticommutator mode needs two odd observables")

    bracket = commutator if mode == COMMUTATOR else anticommutator
    norm_a, norm_b = op_norm(A), op_norm(B)
    initial = op_norm(bracket(A, B))
    if initial > 1e-10 * max(1.0, norm_a * norm_b):
        raise ValueError(f"initial {mode} does not vanish: {initial:.3e}")

    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0:
        raise ValueError("empty time grid")
    if times[0] < s:
        raise ValueError("grid times must not precede the start time")

    window = (s, float(times[-1]))
    boundary = lam.sorted_subset(phi_boundary(phi, X, interval=window))
    geometry = G.pair_sum(boundary, lam.sorted_subset(Y))

    measured = np.zeros(times.size)
    bound = np.zeros(times.size)
    integrals = np.zeros(times.size)
    static_rate = None if phi.is_time_dependent else interaction_g_norm(phi, G, s)

    U = None
    prev = s
    integral = 0.0
    floor = CERT_ATOL_SCALE * max(1.0, norm_a * norm_b)
    worst = None
    for i, t in enumerate(times):
        if t == prev and U is not None:
            pass
        elif U is None:
            U = propagate(phi, lam, s, t, step=step)
        else:
            seg = propagate(phi, lam, prev, t, step=step)
            U = Propagator(seg.matrix @ U.matrix, lam, s, t, step,
                           max(U.unitarity_defect, seg.unitarity_defect),
                           U.corrections + seg.corrections,
                           U.steps_taken + seg.steps_taken)
        prev = t
        tau_a = heisenberg(A, U)
        measured[i] = op_norm(bracket(tau_a, B))
        if static_rate is not None:
            integral = static_rate * (t - s)
        else:
            integral = interaction_norm_integral(phi, G, s, t)
        integrals[i] = integral
        bound[i] = lr_rhs(norm_a, norm_b, integral, geometry)
        if measured[i] > bound[i] * (1 + CERT_RTOL) + floor:
            excess = measured[i] - bound[i]
            if worst is None or excess > worst[1] - worst[2]:
                worst = (float(t), float(measured[i]), float(bound[i]))
    if worst is not None:
        raise CertificationError(
            f"bound violated at t={worst[0]}: measured {worst[1]:.6e} > bound {worst[2]:.6e}",
            where=worst[0], measured=worst[1], bound=worst[2])

    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(bound > 0, measured / bound, 0.0)
    return LRBoundReport(
        mode=mode, start=s, times=times, measured=measured, bound=bound,
        ratio=ratio, norm_a=norm_a, norm_b=norm_b,
        support_a=lam.sorted_subset(X), support_b=lam.sorted_subset(Y),
        boundary_sites=tuple(boundary), geometry_factor=geometry,
        g_norm=G.norm, phi_integrals=integrals, step=step)


@dataclass(frozen=True)
class SeriesDiagnostics:
    """Truncated series for the bound: cumulative partial sums of the
    per-order terms (scaled by 2||A|| ||B||) and the tail estimate."""

    partial_sums: np.ndarray
    remainder: float
    closed_form: float


def series_diagnostics(norm_a: float, norm_b: float, phi_norm_integral: float,
                       geometry: float, boundary_size: int, g_norm: float,
                       nmax: int) -> SeriesDiagnostics:
    """Orders 1..nmax of the expansion behind the closed-form bound.

    The n-th order contributes at most 2||A|| ||B|| (2I)^n / n! * geometry;
    the tail after nmax is below 2 ||B|| |boundary| ||G|| (2I)^{nmax+1} /
    (nmax+1)!.
    """
    if nmax < 1:
        raise ValueError("need at least one series order")
    x = 2.0 * phi_norm_integral
    terms = np.zeros(nmax)
    t = 1.0
    for n in range(1, nmax + 1):
        t *= x / n
        terms[n - 1] = 2.0 * norm_a * norm_b * t * geometry
    remainder = 2.0 * norm_b * boundary_size * g_norm * t * x / (nmax + 1)
    closed = lr_rhs(norm_a, norm_b, phi_norm_integral, geometry)
    return SeriesDiagnostics(np.cumsum(terms), float(remainder), closed)
