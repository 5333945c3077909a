"""Metric structure on the lattice and the decay functions entering the
light-cone bounds.

An F-function is a non-increasing, strictly positive profile r -> F(r)
whose row sums over the lattice are uniformly bounded,

    ||F|| = sup_x sum_y F(d(x, y)),

and which satisfies the convolution condition

    C = sup_{x,y} sum_z F(d(x,z)) F(d(z,y)) / F(d(x,y)) < infinity.

G(x,y) = F(d(x,y)) / C is then symmetric, has bounded row sums, and is
subordinate to its own convolution, which is exactly what the iteration
behind the commutator bound needs.

All suprema here are exact over the given finite graph; they lower-bound
the corresponding infinite-lattice constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .fock import SiteSet


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Finite site set with a metric given as a dense distance matrix."""

    sites: SiteSet
    distances: np.ndarray
    boundary: str = "open"

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        object.__setattr__(self, "distances", d)
        n = len(self.sites)
        if d.shape != (n, n):
            raise ValueError("distance matrix shape does not match site count")
        if np.abs(d - d.T).max() > 0 or np.abs(np.diag(d)).max() > 0 or d.min() < 0:
            raise ValueError("distances must be symmetric, nonnegative, zero on the diagonal")
        d.flags.writeable = False

    def distance(self, x, y) -> float:
        return float(self.distances[self.sites.position(x), self.sites.position(y)])

    def ball(self, center, radius: float) -> tuple:
        """Sites within ``radius`` of ``center``, in lattice order."""
        i = self.sites.position(center)
        mask = self.distances[i] <= radius + 1e-12
        return tuple(x for x, m in zip(self.sites.sites, mask) if m)

    def triangle_defect(self) -> float:
        """max over all triples of d(x,y) - d(x,z) - d(z,y); <= 0 for a metric."""
        d = self.distances
        worst = -math.inf
        n = d.shape[0]
        for z in range(n):
            worst = max(worst, float((d - d[:, [z]] - d[[z], :]).max()))
        return worst


def chain_graph(length: int, boundary: str = "open") -> MetricGraph:
    """One-dimensional slab with sites 0..length-1 and |i-j| (open) or
    ring (periodic) distance."""
    idx = np.arange(length)
    diff = np.abs(idx[:, None] - idx[None, :])
    if boundary == "periodic":
        diff = np.minimum(diff, length - diff)
    elif boundary != "open":
        raise ValueError(f"unknown boundary {boundary!r}")
    return MetricGraph(SiteSet(range(length)), diff.astype(float), boundary)


def grid_graph(lengths: Sequence[int], boundary: str = "open") -> MetricGraph:
    """Hypercubic slab with coordinate-tuple sites and the l1 metric
    (per-axis ring distance when periodic)."""
    lengths = tuple(int(n) for n in lengths)
    if any(n < 1 for n in lengths):
        raise ValueError("all side lengths must be >= 1")
    if boundary not in ("open", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    coords = list(itertools.product(*(range(n) for n in lengths)))
    arr = np.array(coords)
    d = np.zeros((len(coords), len(coords)))
    for axis, n in enumerate(lengths):
        diff = np.abs(arr[:, None, axis] - arr[None, :, axis])
        if boundary == "periodic":
            diff = np.minimum(diff, n - diff)
        d += diff
    sites = SiteSet(coords if len(lengths) > 1 else [c[0] for c in coords])
    return MetricGraph(sites, d.astype(float), boundary)


@dataclass(frozen=True)
class DecayFunction:
    """Power-law profile with optional exponential weight:

        F(r) = exp(-rate * r) / (1 + r)^(nu + epsilon),

    non-increasing and strictly positive for rate >= 0, epsilon > 0.
    """

    nu: int
    epsilon: float
    rate: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.rate < 0:
            raise ValueError("exponential weight must be nonnegative")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-self.rate * r) / (1.0 + r) ** (self.nu + self.epsilon)


def f_norm(F: Callable, graph: MetricGraph) -> float:
    """sup_x sum_y F(d(x,y)), exact on the finite graph."""
    return float(F(graph.distances).sum(axis=1).max())


def f_conv_constant(F: Callable, graph: MetricGraph) -> float:
    """sup_{x,y} sum_z F(d(x,z)) F(d(z,y)) / F(d(x,y)), exact on the graph."""
    fd = F(graph.distances)
    return float(((fd @ fd) / fd).max())


@dataclass(frozen=True, eq=False)
class GFunction:
    """Pairwise decay weights G(x,y) on a finite graph.

    Required properties (validated by ``defects``): symmetry, convolution
    subordination sum_z G(x,z) G(z,y) <= G(x,y), and bounded row sums;
    ``norm`` is the largest row sum.
    """

    graph: MetricGraph
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        n = len(self.graph.sites)
        if v.shape != (n, n):
            raise ValueError("G values shape does not match the graph")
        if v.min() <= 0:
            raise ValueError("G must be strictly positive")
        v.flags.writeable = False

    @cached_property
    def norm(self) -> float:
        return float(self.values.sum(axis=1).max())

    def value(self, x, y) -> float:
        return float(self.values[self.graph.sites.position(x), self.graph.sites.position(y)])

    def pair_sum(self, xs: Iterable, ys: Iterable) -> float:
        """sum_{x in xs} sum_{y in ys} G(x,y)."""
        pi = list(self.graph.sites.positions(xs))
        pj = list(self.graph.sites.positions(ys))
        if not pi or not pj:
            return 0.0
        return float(self.values[np.ix_(pi, pj)].sum())

    def defects(self) -> dict:
        v = self.values
        conv = float(((v @ v) / v).max() - 1.0)
        sym = float(np.abs(v - v.T).max())
        return {"symmetry": sym, "convolution": conv}


def g_from_f(F: Callable, graph: MetricGraph) -> GFunction:
    """G(x,y) = F(d(x,y)) / C with C the convolution constant of F."""
    c = f_conv_constant(F, graph)
    if not math.isfinite(c) or c <= 0:
        raise ValueError("convolution constant must be finite and positive")
    return GFunction(graph, F(graph.distances) / c)


def spatially_weighted(G: GFunction, weight: Callable) -> GFunction:
    """G_g(x,y) = g(x) g(y) G(x,y) for a site weight g with values in (0, 1]."""
    w = np.array([float(weight(x)) for x in G.graph.sites.sites])
    if w.min() <= 0 or w.max() > 1:
        raise ValueError("site weights must lie in (0, 1]")
    return GFunction(G.graph, w[:, None] * G.values * w[None, :])


# -- interaction decay bookkeeping ------------------------------------------

def interaction_g_norm(phi, G: GFunction, t: float = 0.0) -> float:
    """Smallest k with sum_{Z containing x,y} ||Phi(Z,t)|| <= k G(x,y) for
    all site pairs: the max over pairs of the ratio."""
    sites = G.graph.sites
    n = len(sites)
    acc = np.zeros((n, n))
    for term in phi.terms:
        w = abs(term.coefficient(t)) * term.norm
        if w == 0.0:
            continue
        pos = list(sites.positions(term.sites))
        acc[np.ix_(pos, pos)] += w
    if not acc.any():
        return 0.0
    return float((acc / G.values).max())


def interaction_norm_integral(phi, G: GFunction, s: float, t: float,
                              samples: int = 65) -> float:
    """Integral of r -> ||Phi||_G(r) over [s, t].

    Exact for time-independent interactions ((t-s) times the constant);
    composite Simpson on a uniform grid otherwise.
    """
    if t == s:
        return 0.0
    if not phi.is_time_dependent:
        return abs(t - s) * interaction_g_norm(phi, G, s)
    from scipy.integrate import simpson
    grid = np.linspace(s, t, samples)
    vals = np.array([interaction_g_norm(phi, G, r) for r in grid])
    return abs(float(simpson(vals, x=grid)))


def surface_sets(lam: SiteSet, X: Iterable, phi) -> list:
    """Interaction-supported subsets of ``lam`` meeting both X and its
    complement in ``lam`` (term-list scan, never a powerset sweep)."""
    X = frozenset(X)
    for x in X:
        lam.position(x)
    ambient = frozenset(lam.sites)
    seen = []
    for term in phi.terms:
        z = frozenset(term.sites)
        if not z <= ambient:
            continue
        if z & X and not z <= X and z not in seen:
            seen.append(z)
    return sorted(seen, key=lambda z: sorted(lam.positions(z)))


def phi_boundary(phi, X: Iterable, interval: tuple | None = None,
                 samples: int = 64) -> frozenset:
    """Sites of X contained in some interaction term that crosses out of X
    and is nonzero somewhere on the sampled time window.

    Time dependence is probed on a uniform grid (default 64 points) over
    ``interval`` (default: the interaction's own interval); this is the
    documented grid semantics, faithful for piecewise-smooth profiles.
    """
    X = frozenset(X)
    lo, hi = interval if interval is not None else phi.interval
    times = None
    boundary = set()
    for term in phi.terms:
        z = frozenset(term.sites)
        if not (z & X) or z <= X:
            continue
        if term.norm == 0.0:
            continue
        if term.profile is None:
            active = True
        else:
            if times is None:
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    raise ValueError(
                        "time-dependent interaction on an unbounded interval: "
                        "pass an explicit finite interval")
                times = np.linspace(lo, hi, samples)
            active = any(abs(term.coefficient(r)) > 0.0 for r in times)
        if active:
            boundary |= (z & X)
    return frozenset(boundary)
