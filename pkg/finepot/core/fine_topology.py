"""
Thinness through the Wiener-type capacity-ratio sum on dyadic shells, and the
fine-topology classifications built on it.

The integrand at scale r is (cp(E∩B(x,r), B(x,2r)) / cp(B(x,r), B(x,2r)))^{1/(p−1)},
taken as 1 when the denominator vanishes. Scales are truncated at grid
resolution, so every verdict can be ``inconclusive``. Besides the scale-wise
rule, each profile compares its terms with the same terms on the nested coarse
grid: a set of zero capacity density (a point for p ≤ dim) looks larger as the
grid is refined relative to r, so its terms shrink under coarse-to-fine
comparison while a set of positive density keeps them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from finepot.classes.errors import PreconditionError
from finepot.core.capacity import variational_capacity
from finepot.core.grid_domain import GridDomain, NodeSet, ScalarField
from finepot.core.minimizer import DEFAULT_TOL

_LOGGER = logging.getLogger(__name__)

DEFAULT_DELTA = 0.2
DEFAULT_TAU = 1e-3
DEFAULT_DELTA_REF = 0.08
ZERO_CAPACITY = 1e-12
# smallest radius in units of h; B(x, 2r) then spans >= 8 nodes per axis
MIN_RADIUS_STEPS = 2.0
# smallest fine-grid radius compared against the coarse grid
MIN_REFINE_STEPS = 8.0
DEFAULT_SAMPLE = 16

THIN = "thin"
NOT_THIN = "not_thin"
INCONCLUSIVE = "inconclusive"


@dataclass
class WienerProfile:
    center: tuple[float, ...]
    radii: list[float]
    terms: list[float]
    partial_sum: float
    verdict: str
    decay_ratio: float
    refinement_ratio: float = float("nan")
    coarse_terms: list[float | None] = field(default_factory=list)
    p: float = 2.0

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": self.radii,
            "terms": self.terms,
            "partial_sum": self.partial_sum,
            "verdict": self.verdict,
            "q": _json_float(self.decay_ratio),
            "refinement_ratio": _json_float(self.refinement_ratio),
            "coarse_terms": self.coarse_terms,
            "p": self.p,
        }


@dataclass
class SampleSpec:
    """Which points a classification looks at: explicit points, all nodes (count=None) or a stratified sample."""

    count: int | None = DEFAULT_SAMPLE
    seed: int = 0
    points: list[Sequence[float]] | None = None

    @classmethod
    def from_dict(cls, data: dict | None) -> "SampleSpec":
        if data is None:
            return cls()
        if isinstance(data, SampleSpec):
            return data
        count = data.get("count", DEFAULT_SAMPLE)
        if data.get("mode") == "all":
            count = None
        return cls(count=count, seed=int(data.get("seed", 0)), points=data.get("points"))

    def select(self, nodes: NodeSet) -> np.ndarray:
        domain = nodes.domain
        if self.points is not None:
            picked = [domain.nearest_node(pt) for pt in self.points]
            return np.asarray([i for i in dict.fromkeys(picked) if nodes.mask[i]], dtype=int)
        indices = nodes.indices()
        if self.count is None or self.count >= indices.size:
            return indices
        rng = np.random.default_rng(self.seed)
        strata = np.array_split(indices, self.count)
        return np.asarray([chunk[rng.integers(chunk.size)] for chunk in strata if chunk.size], dtype=int)


@dataclass
class FineOpenReport:
    points: list[tuple[float, ...]]
    verdicts: list[str]
    aggregate: str
    skipped: list[tuple[float, ...]]
    profiles: list[WienerProfile] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate,
            "points": [list(pt) for pt in self.points],
            "verdicts": self.verdicts,
            "skipped": [list(pt) for pt in self.skipped],
        }


@dataclass
class FineBoundaryReport:
    boundary: NodeSet
    inconclusive: NodeSet
    evaluated: NodeSet
    skipped: NodeSet
    profiles: dict[int, WienerProfile] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "boundary_count": self.boundary.count,
            "inconclusive_count": self.inconclusive.count,
            "evaluated_count": self.evaluated.count,
            "skipped_count": self.skipped.count,
            "boundary_nodes": self.boundary.indices().tolist(),
            "inconclusive_nodes": self.inconclusive.indices().tolist(),
        }

    def classification(self) -> np.ndarray:
        """0 = evaluated, not in the fine boundary; 128 = inconclusive; 255 = fine boundary."""
        labels = np.zeros(self.boundary.domain.n_nodes, dtype=np.uint8)
        labels[self.inconclusive.mask] = 128
        labels[self.boundary.mask] = 255
        return labels


def max_scales(domain: GridDomain, R0: float) -> int:
    """Largest K with R0·2^{−K} >= 2h."""
    smallest = MIN_RADIUS_STEPS * domain.h
    if R0 < smallest:
        raise PreconditionError(f"R0={R0} is below the resolvable radius {smallest:.4g}")
    return int(math.floor(math.log2(R0 / smallest) + 1e-12))


@lru_cache(maxsize=512)
def _ball_capacity(domain: GridDomain, center: tuple[float, ...], radius: float, p: float, tol: float) -> float:
    return variational_capacity(domain.ball(center, radius), domain.ball(center, 2 * radius), p, tol).value


def wiener_term(E: NodeSet, center: Sequence[float], radius: float, p: float, tol: float = DEFAULT_TOL) -> float:
    """(cp(E∩B_r, B_2r) / cp(B_r, B_2r))^{1/(p−1)}, clamped to [0, 1]."""
    domain = E.domain
    center = tuple(float(c) for c in center)
    ball = domain.ball(center, radius)
    part = E & ball
    if part.is_empty():
        return 0.0
    outer = domain.ball(center, 2 * radius)
    denominator = _ball_capacity(domain, center, float(radius), float(p), float(tol))
    scale = outer.measure() / radius ** p
    if denominator < ZERO_CAPACITY * scale or part == ball:
        return 1.0
    numerator = variational_capacity(part, outer, p, tol).value
    return float(np.clip(numerator / denominator, 0.0, 1.0) ** (1.0 / (p - 1)))


def wiener_profile(E: NodeSet, x: Sequence[float], p: float, R0: float, K: int | None = None, *,
                   delta: float = DEFAULT_DELTA, tau: float = DEFAULT_TAU,
                   delta_ref: float = DEFAULT_DELTA_REF, refine: bool = True,
                   tol: float = DEFAULT_TOL) -> WienerProfile:
    """Dyadic capacity-ratio profile of E at x over r_k = R0·2^{−k}, k = 0..K, and its verdict."""
    domain = E.domain
    if not p > 1:
        raise PreconditionError(f"p must be > 1, got {p}")
    center = tuple(float(c) for c in domain.coords[domain.nearest_node(x)])
    if not domain.contains_ball(center, 2 * R0):
        raise PreconditionError(f"ball B({list(center)}, {2 * R0}) exits the grid")
    K_max = max_scales(domain, R0)
    if K is None:
        K = K_max
    if K > K_max:
        raise PreconditionError(f"K={K} too large for the resolution (at most {K_max})")

    radii = [R0 * 2.0 ** (-k) for k in range(K + 1)]
    terms = [wiener_term(E, center, r, p, tol) for r in radii]

    coarse_terms: list[float | None] = [None] * len(radii)
    if refine and domain.coarsenable:
        coarse = domain.coarsen()
        coarse_E = domain.restrict(E, coarse)
        for k, r in enumerate(radii):
            if r >= MIN_REFINE_STEPS * domain.h - 1e-12:
                coarse_terms[k] = wiener_term(coarse_E, center, r, p, tol)

    q = _median_ratio(terms)
    rho = _refinement_ratio(terms, coarse_terms, tau)
    verdict = classify(terms, q, rho, delta=delta, tau=tau, delta_ref=delta_ref)
    partial_sum = float(sum(terms) * math.log(2.0))
    _LOGGER.debug("Wiener profile at %s: terms=%s q=%.3g rho=%.3g -> %s", center, terms, q, rho, verdict)
    return WienerProfile(center=center, radii=radii, terms=terms, partial_sum=partial_sum,
                         verdict=verdict, decay_ratio=q, refinement_ratio=rho,
                         coarse_terms=coarse_terms, p=p)


def classify(terms: Sequence[float], q: float, rho: float, *, delta: float = DEFAULT_DELTA,
             tau: float = DEFAULT_TAU, delta_ref: float = DEFAULT_DELTA_REF) -> str:
    if terms[-1] <= tau:
        return THIN
    if np.isfinite(q) and q <= 1 - delta:
        return THIN
    if np.isfinite(rho) and rho <= 1 - delta_ref:
        return THIN
    if min(terms) >= tau:
        return NOT_THIN
    return INCONCLUSIVE


def _median_ratio(terms: Sequence[float]) -> float:
    ratios = [b / a for a, b in zip(terms[:-1], terms[1:]) if a > 0]
    return float(np.median(ratios)) if ratios else float("nan")


def _refinement_ratio(terms, coarse_terms, tau: float) -> float:
    ratios = [t / c for t, c in zip(terms, coarse_terms) if c is not None and c >= tau and t >= tau]
    return float(np.median(ratios)) if ratios else float("nan")


def _default_radius(domain: GridDomain) -> float:
    return float(np.min(domain.upper - domain.lower)) / 8.0


def _profile_or_skip(E: NodeSet, node: int, p: float, R0: float, **options) -> WienerProfile | None:
    domain = E.domain
    center = domain.coords[node]
    if R0 < MIN_RADIUS_STEPS * domain.h or not domain.contains_ball(center, 2 * R0):
        return None
    return wiener_profile(E, center, p, R0, **options)


def is_finely_open(V: NodeSet, p: float, sample: SampleSpec | dict | None = None,
                   R0: float | None = None, **options) -> FineOpenReport:
    """Thinness of the complement of V at sampled points of V."""
    if V.is_empty():
        raise PreconditionError("V is empty")
    sample = SampleSpec.from_dict(sample)
    R0 = _default_radius(V.domain) if R0 is None else R0
    complement = ~V
    points, verdicts, skipped, profiles = [], [], [], []
    for node in sample.select(V):
        center = tuple(float(c) for c in V.domain.coords[node])
        profile = _profile_or_skip(complement, node, p, R0, **options)
        if profile is None:
            skipped.append(center)
            continue
        points.append(center)
        verdicts.append(profile.verdict)
        profiles.append(profile)

    if not verdicts:
        aggregate = INCONCLUSIVE
    elif any(v == NOT_THIN for v in verdicts):
        aggregate = "not_finely_open"
    elif all(v == THIN for v in verdicts):
        aggregate = "finely_open"
    else:
        aggregate = INCONCLUSIVE
    if skipped:
        _LOGGER.info("Skipped %d sample points too close to the grid boundary", len(skipped))
    return FineOpenReport(points=points, verdicts=verdicts, aggregate=aggregate,
                          skipped=skipped, profiles=profiles)


def fine_boundary(E: NodeSet, p: float, sample: SampleSpec | dict | None = None,
                  R0: float | None = None, **options) -> FineBoundaryReport:
    """
    Sampled fine boundary: points of E where the complement is not thin, and points
    off E where E is not thin. Inconclusive points are kept apart.
    """
    domain = E.domain
    sample = SampleSpec.from_dict(sample)
    R0 = _default_radius(domain) if R0 is None else R0
    complement = ~E
    boundary = np.zeros(domain.n_nodes, dtype=bool)
    unsure = np.zeros(domain.n_nodes, dtype=bool)
    evaluated = np.zeros(domain.n_nodes, dtype=bool)
    skipped = np.zeros(domain.n_nodes, dtype=bool)
    profiles = {}
    for node in sample.select(domain.full()):
        other = complement if E.mask[node] else E
        profile = _profile_or_skip(other, node, p, R0, **options)
        if profile is None:
            skipped[node] = True
            continue
        evaluated[node] = True
        profiles[int(node)] = profile
        if profile.verdict == NOT_THIN:
            boundary[node] = True
        elif profile.verdict == INCONCLUSIVE:
            unsure[node] = True
    return FineBoundaryReport(boundary=NodeSet(domain, boundary), inconclusive=NodeSet(domain, unsure),
                              evaluated=NodeSet(domain, evaluated), skipped=NodeSet(domain, skipped),
                              profiles=profiles)


def fine_interior(E: NodeSet, p: float, sample: SampleSpec | dict | None = None,
                  R0: float | None = None, **options) -> NodeSet:
    """Sampled points of E at which the complement of E is thin."""
    domain = E.domain
    sample = SampleSpec.from_dict(sample)
    R0 = _default_radius(domain) if R0 is None else R0
    inside = np.zeros(domain.n_nodes, dtype=bool)
    for node in sample.select(E):
        profile = _profile_or_skip(~E, node, p, R0, **options)
        if profile is not None and profile.verdict == THIN:
            inside[node] = True
    return NodeSet(domain, inside)


def fine_closure(E: NodeSet, p: float, sample: SampleSpec | dict | None = None,
                 R0: float | None = None, **options) -> NodeSet:
    """E together with the sampled points off E at which E is not thin."""
    domain = E.domain
    sample = SampleSpec.from_dict(sample)
    R0 = _default_radius(domain) if R0 is None else R0
    closure = E.mask.copy()
    for node in sample.select(~E):
        profile = _profile_or_skip(E, node, p, R0, **options)
        if profile is not None and profile.verdict == NOT_THIN:
            closure[node] = True
    return NodeSet(domain, closure)


def positivity_set(u: ScalarField, threshold: float = 0.0) -> NodeSet:
    """{x : u(x) > threshold}; NaN nodes are excluded."""
    with np.errstate(invalid="ignore"):
        return NodeSet(u.domain, u.values > threshold)


def quasiopen_from_potential(u: ScalarField, obstacle: ScalarField | None = None,
                             threshold: float = 0.0) -> NodeSet:
    """Positivity set of a potential, or of u − ψ (the non-contact set of an obstacle solution)."""
    if obstacle is None:
        return positivity_set(u, threshold)
    with np.errstate(invalid="ignore"):
        return positivity_set(u - obstacle, threshold)


def _json_float(value: float):
    return None if value is None or not np.isfinite(value) else float(value)
