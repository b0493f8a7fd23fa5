"""
Structural operations on (super)minimizers and fine-limit diagnostics.

Exceptional sets of zero capacity are proxied by measure trimming: extrema over
a neighbourhood or annulus are taken after discarding the extreme-valued nodes
that carry at most a fraction ``trim`` of its measure, from each end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from finepot.classes.errors import PreconditionError
from finepot.core.capacity import sobolev_capacity
from finepot.core.grid_domain import NodeSet, ScalarField, p_energy
from finepot.core.variational_solver import SUPER, VerifyReport, verify_superminimizer

_LOGGER = logging.getLogger(__name__)

DEFAULT_TRIM = 0.05
REGULARIZE_RADIUS = 3.0
MIN_ANNULUS_NODES = 16
LIMIT_ATOL = 1e-9
LIMIT_DECAY = 0.75
NO_LIMIT_FLOOR = 0.5
SPLIT_FLOOR = 0.5
TAIL = 4
PROBE_RADIUS_STEPS = 32

LIMIT_EXISTS = "limit_exists"
NO_LIMIT = "no_limit"
INCONCLUSIVE = "inconclusive"


@dataclass
class FineLimitProbe:
    center: tuple[float, ...]
    radii: list[float]
    raw_inf: list[float]
    raw_sup: list[float]
    trimmed_inf: list[float]
    trimmed_sup: list[float]
    counts: list[int]
    trim: float
    verdict: str = INCONCLUSIVE
    limit_estimate: float = float("nan")
    raw_trimmed_split: bool = False

    @property
    def trimmed_oscillation(self) -> np.ndarray:
        return np.asarray(self.trimmed_sup) - np.asarray(self.trimmed_inf)

    @property
    def raw_oscillation(self) -> np.ndarray:
        return np.asarray(self.raw_sup) - np.asarray(self.raw_inf)

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": self.radii,
            "raw_inf": self.raw_inf,
            "raw_sup": self.raw_sup,
            "trimmed_inf": self.trimmed_inf,
            "trimmed_sup": self.trimmed_sup,
            "counts": self.counts,
            "trim": self.trim,
            "verdict": self.verdict,
            "limit_estimate": None if not np.isfinite(self.limit_estimate) else self.limit_estimate,
            "raw_trimmed_split": self.raw_trimmed_split,
            "exceptional_set_proxy": "measure trimming",
        }


@dataclass
class FineContinuityReport:
    center: tuple[float, ...]
    value: float
    lower_envelope: float
    upper_envelope: float
    verdict: str
    probe: FineLimitProbe = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "value": self.value,
            "lower_envelope": self.lower_envelope,
            "upper_envelope": self.upper_envelope,
            "verdict": self.verdict,
        }


def _same_domain(*items) -> None:
    domain = items[0].domain
    for item in items[1:]:
        if item.domain != domain:
            raise PreconditionError("inputs live on different domains")


def paste(U1: NodeSet, U2: NodeSet, u1: ScalarField, u2: ScalarField) -> ScalarField:
    """u2 off U1 and min(u1, u2) on U1."""
    _same_domain(U1, U2, u1, u2)
    if not U1.issubset(U2):
        raise PreconditionError("U1 is not a subset of U2")
    if not u1.is_finite_on(U1) or not u2.is_finite_on(U2):
        raise PreconditionError("u1 must be finite on U1 and u2 finite on U2")
    values = u2.values.copy()
    values[U1.mask] = np.minimum(u1.values[U1.mask], u2.values[U1.mask])
    return ScalarField(u2.domain, values)


def paste_with_constant(u: ScalarField, U: NodeSet, B: NodeSet, c: float) -> ScalarField:
    """min(u, c) on B ∩ U and c elsewhere: the pasted comparison function of a solution and a constant."""
    return paste(B & U, B, u, u.domain.constant(c))


def min_combine(u: ScalarField, v: ScalarField, U: NodeSet) -> ScalarField:
    _same_domain(u, v, U)
    if not u.is_finite_on(U) or not v.is_finite_on(U):
        raise PreconditionError("both fields must be finite on U")
    return u.minimum(v)


def remove_and_verify(u: ScalarField, U: NodeSet, E: NodeSet, p: float, n_tests: int = 100,
                      seed: int = 0, *, kind: str = SUPER,
                      capacity_threshold: float | None = None) -> VerifyReport:
    """
    Extend u to V = U ∪ E (non-finite nodes of E∖U take the value of the nearest node of U)
    and verify on V. The Sobolev capacity of E is reported as the smallness proxy.
    """
    _same_domain(u, U, E)
    if E.is_empty():
        return verify_superminimizer(u, U, p, n_tests, seed, kind=kind)

    domain = u.domain
    V = U | E
    values = u.values.copy()
    targets = (E - U).mask & ~np.isfinite(values)
    sources = U.mask & np.isfinite(values)
    if np.any(targets):
        if not np.any(sources):
            raise PreconditionError("u has no finite values on U to extend from")
        tree = cKDTree(domain.coords[sources])
        _, nearest = tree.query(domain.coords[targets])
        values[targets] = values[sources][nearest]
    extended = ScalarField(domain, values)

    proxy = sobolev_capacity(E, p).value
    energy = p_energy(extended, V.stencil_closure(), p).total
    report = verify_superminimizer(extended, V, p, n_tests, seed, kind=kind)
    report.details.update({
        "capacity_proxy": proxy,
        "extended_energy": energy,
        "filled_nodes": int(np.count_nonzero(targets)),
        "below_threshold": None if capacity_threshold is None else bool(proxy <= capacity_threshold),
    })
    _LOGGER.info("Removability of %d nodes: Cp proxy %.4g, extended energy %.6g, verify %s",
                 E.count, proxy, energy, "passed" if report.passed else "FAILED")
    return report


def _trimmed_extremes(values: np.ndarray, weights: np.ndarray, trim: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Row-wise trimmed inf/sup: drop extreme nodes from each end while their cumulative
    weight stays within trim·total. NaN entries must carry zero weight.
    """
    total = np.sum(weights, axis=-1, keepdims=True)
    limit = trim * total

    def first_kept(order):
        ranked_values = np.take_along_axis(values, order, axis=-1)
        ranked_weights = np.take_along_axis(weights, order, axis=-1)
        cumulative = np.cumsum(ranked_weights, axis=-1)
        keep = np.argmax(cumulative > limit, axis=-1)
        return np.take_along_axis(ranked_values, keep[..., None], axis=-1)[..., 0]

    low = first_kept(np.argsort(values, axis=-1, kind="stable"))
    high = first_kept(np.argsort(-values, axis=-1, kind="stable"))
    return low, high


def _validate_trim(trim: float) -> None:
    if not 0 <= trim < 0.5:
        raise PreconditionError(f"trim fraction must lie in [0, 0.5), got {trim}")


def _stencil_size(domain, radius: float) -> int:
    """Nodes of the stencil ball B(0, radius·h), centre included."""
    reach = np.floor(radius * domain.h / domain.spacing).astype(int)
    grids = np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    lengths = np.linalg.norm(offsets * domain.spacing, axis=1)
    return int(np.count_nonzero(lengths < radius * domain.h - 1e-12))


def _face_neighbours(domain) -> np.ndarray:
    """(n_nodes, 2·dim) table of axis neighbours, −1 past the grid edge."""
    index = np.stack(np.unravel_index(np.arange(domain.n_nodes), domain.shape), axis=1)
    shape = np.asarray(domain.shape)
    table = np.full((domain.n_nodes, 2 * domain.dim), -1, dtype=np.int64)
    for axis in range(domain.dim):
        for k, step in enumerate((-1, 1)):
            neighbour = index.copy()
            neighbour[:, axis] += step
            inside = (neighbour[:, axis] >= 0) & (neighbour[:, axis] < shape[axis])
            table[inside, 2 * axis + k] = np.ravel_multi_index(tuple(neighbour[inside].T), domain.shape)
    return table


def _area_closing(values: np.ndarray, sizes: np.ndarray, neighbours: np.ndarray, area: float) -> np.ndarray:
    """
    Raise every connected component of a sublevel set {v <= t} whose size is at most
    ``area`` to the lowest level at which it joins a larger component. Nodes with
    value NaN or +inf are walls; nodes of infinite size are never raised.
    """
    live = np.flatnonzero(values < np.inf)
    order = live[np.argsort(values[live], kind="stable")]
    parent = np.full(values.size, -1, dtype=np.int64)
    size = np.zeros(values.size)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for node in order:
        parent[node] = node
        size[node] = sizes[node]
        for q in neighbours[node]:
            if q < 0 or parent[q] < 0:
                continue
            root = find(q)
            if root == node:
                continue
            if values[root] == values[node] or size[root] <= area:
                parent[root] = node
                size[node] += size[root]
            else:
                size[node] = np.inf

    result = values.copy()
    for node in order[::-1]:
        if parent[node] != node:
            result[node] = result[parent[node]]
    return result


def fine_regularize(u: ScalarField, U: NodeSet, mode: str = "lsc", trim: float = DEFAULT_TRIM,
                    radius: float = REGULARIZE_RADIUS) -> ScalarField:
    """
    Remove the values of u on node clusters too small to matter at the stencil scale.

    ``lsc`` raises every connected dip of U (a component of some sublevel set {u <= t}
    that stays inside U) holding at most ``trim`` of the nodes of B(x, radius·h) to the
    level where it meets the rest of the field; ``usc`` lowers such peaks. Nodes off U
    keep their values and anchor every component that reaches them, so a function
    obeying the minimum principle in U (a discrete superminimizer) is left as it is
    by ``lsc``. Both modes are monotone and idempotent.
    """
    if mode not in ("lsc", "usc"):
        raise PreconditionError(f"mode must be 'lsc' or 'usc', got {mode!r}")
    _validate_trim(trim)
    _same_domain(u, U)
    if not u.is_finite_on(U):
        raise PreconditionError("u must be finite on U")
    domain = u.domain

    area = trim * _stencil_size(domain, radius)
    sizes = np.where(U.mask, 1.0, np.inf)
    sign = 1.0 if mode == "lsc" else -1.0
    closed = sign * _area_closing(sign * u.values, sizes, _face_neighbours(domain), area)

    result = u.values.copy()
    result[U.mask] = closed[U.mask]
    changed = int(np.count_nonzero(result[U.mask] != u.values[U.mask]))
    if changed:
        _LOGGER.debug("fine_regularize(%s) moved %d nodes", mode, changed)
    return ScalarField(domain, result)


def fine_limit_probe(u: ScalarField, z: Sequence[float], R0: float, trim: float = DEFAULT_TRIM,
                     U: NodeSet | None = None, min_nodes: int = MIN_ANNULUS_NODES) -> FineLimitProbe:
    """Raw and trimmed inf/sup of u over the dyadic annuli B(z, R0·2^{−k}) ∖ B(z, R0·2^{−k−1})."""
    _validate_trim(trim)
    domain = u.domain
    center = tuple(float(c) for c in np.atleast_1d(np.asarray(z, dtype=float)))
    if not domain.contains_ball(center, R0):
        raise PreconditionError(f"annuli around {list(center)} with R0={R0} exit the grid")
    allowed = np.isfinite(u.values)
    if U is not None:
        _same_domain(u, U)
        allowed &= U.mask
    distance = domain.distances(center)

    radii, raw_inf, raw_sup, trimmed_inf, trimmed_sup, counts = [], [], [], [], [], []
    outer = R0
    while True:
        ring = allowed & (distance >= outer / 2) & (distance < outer)
        count = int(np.count_nonzero(ring))
        if count < min_nodes:
            break
        ring_values = u.values[ring]
        low, high = _trimmed_extremes(ring_values[None, :], domain.measure[ring][None, :], trim)
        radii.append(float(outer))
        raw_inf.append(float(np.min(ring_values)))
        raw_sup.append(float(np.max(ring_values)))
        trimmed_inf.append(float(low[0]))
        trimmed_sup.append(float(high[0]))
        counts.append(count)
        outer /= 2
    if not radii:
        raise PreconditionError(f"no annulus around {list(center)} holds {min_nodes} nodes")

    probe = FineLimitProbe(center=center, radii=radii, raw_inf=raw_inf, raw_sup=raw_sup,
                           trimmed_inf=trimmed_inf, trimmed_sup=trimmed_sup, counts=counts, trim=trim)
    _judge(probe)
    return probe


def _strictly_decreasing(seq: np.ndarray) -> bool:
    return bool(seq.size >= 2 and np.all(np.diff(seq) < 0))


def _judge(probe: FineLimitProbe) -> None:
    trimmed = probe.trimmed_oscillation
    raw = probe.raw_oscillation
    magnitude = max(abs(v) for v in probe.trimmed_inf + probe.trimmed_sup)
    atol = LIMIT_ATOL * (1.0 + magnitude)
    tail = trimmed[-TAIL:]
    raw_tail = raw[-TAIL:]

    if trimmed[-1] <= atol:
        verdict = LIMIT_EXISTS
    elif tail.size >= 3 and _strictly_decreasing(tail) and tail[-1] <= LIMIT_DECAY * tail[0]:
        verdict = LIMIT_EXISTS
    elif tail.size >= 3 and tail[-1] >= NO_LIMIT_FLOOR * np.max(tail) and not _strictly_decreasing(tail):
        verdict = NO_LIMIT
    else:
        verdict = INCONCLUSIVE
    probe.verdict = verdict
    if verdict == LIMIT_EXISTS:
        probe.limit_estimate = 0.5 * (probe.trimmed_inf[-1] + probe.trimmed_sup[-1])
    probe.raw_trimmed_split = bool(
        raw_tail.size >= 2
        and raw_tail[0] > atol
        and np.min(raw_tail) >= SPLIT_FLOOR * raw_tail[0]
        and _strictly_decreasing(tail)
    )


def fine_continuity_at(u: ScalarField, z: Sequence[float], R0: float | None = None,
                       trim: float = DEFAULT_TRIM, U: NodeSet | None = None) -> FineContinuityReport:
    """
    u is finely continuous at z when the trimmed lower and upper envelopes over shrinking
    punctured annuli meet (the probe finds a limit) at the value u(z).
    """
    domain = u.domain
    node = domain.nearest_node(z)
    center = tuple(float(c) for c in domain.coords[node])
    if R0 is None:
        room = float(np.min(np.minimum(np.asarray(center) - domain.lower, domain.upper - np.asarray(center))))
        R0 = min(PROBE_RADIUS_STEPS * domain.h, room)
    probe = fine_limit_probe(u, center, R0, trim, U)
    value = float(u.values[node])
    lower = probe.trimmed_inf[-1]
    upper = probe.trimmed_sup[-1]
    band = upper - lower
    atol = LIMIT_ATOL * (1.0 + abs(value))
    if probe.verdict == LIMIT_EXISTS:
        gap = abs(value - probe.limit_estimate)
        verdict = "finely_continuous" if gap <= band + atol else "discontinuous"
    elif probe.verdict == NO_LIMIT:
        verdict = "discontinuous"
    else:
        verdict = INCONCLUSIVE
    return FineContinuityReport(center=center, value=value, lower_envelope=lower,
                                upper_envelope=upper, verdict=verdict, probe=probe)
