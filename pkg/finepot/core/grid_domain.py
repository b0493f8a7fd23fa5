"""
Discrete ambient space: a uniform vertex-centred grid on a box in R^d with a
p-admissible weight, node measures, a nodal finite-difference gradient and the
p-energy functional built on it.

Nodes are ordered row-major (C order). The nodal gradient at node i uses the
forward difference on every axis, except at the last node of an axis where the
backward difference is used; such nodes are reported by ``boundary_flags``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from finepot.classes.errors import PreconditionError

_LOGGER = logging.getLogger(__name__)

MIN_NODES_PER_AXIS = 3
EPS_FLOOR_FACTOR = 1e-8
DOUBLING_SLACK = 4.0
# relative slack for node-centre membership tests
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class WeightSpec:
    """Weight w of the measure dμ = w dx: constant 1 or |x − x₀|^α."""

    kind: str = "constant"
    alpha: float = 0.0
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise PreconditionError(f"unknown weight kind {self.kind!r}")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def from_dict(cls, data: dict | None) -> "WeightSpec":
        if data is None:
            return cls()
        if isinstance(data, WeightSpec):
            return data
        return cls(kind=data.get("kind", "constant"),
                   alpha=data.get("alpha", 0.0),
                   center=data.get("center"))

    def to_dict(self) -> dict:
        data = {"kind": self.kind}
        if self.kind == "power":
            data["alpha"] = self.alpha
            data["center"] = list(self.center) if self.center is not None else None
        return data

    def check_admissible(self, dim: int, p: float | None = None) -> None:
        """
        Power weights must satisfy −dim < α < dim·(p − 1). A domain may be built before p is
        known; every energy, capacity and solver entry point repeats the check with its own p.
        """
        if self.kind != "power":
            return
        if self.center is not None and len(self.center) != dim:
            raise PreconditionError(f"weight centre has {len(self.center)} coordinates, grid has dim {dim}")
        if not self.alpha > -dim:
            raise PreconditionError(
                f"inadmissible weight exponent alpha={self.alpha}: need alpha > -{dim}")
        if p is not None and not self.alpha < dim * (p - 1):
            raise PreconditionError(
                f"inadmissible weight exponent alpha={self.alpha}: need alpha < {dim * (p - 1)} for p={p}")

    def evaluate(self, coords: np.ndarray, floor: float) -> np.ndarray:
        if self.kind == "constant":
            return np.ones(coords.shape[0])
        center = np.zeros(coords.shape[1]) if self.center is None else np.asarray(self.center)
        r = np.linalg.norm(coords - center, axis=1)
        return np.maximum(r, floor) ** self.alpha

    def doubling_bound(self, dim: int) -> float:
        return 2.0 ** (dim + max(self.alpha, 0.0)) * DOUBLING_SLACK


class GridDomain:
    """
    Weighted uniform grid on a box. Immutable; operators are built lazily and cached.
    Two domains compare equal when bounds, node counts and weight agree.
    """

    def __init__(self, lower: Sequence[float], upper: Sequence[float], shape: Sequence[int],
                 weight: WeightSpec | None = None):
        self.lower = _frozen(np.array(lower, dtype=float))
        self.upper = _frozen(np.array(upper, dtype=float))
        self.shape = tuple(int(n) for n in shape)
        self.dim = len(self.shape)
        self.weight = weight or WeightSpec()
        self.spacing = _frozen((self.upper - self.lower) / (np.asarray(self.shape) - 1))
        self.n_nodes = int(np.prod(self.shape))

        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = _frozen(np.stack([m.ravel() for m in mesh], axis=1))

        cell = float(np.prod(self.spacing))
        self.measure = _frozen(self.weight.evaluate(self.coords, 0.5 * self.h_min) * cell)

    @property
    def h(self) -> float:
        """Largest axis spacing."""
        return float(np.max(self.spacing))

    @property
    def h_min(self) -> float:
        return float(np.min(self.spacing))

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measure))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def epsilon_floor(self, value_scale: float) -> float:
        """Smallest gradient regularization for data of spread value_scale: 1e-8 of its gradient scale."""
        return EPS_FLOOR_FACTOR * value_scale / self.diameter

    def key(self) -> tuple:
        return (tuple(self.lower), tuple(self.upper), self.shape, self.weight)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return isinstance(other, GridDomain) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"GridDomain(dim={self.dim}, shape={self.shape}, h={self.h:.4g}, weight={self.weight.kind})"

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "bounds": [[float(lo), float(hi)] for lo, hi in zip(self.lower, self.upper)],
            "resolution": list(self.shape),
            "spacing": [float(h) for h in self.spacing],
            "weight": self.weight.to_dict(),
        }

    # operators

    @cached_property
    def difference_operators(self) -> tuple[sp.csr_matrix, ...]:
        """One sparse N×N matrix per axis mapping nodal values to the axis difference quotient."""
        operators = []
        for axis, (n, h) in enumerate(zip(self.shape, self.spacing)):
            d = _difference_1d(n, h)
            before = sp.identity(int(np.prod(self.shape[:axis], dtype=int)), format="csr")
            after = sp.identity(int(np.prod(self.shape[axis + 1:], dtype=int)), format="csr")
            operators.append(sp.kron(sp.kron(before, d), after, format="csr"))
        return tuple(operators)

    @cached_property
    def difference_operators_csc(self) -> tuple[sp.csc_matrix, ...]:
        return tuple(d.tocsc() for d in self.difference_operators)

    @cached_property
    def dependency(self) -> sp.csr_matrix:
        """Boolean pattern: entry (i, j) set when the gradient at node i reads node j."""
        pattern = abs(self.difference_operators[0])
        for d in self.difference_operators[1:]:
            pattern = pattern + abs(d)
        pattern = (pattern != 0).astype(np.float64)
        return pattern.tocsr()

    @cached_property
    def boundary_flags(self) -> np.ndarray:
        index = np.indices(self.shape).reshape(self.dim, -1)
        last = np.asarray(self.shape).reshape(-1, 1) - 1
        return _frozen(np.any(index == last, axis=0))

    def gradient_components(self, values: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return np.stack([d @ values for d in self.difference_operators])

    # node sets and fields

    def empty(self) -> "NodeSet":
        return NodeSet(self, np.zeros(self.n_nodes, dtype=bool))

    def full(self) -> "NodeSet":
        return NodeSet(self, np.ones(self.n_nodes, dtype=bool))

    def distances(self, point: Sequence[float]) -> np.ndarray:
        point = self._point(point)
        return np.linalg.norm(self.coords - point, axis=1)

    def ball(self, center: Sequence[float], radius: float) -> "NodeSet":
        """Open ball, node-centre membership."""
        return NodeSet(self, self.distances(center) < radius - MEMBERSHIP_TOL * self.h_min)

    def closed_ball(self, center: Sequence[float], radius: float) -> "NodeSet":
        return NodeSet(self, self.distances(center) <= radius + MEMBERSHIP_TOL * self.h_min)

    def box(self, lower: Sequence[float], upper: Sequence[float]) -> "NodeSet":
        slack = MEMBERSHIP_TOL * self.h_min
        lower, upper = self._point(lower), self._point(upper)
        inside = np.all((self.coords >= lower - slack) & (self.coords <= upper + slack), axis=1)
        return NodeSet(self, inside)

    def open_box(self, lower: Sequence[float], upper: Sequence[float]) -> "NodeSet":
        slack = MEMBERSHIP_TOL * self.h_min
        lower, upper = self._point(lower), self._point(upper)
        inside = np.all((self.coords > lower + slack) & (self.coords < upper - slack), axis=1)
        return NodeSet(self, inside)

    def from_predicate(self, predicate: Callable[[np.ndarray], np.ndarray]) -> "NodeSet":
        return NodeSet(self, np.asarray(predicate(self.coords), dtype=bool))

    def nearest_node(self, point: Sequence[float]) -> int:
        point = self._point(point)
        index = np.rint((point - self.lower) / self.spacing).astype(int)
        index = np.clip(index, 0, np.asarray(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(index), self.shape))

    def point(self, point: Sequence[float]) -> "NodeSet":
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.nearest_node(point)] = True
        return NodeSet(self, mask)

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.n_nodes, float(value)))

    def contains_ball(self, center: Sequence[float], radius: float) -> bool:
        center = self._point(center)
        slack = MEMBERSHIP_TOL * self.h_min
        return bool(np.all(center - radius >= self.lower - slack) and np.all(center + radius <= self.upper + slack))

    def grid_view(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    # doubling surrogate and nested grids

    def doubling_constant(self, samples: int = 4) -> float:
        """Largest μ(B(x,2r))/μ(B(x,r)) over sampled centres and dyadic radii with B(x,2r) inside the box."""
        centres = [np.asarray(self.weight.center) if self.weight.center is not None
                   else 0.5 * (self.lower + self.upper)]
        for k in range(samples):
            centres.append(self.lower + (self.upper - self.lower) * (k + 1) / (samples + 1))
        worst = 1.0
        for centre in centres:
            centre = self.coords[self.nearest_node(centre)]
            r = 2.0 * self.h
            while self.contains_ball(centre, 2 * r):
                dist = self.distances(centre)
                inner = float(np.sum(self.measure[dist < r]))
                outer = float(np.sum(self.measure[dist < 2 * r]))
                worst = max(worst, outer / inner)
                r *= 2.0
        return worst

    @property
    def coarsenable(self) -> bool:
        return all(n % 2 == 1 and n >= 2 * MIN_NODES_PER_AXIS - 1 for n in self.shape)

    def coarsen(self) -> "GridDomain":
        """Nested grid with spacing 2h on the same box; needs an odd node count per axis."""
        if not self.coarsenable:
            raise PreconditionError(f"grid {self.shape} cannot be coarsened: node counts must be odd and >= 5")
        return GridDomain(self.lower, self.upper, [(n + 1) // 2 for n in self.shape], self.weight)

    def restrict(self, nodes: "NodeSet", coarse: "GridDomain") -> "NodeSet":
        """Nearest-node pooling of a node set onto another grid of the same box."""
        index = np.rint((nodes.domain.coords[nodes.mask] - coarse.lower) / coarse.spacing).astype(int)
        index = np.clip(index, 0, np.asarray(coarse.shape) - 1)
        mask = np.zeros(coarse.n_nodes, dtype=bool)
        if index.size:
            mask[np.ravel_multi_index(tuple(index.T), coarse.shape)] = True
        return NodeSet(coarse, mask)

    def _point(self, point) -> np.ndarray:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise PreconditionError(f"point {point.tolist()} does not have {self.dim} coordinates")
        return point


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Boolean mask over the nodes of one domain."""

    domain: GridDomain
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).ravel()
        if mask.shape[0] != self.domain.n_nodes:
            raise PreconditionError(
                f"mask has {mask.shape[0]} entries, domain has {self.domain.n_nodes} nodes")
        object.__setattr__(self, "mask", _frozen(mask.copy()))

    def _same(self, other: "NodeSet") -> None:
        if not isinstance(other, NodeSet):
            raise TypeError(f"expected NodeSet, got {type(other).__name__}")
        if other.domain != self.domain:
            raise PreconditionError("node sets live on different domains")

    def __or__(self, other: "NodeSet") -> "NodeSet":
        self._same(other)
        return NodeSet(self.domain, self.mask | other.mask)

    def __and__(self, other: "NodeSet") -> "NodeSet":
        self._same(other)
        return NodeSet(self.domain, self.mask & other.mask)

    def __sub__(self, other: "NodeSet") -> "NodeSet":
        self._same(other)
        return NodeSet(self.domain, self.mask & ~other.mask)

    def __invert__(self) -> "NodeSet":
        return NodeSet(self.domain, ~self.mask)

    def complement(self) -> "NodeSet":
        return ~self

    def issubset(self, other: "NodeSet") -> bool:
        self._same(other)
        return not bool(np.any(self.mask & ~other.mask))

    __le__ = issubset

    def __eq__(self, other) -> bool:
        return (isinstance(other, NodeSet) and other.domain == self.domain
                and bool(np.array_equal(self.mask, other.mask)))

    def __hash__(self) -> int:
        return hash((self.domain, self.mask.tobytes()))

    def __contains__(self, node: int) -> bool:
        return bool(self.mask[node])

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def is_empty(self) -> bool:
        return not bool(np.any(self.mask))

    def is_full(self) -> bool:
        return bool(np.all(self.mask))

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def measure(self) -> float:
        return float(np.sum(self.domain.measure[self.mask]))

    def stencil_closure(self) -> "NodeSet":
        """Nodes whose nodal gradient reads at least one node of the set (the set included)."""
        hits = self.domain.dependency @ self.mask.astype(np.float64)
        return NodeSet(self.domain, hits > 0)

    def stencil_support(self) -> "NodeSet":
        """Nodes read by the nodal gradient at some node of the set."""
        hits = self.domain.dependency.T @ self.mask.astype(np.float64)
        return NodeSet(self.domain, hits > 0)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Extended-real values per node; ±∞ only where the consuming operation allows it."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 0:
            values = np.full(self.domain.n_nodes, float(values))
        values = values.ravel()
        if values.shape[0] != self.domain.n_nodes:
            raise PreconditionError(
                f"field has {values.shape[0]} values, domain has {self.domain.n_nodes} nodes")
        object.__setattr__(self, "values", _frozen(values.copy()))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.domain, values)

    def finite_set(self) -> NodeSet:
        return NodeSet(self.domain, np.isfinite(self.values))

    def is_finite_on(self, nodes: NodeSet) -> bool:
        return bool(np.all(np.isfinite(self.values[nodes.mask])))

    def _other(self, other) -> np.ndarray:
        if isinstance(other, ScalarField):
            if other.domain != self.domain:
                raise PreconditionError("fields live on different domains")
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other) -> "ScalarField":
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other) -> "ScalarField":
        return self.with_values(self.values - self._other(other))

    def __neg__(self) -> "ScalarField":
        return self.with_values(-self.values)

    def __mul__(self, scalar: float) -> "ScalarField":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def minimum(self, other) -> "ScalarField":
        return self.with_values(np.minimum(self.values, self._other(other)))

    def maximum(self, other) -> "ScalarField":
        return self.with_values(np.maximum(self.values, self._other(other)))

    def clip(self, lower: float, upper: float) -> "ScalarField":
        return self.with_values(np.clip(self.values, lower, upper))

    def sup_distance(self, other, nodes: NodeSet | None = None) -> float:
        diff = np.abs(self.values - self._other(other))
        if nodes is not None:
            diff = diff[nodes.mask]
        return float(np.max(diff)) if diff.size else 0.0


@dataclass
class EnergyReport:
    total: float
    density: np.ndarray
    gradient: np.ndarray
    boundary_flags: np.ndarray = field(repr=False)
    p: float = 2.0

    def to_dict(self) -> dict:
        return {"total": self.total, "p": self.p,
                "boundary_nodes": int(np.count_nonzero(self.boundary_flags))}


def build_domain(dim: int, bounds, resolution, weight: WeightSpec | dict | None = None,
                 p: float | None = None) -> GridDomain:
    """
    Build the weighted grid. ``bounds`` is one [lo, hi] pair (used on every axis)
    or one pair per axis; ``resolution`` is a node count or one count per axis.
    When ``p`` is given the full admissibility window of a power weight is checked.
    """
    if dim not in (1, 2, 3):
        raise PreconditionError(f"dim must be 1, 2 or 3, got {dim}")
    pairs = np.asarray(bounds, dtype=float)
    if pairs.shape == (2,):
        pairs = np.tile(pairs, (dim, 1))
    if pairs.shape != (dim, 2):
        raise PreconditionError(f"bounds {np.asarray(bounds).tolist()} do not describe a box in R^{dim}")
    if not np.all(np.isfinite(pairs)) or np.any(pairs[:, 1] <= pairs[:, 0]):
        raise PreconditionError(f"degenerate bounds {pairs.tolist()}")

    shape = np.atleast_1d(np.asarray(resolution, dtype=int))
    if shape.size == 1:
        shape = np.repeat(shape, dim)
    if shape.size != dim:
        raise PreconditionError(f"resolution {shape.tolist()} does not match dim {dim}")
    if np.any(shape < MIN_NODES_PER_AXIS):
        raise PreconditionError(f"resolution must be >= {MIN_NODES_PER_AXIS} per axis, got {shape.tolist()}")

    weight = WeightSpec.from_dict(weight)
    weight.check_admissible(dim, p)
    domain = GridDomain(pairs[:, 0], pairs[:, 1], shape, weight)

    if weight.kind == "power":
        doubling = domain.doubling_constant()
        if doubling > weight.doubling_bound(dim):
            raise PreconditionError(
                f"weight fails the doubling check: {doubling:.3g} > {weight.doubling_bound(dim):.3g}")
    _LOGGER.debug("Built %r with %d nodes", domain, domain.n_nodes)
    return domain


def gradient_magnitude(u: ScalarField, eps: float = 0.0) -> ScalarField:
    """(Σ_axes (D_a u)² + eps²)^{1/2} per node; non-finite where the stencil reads a non-finite value."""
    comps = u.domain.gradient_components(u.values)
    with np.errstate(invalid="ignore", over="ignore"):
        g = np.sqrt(np.sum(comps ** 2, axis=0) + eps ** 2)
    return ScalarField(u.domain, g)


def p_energy(u: ScalarField, region: NodeSet | None, p: float, eps: float = 0.0) -> EnergyReport:
    """Σ_{i∈region} μ_i g_i^p for the nodal gradient g of u."""
    if not p > 1:
        raise PreconditionError(f"p must be > 1, got {p}")
    domain = u.domain
    domain.weight.check_admissible(domain.dim, p)
    region = domain.full() if region is None else region
    if region.domain != domain:
        raise PreconditionError("region and field live on different domains")
    support = region.stencil_support()
    if not u.is_finite_on(support):
        raise PreconditionError("field is not finite on the stencil of the region")

    g = gradient_magnitude(u, eps).values
    density = np.zeros(domain.n_nodes)
    density[region.mask] = domain.measure[region.mask] * g[region.mask] ** p
    total = float(np.sum(density[region.mask]))
    gradient = np.where(region.mask, g, 0.0)
    return EnergyReport(total=total, density=density, gradient=gradient,
                        boundary_flags=domain.boundary_flags & region.mask, p=p)


def _difference_1d(n: int, h: float) -> sp.csr_matrix:
    head = np.arange(n - 1)
    rows = np.concatenate([head, head, [n - 1, n - 1]])
    cols = np.concatenate([head, head + 1, [n - 2, n - 1]])
    vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1), [-1.0, 1.0]]) / h
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array
