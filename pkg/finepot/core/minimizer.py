"""
Box-constrained minimization of the (optionally mass-augmented) p-energy over
the free nodes of a grid, all other nodes pinned.

Projected damped Newton with an active set (Bertsekas-style band), Jacobi
preconditioned conjugate gradients for the Newton systems, an Armijo projected
line search and a scaled projected-gradient fallback. For p != 2 the energy is
regularised by eps² under the gradient norm and eps is driven down by a
continuation schedule; the reported energy is the eps = 0 energy of the final
iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from finepot.classes.errors import ConvergenceError, PreconditionError
from finepot.core.grid_domain import EPS_FLOOR_FACTOR, GridDomain

_LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
LOOSE_TOL = 1e-6
REL_DECREASE = 1e-12
LOOSE_REL_DECREASE = 1e-8
MAX_OUTER = 10_000
CONTINUATION_LEVELS = 9
CG_RTOL = 1e-10
ARMIJO = 1e-4
MAX_BACKTRACK = 40
ACTIVE_BAND = 1e-3
TINY = 1e-300


@dataclass
class MinimizeResult:
    values: np.ndarray
    energy: float
    iterations: int
    kkt_residual: float
    eps_final: float
    converged: bool
    fallback_steps: int = 0


class EnergyProblem:
    """
    The energy as a function of the free values x:
    J(x) = Σ_rows μ (|D x + b|² + eps²)^{p/2} [+ Σ_free μ (x² + eps²)^{p/2}],
    where rows are the nodes whose gradient reads a free node and b carries the pinned values.
    """

    def __init__(self, domain: GridDomain, p: float, free_mask: np.ndarray, values: np.ndarray,
                 mass: bool = False):
        self.domain = domain
        self.p = float(p)
        self.mass = mass
        self.free = np.flatnonzero(free_mask)

        columns = [d[:, self.free] for d in domain.difference_operators_csc]
        touched = np.zeros(domain.n_nodes, dtype=bool)
        for c in columns:
            touched |= np.diff(c.tocsr().indptr) > 0
        self.rows = np.flatnonzero(touched)

        read = np.asarray(domain.dependency[self.rows].sum(axis=0)).ravel() > 0
        pinned_read = read & ~free_mask
        if not np.all(np.isfinite(values[pinned_read])):
            raise PreconditionError("pinned values next to free nodes must be finite")

        pinned = np.where(np.isfinite(values), values, 0.0)
        pinned[self.free] = 0.0
        self.ops = [c.tocsr()[self.rows] for c in columns]
        self.stacked = sp.vstack(self.ops, format="csr")
        self.base = [(d[self.rows] @ pinned) for d in domain.difference_operators]
        self.mu = domain.measure[self.rows]
        self.mu_free = domain.measure[self.free]

    @property
    def n(self) -> int:
        return self.free.size

    def _fields(self, x: np.ndarray):
        v = [op @ x + b for op, b in zip(self.ops, self.base)]
        s = np.zeros(self.rows.size)
        for comp in v:
            s += comp * comp
        return v, s

    def energy(self, x: np.ndarray, eps: float) -> float:
        _, s = self._fields(x)
        total = float(np.sum(self.mu * (s + eps * eps) ** (self.p / 2)))
        if self.mass:
            total += float(np.sum(self.mu_free * (x * x + eps * eps) ** (self.p / 2)))
        return total

    def gradient(self, x: np.ndarray, eps: float):
        v, s = self._fields(x)
        s = s + eps * eps
        total = float(np.sum(self.mu * s ** (self.p / 2)))
        w = self.p * self.mu * s ** (self.p / 2 - 1)
        g = np.zeros(self.n)
        for op, comp in zip(self.ops, v):
            g += op.T @ (w * comp)
        if self.mass:
            t = x * x + eps * eps
            total += float(np.sum(self.mu_free * t ** (self.p / 2)))
            g += self.p * self.mu_free * t ** (self.p / 2 - 1) * x
        return total, g, v, s

    def hessian(self, x: np.ndarray, eps: float, v, s) -> sp.csr_matrix:
        p = self.p
        w = p * self.mu * s ** (p / 2 - 1)
        dim = len(v)
        if p == 2:
            blocks = [[sp.diags(w) if a == b else None for b in range(dim)] for a in range(dim)]
        else:
            c = p * (p - 2) * self.mu * s ** (p / 2 - 2)
            blocks = [[sp.diags((w if a == b else 0.0) + c * v[a] * v[b]) for b in range(dim)]
                      for a in range(dim)]
        weights = sp.bmat(blocks, format="csr")
        hess = (self.stacked.T @ weights @ self.stacked).tocsr()
        if self.mass:
            t = x * x + eps * eps
            hess = hess + sp.diags(p * self.mu_free * (t ** (p / 2 - 1) + (p - 2) * t ** (p / 2 - 2) * x * x))
        return hess.tocsr()


def continuation_schedule(p: float, value_scale: float, diameter: float) -> list[float]:
    """
    eps_k = (value_scale / diameter)·10^{−k} down to the floor EPS_FLOOR_FACTOR·value_scale / diameter;
    a single floor level for p = 2, where eps does not move the minimizer.
    """
    grad_scale = value_scale / diameter
    floor = EPS_FLOOR_FACTOR * grad_scale
    if p == 2:
        return [floor]
    return [grad_scale * 10.0 ** (-k) for k in range(CONTINUATION_LEVELS - 1)] + [floor]


def minimize_energy(domain: GridDomain, p: float, free_mask: np.ndarray, values: np.ndarray,
                    lower: np.ndarray | None = None, upper: np.ndarray | None = None,
                    mass: bool = False, tol: float = DEFAULT_TOL, start: np.ndarray | None = None,
                    max_outer: int = MAX_OUTER) -> MinimizeResult:
    """
    Minimize over the nodes of ``free_mask`` with every other node pinned to ``values``.
    ``lower``/``upper`` are full-length bound arrays (±inf allowed); ``start`` a full-length
    initial guess for the free nodes (defaults to ``values``).
    """
    if not p > 1:
        raise PreconditionError(f"p must be > 1, got {p}")
    domain.weight.check_admissible(domain.dim, p)
    free_mask = np.asarray(free_mask, dtype=bool)
    values = np.array(values, dtype=float)
    if not free_mask.any():
        scale = _value_scale(values, np.empty(0), np.empty(0))
        return MinimizeResult(values=values, energy=0.0, iterations=0, kkt_residual=0.0,
                              eps_final=domain.epsilon_floor(scale), converged=True)
    problem = EnergyProblem(domain, p, free_mask, values, mass=mass)
    free = problem.free

    lo = np.full(free.size, -np.inf) if lower is None else np.asarray(lower, dtype=float)[free]
    hi = np.full(free.size, np.inf) if upper is None else np.asarray(upper, dtype=float)[free]
    if np.any(lo > hi):
        raise PreconditionError("lower bound exceeds upper bound on a free node")
    x = np.asarray(values if start is None else start, dtype=float)[free].copy()
    x = np.clip(x, lo, hi)
    if not np.all(np.isfinite(x)):
        raise PreconditionError("initial guess is not finite on the free nodes")

    value_scale = _value_scale(values[~free_mask], lo, hi)
    levels = continuation_schedule(p, value_scale, domain.diameter)

    iterations = 0
    fallback_steps = 0
    kkt = np.inf
    for level, eps in enumerate(levels):
        final = level == len(levels) - 1
        level_tol = tol if final else max(tol, LOOSE_TOL)
        level_rel = REL_DECREASE if final else LOOSE_REL_DECREASE
        last_rel = np.inf
        while True:
            energy, g, v, s = problem.gradient(x, eps)
            pg = x - np.clip(x - g, lo, hi)
            kkt = float(np.max(np.abs(pg))) * value_scale / max(energy, TINY)
            if kkt == 0.0 or (kkt <= level_tol and last_rel < level_rel):
                break
            if iterations >= max_outer:
                full = values.copy()
                full[free] = x
                raise ConvergenceError(
                    f"minimizer hit the iteration cap ({max_outer}) at eps={eps:.3g}",
                    last_iterate=full, iterations=iterations, residual=kkt)
            iterations += 1

            hess = problem.hessian(x, eps, v, s)
            step = _newton_step(problem, x, g, hess, lo, hi, pg, value_scale, energy, eps)
            if step is None and kkt <= level_tol:
                # already stationary to tolerance; no representable decrease left
                break
            if step is None:
                _LOGGER.warning("Newton step failed to decrease the energy (eps=%.3g, iteration %d); "
                                "taking a projected gradient step", eps, iterations)
                fallback_steps += 1
                step = _gradient_step(problem, x, g, hess, lo, hi, energy, eps)
            if step is None:
                _LOGGER.debug("Line search stalled at eps=%.3g, kkt=%.3g", eps, kkt)
                break
            x_new, energy_new = step
            last_rel = (energy - energy_new) / max(abs(energy), TINY)
            x = x_new
            _LOGGER.debug("eps=%.3g iteration %d energy=%.12g kkt=%.3g", eps, iterations, energy_new, kkt)

    full = values.copy()
    full[free] = x
    if kkt > tol:
        raise ConvergenceError(
            f"line search stalled with kkt residual {kkt:.3g} above tol {tol:.3g} at eps={levels[-1]:.3g}",
            last_iterate=full, iterations=iterations, residual=kkt, fallback_steps=fallback_steps)
    return MinimizeResult(values=full, energy=problem.energy(x, 0.0), iterations=iterations,
                          kkt_residual=kkt, eps_final=levels[-1], converged=True,
                          fallback_steps=fallback_steps)


def _newton_step(problem, x, g, hess, lo, hi, pg, value_scale, energy, eps):
    band = min(ACTIVE_BAND * value_scale, float(np.max(np.abs(pg))))
    active = ((x - lo <= band) & (g > 0)) | ((hi - x <= band) & (g < 0))
    inactive = ~active
    diag = hess.diagonal()
    diag = np.where(diag > 0, diag, 1.0)

    d = np.zeros_like(x)
    d[active] = -g[active] / diag[active]
    if np.any(inactive):
        idx = np.flatnonzero(inactive)
        sub = hess[idx][:, idx]
        precond = sp.diags(1.0 / diag[idx])
        maxiter = int(20 * np.sqrt(idx.size)) + 200
        sol, info = cg(sub, -g[idx], rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            _LOGGER.debug("CG returned info=%d on %d unknowns", info, idx.size)
        d[idx] = sol
    if not np.all(np.isfinite(d)) or float(g @ d) >= 0:
        return None
    return _line_search(problem, x, g, d, lo, hi, energy, eps)


def _gradient_step(problem, x, g, hess, lo, hi, energy, eps):
    diag = hess.diagonal()
    diag = np.where(diag > 0, diag, 1.0)
    return _line_search(problem, x, g, -g / diag, lo, hi, energy, eps)


def _line_search(problem, x, g, d, lo, hi, energy, eps):
    t = 1.0
    for _ in range(MAX_BACKTRACK):
        x_new = np.clip(x + t * d, lo, hi)
        delta = x_new - x
        slope = float(g @ delta)
        if slope >= 0 or not np.any(delta):
            t *= 0.5
            continue
        energy_new = problem.energy(x_new, eps)
        if energy_new <= energy + ARMIJO * slope:
            return x_new, energy_new
        t *= 0.5
    return None


def _value_scale(pinned: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    samples = [pinned[np.isfinite(pinned)], lo[np.isfinite(lo)], hi[np.isfinite(hi)]]
    data = np.concatenate(samples)
    if data.size == 0:
        return 1.0
    spread = float(np.ptp(data))
    if spread > 0:
        return spread
    magnitude = float(np.max(np.abs(data)))
    return magnitude if magnitude > 0 else 1.0
