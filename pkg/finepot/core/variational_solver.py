"""
Obstacle and Dirichlet p-energy problems on node-set domains, and the two
checks of the fine (super/sub)minimizer property: the energy comparison
against sampled perturbations, and the nodal weak form.

A problem pins v = f at every node outside U and asks v >= ψ on U, ψ = −∞
meaning "unconstrained". Energies of U-problems are measured over the stencil
closure of U, i.e. every node whose nodal gradient reads a node of U.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from finepot.classes.errors import PreconditionError
from finepot.core.grid_domain import NodeSet, ScalarField, p_energy
from finepot.core.minimizer import DEFAULT_TOL, minimize_energy

_LOGGER = logging.getLogger(__name__)

DEFAULT_TESTS = 100
VERIFY_RTOL = 1e-8
VERIFY_ATOL = 1e-15
WEAK_RTOL = 1e-6
ROUNDOFF = 64 * float(np.finfo(float).eps)
HAT_LADDER = 12
BUMP_AMPLITUDE = (0.1, 10.0)
COMPARISON_FACTOR = 10.0
OPTIMALITY_RTOL = 1e-8

SUPER = "superminimizer"
SUB = "subminimizer"
MINIMIZER = "minimizer"
KINDS = (SUPER, SUB, MINIMIZER)


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    U: NodeSet
    f: ScalarField
    psi: ScalarField | None = None
    p: float = 2.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        domain = self.U.domain
        if self.f.domain != domain or (self.psi is not None and self.psi.domain != domain):
            raise PreconditionError("U, f and psi live on different domains")
        if not self.p > 1:
            raise PreconditionError(f"p must be > 1, got {self.p}")
        domain.weight.check_admissible(domain.dim, self.p)
        if self.U.is_full():
            raise PreconditionError("complement of U is empty: nothing pins the solution")
        read = self.U.stencil_closure().stencil_support()
        if not self.f.is_finite_on(read | self.U):
            raise PreconditionError("boundary data f must be finite on U and its stencil neighbours")
        if self.psi is not None:
            obstacle = self.psi.values[self.U.mask]
            if np.any(np.isnan(obstacle)) or np.any(obstacle == np.inf):
                raise PreconditionError("infeasible obstacle: psi is +inf or NaN on U")

    @property
    def domain(self):
        return self.U.domain

    def lower_bound(self) -> np.ndarray:
        lower = np.full(self.domain.n_nodes, -np.inf)
        if self.psi is not None:
            lower[self.U.mask] = self.psi.values[self.U.mask]
        return lower

    def feasible_start(self) -> np.ndarray:
        start = self.f.values.copy()
        start[self.U.mask] = np.maximum(start[self.U.mask], self.lower_bound()[self.U.mask])
        return start


@dataclass
class SolveReport:
    solution: ScalarField
    energy: float
    contact_set: NodeSet
    kkt_residual: float
    iterations: int
    eps_final: float = 0.0
    converged: bool = True
    problem: ObstacleProblem | None = field(default=None, repr=False)

    @property
    def tol(self) -> float:
        return self.problem.tol if self.problem is not None else DEFAULT_TOL

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "contact_count": self.contact_set.count,
            "eps_final": self.eps_final,
            "converged": self.converged,
            "p": self.problem.p if self.problem is not None else None,
        }


@dataclass
class VerifyReport:
    kind: str
    passed: bool
    worst_margin: float
    n_tests: int
    witness: ScalarField | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self, witness_ref: str | None = None) -> dict:
        data = {
            "kind": self.kind,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "n_tests": self.n_tests,
            "witness_ref": witness_ref,
        }
        data.update(self.details)
        return data


def solve_obstacle(prob: ObstacleProblem, start: ScalarField | np.ndarray | None = None) -> SolveReport:
    """Minimize the p-energy over {v = f off U, v >= ψ on U}."""
    domain = prob.domain
    lower = prob.lower_bound()
    if start is None:
        initial = prob.feasible_start()
    else:
        initial = np.array(start.values if isinstance(start, ScalarField) else start, dtype=float)
        initial[~prob.U.mask] = prob.f.values[~prob.U.mask]
        initial[prob.U.mask] = np.maximum(initial[prob.U.mask], lower[prob.U.mask])

    result = minimize_energy(domain, prob.p, prob.U.mask, prob.f.values, lower=lower,
                             tol=prob.tol, start=initial)
    solution = ScalarField(domain, result.values)
    energy = p_energy(solution, prob.U.stencil_closure(), prob.p).total

    contact = np.zeros(domain.n_nodes, dtype=bool)
    if prob.psi is not None:
        slack = prob.tol * (1.0 + float(np.max(np.abs(solution.values[prob.U.mask]), initial=0.0)))
        with np.errstate(invalid="ignore"):
            contact = prob.U.mask & (solution.values <= lower + slack)
    _LOGGER.info("Solved %s problem p=%g on %d nodes: energy %.10g, %d contact nodes, %d iterations",
                 "obstacle" if prob.psi is not None else "Dirichlet", prob.p, prob.U.count,
                 energy, int(np.count_nonzero(contact)), result.iterations)
    return SolveReport(solution=solution, energy=energy, contact_set=NodeSet(domain, contact),
                       kkt_residual=result.kkt_residual, iterations=result.iterations,
                       eps_final=result.eps_final, converged=result.converged, problem=prob)


def solve_dirichlet(U: NodeSet, f: ScalarField, p: float, tol: float = DEFAULT_TOL) -> SolveReport:
    return solve_obstacle(ObstacleProblem(U=U, f=f, psi=None, p=p, tol=tol))


def _density(domain, values: np.ndarray, p: float) -> np.ndarray:
    comps = domain.gradient_components(values)
    with np.errstate(invalid="ignore", over="ignore"):
        return domain.measure * np.sqrt(np.sum(comps ** 2, axis=0)) ** p


def _check_field(u: ScalarField, U: NodeSet) -> None:
    if u.domain != U.domain:
        raise PreconditionError("field and U live on different domains")
    if U.is_empty():
        raise PreconditionError("U is empty")
    if not u.is_finite_on(U.stencil_closure().stencil_support()):
        raise PreconditionError("field must be finite on U and its stencil neighbours")


def _field_scale(u: ScalarField, U: NodeSet) -> float:
    scale = float(np.max(np.abs(u.values[U.mask])))
    return scale if scale > 0 else 1.0


def _signs(kind: str) -> list[float]:
    if kind not in KINDS:
        raise PreconditionError(f"unknown verification kind {kind!r}")
    return {SUPER: [1.0], SUB: [-1.0], MINIMIZER: [1.0, -1.0]}[kind]


def random_bump(domain, U: NodeSet, rng: np.random.Generator, scale: float, sign: float) -> np.ndarray:
    """A·max(0, ρ − |x − c|) clipped to U, c uniform on U, ρ ∈ [2h, diam(U)/4], A ∈ [0.1, 10]·scale."""
    coords = domain.coords[U.mask]
    extent = float(np.linalg.norm(np.ptp(coords, axis=0))) if coords.shape[0] > 1 else 0.0
    low = 2.0 * domain.h
    radius = rng.uniform(low, max(low, extent / 4.0))
    centre = coords[rng.integers(coords.shape[0])]
    amplitude = rng.uniform(*BUMP_AMPLITUDE) * scale
    bump = amplitude * np.maximum(0.0, radius - domain.distances(centre))
    return sign * np.where(U.mask, bump, 0.0)


def verify_superminimizer(u: ScalarField, U: NodeSet, p: float, n_tests: int = DEFAULT_TESTS,
                          seed: int = 0, *, kind: str = SUPER, rtol: float = VERIFY_RTOL,
                          hats: bool = True) -> VerifyReport:
    """
    Energy comparison test: p_energy(u+φ) >= p_energy(u) − tol on the stencil closure of {φ ≠ 0}
    for sampled φ supported in U (non-negative for superminimizers, non-positive for
    subminimizers, both for minimizers). Besides random radial bumps every single-node hat
    is tried at a ladder of heights.
    """
    _check_field(u, U)
    domain = u.domain
    signs = _signs(kind)
    scale = _field_scale(u, U)
    rng = np.random.default_rng(seed)
    base = _density(domain, u.values, p)

    worst = np.inf
    worst_relative = np.inf
    witness = None
    failures = 0
    total = 0

    for t in range(n_tests):
        phi = random_bump(domain, U, rng, scale, signs[t % len(signs)])
        support = NodeSet(domain, phi != 0)
        region = support.stencil_closure().mask
        before = float(np.sum(base[region]))
        after = float(np.sum(_density(domain, u.values + phi, p)[region]))
        margin = after - before
        threshold = rtol * (before + after) + VERIFY_ATOL * (before + after + scale ** p)
        total += 1
        relative = margin / max(before + after, 1e-300)
        if margin < worst:
            worst = margin
        if margin < -threshold:
            failures += 1
            if relative < worst_relative:
                worst_relative = relative
                witness = phi

    hat_tests = 0
    if hats:
        dep_t = domain.dependency.T.tocsr()
        local_before = dep_t @ np.nan_to_num(base, nan=0.0, posinf=0.0)
        colours = np.indices(domain.shape).reshape(domain.dim, -1) % 2
        colour_code = np.zeros(domain.n_nodes, dtype=int)
        for axis in range(domain.dim):
            colour_code += colours[axis] << axis
        for colour in range(2 ** domain.dim):
            nodes = U.mask & (colour_code == colour)
            if not np.any(nodes):
                continue
            for sign in signs:
                for k in range(1, HAT_LADDER + 1):
                    height = sign * scale * 10.0 ** (-k)
                    perturbed = u.values + height * nodes
                    after = _density(domain, perturbed, p)
                    local_after = dep_t @ np.nan_to_num(after, nan=0.0, posinf=0.0)
                    b = local_before[nodes]
                    a = local_after[nodes]
                    margin = a - b
                    threshold = rtol * (a + b) + VERIFY_ATOL * (a + b + scale ** p)
                    hat_tests += int(np.count_nonzero(nodes))
                    worst = min(worst, float(np.min(margin)))
                    failing = margin < -threshold
                    if np.any(failing):
                        failures += int(np.count_nonzero(failing))
                        relative = margin / np.maximum(a + b, 1e-300)
                        pick = int(np.argmin(np.where(failing, relative, np.inf)))
                        if relative[pick] < worst_relative:
                            worst_relative = float(relative[pick])
                            phi = np.zeros(domain.n_nodes)
                            phi[np.flatnonzero(nodes)[pick]] = height
                            witness = phi

    passed = failures == 0
    _LOGGER.info("Verified %s on %d nodes: %s (%d bump tests, %d hat tests, worst margin %.3g)",
                 kind, U.count, "passed" if passed else "FAILED", total, hat_tests, worst)
    return VerifyReport(kind=kind, passed=passed, worst_margin=float(worst), n_tests=total + hat_tests,
                        witness=None if witness is None else ScalarField(domain, witness),
                        details={"failures": failures, "bump_tests": total, "hat_tests": hat_tests,
                                 "worst_relative": None if passed else float(worst_relative)})


def weak_form_pairing(u: ScalarField, p: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-node pairing Σ μ |∇u|^{p−2} ∇u · ∇φ_i with the nodal hat φ_i, and the matching
    flux magnitude Σ μ |∇u|^{p−1} |∇φ_i| used to scale tolerances.
    """
    domain = u.domain
    comps = domain.gradient_components(u.values)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        g = np.sqrt(np.sum(comps ** 2, axis=0))
        coefficient = np.where(g > 0, domain.measure * g ** (p - 2), 0.0)
        magnitude = domain.measure * g ** (p - 1)
    pairing = np.zeros(domain.n_nodes)
    flux = np.zeros(domain.n_nodes)
    for d, comp in zip(domain.difference_operators, comps):
        pairing += d.T @ (coefficient * comp)
        flux += abs(d).T @ magnitude
    return pairing, flux


def verify_weak_form(u: ScalarField, U: NodeSet, p: float, *, kind: str = SUPER,
                     rtol: float = WEAK_RTOL) -> VerifyReport:
    """Sign of the nodal weak-form pairing at every node of U, each within rtol of its own flux."""
    _check_field(u, U)
    _signs(kind)
    domain = u.domain
    pairing, flux = weak_form_pairing(u, p)
    P = pairing[U.mask]
    F = flux[U.mask]
    tolerance = rtol * F + ROUNDOFF * float(np.max(F))
    if kind == SUPER:
        margin = P
    elif kind == SUB:
        margin = -P
    else:
        margin = -np.abs(P)
    failing = margin < -tolerance
    passed = not bool(np.any(failing))
    witness = None
    if not passed:
        pick = int(np.argmin(np.where(failing, margin / np.maximum(tolerance, 1e-300), np.inf)))
        phi = np.zeros(domain.n_nodes)
        phi[U.indices()[pick]] = 1.0 if P[pick] < 0 else -1.0
        witness = ScalarField(domain, phi)
    _LOGGER.info("Weak form (%s) on %d nodes: %s", kind, U.count, "passed" if passed else "FAILED")
    return VerifyReport(kind=kind, passed=passed, worst_margin=float(np.min(margin)), n_tests=int(P.size),
                        witness=witness, details={"failures": int(np.count_nonzero(failing)),
                                                  "max_pairing": float(np.max(np.abs(P)))})


def comparison_check(r1: SolveReport, r2: SolveReport) -> bool:
    """True iff solution₁ <= solution₂ + 10·tol everywhere."""
    s1, s2 = r1.solution, r2.solution
    if s1.domain != s2.domain:
        raise PreconditionError("mismatched domains")
    if r1.problem is not None and r2.problem is not None:
        if r1.problem.U != r2.problem.U or r1.problem.p != r2.problem.p:
            raise PreconditionError("reports come from different U or p")
    tol = max(r1.tol, r2.tol)
    magnitude = float(np.max(np.abs(np.concatenate([s1.values, s2.values]))))
    return bool(np.all(s1.values <= s2.values + COMPARISON_FACTOR * tol * (1.0 + magnitude)))


def energy_optimality_check(report: SolveReport, n_tests: int = DEFAULT_TESTS, seed: int = 0,
                            rtol: float = OPTIMALITY_RTOL) -> VerifyReport:
    """Random admissible perturbations (bumps of either sign, projected onto v >= ψ) never lower the energy."""
    prob = report.problem
    if prob is None:
        raise PreconditionError("report carries no problem")
    domain = prob.domain
    region = prob.U.stencil_closure()
    lower = prob.lower_bound()
    scale = _field_scale(report.solution, prob.U)
    rng = np.random.default_rng(seed)
    threshold = rtol * (1.0 + abs(report.energy))
    worst = np.inf
    witness = None
    for t in range(n_tests):
        phi = random_bump(domain, prob.U, rng, scale, 1.0 if t % 2 == 0 else -1.0)
        trial = np.maximum(report.solution.values + phi, lower)
        trial[~prob.U.mask] = report.solution.values[~prob.U.mask]
        energy = p_energy(ScalarField(domain, trial), region, prob.p).total
        margin = energy - report.energy
        if margin < worst:
            worst = margin
            if margin < -threshold:
                witness = ScalarField(domain, trial - report.solution.values)
    passed = worst >= -threshold
    return VerifyReport(kind="optimality", passed=bool(passed), worst_margin=float(worst),
                        n_tests=n_tests, witness=witness, details={"threshold": threshold})


def uniqueness_check(prob: ObstacleProblem, seed: int = 0, first: SolveReport | None = None) -> VerifyReport:
    """Solve again from a perturbed feasible start; the two solutions must agree within 10·tol."""
    first = first or solve_obstacle(prob)
    domain = prob.domain
    rng = np.random.default_rng(seed)
    scale = _field_scale(first.solution, prob.U)
    start = prob.feasible_start() + random_bump(domain, prob.U, rng, scale, 1.0)
    second = solve_obstacle(prob, start=start)
    distance = first.solution.sup_distance(second.solution)
    threshold = COMPARISON_FACTOR * prob.tol * (1.0 + float(np.max(np.abs(first.solution.values))))
    return VerifyReport(kind="uniqueness", passed=distance <= threshold, worst_margin=threshold - distance,
                        n_tests=1, details={"distance": distance, "threshold": threshold})
