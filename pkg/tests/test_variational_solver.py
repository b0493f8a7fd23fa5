import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finepot.classes.errors import ConvergenceError, PreconditionError
from finepot.core.grid_domain import ScalarField, build_domain
from finepot.core.minimizer import minimize_energy
from finepot.core.variational_solver import (MINIMIZER, SUB, SUPER, WEAK_RTOL, ObstacleProblem,
                                             comparison_check, energy_optimality_check, random_bump,
                                             solve_dirichlet, solve_obstacle, uniqueness_check,
                                             verify_superminimizer, verify_weak_form, weak_form_pairing)

GRID = build_domain(2, [-1, 1], 17)
GRID_U = GRID.open_box([-0.6, -0.6], [0.6, 0.6])


@pytest.fixture
def tent_problem(interval):
    x = interval.coords[:, 0]
    return ObstacleProblem(U=interval.open_box([0], [1]), f=interval.constant(0.0),
                           psi=ScalarField(interval, 0.25 - np.abs(x - 0.5)), p=2)


@pytest.fixture
def squared_norm(square):
    return ScalarField(square, np.sum(square.coords ** 2, axis=1))


def test_tent_obstacle_touches_only_the_peak(tent_problem, interval):
    report = solve_obstacle(tent_problem)
    assert report.contact_set.indices().tolist() == [32]
    assert report.energy == pytest.approx(0.25, abs=0.01)
    assert report.converged
    U = tent_problem.U.mask
    assert np.all(report.solution.values[U] >= tent_problem.psi.values[U] - 1e-12)
    left = interval.coords[:33, 0]
    assert report.solution.values[:33] == pytest.approx(0.5 * left, abs=1e-7)
    assert report.to_dict()["contact_count"] == 1


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_dirichlet_with_linear_data_is_linear(interval, p):
    x = interval.coords[:, 0]
    U = interval.open_box([0], [0.75])
    report = solve_dirichlet(U, ScalarField(interval, 0.2 + x), p)
    assert report.converged
    assert report.solution.values == pytest.approx(0.2 + x, abs=1e-6)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_affine_data_in_the_plane(square, inner_box, p):
    affine = ScalarField(square, square.coords @ np.array([1.0, -0.5]))
    start = affine.values + np.where(inner_box.mask, 0.3, 0.0)
    report = solve_obstacle(ObstacleProblem(U=inner_box, f=affine, p=p), start=start)
    assert report.solution.sup_distance(affine) < 1e-6
    assert report.contact_set.is_empty()


def test_comparison_of_ordered_data(square, inner_box, squared_norm):
    low = solve_dirichlet(inner_box, squared_norm, 2)
    high = solve_dirichlet(inner_box, squared_norm + 0.5, 2)
    assert comparison_check(low, high)
    assert not comparison_check(high, low)
    other = solve_dirichlet(square.ball([0, 0], 0.5), squared_norm, 2)
    with pytest.raises(PreconditionError):
        comparison_check(low, other)


def test_problem_validation(square, inner_box, squared_norm):
    with pytest.raises(PreconditionError, match="empty"):
        ObstacleProblem(U=square.full(), f=squared_norm)
    with pytest.raises(PreconditionError):
        ObstacleProblem(U=inner_box, f=squared_norm, p=1.0)
    holes = squared_norm.values.copy()
    holes[square.nearest_node([0, 0])] = np.nan
    with pytest.raises(PreconditionError, match="finite"):
        ObstacleProblem(U=inner_box, f=ScalarField(square, holes))
    with pytest.raises(PreconditionError, match="infeasible"):
        ObstacleProblem(U=inner_box, f=squared_norm, psi=square.constant(np.inf))
    # NaN data off the stencil of U is never read
    far = squared_norm.values.copy()
    far[square.nearest_node([1, 1])] = np.nan
    ObstacleProblem(U=inner_box, f=ScalarField(square, far))


def test_minimizer_iteration_cap(square, inner_box, squared_norm):
    with pytest.raises(ConvergenceError) as info:
        minimize_energy(square, 3.0, inner_box.mask, squared_norm.values ** 2,
                        max_outer=0)
    assert info.value.exit_code == 4
    assert info.value.last_iterate.shape == (square.n_nodes,)


def test_subharmonic_quadratic(inner_box, squared_norm):
    assert verify_superminimizer(squared_norm, inner_box, 2, n_tests=20, kind=SUB).passed
    report = verify_superminimizer(squared_norm, inner_box, 2, n_tests=20, kind=SUPER)
    assert not report.passed
    assert report.witness is not None
    assert np.all(report.witness.values >= 0)
    assert np.all(report.witness.values[~inner_box.mask] == 0)
    assert report.to_dict("witness.csv")["witness_ref"] == "witness.csv"


def test_superharmonic_quadratic(inner_box, squared_norm):
    concave = -squared_norm
    assert verify_superminimizer(concave, inner_box, 2, n_tests=20, kind=SUPER).passed
    assert not verify_superminimizer(concave, inner_box, 2, n_tests=20, kind=MINIMIZER).passed


def test_weak_form_agrees_with_energy_test(inner_box, squared_norm):
    assert verify_weak_form(squared_norm, inner_box, 2, kind=SUB).passed
    assert not verify_weak_form(squared_norm, inner_box, 2, kind=SUPER).passed
    assert verify_weak_form(-squared_norm, inner_box, 2, kind=SUPER).passed
    with pytest.raises(PreconditionError):
        verify_weak_form(squared_norm, inner_box, 2, kind="harmonic")


@settings(max_examples=50, deadline=None)
@given(p=st.sampled_from([1.5, 2.0, 3.0]), sign=st.sampled_from([-1.0, 1.0]),
       amplitude=st.floats(0.5, 2.0), center=st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3)),
       slope=st.tuples(st.floats(-1, 1), st.floats(-1, 1)), offset=st.floats(-1, 1))
def test_weak_form_and_energy_test_agree_on_quadratics(p, sign, amplitude, center, slope, offset):
    shifted = GRID.coords - np.asarray(center)
    u = ScalarField(GRID, sign * amplitude * np.sum(shifted ** 2, axis=1) + GRID.coords @ np.asarray(slope)
                    + offset)
    by_energy = verify_superminimizer(u, GRID_U, p, n_tests=10, kind=SUPER).passed
    by_weak_form = verify_weak_form(u, GRID_U, p, kind=SUPER).passed
    assert by_energy == by_weak_form == (sign < 0)


def test_weak_form_tolerance_follows_the_local_flux(square, inner_box):
    saddle = ScalarField(square, 10 * (square.coords[:, 0] ** 2 - square.coords[:, 1] ** 2))
    bowl = ScalarField(square, np.sum(square.coords ** 2, axis=1))
    _, flux = weak_form_pairing(saddle, 2)
    bowl_pairing, _ = weak_form_pairing(bowl, 2)
    # pairing is linear for p = 2; size the bowl below the steepest flux but above the flattest
    eps = 0.5 * WEAK_RTOL * np.max(flux[inner_box.mask]) / np.max(np.abs(bowl_pairing[inner_box.mask]))
    u = saddle + bowl * float(eps)
    report = verify_weak_form(u, inner_box, 2, kind=SUPER)
    assert not report.passed
    # steep nodes absorb the bowl within their own flux, flat ones near the saddle point do not
    assert 0 < report.details["failures"] < inner_box.count
    assert report.witness is not None
    assert verify_weak_form(u, inner_box, 2, kind=SUB).passed


def test_dirichlet_solution_is_a_minimizer(inner_box, squared_norm):
    report = solve_dirichlet(inner_box, squared_norm, 2)
    assert verify_superminimizer(report.solution, inner_box, 2, n_tests=30, kind=MINIMIZER).passed
    assert verify_weak_form(report.solution, inner_box, 2, kind=MINIMIZER).passed


def test_verify_preconditions(square, inner_box, squared_norm):
    with pytest.raises(PreconditionError):
        verify_superminimizer(squared_norm, square.empty(), 2)
    holes = squared_norm.values.copy()
    holes[square.nearest_node([0, 0])] = np.nan
    with pytest.raises(PreconditionError):
        verify_superminimizer(ScalarField(square, holes), inner_box, 2)


def test_optimality_and_uniqueness(tent_problem):
    report = solve_obstacle(tent_problem)
    optimality = energy_optimality_check(report, n_tests=30, seed=5)
    assert optimality.passed
    assert optimality.worst_margin >= -optimality.details["threshold"]
    uniqueness = uniqueness_check(tent_problem, seed=5, first=report)
    assert uniqueness.passed
    assert uniqueness.details["distance"] <= uniqueness.details["threshold"]


def test_optimality_needs_the_problem(tent_problem):
    report = solve_obstacle(tent_problem)
    report.problem = None
    with pytest.raises(PreconditionError):
        energy_optimality_check(report)


def test_random_bump_is_supported_in_U(square, inner_box, rng):
    for sign in (1.0, -1.0):
        bump = random_bump(square, inner_box, rng, 1.0, sign)
        assert np.all(bump[~inner_box.mask] == 0)
        assert np.all(sign * bump >= 0)
        assert np.any(bump != 0)
