import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from finepot.classes.errors import PreconditionError
from finepot.core.fine_analysis import (INCONCLUSIVE, LIMIT_EXISTS, NO_LIMIT, fine_continuity_at,
                                        fine_limit_probe, fine_regularize, min_combine, paste,
                                        paste_with_constant, remove_and_verify)
from finepot.core.grid_domain import ScalarField, build_domain
from finepot.core.variational_solver import (MINIMIZER, SUPER, ObstacleProblem, solve_dirichlet, solve_obstacle,
                                             verify_superminimizer)

GRID = build_domain(2, [-1, 1], 9)
GRID_U = GRID.ball([0, 0], 0.8)
# few distinct levels so that plateaus and ties occur
grid_values = arrays(np.float64, GRID.n_nodes,
                     elements=st.one_of(st.integers(-3, 3).map(float), st.floats(-10, 10)))


@pytest.fixture
def concave(square):
    """−|x|², superharmonic for the nodal Laplacian."""
    return ScalarField(square, -np.sum(square.coords ** 2, axis=1))


@pytest.fixture
def affine(fine_square):
    return ScalarField(fine_square, fine_square.coords @ np.array([1.0, 0.5]))


def test_paste_takes_the_minimum_on_the_inner_set(square, inner_box):
    U1 = square.ball([0, 0], 0.4)
    x = square.coords[:, 0]
    pasted = paste(U1, inner_box, square.constant(0.0), ScalarField(square, x))
    assert np.all(pasted.values[U1.mask] == np.minimum(0.0, x[U1.mask]))
    assert np.all(pasted.values[~U1.mask] == x[~U1.mask])


def test_paste_preconditions(square, inner_box):
    u = square.constant(1.0)
    with pytest.raises(PreconditionError, match="subset"):
        paste(square.ball([0, 0], 0.9), inner_box, u, u)
    holes = np.ones(square.n_nodes)
    holes[square.nearest_node([0, 0])] = np.nan
    with pytest.raises(PreconditionError, match="finite"):
        paste(square.ball([0, 0], 0.4), inner_box, ScalarField(square, holes), u)


def test_poisson_modification_stays_super(square, inner_box, concave):
    B = square.ball([0, 0], 0.3)
    replacement = solve_dirichlet(B, concave, 2).solution
    assert np.all(replacement.values <= concave.values + 1e-9)
    modified = paste(B, inner_box, replacement, concave)
    assert verify_superminimizer(modified, inner_box, 2, n_tests=30, seed=1, kind=SUPER).passed


def test_minimum_of_superharmonic_functions(square, inner_box, concave):
    shifted = ScalarField(square, -np.sum((square.coords - [0.25, 0.0]) ** 2, axis=1) + 0.05)
    combined = min_combine(concave, shifted, inner_box)
    assert np.all(combined.values <= concave.values)
    assert np.all(combined.values <= shifted.values)
    assert verify_superminimizer(combined, inner_box, 2, n_tests=30, seed=2, kind=SUPER).passed
    holes = shifted.values.copy()
    holes[square.nearest_node([0, 0])] = np.nan
    with pytest.raises(PreconditionError):
        min_combine(concave, ScalarField(square, holes), inner_box)


def test_paste_with_constant(square, inner_box, concave):
    B = square.ball([0.5, 0.0], 0.3)
    pasted = paste_with_constant(concave, inner_box, B, -0.1)
    inside = (B & inner_box).mask
    assert np.all(pasted.values[inside] == np.minimum(concave.values[inside], -0.1))
    assert np.all(pasted.values[~inside] == -0.1)


def test_removing_nothing_is_a_plain_check(square, inner_box, concave):
    report = remove_and_verify(concave, inner_box, square.empty(), 2, n_tests=10, kind=SUPER)
    assert report.passed
    assert "capacity_proxy" not in report.details


def test_point_is_removable_for_affine_functions(square):
    u = ScalarField(square, square.coords @ np.array([0.5, 1.0]))
    U = square.ball([0, 0], 0.8) - square.point([0, 0])
    report = remove_and_verify(u, U, square.point([0, 0]), 2, n_tests=20, kind=MINIMIZER,
                               capacity_threshold=10.0)
    assert report.passed
    assert report.details["filled_nodes"] == 0
    assert report.details["capacity_proxy"] > 0
    assert report.details["below_threshold"] is True


def test_missing_values_are_filled_from_the_nearest_node(square):
    values = square.coords @ np.array([0.5, 1.0])
    centre = square.nearest_node([0, 0])
    values[centre] = np.nan
    u = ScalarField(square, values)
    U = square.ball([0, 0], 0.8) - square.point([0, 0])
    report = remove_and_verify(u, U, square.point([0, 0]), 2, n_tests=5)
    assert report.details["filled_nodes"] == 1
    assert report.details["below_threshold"] is None


def _random_superharmonic(square, inner_box, rng):
    """A constant, a concave quadratic, an obstacle solution or a Dirichlet solution on inner_box."""
    kind = rng.integers(4)
    if kind == 0:
        return square.constant(float(rng.uniform(-1, 1)))
    slope = rng.uniform(-1, 1, 2)
    affine = square.coords @ slope + rng.uniform(-0.5, 0.5)
    if kind == 1:
        shifted = square.coords - rng.uniform(-0.3, 0.3, 2)
        return ScalarField(square, affine - rng.uniform(0.2, 2.0) * np.sum(shifted ** 2, axis=1))
    if kind == 2:
        cone = rng.uniform(0.3, 1.0) - rng.uniform(1.0, 3.0) * square.distances(rng.uniform(-0.3, 0.3, 2))
        problem = ObstacleProblem(U=inner_box, f=ScalarField(square, affine), psi=ScalarField(square, cone), p=2)
        return solve_obstacle(problem).solution
    saddle = rng.uniform(-1, 1) * (square.coords[:, 0] ** 2 - square.coords[:, 1] ** 2)
    return solve_dirichlet(inner_box, ScalarField(square, affine + saddle), 2).solution


@pytest.mark.parametrize("seed", range(20))
def test_pasting_and_minima_of_random_superminimizers(square, inner_box, seed):
    rng = np.random.default_rng(seed)
    u = _random_superharmonic(square, inner_box, rng)
    v = _random_superharmonic(square, inner_box, rng)
    combined = min_combine(u, v, inner_box)
    assert verify_superminimizer(combined, inner_box, 2, n_tests=20, seed=seed, kind=SUPER).passed

    center, radius = rng.uniform(-0.2, 0.2, 2), rng.uniform(0.15, 0.25)
    B = square.ball(center, radius)
    replacement = solve_dirichlet(B, combined, 2).solution
    modified = paste(B, inner_box, replacement, combined)
    assert verify_superminimizer(modified, inner_box, 2, n_tests=20, seed=seed, kind=SUPER).passed

    # a constant above combined near the boundary of B only cuts the top inside B
    ring = B - square.ball(center, radius - 3 * square.h)
    level = float(np.max(combined.values[ring.mask]))
    capped = paste(B, inner_box, square.constant(level), combined)
    assert verify_superminimizer(capped, inner_box, 2, n_tests=20, seed=seed, kind=SUPER).passed


def test_log_norm_is_not_a_minimizer_across_the_centre(square):
    origin = square.point([0, 0])
    U = square.ball([0, 0], 0.8) - origin
    with np.errstate(divide="ignore"):
        u = ScalarField(square, np.log(square.distances([0, 0])))
    report = remove_and_verify(u, U, origin, 2, n_tests=20, kind=MINIMIZER)
    assert not report.passed
    assert report.witness is not None
    assert report.details["filled_nodes"] == 1
    assert report.details["extended_energy"] > report.details["capacity_proxy"]


def test_pole_potential_is_a_superminimizer_across_the_centre(square):
    origin = square.point([0, 0])
    U = square.ball([0, 0], 0.8) - origin
    pole = ScalarField(square, -np.log(np.maximum(square.distances([0, 0]), 0.25 * square.h)))
    solution = solve_dirichlet(U, pole, 2).solution
    assert remove_and_verify(solution, U, origin, 2, n_tests=20, kind=SUPER).passed
    assert not remove_and_verify(solution, U, origin, 2, n_tests=20, kind=MINIMIZER).passed


@pytest.mark.slow
def test_log_norm_energy_diverges_as_point_capacity_shrinks():
    energies, capacities = [], []
    for n in (65, 129):
        grid = build_domain(2, [-1, 1], n)
        origin = grid.point([0, 0])
        with np.errstate(divide="ignore"):
            u = ScalarField(grid, np.log(grid.distances([0, 0])))
        report = remove_and_verify(u, grid.ball([0, 0], 0.8) - origin, origin, 2, n_tests=20, kind=MINIMIZER)
        assert not report.passed
        energies.append(report.details["extended_energy"])
        capacities.append(report.details["capacity_proxy"])
    # one halving of h adds about 2π·log 2 to the Dirichlet energy of log|x|
    step = 2 * np.pi * np.log(2)
    assert 0.5 * step < energies[1] - energies[0] < 2 * step
    assert capacities[1] < capacities[0]


@pytest.mark.slow
@pytest.mark.parametrize("kind, passes", [(SUPER, True), (MINIMIZER, False)])
def test_removal_verdict_is_stable_under_refinement(kind, passes):
    margins = []
    for n in (65, 129):
        grid = build_domain(2, [-1, 1], n)
        origin = grid.point([0, 0])
        U = grid.ball([0, 0], 0.8) - origin
        affine = ScalarField(grid, grid.coords @ np.array([0.5, 1.0]))
        flat = remove_and_verify(affine, U, origin, 2, n_tests=20, kind=kind)
        assert flat.passed
        assert flat.worst_margin >= -1e-9 * flat.details["extended_energy"]

        pole = ScalarField(grid, -np.log(np.maximum(grid.distances([0, 0]), 0.25 * grid.h)))
        solution = solve_dirichlet(U, pole, 2).solution
        report = remove_and_verify(solution, U, origin, 2, n_tests=20, kind=kind)
        assert report.passed is passes
        if passes:
            assert report.worst_margin >= -1e-9 * report.details["extended_energy"]
        margins.append(report.worst_margin)
    if not passes:
        assert max(margins) < 0


def test_regularize_keeps_affine_fields(square, inner_box):
    u = ScalarField(square, square.coords @ np.array([1.0, -2.0]))
    for mode in ("lsc", "usc"):
        assert np.array_equal(fine_regularize(u, inner_box, mode).values, u.values)


def test_regularize_moves_only_the_extreme_grid_corner(square):
    u = ScalarField(square, square.coords @ np.array([1.0, -2.0]))
    for mode, corner, step in (("lsc", [-1, 1], 1.0), ("usc", [1, -1], -1.0)):
        node = square.nearest_node(corner)
        moved = fine_regularize(u, square.full(), mode).values
        assert np.flatnonzero(moved != u.values).tolist() == [node]
        assert moved[node] == pytest.approx(u.values[node] + step * square.h)


@pytest.mark.parametrize("mode, spike", [("lsc", -100.0), ("usc", 100.0)])
def test_regularize_removes_a_spike(square, mode, spike):
    values = np.zeros(square.n_nodes)
    values[square.nearest_node([0, 0])] = spike
    u = ScalarField(square, values)
    cleaned = fine_regularize(u, square.full(), mode)
    assert np.all(cleaned.values == 0.0)
    assert np.array_equal(fine_regularize(cleaned, square.full(), mode).values, cleaned.values)
    assert np.array_equal(fine_regularize(u, square.full(), mode, trim=0.0).values, values)
    other = "usc" if mode == "lsc" else "lsc"
    assert np.array_equal(fine_regularize(u, square.full(), other).values, values)


def test_regularize_keeps_the_order_of_fields(square):
    centre = square.nearest_node([0, 0])
    u = np.zeros(square.n_nodes)
    u[centre] = -100.0
    v = np.where(square.coords[:, 1] > 0, 10.0, 0.0)
    v[centre] = -5.0
    low = fine_regularize(ScalarField(square, u), square.full()).values
    high = fine_regularize(ScalarField(square, v), square.full()).values
    assert low[centre] == 0.0
    assert np.all(low <= high)


@settings(max_examples=50, deadline=None)
@given(values=grid_values, raise_by=arrays(np.float64, GRID.n_nodes, elements=st.floats(0, 10)),
       mode=st.sampled_from(["lsc", "usc"]), trim=st.sampled_from([0.05, 0.2, 0.45]))
def test_regularize_is_monotone(values, raise_by, mode, trim):
    lower = fine_regularize(ScalarField(GRID, values), GRID_U, mode, trim).values
    upper = fine_regularize(ScalarField(GRID, values + raise_by), GRID_U, mode, trim).values
    assert np.all(lower <= upper)


@settings(max_examples=50, deadline=None)
@given(values=grid_values, mode=st.sampled_from(["lsc", "usc"]), trim=st.sampled_from([0.05, 0.2, 0.45]))
def test_regularize_is_idempotent(values, mode, trim):
    once = fine_regularize(ScalarField(GRID, values), GRID_U, mode, trim)
    twice = fine_regularize(once, GRID_U, mode, trim)
    assert np.array_equal(twice.values, once.values)
    assert np.array_equal(once.values[~GRID_U.mask], values[~GRID_U.mask])


def test_regularize_keeps_an_obstacle_solution(square, inner_box):
    psi = ScalarField(square, 0.5 - 1.5 * np.linalg.norm(square.coords, axis=1))
    solution = solve_obstacle(ObstacleProblem(U=inner_box, f=square.constant(0.0), psi=psi, p=2)).solution
    regular = fine_regularize(solution, inner_box, "lsc", trim=0.2)
    assert np.max(np.abs(regular.values - solution.values)) <= 1e-8


def test_regularize_leaves_nodes_off_U(square):
    values = np.zeros(square.n_nodes)
    centre = square.nearest_node([0, 0])
    values[centre] = 100.0
    U = square.box([0.5, 0.5], [1, 1])
    assert fine_regularize(ScalarField(square, values), U).values[centre] == 100.0


def test_regularize_preconditions(square):
    u = square.constant(0.0)
    with pytest.raises(PreconditionError, match="mode"):
        fine_regularize(u, square.full(), "continuous")
    with pytest.raises(PreconditionError, match="trim"):
        fine_regularize(u, square.full(), trim=0.5)


def test_probe_of_affine_field(affine):
    probe = fine_limit_probe(affine, [0, 0], 0.5)
    assert probe.radii == [0.5, 0.25, 0.125]
    assert probe.verdict == LIMIT_EXISTS
    assert probe.limit_estimate == pytest.approx(0.0, abs=1e-12)
    assert all(lo <= hi for lo, hi in zip(probe.trimmed_inf, probe.trimmed_sup))
    assert all(r <= t for r, t in zip(probe.raw_inf, probe.trimmed_inf))
    assert not probe.raw_trimmed_split
    assert probe.to_dict()["exceptional_set_proxy"] == "measure trimming"


def test_probe_of_half_plane_indicator(fine_square):
    jump = ScalarField(fine_square, (fine_square.coords[:, 0] >= 0).astype(float))
    probe = fine_limit_probe(jump, [0, 0], 0.5)
    assert probe.verdict == NO_LIMIT
    assert np.isnan(probe.limit_estimate)
    assert probe.to_dict()["limit_estimate"] is None
    assert fine_continuity_at(jump, [0, 0]).verdict == "discontinuous"


def test_isolated_spikes_split_raw_and_trimmed(fine_square, affine):
    values = affine.values.copy()
    for r in (1.0, 0.5, 0.25, 0.125):
        values[fine_square.nearest_node([0.75 * r, 0.0])] = 10.0
    probe = fine_limit_probe(ScalarField(fine_square, values), [0, 0], 1.0)
    assert probe.verdict == LIMIT_EXISTS
    assert probe.raw_trimmed_split
    assert max(probe.raw_sup) == 10.0
    assert max(probe.trimmed_sup) < 2.0


def test_probe_preconditions(affine):
    with pytest.raises(PreconditionError, match="trim"):
        fine_limit_probe(affine, [0, 0], 0.5, trim=0.5)
    with pytest.raises(PreconditionError, match="exit"):
        fine_limit_probe(affine, [0.9, 0], 0.5)
    with pytest.raises(PreconditionError, match="annulus"):
        fine_limit_probe(affine, [0, 0], 2 * affine.domain.h)


def test_continuity_at_a_point(fine_square, affine):
    report = fine_continuity_at(affine, [0, 0])
    assert report.verdict == "finely_continuous"
    assert len(report.probe.radii) == 4
    assert report.lower_envelope <= report.value <= report.upper_envelope

    values = affine.values.copy()
    values[fine_square.nearest_node([0, 0])] = 5.0
    assert fine_continuity_at(ScalarField(fine_square, values), [0, 0]).verdict == "discontinuous"


def test_continuity_is_inconclusive_without_decay(fine_square):
    rng = np.random.default_rng(7)
    noise = ScalarField(fine_square, rng.uniform(size=fine_square.n_nodes))
    verdict = fine_continuity_at(noise, [0, 0]).verdict
    assert verdict in ("discontinuous", INCONCLUSIVE)
