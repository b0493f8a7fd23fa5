import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finepot.classes.errors import PreconditionError
from finepot.core.capacity import sobolev_capacity, strictness_modulus, variational_capacity
from finepot.core.grid_domain import build_domain, p_energy
from finepot.core.radial import radial_capacity

GRID = build_domain(2, [-1, 1], 17)
boxes = st.tuples(st.integers(-6, 5), st.integers(-6, 5), st.integers(1, 4), st.integers(1, 4))


def box_set(corner):
    x, y, w, v = corner
    h = GRID.h
    return GRID.box([x * h, y * h], [min(x + w, 6) * h, min(y + v, 6) * h])


AMBIENT = GRID.open_box([-0.875, -0.875], [0.875, 0.875])


def test_annulus_against_radial_oracle():
    domain = build_domain(2, [-2.25, 2.25], 73)
    result = variational_capacity(domain.ball([0, 0], 1), domain.ball([0, 0], 2), 2)
    assert result.converged
    assert result.value == pytest.approx(2 * math.pi / math.log(2), rel=0.1)


def test_potential_bounds_and_value(square):
    E = square.ball([0, 0], 0.25)
    A = square.ball([0, 0], 0.75)
    result = variational_capacity(E, A, 2.5)
    values = result.potential.values
    tol = 1e-9
    assert np.all(values >= -tol) and np.all(values <= 1 + tol)
    assert np.all(values[E.mask] == 1.0)
    assert np.all(values[~A.mask] == 0.0)
    assert result.value == pytest.approx(p_energy(result.potential, None, 2.5).total)
    data = result.to_dict("cap_potential.csv")
    assert data["kind"] == "variational"
    assert data["potential_ref"] == "cap_potential.csv"
    assert data["ambient_bounds"] == [[-1.0, 1.0], [-1.0, 1.0]]


def test_empty_plate_has_zero_capacity(square):
    result = variational_capacity(square.empty(), square.ball([0, 0], 0.5), 2)
    assert result.value == 0.0
    assert sobolev_capacity(square.empty(), 2).value == 0.0


def test_preconditions(square):
    with pytest.raises(PreconditionError, match="subset"):
        variational_capacity(square.ball([0, 0], 0.5), square.ball([0, 0], 0.25), 2)
    with pytest.raises(PreconditionError, match="exterior"):
        variational_capacity(square.ball([0, 0], 0.5), square.full(), 2)
    with pytest.raises(PreconditionError):
        variational_capacity(square.ball([0, 0], 0.25), square.ball([0, 0], 0.5), 1.0)


@settings(max_examples=50, deadline=None)
@given(boxes, boxes)
def test_capacity_is_monotone_and_subadditive(first, second):
    E1, E2 = box_set(first), box_set(second)
    p = 2.0
    c1 = variational_capacity(E1, AMBIENT, p).value
    c2 = variational_capacity(E2, AMBIENT, p).value
    union = variational_capacity(E1 | E2, AMBIENT, p).value
    slack = 1e-7 * (1 + union)
    assert union >= max(c1, c2) - slack
    assert union <= c1 + c2 + slack


@settings(max_examples=50, deadline=None)
@given(boxes, boxes, st.sampled_from([1.5, 2.0]))
def test_sobolev_capacity_is_monotone_and_subadditive(first, second, p):
    E1, E2 = box_set(first), box_set(second)
    c1 = sobolev_capacity(E1, p).value
    c2 = sobolev_capacity(E2, p).value
    union = sobolev_capacity(E1 | E2, p).value
    slack = 1e-7 * (1 + union)
    assert union >= max(c1, c2) - slack
    assert union <= c1 + c2 + slack


def test_capacity_decreases_with_larger_ambient(square):
    E = square.ball([0, 0], 0.25)
    small = variational_capacity(E, square.ball([0, 0], 0.5), 2).value
    large = variational_capacity(E, square.ball([0, 0], 0.9), 2).value
    assert large < small


def test_sobolev_capacity_is_monotone(square):
    small = sobolev_capacity(square.ball([0, 0], 0.2), 2).value
    large = sobolev_capacity(square.ball([0, 0], 0.4), 2).value
    assert 0 < small < large
    result = sobolev_capacity(square.ball([0, 0], 0.2), 2)
    assert result.kind == "sobolev"
    values = result.potential.values
    assert np.all(values >= -1e-9) and np.all(values <= 1 + 1e-9)


def test_strictness_modulus_is_finite(square):
    modulus = strictness_modulus(square.ball([0, 0], 0.8), square.ball([0, 0], 0.3), 2)
    assert math.isfinite(modulus) and modulus > 0


def test_power_weight_capacity_matches_radial_form():
    domain = build_domain(2, [-2.25, 2.25], 73, {"kind": "power", "alpha": 0.5}, p=2)
    value = variational_capacity(domain.ball([0, 0], 1), domain.ball([0, 0], 2), 2).value
    assert value == pytest.approx(radial_capacity(1, 2, 2, 2, 0.5), rel=0.1)


@pytest.mark.slow
@pytest.mark.parametrize("p", [2.0, 1.5, 3.0])
def test_annulus_at_fine_resolution(p):
    domain = build_domain(2, [-2.25, 2.25], 289)
    value = variational_capacity(domain.ball([0, 0], 1), domain.ball([0, 0], 2), p).value
    assert value == pytest.approx(radial_capacity(1, 2, p, 2), rel=0.05)


@pytest.mark.slow
def test_point_capacity_dichotomy():
    values = {2.0: [], 3.0: []}
    for n in (17, 33, 65, 129):
        domain = build_domain(2, [-1, 1], n)
        origin = domain.point([0, 0])
        for p in values:
            values[p].append(sobolev_capacity(origin, p).value)
    quadratic = values[2.0]
    assert all(b < a for a, b in zip(quadratic, quadratic[1:]))
    # 1/value grows like log(1/h)/(2π)
    increments = np.diff(1 / np.asarray(quadratic))
    rate = math.log(2) / (2 * math.pi)
    assert np.all(increments[1:] > 0.5 * rate)
    assert np.all(increments[1:] < 2 * rate)
    cubic = values[3.0]
    assert min(cubic) >= 0.5 * cubic[0]
