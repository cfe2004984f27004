import numpy as np
import pytest

from csh_vortex.app.errors import ConstraintInfeasibleError, ConstraintInputError
from csh_vortex.app.services.constraint_solver import (
    ConstraintInput,
    admissible,
    box_margins,
    constraint_residual,
    f_map,
    is_admissible,
    linear_start,
    lower_bound,
    resolve_constraints,
    scalar_closed_form,
    solve_homotopy,
    solve_squeeze,
    squeeze_function,
    squeeze_limits,
)
from csh_vortex.app.services.lie_cartan import float_vector, vortex_vector_b
from csh_vortex.app.services.torus_field import TorusGrid, VortexConfiguration, background, coefficients_a

from conftest import smooth_field


def _input(data, a, aM, N, lam, area=1.0):
    b = float_vector(vortex_vector_b(data, N))
    return ConstraintInput(data, np.asarray(a, float), np.asarray(aM, float), b, lam, area)


def _check_solution(inp, solution):
    assert np.all(solution.t > 0)
    assert np.all(box_margins(inp, solution.t) >= -1e-10)
    assert np.max(constraint_residual(inp, solution.t)) <= 1e-10
    assert np.all(solution.t >= lower_bound(inp) * (1 - 1e-10))


# ---------------------------------------------------------------------------
# Rank one
# ---------------------------------------------------------------------------

def test_rank_one_admissibility_threshold(a1):
    N = 1
    below = _input(a1, [1.0], [[1.0]], [N], 15 * np.pi)
    at = _input(a1, [1.0], [[1.0]], [N], 16 * np.pi)
    above = _input(a1, [1.0], [[1.0]], [N], 17 * np.pi)
    assert admissible(below)[0] < 0
    assert admissible(at)[0] == pytest.approx(0.0, abs=1e-14)
    assert admissible(above)[0] > 0
    assert not is_admissible(below)
    assert is_admissible(at)


def test_rank_one_closed_form_roots(a1):
    solution = scalar_closed_form(_input(a1, [1.0], [[1.0]], [1], 32 * np.pi))
    assert solution.t[0] == pytest.approx((1 + np.sqrt(0.5)) / 2, abs=1e-12)
    assert solution.c[0] == pytest.approx(np.log((1 + np.sqrt(0.5)) / 2), abs=1e-12)

    boundary = scalar_closed_form(_input(a1, [1.0], [[1.0]], [1], 16 * np.pi))
    assert boundary.t[0] == pytest.approx(0.5, abs=1e-7)

    no_vortex = scalar_closed_form(_input(a1, [1.0], [[1.0]], [0], 10.0))
    assert no_vortex.t[0] == pytest.approx(1.0, abs=1e-15)


def test_rank_one_closed_form_matches_scalar_quadratic(a1):
    # e^{2c} a11 - e^c a + 4 pi N / lam = 0 with the "+" root
    a, a11, N, lam = 1.3, 2.1, 2, 400.0
    xi = (a + np.sqrt(a ** 2 - 16 * np.pi * N * a11 / lam)) / (2 * a11)
    inp = _input(a1, [a], [[a11]], [N], lam, area=1.0)
    assert scalar_closed_form(inp).t[0] == pytest.approx(xi, rel=1e-13)
    assert solve_homotopy(inp).t[0] == pytest.approx(xi, abs=1e-12)


def test_rank_one_inadmissible_is_infeasible(a1):
    inp = _input(a1, [1.0], [[1.0]], [1], 10 * np.pi)
    with pytest.raises(ConstraintInfeasibleError):
        scalar_closed_form(inp)
    with pytest.raises(ConstraintInfeasibleError):
        solve_homotopy(inp)
    with pytest.raises(ConstraintInfeasibleError):
        f_map(inp, 1.0, np.zeros(1))


def test_input_validation(a1, a3):
    with pytest.raises(ConstraintInputError):
        _input(a1, [-1.0], [[1.0]], [1], 100.0)
    with pytest.raises(ConstraintInputError):
        _input(a1, [1.0], [[1.0]], [1], 0.0)
    with pytest.raises(ConstraintInputError):
        _input(a3, [1.0, 1.0], np.ones((3, 3)), [1, 1, 1], 100.0)
    aM = np.ones((3, 3))
    aM[0, 1] = 2.0
    with pytest.raises(ConstraintInputError):
        _input(a3, np.ones(3), aM, [1, 1, 1], 100.0)


# ---------------------------------------------------------------------------
# A3
# ---------------------------------------------------------------------------

def test_a3_boundary_margins_vanish(a3):
    b = float_vector(vortex_vector_b(a3, [1, 1, 1]))
    lam = 1000.0
    # a_i^2 / a_ii = 8 b_i / lam exactly
    aM = np.ones((3, 3))
    a = np.sqrt(8 * b / lam)
    aM[np.diag_indices(3)] = 1.0
    inp = ConstraintInput(a3, a, aM, b, lam, 1.0)
    np.testing.assert_allclose(admissible(inp), 0.0, atol=1e-15)


def test_a3_without_vortices_gives_unit_solution(a3):
    inp = _input(a3, np.ones(3), np.ones((3, 3)), [0, 0, 0], 50.0)
    np.testing.assert_allclose(linear_start(inp), 1.0, atol=1e-14)
    np.testing.assert_allclose(solve_homotopy(inp).t, 1.0, atol=1e-13)


def test_a3_reference_instance_homotopy_and_squeeze_agree(a3):
    inp = _input(a3, np.ones(3), np.ones((3, 3)), [1, 1, 1], 1000.0)
    homotopy = solve_homotopy(inp)
    squeeze = solve_squeeze(inp)
    _check_solution(inp, homotopy)
    _check_solution(inp, squeeze)
    assert np.all(homotopy.t <= 1.0)
    np.testing.assert_allclose(homotopy.t, squeeze.t, atol=1e-10)
    assert homotopy.t[0] == pytest.approx(homotopy.t[2], abs=1e-12)
    assert homotopy.monotone


def test_eps_zero_fixed_point_is_linear_start(a3):
    inp = _input(a3, [1.1, 1.2, 1.05], [[1.3, 1.2, 1.1], [1.2, 1.6, 1.25], [1.1, 1.25, 1.2]], [1, 2, 1], 2000.0)
    t0 = linear_start(inp)
    np.testing.assert_allclose(f_map(inp, 0.0, t0), t0, rtol=1e-12)
    np.testing.assert_allclose(inp.Qa @ t0, inp.base, rtol=1e-12)


def test_squeeze_limits_match_large_argument(a3):
    aM = np.array([[1.3, 1.2, 1.1], [1.2, 1.6, 1.25], [1.1, 1.25, 1.2]])
    inp = _input(a3, [1.1, 1.2, 1.05], aM, [1, 1, 1], 2000.0)
    l1, l3, lF = squeeze_limits(inp)
    assert l1 == pytest.approx(2 * aM[0, 1] / (3 * aM[0, 0]))
    assert l3 == pytest.approx(2 * aM[2, 1] / (3 * aM[2, 2]))
    assert lF > 0
    F = squeeze_function(inp)
    big = 1e6
    assert F(big) / big == pytest.approx(lF, rel=1e-4)
    t1 = f_map(inp, 1.0, np.array([0.0, big, 0.0]))
    assert t1[0] / big == pytest.approx(l1, rel=1e-4)


def test_squeeze_rejects_other_algebras(a1):
    inp = _input(a1, [1.0], [[1.0]], [1], 100.0)
    with pytest.raises(ConstraintInputError):
        solve_squeeze(inp)
    with pytest.raises(ConstraintInputError):
        resolve_constraints(inp, "squeeze")
    with pytest.raises(ConstraintInputError):
        resolve_constraints(inp, "bogus")


def _random_a3_inputs(a3, rng, count):
    grid = TorusGrid(1.0, 1.0, 16, 16)
    empty = background(grid, VortexConfiguration.empty(3))
    b = float_vector(vortex_vector_b(a3, [1, 1, 1]))
    S_diag = np.diag(a3.S_float)
    inputs = []
    for _ in range(count):
        w = smooth_field(rng, grid, 3, amplitude=rng.uniform(0.1, 1.0))
        a, aM = coefficients_a(empty, w)
        lam_min = np.max(4 * S_diag * a3.P_float ** 2 * b * np.diag(aM) / a ** 2)
        inputs.append(ConstraintInput(a3, a, aM, b, lam_min * rng.uniform(1.5, 10.0), grid.area))
    return inputs


def test_randomized_a3_cross_oracle(a3, rng):
    for inp in _random_a3_inputs(a3, rng, 100):
        assert is_admissible(inp)
        homotopy = solve_homotopy(inp)
        squeeze = solve_squeeze(inp)
        _check_solution(inp, homotopy)
        _check_solution(inp, squeeze)
        assert homotopy.monotone
        np.testing.assert_allclose(homotopy.t, squeeze.t, atol=1e-10)


def test_randomized_a3_single_sign_change(a3, rng):
    samples = np.linspace(2.0 / 10_000, 2.0, 10_000)
    for inp in _random_a3_inputs(a3, rng, 10):
        F = squeeze_function(inp)
        values = np.array([F(t) for t in samples])
        assert np.count_nonzero(np.diff(np.sign(values)) != 0) == 1
        assert np.all(np.diff(values / samples) > 0)


def test_resolve_dispatch(a1, a3):
    scalar = resolve_constraints(_input(a1, [1.0], [[1.0]], [1], 32 * np.pi), "auto")
    assert scalar.method == "scalar_closed_form"
    general = resolve_constraints(_input(a3, np.ones(3), np.ones((3, 3)), [1, 1, 1], 1000.0), "auto")
    assert general.method == "homotopy"
    assert general.iterations > 0
    assert general.trace
