import numpy as np
import pytest
import sympy as sp

from csh_vortex.app.errors import CartanValidationError, ConfigurationError, DecompositionError
from csh_vortex.app.services.lie_cartan import (
    AlgebraSpec,
    build_cartan_data,
    cartan_matrix,
    catalog_specs,
    coercivity_constants,
    decompose,
    lambda_threshold,
    load_cartan_data,
    require_valid,
    threshold_coefficient,
    validate,
    vortex_vector_b,
)


def test_rank_one_data(a1):
    assert a1.K == sp.Matrix([[2]])
    assert a1.P == (1,)
    assert a1.S == sp.Matrix([[2]])
    assert a1.R == (sp.Rational(1, 2),)
    assert a1.A == sp.Matrix([[sp.Rational(1, 2)]])
    assert a1.Q == sp.Matrix([[sp.Rational(1, 2)]])
    # b = 4 pi A N
    assert sp.simplify(vortex_vector_b(a1, [3])[0] - 6 * sp.pi) == 0


def test_catalog_certificates_all_pass():
    specs = catalog_specs()
    assert len(specs) == 10 + 9 + 9 + 8 + 3 + 2
    for spec in specs:
        cert = validate(build_cartan_data(spec))
        assert cert.passed, (cert.label, [c.name for c in cert.checks if not c.passed])


def test_su4_inverse_and_row_sums(a3):
    expected = sp.Matrix([[3, 2, 1], [2, 4, 2], [1, 2, 3]]) / 4
    assert a3.K_inv == expected
    assert a3.R == (sp.Rational(3, 2), 2, sp.Rational(3, 2))
    assert a3.P == (1, 1, 1)
    assert a3.S == a3.K


def test_g2_transpose_factorization():
    data = load_cartan_data(AlgebraSpec.parse("G2"))
    assert data.K == sp.Matrix([[2, -1], [-3, 2]])
    assert data.P == (1, sp.Rational(1, 3))
    assert data.S == sp.Matrix([[2, -3], [-3, 6]])
    assert data.K.T == sp.diag(*data.P) * data.S


def test_b2_and_c2_are_transposes():
    B2 = cartan_matrix(AlgebraSpec("B", 2))
    C2 = cartan_matrix(AlgebraSpec("C", 2))
    assert B2 == C2.T
    P, S = decompose(B2)
    assert P == (1, 2)
    assert S == sp.Matrix([[2, -1], [-1, 1]])


@pytest.mark.parametrize("label, det", [("D4", 4), ("E6", 3), ("E7", 2), ("E8", 1), ("F4", 1), ("G2", 1), ("A5", 6)])
def test_cartan_determinants(label, det):
    assert cartan_matrix(AlgebraSpec.parse(label)).det() == det


def test_threshold_rank_one_and_su4(a1, a3):
    assert threshold_coefficient(a1, [1]) == 16
    assert threshold_coefficient(a1, [3]) == 48
    assert threshold_coefficient(a3, [1, 1, 1]) == 16
    assert threshold_coefficient(a3, [1, 0, 0]) == sp.Rational(24, 5)
    assert lambda_threshold(a1, [1], 2.0) == pytest.approx(8 * np.pi, rel=1e-15)
    assert threshold_coefficient(a3, [0, 0, 0]) == 0


def test_non_symmetrizable_matrix_is_rejected():
    spec = AlgebraSpec.from_matrix([[2, -1, -1], [-2, 2, -1], [-1, -1, 2]])
    with pytest.raises(DecompositionError):
        build_cartan_data(spec)


def test_asymmetric_zero_pattern_is_rejected():
    with pytest.raises(DecompositionError):
        decompose(sp.Matrix([[2, -1], [0, 2]]))


def test_singular_matrix_certificate_fails():
    data = build_cartan_data(AlgebraSpec.from_matrix([[2, -2], [-2, 2]]))
    assert not data.invertible
    cert = validate(data)
    assert not cert.passed
    failed = {c.name for c in cert.checks if not c.passed}
    assert "S_positive_definite" in failed
    with pytest.raises(CartanValidationError):
        require_valid(data)


def test_affine_matrix_fails_positivity():
    data = build_cartan_data(AlgebraSpec.from_matrix([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]))
    assert not validate(data).passed


@pytest.mark.parametrize("family, rank", [("E", 5), ("G", 3), ("D", 2), ("B", 1), ("X", 2)])
def test_invalid_family_rank(family, rank):
    with pytest.raises(ConfigurationError):
        AlgebraSpec(family, rank)


def test_explicit_matrix_sign_checks():
    with pytest.raises(ConfigurationError):
        AlgebraSpec.from_matrix([[2, 1], [1, 2]])
    with pytest.raises(ConfigurationError):
        AlgebraSpec.from_matrix([[2, -1]])


def test_label():
    assert AlgebraSpec.parse("a3").label == "A3"
    assert AlgebraSpec.from_matrix([[2, -1], [-1, 2]]).label == "custom2x2"


def test_coercivity_constants(a1, a3):
    alpha0, beta0 = coercivity_constants(a1)
    assert alpha0 == pytest.approx(0.5)
    assert beta0 == pytest.approx(0.5)
    alpha0, beta0 = coercivity_constants(a3)
    assert alpha0 == pytest.approx(np.linalg.eigvalsh(np.linalg.inv(a3.K_float))[0])
    assert beta0 > 0


def test_float_views_are_consistent(a3):
    np.testing.assert_allclose(a3.K_tilde_float @ np.ones(3), np.ones(3), atol=1e-15)
    np.testing.assert_allclose(a3.S_float @ a3.R_float, 1 / a3.P_float, atol=1e-15)
