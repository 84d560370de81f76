import numpy as np
import pytest

from partsdc.quadrature import (ALL_SCHEME_NAMES, LowOrderVariant, SchemeName,
                                collocation_defect, make_scheme,
                                weights_from_nodes)

# node/weight tables of the five catalog schemes
CATALOG = {
    SchemeName.SDC1: ((0.0, 1.0), [[0.0, 1.0]], 1),
    SchemeName.SDC2: ((0.0, 1.0), [[0.5, 0.5]], 2),
    SchemeName.SDC3_R: ((0.0, 1.0 / 3.0, 1.0),
                        [[0.0, 5.0 / 12.0, -1.0 / 12.0],
                         [0.0, 1.0 / 3.0, 1.0 / 3.0]], 3),
    SchemeName.SDC3_L: ((0.0, 0.5, 1.0),
                        [[5.0 / 24.0, 8.0 / 24.0, -1.0 / 24.0],
                         [-1.0 / 24.0, 8.0 / 24.0, 5.0 / 24.0]], 3),
    SchemeName.SDC4: ((0.0, 0.5, 1.0),
                      [[5.0 / 24.0, 8.0 / 24.0, -1.0 / 24.0],
                       [-1.0 / 24.0, 8.0 / 24.0, 5.0 / 24.0]], 4),
}


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_catalog_matches_reference_tables(name):
    scheme = make_scheme(name)
    nodes, weights, sweeps = CATALOG[name]
    assert scheme.nodes == nodes
    np.testing.assert_allclose(scheme.weights, weights, atol=0)
    assert scheme.num_sweeps == sweeps


def test_low_order_variants():
    assert make_scheme("SDC3_R").low_order_variant is LowOrderVariant.FULLSTEP
    for name in ("SDC1", "SDC2", "SDC3_L", "SDC4"):
        assert make_scheme(name).low_order_variant is LowOrderVariant.SUBSTEP


def test_make_scheme_accepts_loose_spellings():
    assert make_scheme("sdc3-r").name is SchemeName.SDC3_R
    assert make_scheme("Sdc4").name is SchemeName.SDC4
    with pytest.raises(ValueError):
        make_scheme("sdc7")


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_row_sums_integrate_constants(name):
    scheme = make_scheme(name)
    np.testing.assert_allclose(scheme.weights.sum(axis=1),
                               np.diff(scheme.nodes), atol=1e-15)


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_full_interval_consistency(name):
    assert abs(make_scheme(name).weights.sum() - 1.0) < 1e-14


def test_weights_from_nodes_trapezoid():
    # integral of the two linear hat functions over [0, 1] is 1/2 each
    W = weights_from_nodes([0.0, 1.0])
    np.testing.assert_allclose(W, [[0.5, 0.5]], atol=1e-15)


def test_weights_from_nodes_radau_stencil():
    # hand integration of the 2-point basis on {1/3, 1}:
    #   l_{1/3}(t) = 3(1-t)/2  -> int_0^{1/3} = 5/12,  int_{1/3}^1 = 1/3
    #   l_1(t)     = 3(t-1/3)/2 -> int_0^{1/3} = -1/12, int_{1/3}^1 = 1/3
    W = weights_from_nodes([0.0, 1.0 / 3.0, 1.0], stencil=(1, 2))
    np.testing.assert_allclose(
        W, [[0.0, 5.0 / 12.0, -1.0 / 12.0], [0.0, 1.0 / 3.0, 1.0 / 3.0]],
        atol=1e-15)


def test_weights_from_nodes_lobatto_matches_catalog():
    W = weights_from_nodes([0.0, 0.5, 1.0])
    np.testing.assert_allclose(W, make_scheme("SDC4").weights, atol=1e-15)


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_weights_from_nodes_reproduces_every_scheme(name):
    scheme = make_scheme(name)
    W = weights_from_nodes(scheme.nodes, scheme.stencil)
    assert np.max(np.abs(W - scheme.weights)) < 1e-14


def test_weights_from_nodes_rejects_duplicates():
    with pytest.raises(ValueError):
        weights_from_nodes([0.0, 0.5, 0.5, 1.0])


@pytest.mark.parametrize("name", ALL_SCHEME_NAMES)
def test_polynomial_exactness_over_stencil(name):
    # interpolatory weights integrate monomials exactly up to the stencil
    # degree on every subinterval
    scheme = make_scheme(name)
    for degree in range(len(scheme.stencil)):
        coeffs = np.zeros(degree + 1)
        coeffs[degree] = 1.0
        assert np.max(collocation_defect(scheme, coeffs)) < 1e-13


def test_collocation_defect_constant_on_sdc1():
    assert np.max(collocation_defect(make_scheme("SDC1"), [1.0])) == 0.0


def test_collocation_defect_quadratic_on_sdc4():
    # exact subinterval integrals of t^2 are 1/24 and 7/24
    scheme = make_scheme("SDC4")
    samples = np.asarray(scheme.nodes) ** 2
    quad = scheme.weights @ samples
    np.testing.assert_allclose(quad, [1.0 / 24.0, 7.0 / 24.0], atol=1e-15)
    assert np.max(collocation_defect(scheme, [0.0, 0.0, 1.0])) < 1e-13


def test_collocation_defect_cubic_on_sdc2_is_nonzero():
    # trapezoid gives 1/2 for int t^3 over [0,1]; exact is 1/4
    defect = collocation_defect(make_scheme("SDC2"), [0.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(defect, [0.25], atol=1e-15)


def test_scheme_immutable():
    scheme = make_scheme("SDC4")
    with pytest.raises(Exception):
        scheme.num_sweeps = 7
