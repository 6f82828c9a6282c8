import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affine_reilly.cli import DEFAULT_PHI, DEFAULT_U
from affine_reilly.connection import (
    AffineConnection,
    bakry_emery_ricci_at,
    bochner_residual_at,
    connection_coeffs_at,
    d_gradient_at,
    d_hessian_at,
    d_laplacian_at,
    ricci_crosscheck,
    ricci_D_closed_at,
    ricci_D_direct_at,
    static_ricci_at,
    torsion_at,
    weighted_divergence_residual,
)
from affine_reilly.geometry import CATALOG_TRIPLES, catalog_triple, christoffel_at, grad_at, hessian_at, laplacian_at, ricci_at
from affine_reilly.reilly import param_pairs


def flat(u="x1", n=2):
    return catalog_triple(f"euclidean-{n}", u)


def test_levi_civita_case():
    T = catalog_triple("sphere-2", DEFAULT_U["sphere-2"])
    C = AffineConnection.of(T, 0.0, 0.0)
    pts = T.sample_points(10, seed=0)
    np.testing.assert_array_equal(connection_coeffs_at(C, pts), christoffel_at(T, pts))
    np.testing.assert_array_equal(torsion_at(C, pts), 0.0)
    np.testing.assert_allclose(ricci_D_closed_at(C, pts), ricci_at(T, pts), atol=1e-15)


def test_coefficient_examples():
    G = connection_coeffs_at(AffineConnection.of(flat(), 1.0, 0.0), (0.3, 0.2))
    assert G[0, 0, 0] == pytest.approx(2.0)
    assert G[1, 0, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(G[:, 1, 1], 0.0)
    G = connection_coeffs_at(AffineConnection.of(flat(), 0.0, 1.0), (0.3, 0.2))
    assert G[0, 1, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("name", CATALOG_TRIPLES)
def test_torsion_free(name):
    T = catalog_triple(name, DEFAULT_U[name])
    pts = T.sample_points(20, seed=1)
    for a, g in param_pairs(T.dim):
        assert np.abs(torsion_at(AffineConnection.of(T, a, g), pts)).max() <= 1e-12


def test_ricci_examples():
    np.testing.assert_allclose(ricci_D_direct_at(AffineConnection.of(flat("0"), 0, 0), (0.1, 0.2)), 0.0)
    np.testing.assert_allclose(ricci_D_direct_at(AffineConnection.of(flat(), 1.0, 0.0), (0.1, 0.2)),
                               [[1.0, 0.0], [0.0, 0.0]], atol=1e-14)
    np.testing.assert_allclose(ricci_D_direct_at(AffineConnection.of(flat(), 0.0, 1.0), (0.1, 0.2)),
                               [[0.0, 0.0], [0.0, 1.0]], atol=1e-14)


@pytest.mark.parametrize("name", CATALOG_TRIPLES)
def test_ricci_crosscheck(name):
    T = catalog_triple(name, DEFAULT_U[name])
    pts = T.sample_points(100, seed=2)
    for a, g in param_pairs(T.dim):
        assert ricci_crosscheck(AffineConnection.of(T, a, g), pts) <= 1e-8


@pytest.mark.parametrize("name", CATALOG_TRIPLES)
def test_special_cases(name):
    T = catalog_triple(name, DEFAULT_U[name])
    n = T.dim
    pts = T.sample_points(50, seed=3)
    static = ricci_D_closed_at(AffineConnection.of(T, 0.0, 1.0), pts)
    assert np.abs(static - static_ricci_at(T, pts)).max() <= 1e-10 * (1 + np.abs(static).max())
    be = ricci_D_closed_at(AffineConnection.of(T, 1.0 / (n - 1), 0.0), pts)
    assert np.abs(be - bakry_emery_ricci_at(T, pts)).max() <= 1e-10 * (1 + np.abs(be).max())


def test_d_gradient_examples():
    T = catalog_triple("polar-2", "0.3*x1^2")
    p = (0.7, 1.1)
    np.testing.assert_allclose(d_gradient_at(AffineConnection.of(T, 0.4, 0.4), "x1*cos(x2)", p),
                               grad_at(T, "x1*cos(x2)", p), atol=1e-15)
    np.testing.assert_allclose(d_gradient_at(AffineConnection.of(flat(), 0.0, 1.0), "x1", (0.0, 0.3)), [1.0, 0.0])
    T0 = catalog_triple("polar-2")
    C0 = AffineConnection.of(T0, 0.3, 0.7)
    np.testing.assert_allclose(d_hessian_at(C0, "x1^2*cos(x2)", p), hessian_at(T0, "x1^2*cos(x2)", p), atol=1e-14)
    assert d_laplacian_at(C0, "x1^2*cos(x2)", p) == pytest.approx(laplacian_at(T0, "x1^2*cos(x2)", p), abs=1e-14)


def test_d_hessian_and_laplacian_examples():
    H = d_hessian_at(AffineConnection.of(flat(), 0.0, 1.0), "x2", (0.0, 0.0))
    assert H[0, 1] == pytest.approx(1.0)
    C = AffineConnection.of(flat(), 0.0, 1.0)
    for t in (-0.5, 0.0, 0.8):
        assert d_laplacian_at(C, "x1", (t, 0.3)) == pytest.approx(2 * math.exp(t))


def test_d_laplacian_closed_form():
    # V^{gamma-alpha} (lap f + (2 gamma + n alpha) <du, df>)
    T = catalog_triple("sphere-2", "0.2*cos(x1)")
    C = AffineConnection.of(T, 0.3, 0.7)
    for th in (0.4, 1.3, 2.2):
        p = (th, 0.5)
        f = "cos(x1)^2"
        u, du = 0.2 * math.cos(th), -0.2 * math.sin(th)
        fp = -2 * math.cos(th) * math.sin(th)
        ref = math.exp(0.4 * u) * (laplacian_at(T, f, p) + (1.4 + 0.6) * du * fp)
        assert d_laplacian_at(C, f, p) == pytest.approx(ref, rel=1e-13)


def test_weighted_divergence():
    T = catalog_triple("sphere-2", "0.2*cos(x1) + 0.1*sin(x1)*cos(x2)")
    W = ["0.3 + x1*x2", "x1^2 - 0.5*x2"]
    pts = T.sample_points(50, seed=6)
    assert weighted_divergence_residual(AffineConnection.of(T, 0.0, 0.0), W, pts).max() == 0.0
    assert weighted_divergence_residual(AffineConnection.of(T, 0.3, 0.7), W, pts).max() <= 1e-10


def test_bochner_examples():
    C = AffineConnection.of(flat("0"), 0.0, 0.0)
    assert np.max(bochner_residual_at(C, "x1^2 + 3*x1*x2", np.array([[0.1, 0.2], [1.0, -1.0]]))) <= 1e-10
    T = catalog_triple("sphere-2", "0.2*cos(x1)")
    C = AffineConnection.of(T, 0.25, 0.5)
    pts = T.sample_points(50, seed=7)
    for form in ("commutator", "closed"):
        assert np.max(bochner_residual_at(C, "cos(x1)^3 + x1^2", pts, form)) <= 1e-8


@pytest.mark.parametrize("name", CATALOG_TRIPLES)
def test_bochner_catalog(name):
    T = catalog_triple(name, DEFAULT_U[name])
    pts = T.sample_points(50, seed=8)
    for a, g in param_pairs(T.dim):
        C = AffineConnection.of(T, a, g)
        assert np.max(bochner_residual_at(C, DEFAULT_PHI[name], pts)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1, 1), st.floats(-1, 1))
def test_ricci_closed_is_symmetric_part_of_direct(a, g, c1, c2):
    T = catalog_triple("hyperbolic-2", f"{c1!r}*x1 + {c2!r}*x2^2")
    C = AffineConnection.of(T, a, g)
    pts = T.sample_points(5, seed=9)
    assert ricci_crosscheck(C, pts) <= 1e-9
    R = ricci_D_closed_at(C, pts)
    np.testing.assert_allclose(R, np.swapaxes(R, 1, 2), atol=1e-12)
