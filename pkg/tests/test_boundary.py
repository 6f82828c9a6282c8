import math

import numpy as np
import pytest

from affine_reilly import field_dsl as dsl
from affine_reilly.boundary import (
    BoundaryPatch,
    DegenerateImmersion,
    boundary_form_at,
    normal_derivative_at,
    shape_at,
    tangential_gradient_at,
    umbilicity_defect,
)
from affine_reilly.connection import ConnectionParams
from affine_reilly.geometry import catalog_triple


def patch(exprs, box):
    m = len(box)
    return BoundaryPatch(tuple(dsl.parse(e, m) for e in exprs), box)


SPHERE = patch(["sin(x1)*cos(x2)", "sin(x1)*sin(x2)", "cos(x1)"], ((0.0, math.pi), (0.0, 2 * math.pi)))
CIRCLE = patch(["cos(x1)", "sin(x1)"], ((0.0, 2 * math.pi),))
ELLIPSOID = patch(["1.5*sin(x1)*cos(x2)", "sin(x1)*sin(x2)", "cos(x1)"], ((0.0, math.pi), (0.0, 2 * math.pi)))
E3 = catalog_triple("euclidean-3")
E2 = catalog_triple("euclidean-2")


def test_round_sphere():
    s = shape_at(E3, SPHERE, ConnectionParams(0.0, 0.0, 3), (0.9, 0.4))
    assert s.H == pytest.approx(2.0)
    np.testing.assert_allclose(s.h, s.g_ind, atol=1e-14)
    p = np.array([math.sin(0.9) * math.cos(0.4), math.sin(0.9) * math.sin(0.4), math.cos(0.9)])
    np.testing.assert_allclose(s.nu, p, atol=1e-14)


def test_circle_curvature():
    assert shape_at(E2, CIRCLE, ConnectionParams(0.0, 0.0, 2), (1.2,)).H == pytest.approx(1.0)


@pytest.mark.parametrize("alpha", [0.0, 0.3, -0.7, 2.0])
def test_affine_mean_curvature(alpha):
    T = catalog_triple("euclidean-3", "(x1^2+x2^2+x3^2)/2")
    s = shape_at(T, SPHERE, ConnectionParams(alpha, 0.5, 3), (1.1, 2.0))
    assert s.u_nu == pytest.approx(1.0)
    assert s.HD == pytest.approx(2 * (1 + alpha))


def test_tangential_gradient():
    q = (math.pi / 2, 0.3)
    grad, gradD = tangential_gradient_at(E3, SPHERE, "2.5", q)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)
    grad, _ = tangential_gradient_at(E3, SPHERE, "x3", q)
    # d/dx1 of the map at the equator is (0, 0, -1), so grad x3 = -e_theta
    np.testing.assert_allclose(grad, [-1.0, 0.0], atol=1e-15)
    T = catalog_triple("euclidean-3", "0.4*x1")
    grad, gradD = tangential_gradient_at(T, SPHERE, "x1*x3", (0.7, 1.0), ConnectionParams(0.2, 0.9, 3))
    x1 = math.sin(0.7) * math.cos(1.0)
    np.testing.assert_allclose(gradD, math.exp(0.7 * 0.4 * x1) * grad, rtol=1e-14)


def test_boundary_form():
    T = catalog_triple("euclidean-3", "0.3*x1 + 0.2*x3^2")
    q = (0.6, 2.2)
    s = shape_at(T, SPHERE, ConnectionParams(0.4, 0.0, 3), q)
    np.testing.assert_allclose(boundary_form_at(T, SPHERE, ConnectionParams(0.4, 0.0, 3), q), s.h)
    s = shape_at(T, SPHERE, ConnectionParams(0.4, 0.8, 3), q)
    np.testing.assert_allclose(boundary_form_at(T, SPHERE, ConnectionParams(0.4, 0.8, 3), q),
                               s.h - 0.8 * s.u_nu * s.g_ind, atol=1e-14)


def test_umbilicity():
    assert umbilicity_defect(E3, SPHERE, (0.8, 0.1)) <= 1e-10
    assert umbilicity_defect(E3, ELLIPSOID, (0.8, 0.3)) > 0.01
    ellipse = patch(["1.5*cos(x1)", "sin(x1)"], ((0.0, 2 * math.pi),))
    assert umbilicity_defect(E2, ellipse, (0.4,)) <= 1e-14


def test_normal_derivative():
    assert normal_derivative_at(E3, SPHERE, "(x1^2+x2^2+x3^2)/2", (0.5, 0.5)) == pytest.approx(1.0)
    assert normal_derivative_at(E3, SPHERE, "3", (0.5, 0.5)) == 0.0
    for th in (0.0, 1.0, 2.5):
        assert normal_derivative_at(E2, CIRCLE, "x1", (th,)) == pytest.approx(math.cos(th), abs=1e-15)


def test_ellipsoid_mean_curvature_at_pole():
    # at (1.5, 0, 0) the principal curvatures are 1.5 / 1 and 1.5 / 1
    s = shape_at(E3, ELLIPSOID, ConnectionParams(0.0, 0.0, 3), (math.pi / 2, 0.0))
    assert s.H == pytest.approx(3.0)
    # at (0, 0, 1) they are 1 / 1.5^2 and 1
    s = shape_at(E3, ELLIPSOID, ConnectionParams(0.0, 0.0, 3), (1e-3, 1.0))
    assert s.H == pytest.approx(1 / 2.25 + 1, rel=1e-5)


def test_curved_ambient():
    # geodesic circle of radius 1 in the hyperbolic plane, centred at (0, cosh 1)
    T = catalog_triple("hyperbolic-2")
    c, r = math.cosh(1.0), math.sinh(1.0)
    P = patch([f"{r!r}*cos(x1)", f"{c!r} + {r!r}*sin(x1)"], ((0.0, 2 * math.pi),))
    for t in (0.0, 1.3, 4.0):
        assert shape_at(T, P, ConnectionParams(0.0, 0.0, 2), (t,)).H == pytest.approx(1 / math.tanh(1.0), rel=1e-12)


def test_degenerate_immersion():
    P = patch(["x1^2", "0*x1"], ((-1.0, 1.0),))
    with pytest.raises(DegenerateImmersion):
        shape_at(E2, P, ConnectionParams(0.0, 0.0, 2), (0.0,))
