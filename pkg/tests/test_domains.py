import math

import numpy as np
import pytest

from affine_reilly.cli import DEFAULT_U
from affine_reilly.domains import (
    CATALOG_DOMAINS,
    DomainError,
    area,
    build_domain,
    default_triple,
    divergence_theorem,
    gauss_legendre,
    integrate_boundary,
    integrate_volume,
    parse_domain,
    periodic_trapezoid,
    refine,
    smooth_vector_field,
    volume,
)
from affine_reilly.geometry import catalog_triple


def assemble(compact, u="0", order=32):
    spec = parse_domain(compact)
    return build_domain(catalog_triple(spec.triple, u), spec, order)


def test_ball_volume_and_area():
    A = assemble("ball3:1")
    assert volume(A) == pytest.approx(4 * math.pi / 3, abs=1e-10)
    assert area(A) == pytest.approx(4 * math.pi, abs=1e-10)
    B = assemble("ball2:1")
    assert integrate_volume(B, 1.0) == pytest.approx(math.pi, abs=1e-12)
    assert integrate_boundary(B, 1.0) == pytest.approx(2 * math.pi, abs=1e-12)


def test_cap_area():
    assert area_of("cap:1.0471975511965976") == pytest.approx(math.pi, abs=1e-8)


def area_of(compact):
    return volume(assemble(compact))


def test_weighted_integrals():
    A = assemble("ball3:1")
    assert integrate_volume(A, "exp(0*x1)") == pytest.approx(volume(A))
    assert integrate_boundary(A, lambda p: 1.0 / 2.0 + 0 * p[:, 0]) == pytest.approx(2 * math.pi)
    assert integrate_boundary(A, A.boundary_concat(lambda b: 1.0 / b.H)) == pytest.approx(2 * math.pi)
    B = assemble("box:1,1", "x1")
    assert integrate_volume(B, "exp(2*x1)") == pytest.approx((math.e**2 - 1) / 2, abs=1e-10)


def test_ellipsoid_mean_curvature_self_convergence():
    a24 = integrate_boundary(A := assemble("ellipsoid:1.5,1,1", order=24), A.boundary_concat(lambda b: b.H))
    a32 = integrate_boundary(B := assemble("ellipsoid:1.5,1,1", order=32), B.boundary_concat(lambda b: b.H))
    assert a32 > 0
    assert abs(a24 - a32) <= 1e-6 * abs(a32)


def test_refine():
    A = assemble("annulus:0.5,1", order=8)
    R = refine(A)
    assert R.order == 16 and len(R.points) == 4 * len(A.points)
    assert integrate_volume(R, "x1^2") == pytest.approx(integrate_volume(A, "x1^2"), abs=1e-12)
    errs = [abs(integrate_volume(assemble("ellipse:1.5,1", order=k), "exp(x1)*cos(x2)") -
                integrate_volume(assemble("ellipse:1.5,1", order=64), "exp(x1)*cos(x2)")) for k in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-10


def test_rules():
    x, w = gauss_legendre(5, 0.0, 2.0)
    assert w.sum() == pytest.approx(2.0) and np.all((x > 0) & (x < 2))
    x, w = periodic_trapezoid(8, 0.0, 2 * math.pi)
    assert np.dot(w, np.cos(3 * x) ** 2) == pytest.approx(math.pi, abs=1e-14)


def test_deterministic_sums():
    a = [integrate_volume(assemble("hball:1", "0.2*x1"), "x1^2*x2 + exp(x2)") for _ in range(3)]
    assert a[0] == a[1] == a[2]


@pytest.mark.parametrize("name", sorted(CATALOG_DOMAINS))
def test_divergence_theorem_on_catalog(name):
    spec = parse_domain(CATALOG_DOMAINS[name])
    T = default_triple(spec, DEFAULT_U[spec.triple])
    A = build_domain(T, spec, 32)
    W = smooth_vector_field(T, seed=len(name))
    for tau in (0.0, 1.3, -0.4):
        vol, bnd = divergence_theorem(A, W, tau)
        assert abs(vol - bnd) <= 1e-8 * max(1.0, abs(vol))


def test_closed_sphere_has_zero_flux():
    A = assemble("sphere2")
    vol, bnd = divergence_theorem(A, ["sin(x1)^2*cos(x2)", "cos(x1) + 0.5"], 0.7)
    assert bnd == 0.0 and abs(vol) <= 1e-12


def test_json_and_errors():
    assert parse_domain({"domain": "cap", "theta_max": 1.0471975512}).name == "cap"
    assert parse_domain({"domain": "ball", "dim": 3, "radius": 1.0}).dim == 3
    with pytest.raises(DomainError):
        parse_domain("torus:1")
    with pytest.raises(DomainError):
        build_domain(catalog_triple("sphere-2"), parse_domain("ball2:1"), 8)
    with pytest.raises(DomainError):
        build_domain(catalog_triple("euclidean-2"), parse_domain("ball2:20"), 8)
