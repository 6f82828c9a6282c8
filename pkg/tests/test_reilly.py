import math

import numpy as np
import pytest

from affine_reilly import field_dsl as dsl
from affine_reilly.connection import AffineConnection
from affine_reilly.domains import build_domain, parse_domain
from affine_reilly.geometry import catalog_triple
from affine_reilly.reilly import (
    REILLY_CASES,
    bochner_consistency,
    cauchy_schwarz_gap,
    classical_reilly,
    conformal_crosscheck,
    evaluate_lhs,
    evaluate_rhs,
    refinement_study,
    verify_case,
    verify_identity,
)


def setup(triple, domain, u, a, g, order=32):
    spec = parse_domain(domain)
    T = catalog_triple(triple, u)
    return AffineConnection.of(T, a, g), build_domain(T, spec, order)


def test_flat_ball_quadratic():
    C, A = setup("euclidean-3", "ball3:1", "0", 0.0, 0.0)
    phi = "(x1^2+x2^2+x3^2)/2"
    lhs = evaluate_lhs(C, A, phi)
    assert lhs["laplacian_sq"] == pytest.approx(9 * 4 * math.pi / 3)
    assert lhs["hessian_sq"] == pytest.approx(-3 * 4 * math.pi / 3)
    assert lhs["ricci"] == 0.0
    assert sum(lhs.values()) == pytest.approx(8 * math.pi)
    assert sum(evaluate_rhs(C, A, phi).values()) == pytest.approx(8 * math.pi)


def test_linear_function_flat():
    C, A = setup("euclidean-2", "ball2:1", "0", 0.0, 0.0)
    assert abs(sum(evaluate_lhs(C, A, "3*x1 - x2").values())) <= 1e-14


def test_dirichlet_structure():
    # phi = 0 on the unit sphere with phi_nu = 1: only the mean-curvature term survives
    C, A = setup("euclidean-3", "ball3:1", "0.3*(x1^2+x2^2+x3^2)", 0.25, 0.5)
    rhs = evaluate_rhs(C, A, "(x1^2+x2^2+x3^2-1)/2")
    assert abs(rhs["second_fundamental"]) <= 1e-12 and abs(rhs["mixed_tangential"]) <= 1e-12
    # int V^tau H^D V^{2(gamma-alpha)} phi_nu^2 with u = 0.3, H^D = 2 + 2 alpha u_nu, u_nu = 0.6
    tau = 4 * 0.25 + 0.5
    ref = 4 * math.pi * math.exp(0.3 * (tau + 0.5)) * (2 + 2 * 0.25 * 0.6)
    assert rhs["mean_curvature"] == pytest.approx(ref, rel=1e-12)


def test_static_case_boundary_line():
    # alpha = 0, gamma = 1 on the unit ball: boundary line recomputed by ambient projection
    u = "0.2*x1 + 0.1*x3^2"
    phi = "x1*x2 + 0.3*x3^3 + x2"
    C, A = setup("euclidean-3", "ball3:1", u, 0.0, 1.0)
    rhs = sum(evaluate_rhs(C, A, phi).values())
    n = 3
    U, F = dsl.parse(u, n), dsl.parse(phi, n)
    r = "sqrt(x1^2+x2^2+x3^2)"
    # smooth extension of V phi_nu off the sphere
    G = dsl.parse(f"exp({u})*(x1*({F.derivative([0]).source()}) + x2*({F.derivative([1]).source()}) + "
                  f"x3*({F.derivative([2]).source()}))/{r}", n)
    X = A.boundary_points
    nu = X / np.linalg.norm(X, axis=1)[:, None]
    P = np.eye(3)[None] - nu[:, :, None] * nu[:, None, :]
    _, dF = F.jet(X, 1)
    _, dU = U.jet(X, 1)
    _, dG = G.jet(X, 1)
    V = np.exp(U.eval_many(X))
    phi_nu = np.einsum("ni,ni->n", dF, nu)
    u_nu = np.einsum("ni,ni->n", dU, nu)
    tF = np.einsum("nij,nj->ni", P, dF)
    tG = np.einsum("nij,nj->ni", P, dG)
    line = V**3 * (2 * phi_nu**2 + (1 - u_nu) * np.einsum("ni,ni->n", tF, tF) - 2 / V * np.einsum("ni,ni->n", tF, tG))
    ref = math.fsum(A.boundary_weights * line)
    assert rhs == pytest.approx(ref, rel=1e-12)


def test_verify_identity_example():
    r = verify_case("euclidean-3", "ball3:1", "0.3*(x1^2+x2^2+x3^2)", 0.25, 0.5, "x1 + 0.2*x2*x3")
    assert r.passed and r.relative_residual <= 1e-6
    out = r.to_json()
    assert out["schema"] == "affine-reilly/report/1" and set(out["lhs_terms"]) == {"laplacian_sq", "hessian_sq", "ricci"}
    assert "lhs_terms" not in r.to_json(emit_terms=False)


@pytest.mark.parametrize("case", REILLY_CASES, ids=[c[1] for c in REILLY_CASES])
def test_matrix_row(case):
    triple, domain, u, phis = case
    n = catalog_triple(triple).dim
    for a, g in ((0.3, 0.7), (1.0 / (n - 1), 0.0)):
        r = verify_case(triple, domain, u, a, g, phis[0])
        assert r.relative_residual <= 1e-6, (domain, a, g)


def test_classical_rewrite():
    for triple, domain, phi in (("euclidean-3", "ellipsoid:1.5,1,1", "x1^2 - x2*x3"),
                                ("sphere-2", "cap:1.0471975511965976", "sin(x1)*cos(x2) + cos(x1)^2")):
        spec = parse_domain(domain)
        T = catalog_triple(triple)
        cmp = classical_reilly(T, build_domain(T, spec, 32), phi)
        assert cmp.rewrite_gap <= 1e-8
        assert cmp.mixed_form.passed and cmp.laplacian_form.passed


def test_conformal_examples():
    T = catalog_triple("euclidean-2")
    r = conformal_crosscheck(T, parse_domain("ball2:1"), "0", 0.7, "x1*x2 + x2^3")
    assert r.lhs_agreement == 0.0 or r.lhs_agreement <= 1e-15
    r = conformal_crosscheck(T, parse_domain("ball2:1"), "0.1*x1", 1.0, "x1*x2 + x2^3")
    assert r.passed and max(r.lhs_agreement, r.rhs_agreement) <= 1e-6
    S = catalog_triple("sphere-2")
    r = conformal_crosscheck(S, parse_domain("cap:1.0471975511965976"), "0.2*cos(x1)", 0.5, "sin(x1)*cos(x2)")
    assert r.passed and r.term_agreement <= 1e-6


def test_bochner_consistency_and_cauchy_schwarz():
    for triple, domain, u, phis in REILLY_CASES[:4] + REILLY_CASES[8:9]:
        C, A = setup(triple, domain, u, 0.3, 0.7)
        b = bochner_consistency(C, A, phis[0])
        scale = 1 + abs(b["direct"])
        assert abs(b["direct"] - b["divergence"]) <= 1e-7 * scale
        assert abs(b["divergence"] - b["flux"]) <= 1e-7 * scale
        assert cauchy_schwarz_gap(C, A, phis[1]) >= -1e-12


def test_refinement_decreases():
    C, _ = setup("sphere-2", "cap:1.0471975511965976", "0.2*cos(x1)", 0.3, 0.7, order=4)
    res = refinement_study(C, parse_domain("cap:1.0471975511965976"), "cos(x1)^3 + sin(x1)*cos(x2)")
    assert res[0] > res[1] > res[2] and res[-1] <= 1e-10


def test_assembly_must_match_triple():
    C, _ = setup("euclidean-2", "ball2:1", "0.1*x1", 0.0, 1.0)
    _, A = setup("euclidean-2", "ball2:1", "0.3*x2", 0.0, 1.0)
    with pytest.raises(ValueError):
        verify_identity(C, A, "x1")
