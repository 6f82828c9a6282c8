"""Term-by-term evaluation of the weighted Reilly-type integral identity.

For ``X = grad^D phi = V^{gamma-alpha} grad phi`` the identity reads

    int_Omega V^tau [ (lap^D phi)^2 - |hess^D phi|^2 - Ric^D(X, X) ]
        = int_Sigma V^tau [ H^D <X, nu>^2 + (h - gamma u_nu g)(grad^D phi, grad^D phi)
                            - 2 V^{-gamma} <grad^D phi, grad^D(V^gamma phi_nu)> ].

Every quantity on the right is computed on the boundary patches through the
induced metric; the tangential factor ``grad(V^gamma phi_nu)`` uses the
directly differentiated normal, not an ambient projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import field_dsl as dsl
from .boundary import BoundaryLocal
from .connection import AffineConnection, LocalConnection
from .domains import DomainAssembly, DomainSpec, build_domain, weighted_sum
from .field_dsl import Field
from .geometry import RiemannianTriple, catalog_triple

REPORT_SCHEMA = "affine-reilly/report/1"
DEFAULT_TOL = 1e-6


@dataclass
class ReillyReport:
    lhs_terms: dict[str, float]
    rhs_terms: dict[str, float]
    lhs: float
    rhs: float
    residual: float
    relative_residual: float
    quadrature_order: int
    tolerance: float = DEFAULT_TOL
    config: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.relative_residual <= self.tolerance)

    def to_json(self, emit_terms: bool = True) -> dict:
        out = {
            "schema": REPORT_SCHEMA,
            "kind": "reilly",
            "config": self.config,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "quadrature_order": self.quadrature_order,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }
        if emit_terms:
            out["lhs_terms"] = dict(self.lhs_terms)
            out["rhs_terms"] = dict(self.rhs_terms)
        return out


def _phi(phi, n: int) -> Field:
    return dsl.field(phi, n)


def _check_assembly(C: AffineConnection, A: DomainAssembly):
    if A.triple is not C.triple and A.triple.to_json() != C.triple.to_json():
        raise ValueError("domain assembly was built on a different triple")


def interior_integrands(C: AffineConnection, A: DomainAssembly, phi) -> dict[str, np.ndarray]:
    """Nodal values of the three interior integrands (weight ``V^tau`` included)."""
    phi = _phi(phi, C.triple.dim)
    L = LocalConnection(C, A.points)
    _, df, d2f = phi.jet(A.points, 2)
    lap = L.d_laplacian(df, d2f)
    hess = L.d_hessian(df, d2f)
    X = L.d_gradient(df)
    ric = np.einsum("ni,nij,nj->n", X, L.ricci_D_closed, X)
    w = L.Vpow(C.tau)
    return {
        "laplacian_sq": w * lap * lap,
        "hessian_sq": -w * L.norm2_bilinear(hess),
        "ricci": -w * ric,
    }


def evaluate_lhs(C: AffineConnection, A: DomainAssembly, phi) -> dict[str, float]:
    """Named interior terms; their sum is the left-hand side."""
    _check_assembly(C, A)
    return {k: weighted_sum(A.weights, v) for k, v in interior_integrands(C, A, phi).items()}


def _boundary_pieces(C: AffineConnection, b: BoundaryLocal, phi: Field) -> dict[str, np.ndarray]:
    a, c = C.alpha, C.gamma
    tau = C.tau
    u, du, _ = b.G.u_jet
    V = np.exp(u)
    _, df, d2f = phi.jet(b.X, 2)
    phi_nu = b.normal_derivative(df)
    scale = V ** (2 * (c - a))
    grad = b.tangential_gradient(df)  # upper index, parameter basis
    form = b.boundary_form(C.params)
    # d_a(V^gamma phi_nu) = V^gamma (gamma u_a phi_nu + d_a phi_nu)
    d_phinu = b.param_gradient_of_normal_derivative(df, d2f)
    d_mixed = V[:, None] ** c * (c * b.param_gradient(du) * phi_nu[:, None] + d_phinu)
    mixed = np.einsum("na,na->n", grad, d_mixed)
    Vt = V ** tau
    return {
        "mean_curvature": Vt * b.HD(C.params) * scale * phi_nu**2,
        "second_fundamental": Vt * scale * np.einsum("na,nab,nb->n", grad, form, grad),
        "mixed_tangential": -2.0 * Vt * V ** (-c) * scale * mixed,
    }


def evaluate_rhs(C: AffineConnection, A: DomainAssembly, phi) -> dict[str, float]:
    """Named boundary terms; their sum is the right-hand side."""
    _check_assembly(C, A)
    phi = _phi(phi, C.triple.dim)
    names = ("mean_curvature", "second_fundamental", "mixed_tangential")
    if not A.boundary:
        return {k: 0.0 for k in names}
    parts = [_boundary_pieces(C, bn.local, phi) for bn in A.boundary]
    w = A.boundary_weights
    return {k: weighted_sum(w, np.concatenate([p[k] for p in parts])) for k in names}


def _report(lhs_terms, rhs_terms, order, tol, config) -> ReillyReport:
    lhs = math.fsum(lhs_terms.values())
    rhs = math.fsum(rhs_terms.values())
    scale = 1.0 + max(abs(v) for v in list(lhs_terms.values()) + list(rhs_terms.values()))
    res = abs(lhs - rhs)
    return ReillyReport(dict(lhs_terms), dict(rhs_terms), lhs, rhs, res, res / scale, order, tol, config)


def _config(C: AffineConnection, A: DomainAssembly, phi: Field) -> dict:
    return {
        "triple": C.triple.name,
        "u": str(C.triple.u),
        "domain": A.spec.to_json(),
        "phi": str(phi),
        **C.params.to_json(),
    }


def verify_identity(C: AffineConnection, A: DomainAssembly, phi, tol: float = DEFAULT_TOL) -> ReillyReport:
    phi = _phi(phi, C.triple.dim)
    return _report(evaluate_lhs(C, A, phi), evaluate_rhs(C, A, phi), A.order, tol, _config(C, A, phi))


def verify_case(
    triple: str | RiemannianTriple,
    domain: str | DomainSpec,
    u,
    alpha: float,
    gamma: float,
    phi,
    order: int = 32,
    tol: float = DEFAULT_TOL,
) -> ReillyReport:
    """Convenience driver from catalog names."""
    from .domains import parse_domain

    spec = parse_domain(domain) if isinstance(domain, str) else domain
    if isinstance(triple, str):
        T = catalog_triple(triple, u)
    else:
        T = triple.with_weight(u)
    C = AffineConnection.of(T, alpha, gamma)
    A = build_domain(T, spec, order)
    return verify_identity(C, A, phi, tol)


# ---------------------------------------------------------------------------
# Classical limit and its integrated-by-parts boundary form
# ---------------------------------------------------------------------------


@dataclass
class ClassicalComparison:
    mixed_form: ReillyReport
    laplacian_form: ReillyReport
    rewrite_gap: float

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "classical",
            "mixed_form": self.mixed_form.to_json(),
            "laplacian_form": self.laplacian_form.to_json(),
            "rewrite_gap": self.rewrite_gap,
        }


def classical_reilly(T: RiemannianTriple, A: DomainAssembly, phi, tol: float = 1e-8) -> ClassicalComparison:
    """Unweighted identity with both boundary forms.

    The mixed term ``-2 <grad phi, grad phi_nu>`` integrates by parts on the
    closed boundary to ``+2 phi_nu lap_Sigma phi``; the two versions of the
    right-hand side must agree.
    """
    T0 = T.with_weight("0")
    C = AffineConnection.of(T0, 0.0, 0.0)
    A0 = A if A.triple is T0 else build_domain(T0, A.spec, A.order)
    phi = _phi(phi, T.dim)
    mixed = verify_identity(C, A0, phi, tol)
    terms = dict(mixed.rhs_terms)
    vals = []
    for bn in A0.boundary:
        b = bn.local
        _, df, d2f = phi.jet(b.X, 2)
        vals.append(2.0 * b.normal_derivative(df) * b.intrinsic_laplacian(df, d2f))
    terms.pop("mixed_tangential")
    terms["normal_laplacian"] = weighted_sum(A0.boundary_weights, np.concatenate(vals)) if vals else 0.0
    lap = _report(mixed.lhs_terms, terms, A0.order, tol, mixed.config)
    gap = abs(terms["normal_laplacian"] - mixed.rhs_terms["mixed_tangential"])
    gap /= 1.0 + max(abs(v) for v in list(mixed.lhs_terms.values()) + list(mixed.rhs_terms.values()))
    return ClassicalComparison(mixed, lap, gap)


# ---------------------------------------------------------------------------
# Conformal limit
# ---------------------------------------------------------------------------


@dataclass
class ConformalComparison:
    affine: ReillyReport
    rescaled: ReillyReport
    lhs_agreement: float
    rhs_agreement: float
    term_agreement: float
    tolerance: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return (
            self.affine.passed
            and self.rescaled.passed
            and max(self.lhs_agreement, self.rhs_agreement) <= self.tolerance
        )

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "conformal",
            "affine": self.affine.to_json(),
            "rescaled": self.rescaled.to_json(),
            "lhs_agreement": self.lhs_agreement,
            "rhs_agreement": self.rhs_agreement,
            "term_agreement": self.term_agreement,
            "passed": self.passed,
        }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def conformal_crosscheck(
    T: RiemannianTriple, A: DomainAssembly | DomainSpec, u, alpha: float, phi, tol: float = DEFAULT_TOL,
    order: int = 32,
) -> ConformalComparison:
    """Compare ``D^{alpha,-alpha}`` on ``(g, u)`` with Levi-Civita of ``exp(2 alpha u) g``.

    The rescaled triple is rebuilt from scratch, so its Christoffel symbols,
    curvature, normals and area elements are computed independently.
    """
    spec = A.spec if isinstance(A, DomainAssembly) else A
    order = A.order if isinstance(A, DomainAssembly) else order
    Tw = T.with_weight(u)
    C1 = AffineConnection.of(Tw, alpha, -alpha)
    A1 = build_domain(Tw, spec, order)
    r1 = verify_identity(C1, A1, phi, tol)
    exponent = dsl.mul(dsl.const(2.0 * alpha), Tw.u.expr)
    T2 = T.conformal(Field(exponent, T.dim))
    C2 = AffineConnection.of(T2, 0.0, 0.0)
    A2 = build_domain(T2, spec, order)
    r2 = verify_identity(C2, A2, phi, tol)
    terms = max(
        [_rel(r1.lhs_terms[k], r2.lhs_terms[k]) for k in r1.lhs_terms]
        + [_rel(r1.rhs_terms[k], r2.rhs_terms[k]) for k in r1.rhs_terms]
    )
    return ConformalComparison(r1, r2, _rel(r1.lhs, r2.lhs), _rel(r1.rhs, r2.rhs), terms, tol)


# ---------------------------------------------------------------------------
# Interior consistency checks
# ---------------------------------------------------------------------------


def bochner_consistency(C: AffineConnection, A: DomainAssembly, phi) -> dict[str, float]:
    """Left-hand side three ways.

    ``direct`` sums the interior terms, ``divergence`` integrates
    ``-V^tau D_i W^i`` with ``W = X^j D_j X - (div^D X) X`` from third
    derivatives, and ``flux`` is ``-int_Sigma V^tau <W, nu>``.
    """
    phi = _phi(phi, C.triple.dim)
    direct = math.fsum(evaluate_lhs(C, A, phi).values())
    L = LocalConnection(C, A.points)
    jet = phi.jet(A.points, 3)
    bt = L.bochner_terms(jet)
    divergence = weighted_sum(A.weights, -L.Vpow(C.tau) * bt["lhs"])
    flux_vals = []
    for bn in A.boundary:
        b = bn.local
        Lb = LocalConnection(C, b.X)
        _, df, d2f = phi.jet(b.X, 2)
        X = Lb.d_gradient(df)
        hess = Lb.d_hessian(df, d2f)
        W = np.einsum("nik,nkj,nj->ni", Lb.ginv, hess, X) - X * Lb.d_laplacian(df, d2f)[:, None]
        flux_vals.append(-Lb.Vpow(C.tau) * np.einsum("ni,nij,nj->n", W, Lb.g, b.nu))
    flux = weighted_sum(A.boundary_weights, np.concatenate(flux_vals)) if flux_vals else 0.0
    return {"direct": direct, "divergence": divergence, "flux": flux}


def cauchy_schwarz_gap(C: AffineConnection, A: DomainAssembly, phi) -> float:
    """``int V^tau |hess^D phi|^2 - (1/n) int V^tau (lap^D phi)^2``; nonnegative."""
    t = evaluate_lhs(C, A, phi)
    return -t["hessian_sq"] - t["laplacian_sq"] / C.triple.dim


def refinement_study(C: AffineConnection, spec: DomainSpec, phi, orders=(4, 8, 16, 32)) -> list[float]:
    """Relative residuals along a quadrature ladder."""
    return [verify_identity(C, build_domain(C.triple, spec, k), phi).relative_residual for k in orders]


# ---------------------------------------------------------------------------
# Test matrix
# ---------------------------------------------------------------------------

PARAM_PAIRS = ((0.0, 0.0), (0.0, 1.0), ("bakry", 0.0), (1.0, -1.0), (0.3, 0.7))


def param_pairs(n: int) -> list[tuple[float, float]]:
    """The five standard ``(alpha, gamma)`` pairs for dimension ``n``."""
    return [(1.0 / (n - 1) if a == "bakry" else float(a), float(g)) for a, g in PARAM_PAIRS]


# (triple, domain, weight u, test functions)
REILLY_CASES = (
    ("euclidean-3", "ball3:1", "0.3*(x1^2+x2^2+x3^2)",
     ("x1 + 0.2*x2*x3", "0.5*(x1^2+x2^2+x3^2) + x1*x3", "sin(x1)*cos(x2) + x3^3",
      "exp(0.3*x2)*x1")),
    ("euclidean-2", "ball2:1", "0.2*x1 + 0.1*x2^2",
     ("x1*x2 + x2^3", "cos(x1)*exp(x2)", "x1^4 - x2^2 + 0.5*x1")),
    ("euclidean-2", "annulus:0.5,1", "0.1*x1*x2",
     ("x1^2*x2 + x1", "sin(x1 + 2*x2)", "log(x1^2 + x2^2) + x2")),
    ("euclidean-3", "shell3:0.5,1", "0.2*x3 - 0.1*x1^2",
     ("x1*x2*x3 + x3^2", "cos(x1)*x2 + x3")),
    ("euclidean-3", "ellipsoid:1.5,1,1", "0.2*x1 + 0.1*x3^2",
     ("x1^2 - x2*x3", "sin(x2)*x1 + x3^3")),
    ("euclidean-2", "ellipse:1.5,1", "0.3*x1^2 - 0.2*x2",
     ("x1^3 + x1*x2", "exp(0.5*x1)*cos(x2)")),
    ("polar-2", "polar-disk:1", "0.3*x1^2",
     ("x1^2*cos(2*x2) + x1*sin(x2)", "x1^3*cos(x2) + x1^2")),
    ("polar-2", "polar-annulus:0.5,1.5", "0.1*x1*cos(x2)",
     ("x1*cos(x2) + x1^2", "log(x1)*sin(x2)")),
    ("sphere-2", "cap:1.0471975511965976", "0.2*cos(x1)",
     ("cos(x1)", "sin(x1)*cos(x2) + cos(x1)^2", "sin(x1)^2*sin(2*x2)")),
    ("sphere-2", "band:0.5,2", "0.1*sin(x1)*cos(x2) + 0.2*cos(x1)",
     ("sin(x1)*sin(x2)", "cos(x1)^3 + sin(x1)*cos(x2)")),
    ("hyperbolic-2", "hball:1", "0.2*x1 + 0.1*log(x2)",
     ("x1*x2 + x2^2", "exp(0.5*x1)*x2", "sin(x1)*x2^2")),
    ("warped", "warped-band:0.5,1.5", "0.1*x1^2 + 0.1*sin(x2)",
     ("x1^2*cos(x2)", "sinh(x1)*sin(2*x2) + x1")),
)


def reilly_matrix(functions_per_case: int = 2):
    """Yield ``(triple, domain, u, alpha, gamma, phi)`` for the standard matrix."""
    for triple, domain, u, phis in REILLY_CASES:
        n = catalog_triple(triple).dim
        for a, g in param_pairs(n):
            for phi in phis[:functions_per_case]:
                yield triple, domain, u, a, g, phi
