"""Curvature certificates and the integral inequalities they imply.

Certificates sample the relevant tensor at quadrature nodes and take the
smallest (generalized) eigenvalue; they are numerical evidence, not proofs.
A report whose certificate fails is marked ``hypotheses not met`` and makes
no claim about the inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import field_dsl as dsl
from .connection import AffineConnection, LocalConnection
from .domains import DomainAssembly, weighted_sum
from .pde import (
    DiscreteOperator,
    assemble_sturm_liouville,
    reduce_symmetric,
    solve_eigen,
)

REPORT_SCHEMA = "affine-reilly/report/1"
CERTIFICATE_NOTE = "sampled at quadrature nodes; numerical evidence, not a proof"

CONDITIONS = {
    "RicD>=0": ("volume", False),
    "RicD>0": ("volume", True),
    "RicD>=(n-1)V^(a-g)g": ("volume", False),
    "HD>0": ("boundary", True),
    "HD>=0": ("boundary", False),
    "h-g*u_nu*g>0": ("boundary", True),
    "h-g*u_nu*g>=0": ("boundary", False),
}

HOLDS = "holds"
VIOLATED = "violated"
NOT_MET = "hypotheses not met"


@dataclass
class CurvatureCertificate:
    condition: str
    margin: float
    samples: int
    worst_point: list[float] | None
    passed: bool
    tolerance: float

    def to_json(self) -> dict:
        return {
            "condition": self.condition,
            "margin": self.margin,
            "samples": self.samples,
            "worst_point": self.worst_point,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "note": CERTIFICATE_NOTE,
        }


def generalized_min_eigenvalue(B: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the symmetric pencil ``(B, G)`` at each node, ``G`` SPD."""
    Bs = 0.5 * (B + np.swapaxes(B, -1, -2))
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    S = Linv @ Bs @ np.swapaxes(Linv, -1, -2)
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))[..., 0]


def _volume_margins(C: AffineConnection, A: DomainAssembly, condition: str) -> np.ndarray:
    L = LocalConnection(C, A.points)
    ric = L.ricci_D_closed
    if condition == "RicD>=(n-1)V^(a-g)g":
        ric = ric - ((C.triple.dim - 1) * L.Vpow(C.alpha - C.gamma))[:, None, None] * L.g
    return generalized_min_eigenvalue(ric, L.g)


def _boundary_margins(C: AffineConnection, A: DomainAssembly, condition: str):
    vals, pts = [], []
    for bn in A.boundary:
        b = bn.local
        if condition.startswith("HD"):
            vals.append(b.HD(C.params))
        else:
            vals.append(generalized_min_eigenvalue(b.boundary_form(C.params), b.g_ind))
        pts.append(b.X)
    if not vals:
        return np.empty(0), np.empty((0, C.triple.dim))
    return np.concatenate(vals), np.concatenate(pts)


def certify(C: AffineConnection, A: DomainAssembly, condition: str, tol: float = 1e-10) -> CurvatureCertificate:
    """Minimum margin of ``condition`` over the relevant quadrature nodes.

    Strict conditions pass when the margin exceeds ``tol``; non-strict ones
    when it is at least ``-tol``.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; choose from {sorted(CONDITIONS)}")
    where, strict = CONDITIONS[condition]
    if where == "volume":
        m, pts = _volume_margins(C, A, condition), A.points
    else:
        m, pts = _boundary_margins(C, A, condition)
    if m.size == 0:
        return CurvatureCertificate(condition, math.inf, 0, None, True, tol)
    k = int(np.argmin(m))
    margin = float(m[k])
    ok = margin > tol if strict else margin >= -tol
    return CurvatureCertificate(condition, margin, int(m.size), [float(x) for x in pts[k]], bool(ok), tol)


@dataclass
class InequalityReport:
    """``slack = rhs - lhs`` is oriented so that ``slack >= 0`` means the inequality holds."""

    name: str
    lhs: float | None
    rhs: float | None
    slack: float | None
    relative_slack: float | None
    equality: bool
    status: str
    certificates: list[CurvatureCertificate]
    umbilicity_defect: float | None = None
    equality_tolerance: float = 1e-6
    details: dict = dc_field(default_factory=dict)

    @property
    def hypotheses_met(self) -> bool:
        return self.status != NOT_MET

    @property
    def holds(self) -> bool:
        return self.status == HOLDS

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "inequality",
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "relative_slack": self.relative_slack,
            "equality": self.equality,
            "status": self.status,
            "umbilicity_defect": self.umbilicity_defect,
            "equality_tolerance": self.equality_tolerance,
            "certificates": [c.to_json() for c in self.certificates],
            "details": self.details,
        }


def _max_defect(A: DomainAssembly) -> float | None:
    if not A.boundary:
        return None
    return float(max(np.max(bn.local.umbilicity_defect()) for bn in A.boundary))


def _finish(name, lhs, rhs, certs, A, eq_tol, details=None, abs_tol=None) -> InequalityReport:
    if not all(c.passed for c in certs):
        return InequalityReport(name, lhs, rhs, None if lhs is None or rhs is None else rhs - lhs, None, False,
                                NOT_MET, certs, _max_defect(A) if A is not None else None, eq_tol, details or {})
    slack = rhs - lhs
    scale = 1.0 + abs(rhs)
    tol = abs_tol if abs_tol is not None else eq_tol * scale
    equality = abs(slack) <= tol
    status = HOLDS if slack >= -tol else VIOLATED
    defect = _max_defect(A) if A is not None else None
    return InequalityReport(name, lhs, rhs, slack, slack / scale, bool(equality), status, certs, defect, eq_tol,
                            details or {})


def _vpow_volume(C: AffineConnection, A: DomainAssembly, e: float) -> float:
    return weighted_sum(A.weights, np.exp(e * C.triple.u.eval_many(A.points)))


def _boundary_nodal(C: AffineConnection, A: DomainAssembly, fn) -> np.ndarray:
    return np.concatenate([fn(bn.local, np.exp(bn.local.G.u_jet[0])) for bn in A.boundary])


def heintze_karcher(C: AffineConnection, A: DomainAssembly, eq_tol: float = 1e-6) -> InequalityReport:
    """``n int V^tau <= (n-1) int_Sigma V^tau / H^D`` under ``Ric^D >= 0`` and ``H^D > 0``."""
    n, tau = C.triple.dim, C.tau
    certs = [certify(C, A, "RicD>=0"), certify(C, A, "HD>0")]
    if not A.boundary:
        raise ValueError("Heintze-Karcher needs a domain with boundary")
    lhs = n * _vpow_volume(C, A, tau)
    rhs = None
    if certs[1].passed:
        vals = _boundary_nodal(C, A, lambda b, V: V**tau / b.HD(C.params))
        rhs = (n - 1) * weighted_sum(A.boundary_weights, vals)
    return _finish("heintze-karcher", lhs, rhs, certs, A, eq_tol)


def minkowski(C: AffineConnection, A: DomainAssembly, eq_tol: float = 1e-6) -> InequalityReport:
    """``(int_Sigma V^{tau-alpha})^2 >= n/(n-1) int V^tau int_Sigma H^D V^{tau-2 alpha}``."""
    n, tau, a = C.triple.dim, C.tau, C.alpha
    if not A.boundary:
        raise ValueError("Minkowski needs a domain with boundary")
    certs = [certify(C, A, "RicD>=0"), certify(C, A, "h-g*u_nu*g>0")]
    area_w = weighted_sum(A.boundary_weights, _boundary_nodal(C, A, lambda b, V: V ** (tau - a)))
    mean_w = weighted_sum(A.boundary_weights, _boundary_nodal(C, A, lambda b, V: b.HD(C.params) * V ** (tau - 2 * a)))
    vol = _vpow_volume(C, A, tau)
    lhs = n / (n - 1) * vol * mean_w
    rhs = area_w**2
    return _finish("minkowski", lhs, rhs, certs, A, eq_tol)


def lichnerowicz(
    C: AffineConnection,
    A: DomainAssembly,
    which: str,
    nodes: int = 2000,
    op: DiscreteOperator | None = None,
    eq_tol: float = 1e-3,
) -> InequalityReport:
    """``lambda_1 >= n`` under ``Ric^D >= (n-1) V^{alpha-gamma} g`` and the boundary condition of ``which``.

    The eigenvalue comes from the symmetric reduction (``op`` may be supplied
    instead); it is only computed when the hypotheses are certified.
    """
    n = C.triple.dim
    certs = [certify(C, A, "RicD>=(n-1)V^(a-g)g")]
    if which == "closed":
        if A.boundary:
            raise ValueError("closed eigenvalues need a boundaryless domain")
    elif which == "dirichlet":
        certs.append(certify(C, A, "HD>=0"))
    elif which == "neumann":
        certs.append(certify(C, A, "h-g*u_nu*g>=0"))
    else:
        raise ValueError(f"unknown eigenvalue problem {which!r}")
    details = {"which": which}
    if not all(c.passed for c in certs):
        return _finish("lichnerowicz", float(n), None, certs, A, eq_tol, details)
    if op is None:
        op = assemble_sturm_liouville(reduce_symmetric(C, A.spec), nodes, which)
    eig = solve_eigen(op, which)
    details.update(eig.to_json())
    return _finish("lichnerowicz", float(n), eig.lambda1, certs, A, eq_tol, details, abs_tol=eq_tol * n)


def poincare(C: AffineConnection, A: DomainAssembly, f, case: str, eq_tol: float = 1e-6) -> InequalityReport:
    """``n/(n-1) int f^2 V^tau <= int <(Ric^D)^{-1} grad f, grad f> V^tau``.

    ``case`` is ``i`` (closed, mean-zero), ``ii`` (``f = 0`` on the boundary,
    ``H^D >= 0``) or ``iii`` (mean-zero, ``h - gamma u_nu g >= 0``).  Mean-zero
    cases subtract the ``V^tau``-weighted mean of ``f`` first.
    """
    n, tau = C.triple.dim, C.tau
    fld = dsl.field(f, n)
    certs = [certify(C, A, "RicD>0")]
    details = {"case": case}
    if case == "i":
        if A.boundary:
            raise ValueError("case i needs a closed domain")
    elif case == "ii":
        if not A.boundary:
            raise ValueError("case ii needs a boundary")
        certs.append(certify(C, A, "HD>=0"))
        fb = np.concatenate([fld.eval_many(bn.points) for bn in A.boundary])
        fin = fld.eval_many(A.points)
        bound = float(np.max(np.abs(fb)))
        ok = bound <= 1e-10 * max(1.0, float(np.max(np.abs(fin))))
        certs.append(CurvatureCertificate("f=0 on boundary", -bound, int(fb.size), None, bool(ok), 1e-10))
    elif case == "iii":
        if not A.boundary:
            raise ValueError("case iii needs a boundary")
        certs.append(certify(C, A, "h-g*u_nu*g>=0"))
    else:
        raise ValueError(f"unknown case {case!r}")
    L = LocalConnection(C, A.points)
    Vt = L.Vpow(tau)
    v, df = fld.jet(A.points, 1)
    if case in ("i", "iii"):
        mean = weighted_sum(A.weights, v * Vt) / weighted_sum(A.weights, Vt)
        v = v - mean
        details["removed_mean"] = mean
    lhs = n / (n - 1) * weighted_sum(A.weights, v * v * Vt)
    rhs = None
    if certs[0].passed:
        ric = 0.5 * (L.ricci_D_closed + np.swapaxes(L.ricci_D_closed, 1, 2))
        Lc = np.linalg.cholesky(ric)
        y = np.linalg.solve(Lc, df[..., None])[..., 0]
        rhs = weighted_sum(A.weights, np.einsum("ni,ni->n", y, y) * Vt)
    return _finish("poincare", lhs, rhs, certs, A, eq_tol, details)


@dataclass
class EqualityDiagnostics:
    umbilicity_defect: float | None
    traceless_hessian: float | None

    def to_json(self) -> dict:
        return {"umbilicity_defect": self.umbilicity_defect, "traceless_hessian": self.traceless_hessian}


def traceless_d_hessian(C: AffineConnection, points: np.ndarray, phi) -> np.ndarray:
    """``| hess^D phi - (lap^D phi / n) g |`` at each point."""
    fld = phi if hasattr(phi, "jet") and not isinstance(phi, str) else dsl.field(phi, C.triple.dim)
    L = LocalConnection(C, points)
    _, df, d2f = fld.jet(points, 2)
    B = L.d_hessian(df, d2f) - (L.d_laplacian(df, d2f) / C.triple.dim)[:, None, None] * L.g
    return np.sqrt(np.maximum(L.norm2_bilinear(B), 0.0))


def equality_diagnostics(
    report: InequalityReport | None, A: DomainAssembly, C: AffineConnection | None = None, phi=None,
    points: np.ndarray | None = None,
) -> EqualityDiagnostics:
    """Boundary umbilicity defect and, given a solution ``phi``, the traceless D-Hessian over ``Omega``."""
    defect = report.umbilicity_defect if report is not None and report.umbilicity_defect is not None else _max_defect(A)
    tl = None
    if phi is not None:
        if C is None:
            raise ValueError("the traceless Hessian needs the connection")
        pts = A.points if points is None else points
        tl = float(np.max(traceless_d_hessian(C, pts, phi)))
    return EqualityDiagnostics(defect, tl)


def quadric_dirichlet_solution(axes) -> str:
    """Exact solution of ``lap phi = 1``, ``phi = 0`` on the ellipsoid with semi-axes ``axes`` (flat, u = 0)."""
    inv = [1.0 / float(a) ** 2 for a in axes]
    s = sum(inv)
    terms = " + ".join(f"{c!r}*x{k + 1}^2" for k, c in enumerate(inv))
    return f"({terms} - 1)/{2 * s!r}"
