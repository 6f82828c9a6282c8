"""Discrete affine Laplacian: boundary-value problems and first eigenvalues.

Two discretizations share one operator type:

* a Sturm-Liouville reduction ``-(w f')'/m`` for rotationally symmetric
  configurations, with ``w = V^{tau+gamma-alpha} J`` and ``m = V^tau J``
  (``J`` the area of the level set), on a vertex grid with fluxes at
  half-nodes; geometric axes carry a no-flux half cell;
* a tensor grid on a chart rectangle assembled from the energy
  ``int V^{tau+gamma-alpha} |grad f|^2 dOmega`` (edge terms for the diagonal
  of the metric, cell-centre gradients for the off-diagonal part).

Both give ``Op = M^{-1} K`` with ``K`` symmetric and ``M`` diagonal, so
``Op`` is self-adjoint for the ``V^tau``-weighted inner product.  The
discrete affine Laplacian is ``-Op``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from . import field_dsl as dsl
from .connection import AffineConnection, ConnectionParams, LocalConnection
from .domains import DomainAssembly, DomainSpec, build_domain, integrate_boundary, integrate_volume, weighted_sum
from .field_dsl import Field
from .geometry import LocalGeometry, RiemannianTriple


class SolverError(RuntimeError):
    pass


class IncompatibleData(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


BCS = ("dirichlet", "neumann", "closed")


# ---------------------------------------------------------------------------
# Sturm-Liouville reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SturmLiouville:
    """``-(w f')'/m + mu q f / m`` on ``[a, b]`` with ``w, m, q`` built from ``V(s)`` and ``J(s)``.

    ``mode_eigenvalue`` selects an angular sector: the level sets are round
    spheres of radius ``rho(s)`` and ``mu`` is an eigenvalue of the unit
    sphere (0 for symmetric functions, ``n - 1`` for the first harmonics).
    """

    interval: tuple[float, float]
    axis: tuple[bool, bool]
    dim: int
    params: ConnectionParams
    u: Field
    area: Field
    sphere_area: float = 1.0
    mode_eigenvalue: float = 0.0
    coordinate: Field | None = None
    ray: tuple[Field, ...] | None = None
    name: str = ""

    @property
    def flux_exponent(self) -> float:
        """``tau + gamma - alpha``, equal to ``n alpha + 2 gamma``."""
        p = self.params
        return p.tau + p.gamma - p.alpha

    def _eval(self, f: Field, s) -> np.ndarray:
        return f.eval_many(np.asarray(s, dtype=float).reshape(-1, 1))

    def V(self, s) -> np.ndarray:
        return np.exp(self._eval(self.u, s))

    def J(self, s) -> np.ndarray:
        return self._eval(self.area, s)

    def w(self, s) -> np.ndarray:
        return self.V(s) ** self.flux_exponent * self.J(s)

    def m(self, s) -> np.ndarray:
        return self.V(s) ** self.params.tau * self.J(s)

    def boundary_weight(self, s) -> np.ndarray:
        """``V^{tau-alpha} J`` at an end point (the Neumann data carrier)."""
        return self.V(s) ** (self.params.tau - self.params.alpha) * self.J(s)

    def rho(self, s) -> np.ndarray:
        if self.dim < 2:
            return np.ones_like(np.asarray(s, dtype=float))
        return (self.J(s) / self.sphere_area) ** (1.0 / (self.dim - 1))

    def q(self, s) -> np.ndarray:
        if self.mode_eigenvalue == 0.0:
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.mode_eigenvalue * self.w(s) / self.rho(s) ** 2

    def with_mode(self, mu: float) -> "SturmLiouville":
        return SturmLiouville(
            self.interval, self.axis, self.dim, self.params, self.u, self.area, self.sphere_area, float(mu),
            self.coordinate, self.ray, self.name,
        )

    def points(self, s) -> np.ndarray | None:
        if self.ray is None:
            return None
        S = np.asarray(s, dtype=float).reshape(-1, 1)
        return np.stack([f.eval_many(S) for f in self.ray], axis=1)


def _unit_sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def reduce_symmetric(C: AffineConnection, spec: DomainSpec, check: bool = True) -> SturmLiouville:
    """Rotationally symmetric reduction of ``-lap^D`` on a catalog domain.

    Rejects configurations whose weight is not a function of the radial
    coordinate, or whose triple does not match the domain's area model.
    """
    T = C.triple
    R = spec.radial
    if R is None:
        raise NotSymmetric(f"domain {spec.name} has no symmetric reduction")
    if spec.dim != T.dim:
        raise NotSymmetric("domain and triple dimensions differ")
    u_s = T.u.compose(R.ray)
    area = R.area(T)
    if check:
        A = build_domain(T, spec, 6)
        s = R.coordinate.eval_many(A.points)
        if np.max(np.abs(T.u.eval_many(A.points) - u_s.eval_many(s[:, None]))) > 1e-10:
            raise NotSymmetric("weight u is not a function of the radial coordinate")
        vol_sl = _composite_gauss(lambda x: area.eval_many(x[:, None]), *R.interval, 64)
        vol = sum(A.weights)
        if abs(vol_sl - vol) > 1e-8 * max(1.0, vol):
            raise NotSymmetric(f"area model disagrees with the triple ({vol_sl} vs {vol})")
    return SturmLiouville(
        R.interval, (R.axis_at_start, R.axis_at_end), T.dim, C.params, u_s, area,
        _unit_sphere_area(T.dim), 0.0, R.coordinate, R.ray, spec.name,
    )


def interval_problem(length: float, u="0", alpha: float = 0.0, gamma: float = 0.0) -> SturmLiouville:
    """Flat segment ``[0, length]`` (dimension one, no axis, ``J = 1``)."""
    params = ConnectionParams(float(alpha), float(gamma), 1)
    s = dsl.parse("x1", 1)
    return SturmLiouville(
        (0.0, float(length)), (False, False), 1, params, dsl.field(u, 1), dsl.parse("1", 1), 1.0, 0.0, s, (s,),
        f"interval:{length}",
    )


_G4 = np.polynomial.legendre.leggauss(4)


def _composite_gauss(fun: Callable[[np.ndarray], np.ndarray], a: float, b: float, cells: int) -> float:
    edges = np.linspace(a, b, cells + 1)
    x, wq = _G4
    lo, hi = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]
    wts = 0.5 * (hi - lo) * wq[None, :]
    return math.fsum((fun(pts.ravel()) * wts.ravel()).tolist())


def _cell_integrals(fun: Callable[[np.ndarray], np.ndarray], edges: np.ndarray) -> np.ndarray:
    """``int`` of ``fun`` over each interval ``[edges[i], edges[i+1]]`` (4-point Gauss)."""
    x, wq = _G4
    lo, hi = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]
    vals = fun(pts.ravel()).reshape(pts.shape)
    return np.sum(vals * wq[None, :], axis=1) * 0.5 * (hi[:, 0] - lo[:, 0])


# ---------------------------------------------------------------------------
# Operator type
# ---------------------------------------------------------------------------


@dataclass
class DiscreteOperator:
    """``Op = M^{-1} K`` approximating ``-V^{-tau} div(V^{tau+gamma-alpha} grad f)``.

    ``free`` marks unknowns (Dirichlet nodes are eliminated), ``interior``
    marks rows whose stencil does not touch a boundary, ``bflux`` carries
    ``V^{tau-alpha} dA`` at boundary nodes for Neumann data.
    """

    K: sp.csr_matrix
    mass: np.ndarray
    free: np.ndarray
    interior: np.ndarray
    bflux: np.ndarray
    coords: np.ndarray
    points: np.ndarray | None
    bc: str
    kind: str
    source: object = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.mass.shape[0]

    @property
    def singular(self) -> bool:
        return self.bc in ("neumann", "closed") and bool(np.all(self.free)) and self.meta.get("mode", 0.0) == 0.0

    def matvec(self, f: np.ndarray) -> np.ndarray:
        return (self.K @ f) / self.mass

    def d_laplacian(self, f: np.ndarray) -> np.ndarray:
        """Discrete ``lap^D f`` at every node (meaningful on ``interior`` rows)."""
        return -self.matvec(f)

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.dot(self.mass * x, y))

    def weighted_mean(self, f: np.ndarray) -> float:
        return float(np.dot(self.mass, f) / self.mass.sum())

    def symmetry_defect(self, trials: int = 5, seed: int = 0) -> float:
        """Max relative ``|<Op x, y> - <x, Op y>|`` in the ``V^tau`` inner product."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            x = np.where(self.free, rng.standard_normal(self.size), 0.0)
            y = np.where(self.free, rng.standard_normal(self.size), 0.0)
            a = self.inner(self.matvec(x), y)
            b = self.inner(x, self.matvec(y))
            scale = math.sqrt(self.inner(self.matvec(x), self.matvec(x)) * self.inner(y, y)) or 1.0
            worst = max(worst, abs(a - b) / scale)
        return worst

    def sample(self, f) -> np.ndarray:
        """Nodal values of ``f`` (Field in the reduction variable or the chart, callable, number, array)."""
        if isinstance(f, np.ndarray):
            if f.shape != (self.size,):
                raise ValueError("nodal array has the wrong length")
            return f.astype(float)
        if isinstance(f, (int, float)):
            return np.full(self.size, float(f))
        if isinstance(f, str):
            f = dsl.parse(f, self._field_dim())
        if isinstance(f, Field):
            if f.dim == self.coords.shape[1]:
                return f.eval_many(self.coords)
            if self.points is not None and f.dim == self.points.shape[1]:
                return f.eval_many(self.points)
            raise ValueError("field dimension does not match the operator")
        return np.asarray(f(self.coords), dtype=float)

    def _field_dim(self) -> int:
        return self.points.shape[1] if self.points is not None else self.coords.shape[1]

    def integral(self, f) -> float:
        """``int f V^tau dOmega`` for a field (high-order for the reduction, lumped otherwise)."""
        sl = self.source
        if isinstance(sl, SturmLiouville) and not isinstance(f, np.ndarray):
            if isinstance(f, (int, float)):
                fn = lambda s: np.full_like(s, float(f))
            elif isinstance(f, (str, Field)):
                fld = dsl.parse(f, self._field_dim()) if isinstance(f, str) else f
                if fld.dim == 1:
                    fn = lambda s: fld.eval_many(s[:, None])
                else:
                    fn = lambda s: fld.eval_many(sl.points(s))
            else:
                fn = lambda s: np.asarray(f(s[:, None]), dtype=float)
            a, b = sl.interval
            return _composite_gauss(lambda s: fn(s) * sl.m(s), a, b, 256)
        return weighted_sum(self.mass, self.sample(f))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble_sturm_liouville(sl: SturmLiouville, nodes: int, bc: str) -> DiscreteOperator:
    """Vertex-grid finite volumes with ``nodes`` points including both ends.

    ``bc`` applies at regular (non-axis) ends; ``closed`` requires both ends
    to be axes.  Axis ends are no-flux for the symmetric sector and pinned
    to zero for angular sectors.
    """
    if bc not in BCS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if nodes < 3:
        raise ValueError("need at least three nodes")
    a, b = sl.interval
    if bc == "closed" and not all(sl.axis):
        raise ValueError("closed problems need axis endpoints on both sides")
    if bc != "closed" and all(sl.axis):
        raise ValueError("domain has no boundary; use bc='closed'")
    s = np.linspace(a, b, nodes)
    h = (b - a) / (nodes - 1)
    mid = 0.5 * (s[:-1] + s[1:])
    wh = sl.w(mid) / h
    main = np.zeros(nodes)
    main[:-1] += wh
    main[1:] += wh
    edges = np.concatenate([[a], mid, [b]])
    mass = _cell_integrals(sl.m, edges)
    mode = sl.mode_eigenvalue
    if mode:
        inner_edges = edges.copy()
        q = np.zeros(nodes)
        ok = np.ones(nodes, dtype=bool)
        if sl.axis[0]:
            ok[0] = False
        if sl.axis[1]:
            ok[-1] = False
        q[ok] = _cell_integrals(sl.q, inner_edges)[ok]
        main += q
    K = sp.diags([main, -wh, -wh], [0, 1, -1], format="csr")
    free = np.ones(nodes, dtype=bool)
    bflux = np.zeros(nodes)
    for end, idx in ((0, 0), (1, -1)):
        if sl.axis[end]:
            if mode:
                free[idx] = False
            continue
        if bc == "dirichlet":
            free[idx] = False
        bflux[idx] = sl.boundary_weight(np.array([s[idx]]))[0]
    interior = np.ones(nodes, dtype=bool)
    interior[0] = interior[-1] = False
    pts = sl.points(s)
    return DiscreteOperator(
        K, mass, free, interior, bflux, s[:, None], pts, bc, "sturm-liouville", sl,
        {"nodes": nodes, "h": h, "mode": mode, "interval": [a, b], "name": sl.name},
    )


def _grid_axis(a: float, b: float, n: int, periodic: bool):
    if periodic:
        h = (b - a) / n
        return a + h * np.arange(n), h
    return np.linspace(a, b, n), (b - a) / (n - 1)


def assemble_grid(
    C: AffineConnection,
    box: Sequence[tuple[float, float]],
    sizes: Sequence[int],
    bcs: Sequence[str],
) -> DiscreteOperator:
    """Energy-form operator on a 2-D chart rectangle.

    ``bcs[k]`` is ``dirichlet``, ``neumann`` (zero flux) or ``periodic`` for
    axis ``k``.  Coefficients ``V^{tau+gamma-alpha} sqrt(det g) g^{ij}`` are
    sampled at edge midpoints (diagonal terms) and cell centres (cross terms).
    """
    T = C.triple
    if T.dim != 2 or len(box) != 2:
        raise ValueError("grid solver is two-dimensional")
    for bc in bcs:
        if bc not in ("dirichlet", "neumann", "periodic"):
            raise ValueError(f"unknown grid boundary condition {bc!r}")
    per = [bc == "periodic" for bc in bcs]
    ax = [_grid_axis(box[k][0], box[k][1], sizes[k], per[k]) for k in range(2)]
    (x1, h1), (x2, h2) = ax
    n1, n2 = len(x1), len(x2)
    idx = np.arange(n1 * n2).reshape(n1, n2)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    nodes = np.stack([X1.ravel(), X2.ravel()], axis=1)
    e = C.tau + C.gamma - C.alpha

    def coeff(pts):
        L = LocalConnection(C, pts)
        return (L.Vpow(e) * L.sqrt_det)[:, None, None] * L.ginv, L.Vpow(C.tau) * L.sqrt_det

    def shifted(k):
        return (np.arange(k) + 1) % k

    # half-widths for the dual cell of each node
    def duals(n, h, periodic):
        d = np.full(n, h)
        if not periodic:
            d[0] = d[-1] = 0.5 * h
        return d

    d1, d2 = duals(n1, h1, per[0]), duals(n2, h2, per[1])
    rows, cols, vals = [], [], []

    def add_pair(i, j, c):
        rows.extend([i, j, i, j])
        cols.extend([i, j, j, i])
        vals.extend([c, c, -c, -c])

    # edges along axis 0
    m1 = n1 if per[0] else n1 - 1
    i0 = np.arange(m1)
    i1 = (i0 + 1) % n1
    mids = np.stack(
        [np.repeat(x1[i0] + 0.5 * h1, n2), np.tile(x2, m1)], axis=1
    )
    k_e, _ = coeff(mids)
    c0 = k_e[:, 0, 0] * np.tile(d2, m1) / h1
    A_idx = idx[i0].ravel()
    B_idx = idx[i1].ravel()
    for a_, b_, c in zip(A_idx, B_idx, c0):
        add_pair(a_, b_, c)
    # edges along axis 1
    m2 = n2 if per[1] else n2 - 1
    j0 = np.arange(m2)
    j1 = (j0 + 1) % n2
    mids = np.stack([np.repeat(x1, m2), np.tile(x2[j0] + 0.5 * h2, n1)], axis=1)
    k_e, _ = coeff(mids)
    c1 = k_e[:, 1, 1] * np.repeat(d1, m2) / h2
    for a_, b_, c in zip(idx[:, j0].ravel(), idx[:, j1].ravel(), c1):
        add_pair(a_, b_, c)
    # cross terms at cell centres
    I0, J0 = np.meshgrid(i0, j0, indexing="ij")
    I1, J1 = (I0 + 1) % n1, (J0 + 1) % n2
    centres = np.stack([(x1[I0] + 0.5 * h1).ravel(), (x2[J0] + 0.5 * h2).ravel()], axis=1)
    k_c, _ = coeff(centres)
    k01 = k_c[:, 0, 1]
    if np.any(np.abs(k01) > 0):
        corners = np.stack([idx[I0, J0].ravel(), idx[I1, J0].ravel(), idx[I0, J1].ravel(), idx[I1, J1].ravel()], 1)
        ga = np.array([-1.0, 1.0, -1.0, 1.0]) / (2 * h1)
        gb = np.array([-1.0, -1.0, 1.0, 1.0]) / (2 * h2)
        local = np.outer(ga, gb) + np.outer(gb, ga)
        for cell, kv in zip(corners, k01 * h1 * h2):
            for p in range(4):
                for q in range(4):
                    rows.append(cell[p])
                    cols.append(cell[q])
                    vals.append(kv * local[p, q])
    N = n1 * n2
    K = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    K.sum_duplicates()
    _, m_nodes = coeff(nodes)
    mass = m_nodes * np.outer(d1, d2).ravel()
    on_edge = np.zeros((n1, n2), dtype=bool)
    free = np.ones((n1, n2), dtype=bool)
    for k in range(2):
        if per[k]:
            continue
        sl = [slice(None), slice(None)]
        for end in (0, -1):
            sl[k] = end
            on_edge[tuple(sl)] = True
            if bcs[k] == "dirichlet":
                free[tuple(sl)] = False
    interior = ~on_edge.ravel()
    bc = "dirichlet" if any(b == "dirichlet" for b in bcs) else ("closed" if all(per) else "neumann")
    return DiscreteOperator(
        K, mass, free.ravel(), interior, np.zeros(N), nodes, nodes, bc, "grid", C,
        {"sizes": [n1, n2], "h": [h1, h2], "bcs": list(bcs), "mode": 0.0},
    )


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    relative_residual: float


def pcg(A, b: np.ndarray, tol: float = 1e-12, maxiter: int | None = None, x0=None, deflate=None) -> CGResult:
    """Jacobi-preconditioned conjugate gradients for symmetric positive (semi)definite ``A``.

    ``deflate`` projects iterates onto the complement of a known null space
    (singular Neumann/closed systems with compatible right-hand sides).
    Raises :class:`SolverError` if the true relative residual does not reach
    ``tol`` within ``maxiter`` iterations.
    """
    n = b.shape[0]
    maxiter = maxiter or max(20 * n, 2000)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a nonpositive diagonal entry")
    Dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    r = b - A @ x
    z = Dinv * r
    if deflate is not None:
        z = deflate(z)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    rel = np.linalg.norm(r) / bnorm
    while it < maxiter:
        if rel <= tol:
            break
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break
        step = rz / pAp
        x += step * p
        r -= step * Ap
        it += 1
        if it % 50 == 0:
            r = b - A @ x
        rel = np.linalg.norm(r) / bnorm
        z = Dinv * r
        if deflate is not None:
            z = deflate(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = float(np.linalg.norm(b - A @ x) / bnorm)
    if rel > tol:
        raise SolverError(f"conjugate gradients stalled at relative residual {rel:.3e} after {it} iterations")
    return CGResult(x, it, rel)


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


@dataclass
class Solution:
    op: DiscreteOperator
    values: np.ndarray
    residual: float
    iterations: int
    problem: str
    c: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        ncoord = self.op.coords.shape[1]
        npt = 0 if self.op.points is None else self.op.points.shape[1]
        head = [f"s{k + 1}" for k in range(ncoord)] if self.op.kind == "sturm-liouville" else []
        head += [f"x{k + 1}" for k in range(npt)] + ["value"]
        wr.writerow(head)
        for i in range(self.op.size):
            row = list(self.op.coords[i]) if self.op.kind == "sturm-liouville" else []
            if npt:
                row += list(self.op.points[i])
            row.append(self.values[i])
            wr.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def metadata(self) -> dict:
        out = {
            "problem": self.problem,
            "bc": self.op.bc,
            "discretization": self.op.kind,
            "nodes": int(self.op.size),
            "residual": self.residual,
            "iterations": self.iterations,
            **self.meta,
        }
        if self.c is not None:
            out["c"] = self.c
        return out

    def interpolant(self) -> "RadialInterpolant":
        if self.op.kind != "sturm-liouville":
            raise ValueError("interpolants are provided for the symmetric reduction")
        return RadialInterpolant.from_solution(self)


class RadialInterpolant:
    """Cubic-spline interpolant of a reduced solution composed with the radial coordinate.

    Exposes ``jet(points, order)`` so it can be fed to the pointwise
    operators of :mod:`affine_reilly.connection`.
    """

    def __init__(self, s: np.ndarray, values: np.ndarray, coordinate: Field, axis_start: bool = False):
        bc = ((1, 0.0), "not-a-knot") if axis_start else "not-a-knot"
        self.spline = CubicSpline(s, values, bc_type=bc)
        self.coordinate = coordinate
        self.dim = coordinate.dim

    @classmethod
    def from_solution(cls, sol: Solution) -> "RadialInterpolant":
        sl = sol.op.source
        coord = sl.coordinate if sl.dim > 1 else dsl.parse("x1", 1)
        return cls(sol.op.coords[:, 0], sol.values, coord, sl.axis[0])

    def __call__(self, s):
        return self.spline(s)

    def jet(self, points: np.ndarray, order: int = 2) -> list[np.ndarray]:
        if order > 3:
            raise ValueError("order at most 3")
        sj = self.coordinate.jet(points, order)
        s = sj[0]
        f = [self.spline(s, k) for k in range(order + 1)]
        out = [f[0]]
        if order >= 1:
            out.append(f[1][:, None] * sj[1])
        if order >= 2:
            out.append(f[2][:, None, None] * np.einsum("ni,nj->nij", sj[1], sj[1]) + f[1][:, None, None] * sj[2])
        if order >= 3:
            d1, d2, d3 = sj[1], sj[2], sj[3]
            t = f[3][:, None, None, None] * np.einsum("ni,nj,nk->nijk", d1, d1, d1)
            t += f[2][:, None, None, None] * (
                np.einsum("nij,nk->nijk", d2, d1) + np.einsum("nik,nj->nijk", d2, d1) + np.einsum("njk,ni->nijk", d2, d1)
            )
            t += f[1][:, None, None, None] * d3
            out.append(t)
        return out


class LinearSolver:
    """Solver for ``K_ff x = b`` on the free nodes.

    ``method="direct"`` factors once (sparse LU, one unknown pinned when the
    system is singular) and applies one step of iterative refinement;
    ``method="cg"`` runs :func:`pcg`.
    """

    def __init__(self, op: DiscreteOperator, method: str = "direct", tol: float = 1e-12):
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {method!r}")
        self.op = op
        self.method = method
        self.tol = tol
        f = op.free
        self.Kff = op.K[f][:, f].tocsr()
        self.singular = op.singular
        self._lu = None
        if method == "direct":
            A = self.Kff[:-1, :-1] if self.singular else self.Kff
            self._lu = spla.splu(A.tocsc())

    def _direct(self, b: np.ndarray) -> np.ndarray:
        if self.singular:
            x = np.zeros_like(b)
            x[:-1] = self._lu.solve(b[:-1])
            return x
        return self._lu.solve(b)

    def solve(self, b: np.ndarray) -> CGResult:
        if self.singular:
            b = b - b.mean()  # consistency with the constant null vector of K
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return CGResult(np.zeros_like(b), 0, 0.0)
        if self.method == "cg":
            return pcg(self.Kff, b, self.tol)
        x = self._direct(b)
        r = b - self.Kff @ x
        x += self._direct(r - r.mean() if self.singular else r)
        rel = float(np.linalg.norm(b - self.Kff @ x) / bnorm)
        return CGResult(x, 1, rel)


def _solve_free(op: DiscreteOperator, rhs_full: np.ndarray, fixed: np.ndarray, tol: float, method: str):
    """Solve ``K x = rhs`` on free nodes with ``x = fixed`` elsewhere."""
    f = op.free
    b = rhs_full[f] - op.K[f][:, ~f] @ fixed[~f]
    res = LinearSolver(op, method, tol).solve(b)
    x = fixed.copy()
    x[f] = res.x
    return x, res


def solve_dirichlet(
    op: DiscreteOperator, rhs=1.0, boundary_value: float = 0.0, tol: float = 1e-12, method: str = "direct"
) -> Solution:
    """``lap^D phi = rhs`` with ``phi = boundary_value`` on the boundary."""
    if op.bc != "dirichlet":
        raise ValueError("operator was not assembled with Dirichlet conditions")
    g = op.sample(rhs)
    fixed = np.where(op.free, 0.0, float(boundary_value))
    x, res = _solve_free(op, -op.mass * g, fixed, tol, method)
    return Solution(op, x, _discrete_residual(op, x, g), res.iterations, "dirichlet")


def _discrete_residual(op: DiscreteOperator, x: np.ndarray, g: np.ndarray, c: float = 0.0) -> float:
    """Relative residual of ``-K x = M g - c B`` on free rows."""
    r = (-(op.K @ x) - op.mass * g + c * op.bflux)[op.free]
    scale = np.linalg.norm((op.mass * g)[op.free]) + np.linalg.norm(c * op.bflux) or 1.0
    return float(np.linalg.norm(r) / scale)


def neumann_constant(op: DiscreteOperator, rhs=1.0) -> float:
    """``c = int rhs V^tau / int_Sigma V^{tau-alpha}`` from the discrete masses."""
    total = op.bflux.sum()
    if total == 0.0:
        raise IncompatibleData("no boundary flux; use a closed problem")
    return op.integral(rhs) / total


def solve_neumann(op: DiscreteOperator, rhs=1.0, c: float | str = "auto", tol: float = 1e-12,
                  compat_tol: float = 1e-8, method: str = "direct") -> Solution:
    """``lap^D phi = rhs`` with ``V^gamma phi_nu = c``; zero ``V^tau``-mean gauge."""
    if op.bc != "neumann":
        raise ValueError("operator was not assembled with Neumann conditions")
    g = op.sample(rhs)
    cont = op.integral(rhs)
    if c == "auto":
        cval = neumann_constant(op, rhs)
    else:
        cval = float(c)
        gap = abs(cont - cval * op.bflux.sum())
        if gap > compat_tol * max(1.0, abs(cont)):
            raise IncompatibleData(f"Neumann data incompatible: gap {gap:.3e}")
    b = cval * op.bflux - op.mass * g
    b = b - op.bflux * (b.sum() / op.bflux.sum())  # absorb O(h^2) mass defect into the flux
    x, res = _solve_free(op, b, np.zeros(op.size), tol, method)
    x -= op.weighted_mean(x)
    return Solution(op, x, _residual_with(op, x, b), res.iterations, "neumann", cval)


def _residual_with(op: DiscreteOperator, x: np.ndarray, b: np.ndarray) -> float:
    r = (op.K @ x - b)[op.free]
    return float(np.linalg.norm(r) / (np.linalg.norm(b[op.free]) or 1.0))


def solve_source(
    op: DiscreteOperator, f, compat_tol: float = 1e-8, tol: float = 1e-12, method: str = "direct"
) -> Solution:
    """``lap^D phi = f`` with the operator's boundary condition (Neumann means ``phi_nu = 0``)."""
    g = op.sample(f)
    if op.bc == "dirichlet":
        return solve_dirichlet(op, g, 0.0, tol, method)
    cont = op.integral(f if not isinstance(f, np.ndarray) else g)
    scale = op.integral(np.abs(g)) or 1.0
    if abs(cont) > compat_tol * max(1.0, scale):
        raise IncompatibleData(f"source has nonzero weighted mean {cont:.3e}")
    b = -op.mass * g
    b -= op.mass * (b.sum() / op.mass.sum())
    x, res = _solve_free(op, b, np.zeros(op.size), tol, method)
    x -= op.weighted_mean(x)
    return Solution(op, x, _residual_with(op, x, b), res.iterations, "source")


# ---------------------------------------------------------------------------
# Eigenvalues
# ---------------------------------------------------------------------------


@dataclass
class EigenResult:
    lambda1: float
    vector: np.ndarray
    which: str
    rayleigh: float
    iterations: int
    sector: float = 0.0
    residual: float = 0.0
    sectors: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "which": self.which,
            "rayleigh": self.rayleigh,
            "iterations": self.iterations,
            "sector": self.sector,
            "residual": self.residual,
            "sectors": {str(k): v for k, v in self.sectors.items()},
        }


def _inverse_iteration(op: DiscreteOperator, tol: float, maxiter: int, seed: int, method: str = "direct"):
    f = op.free
    solver = LinearSolver(op, method, 1e-13)
    Kff = solver.Kff
    Mf = op.mass[f]
    singular = op.singular

    def project(v):
        if singular:
            return v - np.dot(Mf, v) / Mf.sum()
        return v

    coords = op.coords[f]
    rng = np.random.default_rng(seed)
    x = 1.0 + 0.1 * rng.standard_normal(coords.shape[0])
    if singular:
        x = coords[:, 0] - coords[:, 0].mean() + 0.05 * rng.standard_normal(coords.shape[0])
    x = project(x)
    x /= math.sqrt(np.dot(Mf * x, x))
    lam_old = np.inf
    lam = float(x @ (Kff @ x))
    for it in range(1, maxiter + 1):
        y = solver.solve(Mf * x).x
        y = project(y)
        x = y / math.sqrt(np.dot(Mf * y, y))
        lam_old, lam = lam, float(x @ (Kff @ x))
        if abs(lam - lam_old) <= tol * abs(lam):
            break
    else:
        raise SolverError("inverse iteration did not converge")
    resid = float(np.linalg.norm(Kff @ x - lam * Mf * x) / (abs(lam) * np.linalg.norm(Mf * x)))
    full = np.zeros(op.size)
    full[f] = x
    return lam, full, it, resid


def solve_eigen(op: DiscreteOperator, which: str | None = None, tol: float = 1e-12, maxiter: int = 1000,
                seed: int = 0, sectors: bool = True, method: str = "direct") -> EigenResult:
    """First nonzero eigenvalue of ``-lap^D`` by inverse iteration in the ``V^tau`` inner product.

    For the symmetric reduction with closed or Neumann conditions the first
    angular sector is also solved and the smaller value is returned, since
    the first nonconstant eigenfunction need not be rotationally symmetric.
    """
    which = which or op.bc
    if which != op.bc:
        raise ValueError(f"operator carries {op.bc!r} conditions, not {which!r}")
    lam, vec, its, resid = _inverse_iteration(op, tol, maxiter, seed, method)
    found = {0.0: lam}
    best = (lam, vec, its, resid, 0.0, op)
    sl = op.source
    if sectors and isinstance(sl, SturmLiouville) and sl.dim >= 2 and which in ("neumann", "closed"):
        mu = float(sl.dim - 1)
        op2 = assemble_sturm_liouville(sl.with_mode(mu), op.meta["nodes"], op.bc)
        lam2, vec2, its2, res2 = _inverse_iteration(op2, tol, maxiter, seed, method)
        found[mu] = lam2
        if lam2 < lam:
            best = (lam2, vec2, its2, res2, mu, op2)
    lam, vec, its, resid, sector, op_used = best
    rq = rayleigh_quotient(op_used, vec, which)
    return EigenResult(lam, vec, which, rq, its, sector, resid, found)


def rayleigh_quotient(op: DiscreteOperator, f, which: str | None = None) -> float:
    """``x^T K x / x^T M x`` with the admissibility constraint of ``which`` enforced."""
    which = which or op.bc
    x = op.sample(f).copy()
    if which == "dirichlet":
        if np.max(np.abs(x[~op.free]), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(x))):
            raise ValueError("Dirichlet trial functions must vanish on the boundary")
        x[~op.free] = 0.0
    elif op.singular:
        x -= op.weighted_mean(x)
    den = op.inner(x, x)
    if den == 0.0:
        raise ValueError("zero denominator in Rayleigh quotient")
    return float(x @ (op.K @ x)) / den


def rayleigh_quotient_field(C: AffineConnection, A: DomainAssembly, f, which: str = "closed") -> float:
    """Continuous quotient ``int |grad f|^2 V^{tau+gamma-alpha} / int f^2 V^tau`` by quadrature.

    For closed and Neumann problems the weighted mean of ``f`` is removed first.
    """
    fld = dsl.field(f, C.triple.dim)
    L = LocalConnection(C, A.points)
    v, df = fld.jet(A.points, 1)
    if which in ("closed", "neumann"):
        v = v - weighted_sum(A.weights, v * L.Vpow(C.tau)) / weighted_sum(A.weights, L.Vpow(C.tau))
    num = weighted_sum(A.weights, L.inner(df, df) * L.Vpow(C.tau + C.gamma - C.alpha))
    den = weighted_sum(A.weights, v * v * L.Vpow(C.tau))
    if den == 0.0:
        raise ValueError("zero denominator in Rayleigh quotient")
    return num / den


# ---------------------------------------------------------------------------
# Consistency and structural checks
# ---------------------------------------------------------------------------


def pointwise_d_laplacian(C: AffineConnection, f, points: np.ndarray) -> np.ndarray:
    L = LocalConnection(C, points)
    _, df, d2f = f.jet(points, 2)
    return L.d_laplacian(df, d2f)


def consistency_error(C: AffineConnection, op: DiscreteOperator, f) -> float:
    """Max over interior nodes of ``|discrete lap^D f - exact lap^D f|``."""
    fld = dsl.field(f, C.triple.dim)
    if op.points is None:
        raise ValueError("operator has no chart points")
    mask = op.interior.copy()
    pts = op.points[mask]
    if op.kind == "sturm-liouville":
        sl = op.source
        a, b = sl.interval
        s = op.coords[mask, 0]
        keep = (s > a + 0.1 * (b - a)) & (s < b - 0.1 * (b - a))
        pts = pts[keep]
        idx = np.flatnonzero(mask)[keep]
    else:
        idx = np.flatnonzero(mask)
    vals = fld.eval_many(op.points)
    disc = op.d_laplacian(vals)[idx]
    exact = pointwise_d_laplacian(C, fld, pts)
    return float(np.max(np.abs(disc - exact)))


def observed_orders(errors: Sequence[float]) -> list[float]:
    return [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]


@dataclass
class StaticEquivalence:
    residual_1: float
    residual_2: float
    pointwise_gap: float

    def to_json(self) -> dict:
        return {"residual_1": self.residual_1, "residual_2": self.residual_2, "pointwise_gap": self.pointwise_gap}


def static_equivalence_check(T: RiemannianTriple, A, f, lam: float) -> StaticEquivalence:
    """Compare ``lap^D(f/V) + lam f/V`` (alpha=0, gamma=1) with ``V lap f - lap V f + lam f``.

    ``A`` is a domain assembly (its volume nodes are used) or an array of
    chart points.  ``pointwise_gap`` is ``max |r2 - V r1|``.
    """
    n = T.dim
    pts = A.points if isinstance(A, DomainAssembly) else np.atleast_2d(np.asarray(A, dtype=float))
    fld = dsl.field(f, n)
    g = Field(dsl.mul(fld.expr, dsl.exp(dsl.neg(T.u.expr))), n)
    C = AffineConnection.of(T, 0.0, 1.0)
    L = LocalConnection(C, pts)
    _, dg, d2g = g.jet(pts, 2)
    gv = g.eval_many(pts)
    r1 = L.d_laplacian(dg, d2g) + lam * gv
    fv, df, d2f = fld.jet(pts, 2)
    Vf = Field(dsl.exp(T.u.expr), n)
    V, dV, d2V = Vf.jet(pts, 2)
    lap_f = L.trace(L.hessian(df, d2f))
    lap_V = L.trace(L.hessian(dV, d2V))
    r2 = V * lap_f - lap_V * fv + lam * fv
    return StaticEquivalence(float(np.max(np.abs(r1))), float(np.max(np.abs(r2))), float(np.max(np.abs(r2 - V * r1))))


@dataclass
class StokesCheck:
    volume: float
    boundary: float
    residual: float


def stokes_identity(C: AffineConnection, A: DomainAssembly, phi) -> StokesCheck:
    """``int_Omega V^tau lap^D phi`` against ``int_Sigma V^tau <grad^D phi, nu>``."""
    fld = phi if hasattr(phi, "jet") and not isinstance(phi, (str, Field)) else dsl.field(phi, C.triple.dim)
    L = LocalConnection(C, A.points)
    _, df, d2f = fld.jet(A.points, 2)
    vol = weighted_sum(A.weights, L.Vpow(C.tau) * L.d_laplacian(df, d2f))
    vals = []
    for bn in A.boundary:
        Lb = LocalConnection(C, bn.points)
        _, dfb = fld.jet(bn.points, 1)
        vals.append(Lb.Vpow(C.tau + C.gamma - C.alpha) * bn.local.normal_derivative(dfb))
    bnd = weighted_sum(A.boundary_weights, np.concatenate(vals)) if vals else 0.0
    return StokesCheck(vol, bnd, abs(vol - bnd) / max(1.0, abs(vol)))


def neumann_quotient(C: AffineConnection, A: DomainAssembly) -> float:
    """``int_Omega V^tau / int_Sigma V^{tau-alpha}`` by domain quadrature."""
    tau, a = C.tau, C.alpha
    u = C.triple.u
    vol = integrate_volume(A, lambda p: np.exp(tau * u.eval_many(p)))
    bnd = integrate_boundary(A, lambda p: np.exp((tau - a) * u.eval_many(p)))
    return vol / bnd
