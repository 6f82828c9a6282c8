"""Levi-Civita tensor calculus on a single chart.

All quantities are evaluated in the coordinate basis and vectorized over a
batch of points.  Index layout of the arrays (after the leading batch axis):

* ``g[i, j]``, ``dg[i, j, p] = d_p g_ij``, ``d2g[i, j, p, q]``
* ``christoffel[k, i, j] = Gamma^k_ij``, ``dchristoffel[k, i, j, p] = d_p Gamma^k_ij``
* ``riemann[l, k, i, j]``: the ``dx^l`` component of ``R(d_i, d_j) d_k`` with
  ``R(X, Y) = D_X D_Y - D_Y D_X - D_[X,Y]``; antisymmetric in ``(i, j)``
* ``ricci[j, k] = riemann[i, k, i, j]`` (summed), positive on round spheres
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import field_dsl as dsl
from .field_dsl import Field


class MetricError(ValueError):
    """The metric is not symmetric positive definite at some point."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


Box = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class RiemannianTriple:
    """Chart dimension, metric component fields, and log-weight ``u`` (``V = e^u``)."""

    dim: int
    g: tuple[tuple[Field, ...], ...]
    u: Field
    box: Box
    name: str = "custom"
    curvature: float | None = None  # sectional curvature when constant, for tests
    description: str = ""

    def __post_init__(self):
        n = self.dim
        if n < 2:
            raise ValueError("triples need dim >= 2")
        if len(self.g) != n or any(len(row) != n for row in self.g):
            raise ValueError("metric must be an n x n array of fields")
        for row in self.g:
            for f in row:
                if f.dim != n:
                    raise ValueError("metric fields must live on the chart")
        if self.u.dim != n:
            raise ValueError("weight field must live on the chart")
        if len(self.box) != n:
            raise ValueError("chart box needs one interval per coordinate")
        for i in range(n):
            for j in range(i):
                if self.g[i][j].expr is not self.g[j][i].expr:
                    # structurally different but possibly equal; checked numerically
                    pts = self.sample_points(8, seed=12345)
                    a = self.g[i][j].eval_many(pts)
                    b = self.g[j][i].eval_many(pts)
                    if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
                        raise MetricError(f"metric is not symmetric in ({i + 1},{j + 1})")

    # -- construction helpers --------------------------------------------------

    def with_weight(self, u) -> "RiemannianTriple":
        return RiemannianTriple(
            self.dim, self.g, dsl.field(u, self.dim), self.box, self.name, self.curvature,
            self.description,
        )

    def conformal(self, exponent) -> "RiemannianTriple":
        """Triple with metric ``exp(exponent) * g`` and weight ``u = 0``."""
        ex = dsl.field(exponent, self.dim).expr
        factor = dsl.exp(ex)
        g = tuple(
            tuple(Field(factor * self.g[i][j].expr, self.dim) for j in range(self.dim))
            for i in range(self.dim)
        )
        return RiemannianTriple(
            self.dim, g, dsl.field("0", self.dim), self.box, f"{self.name}*conformal", None,
        )

    def sample_box(self, margin: float = 0.05, clip: float = 3.5) -> Box:
        out = []
        for lo, hi in self.box:
            lo2, hi2 = max(lo, -clip), min(hi, clip)
            out.append((lo2 + margin, hi2 - margin))
        return tuple(out)

    def sample_points(self, count: int, seed: int = 0, margin: float = 0.05) -> np.ndarray:
        rng = np.random.default_rng(seed)
        box = np.array(self.sample_box(margin))
        return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, self.dim))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        box = np.array(self.box)
        return np.all((pts > box[:, 0]) & (pts < box[:, 1]), axis=1)

    def metric_fields(self) -> list[Field]:
        return [self.g[i][j] for i in range(self.dim) for j in range(i, self.dim)]

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "g": [[str(f) for f in row] for row in self.g],
            "u": str(self.u),
            "box": [list(b) for b in self.box],
            "name": self.name,
        }


def triple_from_json(cfg: dict | str) -> RiemannianTriple:
    """Build a triple from ``{"dim":2, "g":[["1","0"],["0","sin(x1)^2"]], "u":"0", "box":[...]}``."""
    if isinstance(cfg, str):
        cfg = json.loads(cfg)
    n = int(cfg["dim"])
    rows = cfg["g"]
    g = tuple(tuple(dsl.field(str(e), n) for e in row) for row in rows)
    box = tuple((float(a), float(b)) for a, b in cfg["box"])
    return RiemannianTriple(n, g, dsl.field(str(cfg.get("u", "0")), n), box, cfg.get("name", "custom"))


def _diag(entries: Sequence[str], n: int) -> tuple[tuple[Field, ...], ...]:
    return tuple(
        tuple(dsl.parse(entries[i] if i == j else "0", n) for j in range(n)) for i in range(n)
    )


TWO_PI = 2 * math.pi


def catalog_triple(name: str, u: str | Field = "0", warp: str | None = None) -> RiemannianTriple:
    """Built-in triples.

    ``euclidean-n``, ``polar-n`` (r, angles), ``sphere-n`` (unit sphere in
    polar angles), ``hyperbolic-n`` (upper half space, last coordinate > 0)
    and ``warped`` (``dr^2 + w(r)^2 dpsi^2`` with ``w`` given by ``warp``).
    """
    base, _, rest = name.partition("-")
    if base == "warped":
        w = warp or (rest if rest and not rest.isdigit() else None) or "cosh(x1)"
        g = _diag(["1", f"({w})^2"], 2)
        box = ((0.0, 10.0), (-10.0, 10.0))
        T = RiemannianTriple(2, g, dsl.field(u, 2), box, "warped", None, f"warp {w}")
        return T
    try:
        n = int(rest)
    except ValueError:
        raise KeyError(f"unknown triple {name!r}") from None
    if n < 2:
        raise KeyError(f"unknown triple {name!r}")
    if base == "euclidean":
        g = _diag(["1"] * n, n)
        box = tuple((-10.0, 10.0) for _ in range(n))
        K = 0.0
    elif base == "polar":
        entries = ["1"]
        prod = "x1^2"
        for k in range(2, n + 1):
            entries.append(prod)
            prod = f"{prod}*sin(x{k})^2"
        g = _diag(entries, n)
        box = ((0.0, 10.0),) + tuple((0.0, math.pi) for _ in range(n - 2)) + ((-10.0, 10.0),)
        K = 0.0
    elif base == "sphere":
        entries = ["1"]
        prod = "sin(x1)^2"
        for k in range(2, n + 1):
            entries.append(prod)
            prod = f"{prod}*sin(x{k})^2"
        g = _diag(entries, n)
        box = tuple((0.0, math.pi) for _ in range(n - 1)) + ((-10.0, 10.0),)
        K = 1.0
    elif base == "hyperbolic":
        g = _diag([f"x{n}^(-2)"] * n, n)
        box = tuple((-10.0, 10.0) for _ in range(n - 1)) + ((0.0, 10.0),)
        K = -1.0
    else:
        raise KeyError(f"unknown triple {name!r}")
    return RiemannianTriple(n, g, dsl.field(u, n), box, name, K)


CATALOG_TRIPLES = (
    "euclidean-2",
    "euclidean-3",
    "polar-2",
    "polar-3",
    "sphere-2",
    "sphere-3",
    "hyperbolic-2",
    "hyperbolic-3",
    "warped",
)


# ---------------------------------------------------------------------------
# Batched evaluation
# ---------------------------------------------------------------------------


def _as_batch(points) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def _field_jet(T: RiemannianTriple, fields: Sequence[Field], pts: np.ndarray, order: int):
    return [f.jet(pts, order) for f in fields]


def curvature_from_coefficients(A: np.ndarray, dA: np.ndarray) -> np.ndarray:
    """Curvature of a connection with coefficients ``A[k,i,j]`` and derivatives ``dA[k,i,j,p]``.

    Returns ``R[l,k,i,j]``, the ``dx^l`` component of ``R(d_i, d_j) d_k``.
    """
    # d_i A^l_{jk} - d_j A^l_{ik}
    term = np.einsum("nljki->nlkij", dA) - np.einsum("nlikj->nlkij", dA)
    term += np.einsum("nlim,nmjk->nlkij", A, A)
    term -= np.einsum("nljm,nmik->nlkij", A, A)
    return term


def ricci_from_riemann(R: np.ndarray) -> np.ndarray:
    """``Ric(d_j, d_k) = dx^i(R(d_i, d_j) d_k)``."""
    return np.einsum("nikij->njk", R)


class LocalGeometry:
    """Metric-derived quantities at a batch of points, computed on first use."""

    def __init__(self, T: RiemannianTriple, points):
        self.T = T
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.points.shape[1] != T.dim:
            raise ValueError(f"expected {T.dim} coordinates per point")
        self.n = T.dim
        self.N = self.points.shape[0]

    @cached_property
    def _metric_jets(self):
        n = self.n
        g = np.empty((self.N, n, n))
        dg = np.empty((self.N, n, n, n))
        d2g = np.empty((self.N, n, n, n, n))
        for i in range(n):
            for j in range(i, n):
                v, d1, d2 = self.T.g[i][j].jet(self.points, 2)
                for a, b in ((i, j), (j, i)):
                    g[:, a, b] = v
                    dg[:, a, b] = d1
                    d2g[:, a, b] = d2
        return g, dg, d2g

    @property
    def g(self) -> np.ndarray:
        return self._metric_jets[0]

    @property
    def dg(self) -> np.ndarray:
        return self._metric_jets[1]

    @property
    def d2g(self) -> np.ndarray:
        return self._metric_jets[2]

    @cached_property
    def _chol(self):
        try:
            return np.linalg.cholesky(self.g)
        except np.linalg.LinAlgError:
            bad = None
            for p, gp in zip(self.points, self.g):
                try:
                    np.linalg.cholesky(gp)
                except np.linalg.LinAlgError:
                    bad = p
                    break
            raise MetricError(f"metric is not positive definite at {bad}", bad) from None

    @cached_property
    def ginv(self) -> np.ndarray:
        L = self._chol
        Linv = np.linalg.inv(L)
        return np.einsum("nki,nkj->nij", Linv, Linv)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.prod(np.diagonal(self._chol, axis1=1, axis2=2), axis=1)

    @cached_property
    def dginv(self) -> np.ndarray:
        """``dginv[k, l, p] = d_p g^{kl}``."""
        return -np.einsum("nka,nabp,nbl->nklp", self.ginv, self.dg, self.ginv)

    @cached_property
    def _gamma_lower(self) -> np.ndarray:
        dg = self.dg
        # Gamma_{l,ij} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        return 0.5 * (
            np.einsum("nlji->nlij", dg) + np.einsum("nlij->nlij", dg) - np.einsum("nijl->nlij", dg)
        )

    @cached_property
    def christoffel(self) -> np.ndarray:
        return np.einsum("nkl,nlij->nkij", self.ginv, self._gamma_lower)

    @cached_property
    def dchristoffel(self) -> np.ndarray:
        d2g = self.d2g
        dlow = 0.5 * (
            np.einsum("nljip->nlijp", d2g)
            + np.einsum("nlijp->nlijp", d2g)
            - np.einsum("nijlp->nlijp", d2g)
        )
        return np.einsum("nklp,nlij->nkijp", self.dginv, self._gamma_lower) + np.einsum(
            "nkl,nlijp->nkijp", self.ginv, dlow
        )

    @cached_property
    def riemann(self) -> np.ndarray:
        return curvature_from_coefficients(self.christoffel, self.dchristoffel)

    @cached_property
    def ricci(self) -> np.ndarray:
        return ricci_from_riemann(self.riemann)

    @cached_property
    def u_jet(self):
        return self.T.u.jet(self.points, 2)

    def jet(self, f, order: int = 2):
        return f.jet(self.points, order)

    # scalar-field calculus ---------------------------------------------------

    def grad(self, df: np.ndarray) -> np.ndarray:
        return np.einsum("nkl,nl->nk", self.ginv, df)

    def hessian(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        return d2f - np.einsum("nkij,nk->nij", self.christoffel, df)

    def trace(self, B: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nij->n", self.ginv, B)

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``<da, db>`` for covectors ``a``, ``b``."""
        return np.einsum("ni,nij,nj->n", a, self.ginv, b)

    def norm2_bilinear(self, B: np.ndarray) -> np.ndarray:
        """``|B|^2`` with both indices raised by the metric."""
        return np.einsum("nia,njb,nij,nab->n", self.ginv, self.ginv, B, B)


def local_geometry(T: RiemannianTriple, points) -> LocalGeometry:
    return LocalGeometry(T, points)


def _maybe_single(arr, single: bool):
    return arr[0] if single else arr


def metric_at(T: RiemannianTriple, p):
    """Metric, inverse metric and sqrt(det g) at ``p`` (a point or a batch)."""
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    return (
        _maybe_single(G.g, single),
        _maybe_single(G.ginv, single),
        _maybe_single(G.sqrt_det, single),
    )


def christoffel_at(T: RiemannianTriple, p) -> np.ndarray:
    pts, single = _as_batch(p)
    return _maybe_single(LocalGeometry(T, pts).christoffel, single)


def riemann_lc_at(T: RiemannianTriple, p) -> np.ndarray:
    pts, single = _as_batch(p)
    return _maybe_single(LocalGeometry(T, pts).riemann, single)


def ricci_at(T: RiemannianTriple, p) -> np.ndarray:
    pts, single = _as_batch(p)
    return _maybe_single(LocalGeometry(T, pts).ricci, single)


def grad_at(T: RiemannianTriple, f, p) -> np.ndarray:
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    _, df = G.jet(dsl.field(f, T.dim) if isinstance(f, str) else f, 1)
    return _maybe_single(G.grad(df), single)


def hessian_at(T: RiemannianTriple, f, p) -> np.ndarray:
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    _, df, d2f = G.jet(dsl.field(f, T.dim) if isinstance(f, str) else f, 2)
    return _maybe_single(G.hessian(df, d2f), single)


def laplacian_at(T: RiemannianTriple, f, p):
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    _, df, d2f = G.jet(dsl.field(f, T.dim) if isinstance(f, str) else f, 2)
    out = G.trace(G.hessian(df, d2f))
    return float(out[0]) if single else out


def constant_curvature_riemann(g: np.ndarray, K: float) -> np.ndarray:
    """``R^l_{kij} = K (delta^l_i g_jk - delta^l_j g_ik)`` for a batch of metrics."""
    n = g.shape[-1]
    eye = np.eye(n)
    return K * (np.einsum("li,njk->nlkij", eye, g) - np.einsum("lj,nik->nlkij", eye, g))
