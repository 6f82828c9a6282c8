"""Shape data of a boundary hypersurface given by a parametrization.

A :class:`BoundaryPatch` maps ``m = n - 1`` parameters into the chart.  All
tangential quantities are computed in the parameter basis ``e_a = dX/dq^a``
from exact parameter derivatives; the outward normal is differentiated
along the patch directly (no Weingarten shortcut), so Gauss-Weingarten
relations can be checked against it independently.

Sign convention: ``h(X, Y) = <LC_X nu, Y>`` with outward ``nu``, so the unit
sphere has ``h = g_ind`` and ``H = n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import field_dsl as dsl
from .connection import ConnectionParams
from .field_dsl import Field
from .geometry import Box, LocalGeometry, RiemannianTriple


class DegenerateImmersion(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryPatch:
    """Parametrized hypersurface patch; ``orientation`` flips the cofactor normal."""

    param_map: tuple[Field, ...]
    param_box: Box
    orientation: int = 1
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.param_map)

    @property
    def param_dim(self) -> int:
        return self.param_map[0].dim

    def with_orientation(self, sign: int) -> "BoundaryPatch":
        return BoundaryPatch(self.param_map, self.param_box, int(sign), self.name)

    def to_json(self) -> dict:
        return {
            "map": [str(f) for f in self.param_map],
            "box": [list(b) for b in self.param_box],
            "orientation": self.orientation,
            "name": self.name,
        }


def patch_from_json(cfg: dict, dim: int) -> BoundaryPatch:
    m = dim - 1
    fields = tuple(dsl.parse(s, m) for s in cfg["map"])
    if len(fields) != dim:
        raise ValueError("boundary map needs one expression per chart coordinate")
    box = tuple((float(a), float(b)) for a, b in cfg["box"])
    return BoundaryPatch(fields, box, int(cfg.get("orientation", 1)), cfg.get("name", "custom"))


@dataclass(frozen=True)
class ShapeData:
    nu: np.ndarray
    h: np.ndarray
    H: float
    HD: float
    g_ind: np.ndarray
    u_nu: float


class BoundaryLocal:
    """Patch geometry at a batch of parameter points ``q`` (shape (N, m))."""

    def __init__(self, T: RiemannianTriple, P: BoundaryPatch, q):
        self.T = T
        self.P = P
        self.q = np.atleast_2d(np.asarray(q, dtype=float))
        self.n = T.dim
        self.m = self.n - 1
        if P.dim != self.n or P.param_dim != self.m:
            raise ValueError("patch dimensions do not match the triple")
        jets = [f.jet(self.q, 2) for f in P.param_map]
        self.X = np.stack([j[0] for j in jets], axis=1)  # (N, n)
        self.E = np.stack([j[1] for j in jets], axis=1)  # (N, n, m): X^k_a
        self.E2 = np.stack([j[2] for j in jets], axis=1)  # (N, n, m, m): X^k_ab
        self.G = LocalGeometry(T, self.X)
        self.N = self.q.shape[0]

    # induced metric ------------------------------------------------------

    @cached_property
    def g_ind(self) -> np.ndarray:
        return np.einsum("nka,nkl,nlb->nab", self.E, self.G.g, self.E)

    @cached_property
    def _ind_chol(self):
        try:
            return np.linalg.cholesky(self.g_ind)
        except np.linalg.LinAlgError:
            raise DegenerateImmersion("boundary parametrization is not an immersion") from None

    @cached_property
    def g_ind_inv(self) -> np.ndarray:
        Linv = np.linalg.inv(self._ind_chol)
        return np.einsum("nki,nkj->nij", Linv, Linv)

    @cached_property
    def area_element(self) -> np.ndarray:
        return np.prod(np.diagonal(self._ind_chol, axis1=1, axis2=2), axis=1)

    @cached_property
    def dg_ind(self) -> np.ndarray:
        """``dg_ind[a, b, c] = d_c g_ab`` in the parameters."""
        G = self.G
        dg_amb = np.einsum("nklp,npc->nklc", G.dg, self.E)
        return (
            np.einsum("nklc,nka,nlb->nabc", dg_amb, self.E, self.E)
            + np.einsum("nkac,nkl,nlb->nabc", self.E2, G.g, self.E)
            + np.einsum("nka,nkl,nlbc->nabc", self.E, G.g, self.E2)
        )

    @cached_property
    def christoffel_ind(self) -> np.ndarray:
        d = self.dg_ind
        low = 0.5 * (np.einsum("ndba->ndab", d) + np.einsum("ndab->ndab", d) - np.einsum("nabd->ndab", d))
        return np.einsum("ncd,ndab->ncab", self.g_ind_inv, low)

    # normal ----------------------------------------------------------------

    def _cofactor(self, cols: np.ndarray) -> np.ndarray:
        """``N_l = det[e_l | cols]`` for each coordinate direction ``l``."""
        n = self.n
        out = np.empty((cols.shape[0], n))
        for l in range(n):
            M = np.empty((cols.shape[0], n, n))
            M[:, :, 0] = 0.0
            M[:, l, 0] = 1.0
            M[:, :, 1:] = cols
            out[:, l] = np.linalg.det(M)
        return out

    @cached_property
    def _normal_raw(self):
        Ncov = self._cofactor(self.E)
        Nvec = np.einsum("nkl,nl->nk", self.G.ginv, Ncov)
        s = np.sqrt(np.einsum("nk,nk->n", Ncov, Nvec))
        if np.any(s == 0):
            raise DegenerateImmersion("vanishing normal")
        return Ncov, Nvec, s

    @cached_property
    def nu(self) -> np.ndarray:
        _, Nvec, s = self._normal_raw
        return self.P.orientation * Nvec / s[:, None]

    @cached_property
    def dnu(self) -> np.ndarray:
        """``dnu[k, c] = d_c nu^k`` along the patch, differentiated directly."""
        Ncov, Nvec, s = self._normal_raw
        m = self.m
        dNcov = np.empty((self.N, self.n, m))
        for c in range(m):
            acc = np.zeros((self.N, self.n))
            for b in range(m):
                cols = self.E.copy()
                cols[:, :, b] = self.E2[:, :, b, c]
                acc += self._cofactor(cols)
            dNcov[:, :, c] = acc
        dginv_c = np.einsum("nklp,npc->nklc", self.G.dginv, self.E)
        dNvec = np.einsum("nklc,nl->nkc", dginv_c, Ncov) + np.einsum("nkl,nlc->nkc", self.G.ginv, dNcov)
        ds = (2 * np.einsum("nkc,nk->nc", dNcov, Nvec) + np.einsum("nk,nklc,nl->nc", Ncov, dginv_c, Ncov)) / (
            2 * s[:, None]
        )
        return self.P.orientation * (dNvec / s[:, None, None] - Nvec[:, :, None] * ds[:, None, :] / s[:, None, None] ** 2)

    # second fundamental form -----------------------------------------------

    @cached_property
    def h(self) -> np.ndarray:
        """``h_ab = -<nu, LC_{e_a} e_b>``."""
        G = self.G
        cov = self.E2 + np.einsum("nlpq,npa,nqb->nlab", G.christoffel, self.E, self.E)
        return -np.einsum("nkl,nk,nlab->nab", G.g, self.nu, cov)

    @cached_property
    def h_weingarten(self) -> np.ndarray:
        """``<LC_{e_a} nu, e_b>`` from the differentiated normal (independent route)."""
        G = self.G
        cov = self.dnu + np.einsum("nkpq,npa,nq->nka", G.christoffel, self.E, self.nu)
        return np.einsum("nka,nkl,nlb->nab", cov, G.g, self.E)

    @cached_property
    def H(self) -> np.ndarray:
        return np.einsum("nab,nab->n", self.g_ind_inv, self.h)

    @cached_property
    def u_nu(self) -> np.ndarray:
        return self.normal_derivative(self.G.u_jet[1])

    def HD(self, params: ConnectionParams) -> np.ndarray:
        return self.H + (self.n - 1) * params.alpha * self.u_nu

    def boundary_form(self, params: ConnectionParams) -> np.ndarray:
        return self.h - params.gamma * self.u_nu[:, None, None] * self.g_ind

    def umbilicity_defect(self) -> np.ndarray:
        T = self.h - (self.H / self.m)[:, None, None] * self.g_ind
        return np.sqrt(np.abs(np.einsum("nac,nbd,nab,ncd->n", self.g_ind_inv, self.g_ind_inv, T, T)))

    def shape(self, params: ConnectionParams, i: int = 0) -> ShapeData:
        return ShapeData(
            nu=self.nu[i],
            h=self.h[i],
            H=float(self.H[i]),
            HD=float(self.HD(params)[i]),
            g_ind=self.g_ind[i],
            u_nu=float(self.u_nu[i]),
        )

    # restricted functions ----------------------------------------------------

    def normal_derivative(self, df: np.ndarray) -> np.ndarray:
        return np.einsum("nk,nk->n", self.nu, df)

    def param_gradient(self, df: np.ndarray) -> np.ndarray:
        """``d_a (f o X) = f_k X^k_a``."""
        return np.einsum("nk,nka->na", df, self.E)

    def param_hessian(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        return np.einsum("nkl,nka,nlb->nab", d2f, self.E, self.E) + np.einsum("nk,nkab->nab", df, self.E2)

    def tangential_gradient(self, df: np.ndarray) -> np.ndarray:
        """Intrinsic gradient on the patch, in the parameter tangent basis."""
        return np.einsum("nab,nb->na", self.g_ind_inv, self.param_gradient(df))

    def tangential_gradient_ambient(self, df: np.ndarray) -> np.ndarray:
        return np.einsum("nka,na->nk", self.E, self.tangential_gradient(df))

    def intrinsic_laplacian(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        d1 = self.param_gradient(df)
        d2 = self.param_hessian(df, d2f)
        hess = d2 - np.einsum("ncab,nc->nab", self.christoffel_ind, d1)
        return np.einsum("nab,nab->n", self.g_ind_inv, hess)

    def tangential_inner(self, a_param: np.ndarray, b_param: np.ndarray) -> np.ndarray:
        """``<grad a, grad b>`` on the patch from parameter derivatives of ``a`` and ``b``."""
        return np.einsum("na,nab,nb->n", a_param, self.g_ind_inv, b_param)

    def ambient_tangent_trace(self, d2f_cov: np.ndarray) -> np.ndarray:
        """``g_ind^{ab} B(e_a, e_b)`` for an ambient bilinear form ``B``."""
        return np.einsum("nab,nka,nkl,nlb->n", self.g_ind_inv, self.E, d2f_cov, self.E)

    def param_gradient_of_normal_derivative(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        """``d_c (f_nu)`` along the patch, using the directly differentiated normal."""
        return np.einsum("nkc,nk->nc", self.dnu, df) + np.einsum("nk,nkp,npc->nc", self.nu, d2f, self.E)


def _local(T, P, q):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1 or (q.ndim == 0)
    return BoundaryLocal(T, P, np.atleast_2d(q.reshape(1, -1) if single else q)), single


def shape_at(T: RiemannianTriple, P: BoundaryPatch, params: ConnectionParams, q):
    B, single = _local(T, P, q)
    if single:
        return B.shape(params, 0)
    return [B.shape(params, i) for i in range(B.N)]


def tangential_gradient_at(T: RiemannianTriple, P: BoundaryPatch, f, q, params: ConnectionParams | None = None):
    """Intrinsic gradient of ``f`` restricted to the patch and its D-version.

    Returns ``(grad, grad_D)`` in the parameter tangent basis.
    """
    B, single = _local(T, P, q)
    f = dsl.field(f, T.dim) if isinstance(f, str) else f
    _, df = f.jet(B.X, 1)
    grad = B.tangential_gradient(df)
    scale = np.ones(B.N)
    if params is not None:
        scale = np.exp((params.gamma - params.alpha) * B.G.u_jet[0])
    gradD = scale[:, None] * grad
    if single:
        return grad[0], gradD[0]
    return grad, gradD


def boundary_form_at(T: RiemannianTriple, P: BoundaryPatch, params: ConnectionParams, q):
    B, single = _local(T, P, q)
    out = B.boundary_form(params)
    return out[0] if single else out


def umbilicity_defect(T: RiemannianTriple, P: BoundaryPatch, q):
    B, single = _local(T, P, q)
    out = B.umbilicity_defect()
    return float(out[0]) if single else out


def normal_derivative_at(T: RiemannianTriple, P: BoundaryPatch, f, q):
    B, single = _local(T, P, q)
    f = dsl.field(f, T.dim) if isinstance(f, str) else f
    _, df = f.jet(B.X, 1)
    out = B.normal_derivative(df)
    return float(out[0]) if single else out
