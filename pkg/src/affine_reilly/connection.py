"""The two-parameter family of torsion-free connections ``D^{alpha,gamma}``.

``D_X Y = LC_X Y + alpha du(X) Y + alpha du(Y) X + gamma g(X, Y) grad u``

Everything here works on :class:`~affine_reilly.geometry.LocalGeometry`
batches; the ``*_at`` functions are thin wrappers taking a point or a batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import field_dsl as dsl
from .geometry import (
    LocalGeometry,
    RiemannianTriple,
    _as_batch,
    _maybe_single,
    curvature_from_coefficients,
    ricci_from_riemann,
)


@dataclass(frozen=True)
class ConnectionParams:
    alpha: float
    gamma: float
    dim: int

    @property
    def tau(self) -> float:
        """Exponent making ``V^tau dOmega`` parallel: ``(n+1) alpha + gamma``."""
        return (self.dim + 1) * self.alpha + self.gamma

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "gamma": self.gamma, "dim": self.dim, "tau": self.tau}


@dataclass(frozen=True)
class AffineConnection:
    triple: RiemannianTriple
    params: ConnectionParams

    def __post_init__(self):
        if self.params.dim != self.triple.dim:
            raise ValueError("connection parameters and triple disagree on dimension")

    @classmethod
    def of(cls, T: RiemannianTriple, alpha: float, gamma: float) -> "AffineConnection":
        return cls(T, ConnectionParams(float(alpha), float(gamma), T.dim))

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def tau(self) -> float:
        return self.params.tau

    def local(self, points) -> "LocalConnection":
        return LocalConnection(self, points)


class LocalConnection(LocalGeometry):
    """``LocalGeometry`` plus the connection ``D`` at the same points."""

    def __init__(self, C: AffineConnection, points):
        super().__init__(C.triple, points)
        self.C = C
        self.alpha = C.params.alpha
        self.gamma = C.params.gamma
        self.tau = C.params.tau

    @cached_property
    def V(self) -> np.ndarray:
        return np.exp(self.u_jet[0])

    def Vpow(self, e: float) -> np.ndarray:
        return np.exp(e * self.u_jet[0])

    @cached_property
    def grad_u(self) -> np.ndarray:
        return self.grad(self.u_jet[1])

    @cached_property
    def coeffs(self) -> np.ndarray:
        """``A[k, i, j]`` with ``D_{d_i} d_j = A^k_ij d_k``."""
        a, c = self.alpha, self.gamma
        du = self.u_jet[1]
        eye = np.eye(self.n)
        A = self.christoffel.copy()
        A += a * np.einsum("ni,kj->nkij", du, eye)
        A += a * np.einsum("nj,ki->nkij", du, eye)
        A += c * np.einsum("nij,nk->nkij", self.g, self.grad_u)
        return A

    @cached_property
    def dcoeffs(self) -> np.ndarray:
        """``dA[k, i, j, p] = d_p A^k_ij``, differentiated exactly."""
        a, c = self.alpha, self.gamma
        _, du, d2u = self.u_jet
        eye = np.eye(self.n)
        dA = self.dchristoffel.copy()
        dA += a * np.einsum("nip,kj->nkijp", d2u, eye)
        dA += a * np.einsum("njp,ki->nkijp", d2u, eye)
        dgrad_u = np.einsum("nkmp,nm->nkp", self.dginv, du) + np.einsum("nkm,nmp->nkp", self.ginv, d2u)
        dA += c * (
            np.einsum("nijp,nk->nkijp", self.dg, self.grad_u)
            + np.einsum("nij,nkp->nkijp", self.g, dgrad_u)
        )
        return dA

    @cached_property
    def torsion(self) -> np.ndarray:
        A = self.coeffs
        return A - np.swapaxes(A, 2, 3)

    @cached_property
    def riemann_D(self) -> np.ndarray:
        return curvature_from_coefficients(self.coeffs, self.dcoeffs)

    @cached_property
    def ricci_D_direct(self) -> np.ndarray:
        """Contraction of the commutator curvature; not symmetrized."""
        return ricci_from_riemann(self.riemann_D)

    @cached_property
    def ricci_D_closed(self) -> np.ndarray:
        n, a, c = self.n, self.alpha, self.gamma
        _, du, d2u = self.u_jet
        hess_u = self.hessian(du, d2u)
        lap_u = self.trace(hess_u)
        grad_u2 = self.inner(du, du)
        k1 = (n - 1) * a + c
        return (
            self.ricci
            - k1 * hess_u
            + ((n - 1) * a * a - c * c) * np.einsum("ni,nj->nij", du, du)
            + (c * lap_u + c * k1 * grad_u2)[:, None, None] * self.g
        )

    # D-calculus of a scalar --------------------------------------------------

    def d_gradient(self, df: np.ndarray) -> np.ndarray:
        return self.Vpow(self.gamma - self.alpha)[:, None] * self.grad(df)

    def d_hessian(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        a, c = self.alpha, self.gamma
        du = self.u_jet[1]
        inner = self.inner(du, df)
        B = (
            self.hessian(df, d2f)
            + c * (np.einsum("ni,nj->nij", du, df) + np.einsum("ni,nj->nij", df, du))
            + a * inner[:, None, None] * self.g
        )
        return self.Vpow(c - a)[:, None, None] * B

    def d_hessian_direct(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        """``g_jk (D_i X)^k`` for ``X = V^{gamma-alpha} grad f``, from the coefficients."""
        X, dX = self._d_gradient_jet(df, d2f)
        DX = np.einsum("nki->nki", dX) + np.einsum("nkim,nm->nki", self.coeffs, X)
        return np.einsum("njk,nki->nij", self.g, DX)

    def d_laplacian(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        a, c = self.alpha, self.gamma
        du = self.u_jet[1]
        lap = self.trace(self.hessian(df, d2f))
        return self.Vpow(c - a) * (lap + (2 * c + self.n * a) * self.inner(du, df))

    def d_laplacian_divergence(self, df: np.ndarray, d2f: np.ndarray) -> np.ndarray:
        """``V^-tau div(V^{tau+gamma-alpha} grad f)`` expanded through sqrt(det g)."""
        e = self.tau + self.gamma - self.alpha
        du = self.u_jet[1]
        W = self.grad(df)
        # d_i W^i with W^i = g^{ij} f_j, plus the log(sqrt det g) gradient Gamma^m_mi
        dW = np.einsum("nijp,nj->nip", self.dginv, df) + np.einsum("nij,njp->nip", self.ginv, d2f)
        div_plain = np.einsum("nii->n", dW) + np.einsum("nmmi,ni->n", self.christoffel, W)
        div_weighted = div_plain + e * np.einsum("ni,ni->n", du, W)
        return self.Vpow(e - self.tau) * div_weighted

    def _d_gradient_jet(self, df, d2f):
        c = self.gamma - self.alpha
        du = self.u_jet[1]
        E = self.Vpow(c)
        P = self.grad(df)
        dP = np.einsum("nklp,nl->nkp", self.dginv, df) + np.einsum("nkl,nlp->nkp", self.ginv, d2f)
        X = E[:, None] * P
        dX = E[:, None, None] * (c * np.einsum("np,nk->nkp", du, P) + dP)
        return X, dX

    @cached_property
    def d2ginv(self) -> np.ndarray:
        """``d2ginv[k, l, i, j] = d_i d_j g^{kl}``."""
        ginv, dg, d2g, dginv = self.ginv, self.dg, self.d2g, self.dginv
        return -(
            np.einsum("nkaj,nabi,nbl->nklij", dginv, dg, ginv)
            + np.einsum("nka,nabij,nbl->nklij", ginv, d2g, ginv)
            + np.einsum("nka,nabi,nblj->nklij", ginv, dg, dginv)
        )

    def bochner_terms(self, jet3) -> dict[str, np.ndarray]:
        """Both sides of the pointwise Bochner identity for ``X = V^{gamma-alpha} grad f``.

        ``lhs = D_i(X^j D_j X^i - X^i D_j X^j)`` is expanded with exact
        derivatives of ``X`` and of the connection coefficients;
        ``rhs = D_i X^j D_j X^i - (D_j X^j)^2 + Ric^D(X, X)`` uses the commutator
        Ricci tensor, and ``rhs_closed`` the D-Hessian/closed Ricci form.
        """
        f, df, d2f, d3f = jet3
        c = self.gamma - self.alpha
        _, du, d2u = self.u_jet
        A, dA = self.coeffs, self.dcoeffs
        E = self.Vpow(c)
        dE = c * E[:, None] * du
        d2E = E[:, None, None] * (c * c * np.einsum("ni,nj->nij", du, du) + c * d2u)

        P = self.grad(df)
        dP = np.einsum("nkli,nl->nki", self.dginv, df) + np.einsum("nkl,nli->nki", self.ginv, d2f)
        d2ginv = self.d2ginv
        d2P = (
            np.einsum("nklij,nl->nkij", d2ginv, df)
            + np.einsum("nkli,nlj->nkij", self.dginv, d2f)
            + np.einsum("nklj,nli->nkij", self.dginv, d2f)
            + np.einsum("nkl,nlij->nkij", self.ginv, d3f)
        )
        X = E[:, None] * P
        dX = np.einsum("ni,nk->nki", dE, P) + E[:, None, None] * dP  # d_i X^k -> [k, i]
        d2X = (
            np.einsum("nij,nk->nkij", d2E, P)
            + np.einsum("ni,nkj->nkij", dE, dP)
            + np.einsum("nj,nki->nkij", dE, dP)
            + E[:, None, None, None] * d2P
        )
        # DX[k, j] = D_j X^k
        DX = dX + np.einsum("nkjm,nm->nkj", A, X)
        # dDX[k, j, i] = d_i (D_j X^k)
        dDX = (
            np.einsum("nkji->nkji", d2X)
            + np.einsum("nkjmi,nm->nkji", dA, X)
            + np.einsum("nkjm,nmi->nkji", A, dX)
        )
        trDX = np.einsum("njj->n", DX)
        dtrDX = np.einsum("njji->ni", dDX)
        Y = np.einsum("nj,nij->ni", X, DX) - X * trDX[:, None]
        divY = (
            np.einsum("nji,nij->n", dX, DX)
            + np.einsum("nj,niji->n", X, dDX)
            - np.einsum("nii->n", dX) * trDX
            - np.einsum("ni,ni->n", X, dtrDX)
        )
        lhs = divY + np.einsum("niik,nk->n", A, Y)
        ric = self.ricci_D_direct
        rhs = np.einsum("nji,nij->n", DX, DX) - trDX**2 + np.einsum("nji,ni,nj->n", ric, X, X)
        H = self.d_hessian(df, d2f)
        lapD = self.trace(H)
        rhs_closed = (
            self.norm2_bilinear(H) - lapD**2 + np.einsum("nij,ni,nj->n", self.ricci_D_closed, X, X)
        )
        return {"lhs": lhs, "rhs": rhs, "rhs_closed": rhs_closed}


# ---------------------------------------------------------------------------
# Point-wise wrappers
# ---------------------------------------------------------------------------


def _local(C: AffineConnection, p):
    pts, single = _as_batch(p)
    return LocalConnection(C, pts), single


def _as_field(C: AffineConnection, f):
    return dsl.field(f, C.triple.dim) if isinstance(f, str) else f


def connection_coeffs_at(C: AffineConnection, p) -> np.ndarray:
    L, single = _local(C, p)
    return _maybe_single(L.coeffs, single)


def torsion_at(C: AffineConnection, p) -> np.ndarray:
    L, single = _local(C, p)
    return _maybe_single(L.torsion, single)


def ricci_D_direct_at(C: AffineConnection, p) -> np.ndarray:
    L, single = _local(C, p)
    return _maybe_single(L.ricci_D_direct, single)


def ricci_D_closed_at(C: AffineConnection, p) -> np.ndarray:
    L, single = _local(C, p)
    return _maybe_single(L.ricci_D_closed, single)


def d_gradient_at(C: AffineConnection, f, p) -> np.ndarray:
    L, single = _local(C, p)
    _, df = L.jet(_as_field(C, f), 1)
    return _maybe_single(L.d_gradient(df), single)


def d_hessian_at(C: AffineConnection, f, p) -> np.ndarray:
    L, single = _local(C, p)
    _, df, d2f = L.jet(_as_field(C, f), 2)
    return _maybe_single(L.d_hessian(df, d2f), single)


def d_laplacian_at(C: AffineConnection, f, p):
    L, single = _local(C, p)
    _, df, d2f = L.jet(_as_field(C, f), 2)
    out = L.d_laplacian(df, d2f)
    return float(out[0]) if single else out


def weighted_divergence_residual(C: AffineConnection, W: Sequence, p):
    """``|V^tau D_i W^i - div(V^tau W)|`` for a vector field ``W`` of Fields."""
    L, single = _local(C, p)
    n = C.triple.dim
    Wf = [_as_field(C, w) for w in W]
    if len(Wf) != n:
        raise ValueError("vector field needs one component per coordinate")
    jets = [w.jet(L.points, 1) for w in Wf]
    Wv = np.stack([j[0] for j in jets], axis=1)
    dW = np.stack([j[1] for j in jets], axis=1)  # [i, p] = d_p W^i
    Vt = L.Vpow(L.tau)
    div_D = np.einsum("nii->n", dW) + np.einsum("niik,nk->n", L.coeffs, Wv)
    du = L.u_jet[1]
    # d_i (V^tau W^i) + Gamma^i_ik V^tau W^k
    div_lc = Vt * (
        L.tau * np.einsum("ni,ni->n", du, Wv)
        + np.einsum("nii->n", dW)
        + np.einsum("niik,nk->n", L.christoffel, Wv)
    )
    res = np.abs(Vt * div_D - div_lc)
    return float(res[0]) if single else res


def bochner_residual_at(C: AffineConnection, f, p, form: str = "commutator"):
    """Pointwise residual of the Bochner identity for ``X = grad^D f``.

    ``form="commutator"`` compares against the commutator Ricci tensor,
    ``form="closed"`` against the D-Hessian/closed-form Ricci expression.
    """
    L, single = _local(C, p)
    jet = L.jet(_as_field(C, f), 3)
    t = L.bochner_terms(jet)
    key = {"commutator": "rhs", "closed": "rhs_closed"}[form]
    res = np.abs(t["lhs"] - t[key])
    return float(res[0]) if single else res


def symmetrize(B: np.ndarray) -> np.ndarray:
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def ricci_crosscheck(C: AffineConnection, points) -> float:
    """Max relative gap between the symmetrized commutator Ricci tensor and the closed form."""
    L = C.local(np.atleast_2d(points))
    direct = symmetrize(L.ricci_D_direct)
    closed = L.ricci_D_closed
    gap = np.max(np.abs(direct - closed), axis=(1, 2))
    scale = 1.0 + np.max(np.abs(closed), axis=(1, 2))
    return float(np.max(gap / scale))


def static_ricci_at(T: RiemannianTriple, p) -> np.ndarray:
    """``Ric - hess V / V + (lap V / V) g`` assembled from the Field ``V = exp(u)``."""
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    Vf = dsl.Field(dsl.exp(T.u.expr), T.dim)
    V, dV, d2V = Vf.jet(pts, 2)
    H = G.hessian(dV, d2V)
    out = G.ricci - H / V[:, None, None] + (G.trace(H) / V)[:, None, None] * G.g
    return _maybe_single(out, single)


def bakry_emery_ricci_at(T: RiemannianTriple, p) -> np.ndarray:
    """``Ric - hess u + du (x) du / (n - 1)`` assembled from the Field ``V = exp(u)``.

    Uses ``hess u = hess V / V - dV (x) dV / V^2`` and ``du = dV / V``.
    """
    pts, single = _as_batch(p)
    G = LocalGeometry(T, pts)
    Vf = dsl.Field(dsl.exp(T.u.expr), T.dim)
    V, dV, d2V = Vf.jet(pts, 2)
    dVdV = np.einsum("ni,nj->nij", dV, dV) / (V * V)[:, None, None]
    out = G.ricci - G.hessian(dV, d2V) / V[:, None, None] + dVdV * (1.0 + 1.0 / (T.dim - 1))
    return _maybe_single(out, single)
