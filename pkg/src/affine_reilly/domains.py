"""Catalog of bounded domains and tensor-product Gauss-Legendre quadrature.

A domain is the image of a parameter box under a smooth map into the
chart of a triple.  Boundary patches are the images of selected faces of
the box; faces that collapse onto a coordinate axis or that are glued by
periodicity are simply not listed.  Gauss nodes are interior, so the
degenerate loci of polar-type maps are never evaluated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from . import field_dsl as dsl
from .boundary import BoundaryLocal, BoundaryPatch
from .field_dsl import Field
from .geometry import Box, LocalGeometry, RiemannianTriple, catalog_triple


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class RadialModel:
    """Data for rotationally symmetric reductions.

    ``coordinate`` is the radial/latitude coordinate ``s`` as a chart Field,
    ``ray`` maps ``s`` to a chart point, and ``area(T)`` returns the total
    measure of the level set ``{s = const}`` as a Field of ``s``.
    """

    interval: tuple[float, float]
    axis_at_start: bool
    axis_at_end: bool
    coordinate: Field
    ray: tuple[Field, ...]
    area: Callable[[RiemannianTriple], Field]


@dataclass(frozen=True)
class DomainSpec:
    name: str
    dim: int
    triple: str
    volume_map: tuple[Field, ...]
    param_box: Box
    boundary_faces: tuple[tuple[int, int], ...] = ()
    radial: RadialModel | None = None
    has_corners: bool = False
    periodic: tuple[int, ...] = ()
    params: dict = dc_field(default_factory=dict, compare=False, hash=False)

    @property
    def closed(self) -> bool:
        return not self.boundary_faces

    def boundary_patches(self) -> list[BoundaryPatch]:
        patches = []
        n = self.dim
        for axis, side in self.boundary_faces:
            value = self.param_box[axis][side]
            mapping = {}
            for k in range(n):
                if k == axis:
                    mapping[k] = dsl.const(value)
                else:
                    mapping[k] = dsl.var(k if k < axis else k - 1)
            comps = tuple(Field(dsl.substitute(f.expr, mapping), n - 1) for f in self.volume_map)
            box = tuple(b for k, b in enumerate(self.param_box) if k != axis)
            patches.append(BoundaryPatch(comps, box, 1, f"{self.name}[{axis},{side}]"))
        return patches

    def face_periodic(self, index: int) -> tuple[int, ...]:
        axis = self.boundary_faces[index][0]
        return tuple(k if k < axis else k - 1 for k in self.periodic if k != axis)

    def face_transversal(self, index: int) -> tuple[tuple[Field, ...], float]:
        """Outward-pointing parameter derivative of the volume map on a face."""
        axis, side = self.boundary_faces[index]
        n = self.dim
        value = self.param_box[axis][side]
        mapping = {k: (dsl.const(value) if k == axis else dsl.var(k if k < axis else k - 1)) for k in range(n)}
        comps = tuple(Field(dsl.substitute(dsl.diff(f.expr, axis), mapping), n - 1) for f in self.volume_map)
        return comps, (1.0 if side == 1 else -1.0)

    def to_json(self) -> dict:
        return {"domain": self.name, "dim": self.dim, "triple": self.triple, **self.params}


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


def _fields(srcs: Sequence[str], dim: int) -> tuple[Field, ...]:
    return tuple(dsl.parse(s, dim) for s in srcs)


def _sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _const_area(expr: str) -> Callable[[RiemannianTriple], Field]:
    return lambda T: dsl.parse(expr, 1)


def _euclid_polar_map(n: int, radius_scale: Sequence[float]) -> tuple[str, ...]:
    a = radius_scale
    if n == 2:
        return (f"{a[0]!r}*x1*cos(x2)", f"{a[1]!r}*x1*sin(x2)")
    if n == 3:
        return (
            f"{a[0]!r}*x1*sin(x2)*cos(x3)",
            f"{a[1]!r}*x1*sin(x2)*sin(x3)",
            f"{a[2]!r}*x1*cos(x2)",
        )
    raise DomainError("Euclidean ball/ellipsoid catalog supports n = 2, 3")


def _angle_box(n: int) -> Box:
    if n == 2:
        return ((0.0, 2 * math.pi),)
    return ((0.0, math.pi), (0.0, 2 * math.pi))


def ball(dim: int, radius: float = 1.0) -> DomainSpec:
    n = dim
    R = float(radius)
    vmap = _fields(_euclid_polar_map(n, [1.0] * n), n)
    s_src = "sqrt(" + " + ".join(f"x{k}^2" for k in range(1, n + 1)) + ")"
    ray = _fields(["x1"] + ["0"] * (n - 1), 1)
    radial = RadialModel(
        (0.0, R), True, False, dsl.parse(s_src, n), ray,
        _const_area(f"{_sphere_area(n)!r}*x1^{n - 1}"),
    )
    return DomainSpec(
        f"ball{n}", n, f"euclidean-{n}", vmap, ((0.0, R),) + _angle_box(n), ((0, 1),), radial,
        periodic=(n - 1,), params={"radius": R},
    )


def annulus(dim: int, r0: float, r1: float) -> DomainSpec:
    n = dim
    vmap = _fields(_euclid_polar_map(n, [1.0] * n), n)
    s_src = "sqrt(" + " + ".join(f"x{k}^2" for k in range(1, n + 1)) + ")"
    ray = _fields(["x1"] + ["0"] * (n - 1), 1)
    radial = RadialModel(
        (float(r0), float(r1)), False, False, dsl.parse(s_src, n), ray,
        _const_area(f"{_sphere_area(n)!r}*x1^{n - 1}"),
    )
    name = "annulus" if n == 2 else f"shell{n}"
    return DomainSpec(
        name, n, f"euclidean-{n}", vmap, ((float(r0), float(r1)),) + _angle_box(n), ((0, 0), (0, 1)),
        radial, periodic=(n - 1,), params={"r0": float(r0), "r1": float(r1)},
    )


def ellipsoid(axes: Sequence[float]) -> DomainSpec:
    axes = [float(a) for a in axes]
    n = len(axes)
    vmap = _fields(_euclid_polar_map(n, axes), n)
    name = "ellipsoid" if n == 3 else "ellipse"
    return DomainSpec(
        name, n, f"euclidean-{n}", vmap, ((0.0, 1.0),) + _angle_box(n), ((0, 1),), None,
        periodic=(n - 1,), params={"axes": axes},
    )


def box(lengths: Sequence[float]) -> DomainSpec:
    L = [float(x) for x in lengths]
    n = len(L)
    vmap = _fields([f"x{k}" for k in range(1, n + 1)], n)
    faces = tuple((k, s) for k in range(n) for s in (0, 1))
    return DomainSpec(
        "box", n, f"euclidean-{n}", vmap, tuple((0.0, x) for x in L), faces, None, True,
        params={"lengths": L},
    )


def polar_disk(radius: float = 1.0) -> DomainSpec:
    R = float(radius)
    vmap = _fields(["x1", "x2"], 2)
    radial = RadialModel((0.0, R), True, False, dsl.parse("x1", 2), _fields(["x1", "0"], 1),
                         _const_area(f"{2 * math.pi!r}*x1"))
    return DomainSpec("polar-disk", 2, "polar-2", vmap, ((0.0, R), (0.0, 2 * math.pi)), ((0, 1),), radial,
                      periodic=(1,), params={"radius": R})


def polar_annulus(r0: float, r1: float) -> DomainSpec:
    vmap = _fields(["x1", "x2"], 2)
    radial = RadialModel((float(r0), float(r1)), False, False, dsl.parse("x1", 2), _fields(["x1", "0"], 1),
                         _const_area(f"{2 * math.pi!r}*x1"))
    return DomainSpec("polar-annulus", 2, "polar-2", vmap, ((float(r0), float(r1)), (0.0, 2 * math.pi)),
                      ((0, 0), (0, 1)), radial, periodic=(1,), params={"r0": float(r0), "r1": float(r1)})


def cap(theta_max: float) -> DomainSpec:
    t = float(theta_max)
    vmap = _fields(["x1", "x2"], 2)
    radial = RadialModel((0.0, t), True, False, dsl.parse("x1", 2), _fields(["x1", "0"], 1),
                         _const_area(f"{2 * math.pi!r}*sin(x1)"))
    return DomainSpec("cap", 2, "sphere-2", vmap, ((0.0, t), (0.0, 2 * math.pi)), ((0, 1),), radial,
                      periodic=(1,), params={"theta_max": t})


def band(theta0: float, theta1: float) -> DomainSpec:
    vmap = _fields(["x1", "x2"], 2)
    radial = RadialModel((float(theta0), float(theta1)), False, False, dsl.parse("x1", 2),
                         _fields(["x1", "0"], 1), _const_area(f"{2 * math.pi!r}*sin(x1)"))
    return DomainSpec("band", 2, "sphere-2", vmap, ((float(theta0), float(theta1)), (0.0, 2 * math.pi)),
                      ((0, 0), (0, 1)), radial, periodic=(1,),
                      params={"theta0": float(theta0), "theta1": float(theta1)})


def sphere(dim: int) -> DomainSpec:
    n = dim
    vmap = _fields([f"x{k}" for k in range(1, n + 1)], n)
    area = f"{_sphere_area(n)!r}*sin(x1)^{n - 1}"
    radial = RadialModel((0.0, math.pi), True, True, dsl.parse("x1", n),
                         _fields(["x1"] + [repr(math.pi / 2)] * (n - 2) + ["0"], 1), _const_area(area))
    pbox = tuple((0.0, math.pi) for _ in range(n - 1)) + ((0.0, 2 * math.pi),)
    return DomainSpec(f"sphere{n}", n, f"sphere-{n}", vmap, pbox, (), radial, periodic=(n - 1,))


def hyperbolic_ball(rho: float) -> DomainSpec:
    """Geodesic ball of radius ``rho`` about (0, 1) in the upper half-plane."""
    r = float(rho)
    c, s = math.cosh(r), math.sinh(r)
    vmap = _fields([f"{s!r}*x1*cos(x2)", f"{c!r} + {s!r}*x1*sin(x2)"], 2)
    z = "(1 + (x1^2 + (x2 - 1)^2)/(2*x2))"
    coord = dsl.parse(f"log({z} + sqrt({z}^2 - 1))", 2)
    radial = RadialModel((0.0, r), True, False, coord, _fields(["0", "exp(x1)"], 1),
                         _const_area(f"{2 * math.pi!r}*sinh(x1)"))
    return DomainSpec("hball", 2, "hyperbolic-2", vmap, ((0.0, 1.0), (0.0, 2 * math.pi)), ((0, 1),), radial,
                      periodic=(1,), params={"rho": r})


def _warped_area(T: RiemannianTriple) -> Field:
    ray = _fields(["x1", "0"], 1)
    g22 = T.g[1][1].compose(ray)
    return Field(dsl.const(2 * math.pi) * dsl.sqrt(g22.expr), 1)


def warped_band(r0: float, r1: float) -> DomainSpec:
    vmap = _fields(["x1", "x2"], 2)
    radial = RadialModel((float(r0), float(r1)), False, False, dsl.parse("x1", 2), _fields(["x1", "0"], 1),
                         _warped_area)
    return DomainSpec("warped-band", 2, "warped", vmap, ((float(r0), float(r1)), (0.0, 2 * math.pi)),
                      ((0, 0), (0, 1)), radial, periodic=(1,), params={"r0": float(r0), "r1": float(r1)})


CATALOG_DOMAINS = {
    "ball2": "ball2:1",
    "ball3": "ball3:1",
    "annulus": "annulus:0.5,1",
    "shell3": "shell3:0.5,1",
    "ellipse": "ellipse:1.5,1",
    "ellipsoid": "ellipsoid:1.5,1,1",
    "box": "box:1,1",
    "polar-disk": "polar-disk:1",
    "polar-annulus": "polar-annulus:0.5,1.5",
    "cap": "cap:1.0471975511965976",
    "band": "band:0.5,2",
    "sphere2": "sphere2",
    "sphere3": "sphere3",
    "hball": "hball:1",
    "warped-band": "warped-band:0.5,1.5",
}


def parse_domain(spec: str | dict) -> DomainSpec:
    """Compact form ``ball3:1.0``, ``ellipsoid:1.5,1,1``, ``cap:1.047`` or a JSON dict."""
    if isinstance(spec, dict):
        return _domain_from_json(spec)
    text = spec.strip()
    if text.startswith("{"):
        return _domain_from_json(json.loads(text))
    if text in CATALOG_DOMAINS and ":" not in text:
        text = CATALOG_DOMAINS[text]
    name, _, rest = text.partition(":")
    try:
        nums = [float(x) for x in rest.split(",")] if rest else []
    except ValueError:
        raise DomainError(f"bad domain parameters in {spec!r}") from None

    def need(k):
        if len(nums) != k:
            raise DomainError(f"domain {name!r} takes {k} parameter(s)")
        return nums

    if name in ("ball2", "ball3"):
        return ball(int(name[-1]), need(1)[0] if nums else 1.0)
    if name == "annulus":
        return annulus(2, *need(2))
    if name == "shell3":
        return annulus(3, *need(2))
    if name in ("ellipsoid", "ellipse"):
        need(3 if name == "ellipsoid" else 2)
        return ellipsoid(nums)
    if name == "box":
        return box(nums or [1.0, 1.0])
    if name == "polar-disk":
        return polar_disk(need(1)[0] if nums else 1.0)
    if name == "polar-annulus":
        return polar_annulus(*need(2))
    if name == "cap":
        return cap(need(1)[0])
    if name == "band":
        return band(*need(2))
    if name in ("sphere2", "sphere3"):
        return sphere(int(name[-1]))
    if name == "hball":
        return hyperbolic_ball(need(1)[0] if nums else 1.0)
    if name == "warped-band":
        return warped_band(*need(2))
    raise DomainError(f"unknown domain {name!r}")


def _domain_from_json(cfg: dict) -> DomainSpec:
    kind = cfg.get("domain")
    dim = cfg.get("dim")
    if kind == "ball":
        return ball(int(dim or 3), float(cfg.get("radius", 1.0)))
    if kind == "annulus":
        return annulus(int(dim or 2), float(cfg["r0"]), float(cfg["r1"]))
    if kind in ("ellipsoid", "ellipse"):
        return ellipsoid(cfg["axes"])
    if kind == "box":
        return box(cfg.get("lengths", [1.0] * int(dim or 2)))
    if kind == "cap":
        return cap(float(cfg["theta_max"]))
    if kind == "band":
        return band(float(cfg["theta0"]), float(cfg["theta1"]))
    if kind == "sphere":
        return sphere(int(dim or 2))
    if kind == "hball":
        return hyperbolic_ball(float(cfg.get("rho", 1.0)))
    if kind == "polar-disk":
        return polar_disk(float(cfg.get("radius", 1.0)))
    if kind == "polar-annulus":
        return polar_annulus(float(cfg["r0"]), float(cfg["r1"]))
    if kind == "warped-band":
        return warped_band(float(cfg["r0"]), float(cfg["r1"]))
    if kind == "custom":
        n = int(dim)
        vmap = tuple(dsl.parse(s, n) for s in cfg["map"])
        pbox = tuple((float(a), float(b)) for a, b in cfg["box"])
        faces = tuple((int(a), int(s)) for a, s in cfg.get("faces", []))
        return DomainSpec(cfg.get("name", "custom"), n, cfg.get("triple", f"euclidean-{n}"), vmap, pbox, faces,
                          None, bool(cfg.get("has_corners", False)),
                          periodic=tuple(int(k) for k in cfg.get("periodic", [])), params={"map": cfg["map"]})
    raise DomainError(f"unknown domain {kind!r}")


def default_triple(spec: DomainSpec, u="0") -> RiemannianTriple:
    return catalog_triple(spec.triple, u)


# ---------------------------------------------------------------------------
# Assembly and integration
# ---------------------------------------------------------------------------


def gauss_legendre(order: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def periodic_trapezoid(order: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint-shifted trapezoid rule; spectrally accurate for periodic integrands."""
    h = (b - a) / order
    return a + h * (np.arange(order) + 0.5), np.full(order, h)


def _tensor_nodes(pbox: Box, order: int, periodic: Sequence[int] = ()) -> tuple[np.ndarray, np.ndarray]:
    rules = [
        (periodic_trapezoid if k in periodic else gauss_legendre)(order, a, b) for k, (a, b) in enumerate(pbox)
    ]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, w


@dataclass
class BoundaryNodes:
    patch: BoundaryPatch
    params: np.ndarray
    param_weights: np.ndarray
    local: BoundaryLocal

    @property
    def points(self) -> np.ndarray:
        return self.local.X

    @property
    def weights(self) -> np.ndarray:
        return self.param_weights * self.local.area_element


@dataclass
class DomainAssembly:
    triple: RiemannianTriple
    spec: DomainSpec
    order: int
    params: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    jacobian: np.ndarray
    boundary: list[BoundaryNodes]
    periodic_rule: bool = True

    @property
    def volume_nodes(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.points, self.weights))

    @property
    def boundary_points(self) -> np.ndarray:
        if not self.boundary:
            return np.empty((0, self.triple.dim))
        return np.concatenate([b.points for b in self.boundary])

    @property
    def boundary_weights(self) -> np.ndarray:
        if not self.boundary:
            return np.empty(0)
        return np.concatenate([b.weights for b in self.boundary])

    def boundary_concat(self, fn: Callable[[BoundaryLocal], np.ndarray]) -> np.ndarray:
        if not self.boundary:
            return np.empty(0)
        return np.concatenate([fn(b.local) for b in self.boundary])

    def geometry(self) -> LocalGeometry:
        return LocalGeometry(self.triple, self.points)


def build_domain(
    T: RiemannianTriple, spec: DomainSpec, order: int = 32, periodic_rule: bool = True
) -> DomainAssembly:
    """Tensor-product nodes on the parameter box, pushed into the chart.

    Gauss-Legendre in every direction, except that axes that ``spec`` marks as
    periodic (full turns of an angle) use the shifted trapezoid rule unless
    ``periodic_rule`` is false.

    Volume weights carry ``|det dY| sqrt(det g)``, boundary weights the
    induced area element.  Raises :class:`DomainError` if a node leaves the
    chart box or the volume map degenerates at a node.
    """
    if order < 1:
        raise DomainError("quadrature order must be positive")
    if spec.dim != T.dim:
        raise DomainError(f"domain {spec.name} is {spec.dim}-dimensional, triple is {T.dim}")
    params, pw = _tensor_nodes(spec.param_box, order, spec.periodic if periodic_rule else ())
    jets = [f.jet(params, 1) for f in spec.volume_map]
    pts = np.stack([j[0] for j in jets], axis=1)
    DY = np.stack([j[1] for j in jets], axis=1)
    if not np.all(T.contains(pts)):
        raise DomainError(f"domain {spec.name} leaves the chart box of {T.name}")
    jac = np.abs(np.linalg.det(DY))
    if np.any(jac == 0):
        raise DomainError("volume map is singular at a quadrature node")
    G = LocalGeometry(T, pts)
    weights = pw * jac * G.sqrt_det

    boundary = []
    m = T.dim - 1
    for idx, patch in enumerate(spec.boundary_patches()):
        q, qw = _tensor_nodes(patch.param_box, order, spec.face_periodic(idx) if periodic_rule else ())
        local = BoundaryLocal(T, patch, q)
        if not np.all(T.contains(local.X)):
            raise DomainError(f"boundary of {spec.name} leaves the chart box")
        trans, sign = spec.face_transversal(idx)
        tv = np.stack([f.jet(q, 0)[0] for f in trans], axis=1)
        dots = sign * np.einsum("nk,nkl,nl->n", local.nu, local.G.g, tv)
        if np.all(dots < 0):
            patch = patch.with_orientation(-1)
            local = BoundaryLocal(T, patch, q)
        elif not np.all(dots > 0):
            raise DomainError(f"cannot orient boundary face {idx} of {spec.name} consistently")
        boundary.append(BoundaryNodes(patch, q, qw, local))
    return DomainAssembly(T, spec, order, params, pts, weights, jac, boundary, periodic_rule)


def refine(A: DomainAssembly) -> DomainAssembly:
    return build_domain(A.triple, A.spec, 2 * A.order, A.periodic_rule)


def _values(f, points: np.ndarray, dim: int) -> np.ndarray:
    if isinstance(f, np.ndarray):
        return f
    if isinstance(f, (str, Field)):
        return dsl.field(f, dim).eval_many(points)
    if isinstance(f, (int, float)):
        return np.full(points.shape[0], float(f))
    return np.asarray(f(points), dtype=float)


def weighted_sum(weights: np.ndarray, values: np.ndarray) -> float:
    """Correctly rounded, order-independent quadrature sum."""
    return math.fsum(np.asarray(weights * values, dtype=float).tolist())


def integrate_volume(A: DomainAssembly, f) -> float:
    """``int_Omega f dOmega``; ``f`` is a Field, expression, callable on points, or nodal array."""
    vals = _values(f, A.points, A.triple.dim)
    if vals.shape != A.weights.shape:
        raise ValueError("nodal values do not match the volume nodes")
    return weighted_sum(A.weights, vals)


def integrate_boundary(A: DomainAssembly, f) -> float:
    """``int_Sigma f dA`` over all boundary patches."""
    if not A.boundary:
        return 0.0
    if isinstance(f, np.ndarray):
        vals = f
    else:
        vals = np.concatenate([_values(f, b.points, A.triple.dim) for b in A.boundary])
    w = A.boundary_weights
    if vals.shape != w.shape:
        raise ValueError("nodal values do not match the boundary nodes")
    return weighted_sum(w, vals)


def volume(A: DomainAssembly) -> float:
    return weighted_sum(A.weights, np.ones_like(A.weights))


def area(A: DomainAssembly) -> float:
    return integrate_boundary(A, np.ones(A.boundary_weights.shape))


def divergence_theorem(A: DomainAssembly, W: Sequence, tau: float = 0.0) -> tuple[float, float]:
    """``(int_Omega div(V^tau W), int_Sigma V^tau <W, nu>)`` for a vector field of Fields."""
    T = A.triple
    n = T.dim
    Wf = [dsl.field(w, n) for w in W]
    if len(Wf) != n:
        raise ValueError("vector field needs one component per coordinate")
    G = LocalGeometry(T, A.points)
    jets = [w.jet(A.points, 1) for w in Wf]
    Wv = np.stack([j[0] for j in jets], axis=1)
    dW = np.stack([j[1] for j in jets], axis=1)
    u, du, _ = G.u_jet
    Vt = np.exp(tau * u)
    div = Vt * (
        np.einsum("nii->n", dW) + np.einsum("niik,nk->n", G.christoffel, Wv) + tau * np.einsum("ni,ni->n", du, Wv)
    )
    vol = weighted_sum(A.weights, div)
    vals = []
    for bn in A.boundary:
        b = bn.local
        Wb = np.stack([w.eval_many(b.X) for w in Wf], axis=1)
        vals.append(np.exp(tau * b.G.u_jet[0]) * np.einsum("ni,nij,nj->n", Wb, b.G.g, b.nu))
    bnd = weighted_sum(A.boundary_weights, np.concatenate(vals)) if vals else 0.0
    return vol, bnd


def _embedding(T: RiemannianTriple) -> list[str]:
    """Coordinates of a smooth embedding of the chart, so polynomials in them are smooth functions."""
    base, _, rest = T.name.partition("-")
    if base == "polar" and rest == "2":
        return ["x1*cos(x2)", "x1*sin(x2)"]
    if base == "polar" and rest == "3":
        return ["x1*sin(x2)*cos(x3)", "x1*sin(x2)*sin(x3)", "x1*cos(x2)"]
    if base == "sphere" and rest == "2":
        return ["sin(x1)*cos(x2)", "sin(x1)*sin(x2)", "cos(x1)"]
    if base == "sphere" and rest == "3":
        return ["sin(x1)*sin(x2)*cos(x3)", "sin(x1)*sin(x2)*sin(x3)", "sin(x1)*cos(x2)", "cos(x1)"]
    if base == "warped":
        return ["x1", "cos(x2)", "sin(x2)"]
    return [f"x{k + 1}" for k in range(T.dim)]


def smooth_vector_field(T: RiemannianTriple, seed: int = 0) -> list[str]:
    """Random smooth vector field, as chart components, for divergence checks.

    The gradient of a random cubic in embedding coordinates, plus a multiple
    of the rotation field along the last (angle) coordinate on rotational
    charts.  Plain chart polynomials would not be smooth across axes or
    periodic in the angle.
    """
    rng = np.random.default_rng(seed)
    emb = _embedding(T)
    terms = [f"{c:.6f}*{e}" for c, e in zip(rng.uniform(-1, 1, len(emb)), emb)]
    for i in range(len(emb)):
        for j in range(i, len(emb)):
            terms.append(f"{rng.uniform(-1, 1):.6f}*{emb[i]}*{emb[j]}")
    terms.append(f"{rng.uniform(-1, 1):.6f}*({emb[0]})^2*{emb[-1]}")
    n = T.dim
    F = dsl.parse(" + ".join(terms), n)
    diagonal = all(T.g[i][j].expr is dsl.ZERO or str(T.g[i][j]) in ("0", "0.0")
                   for i in range(n) for j in range(n) if i != j)
    if not diagonal:
        return [F.derivative([k]).source() for k in range(n)]
    W = [f"({F.derivative([k]).source()})/({T.g[k][k].source()})" for k in range(n)]
    if T.name.split("-")[0] in ("polar", "sphere", "warped"):
        W[-1] += f" + {rng.uniform(-1, 1):.6f}"
    return W
