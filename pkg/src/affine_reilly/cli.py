"""Command line interface: ``affine-reilly <command> [options]``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
or configuration errors.  Reports are JSON (schema field ``schema``);
nodal solutions are CSV.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from . import __version__
from . import field_dsl as dsl
from .connection import (
    AffineConnection,
    bochner_residual_at,
    ricci_crosscheck,
    weighted_divergence_residual,
)
from .domains import CATALOG_DOMAINS, DomainError, build_domain, divergence_theorem, parse_domain, smooth_vector_field
from .geometry import CATALOG_TRIPLES, MetricError, RiemannianTriple, catalog_triple, triple_from_json
from .inequalities import NOT_MET, VIOLATED, heintze_karcher, lichnerowicz, minkowski, poincare
from .pde import (
    IncompatibleData,
    NotSymmetric,
    SolverError,
    assemble_sturm_liouville,
    interval_problem,
    neumann_quotient,
    rayleigh_quotient,
    reduce_symmetric,
    solve_dirichlet,
    solve_eigen,
    solve_neumann,
    solve_source,
)
from .reilly import conformal_crosscheck, param_pairs, verify_identity

SCHEMA = "affine-reilly/report/1"

# Nontrivial default weights and test functions per catalog triple.
DEFAULT_U = {
    "euclidean-2": "0.3*x1 + 0.2*x2^2 - 0.1*x1*x2",
    "euclidean-3": "0.3*x1*x3 + 0.2*x2^2",
    "polar-2": "0.2*x1^2 + 0.1*cos(x2)*x1",
    "polar-3": "0.1*x1^2*cos(x2)",
    "sphere-2": "0.2*cos(x1) + 0.1*sin(x1)*cos(x2)",
    "sphere-3": "0.2*cos(x1) + 0.1*sin(x1)*cos(x2)",
    "hyperbolic-2": "0.3*x1 + 0.2*log(x2)",
    "hyperbolic-3": "0.1*x1*x2 + 0.3*x3",
    "warped": "0.2*x1^2 + 0.1*sin(x2)",
}
DEFAULT_PHI = {
    "euclidean-2": "x1*x2 + x2^3",
    "euclidean-3": "x1 + 0.2*x2*x3",
    "polar-2": "x1^2*cos(2*x2) + x1*sin(x2)",
    "polar-3": "x1^2*cos(x2) + x1*sin(x2)*sin(x3)",
    "sphere-2": "sin(x1)*cos(x2) + cos(x1)^2",
    "sphere-3": "cos(x1) + sin(x1)*cos(x2)",
    "hyperbolic-2": "x1*x2 + x2^2",
    "hyperbolic-3": "x1*x3 + x2^2",
    "warped": "x1^2*cos(x2)",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    triple: str | None = None
    domain: str | None = None
    alpha: float | None = None
    gamma: float | None = None
    u: str | None = None
    phi: str | None = None
    f: str | None = None
    order: int = 32
    nodes: int = 2000
    points: int = 100
    seed: int = 0
    tol: float | None = None
    out: str | None = None
    format: str = "json"

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        base = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
            unknown = set(base) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            if "tau" in base:
                raise ConfigError("tau is derived from alpha and gamma")
        for k in cls.__dataclass_fields__:
            v = getattr(args, k, None)
            if v is not None:
                base[k] = v
        return cls(**base)

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in ("out",)}


def normalize_triple_name(name: str) -> str:
    if name in CATALOG_TRIPLES:
        return name
    for t in CATALOG_TRIPLES:
        if name == t.replace("-", ""):
            return t
    raise ConfigError(f"unknown triple {name!r}; see `affine-reilly catalog`")


def load_triple(spec: str | None, u: str | None, default: str | None = None) -> RiemannianTriple:
    spec = spec or default
    if spec is None:
        raise ConfigError("--triple is required")
    if spec.strip().startswith("{"):
        T = triple_from_json(json.loads(spec))
        return T if u is None else T.with_weight(u)
    name = normalize_triple_name(spec)
    return catalog_triple(name, DEFAULT_U.get(name, "0") if u is None else u)


def _pairs(cfg: RunConfig, n: int) -> list[tuple[float, float]]:
    if cfg.alpha is None and cfg.gamma is None:
        return param_pairs(n)
    return [(cfg.alpha or 0.0, cfg.gamma or 0.0)]


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tolerance: float
    data: dict = dc_field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self, timing: bool) -> dict:
        out = {"name": self.name, "passed": bool(self.passed), "residual": float(self.residual),
               "tolerance": float(self.tolerance)}
        if self.data:
            out["data"] = self.data
        if timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class SuiteResult:
    subject: str
    config: dict
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self, timing: bool = False) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "suite",
            "subject": self.subject,
            "config": self.config,
            "checks": [c.to_json(timing) for c in self.checks],
            "passed": self.passed,
        }


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.3e}"


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _verify_ricci(cfg: RunConfig) -> SuiteResult:
    T = load_triple(cfg.triple, cfg.u, "sphere-2")
    tol = cfg.tol if cfg.tol is not None else 1e-8
    pts = T.sample_points(cfg.points, cfg.seed)
    checks = []
    for a, g in _pairs(cfg, T.dim):
        C = AffineConnection.of(T, a, g)
        res, dt = _timed(lambda: ricci_crosscheck(C, pts))
        checks.append(Check(f"ricci alpha={a:g} gamma={g:g}", res <= tol, res, tol, {}, dt))
    return SuiteResult("ricci", {"triple": T.name, "u": str(T.u), **cfg.to_json()}, checks)


def _verify_bochner(cfg: RunConfig) -> SuiteResult:
    T = load_triple(cfg.triple, cfg.u, "sphere-2")
    tol = cfg.tol if cfg.tol is not None else 1e-8
    phi = cfg.phi or DEFAULT_PHI.get(T.name, "x1*x2")
    pts = T.sample_points(min(cfg.points, 50) if cfg.points else 50, cfg.seed)
    checks = []
    for a, g in _pairs(cfg, T.dim):
        C = AffineConnection.of(T, a, g)
        for form in ("commutator", "closed"):
            res, dt = _timed(lambda: float(np.max(bochner_residual_at(C, phi, pts, form))))
            checks.append(Check(f"bochner {form} alpha={a:g} gamma={g:g}", res <= tol, res, tol, {}, dt))
    return SuiteResult("bochner", {"triple": T.name, "u": str(T.u), "phi": phi, **cfg.to_json()}, checks)


def _verify_divergence(cfg: RunConfig) -> SuiteResult:
    spec = parse_domain(cfg.domain) if cfg.domain else None
    T = load_triple(cfg.triple, cfg.u, spec.triple if spec else "sphere-2")
    n = T.dim
    W = smooth_vector_field(T, cfg.seed)
    tol = cfg.tol if cfg.tol is not None else 1e-10
    pts = T.sample_points(cfg.points, cfg.seed)
    checks = []
    for a, g in _pairs(cfg, n):
        C = AffineConnection.of(T, a, g)
        res = float(np.max(weighted_divergence_residual(C, W, pts)))
        checks.append(Check(f"pointwise alpha={a:g} gamma={g:g}", res <= tol, res, tol))
        if spec is not None:
            A = build_domain(T, spec, cfg.order)
            vol, bnd = divergence_theorem(A, W, C.tau)
            gap = abs(vol - bnd)
            checks.append(Check(f"stokes alpha={a:g} gamma={g:g}", gap <= 1e-8, gap, 1e-8,
                                {"volume": vol, "boundary": bnd}))
    return SuiteResult("divergence", {"triple": T.name, "u": str(T.u), "W": W, **cfg.to_json()}, checks)


def _verify_reilly(cfg: RunConfig) -> SuiteResult:
    spec = parse_domain(cfg.domain or "ball3")
    if spec.has_corners:
        raise ConfigError(f"domain {spec.name!r} has corners; the identity needs a smooth boundary")
    T = load_triple(cfg.triple, cfg.u, spec.triple)
    phi = cfg.phi or DEFAULT_PHI.get(spec.triple, "x1")
    tol = cfg.tol if cfg.tol is not None else 1e-6
    A = build_domain(T, spec, cfg.order)
    checks = []
    for a, g in _pairs(cfg, T.dim):
        r, dt = _timed(lambda: verify_identity(AffineConnection.of(T, a, g), A, phi, tol))
        checks.append(Check(f"reilly alpha={a:g} gamma={g:g}", r.passed, r.relative_residual, tol,
                            {"lhs": r.lhs, "rhs": r.rhs, "lhs_terms": r.lhs_terms, "rhs_terms": r.rhs_terms}, dt))
    return SuiteResult("reilly", {"triple": T.name, "u": str(T.u), "phi": phi, **cfg.to_json()}, checks)


def _verify_conformal(cfg: RunConfig) -> SuiteResult:
    spec = parse_domain(cfg.domain or "ball2")
    T = load_triple(cfg.triple, "0", spec.triple)
    u = cfg.u if cfg.u is not None else "0.1*x1"
    phi = cfg.phi or DEFAULT_PHI.get(spec.triple, "x1")
    alpha = 1.0 if cfg.alpha is None else cfg.alpha
    tol = cfg.tol if cfg.tol is not None else 1e-6
    r, dt = _timed(lambda: conformal_crosscheck(T, spec, u, alpha, phi, tol, cfg.order))
    checks = [
        Check("affine identity", r.affine.passed, r.affine.relative_residual, tol),
        Check("rescaled identity", r.rescaled.passed, r.rescaled.relative_residual, tol),
        Check("side agreement", max(r.lhs_agreement, r.rhs_agreement) <= tol,
              max(r.lhs_agreement, r.rhs_agreement), tol, {"term_agreement": r.term_agreement}, dt),
    ]
    return SuiteResult("conformal", {"triple": T.name, "u": u, "phi": phi, **cfg.to_json()}, checks)


VERIFY = {
    "ricci": _verify_ricci,
    "reilly": _verify_reilly,
    "bochner": _verify_bochner,
    "divergence": _verify_divergence,
    "conformal": _verify_conformal,
}


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _sl_problem(cfg: RunConfig):
    dom = cfg.domain or "ball2"
    if dom.startswith("interval"):
        _, _, rest = dom.partition(":")
        L = float(rest) if rest else math.pi
        u = cfg.u or "0"
        return interval_problem(L, u, cfg.alpha or 0.0, cfg.gamma or 0.0), None, None
    spec = parse_domain(dom)
    T = load_triple(cfg.triple, cfg.u if cfg.u is not None else "0", spec.triple)
    C = AffineConnection.of(T, cfg.alpha or 0.0, cfg.gamma or 0.0)
    return reduce_symmetric(C, spec), C, spec


def cmd_solve(args, cfg: RunConfig, out_stream) -> int:
    sl, C, spec = _sl_problem(cfg)
    problem = args.problem
    tol = cfg.tol
    checks: list[Check] = []
    if problem == "eigen":
        which = args.which or ("closed" if all(sl.axis) else "dirichlet")
        op = assemble_sturm_liouville(sl, cfg.nodes, which)
        eig = solve_eigen(op, which)
        values = eig.vector
        meta = {"lambda1": eig.lambda1, "rayleigh": eig.rayleigh, **eig.to_json()}
        gap = abs(eig.lambda1 - eig.rayleigh) / max(1.0, abs(eig.lambda1))
        checks.append(Check("rayleigh consistency", gap <= 1e-8, gap, 1e-8))
        sol_op = op if eig.sector == 0.0 else assemble_sturm_liouville(sl.with_mode(eig.sector), cfg.nodes, which)
        from .pde import Solution

        sol = Solution(sol_op, values, eig.residual, eig.iterations, "eigen", None, meta)
    elif problem == "dirichlet":
        op = assemble_sturm_liouville(sl, cfg.nodes, "dirichlet")
        sol = solve_dirichlet(op, cfg.f or 1.0)
        t = tol if tol is not None else 1e-8
        checks.append(Check("discrete residual", sol.residual <= t, sol.residual, t))
    elif problem == "neumann":
        op = assemble_sturm_liouville(sl, cfg.nodes, "neumann")
        c = "auto" if args.c in (None, "auto") else float(args.c)
        sol = solve_neumann(op, cfg.f or 1.0, c)
        if C is not None and (cfg.f in (None, "1")):
            q = neumann_quotient(C, build_domain(C.triple, spec, cfg.order))
            gap = abs(sol.c - q)
            sol.meta["c_quadrature"] = q
            checks.append(Check("neumann constant", gap <= 1e-10, gap, 1e-10))
        t = tol if tol is not None else 1e-8
        checks.append(Check("discrete residual", sol.residual <= t, sol.residual, t))
    elif problem == "source":
        bc = args.bc or ("closed" if all(sl.axis) else "dirichlet")
        op = assemble_sturm_liouville(sl, cfg.nodes, bc)
        if cfg.f is None:
            raise ConfigError("--f is required for source problems")
        sol = solve_source(op, cfg.f)
        t = tol if tol is not None else 1e-8
        checks.append(Check("discrete residual", sol.residual <= t, sol.residual, t))
    else:
        raise ConfigError(f"unknown problem {problem!r}")
    ok = bool(all(c.passed for c in checks))
    meta = {
        "schema": SCHEMA,
        "kind": "solution",
        "config": cfg.to_json(),
        **sol.metadata(),
        "checks": [c.to_json(False) for c in checks],
        "passed": ok,
    }
    text = sol.to_csv() if cfg.format == "csv" else json.dumps(meta, indent=2, sort_keys=True) + "\n"
    _emit(text, cfg.out, out_stream)
    summary = f"solve {problem}: " + ", ".join(f"{c.name} {_fmt(c.residual)} {'ok' if c.passed else 'FAIL'}" for c in checks)
    if "lambda1" in sol.meta:
        summary += f"; lambda1 = {sol.meta['lambda1']:.10g}"
    if sol.c is not None:
        summary += f"; c = {sol.c:.12g}"
    _summary(summary, cfg.out, out_stream)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# inequalities
# ---------------------------------------------------------------------------


def cmd_inequality(args, cfg: RunConfig, out_stream) -> int:
    spec = parse_domain(cfg.domain or "ball3")
    T = load_triple(cfg.triple, cfg.u if cfg.u is not None else "0", spec.triple)
    C = AffineConnection.of(T, cfg.alpha or 0.0, cfg.gamma or 0.0)
    A = build_domain(T, spec, cfg.order)
    which = args.which
    if which == "hk":
        rep = heintze_karcher(C, A)
    elif which == "minkowski":
        rep = minkowski(C, A)
    elif which == "lichnerowicz":
        bc = args.bc or ("closed" if not A.boundary else "dirichlet")
        rep = lichnerowicz(C, A, bc, cfg.nodes)
    elif which == "poincare":
        case = args.case or ("i" if not A.boundary else "iii")
        rep = poincare(C, A, cfg.f or "x1", case)
    else:
        raise ConfigError(f"unknown inequality {which!r}")
    out = rep.to_json()
    out["config"] = cfg.to_json()
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", cfg.out, out_stream)
    _summary(
        f"{rep.name}: status {rep.status}, lhs {_fmt(rep.lhs)}, rhs {_fmt(rep.rhs)}, slack {_fmt(rep.slack)}"
        + (", equality" if rep.equality else "")
        + (f", umbilicity defect {_fmt(rep.umbilicity_defect)}" if rep.umbilicity_defect is not None else ""),
        cfg.out,
        out_stream,
    )
    return 1 if rep.status == VIOLATED else 0


# ---------------------------------------------------------------------------
# catalog / schema
# ---------------------------------------------------------------------------


def catalog_listing() -> dict:
    triples = {}
    for name in CATALOG_TRIPLES:
        T = catalog_triple(name)
        triples[name] = {"dim": T.dim, "metric": [[str(f) for f in row] for row in T.g], "box": T.box,
                         "default_u": DEFAULT_U.get(name)}
    domains = {}
    for name, compact in CATALOG_DOMAINS.items():
        s = parse_domain(compact)
        domains[name] = {"example": compact, "triple": s.triple, "dim": s.dim, "closed": s.closed,
                         "symmetric": s.radial is not None, "corners": s.has_corners}
    domains["interval"] = {"example": "interval:3.141592653589793", "triple": None, "dim": 1, "closed": False,
                           "symmetric": True, "corners": False, "note": "solver only"}
    return {"schema": SCHEMA, "kind": "catalog", "triples": triples, "domains": domains,
            "parameter_pairs": [list(p) for p in param_pairs(3)]}


def report_schema() -> dict:
    num = {"type": ["number", "null"]}
    check = {
        "type": "object",
        "required": ["name", "passed", "residual", "tolerance"],
        "properties": {"name": {"type": "string"}, "passed": {"type": "boolean"}, "residual": num,
                       "tolerance": num, "data": {"type": "object"}, "wall_time": num},
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "affine-reilly report",
        "type": "object",
        "required": ["schema", "kind"],
        "properties": {
            "schema": {"const": SCHEMA},
            "kind": {"enum": ["suite", "solution", "inequality", "reilly", "catalog"]},
            "subject": {"type": "string"},
            "config": {"type": "object"},
            "checks": {"type": "array", "items": check},
            "passed": {"type": "boolean"},
            "lhs": num, "rhs": num, "slack": num, "relative_slack": num,
            "status": {"enum": ["holds", "violated", NOT_MET]},
            "equality": {"type": "boolean"},
            "umbilicity_defect": num,
            "certificates": {"type": "array"},
        },
    }


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _emit(text: str, path: str | None, stream):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stream.write(text)


def _summary(line: str, path: str | None, stream):
    # keep stdout machine-readable when the report goes there
    target = stream if path else sys.stderr
    target.write(line + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affine-reilly", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, domain=True):
        sp.add_argument("--config", help="JSON file with RunConfig fields (flags override it)")
        sp.add_argument("--triple", help="catalog name (sphere-2 or sphere2) or inline JSON")
        if domain:
            sp.add_argument("--domain", help="compact form such as ball3:1, ellipsoid:1.5,1,1, cap:1.047")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--u", help="weight expression u (V = exp(u))")
        sp.add_argument("--phi", help="test function expression")
        sp.add_argument("--f", help="source / trial function expression")
        sp.add_argument("--order", type=int, help="quadrature order")
        sp.add_argument("--nodes", type=int, help="grid nodes for the solvers")
        sp.add_argument("--points", type=int, help="random sample points")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--out", help="write the report here instead of standard output")
        sp.add_argument("--format", choices=["json", "csv"])

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("subject", choices=sorted(VERIFY))
    v.add_argument("--emit-terms", action="store_true", help="keep per-term breakdowns in the report")
    v.add_argument("--timing", action="store_true", help="include wall times (breaks byte-identical reports)")
    common(v)
    vr = sub.add_parser("verify-reilly", help="shorthand for `verify reilly`")
    vr.add_argument("--emit-terms", action="store_true")
    vr.add_argument("--timing", action="store_true")
    common(vr)

    s = sub.add_parser("solve", help="solve a boundary-value or eigenvalue problem")
    s.add_argument("--problem", required=True, choices=["dirichlet", "neumann", "eigen", "source"])
    s.add_argument("--which", choices=["closed", "dirichlet", "neumann"], help="eigenvalue problem")
    s.add_argument("--bc", choices=["closed", "dirichlet", "neumann"], help="boundary condition for source")
    s.add_argument("--c", help="Neumann constant or 'auto'")
    common(s)

    q = sub.add_parser("check-inequality", help="evaluate one inequality with its hypotheses")
    q.add_argument("--which", required=True, choices=["hk", "minkowski", "lichnerowicz", "poincare"])
    q.add_argument("--bc", choices=["closed", "dirichlet", "neumann"], help="eigenvalue problem for lichnerowicz")
    q.add_argument("--case", choices=["i", "ii", "iii"], help="alternative for poincare")
    common(q)

    sub.add_parser("catalog", help="list catalog triples and domains")
    sub.add_parser("report-schema", help="print the JSON schema of reports")
    return p


def _run_verify(args, cfg: RunConfig, subject: str, out_stream) -> int:
    res = VERIFY[subject](cfg)
    data = res.to_json(timing=args.timing)
    if not args.emit_terms:
        for c in data["checks"]:
            c.get("data", {}).pop("lhs_terms", None)
            c.get("data", {}).pop("rhs_terms", None)
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", cfg.out, out_stream)
    for c in res.checks:
        _summary(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: residual {_fmt(c.residual)} (tol {c.tolerance:g}, "
                 f"{c.wall_time:.2f}s)", cfg.out, out_stream)
    return 0 if res.passed else 1


def main(argv=None, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "catalog":
            _emit(json.dumps(catalog_listing(), indent=2, sort_keys=True) + "\n", None, out_stream)
            return 0
        if args.command == "report-schema":
            _emit(json.dumps(report_schema(), indent=2, sort_keys=True) + "\n", None, out_stream)
            return 0
        cfg = RunConfig.from_args(args)
        if args.command == "solve" and args.format is None and cfg.format == "json" and cfg.out and cfg.out.endswith(".csv"):
            cfg.format = "csv"
        if args.command == "verify":
            return _run_verify(args, cfg, args.subject, out_stream)
        if args.command == "verify-reilly":
            return _run_verify(args, cfg, "reilly", out_stream)
        if args.command == "solve":
            return cmd_solve(args, cfg, out_stream)
        if args.command == "check-inequality":
            return cmd_inequality(args, cfg, out_stream)
    except (ConfigError, DomainError, MetricError, NotSymmetric, IncompatibleData, KeyError, dsl.DSLError,
            OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
