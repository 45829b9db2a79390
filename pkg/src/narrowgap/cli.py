"""Command-line front end: config parsing, dispatch, CSV/JSON emission.

Config files are plain sectioned key=value text (see CONFIG_SCHEMA below and
the README).  Expressions use the polynomial grammar of parse_expression and
may be quoted.  Unknown sections or keys are rejected so typos fail loudly.
All outputs are deterministic: identical config + seed gives byte-identical
files.

Commands:
    validate  geometry hypothesis checks + operator ellipticity estimates
    solve     one epsilon: field CSV + bound-report JSON
    sweep     epsilon list: per-epsilon reports + rate-fit JSON
    mms       manufactured-solution convergence table
    report    consolidated summary of a results directory

Exit codes: 0 ok, 1 usage, 2 validation failure, 3 solver failure,
4 verification-gate failure.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .analysis import (AnalysisError, SweepProblem, analyze_solution, fit_rate,
                       gradient, sweep_grid, sweep_member)
from .auxiliary import BoundaryData
from .geometry import GapProfile, GeometryError, NarrowRegion, validate_profile
from .mesh_solver import MappedGrid, SolverError, solve_dirichlet
from .operators import (EllipticOperator, OperatorError, estimate_bounds,
                        estimate_ellipticity, make_builtin)
from .polynomial import ExpressionError, PolynomialField, parse_expression
from .verification import convergence_study, manufactured_problem

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_expression",
           "report_to_dict", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_GATE = 4


class ConfigError(ValueError):
    pass


# section -> key pattern -> short description; patterns are anchored regexes
CONFIG_SCHEMA = {
    "region": {
        "n": "space dimension (default 2)",
        "epsilon": "single gap parameter",
        "epsilons": "comma list of gap parameters",
        "r_solve": "tangential half-width of the solve box (default 1.0)",
        "r_analyze": "half region radius (default 0.5)",
        "h1": "top profile expression in x1..x{n-1}",
        "h2": "bottom profile expression",
    },
    "operator": {
        "kind": "laplace | lame | custom",
        "mu": "lame shear modulus",
        "lam": "lame first parameter",
        "N": "component count (custom)",
        r"A\.\d+\.\d+\.\d+\.\d+": "custom principal coefficient A.i.j.a.b",
        r"B\.\d+\.\d+\.\d+": "custom coefficient B.i.j.a",
        r"C\.\d+\.\d+\.\d+": "custom coefficient C.i.j.b",
        r"D\.\d+\.\d+": "custom coefficient D.i.j",
        "lambda": "claimed ellipticity lower bound (custom)",
        "Lambda": "claimed upper bound (custom)",
        "kappa2": "claimed coefficient C2 bound (custom)",
    },
    "data": {
        r"g_plus\.\d+": "top trace expression for component l",
        r"g_minus\.\d+": "bottom trace expression for component l",
    },
    "solver": {
        "nx": "tangential nodes per direction (default: sweep rule)",
        "nt": "vertical levels (default 33)",
        "tol": "relative residual tolerance (default 1e-10)",
        "method": "auto | direct | krylov",
    },
    "analysis": {
        "R0": "inner region radius (default 0.25)",
        "scenario": "free-form label recorded in reports",
        "metric": "center_grad | sup_grad (default center_grad)",
    },
    "flags": {
        "allow_degenerate_geometry": "accept kappa0 failure (flat gap)",
        "lateral_closure": "utilde | constant",
        "seed": "RNG seed for ellipticity trials (default 0)",
    },
}


def _match_key(section, key):
    schema = CONFIG_SCHEMA.get(section)
    if schema is None:
        raise ConfigError(f"unknown section [{section}]")
    for pat in schema:
        if re.fullmatch(pat, key):
            return
    raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _parse_sections(text, path="<config>"):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        _match_key(current, key)
        if key in sections[current]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value
    return sections


def _unquote(value):
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _as_bool(value, key):
    v = value.lower()
    if v in ("true", "1", "on"):
        return True
    if v in ("false", "0", "off"):
        return False
    raise ConfigError(f"{key} must be true or false, got {value!r}")


@dataclass
class RunConfig:
    n: int = 2
    epsilons: list = dc_field(default_factory=list)
    r_solve: float = 1.0
    r_analyze: float = 0.5
    h1_text: str = "0"
    h2_text: str = "0"
    op_kind: str = "laplace"
    op_params: dict = dc_field(default_factory=dict)
    g_plus_texts: list = dc_field(default_factory=list)
    g_minus_texts: list = dc_field(default_factory=list)
    nx: int | None = None
    nt: int = 33
    tol: float = 1e-10
    method: str | None = None
    R0: float = 0.25
    scenario: str = ""
    metric: str = "center_grad"
    allow_degenerate_geometry: bool = False
    lateral_closure: str = "utilde"
    seed: int = 0

    def profile(self):
        nd = self.n - 1
        return GapProfile(h1=parse_expression(self.h1_text, nvars=nd),
                          h2=parse_expression(self.h2_text, nvars=nd))

    def region(self, epsilon):
        return NarrowRegion(n=self.n, epsilon=epsilon, profile=self.profile(),
                            r_solve=self.r_solve, r_analyze=self.r_analyze)

    def operator(self):
        if self.op_kind in ("laplace", "lame"):
            kw = {}
            if self.op_kind == "lame":
                kw["lame_mu"] = self.op_params.get("mu", 1.0)
                kw["lame_lambda"] = self.op_params.get("lam", 1.0)
            return make_builtin(self.op_kind, n=self.n, **kw)
        return self._custom_operator()

    def _custom_operator(self):
        n = self.n
        N = int(self.op_params.get("N", 1))
        zero = PolynomialField.zero(n)
        A = np.full((N, N, n, n), zero, dtype=object)
        B = np.full((N, N, n), zero, dtype=object)
        Cc = np.full((N, N, n), zero, dtype=object)
        D = np.full((N, N), zero, dtype=object)
        for key, text in self.op_params.items():
            if not isinstance(text, str):
                continue
            parts = key.split(".")
            idx = tuple(int(p) - 1 for p in parts[1:])
            poly = parse_expression(text, nvars=n)
            if parts[0] == "A":
                A[idx] = A[idx] + poly
            elif parts[0] == "B":
                B[idx] = B[idx] + poly
            elif parts[0] == "C":
                Cc[idx] = Cc[idx] + poly
            elif parts[0] == "D":
                D[idx] = D[idx] + poly
        return EllipticOperator(
            n=n, N=N, A=A, B=B, Cc=Cc, D=D,
            lambda_claim=float(self.op_params.get("lambda", 1.0)),
            Lambda_claim=float(self.op_params.get("Lambda", 1.0)),
            kappa2_claim=float(self.op_params.get("kappa2", 1.0)),
            label="custom")

    def data(self):
        op = self.operator()
        nd = self.n - 1
        zero = PolynomialField.zero(nd)
        gp = [zero] * op.N
        gm = [zero] * op.N
        for l, text in enumerate(self.g_plus_texts):
            if text is not None:
                gp[l] = parse_expression(text, nvars=nd)
        for l, text in enumerate(self.g_minus_texts):
            if text is not None:
                gm[l] = parse_expression(text, nvars=nd)
        return BoundaryData(g_plus=tuple(gp), g_minus=tuple(gm))

    def sweep_problem(self):
        prob = SweepProblem(op=self.operator(), profile=self.profile(),
                            data=self.data(), n=self.n, r_solve=self.r_solve,
                            r_analyze=self.r_analyze,
                            lateral_closure=self.lateral_closure,
                            R0=self.R0, nt=self.nt, scenario=self.scenario)
        return prob


def load_config(path):
    text = Path(path).read_text()
    sections = _parse_sections(text, str(path))
    cfg = RunConfig()

    region = sections.get("region", {})
    if "h1" not in region or "h2" not in region:
        raise ConfigError("[region] must define h1 and h2")
    cfg.n = int(region.get("n", "2"))
    if cfg.n < 2:
        raise ConfigError("n must be >= 2")
    if "epsilon" in region and "epsilons" in region:
        raise ConfigError("[region] defines both epsilon and epsilons")
    if "epsilon" in region:
        cfg.epsilons = [float(region["epsilon"])]
    elif "epsilons" in region:
        cfg.epsilons = [float(tok) for tok in region["epsilons"].split(",") if tok.strip()]
    cfg.r_solve = float(region.get("r_solve", "1.0"))
    cfg.r_analyze = float(region.get("r_analyze", "0.5"))
    cfg.h1_text = _unquote(region["h1"])
    cfg.h2_text = _unquote(region["h2"])

    op = sections.get("operator", {"kind": "laplace"})
    cfg.op_kind = op.get("kind", "laplace")
    if cfg.op_kind not in ("laplace", "lame", "custom"):
        raise ConfigError(f"unknown operator kind {cfg.op_kind!r}")
    for key, value in op.items():
        if key == "kind":
            continue
        if key in ("mu", "lam", "lambda", "Lambda", "kappa2"):
            cfg.op_params[key] = float(value)
        elif key == "N":
            cfg.op_params[key] = int(value)
        else:
            cfg.op_params[key] = _unquote(value)

    data = sections.get("data", {})
    ncomp = 0
    for key in data:
        ncomp = max(ncomp, int(key.split(".")[1]))
    cfg.g_plus_texts = [None] * ncomp
    cfg.g_minus_texts = [None] * ncomp
    for key, value in data.items():
        side, l = key.split(".")
        l = int(l) - 1
        if side == "g_plus":
            cfg.g_plus_texts[l] = _unquote(value)
        else:
            cfg.g_minus_texts[l] = _unquote(value)

    solver = sections.get("solver", {})
    if "nx" in solver:
        cfg.nx = int(solver["nx"])
    cfg.nt = int(solver.get("nt", "33"))
    cfg.tol = float(solver.get("tol", "1e-10"))
    method = solver.get("method", "auto")
    cfg.method = None if method == "auto" else method
    if cfg.method not in (None, "direct", "krylov"):
        raise ConfigError(f"unknown solver method {method!r}")

    analysis = sections.get("analysis", {})
    cfg.R0 = float(analysis.get("R0", "0.25"))
    cfg.scenario = _unquote(analysis.get("scenario", ""))
    cfg.metric = analysis.get("metric", "center_grad")
    if cfg.metric not in ("center_grad", "sup_grad"):
        raise ConfigError(f"unknown metric {cfg.metric!r}")

    flags = sections.get("flags", {})
    if "allow_degenerate_geometry" in flags:
        cfg.allow_degenerate_geometry = _as_bool(
            flags["allow_degenerate_geometry"], "allow_degenerate_geometry")
    cfg.lateral_closure = flags.get("lateral_closure", "utilde")
    if cfg.lateral_closure not in ("utilde", "constant"):
        raise ConfigError(f"unknown lateral_closure {cfg.lateral_closure!r}")
    cfg.seed = int(flags.get("seed", "0"))
    return cfg


# ---------------------------------------------------------------------------
# emission


def _fmt(x):
    return "%.17g" % x


def report_to_dict(report, rate_fit=None):
    """BoundReport as the pinned JSON structure."""
    rf = None
    if rate_fit is not None:
        rf = {"slope": rate_fit.slope, "intercept": rate_fit.intercept,
              "r2": rate_fit.r2}
    return {
        "epsilon": report.epsilon,
        "sup_grad": report.sup_grad,
        "C_emp": report.C_emp,
        "c_low": report.c_low,
        "energy_half": report.energy_half,
        "F_delta0": report.F_delta0,
        "lemma_constants": {"k213": report.k213, "k219": report.k219,
                            "k220": report.k220, "k225": report.k225,
                            "k226": report.k226},
        "rate_fit": rf,
        "grid": {"nx": report.grid[0], "nt": report.grid[1]},
        "R0": report.R0,
        "scenario": report.scenario,
    }


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_field_csv(path, solution, gradfield):
    grid = solution.grid
    N = solution.N
    nd = grid.nd
    header = [f"x{d+1}" for d in range(nd)] + ["xn", "t"] \
        + [f"u_{j+1}" for j in range(N)] + ["grad_norm"]
    gn = gradfield.norm().ravel()
    vals = solution.values.reshape(N, -1)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(grid.nodes):
            row = [_fmt(grid.tang[k, d]) for d in range(nd)]
            row.append(_fmt(grid.xn_flat[k]))
            row.append(_fmt(grid.tvals[k]))
            row.extend(_fmt(vals[j, k]) for j in range(N))
            row.append(_fmt(gn[k]))
            fh.write(",".join(row) + "\n")


def _eps_tag(eps):
    return ("%g" % eps).replace(".", "p").replace("-", "m")


def _error_json(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)},
                                sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def _validate_payload(cfg):
    if not cfg.epsilons:
        raise ConfigError("validate needs an epsilon in [region]")
    region = cfg.region(cfg.epsilons[0])
    geo = validate_profile(region, allow_degenerate=cfg.allow_degenerate_geometry)
    op = cfg.operator()
    lam_est = estimate_ellipticity(op, region, seed=cfg.seed)
    Lam_est, kap_est = estimate_bounds(op, region)
    payload = {
        "epsilon": region.epsilon,
        "seed": cfg.seed,
        "geometry": {
            "passed": geo.passed,
            "degenerate_override": geo.degenerate_override,
            "min_eigenvalue": geo.min_eigenvalue,
            "c2_norm_h1": geo.c2_norm_h1,
            "c2_norm_h2": geo.c2_norm_h2,
            "c21_lower": geo.c21_lower,
            "c21_upper": geo.c21_upper,
            "checks": [{"name": c.name, "passed": c.passed,
                        "measured": c.measured, "threshold": c.threshold,
                        "detail": c.detail}
                       for c in geo.checks],
        },
        "operator": {
            "kind": cfg.op_kind,
            "lambda_claim": op.lambda_claim,
            "lambda_estimate": lam_est,
            "Lambda_claim": op.Lambda_claim,
            "Lambda_estimate": Lam_est,
            "kappa2_claim": op.kappa2_claim,
            "kappa2_estimate": kap_est,
            "symmetric": op.is_symmetric(),
            "elasticity_symmetries": op.has_elasticity_symmetries(),
        },
    }
    return payload, geo


def cmd_validate(cfg, args):
    payload, geo = _validate_payload(cfg)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "validate.json").write_text(text + "\n")
    print(text)
    if not geo.passed:
        failed = ", ".join(c.name for c in geo.failures())
        _error_json("validation", f"geometry hypothesis checks failed: {failed}")
        return EXIT_VALIDATION
    return EXIT_OK


def _solve_epsilon(cfg, eps):
    region = cfg.region(eps)
    geo = validate_profile(region, allow_degenerate=cfg.allow_degenerate_geometry)
    if not geo.passed:
        failed = ", ".join(c.name for c in geo.failures())
        raise GeometryError(f"geometry hypothesis checks failed: {failed}")
    nx = cfg.nx if cfg.nx is not None else sweep_grid(eps)
    grid = MappedGrid(region, nx, cfg.nt)
    sol = solve_dirichlet(cfg.operator(), grid, cfg.data(),
                          lateral_closure=cfg.lateral_closure,
                          tol=cfg.tol, method=cfg.method)
    report = analyze_solution(sol, cfg.data(), region, cfg.R0, cfg.scenario)
    return sol, report


def cmd_solve(cfg, args):
    if args.epsilon is not None:
        cfg.epsilons = [args.epsilon]
    if len(cfg.epsilons) != 1:
        raise ConfigError("solve needs exactly one epsilon "
                          "(config [region] epsilon or --epsilon)")
    eps = cfg.epsilons[0]
    sol, report = _solve_epsilon(cfg, eps)
    summary = report_to_dict(report)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        tag = _eps_tag(eps)
        _write_field_csv(outdir / f"field_eps{tag}.csv", sol, gradient(sol))
        _write_json(outdir / f"report_eps{tag}.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _sweep_worker(config_path, eps, allow_degenerate, seed):
    cfg = load_config(config_path)
    cfg.allow_degenerate_geometry = cfg.allow_degenerate_geometry or allow_degenerate
    if seed is not None:
        cfg.seed = seed
    geo = validate_profile(cfg.region(eps),
                           allow_degenerate=cfg.allow_degenerate_geometry)
    if not geo.passed:
        failed = ", ".join(c.name for c in geo.failures())
        raise GeometryError(f"geometry hypothesis checks failed: {failed}")
    prob = cfg.sweep_problem()
    value, report = sweep_member(prob, eps, cfg.metric, nx=cfg.nx)
    return eps, value, report_to_dict(report)


def cmd_sweep(cfg, args):
    if args.epsilons:
        eps_list = [float(tok) for tok in args.epsilons.split(",") if tok.strip()]
    else:
        eps_list = cfg.epsilons
    if len(eps_list) < 3:
        raise ConfigError("sweep needs at least 3 epsilons")
    eps_list = sorted(eps_list, reverse=True)
    jobs = max(1, args.jobs)
    work = [(args.config, eps, cfg.allow_degenerate_geometry, cfg.seed)
            for eps in eps_list]
    if jobs == 1:
        results = [_sweep_worker(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, *zip(*work)))
    results.sort(key=lambda r: -r[0])
    points = [(eps, value) for eps, value, _ in results]
    fit = fit_rate(points, metric=cfg.metric)
    payload = {
        "metric": cfg.metric,
        "seed": cfg.seed,
        "scenario": cfg.scenario,
        "points": [{"epsilon": e, "value": v} for e, v in points],
        "rate_fit": {"slope": fit.slope, "intercept": fit.intercept,
                     "r2": fit.r2},
        "conclusive": fit.conclusive,
    }
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        for eps, _, rep in results:
            _write_json(outdir / f"report_eps{_eps_tag(eps)}.json", rep)
        _write_json(outdir / "ratefit.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


DEFAULT_MMS_GRIDS = (17, 33, 65)


def _mms_spec(op):
    """A fixed smooth manufactured field per component: trigonometric in x1,
    low-order polynomial in t; frequencies staggered across components."""
    spec = []
    for i in range(op.N):
        spec.append([
            (1.0, [("sin", 1.0 + 0.3 * i, 0.2 * i)]
             + [("poly", 1.0, 0.5, 0.25)]),
        ])
    return spec


def cmd_mms(cfg, args):
    if not cfg.epsilons:
        raise ConfigError("mms needs an epsilon in [region]")
    if args.grids:
        sizes = [int(tok) for tok in args.grids.split(",") if tok.strip()]
    else:
        sizes = list(DEFAULT_MMS_GRIDS)
    if len(sizes) < 3:
        raise ConfigError("mms needs at least 3 grids")
    region = cfg.region(cfg.epsilons[0])
    op = cfg.operator()
    if region.nd != 1:
        raise ConfigError("the built-in mms field is defined for n=2")
    problem = manufactured_problem(op, region, _mms_spec(op))
    study = convergence_study(problem, [(m, m) for m in sizes])
    print("grid      err_inf        err_l2         order_inf order_l2")
    for k, (nx, nt) in enumerate(study.grids):
        oi = "%9.3f" % study.orders_inf[k - 1] if k else "        -"
        ol = "%8.3f" % study.orders_l2[k - 1] if k else "       -"
        print(f"{nx:3d}x{nt:<3d} {study.errors_inf[k]:14.6e} "
              f"{study.errors_l2[k]:14.6e} {oi} {ol}")
    ok = study.monotone and all(abs(o - 2.0) <= 0.2 for o in study.orders_inf)
    if not ok:
        _error_json("convergence",
                    f"observed orders {study.orders_inf} outside 2.0 +/- 0.2")
        return EXIT_GATE
    return EXIT_OK


def cmd_report(cfg, args):
    indir = Path(args.indir)
    if not indir.is_dir():
        raise ConfigError(f"not a directory: {indir}")
    reports = sorted(indir.glob("report_eps*.json"))
    lines = []
    for path in reports:
        rep = json.loads(path.read_text())
        c_low = "-" if rep["c_low"] is None else "%.4f" % rep["c_low"]
        lines.append(f"eps={rep['epsilon']:<8g} sup_grad={rep['sup_grad']:<12.6g} "
                     f"C_emp={rep['C_emp']:.4f} c_low={c_low} "
                     f"grid={rep['grid']['nx']}x{rep['grid']['nt']}")
    ratefit = indir / "ratefit.json"
    if ratefit.exists():
        rf = json.loads(ratefit.read_text())
        lines.append(f"rate[{rf['metric']}]: slope={rf['rate_fit']['slope']:.4f} "
                     f"r2={rf['rate_fit']['r2']:.6f} conclusive={rf['conclusive']}")
    validate = indir / "validate.json"
    if validate.exists():
        v = json.loads(validate.read_text())
        lines.append(f"geometry passed={v['geometry']['passed']} "
                     f"min_eig={v['geometry']['min_eigenvalue']:.6g} "
                     f"lambda_est={v['operator']['lambda_estimate']:.6g}")
    if not lines:
        raise ConfigError(f"no reports found in {indir}")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _error_json("usage", message)
        raise SystemExit(EXIT_USAGE)


def _build_parser():
    parser = _Parser(prog="narrowgap",
                     description="narrow-gap elliptic solver and bound checker")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--seed", type=int, default=None,
                       help="override [flags] seed")
        p.add_argument("--allow-degenerate-geometry", action="store_true",
                       help="accept kappa0 failure (flat gap)")
        return p

    p = add("validate", help="check geometry hypotheses and operator bounds")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)

    p = add("solve", help="solve one epsilon, emit field CSV + report JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", default=None)

    p = add("sweep", help="solve an epsilon list and fit the blow-up rate")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilons", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = add("mms", help="manufactured-solution convergence study")
    p.add_argument("--config", required=True)
    p.add_argument("--grids", default=None)

    p = add("report", help="summarize a results directory")
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="indir", required=True)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.allow_degenerate_geometry:
            cfg.allow_degenerate_geometry = True
        handler = {"validate": cmd_validate, "solve": cmd_solve,
                   "sweep": cmd_sweep, "mms": cmd_mms,
                   "report": cmd_report}[args.command]
        return handler(cfg, args)
    except (ConfigError, ExpressionError, FileNotFoundError) as exc:
        _error_json("config", exc)
        return EXIT_USAGE
    except (GeometryError, OperatorError) as exc:
        _error_json("validation", exc)
        return EXIT_VALIDATION
    except (SolverError,) as exc:
        _error_json("solver", exc)
        return EXIT_SOLVER
    except AnalysisError as exc:
        _error_json("gate", exc)
        return EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
