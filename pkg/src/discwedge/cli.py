"""Command line runner: ``discwedge run <config>``, ``discwedge report <manifest>``, ``discwedge selftest``.

Configs are JSON objects ``{"kind": ..., "seed": ..., "params": {...}}``.
Each run writes CSV tables, ``summary.json`` and ``manifest.json`` to the
output directory. Exit codes: 0 success, 1 usage error, 2 certificate failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bishop import BishopError
from .kobayashi import CertificateError as MetricCertificateError
from .regularity import HypothesisError

EXIT_OK, EXIT_USAGE, EXIT_CERTIFICATE = 0, 1, 2

DEFAULTS = {
    "discs": {
        "edge": "flat", "epsilon": 0.05, "n": 2, "points": 9, "N": 256, "c_range": 0.3,
        "t_range": [0.0, 0.3], "delta": 0.2, "fill_samples": 200, "fill_radius": 0.1,
        "foliation_samples": 200, "foliation_t0": 0.2,
    },
    "kobayashi": {
        "domain": {"kind": "ball", "n": 2}, "samples": 200, "degree": 3, "search_samples": 8,
        "C1": 1.0, "form": "sibony",
    },
    "regularity": {
        "thetas": [0.55, 0.75, 0.9], "n": 2, "rays": 16, "automorphism": [0.5, 0.0],
    },
    "domains-audit": {
        "domain": {"kind": "ellipsoid", "a": [1.0, 2.0]}, "samples": 64, "automorphisms": 4,
    },
    "selftest": {"N": 256, "degree": 64},
}
SAMPLING = {"discs", "kobayashi", "regularity", "domains-audit"}


class UsageError(Exception):
    pass


class CertificateFailure(Exception):
    def __init__(self, message, witnesses=None, summary=None):
        super().__init__(message)
        self.witnesses = witnesses or []
        self.summary = summary or {}


# ---------------------------------------------------------------------------
# config handling


def load_config(path, seed_override=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    return validate_config(data, seed_override)


def validate_config(data, seed_override=None) -> dict:
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - {"kind", "seed", "params", "out"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    kind = data.get("kind")
    if kind not in DEFAULTS:
        raise UsageError(f"unknown experiment kind {kind!r}; expected one of {sorted(DEFAULTS)}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise UsageError("params must be an object")
    bad = set(params) - set(DEFAULTS[kind])
    if bad:
        raise UsageError(f"unknown {kind} parameters: {sorted(bad)}")
    seed = seed_override if seed_override is not None else data.get("seed")
    if kind in SAMPLING and seed is None:
        raise UsageError(f"a seed is required for {kind} experiments")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise UsageError("seed must be a nonnegative integer")
    merged = dict(DEFAULTS[kind])
    merged.update(params)
    _check_values(kind, merged)
    return {"kind": kind, "seed": seed, "params": merged, "out": data.get("out")}


def _check_values(kind: str, p: dict) -> None:
    from .domains import domain_from_json

    if kind == "discs" and p["edge"] not in ("flat", "perturbed-flat"):
        raise UsageError(f"unknown edge {p['edge']!r}; expected 'flat' or 'perturbed-flat'")
    if kind in ("kobayashi", "domains-audit"):
        try:
            domain_from_json(p["domain"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid domain: {exc}") from exc
    if kind == "regularity":
        from .regularity import bootstrap_schedule

        try:
            for th in p["thetas"]:
                bootstrap_schedule(th)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid theta: {exc}") from exc


# ---------------------------------------------------------------------------
# output helpers


def _num(x) -> str:
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x))
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return repr(float(x))


def _vec(v) -> str:
    return " ".join(_num(complex(c)) for c in np.atleast_1d(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# experiments; each returns (summary, csv files written, warnings)


def run_discs(p: dict, seed: int, out: Path, jobs: int):
    from .bishop import (BishopProblem, DegenerateDisc, attachment_residual, fill_wedge_check, foliation_check,
                         parameter_grid, sample_edge_points, solve_family, transversal_grid,
                         transversality_margin)
    from .wedge import WedgeSpec, flat_graph, quadratic_graph

    n = int(p["n"])
    if p["edge"] == "flat":
        graph = flat_graph(n)
    else:
        graph = quadratic_graph(n, float(p["epsilon"]))
    template = BishopProblem(graph, np.zeros(n), np.zeros(n), N=int(p["N"]))
    fam = solve_family(template, *parameter_grid(n, int(p["points"]), float(p["c_range"]), tuple(p["t_range"])))
    rows = []
    for k in range(fam.size):
        disc = fam.member(k)
        try:
            margin = transversality_margin(disc, graph, np.pi / 2)
        except DegenerateDisc:
            margin = None  # constant disc (t = 0)
        rows.append([*fam.c(k), *fam.t(k), fam.iterations[k], fam.residual[k],
                     attachment_residual(disc, graph), margin])
    header = [f"c_{j + 1}" for j in range(n)] + [f"t_{j + 1}" for j in range(n)]
    header += ["iterations", "residual", "attachment_residual", "transversality_margin"]
    write_csv(out / "discs.csv", header, rows)

    wedge = WedgeSpec(graph.edge_spec(), float(p["delta"]))
    fill = fill_wedge_check(fam, wedge, int(p["fill_samples"]), seed, float(p["fill_radius"]))
    write_csv(out / "fill.csv", ["sample", "z", "covered"],
              [[i, _vec(z), ok] for i, (z, ok) in enumerate(zip(fill.samples, fill.success))])

    t0 = np.full(n, float(p["foliation_t0"]))
    sub = solve_family(template, *transversal_grid(t0, int(p["points"]), float(p["c_range"])))
    edge_pts = sample_edge_points(sub, int(p["foliation_samples"]), seed)
    fol = foliation_check(sub, edge_pts)
    write_csv(out / "foliation.csv", ["sample", "point", "multiplicity"],
              [[i, _vec(z), m] for i, (z, m) in enumerate(zip(edge_pts, fol.multiplicity))])

    threshold = 0.99 if graph.is_flat else 0.95
    summary = {
        "members": fam.size,
        "max_residual": float(np.max(fam.residual)),
        "max_iterations": int(np.max(fam.iterations)),
        "max_attachment_residual": float(max(r[-2] for r in rows)),
        "min_transversality_margin": float(min(r[-1] for r in rows if r[-1] is not None)),
        "coverage": float(fill.coverage),
        "coverage_threshold": threshold,
        "foliation_single_fraction": fol.single_fraction,
    }
    if fill.coverage < threshold:
        raise CertificateFailure(f"coverage {fill.coverage:.4f} below {threshold}",
                                 [_vec(z) for z in fill.failures], summary)
    warnings = []
    if fol.single_fraction < 0.99:
        warnings.append(f"foliation multiplicity 1 on only {fol.single_fraction:.4f} of edge samples")
    return summary, ["discs.csv", "fill.csv", "foliation.csv"], warnings


def _search_worker(args):
    from .domains import domain_from_json
    from .kobayashi import MetricQuery, extremal_disc_search

    dom_json, z, v, degree, seed = args
    q = MetricQuery(domain_from_json(dom_json), z, v)
    r = extremal_disc_search(q, degree, seed=seed)
    return r.value, r.fallback


def run_kobayashi(p: dict, seed: int, out: Path, jobs: int):
    from .domains import domain_from_json
    from .kobayashi import (exact_metric, fitted_constant, random_queries, sibony_lower_bracket,
                            upper_bound_inscribed)

    dom = domain_from_json(p["domain"])
    queries = random_queries(dom, int(p["samples"]), seed)
    brackets = [sibony_lower_bracket(q, C1=float(p["C1"]), form=p["form"], seed=seed) for q in queries]
    exact = [exact_metric(q) for q in queries]
    inscribed = [upper_bound_inscribed(q) for q in queries]
    m = min(int(p["search_samples"]), len(queries))
    tasks = [(p["domain"], q.z, q.v, int(p["degree"]), seed + i) for i, q in enumerate(queries[:m])]
    if jobs > 1 and m > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            searches = list(pool.map(_search_worker, tasks))
    else:
        searches = [_search_worker(t) for t in tasks]
    if all(e is not None for e in exact):
        fitted = fitted_constant(exact, brackets)
    else:
        fitted = None
    rows, violations = [], 0
    for i, q in enumerate(queries):
        search = searches[i][0] if i < m else None
        ex = exact[i]
        if ex is not None:
            bad = ex > inscribed[i] + 1e-9
            bad = bad or (search is not None and search < ex - 1e-9)
            bad = bad or (fitted is not None and fitted * brackets[i] > ex + 1e-9)
            violations += int(bad)
        rows.append([_vec(q.z), _vec(q.v), brackets[i], fitted, ex, search, inscribed[i]])
    write_csv(out / "kobayashi.csv",
              ["z", "v", "lower_bracket", "fitted_constant", "exact", "disc_search_upper", "inscribed_upper"], rows)
    summary = {"queries": len(queries), "fitted_constant": fitted, "sandwich_violations": violations,
               "searches": m, "search_fallbacks": int(sum(f for _, f in searches))}
    warnings = []
    if summary["search_fallbacks"]:
        warnings.append(f"{summary['search_fallbacks']} disc searches fell back to the inscribed ball")
    if violations:
        raise CertificateFailure(f"{violations} sandwich violations", summary=summary)
    return summary, ["kobayashi.csv"], warnings


def run_regularity(p: dict, seed: int, out: Path, jobs: int):
    from .domains import ball, ball_automorphism, identity_map
    from .regularity import (bootstrap_schedule, gradient_profiles, fit_power_law, holder_from_gradient,
                             modulus_of_continuity_fit, radial_power_warp)

    n = int(p["n"])
    B = ball(n)
    rows = []
    for th in p["thetas"]:
        step = bootstrap_schedule(th)
        alpha = float(step.alpha)
        fit = modulus_of_continuity_fit(radial_power_warp(alpha), B, int(p["rays"]), seed)
        rows.append([th, str(step.power), str(step.beta), str(step.alpha), str(holder_from_gradient(step.beta)),
                     alpha, fit.exponent, fit.r2])
    write_csv(out / "bootstrap.csv",
              ["theta", "power", "beta", "alpha", "holder_from_beta", "alpha_float", "fitted_alpha", "r2"], rows)

    a = np.zeros(n, dtype=complex)
    a[: len(p["automorphism"])] = p["automorphism"]
    maps = {"identity": identity_map(B), "automorphism": ball_automorphism(a)}
    fit_rows, ray_rows = [], []
    for name, f in maps.items():
        profiles = gradient_profiles(f, int(p["rays"]), seed)
        for r, prof in enumerate(profiles):
            for s, v in zip(prof.s, prof.values):
                ray_rows.append([name, r, s, v])
        fits = [fit_power_law(pr.s, pr.values) for pr in profiles]
        beta = max(-g.exponent for g in fits)
        fit_rows.append([name, "gradient_beta", beta, max(g.constant for g in fits), min(g.r2 for g in fits)])
        mod = modulus_of_continuity_fit(f, B, int(p["rays"]), seed)
        fit_rows.append([name, "modulus_alpha", mod.exponent, mod.constant, mod.r2])
    write_csv(out / "rays.csv", ["map", "ray", "s", "value"], ray_rows)
    write_csv(out / "fits.csv", ["map", "quantity", "exponent", "constant", "r2"], fit_rows)
    worst = max(abs(r[6] - r[5]) for r in rows)
    summary = {"thetas": list(p["thetas"]), "max_alpha_error": worst,
               "gradient_betas": {r[0]: r[2] for r in fit_rows if r[1] == "gradient_beta"}}
    warnings = []
    if worst > 0.03:
        warnings.append(f"fitted Holder exponent deviates by {worst:.3f} from 1/(2 theta)")
    return summary, ["bootstrap.csv", "rays.csv", "fits.csv"], warnings


def run_domains_audit(p: dict, seed: int, out: Path, jobs: int):
    from .domains import (ball, ball_automorphism, domain_from_json, holomorphic_tangent, lift_map,
                          sample_boundary, strict_psc_margin)

    dom = domain_from_json(p["domain"])
    pts = sample_boundary(dom, int(p["samples"]), seed)
    margins = [strict_psc_margin(dom, q[None, :]) for q in pts]
    write_csv(out / "levi.csv", ["point", "rho", "restricted_levi_min"],
              [[_vec(q), float(dom.value(q)), m] for q, m in zip(pts, margins)])
    rng = np.random.default_rng(seed)
    B = ball(dom.n)
    bpts = sample_boundary(B, int(p["samples"]), seed + 1)
    lift_rows = []
    for k in range(int(p["automorphisms"])):
        g = rng.standard_normal(dom.n) + 1j * rng.standard_normal(dom.n)
        a = 0.6 * rng.uniform() * g / np.linalg.norm(g)
        f = ball_automorphism(a)
        for q in bpts:
            img, P = lift_map(f, q, holomorphic_tangent(B, q))
            lift_rows.append([k, _vec(a), _vec(q), P.distance(holomorphic_tangent(B, img))])
    write_csv(out / "lift.csv", ["map", "a", "point", "hyperplane_error"], lift_rows)
    summary = {"min_levi_margin": float(min(margins)), "max_lift_error": float(max(r[-1] for r in lift_rows))}
    if summary["min_levi_margin"] <= 0:
        bad = [_vec(q) for q, m in zip(pts, margins) if m <= 0]
        raise CertificateFailure("Levi form not positive on H_p at some samples", bad, summary)
    if summary["max_lift_error"] > 1e-8:
        raise CertificateFailure("lift does not preserve holomorphic tangents", summary=summary)
    return summary, ["levi.csv", "lift.csv"], []


def selftest_rows(N: int = 256, degree: int = 64, seed: int = 0):
    """Exactness of the circle calculus on a random real trigonometric polynomial."""
    from .circle import grid, harmonic_extension_array, hilbert_array

    rng = np.random.default_rng(seed)
    a = rng.standard_normal(degree + 1)
    b = rng.standard_normal(degree + 1)
    b[0] = 0.0
    k = np.arange(degree + 1)
    th = grid(N)
    u = a @ np.cos(np.outer(k, th)) + b @ np.sin(np.outer(k, th))
    Tu = a[1:] @ np.sin(np.outer(k[1:], th)) - b[1:] @ np.cos(np.outer(k[1:], th))
    zeta = 0.9 * np.exp(1j * np.linspace(0, 2 * np.pi, 17)) * np.linspace(0, 1, 17)
    ext = np.real((a - 1j * b) @ (zeta[None, :] ** k[:, None]))
    checks = [
        ("hilbert", float(np.max(np.abs(hilbert_array(u) - Tu)))),
        ("poisson", float(np.max(np.abs(harmonic_extension_array(u, zeta) - ext)))),
        ("hilbert_squared", float(np.max(np.abs(hilbert_array(hilbert_array(u)) + u - u.mean())))),
    ]
    return [[name, err, 1e-10, err <= 1e-10] for name, err in checks]


def run_selftest(p: dict, seed, out: Path, jobs: int):
    rows = selftest_rows(int(p["N"]), int(p["degree"]), seed or 0)
    write_csv(out / "selftest.csv", ["check", "error", "tolerance", "passed"], rows)
    summary = {"checks": len(rows), "failed": [r[0] for r in rows if not r[3]]}
    if summary["failed"]:
        raise CertificateFailure(f"self-test failures: {summary['failed']}", summary=summary)
    return summary, ["selftest.csv"], []


RUNNERS = {
    "discs": run_discs,
    "kobayashi": run_kobayashi,
    "regularity": run_regularity,
    "domains-audit": run_domains_audit,
    "selftest": run_selftest,
}


# ---------------------------------------------------------------------------
# commands


def execute(config: dict, out: Path, jobs: int, strict: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status, message, witnesses, warnings = "ok", "", [], []
    try:
        summary, files, warnings = RUNNERS[config["kind"]](config["params"], config["seed"], out, jobs)
    except CertificateFailure as exc:
        status, message, witnesses = "certificate-failure", str(exc), exc.witnesses
        summary, files = exc.summary, sorted(p.name for p in out.glob("*.csv"))
    except (BishopError, HypothesisError, MetricCertificateError) as exc:
        status, message = "certificate-failure", f"{type(exc).__name__}: {exc}"
        witnesses = [str(w) for w in getattr(exc, "witnesses", [])]
        summary, files = {}, sorted(p.name for p in out.glob("*.csv"))
    if status == "ok" and strict and warnings:
        status, message = "certificate-failure", "; ".join(warnings)
    summary = {"status": status, "message": message, "warnings": warnings, **summary}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    if witnesses:
        with open(out / "witnesses.json", "w", encoding="utf-8") as fh:
            json.dump(witnesses, fh, indent=2)
    manifest = {
        "kind": config["kind"],
        "config": config,
        "seed": config["seed"],
        "outputs": files,
        "summary": "summary.json",
        "status": status,
        "wall_time": time.perf_counter() - start,
        "versions": {"discwedge": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if status != "ok":
        print(f"certificate failure: {message}", file=sys.stderr)
        return EXIT_CERTIFICATE
    print(f"{config['kind']}: ok, artifacts in {out}")
    return EXIT_OK


def report(path) -> int:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        print(f"error: no manifest at {path}", file=sys.stderr)
        return EXIT_USAGE
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = path.parent
    missing = [f for f in manifest.get("outputs", []) if not (base / f).is_file()]
    if missing:
        print(f"error: missing artifacts {missing}", file=sys.stderr)
        return EXIT_USAGE
    with open(base / manifest["summary"], encoding="utf-8") as fh:
        summary = json.load(fh)
    kind = manifest["kind"]
    print(f"experiment {kind}  seed {manifest['seed']}  status {manifest['status']}")
    if kind == "regularity" and "bootstrap.csv" in manifest["outputs"]:
        print(f"{'theta':>8} {'alpha(theta)':>14} {'fitted alpha':>14}   tolerance 0.03")
        for row in read_csv(base / "bootstrap.csv"):
            print(f"{float(row['theta']):8.4f} {float(row['alpha_float']):14.6f} {float(row['fitted_alpha']):14.6f}")
        for row in read_csv(base / "fits.csv"):
            print(f"{row['map']:>14} {row['quantity']:>14} {float(row['exponent']):10.5f} (r2 {float(row['r2']):.5f})")
    elif kind == "kobayashi":
        rows = read_csv(base / "kobayashi.csv")
        print(f"queries {len(rows)}  fitted constant {rows[0]['fitted_constant'] or 'n/a'}")
        print(f"sandwich violations {summary.get('sandwich_violations')} (expected 0, tolerance 1e-9)")
    elif kind == "discs":
        rows = read_csv(base / "fill.csv")
        cov = np.mean([r["covered"] == "1" for r in rows]) if rows else float("nan")
        print(f"coverage {cov:.4f} (threshold {summary.get('coverage_threshold')})")
        print(f"foliation multiplicity-1 fraction {summary.get('foliation_single_fraction')} (threshold 0.99)")
    else:
        for key, val in summary.items():
            print(f"{key}: {val}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discwedge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    for p in (run, sub.add_parser("selftest", help="circle calculus exactness suite")):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--strict", action="store_true")
    rep = sub.add_parser("report", help="summarize a finished run")
    rep.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "report":
        return report(args.manifest)
    try:
        if args.command == "selftest":
            config = validate_config({"kind": "selftest"}, args.seed)
        else:
            config = load_config(args.config, args.seed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or config.get("out") or f"runs/{config['kind']}")
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    return execute(config, out, args.jobs, args.strict)


if __name__ == "__main__":
    sys.exit(main())
