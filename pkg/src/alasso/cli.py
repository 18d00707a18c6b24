"""Command-line front end.

Subcommands ``fit``, ``mset``, ``coverage``, ``select``, ``rates`` and
``dist`` read JSON inputs and write CSV/JSON/SVG files plus a
``manifest.json`` into ``--out``. Nothing is written unless the inputs parse
and validate.

Exit status: 0 on success, 1 when a run completes but an invariant check or
the solver fails, 2 on malformed or invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .asymptotics import Regime, TuningSchedule, regime_from_schedule
from .errors import AlassoError, ConvergenceError, ValidationError
from .linmodel import (
    RegressionProblem,
    SolverOptions,
    TuningVector,
    coefficient_path,
    fit_adaptive_lasso,
    lemma1_margin,
    path_to_csv,
)
from .mset import MSetSpec, constraint_values, ls_ellipse, project_cloud, sample_boundary
from .simlab import (
    LEMMA_TOL,
    ExperimentConfig,
    coverage_sweep,
    distribution_check,
    fmt_number,
    model_selection_probs,
    rate_experiment,
    region_from_json,
)

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2
MEMBER_CHECK_TOL = 1e-9


class InputError(Exception):
    """Unreadable or invalid input; reported with its file location."""


# --- JSON helpers -----------------------------------------------------------

def load_json(path) -> object:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def jsonable(x):
    """Replace non-finite floats by ``"inf"``/``"-inf"``/``"nan"`` and numpy scalars by Python ones."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else fmt_number(x)
    return x


def dumps(doc) -> str:
    return json.dumps(jsonable(doc), indent=2, allow_nan=False) + "\n"


def config_hash(doc) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def versions() -> dict:
    return {
        "alasso": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_outputs(out_dir, files: dict, manifest: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest, outputs=sorted(files), versions=versions())
    for name, text in files.items():
        (out / name).write_text(text)
    (out / "manifest.json").write_text(dumps(manifest))


def table_json(header, rows) -> str:
    return dumps([dict(zip(header, r)) for r in rows])


# --- fit ----------------------------------------------------------------------

def _parse_scales(text):
    if text is None:
        return None
    try:
        scales = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--scales: expected comma-separated numbers, got {text!r}") from None
    if not scales or any(not math.isfinite(s) or s < 0 for s in scales):
        raise InputError("--scales: need finite nonnegative values")
    return scales


def run_fit(args) -> int:
    problem_doc = load_json(args.config)
    if not isinstance(problem_doc, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    try:
        problem = RegressionProblem.from_json(problem_doc)
    except ValidationError as e:
        raise InputError(f"{args.config}: {e}") from None
    if args.tuning:
        tuning_doc = load_json(args.tuning)
        where = args.tuning
    elif "lambda" in problem_doc:
        tuning_doc, where = problem_doc["lambda"], args.config
    else:
        raise InputError("no tuning given: pass --tuning or add a 'lambda' field")
    try:
        tuning = TuningVector.from_json(tuning_doc)
    except ValidationError as e:
        raise InputError(f"{where}: {e}") from None
    if len(tuning) != problem.p:
        raise InputError(f"{where}: tuning has length {len(tuning)}, expected {problem.p}")
    scales = _parse_scales(args.scales)

    opts = SolverOptions(max_iterations=args.max_iter)
    try:
        problem.check_rank()
        fit = fit_adaptive_lasso(problem, tuning, opts)
        path = coefficient_path(problem, tuning, scales, opts) if scales else None
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    except AlassoError as e:
        raise InputError(f"{args.config}: {e}") from None

    margin = lemma1_margin(fit, problem, tuning)
    lemma_ok = bool(np.all(margin >= -LEMMA_TOL * (1.0 + tuning.lambda_star)))
    converged = fit.kkt_residual <= fit.tolerance
    doc = fit.to_json(problem, tuning)
    doc.update(lemma1_margin=margin.tolist(), tolerance=fit.tolerance,
               converged=converged, lemma1_ok=lemma_ok)

    header = ["j", "beta_ls", "beta_al", "lemma1_margin"]
    rows = [[j + 1, fmt_number(a), fmt_number(b), fmt_number(m)]
            for j, (a, b, m) in enumerate(zip(fit.beta_ls, fit.beta_al, margin))]
    files = {"fit.json": dumps(doc)}
    if args.format == "csv":
        files["coefficients.csv"] = _csv(header, rows)
        if path is not None:
            files["path.csv"] = path_to_csv(path, fmt=fmt_number)
    else:
        files["coefficients.json"] = table_json(header, rows)
        if path is not None:
            files["path.json"] = dumps([{"lambda_scale": s, "beta_al": b.tolist()} for s, b in path])

    inputs = {"problem": problem_doc, "tuning": tuning_doc}
    ok = converged and lemma_ok
    write_outputs(args.out, files, {
        "subcommand": "fit", "config_sha256": config_hash(inputs),
        "inputs": [str(args.config)] + ([str(args.tuning)] if args.tuning else []),
        "seed": None, "status": "ok" if ok else "failed",
    })
    if not ok:
        print(f"error: converged={converged}, lemma1_ok={lemma_ok}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAILED


def _csv(header, rows) -> str:
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# --- mset ---------------------------------------------------------------------

def regime_from_doc(doc: dict) -> Regime:
    """A regime document, a ``{"C", "schedule"}`` document, or just ``{"C"}`` (uniform tuning)."""
    if "lambda0" in doc or "psi" in doc:
        return Regime.from_json(doc)
    if "C" not in doc:
        raise ValidationError("regime document needs field 'C'")
    sigma = float(doc.get("sigma", 1.0))
    if "schedule" in doc:
        return regime_from_schedule(TuningSchedule.from_json(doc["schedule"]), doc["C"], sigma)
    return Regime.uniform(np.array(doc["C"], dtype=float), sigma)


def _svg(cloud, ellipse=None, size=480) -> str:
    pts = cloud.points
    clouds = [pts] + ([ellipse] if ellipse is not None else [])
    r = max(float(np.abs(c).max()) for c in clouds) * 1.1 or 1.0
    half = size / 2.0

    def xy(v):
        return half + v[0] / r * half, half - v[1] / r * half

    def polygon(P, style):
        order = np.argsort(np.arctan2(P[:, 1], P[:, 0]))
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in (xy(v) for v in P[order]))
        return f'  <polygon points="{coords}" {style}/>'

    lo, hi = float(cloud.color.min()), float(cloud.color.max())
    span = hi - lo if hi > lo else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'  <rect width="{size}" height="{size}" fill="white"/>',
           f'  <line x1="0" y1="{half}" x2="{size}" y2="{half}" stroke="#ccc"/>',
           f'  <line x1="{half}" y1="0" x2="{half}" y2="{size}" stroke="#ccc"/>']
    if ellipse is not None:
        out.append(polygon(ellipse, 'fill="none" stroke="#1f77b4" stroke-dasharray="4 3"'))
    out.append(polygon(pts, 'fill="#eeeeee" stroke="black"'))
    for v, c in zip(pts, cloud.color):
        shade = int(200 * (1.0 - (c - lo) / span))
        x, y = xy(v)
        out.append(f'  <circle cx="{x:.3f}" cy="{y:.3f}" r="2" fill="rgb(255,{shade},0)"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def run_mset(args) -> int:
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    try:
        regime = regime_from_doc(doc)
        d = args.d if args.d is not None else float(doc.get("d", 1.0))
        spec = MSetSpec(regime, d)
        count = args.count if args.count is not None else int(doc.get("count", 200))
        if count < 1:
            raise ValidationError("count must be >= 1")
        cloud = sample_boundary(spec, count, seed=args.seed)
        proj = None
        if args.projection is not None:
            proj = project_cloud(cloud, args.projection - 1)
        ell = None
        if args.ellipse is not None:
            if regime.p != 2:
                raise ValidationError("the ellipse overlay is only drawn for p = 2")
            ell = ls_ellipse(regime.C, regime.sigma, args.ellipse).boundary(count)
    except AlassoError as e:
        raise InputError(f"{args.config}: {e}") from None

    # self-check: every point is a member and flat coordinates stay flat
    flat = regime.unpenalized
    worst_margin = float(cloud.margin.max())
    worst_flat = 0.0
    for m in cloud.points:
        Cm, _ = constraint_values(spec, m)
        if flat.any():
            worst_flat = max(worst_flat, float(np.abs(Cm[flat]).max()))
    ok = worst_margin <= MEMBER_CHECK_TOL and worst_flat <= MEMBER_CHECK_TOL

    files = {}
    if args.format == "csv":
        files["boundary.csv"] = cloud.to_csv(fmt=fmt_number)
    else:
        files["boundary.json"] = dumps({
            "points": cloud.points, "binding": (cloud.binding + 1), "margin": cloud.margin,
            "max_mCm": cloud.color,
        })
    if proj is not None:
        keep = [j + 1 for j in range(regime.p) if j != args.projection - 1]
        header = [f"m_{j}" for j in keep]
        rows = [[fmt_number(v) for v in row] for row in proj]
        if args.format == "csv":
            files["projection.csv"] = _csv(header, rows)
        else:
            files["projection.json"] = table_json(header, proj.tolist())
    if regime.p == 2:
        files["boundary.svg"] = _svg(cloud, ell)
    files["summary.json"] = dumps({
        "regime": regime.to_json(), "d": d, "count": len(cloud),
        "max_margin": worst_margin, "max_abs_Cm_unpenalized": worst_flat, "ok": ok,
    })
    write_outputs(args.out, files, {
        "subcommand": "mset", "config_sha256": config_hash(doc),
        "inputs": [str(args.config)], "seed": args.seed, "status": "ok" if ok else "failed",
    })
    return EXIT_OK if ok else EXIT_FAILED


# --- experiments ----------------------------------------------------------------

def _experiment(name, config, doc, threads):
    if name == "coverage":
        sets_doc = doc.get("sets", {"M_1.21": {"kind": "mset", "d": 1.21}})
        if not isinstance(sets_doc, dict) or not sets_doc:
            raise ValidationError("'sets' must be a nonempty object")
        regime = config.regime()
        sets = {sid: region_from_json(s, regime) for sid, s in sets_doc.items()}
        return coverage_sweep(config, sets, threads=threads)
    if name == "select":
        return model_selection_probs(config, threads=threads)
    if name == "rates":
        q = tuple(float(v) for v in doc.get("quantiles", (0.5, 0.9, 0.99)))
        if not q or any(not 0.0 <= v <= 1.0 for v in q):
            raise ValidationError("quantiles must lie in [0, 1]")
        return rate_experiment(config, q, threads=threads)
    if "phi" not in doc:
        raise ValidationError("dist needs a 'phi' field")
    limit = doc.get("limit_samples")
    return distribution_check(config, doc["phi"], threads=threads,
                              limit_samples=int(limit) if limit is not None else None)


def run_experiment(args) -> int:
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    parsed = dict(doc)
    if args.seed is not None:
        parsed["seed"] = args.seed
    if args.allow_invalid_schedule:
        parsed["allow_invalid_schedule"] = True
    if args.threads < 1:
        raise InputError("--threads must be >= 1")
    try:
        config = ExperimentConfig.from_json(parsed)
        if args.subcommand != "dist" and not config.beta_catalog:
            raise ValidationError("beta_catalog is empty")
        report = _experiment(args.subcommand, config, parsed, args.threads)
    except (AlassoError, TypeError, ValueError) as e:
        raise InputError(f"{args.config}: {e}") from None

    ok = report.ok and report.summary.get("failures", 0) == 0
    summary = dict(report.summary, experiment=report.experiment, ok=ok,
                   config=config.to_json())
    files = {"summary.json": dumps(summary)}
    if args.format == "csv":
        files["report.csv"] = report.to_csv()
    else:
        files["report.json"] = dumps([
            {"experiment": report.experiment, "n": r.n, "beta_id": r.beta_id, "item": r.item,
             "statistic": r.statistic, "value": r.value, "stderr": r.stderr}
            for r in report.rows])
    write_outputs(args.out, files, {
        "subcommand": args.subcommand, "config_sha256": config_hash(doc),
        "inputs": [str(args.config)], "seed": config.seed, "status": "ok" if ok else "failed",
    })
    if not ok:
        print(f"error: lemma violations={report.summary.get('lemma_violations')}, "
              f"failures={report.summary.get('failures')}, "
              f"accounting_ok={report.summary.get('accounting_ok')}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAILED


# --- entry point ------------------------------------------------------------------

def _u64(text) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="input JSON file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=_u64, default=None, help="override the seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs")

    parser = argparse.ArgumentParser(prog="alasso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit the adaptive Lasso to a problem file")
    p.add_argument("--tuning", help="tuning JSON ({'lambda': [...]}); defaults to the problem's 'lambda'")
    p.add_argument("--scales", help="comma-separated multipliers of lambda for a coefficient path")
    p.add_argument("--max-iter", type=int, default=10_000, help="coordinate-descent sweep limit")
    p.set_defaults(func=run_fit)

    p = sub.add_parser("mset", parents=[common], help="export boundary points of the limit set")
    p.add_argument("--d", type=float, default=None, help="scale d of M_d (default 1)")
    p.add_argument("--count", type=int, default=None, help="number of boundary points (default 200)")
    p.add_argument("--projection", type=int, default=None,
                   help="drop this 1-based coordinate and also write projection.csv (p >= 3)")
    p.add_argument("--ellipse", type=float, default=None, metavar="ALPHA",
                   help="overlay the level-(1-ALPHA) least-squares ellipse in the SVG (p = 2)")
    p.set_defaults(func=run_mset)

    for name, text in (("coverage", "coverage of limit-set confidence regions"),
                       ("select", "zero frequencies per coordinate"),
                       ("rates", "quantiles of rate-scaled estimation errors"),
                       ("dist", "KS distance to the limit law")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--allow-invalid-schedule", action="store_true",
                       help="accept schedules with lambda*/n not tending to 0")
        p.set_defaults(func=run_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
