"""Monte Carlo experiments for the adaptive Lasso at finite n.

Every replication is keyed by ``(seed, experiment, n, beta index, rep)`` and
draws its noise from its own stream, so reports do not depend on execution
order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .asymptotics import (
    PhiVector,
    Regime,
    TuningSchedule,
    minimize_Vphi,
    regime_from_schedule,
    sample_Z_batch,
)
from .errors import AlassoError, RankDeficiencyError, ValidationError
from .extreal import ExtReal
from .linmodel import RegressionProblem, fit_gram
from .mset import Dilation, FullSpace, MSetSpec, construct_phi, sample_boundary

__all__ = [
    "BetaSpec",
    "ExperimentConfig",
    "Report",
    "CoverageReport",
    "design_matrix",
    "generate_instance",
    "simulate",
    "coverage_sweep",
    "model_selection_probs",
    "rate_experiment",
    "distribution_check",
    "boundary_catalog",
    "region_from_json",
    "ks_distance",
]

DESIGN_RULES = ("orthogonalized_cosine", "cosine")
NOISE_LAWS = ("gaussian", "rademacher", "uniform")
LEMMA_TOL = 1e-8


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class BetaSpec:
    """A parameter sequence ``beta_n``.

    ``kind="fixed"``: constant ``values``. ``kind="phi"``: the localized
    sequence ``beta_nj = phi_j lambda_j / sqrt(n lambda*)``; an infinite
    ``phi_j`` is realized as ``+-log(n) sqrt(lambda*/n)``. ``kind="direction"``:
    ``beta_n = scale * sqrt(lambda*/n) * values``.
    """

    id: str
    kind: str
    values: tuple
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "phi", "direction"):
            raise ValidationError(f"unknown beta kind {self.kind!r}")
        if self.kind == "phi":
            vals = tuple(ExtReal.of(v) for v in self.values)
        else:
            vals = tuple(float(v) for v in self.values)
            if not all(math.isfinite(v) for v in vals):
                raise ValidationError(f"beta {self.id!r} must be finite")
        object.__setattr__(self, "values", vals)

    def at(self, n: int, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        lstar = float(lam.max())
        if self.kind == "fixed":
            return np.array(self.values)
        if self.kind == "direction":
            return self.scale * math.sqrt(lstar / n) * np.array(self.values)
        out = np.empty(len(self.values))
        for j, f in enumerate(self.values):
            if f.is_inf:
                out[j] = f.inf * math.log(n) * math.sqrt(lstar / n)
            else:
                out[j] = f.value * lam[j] / math.sqrt(n * lstar)
        return out

    def to_json(self) -> dict:
        d = {"id": self.id, "kind": self.kind}
        if self.kind == "phi":
            d["phi"] = [v.to_json() for v in self.values]
        else:
            d["beta" if self.kind == "fixed" else "direction"] = list(self.values)
        if self.kind == "direction":
            d["scale"] = self.scale
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    C_target: np.ndarray
    schedule: TuningSchedule
    n_grid: tuple
    replications: int
    beta_catalog: tuple
    noise: str = "gaussian"
    sigma: float = 1.0
    seed: int = 0
    design_rule: str = "orthogonalized_cosine"
    experiment: str = "experiment"
    allow_invalid_schedule: bool = False

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C_target, dtype=float))
        object.__setattr__(self, "C_target", C)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "beta_catalog", tuple(self.beta_catalog))
        p = C.shape[0]
        if self.schedule.p != p:
            raise ValidationError("schedule and C_target disagree on p")
        if not self.allow_invalid_schedule:
            self.schedule.validate()
        if int(self.replications) < 1:
            raise ValidationError("replications must be >= 1")
        if not self.n_grid or any(n < p for n in self.n_grid):
            raise ValidationError("n_grid must be nonempty with every n >= p")
        if self.noise not in NOISE_LAWS:
            raise ValidationError(f"noise must be one of {NOISE_LAWS}")
        if self.design_rule not in DESIGN_RULES:
            raise ValidationError(f"design_rule must be one of {DESIGN_RULES}")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        ids = [b.id for b in self.beta_catalog]
        if len(set(ids)) != len(ids):
            raise ValidationError("beta ids must be unique")
        for b in self.beta_catalog:
            if len(b.values) != p:
                raise ValidationError(f"beta {b.id!r} has wrong length")
        # validates C
        self.regime()

    @property
    def p(self) -> int:
        return self.C_target.shape[0]

    def regime(self) -> Regime:
        return regime_from_schedule(self.schedule, self.C_target, self.sigma,
                                    validate=not self.allow_invalid_schedule)

    def with_catalog(self, catalog) -> "ExperimentConfig":
        d = dict(self.__dict__)
        d["beta_catalog"] = tuple(catalog)
        return ExperimentConfig(**d)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "C": self.C_target.tolist(),
            "design_rule": self.design_rule,
            "schedule": self.schedule.to_json(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "beta_catalog": [b.to_json() for b in self.beta_catalog],
            "noise": {"law": self.noise, "sigma": self.sigma},
            "seed": self.seed,
            "allow_invalid_schedule": self.allow_invalid_schedule,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        try:
            C = np.array(d["C"], dtype=float)
            schedule = TuningSchedule.from_json(d["schedule"])
            noise = d.get("noise", {})
            if isinstance(noise, str):
                noise = {"law": noise}
            reps = d["replications"]
            if not isinstance(reps, int) or isinstance(reps, bool):
                raise ValidationError("replications must be an integer")
            base = cls(
                C_target=C,
                schedule=schedule,
                n_grid=tuple(d["n_grid"]),
                replications=reps,
                beta_catalog=(),
                noise=noise.get("law", "gaussian"),
                sigma=float(noise.get("sigma", 1.0)),
                seed=int(d.get("seed", 0)),
                design_rule=d.get("design_rule", "orthogonalized_cosine"),
                experiment=str(d.get("experiment", "experiment")),
                allow_invalid_schedule=bool(d.get("allow_invalid_schedule", False)),
            )
        except KeyError as e:
            raise ValidationError(f"config missing field {e}") from None
        catalog = []
        for i, b in enumerate(d.get("beta_catalog", [])):
            catalog.extend(_beta_from_json(base, b, i))
        return base.with_catalog(catalog)


def _beta_from_json(base: ExperimentConfig, b: dict, i: int) -> list:
    kind = b.get("kind", "fixed")
    bid = str(b.get("id", f"beta{i}"))
    if kind == "fixed":
        return [BetaSpec(bid, "fixed", tuple(b["beta"]))]
    if kind == "phi":
        return [BetaSpec(bid, "phi", tuple(b["phi"]))]
    if kind == "direction":
        return [BetaSpec(bid, "direction", tuple(b["direction"]), float(b.get("scale", 1.0)))]
    if kind == "boundary":
        return boundary_catalog(base.regime(), int(b.get("count", 8)), prefix=bid)
    raise ValidationError(f"unknown beta kind {kind!r}")


def boundary_catalog(regime: Regime, count: int, prefix: str = "boundary") -> list:
    """Localized sequences whose limits are ``count`` boundary points of M.

    Uses ``Z = 0``; the resulting limits are exactly the boundary points
    whenever ``psi`` takes values in ``{0, inf}``.
    """
    spec = MSetSpec(regime)
    cloud = sample_boundary(spec, count)
    z = np.zeros(regime.p)
    out = []
    for i, m in enumerate(cloud.points):
        phi = construct_phi(spec, m, z)
        out.append(BetaSpec(f"{prefix}{i}", "phi", phi.phi))
    return out


# --- designs and instances ---------------------------------------------------

@lru_cache(maxsize=64)
def _design_cached(rule: str, n: int, C_bytes: bytes, p: int) -> np.ndarray:
    C = np.frombuffer(C_bytes, dtype=float).reshape(p, p)
    L = np.linalg.cholesky(C)
    t = (np.arange(1, n + 1) - 0.5) / n
    k = np.arange(1, p + 1)
    if rule == "orthogonalized_cosine":
        F = np.cos(np.pi * np.outer(t, k))
        Q, R = np.linalg.qr(F)
        Q = Q * np.sign(np.diag(R))
        X = math.sqrt(n) * Q @ L.T
    else:
        F = math.sqrt(2.0) * np.cos(np.pi * np.outer(np.arange(1, n + 1) / n, k))
        X = F @ L.T
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficiencyError(f"design rule {rule!r} is rank deficient at n={n}")
    X.setflags(write=False)
    return X


def design_matrix(rule: str, n: int, C) -> np.ndarray:
    """Deterministic ``n x p`` design with ``X'X/n -> C``.

    ``orthogonalized_cosine`` gives ``X'X/n = C`` up to rounding for every n;
    ``cosine`` uses raw cosine columns and converges at rate ``O(1/n)``.
    """
    if rule not in DESIGN_RULES:
        raise ValidationError(f"design_rule must be one of {DESIGN_RULES}")
    C = np.ascontiguousarray(np.atleast_2d(np.asarray(C, dtype=float)))
    return _design_cached(rule, int(n), C.tobytes(), C.shape[0])


def _stream(config: ExperimentConfig, experiment: str, n: int, beta_idx: int, rep: int):
    code = zlib.crc32(experiment.encode())
    ss = np.random.SeedSequence([config.seed & 0xFFFFFFFFFFFFFFFF, code, n, beta_idx, rep])
    return np.random.default_rng(ss)


def _noise(config: ExperimentConfig, rng, n: int) -> np.ndarray:
    s = config.sigma
    if config.noise == "gaussian":
        return s * rng.standard_normal(n)
    if config.noise == "rademacher":
        return s * (2.0 * rng.integers(0, 2, n) - 1.0)
    return rng.uniform(-s * math.sqrt(3.0), s * math.sqrt(3.0), n)


def generate_instance(config: ExperimentConfig, n: int, beta, rep_index: int,
                      beta_idx: int = 0, experiment: Optional[str] = None) -> RegressionProblem:
    """``y = X beta + eps`` with the configured design and noise law."""
    if n not in config.n_grid:
        raise ValidationError(f"n={n} is not in the configured n_grid")
    X = design_matrix(config.design_rule, n, config.C_target)
    rng = _stream(config, experiment or config.experiment, n, beta_idx, rep_index)
    eps = _noise(config, rng, n)
    return RegressionProblem(X, X @ np.asarray(beta, dtype=float) + eps, config.sigma)


# --- simulation core ---------------------------------------------------------

@dataclass
class CellResult:
    """Per-replication output for one ``(n, beta)`` cell; failed rows are NaN."""

    n: int
    beta_id: str
    beta: np.ndarray
    lambda_star: float
    beta_al: np.ndarray
    failures: int
    lemma_violations: int
    failure_messages: list = field(default_factory=list)

    @property
    def ok(self) -> np.ndarray:
        return ~np.isnan(self.beta_al[:, 0])

    @property
    def successes(self) -> int:
        return int(self.ok.sum())

    def errors(self) -> np.ndarray:
        return self.beta_al[self.ok] - self.beta

    def scaled_errors(self) -> np.ndarray:
        return math.sqrt(self.n / self.lambda_star) * self.errors()


def _run_cell(args) -> CellResult:
    config, experiment, n, beta_idx, beta_spec = args
    X = design_matrix(config.design_rule, n, config.C_target)
    G = X.T @ X
    L = np.linalg.cholesky(G)
    tuning = config.schedule.tuning(n)
    beta = beta_spec.at(n, tuning.lam)
    Gb = G @ beta
    R = config.replications
    out = np.full((R, config.p), np.nan)
    failures = violations = 0
    messages = []
    lam_tol = LEMMA_TOL * (1.0 + tuning.lambda_star)
    for rep in range(R):
        rng = _stream(config, experiment, n, beta_idx, rep)
        xte = X.T @ _noise(config, rng, n)
        xty = Gb + xte
        bls = np.linalg.solve(L.T, np.linalg.solve(L, xty))
        try:
            fit = fit_gram(G, xty, tuning, bls)
        except AlassoError as e:
            failures += 1
            if len(messages) < 5:
                messages.append(f"rep {rep}: {e}")
            continue
        z = fit.beta_al - bls
        if np.any(tuning.lam - z * (G @ z) < -lam_tol):
            violations += 1
        out[rep] = fit.beta_al
    return CellResult(n, beta_spec.id, beta, tuning.lambda_star, out, failures,
                      violations, messages)


def simulate(config: ExperimentConfig, experiment: Optional[str] = None,
             catalog: Optional[Sequence[BetaSpec]] = None, threads: int = 1) -> list:
    """Fit every replication of every ``(n, beta)`` cell; returns CellResults in grid order."""
    experiment = experiment or config.experiment
    catalog = config.beta_catalog if catalog is None else tuple(catalog)
    if not catalog:
        raise ValidationError("beta catalog is empty")
    tasks = [(config, experiment, n, i, b) for n in config.n_grid for i, b in enumerate(catalog)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]


# --- reports -----------------------------------------------------------------

@dataclass
class Row:
    n: int
    beta_id: str
    item: str
    statistic: str
    value: float
    stderr: float = float("nan")


@dataclass
class Report:
    experiment: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, *args, **kw):
        self.rows.append(Row(*args, **kw))

    def value(self, n, beta_id, item, statistic) -> float:
        for r in self.rows:
            if (r.n, r.beta_id, r.item, r.statistic) == (n, beta_id, str(item), statistic):
                return r.value
        raise KeyError((n, beta_id, item, statistic))

    def series(self, beta_id, item, statistic) -> list:
        """Values of one statistic in n order."""
        return [r.value for r in self.rows
                if (r.beta_id, r.item, r.statistic) == (beta_id, str(item), statistic)]

    @property
    def ok(self) -> bool:
        return (self.summary.get("lemma_violations", 0) == 0
                and self.summary.get("accounting_ok", True))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "n", "beta_id", "item", "statistic", "value", "stderr"])
        for r in self.rows:
            w.writerow([self.experiment, r.n, r.beta_id, r.item, r.statistic,
                        fmt_number(r.value), fmt_number(r.stderr)])
        return buf.getvalue()


class CoverageReport(Report):
    def min_coverage(self, set_id: str) -> list:
        return self.series("min", set_id, "min_coverage")

    def coverage(self, beta_id: str, set_id: str) -> list:
        return self.series(beta_id, set_id, "coverage")


def ks_distance(a, b, atol: float = 1e-9) -> float:
    """Two-sample Kolmogorov-Smirnov statistic with ties resolved at ``atol``.

    Limit laws here have atoms (kinks of the objective); values that differ
    only by rounding are snapped to a common grid before comparison.
    """
    a = np.round(np.asarray(a, dtype=float) / atol) * atol
    b = np.round(np.asarray(b, dtype=float) / atol) * atol
    return float(stats.ks_2samp(a, b).statistic)


def fmt_number(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _accounting(report: Report, cells: Sequence[CellResult], replications: int) -> None:
    fails = sum(c.failures for c in cells)
    viol = sum(c.lemma_violations for c in cells)
    report.summary.update(
        replications_per_cell=replications,
        cells=len(cells),
        successes=sum(c.successes for c in cells),
        failures=fails,
        lemma_violations=viol,
        accounting_ok=all(c.successes + c.failures == replications for c in cells),
    )
    msgs = [m for c in cells for m in c.failure_messages]
    if msgs:
        report.summary["failure_messages"] = msgs[:10]
    for c in cells:
        report.add(c.n, c.beta_id, "fit", "failures", float(c.failures))


# --- experiments ------------------------------------------------------------

def region_from_json(d: dict, regime: Regime):
    """``{"kind": "mset", "d": 1.21}``, ``{"kind": "full"}`` or ``{"kind": "dilation", "eps": .., "d": ..}``."""
    kind = d.get("kind", "mset")
    if kind == "full":
        return FullSpace()
    spec = MSetSpec(regime, float(d.get("d", 1.0)))
    if kind == "mset":
        return spec
    if kind == "dilation":
        return Dilation(spec, float(d["eps"]))
    raise ValidationError(f"unknown region kind {kind!r}")


def coverage_sweep(config: ExperimentConfig, sets: Mapping[str, object],
                   threads: int = 1, cells: Optional[list] = None) -> CoverageReport:
    """Coverage of ``beta in b_AL - sqrt(lambda*/n) S`` for each region ``S``.

    All regions are evaluated on the same replications, so nested regions
    have ordered coverage exactly.
    """
    if cells is None:
        cells = simulate(config, "coverage", threads=threads)
    rep = CoverageReport("coverage")
    for c in cells:
        m = c.scaled_errors()
        for sid, region in sets.items():
            hits = np.array([region.contains(v) for v in m], dtype=bool)
            k = c.successes
            phat = hits.mean() if k else float("nan")
            se = math.sqrt(phat * (1 - phat) / k) if k else float("nan")
            rep.add(c.n, c.beta_id, sid, "coverage", float(phat), se)
    for n in config.n_grid:
        for sid in sets:
            vals = [(r.value, r.stderr, r.beta_id) for r in rep.rows
                    if r.n == n and r.item == sid and r.statistic == "coverage"]
            v, se, bid = min(vals)
            rep.add(n, "min", sid, "min_coverage", v, se)
            rep.summary.setdefault("argmin", {}).setdefault(sid, {})[str(n)] = bid
    _accounting(rep, cells, config.replications)
    rep.summary["min_coverage"] = {sid: rep.min_coverage(sid) for sid in sets}
    return rep


def model_selection_probs(config: ExperimentConfig, threads: int = 1) -> Report:
    """Empirical ``P(b_AL_j = 0)`` per ``(n, beta, j)``."""
    cells = simulate(config, "select", threads=threads)
    rep = Report("select")
    for c in cells:
        zero = c.beta_al[c.ok] == 0.0
        k = c.successes
        for j in range(config.p):
            f = float(zero[:, j].mean()) if k else float("nan")
            rep.add(c.n, c.beta_id, str(j + 1), "zero_freq", f,
                    math.sqrt(f * (1 - f) / k) if k else float("nan"))
    _accounting(rep, cells, config.replications)
    return rep


def rate_experiment(config: ExperimentConfig, quantiles=(0.5, 0.9, 0.99),
                    threads: int = 1) -> Report:
    """Quantiles of ``r_n ||b_AL - beta_n||`` for ``r_n`` in ``b_n``, ``a_n``, ``sqrt(n)``.

    ``b_n = min(sqrt(n), sqrt(n/lambda*))`` is the uniform rate and
    ``a_n = min(sqrt(n), n/lambda*)`` the pointwise one.
    """
    cells = simulate(config, "rates", threads=threads)
    rep = Report("rates")
    for c in cells:
        err = np.linalg.norm(c.errors(), axis=1)
        ls = c.lambda_star
        rates = {
            "b_n": min(math.sqrt(c.n), math.sqrt(c.n / ls)) if ls > 0 else math.sqrt(c.n),
            "a_n": min(math.sqrt(c.n), c.n / ls) if ls > 0 else math.sqrt(c.n),
            "sqrt_n": math.sqrt(c.n),
        }
        for name, r in rates.items():
            for q in quantiles:
                rep.add(c.n, c.beta_id, name, f"q{q:g}", float(np.quantile(r * err, q)))
    _accounting(rep, cells, config.replications)
    return rep


def distribution_check(config: ExperimentConfig, phi, threads: int = 1,
                       limit_samples: Optional[int] = None) -> Report:
    """KS distance between scaled finite-n errors and draws of ``argmin V_phi``.

    The parameter sequence realizing ``phi`` replaces the config's catalog.
    The limit sample (``limit_samples`` draws, default ``replications``) is
    shared across the n grid.
    """
    phi = phi if isinstance(phi, PhiVector) else PhiVector(tuple(phi))
    regime = config.regime()
    beta = BetaSpec("phi", "phi", phi.phi)
    cells = simulate(config, "dist", catalog=[beta], threads=threads)
    R = limit_samples or config.replications
    ss = np.random.SeedSequence([config.seed & 0xFFFFFFFFFFFFFFFF,
                                 zlib.crc32(b"dist-limit"), R])
    Z = sample_Z_batch(regime, R, ss)
    limit = np.array([minimize_Vphi(regime, phi, z) for z in Z])
    rep = Report("dist")
    for c in cells:
        m = c.scaled_errors()
        for j in range(config.p):
            ks = ks_distance(m[:, j], limit[:, j])
            q75, q25 = np.quantile(m[:, j], [0.75, 0.25])
            rep.add(c.n, "phi", str(j + 1), "ks", float(ks))
            rep.add(c.n, "phi", str(j + 1), "iqr", float(q75 - q25))
            rep.add(c.n, "phi", str(j + 1), "median", float(np.median(m[:, j])))
    for j in range(config.p):
        q75, q25 = np.quantile(limit[:, j], [0.75, 0.25])
        rep.add(0, "limit", str(j + 1), "iqr", float(q75 - q25))
        rep.add(0, "limit", str(j + 1), "median", float(np.median(limit[:, j])))
    _accounting(rep, cells, config.replications)
    rep.summary["phi"] = phi.to_json()
    return rep
