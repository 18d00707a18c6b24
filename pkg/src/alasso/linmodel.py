"""Finite-sample estimation: least squares and the componentwise-tuned adaptive Lasso.

The adaptive Lasso minimizes

    L_n(b) = ||y - Xb||^2 + 2 * sum_j lambda_j |b_j| / |b_LS_j|

(squared norm; see the notes in the README). Coordinates with
``lambda_j = 0`` are unpenalized.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _cd
from .errors import DegenerateWeightError, RankDeficiencyError, ValidationError

__all__ = [
    "RegressionProblem",
    "TuningVector",
    "FitResult",
    "SolverOptions",
    "least_squares",
    "fit_adaptive_lasso",
    "fit_gram",
    "kkt_residual",
    "lemma1_margin",
    "coefficient_path",
    "RANK_TOL",
]

RANK_TOL = 1e-10
DEGENERACY_REL = 1e-12


@dataclass(frozen=True)
class RegressionProblem:
    """Linear model ``y = X beta + eps`` with a nonstochastic design."""

    X: np.ndarray
    y: np.ndarray
    sigma: Optional[float] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValidationError("X must be a matrix")
        n, p = X.shape
        if p < 1 or n < p:
            raise ValidationError(f"need n >= p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValidationError(f"y has length {y.shape[0]}, expected {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("X and y must be finite")
        if self.sigma is not None and not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def gram(self) -> np.ndarray:
        return self.X.T @ self.X

    def xty(self) -> np.ndarray:
        return self.X.T @ self.y

    def check_rank(self, tol: float = RANK_TOL) -> None:
        sv = np.linalg.svd(self.X, compute_uv=False)
        if sv[-1] <= tol * max(1.0, sv[0]):
            raise RankDeficiencyError(
                f"design is rank deficient: smallest singular value {sv[-1]:.3e}"
            )

    def to_json(self) -> dict:
        d = {"X": self.X.tolist(), "y": self.y.tolist()}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RegressionProblem":
        try:
            return cls(np.array(d["X"], dtype=float), np.array(d["y"], dtype=float), d.get("sigma"))
        except KeyError as e:
            raise ValidationError(f"problem document missing field {e}") from None
        except (TypeError, ValueError) as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"bad problem document: {e}") from None


@dataclass(frozen=True)
class TuningVector:
    """Per-coordinate penalty levels; zeros mean the coordinate is unpenalized."""

    lam: np.ndarray
    lambda_star: float = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if lam.size == 0:
            raise ValidationError("tuning vector is empty")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValidationError("tuning parameters must be finite and nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lambda_star", float(lam.max()))

    @classmethod
    def uniform(cls, value: float, p: int) -> "TuningVector":
        return cls(np.full(p, float(value)))

    def scaled(self, factor: float) -> "TuningVector":
        return TuningVector(self.lam * factor)

    def __len__(self):
        return self.lam.shape[0]

    def to_json(self) -> dict:
        return {"lambda": self.lam.tolist()}

    @classmethod
    def from_json(cls, d) -> "TuningVector":
        if isinstance(d, dict):
            if "lambda" not in d:
                raise ValidationError("tuning document missing field 'lambda'")
            d = d["lambda"]
        try:
            return cls(np.array(d, dtype=float))
        except (TypeError, ValueError) as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"bad tuning document: {e}") from None


@dataclass(frozen=True)
class SolverOptions:
    """``tolerance=None`` means ``1e-10 * (1 + ||X'y||_inf)``."""

    tolerance: Optional[float] = None
    max_iterations: int = 10_000


@dataclass
class FitResult:
    beta_al: np.ndarray
    beta_ls: np.ndarray
    kkt_residual: float
    iterations: int
    tolerance: float = 0.0

    @property
    def active_set(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.beta_al != 0.0))

    def to_json(self, problem: Optional[RegressionProblem] = None,
                tuning: Optional[TuningVector] = None) -> dict:
        d = {}
        if problem is not None:
            d.update(problem.to_json())
        if tuning is not None:
            d["lambda"] = tuning.lam.tolist()
        d.update(
            beta_al=self.beta_al.tolist(),
            beta_ls=self.beta_ls.tolist(),
            kkt_residual=float(self.kkt_residual),
            active_set=list(self.active_set),
            iterations=self.iterations,
        )
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FitResult":
        return cls(
            beta_al=np.array(d["beta_al"], dtype=float),
            beta_ls=np.array(d["beta_ls"], dtype=float),
            kkt_residual=float(d["kkt_residual"]),
            iterations=int(d.get("iterations", 0)),
        )


def least_squares(problem: RegressionProblem) -> np.ndarray:
    """Unique minimizer of ``||y - Xb||^2``.

    Raises RankDeficiencyError when X is numerically rank deficient.
    """
    X, y = problem.X, problem.y
    coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < problem.p or sv[-1] <= RANK_TOL * max(1.0, sv[0]):
        raise RankDeficiencyError(
            f"design is rank deficient: smallest singular value {sv[-1]:.3e}"
        )
    return coef


def _weights(tuning: TuningVector, beta_ls: np.ndarray) -> np.ndarray:
    lam = tuning.lam
    if lam.shape != beta_ls.shape:
        raise ValidationError(f"tuning has length {lam.shape[0]}, expected {beta_ls.shape[0]}")
    thresh = DEGENERACY_REL * (1.0 + np.max(np.abs(beta_ls)))
    bad = (lam > 0) & (np.abs(beta_ls) < thresh)
    if bad.any():
        raise DegenerateWeightError(
            f"|beta_LS_j| below {thresh:.1e} for penalized coordinates {np.flatnonzero(bad).tolist()}"
        )
    t = np.zeros_like(lam)
    pen = lam > 0
    t[pen] = lam[pen] / np.abs(beta_ls[pen])
    return t


def fit_gram(gram, xty, tuning: TuningVector, beta_ls=None,
             opts: SolverOptions = SolverOptions()) -> FitResult:
    """Adaptive Lasso from sufficient statistics ``X'X`` and ``X'y``.

    ``beta_ls`` may be supplied when already known (it must equal
    ``solve(X'X, X'y)``); it is recomputed by Cholesky otherwise.
    """
    gram = np.asarray(gram, dtype=float)
    xty = np.asarray(xty, dtype=float)
    if beta_ls is None:
        try:
            L = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("X'X is not positive definite") from None
        beta_ls = np.linalg.solve(L.T, np.linalg.solve(L, xty))
    beta_ls = np.asarray(beta_ls, dtype=float)
    t = _weights(tuning, beta_ls)
    tol = opts.tolerance
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.max(np.abs(xty))))
    if not np.any(t > 0):
        # unpenalized: the least-squares solution is the minimizer, bit for bit
        return FitResult(beta_ls.copy(), beta_ls, 0.0, 0, tol)
    b, sweeps, res = _cd.solve_shifted_l1(
        gram, xty, t, np.zeros_like(t), tol=tol, max_iter=opts.max_iterations
    )
    return FitResult(b, beta_ls, float(res), sweeps, tol)


def fit_adaptive_lasso(problem: RegressionProblem, tuning: TuningVector,
                       opts: SolverOptions = SolverOptions()) -> FitResult:
    """Adaptive Lasso with componentwise tuning by cyclic coordinate descent.

    Coordinates set to zero by the soft-threshold are stored as exact zeros.
    Raises DegenerateWeightError if a penalized coordinate has a numerically
    zero least-squares estimate, ConvergenceError after
    ``opts.max_iterations`` sweeps without meeting the KKT tolerance.
    """
    beta_ls = least_squares(problem)
    return fit_gram(problem.gram(), problem.xty(), tuning, beta_ls, opts)


def kkt_residual(problem: RegressionProblem, tuning: TuningVector, candidate) -> float:
    """Largest subgradient-condition violation of ``candidate``.

    For ``b_j != 0`` this is ``|(X'X(b - b_LS))_j + lambda_j sgn(b_j)/|b_LS_j||``,
    for ``b_j == 0`` it is ``max(0, |(X'X(b - b_LS))_j| - lambda_j/|b_LS_j|)``.
    Zero exactly at the (unique) minimizer.
    """
    candidate = np.asarray(candidate, dtype=float).reshape(-1)
    if candidate.shape[0] != problem.p:
        raise ValidationError(f"candidate has length {candidate.shape[0]}, expected {problem.p}")
    beta_ls = least_squares(problem)
    t = _weights(tuning, beta_ls)
    G = problem.gram()
    viol = _cd.kkt_violation(G, G @ beta_ls, t, np.zeros_like(t), candidate)
    return float(viol.max())


def lemma1_margin(fit: FitResult, problem: RegressionProblem, tuning: TuningVector) -> np.ndarray:
    """Slack ``lambda_j - z_j (X'X z)_j`` with ``z = beta_AL - beta_LS``.

    Nonnegative up to rounding for every adaptive Lasso fit.
    """
    return _margin(fit.beta_al - fit.beta_ls, problem.gram(), tuning.lam)


def _margin(z, gram, lam) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if z.shape != lam.shape or gram.shape != (z.shape[0], z.shape[0]):
        raise ValidationError("shape mismatch in lemma1_margin")
    return lam - z * (gram @ z)


def coefficient_path(problem: RegressionProblem, tuning: TuningVector,
                     scales: Iterable[float], opts: SolverOptions = SolverOptions()) -> list:
    """Fits along ``tuning * s`` for each scale; returns ``[(s, beta_al), ...]``."""
    beta_ls = least_squares(problem)
    G, r = problem.gram(), problem.xty()
    return [(float(s), fit_gram(G, r, tuning.scaled(s), beta_ls, opts).beta_al)
            for s in scales]


def path_to_csv(path: Sequence, fmt=repr) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda_scale", "j", "beta_al_j"])
    for s, beta in path:
        for j, v in enumerate(beta):
            w.writerow([fmt(float(s)), j + 1, fmt(float(v))])
    return buf.getvalue()


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False)
