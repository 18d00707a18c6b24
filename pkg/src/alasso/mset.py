"""Geometry of the limit set

    M_d = {m : (Cm)_j = 0 if psi_j = inf,  m_j (Cm)_j <= d * lambda0_j otherwise}

which is compact, symmetric (M = -M) and star-shaped about the origin; both
constraint families are homogeneous, so ``M_d = sqrt(d) * M``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, stats

from .asymptotics import PhiVector, Regime, _as_z
from .errors import NotAMemberError, ValidationError, ZeroDirectionError
from .extreal import INF, ExtReal

__all__ = [
    "MSetSpec",
    "BoundaryCloud",
    "LSEllipse",
    "FullSpace",
    "Dilation",
    "contains",
    "constraint_values",
    "feasible_basis",
    "boundary_ray",
    "sample_boundary",
    "scale_set",
    "construct_phi",
    "ls_ellipse",
    "project_cloud",
    "unit_directions",
]

MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class MSetSpec:
    regime: Regime
    scale_d: float = 1.0

    def __post_init__(self):
        if not (self.scale_d > 0 and math.isfinite(self.scale_d)):
            raise ValidationError("scale_d must be a positive real")

    @property
    def p(self) -> int:
        return self.regime.p

    def bounds(self) -> np.ndarray:
        return self.scale_d * self.regime.lambda0

    def radius_bound(self) -> float:
        """``sqrt(d * sum(lambda0) / lambda_min(C))``: every member has smaller norm."""
        lmin = np.linalg.eigvalsh(self.regime.C)[0]
        return math.sqrt(self.scale_d * float(self.regime.lambda0.sum()) / lmin)

    def contains(self, m, tol: float = MEMBER_TOL) -> bool:
        return contains(self, m, tol)

    def to_json(self) -> dict:
        return {"regime": self.regime.to_json(), "scale_d": self.scale_d}

    @classmethod
    def from_json(cls, d: dict) -> "MSetSpec":
        return cls(Regime.from_json(d["regime"]), float(d.get("scale_d", 1.0)))


def constraint_values(spec: MSetSpec, m) -> tuple:
    """``(Cm, m * Cm)`` for a point ``m``."""
    m = np.asarray(m, dtype=float).reshape(-1)
    if m.shape[0] != spec.p:
        raise ValidationError(f"point has length {m.shape[0]}, expected {spec.p}")
    Cm = spec.regime.C @ m
    return Cm, m * Cm


def contains(spec: MSetSpec, m, tol: float = MEMBER_TOL) -> bool:
    Cm, q = constraint_values(spec, m)
    flat = spec.regime.unpenalized
    if np.any(np.abs(Cm[flat]) > tol):
        return False
    return bool(np.all(q[~flat] <= spec.bounds()[~flat] + tol))


def feasible_basis(regime: Regime) -> np.ndarray:
    """Orthonormal basis (columns) of ``{d : (Cd)_j = 0 for all psi_j = inf}``."""
    flat = regime.unpenalized
    if not flat.any():
        return np.eye(regime.p)
    return linalg.null_space(regime.C[flat, :])


def _ray_feasible(spec: MSetSpec, d: np.ndarray, t: float) -> bool:
    _, q = constraint_values(spec, t * d)
    keep = ~spec.regime.unpenalized
    return bool(np.all(q[keep] <= spec.bounds()[keep]))


def _project_direction(spec: MSetSpec, direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.shape[0] != spec.p:
        raise ValidationError(f"direction has length {d.shape[0]}, expected {spec.p}")
    B = feasible_basis(spec.regime)
    proj = B @ (B.T @ d)
    nd = np.linalg.norm(d)
    npj = np.linalg.norm(proj)
    if nd == 0 or npj <= 1e-12 * nd or B.shape[1] == 0:
        raise ZeroDirectionError("direction vanishes on the feasible subspace")
    return proj / npj


def boundary_ray(spec: MSetSpec, direction, tol: float = 1e-12) -> np.ndarray:
    """Point ``t* d`` with ``t* = sup{t >= 0 : t d in M_d}``, by bisection.

    ``direction`` is first projected onto the feasible subspace and
    normalized. The returned point is on the feasible side of the bracket.
    """
    d = _project_direction(spec, direction)
    hi = spec.radius_bound() * (1.0 + 1e-6) + 1e-300
    lo = 0.0
    while _ray_feasible(spec, d, hi):
        # guard against an underestimated bracket
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _ray_feasible(spec, d, mid):
            lo = mid
        else:
            hi = mid
    return lo * d


def unit_directions(k: int, count: int, seed=None) -> np.ndarray:
    """Deterministic directions on the unit sphere in ``R^k``.

    ``k = 1``: ``+1`` and ``-1``; ``k = 2``: an even angular grid;
    ``k = 3``: a Fibonacci sphere; ``k > 3``: normalized Gaussians from ``seed``.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    if k < 1:
        raise ValidationError("dimension must be >= 1")
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        a = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(a), np.sin(a)])
    if k == 3:
        i = np.arange(count) + 0.5
        zc = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - zc ** 2)
        ang = np.pi * (1.0 + math.sqrt(5.0)) * i
        return np.column_stack([r * np.cos(ang), r * np.sin(ang), zc])
    g = np.random.default_rng(seed).standard_normal((count, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class BoundaryCloud:
    points: np.ndarray
    directions: np.ndarray
    tolerance: float
    binding: np.ndarray
    margin: np.ndarray
    color: np.ndarray

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_csv(self, fmt=repr) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"m_{j + 1}" for j in range(self.p)] + ["binding", "margin", "max_mCm"])
        for pt, b, mg, col in zip(self.points, self.binding, self.margin, self.color):
            w.writerow([fmt(float(v)) for v in pt] + [int(b) + 1, fmt(float(mg)), fmt(float(col))])
        return buf.getvalue()


def _describe(spec: MSetSpec, pts: np.ndarray):
    keep = ~spec.regime.unpenalized
    bounds = spec.bounds()
    binding, margin, color = [], [], []
    for m in pts:
        _, q = constraint_values(spec, m)
        gap = np.full(spec.p, -np.inf)
        gap[keep] = q[keep] - bounds[keep]
        j = int(np.argmax(gap))
        binding.append(j)
        margin.append(gap[j])
        color.append(q.max())
    return np.array(binding), np.array(margin), np.array(color)


def sample_boundary(spec: MSetSpec, count: int, seed=None) -> BoundaryCloud:
    """Boundary points along deterministic directions in the feasible subspace."""
    B = feasible_basis(spec.regime)
    if B.shape[1] == 0:
        raise ZeroDirectionError("limit set is the single point 0")
    dirs = unit_directions(B.shape[1], count, seed) @ B.T
    pts = np.array([boundary_ray(spec, d) for d in dirs])
    binding, margin, color = _describe(spec, pts)
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(norms > 0, pts / norms, dirs)
    return BoundaryCloud(pts, unit, MEMBER_TOL, binding, margin, color)


def scale_set(spec: MSetSpec, d: float) -> MSetSpec:
    if not d > 0:
        raise ValidationError("scaling factor d must be positive")
    return MSetSpec(spec.regime, spec.scale_d * d)


def construct_phi(spec: MSetSpec, m, Z, tol: float = MEMBER_TOL) -> PhiVector:
    """A localization vector whose ``V_phi`` minimizer is the member ``m``.

    Per coordinate: ``inf`` when ``(Cm)_j = 0``; ``-m_j/lambda0_j`` when
    ``lambda0_j > 0`` and ``|m_j (Cm)_j| <= lambda0_j``; otherwise
    ``1/(Cm)_j - psi_j Z_j``. Equalities are taken up to ``tol``.
    """
    if spec.scale_d != 1.0:
        raise ValidationError("construct_phi needs the unscaled set (scale_d = 1)")
    m = np.asarray(m, dtype=float).reshape(-1)
    if not contains(spec, m, tol):
        raise NotAMemberError("point is not a member of M")
    z = _as_z(Z)
    Cm, q = constraint_values(spec, m)
    lam0, psi = spec.regime.lambda0, spec.regime.psi
    phi = []
    for j in range(spec.p):
        if abs(Cm[j]) <= tol:
            phi.append(INF)
        elif lam0[j] > 0 and abs(q[j]) <= lam0[j] + tol:
            phi.append(ExtReal(-m[j] / lam0[j]))
        else:
            # psi_j is finite here: psi_j = inf forces (Cm)_j = 0 on M
            phi.append(ExtReal(1.0 / Cm[j] - psi[j].finite() * z[j]))
    return PhiVector(tuple(phi))


@dataclass(frozen=True)
class LSEllipse:
    """``{z : z'Cz <= k}`` with ``k = sigma^2 * chi2_p quantile(1 - alpha)``."""

    C: np.ndarray
    k: float

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(z @ self.C @ z <= self.k + tol)

    def boundary(self, count: int, seed=None) -> np.ndarray:
        p = self.C.shape[0]
        L = np.linalg.cholesky(self.C)
        u = unit_directions(p, count, seed)
        return math.sqrt(self.k) * linalg.solve_triangular(L.T, u.T, lower=False).T


def ls_ellipse(C, sigma: float, alpha: float) -> LSEllipse:
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    k = sigma ** 2 * float(stats.chi2.ppf(1.0 - alpha, C.shape[0]))
    return LSEllipse(C, k)


def project_cloud(cloud: BoundaryCloud, fixed_coordinate: int) -> np.ndarray:
    """Drop one coordinate (0-based) from every point."""
    if cloud.p < 3:
        raise ValidationError("projection needs p >= 3")
    if not 0 <= fixed_coordinate < cloud.p:
        raise ValidationError(f"coordinate index {fixed_coordinate} out of range")
    return np.delete(cloud.points, fixed_coordinate, axis=1)


# --- regions used for coverage ---------------------------------------------

class FullSpace:
    def contains(self, m, tol: float = MEMBER_TOL) -> bool:
        return True


@dataclass(frozen=True)
class Dilation:
    """Open neighborhood ``{m : dist(m, M_d) < eps}`` of a limit set."""

    spec: MSetSpec
    eps: float

    def distance(self, m) -> float:
        m = np.asarray(m, dtype=float).reshape(-1)
        if contains(self.spec, m):
            return 0.0
        reg = self.spec.regime
        flat = reg.unpenalized
        keep = np.flatnonzero(~flat)
        bounds = self.spec.bounds()
        cons = [{"type": "ineq", "fun": lambda x: bounds[keep] - (x * (reg.C @ x))[keep]}]
        if flat.any():
            cons.append({"type": "eq", "fun": lambda x: (reg.C @ x)[flat]})
        starts = []
        try:
            starts.append(boundary_ray(self.spec, m))
        except ZeroDirectionError:
            pass
        cloud = sample_boundary(self.spec, 64 if self.spec.p <= 3 else 256, seed=0)
        starts.append(cloud.points[np.argmin(np.linalg.norm(cloud.points - m, axis=1))])
        best = min(np.linalg.norm(s - m) for s in starts)
        for x0 in starts:
            r = optimize.minimize(lambda x: float((x - m) @ (x - m)), x0,
                                  jac=lambda x: 2.0 * (x - m), constraints=cons,
                                  method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
            if r.success and contains(self.spec, r.x, 1e-7):
                best = min(best, float(np.linalg.norm(r.x - m)))
        return best

    def contains(self, m, tol: float = MEMBER_TOL) -> bool:
        if contains(self.spec, m, tol):
            return True
        return self.distance(m) < self.eps
