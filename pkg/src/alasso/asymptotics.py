"""Limit objects: tuning regimes, localization vectors, and the limiting objective.

For ``lambda_j / lambda* -> lambda0_j`` and ``sqrt(lambda*) / lambda_j -> psi_j``,
the scaled estimator ``sqrt(n/lambda*) (b_AL - beta_n)`` converges to the
minimizer of

    V_phi(u) = u'Cu + sum_j pen_j(u_j)

where ``pen_j`` is 0 if ``u_j = 0`` or ``|phi_j| = inf`` or ``psi_j = inf``,
``+inf`` if ``u_j != 0`` and ``phi_j = psi_j = 0``, and otherwise
``2 (|u_j + lambda0_j phi_j| - |lambda0_j phi_j|) / |phi_j + psi_j Z_j|``
with ``Z ~ N(0, sigma^2 C^{-1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _cd
from .errors import (
    DegenerateWeightError,
    InvalidScheduleError,
    UndefinedDenominatorError,
    ValidationError,
)
from .extreal import INF, ExtReal, ext_to_json, ext_vector
from .linmodel import TuningVector

__all__ = [
    "Regime",
    "PhiVector",
    "NoiseDraw",
    "TuningSchedule",
    "regime_from_schedule",
    "sample_Z",
    "sample_Z_batch",
    "eval_Vphi",
    "minimize_Vphi",
    "check_Vphi_kkt",
    "KKTReport",
    "finite_sample_penalty",
]

PD_TOL = 1e-12


def _check_spd(C: np.ndarray, name: str = "C") -> np.ndarray:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(C)):
        raise ValidationError(f"{name} must be finite")
    if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise ValidationError(f"{name} must be symmetric")
    C = 0.5 * (C + C.T)
    if np.linalg.eigvalsh(C)[0] <= PD_TOL * max(1.0, np.abs(C).max()):
        raise ValidationError(f"{name} must be positive definite")
    return C


@dataclass(frozen=True)
class Regime:
    """Asymptotic descriptors ``(C, lambda0, psi, sigma)``."""

    C: np.ndarray
    lambda0: np.ndarray
    psi: tuple
    sigma: float = 1.0

    def __post_init__(self):
        C = _check_spd(self.C)
        lam0 = np.asarray(self.lambda0, dtype=float).reshape(-1)
        psi = ext_vector(self.psi)
        p = C.shape[0]
        if lam0.shape[0] != p or len(psi) != p:
            raise ValidationError("C, lambda0 and psi must share dimension p")
        if np.any(lam0 < 0) or np.any(lam0 > 1):
            raise ValidationError("lambda0 must lie in [0, 1]")
        if abs(lam0.max() - 1.0) > 1e-12:
            raise ValidationError("max lambda0 must equal 1")
        for j, s in enumerate(psi):
            if s < 0:
                raise ValidationError(f"psi[{j}] must be nonnegative")
            if lam0[j] > 0 and not s.is_zero():
                raise ValidationError(f"lambda0[{j}] > 0 requires psi[{j}] = 0")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "lambda0", lam0)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @classmethod
    def uniform(cls, C, sigma: float = 1.0) -> "Regime":
        p = np.atleast_2d(C).shape[0]
        return cls(C, np.ones(p), (0.0,) * p, sigma)

    @property
    def unpenalized(self) -> np.ndarray:
        """Mask of coordinates with ``psi_j = inf``."""
        return np.array([s.is_inf for s in self.psi], dtype=bool)

    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.C)

    def to_json(self) -> dict:
        return {
            "C": self.C.tolist(),
            "lambda0": self.lambda0.tolist(),
            "psi": ext_to_json(self.psi),
            "sigma": self.sigma,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Regime":
        try:
            return cls(d["C"], d["lambda0"], d["psi"], d.get("sigma", 1.0))
        except KeyError as e:
            raise ValidationError(f"regime document missing field {e}") from None


@dataclass(frozen=True)
class PhiVector:
    phi: tuple

    def __post_init__(self):
        object.__setattr__(self, "phi", ext_vector(self.phi))

    def __len__(self):
        return len(self.phi)

    def __getitem__(self, j) -> ExtReal:
        return self.phi[j]

    def to_json(self) -> list:
        return ext_to_json(self.phi)

    @classmethod
    def from_json(cls, d) -> "PhiVector":
        return cls(tuple(d))


@dataclass(frozen=True)
class NoiseDraw:
    z: np.ndarray
    seed: object = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(-1))


def _as_phi(phi) -> PhiVector:
    return phi if isinstance(phi, PhiVector) else PhiVector(tuple(phi))


def _as_z(Z) -> np.ndarray:
    if isinstance(Z, NoiseDraw):
        return Z.z
    return np.asarray(Z, dtype=float).reshape(-1)


@dataclass(frozen=True)
class TuningSchedule:
    """Finite-sample tuning ``lambda_j(n) = c_j * n**gamma_j``; ``c_j = 0`` leaves j unpenalized."""

    c: tuple
    gamma: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        g = tuple(float(v) for v in self.gamma)
        if len(c) != len(g) or not c:
            raise ValidationError("schedule needs matching, nonempty c and gamma")
        if any(v < 0 or not math.isfinite(v) for v in c):
            raise ValidationError("schedule constants c_j must be finite and >= 0")
        if not any(v > 0 for v in c):
            raise InvalidScheduleError("at least one coordinate must be penalized")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def uniform(cls, gamma: float, p: int, c: float = 1.0) -> "TuningSchedule":
        return cls((c,) * p, (gamma,) * p)

    @property
    def p(self) -> int:
        return len(self.c)

    @property
    def gamma_star(self) -> float:
        return max(g for c, g in zip(self.c, self.gamma) if c > 0)

    @property
    def c_star(self) -> float:
        gs = self.gamma_star
        return max(c for c, g in zip(self.c, self.gamma) if c > 0 and _same(g, gs))

    def tuning(self, n: float) -> TuningVector:
        return TuningVector(np.array([c * float(n) ** g if c > 0 else 0.0
                                      for c, g in zip(self.c, self.gamma)]))

    def lambda_star(self, n: float) -> float:
        return self.tuning(n).lambda_star

    def validate(self) -> None:
        gs = self.gamma_star
        if not 0.0 < gs < 1.0:
            raise InvalidScheduleError(
                f"max gamma_j = {gs} must lie in (0, 1) so that lambda* -> inf and lambda*/n -> 0"
            )

    def to_json(self) -> dict:
        return {"c": list(self.c), "gamma": list(self.gamma)}

    @classmethod
    def from_json(cls, d: dict) -> "TuningSchedule":
        try:
            return cls(tuple(d["c"]), tuple(d["gamma"]))
        except KeyError as e:
            raise ValidationError(f"schedule missing field {e}") from None


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12


def regime_from_schedule(schedule: TuningSchedule, C, sigma: float = 1.0,
                         validate: bool = True) -> Regime:
    """Limits ``lambda0`` and ``psi`` of the power schedule ``c_j n^gamma_j``.

    ``lambda0_j = c_j / c*`` on the leading exponent and 0 elsewhere;
    ``psi_j`` is 0, ``sqrt(c*)/c_j`` or ``inf`` according as ``gamma_j`` is
    above, at, or below ``gamma*/2`` (``inf`` for ``c_j = 0``).
    """
    if validate:
        schedule.validate()
    gs, cs = schedule.gamma_star, schedule.c_star
    lam0, psi = [], []
    for c, g in zip(schedule.c, schedule.gamma):
        if c == 0:
            lam0.append(0.0)
            psi.append(INF)
            continue
        lam0.append(c / cs if _same(g, gs) else 0.0)
        if _same(g, gs / 2):
            psi.append(ExtReal(math.sqrt(cs) / c))
        elif g > gs / 2:
            psi.append(ExtReal(0.0))
        else:
            psi.append(INF)
    return Regime(C, np.array(lam0), tuple(psi), sigma)


def sample_Z(regime: Regime, seed) -> NoiseDraw:
    """One draw ``sigma * L^{-T} g`` with ``C = L L'`` and ``g`` standard normal."""
    return NoiseDraw(sample_Z_batch(regime, 1, seed)[0], seed)


def sample_Z_batch(regime: Regime, count: int, seed) -> np.ndarray:
    """``count`` independent rows distributed as ``N(0, sigma^2 C^{-1})``.

    Row 0 coincides with ``sample_Z(regime, seed)``.
    """
    try:
        L = np.linalg.cholesky(regime.C)
    except np.linalg.LinAlgError:
        raise ValidationError("C is not positive definite") from None
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, regime.p))
    return regime.sigma * solve_triangular(L.T, g.T, lower=False).T


# --- V_phi -----------------------------------------------------------------

PINNED, FREE, FINITE = "pinned", "free", "finite"
_BIG = 1e300


def _classify(regime: Regime, phi: PhiVector, z: np.ndarray):
    """Per coordinate: (kind, center, weight) with penalty 2|u - center|/weight."""
    if len(phi) != regime.p or z.shape[0] != regime.p:
        raise ValidationError("phi, Z and the regime must share dimension p")
    out = []
    for j in range(regime.p):
        f, s = phi[j], regime.psi[j]
        if f.is_inf or s.is_inf:
            out.append((FREE, 0.0, None))
        elif f.is_zero() and s.is_zero():
            out.append((PINNED, 0.0, None))
        else:
            fv, sv = f.finite(), s.finite()
            w = abs(fv + sv * z[j])
            out.append((FINITE, -regime.lambda0[j] * fv, w))
    return out


def eval_Vphi(regime: Regime, phi, Z, u) -> ExtReal:
    phi, z = _as_phi(phi), _as_z(Z)
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != regime.p:
        raise ValidationError("u has wrong length")
    total = float(u @ regime.C @ u)
    for j, (kind, center, w) in enumerate(_classify(regime, phi, z)):
        if u[j] == 0.0 or kind == FREE:
            continue
        if kind == PINNED:
            return INF
        if w == 0.0:
            raise UndefinedDenominatorError(f"phi_{j} + psi_{j} Z_{j} = 0")
        total += 2.0 * (abs(u[j] - center) - abs(center)) / w
    return ExtReal.of(total)


def minimize_Vphi(regime: Regime, phi, Z, *, tol: float = 1e-12,
                  max_iter: int = 100_000) -> np.ndarray:
    """Unique minimizer of ``V_phi``.

    Coordinates with ``phi_j = psi_j = 0`` are pinned at 0; the rest are
    found by coordinate descent (exact quadratic step for penalty-free
    coordinates, shifted soft-threshold otherwise).
    """
    phi, z = _as_phi(phi), _as_z(Z)
    cls = _classify(regime, phi, z)
    keep = [j for j, (k, _, _) in enumerate(cls) if k != PINNED]
    m = np.zeros(regime.p)
    if not keep:
        return m
    t = np.zeros(len(keep))
    c = np.zeros(len(keep))
    for i, j in enumerate(keep):
        kind, center, w = cls[j]
        if kind == FINITE:
            if w == 0.0:
                raise UndefinedDenominatorError(f"phi_{j} + psi_{j} Z_{j} = 0")
            # a weight this small pins the coordinate to its kink
            t[i] = 1.0 / w if w > 1.0 / _BIG else math.inf
            c[i] = center
    G = regime.C[np.ix_(keep, keep)]
    # minimizers lie in M, so |G m| is bounded independently of the weights;
    # scaling by max(t) would let a huge weight swamp the tolerance
    radius = math.sqrt(len(keep) / np.linalg.eigvalsh(G)[0])
    scale = 1.0 + float(np.abs(G).max()) * (radius + float(np.abs(c).max(initial=0.0)))
    sol, _, _ = _cd.solve_shifted_l1(G, np.zeros(len(keep)), t, c,
                                     tol=tol * scale, max_iter=max_iter)
    m[keep] = sol
    return m


@dataclass
class KKTReport:
    ok: bool
    cases: list
    violations: np.ndarray

    def to_json(self, phi=None, z=None, m=None) -> dict:
        d = {"kkt": list(self.cases), "ok": self.ok}
        if phi is not None:
            d["phi"] = _as_phi(phi).to_json()
        if z is not None:
            d["z"] = _as_z(z).tolist()
        if m is not None:
            d["m"] = np.asarray(m, dtype=float).tolist()
        return d

    def __bool__(self):
        return self.ok


def check_Vphi_kkt(regime: Regime, phi, Z, m, tol: float = 1e-8) -> KKTReport:
    """Subgradient characterization of the minimizers of ``V_phi``.

    Cases per coordinate: ``pinned`` (``m_j = 0``), ``free``
    (``(Cm)_j = 0``), ``stationary`` (``(Cm)_j = -sgn(m_j + lambda0_j phi_j)/w_j``)
    and ``kink`` (``|(Cm)_j| <= 1/w_j``) with ``w_j = |psi_j Z_j + phi_j|``.
    """
    phi, z = _as_phi(phi), _as_z(Z)
    m = np.asarray(m, dtype=float).reshape(-1)
    if m.shape[0] != regime.p:
        raise ValidationError("m has wrong length")
    Cm = regime.C @ m
    cases, viol = [], np.zeros(regime.p)
    for j, (kind, center, w) in enumerate(_classify(regime, phi, z)):
        if kind == PINNED:
            cases.append("pinned")
            viol[j] = abs(m[j])
        elif kind == FREE:
            cases.append("free")
            viol[j] = abs(Cm[j])
        elif w == 0.0:
            cases.append("undefined")
            viol[j] = math.inf
        elif abs(m[j] - center) <= tol:
            cases.append("kink")
            viol[j] = max(0.0, abs(Cm[j]) - 1.0 / w)
        else:
            cases.append("stationary")
            viol[j] = abs(Cm[j] + math.copysign(1.0, m[j] - center) / w)
    return KKTReport(bool(np.all(viol <= tol)), cases, viol)


def finite_sample_penalty(lam_j: float, lam_star: float, n: float, beta_nj: float,
                          beta_ls_j: float, u_j: float) -> float:
    """Finite-n penalty increment whose limit is the ``V_phi`` penalty term.

    ``(lam_j / sqrt(n lam*)) / |b_LS_j| * (|u_j + sqrt(n/lam*) beta_nj| - |sqrt(n/lam*) beta_nj|)``.
    """
    if beta_ls_j == 0.0:
        raise DegenerateWeightError("beta_LS_j = 0")
    shift = math.sqrt(n / lam_star) * beta_nj
    return (lam_j / math.sqrt(n * lam_star)) / abs(beta_ls_j) * (abs(u_j + shift) - abs(shift))
