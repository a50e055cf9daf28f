"""Isothermal two-phase closures.

The gas is ideal and isothermal, ``rho_g = p / (R T0)``; the liquid is
incompressible with density ``rho_l``.  Everything here is a pure function of
its arguments and accepts scalars or numpy arrays (states are component-first,
i.e. ``U[0]`` is the mixture density of every cell).
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .errors import DomainError, ModelError, NumericalError, StateError

ArrayLike = Union[float, np.ndarray]

INVERT_RTOL = 1e-12
INVERT_MAXITER = 200


class PrimitiveState(NamedTuple):
    p: ArrayLike
    u: ArrayLike
    alpha: ArrayLike


class ConservedState(NamedTuple):
    rho_m: ArrayLike
    m: ArrayLike
    Gamma: ArrayLike


# ---------------------------------------------------------------------------
# equilibrium void-fraction maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineClampMap:
    """``alpha_eq(p) = clamp(c0 + c1 p, alpha_min, alpha_max)``."""

    c0: float = 0.5
    c1: float = -0.05
    alpha_min: float = 0.01
    alpha_max: float = 0.99

    kind = "affine_clamp"

    def __call__(self, p):
        return np.clip(self.c0 + self.c1 * np.asarray(p, dtype=float), self.alpha_min, self.alpha_max)

    def derivative(self, p):
        raw = self.c0 + self.c1 * np.asarray(p, dtype=float)
        return np.where((raw > self.alpha_min) & (raw < self.alpha_max), self.c1, 0.0)

    def second_derivative(self, p):
        return np.zeros(np.shape(p))

    def is_unclamped(self, p) -> np.ndarray:
        raw = self.c0 + self.c1 * np.asarray(p, dtype=float)
        return (raw >= self.alpha_min) & (raw <= self.alpha_max)


@dataclass(frozen=True)
class LogisticMap:
    """Smooth decreasing map ``alpha_min + (alpha_max - alpha_min) / (1 + exp((p - p_mid)/scale))``.

    With the defaults it matches the affine default at ``p = 0`` (value 0.5,
    slope -0.049 against -0.05) and is C-infinity everywhere.
    """

    alpha_min: float = 0.01
    alpha_max: float = 0.99
    p_mid: float = 0.0
    scale: float = 5.0

    kind = "logistic"

    def _sigma(self, p):
        z = (np.asarray(p, dtype=float) - self.p_mid) / self.scale
        return 0.5 * (1.0 - np.tanh(0.5 * z))

    def __call__(self, p):
        return self.alpha_min + (self.alpha_max - self.alpha_min) * self._sigma(p)

    def derivative(self, p):
        s = self._sigma(p)
        return -(self.alpha_max - self.alpha_min) * s * (1.0 - s) / self.scale

    def second_derivative(self, p):
        s = self._sigma(p)
        return (self.alpha_max - self.alpha_min) * s * (1.0 - s) * (1.0 - 2.0 * s) / self.scale**2

    def is_unclamped(self, p) -> np.ndarray:
        return np.zeros(np.shape(p), dtype=bool)


ALPHA_MAPS = {AffineClampMap.kind: AffineClampMap, LogisticMap.kind: LogisticMap}


def alpha_map_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", AffineClampMap.kind)
    try:
        cls = ALPHA_MAPS[kind]
    except KeyError:
        raise DomainError(f"unknown alpha_eq kind {kind!r}; expected one of {sorted(ALPHA_MAPS)}") from None
    return cls(**{k: float(v) for k, v in d.items()})


def alpha_map_to_dict(amap) -> dict:
    return {"kind": amap.kind, **asdict(amap)}


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EosModel:
    R: float = 1.0
    T0: float = 1.0
    rho_l: float = 10.0
    A_g: float = 0.0
    A_l: float = 0.0
    alpha_eq: AffineClampMap | LogisticMap = field(default_factory=AffineClampMap)
    p_lo: float = 0.5
    p_hi: float = 8.0

    def __post_init__(self):
        for name in ("R", "T0", "rho_l"):
            if not getattr(self, name) > 0:
                raise DomainError(f"EosModel.{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.p_lo < self.p_hi:
            raise DomainError(f"EosModel operating range must satisfy 0 < p_lo < p_hi, got [{self.p_lo}, {self.p_hi}]")
        amap = self.alpha_eq
        if not 0 < amap.alpha_min <= amap.alpha_max < 1:
            raise DomainError("alpha_eq bounds must satisfy 0 < alpha_min <= alpha_max < 1")
        values = amap(np.linspace(self.p_lo, self.p_hi, 257))
        if values.min() < amap.alpha_min or values.max() > amap.alpha_max:
            raise DomainError("alpha_eq leaves [alpha_min, alpha_max] on the operating range")

    @property
    def RT0(self) -> float:
        return self.R * self.T0

    @property
    def equal_density_pressure(self) -> float:
        """Pressure at which the gas becomes as dense as the liquid."""
        return self.rho_l * self.RT0

    def with_(self, **changes) -> "EosModel":
        kw = {**{f: getattr(self, f) for f in self.__dataclass_fields__}, **changes}
        return EosModel(**kw)

    def to_dict(self) -> dict:
        d = {k: float(getattr(self, k)) for k in ("R", "T0", "rho_l", "A_g", "A_l", "p_lo", "p_hi")}
        d["alpha_eq"] = alpha_map_to_dict(self.alpha_eq)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EosModel":
        d = dict(d)
        amap = d.pop("alpha_eq", None)
        kw = {k: float(v) for k, v in d.items()}
        if amap is not None:
            kw["alpha_eq"] = amap if not isinstance(amap, dict) else alpha_map_from_dict(amap)
        return cls(**kw)


DEFAULT_EOS = EosModel()


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------


def _positive_pressure(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError(f"pressure must be positive, got min {np.min(p)!r}")
    return p


def _in_range(p, eos: EosModel) -> np.ndarray:
    p = _positive_pressure(p)
    if np.any(p < eos.p_lo) or np.any(p > eos.p_hi):
        raise DomainError(f"pressure outside operating range [{eos.p_lo}, {eos.p_hi}]: min {p.min()!r}, max {p.max()!r}")
    return p


def _void_fraction(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~((alpha > 0) & (alpha < 1))):
        raise DomainError("void fraction must lie in (0, 1)")
    return alpha


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# closures
# ---------------------------------------------------------------------------


def gas_density(p, eos: EosModel = DEFAULT_EOS):
    p = _positive_pressure(p)
    return _scalarize(p / eos.RT0)


def alpha_eq(p, eos: EosModel = DEFAULT_EOS):
    p = _in_range(p, eos)
    return _scalarize(eos.alpha_eq(p))


def alpha_eq_derivative(p, eos: EosModel = DEFAULT_EOS):
    p = _in_range(p, eos)
    return _scalarize(eos.alpha_eq.derivative(p))


def mixture_density(p, alpha, eos: EosModel = DEFAULT_EOS):
    p = _positive_pressure(p)
    alpha = _void_fraction(alpha)
    return _scalarize(alpha * p / eos.RT0 + (1.0 - alpha) * eos.rho_l)


def equilibrium_mixture_density(p, eos: EosModel = DEFAULT_EOS):
    p = _in_range(p, eos)
    a = eos.alpha_eq(p)
    return _scalarize(a * p / eos.RT0 + (1.0 - a) * eos.rho_l)


def _rho_eq_unchecked(p, eos: EosModel):
    a = eos.alpha_eq(p)
    return a * p / eos.RT0 + (1.0 - a) * eos.rho_l


def _inv_ae2_unchecked(p, eos: EosModel):
    """d rho_eq / dp, i.e. 1 / a_e^2."""
    return eos.alpha_eq.derivative(p) * (p / eos.RT0 - eos.rho_l) + eos.alpha_eq(p) / eos.RT0


def invert_equilibrium_density(rho, eos: EosModel = DEFAULT_EOS, p_guess=None,
                               rtol: float = INVERT_RTOL, maxiter: int = INVERT_MAXITER):
    """Pressure ``p`` with ``rho_eq(p) = rho``.

    Safeguarded Newton: each iterate keeps a bracket ``[lo, hi]`` and falls
    back to bisection whenever the Newton point leaves it.  ``p_guess`` (for
    warm starts) is clipped into the operating range.
    """
    rho = np.asarray(rho, dtype=float)
    scalar = rho.ndim == 0
    rho = np.atleast_1d(rho)
    r_lo = float(_rho_eq_unchecked(eos.p_lo, eos))
    r_hi = float(_rho_eq_unchecked(eos.p_hi, eos))
    slack = 4 * np.finfo(float).eps * max(abs(r_lo), abs(r_hi))
    if np.any(~((rho >= r_lo - slack) & (rho <= r_hi + slack))):
        raise DomainError(f"density outside attainable range [{r_lo!r}, {r_hi!r}] of rho_eq")

    lo = np.full(rho.shape, eos.p_lo)
    hi = np.full(rho.shape, eos.p_hi)
    if p_guess is None:
        p = lo + (hi - lo) * (rho - r_lo) / (r_hi - r_lo)
    else:
        p = np.clip(np.broadcast_to(np.asarray(p_guess, dtype=float), rho.shape), eos.p_lo, eos.p_hi).copy()

    for _ in range(maxiter):
        res = _rho_eq_unchecked(p, eos) - rho
        done = np.abs(res) <= rtol * np.abs(rho)
        if np.all(done):
            return float(p[0]) if scalar else p
        # rho_eq is increasing, so the sign of the residual updates the bracket
        hi = np.where(res > 0, p, hi)
        lo = np.where(res < 0, p, lo)
        step = p - res / _inv_ae2_unchecked(p, eos)
        bad = ~((step > lo) & (step < hi))
        step = np.where(bad, 0.5 * (lo + hi), step)
        p = np.where(done, p, step)
        if np.all(hi - lo <= 0):
            break
    res = _rho_eq_unchecked(p, eos) - rho
    if np.all(np.abs(res) <= rtol * np.abs(rho)):
        return float(p[0]) if scalar else p
    raise NumericalError(f"equilibrium density inversion did not converge in {maxiter} iterations "
                         f"(max residual {np.max(np.abs(res)):.3e})")


def cons_from_prim(V, eos: EosModel = DEFAULT_EOS) -> ConservedState:
    p, u, alpha = V
    p = _positive_pressure(p)
    alpha = _void_fraction(alpha)
    u = np.asarray(u, dtype=float)
    rho_g = p / eos.RT0
    rho_m = alpha * rho_g + (1.0 - alpha) * eos.rho_l
    return ConservedState(_scalarize(rho_m), _scalarize(rho_m * u), _scalarize(rho_g * alpha))


def check_conserved(U, eos: EosModel = DEFAULT_EOS, time: float | None = None) -> None:
    """Raise StateError naming the first cell that violates positivity."""
    rho_m, _, gam = (np.asarray(c, dtype=float) for c in U)
    ok = (rho_m > 0) & (gam > 0) & (eos.rho_l - rho_m + gam > 0) & (rho_m - gam > 0)
    if not np.all(ok):
        bad = np.flatnonzero(~np.atleast_1d(ok))[0]
        cell = int(bad) if np.ndim(ok) else None
        r = np.atleast_1d(rho_m)[bad]
        g = np.atleast_1d(gam)[bad]
        raise StateError(f"invalid conservative state (rho_m={r!r}, Gamma={g!r})", cell=cell, time=time)


def prim_from_cons(U, eos: EosModel = DEFAULT_EOS) -> PrimitiveState:
    rho_m, m, gam = (np.asarray(c, dtype=float) for c in U)
    check_conserved((rho_m, m, gam), eos)
    alpha = 1.0 - (rho_m - gam) / eos.rho_l
    p = eos.RT0 * gam / alpha
    u = m / rho_m
    return PrimitiveState(_scalarize(p), _scalarize(u), _scalarize(alpha))


def _prim_unchecked(U, eos: EosModel):
    rho_m, m, gam = U
    alpha = 1.0 - (rho_m - gam) / eos.rho_l
    return eos.RT0 * gam / alpha, m / rho_m, alpha


def jacobian_prim_to_cons(V, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """dU/dV for a single primitive state, rows (rho_m, m, Gamma), columns (p, u, alpha)."""
    p, u, alpha = (float(c) for c in V)
    _positive_pressure(p)
    _void_fraction(alpha)
    rho_g = p / eos.RT0
    rho_m = alpha * rho_g + (1.0 - alpha) * eos.rho_l
    dp = alpha / eos.RT0
    dg = rho_g - eos.rho_l
    return np.array([
        [dp, 0.0, dg],
        [u * dp, rho_m, u * dg],
        [dp, 0.0, rho_g],
    ])


def sound_speeds(p, alpha, eos: EosModel = DEFAULT_EOS):
    """Return ``(a_f^2, a_e^2)``: frozen speed at ``alpha``, equilibrium speed at ``p``."""
    p = _in_range(p, eos)
    alpha = _void_fraction(alpha)
    af2 = eos.RT0 / alpha
    denom = _inv_ae2_unchecked(p, eos)
    if np.any(denom <= 0):
        raise ModelError("equilibrium sound speed undefined: d rho_eq/dp <= 0 for this alpha_eq map")
    return _scalarize(af2), _scalarize(1.0 / denom)


@dataclass
class SubcharacteristicReport:
    passed: bool
    min_margin: float
    p_at_min: float
    n_points: int
    warnings: list[str] = field(default_factory=list)


def validate_subcharacteristic(eos: EosModel = DEFAULT_EOS, p_grid=None) -> SubcharacteristicReport:
    """Sweep ``a_f^2 - a_e^2`` at ``alpha = alpha_eq(p)``; failures are reported, never raised."""
    if p_grid is None:
        p_grid = np.linspace(eos.p_lo, eos.p_hi, 1000)
    p = _in_range(np.atleast_1d(np.asarray(p_grid, dtype=float)), eos)
    notes = []
    if p.min() <= eos.equal_density_pressure <= p.max():
        msg = (f"pressure range [{p.min():g}, {p.max():g}] crosses the equal-density point "
               f"p = rho_l R T0 = {eos.equal_density_pressure:g}")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    a = eos.alpha_eq(p)
    denom = _inv_ae2_unchecked(p, eos)
    with np.errstate(divide="ignore"):
        margin = np.where(denom > 0, eos.RT0 / a - 1.0 / np.where(denom > 0, denom, 1.0), -np.inf)
    i = int(np.argmin(margin))
    return SubcharacteristicReport(bool(margin[i] > 0), float(margin[i]), float(p[i]), int(p.size), notes)


class TransportCoefficients(NamedTuple):
    A: ArrayLike
    B: ArrayLike
    B1: ArrayLike


def error_transport_coefficients(p, alpha, eos: EosModel = DEFAULT_EOS) -> TransportCoefficients:
    """Coefficients of the transport equation for ``R = (alpha - alpha_eq)/eps``.

    ``Lambda(p) = alpha_eq rho_g``; ``A = Lambda' p/alpha - rho_g alpha_eq``,
    ``B1 = (p/(alpha rho_l))(1 - rho_l R T0/p)`` and ``B = -Lambda' B1``.
    """
    p = _in_range(p, eos)
    alpha = _void_fraction(alpha)
    rho_g = p / eos.RT0
    a_eq = eos.alpha_eq(p)
    lam_prime = a_eq / eos.RT0 + rho_g * eos.alpha_eq.derivative(p)
    A = lam_prime * p / alpha - rho_g * a_eq
    B1 = p / (alpha * eos.rho_l) * (1.0 - eos.rho_l * eos.RT0 / p)
    B = -lam_prime * B1
    return TransportCoefficients(_scalarize(A), _scalarize(B), _scalarize(B1))


def frozen_speed_bound(U, eos: EosModel = DEFAULT_EOS):
    """``|u| + a_f`` per cell for a component-first conservative array."""
    _, u, alpha = _prim_unchecked(U, eos)
    return np.abs(u) + np.sqrt(eos.RT0 / alpha)


__all__ = [
    "AffineClampMap", "LogisticMap", "EosModel", "DEFAULT_EOS", "PrimitiveState", "ConservedState",
    "gas_density", "alpha_eq", "alpha_eq_derivative", "mixture_density", "equilibrium_mixture_density",
    "invert_equilibrium_density", "cons_from_prim", "prim_from_cons", "check_conserved",
    "jacobian_prim_to_cons", "sound_speeds", "validate_subcharacteristic", "SubcharacteristicReport",
    "error_transport_coefficients", "TransportCoefficients", "frozen_speed_bound",
]
