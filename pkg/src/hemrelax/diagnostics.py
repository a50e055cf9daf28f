"""Measured quantities for relaxation runs: norms, residual fields, entropy budgets, rate fits.

Conventions: space integrals are midpoint (cell sums), time integrals are
trapezoidal over snapshots, x-derivatives are central differences and
t-derivatives are forward differences between consecutive snapshots.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .entropy import entropy_density, entropy_gradient, entropy_hessian, equilibrium_entropy_pair
from .eos import DEFAULT_EOS, EosModel, _inv_ae2_unchecked, _rho_eq_unchecked, invert_equilibrium_density
from .equilibrium_solver import eq_run, project_to_equilibrium
from .errors import UsageError
from .presets import preset_initial_condition
from .relax_solver import Grid1D, SolutionField, SolverConfig, run

log = logging.getLogger(__name__)

try:
    _trapezoid = np.trapezoid
except AttributeError:  # numpy < 2
    _trapezoid = np.trapz


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def space_l2(f, dx: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return np.sqrt(np.sum(f * f, axis=-1) * dx)


def spacetime_l2(f, times, dx: float) -> float:
    """L2 over (t, x) of snapshot values, trapezoid in time."""
    sq = np.sum(np.asarray(f, dtype=float) ** 2, axis=-1) * dx
    if np.size(times) < 2:
        return float(np.sqrt(sq.sum()))
    return float(np.sqrt(_trapezoid(sq, times)))


def interval_l2(D, times, dx: float) -> float:
    """L2 over (t, x) of values that are constant on each interval between snapshots."""
    sq = np.sum(np.asarray(D, dtype=float) ** 2, axis=-1) * dx
    return float(np.sqrt(np.sum(np.diff(times) * sq)))


@dataclass
class NormReport:
    l2_space: np.ndarray
    l2_spacetime: float
    linf: float
    labels: tuple = ()

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "l2_space": [float(v) for v in self.l2_space],
                "l2_spacetime": float(self.l2_spacetime), "linf": float(self.linf)}


def norm_report(values, times, dx: float, label: str = "") -> NormReport:
    values = np.asarray(values, dtype=float)
    return NormReport(space_l2(values, dx), spacetime_l2(values, times, dx),
                      float(np.max(np.abs(values))) if values.size else 0.0, (label,))


def ddx(f, grid: Grid1D) -> np.ndarray:
    """Central difference along the last axis (one-sided at outflow edges)."""
    f = np.asarray(f, dtype=float)
    if grid.boundary == "periodic":
        return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * grid.dx)
    return np.gradient(f, grid.dx, axis=-1)


def _forward_dt(f, times) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return np.diff(f, axis=0) / np.diff(times)[:, None]


# ---------------------------------------------------------------------------
# residual fields
# ---------------------------------------------------------------------------


def relaxation_residual_field(field: SolutionField, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """``alpha - alpha_eq(p)`` per snapshot and cell."""
    if field.is_equilibrium:
        return np.zeros((field.n_times, field.grid.n_cells))
    p, _, alpha = field.primitive(eos)
    return alpha - eos.alpha_eq(p)


class REps(NamedTuple):
    R: np.ndarray
    dRdx: np.ndarray


def r_eps_field(field: SolutionField, eps: float, eos: EosModel = DEFAULT_EOS) -> REps:
    """``R = (alpha - alpha_eq)/eps`` and its central x-derivative."""
    if not eps > 0:
        raise UsageError("eps must be positive")
    R = relaxation_residual_field(field, eos) / eps
    return REps(R, ddx(R, field.grid))


def error_term_norms(field: SolutionField, eps: float, eos: EosModel = DEFAULT_EOS) -> tuple[float, float]:
    """``(sup_t ||R||_L2, sqrt(eps) ||dR/dx||_L2(t,x))``."""
    R, dR = r_eps_field(field, eps, eos)
    dx = field.grid.dx
    return float(np.max(space_l2(R, dx))), float(np.sqrt(eps) * spacetime_l2(dR, field.times, dx))


def q_eps_field(field: SolutionField, eps: float, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """``Q = (rho_g(p) - rho_l) R``, so that ``rho_m = rho_eq(p) + eps Q``."""
    p, _, _ = field.primitive(eos)
    R = r_eps_field(field, eps, eos).R
    return (p / eos.RT0 - eos.rho_l) * R


def q_reconstruction_error(field: SolutionField, eps: float, eos: EosModel = DEFAULT_EOS) -> float:
    """Max relative mismatch of ``rho_eq(p) + eps Q`` against the stored ``rho_m``."""
    p, _, _ = field.primitive(eos)
    rho_m = field.states[:, 0, :]
    rebuilt = _rho_eq_unchecked(p, eos) + eps * q_eps_field(field, eps, eos)
    return float(np.max(np.abs(rebuilt - rho_m) / rho_m))


# ---------------------------------------------------------------------------
# entropy budgets
# ---------------------------------------------------------------------------


def total_entropy_series(field: SolutionField, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """``sum_i eta(U_i) dx`` at each snapshot (equilibrium fields use the restricted entropy)."""
    if field.is_equilibrium:
        p, u, _ = field.primitive(eos)
        eta, _ = equilibrium_entropy_pair(p, u, eos)
        return np.sum(eta, axis=-1) * field.grid.dx
    U = np.moveaxis(field.states, 1, 0)
    return np.sum(entropy_density(U, eos), axis=-1) * field.grid.dx


def entropy_increase(series) -> float:
    """Largest rise ``S_k - S_j`` over ``j < k``; zero for a non-increasing series."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        return 0.0
    running_min = np.minimum.accumulate(s)[:-1]
    return float(max(0.0, np.max(s[1:] - running_min)))


def gradient_norm_series(field: SolutionField, eos: EosModel = DEFAULT_EOS) -> tuple[np.ndarray, np.ndarray]:
    p, u, _ = field.primitive(eos)
    dx = field.grid.dx
    return space_l2(ddx(p, field.grid), dx), space_l2(ddx(u, field.grid), dx)


def time_derivative_norms(field: SolutionField, eos: EosModel = DEFAULT_EOS) -> tuple[float, float]:
    if field.n_times < 2:
        raise UsageError("time derivatives need at least two snapshots")
    p, u, _ = field.primitive(eos)
    dx = field.grid.dx
    return (interval_l2(_forward_dt(p, field.times), field.times, dx),
            interval_l2(_forward_dt(u, field.times), field.times, dx))


def pressure_equation_residual(field: SolutionField, eps: float, eos: EosModel = DEFAULT_EOS,
                               include_source: bool = True) -> float:
    """L2(t, x) residual of the primitive pressure equation

        p_t = -u p_x - (p/alpha) u_x - p/(eps alpha rho_l) (1 - rho_l R T0/p)(alpha_eq - alpha)

    with the right-hand side frozen at the left end of each snapshot interval.
    ``include_source=False`` drops the relaxation term (ablation).
    """
    if field.n_times < 2:
        raise UsageError("the pressure residual needs at least two snapshots")
    p, u, alpha = field.primitive(eos)
    grid = field.grid
    rhs = -u * ddx(p, grid) - p / alpha * ddx(u, grid)
    if include_source:
        rhs = rhs - p / (eps * alpha * eos.rho_l) * (1.0 - eos.rho_l * eos.RT0 / p) * (eos.alpha_eq(p) - alpha)
    res = _forward_dt(p, field.times) - rhs[:-1]
    return interval_l2(res, field.times, grid.dx)


# ---------------------------------------------------------------------------
# entropy dissipation measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpFunction:
    """Product bump ``(1 - s^2)^4 (1 - r^2)^4`` with ``s = (t - t_c)/t_w``, ``r = (x - x_c)/x_w``."""

    t_c: float
    t_w: float
    x_c: float
    x_w: float
    power: int = 4

    def _parts(self, t, x):
        s = (np.asarray(t, dtype=float) - self.t_c) / self.t_w
        r = (np.asarray(x, dtype=float) - self.x_c) / self.x_w
        inside_t = np.abs(s) < 1
        inside_x = np.abs(r) < 1
        k = self.power
        ft = np.where(inside_t, (1 - s * s) ** k, 0.0)
        fx = np.where(inside_x, (1 - r * r) ** k, 0.0)
        dft = np.where(inside_t, -2 * k * s * (1 - s * s) ** (k - 1) / self.t_w, 0.0)
        dfx = np.where(inside_x, -2 * k * r * (1 - r * r) ** (k - 1) / self.x_w, 0.0)
        return ft, fx, dft, dfx

    def value(self, t, x):
        ft, fx, _, _ = self._parts(t, x)
        return ft * fx

    def dt(self, t, x):
        _, fx, dft, _ = self._parts(t, x)
        return dft * fx

    def dx(self, t, x):
        ft, _, _, dfx = self._parts(t, x)
        return ft * dfx

    def check_support(self, t0: float, t1: float, x0: float, x1: float) -> None:
        if self.t_c - self.t_w < t0 or self.t_c + self.t_w > t1 or self.x_c - self.x_w < x0 or self.x_c + self.x_w > x1:
            raise UsageError("test function support is not contained in the space-time domain")


def entropy_dissipation_measure(field: SolutionField, test_fn: BumpFunction, eos: EosModel = DEFAULT_EOS) -> float:
    """Weak pairing ``-int int (eta_eq phi_t + q_eq phi_x) dx dt`` along ``(p, u)`` of ``field``."""
    grid = field.grid
    test_fn.check_support(field.times[0], field.times[-1], grid.x_lo, grid.x_hi)
    p, u, _ = field.primitive(eos)
    eta, q = equilibrium_entropy_pair(p, u, eos)
    T, X = np.meshgrid(field.times, grid.centers, indexing="ij")
    integrand = np.sum(eta * test_fn.dt(T, X) + q * test_fn.dx(T, X), axis=-1) * grid.dx
    return float(-_trapezoid(integrand, field.times))


# ---------------------------------------------------------------------------
# relative entropy
# ---------------------------------------------------------------------------


def _eq_lift(W, eos):
    """Pressure and the full conservative state on the equilibrium manifold for ``W = (rho, mom)``."""
    rho, mom = (np.asarray(c, dtype=float) for c in W)
    p = invert_equilibrium_density(rho.ravel(), eos).reshape(rho.shape)
    gam = eos.alpha_eq(p) * p / eos.RT0
    return p, (rho, mom, gam)


def _gamma_eq_derivatives(p, eos):
    """First and second derivatives of ``Gamma_eq(rho) = alpha_eq(p(rho)) rho_g(p(rho))``."""
    amap, RT = eos.alpha_eq, eos.RT0
    a, a1, a2 = amap(p), amap.derivative(p), amap.second_derivative(p)
    D = _inv_ae2_unchecked(p, eos)
    D1 = a2 * (p / RT - eos.rho_l) + 2.0 * a1 / RT
    L1 = a / RT + a1 * p / RT
    L2 = 2.0 * a1 / RT + a2 * p / RT
    return L1 / D, (L2 * D - L1 * D1) / D**3


def equilibrium_entropy(W, eos: EosModel = DEFAULT_EOS):
    _, U = _eq_lift(W, eos)
    return entropy_density(U, eos)


def equilibrium_entropy_gradient(W, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    p, U = _eq_lift(W, eos)
    g = entropy_gradient(U, eos)
    d1, _ = _gamma_eq_derivatives(p, eos)
    return np.stack([g[0] + g[2] * d1, g[1]])


def equilibrium_entropy_hessian(W, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    p, U = _eq_lift(W, eos)
    H = entropy_hessian(U, eos)
    g = entropy_gradient(U, eos)
    d1, d2 = _gamma_eq_derivatives(p, eos)
    out = np.empty((2, 2) + np.shape(p))
    out[0, 0] = H[0, 0] + 2.0 * H[0, 2] * d1 + H[2, 2] * d1 * d1 + g[2] * d2
    out[0, 1] = out[1, 0] = H[0, 1] + H[1, 2] * d1
    out[1, 1] = H[1, 1]
    return out


def _check_paired(field_relax: SolutionField, field_eq: SolutionField):
    if field_relax.grid != field_eq.grid:
        raise UsageError("fields live on different grids")
    if field_relax.n_times != field_eq.n_times or not np.allclose(field_relax.times, field_eq.times, rtol=1e-12, atol=1e-15):
        raise UsageError("fields have different snapshot times")


def relative_entropy(field_relax: SolutionField, field_eq: SolutionField, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """``sum [eta_eq(W) - eta_eq(W0) - grad eta_eq(W0).(W - W0)] dx`` per snapshot.

    ``W`` is the relaxation field projected to ``(rho_eq(p), rho_eq(p) u)``;
    ``W0`` the equilibrium field (either kind of field is accepted for both).
    """
    _check_paired(field_relax, field_eq)
    W = project_to_equilibrium(field_relax, eos) if not field_relax.is_equilibrium else field_relax.states
    W0 = project_to_equilibrium(field_eq, eos) if not field_eq.is_equilibrium else field_eq.states
    W = np.moveaxis(W, 1, 0)
    W0 = np.moveaxis(W0, 1, 0)
    e = equilibrium_entropy(W, eos) - equilibrium_entropy(W0, eos)
    e -= np.sum(equilibrium_entropy_gradient(W0, eos) * (W - W0), axis=0)
    return np.sum(e, axis=-1) * field_relax.grid.dx


def gronwall_constant(times, rel_entropy, eps: float, e0: float | None = None) -> float:
    """Smallest ``C >= 0`` with ``E(t) <= e^{Ct} E(0) + C eps (e^{Ct} - 1)`` at every snapshot."""
    t = np.asarray(times, dtype=float)
    E = np.asarray(rel_entropy, dtype=float)
    E0 = max(float(E[0]) if e0 is None else e0, 0.0)

    def ok(C):
        return bool(np.all(E <= np.exp(C * t) * E0 + C * eps * np.expm1(C * t) + 1e-300))

    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e12:
            return float("inf")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------


def fit_slope(eps_values, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


@dataclass
class RateReport:
    eps_values: list
    errors_p: list
    errors_u: list
    slope_p: float
    slope_u: float
    residual_constant: list
    precheck_passed: bool = True
    scheme_error_p: float = 0.0
    scheme_error_u: float = 0.0
    slope_min: float = 0.45
    slope_max: float = 1.3
    verdict: str = ""
    fields: dict = field(default_factory=dict, repr=False)
    eq_field: SolutionField | None = field(default=None, repr=False)

    def __post_init__(self):
        eps = np.asarray(self.eps_values, dtype=float)
        if eps.size > 1 and np.any(np.diff(eps) >= 0):
            raise UsageError("eps_values must be strictly decreasing")
        if not (np.isfinite(self.slope_p) and np.isfinite(self.slope_u)):
            raise UsageError("fitted slopes must be finite")
        if not self.verdict:
            self.verdict = self._verdict()

    def _verdict(self) -> str:
        if not self.precheck_passed:
            return "INCONCLUSIVE"
        ok = all(self.slope_min <= s <= self.slope_max for s in (self.slope_p, self.slope_u))
        return "PASS" if ok else "FAIL"

    @property
    def residual_flatness(self) -> float:
        r = np.asarray(self.residual_constant, dtype=float)
        return float(r.max() / r.min()) if r.size and r.min() > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "eps_values": [float(v) for v in self.eps_values],
            "errors_p": [float(v) for v in self.errors_p],
            "errors_u": [float(v) for v in self.errors_u],
            "slope_p": float(self.slope_p),
            "slope_u": float(self.slope_u),
            "residual_constant": [float(v) for v in self.residual_constant],
            "residual_flatness": self.residual_flatness,
            "precheck_passed": bool(self.precheck_passed),
            "scheme_error_p": float(self.scheme_error_p),
            "scheme_error_u": float(self.scheme_error_u),
            "slope_min": float(self.slope_min),
            "slope_max": float(self.slope_max),
            "verdict": self.verdict,
        }


def synthetic_rate_report(eps_list: Sequence[float], power: float = 0.5, constant: float = 1.0,
                          **kw) -> RateReport:
    """Rate report built from injected errors ``constant * eps**power`` (fit self-test)."""
    eps = [float(e) for e in eps_list]
    if len(eps) < 3:
        raise UsageError("a rate study needs at least three eps values")
    errs = [constant * e**power for e in eps]
    return RateReport(eps, errs, errs, fit_slope(eps, errs), fit_slope(eps, errs),
                      [constant * e**power * e**power / e for e in eps], **kw)


def coarsen(values, factor: int = 2) -> np.ndarray:
    """Average groups of ``factor`` neighbouring cells along the last axis."""
    v = np.asarray(values, dtype=float)
    return v.reshape(v.shape[:-1] + (v.shape[-1] // factor, factor)).mean(axis=-1)


def _relax_job(args):
    ic, cfg, grid, eos = args
    return run(ic, cfg, grid, eos)


def rate_study(preset: str, eps_list: Sequence[float], grid: Grid1D, cfg: SolverConfig,
               eos: EosModel = DEFAULT_EOS, preset_params: dict | None = None,
               slope_min: float = 0.45, slope_max: float = 1.3, precheck: bool = True,
               keep_fields: bool = False, workers: int = 1) -> RateReport:
    """Relaxation runs over ``eps_list`` against one equilibrium reference run.

    Errors are space-time L2 norms of ``p^eps - p^0`` and ``u^eps - u^0`` on the
    shared snapshot times.  The refinement pre-check compares the equilibrium
    run with one on a grid twice as coarse; if that difference is not below
    the model error at the largest eps the verdict is INCONCLUSIVE.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise UsageError("a rate study needs at least three eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise UsageError("eps values must be strictly decreasing")
    if cfg.record_every <= 0:
        raise UsageError("rate studies need a positive record_every so runs share snapshot times")
    ic = preset_initial_condition(preset, preset_params, grid, eos)
    eq_field = eq_run(ic, cfg, grid, eos)
    p0, u0, _ = eq_field.primitive(eos)
    dx = grid.dx

    jobs = [(ic, SolverConfig(**{**cfg.to_dict(), "eps": e}), grid, eos) for e in eps_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fields = list(pool.map(_relax_job, jobs))
    else:
        fields = [_relax_job(j) for j in jobs]

    errors_p, errors_u, resid = [], [], []
    for e, f in zip(eps_list, fields):
        p, u, _ = f.primitive(eos)
        errors_p.append(spacetime_l2(p - p0, f.times, dx))
        errors_u.append(spacetime_l2(u - u0, f.times, dx))
        resid.append(spacetime_l2(relaxation_residual_field(f, eos), f.times, dx) ** 2 / e)
        log.info("eps=%.3e err_p=%.3e err_u=%.3e", e, errors_p[-1], errors_u[-1])

    scheme_p = scheme_u = 0.0
    passed = True
    if precheck:
        if grid.n_cells % 2:
            raise UsageError("the refinement pre-check needs an even number of cells")
        coarse = Grid1D(grid.n_cells // 2, grid.x_lo, grid.x_hi, grid.boundary)
        ic_c = preset_initial_condition(preset, preset_params, coarse, eos)
        eq_c = eq_run(ic_c, cfg, coarse, eos)
        pc, uc, _ = eq_c.primitive(eos)
        scheme_p = spacetime_l2(coarsen(p0) - pc, eq_field.times, coarse.dx)
        scheme_u = spacetime_l2(coarsen(u0) - uc, eq_field.times, coarse.dx)
        passed = scheme_p < errors_p[0] and scheme_u < errors_u[0]

    report = RateReport(eps_list, errors_p, errors_u, fit_slope(eps_list, errors_p), fit_slope(eps_list, errors_u),
                        resid, passed, scheme_p, scheme_u, slope_min, slope_max)
    if keep_fields:
        report.fields = dict(zip(eps_list, fields))
        report.eq_field = eq_field
    return report
