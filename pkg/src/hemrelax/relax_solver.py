"""First-order finite-volume solver for the relaxation system.

Transport uses a Rusanov flux bounded by the frozen speed ``|u| + a_f``; the
stiff source acts on Gamma only and is integrated implicitly inside a Strang
splitting (half source, full transport, half source).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .eos import DEFAULT_EOS, AffineClampMap, EosModel, _prim_unchecked, check_conserved, cons_from_prim
from .errors import DomainError, NumericalError, StepSizeError

log = logging.getLogger(__name__)

BOUNDARIES = ("periodic", "outflow")
FLUX_SCHEMES = ("rusanov",)
SOURCE_SCHEMES = ("backward_euler", "exact_affine")

NEWTON_ATOL = 1e-12
NEWTON_MAXITER = 50


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    x_lo: float = 0.0
    x_hi: float = 1.0
    boundary: str = "periodic"

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise DomainError(f"Grid1D.n_cells must be an integer >= 4, got {self.n_cells!r}")
        if not self.x_hi > self.x_lo:
            raise DomainError("Grid1D requires x_hi > x_lo")
        if self.boundary not in BOUNDARIES:
            raise DomainError(f"Grid1D.boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    ``record_every`` is a time interval between snapshots; steps are shortened
    to land on it exactly.  ``0`` records after every step.
    """

    eps: float = 1e-3
    nu: float = 0.0
    cfl: float = 0.9
    t_end: float = 0.1
    flux_scheme: str = "rusanov"
    source_scheme: str = "backward_euler"
    record_every: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"SolverConfig.eps must be positive, got {self.eps!r}")
        if not self.nu >= 0:
            raise DomainError(f"SolverConfig.nu must be non-negative, got {self.nu!r}")
        if not 0 < self.cfl < 1:
            raise DomainError(f"SolverConfig.cfl must lie in (0, 1), got {self.cfl!r}")
        if not self.t_end > 0:
            raise DomainError(f"SolverConfig.t_end must be positive, got {self.t_end!r}")
        if self.flux_scheme not in FLUX_SCHEMES:
            raise DomainError(f"SolverConfig.flux_scheme must be one of {FLUX_SCHEMES}")
        if self.source_scheme not in SOURCE_SCHEMES:
            raise DomainError(f"SolverConfig.source_scheme must be one of {SOURCE_SCHEMES}")
        if not self.record_every >= 0:
            raise DomainError("SolverConfig.record_every must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolutionField:
    """Snapshots of one run: ``states[k]`` is the component-first state at ``times[k]``."""

    grid: Grid1D
    times: np.ndarray
    states: np.ndarray
    run_meta: dict = field(default_factory=dict)
    variables: tuple = ("rho_m", "m", "Gamma")

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3 or self.states.shape[0] != self.times.size:
            raise DomainError("states must have shape (n_times, n_vars, n_cells)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("snapshot times must be strictly increasing")
        self.states.setflags(write=False)
        self.times.setflags(write=False)

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def is_equilibrium(self) -> bool:
        return self.states.shape[1] == 2

    def primitive(self, eos: EosModel):
        """``(p, u, alpha)`` arrays of shape ``(n_times, n_cells)``."""
        if self.is_equilibrium:
            from .equilibrium_solver import eq_primitive

            return eq_primitive(self.states, eos)
        return _prim_unchecked(np.moveaxis(self.states, 1, 0), eos)


# ---------------------------------------------------------------------------
# fluxes
# ---------------------------------------------------------------------------


def physical_flux(U, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    rho_m, m, gam = (np.asarray(c, dtype=float) for c in U)
    p, u, _ = _prim_unchecked((rho_m, m, gam), eos)
    return np.stack([m, m * u + p, gam * u])


def _flux_and_speed(U, eos):
    rho_m, m, gam = U
    p, u, alpha = _prim_unchecked(U, eos)
    F = np.stack([m, m * u + p, gam * u])
    return F, np.abs(u) + np.sqrt(eos.RT0 / alpha)


def numerical_flux(U_L, U_R, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """Rusanov flux ``(F_L + F_R)/2 - s_max (U_R - U_L)/2``, ``s_max = max(|u| + a_f)``."""
    U_L = np.asarray(U_L, dtype=float)
    U_R = np.asarray(U_R, dtype=float)
    F_L, s_L = _flux_and_speed(U_L, eos)
    F_R, s_R = _flux_and_speed(U_R, eos)
    s = np.maximum(s_L, s_R)
    return 0.5 * (F_L + F_R) - 0.5 * s * (U_R - U_L)


def _with_ghosts(U: np.ndarray, boundary: str) -> np.ndarray:
    if boundary == "periodic":
        return np.concatenate([U[:, -1:], U, U[:, :1]], axis=1)
    return np.concatenate([U[:, :1], U, U[:, -1:]], axis=1)


def max_wave_speed(U, eos: EosModel) -> float:
    _, s = _flux_and_speed(np.asarray(U, dtype=float), eos)
    return float(np.max(s))


def stable_dt(U, grid: Grid1D, eos: EosModel, cfl: float, nu: float = 0.0,
              speed: Callable | None = None) -> float:
    s = max_wave_speed(U, eos) if speed is None else speed(U)
    rate = s / grid.dx + 2.0 * nu / grid.dx**2
    return cfl / rate


def hyperbolic_step(U, dt: float, grid: Grid1D, eos: EosModel = DEFAULT_EOS, nu: float = 0.0,
                    time: float | None = None) -> np.ndarray:
    """One explicit conservative update, with optional centred viscosity ``nu``."""
    U = np.asarray(U, dtype=float)
    Ug = _with_ghosts(U, grid.boundary)
    F, s = _flux_and_speed(Ug, eos)
    smax = np.maximum(s[:-1], s[1:])
    face = 0.5 * (F[:, :-1] + F[:, 1:]) - 0.5 * smax * (Ug[:, 1:] - Ug[:, :-1])
    dx = grid.dx
    if dt * float(np.max(s)) > dx * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.6g} exceeds the CFL limit dx/max(|u|+a_f)={dx / np.max(s):.6g}")
    if nu > 0 and dt > 0.5 * dx * dx / nu * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.6g} exceeds the viscous limit dx^2/(2 nu)={0.5 * dx * dx / nu:.6g}")
    out = U - dt / dx * (face[:, 1:] - face[:, :-1])
    if nu > 0:
        out += nu * dt / dx**2 * (Ug[:, 2:] - 2.0 * U + Ug[:, :-2])
    check_conserved(out, eos, time=time)
    return out


# ---------------------------------------------------------------------------
# stiff source
# ---------------------------------------------------------------------------


def _source_terms(gam, rho_m, eos):
    """``g(Gamma) = alpha_eq(p) - alpha`` and ``dg/dGamma`` at fixed rho_m."""
    b = eos.rho_l - rho_m
    alpha = (gam + b) / eos.rho_l
    p = eos.RT0 * gam / alpha
    dp = eos.RT0 * b / (eos.rho_l * alpha * alpha)
    g = eos.alpha_eq(p) - alpha
    dg = eos.alpha_eq.derivative(p) * dp - 1.0 / eos.rho_l
    return g, dg


def _backward_euler(rho_m, gam0, tau, eos):
    g0, dg0 = _source_terms(gam0, rho_m, eos)
    # valid Gamma: alpha in (0, 1) and Gamma > 0
    g_min = np.maximum(0.0, rho_m - eos.rho_l)
    g_max = rho_m
    far = np.clip(gam0 + tau * g0, g_min, g_max)
    lo = np.minimum(gam0, far)
    hi = np.maximum(gam0, far)
    x = gam0 + tau * g0 / (1.0 - tau * dg0)
    x = np.where((x >= lo) & (x <= hi), x, 0.5 * (lo + hi))
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(NEWTON_MAXITER):
            g, dg = _source_terms(x, rho_m, eos)
            h = x - gam0 - tau * g
            lo = np.where(h < 0, x, lo)
            hi = np.where(h > 0, x, hi)
            step = h / (1.0 - tau * dg)
            x_new = x - step
            bad = ~((x_new > lo) & (x_new < hi)) | ~np.isfinite(x_new)
            x_new = np.where(bad & (h != 0), 0.5 * (lo + hi), np.where(h == 0, x, x_new))
            conv = np.abs(x_new - x) <= NEWTON_ATOL
            x = x_new
            if np.all(conv):
                return x
    raise NumericalError(f"backward-Euler source solve did not converge in {NEWTON_MAXITER} iterations")


def _exact_affine(rho_m, gam0, tau, eos):
    """Exact flow of the cell ODE when ``alpha_eq = c0 + c1 p`` on the whole trajectory.

    With ``s = rho_l alpha`` the ODE is ``ds/dt = -(s - s1)(s - s2)/(eps rho_l s)``
    with roots ``s1 > 0 > s2``; partial fractions give the elapsed time in closed
    form and a monotone scalar equation for ``log|s - s1|``.
    """
    amap = eos.alpha_eq
    if not isinstance(amap, AffineClampMap):
        raise DomainError("source_scheme 'exact_affine' requires an affine alpha_eq map")
    rho_l = eos.rho_l
    b = rho_l - rho_m
    k = amap.c1 * eos.RT0 * rho_l
    Bq = -rho_l * (amap.c0 + k)
    Cq = rho_l * k * b
    disc = np.sqrt(Bq * Bq - 4.0 * Cq)
    qq = -0.5 * (Bq + np.where(Bq >= 0, 1.0, -1.0) * disc)
    ra, rb = qq, Cq / qq
    s1 = np.maximum(ra, rb)
    s2 = np.minimum(ra, rb)
    s0 = gam0 + b
    p0 = eos.RT0 * gam0 * rho_l / s0
    p1 = eos.RT0 * (s1 - b) * rho_l / s1
    if not (np.all(amap.is_unclamped(p0)) and np.all(amap.is_unclamped(p1))):
        raise DomainError("source_scheme 'exact_affine' requires alpha_eq to be unclamped along the trajectory")
    if np.any(s2 >= 0) or np.any(s1 <= b):
        raise DomainError("affine source has no admissible equilibrium for this state")

    P = s1 / (s1 - s2)
    Q = -s2 / (s1 - s2)
    rhs = tau / rho_l
    d0 = s0 - s1
    at_eq = d0 == 0
    d0 = np.where(at_eq, 1.0, d0)
    zmax = np.maximum(0.0, np.log((s1 - s2) / (s0 - s2)))
    lo = -(rhs + Q * zmax) / P
    hi = np.zeros_like(lo)

    def F(y):
        return P * y + Q * np.log((s1 - s2 + d0 * np.exp(y)) / (s0 - s2)) + rhs

    y = np.maximum(-rhs / P, lo)
    for _ in range(200):
        f = F(y)
        lo = np.where(f < 0, y, lo)
        hi = np.where(f > 0, y, hi)
        s = s1 + d0 * np.exp(y)
        y_new = y - f * (s - s2) / s
        y_new = np.where((y_new > lo) & (y_new < hi), y_new, 0.5 * (lo + hi))
        done = np.abs(y_new - y) <= 1e-15 * np.maximum(1.0, np.abs(y))
        y = y_new
        if np.all(done | at_eq):
            break
    else:
        raise NumericalError("exact affine source flow did not converge")
    s = np.where(at_eq, s0, s1 + d0 * np.exp(y))
    return s - b


def relaxation_substep(U, dt: float, eps: float, eos: EosModel = DEFAULT_EOS,
                       scheme: str = "backward_euler", time: float | None = None):
    """Advance ``dGamma/dt = (alpha_eq(p) - alpha)/eps`` with rho_m and m frozen."""
    if not eps > 0:
        raise DomainError(f"relaxation time must be positive, got {eps!r}")
    if not dt >= 0:
        raise DomainError(f"dt must be non-negative, got {dt!r}")
    arr = np.asarray(U, dtype=float)
    scalar = arr.ndim == 1
    arr = arr.reshape(3, -1)
    check_conserved(arr, eos, time=time)
    rho_m, m, gam0 = arr
    if dt == 0:
        gam = gam0.copy()
    elif scheme == "backward_euler":
        gam = _backward_euler(rho_m, gam0, dt / eps, eos)
    elif scheme == "exact_affine":
        gam = _exact_affine(rho_m, gam0, dt / eps, eos)
    else:
        raise DomainError(f"unknown source scheme {scheme!r}")
    out = np.stack([rho_m, m, gam])
    check_conserved(out, eos, time=time)
    if scalar:
        return type(U)(*out[:, 0]) if hasattr(U, "_fields") else out[:, 0]
    return out.reshape(np.shape(U))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _output_times(t_end: float, record_every: float) -> list[float] | None:
    if record_every <= 0:
        return None
    n = int(np.floor(t_end / record_every * (1 + 1e-12)))
    out = [k * record_every for k in range(1, n + 1) if k * record_every < t_end * (1 - 1e-12)]
    return out + [t_end]


def _march(U0, t_end, record_every, step, dt_of, grid, meta, variables, max_steps=10_000_000):
    """Explicit march shared by both solvers; snapshots land exactly on output times."""
    outputs = _output_times(t_end, record_every)
    t, U, n, k = 0.0, U0, 0, 0
    times, states = [0.0], [U0.copy()]
    while t < t_end:
        target = t_end if outputs is None else outputs[k]
        dt = dt_of(U)
        hit = t + dt >= target * (1 - 1e-14)
        if hit:
            dt = target - t
        U = step(U, dt, t)
        t = target if hit else t + dt
        n += 1
        if outputs is None or hit:
            times.append(t)
            states.append(U.copy())
            k += hit and outputs is not None
        if n > max_steps:
            raise NumericalError("step limit exceeded")
    meta = dict(meta, n_steps=n)
    return SolutionField(grid, np.array(times), np.array(states), meta, variables)


def initial_state(ic, eos: EosModel) -> np.ndarray:
    """Component-first conservative array from a primitive profile ``(p, u, alpha)``."""
    p, u, alpha = (np.asarray(c, dtype=float) for c in ic)
    return np.array(cons_from_prim((p, u, alpha), eos), dtype=float)


def run(ic: Sequence, cfg: SolverConfig, grid: Grid1D, eos: EosModel = DEFAULT_EOS) -> SolutionField:
    """Strang-split march of the relaxation system from a primitive profile."""
    U0 = initial_state(ic, eos)
    if U0.shape != (3, grid.n_cells):
        raise DomainError(f"initial profile has {U0.shape[1]} cells, grid has {grid.n_cells}")
    check_conserved(U0, eos, time=0.0)

    def step(U, dt, t):
        U = relaxation_substep(U, 0.5 * dt, cfg.eps, eos, cfg.source_scheme, time=t)
        U = hyperbolic_step(U, dt, grid, eos, cfg.nu, time=t)
        return relaxation_substep(U, 0.5 * dt, cfg.eps, eos, cfg.source_scheme, time=t + dt)

    def dt_of(U):
        return stable_dt(U, grid, eos, cfg.cfl, cfg.nu)

    meta = {"solver": cfg.to_dict(), "eos": eos.to_dict(), "grid": grid.to_dict(), "model": "relaxation"}
    field_ = _march(U0, cfg.t_end, cfg.record_every, step, dt_of, grid, meta, ("rho_m", "m", "Gamma"))
    log.debug("relaxation run eps=%g finished after %d steps", cfg.eps, field_.run_meta["n_steps"])
    return field_


__all__ = [
    "Grid1D", "SolverConfig", "SolutionField", "physical_flux", "numerical_flux", "hyperbolic_step",
    "relaxation_substep", "run", "stable_dt", "initial_state", "max_wave_speed",
]
