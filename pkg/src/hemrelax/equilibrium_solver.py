"""Rusanov solver for the equilibrium Euler system in ``(rho_eq(p), rho_eq(p) u)``."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .eos import (DEFAULT_EOS, EosModel, _inv_ae2_unchecked, _rho_eq_unchecked,
                  invert_equilibrium_density)
from .errors import DomainError, StateError, StepSizeError
from .relax_solver import Grid1D, SolutionField, SolverConfig, _march, _with_ghosts


class EqState(NamedTuple):
    rho: float | np.ndarray
    mom: float | np.ndarray


def _pressure(rho, eos, p_guess=None, time=None):
    try:
        return invert_equilibrium_density(rho, eos, p_guess=p_guess)
    except DomainError as exc:
        rho = np.atleast_1d(rho)
        lo, hi = _rho_eq_unchecked(eos.p_lo, eos), _rho_eq_unchecked(eos.p_hi, eos)
        bad = np.flatnonzero((rho < lo) | (rho > hi))
        cell = int(bad[0]) if bad.size else None
        raise StateError(f"equilibrium density left the attainable range ({exc})", cell=cell, time=time) from exc


def eq_flux(W, eos: EosModel = DEFAULT_EOS, p_guess=None) -> np.ndarray:
    rho, mom = (np.asarray(c, dtype=float) for c in W)
    p = invert_equilibrium_density(rho, eos, p_guess=p_guess)
    return np.stack([mom, mom * mom / rho + p])


def eq_state_from_prim(p, u, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < eos.p_lo) or np.any(p > eos.p_hi):
        raise DomainError(f"pressure outside operating range [{eos.p_lo}, {eos.p_hi}]")
    rho = _rho_eq_unchecked(p, eos)
    return np.stack([rho, rho * np.asarray(u, dtype=float)])


def eq_primitive(states, eos: EosModel):
    """``(p, u, alpha_eq(p))`` for a stack of equilibrium states ``(..., 2, n)``."""
    states = np.asarray(states, dtype=float)
    rho = states[..., 0, :]
    mom = states[..., 1, :]
    p = invert_equilibrium_density(rho.ravel(), eos).reshape(rho.shape)
    return p, mom / rho, eos.alpha_eq(p)


def equilibrium_speed(p, u, eos: EosModel):
    return np.abs(u) + np.sqrt(1.0 / _inv_ae2_unchecked(p, eos))


def eq_run(ic: Sequence, cfg: SolverConfig, grid: Grid1D, eos: EosModel = DEFAULT_EOS) -> SolutionField:
    """March the equilibrium system; ``cfg.eps`` is ignored.

    ``ic`` is ``(p, u)`` or a full primitive profile whose third entry is dropped.
    """
    p0, u0 = (np.asarray(c, dtype=float) for c in list(ic)[:2])
    W0 = eq_state_from_prim(p0, u0, eos)
    if W0.shape != (2, grid.n_cells):
        raise DomainError(f"initial profile has {W0.shape[1]} cells, grid has {grid.n_cells}")
    # warm start for the pressure inversion; updated after every step
    cache = {"p": p0.copy()}

    def fluxes(Wg, p):
        rho, mom = Wg
        u = mom / rho
        F = np.stack([mom, mom * u + p])
        return F, equilibrium_speed(p, u, eos)

    def step(W, dt, t):
        p = cache["p"]
        Wg = _with_ghosts(W, grid.boundary)
        pg = _with_ghosts(p[None, :], grid.boundary)[0]
        F, s = fluxes(Wg, pg)
        if dt * float(np.max(s)) > grid.dx * (1 + 1e-12):
            raise StepSizeError("dt exceeds the CFL limit dx/max(|u|+a_e)")
        smax = np.maximum(s[:-1], s[1:])
        face = 0.5 * (F[:, :-1] + F[:, 1:]) - 0.5 * smax * (Wg[:, 1:] - Wg[:, :-1])
        out = W - dt / grid.dx * (face[:, 1:] - face[:, :-1])
        if cfg.nu > 0:
            out += cfg.nu * dt / grid.dx**2 * (Wg[:, 2:] - 2.0 * W + Wg[:, :-2])
        cache["p"] = _pressure(out[0], eos, p_guess=p, time=t + dt)
        return out

    def dt_of(W):
        s = float(np.max(equilibrium_speed(cache["p"], W[1] / W[0], eos)))
        return cfg.cfl / (s / grid.dx + 2.0 * cfg.nu / grid.dx**2)

    meta = {"solver": cfg.to_dict(), "eos": eos.to_dict(), "grid": grid.to_dict(), "model": "equilibrium"}
    return _march(W0, cfg.t_end, cfg.record_every, step, dt_of, grid, meta, ("rho", "mom"))


def project_to_equilibrium(field: SolutionField, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """Equilibrium variables ``(rho_eq(p), rho_eq(p) u)`` of a relaxation field, shape ``(n_t, 2, n)``."""
    p, u, _ = field.primitive(eos)
    rho = _rho_eq_unchecked(p, eos)
    return np.stack([rho, rho * u], axis=1)


__all__ = ["EqState", "eq_flux", "eq_run", "eq_primitive", "eq_state_from_prim", "equilibrium_speed",
           "project_to_equilibrium"]
