"""Named initial conditions, all in local equilibrium ``alpha = alpha_eq(p)``."""

from __future__ import annotations

import numpy as np

from .eos import DEFAULT_EOS, EosModel, PrimitiveState
from .errors import DomainError
from .relax_solver import Grid1D

PRESET_DEFAULTS = {
    "constant_eq": {"p_bar": 2.0, "u_bar": 0.0},
    # width and center are fractions of the domain length
    "gaussian": {"p_bar": 2.0, "amplitude": 0.5, "width": 0.1, "center": 0.5, "u_bar": 0.0},
    "riemann": {"p_left": 3.0, "p_right": 1.5, "u_left": 0.0, "u_right": 0.0, "x_split": 0.5},
}

DEFAULT_BOUNDARY = {"constant_eq": "periodic", "gaussian": "periodic", "riemann": "outflow"}


def preset_params(name: str, params: dict | None = None) -> dict:
    if name not in PRESET_DEFAULTS:
        raise DomainError(f"unknown preset {name!r}; expected one of {sorted(PRESET_DEFAULTS)}")
    params = dict(params or {})
    unknown = set(params) - set(PRESET_DEFAULTS[name])
    if unknown:
        raise DomainError(f"unknown parameter(s) for preset {name!r}: {sorted(unknown)}")
    return {**PRESET_DEFAULTS[name], **{k: float(v) for k, v in params.items()}}


def preset_initial_condition(name: str, params: dict | None, grid: Grid1D,
                             eos: EosModel = DEFAULT_EOS) -> PrimitiveState:
    prm = preset_params(name, params)
    x = grid.centers
    if name == "constant_eq":
        p = np.full(x.shape, prm["p_bar"])
        u = np.full(x.shape, prm["u_bar"])
    elif name == "gaussian":
        xc = grid.x_lo + prm["center"] * grid.length
        w = prm["width"] * grid.length
        p = prm["p_bar"] + prm["amplitude"] * np.exp(-((x - xc) / w) ** 2)
        u = np.full(x.shape, prm["u_bar"])
    else:
        left = x < grid.x_lo + prm["x_split"] * grid.length
        p = np.where(left, prm["p_left"], prm["p_right"])
        u = np.where(left, prm["u_left"], prm["u_right"])
    if np.any(p < eos.p_lo) or np.any(p > eos.p_hi):
        raise DomainError(f"preset {name!r} leaves the operating range [{eos.p_lo}, {eos.p_hi}]: "
                          f"p in [{p.min():g}, {p.max():g}]")
    return PrimitiveState(p, u, eos.alpha_eq(p))
