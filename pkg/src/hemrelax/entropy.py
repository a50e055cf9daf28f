"""Entropy pair of the relaxation system and the quantities derived from it.

The entropy density is the negative Helmholtz free energy

    eta = -(Gamma A_g - Gamma R ln(rho_l Gamma) + Gamma R ln(rho_l - rho_m + Gamma)
            + (rho_m - Gamma) A_l + m^2 / (2 rho_m))

with flux ``q = eta * u``.  All functions take component-first conservative
arrays ``U = (rho_m, m, Gamma)`` of any trailing shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .eos import DEFAULT_EOS, EosModel, check_conserved
from .errors import DomainError, StateError


def _split(U, eos: EosModel):
    rho_m, m, gam = (np.asarray(c, dtype=float) for c in U)
    w = eos.rho_l - rho_m + gam
    if np.any(~(w > 0)) or np.any(~(gam > 0)) or np.any(~(rho_m > 0)):
        raise StateError("entropy evaluated outside rho_m > 0, Gamma > 0, rho_l - rho_m + Gamma > 0")
    return rho_m, m, gam, w


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def entropy_density(U, eos: EosModel = DEFAULT_EOS):
    rho_m, m, gam, w = _split(U, eos)
    R = eos.R
    f = (gam * eos.A_g - gam * R * np.log(eos.rho_l * gam) + gam * R * np.log(w)
         + (rho_m - gam) * eos.A_l + m * m / (2.0 * rho_m))
    return _out(-f)


def entropy_flux(U, eos: EosModel = DEFAULT_EOS):
    rho_m, m, _, _ = _split(U, eos)
    return _out(entropy_density(U, eos) * m / rho_m)


def entropy_gradient(U, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """Analytic ``(d eta/d rho_m, d eta/d m, d eta/d Gamma)`` stacked on axis 0."""
    rho_m, m, gam, w = _split(U, eos)
    R = eos.R
    d_rho = R * gam / w - eos.A_l + m * m / (2.0 * rho_m * rho_m)
    d_m = -m / rho_m
    d_gam = -eos.A_g + R * np.log(eos.rho_l * gam) + R - R * np.log(w) - R * gam / w + eos.A_l
    return np.stack(np.broadcast_arrays(d_rho, d_m, d_gam))


def entropy_hessian(U, eos: EosModel = DEFAULT_EOS) -> np.ndarray:
    """Closed-form ``D^2 eta``; shape ``(3, 3)`` plus the trailing shape of ``U``.

    The Gamma-Gamma entry reduces to ``R (rho_l - rho_g)^2 / (alpha rho_g rho_l^2)``.
    """
    rho_m, m, gam, w = _split(U, eos)
    R = eos.R
    h = np.empty((3, 3) + np.shape(rho_m))
    h[0, 0] = R * gam / w**2 - m * m / rho_m**3
    h[0, 1] = h[1, 0] = m / rho_m**2
    h[0, 2] = h[2, 0] = R * (w - gam) / w**2
    h[1, 1] = -1.0 / rho_m
    h[1, 2] = h[2, 1] = 0.0
    h[2, 2] = R * (w - gam) ** 2 / (gam * w**2)
    return h


@dataclass
class EntropyEval:
    eta: float | np.ndarray
    q: float | np.ndarray
    deta_dGamma: float | np.ndarray
    hessian: np.ndarray


def evaluate_entropy(U, eos: EosModel = DEFAULT_EOS) -> EntropyEval:
    grad = entropy_gradient(U, eos)
    return EntropyEval(entropy_density(U, eos), entropy_flux(U, eos), _out(grad[2]), entropy_hessian(U, eos))


def first_order_entropy_density(U, dU_dx, eos: EosModel = DEFAULT_EOS):
    """``0.5 * dU^T H(U) dU``, evaluated cell by cell."""
    H = entropy_hessian(U, eos)
    d = np.asarray(dU_dx, dtype=float)
    return _out(0.5 * np.einsum("i...,ij...,j...->...", d, H, d))


def _equilibrium_state(p, u, eos: EosModel):
    p = np.asarray(p, dtype=float)
    if np.any(p < eos.p_lo) or np.any(p > eos.p_hi):
        raise DomainError(f"pressure outside operating range [{eos.p_lo}, {eos.p_hi}]")
    a = eos.alpha_eq(p)
    rho_g = p / eos.RT0
    rho_eq = a * rho_g + (1.0 - a) * eos.rho_l
    return rho_eq, rho_eq * np.asarray(u, dtype=float), rho_g * a


def equilibrium_entropy_pair(p, u, eos: EosModel = DEFAULT_EOS):
    """Entropy pair restricted to the manifold ``alpha = alpha_eq(p)``."""
    U = _equilibrium_state(p, u, eos)
    eta = entropy_density(U, eos)
    return eta, _out(eta * np.asarray(u, dtype=float))


def companion_entropy_pair(p, u, C: float, eos: EosModel = DEFAULT_EOS):
    """Affine companion ``(eta_eq + C rho_eq u, q_eq + C (rho_eq u^2 + p))``."""
    eta, q = equilibrium_entropy_pair(p, u, eos)
    rho_eq, mom, _ = _equilibrium_state(p, u, eos)
    u = np.asarray(u, dtype=float)
    return _out(eta + C * mom), _out(q + C * (rho_eq * u * u + np.asarray(p, dtype=float)))


def entropy_production_rate(U, eps: float, eos: EosModel = DEFAULT_EOS):
    """Pointwise source of the entropy balance, ``-(1/eps) d eta/d Gamma (alpha - alpha_eq)``."""
    if not eps > 0:
        raise DomainError(f"relaxation time must be positive, got {eps!r}")
    rho_m, _, gam, w = _split(U, eos)
    alpha = w / eos.rho_l
    p = eos.RT0 * gam / alpha
    d_gam = entropy_gradient(U, eos)[2]
    return _out(-d_gam * (alpha - eos.alpha_eq(p)) / eps)


# ---------------------------------------------------------------------------
# equilibrium criticality
# ---------------------------------------------------------------------------


def equilibrium_offset(p, eos: EosModel = DEFAULT_EOS):
    """``d eta/d Gamma`` on the equilibrium manifold at pressure ``p``.

    Zero only where the free-energy constants are consistent with the chosen
    ``alpha_eq``; see :func:`calibrate_free_energy`.
    """
    U = _equilibrium_state(p, 0.0, eos)
    return _out(entropy_gradient(U, eos)[2])


def _offset_of_gas_density(rho_g, eos: EosModel):
    # d eta/d Gamma depends on the state only through rho_g = Gamma/alpha
    return eos.R * (np.log(rho_g) + 1.0 - rho_g / eos.rho_l) + eos.A_l - eos.A_g


def critical_gas_density(eos: EosModel = DEFAULT_EOS) -> float:
    """Gas density ``rho_g*`` in (0, rho_l) at which ``d eta/d Gamma`` vanishes."""
    f = lambda x: _offset_of_gas_density(x, eos)  # noqa: E731
    lo, hi = 1e-300, eos.rho_l
    if f(hi) < 0:
        raise DomainError("d eta/d Gamma has no zero below the liquid density for these constants")
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-14)


def critical_void_fraction(rho_m, eos: EosModel = DEFAULT_EOS):
    """Void fraction at the critical point of eta in Gamma, holding rho_m fixed.

    Returns nan where the critical point lies outside (0, 1).
    """
    rho_star = critical_gas_density(eos)
    a = (eos.rho_l - np.asarray(rho_m, dtype=float)) / (eos.rho_l - rho_star)
    return _out(np.where((a > 0) & (a < 1), a, np.nan))


def calibrate_free_energy(eos: EosModel, p_ref: float) -> EosModel:
    """Return a copy of ``eos`` with ``A_g`` chosen so the offset vanishes at ``p_ref``."""
    rho_g = p_ref / eos.RT0
    A_g = eos.R * (np.log(rho_g) + 1.0 - rho_g / eos.rho_l) + eos.A_l
    return eos.with_(A_g=float(A_g))


def hessian_eigenvalue_sweep(eos: EosModel = DEFAULT_EOS, n: int = 1000, seed: int = 0,
                             u_max: float = 1.0, alpha_width: float = 0.05):
    """Eigenvalues of ``D^2 eta`` at ``n`` random states of the operating box.

    States are drawn uniformly in ``p in [p_lo, p_hi]``, ``u in [-u_max, u_max]``
    and ``alpha`` within ``alpha_width`` of ``alpha_eq(p)``.
    Returns an ``(n, 3)`` array sorted ascending per state.
    """
    from .eos import cons_from_prim

    rng = np.random.default_rng(seed)
    p = rng.uniform(eos.p_lo, eos.p_hi, n)
    u = rng.uniform(-u_max, u_max, n)
    a = np.clip(eos.alpha_eq(p) + rng.uniform(-alpha_width, alpha_width, n), 1e-3, 1 - 1e-3)
    U = cons_from_prim((p, u, a), eos)
    check_conserved(U, eos)
    H = entropy_hessian(U, eos)
    return np.linalg.eigvalsh(np.moveaxis(H, -1, 0))
