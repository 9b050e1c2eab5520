"""
Closed-form constants of the functional-inequality statements.

All log-Sobolev constants here use ``H(nu | mu) <= C_H I(nu | mu)``. The
classical form ``Ent(h^2) <= C int |grad h|^2`` has ``C = 4 C_H``; convert only
when formatting reports.
"""

import math
from typing import NamedTuple


def bakry_emery_constant(L: float, C0: float, sigma: float, t: float) -> float:
    """``C_t = e^{2Lt} C0 + sigma^2 int_0^t e^{2Ls} ds``, with the ``L = 0`` branch ``sigma^2 t``."""
    if C0 < 0 or t < 0:
        raise ValueError(f"need C0 >= 0 and t >= 0, got C0={C0}, t={t}")
    if L == 0:
        return C0 + sigma**2 * t
    return math.exp(2.0 * L * t) * C0 + sigma**2 * math.expm1(2.0 * L * t) / (2.0 * L)


def gaussian_flow_constant(v0: float, t: float) -> float:
    """Optimal ``C_H`` of ``N(0, v_t)`` under ``dX = -X dt + sqrt(2) dB``, ``v_t = 1 + (v0 - 1) e^{-2t}``."""
    return 0.5 * (1.0 + (v0 - 1.0) * math.exp(-2.0 * t))


def high_temp_threshold(
    rho: float, L: float, R: float, K: float, d: int
) -> tuple[float, float]:
    """``(R_*, sigma_0^2)`` with ``R_* = R (2 + 2L/rho)^{1/d}`` and
    ``sigma_0^2 = 2 (2L + rho) ((L + rho/4) R_*^2 + K) / (rho d)``.
    """
    if rho == 0:
        raise ValueError("rho must be nonzero")
    if rho < 0 or L < 0 or R < 0 or K < 0 or d < 1:
        raise ValueError("need rho > 0, L, R, K >= 0 and d >= 1")
    r_star = R * (2.0 + 2.0 * L / rho) ** (1.0 / d)
    sigma0_sq = 2.0 * (2.0 * L + rho) * ((L + rho / 4.0) * r_star**2 + K) / (rho * d)
    return r_star, sigma0_sq


def llf_condition(grad_w_sup: float, eta: float, sigma: float) -> tuple[float, bool]:
    """``gamma = |grad_x W|_inf^2 / 2`` and whether ``sigma^4 > 8 gamma eta`` (strict)."""
    if grad_w_sup < 0 or eta < 0 or sigma < 0:
        raise ValueError("inputs must be nonnegative")
    gamma = 0.5 * grad_w_sup**2
    return gamma, sigma**4 > 8.0 * gamma * eta


class ContractionConstants(NamedTuple):
    rate: float
    M: float


def contraction_constants(
    rho: float, L: float, R_star: float, d: int, sigma: float
) -> ContractionConstants:
    """``lambda = rho / 2`` and ``M = 1 + 2 (2L + rho) R_*^2 / (4 d sigma^2)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return ContractionConstants(
        rate=0.5 * rho, M=1.0 + 2.0 * (2.0 * L + rho) * R_star**2 / (4.0 * d * sigma**2)
    )


def uniform_poincare_bound(
    M: float, rate: float, sigma: float, C0: float, t: float
) -> float:
    """``M (sigma^2 / lambda + e^{-lambda t} C0)``."""
    return M * (sigma**2 / rate + math.exp(-rate * t) * C0)


class GaussianMomentBound(NamedTuple):
    R_star_sq: float
    C_star: float
    bound: float


def gaussian_moment_bound(
    delta: float,
    rho: float,
    L: float,
    R: float,
    d: int,
    initial: float,
    t: float,
) -> GaussianMomentBound:
    """Bound on ``int e^{delta |x - y|^2} m_t(dx) m_t(dy)`` for unit diffusion.

    ``R_*^2 = max((1 + 4d) / (2 (rho - 4 delta)), 4 R^2)``,
    ``C_* = delta (4d + (2L + 8 delta) R^2)`` and
    ``bound = C_* e^{delta R_*^2} / delta + e^{-delta t} initial``.
    """
    if not 0 < delta < rho / 4:
        raise ValueError(f"need 0 < delta < rho/4, got delta={delta}, rho={rho}")
    r_star_sq = max((1.0 + 4.0 * d) / (2.0 * (rho - 4.0 * delta)), 4.0 * R**2)
    c_star = delta * (4.0 * d + (2.0 * L + 8.0 * delta) * R**2)
    bound = c_star * math.exp(delta * r_star_sq) / delta + math.exp(-delta * t) * initial
    return GaussianMomentBound(r_star_sq, c_star, bound)


def perturbation_temperature_condition(
    rho: float, grad_w_sup: float, v2_sup: float, w_sup: float, sigma: float
) -> bool:
    """``sigma^2 > (4 / rho) |grad W|^2 exp((|V_2| + |W|) / sigma^2)``."""
    if sigma <= 0 or rho <= 0:
        return False
    threshold = 4.0 / rho * grad_w_sup**2 * math.exp((v2_sup + w_sup) / sigma**2)
    return sigma**2 > threshold


def lp_growth_bound(C_p: float, initial_norm: float) -> float:
    """``C_p (|m_0|_{L^p} + 1)``."""
    return C_p * (initial_norm + 1.0)


def lsi_constant_to_entropy_convention(C: float) -> float:
    """``Ent(h^2) <= C int |grad h|^2`` to ``H <= C_H I``: divide by 4."""
    return C / 4.0


def entropy_to_lsi_convention(C_H: float) -> float:
    return 4.0 * C_H
