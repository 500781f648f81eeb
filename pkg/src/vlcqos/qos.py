"""Effective-bandwidth matching for the fixed-rate VLC link.

The key quantity is the largest average arrival rate an ON-OFF source may
have while the queue tail still decays at least as fast as ``exp(-theta q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import adaptive_simpson, golden_section_max, log_mix_exp
from .markov import OnOffChain, ServiceAbstraction, service_log_mgf, steady_state
from .phy import PhyConfig, _on_probability, _gain, _rate, on_probability, rate_interval

__all__ = [
    "Infeasible",
    "QosTarget",
    "RateOptimum",
    "effective_capacity",
    "max_avg_arrival_rate",
    "max_avg_arrival_rate_for_service",
    "optimize_fixed_rate",
    "reference_log_mgf_factor",
    "reference_max_arrival_rate",
]

COARSE_POINTS = 2048
# half-open guard keeping rho strictly below rho_max
RHO_MAX_GUARD = 1e-9


@dataclass(frozen=True)
class QosTarget:
    theta: float

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError(f"QoS exponent must be positive, got {self.theta}")

    @classmethod
    def from_db(cls, theta_db: float) -> "QosTarget":
        return cls(10.0 ** (theta_db / 10.0))


@dataclass(frozen=True)
class Infeasible:
    """No positive arrival rate satisfies the matching condition."""

    reason: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class RateOptimum:
    rho_star: float
    p_on_star: float
    log_mgf_star: float
    theta: float

    @property
    def service(self) -> ServiceAbstraction:
        return ServiceAbstraction(self.p_on_star, self.rho_star)

    @property
    def avg_service_rate(self) -> float:
        return self.p_on_star * self.rho_star


def _delta_from_log_d(src: OnOffChain, log_d: float, theta: float) -> float | Infeasible:
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    g, b = src.gamma, src.beta
    p_os = steady_state(src)[0]
    d = math.exp(log_d)
    one_minus_d = -math.expm1(log_d)
    # numerator 1-(1-b)D and denominator (1-g)D-(1-g-b)D^2, regrouped so
    # neither loses precision when D is close to 1 or 0
    num = one_minus_d + b * d
    den_factor = (1.0 - g) * one_minus_d + b * d
    if not (num > 0 and den_factor > 0):
        return Infeasible(f"matching-condition log argument is non-positive (D = {d:.6g})")
    log_arg = math.log(num) - log_d - math.log(den_factor)
    return p_os * log_arg / theta


def max_avg_arrival_rate(src: OnOffChain, D: float, theta: float) -> float | Infeasible:
    """Maximum average arrival rate of ``src`` given ``D = E[exp(-theta * service)]``.

    Only the transition probabilities of ``src`` matter; its peak rate is
    what is being solved for. Returns :class:`Infeasible` when the closed
    form has no positive solution.
    """
    if not D > 0:
        return Infeasible(f"D must be positive, got {D}")
    return _delta_from_log_d(src, math.log(D), theta)


def max_avg_arrival_rate_for_service(src: OnOffChain, svc: ServiceAbstraction,
                                     theta: float) -> float | Infeasible:
    """As :func:`max_avg_arrival_rate` with ``D`` taken from a fixed-rate service."""
    return _delta_from_log_d(src, service_log_mgf(svc, theta), theta)


def effective_capacity(svc: ServiceAbstraction, theta):
    """``-Lambda_c(-theta) / theta`` in bits/frame; vectorised in ``theta``."""
    return -service_log_mgf(svc, theta) / np.asarray(theta, dtype=float)


def _service_objective(cfg: PhyConfig, theta: float, rho):
    """``log(p_on(rho) exp(-theta rho) + 1 - p_on(rho))`` on an array of rates."""
    rho = np.asarray(rho, dtype=float)
    return log_mix_exp(_on_probability(cfg, rho), -theta * rho)


def optimize_fixed_rate(cfg: PhyConfig, theta_t: float,
                        n_grid: int = COARSE_POINTS) -> RateOptimum:
    """Fixed rate minimising the service log-MGF at target exponent ``theta_t``.

    A coarse grid over ``[rho_min, rho_max)`` picks the basin; golden-section
    search between the neighbouring grid points polishes it to
    ``1e-6 * rho_max``.
    """
    if not theta_t > 0:
        raise ValueError(f"theta_t must be positive, got {theta_t}")
    iv = rate_interval(cfg)
    hi = iv.rho_max * (1.0 - RHO_MAX_GUARD)
    lo = min(iv.rho_min, hi)
    grid = np.linspace(lo, hi, n_grid)
    vals = np.asarray(_service_objective(cfg, theta_t, grid))
    k = int(np.argmin(vals))
    rho, val = float(grid[k]), float(vals[k])
    if n_grid > 2:
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
        x, neg = golden_section_max(lambda r: -float(_service_objective(cfg, theta_t, r)),
                                    float(a), float(b), xtol=1e-6 * iv.rho_max)
        if -neg < val:
            rho, val = x, -neg
    return RateOptimum(rho_star=rho, p_on_star=on_probability(cfg, rho),
                       log_mgf_star=val, theta=theta_t)


def reference_log_mgf_factor(cfg: PhyConfig, theta: float, rtol: float = 1e-8) -> float:
    """``E[exp(-theta R(d_h))]`` for a user uniform on the cell disc.

    This is the service factor when the AP always transmits at the
    instantaneous achievable rate.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    dc = cfg.cell_radius

    def integrand(r):
        return math.exp(-theta * float(_rate(cfg, _gain(cfg, r)))) * 2.0 * r / (dc * dc)

    return adaptive_simpson(integrand, 0.0, dc, rtol=rtol, atol=1e-14)


def reference_max_arrival_rate(src: OnOffChain, cfg: PhyConfig,
                               theta: float) -> float | Infeasible:
    return max_avg_arrival_rate(src, reference_log_mgf_factor(cfg, theta), theta)
