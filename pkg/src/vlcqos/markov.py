"""Two-state ON-OFF Markov chains and their log-moment generating functions.

All log-MGFs are in nats per frame; ``theta`` is in 1/bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import log_mix_exp

__all__ = [
    "OnOffChain",
    "ServiceAbstraction",
    "arrival_log_mgf_finite",
    "arrival_log_mgf_sup",
    "service_log_mgf",
    "source_avg_rate",
    "source_log_mgf",
    "steady_state",
]


@dataclass(frozen=True)
class OnOffChain:
    """Discrete-time ON-OFF chain emitting ``rate_on`` bits per ON frame.

    ``gamma`` is the ON->OFF and ``beta`` the OFF->ON transition probability.
    """

    gamma: float
    beta: float
    rate_on: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not (self.rate_on >= 0 and math.isfinite(self.rate_on)):
            raise ValueError(f"rate_on must be finite and non-negative, got {self.rate_on}")

    @property
    def p_on(self) -> float:
        return steady_state(self)[0]

    @property
    def avg_rate(self) -> float:
        return source_avg_rate(self)

    def with_avg_rate(self, r_avg: float) -> "OnOffChain":
        """Same transition structure, peak rate rescaled to hit ``r_avg``."""
        return OnOffChain(self.gamma, self.beta, r_avg / self.p_on)


@dataclass(frozen=True)
class ServiceAbstraction:
    """Fixed-rate block channel: ``rho`` bits served in a frame w.p. ``p_on``, i.i.d."""

    p_on: float
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.p_on <= 1.0:
            raise ValueError(f"p_on must lie in [0, 1], got {self.p_on}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and positive, got {self.rho}")

    @property
    def avg_rate(self) -> float:
        return self.p_on * self.rho

    def as_chain(self) -> OnOffChain:
        """Block-channel chain with ``beta = p_on`` and ``gamma = 1 - p_on``."""
        return OnOffChain(gamma=1.0 - self.p_on, beta=self.p_on, rate_on=self.rho)


def steady_state(chain: OnOffChain) -> tuple[float, float]:
    """Stationary ``(p_on, p_off)`` of the chain."""
    total = chain.gamma + chain.beta
    if total <= 0:
        raise ValueError("degenerate chain: gamma + beta must be positive")
    p_on = chain.beta / total
    return p_on, chain.gamma / total


def source_avg_rate(chain: OnOffChain) -> float:
    return chain.rate_on * steady_state(chain)[0]


def _check_theta(theta):
    if np.any(~(np.asarray(theta) > 0)):
        raise ValueError(f"theta must be positive, got {theta}")


def service_log_mgf(svc: ServiceAbstraction, theta):
    """``Lambda_c(-theta) = log(p_on exp(-theta rho) + 1 - p_on)``; vectorised in ``theta``."""
    _check_theta(theta)
    if svc.p_on == 1.0:
        out = -np.asarray(theta, dtype=float) * svc.rho
        return out if out.ndim else float(out)
    return log_mix_exp(svc.p_on, -np.asarray(theta, dtype=float) * svc.rho)


def _scaled_perron_root(gamma, beta, x):
    """Largest eigenvalue of the tilted matrix divided by ``exp(x)``, ``x = theta*lambda``."""
    e = np.exp(-x)
    a = 1.0 - gamma
    d = (1.0 - beta) * e
    # (a - d)^2 + 4bc >= 0 avoids a negative discriminant from rounding
    disc = (a - d) ** 2 + 4.0 * gamma * beta * e
    return 0.5 * (a + d + np.sqrt(disc))


def source_log_mgf(chain: OnOffChain, theta):
    """Asymptotic log-MGF of the ON-OFF arrivals, vectorised in ``theta``.

    Evaluated as ``theta*lambda + log(r)`` where ``r`` is the Perron root of
    the tilted matrix scaled by ``exp(-theta*lambda)``, which keeps every
    intermediate bounded.
    """
    _check_theta(theta)
    x = np.asarray(theta, dtype=float) * chain.rate_on
    out = x + np.log(_scaled_perron_root(chain.gamma, chain.beta, x))
    return out if out.ndim else float(out)


def _scaled_tilted(chain: OnOffChain, x: float) -> np.ndarray:
    e = math.exp(-x)
    g, b = chain.gamma, chain.beta
    return np.array([[1.0 - g, g], [b * e, (1.0 - b) * e]])


def _log_matrix_power(mat: np.ndarray, k: int) -> tuple[np.ndarray, float]:
    """``mat**k`` as ``(P, s)`` with ``mat**k = exp(s) * P`` and ``max|P| = 1``."""
    result, log_r = np.eye(2), 0.0
    base, log_b = mat.copy(), 0.0
    while k > 0:
        if k & 1:
            result = result @ base
            log_r += log_b
            scale = np.max(np.abs(result))
            result /= scale
            log_r += math.log(scale)
        k >>= 1
        if k:
            base = base @ base
            log_b *= 2.0
            scale = np.max(np.abs(base))
            base /= scale
            log_b += math.log(scale)
    return result, log_r


def arrival_log_mgf_finite(chain: OnOffChain, theta: float, t: int) -> float:
    """Time-variant log-MGF ``(1/t) log E[exp(theta A(t))]`` for a stationary start."""
    _check_theta(theta)
    if int(t) != t or t < 1:
        raise ValueError(f"t must be an integer >= 1, got {t}")
    t = int(t)
    x = theta * chain.rate_on
    p_on, p_off = steady_state(chain)
    power, log_s = _log_matrix_power(_scaled_tilted(chain, x), t - 1)
    d = np.array([1.0, math.exp(-x)])
    val = np.array([p_on, p_off]) @ power @ d
    return x + (log_s + math.log(val)) / t


def arrival_log_mgf_sup(chain: OnOffChain, theta, t_max: int = 10_000):
    """``max(max_{1<=t<=t_max} Lambda_a(theta, t), Lambda_s(theta))``, vectorised.

    Runs the forward recursion ``w <- w M`` on normalised row vectors. Once
    the normalised vector has stopped moving, later horizons follow
    ``Lambda_s + K/t`` exactly, so their supremum is either already seen or
    bounded by the asymptotic value, and the loop can stop early.
    """
    _check_theta(theta)
    theta = np.asarray(theta, dtype=float)
    shape = theta.shape
    x = theta.ravel() * chain.rate_on
    g, b = chain.gamma, chain.beta
    p_on, p_off = steady_state(chain)
    e = np.exp(-x)
    w0 = np.full(x.shape, p_on)
    w1 = np.full(x.shape, p_off)
    log_scale = np.zeros(x.shape)
    best = np.log(w0 + w1 * e)  # t = 1, scaled by exp(-x)
    active = np.ones(x.shape, dtype=bool)
    for t in range(2, int(t_max) + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        a0, a1, ee = w0[idx], w1[idx], e[idx]
        n0 = a0 * (1.0 - g) + a1 * b * ee
        n1 = a0 * g + a1 * (1.0 - b) * ee
        s = n0 + n1
        n0 /= s
        n1 /= s
        log_scale[idx] += np.log(s)
        val = (log_scale[idx] + np.log(n0 + n1 * ee)) / t
        best[idx] = np.maximum(best[idx], val)
        moved = np.abs(n0 - a0) > 4e-16
        w0[idx], w1[idx] = n0, n1
        active[idx] = moved
    out = x + np.maximum(best, np.log(_scaled_perron_root(g, b, x)))
    out = out.reshape(shape)
    return out if out.ndim else float(out)
