"""Non-asymptotic backlog and FCFS delay bounds.

The backlog is split at a free drain rate ``c``: a service-side term bounds
how far the channel lags a constant-rate server, an arrival-side term bounds
how far the source outruns it. Each term is a Chernoff bound optimised over
its own tilt ``theta``; the final bound is minimised over ``c``::

    q_c(c) = -sup_theta log(-eps_c * (Lambda_c(-theta) + theta c)) / theta
    q_a(c) = -sup_theta log(eps_a * (theta c - sup_t Lambda_a(theta, t))) / theta
    q      = min_c q_c + q_a,        tau = min_c (q_c + q_a) / c

Both terms are clamped at zero. A negative raw value means the bound already
holds at zero backlog.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import (bisect_decreasing_root_vec, golden_section_max,
                        golden_section_max_vec)
from .markov import (OnOffChain, ServiceAbstraction, arrival_log_mgf_sup,
                     service_log_mgf, source_avg_rate)

__all__ = [
    "BoundQuery",
    "BoundResult",
    "NoAdmissibleTheta",
    "UnstableSystem",
    "delay_bound",
    "qa_bound",
    "qc_bound",
    "queue_bound",
]

N_THETA = 512
N_C = 256
T_MAX = 10_000
# span of the log-spaced theta grid below the admissible upper end
THETA_DECADES = 9.0
# theta cap used when the admissible set is unbounded above, in units of e/(eps*gap)
UNBOUNDED_CAP = 100.0
C_MARGIN = 1e-6
SPLIT_POINTS = 16


class NoAdmissibleTheta(ValueError):
    """The drain rate leaves no tilt for which the Chernoff bound is finite."""


class UnstableSystem(ValueError):
    """Average arrival rate is not below the average service rate."""


def _as_grid(values):
    if values is None:
        return None
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or np.any(~(arr > 0)) or np.any(np.diff(arr) <= 0):
        raise ValueError("grids must be non-empty, strictly positive and strictly increasing")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class BoundQuery:
    """Violation budget split and search configuration.

    ``c_grid`` / ``theta_grid`` override the default log-spaced grids (256
    drain rates across the stable range, 512 tilts per admissible interval).
    With ``optimize_split`` the total budget ``eps_c + eps_a`` is re-split over
    16 fractions plus the even split, keeping whichever gives the smaller
    bound.
    """

    eps_c: float
    eps_a: float
    c_grid: tuple[float, ...] | None = None
    theta_grid: tuple[float, ...] | None = None
    t_max: int = T_MAX
    n_c: int = N_C
    n_theta: int = N_THETA
    optimize_split: bool = False

    def __post_init__(self):
        if not (self.eps_c > 0 and self.eps_a > 0):
            raise ValueError("eps_c and eps_a must be positive")
        if self.eps_c + self.eps_a > 1.0 + 1e-12:
            raise ValueError(f"total violation probability {self.eps} exceeds 1")
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ValueError("t_max must be a positive integer")
        if self.n_c < 3 or self.n_theta < 3:
            raise ValueError("default grids need at least 3 points")
        object.__setattr__(self, "c_grid", _as_grid(self.c_grid))
        object.__setattr__(self, "theta_grid", _as_grid(self.theta_grid))

    @classmethod
    def even(cls, eps: float, **kwargs) -> "BoundQuery":
        return cls(eps_c=eps / 2.0, eps_a=eps / 2.0, **kwargs)

    @property
    def eps(self) -> float:
        return self.eps_c + self.eps_a


@dataclass(frozen=True)
class BoundResult:
    q_c: float
    q_a: float
    q: float
    tau: float
    argmin_c: float | None
    argsup_theta_c: float | None
    argsup_theta_a: float | None
    argmin_c_delay: float | None = None
    eps_c: float = field(default=math.nan)
    eps_a: float = field(default=math.nan)


# ---------------------------------------------------------------- service side

def _service_objective(svc, eps_c, theta, c):
    with np.errstate(divide="ignore", invalid="ignore"):
        x = service_log_mgf(svc, theta) + theta * c
        return np.where(x < 0, np.log(-eps_c * x) / theta, -np.inf)


def _service_upper(svc: ServiceAbstraction, eps_c: float, c: np.ndarray) -> np.ndarray:
    """Largest admissible tilt per drain rate, i.e. where the effective capacity meets ``c``."""
    gap = svc.avg_rate - c
    if svc.p_on == 1.0:
        return UNBOUNDED_CAP * math.e / (eps_c * gap)

    def g(th):
        return -(service_log_mgf(svc, th) + th * c)

    # effective capacity <= -log(1 - p_on)/theta, and >= p_on rho - theta rho^2/8
    hi = -math.log1p(-svc.p_on) / c
    lo = 4.0 * gap / svc.rho ** 2
    lo = np.minimum(lo, 0.5 * hi)
    return bisect_decreasing_root_vec(g, lo, hi)


def _theta_sup(objective, upper: np.ndarray, theta_grid, n_theta: int):
    """Grid search plus golden-section polish, one row per drain rate.

    ``objective`` takes a 2-D array of tilts whose rows line up with the
    drain rates. Returns ``(sup value, argsup)`` per row.
    """
    upper = np.asarray(upper, dtype=float)
    if theta_grid is None:
        frac = np.logspace(-THETA_DECADES, 0.0, n_theta)
        grid = upper[:, None] * frac[None, :]
    else:
        grid = np.broadcast_to(np.asarray(theta_grid)[None, :], (upper.size, len(theta_grid)))
    vals = objective(grid)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    k = np.argmax(vals, axis=1)
    rows = np.arange(upper.size)
    best_t, best_v = grid[rows, k], vals[rows, k]
    lo = grid[rows, np.maximum(k - 1, 0)]
    hi = grid[rows, np.minimum(k + 1, grid.shape[1] - 1)]

    def f(th):
        v = objective(th[:, None])[:, 0]
        return np.where(np.isfinite(v), v, -np.inf)

    t_ref, v_ref = golden_section_max_vec(f, lo, hi)
    better = v_ref > best_v
    return np.where(better, v_ref, best_v), np.where(better, t_ref, best_t)


def _service_side(svc, eps_c, c, theta_grid=None, n_theta=N_THETA):
    """Clamped ``q_c`` and its maximising tilt for each drain rate in ``c``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if np.any(c >= svc.avg_rate):
        raise NoAdmissibleTheta(
            f"drain rate must stay below the mean service rate {svc.avg_rate:.6g}")
    upper = _service_upper(svc, eps_c, c) * np.ones_like(c)
    col = c[:, None]
    sup, arg = _theta_sup(lambda th: _service_objective(svc, eps_c, th, col),
                          upper, theta_grid, n_theta)
    if np.any(~np.isfinite(sup)):
        raise NoAdmissibleTheta("no grid tilt satisfies the service-side constraint")
    return np.maximum(-sup, 0.0), arg


def qc_bound(svc: ServiceAbstraction, eps_c: float, c: float,
             theta_grid=None, n_theta: int = N_THETA) -> float:
    """Service-side backlog term for drain rate ``c`` (bits)."""
    q, _ = _service_side(svc, eps_c, c, _as_grid(theta_grid), n_theta)
    return float(q[0])


# ---------------------------------------------------------------- arrival side

def _arrival_objective(src, eps_a, theta, c, t_max):
    lam_bar = arrival_log_mgf_sup(src, theta, t_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = theta * c - lam_bar
        return np.where(y > 0, np.log(eps_a * y) / theta, -np.inf)


def _arrival_upper(src: OnOffChain, eps_a: float, c: np.ndarray, t_max: int) -> np.ndarray:
    r_avg = source_avg_rate(src)
    peak = src.rate_on
    p_on = src.beta / (src.gamma + src.beta)
    cap = UNBOUNDED_CAP * math.e / (eps_a * (c - r_avg))
    bounded = c < peak

    def g(th):
        return th * c - arrival_log_mgf_sup(src, th, t_max)

    # sup_t Lambda_a >= Lambda_a(theta, 1) >= theta*peak + log(p_on)
    with np.errstate(divide="ignore"):
        hi = np.where(bounded, -math.log(p_on) / np.maximum(peak - c, 1e-300), cap)
    hi = np.where(bounded, np.maximum(hi, 1e-300), cap)
    lo = 0.5 * hi
    for _ in range(2000):
        bad = g(lo) <= 0
        if not np.any(bad):
            break
        lo = np.where(bad, 0.5 * lo, lo)
    root = bisect_decreasing_root_vec(g, lo, np.where(bounded, hi, 2.0 * cap))
    return np.where(bounded, root, np.minimum(root, cap))


def _arrival_side(src, eps_a, c, theta_grid=None, t_max=T_MAX, n_theta=N_THETA):
    """Clamped ``q_a`` and its maximising tilt for each drain rate in ``c``."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    r_avg = source_avg_rate(src)
    if np.any(c <= r_avg):
        raise NoAdmissibleTheta(
            f"drain rate must exceed the mean arrival rate {r_avg:.6g}")
    upper = _arrival_upper(src, eps_a, c, t_max)
    col = c[:, None]
    sup, arg = _theta_sup(lambda th: _arrival_objective(src, eps_a, th, col, t_max),
                          upper, theta_grid, n_theta)
    if np.any(~np.isfinite(sup)):
        raise NoAdmissibleTheta("no grid tilt satisfies the arrival-side constraint")
    return np.maximum(-sup, 0.0), arg


def qa_bound(src: OnOffChain, eps_a: float, c: float, theta_grid=None,
             t_max: int = T_MAX, n_theta: int = N_THETA) -> float:
    """Arrival-side backlog term for drain rate ``c`` (bits)."""
    q, _ = _arrival_side(src, eps_a, c, _as_grid(theta_grid), t_max, n_theta)
    return float(q[0])


# ---------------------------------------------------------------- composition

def _stable_c_range(src, svc):
    r_avg = source_avg_rate(src)
    if not r_avg < svc.avg_rate:
        raise UnstableSystem(
            f"mean arrival rate {r_avg:.6g} >= mean service rate {svc.avg_rate:.6g}")
    lo = max(r_avg * (1.0 + C_MARGIN), svc.avg_rate * C_MARGIN)
    hi = svc.avg_rate * (1.0 - C_MARGIN)
    return lo, hi


def _fixed_split(src, svc, query: BoundQuery, eps_c: float, eps_a: float) -> BoundResult:
    lo, hi = _stable_c_range(src, svc)
    if query.c_grid is None:
        cs = np.geomspace(lo, hi, query.n_c)
    else:
        cs = np.asarray(query.c_grid)
        cs = cs[(cs > lo * (1 - 1e-15)) & (cs < hi * (1 + 1e-15))]
        if cs.size == 0:
            raise UnstableSystem("no drain rate in c_grid lies strictly inside the stable range")

    def parts(c):
        qc, tc = _service_side(svc, eps_c, c, query.theta_grid, query.n_theta)
        qa, ta = _arrival_side(src, eps_a, c, query.theta_grid, query.t_max, query.n_theta)
        return qc, qa, tc, ta

    qc, qa, tc, ta = parts(cs)
    total = qc + qa

    def refine(values, weight):
        k = int(np.argmin(values))
        best = (float(values[k]), float(cs[k]))
        if cs.size < 3:
            return best
        a, b = cs[max(k - 1, 0)], cs[min(k + 1, cs.size - 1)]

        def neg(c):
            qc1, qa1, _, _ = parts(c)
            return -float((qc1[0] + qa1[0]) / weight(c))

        c_ref, v_ref = golden_section_max(neg, float(a), float(b), xtol=1e-7 * float(b))
        if -v_ref < best[0]:
            return -v_ref, c_ref
        return best

    q, c_q = refine(total, lambda c: 1.0)
    tau, c_tau = refine(total / cs, lambda c: c)
    qc1, qa1, tc1, ta1 = parts(c_q)
    return BoundResult(q_c=float(qc1[0]), q_a=float(qa1[0]), q=q, tau=tau,
                       argmin_c=c_q, argsup_theta_c=float(tc1[0]),
                       argsup_theta_a=float(ta1[0]), argmin_c_delay=c_tau,
                       eps_c=eps_c, eps_a=eps_a)


def queue_bound(src: OnOffChain, svc: ServiceAbstraction, query: BoundQuery) -> BoundResult:
    """Backlog bound ``q`` with ``P(Q > q) <= eps`` and FCFS delay bound ``tau``.

    Raises :class:`UnstableSystem` if the mean arrival rate is not below the
    mean service rate. A total budget of 1 is met by a zero threshold and
    short-circuits the search.
    """
    _stable_c_range(src, svc)
    if query.eps >= 1.0:
        return BoundResult(0.0, 0.0, 0.0, 0.0, None, None, None, None,
                           query.eps_c, query.eps_a)
    if not query.optimize_split:
        return _fixed_split(src, svc, query, query.eps_c, query.eps_a)
    eps = query.eps
    fractions = np.union1d(np.linspace(0.05, 0.95, SPLIT_POINTS), [0.5])
    results = [_fixed_split(src, svc, query, f * eps, (1.0 - f) * eps) for f in fractions]
    best_q = min(results, key=lambda r: r.q)
    best_tau = min(results, key=lambda r: r.tau)
    return BoundResult(q_c=best_q.q_c, q_a=best_q.q_a, q=best_q.q, tau=best_tau.tau,
                       argmin_c=best_q.argmin_c, argsup_theta_c=best_q.argsup_theta_c,
                       argsup_theta_a=best_q.argsup_theta_a,
                       argmin_c_delay=best_tau.argmin_c_delay,
                       eps_c=best_q.eps_c, eps_a=best_q.eps_a)


def delay_bound(src: OnOffChain, svc: ServiceAbstraction, query: BoundQuery) -> float:
    """FCFS delay bound in frames, ``min_c (q_c + q_a) / c``."""
    return queue_bound(src, svc, query).tau
