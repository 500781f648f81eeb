"""Acceptance checks, each pairing an analytical result with an independent oracle.

Every check returns a :class:`CheckResult`; :func:`run_all` runs the suite in
order. The oracles here deliberately avoid the closed forms they test
(eigenvalues come from ``numpy.linalg``, matching conditions are solved by
bisection, tails come from the simulator).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import BoundQuery, UnstableSystem, queue_bound
from .markov import (OnOffChain, ServiceAbstraction, arrival_log_mgf_finite,
                     service_log_mgf, source_log_mgf, steady_state)
from .phy import on_probability, rate_interval, default_config
from .qos import (effective_capacity, max_avg_arrival_rate_for_service, optimize_fixed_rate,
                  reference_max_arrival_rate)
from .sim import SimConfig, simulate, tail_decay_estimate, violation_probs

FRAMES = 10_000_000
WARMUP = 100_000


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: str
    seconds: float
    limit_seconds: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        limit = f" (limit {self.limit_seconds:g} s)" if self.limit_seconds else ""
        return (f"[{status}] {self.number}. {self.name}: {self.measured} "
                f"[{self.seconds:.2f} s{limit}]")


def _timed(number, name, limit, body: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, measured = body()
    dt = time.perf_counter() - t0
    if limit is not None and dt > limit:
        ok = False
        measured += f"; runtime {dt:.2f} s over limit"
    return CheckResult(number, name, bool(ok), measured, dt, limit)


# ---------------------------------------------------------------- oracles

def eig_source_log_mgf(gamma: float, beta: float, lam: float, theta: float) -> float:
    """``log`` spectral radius of the tilted transition matrix via ``numpy.linalg``."""
    x = theta * lam
    e = math.exp(-x)
    m = np.array([[1.0 - gamma, gamma], [beta * e, (1.0 - beta) * e]])
    return x + math.log(float(np.max(np.abs(np.linalg.eigvals(m)))))


def bisection_max_rate(gamma: float, beta: float, svc: ServiceAbstraction, theta: float,
                       lam_guess: float = 1.0) -> float:
    """Average rate ``p_on * lambda`` where ``Lambda_s(theta; lambda) = -Lambda_c(-theta)``."""
    target = -math.log(svc.p_on * math.exp(-theta * svc.rho) + 1.0 - svc.p_on) \
        if theta * svc.rho < 700 else -float(service_log_mgf(svc, theta))

    def gap(lam):
        return eig_source_log_mgf(gamma, beta, lam, theta) - target

    lo, hi = 0.0, max(lam_guess, 1e-12)
    while gap(hi) < 0:
        lo, hi = hi, 2.0 * hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return beta / (gamma + beta) * 0.5 * (lo + hi)


# ---------------------------------------------------------------- checks

def check_closed_form(n: int = 200, seed: int = 20240501) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n):
            g, b = rng.uniform(0.05, 0.95, 2)
            lam = rng.uniform(1e2, 1e4)
            svc = ServiceAbstraction(rng.uniform(0.1, 1.0), rng.uniform(1e2, 1e4))
            theta = 10.0 ** rng.uniform(-5, -1)
            closed = max_avg_arrival_rate_for_service(OnOffChain(g, b, lam), svc, theta)
            oracle = bisection_max_rate(g, b, svc, theta, lam)
            worst = max(worst, abs(closed - oracle) / oracle)
        return worst <= 1e-9, f"max rel err {worst:.2e} over {n} tuples (tol 1e-9)"
    return _timed(1, "closed form vs bisection on matching condition", 5.0, body)


def check_limits() -> CheckResult:
    def body():
        errs = []
        for g, b, p, rho in [(0.3, 0.7, 0.7, 1000.0), (0.1, 0.4, 0.35, 5000.0),
                             (0.8, 0.2, 0.95, 250.0)]:
            d = max_avg_arrival_rate_for_service(OnOffChain(g, b, 1.0),
                                                 ServiceAbstraction(p, rho), 1e-8)
            errs.append(abs(d / (p * rho) - 1.0))
            p_os = b / (g + b)
            d = max_avg_arrival_rate_for_service(OnOffChain(g, b, 1.0),
                                                 ServiceAbstraction(1.0, rho), 10.0)
            errs.append(abs(d / (p_os * rho) - 1.0))
        worst = max(errs)
        return worst <= 1e-3, f"max rel deviation {worst:.2e} from both limits (tol 1e-3)"
    return _timed(2, "small- and large-theta limit identities", 1.0, body)


def check_constant_source() -> CheckResult:
    def body():
        worst = 0.0
        src = OnOffChain(gamma=0.0, beta=1.0, rate_on=1.0)
        for p, rho in [(0.7, 1000.0), (0.2, 8000.0), (1.0, 300.0)]:
            svc = ServiceAbstraction(p, rho)
            for theta in np.logspace(-8, 1, 100):
                a = max_avg_arrival_rate_for_service(src, svc, float(theta))
                e = float(effective_capacity(svc, float(theta)))
                worst = max(worst, abs(a - e) / abs(e))
        return worst <= 4 * np.finfo(float).eps, f"max rel diff {worst:.2e} (tol 4 ulp)"
    return _timed(3, "constant source reproduces effective capacity", None, body)


def check_monotonicity() -> CheckResult:
    def body():
        notes, ok = [], True
        thetas = np.logspace(-7, 1, 400)
        rng = np.random.default_rng(7)
        for _ in range(20):
            svc = ServiceAbstraction(rng.uniform(0.05, 1.0), rng.uniform(1e2, 1e4))
            ec = effective_capacity(svc, thetas)
            ok &= bool(np.all(np.diff(ec) <= 1e-12 * ec[:-1]))
        notes.append(f"EC non-increasing: {ok}")
        cfg = default_config()
        iv = rate_interval(cfg)
        theta_t = np.logspace(-7, math.log10(0.501), 40)
        rhos = np.array([optimize_fixed_rate(cfg, float(t)).rho_star for t in theta_t])
        mono = bool(np.all(np.diff(rhos) <= 1e-9 * iv.rho_max))
        term = rhos[-1] == iv.rho_min
        notes.append(f"rho* non-increasing: {mono}, terminal rho*={rhos[-1]:.3f} "
                     f"(rho_min {iv.rho_min:.3f})")
        grid = np.linspace(0.5 * iv.rho_min, 1.5 * iv.rho_max, 4001)
        pon = np.array([on_probability(cfg, float(r)) for r in grid])
        ends = (on_probability(cfg, iv.rho_min) == 1.0
                and on_probability(cfg, iv.rho_max * (1 + 1e-9)) == 0.0)
        pmono = bool(np.all(np.diff(pon) <= 0))
        notes.append(f"p_on non-increasing: {pmono}, exact endpoints: {ends}")
        return ok and mono and term and pmono and ends, "; ".join(notes)
    return _timed(4, "monotonicity suite", 10.0, body)


def check_large_deviations(frames: int = FRAMES, seed: int = 11) -> CheckResult:
    """Tail slope at 95% of the closed-form maximum rate for ``theta* = 1e-3``.

    The fit window runs from the queue's 90th percentile to the largest
    level still exceeded at least 100 times.
    """
    def body():
        g, b, theta = 0.3, 0.7, 1e-3
        svc = ServiceAbstraction(0.7, 1000.0)
        delta = max_avg_arrival_rate_for_service(OnOffChain(g, b, 1.0), svc, theta)
        src = OnOffChain(g, b, 1.0).with_avg_rate(0.95 * delta)
        trace = simulate(SimConfig(src, svc, frames + WARMUP, seed=seed, warmup=WARMUP))
        values, tail = trace.queue_tail_table()
        q_lo = float(np.quantile(trace.queue, 0.9))
        q_hi = float(values[np.rint(tail * trace.frames) >= 100][-1])
        th = tail_decay_estimate(trace, q_lo, q_hi)
        ratio = th / theta
        return 0.85 <= ratio <= 1.15, (f"theta_hat={th:.4e} ({ratio:.3f} x theta*, "
                                       f"window [{q_lo:.0f}, {q_hi:.0f}] bits, lambda={src.rate_on:.1f})")
    return _timed(5, "simulated tail slope vs theta*", 60.0, body)


def check_bound_validity(frames: int = FRAMES, seed: int = 12) -> CheckResult:
    def body():
        src = OnOffChain(0.3, 0.7, 1000.0)
        svc = ServiceAbstraction(0.9, 2000.0)
        trace = simulate(SimConfig(src, svc, frames + WARMUP, seed=seed, warmup=WARMUP))
        ok, notes = True, []
        for eps in (1e-2, 1e-3):
            r = queue_bound(src, svc, BoundQuery.even(eps))
            pq, pd = violation_probs(trace, r.q, r.tau)
            good = pq.p <= eps + 3 * pq.stderr and pd.p <= eps + 3 * pd.stderr
            ok &= good
            notes.append(f"eps={eps:g}: q={r.q:.1f} P(Q>q)={pq.p:.2e}, "
                         f"tau={r.tau:.3f} P(D>tau)={pd.p:.2e}")
        return ok, "; ".join(notes)
    return _timed(6, "non-asymptotic bounds hold in simulation", 120.0, body)


def check_reference_ordering() -> CheckResult:
    def body():
        cfg = default_config(cell_radius=3.0, avg_power=0.2)
        theta = 1e-6
        opt = optimize_fixed_rate(cfg, theta)
        notes, ok = [], True
        for g, b in [(0.3, 0.7), (0.5, 0.5), (0.1, 0.3)]:
            src = OnOffChain(g, b, 1.0)
            fixed = max_avg_arrival_rate_for_service(src, opt.service, theta)
            ref = reference_max_arrival_rate(src, cfg, theta)
            ok &= ref >= fixed
            notes.append(f"({g},{b}) ref={ref:.1f} fixed={fixed:.1f}")
        return ok, "; ".join(notes)
    return _timed(7, "full-CSI reference beats fixed rate at low theta", None, body)


def check_time_variant_convergence(n: int = 20, seed: int = 8) -> CheckResult:
    """Chains drawn from the same ranges as check 1."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n):
            g, b = rng.uniform(0.05, 0.95, 2)
            chain = OnOffChain(g, b, rng.uniform(1e2, 1e4))
            for theta in (1e-4, 1e-3, 1e-2):
                gap = abs(arrival_log_mgf_finite(chain, theta, 10_000) - source_log_mgf(chain, theta))
                worst = max(worst, gap)
        return worst <= 1e-6, f"max |Lambda_a(theta,1e4) - Lambda_s| = {worst:.2e} (tol 1e-6)"
    return _timed(8, "time-variant log-MGF converges", None, body)


def check_delay_asymptote(theta_t: float = 1e-4, eps: float = 1e-3) -> CheckResult:
    def body():
        cfg = default_config(avg_power=0.2)
        svc = optimize_fixed_rate(cfg, theta_t).service
        taus = []
        for load in (0.5, 0.7, 0.8, 0.9, 0.95):
            src = OnOffChain(0.3, 0.7, 1.0).with_avg_rate(load * svc.avg_rate)
            taus.append(queue_bound(src, svc, BoundQuery.even(eps)).tau)
        increasing = bool(np.all(np.diff(taus) > 0))
        try:
            queue_bound(OnOffChain(0.3, 0.7, 1.0).with_avg_rate(svc.avg_rate), svc,
                        BoundQuery.even(eps))
            unstable = False
        except UnstableSystem:
            unstable = True
        return increasing and unstable, (
            f"tau={', '.join(f'{t:.2f}' for t in taus)} frames; load 1.0 unstable: {unstable}")
    return _timed(9, "delay bound diverges towards the service rate", None, body)


def run_all(frames: int = FRAMES, seed: int | None = None) -> list[CheckResult]:
    """Run checks 1-9 in order; ``seed`` reseeds the two simulation checks."""
    ld_seed, bv_seed = (11, 12) if seed is None else (seed, seed + 1)
    return [
        check_closed_form(),
        check_limits(),
        check_constant_source(),
        check_monotonicity(),
        check_large_deviations(frames, ld_seed),
        check_bound_validity(frames, bv_seed),
        check_reference_ordering(),
        check_time_variant_convergence(),
        check_delay_asymptote(),
    ]
