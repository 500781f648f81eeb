import math

import numpy as np
import pytest

from vlcqos.bounds import (BoundQuery, NoAdmissibleTheta, UnstableSystem, _service_objective,
                           _theta_sup, delay_bound, qa_bound, qc_bound, queue_bound)
from vlcqos.markov import OnOffChain, ServiceAbstraction, steady_state
from vlcqos.sim import SimConfig, simulate, violation_probs


def dense_qc(p, rho, eps_c, c, n=1_000_000):
    """Clamped service-side term from a dense log grid, no shared code."""
    th = np.geomspace(1e-9, 1.0, n)
    x = np.log1p(p * np.expm1(-th * rho)) + th * c
    with np.errstate(invalid="ignore", divide="ignore"):
        obj = np.where(x < 0, np.log(-eps_c * x) / th, -np.inf)
    return max(-obj.max(), 0.0)


def scan_sup_log_mgf(g, b, lam, theta, t_max):
    """``max_t`` of the finite-horizon log-MGF by a plain log-domain recursion over all t."""
    theta = np.asarray(theta, dtype=float)
    x = theta * lam
    p_on, p_off = steady_state(OnOffChain(g, b, lam))
    # log E[exp(theta A(t)); X_t = s] for s in (ON, OFF)
    l_on = np.log(p_on) + x
    l_off = np.full_like(x, np.log(p_off))
    best = np.logaddexp(l_on, l_off)
    for t in range(2, t_max + 1):
        n_on = np.logaddexp(l_on + np.log1p(-g), l_off + np.log(b)) + x
        n_off = np.logaddexp(l_on + np.log(g), l_off + np.log1p(-b))
        l_on, l_off = n_on, n_off
        best = np.maximum(best, np.logaddexp(l_on, l_off) / t)
    return best


def dense_qa(g, b, lam, eps_a, c, lo, hi, n=20_000, t_max=10_000):
    th = np.geomspace(lo, hi, n)
    lam_bar = scan_sup_log_mgf(g, b, lam, th, t_max)
    y = th * c - lam_bar
    with np.errstate(invalid="ignore", divide="ignore"):
        obj = np.where(y > 0, np.log(eps_a * y) / th, -np.inf)
    return max(-obj.max(), 0.0)


class TestServiceSide:
    def test_deterministic_raw_sup(self):
        rho, c, eps = 1000.0, 400.0, 1e-3
        svc = ServiceAbstraction(1.0, rho)
        a = eps * (rho - c)
        upper = np.array([10 * math.e / a])
        sup, arg = _theta_sup(lambda th: _service_objective(svc, eps, th, c), upper, None, 512)
        assert sup[0] == pytest.approx(a / math.e, rel=1e-9)
        assert arg[0] == pytest.approx(math.e / a, rel=1e-4)

    def test_deterministic_clamps_to_zero(self):
        assert qc_bound(ServiceAbstraction(1.0, 1000.0), 1e-3, 400.0) == 0.0

    def test_dense_grid(self):
        q = qc_bound(ServiceAbstraction(0.7, 1000.0), 5e-4, 500.0)
        assert q == pytest.approx(dense_qc(0.7, 1000.0, 5e-4, 500.0), rel=1e-3)
        assert q > 0

    @pytest.mark.parametrize("c", [700.0, 800.0])
    def test_unstable_drain(self, c):
        with pytest.raises(NoAdmissibleTheta):
            qc_bound(ServiceAbstraction(0.7, 1000.0), 5e-4, c)

    def test_custom_grid(self):
        grid = np.geomspace(1e-7, 1e-2, 2000)
        q = qc_bound(ServiceAbstraction(0.7, 1000.0), 5e-4, 500.0, theta_grid=grid)
        assert q == pytest.approx(dense_qc(0.7, 1000.0, 5e-4, 500.0), rel=1e-3)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            qc_bound(ServiceAbstraction(0.7, 1000.0), 5e-4, 500.0, theta_grid=[1e-3, 1e-4])


class TestArrivalSide:
    def test_dense_grid(self):
        q = qa_bound(OnOffChain(0.3, 0.7, 1000.0), 5e-4, 900.0)
        oracle = dense_qa(0.3, 0.7, 1000.0, 5e-4, 900.0, 1e-7, 1e-2)
        assert q == pytest.approx(oracle, rel=1e-3)

    @pytest.mark.parametrize("c", [600.0, 700.0])
    def test_unstable_drain(self, c):
        with pytest.raises(NoAdmissibleTheta):
            qa_bound(OnOffChain(0.3, 0.7, 1000.0), 5e-4, c)

    def test_constant_source_clamps(self):
        assert qa_bound(OnOffChain(0.0, 1.0, 500.0), 1e-3, 600.0) == 0.0


class TestBoundQuery:
    def test_even(self):
        q = BoundQuery.even(1e-3)
        assert q.eps_c == q.eps_a == 5e-4 and q.eps == pytest.approx(1e-3)

    @pytest.mark.parametrize("kwargs", [dict(eps_c=0.0, eps_a=0.1), dict(eps_c=0.7, eps_a=0.7),
                                        dict(eps_c=0.1, eps_a=0.1, t_max=0),
                                        dict(eps_c=0.1, eps_a=0.1, c_grid=[])])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            BoundQuery(**kwargs)


class TestComposition:
    src = OnOffChain(0.3, 0.7, 1000.0)
    svc = ServiceAbstraction(0.9, 2000.0)

    def test_deterministic_pair(self):
        res = queue_bound(OnOffChain(0.0, 1.0, 500.0), ServiceAbstraction(1.0, 800.0),
                          BoundQuery.even(1e-3))
        assert res.q == 0.0 and res.tau == 0.0

    def test_unit_budget(self):
        res = queue_bound(self.src, self.svc, BoundQuery.even(1.0))
        assert res.q == 0.0 and res.tau == 0.0

    def test_unstable(self):
        with pytest.raises(UnstableSystem):
            queue_bound(OnOffChain(0.3, 0.7, 1.0).with_avg_rate(1800.0), self.svc,
                        BoundQuery.even(1e-3))

    def test_parts_add_up(self):
        res = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        assert res.q == pytest.approx(res.q_c + res.q_a, rel=1e-12)
        assert res.q_c == pytest.approx(qc_bound(self.svc, 5e-4, res.argmin_c), rel=1e-9)
        assert res.q_a == pytest.approx(qa_bound(self.src, 5e-4, res.argmin_c), rel=1e-9)
        assert 700.0 < res.argmin_c < 1800.0

    def test_tighter_budget_larger_bound(self):
        loose = queue_bound(self.src, self.svc, BoundQuery.even(1e-2))
        tight = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        assert tight.q > loose.q and tight.tau > loose.tau

    def test_better_channel_smaller_bound(self):
        worse = queue_bound(self.src, ServiceAbstraction(0.8, 2000.0), BoundQuery.even(1e-3))
        better = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        assert better.q < worse.q

    def test_heavier_source_larger_bound(self):
        light = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        heavy = queue_bound(self.src.with_avg_rate(1000.0), self.svc, BoundQuery.even(1e-3))
        assert heavy.q > light.q

    def test_split_optimisation_never_worse(self):
        even = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        best = queue_bound(self.src, self.svc, BoundQuery.even(1e-3, optimize_split=True))
        assert best.q <= even.q * (1 + 1e-12) and best.tau <= even.tau * (1 + 1e-12)
        assert best.eps_c + best.eps_a == pytest.approx(1e-3)

    def test_c_grid(self):
        res = queue_bound(self.src, self.svc, BoundQuery.even(1e-3, c_grid=np.linspace(800, 1700, 40)))
        full = queue_bound(self.src, self.svc, BoundQuery.even(1e-3))
        assert res.q >= full.q * (1 - 1e-6)
        assert res.q == pytest.approx(full.q, rel=0.05)

    def test_delay_matches(self):
        q = BoundQuery.even(1e-3)
        assert delay_bound(self.src, self.svc, q) == queue_bound(self.src, self.svc, q).tau

    def test_delay_holds_in_simulation(self):
        svc = ServiceAbstraction(0.7, 1000.0)
        src = OnOffChain(0.3, 0.7, 1.0).with_avg_rate(0.8 * svc.avg_rate)
        tau = delay_bound(src, svc, BoundQuery.even(1e-3))
        trace = simulate(SimConfig(src, svc, 10_100_000, seed=21))
        _, pd = violation_probs(trace, math.inf, tau)
        assert pd.p <= 1e-3 + 3 * pd.stderr
