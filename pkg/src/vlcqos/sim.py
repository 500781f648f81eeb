"""Discrete-time Monte Carlo model of the AP buffer.

Each frame: the source chain steps, an ON source deposits ``lambda`` bits,
then the channel is ON independently with probability ``p_on`` and, if so,
removes up to ``rho`` bits first-come first-served. Bits are integers.

Random streams come from ``numpy.random.SeedSequence(seed).spawn(3)`` in the
order (initial source state, source sojourns, channel states), each driving a
PCG64 generator, so a given seed always reproduces the same trace.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .markov import OnOffChain, ServiceAbstraction, steady_state

__all__ = [
    "InsufficientTailMass",
    "SimConfig",
    "SimTrace",
    "TailEstimate",
    "simulate",
    "tail_decay_estimate",
    "violation_probs",
    "write_trace",
]

ARRIVALS_BEFORE_SERVICE = True
DEFAULT_WARMUP = 100_000
_COUNTER_LIMIT = 2 ** 62


class InsufficientTailMass(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    src: OnOffChain
    svc: ServiceAbstraction
    frames: int
    seed: int = 0
    warmup: int = DEFAULT_WARMUP

    def __post_init__(self):
        if not 0 <= self.warmup < self.frames:
            raise ValueError("need frames > warmup >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def arrival_order(self) -> str:
        return "arrivals-before-service"


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Post-warmup record of one run.

    ``batch_delay[i]`` is the FCFS delay (frames) of the last bit that arrived
    in frame ``i``; -1 marks frames without arrivals or whose batch was still
    queued when the run ended.
    """

    queue: np.ndarray
    source_state: np.ndarray
    channel_state: np.ndarray
    batch_delay: np.ndarray
    seed: int
    lam_bits: int
    rho_bits: int
    warmup: int

    @property
    def frames(self) -> int:
        return int(self.queue.size)

    @property
    def delays(self) -> np.ndarray:
        return self.batch_delay[self.batch_delay >= 0]

    def queue_tail_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct queue values ``q`` and empirical ``P(Q >= q)``."""
        values, counts = np.unique(self.queue, return_counts=True)
        tail = np.cumsum(counts[::-1])[::-1]
        return values, tail / self.queue.size

    def delay_tail_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct delays ``d`` and empirical ``P(D > d)``."""
        d = self.delays
        if d.size == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        values, counts = np.unique(d, return_counts=True)
        above = d.size - np.cumsum(counts)
        return values, above / d.size


def _round_bits(value: float, name: str) -> int:
    bits = int(round(value))
    if value > 0 and abs(bits - value) > 1e-3 * value:
        warnings.warn(f"{name}={value:g} rounded to {bits} bits "
                      f"({abs(bits - value) / value:.2%} error)", stacklevel=3)
    return bits


def _source_path(src: OnOffChain, n: int, rng_init, rng_runs) -> np.ndarray:
    p_on, _ = steady_state(src)
    state = 1 if rng_init.random() < p_on else 0
    pieces, total = [], 0
    mean_cycle = (1.0 / src.gamma if src.gamma > 0 else math.inf) + 1.0 / src.beta
    batch = int(min(n / mean_cycle * 1.1, n)) + 16
    while total < n:
        if src.gamma > 0:
            on = rng_runs.geometric(src.gamma, batch)
        else:
            on = np.full(batch, n + 1, dtype=np.int64)
        off = rng_runs.geometric(src.beta, batch)
        first, second = (on, off) if state == 1 else (off, on)
        lengths = np.column_stack([first, second]).ravel()
        values = np.tile(np.array([state, 1 - state], dtype=np.int8), batch)
        lengths = np.minimum(lengths, n - total + 1)
        pieces.append(np.repeat(values, lengths))
        total += int(pieces[-1].size)
    return np.concatenate(pieces)[:n]


def simulate(cfg: SimConfig) -> SimTrace:
    lam = _round_bits(cfg.src.rate_on, "lambda")
    rho = _round_bits(cfg.svc.rho, "rho")
    n = int(cfg.frames)
    if n * max(lam, rho, 1) >= _COUNTER_LIMIT:
        raise OverflowError("frames * rate exceeds the 62-bit bit counter")
    ss_init, ss_src, ss_ch = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_init = np.random.Generator(np.random.PCG64(ss_init))
    rng_src = np.random.Generator(np.random.PCG64(ss_src))
    rng_ch = np.random.Generator(np.random.PCG64(ss_ch))

    src_state = _source_path(cfg.src, n, rng_init, rng_src)
    ch_state = (rng_ch.random(n) < cfg.svc.p_on).astype(np.int8)

    arrivals = src_state.astype(np.int64) * lam
    net = arrivals - ch_state.astype(np.int64) * rho
    x = np.cumsum(net)
    # Lindley recursion from an empty buffer: Q_t = X_t - min(0, min_{k<=t} X_k)
    queue = x - np.minimum(np.minimum.accumulate(x), 0)
    cum_arr = np.cumsum(arrivals)
    cum_dep = cum_arr - queue

    delay = np.full(n, -1, dtype=np.int64)
    idx = np.flatnonzero(arrivals > 0)
    done = np.searchsorted(cum_dep, cum_arr[idx], side="left")
    served = done < n
    delay[idx[served]] = done[served] - idx[served]

    w = cfg.warmup
    return SimTrace(queue=queue[w:], source_state=src_state[w:], channel_state=ch_state[w:],
                    batch_delay=delay[w:], seed=cfg.seed, lam_bits=lam, rho_bits=rho,
                    warmup=w)


def tail_decay_estimate(trace: SimTrace, q_lo: float, q_hi: float,
                        min_points: int = 20, min_count: int = 100) -> float:
    """Negative slope of ``log P(Q >= q)`` against ``q`` on ``[q_lo, q_hi]``.

    Uses the distinct observed queue values in the window whose tail count is
    at least ``min_count``.
    """
    values, tail = trace.queue_tail_table()
    counts = np.rint(tail * trace.frames)
    sel = (values >= q_lo) & (values <= q_hi) & (counts >= min_count)
    if np.count_nonzero(sel) < min_points:
        raise InsufficientTailMass(
            f"only {np.count_nonzero(sel)} tail points with >= {min_count} samples "
            f"in [{q_lo:g}, {q_hi:g}]")
    slope = np.polyfit(values[sel].astype(float), np.log(tail[sel]), 1)[0]
    return float(-slope)


class TailEstimate(NamedTuple):
    p: float
    stderr: float
    n: int

    def upper(self, k: float = 3.0) -> float:
        return self.p + k * self.stderr


def _binomial(hits: int, n: int) -> TailEstimate:
    if n == 0:
        return TailEstimate(0.0, 0.0, 0)
    p = hits / n
    return TailEstimate(p, math.sqrt(p * (1.0 - p) / n), n)


def violation_probs(trace: SimTrace, q: float, tau: float) -> tuple[TailEstimate, TailEstimate]:
    """Empirical ``P(Q > q)`` over frames and ``P(D > tau)`` over arrival batches."""
    p_q = _binomial(int(np.count_nonzero(trace.queue > q)), trace.frames)
    d = trace.delays
    p_d = _binomial(int(np.count_nonzero(d > tau)), int(d.size))
    return p_q, p_d


def write_trace(trace: SimTrace, path: str | Path) -> None:
    """Comma-delimited per-frame export of a trace."""
    frame = np.arange(trace.warmup, trace.warmup + trace.frames)
    table = np.column_stack([frame, trace.source_state, trace.channel_state,
                             trace.queue, trace.batch_delay])
    header = "frame,source_state,channel_state,queue_bits,batch_delay"
    np.savetxt(path, table, fmt="%d", delimiter=",", header=header, comments="")
