"""Small numerical primitives shared by the analysis modules."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def log_mix_exp(p, a):
    """Return ``log(p * exp(a) + 1 - p)`` without overflow or cancellation.

    ``p`` is a mixing probability in [0, 1] and ``a`` any real exponent.
    Small ``|a|`` goes through ``log1p(p * expm1(a))``; otherwise the larger
    of the two exponents is factored out before summing.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    p, a = np.broadcast_arrays(p, a)
    out = np.empty(p.shape)
    small = np.abs(a) <= 0.5
    out[small] = np.log1p(p[small] * np.expm1(a[small]))
    big = ~small
    if np.any(big):
        pb, ab = p[big], a[big]
        with np.errstate(divide="ignore"):
            x1 = np.log(pb) + ab
            x0 = np.log1p(-pb)
        out[big] = np.logaddexp(x1, x0)
    return out if out.ndim else float(out)


def logsumexp(x, weights=None):
    """Max-shifted ``log(sum(w * exp(x)))`` over a 1-D sequence."""
    x = np.asarray(x, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    keep = w > 0
    if not np.any(keep):
        return -math.inf
    x, w = x[keep], w[keep]
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.sum(w * np.exp(x - m))))


def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       xtol: float = 0.0, max_iter: int = 200) -> tuple[float, float]:
    """Maximise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``.

    Iterates until the bracket is narrower than ``xtol`` (or stops shrinking
    in floating point). Endpoints are never evaluated.
    """
    a, b = min(a, b), max(a, b)
    c = a + INV_PHI2 * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol or not (a < c < d < b):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = a + INV_PHI2 * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     rtol: float = 1e-8, atol: float = 1e-14,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with interval bisection.

    Raises ``ArithmeticError`` if the recursion depth is exhausted before the
    local error test passes.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # global target, split along the recursion
    tol = max(atol, rtol * abs(whole))

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        if depth <= 0:
            raise ArithmeticError(
                f"adaptive Simpson did not converge on [{a:g}, {b:g}]")
        return (recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    result = recurse(a, b, fa, fm, fb, whole, tol, max_depth)
    # re-check against the converged magnitude; tighten once if needed
    if abs(whole) > 0 and rtol * abs(result) < 0.5 * tol:
        tol = max(atol, rtol * abs(result))
        result = recurse(a, b, fa, fm, fb, whole, tol, max_depth)
    return result


def golden_section_max_vec(f: Callable[[np.ndarray], np.ndarray], a, b,
                           n_iter: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise golden-section maximisation over arrays of brackets.

    ``f`` maps an array of abscissae (one per bracket) to objective values.
    A fixed iteration count keeps every bracket in lockstep.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = a + INV_PHI2 * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n_iter):
        left = fc >= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        c_new = np.where(left, a + INV_PHI2 * (b - a), d)
        d_new = np.where(left, c, a + INV_PHI * (b - a))
        probe = np.where(left, c_new, d_new)
        fp = f(probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_new, d_new
    pick = fc >= fd
    return np.where(pick, c, d), np.where(pick, fc, fd)


def bisect_decreasing_root_vec(g: Callable[[np.ndarray], np.ndarray], lo, hi,
                               n_iter: int = 80) -> np.ndarray:
    """Elementwise bisection for roots of a decreasing ``g`` with ``g(lo) > 0 >= g(hi)``.

    Returns the last point known to satisfy ``g > 0`` so callers stay on the
    admissible side.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return lo
