"""Shared scalar numerics: binary entropy, normal CDF, bracketed root
finding, and the implicit output-length equation of privacy amplification."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RootResult:
    value: float
    residual: float
    iterations: int


def binary_entropy(x: float) -> float:
    """h(x) = -x*log2(x) - (1-x)*log2(1-x), with h(0) = h(1) = 0."""
    if x < 0.0 or x > 1.0:
        raise ValueError(f"binary_entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def solve_bracketed(f, lo: float, hi: float, tol: float = 1e-12,
                    max_iter: int = 200) -> RootResult:
    """Bisect f on [lo, hi] until |f| <= tol or the interval width <= tol.

    f(lo) and f(hi) must differ in sign (a zero endpoint counts as a root).
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return RootResult(lo, 0.0, 0)
    if fhi == 0.0:
        return RootResult(hi, 0.0, 0)
    if flo * fhi > 0.0:
        raise ValueError(
            f"interval [{lo}, {hi}] does not bracket a root: "
            f"f(lo)={flo}, f(hi)={fhi}"
        )
    mid, fmid = lo, flo
    for iterations in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid) <= tol or (hi - lo) <= tol:
            break
        if (flo < 0.0) == (fmid < 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return RootResult(mid, fmid, iterations)


def output_length_fixed_point(k: float, eps_max: float = 0.01) -> int:
    """Largest integer m with m <= k - 6 - 4*log2(m / eps_max); 0 if none.

    This is the saturation point of the extraction budget. Whenever the
    floored form m = floor(k - 6 - 4*log2(m/eps_max)) has an integer
    solution it is unique and equals this maximum (the map is
    nonincreasing in m). The floor can instead induce a 2-cycle around
    the real fixed point; the smaller cycle element is then the answer
    (conservative side). Implemented as fixed-point iteration from
    m0 = max(1, floor(k)) with cycle detection, followed by an exact
    verification walk against the defining inequality.
    """
    if not math.isfinite(k):
        raise ValueError(f"k must be finite, got {k}")

    def budget(m: int) -> float:
        return k - 6.0 - 4.0 * math.log2(m / eps_max)

    m = max(1, math.floor(k))
    prev = -1
    for _ in range(200):
        nxt = math.floor(budget(m))
        if nxt == m:
            break
        if nxt < 1:
            m = 1
            break
        if nxt == prev:
            m = min(m, nxt)
            break
        prev, m = m, nxt
    # Exact verification: settle on the largest m inside the budget.
    while m >= 1 and budget(m) < m:
        m -= 1
    while m >= 0 and budget(m + 1) >= m + 1:
        m += 1
    return max(m, 0)
