"""Independent high-precision oracles used to freeze expected values.

Everything here goes through mpmath at 40 significant digits and plain
bisection, deliberately sharing no code with the package's own
implementations.
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 40


def phi(x) -> mp.mpf:
    """Standard normal CDF via the complementary error function."""
    return mp.mpf(1) / 2 * mp.erfc(-mp.mpf(x) / mp.sqrt(2))


def phi_inv(p, lo=-40, hi=40) -> mp.mpf:
    """Quantile by bisection on :func:`phi`."""
    target = mp.mpf(p)
    a, b = mp.mpf(lo), mp.mpf(hi)
    for _ in range(200):
        mid = (a + b) / 2
        if phi(mid) <= target:
            a = mid
        else:
            b = mid
    return (a + b) / 2


def cp_lower(k: int, n: int, alpha) -> mp.mpf:
    """Clopper-Pearson lower bound by bisection on the regularized
    incomplete beta function."""
    alpha = mp.mpf(alpha)
    if k == 0:
        return mp.mpf(0)
    if k == n:
        return alpha ** (mp.mpf(1) / n)
    a, b = mp.mpf(0), mp.mpf(1)
    for _ in range(200):
        mid = (a + b) / 2
        if mp.betainc(k, n - k + 1, 0, mid, regularized=True) <= alpha:
            a = mid
        else:
            b = mid
    return (a + b) / 2
