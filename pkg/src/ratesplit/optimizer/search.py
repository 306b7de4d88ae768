"""Bounded scalar maximization used for power-split searches."""

import math

from ..errors import SearchError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo=0.0, hi=1.0, tol=1e-3, grid=11, max_evals=200):
    """Maximize ``f`` on ``[lo, hi]``.

    A coarse grid of ``grid`` points brackets the best cell, which is then
    refined by golden-section search until the bracket is narrower than
    ``tol``.  The grid guards against the multi-modal rate curves that arise
    when the common stream switches on.

    Returns
    -------
    (x, fx, evals)
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    cache = {}

    def F(x):
        if x not in cache:
            if len(cache) >= max_evals:
                raise SearchError(f"no convergence within {max_evals} evaluations")
            cache[x] = f(x)
        return cache[x]

    step = (hi - lo) / (grid - 1)
    xs = [lo + i * step for i in range(grid - 1)] + [hi]
    vals = [F(x) for x in xs]
    i = max(range(grid), key=lambda j: vals[j])
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    steps = 0
    while b - a > tol:
        # a tolerance below float resolution stops the bracket from shrinking
        steps += 1
        if steps > max_evals:
            raise SearchError(f"bracket did not shrink below {tol} in {max_evals} steps")
        if F(c) >= F(d):
            b, d = d, c
            c = b - INV_PHI * (b - a)
        else:
            a, c = c, d
            d = a + INV_PHI * (b - a)
    x = max(cache, key=lambda t: (cache[t], t))
    return x, cache[x], len(cache)
