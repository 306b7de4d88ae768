"""Per-trial random streams.

Every Monte Carlo trial derives its generators from ``(master_seed, trial,
purpose, ...)`` so results do not depend on how trials are split across
workers, and every scheme in a trial sees the same draws.
"""

import numpy as np

CHANNEL = 0
CODEBOOK = 1
ERROR = 2
SAA = 3
COMMON = 4
INIT = 5
GROUPING = 6


def trial_rng(seed, trial, purpose, *extra):
    words = [int(seed), int(trial), int(purpose)] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(words))
