"""Single source of randomness for the whole package.

Every stochastic component (parameter init, dropout masks, sampled checks)
draws from a generator produced here from one explicit 64-bit seed. The
bit generator is numpy's PCG64, so identical seeds give identical streams
on every platform.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """A PCG64-backed generator seeded with exactly ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed)))
