"""Small estimators shared by the sampling modules."""

import numpy as np

JACKKNIFE_BLOCKS = 32


def jackknife_mean(values, n_blocks=JACKKNIFE_BLOCKS):
    """Sample mean with a delete-one-block jackknife standard error.

    Blocks are contiguous, so correlation inside a block (e.g. along one
    backward strand) is absorbed into the error estimate.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    mean = float(x.mean())
    b = min(n_blocks, n)
    if b < 2:
        return mean, float("nan")
    bounds = np.linspace(0, n, b + 1).astype(int)
    sums = np.add.reduceat(x, bounds[:-1])
    counts = np.diff(bounds)
    loo = (x.sum() - sums) / (n - counts)
    var = (b - 1) / b * np.sum((loo - loo.mean()) ** 2)
    return mean, float(np.sqrt(var))


class KahanSum:
    """Lane-wise compensated summation of float arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, x):
        y = x - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
