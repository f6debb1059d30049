"""Counter-style random streams.

Every random draw in the package comes from a generator keyed by the master
seed plus a tuple of integers (stream purpose, epoch, chain index, ...).
Because the key fully determines the stream, results do not depend on the
order in which chains are processed or on how many workers process them.
"""
import numpy as np

PARAMS = 0
FREE = 1
CLAMP = 2
BATCH = 3
EVAL = 4
RECON = 5
GRID = 6
PROBE = 7
DATA = 8
PICK = 9


def stream(seed, *key):
    """Return a ``numpy.random.Generator`` for ``(seed, *key)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def normal_rows(seed, key, rows, widths):
    """Standard-normal initial conditions, one independent stream per row.

    ``rows`` is an iterable of global row (chain) indices. Returns one
    ``(len(rows), w)`` array per entry of ``widths``; row ``r`` is drawn from
    ``stream(seed, *key, r)``, layer by layer in the order given.
    """
    rows = list(rows)
    out = [np.empty((len(rows), w)) for w in widths]
    for i, r in enumerate(rows):
        g = stream(seed, *key, r)
        for arr, w in zip(out, widths):
            arr[i] = g.standard_normal(w)
    return out
