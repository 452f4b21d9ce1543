import math
from pathlib import Path

import numpy as np
import pytest

from sparsespace import dense_from_triplets

GOLDEN = Path(__file__).parent / "golden"

FIXTURE_TRIPLETS = [(0, 0, 1), (0, 1, 2), (0, 3, 3), (1, 2, 4), (2, 0, 5), (2, 3, 6), (3, 1, 7), (3, 2, 8)]


@pytest.fixture
def fixture4():
    return dense_from_triplets(4, 4, FIXTURE_TRIPLETS)


@pytest.fixture
def golden():
    return GOLDEN


# ---------------------------------------------------------------------------
# Independent oracles.  These deliberately avoid the package's own code paths.


def brute_rows(a):
    """Per row, nonzero (j, value) pairs by scanning every cell."""
    out = []
    for i in range(a.n_rows):
        out.append([(j, a[i, j]) for j in range(a.n_cols) if a[i, j] != 0])
    return out


def brute_greedy(job_lengths, m):
    """Replay greedy list scheduling by scanning machines one at a time."""
    loads = [0] * m
    assign = []
    for length in job_lengths:
        best = 0
        for q in range(1, m):
            if loads[q] < loads[best]:
                best = q
        assign.append(best)
        loads[best] += length
    return assign, loads


def brute_cisr(a, m):
    """Expected per-machine (values, cols, origins, segment lengths, L) for a
    CISR encoding, built from the brute-force greedy."""
    rows = brute_rows(a)
    assign, loads = brute_greedy([len(r) for r in rows], m)
    L = max(loads)
    vals = [[] for _ in range(m)]
    cols = [[] for _ in range(m)]
    origins = [[] for _ in range(m)]
    segs = [[] for _ in range(m)]
    for i, (row, q) in enumerate(zip(rows, assign)):
        for j, v in row:
            vals[q].append(v)
            cols[q].append(j)
            origins[q].append((i, j))
        segs[q].append(len(row))
    for q in range(m):
        pad = L - loads[q]
        vals[q] += [0.0] * pad
        cols[q] += [0] * pad
        origins[q] += [None] * pad
        if segs[q]:
            segs[q][-1] += pad
        else:
            segs[q] = [pad]
    return vals, cols, origins, segs, L, assign


def brute_blocks(a, factor):
    """(row, [(j, v) or None] * factor) per block in row-major order."""
    out = []
    for i, row in enumerate(brute_rows(a)):
        for start in range(0, len(row), factor):
            chunk = row[start:start + factor]
            out.append((i, chunk + [None] * (factor - len(chunk))))
    return out


def brute_block_sums(a, x, factor):
    return [(i, sum(v * x[j] for j, v in (s for s in chunk if s is not None))) for i, chunk in brute_blocks(a, factor)]


def dense_sum_rows(a, x):
    """Row sums with Python's math.fsum: exact reference for float data."""
    return np.array([math.fsum(a[i, j] * x[j] for j in range(a.n_cols)) for i in range(a.n_rows)])
