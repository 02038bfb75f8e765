from __future__ import annotations

import itertools

import numpy as np
import pytest

from fkcoupling import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once, before any timed test runs."""
    _kernels.warmup_kernels()


def brute_force_vertices(dim, side, rotation, center=None, tol=1e-9):
    """Independent membership scan over a generous window."""
    if center is None:
        center = np.zeros(dim)
    center = np.asarray(center, float)
    reach = int(np.ceil(np.sqrt(dim) * side / 2 + 2))
    lo = np.floor(center - reach).astype(int)
    hi = np.ceil(center + reach).astype(int)
    out = []
    for pt in itertools.product(*(range(lo[i], hi[i] + 1) for i in range(dim))):
        rel = np.asarray(pt, float) - center
        if np.max(np.abs(np.asarray(rotation, float).T @ rel)) <= side / 2 + tol:
            out.append(tuple(pt))
    return sorted(out)


def brute_force_star_count(dim):
    """Count lattice-edge midpoints within L-inf distance 1 of a reference
    edge midpoint, via the half-integer-coordinate characterization."""
    m0 = np.zeros(dim)
    m0[0] = 0.5
    count = 0
    for axis in range(dim):
        for base in itertools.product(range(-3, 4), repeat=dim):
            mid = np.asarray(base, float)
            mid[axis] += 0.5
            if np.allclose(mid, m0):
                continue
            if np.max(np.abs(mid - m0)) <= 1 + 1e-12:
                count += 1
    return count


def all_simple_star_paths_from(box, closed_ids, start, n_max):
    """Exhaustive longest-simple-path search (test oracle)."""
    closed = sorted(int(e) for e in closed_ids)
    mids = {e: box.midpoints[e] for e in closed}
    adj = {
        e: [
            f
            for f in closed
            if f != e and np.max(np.abs(mids[e] - mids[f])) <= 1 + 1e-12
        ]
        for e in closed
    }
    best = 0

    def rec(node, used, depth):
        nonlocal best
        best = max(best, depth)
        if depth >= n_max:
            return
        for nb in adj[node]:
            if nb not in used:
                used.add(nb)
                rec(nb, used, depth + 1)
                used.discard(nb)

    rec(start, {start}, 1)
    return min(best, n_max)
