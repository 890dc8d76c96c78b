"""Small synthetic datasets used in tests, the acceptance suite and ``gen``."""

from __future__ import annotations

import numpy as np

from .core import DataTable
from .exceptions import ConfigurationError


def _leaf_counts(n, n_leaves):
    counts = np.full(n_leaves, n // n_leaves)
    counts[: n % n_leaves] += 1
    return counts


def make_nested_blobs(n: int = 60, n_blobs: int = 4, levels: int = 2, seed: int = 0,
                      branching: int = 2, radius: float = 10.0, shrink: float = 0.25,
                      noise: float = 0.6) -> DataTable:
    """Planar Gaussian blobs with sub-blobs nested inside them.

    The ``n_blobs`` top-level centres sit on a circle of ``radius`` around
    the origin. Every further level replaces each centre by ``branching``
    children on a circle ``shrink`` times smaller around it, so there are
    ``n_blobs * branching ** (levels - 1)`` leaf blobs. Points are split as
    evenly as possible between leaves (earlier leaves take the remainder)
    and jittered with isotropic noise of standard deviation ``noise``.

    Parameters
    ----------
    n : int
        Number of points, at least the number of leaf blobs.
    n_blobs : int
        Number of top-level blobs.
    levels : int
        Nesting depth; 1 gives plain blobs.
    seed : int
        Seed for every random choice (rotations and noise).
    """
    if levels < 1 or branching < 1:
        raise ConfigurationError("levels and branching must be >= 1")
    n_leaves = n_blobs * branching ** (levels - 1)
    if n_blobs < 1 or n < n_leaves:
        raise ConfigurationError(f"need n >= {n_leaves} leaf blobs >= 1, got n={n}")
    rng = np.random.default_rng(seed)
    centres = np.zeros((1, 2))
    r = radius
    for level in range(levels):
        b = n_blobs if level == 0 else branching
        children = []
        for c in centres:
            ang = rng.uniform(0.0, 2.0 * np.pi) + 2.0 * np.pi * np.arange(b) / b
            children.append(c + r * np.column_stack([np.cos(ang), np.sin(ang)]))
        centres = np.vstack(children)
        r *= shrink
    counts = _leaf_counts(n, n_leaves)
    pts = np.vstack([centres[k] + noise * rng.standard_normal((counts[k], 2)) for k in range(n_leaves)])
    return DataTable(pts)


def blob_labels(n: int = 60, n_blobs: int = 4, levels: int = 2, branching: int = 2) -> np.ndarray:
    """Top-level blob index of every point of :func:`make_nested_blobs`."""
    per = branching ** (levels - 1)
    leaf = np.repeat(np.arange(n_blobs * per), _leaf_counts(n, n_blobs * per))
    return leaf // per


def four_tight_pairs() -> DataTable:
    """One-dimensional points 0, 1, 100, 101, 200, 201, 300, 301."""
    return DataTable(np.array([0, 1, 100, 101, 200, 201, 300, 301], dtype=float)[:, None])


def single_gaussian(n: int = 40, dim: int = 2, seed: int = 0) -> DataTable:
    """``n`` draws from a standard normal in ``dim`` dimensions."""
    return DataTable(np.random.default_rng(seed).standard_normal((n, dim)))


def uniform_points(n: int, dim: int = 2, seed: int = 0) -> DataTable:
    """``n`` points uniform on the unit cube."""
    return DataTable(np.random.default_rng(seed).uniform(size=(n, dim)))
