"""Synthetic datasets with known component centers."""

from __future__ import annotations

import numpy as np


def _separated_centers(rng, n, dim, side, min_dist, attempts=1000):
    while True:
        centers = np.empty((n, dim))
        for k in range(n):
            for _ in range(attempts):
                c = rng.uniform(-side / 2, side / 2, size=dim)
                if k == 0 or np.min(np.sum((centers[:k] - c) ** 2, axis=1)) >= min_dist ** 2:
                    centers[k] = c
                    break
            else:
                break
        else:
            return centers
        side *= 1.1


def gaussian_blobs(n_points: int, dim: int, n_components: int, *, sigma: float = 1.0,
                   separation: float = 10.0, noise_fraction: float = 0.0, seed: int = 0):
    """Isotropic Gaussian components plus optional uniform background noise.

    Centers are drawn uniformly in a cube of side
    ``separation * sigma * n_components ** (1 / dim)`` and rejected while
    closer than ``separation * sigma`` to an earlier center; the cube grows
    when the centers do not fit. Noise points are uniform over the bounding
    box of the centers (widened by ``3 sigma``) and labelled ``-1``.

    Returns ``(data, labels, centers)``.
    """
    rng = np.random.default_rng(seed)
    min_dist = separation * sigma
    side = min_dist * max(n_components, 2) ** (1.0 / dim)
    centers = _separated_centers(rng, n_components, dim, side, min_dist)
    n_noise = int(round(noise_fraction * n_points))
    n_signal = n_points - n_noise
    labels = rng.integers(0, n_components, size=n_signal)
    signal = centers[labels] + sigma * rng.standard_normal((n_signal, dim))
    lo, hi = centers.min(axis=0) - 3 * sigma, centers.max(axis=0) + 3 * sigma
    noise = rng.uniform(lo, hi, size=(n_noise, dim))
    data = np.vstack([signal, noise])
    labels = np.concatenate([labels, np.full(n_noise, -1)])
    perm = rng.permutation(n_points)
    return data[perm], labels[perm], centers


def gmm_sample(n_points: int, means: np.ndarray, variance: float, seed: int = 0):
    """Draw from the equal-weight isotropic mixture with the given means."""
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=np.float64)
    labels = rng.integers(0, means.shape[0], size=n_points)
    data = means[labels] + np.sqrt(variance) * rng.standard_normal((n_points, means.shape[1]))
    return data, labels
