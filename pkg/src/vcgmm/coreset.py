"""Lightweight coresets built in two passes over the data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .instrument import DistanceCounter
from .model import WeightedCoreset, check_data, sq_dists_to_point


@dataclass(frozen=True)
class LwcsConfig:
    target_size: int
    rng_seed: int = 0

    def check(self, n_points: int) -> None:
        if not 1 <= self.target_size <= n_points:
            raise ConfigError(
                f"coreset size must lie in [1, {n_points}], got {self.target_size}")


def data_mean(data) -> np.ndarray:
    """Arithmetic mean of the rows."""
    data = np.asarray(data, dtype=np.float64)
    return data.mean(axis=0)


def lwcs_proposal(data: np.ndarray, counter: DistanceCounter | None = None) -> np.ndarray:
    """Sampling distribution mixing uniform mass with squared distance to the mean.

    ``q(n) = 1/(2N) + d(n)^2 / (2 sum_m d(m)^2)``; falls back to uniform when
    every point coincides with the mean.
    """
    n = data.shape[0]
    d2 = sq_dists_to_point(data, data_mean(data), counter)
    total = d2.sum()
    if np.isfinite(total) and total > 0:
        return 0.5 / n + 0.5 * d2 / total
    return np.full(n, 1.0 / n)


def sample_inverse_cdf(prob: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` indices i.i.d. from ``prob`` by CDF inversion.

    Returns the first index whose cumulative mass strictly exceeds the
    uniform draw, so ties resolve to the lower index and zero-mass entries
    are never returned.
    """
    cdf = np.cumsum(prob)
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, prob.size - 1)


def build_lightweight_coreset(data, cfg: LwcsConfig,
                              counter: DistanceCounter | None = None) -> WeightedCoreset:
    """Sample a weighted coreset of ``cfg.target_size`` rows with replacement.

    Each draw carries weight ``1 / (N' q(n))`` so that weighted sums over the
    coreset are unbiased for sums over the full data. The mean pass is free;
    the second pass charges one distance per point.
    """
    data = check_data(data)
    cfg.check(data.shape[0])
    rng = np.random.default_rng(cfg.rng_seed)
    q = lwcs_proposal(data, counter)
    idx = sample_inverse_cdf(q, cfg.target_size, rng)
    weights = 1.0 / (cfg.target_size * q[idx])
    return WeightedCoreset(points=data[idx], weights=weights, indices=idx)


def identity_coreset(data) -> WeightedCoreset:
    """All rows with unit weight; turns the coreset objective into the full one."""
    data = check_data(data)
    n = data.shape[0]
    return WeightedCoreset(points=data, weights=np.ones(n), indices=np.arange(n))
