"""Initial cluster means: AFK-MC^2, exact D^2 (k-means++) and uniform seeding.

All seeders are exemplar based: every returned mean is a copy of an input row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coreset import sample_inverse_cdf
from .errors import ConfigError
from .instrument import DistanceCounter
from .model import WeightedCoreset, check_data, sq_dists_to_point


@dataclass(frozen=True)
class SeedingConfig:
    n_clusters: int
    chain_length: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError("need at least one cluster")
        if self.chain_length < 1:
            raise ConfigError("chain length must be at least 1")


def afkmc2_proposal(coreset: WeightedCoreset, first: np.ndarray,
                    counter: DistanceCounter | None = None) -> np.ndarray:
    """Half weighted-D^2 to the first center, half weighted-uniform."""
    w = coreset.weights
    wd2 = w * sq_dists_to_point(coreset.points, first, counter)
    uniform = w / w.sum()
    total = wd2.sum()
    if np.isfinite(total) and total > 0:
        return 0.5 * wd2 / total + 0.5 * uniform
    return uniform


def acceptance_probability(d_cur: float, q_cur: float, d_prop: float, q_prop: float) -> float:
    """Metropolis acceptance for moving the chain from the current state to a
    proposal, given squared distances to the nearest chosen center and
    proposal masses."""
    if d_cur == 0.0:
        # current state sits on a center: any positive-distance move wins
        return 1.0 if d_prop > 0.0 else 0.0
    # quotient of quotients: the product form underflows for subnormal distances
    return min(1.0, (d_prop / d_cur) * (q_cur / q_prop))


def _min_dists(cand: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = cand[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)


def afkmc2_seed(coreset: WeightedCoreset, cfg: SeedingConfig,
                counter: DistanceCounter | None = None) -> np.ndarray:
    """Assumption-free MCMC approximation of D^2 seeding on a weighted coreset.

    The first center is drawn proportionally to the weights. Every further
    center is the final state of a Metropolis chain of ``chain_length`` draws
    from the fixed proposal; the first draw initializes the chain. Each draw
    costs one distance evaluation per already chosen center.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    pts = coreset.points
    n_clusters = cfg.n_clusters
    m = cfg.chain_length

    first = sample_inverse_cdf(coreset.weights, 1, rng)[0]
    centers = np.empty((n_clusters, coreset.dim))
    centers[0] = pts[first]
    if n_clusters == 1:
        return centers
    q = afkmc2_proposal(coreset, centers[0], counter)

    for k in range(1, n_clusters):
        cand = sample_inverse_cdf(q, m, rng)
        d = _min_dists(pts[cand], centers[:k])
        if counter is not None:
            counter.charge(m * k)
        u = rng.random(m)
        x, dx, qx = cand[0], d[0], q[cand[0]]
        for j in range(1, m):
            y, dy, qy = cand[j], d[j], q[cand[j]]
            if u[j] < acceptance_probability(dx, qx, dy, qy):
                x, dx, qx = y, dy, qy
        centers[k] = pts[x]
    return centers


def dsquared_seed(data, cfg: SeedingConfig, counter: DistanceCounter | None = None,
                  weights: np.ndarray | None = None) -> np.ndarray:
    """Exact D^2 seeding: each next center drawn proportionally to its squared
    distance to the nearest chosen one. Charges N distances per added center."""
    data = check_data(data)
    rng = np.random.default_rng(cfg.rng_seed)
    n = data.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    centers = np.empty((cfg.n_clusters, data.shape[1]))
    idx = sample_inverse_cdf(w, 1, rng)[0]
    centers[0] = data[idx]
    mind = None
    for k in range(1, cfg.n_clusters):
        d = sq_dists_to_point(data, centers[k - 1], counter)
        mind = d if mind is None else np.minimum(mind, d)
        mass = w * mind
        if mass.sum() > 0:
            idx = sample_inverse_cdf(mass, 1, rng)[0]
        else:
            idx = sample_inverse_cdf(w, 1, rng)[0]
        centers[k] = data[idx]
    return centers


def uniform_seed(data, cfg: SeedingConfig) -> np.ndarray:
    """Centers at distinct uniformly chosen rows (with replacement if C > N)."""
    data = check_data(data)
    rng = np.random.default_rng(cfg.rng_seed)
    n = data.shape[0]
    idx = rng.choice(n, size=cfg.n_clusters, replace=cfg.n_clusters > n)
    return data[idx].copy()
