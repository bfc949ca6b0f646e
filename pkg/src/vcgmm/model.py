"""Isotropic Gaussian mixture: data types, distance kernels and objectives.

The model has ``C`` means, one shared variance per dimension and uniform
mixing weights ``1/C``. All distances are squared Euclidean distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .instrument import DistanceCounter

LOG_2PI = float(np.log(2.0 * np.pi))

# rows per block in the exact nearest-center sweep
_CHUNK = 2048


def check_data(values, name: str = "data") -> np.ndarray:
    """Return ``values`` as a finite, C-contiguous float64 (N, D) array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractViolation(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        row, col = np.argwhere(~np.isfinite(arr))[0]
        raise ContractViolation(f"{name} has a non-finite value at row {row}, column {col}")
    return arr


@dataclass(frozen=True)
class WeightedCoreset:
    """Weighted subset of a data matrix.

    ``points`` holds copies (or a view) of the selected rows, ``weights`` the
    positive weight of each entry and ``indices`` the source row of each
    entry. Duplicated source rows are allowed.
    """

    points: np.ndarray
    weights: np.ndarray
    indices: np.ndarray | None = None

    def __post_init__(self):
        pts = check_data(self.points, "coreset points")
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise ContractViolation("need exactly one weight per coreset point")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ContractViolation("coreset weights must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.indices is not None:
            idx = np.asarray(self.indices, dtype=np.int64)
            if idx.shape != w.shape:
                raise ContractViolation("need exactly one source index per coreset point")
            object.__setattr__(self, "indices", idx)

    @property
    def n_core(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class GmmParams:
    """Means ``(C, D)`` and the shared isotropic variance."""

    means: np.ndarray
    variance: float

    def __post_init__(self):
        means = check_data(self.means, "means")
        var = float(self.variance)
        if not (np.isfinite(var) and var > 0):
            raise ContractViolation(f"variance must be positive and finite, got {var!r}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variance", var)

    @property
    def n_clusters(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class TruncatedState:
    """Variational index sets of the truncated E-step.

    Attributes
    ----------
    k_sets : (N', C') int array
        Per point the clusters currently considered, ordered by increasing
        distance after an E-step.
    g_sets : (C, G) int array
        Per cluster its estimated neighborhood; column 0 is the cluster itself.
    labels : (N',) int array
        Nearest found cluster per point; defines the partition sets.
    dist_rows, dist_cols, dist_vals : 1-D arrays
        Sparse estimated cluster-to-cluster squared distances, sorted by
        ``(row, col)``. Missing pairs are +inf.
    """

    k_sets: np.ndarray
    g_sets: np.ndarray
    labels: np.ndarray | None = None
    dist_rows: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dist_cols: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dist_vals: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))

    @property
    def n_core(self) -> int:
        return self.k_sets.shape[0]

    @property
    def c_prime(self) -> int:
        return self.k_sets.shape[1]

    @property
    def n_clusters(self) -> int:
        return self.g_sets.shape[0]

    @property
    def g_size(self) -> int:
        return self.g_sets.shape[1]

    def partition(self) -> list[np.ndarray]:
        """Point indices of each partition set, one array per cluster."""
        if self.labels is None:
            raise ContractViolation("partition is only defined after an E-step")
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.n_clusters + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.n_clusters)]

    def cluster_distance(self, c: int, c2: int) -> float:
        n_clusters = self.n_clusters
        keys = self.dist_rows * n_clusters + self.dist_cols
        key = c * n_clusters + c2
        pos = np.searchsorted(keys, key)
        if pos < keys.size and keys[pos] == key:
            return float(self.dist_vals[pos])
        return float("inf")

    def search_space(self, n: int) -> np.ndarray:
        """Sorted union of the neighborhoods of the clusters in ``k_sets[n]``."""
        return np.unique(self.g_sets[self.k_sets[n]])

    def n_elements(self) -> int:
        """Number of stored index/distance elements (memory accounting)."""
        n = self.k_sets.size + self.g_sets.size + self.dist_vals.size * 3
        if self.labels is not None:
            n += self.labels.size
        return int(n)

    def validate(self) -> None:
        n_clusters = self.n_clusters
        for name, arr in (("k_sets", self.k_sets), ("g_sets", self.g_sets)):
            if arr.size and (arr.min() < 0 or arr.max() >= n_clusters):
                raise ContractViolation(f"{name} references a cluster outside [0, {n_clusters})")
            srt = np.sort(arr, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise ContractViolation(f"{name} rows must hold distinct clusters")
        if not 1 <= self.c_prime <= n_clusters or not 1 <= self.g_size <= n_clusters:
            raise ContractViolation("set sizes must lie in [1, C]")
        if np.any(self.g_sets[:, 0] != np.arange(n_clusters)):
            raise ContractViolation("every neighborhood must start with its own cluster")


# ---------------------------------------------------------------------------
# distance kernels


def squared_distance(x, y, counter: DistanceCounter | None = None) -> float:
    """Squared Euclidean distance between two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ContractViolation(f"dimension mismatch: {x.size} vs {y.size}")
    if counter is not None:
        counter.charge(1)
    diff = x - y
    return float(diff @ diff)


def sq_dists_to_point(points: np.ndarray, center: np.ndarray,
                      counter: DistanceCounter | None = None) -> np.ndarray:
    """Squared distances from every row of ``points`` to ``center``."""
    diff = points - center
    if counter is not None:
        counter.charge(points.shape[0])
    return np.einsum("ij,ij->i", diff, diff)


def sq_dists_to_sets(points: np.ndarray, means: np.ndarray, sets: np.ndarray,
                     counter: DistanceCounter | None = None) -> np.ndarray:
    """Squared distances ``d[n, j] = |points[n] - means[sets[n, j]]|^2``."""
    diff = points[:, None, :] - means[sets]
    if counter is not None:
        counter.charge(sets.size)
    return np.einsum("ijk,ijk->ij", diff, diff)


def nearest_centers(points: np.ndarray, means: np.ndarray,
                    counter: DistanceCounter | None = None):
    """Exact nearest mean per row (lowest index on ties) and its distance.

    Evaluates every point-to-mean pair by explicit differences, in blocks of
    rows, so the result carries no expansion round-off.
    """
    points = np.asarray(points, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        block = points[start:start + _CHUNK]
        diff = block[:, None, :] - means[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        lab = np.argmin(d, axis=1)
        labels[start:start + _CHUNK] = lab
        mind[start:start + _CHUNK] = d[np.arange(block.shape[0]), lab]
    if counter is not None:
        counter.charge(n * means.shape[0])
    return labels, mind


def quantization_error(data, means, counter: DistanceCounter | None = None) -> float:
    """Sum over points of the squared distance to the nearest mean (exact)."""
    _, mind = nearest_centers(np.asarray(data, dtype=np.float64), means, counter)
    return float(mind.sum())


# ---------------------------------------------------------------------------
# posteriors and objectives


def _log_sum_exp_neg(d: np.ndarray, variance: float) -> np.ndarray:
    """Row-wise ``log sum_j exp(-d[:, j] / (2 variance))`` evaluated stably."""
    dmin = d.min(axis=1)
    scaled = (d - dmin[:, None]) / (2.0 * variance)
    return -dmin / (2.0 * variance) + np.log(np.exp(-scaled).sum(axis=1))


def responsibilities(dists: np.ndarray, variance: float) -> np.ndarray:
    """Truncated posteriors from per-point distances to their index sets.

    ``dists`` has shape (N', C'); the result has the same shape and each row
    sums to one.
    """
    dists = np.atleast_2d(dists)
    scaled = (dists - dists.min(axis=1, keepdims=True)) / (2.0 * variance)
    s = np.exp(-scaled)
    s /= s.sum(axis=1, keepdims=True)
    return s


def truncated_responsibilities(point, params: GmmParams, k_set, dists=None,
                               counter: DistanceCounter | None = None) -> dict[int, float]:
    """Posterior weights of one point over the clusters in ``k_set``.

    Clusters outside ``k_set`` have weight zero and are omitted. Pass
    ``dists`` (squared distances aligned with ``k_set``) to reuse cached
    values; otherwise they are evaluated and charged to ``counter``.
    """
    k_set = np.asarray(k_set, dtype=np.int64).ravel()
    if k_set.size == 0:
        raise ContractViolation("k_set must not be empty")
    if dists is None:
        point = np.asarray(point, dtype=np.float64).ravel()
        dists = sq_dists_to_point(params.means[k_set], point, counter)
    s = responsibilities(np.asarray(dists, dtype=np.float64)[None, :], params.variance)[0]
    return {int(c): float(v) for c, v in zip(k_set, s)}


def log_normalizer(total_weight: float, n_clusters: int, dim: int, variance: float) -> float:
    """Constant ``-W log C - (W D / 2) log(2 pi sigma^2)`` for total weight ``W``."""
    return -total_weight * np.log(n_clusters) - 0.5 * total_weight * dim * (
        LOG_2PI + np.log(variance))


def _check_sets(sets: np.ndarray, n_clusters: int) -> None:
    if sets.size and (sets.min() < 0 or sets.max() >= n_clusters):
        raise ContractViolation(f"index set references a cluster outside [0, {n_clusters})")


def point_log_joints(coreset: WeightedCoreset, params: GmmParams, k_sets: np.ndarray,
                     dists: np.ndarray | None = None,
                     counter: DistanceCounter | None = None) -> np.ndarray:
    """Per-point ``log sum_{c in K(n)} p(c, y(n))`` (unweighted)."""
    k_sets = np.asarray(k_sets, dtype=np.int64)
    _check_sets(k_sets, params.n_clusters)
    if dists is None:
        dists = sq_dists_to_sets(coreset.points, params.means, k_sets, counter)
    const = -np.log(params.n_clusters) - 0.5 * params.dim * (LOG_2PI + np.log(params.variance))
    return _log_sum_exp_neg(dists, params.variance) + const


def merged_objective(coreset: WeightedCoreset, params: GmmParams, state: TruncatedState,
                     dists: np.ndarray | None = None,
                     counter: DistanceCounter | None = None) -> float:
    """Coreset-weighted truncated variational bound ``F(K, Theta)``.

    ``sum_n w_n log sum_{c in K(n)} p(c, y(n) | Theta)``, normalizing constant
    included. With ``dists`` taken from the E-step cache no distances are
    evaluated.
    """
    k_sets = np.asarray(state.k_sets, dtype=np.int64)
    _check_sets(k_sets, params.n_clusters)
    if k_sets.shape[0] != coreset.n_core:
        raise ContractViolation("state and coreset disagree on the number of points")
    if dists is None:
        dists = sq_dists_to_sets(coreset.points, params.means, k_sets, counter)
    lse = _log_sum_exp_neg(dists, params.variance)
    return float(coreset.weights @ lse) + log_normalizer(
        coreset.total_weight, params.n_clusters, params.dim, params.variance)


def coreset_log_likelihood(coreset: WeightedCoreset, params: GmmParams,
                           counter: DistanceCounter | None = None) -> float:
    """Exact weighted log-likelihood over all ``C`` clusters, O(N' C D)."""
    total = 0.0
    pts = coreset.points
    for start in range(0, coreset.n_core, _CHUNK):
        block = pts[start:start + _CHUNK]
        diff = block[:, None, :] - params.means[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        total += float(coreset.weights[start:start + _CHUNK] @ _log_sum_exp_neg(d, params.variance))
    if counter is not None:
        counter.charge(coreset.n_core * params.n_clusters)
    return total + log_normalizer(coreset.total_weight, params.n_clusters, params.dim,
                                  params.variance)


def explicit_bound(coreset: WeightedCoreset, params: GmmParams, k_sets: np.ndarray,
                   resp: np.ndarray) -> float:
    """Bound with free posteriors: ``sum w sum_c s log(p(c, y) / s)``.

    ``resp`` is aligned with ``k_sets``; zero entries contribute nothing.
    Maximal over ``resp`` when ``resp`` are the truncated posteriors.
    """
    k_sets = np.asarray(k_sets, dtype=np.int64)
    _check_sets(k_sets, params.n_clusters)
    d = sq_dists_to_sets(coreset.points, params.means, k_sets)
    log_joint = (-d / (2.0 * params.variance) - np.log(params.n_clusters)
                 - 0.5 * params.dim * (LOG_2PI + np.log(params.variance)))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(resp > 0, resp * (log_joint - np.log(resp)), 0.0)
    return float(coreset.weights @ terms.sum(axis=1))


def kl_gap(coreset: WeightedCoreset, params: GmmParams, k_sets: np.ndarray) -> float:
    """Diagnostic: weighted KL divergence of truncated from full posteriors.

    Equals ``coreset_log_likelihood - merged_objective`` for the same sets.
    """
    k_sets = np.asarray(k_sets, dtype=np.int64)
    d_all = sq_dists_to_sets(coreset.points, params.means,
                             np.broadcast_to(np.arange(params.n_clusters),
                                             (coreset.n_core, params.n_clusters)))
    d_k = np.take_along_axis(d_all, k_sets, axis=1)
    # log q - log p(c|y) = log Z_full - log Z_K on the support of q
    gap = _log_sum_exp_neg(d_all, params.variance) - _log_sum_exp_neg(d_k, params.variance)
    return float(coreset.weights @ gap)
