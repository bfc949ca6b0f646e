"""Truncated variational EM on weighted coresets (vc-GMM).

The E-step only evaluates distances from a point to clusters in the union of
the neighborhoods of its current index set, so its cost per iteration is
independent of the number of clusters.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .coreset import LwcsConfig, build_lightweight_coreset, identity_coreset
from .errors import ConfigError, NumericalAbort
from .instrument import DistanceCounter, PhaseTimer
from .model import (GmmParams, TruncatedState, WeightedCoreset, merged_objective,
                    quantization_error, responsibilities, sq_dists_to_sets)
from .report import RunReport
from .seeding import SeedingConfig, afkmc2_seed

_ESTEP_CHUNK = 4096


@dataclass(frozen=True)
class VcGmmConfig:
    c_prime: int = 5
    g_size: int = 5
    plus_one_random: bool = False
    n_initial_esteps: int = 0
    convergence_epsilon: float = 1e-4
    max_iterations: int = 500
    rng_seed: int = 0
    n_workers: int = 1

    def check(self, n_clusters: int) -> None:
        if not 1 <= self.c_prime <= n_clusters:
            raise ConfigError(f"c_prime must lie in [1, {n_clusters}], got {self.c_prime}")
        if not 1 <= self.g_size <= n_clusters:
            raise ConfigError(f"g_size must lie in [1, {n_clusters}], got {self.g_size}")
        if not self.convergence_epsilon > 0:
            raise ConfigError("convergence_epsilon must be positive")
        if self.max_iterations < 0 or self.n_initial_esteps < 0:
            raise ConfigError("iteration counts must be non-negative")
        if self.n_workers < 1:
            raise ConfigError("need at least one worker")


def variance_floor(points: np.ndarray) -> float:
    return 1e-12 * (float(np.mean(np.einsum("ij,ij->i", points, points))) + 1.0)


def init_state(n_core: int, n_clusters: int, c_prime: int, g_size: int,
               rng: np.random.Generator) -> TruncatedState:
    """Random index sets: ``c_prime`` distinct clusters per point and, per
    cluster, itself plus ``g_size - 1`` distinct random others."""
    k_sets = np.empty((n_core, c_prime), dtype=np.int64)
    for start in range(0, n_core, _ESTEP_CHUNK):
        stop = min(start + _ESTEP_CHUNK, n_core)
        keys = rng.random((stop - start, n_clusters))
        k_sets[start:stop] = np.argsort(keys, axis=1)[:, :c_prime]
    keys = rng.random((n_clusters, n_clusters))
    np.fill_diagonal(keys, -1.0)
    g_sets = np.argsort(keys, axis=1)[:, :g_size].astype(np.int64)
    return TruncatedState(k_sets=k_sets, g_sets=g_sets)


def _search_spaces(state: TruncatedState, plus_one: bool, rng: np.random.Generator):
    """Candidate matrix: row n lists the union of neighborhoods of K(n), with
    duplicates replaced by the sentinel ``C`` and optionally one extra cluster
    drawn uniformly from those not yet present."""
    n_clusters = state.n_clusters
    cand = state.g_sets[state.k_sets].reshape(state.n_core, -1)
    cand.sort(axis=1)
    dup = np.zeros(cand.shape, dtype=bool)
    dup[:, 1:] = cand[:, 1:] == cand[:, :-1]
    cand[dup] = n_clusters
    if not plus_one:
        return cand
    size = cand.shape[1] - dup.sum(axis=1)
    r = rng.integers(0, np.maximum(n_clusters - size, 1))
    # r-th cluster index absent from the (ascending, sentinel-padded) row
    for j in range(cand.shape[1]):
        r += cand[:, j] <= r
    r[size >= n_clusters] = n_clusters
    return np.column_stack([cand, r])


def _rank_candidates(points, means_pad, cand, n_clusters):
    diff = points[:, None, :] - means_pad[cand]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    d[cand >= n_clusters] = np.inf
    # ascending distance, lower cluster index first on ties
    order = np.lexsort((cand, d), axis=1)
    return np.take_along_axis(cand, order, axis=1), np.take_along_axis(d, order, axis=1)


def _update_neighborhoods(state: TruncatedState, labels, cs, ds, n_valid):
    """Cluster-to-cluster distance estimates and the new neighborhoods."""
    n_clusters, g_size = state.n_clusters, state.g_size
    valid = np.arange(cs.shape[1])[None, :] < n_valid[:, None]
    rows = np.repeat(labels, n_valid)
    keys = rows * n_clusters + cs[valid]
    ukeys, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv, weights=ds[valid])
    counts = np.bincount(inv)
    vals = sums / counts
    d_rows, d_cols = ukeys // n_clusters, ukeys % n_clusters
    own = d_rows == d_cols
    vals[own] = 0.0

    rank_key = np.where(own, -1.0, vals)
    o = np.lexsort((d_cols, rank_key, d_rows))
    r_o, c_o = d_rows[o], d_cols[o]
    starts = np.searchsorted(r_o, np.arange(n_clusters))
    rank = np.arange(o.size) - starts[r_o]
    take = rank < g_size
    g_sets = np.full((n_clusters, g_size), -1, dtype=np.int64)
    g_sets[r_o[take], rank[take]] = c_o[take]

    filled = np.bincount(r_o, minlength=n_clusters)
    for c in np.nonzero(filled < g_size)[0]:
        have = list(g_sets[c, :filled[c]])
        for prev in state.g_sets[c]:
            if len(have) == g_size:
                break
            if prev not in have:
                have.append(prev)
        g_sets[c] = have
    return g_sets, d_rows, d_cols, vals


def variational_estep(coreset: WeightedCoreset, means, state: TruncatedState,
                      cfg: VcGmmConfig, rng: np.random.Generator,
                      counter: DistanceCounter | None = None):
    """One pass of the variational loop.

    Returns the updated state and the squared distances of every point to the
    clusters of its new index set (aligned with ``k_sets``, ascending). The
    variance plays no role; ``means`` may be a :class:`GmmParams`.
    """
    means = getattr(means, "means", means)
    n_clusters, n_core = state.n_clusters, state.n_core
    c_prime = state.c_prime
    cand = _search_spaces(state, cfg.plus_one_random, rng)
    means_pad = np.vstack([means, np.zeros((1, means.shape[1]))])

    ranges = [slice(s, min(s + _ESTEP_CHUNK, n_core)) for s in range(0, n_core, _ESTEP_CHUNK)]

    def work(sl):
        return _rank_candidates(coreset.points[sl], means_pad, cand[sl], n_clusters)

    if cfg.n_workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(cfg.n_workers) as pool:
            parts = list(pool.map(work, ranges))
    else:
        parts = [work(sl) for sl in ranges]
    cs = np.concatenate([p[0] for p in parts])
    ds = np.concatenate([p[1] for p in parts])

    n_valid = (cs < n_clusters).sum(axis=1)
    if counter is not None:
        counter.charge(int(n_valid.sum()))
    labels = cs[:, 0].copy()
    g_sets, d_rows, d_cols, d_vals = _update_neighborhoods(state, labels, cs, ds, n_valid)
    new_state = TruncatedState(k_sets=cs[:, :c_prime].copy(), g_sets=g_sets, labels=labels,
                               dist_rows=d_rows, dist_cols=d_cols, dist_vals=d_vals)
    return new_state, ds[:, :c_prime].copy()


def init_sigma(coreset: WeightedCoreset, means, state: TruncatedState,
               dists: np.ndarray | None = None, var_floor: float | None = None,
               counter: DistanceCounter | None = None) -> float:
    """Variance estimate from each point's distance to its nearest cluster in K(n)."""
    means = getattr(means, "means", means)
    if dists is None:
        dists = sq_dists_to_sets(coreset.points, means, state.k_sets, counter)
    w = coreset.weights
    raw = float(w @ dists.min(axis=1)) / (coreset.dim * w.sum())
    if not np.isfinite(raw):
        raise NumericalAbort(f"initial variance estimate is non-finite ({raw}); "
                             "check the scale of the input data")
    floor = variance_floor(coreset.points) if var_floor is None else var_floor
    return max(raw, floor)


def mstep(coreset: WeightedCoreset, state: TruncatedState, resp: np.ndarray,
          old_params: GmmParams, var_floor: float | None = None,
          counter: DistanceCounter | None = None) -> GmmParams:
    """Weighted mean and shared-variance updates under truncated posteriors.

    Clusters without responsibility mass keep their previous mean. The
    residuals for the variance are charged to the ``mstep`` channel.
    """
    n_core, c_prime = resp.shape
    n_clusters = old_params.n_clusters
    w = coreset.weights[:, None] * resp
    k = state.k_sets
    mass = sp.csr_matrix((w.ravel(), (k.ravel(), np.repeat(np.arange(n_core), c_prime))),
                         shape=(n_clusters, n_core))
    denom = np.asarray(mass.sum(axis=1)).ravel()
    num = mass @ coreset.points
    means = old_params.means.copy()
    alive = denom > 0
    means[alive] = num[alive] / denom[alive, None]

    resid = sq_dists_to_sets(coreset.points, means, k)
    if counter is not None:
        counter.charge(resid.size, "mstep")
    var = float(np.sum(w * resid)) / (coreset.dim * coreset.total_weight)
    if not (np.isfinite(var) and np.all(np.isfinite(means))):
        raise NumericalAbort("M-step produced non-finite parameters; "
                             "check the scale of the input data")
    floor = variance_floor(coreset.points) if var_floor is None else var_floor
    return GmmParams(means=means, variance=max(var, floor))


def _converged(f_new: float, f_old: float, eps: float) -> bool:
    if f_new == 0.0:
        return abs(f_new - f_old) < eps
    return abs(f_new - f_old) / abs(f_new) < eps


def _checked(value: float, iteration: int) -> float:
    if not np.isfinite(value):
        raise NumericalAbort(
            f"objective became non-finite ({value}) at iteration {iteration}; "
            "check the scale of the input data")
    return value


def fit(data, coreset: WeightedCoreset, seed_means, cfg: VcGmmConfig,
        counter: DistanceCounter | None = None, timer: PhaseTimer | None = None,
        eval_data=None):
    """Run truncated variational EM from ``seed_means`` on ``coreset``.

    The first E-step starts from random index sets and defines the initial
    variance. Further optional E-steps run before the first M-step. Each EM
    iteration is M-step, E-step, objective (from cached distances); it stops
    once the relative change of the objective drops below the threshold.
    Quantization error is measured on ``eval_data`` (default ``data``).

    Returns ``(params, state, report)``.
    """
    seed_means = np.asarray(seed_means, dtype=np.float64)
    n_clusters = seed_means.shape[0]
    cfg.check(n_clusters)
    counter = DistanceCounter() if counter is None else counter
    timer = PhaseTimer() if timer is None else timer
    rng = np.random.default_rng(cfg.rng_seed)
    floor = variance_floor(coreset.points)

    with timer.phase("init"), counter.phase("estep"):
        state = init_state(coreset.n_core, n_clusters, cfg.c_prime, cfg.g_size, rng)
        state, dists = variational_estep(coreset, seed_means, state, cfg, rng, counter)
        var = init_sigma(coreset, seed_means, state, dists, floor)
        for _ in range(cfg.n_initial_esteps):
            state, dists = variational_estep(coreset, seed_means, state, cfg, rng, counter)
        params = GmmParams(seed_means, var)
        trace = [_checked(merged_objective(coreset, params, state, dists), 0)]

    converged = False
    with timer.phase("em"), counter.phase("estep"):
        for it in range(1, cfg.max_iterations + 1):
            resp = responsibilities(dists, params.variance)
            params = mstep(coreset, state, resp, params, floor, counter)
            state, dists = variational_estep(coreset, params.means, state, cfg, rng, counter)
            trace.append(_checked(merged_objective(coreset, params, state, dists), it))
            if _converged(trace[-1], trace[-2], cfg.convergence_epsilon):
                converged = True
                break

    target = data if eval_data is None else eval_data
    with timer.phase("evaluation"), counter.phase("evaluation"):
        q = quantization_error(target, params.means, counter)

    report = RunReport(
        algorithm="vc-gmm",
        objective_trace=[float(f) for f in trace],
        distance_counts=counter.as_dict(),
        wall_times=dict(timer.times),
        n_iterations=len(trace) - 1,
        converged=converged,
        final_quantization_error=q,
        final_variance=params.variance,
        config_echo={"em": asdict(cfg), "n_clusters": n_clusters},
    )
    return params, state, report


def vc_gmm_fit(data, seeding_cfg: SeedingConfig, cfg: VcGmmConfig,
               lwcs_cfg: LwcsConfig | None = None, eval_data=None):
    """Complete pipeline: coreset, AFK-MC^2 seeding on it, then :func:`fit`.

    Without ``lwcs_cfg`` the identity coreset is used, which is the
    coreset-free variant.
    """
    counter, timer = DistanceCounter(), PhaseTimer()
    with timer.phase("coreset"), counter.phase("coreset"):
        if lwcs_cfg is None:
            coreset = identity_coreset(data)
        else:
            coreset = build_lightweight_coreset(data, lwcs_cfg, counter)
    with timer.phase("seeding"), counter.phase("seeding"):
        seeds = afkmc2_seed(coreset, seeding_cfg, counter)
    params, state, report = fit(data, coreset, seeds, cfg, counter, timer, eval_data)
    report.algorithm = "vc-gmm" if lwcs_cfg is not None else "var-gmm-s"
    report.config_echo.update(
        seeding=asdict(seeding_cfg),
        lwcs=None if lwcs_cfg is None else asdict(lwcs_cfg),
    )
    return params, state, report
