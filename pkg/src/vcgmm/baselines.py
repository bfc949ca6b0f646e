"""Reference algorithms sharing the same instrumentation as vc-GMM."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .coreset import LwcsConfig, build_lightweight_coreset, identity_coreset
from .em import VcGmmConfig, vc_gmm_fit
from .errors import ConfigError
from .instrument import DistanceCounter, PhaseTimer
from .model import WeightedCoreset, check_data, quantization_error
from .report import RunReport
from .seeding import SeedingConfig, afkmc2_seed, dsquared_seed


@dataclass(frozen=True)
class KMeansConfig:
    n_clusters: int
    convergence_epsilon: float = 1e-4
    max_iterations: int = 500
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError("need at least one cluster")
        if not self.convergence_epsilon > 0:
            raise ConfigError("convergence_epsilon must be positive")


def _assign(points: np.ndarray, means: np.ndarray) -> np.ndarray:
    # norm expansion is only used to rank; costs are recomputed exactly below
    cross = points @ means.T
    d = np.einsum("ij,ij->i", means, means)[None, :] - 2.0 * cross
    return np.argmin(d, axis=1)


def lloyd_iterate(coreset: WeightedCoreset, means, counter: DistanceCounter | None = None):
    """One weighted Lloyd step.

    Returns ``(new_means, assignments, objective)`` where ``objective`` is the
    weighted quantization error of the *input* means. Empty clusters keep
    their mean.
    """
    means = np.asarray(means, dtype=np.float64)
    pts, w = coreset.points, coreset.weights
    n_clusters = means.shape[0]
    labels = _assign(pts, means)
    if counter is not None:
        counter.charge(pts.shape[0] * n_clusters)
    diff = pts - means[labels]
    objective = float(w @ np.einsum("ij,ij->i", diff, diff))
    n = pts.shape[0]
    weight_matrix = sp.csr_matrix((w, (labels, np.arange(n))), shape=(n_clusters, n))
    mass = np.asarray(weight_matrix.sum(axis=1)).ravel()
    sums = weight_matrix @ pts
    new = means.copy()
    alive = mass > 0
    new[alive] = sums[alive] / mass[alive, None]
    return new, labels, objective


def _relative_change(new: float, old: float) -> float:
    if new == 0.0:
        return abs(new - old)
    return abs(new - old) / abs(new)


def lloyd(coreset: WeightedCoreset, seeds, cfg: KMeansConfig,
          counter: DistanceCounter | None = None):
    """Iterate Lloyd steps until the relative objective change drops below
    ``cfg.convergence_epsilon``. Returns ``(means, trace, converged)``."""
    means, _, q = lloyd_iterate(coreset, seeds, counter)
    trace = [q]
    converged = False
    for _ in range(cfg.max_iterations):
        candidate, _, q = lloyd_iterate(coreset, means, counter)
        trace.append(q)
        if _relative_change(trace[-1], trace[-2]) < cfg.convergence_epsilon:
            converged = True
            means = candidate
            break
        means = candidate
    return means, trace, converged


def _report(name, trace, converged, counter, timer, q, echo) -> RunReport:
    return RunReport(algorithm=name, objective_trace=[float(t) for t in trace],
                     distance_counts=counter.as_dict(), wall_times=dict(timer.times),
                     n_iterations=max(len(trace) - 1, 0), converged=converged,
                     final_quantization_error=q, config_echo=echo)


def kmeanspp_fit(data, cfg: KMeansConfig, eval_data=None):
    """D^2 seeding followed by Lloyd iterations on the full data."""
    data = check_data(data)
    counter, timer = DistanceCounter(), PhaseTimer()
    full = identity_coreset(data)
    with timer.phase("seeding"), counter.phase("seeding"):
        seeds = dsquared_seed(data, SeedingConfig(cfg.n_clusters, 1, cfg.rng_seed), counter)
    with timer.phase("em"), counter.phase("estep"):
        means, trace, converged = lloyd(full, seeds, cfg, counter)
    target = data if eval_data is None else eval_data
    with timer.phase("evaluation"), counter.phase("evaluation"):
        q = quantization_error(target, means, counter)
    return means, _report("kmeanspp", trace, converged, counter, timer, q,
                          {"kmeans": asdict(cfg)})


def lwcs_kmeans_fit(data, lwcs_cfg: LwcsConfig | None, km_cfg: KMeansConfig,
                    chain_length: int = 2, seeding_seed: int | None = None, eval_data=None):
    """Lightweight coreset, AFK-MC^2 seeding on it, weighted Lloyd iterations.

    Quality is measured on the full data (or ``eval_data``). Passing
    ``lwcs_cfg=None`` uses the identity coreset.
    """
    data = check_data(data)
    counter, timer = DistanceCounter(), PhaseTimer()
    with timer.phase("coreset"), counter.phase("coreset"):
        if lwcs_cfg is None:
            coreset = identity_coreset(data)
        else:
            coreset = build_lightweight_coreset(data, lwcs_cfg, counter)
    sd_cfg = SeedingConfig(km_cfg.n_clusters, chain_length,
                           km_cfg.rng_seed if seeding_seed is None else seeding_seed)
    with timer.phase("seeding"), counter.phase("seeding"):
        seeds = afkmc2_seed(coreset, sd_cfg, counter)
    with timer.phase("em"), counter.phase("estep"):
        means, trace, converged = lloyd(coreset, seeds, km_cfg, counter)
    target = data if eval_data is None else eval_data
    with timer.phase("evaluation"), counter.phase("evaluation"):
        q = quantization_error(target, means, counter)
    echo = {"kmeans": asdict(km_cfg), "seeding": asdict(sd_cfg),
            "lwcs": None if lwcs_cfg is None else asdict(lwcs_cfg)}
    return means, _report("lwcs-kmeans", trace, converged, counter, timer, q, echo)


def var_gmm_s_fit(data, seeding_cfg: SeedingConfig, cfg: VcGmmConfig, eval_data=None):
    """vc-GMM on the identity coreset (all points, unit weights)."""
    params, _, report = vc_gmm_fit(data, seeding_cfg, cfg, None, eval_data)
    return params, report


def afkmc2_only(data, seeding_cfg: SeedingConfig, lwcs_cfg: LwcsConfig | None = None,
                eval_data=None):
    """AFK-MC^2 seeding alone, scored like the full algorithms."""
    data = check_data(data)
    counter, timer = DistanceCounter(), PhaseTimer()
    with timer.phase("coreset"), counter.phase("coreset"):
        coreset = (identity_coreset(data) if lwcs_cfg is None
                   else build_lightweight_coreset(data, lwcs_cfg, counter))
    with timer.phase("seeding"), counter.phase("seeding"):
        seeds = afkmc2_seed(coreset, seeding_cfg, counter)
    target = data if eval_data is None else eval_data
    with timer.phase("evaluation"), counter.phase("evaluation"):
        q = quantization_error(target, seeds, counter)
    echo = {"seeding": asdict(seeding_cfg),
            "lwcs": None if lwcs_cfg is None else asdict(lwcs_cfg)}
    # no iterations: the trace holds the single quality value of the seeds
    return seeds, _report("seed-only", [q], True, counter, timer, q, echo)
