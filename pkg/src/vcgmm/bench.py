"""Quality metrics and the seeded experiment grid."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import KMeansConfig, afkmc2_only, kmeanspp_fit, lwcs_kmeans_fit
from .coreset import LwcsConfig
from .em import VcGmmConfig, vc_gmm_fit
from .errors import ConfigError, ContractViolation
from .instrument import DistanceCounter
from .model import nearest_centers
from .report import RunReport
from .seeding import SeedingConfig

log = logging.getLogger(__name__)

ALGORITHMS = ("vc-gmm", "var-gmm-s", "lwcs-kmeans", "kmeanspp", "seed-only")


def relative_error(q_algo: float, q_baseline: float) -> float:
    """Relative quantization error ``(Q_algo - Q_base) / Q_base``."""
    if not q_baseline > 0:
        raise ContractViolation(f"baseline quantization error must be positive, got {q_baseline}")
    return (q_algo - q_baseline) / q_baseline


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(partition_a, partition_b) -> float:
    """Normalized mutual information with geometric-mean normalization.

    Natural logarithms. If either partition has zero entropy the score is 1
    for identical partitions (up to relabelling) and 0 otherwise.
    """
    a = np.asarray(partition_a).ravel()
    b = np.asarray(partition_b).ravel()
    if a.shape != b.shape:
        raise ContractViolation(f"partitions differ in length: {a.size} vs {b.size}")
    if a.size < 1:
        raise ContractViolation("partitions must not be empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    na, nb = ia.max() + 1, ib.max() + 1
    table = np.bincount(ia * nb + ib, minlength=na * nb).reshape(na, nb).astype(np.float64)
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 or hb == 0.0:
        # one side is a single block: identical only if both are
        return 1.0 if ha == hb else 0.0
    n = a.size
    nz = table > 0
    pab = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float((pab * np.log(pab / outer)).sum())
    return max(0.0, min(1.0, mi / math.sqrt(ha * hb)))


def map_partition(data, params, counter: DistanceCounter | None = None) -> np.ndarray:
    """Hard partition by the most probable cluster (nearest mean, exact)."""
    means = getattr(params, "means", params)
    labels, _ = nearest_centers(np.asarray(data, dtype=np.float64), means, counter)
    return labels


def sem(values) -> float:
    """Standard error of the mean (``ddof=1``); 0 for fewer than two values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent per-module seeds for one repetition."""
    state = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint32)
    return dict(zip(("lwcs", "seeding", "em", "kmeans"), (int(s) for s in state)))


def parse_g_size(token) -> tuple[int, bool]:
    """``"5"`` -> (5, False); ``"3+1"`` -> (3, True)."""
    text = str(token).strip()
    if text.endswith("+1"):
        return int(text[:-2]), True
    return int(text), False


@dataclass
class ExperimentSpec:
    dataset: str | None = None
    data_format: str | None = None
    algorithms: tuple[str, ...] = ("vc-gmm",)
    n_clusters: int = 10
    coreset_sizes: tuple[int, ...] = (1000,)
    g_sizes: tuple[str, ...] = ("5",)
    c_prime: int | None = None
    plus_one: bool = False
    chain_length: int = 2
    seed_chain_lengths: tuple[int, ...] = (2, 5, 10, 20)
    convergence_epsilon: float = 1e-4
    max_iterations: int = 500
    n_initial_esteps: int = 0
    seeds: tuple[int, ...] = tuple(range(50))
    test_split: float = 0.0
    split_seed: int = 0
    n_workers: int = 1
    results_path: str | None = None
    summary_path: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self, n_points: int | None = None) -> None:
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithm(s): {sorted(unknown)}")
        if self.n_clusters < 1:
            raise ConfigError("need at least one cluster")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if not 0.0 <= self.test_split < 1.0:
            raise ConfigError("test split must lie in [0, 1)")
        for tok in self.g_sizes:
            g, _ = parse_g_size(tok)
            c_prime = g if self.c_prime is None else self.c_prime
            if not (1 <= g <= self.n_clusters and 1 <= c_prime <= self.n_clusters):
                raise ConfigError(f"G={tok} / C'={c_prime} incompatible with C={self.n_clusters}")
        if n_points is not None:
            n_train = n_points - int(round(self.test_split * n_points))
            for size in self.coreset_sizes:
                if not 1 <= size <= n_train:
                    raise ConfigError(f"coreset size {size} outside [1, {n_train}]")


def split_data(data: np.ndarray, fraction: float, seed: int):
    """Random train/test split; ``fraction = 0`` evaluates on the training data."""
    if fraction <= 0:
        return data, data
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.shape[0])
    n_test = max(1, int(round(fraction * data.shape[0])))
    return data[perm[n_test:]], data[perm[:n_test]]


def grid_configs(spec: ExperimentSpec):
    """Yield ``(algorithm, params)`` for every configuration except the baseline."""
    for algo in spec.algorithms:
        if algo == "kmeanspp":
            continue
        if algo == "seed-only":
            for m in spec.seed_chain_lengths:
                yield algo, {"chain_length": m}
            continue
        if algo == "lwcs-kmeans":
            for size in spec.coreset_sizes:
                yield algo, {"coreset_size": size}
            continue
        for tok in spec.g_sizes:
            g, plus = parse_g_size(tok)
            params = {"g_size": g, "c_prime": g if spec.c_prime is None else spec.c_prime,
                      "plus_one": plus or spec.plus_one}
            if algo == "vc-gmm":
                for size in spec.coreset_sizes:
                    yield algo, dict(params, coreset_size=size)
            else:
                yield algo, params


def config_key(algo: str, params: dict) -> str:
    inner = ",".join(f"{k}={v}" for k, v in sorted(params.items()))
    return f"{algo}[{inner}]" if inner else algo


def run_single(algo: str, params: dict, spec: ExperimentSpec, train, test, seed: int):
    """One repetition of one configuration; returns ``(means, report)``."""
    s = derive_seeds(seed)
    C = spec.n_clusters
    if algo == "kmeanspp":
        return kmeanspp_fit(train, KMeansConfig(C, spec.convergence_epsilon,
                                                spec.max_iterations, s["kmeans"]), test)
    if algo == "seed-only":
        return afkmc2_only(train, SeedingConfig(C, params["chain_length"], s["seeding"]),
                           eval_data=test)
    if algo == "lwcs-kmeans":
        return lwcs_kmeans_fit(train, LwcsConfig(params["coreset_size"], s["lwcs"]),
                               KMeansConfig(C, spec.convergence_epsilon, spec.max_iterations,
                                            s["em"]),
                               chain_length=spec.chain_length, seeding_seed=s["seeding"],
                               eval_data=test)
    em_cfg = VcGmmConfig(c_prime=params["c_prime"], g_size=params["g_size"],
                         plus_one_random=params["plus_one"],
                         n_initial_esteps=spec.n_initial_esteps,
                         convergence_epsilon=spec.convergence_epsilon,
                         max_iterations=spec.max_iterations, rng_seed=s["em"],
                         n_workers=spec.n_workers)
    lwcs_cfg = LwcsConfig(params["coreset_size"], s["lwcs"]) if algo == "vc-gmm" else None
    gmm, _, report = vc_gmm_fit(train, SeedingConfig(C, spec.chain_length, s["seeding"]),
                                em_cfg, lwcs_cfg, test)
    return gmm.means, report


def summarize(reports: list[RunReport]) -> dict:
    """Mean and SEM per configuration over successful runs."""
    groups: dict[str, list[RunReport]] = {}
    for rep in reports:
        groups.setdefault(rep.config_echo.get("key", rep.algorithm), []).append(rep)
    base = [r for r in groups.get("kmeanspp", []) if r.status == "ok"]
    base_evals = np.mean([r.total_distance_evaluations for r in base]) if base else None
    base_time = np.mean([r.algorithm_time for r in base]) if base else None
    out = {}
    for key, reps in groups.items():
        ok = [r for r in reps if r.status == "ok"]
        entry = {"algorithm": reps[0].algorithm, "n_runs": len(ok),
                 "n_failed": len(reps) - len(ok)}
        if ok:
            metrics = {
                "eta": [r.eta for r in ok if r.eta is not None],
                "nmi": [r.nmi for r in ok if r.nmi is not None],
                "quantization_error": [r.final_quantization_error for r in ok],
                "total_distance_evaluations": [r.total_distance_evaluations for r in ok],
                "algorithm_time": [r.algorithm_time for r in ok],
                "n_iterations": [r.n_iterations for r in ok],
                "setup_time_fraction": [
                    (r.wall_times.get("coreset", 0.0) + r.wall_times.get("seeding", 0.0))
                    / r.algorithm_time if r.algorithm_time > 0 else 0.0 for r in ok],
            }
            for name, vals in metrics.items():
                if vals:
                    entry[name] = {"mean": float(np.mean(vals)), "sem": sem(vals)}
            if base_evals:
                entry["speedup_distance_evaluations"] = float(
                    base_evals / entry["total_distance_evaluations"]["mean"])
            if base_time:
                entry["speedup_time"] = float(base_time / entry["algorithm_time"]["mean"])
        out[key] = entry
    return out


def run_experiment(spec: ExperimentSpec, data=None):
    """Run the baseline and every configured algorithm for every seed.

    The k-means++ baseline always runs; each run's relative error and NMI are
    taken against the baseline run with the same seed. Failed runs are kept as
    records with ``status="failed"`` and excluded from aggregates.

    Returns ``(reports, summary)`` and writes them when paths are configured.
    """
    if data is None:
        from .io import load_dataset
        data = load_dataset(spec.dataset, spec.data_format)
    data = np.asarray(data, dtype=np.float64)
    spec.validate(data.shape[0])
    train, test = split_data(data, spec.test_split, spec.split_seed)
    grid = list(grid_configs(spec))
    reports: list[RunReport] = []
    for seed in spec.seeds:
        base_means, base = run_single("kmeanspp", {}, spec, train, test, seed)
        base_labels = map_partition(test, base_means)
        base.seed, base.eta, base.nmi = seed, 0.0, 1.0
        base.config_echo["key"] = "kmeanspp"
        reports.append(base)
        for algo, params in grid:
            key = config_key(algo, params)
            try:
                means, rep = run_single(algo, params, spec, train, test, seed)
                rep.eta = relative_error(rep.final_quantization_error,
                                         base.final_quantization_error)
                rep.nmi = nmi(map_partition(test, means), base_labels)
            except Exception as exc:  # recorded, aggregated as a failure
                log.warning("run %s seed %s failed: %s", key, seed, exc)
                rep = RunReport(algorithm=algo, status="failed", error=repr(exc))
            rep.seed = seed
            rep.config_echo["key"] = key
            rep.config_echo["grid"] = params
            reports.append(rep)
        log.info("seed %s done", seed)
    summary = summarize(reports)
    if spec.results_path:
        write_results(reports, spec.results_path)
    if spec.summary_path:
        Path(spec.summary_path).write_text(json.dumps(
            {"spec": asdict(spec), "configurations": summary}, indent=2, sort_keys=True))
    return reports, summary


def write_results(reports: list[RunReport], path) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_record(), sort_keys=True) + "\n")


def read_results(path) -> list[RunReport]:
    with open(path) as fh:
        return [RunReport.from_record(json.loads(line)) for line in fh if line.strip()]
