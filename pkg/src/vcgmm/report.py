"""Per-run result record."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

from .instrument import ALGORITHM_PHASES


@dataclass
class RunReport:
    algorithm: str
    objective_trace: list[float] = field(default_factory=list)
    distance_counts: dict[str, int] = field(default_factory=dict)
    wall_times: dict[str, float] = field(default_factory=dict)
    n_iterations: int = 0
    converged: bool = False
    final_quantization_error: float | None = None
    final_variance: float | None = None
    config_echo: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    eta: float | None = None
    nmi: float | None = None
    status: str = "ok"
    error: str | None = None

    @property
    def total_distance_evaluations(self) -> int:
        return sum(self.distance_counts.get(p, 0) for p in ALGORITHM_PHASES)

    @property
    def algorithm_time(self) -> float:
        return sum(v for k, v in self.wall_times.items() if k != "evaluation")

    @property
    def final_objective(self) -> float | None:
        return self.objective_trace[-1] if self.objective_trace else None

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["total_distance_evaluations"] = self.total_distance_evaluations
        rec["algorithm_time"] = self.algorithm_time
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "RunReport":
        known = {k: v for k, v in rec.items() if k in cls.__dataclass_fields__}
        return cls(**known)
