"""Run diagnostics shared by the samplers and the harness."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

__all__ = ["RunDiagnostics"]


@dataclass(frozen=True)
class RunDiagnostics:
    """Counters describing one sampling run.

    stage1 counts the cheap proposal gate (ρ); stage2 the path-space gate (Q),
    attempted only for stage-1 survivors.  poisson_points_total counts every
    thinning point drawn, the natural unit of path-space work.  Merging is
    associative so parallel shards can be combined in any order.
    """

    algorithm: str
    stage1_attempts: int = 0
    stage1_accepts: int = 0
    stage2_attempts: int = 0
    stage2_accepts: int = 0
    poisson_points_total: int = 0
    wall_clock_seconds: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.stage1_accepts > self.stage1_attempts:
            raise ValueError("stage-1 accepts exceed attempts")
        if self.stage2_accepts > self.stage2_attempts:
            raise ValueError("stage-2 accepts exceed attempts")
        for name in (
            "stage1_attempts",
            "stage1_accepts",
            "stage2_attempts",
            "stage2_accepts",
            "poisson_points_total",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def stage1_rate(self) -> float:
        return self.stage1_accepts / self.stage1_attempts if self.stage1_attempts else 0.0

    @property
    def stage2_rate(self) -> float:
        return self.stage2_accepts / self.stage2_attempts if self.stage2_attempts else 0.0

    def merge(self, other: "RunDiagnostics") -> "RunDiagnostics":
        if other.algorithm != self.algorithm:
            raise ValueError(f"cannot merge {self.algorithm!r} with {other.algorithm!r}")
        return RunDiagnostics(
            algorithm=self.algorithm,
            stage1_attempts=self.stage1_attempts + other.stage1_attempts,
            stage1_accepts=self.stage1_accepts + other.stage1_accepts,
            stage2_attempts=self.stage2_attempts + other.stage2_attempts,
            stage2_accepts=self.stage2_accepts + other.stage2_accepts,
            poisson_points_total=self.poisson_points_total + other.poisson_points_total,
            wall_clock_seconds=self.wall_clock_seconds + other.wall_clock_seconds,
            seed=self.seed if self.seed == other.seed else None,
        )

    def with_seed(self, seed: int) -> "RunDiagnostics":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "stage1_attempts": self.stage1_attempts,
            "stage1_accepts": self.stage1_accepts,
            "stage1_rate": self.stage1_rate,
            "stage2_attempts": self.stage2_attempts,
            "stage2_accepts": self.stage2_accepts,
            "stage2_rate": self.stage2_rate,
            "poisson_points_total": self.poisson_points_total,
            "wall_clock_seconds": self.wall_clock_seconds,
            "seed": self.seed,
        }
