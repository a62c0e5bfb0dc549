"""Run record data model: config echo, metric trajectory, final summary."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation

FORMAT_VERSION = 1

TRAJECTORY_CSV_HEADER = "iteration,loss,uniformity,tolerance,modality_gap"


@dataclass
class Checkpoint:
    iteration: int
    loss: float
    uniformity: float
    tolerance: float
    modality_gap: float

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "loss": self.loss,
            "uniformity": self.uniformity,
            "tolerance": self.tolerance,
            "modality_gap": self.modality_gap,
        }


@dataclass
class RunRecord:
    """Everything needed to archive and replay one training run.

    ``snapshots`` optionally holds (iteration, predictions) pairs captured
    at checkpoints; they are exported as embedding files, never serialized
    into the record itself.
    """

    config: dict
    seed: int
    source_uniformity: float
    source_tolerance: float
    checkpoints: list[Checkpoint]
    summary: dict
    conventions: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    snapshots: list[tuple[int, np.ndarray]] | None = None

    def validate(self) -> None:
        """Internal-consistency checks enforced before serialization."""
        if not self.checkpoints:
            raise InvariantViolation("record has no checkpoints")
        iters = [c.iteration for c in self.checkpoints]
        if any(b <= a for a, b in zip(iters, iters[1:])):
            raise InvariantViolation(f"checkpoint iterations not strictly increasing: {iters}")
        last = self.checkpoints[-1]
        expect = {
            "delta_uniformity": abs(last.uniformity - self.source_uniformity),
            "delta_tolerance": abs(last.tolerance - self.source_tolerance),
            "final_modality_gap": last.modality_gap,
        }
        for key, want in expect.items():
            got = self.summary.get(key)
            if got is None or abs(got - want) > 1e-12:
                raise InvariantViolation(
                    f"summary[{key!r}] = {got!r} inconsistent with last checkpoint ({want!r})"
                )

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "config": dict(self.config),
            "seed": self.seed,
            "source_metrics": {
                "uniformity": self.source_uniformity,
                "tolerance": self.source_tolerance,
            },
            "checkpoints": [c.as_dict() for c in self.checkpoints],
            "summary": dict(self.summary),
            "conventions": dict(self.conventions),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunRecord":
        src = data["source_metrics"]
        return cls(
            config=dict(data["config"]),
            seed=data["seed"],
            source_uniformity=src["uniformity"],
            source_tolerance=src["tolerance"],
            checkpoints=[Checkpoint(**c) for c in data["checkpoints"]],
            summary=dict(data["summary"]),
            conventions=dict(data.get("conventions", {})),
            format_version=data["format_version"],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        return self.to_json_dict() == other.to_json_dict()
