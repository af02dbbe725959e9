"""Reconstruction reports and their JSON/CSV serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def to_builtin(obj):
    """Recursively convert numpy containers/scalars to JSON-friendly types."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass
class ReconstructionReport:
    pipeline: str
    params: dict
    loss_history: list = field(default_factory=list)
    relative_errors: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        if "final_loss" in self.info:
            return float(self.info["final_loss"])
        return float(self.loss_history[-1]) if self.loss_history else float("nan")

    def to_dict(self) -> dict:
        return to_builtin({
            "pipeline": self.pipeline,
            "params": self.params,
            "loss_history": self.loss_history,
            "relative_errors": self.relative_errors,
            "histories": self.histories,
            "info": self.info,
        })

    def to_json(self, path=None) -> str:
        # repr-based float output round-trips exactly (at most 17 significant digits)
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionReport":
        return cls(d["pipeline"], d.get("params", {}), d.get("loss_history", []),
                   d.get("relative_errors", {}), d.get("info", {}), d.get("histories", {}))

    @classmethod
    def from_json(cls, path) -> "ReconstructionReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def history_csv(self, path=None) -> str:
        """Per-epoch loss plus any recorded error histories, one row per epoch."""
        cols = {"loss": self.loss_history}
        for k, v in self.histories.items():
            if len(v) == len(self.loss_history):
                cols[k] = v
        lines = [",".join(["epoch"] + list(cols))]
        for i in range(len(self.loss_history)):
            lines.append(",".join([str(i)] + [f"{float(c[i]):.17g}" for c in cols.values()]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def relative_error(estimate, truth) -> float:
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    denom = np.linalg.norm(truth)
    diff = np.linalg.norm(estimate - truth)
    return float(diff / denom) if denom > 0 else float(diff)
