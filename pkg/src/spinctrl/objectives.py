"""Final-time losses ``1 - C`` and ``1 - F`` for control sequences and trigonometric coefficients."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import dynamics
from .controls import TrigControlParams, TrigSampler
from .dynamics import Metric, PiecewiseControl, SimConfig

DEFAULT_TARGET = 0.9999


@dataclass(frozen=True)
class ObjectiveSpec:
    metric: Metric
    config: SimConfig
    target_level: float = DEFAULT_TARGET

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if not 0.0 < self.target_level < 1.0:
            raise ValueError(f"target_level must lie in (0, 1), got {self.target_level}")

    @property
    def target_loss(self) -> float:
        return 1.0 - self.target_level

    def with_horizon(self, T: float) -> "ObjectiveSpec":
        return ObjectiveSpec(self.metric, self.config.replace(horizon_T=T), self.target_level)

    def to_dict(self) -> dict:
        return {"metric": self.metric.value, "target_level": self.target_level, **self.config.to_dict()}


@dataclass
class OptimResult:
    """Outcome of one optimizer run at a fixed horizon."""

    method: str
    loss: float
    metric_value: float
    final_state: np.ndarray
    controls: PiecewiseControl
    params: Any = None
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    status: str = "max_iterations"
    n_evaluations: int = 0
    budget: dict = field(default_factory=dict)

    def reached(self, target_level: float) -> bool:
        return self.metric_value > target_level

    def summary(self) -> dict:
        return {
            "method": self.method,
            "loss": self.loss,
            "metric_value": self.metric_value,
            "wall_time": self.wall_time,
            "status": self.status,
            "n_evaluations": self.n_evaluations,
            "iterations": len(self.history),
            "budget": self.budget,
            "final_state": [[float(c.real), float(c.imag)] for c in self.final_state],
        }

    def write_history(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "best_loss"])
            for i, v in enumerate(self.history, start=1):
                writer.writerow([i, repr(float(v))])
        return path

    def write_params(self, path) -> Path:
        path = Path(path)
        payload = self.params.to_dict() if hasattr(self.params, "to_dict") else self.params
        path.write_text(json.dumps(payload, indent=2))
        return path


def evaluate(controls: PiecewiseControl, spec: ObjectiveSpec, initial=dynamics.SPIN_DOWN):
    """Propagate and return ``(loss, metric_value, final_state)``."""
    psi = dynamics.final_state(controls, spec.config, initial)
    m = float(dynamics.metric_value(psi, spec.metric))
    return 1.0 - m, m, psi


class TrigObjective:
    """Loss over stacked coefficient vectors ``x = [a, b]`` at a fixed horizon.

    Calling with a ``(B, dim)`` array returns ``B`` losses; a 1-d vector gives a float.
    """

    def __init__(self, spec: ObjectiveSpec, p: int = 5, initial=dynamics.SPIN_DOWN):
        self.spec = spec
        self.p = p
        self.initial = np.asarray(initial, dtype=complex)
        cfg = spec.config
        self.sampler = TrigSampler(p, cfg.horizon_T, cfg.n_steps, cfg.bound)
        self.dim = self.sampler.dim
        self.n_evaluations = 0

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        b = self.spec.config.bound
        return np.full(self.dim, -b), np.full(self.dim, b)

    def final_states(self, X) -> np.ndarray:
        om, de = self.sampler.controls(X)
        self.n_evaluations += om.shape[0]
        return dynamics.final_states_batch(om, de, self.spec.config, self.initial)

    def __call__(self, X):
        single = np.ndim(X) == 1
        psi = self.final_states(X)
        loss = 1.0 - dynamics.metric_value(psi, self.spec.metric)
        return float(loss[0]) if single else loss

    def violation(self, X):
        v = self.sampler.violation(X)
        return float(v[0]) if np.ndim(X) == 1 else v

    def params(self, x) -> TrigControlParams:
        return TrigControlParams.from_vector(x, self.p, self.spec.config.bound)

    def controls(self, x) -> PiecewiseControl:
        return self.sampler.piecewise(x)
