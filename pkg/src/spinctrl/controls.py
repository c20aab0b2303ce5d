"""Truncated trigonometric control series and their sampling onto the time grid."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import PiecewiseControl

PENALTY_POINTS_PER_PERIOD = 512


def n_coefficients(p: int) -> int:
    return 2 * p + 1


def trig_basis(t, p: int) -> np.ndarray:
    """Rows ``[1, cos t, sin t, cos 2t, sin 2t, ..., cos pt, sin pt]`` for each time."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.shape[0], n_coefficients(p)))
    out[:, 0] = 1.0
    for k in range(1, p + 1):
        out[:, 2 * k - 1] = np.cos(k * t)
        out[:, 2 * k] = np.sin(k * t)
    return out


@dataclass
class TrigControlParams:
    """Coefficients ``a`` (Omega series) and ``b`` (Delta series), each of length 2p+1.

    Optimizers keep every coefficient in ``[-bound, bound]``; construction does
    not enforce that so out-of-box series can still be evaluated and penalized.
    """

    a: np.ndarray
    b: np.ndarray
    p: int = 5
    bound: float = 1.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = n_coefficients(self.p)
        if self.a.shape != (n,) or self.b.shape != (n,):
            raise ValueError(f"p={self.p} needs {n} coefficients per series, got {self.a.shape} and {self.b.shape}")
        if not self.bound > 0:
            raise ValueError(f"bound must be positive, got {self.bound}")

    @classmethod
    def from_vector(cls, x, p: int = 5, bound: float = 1.0) -> "TrigControlParams":
        x = np.asarray(x, dtype=float)
        n = n_coefficients(p)
        return cls(x[:n].copy(), x[n:].copy(), p, bound)

    @classmethod
    def zeros(cls, p: int = 5, bound: float = 1.0) -> "TrigControlParams":
        n = n_coefficients(p)
        return cls(np.zeros(n), np.zeros(n), p, bound)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    def in_box(self) -> bool:
        return bool(np.all(np.abs(self.to_vector()) <= self.bound))

    def to_dict(self) -> dict:
        return {"p": self.p, "bound": self.bound, "a": self.a.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrigControlParams":
        return cls(np.asarray(d["a"], float), np.asarray(d["b"], float), int(d["p"]), float(d["bound"]))

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def trig_series(params: TrigControlParams, t) -> tuple[np.ndarray, np.ndarray]:
    """Unclipped series values at times ``t``."""
    B = trig_basis(t, params.p)
    return B @ params.a, B @ params.b


def trig_eval(params: TrigControlParams, t):
    """Series values at ``t``, hard-clipped to ``[-bound, bound]``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    om, de = trig_series(params, t)
    om = np.clip(om, -params.bound, params.bound)
    de = np.clip(de, -params.bound, params.bound)
    if np.ndim(t) == 0:
        return float(om[0]), float(de[0])
    return om, de


def midpoints(T: float, N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) * (T / N)


def sample(params: TrigControlParams, T: float, N: int) -> PiecewiseControl:
    """Clipped series evaluated at interval midpoints ``(k + 1/2) T / N``."""
    if not T > 0 or N < 1:
        raise ValueError(f"need T > 0 and N >= 1, got T={T}, N={N}")
    om, de = trig_eval(params, midpoints(T, N))
    return PiecewiseControl(np.atleast_1d(om), np.atleast_1d(de), params.bound)


def default_penalty_grid(T: float) -> int:
    return max(2, int(np.ceil(PENALTY_POINTS_PER_PERIOD * T / (2 * np.pi))))


def bound_violation(params: TrigControlParams, T: float, grid: int | None = None) -> float:
    """Largest excess of the unclipped series over the bound on ``grid`` points of ``[0, T]``."""
    grid = default_penalty_grid(T) if grid is None else grid
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    om, de = trig_series(params, np.linspace(0.0, T, grid))
    worst = max(np.max(np.abs(om)), np.max(np.abs(de)))
    return float(max(worst - params.bound, 0.0))


class TrigSampler:
    """Batched map from coefficient vectors ``(B, 2(2p+1))`` to clipped grid samples.

    Caches the basis on the propagation midpoints and on the penalty grid.
    """

    def __init__(self, p: int, T: float, N: int, bound: float, penalty_grid: int | None = None):
        self.p = p
        self.T = T
        self.N = N
        self.bound = bound
        self.n = n_coefficients(p)
        self.dim = 2 * self.n
        self._basis = trig_basis(midpoints(T, N), p)
        grid = default_penalty_grid(T) if penalty_grid is None else penalty_grid
        self._penalty_basis = trig_basis(np.linspace(0.0, T, grid), p)

    def controls(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        om = np.clip(X[:, : self.n] @ self._basis.T, -self.bound, self.bound)
        de = np.clip(X[:, self.n:] @ self._basis.T, -self.bound, self.bound)
        return om, de

    def violation(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        om = np.abs(X[:, : self.n] @ self._penalty_basis.T).max(axis=1)
        de = np.abs(X[:, self.n:] @ self._penalty_basis.T).max(axis=1)
        return np.maximum(np.maximum(om, de) - self.bound, 0.0)

    def piecewise(self, x) -> PiecewiseControl:
        om, de = self.controls(x)
        return PiecewiseControl(om[0], de[0], self.bound)
