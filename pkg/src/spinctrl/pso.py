"""Particle swarm optimization with decaying inertia and penalty-based constraints."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class PsoConfig:
    n_particles: int = 300
    max_iterations: int = 600
    w_max: float = 0.9
    w_min: float = 0.2
    c1: float = 1.0
    c2: float = 3.0
    penalty_weight: float = 10.0
    target_loss: float | None = None
    seed: int = 0
    # stop when the global best has not dropped by 1% within this many iterations
    patience: int | None = None

    def __post_init__(self):
        if self.w_min > self.w_max:
            raise ValueError("w_min must not exceed w_max")
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_values: np.ndarray
    global_best: np.ndarray
    global_value: float = np.inf
    iteration: int = 0
    inertia: float = 0.0
    history: list = field(default_factory=list)


@dataclass
class PsoResult:
    x: np.ndarray
    value: float
    history: list
    iterations: int
    n_evaluations: int
    wall_time: float
    status: str
    state: SwarmState = field(repr=False, default=None)


def next_inertia(w: float, iteration: int, cfg: PsoConfig) -> float:
    """One inertia update: subtract ``iteration * (w_max - w_min) / max_iterations``, floored at ``w_min``."""
    w = w - iteration * (cfg.w_max - cfg.w_min) / cfg.max_iterations
    return max(w, cfg.w_min)


def _evaluate(objective, X, vectorized, pool):
    if vectorized:
        vals = np.asarray(objective(X), dtype=float).reshape(X.shape[0])
    elif pool is not None:
        vals = np.fromiter(pool.map(objective, X), dtype=float, count=X.shape[0])
    else:
        vals = np.array([objective(x) for x in X], dtype=float)
    vals = vals.copy()
    vals[~np.isfinite(vals)] = np.inf
    return vals


def optimize(
    objective: Callable,
    dim: int,
    box,
    cfg: PsoConfig | None = None,
    constraint: Callable | None = None,
    vectorized: bool = False,
    workers: int | None = None,
    x0=None,
    callback: Callable | None = None,
) -> PsoResult:
    """Minimize ``objective`` over the box with a particle swarm.

    Parameters
    ----------
    objective : callable
        Maps one position to a float, or a ``(P, dim)`` stack to ``P`` floats when
        ``vectorized`` is set. Non-finite values are treated as ``+inf``.
    box : (lo, hi)
        Scalars or per-coordinate arrays.
    constraint : callable, optional
        Violation ``>= 0`` (same calling convention as ``objective``); the swarm
        minimizes ``objective + penalty_weight * violation**2``.
    workers : int, optional
        Thread count for non-vectorized objectives. Results are gathered in
        particle order, so a fixed seed gives the same run either way.
    x0 : array, optional
        Seed positions (one or several rows) replacing the first particles.
    """
    cfg = cfg or PsoConfig()
    if dim < 1:
        raise ValueError("dim must be >= 1")
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (dim,)).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi >= lo)):
        raise ValueError("box must be finite with lo <= hi")
    span = hi - lo
    n = cfg.n_particles

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(n)]
    X = np.empty((n, dim))
    V = np.empty((n, dim))
    for i, rng in enumerate(streams):
        X[i] = lo + rng.random(dim) * span
        V[i] = (rng.random(dim) - 0.5) * span
    if x0 is not None:
        seeds = np.atleast_2d(np.asarray(x0, dtype=float))[:n]
        X[: seeds.shape[0]] = np.clip(seeds, lo, hi)

    def cost(P):
        vals = _evaluate(objective, P, vectorized, pool)
        if constraint is not None:
            viol = _evaluate(constraint, P, vectorized, pool)
            vals = vals + cfg.penalty_weight * viol**2
            vals[~np.isfinite(vals)] = np.inf
        return vals

    state = SwarmState(X, V, X.copy(), np.full(n, np.inf), X[0].copy(), np.inf, 0, cfg.w_max)
    t0 = time.perf_counter()
    status = "max_iterations"
    n_eval = 0
    last_gain, gain_ref = 0, np.inf
    pool = ThreadPoolExecutor(workers) if (workers and workers > 1 and not vectorized) else None
    try:
        while state.iteration < cfg.max_iterations:
            state.iteration += 1
            vals = cost(state.positions)
            n_eval += n
            improved = vals < state.best_values
            state.best_values[improved] = vals[improved]
            state.best_positions[improved] = state.positions[improved]
            i_best = int(np.argmin(state.best_values))
            if state.best_values[i_best] < state.global_value:
                state.global_value = float(state.best_values[i_best])
                state.global_best = state.best_positions[i_best].copy()
            state.history.append(state.global_value)
            if state.global_value < 0.99 * gain_ref:
                last_gain, gain_ref = state.iteration, state.global_value
            if callback is not None:
                callback(state)
            if cfg.target_loss is not None and state.global_value <= cfg.target_loss:
                status = "target_reached"
                break
            if cfg.patience is not None and state.iteration - last_gain >= cfg.patience:
                status = "stalled"
                break

            state.inertia = next_inertia(state.inertia, state.iteration, cfg)
            for i, rng in enumerate(streams):
                r1 = rng.random(dim)
                r2 = rng.random(dim)
                v = (state.inertia * state.velocities[i]
                     + cfg.c1 * r1 * (state.best_positions[i] - state.positions[i])
                     + cfg.c2 * r2 * (state.global_best - state.positions[i]))
                state.velocities[i] = np.clip(v, -span, span)
            state.positions = np.clip(state.positions + state.velocities, lo, hi)
    finally:
        if pool is not None:
            pool.shutdown()

    wall = time.perf_counter() - t0
    log.debug("pso finished: %s after %d iterations, best %.3e", status, state.iteration, state.global_value)
    return PsoResult(state.global_best.copy(), state.global_value, list(state.history),
                     state.iteration, n_eval, wall, status, state)
