"""Box-constrained projected quasi-Newton (BFGS) minimization with finite-difference gradients."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class GradientError(FloatingPointError):
    pass


@dataclass
class LocalOptConfig:
    max_iterations: int = 200
    h: float = 1e-6
    ftol: float = 1e-12
    gtol: float = 1e-8
    n_starts: int = 16
    start_scale: float = 1.0
    target_loss: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.h > 0 and self.ftol > 0 and self.gtol > 0):
            raise ValueError("h, ftol and gtol must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LocalResult:
    x: np.ndarray
    value: float
    history: list
    iterations: int
    n_evaluations: int
    wall_time: float
    status: str
    starts: list = field(default_factory=list)


def _call(objective, X, vectorized):
    if vectorized:
        return np.asarray(objective(X), dtype=float).reshape(X.shape[0])
    return np.array([objective(x) for x in X], dtype=float)


def gradient(objective: Callable, x, h: float = 1e-6, vectorized: bool = False) -> np.ndarray:
    """Central differences with step ``h * max(1, |x_i|)`` on every coordinate."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    steps = h * np.maximum(1.0, np.abs(x))
    E = np.diag(steps)
    vals = _call(objective, np.vstack([x + E, x - E]), vectorized)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0] % d)
        raise GradientError(f"objective is not finite near x[{i}] = {x[i]!r}")
    return (vals[:d] - vals[d:]) / (2.0 * steps)


def optimize(objective: Callable, x0, box, cfg: LocalOptConfig | None = None,
             vectorized: bool = False) -> LocalResult:
    """Single-start projected BFGS from ``x0``.

    Variables pinned at a bound with the gradient pointing outward are held
    fixed for the step; the quasi-Newton direction acts on the rest and the
    trial point is projected back onto the box during an Armijo backtrack.
    """
    cfg = cfg or LocalOptConfig()
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (d,))
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("x0 must lie inside the box")
    span = np.maximum(hi - lo, 1e-12)

    t0 = time.perf_counter()
    n_eval = 0

    def f(z):
        nonlocal n_eval
        n_eval += 1
        return float(_call(objective, z[None, :], vectorized)[0])

    def grad(z):
        nonlocal n_eval
        n_eval += 2 * d
        return gradient(objective, z, cfg.h, vectorized)

    fx = f(x)
    if not np.isfinite(fx):
        raise GradientError("objective is not finite at the starting point")
    g = grad(x)
    Hinv = np.eye(d)
    fresh = True
    history = [fx]
    status = "max_iterations"
    it = 0
    while it < cfg.max_iterations:
        if cfg.target_loss is not None and fx <= cfg.target_loss:
            status = "target_reached"
            break
        pg = x - np.clip(x - g, lo, hi)
        if np.max(np.abs(pg)) < cfg.gtol:
            status = "converged"
            break
        it += 1
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        p = np.zeros(d)
        p[free] = -Hinv[np.ix_(free, free)] @ g[free]
        if g @ p >= 0:
            Hinv = np.eye(d)
            fresh = True
            p = np.where(free, -g, 0.0)
        alpha = 1.0
        if fresh:
            alpha = min(1.0, 0.1 * np.min(span) / max(np.max(np.abs(p)), 1e-300))
        accepted = False
        while alpha > 1e-12:
            xn = np.clip(x + alpha * p, lo, hi)
            s = xn - x
            if not np.any(s):
                break
            fn = f(xn)
            if np.isfinite(fn) and fn <= fx + 1e-4 * (g @ s):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if fresh:
                status = "stalled"
                break
            Hinv = np.eye(d)
            fresh = True
            continue
        gn = grad(xn)
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh:
                Hinv = np.eye(d) * (sy / (y @ y))
            rho = 1.0 / sy
            I = np.eye(d)
            Hinv = (I - rho * np.outer(s, y)) @ Hinv @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
            fresh = False
        decrease = fx - fn
        x, fx, g = xn, fn, gn
        history.append(fx)
        if decrease <= cfg.ftol * max(1.0, abs(fx)):
            status = "converged"
            break
    if cfg.target_loss is not None and fx <= cfg.target_loss:
        status = "target_reached"
    return LocalResult(x, fx, history, it, n_eval, time.perf_counter() - t0, status)


def multistart(objective: Callable, box, cfg: LocalOptConfig | None = None, x0=None,
               vectorized: bool = False) -> LocalResult:
    """Best of ``cfg.n_starts`` runs; ``x0`` (if given) is the first start.

    Random starts are uniform in the box scaled by ``start_scale`` about its
    centre. Stops early once a start meets ``target_loss``.
    """
    cfg = cfg or LocalOptConfig()
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    d = np.broadcast_shapes(lo.shape, hi.shape)
    dim = len(x0) if x0 is not None else (d[0] if d else None)
    lo = np.broadcast_to(lo, (dim,))
    hi = np.broadcast_to(hi, (dim,))
    centre, half = (lo + hi) / 2, (hi - lo) / 2
    rng = np.random.default_rng(cfg.seed)
    starts = []
    if x0 is not None:
        starts.append(np.clip(np.asarray(x0, dtype=float), lo, hi))
    while len(starts) < cfg.n_starts:
        starts.append(centre + cfg.start_scale * half * rng.uniform(-1, 1, dim))

    t0 = time.perf_counter()
    best = None
    records = []
    n_eval = 0
    for k, xs in enumerate(starts):
        res = optimize(objective, xs, (lo, hi), cfg, vectorized)
        n_eval += res.n_evaluations
        records.append({"start": k, "value": res.value, "iterations": res.iterations, "status": res.status})
        log.debug("start %d: %s loss %.3e", k, res.status, res.value)
        if best is None or res.value < best.value:
            best = res
        if cfg.target_loss is not None and best.value <= cfg.target_loss:
            break
    return LocalResult(best.x, best.value, best.history, best.iterations, n_eval,
                       time.perf_counter() - t0, best.status, records)
