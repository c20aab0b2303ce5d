"""Three-level dynamics of two Ising-coupled spins in the triplet subspace.

States are complex arrays ``(c1, c2, c3)`` with amplitudes on
``|dd>``, ``|du+>`` (the Bell state) and ``|uu>`` in the rotating frame.
Frequencies are in units of the coupling ``xi`` and times in ``1/xi``.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

SQRT2 = np.sqrt(2.0)

SPIN_DOWN = np.array([1.0, 0.0, 0.0], dtype=complex)
BELL = np.array([0.0, 1.0, 0.0], dtype=complex)


class Metric(str, enum.Enum):
    CONCURRENCE = "concurrence"
    FIDELITY = "fidelity"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"c": "concurrence", "bellfidelity": "fidelity", "bell_fidelity": "fidelity", "f": "fidelity"}
        return cls(aliases.get(key, key))

    @property
    def kernel_code(self) -> int:
        return _kernels.CONCURRENCE if self is Metric.CONCURRENCE else _kernels.FIDELITY


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings: coupling, horizon, grid and the common control bound."""

    horizon_T: float
    n_steps: int = 1000
    bound: float = 1.0
    xi: float = 1.0
    objective: Metric = Metric.CONCURRENCE

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.bound > 0:
            raise ValueError(f"bound must be positive, got {self.bound}")
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        object.__setattr__(self, "objective", Metric.parse(self.objective))

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    def replace(self, **changes) -> "SimConfig":
        kw = dict(horizon_T=self.horizon_T, n_steps=self.n_steps, bound=self.bound,
                  xi=self.xi, objective=self.objective)
        kw.update(changes)
        return SimConfig(**kw)

    def to_dict(self) -> dict:
        return {"horizon_T": self.horizon_T, "n_steps": self.n_steps, "bound": self.bound,
                "xi": self.xi, "objective": self.objective.value}


class ControlError(ValueError):
    """Control sequence is inconsistent with the simulation grid or bound."""


@dataclass
class PiecewiseControl:
    """Per-step (Omega, Delta) values, each held constant over one interval."""

    omega: np.ndarray
    delta: np.ndarray
    bound: float

    def __post_init__(self):
        self.omega = np.ascontiguousarray(self.omega, dtype=float)
        self.delta = np.ascontiguousarray(self.delta, dtype=float)
        if self.omega.ndim != 1 or self.omega.shape != self.delta.shape:
            raise ControlError(
                f"omega and delta must be 1-d of equal length, got {self.omega.shape} and {self.delta.shape}")

    def __len__(self) -> int:
        return self.omega.shape[0]

    @property
    def max_abs(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(max(np.max(np.abs(self.omega)), np.max(np.abs(self.delta))))

    @classmethod
    def zeros(cls, n: int, bound: float = 1.0) -> "PiecewiseControl":
        return cls(np.zeros(n), np.zeros(n), bound)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: PiecewiseControl
    config: SimConfig = field(repr=False, default=None)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def populations(self) -> np.ndarray:
        return populations(self.states)

    def to_csv(self, path) -> Path:
        """Write ``t, Omega, Delta, P1, P2, P3, C, F`` rows, one per grid time.

        Row k carries the control applied on ``[t_k, t_{k+1})``; the last row
        repeats the final interval's control.
        """
        path = Path(path)
        n = len(self.controls)
        idx = np.minimum(np.arange(len(self.times)), n - 1)
        pops = self.populations()
        conc = concurrence(self.states)
        fid = bell_fidelity(self.states)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "Omega", "Delta", "P1", "P2", "P3", "C", "F"])
            for k, t in enumerate(self.times):
                row = [t, self.controls.omega[idx[k]], self.controls.delta[idx[k]],
                       *pops[k], conc[k], fid[k]]
                writer.writerow([repr(float(v)) for v in row])
        return path


def hamiltonian_at(omega: float, delta: float, xi: float = 1.0) -> np.ndarray:
    """Rotating-frame triplet Hamiltonian for Rabi frequency ``omega`` and detuning ``delta``."""
    r = omega / SQRT2
    return np.array([[delta, r, 0.0],
                     [r, 0.0, r],
                     [0.0, r, 4.0 * xi - delta]], dtype=complex)


def step(state, H, dt: float) -> np.ndarray:
    """Apply ``exp(-i H dt)`` to ``state`` using the eigendecomposition of Hermitian ``H``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    w, V = np.linalg.eigh(np.asarray(H, dtype=complex))
    return V @ (np.exp(-1j * w * dt) * (V.conj().T @ np.asarray(state, dtype=complex)))


def _check_controls(controls: PiecewiseControl, config: SimConfig):
    if len(controls) != config.n_steps:
        raise ControlError(f"control length {len(controls)} does not match n_steps={config.n_steps}")
    if not (np.all(np.isfinite(controls.omega)) and np.all(np.isfinite(controls.delta))):
        raise ControlError("controls contain non-finite values")
    worst = controls.max_abs
    if worst > config.bound:
        raise ControlError(f"control magnitude {worst!r} exceeds bound {config.bound!r}; clip before propagating")


def propagate(controls: PiecewiseControl, config: SimConfig, initial=SPIN_DOWN) -> Trajectory:
    """Propagate ``initial`` through all steps and return the full trajectory."""
    _check_controls(controls, config)
    psi0 = np.asarray(initial, dtype=np.complex128)
    states = _kernels.trajectory(controls.omega, controls.delta, config.dt, float(config.xi), psi0)
    times = np.linspace(0.0, config.horizon_T, config.n_steps + 1)
    return Trajectory(times=times, states=states, controls=controls, config=config)


def final_state(controls: PiecewiseControl, config: SimConfig, initial=SPIN_DOWN) -> np.ndarray:
    _check_controls(controls, config)
    out = final_states_batch(controls.omega[None, :], controls.delta[None, :], config, initial)
    return out[0]


def final_states_batch(omega: np.ndarray, delta: np.ndarray, config: SimConfig, initial=SPIN_DOWN) -> np.ndarray:
    """Final states for a stack of control sequences of shape ``(B, n_steps)``.

    No bound check is made here; callers pass already clipped samples.
    """
    omega = np.ascontiguousarray(omega, dtype=float)
    delta = np.ascontiguousarray(delta, dtype=float)
    if omega.shape != delta.shape or omega.ndim != 2 or omega.shape[1] != config.n_steps:
        raise ControlError(f"expected control stacks of shape (B, {config.n_steps}), got {omega.shape}")
    psi0 = np.asarray(initial, dtype=np.complex128)
    return _kernels.final_states(omega, delta, config.dt, float(config.xi), psi0)


def concurrence(state) -> np.ndarray | float:
    """``|2 c1 c3 - c2^2|``; vectorized over leading axes.

    Capped at 1 so rounding on a unit-norm state cannot leave ``[0, 1]``.
    """
    s = np.asarray(state)
    val = np.minimum(np.abs(2.0 * s[..., 0] * s[..., 2] - s[..., 1] ** 2), 1.0)
    return float(val) if val.ndim == 0 else val


def bell_fidelity(state) -> np.ndarray | float:
    """Population of the Bell state ``|du+>``."""
    s = np.asarray(state)
    val = np.minimum(np.abs(s[..., 1]) ** 2, 1.0)
    return float(val) if val.ndim == 0 else val


def metric_value(state, metric: Metric | str):
    metric = Metric.parse(metric)
    return concurrence(state) if metric is Metric.CONCURRENCE else bell_fidelity(state)


def populations(state) -> np.ndarray:
    return np.abs(np.asarray(state)) ** 2


def density_matrix(state) -> np.ndarray:
    s = np.asarray(state, dtype=complex)
    return np.outer(s, s.conj())


def simplex_coords(p1, p2, p3) -> tuple[float, float]:
    """Barycentric map: P1 -> (0, 0), P3 -> (1, 0), P2 (Bell state) -> apex (1/2, sqrt3/2)."""
    total = p1 + p2 + p3
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"populations must sum to 1, got {total!r}")
    return float(p3 + 0.5 * p2), float(p2 * np.sqrt(3.0) / 2.0)


def state_simplex_point(state) -> tuple[float, float]:
    p1, p2, p3 = populations(state) / np.sum(populations(state))
    return simplex_coords(p1, p2, p3)


def density_matrix_json(state) -> list:
    rho = density_matrix(state)
    return [[{"re": float(v.real), "im": float(v.imag)} for v in row] for row in rho]


def write_density_matrix(state, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(density_matrix_json(state), indent=2))
    return path


def _two_spin_hamiltonian(beta_x: float, beta_y: float, beta_z: float, xi: float) -> np.ndarray:
    # single-spin basis (|u>, |d>), S = sigma / 2
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    eye = np.eye(2)
    H = 4.0 * xi * np.kron(sz, sz)
    for beta, s in ((beta_x, sx), (beta_y, sy), (beta_z, sz)):
        H = H + beta * (np.kron(s, eye) + np.kron(eye, s))
    return H


def triplet_singlet_basis() -> np.ndarray:
    """Columns: |dd>, |du+>, |uu>, |du->, expanded on the product basis (uu, ud, du, dd)."""
    uu, ud, du, dd = np.eye(4)
    return np.column_stack([dd, (du + ud) / SQRT2, uu, (du - ud) / SQRT2]).astype(complex)


def two_spin_hamiltonian_triplet_singlet(beta_x, beta_y, beta_z, xi=1.0) -> np.ndarray:
    W = triplet_singlet_basis()
    return W.conj().T @ _two_spin_hamiltonian(beta_x, beta_y, beta_z, xi) @ W


def singlet_decoupling_check(beta_x: float, beta_y: float, beta_z: float, xi: float = 1.0) -> bool:
    """True when no matrix element connects the singlet to any triplet state."""
    Hb = two_spin_hamiltonian_triplet_singlet(beta_x, beta_y, beta_z, xi)
    return bool(np.all(np.abs(Hb[:3, 3]) < 1e-12) and np.all(np.abs(Hb[3, :3]) < 1e-12))
