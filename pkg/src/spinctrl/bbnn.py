"""Black-box neural controller: a small MLP maps normalized time to bounded (Omega, Delta).

Training runs the full-horizon propagation each epoch, gets per-step control
gradients from the discrete adjoint sweep and backpropagates them through the
network, followed by an Adam update.
"""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels, dynamics
from .controls import midpoints
from .dynamics import Metric, PiecewiseControl
from .objectives import ObjectiveSpec, OptimResult

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class BbnnArchitecture:
    hidden_layers: int = 4
    units_per_layer: int = 75
    activation: str = "tanh"
    input_dim: int = 1
    output_dim: int = 2

    def __post_init__(self):
        if self.activation not in ("tanh", "sin"):
            raise ValueError(f"activation must be 'tanh' or 'sin', got {self.activation!r}")
        if self.hidden_layers < 1 or self.units_per_layer < 1:
            raise ValueError("need at least one hidden layer with one unit")

    @classmethod
    def for_metric(cls, metric) -> "BbnnArchitecture":
        return cls(activation="sin" if Metric.parse(metric) is Metric.CONCURRENCE else "tanh")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.units_per_layer] * self.hidden_layers + [self.output_dim]


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 3000
    seed: int = 0
    target_loss: float | None = None
    # stop when the best loss has not dropped by 1% within this many epochs
    patience: int | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def for_metric(cls, metric, **kw) -> "AdamConfig":
        lr = 1e-2 if Metric.parse(metric) is Metric.CONCURRENCE else 1e-3
        return cls(lr=kw.pop("lr", lr), **kw)

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    @classmethod
    def from_config(cls, cfg: AdamConfig) -> "Adam":
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)

    def update(self, grads: list[np.ndarray]) -> list[np.ndarray]:
        """Advance the moments with ``grads`` and return the parameter increments."""
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        out = []
        for m, v, g in zip(self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            out.append(-(self.lr / bc1) * m / (np.sqrt(v / bc2) + self.epsilon))
        return out

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, d in zip(params, self.update(grads)):
            p += d


class BbnnNet:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``."""

    def __init__(self, arch: BbnnArchitecture, bound: float, weights, biases):
        self.arch = arch
        self.bound = float(bound)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        sizes = arch.layer_sizes
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} has shapes {w.shape}, {b.shape}; expected "
                                 f"{(sizes[l], sizes[l + 1])}, {(sizes[l + 1],)}")

    @classmethod
    def init(cls, arch: BbnnArchitecture, bound: float, seed: int = 0, zero_output: bool = False) -> "BbnnNet":
        """Fan-in scaled uniform initialization.

        Tanh layers draw from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``. Sin layers
        use the wider ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, with the first layer
        spanning a few periods over the unit input interval.
        """
        rng = np.random.default_rng(seed)
        sizes = arch.layer_sizes
        weights, biases = [], []
        n_layers = len(sizes) - 1
        for l in range(n_layers):
            fan_in, fan_out = sizes[l], sizes[l + 1]
            last = l == n_layers - 1
            if arch.activation == "sin" and not last:
                lim = 6.0 if l == 0 else np.sqrt(6.0 / fan_in)
                blim = np.pi if l == 0 else 1.0 / np.sqrt(fan_in)
            else:
                lim = blim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            biases.append(rng.uniform(-blim, blim, fan_out))
        if zero_output:
            weights[-1][:] = 0.0
            biases[-1][:] = 0.0
        return cls(arch, bound, weights, biases)

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "BbnnNet":
        return copy.deepcopy(self)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def load_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def _act(self, z):
        return np.tanh(z) if self.arch.activation == "tanh" else np.sin(z)

    def _act_grad(self, z, a):
        return 1.0 - a * a if self.arch.activation == "tanh" else np.cos(z)

    def raw(self, tau, keep=False):
        """Pre-squash outputs for normalized times ``tau``; optionally the layer cache."""
        h = np.asarray(tau, dtype=float).reshape(-1, 1)
        cache = [(None, h)]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if l == len(self.weights) - 1 else self._act(z)
            cache.append((z, h))
        return (h, cache) if keep else h

    def backward(self, cache, d_out):
        """Parameter gradients given ``d_out`` = dLoss/d(raw output), shape (n, 2)."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = d_out
        for l in range(len(self.weights) - 1, -1, -1):
            h_prev = cache[l][1]
            gw[l] = h_prev.T @ delta
            gb[l] = delta.sum(axis=0)
            if l > 0:
                z_prev, a_prev = cache[l]
                delta = (delta @ self.weights[l].T) * self._act_grad(z_prev, a_prev)
        return gw + gb

    def to_dict(self) -> dict:
        return {"architecture": asdict(self.arch), "bound": self.bound,
                "shapes": [list(p.shape) for p in self.params], "params": self.flatten().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BbnnNet":
        arch = BbnnArchitecture(**d["architecture"])
        net = cls.init(arch, d["bound"])
        net.load_flat(d["params"])
        return net

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path


def forward(net: BbnnNet, t, horizon: float):
    """Bounded controls ``bound * tanh(raw)`` at times ``t`` (input normalized by ``horizon``)."""
    out = net.bound * np.tanh(net.raw(np.asarray(t, dtype=float) / horizon))
    if np.ndim(t) == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out[:, 0], out[:, 1]


def realized_controls(net: BbnnNet, config) -> PiecewiseControl:
    om, de = forward(net, midpoints(config.horizon_T, config.n_steps), config.horizon_T)
    return PiecewiseControl(om, de, config.bound)


def control_gradient(omega, delta, spec: ObjectiveSpec, initial=dynamics.SPIN_DOWN):
    """Loss ``1 - metric`` and its derivative with respect to each Omega_k and Delta_k."""
    cfg = spec.config
    m, g_om, g_de, psi = _kernels.metric_and_control_gradient(
        np.ascontiguousarray(omega, dtype=float), np.ascontiguousarray(delta, dtype=float),
        cfg.dt, float(cfg.xi), np.asarray(initial, dtype=np.complex128), spec.metric.kernel_code)
    return 1.0 - m, -g_om, -g_de, psi


def loss_and_gradient(net: BbnnNet, spec: ObjectiveSpec, initial=dynamics.SPIN_DOWN):
    """Returns ``(loss, grads, final_state)``; ``grads`` lines up with ``net.params``."""
    cfg = spec.config
    tau = midpoints(cfg.horizon_T, cfg.n_steps) / cfg.horizon_T
    raw, cache = net.raw(tau, keep=True)
    sq = np.tanh(raw)
    ctrl = net.bound * sq
    loss, g_om, g_de, psi = control_gradient(ctrl[:, 0], ctrl[:, 1], spec, initial)
    if not np.isfinite(loss):
        raise TrainingError("loss is not finite")
    d_ctrl = np.column_stack([g_om, g_de])
    d_raw = d_ctrl * net.bound * (1.0 - sq * sq)
    return loss, net.backward(cache, d_raw), psi


def train(net: BbnnNet, spec: ObjectiveSpec, adam_cfg: AdamConfig | None = None,
          initial=dynamics.SPIN_DOWN) -> OptimResult:
    """Adam on the full-horizon loss; returns the best epoch's network and controls.

    ``net`` is trained in place. The epoch loop stops at ``target_loss``, on a
    ``patience`` stall, or on divergence (non-finite or loss above 10).
    """
    adam_cfg = adam_cfg or AdamConfig.for_metric(spec.metric)
    target = adam_cfg.target_loss
    opt = Adam.from_config(adam_cfg)
    t0 = time.perf_counter()
    history = []
    best_net = net.copy()
    status = "max_iterations"
    try:
        best_loss, _, best_psi = loss_and_gradient(net, spec, initial)
    except TrainingError:
        best_loss, best_psi = np.inf, np.full(3, np.nan, dtype=complex)
        status = "diverged"
        log.warning("initial network gives a non-finite loss")
    last_gain = 0
    for epoch in range(adam_cfg.epochs if status != "diverged" else 0):
        try:
            loss, grads, psi = loss_and_gradient(net, spec, initial)
        except TrainingError:
            status = "diverged"
            log.warning("training diverged at epoch %d", epoch)
            break
        if loss > 10.0 or not all(np.all(np.isfinite(g)) for g in grads):
            status = "diverged"
            log.warning("training diverged at epoch %d (loss %r)", epoch, loss)
            break
        history.append(loss)
        if loss < best_loss:
            if loss < 0.99 * best_loss:
                last_gain = epoch
            best_loss, best_psi = loss, psi
            best_net = net.copy()
        if target is not None and best_loss <= target:
            status = "target_reached"
            break
        if adam_cfg.patience is not None and epoch - last_gain > adam_cfg.patience:
            status = "stalled"
            break
        opt.step(net.params, grads)
    controls = realized_controls(best_net, spec.config)
    return OptimResult(
        method="bbnn",
        loss=float(best_loss),
        metric_value=float(1.0 - best_loss),
        final_state=best_psi,
        controls=controls,
        params=best_net,
        history=history,
        wall_time=time.perf_counter() - t0,
        status=status,
        n_evaluations=len(history),
        budget={"epochs": adam_cfg.epochs, "lr": adam_cfg.lr, "patience": adam_cfg.patience},
    )
