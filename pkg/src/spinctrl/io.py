"""Fixtures, experiment configuration, manifests and guarded file output."""
from __future__ import annotations

import hashlib
import json
import platform
import shutil
import uuid
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import bbnn, local_opt, pso
from .controls import TrigControlParams, n_coefficients
from .dynamics import Metric

FIXTURES = {
    "pso_fidelity": "pso_fidelity.json",
    "pso_concurrence": "pso_concurrence.json",
    "slsqp_fidelity": "slsqp_fidelity.json",
    "slsqp_concurrence": "slsqp_concurrence.json",
    "zero": "zero.json",
}


class FixtureError(ValueError):
    """Unreadable or malformed fixture, located by file and line."""

    def __init__(self, path, line: int, message: str, column: int | None = None):
        self.path = str(path)
        self.line = line
        self.column = column
        self.message = message
        loc = f"{self.path}:{line}" + (f":{column}" if column else "")
        super().__init__(f"{loc}: {message}")

    def to_dict(self) -> dict:
        return {"error": "fixture", "path": self.path, "line": self.line, "column": self.column,
                "message": self.message}


class ConfigError(ValueError):
    pass


class OutputExistsError(FileExistsError):
    pass


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")
    return Path(str(resources.files("spinctrl") / "fixtures" / FIXTURES[name]))


def _key_line(text: str, key: str) -> int:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return 1


def load_fixture(source) -> TrigControlParams:
    """Coefficient fixture from a bundled name or a JSON file path.

    Schema: ``{"p": int, "bound": float, "a": [2p+1 floats], "b": [2p+1 floats]}``
    plus optional ``method`` and ``metric`` labels.
    """
    path = fixture_path(source) if str(source) in FIXTURES else Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FixtureError(path, 0, f"cannot read fixture: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(path, exc.lineno, exc.msg, exc.colno) from exc
    if not isinstance(data, dict):
        raise FixtureError(path, 1, "top level must be an object")
    for key in ("a", "b"):
        if key not in data:
            raise FixtureError(path, 1, f"missing key {key!r}")
    p = data.get("p", 5)
    if not isinstance(p, int) or p < 0:
        raise FixtureError(path, _key_line(text, "p"), f"p must be a non-negative integer, got {p!r}")
    n = n_coefficients(p)
    coeffs = {}
    for key in ("a", "b"):
        vals = data[key]
        ok = isinstance(vals, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)
        if not ok or len(vals) != n:
            raise FixtureError(path, _key_line(text, key), f"{key!r} must be a list of {n} numbers")
        coeffs[key] = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(coeffs[key])):
            raise FixtureError(path, _key_line(text, key), f"{key!r} contains non-finite values")
    bound = data.get("bound", 1.0)
    if not isinstance(bound, (int, float)) or not bound > 0:
        raise FixtureError(path, _key_line(text, "bound"), f"bound must be positive, got {bound!r}")
    return TrigControlParams(coeffs["a"], coeffs["b"], p, float(bound))


def export_fixtures(dest, force: bool = False) -> list[Path]:
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    out = []
    for name in FIXTURES:
        target = dest / FIXTURES[name]
        check_writable(target, force)
        shutil.copyfile(fixture_path(name), target)
        out.append(target)
    return out


def check_writable(path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def source_digest() -> str:
    """sha256 over the package's Python sources, in sorted file order."""
    h = hashlib.sha256()
    for f in sorted(Path(__file__).parent.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- experiment configuration ---------------------------------------------

DEFAULT_RANGES = {1.0: (1.8, 4.0), 2.0: (0.9, 3.5), 3.0: (0.8, 3.0), 4.0: (0.7, 2.5)}


@dataclass
class BbnnBudget:
    epochs: int = 2000
    patience: int | None = 300
    lr_fidelity: float = 1e-3
    lr_concurrence: float = 1e-2
    hidden_layers: int = 4
    units_per_layer: int = 75

    def adam(self, metric) -> bbnn.AdamConfig:
        metric = Metric.parse(metric)
        lr = self.lr_concurrence if metric is Metric.CONCURRENCE else self.lr_fidelity
        return bbnn.AdamConfig(lr=lr, epochs=self.epochs, patience=self.patience)

    def arch(self, metric) -> bbnn.BbnnArchitecture:
        base = bbnn.BbnnArchitecture.for_metric(metric)
        return bbnn.BbnnArchitecture(self.hidden_layers, self.units_per_layer, base.activation)


@dataclass
class ExperimentConfig:
    """Everything a run needs; serialized verbatim into the manifest.

    The JSON file mirrors these fields, with ``pso``, ``local`` and ``bbnn``
    as nested objects and ``ranges`` keyed by the bound as a string.
    """

    seed: int = 0
    n_steps: int = 1000
    xi: float = 1.0
    target_level: float = 0.9999
    p: int = 5
    methods: list = field(default_factory=lambda: ["pso", "local", "bbnn"])
    metrics: list = field(default_factory=lambda: ["concurrence", "fidelity"])
    bounds: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    coarse_step: float = 0.1
    resolution: float = 0.01
    restarts: int = 1
    pso: pso.PsoConfig = field(default_factory=lambda: pso.PsoConfig(patience=60))
    local: local_opt.LocalOptConfig = field(
        default_factory=lambda: local_opt.LocalOptConfig(n_starts=4, max_iterations=150, start_scale=0.3))
    bbnn: BbnnBudget = field(default_factory=BbnnBudget)

    def __post_init__(self):
        from .mintime import canonical_method

        self.methods = [canonical_method(m) for m in self.methods]
        self.metrics = [Metric.parse(m).value for m in self.metrics]
        self.bounds = [float(b) for b in self.bounds]
        self.ranges = {float(k): (float(v[0]), float(v[1])) for k, v in self.ranges.items()}
        if not 0 < self.target_level < 1:
            raise ConfigError(f"target_level must lie in (0, 1), got {self.target_level}")
        for b in self.bounds:
            if not b > 0:
                raise ConfigError(f"bounds must be positive, got {b}")

    def scan_range(self, bound: float) -> tuple[float, float]:
        if bound in self.ranges:
            return self.ranges[bound]
        # unlisted bound: lower edge scaled as 1/bound, generous upper edge
        lo, hi = DEFAULT_RANGES[1.0]
        return round(lo / bound, 2), round(max(hi, 2 * lo / bound), 2)

    def method_budget(self, metric):
        from .mintime import MethodBudget

        return MethodBudget(pso=self.pso, local=self.local, adam=self.bbnn.adam(metric),
                            arch=self.bbnn.arch(metric), p=self.p)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "n_steps": self.n_steps, "xi": self.xi, "target_level": self.target_level,
            "p": self.p, "methods": list(self.methods), "metrics": list(self.metrics),
            "bounds": list(self.bounds), "ranges": {repr(k): list(v) for k, v in self.ranges.items()},
            "coarse_step": self.coarse_step, "resolution": self.resolution, "restarts": self.restarts,
            "pso": self.pso.to_dict(), "local": self.local.to_dict(), "bbnn": asdict(self.bbnn),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        nested = {"pso": pso.PsoConfig, "local": local_opt.LocalOptConfig, "bbnn": BbnnBudget}
        base = cls()
        for key, klass in nested.items():
            if key in data:
                sub = data[key]
                if not isinstance(sub, dict):
                    raise ConfigError(f"{key!r} must be an object")
                allowed = {f.name for f in fields(klass)}
                bad = set(sub) - allowed
                if bad:
                    raise ConfigError(f"unknown {key} keys: {', '.join(sorted(bad))}")
                data[key] = klass(**{**asdict(getattr(base, key)), **sub})
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if "run_id" in data:
            # manifest from an earlier run
            data = data.get("config", {}).get("experiment")
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: manifest carries no experiment config")
        return cls.from_dict(data)


# --- manifest ----------------------------------------------------------------

class Manifest:
    """Run record: resolved config, seeds, artifacts with checksums and timings."""

    def __init__(self, command: str, config: dict, run_id: str | None = None):
        from . import __version__

        self.data = {
            "run_id": run_id or uuid.uuid4().hex[:12],
            "command": command,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "source_sha256": source_digest(),
            "config": config,
            "artifacts": [],
            "timings": {},
            "runs": [],
        }

    @property
    def run_id(self) -> str:
        return self.data["run_id"]

    def add_artifact(self, path, kind: str, **meta) -> None:
        path = Path(path)
        self.data["artifacts"].append({"path": str(path), "kind": kind, "sha256": sha256(path), **meta})

    def add_timing(self, key: str, seconds: float) -> None:
        self.data["timings"][key] = seconds

    def add_run(self, entry: dict) -> None:
        self.data["runs"].append(entry)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.data, indent=2, default=_json_default))
        return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dump_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, default=_json_default))
    return path
