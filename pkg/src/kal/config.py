"""Run configuration, initial velocity laws and per-realization random streams."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import testfns
from .errors import ConfigError
from .kernels import CollisionKernel, kernel_from_config

DEFAULTS = {
    "kernel": {"family": "maxwell"},
    "alpha": 0.5,
    "N0": 200,
    "lambda": None,
    "t_end": 2.0,
    "snapshot_count": 65,
    "M": 100,
    "seed": 12345,
    "init": {"kind": "maxwellian", "T0": 1.0},
    "mode": "exact",
    "observables": [
        {"kind": "constant", "value": 1.0},
        {"kind": "gaussian", "a": 0.5, "c": [0.0, 0.0, 0.0]},
        {"kind": "energy"},
    ],
    "correlation_ells": [1, 2],
    "residual_ells": [1],
    "omega_samples": 64,
    "max_dt": 1.0 / 32.0,
    "snapshot_memory_mb": 512,
    "output_dir": "kal_out",
}

INIT_KINDS = ("maxwellian", "bimodal", "ball")

# stream purposes under one (seed, realization) pair
SIM_STREAM = 0
ESTIMATOR_STREAM = 1


def _expand_dotted(tree: dict) -> dict:
    out: dict = {}
    for key, val in tree.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "conflicts with a non-table entry")
        if isinstance(val, dict) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]].update(_expand_dotted(val))
        else:
            node[parts[-1]] = _expand_dotted(val) if isinstance(val, dict) else val
    return out


@dataclass
class RunConfig:
    kernel: CollisionKernel
    alpha: float
    N0: int
    lam: float
    t_end: float
    snapshot_count: int
    M: int
    seed: int
    init: dict
    mode: str
    observables: list
    correlation_ells: list = field(default_factory=lambda: [1, 2])
    residual_ells: list = field(default_factory=lambda: [1])
    omega_samples: int = 64
    max_dt: float = 1.0 / 32.0
    snapshot_memory_mb: float = 512
    output_dir: str = "kal_out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def eps(self) -> float:
        return 1.0 / self.lam

    @property
    def snapshot_times(self) -> np.ndarray:
        if self.snapshot_count == 1:
            return np.array([self.t_end])
        return self.t_end * np.arange(self.snapshot_count) / (self.snapshot_count - 1)

    @property
    def E0(self) -> float:
        return initial_energy(self.init)

    def to_dict(self) -> dict:
        """Fully resolved configuration, JSON serializable."""
        d = copy.deepcopy(self.raw)
        d["lambda"] = self.lam
        d["kernel"] = dict(d.get("kernel", {}), **self.kernel.to_dict())
        return d

    def replace(self, **changes) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        for k, v in changes.items():
            raw[{"lam": "lambda"}.get(k, k)] = v
        if "N0" in changes and "lam" not in changes and "lambda" not in changes:
            raw["lambda"] = None
        return RunConfig.from_dict(raw)

    @classmethod
    def from_dict(cls, tree: dict, base_dir=None) -> "RunConfig":
        tree = _expand_dotted(tree)
        unknown = set(tree) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        raw = copy.deepcopy(DEFAULTS)
        for k, v in tree.items():
            # a new init kind replaces the table, since its parameters differ
            new_kind = k == "init" and v.get("kind", raw["init"]["kind"]) != raw["init"]["kind"] \
                if isinstance(v, dict) else False
            if isinstance(v, dict) and isinstance(raw.get(k), dict) and not new_kind:
                raw[k] = dict(raw[k], **v)
            else:
                raw[k] = copy.deepcopy(v)

        def num(key, cast=float, positive=True):
            try:
                val = cast(raw[key])
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a number, got {raw[key]!r}")
            if cast is int and float(raw[key]) != val:
                raise ConfigError(key, "expected an integer")
            if positive and not val > 0:
                raise ConfigError(key, "must be positive")
            return val

        kernel = kernel_from_config(raw["kernel"], base_dir)
        alpha = num("alpha", positive=False)
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError("alpha", "must lie in [0, 1]")
        N0 = num("N0", int)
        if N0 % 2:
            raise ConfigError("N0", "initial particle number must be even")
        lam = float(N0) if raw["lambda"] is None else num("lambda")
        t_end = num("t_end", positive=False)
        if t_end < 0:
            raise ConfigError("t_end", "must be nonnegative")
        snapshot_count = num("snapshot_count", int)
        M = num("M", int)
        try:
            seed = int(raw["seed"])
        except (TypeError, ValueError):
            raise ConfigError("seed", "expected an integer")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
        init = validate_init(raw["init"])
        mode = raw["mode"]
        if mode not in ("exact", "majorant"):
            raise ConfigError("mode", "must be 'exact' or 'majorant'")
        if not isinstance(raw["observables"], list):
            raise ConfigError("observables", "must be a list of test-function specs")
        observables = [testfns.from_spec(s) for s in raw["observables"]]
        for key in ("correlation_ells", "residual_ells"):
            ells = raw[key]
            if not isinstance(ells, list) or not all(isinstance(e, int) and 1 <= e <= 3 for e in ells):
                raise ConfigError(key, "must be a list of integers in 1..3")
        return cls(
            kernel=kernel, alpha=alpha, N0=N0, lam=lam, t_end=t_end,
            snapshot_count=snapshot_count, M=M, seed=seed, init=init, mode=mode,
            observables=observables, correlation_ells=list(raw["correlation_ells"]),
            residual_ells=list(raw["residual_ells"]),
            omega_samples=num("omega_samples", int), max_dt=num("max_dt"),
            snapshot_memory_mb=num("snapshot_memory_mb", positive=False),
            output_dir=str(raw["output_dir"]), raw=raw,
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON: {exc}")
    if not isinstance(tree, dict):
        raise ConfigError("<file>", "top level must be a JSON object")
    return RunConfig.from_dict(tree, base_dir=path.parent)


def validate_init(init) -> dict:
    if not isinstance(init, dict) or init.get("kind") not in INIT_KINDS:
        raise ConfigError("init.kind", f"must be one of {INIT_KINDS}")
    kind = init["kind"]
    need = {"maxwellian": ("T0",), "bimodal": ("offset", "T0"), "ball": ("R",)}[kind]
    out = {"kind": kind}
    for key in need:
        default = {"T0": 1.0, "offset": 1.0, "R": 1.0}[key]
        try:
            out[key] = float(init.get(key, default))
        except (TypeError, ValueError):
            raise ConfigError(f"init.{key}", "expected a number")
        if key != "offset" and not out[key] > 0:
            raise ConfigError(f"init.{key}", "must be positive")
    extra = set(init) - set(need) - {"kind"}
    if extra:
        raise ConfigError(f"init.{sorted(extra)[0]}", f"not a parameter of {kind}")
    return out


def sample_initial(init: dict, n: int, rng) -> np.ndarray:
    """n i.i.d. velocities from the one-particle law f0."""
    kind = init["kind"]
    if kind == "maxwellian":
        return math.sqrt(init["T0"]) * rng.standard_normal((n, 3))
    if kind == "bimodal":
        v = math.sqrt(init["T0"]) * rng.standard_normal((n, 3))
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        v[:, 0] += sign * init["offset"]
        return v
    if kind == "ball":
        d = rng.standard_normal((n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = init["R"] * rng.random(n) ** (1.0 / 3.0)
        return d * r[:, None]
    raise ConfigError("init.kind", f"unknown kind {kind!r}")


def initial_energy(init: dict) -> float:
    """E0 = int |v|^2 f0(v) dv."""
    kind = init["kind"]
    if kind == "maxwellian":
        return 3.0 * init["T0"]
    if kind == "bimodal":
        return 3.0 * init["T0"] + init["offset"] ** 2
    if kind == "ball":
        return 0.6 * init["R"] ** 2
    raise ConfigError("init.kind", f"unknown kind {kind!r}")


def stream(seed: int, realization: int, purpose: int = SIM_STREAM) -> np.random.Generator:
    """Independent generator for (seed, realization, purpose) via SeedSequence spawn keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(realization), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))
