"""Benchmark run configuration.

Config files are YAML. Schema (all keys except ``data`` and ``methods``
are optional)::

    data:
      generator: two-state        # builtin: two-state | swissroll
      length: 100000
      overrides: {}               # HmmSpec fields, e.g. emission_means
      # or user data instead of a generator:
      # files: [traj0.csv, traj1.csv]
      # states: [traj0_states.csv, traj1_states.csv]   # optional reference
      # n_states: 2
    methods:
      tae:  {dim: 1, hidden: [50], dropout_p: 0.5, max_epochs: 50}
      tica: {dim: 1, kinetic_map: true}
      pca:  {dim: 1}
    lags: [1, 2, 5, 10]
    repetitions: 20
    seed: 0                       # repetition i uses seed + i
    split: {train_fraction: 0.6666666666666666, n_blocks: 12}
    msm:
      k: 50
      lags: [1, 2, 5, 10]
      n_timescales: 1
      reversible: true
      stride: 5                   # fit centers on every stride-th frame
      transform_lags: [1]         # encodings used for ITS; default: all lags
    output: results/two_state
"""

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import DataError
from .evaluation import MsmSettings, ProtocolConfig
from .io import read_csv, read_states

KNOWN_METHODS = ("tae", "tica", "tcca", "pca")


class ConfigError(DataError):
    exit_code = 1


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @property
    def hash(self):
        return config_hash(self.raw)

    @property
    def output(self):
        out = self.raw.get("output", "results")
        return (self.base_dir / out) if not Path(out).is_absolute() else Path(out)

    def protocol(self, repetitions=None, workers=1):
        raw = self.raw
        data = raw["data"]
        if "generator" in data:
            source = {
                "generator": data["generator"],
                "length": int(data.get("length", 100_000)),
                "overrides": data.get("overrides", {}) or {},
            }
        else:
            files = [self.base_dir / f for f in data["files"]]
            source = {"trajectories": [read_csv(f) for f in files]}
            if data.get("states"):
                source["hidden"] = [read_states(self.base_dir / f) for f in data["states"]]
                source["n_states"] = int(data.get("n_states") or
                                         max(int(h.max()) for h in source["hidden"]) + 1)
        split = raw.get("split", {}) or {}
        msm_raw = raw.get("msm")
        settings = None
        its_lags = None
        if msm_raw is not None:
            msm_raw = dict(msm_raw)
            its_lags = msm_raw.pop("transform_lags", None)
            settings = MsmSettings(
                k=int(msm_raw.get("k", 50)),
                lags=tuple(int(l) for l in msm_raw.get("lags", (1, 2, 5, 10))),
                n_timescales=int(msm_raw.get("n_timescales", 1)),
                reversible=bool(msm_raw.get("reversible", True)),
                stride=int(msm_raw.get("stride", 1)),
                max_iter=int(msm_raw.get("max_iter", 200)),
            )
        return ProtocolConfig(
            source=source,
            methods={k: dict(v or {}) for k, v in raw["methods"].items()},
            lags=tuple(int(l) for l in raw.get("lags", (1,))),
            repetitions=int(repetitions if repetitions is not None else raw.get("repetitions", 20)),
            base_seed=int(raw.get("seed", 0)),
            train_fraction=float(split.get("train_fraction", 2.0 / 3.0)),
            n_blocks=int(split.get("n_blocks", 12)),
            msm=settings,
            its_lags=its_lags,
            workers=workers,
        )


def config_hash(raw):
    """SHA-256 of the canonical JSON form of a parsed config."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def bundled_configs():
    root = resources.files("slowcv") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_config_path(name):
    """A filesystem path, or the name of a bundled config (``two_state``)."""
    path = Path(name)
    if path.exists():
        return path
    stem = path.name[:-4] if path.name.endswith(".cfg") else path.name
    candidate = resources.files("slowcv") / "configs" / f"{stem}.cfg"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"config {name!r} not found (bundled: {', '.join(bundled_configs())})")


def validate(raw, base_dir):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    for key in ("data", "methods"):
        if key not in raw:
            raise ConfigError(f"config is missing the '{key}' section")
    data = raw["data"]
    if "generator" not in data and "files" not in data:
        raise ConfigError("data needs either 'generator' or 'files'")
    for f in list(data.get("files", [])) + list(data.get("states", []) or []):
        if not (base_dir / f).exists():
            raise ConfigError(f"referenced file does not exist: {f}")
    unknown = set(raw["methods"]) - set(KNOWN_METHODS)
    if unknown:
        raise ConfigError(f"unknown methods: {sorted(unknown)}")
    lags = raw.get("lags", [1])
    if any(int(l) < 0 for l in lags):
        raise ConfigError("lags must be non-negative")
    if int(raw.get("repetitions", 20)) < 1:
        raise ConfigError("repetitions must be at least 1")


def load_config(name):
    path = resolve_config_path(name)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    base_dir = path.parent if Path(name).exists() else Path.cwd()
    validate(raw, base_dir)
    return RunConfig(raw, base_dir)
