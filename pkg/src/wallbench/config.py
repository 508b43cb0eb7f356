"""Run configuration: sectioned INI files with a typed schema.

Every key has a type and a default; unknown sections or keys are rejected.
Lists are comma separated. An empty value for an ``optional`` key means None.

Example::

    [oracle]
    n_p = 500

    [regressor]
    name = pod_rbf
    shapes = 1.5, 2, 3
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .flow import DEFAULT_MACHS, P_I_LEVELS

__all__ = ["SCHEMA", "REGRESSORS", "RunConfig", "load_config", "default_config", "config_hash"]

REGRESSORS = ("mlp_pointwise", "lambda_dnn", "tree", "mlp_global", "knn", "pod_rbf", "isomap_rbf")


def _floats(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional_int(s):
    return None if s.strip() in ("", "none", "None") else int(s)


_PARSERS = {"int": int, "float": float, "str": str.strip, "bool": _bool, "floats": _floats, "ints": _ints,
            "optional_int": _optional_int}

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "dataset": {"path": ("str", ""), "include_test_fields": ("bool", True)},
    "oracle": {
        "n_p": ("int", 2000),
        "geometry_seed": ("int", 7),
        "shock_sharpness": ("float", 25.0),
        "cf_scale_exponent": ("float", -0.2),
        "noise_amplitude": ("float", 0.0),
    },
    "gas": {
        "gamma": ("float", 1.4),
        "r_gas": ("float", 287.058),
        "t_ref": ("float", 273.15),
        "mu_ref": ("float", 1.716e-5),
        "s_suth": ("float", 110.4),
        "t_i": ("float", 322.2),
        "target_re": ("float", 5e6),
        "anchor_mach": ("float", 0.85),
        "anchor_p_i": ("float", 2e5),
    },
    "doe": {"machs": ("floats", DEFAULT_MACHS), "p_i": ("floats", P_I_LEVELS)},
    "seeds": {"split": ("int", 0), "inner": ("int", 0), "train": ("int", 0), "tune": ("int", 0)},
    "regressor": {
        "name": ("str", "knn"),
        "inner_fraction": ("float", 0.75),
        # neural networks
        "hidden_sizes": ("ints", (64, 64)),
        "geo_branch": ("ints", (32, 32)),
        "cond_branch": ("ints", (32, 32)),
        "trunk": ("ints", (64,)),
        "activation": ("str", "leaky_relu"),
        "leaky_slope": ("float", 0.01),
        "dropout": ("float", 0.0),
        "l2": ("float", 0.0),
        "lr": ("float", 1e-3),
        "lr_decay": ("float", 0.99),
        "batch_fraction": ("float", 0.01),
        "epochs": ("int", 20),
        "global_epochs": ("int", 300),
        "global_lr": ("float", 3e-3),
        "global_batch_fraction": ("float", 0.1),
        "max_rows": ("int", 0),
        # tree
        "max_depth": ("optional_int", None),
        "min_samples_leaf": ("int", 1),
        # global regressors
        "k": ("int", 0),
        "k_range": ("ints", tuple(range(2, 13))),
        "energy_threshold": ("float", 0.99),
        "kernel": ("str", "gaussian"),
        "shapes": ("floats", (1.5, 2.0, 3.0, 4.0, 6.0, 8.0)),
        "reg": ("float", 0.0),
        "latent_dim": ("int", 3),
        "k_graph": ("int", 10),
        "k_back": ("int", 0),
    },
    "tune": {"budget": ("int", 8)},
    "evaluate": {"weighted_mean": ("bool", False)},
    "output": {"dir": ("str", "")},
}

# sections that determine generated data; paths are excluded so the hash is location independent
HASHED_FOR_GENERATE = ("oracle", "gas", "doe", "seeds")


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]

    def __getitem__(self, section):
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values[section][key] = value

    def to_dict(self, sections=None) -> dict:
        names = sections or sorted(self.values)
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values[s].items())}
                for s in names}


def default_config() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def load_config(path=None) -> RunConfig:
    """Defaults overlaid with the INI file at ``path`` (if any)."""
    cfg = default_config()
    if path is None:
        return cfg
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]; known: {sorted(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kind = SCHEMA[section][key][0]
            try:
                cfg.values[section][key] = _PARSERS[kind](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r} is not a valid {kind}") from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    name = cfg.get("regressor", "name")
    if name not in REGRESSORS:
        raise ConfigError(f"unknown regressor {name!r}; valid: {', '.join(REGRESSORS)}")
    if not 0.0 < cfg.get("regressor", "inner_fraction") < 1.0:
        raise ConfigError("[regressor] inner_fraction must be in (0, 1)")
    if cfg.get("tune", "budget") < 1:
        raise ConfigError("[tune] budget must be >= 1")
    for key in ("split", "inner", "train", "tune"):
        if not 0 <= cfg.get("seeds", key) < 2**64:
            raise ConfigError(f"[seeds] {key} must be an unsigned 64-bit integer")


def config_hash(cfg: RunConfig, sections=HASHED_FOR_GENERATE) -> str:
    blob = json.dumps(cfg.to_dict(sections), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
