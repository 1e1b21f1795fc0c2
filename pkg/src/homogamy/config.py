"""Run configuration: a small ``key = value`` file format with ``[section]``
headers, merged with command-line flags (flags > file > defaults).

Every resolved value, defaulted or not, is echoed to a manifest written in the
same grammar, so a manifest can be fed back with ``--config`` to repeat a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Malformed configuration, unknown key or invalid value."""


def _float(text):
    return float(text)


def _int(text):
    return int(text)


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none", "default") else float(text)


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none", "default") else int(text)


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _str(text):
    return str(text).strip()


def _mutant(text):
    value = str(text).strip()
    if value not in ("A", "a"):
        raise ValueError("mutant must be A or a")
    return value


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "b": (_float, 1.0),
        "d": (_float, 0.0),
        "c": (_float, 1.0),
        "K": (_float_list, (1000.0,)),
        "beta1": (_float, 0.5),
        "beta2": (_float, 0.3),
    },
    "simulation": {
        "rho_a": (_float, 0.8),
        "mutant": (_mutant, "A"),
        "eps": (_float, 0.05),
        "mu": (_opt_float, None),
        "seed": (_int, 0),
        "max_events": (_opt_int, None),
        "record_stride": (_int, 0),
    },
    "ensemble": {
        "replicas": (_int, 100),
        "allow_subcritical": (_bool, False),
    },
    "check-rates": {
        "samples": (_int, 10_000),
    },
    "meanfield": {
        "preset": (_str, "none"),
        "z0": (_float_list, (0.3, 0.5, 0.1, 0.2)),
        "t_end": (_float, 400.0),
        "rtol": (_float, 1e-8),
        "atol": (_float, 1e-10),
    },
    "figure1": {
        "points": (_int, 201),
    },
    "output": {
        "out": (_str, "."),
    },
}

KEY_SECTION = {key: section for section, keys in SCHEMA.items() for key in keys}


@dataclass
class RunConfig:
    values: dict
    sources: dict                                   # key -> "default" | "file" | "flag"
    overridden: dict = field(default_factory=dict)  # key -> file value replaced by a flag
    config_path: str = None

    def __getitem__(self, key):
        return self.values[key]

    def model_params(self, K=None):
        from .rates import ModelParams
        v = self.values
        return ModelParams(b=v["b"], d=v["d"], c=v["c"], K=v["K"][0] if K is None else K,
                           beta1=v["beta1"], beta2=v["beta2"])

    def sim_config(self, K=None):
        from .ssa import SimConfig
        v = self.values
        return SimConfig(params=self.model_params(K), rho_A=v["rho_a"], mutant_allele=v["mutant"],
                         eps=v["eps"], mu=v["mu"], seed=v["seed"], max_events=v["max_events"],
                         record_stride=v["record_stride"])


def _parse_value(key, raw):
    parser = SCHEMA[KEY_SECTION[key]][key][0]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from None


def read_config_file(path) -> dict:
    """Parse a config file into ``{key: value}``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEY_SECTION:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if section is not None and KEY_SECTION[key] != section:
            raise ConfigError(f"{path}:{lineno}: key {key!r} belongs to "
                              f"[{KEY_SECTION[key]}], not [{section}]")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def resolve(flags: dict = None, path=None) -> RunConfig:
    """Merge defaults, an optional config file and flags, then validate.

    ``flags`` maps keys to already-typed values; ``None`` entries are ignored.
    """
    values, sources = {}, {}
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            values[key], sources[key] = default, "default"
    file_values = read_config_file(path) if path is not None else {}
    for key, value in file_values.items():
        values[key], sources[key] = value, "file"
    overridden = {}
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in KEY_SECTION:
            raise ConfigError(f"unknown key {key!r}")
        value = _parse_value(key, value) if isinstance(value, str) else value
        if key == "K":
            value = _float_list(value)
        if key in file_values and file_values[key] != value:
            overridden[key] = file_values[key]
        values[key], sources[key] = value, "flag"
    cfg = RunConfig(values, sources, overridden, None if path is None else str(path))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    from .rates import ParameterError
    v = cfg.values
    if not v["K"]:
        raise ConfigError("K: at least one value required")
    try:
        for K in v["K"]:
            cfg.sim_config(K)
    except ParameterError as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid simulation settings: {exc}") from None
    if v["replicas"] < 1:
        raise ConfigError("replicas: must be >= 1")
    if v["samples"] < 1:
        raise ConfigError("samples: must be >= 1")
    if v["points"] < 2:
        raise ConfigError("points: must be >= 2")
    if len(v["z0"]) != 4 or any(x < 0 for x in v["z0"]):
        raise ConfigError("z0: four nonnegative densities required")
    if v["preset"] not in ("none", "prop35"):
        raise ConfigError(f"preset: unknown preset {v['preset']!r}")


def _format(value) -> str:
    if hasattr(value, "item"):         # numpy scalar
        value = value.item()
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(x) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def manifest_text(cfg: RunConfig, derived: dict = None, header: str = None) -> str:
    """Render a resolved config as a reloadable config file."""
    lines = []
    if header:
        lines += [f"# {line}" for line in header.splitlines()]
    if cfg.config_path:
        lines.append(f"# config file: {cfg.config_path}")
    for key, old in cfg.overridden.items():
        lines.append(f"# overridden: {key} = {_format(old)} (file) replaced by "
                     f"{_format(cfg.values[key])} (flag)")
    for key, value in (derived or {}).items():
        lines.append(f"# derived: {key} = {_format(value)}")
    for section, keys in SCHEMA.items():
        lines.append("")
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format(cfg.values[key])}  # {cfg.sources[key]}")
    return "\n".join(lines) + "\n"
