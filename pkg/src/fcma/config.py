"""Run configuration: flat ``key = value`` files, optional ``[section]`` headers."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Union

MODES = ("simulate", "oracle", "fit", "mediate", "benchmark")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "mediate"
    scenario: str = "simple"
    subjects: Optional[str] = None
    mediator: Optional[str] = None
    n: int = 1000
    T: int = 100
    R: int = 100
    J: int = 1000
    n_inner: int = 1
    basis_kind: str = "bspline"
    nbasis: Union[int, str] = 5  # integer or "gcv"
    gcv_kmin: int = 4
    gcv_kmax: int = 15
    fpca_threshold: float = 0.90
    q_override: Optional[int] = None
    presmooth: bool = True
    seed: int = 2024
    x_reading: str = "sd"
    mediator_noise: bool = True
    oracle_n: int = 100_000
    max_fail_frac: float = 0.05
    out: str = "fcma_out"
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("n", "T", "R", "J", "n_inner", "gcv_kmin", "gcv_kmax", "oracle_n", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.J < 2:
            raise ConfigError("J must be at least 2")
        if self.T < 2:
            raise ConfigError("T must be at least 2")
        if not 0 < self.fpca_threshold <= 1:
            raise ConfigError("fpca_threshold must be in (0, 1]")
        if self.q_override is not None and self.q_override < 0:
            raise ConfigError("q_override must be nonnegative")
        if isinstance(self.nbasis, str) and self.nbasis != "gcv":
            raise ConfigError("nbasis must be an integer or 'gcv'")
        if isinstance(self.nbasis, int) and self.nbasis < 1:
            raise ConfigError("nbasis must be positive")
        if self.x_reading not in ("sd", "variance"):
            raise ConfigError("x_reading must be 'sd' or 'variance'")
        if self.gcv_kmin > self.gcv_kmax:
            raise ConfigError("gcv_kmin exceeds gcv_kmax")
        if not 0 <= self.max_fail_frac < 1:
            raise ConfigError("max_fail_frac must be in [0, 1)")
        if (self.subjects is None) != (self.mediator is None):
            raise ConfigError("subjects and mediator paths must be given together")

    @property
    def uses_files(self) -> bool:
        return self.subjects is not None

    def replace(self, **changes) -> "RunConfig":
        d = asdict(self)
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**d)

    def items(self):
        return asdict(self).items()


_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name in ("subjects", "mediator", "q_override") and raw.lower() in ("", "none"):
        return None
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if name == "nbasis":
            return "gcv" if raw.lower() == "gcv" else int(raw)
        if "bool" in kind:
            return _BOOL[raw.lower()]
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None
    return raw


def parse_config_text(text: str, base_dir=None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section, raw=True):
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"config key {key!r} given more than once")
            values[key] = _coerce(key, raw)
    if base_dir is not None:
        for key in ("subjects", "mediator"):
            if values.get(key) is not None and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    """Read a config file; relative data paths resolve against the file's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent)
