"""Simulation configuration: a line-oriented ``key = value`` format.

Lists are comma separated and ``#`` starts a comment. Every key is optional;
missing keys take the reference operating point (K = 20 equal-power users,
length-31 Gold codes, fd*Tb = 0.003, mu = 1e-4).

Example::

    users = 20
    receivers = mf, sic, ba_sic
    ebno_db = 0, 10, 20, 30
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .receivers import KINDS, ReceiverConfig
from .sequences import DEFAULT_PREFERRED_PAIRS

MU_REFERENCES = ("chip", "code")
BAPIC_WEIGHTS = ("per_stage", "shared")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class SimConfig:
    users: int = 20
    degree: int = 5
    fd_tb: float = 0.003
    mu: float = 1e-4
    # "chip": mu is referenced to unit-amplitude chips, i.e. a step of mu * N on
    # unit-energy codes; "code": mu is applied as-is.
    mu_reference: str = "chip"
    receivers: tuple[str, ...] = KINDS
    stages: int = 3
    bapic_weights: str = "per_stage"
    ebno_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    symbols: int = 20000
    trials: int = 10
    seed: int = 1
    sinusoids: int = 64
    workers: int = 1
    output: str = "results.csv"

    def __post_init__(self):
        validate(self)

    @property
    def spreading_factor(self) -> int:
        return 2**self.degree - 1

    @property
    def family_size(self) -> int:
        return 2**self.degree + 1

    @property
    def effective_mu(self) -> float:
        return self.mu * self.spreading_factor if self.mu_reference == "chip" else self.mu

    def receiver_configs(self) -> list[ReceiverConfig]:
        return [
            ReceiverConfig(
                kind,
                stages=self.stages,
                mu=self.effective_mu,
                per_stage_weights=self.bapic_weights == "per_stage",
            )
            for kind in self.receivers
        ]

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(_fmt(x) for x in v)
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _check(cond: bool, msg: str, lines: dict, key: str):
    if not cond:
        raise ConfigError(msg, lines.get(key))


def validate(cfg: SimConfig, lines: dict | None = None) -> None:
    lines = lines or {}
    _check(cfg.degree in DEFAULT_PREFERRED_PAIRS, f"degree must be one of {sorted(DEFAULT_PREFERRED_PAIRS)}", lines, "degree")
    _check(
        1 <= cfg.users <= cfg.family_size,
        f"users = {cfg.users} outside [1, {cfg.family_size}] (Gold family size for degree {cfg.degree})",
        lines,
        "users",
    )
    _check(0.0 < cfg.fd_tb < 0.5, "fd_tb must lie in (0, 0.5)", lines, "fd_tb")
    _check(cfg.mu > 0, "mu must be positive", lines, "mu")
    _check(cfg.mu_reference in MU_REFERENCES, f"mu_reference must be one of {MU_REFERENCES}", lines, "mu_reference")
    _check(len(cfg.receivers) > 0, "at least one receiver is required", lines, "receivers")
    for r in cfg.receivers:
        _check(r in KINDS, f"unknown receiver {r!r}; expected one of {KINDS}", lines, "receivers")
    _check(len(set(cfg.receivers)) == len(cfg.receivers), "duplicate receiver", lines, "receivers")
    _check(cfg.stages >= 1, "stages must be >= 1", lines, "stages")
    _check(cfg.bapic_weights in BAPIC_WEIGHTS, f"bapic_weights must be one of {BAPIC_WEIGHTS}", lines, "bapic_weights")
    _check(len(cfg.ebno_db) > 0, "at least one Eb/N0 point is required", lines, "ebno_db")
    _check(cfg.symbols >= 1000, "symbols must be >= 1000 for metric runs", lines, "symbols")
    _check(cfg.trials >= 1, "trials must be >= 1", lines, "trials")
    _check(cfg.seed >= 0, "seed must be non-negative", lines, "seed")
    _check(cfg.sinusoids >= 32, "sinusoids must be >= 32", lines, "sinusoids")
    _check(cfg.workers >= 1, "workers must be >= 1", lines, "workers")


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def _convert(key: str, raw: str, line: int):
    f = _FIELDS[key]
    default = f.default
    try:
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}", line) from None


def parse_config(text: str, **overrides) -> SimConfig:
    """Parse configuration text; ``overrides`` (already typed) win over file values."""
    values: dict = {}
    lines: dict = {}
    for no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", no)
        values[key] = _convert(key, value, no)
        lines[key] = no
    values.update({k: v for k, v in overrides.items() if v is not None})
    for k in overrides:
        lines.pop(k, None)
    # validate with line numbers before the dataclass re-validates without them
    probe = object.__new__(SimConfig)
    for f in dataclasses.fields(SimConfig):
        object.__setattr__(probe, f.name, values.get(f.name, f.default))
    validate(probe, lines)
    return SimConfig(**values)
