"""Run configuration: flat ``key = value`` text files, env and CLI overrides.

Every field of :class:`SimConfig` is addressable by a config key of the same
name; tier-storage fields use a dotted ``io.`` prefix.  Unknown keys are a
hard error so typos never silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from fractions import Fraction

from .errors import ConfigError

ENV_PREFIX = "HYDROBOX_"


@dataclass
class TierConfig:
    tier1_root: str = ""
    tier2_root: str = ""
    retention_keep: int = 2
    tier1_keep: int = 1
    throttle_bytes_per_s: float = 0.0  # 0 disables throttling
    transfer_workers: int = 2
    retention_mode: str = "count"  # "count" or "window"
    retention_window_s: float = 3600.0

    def validate(self) -> None:
        if self.tier1_root and self.tier1_root == self.tier2_root:
            raise ConfigError("io.tier1_root and io.tier2_root must differ")
        if self.retention_keep < 1 or self.tier1_keep < 1:
            raise ConfigError("retention counts must be >= 1")
        if self.retention_mode not in ("count", "window"):
            raise ConfigError(f"unknown retention mode '{self.retention_mode}'")


@dataclass
class SimConfig:
    # geometry and solver scales
    side_length: float = 1.0
    pm_grid_n: int = 64
    cm_bins_per_pm_cell: Fraction = Fraction(1, 4)  # 1/4 -> bins are 4 PM cells wide
    max_leaf_size: int = 256
    overload_width: float = 0.0  # 0 -> derived from interaction reach at runtime
    n_pm_steps: int = 4
    target_neighbors: int = 64
    force_split_scale: float = 0.0  # 0 -> 2 PM cells
    eos_gamma: float = 5.0 / 3.0
    cfl_number: float = 0.25
    fof_linking_factor: float = 0.168
    io: TierConfig = field(default_factory=TierConfig)
    deterministic: bool = True
    rank_grid: tuple[int, int, int] = (1, 1, 1)

    # run shape
    dt_pm: float = 0.01
    seed: int = 1234
    ic: str = "lattice"  # lattice | sod | clustered
    n_per_dim: int = 12
    perturbation_amplitude: float = 0.0
    workers: int = 1
    lane_width: int = 8
    n_levels: int = 16
    softening: float = 0.0  # 0 -> interparticle spacing / 50
    r_cut_factor: float = 5.0
    enable_gravity: bool = True
    enable_hydro: bool = True
    analysis_cadence: int = 1  # FOF + catalog every k steps; 0 disables
    min_members: int = 10
    dbscan_eps: float = 0.0  # 0 -> DBSCAN not run by the driver
    dbscan_min_pts: int = 5
    output_root: str = "run_output"

    # -- derived scales -------------------------------------------------------

    @property
    def pm_cell(self) -> float:
        return self.side_length / self.pm_grid_n

    @property
    def cm_bin_width(self) -> float:
        return float(self.pm_cell / self.cm_bins_per_pm_cell)

    @property
    def split_scale(self) -> float:
        return self.force_split_scale if self.force_split_scale > 0 else 2.0 * self.pm_cell

    @property
    def r_cut(self) -> float:
        return self.r_cut_factor * self.split_scale

    def softening_for(self, n_particles: int) -> float:
        if self.softening > 0:
            return self.softening
        spacing = self.side_length / max(n_particles, 1) ** (1.0 / 3.0)
        return spacing / 50.0

    def validate(self) -> None:
        if self.side_length <= 0:
            raise ConfigError("side_length must be positive")
        n = self.pm_grid_n
        if n < 2 or (n & (n - 1)) != 0:
            raise ConfigError("pm_grid_n must be a power of two >= 2")
        if self.max_leaf_size < 2:
            raise ConfigError("max_leaf_size must be >= 2")
        if any(g < 1 for g in self.rank_grid):
            raise ConfigError("rank_grid components must be >= 1")
        if self.eos_gamma <= 1.0:
            raise ConfigError("eos_gamma must exceed 1")
        if not (0 < self.cfl_number <= 1):
            raise ConfigError("cfl_number must lie in (0, 1]")
        if self.lane_width < 2 or self.lane_width % 2:
            raise ConfigError("lane_width must be even and >= 2")
        if not (1 <= self.n_levels <= 16):
            raise ConfigError("n_levels must lie in [1, 16]")
        if self.ic not in ("lattice", "sod", "clustered"):
            raise ConfigError(f"unknown ic '{self.ic}'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.io.validate()


# -- parsing -------------------------------------------------------------------

_SIM_FIELDS = {f.name: f for f in fields(SimConfig) if f.name != "io"}
_IO_FIELDS = {f.name: f for f in fields(TierConfig)}


def _parse_value(name: str, text: str, ftype) -> object:
    text = text.strip()
    try:
        if ftype is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if ftype is int:
            return int(text)
        if ftype is float:
            return float(Fraction(text)) if "/" in text else float(text)
        if ftype is Fraction:
            return Fraction(text)
        if ftype is str:
            return text
        if ftype in (tuple, tuple[int, int, int]):
            parts = text.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(text)
            return tuple(int(p) for p in parts)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse value for '{name}': {text!r}") from exc
    raise ConfigError(f"unsupported field type for '{name}'")


def _field_type(f) -> type:
    # dataclass field types arrive as annotations; map the tuple alias
    t = f.type
    if t in ("tuple[int, int, int]",):
        return tuple
    return {"float": float, "int": int, "bool": bool, "str": str,
            "Fraction": Fraction}.get(t, t if isinstance(t, type) else str)


def apply_key(cfg: SimConfig, key: str, raw_value: str) -> None:
    """Set one config key from text, raising on unknown names."""
    if key.startswith("io."):
        sub = key[3:]
        if sub not in _IO_FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
        f = _IO_FIELDS[sub]
        setattr(cfg.io, sub, _parse_value(key, raw_value, _field_type(f)))
        return
    if key not in _SIM_FIELDS:
        raise ConfigError(f"unknown config key '{key}'")
    f = _SIM_FIELDS[key]
    setattr(cfg, key, _parse_value(key, raw_value, _field_type(f)))


def parse_config_text(text: str, cfg: SimConfig | None = None) -> SimConfig:
    cfg = cfg if cfg is not None else SimConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        apply_key(cfg, key.strip(), value)
    return cfg


def load_config(path: str, overrides: list[str] | None = None,
                env: dict | None = None) -> SimConfig:
    """Read a config file, then apply HYDROBOX_* env vars, then --set overrides."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        apply_key(cfg, key, value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        apply_key(cfg, key.strip(), value)
    cfg.validate()
    return cfg


def config_text(cfg: SimConfig) -> str:
    """Canonical text form (sorted keys) used for hashing and provenance."""
    lines = []
    for name in sorted(_SIM_FIELDS):
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = " ".join(str(v) for v in value)
        lines.append(f"{name} = {value}")
    for name in sorted(_IO_FIELDS):
        lines.append(f"io.{name} = {getattr(cfg.io, name)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()[:16]
