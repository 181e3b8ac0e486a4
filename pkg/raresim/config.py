"""
Centralized configuration loader for raresim.
Reads config.toml from the first found config directory:
  1. $RARESIM_CONFIG_DIR environment variable
  2. ./config/  (standalone repo usage)
  3. ../config/ relative to the package
Missing file → every section takes its dataclass defaults.
"""
import logging
import os
import tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

logger = logging.getLogger(__name__)

ENV_VAR = "RARESIM_CONFIG_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


# --- Config search ---
def _find_config_dir() -> Path:
    """Find config directory by priority."""
    env_dir = os.environ.get(ENV_VAR)
    if env_dir:
        p = Path(env_dir)
        if p.exists():
            return p

    local = Path.cwd() / "config"
    if local.exists() and (local / "config.toml").exists():
        return local

    pkg_config = Path(__file__).parent.parent / "config"
    if pkg_config.exists() and (pkg_config / "config.toml").exists():
        return pkg_config

    # Fallback (defaults if missing)
    return pkg_config


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


# --- Data classes ---
@dataclass(frozen=True)
class VehicleConfig:
    v_long: float = 20.0               # 纵向速度 m/s
    mass: float = 2000.0               # kg
    yaw_inertia: float = 2000.0        # I_z
    stiffness_front: float = 6.0e4     # cornering stiffness, front
    stiffness_rear: float = 6.0e4
    dist_front: float = 2.0            # CoG → front axle (m)
    dist_rear: float = 2.0
    length: float = 4.508
    width: float = 1.61
    jump_magnitude: float = 1.0e-6     # Poisson jump size on x, y
    diffusion_magnitude: float = 1.0e-2
    jump_rate: float = 0.5             # Poisson rate (1/s)
    max_steer: float = 0.5             # |u| clamp (rad)

    def validate(self) -> None:
        for name in ("v_long", "mass", "yaw_inertia", "stiffness_front", "stiffness_rear",
                     "dist_front", "dist_rear", "length", "width", "max_steer"):
            _require(getattr(self, name) > 0, f"vehicle.{name}", "must be > 0")
        for name in ("jump_magnitude", "diffusion_magnitude", "jump_rate"):
            _require(getattr(self, name) >= 0, f"vehicle.{name}", "must be >= 0")


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 1.5e-3
    kd: float = 1.0e-2

    def validate(self) -> None:
        _require(self.kp >= 0, "controller.kp", "must be >= 0")
        _require(self.kd >= 0, "controller.kd", "must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    lane_width: float = 3.5
    mean_delay: float = 0.6            # Rayleigh scale μ_d (s)
    ttc_threshold: float = 10.0        # s
    awareness_ratio: float = 1.5825    # μ_r, 0 disables awareness
    er_decision_time: float = 0.0      # T_lc for ER
    el_decision_time: float = 0.2      # T_lc for EL
    x_offset: float = 5.0              # EL longitudinal offset (m)
    settle_tolerance: float = 0.98     # |y - y_target| for lane settle (m)
    ttc_order: int = 1                 # motion order k used by ER's TTC check
    ttc_policy: str = "min_positive"   # or "literal"
    rear_end_angle_deg: float = 10.0

    def validate(self) -> None:
        _require(self.lane_width > 0, "scenario.lane_width", "must be > 0")
        _require(self.mean_delay > 0, "scenario.mean_delay", "must be > 0")
        _require(self.ttc_threshold > 0, "scenario.ttc_threshold", "must be > 0")
        _require(self.awareness_ratio >= 0, "scenario.awareness_ratio", "must be >= 0")
        _require(self.er_decision_time >= 0, "scenario.er_decision_time", "must be >= 0")
        _require(self.el_decision_time >= 0, "scenario.el_decision_time", "must be >= 0")
        _require(self.settle_tolerance > 0, "scenario.settle_tolerance", "must be > 0")
        _require(isinstance(self.ttc_order, int) and self.ttc_order >= 1,
                 "scenario.ttc_order", "must be an integer >= 1")
        _require(self.ttc_policy in ("min_positive", "literal"),
                 "scenario.ttc_policy", "must be 'min_positive' or 'literal'")
        _require(0 < self.rear_end_angle_deg < 180, "scenario.rear_end_angle_deg",
                 "must be in (0, 180)")


@dataclass(frozen=True)
class LevelsConfig:
    ratios: tuple = (2.0, 1.8, 1.6, 1.4, 1.2, 1.0)   # r_k, last one is the collision set

    def validate(self) -> None:
        _require(len(self.ratios) >= 1, "levels.ratios", "must not be empty")
        _require(all(r > 0 for r in self.ratios), "levels.ratios", "must be > 0")
        _require(all(a > b for a, b in zip(self.ratios, self.ratios[1:])),
                 "levels.ratios", "must be strictly decreasing")


@dataclass(frozen=True)
class EstimatorConfig:
    particles: int = 100               # N_P
    trials: int = 100                  # independent trials per μ_r
    horizon: float = 12.0              # T (s)
    dt: float = 0.01                   # Δ (s)
    mc_runs: int = 100_000
    mc_batch: int = 10_000             # runs simulated per vectorised batch
    seed: int = 20240101
    budget_policy: str = "redraw"      # "redraw" | "carry" q at each level start
    block_steps: int = 64              # noise rows buffered per stream refill

    def validate(self) -> None:
        _require(self.particles >= 1, "estimator.particles", "must be >= 1")
        _require(self.trials >= 1, "estimator.trials", "must be >= 1")
        _require(self.horizon >= 0, "estimator.horizon", "must be >= 0")
        _require(self.dt > 0, "estimator.dt", "must be > 0")
        _require(self.mc_runs >= 1, "estimator.mc_runs", "must be >= 1")
        _require(self.mc_batch >= 1, "estimator.mc_batch", "must be >= 1")
        _require(self.seed >= 0, "estimator.seed", "must be >= 0")
        _require(self.budget_policy in ("carry", "redraw"), "estimator.budget_policy",
                 "must be 'carry' or 'redraw'")
        _require(self.block_steps >= 1, "estimator.block_steps", "must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    awareness_ratios: tuple = (1.5825, 1.6275, 1.6725, 1.7, 1.7375)
    methods: tuple = ("ips", "mc")

    def validate(self) -> None:
        _require(len(self.awareness_ratios) >= 1, "sweep.awareness_ratios", "must not be empty")
        _require(all(r >= 0 for r in self.awareness_ratios), "sweep.awareness_ratios",
                 "must be >= 0")
        _require(len(self.methods) >= 1 and set(self.methods) <= {"ips", "mc"},
                 "sweep.methods", "must be a non-empty subset of ['ips', 'mc']")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"
    format: str = "all"                # "csv" | "json" | "all"
    workers: int = 1

    def validate(self) -> None:
        _require(self.format in ("csv", "json", "all"), "output.format",
                 "must be 'csv', 'json' or 'all'")
        _require(self.workers >= 1, "output.workers", "must be >= 1")


@dataclass(frozen=True)
class RareSimConfig:
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    levels: LevelsConfig = field(default_factory=LevelsConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "RareSimConfig":
        for f in fields(self):
            getattr(self, f.name).validate()
        return self


# Field paths whose default value is the published one; everything else is ours.
PAPER_FIELDS = frozenset({
    "vehicle.v_long", "vehicle.mass", "vehicle.yaw_inertia", "vehicle.stiffness_front",
    "vehicle.stiffness_rear", "vehicle.dist_front", "vehicle.dist_rear", "vehicle.length",
    "vehicle.width", "vehicle.jump_magnitude", "vehicle.diffusion_magnitude",
    "vehicle.jump_rate",
    "controller.kp", "controller.kd",
    "scenario.lane_width", "scenario.mean_delay", "scenario.ttc_threshold",
    "scenario.awareness_ratio", "scenario.rear_end_angle_deg",
    "levels.ratios",
    "estimator.particles", "estimator.trials", "estimator.mc_runs",
    "sweep.awareness_ratios",
})


def _build_section(cls, data: dict, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    values = {}
    defaults = cls()
    for key, value in data.items():
        default = getattr(defaults, key)
        path = f"{name}.{key}"
        if isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list")
            value = tuple(value)
        elif isinstance(default, bool) or isinstance(default, str):
            if not isinstance(value, type(default)):
                raise ConfigError(f"{path}: expected {type(default).__name__}")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: expected an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: expected a number")
            value = float(value)
        values[key] = value
    return cls(**values)


def config_from_dict(raw: dict) -> RareSimConfig:
    """Build and validate a config from parsed TOML."""
    sections = {f.name: f.type for f in fields(RareSimConfig)}
    unknown = sorted(set(raw) - set(sections))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    kwargs = {}
    for f in fields(RareSimConfig):
        if f.name in raw:
            kwargs[f.name] = _build_section(type(f.default_factory()), raw[f.name], f.name)
    return RareSimConfig(**kwargs).validate()


def load_config(path: Path) -> RareSimConfig:
    """Load an explicit config file (raises ConfigError / OSError)."""
    path = Path(path)
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    return config_from_dict(raw)


def _load_default() -> RareSimConfig:
    path = _find_config_dir() / "config.toml"
    if not path.exists():
        logger.debug(f"No config at {path}, using defaults")
        return RareSimConfig().validate()
    return load_config(path)


# --- Singleton ---
_CONFIG: Optional[RareSimConfig] = None


def get_config() -> RareSimConfig:
    global _CONFIG
    if _CONFIG is None:
        _CONFIG = _load_default()
    return _CONFIG


def reload_config() -> RareSimConfig:
    global _CONFIG
    _CONFIG = None
    return get_config()


# --- Provenance ---
def flatten(cfg: RareSimConfig) -> dict[str, Any]:
    """{"section.field": value} for every field."""
    out = {}
    for section, values in asdict(cfg).items():
        for key, value in values.items():
            out[f"{section}.{key}"] = value
    return out


def overridden_fields(cfg: RareSimConfig) -> list[str]:
    defaults = flatten(RareSimConfig())
    return sorted(k for k, v in flatten(cfg).items() if defaults[k] != v)


def provenance(cfg: RareSimConfig) -> dict[str, str]:
    """Per field: PAPER, DEFAULT-NOT-IN-PAPER or USER."""
    overridden = set(overridden_fields(cfg))
    out = {}
    for key in flatten(cfg):
        if key in overridden:
            out[key] = "USER"
        elif key in PAPER_FIELDS:
            out[key] = "PAPER"
        else:
            out[key] = "DEFAULT-NOT-IN-PAPER"
    return out


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


def render_defaults(cfg: Optional[RareSimConfig] = None) -> str:
    """Annotated TOML for `print-defaults`."""
    cfg = cfg or RareSimConfig()
    lines = ["# raresim configuration", ""]
    for section, values in asdict(cfg).items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            path = f"{section}.{key}"
            tag = "[PAPER]" if path in PAPER_FIELDS else "[DEFAULT-NOT-IN-PAPER]"
            if isinstance(value, list):
                value = tuple(value)
            lines.append(f"{key} = {_toml_value(value)}  # {tag}")
        lines.append("")
    return "\n".join(lines)
