"""Scenario configuration: YAML in, validated dataclasses out."""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import yaml

from .planner.policies import POLICIES
from .planner.problem import RadioLimits


class ConfigError(ValueError):
    """Invalid or unparseable configuration; the message names the offending field."""


@dataclass
class GeometryConfig:
    n_bs: int = 4
    bs_spacing: float = 500.0
    road_offset: float = 100.0

    def validate(self, where):
        _require(self.n_bs >= 1, f"{where}.n_bs", "must be >= 1")
        _require(self.bs_spacing > 0, f"{where}.bs_spacing", "must be positive")
        _require(self.road_offset > 0, f"{where}.road_offset", "must be positive")


@dataclass
class WindowConfig:
    n_frames: int = 60
    frame_duration: float = 1.0
    slot_duration: float = 5e-3
    slots_per_frame: int = 200
    total_time: float = 600.0

    def validate(self, where):
        _require(self.n_frames >= 1, f"{where}.n_frames", "must be >= 1")
        _require(self.frame_duration > 0, f"{where}.frame_duration", "must be positive")
        _require(self.slot_duration > 0, f"{where}.slot_duration", "must be positive")
        _require(self.slots_per_frame >= 1, f"{where}.slots_per_frame", "must be >= 1")
        _require(math.isclose(self.slots_per_frame * self.slot_duration, self.frame_duration, rel_tol=1e-9),
                 f"{where}.slots_per_frame", "slots_per_frame * slot_duration must equal frame_duration")
        _require(self.total_time >= self.n_frames * self.frame_duration, f"{where}.total_time",
                 "must cover at least one window")

    @property
    def n_windows(self) -> int:
        return int(math.floor(self.total_time / (self.n_frames * self.frame_duration) + 1e-9))


@dataclass
class RadioConfig:
    p_max: float = 40.0
    k_max: int = 512
    bandwidth: float = 15e3
    rho: float = 0.388
    p_c_per_mhz: float = 72e-3
    p_0_per_mhz: float = 136e-3
    n0_dbm_per_hz: float = -173.0
    phi: float = 1.0

    def validate(self, where):
        _require(self.p_max > 0, f"{where}.p_max", "must be positive")
        _require(self.k_max >= 1, f"{where}.k_max", "must be >= 1")
        _require(self.bandwidth > 0, f"{where}.bandwidth", "must be positive")
        _require(0 < self.rho <= 1, f"{where}.rho", "must lie in (0, 1]")
        _require(self.p_c_per_mhz >= 0, f"{where}.p_c_per_mhz", "must be nonnegative")
        _require(self.p_0_per_mhz >= 0, f"{where}.p_0_per_mhz", "must be nonnegative")
        _require(self.phi >= 1, f"{where}.phi", "must be >= 1")

    def limits(self, frame_duration: float = 1.0) -> RadioLimits:
        mhz = self.bandwidth / 1e6
        return RadioLimits(
            p_ave=self.p_max, k_max=float(self.k_max), p_c=self.p_c_per_mhz * mhz,
            p_0=self.p_0_per_mhz * mhz * self.k_max, rho=self.rho, bandwidth=self.bandwidth,
            noise_power=10 ** (self.n0_dbm_per_hz / 10.0) * 1e-3 * self.bandwidth, phi=self.phi,
            frame_duration=frame_duration)


@dataclass
class UsersConfig:
    n_vod: int = 5
    n_rt: int = 5
    initial_velocity: float = 20.0
    initial_positions: Optional[list] = None
    q_max_segments: float = 3.0

    def validate(self, where):
        _require(self.n_vod >= 0, f"{where}.n_vod", "must be >= 0")
        _require(self.n_rt >= 0, f"{where}.n_rt", "must be >= 0")
        _require(self.initial_velocity >= 0, f"{where}.initial_velocity", "must be >= 0")
        _require(self.q_max_segments > 0, f"{where}.q_max_segments", "must be positive")
        if self.initial_positions is not None:
            _require(isinstance(self.initial_positions, list)
                     and len(self.initial_positions) == self.n_vod + self.n_rt,
                     f"{where}.initial_positions", "must list one position per user")


@dataclass
class VideoConfig:
    source: str = "synthetic"
    path: Optional[str] = None
    base_rate: float = 800e3
    enhancement_rate: float = 240e3
    jitter: float = 0.2

    def validate(self, where):
        _require(self.source in ("synthetic", "file"), f"{where}.source", "must be 'synthetic' or 'file'")
        _require(self.source != "file" or bool(self.path), f"{where}.path", "required when source is 'file'")
        _require(self.base_rate > 0 and self.enhancement_rate > 0, f"{where}.base_rate", "rates must be positive")
        _require(0 <= self.jitter < 1, f"{where}.jitter", "must lie in [0, 1)")


@dataclass
class TrafficConfig:
    video: VideoConfig = field(default_factory=VideoConfig)
    arrival_rate: float = 500.0
    mean_packet_bits: float = 4000.0
    d_max: float = 0.05
    eps_d: float = 0.02

    def validate(self, where):
        self.video.validate(f"{where}.video")
        _require(self.arrival_rate > 0, f"{where}.arrival_rate", "must be positive")
        _require(self.mean_packet_bits > 0, f"{where}.mean_packet_bits", "must be positive")
        _require(self.d_max > 0, f"{where}.d_max", "must be positive")
        _require(0 < self.eps_d < 1, f"{where}.eps_d", "must lie in (0, 1)")


@dataclass
class MobilityConfig:
    q: float = 0.0
    v_min: float = 0.0
    v_max: float = 30.0
    dv: float = 1.0

    def validate(self, where):
        _require(0 <= self.q <= 0.5, f"{where}.q", "must lie in [0, 0.5]")
        _require(self.dv > 0, f"{where}.dv", "must be positive")
        _require(self.v_max >= self.v_min >= 0, f"{where}.v_max", "must be >= v_min >= 0")


@dataclass
class SimulationConfig:
    seeds: list = field(default_factory=lambda: [1])
    scenario_seed: Optional[int] = None
    vod_delivery: str = "coded"

    def validate(self, where):
        _require(isinstance(self.seeds, list) and len(self.seeds) >= 1
                 and all(isinstance(s, int) and s >= 0 for s in self.seeds),
                 f"{where}.seeds", "must be a nonempty list of nonnegative integers")
        _require(self.scenario_seed is None or (isinstance(self.scenario_seed, int) and self.scenario_seed >= 0),
                 f"{where}.scenario_seed", "must be null or a nonnegative integer")
        _require(self.vod_delivery in ("coded", "realized"), f"{where}.vod_delivery",
                 "must be 'coded' or 'realized'")


@dataclass
class ScenarioConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    users: UsersConfig = field(default_factory=UsersConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    policies: list = field(default_factory=lambda: ["optimal"])
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def validate(self) -> "ScenarioConfig":
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "validate"):
                v.validate(f.name)
        _require(isinstance(self.policies, list) and len(self.policies) >= 1, "policies",
                 "must be a nonempty list")
        for p in self.policies:
            _require(p in POLICIES, "policies", f"unknown policy {p!r}; expected one of {', '.join(POLICIES)}")
        _require(len(set(self.policies)) == len(self.policies), "policies", "must not repeat")
        _require(self.users.n_vod + self.users.n_rt >= 0, "users", "invalid user counts")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **dotted) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"users.n_vod": 3})``."""
        data = self.to_dict()
        for key, value in dotted.items():
            set_dotted(data, key, value)
        return from_dict(data)


def _require(cond: bool, name: str, msg: str):
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def _build(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where + '.' if where else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = _coerce(f, value, f"{where}.{name}" if where else name)
    try:
        return cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded by the key check above
        raise ConfigError(f"{where}: {exc}") from exc


def _coerce(f: dataclasses.Field, value, name):
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool) or value is None:
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def from_dict(data: Optional[dict]) -> ScenarioConfig:
    return _build(ScenarioConfig, data or {}, "").validate()


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"parse error in {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    return from_dict(data)


def dump_config(cfg: ScenarioConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"{key}: no such parameter")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"{key}: no such parameter")
    node[parts[-1]] = copy.deepcopy(value)


@dataclass
class SweepSpec:
    """Values for one parameter (or a tuple of parameters moved together)."""

    parameters: list
    values: list
    fixed: dict = field(default_factory=dict)

    def points(self) -> list[dict]:
        out = []
        for v in self.values:
            vals = v if len(self.parameters) > 1 else [v]
            if len(vals) != len(self.parameters):
                raise ConfigError(f"sweep.values: {v!r} does not match parameters {self.parameters}")
            out.append(dict(zip(self.parameters, vals)))
        return out

    def validate_against(self, cfg: ScenarioConfig) -> "SweepSpec":
        data = cfg.to_dict()
        for k in list(self.parameters) + list(self.fixed):
            set_dotted(copy.deepcopy(data), k, None)
        return self


def load_sweep(path) -> tuple[ScenarioConfig, SweepSpec]:
    """A sweep file holds ``base`` (a scenario, or ``config: path``) and a ``sweep`` block."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"parse error in {path}{where}") from exc
    if not isinstance(data, dict):
        raise ConfigError("sweep file must be a mapping")
    unknown = set(data) - {"base", "config", "sweep"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    if "config" in data:
        import os
        base = load_config(os.path.join(os.path.dirname(os.path.abspath(path)), data["config"]))
    else:
        base = from_dict(data.get("base"))
    sw = data.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError("sweep: block required")
    unknown = set(sw) - {"parameter", "parameters", "values", "fixed"}
    if unknown:
        raise ConfigError(f"sweep.{sorted(unknown)[0]}: unknown key")
    params: Union[str, list, None] = sw.get("parameters", sw.get("parameter"))
    if params is None:
        raise ConfigError("sweep.parameter: required")
    params = [params] if isinstance(params, str) else list(params)
    values = sw.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: must be a nonempty list")
    spec = SweepSpec(params, values, dict(sw.get("fixed") or {})).validate_against(base)
    if spec.fixed:
        base = base.replace(**spec.fixed)
    return base, spec
