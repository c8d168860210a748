"""Scenario description and its YAML file format.

Keys carry their unit in the name (``duration_s``, ``tx_power_dbm``). Any
leaf can be overridden from the command line with a dotted path, for
example ``params.r_b=-5`` or ``radio.tx_power_dbm=17``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from caparrot.channel import ChannelModel, Friis, Nakagami, RadioConfig, TwoRayGround, channel_name
from caparrot.mobility import PredictionConfig, Vec3
from caparrot.routing.params import ParameterSet, TimerConfig

VARIANTS = ("ca-parrot", "parrot-fixed", "geo-baseline")


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Flow:
    source: int = 0
    destination: int = 9
    bitrate_bps: float = 2e6
    packet_size_bytes: int = 1000
    start_s: float = 5.0

    @property
    def interval(self) -> float:
        return self.packet_size_bytes * 8.0 / self.bitrate_bps


@dataclass(frozen=True)
class Mobility:
    speed_kmh: float = 50.0
    waypoint_seed: int | None = None
    positions_m: tuple[Vec3, ...] | None = None  # static placement, overrides waypoints

    @property
    def speed(self) -> float:
        return self.speed_kmh / 3.6


@dataclass(frozen=True)
class Adaptation:
    enabled: bool = True
    model_file: str | None = None
    window: int = 50
    backoff_cap: int = 64


@dataclass(frozen=True)
class Scenario:
    playground_m: Vec3 = Vec3(500.0, 500.0, 250.0)
    nodes: int = 10
    duration_s: float = 900.0
    radio: RadioConfig = RadioConfig()
    channel: ChannelModel = Friis(2.75)
    mobility: Mobility = Mobility()
    traffic: tuple[Flow, ...] = (Flow(),)
    timers: TimerConfig = TimerConfig()
    prediction: PredictionConfig = PredictionConfig()
    variant: str = "ca-parrot"
    params: ParameterSet = ParameterSet(r_b=-5.0, alpha=0.5, gamma0=0.8, lam=1, omega=1)
    adaptation: Adaptation = Adaptation()
    link_rate_bps: float = 54e6
    processing_delay_s: float = 0.0005
    ttl: int = 32
    kpi_interval_s: float = 1.0

    def __post_init__(self) -> None:
        if not self.duration_s > 0:
            raise ScenarioError("duration_s must be positive")
        if self.nodes < 2:
            raise ScenarioError("a scenario needs at least 2 nodes")
        if self.variant not in VARIANTS:
            raise ScenarioError(f"variant must be one of {', '.join(VARIANTS)}")
        if not all(v > 0 for v in self.playground_m):
            raise ScenarioError("playground dimensions must be positive")
        for f in self.traffic:
            if not (0 <= f.source < self.nodes and 0 <= f.destination < self.nodes):
                raise ScenarioError(f"flow endpoints {f.source}->{f.destination} out of range")
            if f.source == f.destination:
                raise ScenarioError("flow source and destination must differ")
            if not (f.bitrate_bps > 0 and f.packet_size_bytes > 0):
                raise ScenarioError("flow bitrate and packet size must be positive")
        pos = self.mobility.positions_m
        if pos is not None and len(pos) != self.nodes:
            raise ScenarioError("mobility.positions_m needs one position per node")

    @property
    def bounds(self) -> tuple[Vec3, Vec3]:
        return Vec3(0.0, 0.0, 0.0), self.playground_m

    @property
    def adaptive(self) -> bool:
        return self.variant == "ca-parrot" and self.adaptation.enabled


# -- dict conversion ---------------------------------------------------------

def _channel_to_obj(model: ChannelModel) -> Any:
    name = channel_name(model)
    if name is not None:
        return name
    if isinstance(model, Friis):
        return {"model": "friis", "exponent": model.exponent}
    if isinstance(model, Nakagami):
        return {"model": "nakagami", "exponent": model.exponent, "m": model.m}
    return {"model": "tworay"}


def _channel_from_obj(obj: Any) -> ChannelModel:
    from caparrot.channel import channel_from_name

    if isinstance(obj, str):
        return channel_from_name(obj)
    if isinstance(obj, dict):
        obj = dict(obj)
        kind = obj.pop("model", None)
        cls = {"friis": Friis, "tworay": TwoRayGround, "nakagami": Nakagami}.get(kind)
        if cls is None:
            raise ScenarioError(f"unknown channel model {kind!r}")
        return cls(**obj)
    raise ScenarioError("channel must be a prototype name or a mapping")


def to_dict(s: Scenario) -> dict:
    mob = s.mobility
    return {
        "playground_m": list(s.playground_m),
        "nodes": s.nodes,
        "duration_s": s.duration_s,
        "radio": {
            "tx_power_dbm": s.radio.tx_power_dbm,
            "sensitivity_dbm": s.radio.sensitivity_dbm,
            "frequency_hz": s.radio.frequency_hz,
            "range_exponent": s.radio.range_exponent,
        },
        "channel": _channel_to_obj(s.channel),
        "mobility": {
            "speed_kmh": mob.speed_kmh,
            "waypoint_seed": mob.waypoint_seed,
            "positions_m": None if mob.positions_m is None else [list(p) for p in mob.positions_m],
        },
        "traffic": [
            {"source": f.source, "destination": f.destination, "bitrate_bps": f.bitrate_bps,
             "packet_size_bytes": f.packet_size_bytes, "start_s": f.start_s}
            for f in s.traffic
        ],
        "timers": {"chirp_interval_s": s.timers.chirp_interval,
                   "commit_interval_s": s.timers.commit_interval},
        "prediction": {"tau_s": s.prediction.tau, "step_count": s.prediction.step_count,
                       "history_samples": s.prediction.history_samples},
        "variant": s.variant,
        "params": {"r_b": s.params.r_b, "alpha": s.params.alpha, "gamma0": s.params.gamma0,
                   "lam": s.params.lam, "omega": s.params.omega},
        "adaptation": {"enabled": s.adaptation.enabled, "model_file": s.adaptation.model_file,
                       "window": s.adaptation.window, "backoff_cap": s.adaptation.backoff_cap},
        "link_rate_bps": s.link_rate_bps,
        "processing_delay_s": s.processing_delay_s,
        "ttl": s.ttl,
        "kpi_interval_s": s.kpi_interval_s,
    }


DEFAULT_DICT = to_dict(Scenario())


def _check_keys(obj: dict, template: dict, prefix: str = "") -> None:
    for key, value in obj.items():
        path = f"{prefix}{key}"
        if key not in template:
            raise ScenarioError(f"unknown key {path!r}")
        sub = template[key]
        if isinstance(sub, dict) and key != "channel":
            if not isinstance(value, dict):
                raise ScenarioError(f"{path!r} must be a mapping")
            _check_keys(value, sub, path + ".")


def from_dict(obj: dict) -> Scenario:
    """Build a scenario; missing keys take the default evaluation setup."""
    if not isinstance(obj, dict):
        raise ScenarioError("scenario file must contain a mapping")
    _check_keys(obj, DEFAULT_DICT)
    d = copy.deepcopy(DEFAULT_DICT)
    for key, value in obj.items():
        if isinstance(d.get(key), dict) and key != "channel" and isinstance(value, dict):
            d[key].update(value)
        else:
            d[key] = value
    try:
        r, m, t, p, a = d["radio"], d["mobility"], d["timers"], d["prediction"], d["adaptation"]
        positions = m["positions_m"]
        flows = []
        for f in d["traffic"]:
            extra = set(f) - set(DEFAULT_DICT["traffic"][0])
            if extra:
                raise ScenarioError(f"unknown key 'traffic.{sorted(extra)[0]}'")
            flows.append(Flow(**{**DEFAULT_DICT["traffic"][0], **f}))
        return Scenario(
            playground_m=Vec3(*map(float, d["playground_m"])),
            nodes=int(d["nodes"]),
            duration_s=float(d["duration_s"]),
            radio=RadioConfig(float(r["tx_power_dbm"]), float(r["sensitivity_dbm"]),
                              float(r["frequency_hz"]), float(r["range_exponent"])),
            channel=_channel_from_obj(d["channel"]),
            mobility=Mobility(float(m["speed_kmh"]), m["waypoint_seed"],
                              None if positions is None
                              else tuple(Vec3(*map(float, p)) for p in positions)),
            traffic=tuple(flows),
            timers=TimerConfig(float(t["chirp_interval_s"]), float(t["commit_interval_s"])),
            prediction=PredictionConfig(float(p["tau_s"]), int(p["step_count"]),
                                        int(p["history_samples"])),
            variant=str(d["variant"]),
            params=ParameterSet(**{k: d["params"][k] for k in ("r_b", "alpha", "gamma0")},
                                lam=int(d["params"]["lam"]), omega=int(d["params"]["omega"])),
            adaptation=Adaptation(bool(a["enabled"]), a["model_file"], int(a["window"]),
                                  int(a["backoff_cap"])),
            link_rate_bps=float(d["link_rate_bps"]),
            processing_delay_s=float(d["processing_delay_s"]),
            ttl=int(d["ttl"]),
            kpi_interval_s=float(d["kpi_interval_s"]),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(str(exc)) from None


def override_keys() -> list[str]:
    keys = []

    def walk(obj, prefix):
        for k, v in obj.items():
            if isinstance(v, dict):
                walk(v, f"{prefix}{k}.")
            else:
                keys.append(f"{prefix}{k}")

    walk(DEFAULT_DICT, "")
    return sorted(keys)


def apply_overrides(s: Scenario, overrides: dict[str, Any]) -> Scenario:
    d = to_dict(s)
    valid = set(override_keys())
    for key, value in overrides.items():
        if key not in valid:
            raise ScenarioError(f"unknown override key {key!r}; valid keys: {', '.join(sorted(valid))}")
        parts = key.split(".")
        target = d
        for p in parts[:-1]:
            target = target[p]
        target[parts[-1]] = value
    return from_dict(d)


def parse_override(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ScenarioError(f"override {text!r} is not of the form key=value")
    return key.strip(), yaml.safe_load(value)


# -- files -------------------------------------------------------------------

def _key_marks(node, prefix="", marks=None) -> dict:
    marks = {} if marks is None else marks
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            marks[path] = k.start_mark
            _key_marks(v, path + ".", marks)
    return marks


def loads(text: str) -> Scenario:
    try:
        node = yaml.compose(text)
        obj = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioError(str(exc.problem or exc), mark.line + 1 if mark else None,
                            mark.column + 1 if mark else None) from None
    try:
        return from_dict(obj or {})
    except ScenarioError as exc:
        marks = _key_marks(node)
        for path, mark in sorted(marks.items(), key=lambda kv: -len(kv[0])):
            if f"'{path}'" in str(exc):
                raise ScenarioError(str(exc), mark.line + 1, mark.column + 1) from None
        raise


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(to_dict(s), sort_keys=False)


BUILTIN = ("table1_defaults", "rural", "suburban", "urban")


def load(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or one of the shipped scenarios by name."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUILTIN:
        text = resources.files("caparrot.scenarios").joinpath(f"{path_or_name}.yaml").read_text()
        return loads(text)
    return loads(p.read_text())


def with_params(s: Scenario, params: ParameterSet) -> Scenario:
    return replace(s, params=params)
