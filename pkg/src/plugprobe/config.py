"""Toolkit configuration: one JSON file validated strictly up front.

Every section is optional and falls back to the built-in defaults; unknown
keys anywhere are rejected with the offending path in the message, so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataset import DatasetSpec, all_two_load_combos, default_three_load_combos
from .errors import ConfigError
from .loads import JitterSpec, LoadClass, NOMINAL_POWER_W, default_feature_scale
from .network import NetConfig
from .probe import DimmingSchedule
from .waveform import SupplyConfig

ENV_CONFIG_VAR = "PLUGPROBE_CONFIG"


@dataclass
class ExperimentDefaults:
    runs: int = 10
    e1_train_per_combo: int = 70
    e1_test_per_combo: int = 30
    e2_singles_train: int = 160
    e2_multi_train: int = 10
    e2_test_per_combo: int = 90
    e3_runs_per_combo: int = 10
    e3_train_per_combo: int = 70
    mot_singles_train: int = 220
    mot_singles_test: int = 30

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ConfigError(f"experiments.{name} must be >= 0")
        if self.runs < 1 or self.e3_runs_per_combo < 1:
            raise ConfigError("run counts must be >= 1")


@dataclass
class ToolkitConfig:
    """Validated bundle of every knob the toolkit exposes."""

    master_seed: int = 20260801
    supply: SupplyConfig = field(default_factory=SupplyConfig)
    schedule: DimmingSchedule = field(default_factory=DimmingSchedule)
    jitter: JitterSpec = field(default_factory=JitterSpec)
    nominal_power_w: dict = field(default_factory=dict)
    sample_gap_s: float = 10.0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    net: NetConfig = field(default_factory=NetConfig)
    feature_scale: tuple = (0.0, 0.0)  # zeros mean auto (median apparent)
    experiments: ExperimentDefaults = field(default_factory=ExperimentDefaults)

    def resolved_feature_scale(self) -> tuple:
        auto = default_feature_scale(self.nominal_power_w)
        s0 = self.feature_scale[0] or auto
        s1 = self.feature_scale[1] or auto
        return (float(s0), float(s1))


def _require_keys(section: dict, allowed: set, path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{path}.{sorted(unknown)[0]}'")


def _build(section: dict, cls, path: str, **extra):
    allowed = set(cls.__dataclass_fields__) - set(extra)
    _require_keys(section, allowed, path)
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{path}': {exc}") from exc


def _parse_combos(raw, size: int, path: str):
    if raw == "all":
        if size != 2:
            raise ConfigError(f"'{path}': only two-load combos support 'all'")
        return all_two_load_combos()
    if not isinstance(raw, list):
        raise ConfigError(f"'{path}' must be 'all' or a list of label lists")
    combos = []
    for i, entry in enumerate(raw):
        try:
            labels = frozenset(LoadClass.from_label(name) for name in entry)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"'{path}[{i}]': {exc}") from exc
        if len(labels) != size:
            raise ConfigError(f"'{path}[{i}]' must name {size} distinct classes")
        combos.append(labels)
    return combos


def from_dict(doc: dict) -> ToolkitConfig:
    """Build and validate a ToolkitConfig from parsed JSON."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(doc, {"master_seed", "supply", "schedule", "loads", "dataset",
                        "net", "features", "experiments"}, "<root>")

    master_seed = doc.get("master_seed", ToolkitConfig.master_seed)
    if not isinstance(master_seed, int):
        raise ConfigError("'master_seed' must be an integer")

    supply = _build(dict(doc.get("supply", {})), SupplyConfig, "supply")
    sched_raw = dict(doc.get("schedule", {}))
    if "ratios" in sched_raw:
        sched_raw["ratios"] = tuple(sched_raw["ratios"])
    schedule = _build(sched_raw, DimmingSchedule, "schedule")

    loads_raw = dict(doc.get("loads", {}))
    _require_keys(loads_raw, {"jitter", "nominal_power_w", "sample_gap_s"}, "loads")
    jitter = _build(dict(loads_raw.get("jitter", {})), JitterSpec, "loads.jitter")
    sample_gap_s = float(loads_raw.get("sample_gap_s", 10.0))
    if sample_gap_s < 0:
        raise ConfigError("'loads.sample_gap_s' must be >= 0")
    nominal_power_w = {}
    for name, watts in dict(loads_raw.get("nominal_power_w", {})).items():
        try:
            cls = LoadClass.from_label(name)
        except ValueError as exc:
            raise ConfigError(f"'loads.nominal_power_w': {exc}") from exc
        if not isinstance(watts, (int, float)) or watts <= 0:
            raise ConfigError(f"'loads.nominal_power_w.{name}' must be > 0")
        nominal_power_w[cls] = float(watts)

    ds_raw = dict(doc.get("dataset", {}))
    if "two_load_combos" in ds_raw:
        ds_raw["two_load_combos"] = _parse_combos(
            ds_raw["two_load_combos"], 2, "dataset.two_load_combos")
    if "three_load_combos" in ds_raw:
        ds_raw["three_load_combos"] = _parse_combos(
            ds_raw["three_load_combos"], 3, "dataset.three_load_combos")
    if "resistor_powers" in ds_raw:
        ds_raw["resistor_powers"] = {
            LoadClass.from_label(k): float(v)
            for k, v in dict(ds_raw["resistor_powers"]).items()}
    ds_raw.setdefault("master_seed", master_seed)
    dataset = _build(ds_raw, DatasetSpec, "dataset")

    net_raw = dict(doc.get("net", {}))
    for key in ("conv1_kernel", "conv2_kernel"):
        if key in net_raw:
            net_raw[key] = tuple(net_raw[key])
    net = _build(net_raw, NetConfig, "net")

    feat_raw = dict(doc.get("features", {}))
    _require_keys(feat_raw, {"real_power_scale", "apparent_power_scale"}, "features")

    def scale_of(key):
        val = feat_raw.get(key, "auto")
        if val == "auto":
            return 0.0
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"'features.{key}' must be > 0 or 'auto'")
        return float(val)

    feature_scale = (scale_of("real_power_scale"), scale_of("apparent_power_scale"))

    experiments = _build(dict(doc.get("experiments", {})), ExperimentDefaults,
                         "experiments")

    return ToolkitConfig(
        master_seed=master_seed,
        supply=supply,
        schedule=schedule,
        jitter=jitter,
        nominal_power_w=nominal_power_w,
        sample_gap_s=sample_gap_s,
        dataset=dataset,
        net=net,
        feature_scale=feature_scale,
        experiments=experiments,
    )


def load_config(path) -> ToolkitConfig:
    """Read and validate a config file; ConfigError on any problem."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config '{path}' is not valid JSON: "
                          f"line {exc.lineno}: {exc.msg}") from exc
    return from_dict(doc)


def default_config() -> ToolkitConfig:
    return ToolkitConfig()
