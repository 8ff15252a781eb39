"""Parametric circuit models for the eleven appliance classes.

Every model keeps its parameters and internal state in flat numpy arrays
with one column per instance, so a whole batch of instances can be stepped
in lockstep by the circuit solver.  A single appliance is just the
batch-of-one case.

Model families:

* ``Resistive``           constant resistance (hairdryer, soldering iron)
* ``IncandescentThermal`` resistance interpolates cold to hot driven by a
                          first-order thermal state (incandescent bulbs)
* ``MotorRL``             series R-L branch, R/L chosen per discrete fan
                          speed at instantiation (fan)
* ``RectifierCapacitor``  ideal bridge, smoothing capacitor, resistive
                          DC-side draw (USB, laptop, monitor, LED lamps)
* ``BatteryCharger``      rectifier through a series resistance into a
                          battery EMF that rises with state of charge

Rectifier and charger instances realize their wattage rating by a brief
self-calibration: the instance is settled on an uncut supply, its steady
power measured, and its current-carrying parameters rescaled so the target
power is met exactly.  Rescaling currents leaves the voltage waveforms
untouched, so the calibration is exact rather than approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericalOverflow
from .waveform import SupplyConfig

# Settle/measure windows (in AC periods) for the power self-calibration.
_CAL_SETTLE_PERIODS = 20
_CAL_MEASURE_PERIODS = 10


class ApplianceType(Enum):
    """Household load behavior categories (on/off, FSM, variable power)."""

    TYPE_I = 1
    TYPE_II = 2
    TYPE_III = 3


class LoadClass(Enum):
    """The eleven appliance classes, in canonical index order."""

    USB = "USB"
    BATTERYCHARGER_4A = "batterycharger4A"
    BATTERYCHARGER_800MA = "batterycharger800mA"
    FAN = "fan"
    HAIRDRYER = "hairdryer"
    LEDBULB = "ledbulb"
    LEDSPOTLIGHT = "ledspotlight"
    INCANDESCENTS = "INCANDESCENTS"
    LAPTOP = "laptop"
    MONITOR = "monitor"
    SOLDERINGIRON = "solderingiron"

    @property
    def label(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return _CLASS_ORDER.index(self)

    @classmethod
    def from_label(cls, label: str) -> "LoadClass":
        try:
            return cls(label)
        except ValueError:
            raise ValueError(f"unknown load class label '{label}'") from None


_CLASS_ORDER = list(LoadClass)
N_CLASSES = len(_CLASS_ORDER)


@dataclass(frozen=True)
class JitterSpec:
    """Relative parameter spreads applied at instantiation.

    power_spread jitters the wattage rating, secondary_spread jitters shape
    parameters (capacitance, series resistance, thermal constants, ...).
    drift_magnitude bounds the slow between-probe random walk of the
    variable-power (Type III) classes.
    """

    power_spread: float = 0.03
    secondary_spread: float = 0.08
    drift_magnitude: float = 0.15

    def __post_init__(self):
        for name in ("power_spread", "secondary_spread", "drift_magnitude"):
            val = getattr(self, name)
            if not 0.0 <= val < 0.5:
                raise ValueError(f"{name} must be in [0, 0.5), got {val}")


ZERO_JITTER = JitterSpec(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Vectorized circuit models
# ---------------------------------------------------------------------------


class ResistiveModel:
    """Constant resistance: i = v / R."""

    def __init__(self, r: np.ndarray):
        self.r = np.asarray(r, dtype=float)
        self.n = self.r.shape[0]

    def branch_current(self, v: np.ndarray) -> np.ndarray:
        return v / self.r

    def branch_iv(self, v: np.ndarray):
        return v / self.r, 1.0 / self.r

    def advance(self, v: np.ndarray, dt: float) -> None:
        pass

    def check_state(self) -> None:
        pass

    def scale_current(self, s: np.ndarray) -> None:
        self.r /= s


class IncandescentThermalModel:
    """Filament whose resistance interpolates cold to hot.

    The heat state follows the normalized dissipated power with a first
    order lag; at nominal uncut drive the state settles at 1.0, which by
    construction puts the resistance at r_hot = V_rms^2 / P_nominal.
    """

    HEAT_MAX = 1.5

    def __init__(self, r_hot, cold_ratio, tau, heat=None):
        self.r_hot = np.asarray(r_hot, dtype=float)
        self.cold_ratio = np.asarray(cold_ratio, dtype=float)
        self.tau = np.asarray(tau, dtype=float)
        self.n = self.r_hot.shape[0]
        self.heat = np.ones(self.n) if heat is None else np.asarray(heat, dtype=float)
        self.p_nom = None  # set after construction; W at heat == 1

    def _resistance(self) -> np.ndarray:
        return self.r_hot * (self.cold_ratio + (1.0 - self.cold_ratio) * self.heat)

    def branch_current(self, v: np.ndarray) -> np.ndarray:
        return v / self._resistance()

    def branch_iv(self, v: np.ndarray):
        r = self._resistance()
        return v / r, 1.0 / r

    def advance(self, v: np.ndarray, dt: float) -> None:
        r = self._resistance()
        target = np.clip((v * v) / (r * self.p_nom), 0.0, self.HEAT_MAX)
        self.heat += (dt / self.tau) * (target - self.heat)

    def check_state(self) -> None:
        if not np.all(np.isfinite(self.heat)):
            raise NumericalOverflow("incandescent heat state is not finite")

    def scale_current(self, s: np.ndarray) -> None:
        self.r_hot /= s
        self.p_nom *= s


class MotorRLModel:
    """Series R-L branch integrated with the trapezoidal rule."""

    def __init__(self, r, l, i_l=None, v_prev=None):
        self.r = np.asarray(r, dtype=float)
        self.l = np.asarray(l, dtype=float)
        self.n = self.r.shape[0]
        self.i_l = np.zeros(self.n) if i_l is None else np.asarray(i_l, dtype=float)
        self.v_prev = np.zeros(self.n) if v_prev is None else np.asarray(v_prev, dtype=float)

    def _step_current(self, v: np.ndarray, dt: float) -> np.ndarray:
        h = dt * self.r / (2.0 * self.l)
        return ((1.0 - h) * self.i_l + (dt / (2.0 * self.l)) * (v + self.v_prev)) / (1.0 + h)

    def branch_current(self, v: np.ndarray) -> np.ndarray:
        # Uses the supply sample interval; the bank simulator always calls
        # advance with the same dt it solved at.
        return self._step_current(v, self._dt)

    def branch_iv(self, v: np.ndarray):
        dt = self._dt
        slope = (dt / (2.0 * self.l)) / (1.0 + dt * self.r / (2.0 * self.l))
        return self._step_current(v, dt), slope

    def advance(self, v: np.ndarray, dt: float) -> None:
        self.i_l = self._step_current(v, dt)
        self.v_prev = np.asarray(v, dtype=float).copy()

    def bind_dt(self, dt: float) -> None:
        self._dt = dt

    def check_state(self) -> None:
        if not np.all(np.isfinite(self.i_l)):
            raise NumericalOverflow("motor inductor current is not finite")

    def scale_current(self, s: np.ndarray) -> None:
        self.r /= s
        self.l /= s
        self.i_l *= s


class RectifierCapacitorModel:
    """Ideal bridge + smoothing capacitor + resistive DC-side draw.

    The bridge conducts while |v| exceeds the capacitor voltage; charging
    current is limited by the series resistance r_in.  The capacitor update
    is semi-implicit, so it is stable for any step size.
    """

    def __init__(self, c, r_in, r_dc, v_c=None, v_c_max=1e4):
        self.c = np.asarray(c, dtype=float)
        self.r_in = np.asarray(r_in, dtype=float)
        self.r_dc = np.asarray(r_dc, dtype=float)
        self.n = self.c.shape[0]
        self.v_c = np.zeros(self.n) if v_c is None else np.asarray(v_c, dtype=float)
        self.v_c_max = v_c_max

    def branch_current(self, v: np.ndarray) -> np.ndarray:
        av = np.abs(v)
        charging = av > self.v_c
        return np.where(charging, np.sign(v) * (av - self.v_c) / self.r_in, 0.0)

    def branch_iv(self, v: np.ndarray):
        av = np.abs(v)
        g = np.where(av > self.v_c, 1.0 / self.r_in, 0.0)
        return np.sign(v) * np.maximum(av - self.v_c, 0.0) / self.r_in, g

    def advance(self, v: np.ndarray, dt: float) -> None:
        av = np.abs(v)
        charging = (av > self.v_c).astype(float)
        g_in = charging / self.r_in
        num = self.v_c + (dt / self.c) * g_in * av
        den = 1.0 + (dt / self.c) * (g_in + 1.0 / self.r_dc)
        self.v_c = num / den

    def check_state(self) -> None:
        if not np.all(np.isfinite(self.v_c)) or np.any(self.v_c > self.v_c_max):
            raise NumericalOverflow("rectifier capacitor voltage out of bounds")

    def scale_current(self, s: np.ndarray) -> None:
        self.r_in /= s
        self.r_dc /= s
        self.c *= s


class BatteryChargerModel:
    """Rectifier through a series resistance into a rising battery EMF.

    The EMF is linear in state of charge, so the conduction window and the
    charging power shrink as the battery fills.
    """

    def __init__(self, r_s, e0, e1, soc_gain, soc=None):
        self.r_s = np.asarray(r_s, dtype=float)
        self.e0 = np.asarray(e0, dtype=float)
        self.e1 = np.asarray(e1, dtype=float)
        self.soc_gain = np.asarray(soc_gain, dtype=float)
        self.n = self.r_s.shape[0]
        self.soc = np.zeros(self.n) if soc is None else np.asarray(soc, dtype=float)

    def _emf(self) -> np.ndarray:
        return self.e0 + (self.e1 - self.e0) * self.soc

    def branch_current(self, v: np.ndarray) -> np.ndarray:
        headroom = np.abs(v) - self._emf()
        return np.where(headroom > 0.0, np.sign(v) * headroom / self.r_s, 0.0)

    def branch_iv(self, v: np.ndarray):
        headroom = np.abs(v) - self._emf()
        conducting = headroom > 0.0
        i = np.where(conducting, np.sign(v) * headroom / self.r_s, 0.0)
        return i, np.where(conducting, 1.0 / self.r_s, 0.0)

    def advance(self, v: np.ndarray, dt: float) -> None:
        i = np.abs(self.branch_current(v))
        self.soc = np.clip(self.soc + dt * self.soc_gain * i, 0.0, 1.0)

    def check_state(self) -> None:
        if not np.all(np.isfinite(self.soc)):
            raise NumericalOverflow("battery state of charge is not finite")

    def scale_current(self, s: np.ndarray) -> None:
        self.r_s /= s
        self.soc_gain /= s


# ---------------------------------------------------------------------------
# Class definitions: nominal wattages and shape parameters
# ---------------------------------------------------------------------------

# Wattages are plausible household magnitudes chosen so the class power
# ordering is stable: hairdryer and INCANDESCENTS are the two largest, USB
# and the 800 mA charger the two smallest.
NOMINAL_POWER_W = {
    LoadClass.USB: 6.0,
    LoadClass.BATTERYCHARGER_4A: 60.0,
    LoadClass.BATTERYCHARGER_800MA: 7.0,
    LoadClass.FAN: 40.0,
    LoadClass.HAIRDRYER: 1200.0,
    LoadClass.LEDBULB: 9.0,
    LoadClass.LEDSPOTLIGHT: 8.0,
    LoadClass.INCANDESCENTS: 160.0,
    LoadClass.LAPTOP: 60.0,
    LoadClass.MONITOR: 30.0,
    LoadClass.SOLDERINGIRON: 30.0,
}

APPLIANCE_TYPE = {
    LoadClass.USB: ApplianceType.TYPE_III,
    LoadClass.BATTERYCHARGER_4A: ApplianceType.TYPE_III,
    LoadClass.BATTERYCHARGER_800MA: ApplianceType.TYPE_III,
    LoadClass.FAN: ApplianceType.TYPE_II,
    LoadClass.HAIRDRYER: ApplianceType.TYPE_I,
    LoadClass.LEDBULB: ApplianceType.TYPE_I,
    LoadClass.LEDSPOTLIGHT: ApplianceType.TYPE_I,
    LoadClass.INCANDESCENTS: ApplianceType.TYPE_I,
    LoadClass.LAPTOP: ApplianceType.TYPE_III,
    LoadClass.MONITOR: ApplianceType.TYPE_I,
    LoadClass.SOLDERINGIRON: ApplianceType.TYPE_I,
}

# Rectifier shape parameters: (ripple fraction, r_in as fraction of r_dc).
# Classes that group several physical devices carry one entry per grouping
# component; the component is picked per instance.
_RECTIFIER_SHAPES = {
    LoadClass.USB: [(0.10, 0.020), (0.22, 0.050)],
    LoadClass.LEDBULB: [(0.15, 0.030)],
    LoadClass.LEDSPOTLIGHT: [(0.25, 0.060)],
    LoadClass.LAPTOP: [(0.08, 0.015)],
    LoadClass.MONITOR: [(0.12, 0.020)],
}
_RECTIFIER_VDC_FRACTION = 0.90

# Incandescent grouping components: (cold resistance ratio, thermal tau s).
_INCANDESCENT_SHAPES = [(0.08, 0.07), (0.12, 0.11)]

# Soldering iron heater: moderate cold ratio, seconds-scale thermal lag.
_SOLDERING_SHAPE = (0.55, 2.5)

# Fan speed states: power factor per discrete speed; real power is the
# class nominal at every speed, only the reactance differs.
_FAN_SPEED_PF = (0.85, 0.78, 0.70)

# Battery chargers: EMF range as a fraction of peak voltage, and the time a
# full charge would take at nominal power (hours).
_CHARGER_SHAPES = {
    LoadClass.BATTERYCHARGER_4A: (0.40, 0.80, 2.5),
    LoadClass.BATTERYCHARGER_800MA: (0.50, 0.85, 8.0),
}
_CHARGER_SOC_INIT = 0.25

_TYPE_III_FULL_CHARGE_S = {c: s[2] * 3600.0 for c, s in _CHARGER_SHAPES.items()}

# Rough nominal power factors per class, used only to derive the default
# feature scale (apparent power ratings) from the wattage table.
NOMINAL_POWER_FACTOR = {
    LoadClass.USB: 0.55,
    LoadClass.BATTERYCHARGER_4A: 0.60,
    LoadClass.BATTERYCHARGER_800MA: 0.60,
    LoadClass.FAN: 0.78,
    LoadClass.HAIRDRYER: 1.0,
    LoadClass.LEDBULB: 0.55,
    LoadClass.LEDSPOTLIGHT: 0.50,
    LoadClass.INCANDESCENTS: 1.0,
    LoadClass.LAPTOP: 0.60,
    LoadClass.MONITOR: 0.55,
    LoadClass.SOLDERINGIRON: 1.0,
}


def default_feature_scale(nominal_power_w: dict | None = None) -> float:
    """Median nominal apparent power across classes.

    The obvious alternative, the maximum apparent rating, parks every
    smaller class deep in the softmax normalization's dead zone; the
    median keeps typical classes near unit scale.
    """
    powers = dict(NOMINAL_POWER_W)
    if nominal_power_w:
        powers.update(nominal_power_w)
    ratings = sorted(powers[c] / NOMINAL_POWER_FACTOR[c] for c in LoadClass)
    return float(ratings[len(ratings) // 2])


@dataclass
class LoadInstance:
    """One appliance: class tag, circuit model (batch of one), drift RNG."""

    load_class: LoadClass
    appliance_type: ApplianceType
    model: object
    rng: np.random.Generator
    power_target: float
    component: int = 0
    drift_log: float = 0.0
    drift_magnitude: float = 0.0


def _uniform_jitter(rng: np.random.Generator, spread: float, n: int = 1) -> np.ndarray:
    return 1.0 + spread * rng.uniform(-1.0, 1.0, size=n)


def _settle_power(model, cfg: SupplyConfig, settle: int, measure: int) -> np.ndarray:
    """Mean per-column real power over `measure` uncut periods after settling."""
    s = cfg.samples_per_period
    dt = cfg.dt
    k = np.arange(s)
    v_open = cfg.peak_voltage * np.sin(2.0 * np.pi * k / s)
    p = np.zeros(model.n)
    for period in range(settle + measure):
        sum_vi = np.zeros(model.n)
        for j in range(s):
            v = np.full(model.n, v_open[j])
            i = model.branch_current(v)
            model.advance(v, dt)
            sum_vi += v * i
        if period >= settle:
            p += sum_vi / s
    return p / measure


def _calibrate_power(model, target_w: np.ndarray, cfg: SupplyConfig,
                     settle: int = _CAL_SETTLE_PERIODS,
                     measure: int = _CAL_MEASURE_PERIODS) -> None:
    """Rescale the model's currents so its uncut steady power hits target_w."""
    base = _settle_power(model, cfg, settle, measure)
    model.scale_current(np.asarray(target_w, dtype=float) / base)


def _build_model_uncalibrated(load_class: LoadClass, rng: np.random.Generator,
                              jitter: JitterSpec, cfg: SupplyConfig,
                              nominal_power: float | None = None):
    """Construct the (batch of one) circuit model for a fresh instance.

    Returns (model, power_target, component_id); rectifier and charger
    models still need their power calibration applied.  The random draw
    order is fixed: power first, then the grouping component, then shape
    parameters, so a given seed always yields the same instance.
    """
    p_nom = NOMINAL_POWER_W[load_class] if nominal_power is None else nominal_power
    target = p_nom * _uniform_jitter(rng, jitter.power_spread)
    v_rms = cfg.nominal_rms_voltage
    v_pk = cfg.peak_voltage

    if load_class is LoadClass.HAIRDRYER:
        r = v_rms * v_rms / target
        return ResistiveModel(r), target, 0

    if load_class is LoadClass.SOLDERINGIRON:
        # A heater element with a slow thermal constant: its resistance
        # keeps creeping over the whole probe, unlike the hairdryer.
        cold, tau = _SOLDERING_SHAPE
        cold_j = cold * _uniform_jitter(rng, jitter.secondary_spread)
        tau_j = tau * _uniform_jitter(rng, jitter.secondary_spread)
        model = IncandescentThermalModel(v_rms * v_rms / target, cold_j, tau_j)
        model.p_nom = target.copy()
        return model, target, 0

    if load_class is LoadClass.INCANDESCENTS:
        component = int(rng.integers(len(_INCANDESCENT_SHAPES)))
        cold, tau = _INCANDESCENT_SHAPES[component]
        cold_j = cold * _uniform_jitter(rng, jitter.secondary_spread)
        tau_j = tau * _uniform_jitter(rng, jitter.secondary_spread)
        model = IncandescentThermalModel(v_rms * v_rms / target, cold_j, tau_j)
        model.p_nom = target.copy()
        return model, target, component

    if load_class is LoadClass.FAN:
        speed = int(rng.integers(len(_FAN_SPEED_PF)))
        pf = _FAN_SPEED_PF[speed] * _uniform_jitter(rng, jitter.secondary_spread)
        pf = np.clip(pf, 0.3, 0.98)
        z = v_rms * v_rms * pf / target
        r = z * pf
        x = z * np.sqrt(1.0 - pf * pf)
        l = x / (2.0 * math.pi * cfg.mains_frequency)
        return MotorRLModel(r, l), target, speed

    if load_class in _RECTIFIER_SHAPES:
        shapes = _RECTIFIER_SHAPES[load_class]
        component = int(rng.integers(len(shapes))) if len(shapes) > 1 else 0
        ripple, r_in_frac = shapes[component]
        ripple = ripple * _uniform_jitter(rng, jitter.secondary_spread)
        r_in_frac = r_in_frac * _uniform_jitter(rng, jitter.secondary_spread)
        v_dc = _RECTIFIER_VDC_FRACTION * v_pk
        r_dc = v_dc * v_dc / target
        c = target / (2.0 * cfg.mains_frequency * ripple * v_dc * v_dc)
        model = RectifierCapacitorModel(
            c, r_in_frac * r_dc, r_dc,
            v_c=v_dc * (1.0 - ripple / 2.0),
            v_c_max=2.0 * v_pk,
        )
        return model, target, component

    if load_class in _CHARGER_SHAPES:
        e0_frac, e1_frac, _ = _CHARGER_SHAPES[load_class]
        e0 = e0_frac * v_pk * _uniform_jitter(rng, jitter.secondary_spread)
        e1 = np.maximum(e1_frac * v_pk * _uniform_jitter(rng, jitter.secondary_spread),
                        e0 * 1.05)
        soc = np.full(1, _CHARGER_SOC_INIT)
        # soc_gain converts charge current to d(soc)/dt; it is set after
        # calibration so a full charge takes roughly full_hours at nominal.
        model = BatteryChargerModel(np.ones(1), e0, e1, np.zeros(1), soc=soc)
        return model, target, 0

    raise ValueError(f"no model family for {load_class}")


def _build_model(load_class: LoadClass, rng: np.random.Generator,
                 jitter: JitterSpec, cfg: SupplyConfig,
                 nominal_power: float | None = None):
    """Build and power-calibrate one instance's circuit model."""
    model, target, component = _build_model_uncalibrated(load_class, rng, jitter,
                                                         cfg, nominal_power)
    if load_class in _RECTIFIER_SHAPES:
        _calibrate_power(model, target, cfg)
    elif load_class in _CHARGER_SHAPES:
        soc_backup = model.soc.copy()
        _calibrate_power(model, target, cfg, settle=2, measure=5)
        model.soc = soc_backup
        full_hours = _CHARGER_SHAPES[load_class][2]
        i_nominal = target / (0.5 * (model.e0 + model.e1))
        model.soc_gain = 1.0 / (full_hours * 3600.0 * i_nominal)
    return model, target, component


def instantiate(load_class: LoadClass, jitter: JitterSpec, seed,
                cfg: SupplyConfig | None = None,
                nominal_power: float | None = None) -> LoadInstance:
    """Create one appliance instance with jittered parameters.

    Args:
        load_class: Which appliance class to realize.
        jitter: Relative parameter spreads; ZERO_JITTER gives the nominal.
        seed: Anything accepted by numpy's default_rng; fully determines
            the instance.
        cfg: Supply the instance will be calibrated against (defaults used
            when omitted).
        nominal_power: Wattage rating override (class default when None).

    Returns:
        A LoadInstance whose uncut steady-state real power equals the
        jittered wattage target.
    """
    cfg = cfg or SupplyConfig()
    rng = np.random.default_rng(seed)
    model, target, component = _build_model(load_class, rng, jitter, cfg,
                                            nominal_power)
    if isinstance(model, MotorRLModel):
        model.bind_dt(cfg.dt)
    return LoadInstance(
        load_class=load_class,
        appliance_type=APPLIANCE_TYPE[load_class],
        model=model,
        rng=rng,
        power_target=float(target[0]),
        component=component,
        drift_magnitude=jitter.drift_magnitude,
    )


def slice_model(model, col: int):
    """Extract one column of a batched model as a standalone model."""
    cls = type(model)
    out = object.__new__(cls)
    for name in _MODEL_ARRAY_FIELDS[cls]:
        out.__dict__[name] = np.atleast_1d(getattr(model, name))[col:col + 1].copy()
    out.n = 1
    if cls is RectifierCapacitorModel:
        out.v_c_max = model.v_c_max
    if cls is MotorRLModel and hasattr(model, "_dt"):
        out._dt = model._dt
    return out


def instantiate_batch(load_class: LoadClass, jitter: JitterSpec, seeds,
                      cfg: SupplyConfig | None = None,
                      nominal_power: float | None = None) -> list:
    """Create many instances of one class at once.

    Parameter draws are identical to calling instantiate() per seed; the
    power self-calibration of rectifier and charger models runs once on the
    whole batch instead of per instance, which is what makes dataset-scale
    generation affordable.  Results are bitwise identical to the one-at-a-
    time path because every calibration operation is elementwise.
    """
    cfg = cfg or SupplyConfig()
    rngs = [np.random.default_rng(seed) for seed in seeds]
    needs_calibration = load_class in _RECTIFIER_SHAPES or load_class in _CHARGER_SHAPES
    if not needs_calibration or len(rngs) <= 1:
        return [instantiate(load_class, jitter, seed, cfg, nominal_power)
                for seed in seeds]

    built = [_build_model_uncalibrated(load_class, rng, jitter, cfg, nominal_power)
             for rng in rngs]
    models = [b[0] for b in built]
    targets = np.concatenate([b[1] for b in built])
    components = [b[2] for b in built]
    batched = stack_models(models)
    if load_class in _CHARGER_SHAPES:
        soc_backup = batched.soc.copy()
        _calibrate_power(batched, targets, cfg, settle=2, measure=5)
        batched.soc = soc_backup
        e_mid = 0.5 * (batched.e0 + batched.e1)
        full_hours = _CHARGER_SHAPES[load_class][2]
        batched.soc_gain = 1.0 / (full_hours * 3600.0 * (targets / e_mid))
    else:
        _calibrate_power(batched, targets, cfg)

    instances = []
    for col, rng in enumerate(rngs):
        instances.append(LoadInstance(
            load_class=load_class,
            appliance_type=APPLIANCE_TYPE[load_class],
            model=slice_model(batched, col),
            rng=rng,
            power_target=float(targets[col]),
            component=components[col],
            drift_magnitude=jitter.drift_magnitude,
        ))
    return instances


def instantiate_resistor(load_class: LoadClass, power_w: float, seed,
                         cfg: SupplyConfig | None = None) -> LoadInstance:
    """Pure-resistor stand-in for a class (separability oracle datasets)."""
    cfg = cfg or SupplyConfig()
    r = cfg.nominal_rms_voltage ** 2 / power_w
    return LoadInstance(
        load_class=load_class,
        appliance_type=ApplianceType.TYPE_I,
        model=ResistiveModel(np.full(1, r)),
        rng=np.random.default_rng(seed),
        power_target=power_w,
    )


_MODEL_ARRAY_FIELDS = {
    ResistiveModel: ("r",),
    IncandescentThermalModel: ("r_hot", "cold_ratio", "tau", "heat", "p_nom"),
    MotorRLModel: ("r", "l", "i_l", "v_prev"),
    RectifierCapacitorModel: ("c", "r_in", "r_dc", "v_c"),
    BatteryChargerModel: ("r_s", "e0", "e1", "soc_gain", "soc"),
}


def stack_models(models: list):
    """Concatenate same-family models column-wise into one batched model.

    Column order follows the input order; each column evolves exactly as it
    would in its source model, so stacking is purely a performance device.
    """
    first = models[0]
    cls = type(first)
    if any(type(m) is not cls for m in models):
        raise TypeError("can only stack models of one family")
    out = object.__new__(cls)
    for name in _MODEL_ARRAY_FIELDS[cls]:
        out.__dict__[name] = np.concatenate(
            [np.atleast_1d(getattr(m, name)) for m in models]
        )
    out.n = int(sum(m.n for m in models))
    if cls is RectifierCapacitorModel:
        out.v_c_max = max(m.v_c_max for m in models)
    if cls is MotorRLModel and hasattr(first, "_dt"):
        out._dt = first._dt
    return out


def load_current(instance: LoadInstance, v_applied: float, dt: float) -> float:
    """Instantaneous branch current at an applied voltage; advances state."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if hasattr(instance.model, "bind_dt"):
        instance.model.bind_dt(dt)
    v = np.full(instance.model.n, float(v_applied))
    i = instance.model.branch_current(v)
    instance.model.advance(v, dt)
    instance.model.check_state()
    return float(i[0])


def drift(instance: LoadInstance, elapsed: float) -> LoadInstance:
    """Apply between-probe consumption drift to a Type III instance.

    Chargers advance their state of charge as if they kept charging for
    `elapsed` seconds; USB and laptop loads random-walk their DC-side draw
    within the bounded drift magnitude.  Type I/II instances are returned
    unchanged.  The walk draws from the instance's own RNG, so drift is
    deterministic per instance.
    """
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    if instance.appliance_type is not ApplianceType.TYPE_III or elapsed == 0.0:
        return instance

    model = instance.model
    if isinstance(model, BatteryChargerModel):
        full_time = _TYPE_III_FULL_CHARGE_S[instance.load_class]
        step = (elapsed / full_time) * (0.5 + instance.rng.uniform(0.0, 1.0))
        model.soc = np.clip(model.soc + step, 0.0, 1.0)
        return instance

    if isinstance(model, RectifierCapacitorModel):
        m = instance.drift_magnitude
        if m > 0.0:
            sigma = m * math.sqrt(min(elapsed / 3600.0, 4.0))
            step = float(instance.rng.normal(0.0, sigma))
            new_log = float(np.clip(instance.drift_log + step, -m, m))
            # Shift the DC-side draw; currents scale with the draw so the
            # waveform shape is preserved.
            model.scale_current(np.exp(new_log - instance.drift_log))
            instance.drift_log = new_log
        return instance

    return instance
