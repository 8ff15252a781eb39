"""Dimming schedule execution and measurement matrix assembly.

A probe run sweeps the cutoff ratio over the schedule rows.  Each row
starts with a few uncut settle periods (discarded), then records one
matrix column per dimmed AC period: RMS voltage, RMS current and real
power, integrated over exactly one period aligned to the open-circuit
zero crossings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveScale, ShapeMismatch
from .waveform import BankSimulator, CutoffRatio, SupplyConfig

N_RATIOS = 14
PERIODS_PER_RATIO = 20


def default_ratios() -> tuple[float, ...]:
    """The standard sweep: 0.10 to 0.75 in 0.05 steps (14 rows)."""
    return tuple(round(0.10 + 0.05 * i, 2) for i in range(N_RATIOS))


@dataclass(frozen=True)
class DimmingSchedule:
    """Cutoff sweep: ratios per row, dimmed periods per row, settle gap."""

    ratios: tuple = field(default_factory=default_ratios)
    periods_per_ratio: int = PERIODS_PER_RATIO
    settle_periods: int = 5

    def __post_init__(self):
        if len(self.ratios) == 0:
            raise ValueError("schedule must contain at least one ratio")
        if any(b <= a for a, b in zip(self.ratios, self.ratios[1:])):
            raise ValueError("ratios must be strictly increasing")
        if not all(0.0 <= r < 1.0 for r in self.ratios):
            raise ValueError("ratios must lie in [0, 1)")
        if self.periods_per_ratio < 1 or self.settle_periods < 0:
            raise ValueError("invalid period counts")

    @property
    def shape(self) -> tuple:
        return (len(self.ratios), self.periods_per_ratio)

    @property
    def total_periods(self) -> int:
        return len(self.ratios) * (self.periods_per_ratio + self.settle_periods)


@dataclass
class MeasurementMatrices:
    """The three ratio-by-period grids produced by one probe run."""

    v_rms: np.ndarray
    i_rms: np.ndarray
    real_power: np.ndarray

    PASSIVITY_EPS = 1e-6

    def __post_init__(self):
        self.v_rms = np.asarray(self.v_rms, dtype=float)
        self.i_rms = np.asarray(self.i_rms, dtype=float)
        self.real_power = np.asarray(self.real_power, dtype=float)
        shape = self.v_rms.shape
        if self.i_rms.shape != shape or self.real_power.shape != shape:
            raise ShapeMismatch("measurement grids must share one shape")
        if len(shape) != 2:
            raise ShapeMismatch("measurement grids must be 2-D")
        if np.any(self.real_power < -self.PASSIVITY_EPS):
            raise ValueError("negative real power cell: load bank is not passive")

    @property
    def shape(self) -> tuple:
        return self.v_rms.shape


@dataclass
class FeatureTensor:
    """Scaled real-power and apparent-power channels for the classifier."""

    channels: np.ndarray  # (2, rows, cols); 0 = real power, 1 = apparent power

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 3 or self.channels.shape[0] != 2:
            raise ShapeMismatch("feature tensor must be (2, rows, cols)")


class _MaskedMember:
    """Zeroes a padded model's current on columns where it is not connected."""

    def __init__(self, model, mask: np.ndarray):
        self.model = model
        self.mask = mask

    def branch_current(self, v):
        return self.model.branch_current(v) * self.mask

    def branch_iv(self, v):
        i, g = self.model.branch_iv(v)
        return i * self.mask, g * self.mask

    def advance(self, v, dt):
        self.model.advance(v, dt)

    def check_state(self):
        self.model.check_state()

    def bind_dt(self, dt):
        if hasattr(self.model, "bind_dt"):
            self.model.bind_dt(dt)


def run_probe_members(members, batch_size: int, cfg: SupplyConfig,
                      sched: DimmingSchedule):
    """Run the dimming schedule on prepared bank members.

    Returns (v_rms, i_rms, real_power) arrays of shape
    (batch, len(ratios), periods_per_ratio).
    """
    sim = BankSimulator(members, batch_size, cfg)
    rows, cols = sched.shape
    out_v = np.empty((batch_size, rows, cols))
    out_i = np.empty((batch_size, rows, cols))
    out_p = np.empty((batch_size, rows, cols))
    uncut = CutoffRatio(0.0)
    for r, ratio in enumerate(sched.ratios):
        for _ in range(sched.settle_periods):
            sim.run_period(uncut)
        cut = CutoffRatio(ratio)
        for c in range(cols):
            rms_v, rms_i, power, _, _ = sim.run_period(cut)
            out_v[:, r, c] = rms_v
            out_i[:, r, c] = rms_i
            out_p[:, r, c] = power
    return out_v, out_i, out_p


def run_probe(bank, cfg: SupplyConfig, sched: DimmingSchedule) -> MeasurementMatrices:
    """Probe one load bank and assemble its measurement matrices.

    Args:
        bank: Non-empty list of LoadInstance connected in parallel; their
            states are advanced in place by the run.
        cfg: Supply parameters.
        sched: Dimming schedule (rows and columns of the matrices).

    Returns:
        MeasurementMatrices with shape (len(ratios), periods_per_ratio).
    """
    if not bank:
        raise ValueError("bank must be non-empty")
    v, i, p = run_probe_members([inst.model for inst in bank], 1, cfg, sched)
    return MeasurementMatrices(v_rms=v[0], i_rms=i[0], real_power=p[0])


def features(m: MeasurementMatrices, scale: tuple) -> FeatureTensor:
    """Build the two-channel classifier input from a measurement matrix set.

    Channel 0 is real power, channel 1 apparent power (RMS voltage times
    RMS current), each divided by its global scale.
    """
    s0, s1 = float(scale[0]), float(scale[1])
    if s0 <= 0.0 or s1 <= 0.0:
        raise NonPositiveScale(f"feature scales must be > 0, got {scale}")
    ch0 = m.real_power / s0
    ch1 = (m.v_rms * m.i_rms) / s1
    return FeatureTensor(channels=np.stack([ch0, ch1]))
