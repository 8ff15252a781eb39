"""Phase-cut AC supply model and coupled load-bank circuit solver.

The supply is a sine that is disconnected (held at zero) for a configurable
fraction of each half-period, either at the start (leading edge, triac
style) or at the end (trailing edge) of the half-period.  A bank of load
models is driven through a shared source resistance, so loads on the same
plug interact: the per-sample load voltage is found by a damped fixed-point
iteration on

    v_load = v_open - source_resistance * sum_k i_k(v_load)

One subtlety worth calling out: the sample that straddles a switching edge
carries the RMS-equivalent amplitude of its sampling window rather than the
instantaneous value.  A hard edge sampled pointwise misstates per-period
energy by O(1/samples_per_period), which is far too coarse for the metering
this feeds; the window-equivalent sample restores O(1/n^2) agreement with
the continuous waveform's RMS.  All other samples are exact instantaneous
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, LengthMismatch, NonConvergence

# Fixed-point settings for the per-sample coupling solve.  The iteration
# runs undamped while the residual shrinks (all load models have continuous
# i(v), so the plain map contracts whenever rs * di/dv < 1) and falls back
# to 0.5 damping on any column whose residual grows.  Tolerance is on the
# KCL current residual in amperes.
SOLVER_FALLBACK_DAMPING = 0.5
SOLVER_TOLERANCE_A = 1e-9
SOLVER_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class SupplyConfig:
    """Mains supply and sampling parameters."""

    mains_frequency: float = 50.0
    nominal_rms_voltage: float = 230.0
    samples_per_period: int = 400
    source_resistance: float = 0.5
    edge_mode: str = "leading"

    def __post_init__(self):
        if self.mains_frequency <= 0:
            raise ValueError("mains_frequency must be > 0")
        if self.samples_per_period < 100:
            raise ValueError("samples_per_period must be >= 100")
        if self.nominal_rms_voltage <= 0:
            raise ValueError("nominal_rms_voltage must be > 0")
        if self.source_resistance < 0:
            raise ValueError("source_resistance must be >= 0")
        if self.edge_mode not in ("leading", "trailing"):
            raise ValueError("edge_mode must be 'leading' or 'trailing'")

    @property
    def peak_voltage(self) -> float:
        return math.sqrt(2.0) * self.nominal_rms_voltage

    @property
    def dt(self) -> float:
        return 1.0 / (self.mains_frequency * self.samples_per_period)


@dataclass(frozen=True)
class CutoffRatio:
    """Fraction of each AC half-period during which the supply is cut."""

    ratio: float

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"cutoff ratio must be in [0, 1), got {self.ratio}")


@dataclass
class PeriodTrace:
    """Load voltage and total current over one simulated AC period."""

    v_load: np.ndarray
    i_total: np.ndarray

    def __post_init__(self):
        if self.v_load.shape != self.i_total.shape:
            raise LengthMismatch("v_load and i_total must have equal length")


def phase_cut_rms_factor(ratio: float) -> float:
    """Closed-form RMS of a unit-peak phase-cut sine, as a fraction of peak.

    Integrating sin^2 over the conducting part of each half-period gives the
    same value for leading and trailing edges:

        rms / peak = sqrt((1 - a) / 2 + sin(2*pi*a) / (4*pi))
    """
    return math.sqrt((1.0 - ratio) / 2.0 + math.sin(2.0 * math.pi * ratio) / (4.0 * math.pi))


def _snap_to_grid(x: float, s: int) -> float:
    """Clamp a switching edge onto the sample grid when within rounding slop.

    Ratios like 0.15 of a 200-sample half-period land at 30.000000000000004,
    which would silently shift the edge by a whole sample.
    """
    nearest = round(x)
    return float(nearest) if abs(x - nearest) < 1e-9 * s else x


def _cut_period_samples(ratio: float, cfg: SupplyConfig) -> np.ndarray:
    """One period of the open-circuit phase-cut supply, length samples_per_period.

    Samples are V_pk*sin(2*pi*k/S) with the cut fraction of each half-period
    zeroed.  The single sample bordering the switching edge is scaled so its
    squared value equals the mean square of the waveform over that sample's
    window, keeping discrete RMS faithful to the continuous waveform.
    """
    s = cfg.samples_per_period
    v_pk = cfg.peak_voltage
    k = np.arange(s)
    v = v_pk * np.sin(2.0 * np.pi * k / s)
    if ratio == 0.0:
        return v

    # Position within the current half-period, in units of samples; the
    # half-period spans [0, s/2) in these units.
    half = s / 2.0
    pos = np.mod(k, half)

    if cfg.edge_mode == "leading":
        cut_len = _snap_to_grid(ratio * half, s)
        v = np.where(pos >= cut_len, v, 0.0)
        # The first conducting sample of each half-period absorbs the
        # partial window [edge, sample + 1/2].
        for h0 in (0.0, half):
            edge = h0 + cut_len
            first = math.ceil(edge)
            if first < h0 + half and first < s:
                v[first] *= math.sqrt(first + 0.5 - edge)
    else:
        conduct_len = _snap_to_grid((1.0 - ratio) * half, s)
        v = np.where(pos < conduct_len, v, 0.0)
        # The last conducting sample absorbs the partial window
        # [sample - 1/2, edge).
        for h0 in (0.0, half):
            edge = h0 + conduct_len
            last = math.ceil(edge) - 1
            if last >= h0 and last < s:
                v[last] *= math.sqrt(edge - last + 0.5)
    return v


def open_circuit_voltage(sample_index: int, cutoff: CutoffRatio, cfg: SupplyConfig) -> float:
    """Open-circuit supply voltage at a given sample index.

    Args:
        sample_index: Sample counter from the start of a period (>= 0);
            indices beyond one period wrap around.
        cutoff: Fraction of each half-period with the supply disconnected.
        cfg: Supply parameters.

    Returns:
        Voltage in volts.
    """
    if sample_index < 0:
        raise ValueError("sample_index must be >= 0")
    period = _cut_period_samples(cutoff.ratio, cfg)
    return float(period[sample_index % cfg.samples_per_period])


def rms(samples) -> float:
    """Root mean square of a sample array."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise EmptyInput("rms of an empty array")
    return float(np.sqrt(np.mean(np.square(arr))))


def real_power(v, i) -> float:
    """Mean of the elementwise product of voltage and current samples."""
    v_arr = np.asarray(v, dtype=float)
    i_arr = np.asarray(i, dtype=float)
    if v_arr.size == 0 or i_arr.size == 0:
        raise EmptyInput("real_power of empty arrays")
    if v_arr.shape != i_arr.shape:
        raise LengthMismatch(f"voltage {v_arr.shape} vs current {i_arr.shape}")
    return float(np.mean(v_arr * i_arr))


class BankSimulator:
    """Steps a bank of load models through supply samples, batched.

    Each member is a load model whose parameter and state arrays have one
    entry per batch column; all members share the batch width.  Columns are
    fully independent: a column's trajectory never depends on what other
    columns do, so simulating columns together or separately is bitwise
    identical.  That property is what makes chunked parallel dataset
    generation reproducible.
    """

    def __init__(self, members, batch_size: int, cfg: SupplyConfig):
        self.members = list(members)
        self.batch = batch_size
        self.cfg = cfg
        self._v_prev = np.zeros(batch_size)
        self._v_open_prev = 0.0
        for m in self.members:
            if hasattr(m, "bind_dt"):
                m.bind_dt(cfg.dt)

    def _total_current(self, v: np.ndarray) -> np.ndarray:
        i_tot = np.zeros(self.batch)
        for m in self.members:
            i_tot += m.branch_current(v)
        return i_tot

    def _total_iv(self, v: np.ndarray):
        i_tot = np.zeros(self.batch)
        g_tot = np.zeros(self.batch)
        for m in self.members:
            i, g = m.branch_iv(v)
            i_tot += i
            g_tot += g
        return i_tot, g_tot

    def _solve_sample(self, v_open: float) -> tuple[np.ndarray, np.ndarray]:
        rs = self.cfg.source_resistance
        if rs == 0.0:
            v = np.full(self.batch, v_open)
            return v, self._total_current(v)

        # Warm start: the load voltage tracks the supply closely, so shift
        # the previous solution by the supply delta.
        v = self._v_prev + (v_open - self._v_open_prev)
        active = np.ones(self.batch, dtype=bool)
        resid_prev = None
        for _ in range(SOLVER_MAX_ITERATIONS):
            i_tot, g_tot = self._total_iv(v)
            residual = (v_open - v) / rs - i_tot
            abs_resid = np.abs(residual)
            active &= abs_resid > SOLVER_TOLERANCE_A
            if not active.any():
                self._v_prev = v
                self._v_open_prev = v_open
                return v, i_tot
            # Slope-preconditioned step: Newton on v + rs*i(v) - v_open,
            # using each model's analytic di/dv at frozen state.
            step = rs * residual / (1.0 + rs * g_tot)
            if resid_prev is None:
                damping = 1.0
            else:
                damping = np.where(abs_resid > 0.9 * resid_prev,
                                   SOLVER_FALLBACK_DAMPING, 1.0)
            v = np.where(active, v + damping * step, v)
            resid_prev = abs_resid
        raise NonConvergence(
            f"coupling solve exceeded {SOLVER_MAX_ITERATIONS} iterations "
            f"(residual {np.max(abs_resid):.3e} A)"
        )

    def run_period(self, cutoff: CutoffRatio, collect_trace: bool = False):
        """Simulate one full AC period.

        Returns per-column (rms_v, rms_i, power) arrays, plus the raw
        (batch, samples) voltage/current traces when collect_trace is set.
        """
        cfg = self.cfg
        s = cfg.samples_per_period
        dt = cfg.dt
        v_open = _cut_period_samples(cutoff.ratio, cfg)

        sum_v2 = np.zeros(self.batch)
        sum_i2 = np.zeros(self.batch)
        sum_vi = np.zeros(self.batch)
        trace_v = np.empty((self.batch, s)) if collect_trace else None
        trace_i = np.empty((self.batch, s)) if collect_trace else None

        for k in range(s):
            v, i_tot = self._solve_sample(float(v_open[k]))
            for m in self.members:
                m.advance(v, dt)
            sum_v2 += v * v
            sum_i2 += i_tot * i_tot
            sum_vi += v * i_tot
            if collect_trace:
                trace_v[:, k] = v
                trace_i[:, k] = i_tot

        for m in self.members:
            m.check_state()

        rms_v = np.sqrt(sum_v2 / s)
        rms_i = np.sqrt(sum_i2 / s)
        power = sum_vi / s
        return rms_v, rms_i, power, trace_v, trace_i


def simulate_period(bank, cutoff: CutoffRatio, cfg: SupplyConfig) -> PeriodTrace:
    """Simulate one AC period of a load bank behind the source resistance.

    Load states are advanced in place.  Raises NonConvergence if the
    per-sample fixed-point iteration fails to reach tolerance.
    """
    if not bank:
        raise ValueError("bank must be non-empty")
    sim = BankSimulator([inst.model for inst in bank], 1, cfg)
    _, _, _, tv, ti = sim.run_period(cutoff, collect_trace=True)
    return PeriodTrace(v_load=tv[0], i_total=ti[0])
