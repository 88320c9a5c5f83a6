"""Pump pulse trains, their spectra, and rate-equation hole burning.

Each loop of the pump sequence moves population between the two ground
levels with a per-class transfer probability set by the blurred pump
spectrum. Every loop is the same affine map on the (fast, slow) components of
the g2 excess, so ``loop_count`` loops are applied exactly as one matrix
power instead of loop by loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .core import MediumState, SpectralGrid, relax, relaxation_factors, shift, split_excess
from .echo import GAUSS_FWHM_TO_SIGMA, ComplexField
from .errors import ValidationError

AMPLITUDE_BOUNDS_V = (0.0, 0.6)
WIDTH_BOUNDS_NS = (20.0, 100.0)
LOOP_DURATION_BOUNDS_US = (2.0, 10.0)
LOOP_COUNT_BOUNDS = (5000, 50000)
MAX_PULSES = 10


@dataclass(frozen=True)
class PumpSequence:
    """One pump loop (a train of Gaussian pulses) repeated ``loop_count`` times.

    ``pulses`` holds ``(amplitude_v, width_ns)`` pairs, width being the
    intensity FWHM. ``stages`` are further sequences run afterwards.
    """

    pulses: tuple[tuple[float, float], ...]
    pulse_separation_ns: float = 200.0
    loop_duration_us: float = 5.0
    loop_count: int = 15000
    wait_ms: float = 20.0
    stages: tuple[PumpSequence, ...] = field(default=())

    def __post_init__(self):
        pulses = tuple((float(a), float(w)) for a, w in self.pulses)
        object.__setattr__(self, "pulses", pulses)
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "loop_count", int(self.loop_count))
        if not 1 <= len(pulses) <= MAX_PULSES:
            raise ValidationError(f"pulse count must be 1..{MAX_PULSES}, got {len(pulses)}")
        for k, (amp, width) in enumerate(pulses):
            if not AMPLITUDE_BOUNDS_V[0] <= amp <= AMPLITUDE_BOUNDS_V[1]:
                raise ValidationError(f"pulse {k}: amplitude {amp} V outside {AMPLITUDE_BOUNDS_V}")
            if not WIDTH_BOUNDS_NS[0] <= width <= WIDTH_BOUNDS_NS[1]:
                raise ValidationError(f"pulse {k}: width {width} ns outside {WIDTH_BOUNDS_NS}")
        if not LOOP_DURATION_BOUNDS_US[0] <= self.loop_duration_us <= LOOP_DURATION_BOUNDS_US[1]:
            raise ValidationError(f"loop duration {self.loop_duration_us} us outside {LOOP_DURATION_BOUNDS_US}")
        if not LOOP_COUNT_BOUNDS[0] <= self.loop_count <= LOOP_COUNT_BOUNDS[1]:
            raise ValidationError(f"loop count {self.loop_count} outside {LOOP_COUNT_BOUNDS}")
        if self.pulse_separation_ns <= 0 or self.wait_ms < 0:
            raise ValidationError("pulse separation must be positive and wait time nonnegative")
        if len(pulses) * self.pulse_separation_ns + pulses[-1][1] > self.loop_duration_us * 1e3:
            raise ValidationError("pulse train overflows the loop window")

    @property
    def n_pulses(self) -> int:
        return len(self.pulses)

    @property
    def first_center_ns(self) -> float:
        return 0.5 * self.pulse_separation_ns

    def pulse_centers_ns(self, start_ns: float = 0.0) -> np.ndarray:
        return start_ns + self.first_center_ns + self.pulse_separation_ns * np.arange(self.n_pulses)


@dataclass(frozen=True)
class PumpCalibration:
    """Conversion from drive voltage to burn probability.

    ``burn_rate_per_mw`` multiplies the pump energy spectral density (mW ns per
    MHz) inside ``1 - exp(-rate * S)``.
    """

    volts_to_mw: float = 10.0 / 0.6
    burn_rate_per_mw: float = 0.1
    laser_linewidth_khz: float = 200.0

    def __post_init__(self):
        if not (self.volts_to_mw > 0 and self.burn_rate_per_mw >= 0):
            raise ValidationError("calibration constants must be positive")
        if self.laser_linewidth_khz < 0:
            raise ValidationError("laser linewidth must be nonnegative")


def _train(seq: PumpSequence, t: np.ndarray, start_ns: float = 0.0) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    for (amp, width), center in zip(seq.pulses, seq.pulse_centers_ns(start_ns)):
        out += np.sqrt(amp) * np.exp(-2.0 * np.log(2.0) * ((t - center) / width) ** 2)
    return out


def loop_waveform(seq: PumpSequence, sample_period_ns: float) -> ComplexField:
    """One loop's complex envelope; ``|a|**2`` is the drive amplitude in volts."""
    n = seq.loop_duration_us * 1e3 / sample_period_ns
    if abs(n - round(n)) > 1e-6:
        raise ValidationError(
            f"sample period {sample_period_ns} ns does not divide loop duration {seq.loop_duration_us} us"
        )
    t = sample_period_ns * np.arange(int(round(n)))
    return ComplexField(_train(seq, t).astype(complex), sample_period_ns)


def spectral_density(seq: PumpSequence, grid: SpectralGrid) -> np.ndarray:
    """Energy spectral density of one loop on ``grid`` (V ns per MHz).

    Normalised so ``sum(S) * resolution_mhz`` equals the waveform energy.
    """
    dt = grid.sample_period_ns
    t = dt * np.arange(grid.n_bins)
    wave = _train(seq, t, start_ns=max(w for _, w in seq.pulses))
    spec = np.abs(np.fft.fft(wave)) ** 2 * dt**2 / 1e3
    return np.fft.fftshift(spec)


def blur(density: np.ndarray, grid: SpectralGrid, linewidth_khz: float) -> np.ndarray:
    """Convolve with a Gaussian laser line of the given FWHM."""
    if linewidth_khz <= 0:
        return density
    sigma_bins = linewidth_khz * 1e-3 * GAUSS_FWHM_TO_SIGMA / grid.resolution_mhz
    return gaussian_filter1d(density, sigma_bins, mode="constant")


def pump_rates(state: MediumState, density: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted pump density seen by each ion class from its g1 and g2 transitions."""
    grid = state.grid
    rates = {1: np.zeros(grid.n_bins), 2: np.zeros(grid.n_bins)}
    for level, offset, weight in state.levels.transitions:
        # class x is driven by the pump at x + offset
        rates[level] += weight * shift(density, -grid.shift_bins(offset), 0.0)
    return rates[1], rates[2]


def burn_density(
    state: MediumState,
    density: np.ndarray,
    loop_count: int,
    loop_duration_us: float,
    wait_ms: float,
    burn_rate: float,
) -> MediumState:
    """Apply ``loop_count`` pump loops with per-loop density ``density`` (already in mW units)."""
    levels = state.levels
    r1, r2 = pump_rates(state, density)
    p1 = -np.expm1(-burn_rate * r1)
    p2 = -np.expm1(-burn_rate * r2)
    b, a = levels.branching_ratio, levels.fast_fraction
    ef, es = relaxation_factors(levels, loop_duration_us * 1e-3)

    # per loop: tau = b*p1*n1 - b*p2*n2 moves to g2, then both parts decay
    c = b * (p1 + p2)
    u = 0.5 * b * (p1 - p2) * state.total
    m = np.zeros((state.grid.n_bins, 3, 3))
    m[:, 0, 0] = ef * (1 - a * c)
    m[:, 0, 1] = -ef * a * c
    m[:, 0, 2] = ef * a * u
    m[:, 1, 0] = -es * (1 - a) * c
    m[:, 1, 1] = es * (1 - (1 - a) * c)
    m[:, 1, 2] = es * (1 - a) * u
    m[:, 2, 2] = 1.0
    mn = np.linalg.matrix_power(m, int(loop_count))

    fast, slow = split_excess(state)
    fast_n = mn[:, 0, 0] * fast + mn[:, 0, 1] * slow + mn[:, 0, 2]
    slow_n = mn[:, 1, 0] * fast + mn[:, 1, 1] * slow + mn[:, 1, 2]
    half = 0.5 * state.total
    excess = np.clip(fast_n + slow_n, -half, half)
    burned = state.with_excess(excess, dn_fast=fast_n)
    return relax(burned, wait_ms)


def burn(state: MediumState, seq: PumpSequence, cal: PumpCalibration | None = None) -> MediumState:
    """Prepare the medium with ``seq`` followed by each of its stages."""
    cal = cal or PumpCalibration()
    density = blur(spectral_density(seq, state.grid), state.grid, cal.laser_linewidth_khz)
    out = burn_density(
        state,
        density * cal.volts_to_mw,
        seq.loop_count,
        seq.loop_duration_us,
        seq.wait_ms,
        cal.burn_rate_per_mw,
    )
    for stage in seq.stages:
        out = burn(out, stage, cal)
    return out
