"""Linear propagation of a weak probe through a prepared absorption spectrum.

The medium acts as a minimum-phase filter ``H = exp(-d/2 + i*phi)`` whose
phase follows from the optical depth by a discrete Kramers-Kronig (Hilbert)
relation. Frequency bin ``k`` of the FFT corresponds to detuning
``k * resolution`` so the probe field and the spectrum share one grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .core import AbsorptionSpectrum, SpectralGrid
from .errors import FitError, ValidationError

GAUSS_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex envelope sampled every ``sample_period_ns`` starting at ``t0_ns``."""

    samples: np.ndarray
    sample_period_ns: float
    t0_ns: float = 0.0

    def __post_init__(self):
        a = np.array(self.samples, dtype=complex)
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)
        if not self.sample_period_ns > 0:
            raise ValidationError("sample period must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0_ns + self.sample_period_ns * np.arange(len(self.samples))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(self.intensity.sum() * self.sample_period_ns)

    def scaled(self, c: complex) -> ComplexField:
        return ComplexField(self.samples * c, self.sample_period_ns, self.t0_ns)

    def peak_time(self, mask: np.ndarray | None = None) -> float:
        """Time of maximum intensity, refined by a parabola through three samples."""
        inten = self.intensity if mask is None else np.where(mask, self.intensity, -np.inf)
        i = int(np.argmax(inten))
        t = self.times[i]
        if 0 < i < len(inten) - 1 and np.isfinite(inten[i - 1]) and np.isfinite(inten[i + 1]):
            y0, y1, y2 = inten[i - 1], inten[i], inten[i + 1]
            denom = y0 - 2 * y1 + y2
            if denom < 0:
                t += 0.5 * (y0 - y2) / denom * self.sample_period_ns
        return float(t)

    def fwhm(self, mask: np.ndarray | None = None) -> float:
        """Full width at half maximum of the intensity, linearly interpolated."""
        inten = self.intensity if mask is None else np.where(mask, self.intensity, 0.0)
        i = int(np.argmax(inten))
        half = inten[i] / 2
        if half <= 0:
            return 0.0
        lo = i
        while lo > 0 and inten[lo - 1] > half:
            lo -= 1
        hi = i
        while hi < len(inten) - 1 and inten[hi + 1] > half:
            hi += 1
        dt = self.sample_period_ns
        left = lo - 1 + (half - inten[lo - 1]) / (inten[lo] - inten[lo - 1]) if lo > 0 else lo
        right = hi + (inten[hi] - half) / (inten[hi] - inten[hi + 1]) if hi < len(inten) - 1 else hi
        return float((right - left) * dt)


@dataclass(frozen=True)
class EchoReport:
    efficiency: float
    echo_time_ns: float
    leakage_fraction: float
    echo_peak_amplitude: float


def gaussian_probe(
    grid: SpectralGrid, fwhm_ns: float = 50.0, center_ns: float | None = None, energy: float = 1.0
) -> ComplexField:
    """Transform-limited Gaussian pulse on the time axis paired with ``grid``.

    ``fwhm_ns`` is the intensity FWHM. The default centre sits ten widths after
    the start of the window so nothing wraps around.
    """
    dt = grid.sample_period_ns
    center = 10.0 * fwhm_ns if center_ns is None else center_ns
    t = dt * np.arange(grid.n_bins)
    env = np.exp(-2.0 * np.log(2.0) * ((t - center) / fwhm_ns) ** 2)
    field = ComplexField(env.astype(complex), dt)
    return field.scaled(np.sqrt(energy / field.energy))


def _to_fft_order(values: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(values)


def minimum_phase(log_magnitude: np.ndarray) -> np.ndarray:
    """Phase of the causal filter whose log-magnitude is given (FFT ordering).

    Folds the real cepstrum onto non-negative delays, the discrete form of the
    Hilbert transform linking log-magnitude and phase.
    """
    n = len(log_magnitude)
    cep = np.fft.ifft(log_magnitude)
    folded = np.zeros(n, dtype=complex)
    folded[0] = cep[0]
    folded[1 : n // 2] = 2.0 * cep[1 : n // 2]
    folded[n // 2] = cep[n // 2]
    return np.fft.fft(folded).imag


def transfer_function(spec: AbsorptionSpectrum) -> np.ndarray:
    """Complex amplitude response per grid bin, ordered like ``grid.detuning``."""
    log_mag = _to_fft_order(-0.5 * np.asarray(spec.d))
    phase = minimum_phase(log_mag)
    return np.fft.fftshift(np.exp(log_mag + 1j * phase))


def _check_bandwidth(field: ComplexField, grid: SpectralGrid, fraction: float = 0.99):
    power = np.fft.fftshift(np.abs(np.fft.fft(field.samples)) ** 2)
    total = power.sum()
    if total == 0:
        return
    det = np.abs(grid.detuning)
    order = np.argsort(det, kind="stable")
    cum = np.cumsum(power[order]) / total
    half_band = det[order][min(int(np.searchsorted(cum, fraction)), len(cum) - 1)]
    ratio = 2.0 * half_band / (grid.span_mhz / 2.0)
    if ratio > 1.0:
        raise ValidationError(
            f"probe bandwidth ({2 * half_band:.2f} MHz for 99% energy) is {ratio:.2f}x "
            f"the usable band of {grid.span_mhz / 2:.2f} MHz"
        )


def propagate(field: ComplexField, spec: AbsorptionSpectrum) -> ComplexField:
    """Filter ``field`` through the medium described by ``spec``."""
    grid = spec.grid
    if len(field) != grid.n_bins or not np.isclose(field.sample_period_ns, grid.sample_period_ns):
        raise ValidationError("field sampling does not match the spectral grid")
    _check_bandwidth(field, grid)
    h = _to_fft_order(transfer_function(spec))
    out = np.fft.ifft(np.fft.fft(field.samples) * h)
    return ComplexField(out, field.sample_period_ns, field.t0_ns)


def echo_windows(reference: ComplexField, comb_spacing_mhz: float, width_factor: float = 1.5):
    """Boolean masks for the leakage and first-echo windows, and the storage time."""
    if not comb_spacing_mhz > 0:
        raise ValidationError("comb spacing must be positive")
    t_in = reference.peak_time()
    storage = 1e3 / comb_spacing_mhz
    half = width_factor * reference.fwhm()
    if 2 * half > storage:
        raise ValidationError(
            f"echo window overlaps leakage: storage time {storage:.1f} ns is shorter than "
            f"window width {2 * half:.1f} ns"
        )
    t = reference.times
    leak = np.abs(t - t_in) <= half
    echo = np.abs(t - (t_in + storage)) <= half
    return leak, echo, storage


def report(
    input_field: ComplexField,
    output: ComplexField,
    comb_spacing_mhz: float,
    T2_us: float = 60.0,
    width_factor: float = 1.5,
) -> EchoReport:
    """Efficiency, leakage and timing of the first echo."""
    leak, echo, storage = echo_windows(input_field, comb_spacing_mhz, width_factor)
    e_in = input_field.energy
    inten = output.intensity
    dt = output.sample_period_ns
    decay = np.exp(-2.0 * (storage * 1e-3) / T2_us)
    e_echo = inten[echo].sum() * dt
    eff = e_echo / e_in * decay
    leakage = inten[leak].sum() * dt / e_in
    if e_echo > 0:
        t_echo = output.peak_time(echo) - input_field.peak_time()
        peak = float(np.sqrt(inten[echo].max() * decay))
    else:
        t_echo, peak = storage, 0.0
    return EchoReport(
        efficiency=float(eff),
        echo_time_ns=float(t_echo),
        leakage_fraction=float(leakage),
        echo_peak_amplitude=peak,
    )


def coherent_fitness(output: ComplexField, comb_spacing_mhz: float, reference: ComplexField) -> float:
    """Peak envelope amplitude inside the first-echo window.

    ``reference`` is the input probe; it fixes where the window sits.
    """
    _, echo, _ = echo_windows(reference, comb_spacing_mhz)
    return float(np.abs(output.samples[echo]).max())


def leakage_distortion(input_field: ComplexField, output: ComplexField, comb_spacing_mhz: float) -> float:
    """Relative FWHM change of the transmitted (leakage) pulse."""
    leak, _, _ = echo_windows(input_field, comb_spacing_mhz)
    return output.fwhm(leak) / input_field.fwhm() - 1.0


def fit_exponential_decay(times_ns: Iterable[float], efficiencies: Iterable[float]) -> tuple[float, float]:
    """Least-squares fit of ``eta0 * exp(-t/tau)`` on log efficiency.

    Non-positive efficiencies are dropped. Returns ``(eta0, tau_ns)``; ``tau`` is
    ``inf`` when the data do not decay.
    """
    t = np.asarray(list(times_ns), dtype=float)
    eta = np.asarray(list(efficiencies), dtype=float)
    ok = eta > 0
    if ok.sum() < 3:
        raise FitError(f"need at least 3 positive efficiencies, got {int(ok.sum())}")
    slope, intercept = np.polyfit(t[ok], np.log(eta[ok]), 1)
    tau = np.inf if slope >= 0 else -1.0 / slope
    return float(np.exp(intercept)), float(tau)


def storage_time_scan(recipe: Callable[[float], float], storage_times_ns: Iterable[float]):
    """Efficiency versus storage time and the fitted exponential time constant.

    ``recipe(t_s)`` prepares a comb with pulse separation ``t_s`` and returns the
    measured echo efficiency.
    """
    rows = [(float(ts), float(recipe(float(ts)))) for ts in storage_times_ns]
    _, tau = fit_exponential_decay(*zip(*rows))
    return rows, tau
