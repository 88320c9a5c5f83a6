"""Photon-counting Monte Carlo for weak coherent pulses stored in the memory.

Each storage event starts from a Poisson number of input photons. The echo
and leakage detectors each see an independent binomial thinning of that
number, with probability (channel efficiency x detector efficiency).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, ValidationError


DEFAULT_ECHO_MEANS = (0.02, 0.09, 0.16, 0.23, 0.30)


@dataclass(frozen=True)
class CountingConfig:
    """Weak-pulse storage experiment.

    Without ``mean_input_photons`` the inputs are chosen so the mean echo
    counts are :data:`DEFAULT_ECHO_MEANS`.
    """

    mean_input_photons: tuple[float, ...] | None = None
    memory_efficiency: float = 0.055
    leakage_fraction: float = 0.3
    detector_efficiency: float = 0.60
    gate_ns: float = 2000.0
    pulses_per_prep: int = 100
    pulse_spacing_us: float = 10.0
    n_events: int = 10000
    dark_count_rate_hz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("memory_efficiency", "leakage_fraction", "detector_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.n_events < 100:
            raise ConfigurationError(f"n_events must be >= 100, got {self.n_events}")
        if self.mean_input_photons is None:
            means = inputs_for_echo_means(DEFAULT_ECHO_MEANS, self)
        else:
            means = tuple(float(m) for m in self.mean_input_photons)
        object.__setattr__(self, "mean_input_photons", means)
        if any(m < 0 for m in means) or not means:
            raise ConfigurationError("mean_input_photons must be a nonempty list of nonnegative values")
        if self.dark_count_rate_hz < 0 or self.gate_ns <= 0:
            raise ConfigurationError("dark count rate must be nonnegative and gate positive")
        if self.pulses_per_prep < 1 or self.pulse_spacing_us <= 0:
            raise ConfigurationError("pulses_per_prep and pulse_spacing_us must be positive")

    @property
    def echo_probability(self) -> float:
        return self.memory_efficiency * self.detector_efficiency

    @property
    def leakage_probability(self) -> float:
        return self.leakage_fraction * self.detector_efficiency

    @property
    def dark_mean(self) -> float:
        """Expected dark counts per gate."""
        return self.dark_count_rate_hz * self.gate_ns * 1e-9


@dataclass(frozen=True)
class ChannelStats:
    mean: float
    variance: float


@dataclass(frozen=True)
class SettingResult:
    mean_input: float
    echo: ChannelStats
    leakage: ChannelStats
    covariance: float


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class CountingReport:
    settings: tuple[SettingResult, ...]
    echo_fit: SlopeFit | None
    leakage_fit: SlopeFit | None
    config: CountingConfig = field(repr=False)


def _line_fit(x: np.ndarray, y: np.ndarray, level: float = 0.95) -> SlopeFit | None:
    if len(x) < 3 or np.ptp(x) == 0:
        return None
    res = stats.linregress(x, y)
    tcrit = stats.t.ppf(0.5 + level / 2, len(x) - 2)
    half = tcrit * res.stderr
    return SlopeFit(float(res.slope), float(res.intercept), float(res.slope - half), float(res.slope + half))


def simulate_counts(config: CountingConfig) -> CountingReport:
    """Per-event echo and leakage counts for each input mean, and variance-vs-mean fits."""
    settings = []
    children = np.random.SeedSequence(config.seed).spawn(len(config.mean_input_photons))
    for mu, child in zip(config.mean_input_photons, children):
        rng = np.random.default_rng(child)
        n_in = rng.poisson(mu, config.n_events)
        echo = rng.binomial(n_in, config.echo_probability)
        leak = rng.binomial(n_in, config.leakage_probability)
        if config.dark_mean > 0:
            echo = echo + rng.poisson(config.dark_mean, config.n_events)
            leak = leak + rng.poisson(config.dark_mean, config.n_events)
        settings.append(
            SettingResult(
                mean_input=mu,
                echo=ChannelStats(float(echo.mean()), float(echo.var(ddof=1))),
                leakage=ChannelStats(float(leak.mean()), float(leak.var(ddof=1))),
                covariance=float(np.cov(echo, leak)[0, 1]),
            )
        )
    em = np.array([s.echo.mean for s in settings])
    ev = np.array([s.echo.variance for s in settings])
    lm = np.array([s.leakage.mean for s in settings])
    lv = np.array([s.leakage.variance for s in settings])
    return CountingReport(tuple(settings), _line_fit(em, ev), _line_fit(lm, lv), config)


def snr(report: CountingReport, setting: int) -> float:
    """Mean echo counts over their standard deviation (``sqrt(mean)`` for Poisson light)."""
    s = report.settings[setting].echo
    if s.mean <= 0 or s.variance <= 0:
        raise ValidationError(f"setting {setting} has no echo counts; SNR is undefined")
    return float(s.mean / np.sqrt(s.variance))


def inputs_for_echo_means(echo_means, config: CountingConfig) -> tuple[float, ...]:
    """Input photon means that give the requested mean echo counts."""
    p = config.echo_probability
    if p <= 0:
        raise ConfigurationError("echo probability is zero; no input reaches the requested echo means")
    return tuple(float(m) / p for m in echo_means)
