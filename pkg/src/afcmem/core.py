"""Spectral grid, Tm ion level structure, medium populations and absorption synthesis.

Populations live on a uniform detuning axis. Each bin is an ion class with
inhomogeneous detuning ``x``; the class absorbs on four transitions located at
``x + offset`` where the offsets follow from the excited and ground Zeeman
splittings. All values are immutable after construction; operations return
new states.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ValidationError
from .multipass import OverlapModel

THERMAL_POPULATION = 0.5


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform two-sided detuning axis in MHz, centred on the carrier.

    The paired time axis has sample period ``1/span`` and the same number of
    samples, so FFTs map one onto the other without resampling.
    """

    span_mhz: float = 120.0
    n_bins: int = 2**14

    def __post_init__(self):
        n = int(self.n_bins)
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"n_bins must be a power of two >= 2, got {self.n_bins}")
        if not self.span_mhz > 0:
            raise ConfigurationError("span_mhz must be positive")
        if self.resolution_mhz > 0.05:
            raise ConfigurationError(
                f"resolution {self.resolution_mhz:.4f} MHz exceeds 0.05 MHz; "
                "use more bins or a smaller span"
            )

    @property
    def resolution_mhz(self) -> float:
        return self.span_mhz / self.n_bins

    @property
    def detuning(self) -> np.ndarray:
        """Bin centres in MHz, ``-span/2 .. span/2 - resolution`` (zero at index n/2)."""
        return (np.arange(self.n_bins) - self.n_bins // 2) * self.resolution_mhz

    @property
    def sample_period_ns(self) -> float:
        return 1e3 / self.span_mhz

    @property
    def time_span_ns(self) -> float:
        return self.n_bins * self.sample_period_ns

    def shift_bins(self, offset_mhz: float) -> int:
        return int(round(offset_mhz / self.resolution_mhz))

    def index_of(self, detuning_mhz: float) -> int:
        return self.n_bins // 2 + self.shift_bins(detuning_mhz)


@dataclass(frozen=True)
class LevelStructure:
    """Two ground and two excited Zeeman sublevels of the optical transition.

    ``transition_weights`` are ordered g1->e1, g1->e2, g2->e1, g2->e2.
    ``fast_fraction`` is the share of a pumped population difference that
    relaxes with the intermediate-level lifetime; the rest follows the ground
    lifetime.
    """

    excited_splitting_mhz: float = 3.75
    ground_splitting_mhz: float = 17.3
    branching_ratio: float = 0.25
    intermediate_lifetime_ms: float = 10.0
    ground_lifetime_ms: float = 110.0
    coherence_time_us: float = 60.0
    transition_weights: tuple[float, float, float, float] = (0.5, 0.5, 0.5, 0.5)
    fast_fraction: float = 0.5

    def __post_init__(self):
        positive = {
            "excited_splitting_mhz": self.excited_splitting_mhz,
            "ground_splitting_mhz": self.ground_splitting_mhz,
            "intermediate_lifetime_ms": self.intermediate_lifetime_ms,
            "ground_lifetime_ms": self.ground_lifetime_ms,
            "coherence_time_us": self.coherence_time_us,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if not 0 < self.branching_ratio < 1:
            raise ConfigurationError("branching_ratio must lie in (0, 1)")
        if not 0 <= self.fast_fraction <= 1:
            raise ConfigurationError("fast_fraction must lie in [0, 1]")
        w = tuple(float(v) for v in self.transition_weights)
        if len(w) != 4 or min(w) < 0:
            raise ConfigurationError("transition_weights needs four nonnegative values")
        if abs(sum(w) - 2.0) > 1e-9:
            raise ConfigurationError(f"transition_weights must sum to 2, got {sum(w)}")
        object.__setattr__(self, "transition_weights", w)

    @property
    def transitions(self) -> list[tuple[int, float, float]]:
        """(ground level 1|2, frequency offset in MHz, weight) per transition."""
        e, g = self.excited_splitting_mhz, self.ground_splitting_mhz
        offsets = (0.0, e, -g, -g + e)
        levels = (1, 1, 2, 2)
        return list(zip(levels, offsets, self.transition_weights))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MediumState:
    """Ground-level populations per ion class plus the medium's optical depth.

    ``dn_fast`` tracks which part of the g2 excess relaxes on the fast
    timescale. ``None`` means untracked; :func:`relax` then splits the excess
    using ``levels.fast_fraction``.
    """

    grid: SpectralGrid
    n_g1: np.ndarray
    n_g2: np.ndarray
    d_peak: float = 1.0
    d_bg: float = 0.1
    inhomogeneous_profile: np.ndarray | None = None
    levels: LevelStructure = field(default_factory=LevelStructure)
    dn_fast: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.n_bins
        object.__setattr__(self, "n_g1", _frozen(self.n_g1))
        object.__setattr__(self, "n_g2", _frozen(self.n_g2))
        if self.n_g1.shape != (n,) or self.n_g2.shape != (n,):
            raise ConfigurationError("population arrays must match the grid")
        if self.inhomogeneous_profile is not None:
            object.__setattr__(self, "inhomogeneous_profile", _frozen(self.inhomogeneous_profile))
            if self.inhomogeneous_profile.shape != (n,):
                raise ConfigurationError("inhomogeneous_profile must match the grid")
        if self.dn_fast is not None:
            object.__setattr__(self, "dn_fast", _frozen(self.dn_fast))
        tol = 1e-9
        if (self.n_g1 < -tol).any() or (self.n_g2 < -tol).any():
            raise ValidationError("populations must be nonnegative")
        if (self.n_g1 + self.n_g2 > 1 + tol).any():
            raise ValidationError("n_g1 + n_g2 must not exceed 1")
        if self.d_peak < 0 or self.d_bg < 0:
            raise ValidationError("d_peak and d_bg must be nonnegative")

    @classmethod
    def fresh(cls, grid: SpectralGrid | None = None, **kwargs) -> MediumState:
        grid = grid or SpectralGrid()
        half = np.full(grid.n_bins, THERMAL_POPULATION)
        return cls(grid=grid, n_g1=half, n_g2=half.copy(), **kwargs)

    @property
    def total(self) -> np.ndarray:
        return self.n_g1 + self.n_g2

    @property
    def excess(self) -> np.ndarray:
        """g2 population above its thermal share (the burned hole contrast)."""
        return self.n_g2 - 0.5 * self.total

    def with_excess(self, excess: np.ndarray, dn_fast: np.ndarray | None = None) -> MediumState:
        total = self.total
        n_g2 = 0.5 * total + excess
        return replace(self, n_g1=total - n_g2, n_g2=n_g2, dn_fast=dn_fast)


@dataclass(frozen=True, eq=False)
class AbsorptionSpectrum:
    grid: SpectralGrid
    d: np.ndarray
    d_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen(self.d))
        if self.d.shape != (self.grid.n_bins,):
            raise ConfigurationError("absorption array must match the grid")
        if not np.isfinite(self.d).all() or (self.d < 0).any():
            raise ValidationError("optical depth must be finite and nonnegative")


def shift(values: np.ndarray, k: int, fill: float) -> np.ndarray:
    """Return ``out[i] = values[i - k]``, filling bins shifted in from outside."""
    out = np.full_like(values, fill, dtype=float)
    n = len(values)
    if k >= n or k <= -n:
        return out
    if k >= 0:
        out[k:] = values[: n - k]
    else:
        out[:k] = values[-k:]
    return out


def synthesize_absorption(
    state: MediumState, passes: int = 1, overlap: OverlapModel | None = None
) -> AbsorptionSpectrum:
    """Optical depth seen by a probe after ``passes`` trips through the crystal."""
    if passes < 1:
        raise ValidationError("passes must be >= 1")
    overlap = overlap or OverlapModel()
    if passes > overlap.max_passes:
        raise ConfigurationError(f"passes={passes} exceeds overlap model limit {overlap.max_passes}")
    multiplier = overlap.multiplier(passes)
    bg_multiplier = multiplier * overlap.background_per_pass ** (passes - 1)

    grid = state.grid
    profile = state.inhomogeneous_profile
    pops = {1: state.n_g1, 2: state.n_g2}
    line = np.zeros(grid.n_bins)
    for level, offset, weight in state.levels.transitions:
        if weight == 0:
            continue
        absorbers = pops[level] if profile is None else pops[level] * profile
        fill = THERMAL_POPULATION if profile is None else THERMAL_POPULATION * float(profile.mean())
        line += weight * shift(absorbers, grid.shift_bins(offset), fill)
    floor = state.d_bg * bg_multiplier
    d = multiplier * state.d_peak * line + floor
    return AbsorptionSpectrum(grid=grid, d=np.clip(d, 0.0, None), d_floor=floor)


def relaxation_factors(levels: LevelStructure, elapsed_ms: float) -> tuple[float, float]:
    """Decay of the fast and slow components after ``elapsed_ms``."""
    if elapsed_ms < 0:
        raise ValidationError(f"elapsed time must be nonnegative, got {elapsed_ms}")
    return (
        float(np.exp(-elapsed_ms / levels.intermediate_lifetime_ms)),
        float(np.exp(-elapsed_ms / levels.ground_lifetime_ms)),
    )


def split_excess(state: MediumState) -> tuple[np.ndarray, np.ndarray]:
    """(fast, slow) components of the g2 excess."""
    excess = state.excess
    if state.dn_fast is None:
        fast = state.levels.fast_fraction * excess
    else:
        fast = np.asarray(state.dn_fast)
    return fast, excess - fast


def relax(state: MediumState, elapsed_ms: float) -> MediumState:
    """Let burned holes decay toward thermal populations for ``elapsed_ms``.

    The g2 excess decays double-exponentially with the intermediate and ground
    lifetimes; the per-bin total population is conserved.
    """
    f_fast, f_slow = relaxation_factors(state.levels, elapsed_ms)
    if elapsed_ms == 0:
        return state
    fast, slow = split_excess(state)
    fast = fast * f_fast
    slow = slow * f_slow
    return state.with_excess(fast + slow, dn_fast=fast)
