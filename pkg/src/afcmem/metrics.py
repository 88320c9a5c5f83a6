"""Comb parameters (finesse, depth, background, spacing) and the analytic efficiency law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .core import AbsorptionSpectrum, SpectralGrid
from .errors import ExtractionError, ValidationError

DEPHASING_CONST = np.pi**2 / (4.0 * np.log(2.0))
FORWARD_CEILING = 4.0 * np.exp(-2.0)
_REPLICAS = np.arange(-3, 4)
_FIT_REPLICAS = np.arange(-1, 2)


def eq1_efficiency(d: float, F: float, d0: float) -> float:
    """Forward-retrieval efficiency of a Gaussian-tooth comb.

    ``(d/F)**2 * exp(-d/F) * exp(-pi**2 / (4 ln2 F**2)) * exp(-d0)``
    """
    if not F > 0:
        raise ValidationError(f"finesse must be positive, got {F}")
    if d < 0 or d0 < 0:
        raise ValidationError(f"depths must be nonnegative, got d={d}, d0={d0}")
    x = d / F
    return float(x * x * np.exp(-x) * np.exp(-DEPHASING_CONST / F**2) * np.exp(-d0))


def optimal_depth(F: float, d0: float = 0.0) -> float:
    """Tooth depth maximising :func:`eq1_efficiency` at fixed finesse (``2F``)."""
    if not F > 0:
        raise ValidationError(f"finesse must be positive, got {F}")
    return 2.0 * F


@dataclass(frozen=True)
class CombMetrics:
    finesse_F: float
    depth_d: float
    background_d0: float
    spacing_delta_mhz: float
    teeth_count: int
    fit_residual: tuple[float, ...] = ()

    @property
    def efficiency(self) -> float:
        return eq1_efficiency(self.depth_d, self.finesse_F, self.background_d0)


def _gauss(x, fwhm):
    return np.exp(-4.0 * np.log(2.0) * (x / fwhm) ** 2)


def _lorentz(x, fwhm):
    return 1.0 / (1.0 + (2.0 * x / fwhm) ** 2)


_SHAPES = {"gaussian": _gauss, "lorentzian": _lorentz}


def gaussian_comb(
    grid: SpectralGrid,
    spacing_mhz: float,
    F: float,
    d: float,
    d0: float,
    center_mhz: float = 0.0,
    n_teeth: int | None = None,
) -> AbsorptionSpectrum:
    """Comb of Gaussian teeth with FWHM ``spacing/F`` and height ``d`` above ``d0``.

    Without ``n_teeth`` the comb is periodic across the whole grid (the grid
    span should be a multiple of the spacing). With ``n_teeth`` only that many
    teeth centred on ``center_mhz`` are drawn.
    """
    x = grid.detuning - center_mhz
    width = spacing_mhz / F
    if n_teeth is None:
        u = np.mod(x / spacing_mhz + 0.5, 1.0) - 0.5
        profile = sum(_gauss((u - k) * spacing_mhz, width) for k in _REPLICAS)
    else:
        ks = np.arange(n_teeth) - (n_teeth - 1) / 2.0
        profile = sum(_gauss(x - k * spacing_mhz, width) for k in ks)
    return AbsorptionSpectrum(grid=grid, d=d0 + d * profile, d_floor=d0)


def _tooth_model(shape, spacing):
    line = _SHAPES[shape]

    def model(x, base, height, center, fwhm):
        return base + height * sum(line(x - center - k * spacing, fwhm) for k in _FIT_REPLICAS)

    return model


def comb_phase(detuning: np.ndarray, d: np.ndarray, spacing_mhz: float) -> float:
    """Offset in ``[0, spacing)`` of the tooth grid, from the first Fourier harmonic."""
    c = np.sum((d - d.mean()) * np.exp(2j * np.pi * detuning / spacing_mhz))
    phase = float(np.mod(np.angle(c) / (2 * np.pi) * spacing_mhz, spacing_mhz))
    # a tiny negative angle rounds up to exactly one spacing
    return 0.0 if phase >= spacing_mhz else phase


def extract_metrics(
    spec: AbsorptionSpectrum,
    expected_spacing_mhz: float,
    window_mhz: float,
    center_mhz: float = 0.0,
    shape: str = "gaussian",
    max_residual: float = 0.2,
) -> CombMetrics:
    """Fit every tooth inside ``window_mhz`` and average the comb parameters.

    Each tooth is fitted over one period with a line shape plus constant; the
    two neighbouring teeth enter the model as replicas of the same line one
    spacing away so overlapping low-finesse teeth are not biased. The fit is
    bounded (nonnegative baseline, width at most one spacing). Teeth whose
    worst residual exceeds ``max_residual`` of their height are rejected.
    """
    if shape not in _SHAPES:
        raise ValidationError(f"unknown tooth shape {shape!r}")
    delta = float(expected_spacing_mhz)
    x = spec.grid.detuning
    d = np.asarray(spec.d)
    lo, hi = center_mhz - window_mhz / 2, center_mhz + window_mhz / 2
    inside = (x >= lo) & (x <= hi)
    if np.ptp(d[inside]) < 1e-9 * max(1.0, float(d[inside].max())):
        raise ExtractionError("spectrum is flat inside the window: no teeth")

    phase = comb_phase(x[inside], d[inside], delta)
    first = lo + np.mod(phase - lo, delta)
    guesses = np.arange(first, hi, delta)
    guesses = guesses[(guesses - delta / 2 >= lo) & (guesses + delta / 2 <= hi)]
    model = _tooth_model(shape, delta)

    centers, widths, heights, bases, residuals = [], [], [], [], []
    for g in guesses:
        sel = np.abs(x - g) <= delta / 4
        peak = x[sel][np.argmax(d[sel])]
        region = np.abs(x - peak) <= delta / 2
        xs, ys = x[region], d[region]
        top = float(ys.max())
        base0 = float(ys.min())
        p0 = (base0, max(top - base0, 1e-9), peak, delta / 3)
        bounds = ([0.0, 0.0, peak - delta / 4, delta / 50], [top, 2 * top + 1e-9, peak + delta / 4, delta])
        try:
            popt, _ = curve_fit(model, xs, ys, p0=np.clip(p0, *bounds), bounds=bounds, maxfev=4000)
        except (RuntimeError, ValueError):
            continue
        base, height, center, fwhm = popt
        if height <= 0:
            continue
        resid = float(np.max(np.abs(model(xs, *popt) - ys)) / height)
        if resid > max_residual:
            continue
        centers.append(center)
        widths.append(fwhm)
        heights.append(height)
        bases.append(base)
        residuals.append(resid)

    if len(centers) < 3:
        raise ExtractionError(
            f"only {len(centers)} teeth accepted out of {len(guesses)} candidates "
            f"in [{lo:.2f}, {hi:.2f}] MHz (need 3)"
        )
    idx = np.round((np.asarray(centers) - centers[0]) / delta)
    spacing = float(np.polyfit(idx, centers, 1)[0])
    return CombMetrics(
        finesse_F=spacing / float(np.mean(widths)),
        depth_d=float(np.mean(heights)),
        background_d0=max(0.0, float(np.mean(bases))),
        spacing_delta_mhz=spacing,
        teeth_count=len(centers),
        fit_residual=tuple(residuals),
    )


def trough_background(
    spec: AbsorptionSpectrum, spacing_mhz: float, window_mhz: float, center_mhz: float = 0.0
) -> float:
    """Mean absorption at the comb troughs inside the window.

    Unlike the fitted baseline this needs no tooth model, so it also works on
    combs with too few or strongly overlapping teeth. Each trough is the
    minimum of ``d`` within a quarter period of a hole position.
    """
    if not spacing_mhz > 0 or not window_mhz > 0:
        raise ValidationError("spacing and window must be positive")
    x = spec.grid.detuning
    d = np.asarray(spec.d)
    lo, hi = center_mhz - window_mhz / 2, center_mhz + window_mhz / 2
    inside = (x >= lo) & (x <= hi)
    # holes sit half a period away from the teeth
    holes_phase = np.mod(comb_phase(x[inside], -d[inside], spacing_mhz), spacing_mhz)
    first = lo + np.mod(holes_phase - lo, spacing_mhz)
    holes = np.arange(first, hi + 1e-12, spacing_mhz)
    troughs = [d[np.abs(x - h) <= spacing_mhz / 4].min() for h in holes]
    if not troughs:
        raise ExtractionError(f"no comb trough inside [{lo:.2f}, {hi:.2f}] MHz")
    return float(np.mean(troughs))
