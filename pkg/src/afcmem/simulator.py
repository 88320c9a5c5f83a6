"""Prepare-and-store pipeline tying the pump, medium, multipass and echo modules together."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import AbsorptionSpectrum, LevelStructure, MediumState, SpectralGrid, synthesize_absorption
from .echo import ComplexField, EchoReport, gaussian_probe, propagate, report, storage_time_scan
from .multipass import OverlapModel
from .pump import PumpCalibration, PumpSequence, burn

# Calibration of the shipped defaults. With these the two-pulse baseline stores
# about 0.9 % in a single pass, the pass scan peaks at four passes and the
# storage-time scan decays with tau near 300 ns.
DEFAULT_D_PEAK = 1.25
DEFAULT_D_BG = 0.05
DEFAULT_BURN_RATE = 6e-5
DEFAULT_LINEWIDTH_KHZ = 600.0
DEFAULT_TRANSITION_WEIGHTS = (0.95, 0.05, 0.05, 0.95)
DEFAULT_OVERLAP_FACTOR = 0.8
DEFAULT_PUMP_PENALTY = 0.005


def calibrated_levels(**overrides) -> LevelStructure:
    return LevelStructure(**{"transition_weights": DEFAULT_TRANSITION_WEIGHTS, **overrides})


def calibrated_pump(**overrides) -> PumpCalibration:
    kwargs = {"burn_rate_per_mw": DEFAULT_BURN_RATE, "laser_linewidth_khz": DEFAULT_LINEWIDTH_KHZ}
    return PumpCalibration(**{**kwargs, **overrides})


def calibrated_overlap(**overrides) -> OverlapModel:
    kwargs = {"overlap_factor": DEFAULT_OVERLAP_FACTOR, "pump_penalty": DEFAULT_PUMP_PENALTY}
    return OverlapModel(**{**kwargs, **overrides})


def baseline_sequence(**overrides) -> PumpSequence:
    """Two identical 50 ns pulses 200 ns apart, 5 us loops, 15000 loops, 20 ms wait."""
    kwargs = dict(
        pulses=((0.3, 50.0), (0.3, 50.0)),
        pulse_separation_ns=200.0,
        loop_duration_us=5.0,
        loop_count=15000,
        wait_ms=20.0,
    )
    kwargs.update(overrides)
    return PumpSequence(**kwargs)


@dataclass(frozen=True)
class Stored:
    state: MediumState
    spectrum: AbsorptionSpectrum
    probe: ComplexField
    output: ComplexField
    report: EchoReport
    comb_spacing_mhz: float


@dataclass(frozen=True)
class MemorySimulator:
    """Crystal, pump calibration and probe shared by every experiment.

    ``efficiency`` is the single number the optimiser and the scans consume.
    """

    grid: SpectralGrid = field(default_factory=SpectralGrid)
    levels: LevelStructure = field(default_factory=calibrated_levels)
    calibration: PumpCalibration = field(default_factory=calibrated_pump)
    d_peak: float = DEFAULT_D_PEAK
    d_bg: float = DEFAULT_D_BG
    probe_fwhm_ns: float = 50.0
    overlap: OverlapModel = field(default_factory=calibrated_overlap)

    def fresh_state(self) -> MediumState:
        return MediumState.fresh(self.grid, d_peak=self.d_peak, d_bg=self.d_bg, levels=self.levels)

    def prepare(self, seq: PumpSequence, passes: int = 1, overlap: OverlapModel | None = None) -> MediumState:
        """Burn the comb; extra passes scale down the achievable hole contrast."""
        overlap = overlap or self.overlap
        state = burn(self.fresh_state(), seq, self.calibration)
        factor = overlap.contrast(passes)
        if factor != 1.0:
            fast = None if state.dn_fast is None else state.dn_fast * factor
            state = state.with_excess(state.excess * factor, dn_fast=fast)
        return state

    def spectrum(self, seq: PumpSequence, passes: int = 1, overlap: OverlapModel | None = None) -> AbsorptionSpectrum:
        overlap = overlap or self.overlap
        return synthesize_absorption(self.prepare(seq, passes, overlap), passes, overlap)

    def probe(self) -> ComplexField:
        return gaussian_probe(self.grid, self.probe_fwhm_ns)

    def store(self, seq: PumpSequence, passes: int = 1, overlap: OverlapModel | None = None) -> Stored:
        overlap = overlap or self.overlap
        state = self.prepare(seq, passes, overlap)
        spec = synthesize_absorption(state, passes, overlap)
        probe = self.probe()
        out = propagate(probe, spec)
        spacing = 1e3 / seq.pulse_separation_ns
        rep = report(probe, out, spacing, T2_us=self.levels.coherence_time_us)
        return Stored(state, spec, probe, out, rep, spacing)

    def efficiency(self, seq: PumpSequence, passes: int = 1, overlap: OverlapModel | None = None) -> float:
        return self.store(seq, passes, overlap).report.efficiency

    def storage_time_scan(self, seq: PumpSequence, storage_times_ns, passes: int = 1):
        """Efficiency versus pulse separation with everything else fixed."""

        def recipe(ts):
            return self.efficiency(replace(seq, pulse_separation_ns=ts), passes)

        return storage_time_scan(recipe, storage_times_ns)
