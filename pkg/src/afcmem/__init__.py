"""Atomic-frequency-comb quantum memory simulator with genetic pump-sequence optimisation."""

from .core import AbsorptionSpectrum, LevelStructure, MediumState, SpectralGrid, relax, synthesize_absorption
from .echo import ComplexField, EchoReport, coherent_fitness, gaussian_probe, propagate, report, storage_time_scan
from .errors import AFCError, ConfigurationError, ExtractionError, FitError, ValidationError
from .evo import GAConfig, Genome, SimulatorFitness, SurrogateFitness, run_ga
from .metrics import CombMetrics, eq1_efficiency, extract_metrics, gaussian_comb, optimal_depth, trough_background
from .multipass import OverlapModel, effective_depth, pass_scan
from .photon import CountingConfig, simulate_counts, snr
from .pump import PumpCalibration, PumpSequence, burn
from .simulator import MemorySimulator, baseline_sequence

__version__ = "0.1.0"

__all__ = [
    "AFCError",
    "AbsorptionSpectrum",
    "CombMetrics",
    "ComplexField",
    "ConfigurationError",
    "CountingConfig",
    "EchoReport",
    "ExtractionError",
    "FitError",
    "GAConfig",
    "Genome",
    "LevelStructure",
    "MediumState",
    "MemorySimulator",
    "OverlapModel",
    "PumpCalibration",
    "PumpSequence",
    "SimulatorFitness",
    "SpectralGrid",
    "SurrogateFitness",
    "ValidationError",
    "baseline_sequence",
    "burn",
    "coherent_fitness",
    "effective_depth",
    "eq1_efficiency",
    "extract_metrics",
    "gaussian_comb",
    "gaussian_probe",
    "optimal_depth",
    "pass_scan",
    "propagate",
    "relax",
    "report",
    "run_ga",
    "simulate_counts",
    "snr",
    "storage_time_scan",
    "synthesize_absorption",
    "trough_background",
]
