"""Scenario configuration: YAML text, validated into pydantic models.

Every section maps onto one module's constructor. ``build_*`` helpers turn a
validated :class:`Scenario` into the package's dataclasses; domain checks in
those constructors surface as :class:`~afcmem.errors.ConfigurationError`.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
from importlib import resources
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field

from . import simulator as sim
from .core import LevelStructure, SpectralGrid
from .errors import ConfigurationError
from .evo import GAConfig, GeneBounds
from .multipass import OverlapModel
from .photon import DEFAULT_ECHO_MEANS, CountingConfig, inputs_for_echo_means
from .pump import PumpCalibration, PumpSequence

CONFIG_DIR_ENV = "AFCMEM_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "default.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Section):
    span_mhz: float = 120.0
    n_bins: int = 2**14


class MediumSection(_Section):
    d_peak: float = sim.DEFAULT_D_PEAK
    d_bg: float = sim.DEFAULT_D_BG
    excited_splitting_mhz: float = 3.75
    ground_splitting_mhz: float = 17.3
    branching_ratio: float = 0.25
    intermediate_lifetime_ms: float = 10.0
    ground_lifetime_ms: float = 110.0
    coherence_time_us: float = 60.0
    transition_weights: tuple[float, float, float, float] = sim.DEFAULT_TRANSITION_WEIGHTS
    fast_fraction: float = 0.5


class PumpSection(_Section):
    volts_to_mw: float = 10.0 / 0.6
    burn_rate_per_mw: float = sim.DEFAULT_BURN_RATE
    laser_linewidth_khz: float = sim.DEFAULT_LINEWIDTH_KHZ


class SequenceSection(_Section):
    pulses: tuple[tuple[float, float], ...] = ((0.3, 50.0), (0.3, 50.0))
    pulse_separation_ns: float = 200.0
    loop_duration_us: float = 5.0
    loop_count: int = 15000
    wait_ms: float = 20.0


class ProbeSection(_Section):
    fwhm_ns: float = 50.0


class MultipassSection(_Section):
    passes: int = 1
    overlap_factor: float = sim.DEFAULT_OVERLAP_FACTOR
    pump_penalty: float = sim.DEFAULT_PUMP_PENALTY
    background_per_pass: float = 1.0
    max_passes: int = 8
    scan: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)


class GASection(_Section):
    n_pulses: int = 5
    population: int = 20
    generations: int = 20
    tournament_size: int = 10
    elites: int = 3
    fitness_repeats: int = 25
    mutation_rate: float = 0.15
    mutation_scale: float = 0.10
    crossover_rate: float = 0.5
    fitness_noise_sigma: float = 0.03
    amplitude_v: tuple[float, float] = (0.0, 0.6)
    width_ns: tuple[float, float] = (20.0, 100.0)
    loop_duration_us: tuple[float, float] = (2.0, 10.0)
    loop_count: tuple[int, int] = (5000, 50000)
    passes: int = 1
    n_jobs: int = 1
    sweep: tuple[int, ...] = ()


class CombSection(_Section):
    window_mhz: float = 15.0
    shape: str = "gaussian"


class TsScanSection(_Section):
    storage_times_ns: tuple[float, ...] = (160.0, 200.0, 240.0, 280.0, 320.0, 360.0, 400.0, 440.0, 480.0)
    passes: int = 1


class CountingSection(_Section):
    echo_means: tuple[float, ...] = DEFAULT_ECHO_MEANS
    memory_efficiency: float = 0.055
    leakage_fraction: float = 0.3
    detector_efficiency: float = 0.60
    gate_ns: float = 2000.0
    pulses_per_prep: int = 100
    pulse_spacing_us: float = 10.0
    n_events: int = 10000
    dark_count_rate_hz: float = 0.0


class OutputSection(_Section):
    dir: str = "results"


class Scenario(_Section):
    name: str = "default"
    master_seed: int = Field(default=20240601, ge=0, lt=2**64)
    grid: GridSection = GridSection()
    medium: MediumSection = MediumSection()
    pump: PumpSection = PumpSection()
    sequence: SequenceSection = SequenceSection()
    probe: ProbeSection = ProbeSection()
    multipass: MultipassSection = MultipassSection()
    ga: GASection = GASection()
    comb: CombSection = CombSection()
    ts_scan: TsScanSection = TsScanSection()
    counting: CountingSection = CountingSection()
    output: OutputSection = OutputSection()


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def to_dict(scn: Scenario) -> dict:
    return _plain(scn.model_dump(mode="python"))


def dump_config(scn: Scenario) -> str:
    return yaml.safe_dump(to_dict(scn), sort_keys=False, default_flow_style=None)


def parse_config(text: str) -> Scenario:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping at top level")
    return Scenario.model_validate(data)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``path.to.field=value`` overrides; values are parsed as YAML scalars or lists."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form path.to.field=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path {path!r} descends into a non-section")
        node[keys[-1]] = yaml.safe_load(raw)
    return data


def default_config_path() -> Path | None:
    """``default.yaml`` in ``$AFCMEM_CONFIG_DIR`` if set, else None (use the packaged copy)."""
    d = os.environ.get(CONFIG_DIR_ENV)
    if d:
        p = Path(d) / DEFAULT_CONFIG_NAME
        if p.is_file():
            return p
    return None


def packaged_default_text() -> str:
    return resources.files("afcmem").joinpath("data", DEFAULT_CONFIG_NAME).read_text()


def load_config(path: str | os.PathLike | None = None, overrides: list[str] | None = None) -> Scenario:
    """Read a scenario file (or the default one) and apply overrides."""
    if path is None:
        found = default_config_path()
        text = found.read_text() if found else packaged_default_text()
    else:
        p = Path(path)
        if not p.is_file() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
            p = Path(os.environ[CONFIG_DIR_ENV]) / p
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        text = p.read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping at top level")
    return Scenario.model_validate(apply_overrides(data, overrides or []))


# execution settings that cannot change any result
_UNHASHED = (("ga", "n_jobs"), ("output", "dir"))


def config_hash(scn: Scenario) -> str:
    """Short digest of every result-relevant setting."""
    data = to_dict(scn)
    for section, key in _UNHASHED:
        data[section].pop(key)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 64-bit seed for a labelled stream; unrelated labels never collide in practice."""
    digest = hashlib.sha256(f"{int(master_seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _checked(build):
    @functools.wraps(build)
    def wrapper(scn: Scenario, *args, **kwargs):
        try:
            return build(scn, *args, **kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    return wrapper


@_checked
def build_simulator(scn: Scenario) -> sim.MemorySimulator:
    m = scn.medium
    levels = LevelStructure(
        excited_splitting_mhz=m.excited_splitting_mhz,
        ground_splitting_mhz=m.ground_splitting_mhz,
        branching_ratio=m.branching_ratio,
        intermediate_lifetime_ms=m.intermediate_lifetime_ms,
        ground_lifetime_ms=m.ground_lifetime_ms,
        coherence_time_us=m.coherence_time_us,
        transition_weights=tuple(m.transition_weights),
        fast_fraction=m.fast_fraction,
    )
    return sim.MemorySimulator(
        grid=SpectralGrid(span_mhz=scn.grid.span_mhz, n_bins=scn.grid.n_bins),
        levels=levels,
        calibration=PumpCalibration(**scn.pump.model_dump()),
        d_peak=m.d_peak,
        d_bg=m.d_bg,
        probe_fwhm_ns=scn.probe.fwhm_ns,
        overlap=build_overlap(scn),
    )


@_checked
def build_overlap(scn: Scenario) -> OverlapModel:
    mp = scn.multipass
    if not 1 <= mp.passes <= mp.max_passes:
        raise ConfigurationError(f"multipass.passes must lie in 1..{mp.max_passes}, got {mp.passes}")
    return OverlapModel(
        overlap_factor=mp.overlap_factor,
        pump_penalty=mp.pump_penalty,
        background_per_pass=mp.background_per_pass,
        max_passes=mp.max_passes,
    )


@_checked
def build_sequence(scn: Scenario) -> PumpSequence:
    s = scn.sequence
    return PumpSequence(
        pulses=tuple(tuple(p) for p in s.pulses),
        pulse_separation_ns=s.pulse_separation_ns,
        loop_duration_us=s.loop_duration_us,
        loop_count=s.loop_count,
        wait_ms=s.wait_ms,
    )


@_checked
def build_ga(scn: Scenario, n_pulses: int | None = None) -> GAConfig:
    g = scn.ga
    return GAConfig(
        n_pulses=g.n_pulses if n_pulses is None else n_pulses,
        population=g.population,
        generations=g.generations,
        tournament_size=g.tournament_size,
        elites=g.elites,
        fitness_repeats=g.fitness_repeats,
        bounds=GeneBounds(g.amplitude_v, g.width_ns, g.loop_duration_us, g.loop_count),
        mutation_rate=g.mutation_rate,
        mutation_scale=g.mutation_scale,
        crossover_rate=g.crossover_rate,
        fitness_noise_sigma=g.fitness_noise_sigma,
        pulse_separation_ns=scn.sequence.pulse_separation_ns,
        wait_ms=scn.sequence.wait_ms,
        master_seed=derive_seed(scn.master_seed, f"optimize/n={g.n_pulses if n_pulses is None else n_pulses}"),
        n_jobs=g.n_jobs,
    )


@_checked
def build_counting(scn: Scenario) -> CountingConfig:
    c = scn.counting
    kwargs = c.model_dump()
    echo_means = kwargs.pop("echo_means")
    probe = CountingConfig(mean_input_photons=(0.0,), **kwargs)
    return CountingConfig(
        mean_input_photons=inputs_for_echo_means(echo_means, probe),
        seed=derive_seed(scn.master_seed, "photon-stats"),
        **kwargs,
    )
