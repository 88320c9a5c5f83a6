"""Genetic algorithm over pump-sequence genomes.

A genome is a flat vector of scalar genes: ``(amplitude, width)`` for every
pulse followed by the loop duration and the loop count. Each evaluation and
each generation's breeding step draws from its own ``SeedSequence`` stream
derived from the master seed, so results do not depend on evaluation order
or on how many workers evaluate the population.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import stats

from .errors import AFCError, ConfigurationError, ValidationError
from .metrics import eq1_efficiency
from .pump import (
    AMPLITUDE_BOUNDS_V,
    LOOP_COUNT_BOUNDS,
    LOOP_DURATION_BOUNDS_US,
    MAX_PULSES,
    WIDTH_BOUNDS_NS,
    PumpSequence,
)

# stream labels for SeedSequence spawn keys
_INIT, _BREED, _NOISE = 0, 1, 2


class EvaluationError(AFCError):
    """A fitness evaluation failed; the message carries the offending genome."""


@dataclass(frozen=True)
class GeneBounds:
    amplitude_v: tuple[float, float] = AMPLITUDE_BOUNDS_V
    width_ns: tuple[float, float] = WIDTH_BOUNDS_NS
    loop_duration_us: tuple[float, float] = LOOP_DURATION_BOUNDS_US
    loop_count: tuple[int, int] = LOOP_COUNT_BOUNDS

    def __post_init__(self):
        for name in ("amplitude_v", "width_ns", "loop_duration_us", "loop_count"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigurationError(f"bounds for {name} are inverted: {lo} > {hi}")

    def arrays(self, n_pulses: int, pulse_separation_ns: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper gene bounds for an ``n_pulses`` genome.

        The loop-duration floor is raised when needed so the widest pulse
        train still fits inside one loop.
        """
        min_loop = (n_pulses * pulse_separation_ns + self.width_ns[1]) * 1e-3
        loop_lo = max(self.loop_duration_us[0], min_loop)
        if loop_lo > self.loop_duration_us[1]:
            raise ConfigurationError(
                f"{n_pulses} pulses at {pulse_separation_ns} ns need loops of at least {min_loop} us"
            )
        lo = [self.amplitude_v[0], self.width_ns[0]] * n_pulses + [loop_lo, self.loop_count[0]]
        hi = [self.amplitude_v[1], self.width_ns[1]] * n_pulses + [self.loop_duration_us[1], self.loop_count[1]]
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


@dataclass(frozen=True)
class GAConfig:
    n_pulses: int = 5
    population: int = 20
    generations: int = 20
    tournament_size: int = 10
    elites: int = 3
    fitness_repeats: int = 25
    bounds: GeneBounds = field(default_factory=GeneBounds)
    mutation_rate: float = 0.15
    mutation_scale: float = 0.10
    crossover_rate: float = 0.5
    fitness_noise_sigma: float = 0.03
    pulse_separation_ns: float = 200.0
    wait_ms: float = 20.0
    master_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not 1 <= self.n_pulses <= MAX_PULSES:
            raise ConfigurationError(f"n_pulses must be 1..{MAX_PULSES}, got {self.n_pulses}")
        if self.population < 2 or self.generations < 1:
            raise ConfigurationError("need population >= 2 and generations >= 1")
        if not 0 <= self.elites < self.population:
            raise ConfigurationError(f"elites ({self.elites}) must be below population ({self.population})")
        if not 1 <= self.tournament_size <= self.population:
            raise ConfigurationError(
                f"tournament_size ({self.tournament_size}) must lie in 1..population ({self.population})"
            )
        if self.fitness_repeats < 1:
            raise ConfigurationError("fitness_repeats must be >= 1")
        for name in ("mutation_rate", "crossover_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.mutation_scale < 0 or self.fitness_noise_sigma < 0:
            raise ConfigurationError("mutation_scale and fitness_noise_sigma must be nonnegative")
        self.gene_bounds()

    def gene_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bounds.arrays(self.n_pulses, self.pulse_separation_ns)


@dataclass(frozen=True)
class Genome:
    genes: tuple[float, ...]

    def __post_init__(self):
        genes = tuple(float(g) for g in self.genes)
        if len(genes) < 4 or len(genes) % 2:
            raise ValidationError(f"a genome needs 2*n_pulses + 2 genes, got {len(genes)}")
        object.__setattr__(self, "genes", genes)

    @classmethod
    def from_parts(cls, pulses, loop_duration_us: float, loop_count: int) -> Genome:
        flat = [x for pulse in pulses for x in pulse]
        return cls(tuple(flat) + (loop_duration_us, loop_count))

    @property
    def n_pulses(self) -> int:
        return (len(self.genes) - 2) // 2

    @property
    def pulses(self) -> tuple[tuple[float, float], ...]:
        g = self.genes
        return tuple((g[2 * k], g[2 * k + 1]) for k in range(self.n_pulses))

    @property
    def loop_duration_us(self) -> float:
        return self.genes[-2]

    @property
    def loop_count(self) -> int:
        return int(round(self.genes[-1]))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.genes)

    def in_bounds(self, lo: np.ndarray, hi: np.ndarray) -> bool:
        x = self.as_array()
        return x.shape == lo.shape and bool(np.all(x >= lo) and np.all(x <= hi))

    def decode(self, pulse_separation_ns: float = 200.0, wait_ms: float = 20.0) -> PumpSequence:
        return PumpSequence(
            pulses=self.pulses,
            pulse_separation_ns=pulse_separation_ns,
            loop_duration_us=self.loop_duration_us,
            loop_count=self.loop_count,
            wait_ms=wait_ms,
        )

    def to_json(self) -> str:
        return json.dumps(genome_dict(self))


def _snap(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    x = np.clip(x, lo, hi)
    x[-1] = np.clip(np.round(x[-1]), np.ceil(lo[-1]), np.floor(hi[-1]))
    return x


def random_genome(config: GAConfig, rng: np.random.Generator) -> Genome:
    lo, hi = config.gene_bounds()
    return Genome(tuple(_snap(rng.uniform(lo, hi), lo, hi)))


class FitnessContext(Protocol):
    def exact_fitness(self, genome: Genome, config: GAConfig) -> float: ...


@dataclass(frozen=True)
class SimulatorFitness:
    """First-echo efficiency of the comb the genome prepares."""

    simulator: object
    passes: int = 1

    def exact_fitness(self, genome: Genome, config: GAConfig) -> float:
        seq = genome.decode(config.pulse_separation_ns, config.wait_ms)
        return float(self.simulator.efficiency(seq, passes=self.passes))


@dataclass(frozen=True)
class SurrogateFitness:
    """Analytic efficiency law on a fixed map from genes to comb parameters.

    With ``u`` the genes normalised to [0, 1] by their bounds, the comb has
    ``F = F_lo + (F_hi - F_lo) * u[width_1]``, ``d = d_scale * u[amplitude_1]``
    and ``d0 = (u[loop_duration] - 0.3)**2 + (u[loop_count] - 0.6)**2``. The
    maximum sits at ``F = F_hi``, ``d = 2 F_hi`` and ``d0 = 0``.
    """

    finesse_range: tuple[float, float] = (2.0, 6.0)
    depth_scale: float = 16.0

    def comb(self, genome: Genome, config: GAConfig) -> tuple[float, float, float]:
        lo, hi = config.gene_bounds()
        span = np.where(hi > lo, hi - lo, 1.0)
        u = (genome.as_array() - lo) / span
        f_lo, f_hi = self.finesse_range
        F = f_lo + (f_hi - f_lo) * u[1]
        d = self.depth_scale * u[0]
        d0 = (u[-2] - 0.3) ** 2 + (u[-1] - 0.6) ** 2
        return float(d), float(F), float(d0)

    def exact_fitness(self, genome: Genome, config: GAConfig) -> float:
        d, F, d0 = self.comb(genome, config)
        return eq1_efficiency(d, F, d0)

    def optimum(self) -> float:
        f_hi = self.finesse_range[1]
        return eq1_efficiency(min(2 * f_hi, self.depth_scale), f_hi, 0.0)


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the labelled stream ``key`` of ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key)))


def evaluate(
    genome: Genome, context: FitnessContext, config: GAConfig, rng: np.random.Generator | None = None
) -> float:
    """Noisy fitness as an experiment would measure it.

    The exact fitness is computed once, then ``fitness_repeats`` samples with
    multiplicative Gaussian noise are drawn and a normal distribution is
    fitted to them; the fitted centre is returned. Without noise the exact
    value comes back unchanged.
    """
    lo, hi = config.gene_bounds()
    if not genome.in_bounds(lo, hi):
        raise EvaluationError(f"genome outside the configured bounds: {genome.to_json()}")
    try:
        exact = float(context.exact_fitness(genome, config))
    except AFCError as exc:
        raise EvaluationError(f"{exc} (genome: {genome.to_json()})") from exc
    sigma = config.fitness_noise_sigma
    if sigma == 0 or exact == 0:
        return exact
    rng = rng if rng is not None else np.random.default_rng()
    samples = exact * (1.0 + sigma * rng.standard_normal(config.fitness_repeats))
    if config.fitness_repeats == 1:
        return float(samples[0])
    loc, _ = stats.norm.fit(samples)
    return float(loc)


def tournament_select(fitnesses: Sequence[float], size: int, rng: np.random.Generator) -> int:
    """Best of ``size`` distinct random entrants; ties go to the lowest index."""
    fit = np.asarray(fitnesses, dtype=float)
    if not 1 <= size <= len(fit):
        raise ConfigurationError(f"tournament size {size} must lie in 1..{len(fit)}")
    entrants = np.sort(rng.choice(len(fit), size=size, replace=False))
    return int(entrants[np.argmax(fit[entrants])])


def crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator, rate: float = 0.5) -> Genome:
    """Uniform crossover: each gene comes from ``parent_b`` with probability ``rate``."""
    a, b = parent_a.as_array(), parent_b.as_array()
    if a.shape != b.shape:
        raise ValidationError(f"parents differ in shape: {a.size} vs {b.size} genes")
    take_b = rng.random(a.size) < rate
    return Genome(tuple(np.where(take_b, b, a)))


def mutate(genome: Genome, rng: np.random.Generator, config: GAConfig) -> Genome:
    """Gaussian kicks of ``mutation_scale`` times the gene range, clamped to the box."""
    lo, hi = config.gene_bounds()
    x = genome.as_array().copy()
    hit = rng.random(x.size) < config.mutation_rate
    kicks = rng.standard_normal(x.size) * config.mutation_scale * (hi - lo)
    if not hit.any():
        return genome
    x[hit] += kicks[hit]
    return Genome(tuple(_snap(x, lo, hi)))


@dataclass(frozen=True)
class GenerationRecord:
    index: int
    best_fitness: float
    mean_fitness: float
    best_genome: Genome
    genomes: tuple[Genome, ...]
    fitnesses: tuple[float, ...]


@dataclass
class GenerationLog:
    records: list[GenerationRecord] = field(default_factory=list)

    @property
    def best_fitness(self) -> list[float]:
        return [r.best_fitness for r in self.records]

    @property
    def mean_fitness(self) -> list[float]:
        return [r.mean_fitness for r in self.records]

    def rows(self) -> list[dict]:
        """One row per evaluated individual, for CSV output."""
        out = []
        for r in self.records:
            for i, (g, f) in enumerate(zip(r.genomes, r.fitnesses)):
                out.append({"generation": r.index, "individual": i, "fitness": f, "genes": list(g.genes)})
        return out


@dataclass(frozen=True)
class GAResult:
    log: GenerationLog
    best_genome: Genome
    best_fitness: float
    config: GAConfig


def _evaluate_population(
    genomes: Sequence[Genome],
    context: FitnessContext,
    config: GAConfig,
    generation: int,
    skip: dict[int, float],
) -> list[float]:
    todo = [i for i in range(len(genomes)) if i not in skip]

    def one(i: int) -> float:
        return evaluate(genomes[i], context, config, stream(config.master_seed, _NOISE, generation, i))

    if config.n_jobs == 1 or len(todo) < 2:
        values = [one(i) for i in todo]
    else:
        from joblib import Parallel, delayed

        values = Parallel(n_jobs=config.n_jobs)(delayed(one)(i) for i in todo)
    fit = dict(skip)
    fit.update(zip(todo, values))
    return [fit[i] for i in range(len(genomes))]


def run_ga(
    config: GAConfig,
    context: FitnessContext,
    progress: Callable[[GenerationRecord], None] | None = None,
) -> GAResult:
    """Evolve ``config.generations`` generations and return the log and best genome.

    Elites are carried over with their measured fitness rather than
    re-measured, so the best fitness never decreases.
    """
    init_rng = stream(config.master_seed, _INIT)
    population = [random_genome(config, init_rng) for _ in range(config.population)]
    known: dict[int, float] = {}
    log = GenerationLog()
    for gen in range(config.generations):
        fitness = _evaluate_population(population, context, config, gen, known)
        order = sorted(range(len(population)), key=lambda i: (-fitness[i], i))
        best = order[0]
        record = GenerationRecord(
            index=gen,
            best_fitness=float(fitness[best]),
            mean_fitness=float(np.mean(fitness)),
            best_genome=population[best],
            genomes=tuple(population),
            fitnesses=tuple(float(f) for f in fitness),
        )
        log.records.append(record)
        if progress is not None:
            progress(record)
        if gen == config.generations - 1:
            break

        rng = stream(config.master_seed, _BREED, gen)
        elites = order[: config.elites]
        children = [population[i] for i in elites]
        known = {k: fitness[i] for k, i in enumerate(elites)}
        while len(children) < config.population:
            a = tournament_select(fitness, config.tournament_size, rng)
            b = tournament_select(fitness, config.tournament_size, rng)
            child = crossover(population[a], population[b], rng, config.crossover_rate)
            children.append(mutate(child, rng, config))
        population = children

    final = max(log.records, key=lambda r: r.best_fitness)
    return GAResult(log=log, best_genome=final.best_genome, best_fitness=final.best_fitness, config=config)


def pulse_count_sweep(
    config: GAConfig, context: FitnessContext, n_values=range(1, MAX_PULSES + 1)
) -> dict[int, GAResult]:
    """Independent GA runs for each fixed pulse count."""
    out = {}
    for n in n_values:
        out[int(n)] = run_ga(replace(config, n_pulses=int(n)), context)
    return out


def genome_dict(genome: Genome) -> dict:
    return {
        "pulses": [list(p) for p in genome.pulses],
        "loop_duration_us": genome.loop_duration_us,
        "loop_count": genome.loop_count,
    }


__all__ = [
    "EvaluationError",
    "GeneBounds",
    "GAConfig",
    "Genome",
    "FitnessContext",
    "SimulatorFitness",
    "SurrogateFitness",
    "GenerationRecord",
    "GenerationLog",
    "GAResult",
    "evaluate",
    "tournament_select",
    "crossover",
    "mutate",
    "random_genome",
    "run_ga",
    "pulse_count_sweep",
    "stream",
    "genome_dict",
]
