"""Effective optical depth and preparation penalty versus number of passes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError, ValidationError


@dataclass(frozen=True)
class OverlapModel:
    """Geometric overlap of the beam paths through the crystal.

    Pass ``k`` (0-based) adds ``overlap_factor**k`` of a single-pass depth. The
    pump penalty scales the achievable hole contrast by
    ``(1 - pump_penalty)**(passes - 1)``.
    """

    overlap_factor: float = 0.8
    pump_penalty: float = 0.12
    background_per_pass: float = 1.0
    max_passes: int = 8

    def __post_init__(self):
        if not 0 < self.overlap_factor <= 1:
            raise ConfigurationError("overlap_factor must lie in (0, 1]")
        if not 0 <= self.pump_penalty < 1:
            raise ConfigurationError("pump_penalty must lie in [0, 1)")
        if not self.background_per_pass > 0:
            raise ConfigurationError("background_per_pass must be positive")
        if self.max_passes < 1:
            raise ConfigurationError("max_passes must be >= 1")

    def multiplier(self, passes: int) -> float:
        return effective_depth(passes, self.overlap_factor, 1.0)

    def contrast(self, passes: int) -> float:
        return (1.0 - self.pump_penalty) ** (passes - 1)


def effective_depth(m: int, gamma: float, d_single: float) -> float:
    """``d_single * sum(gamma**k for k < m)``."""
    if m < 1:
        raise ValidationError(f"pass count must be >= 1, got {m}")
    if gamma == 1.0:
        return float(m * d_single)
    return float(d_single * (1.0 - gamma**m) / (1.0 - gamma))


def pass_scan(simulator, sequence, passes=range(1, 9), overlap: OverlapModel | None = None):
    """Efficiency of a prepared memory for each pass count.

    ``simulator`` is any object with ``efficiency(sequence, passes=, overlap=)``
    (see :class:`afcmem.simulator.MemorySimulator`). Returns the list of
    ``(m, efficiency)`` pairs and the best pass count.
    """
    overlap = overlap or OverlapModel()
    rows = [(int(m), float(simulator.efficiency(sequence, passes=int(m), overlap=overlap))) for m in passes]
    best = max(rows, key=lambda r: r[1])[0]
    return rows, best

