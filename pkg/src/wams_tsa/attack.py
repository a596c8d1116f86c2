"""Time-synchronization attack: per-slot schedule and stamp-shift corruption of
one PMU's stream as seen by the control center.

The attacker never fabricates values.  On an attacked slot ``t`` the target
delivers its true reading from slot ``t - k`` while claiming stamp ``t``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError
from .grid import MeasurementFrame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstantShift:
    k: int = 5

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError("must be >= 1", "attack.k")

    @property
    def max_shift(self) -> int:
        return int(self.k)


@dataclass(frozen=True)
class RandomShift:
    """Shift drawn uniformly from ``{1..max_k}``; redrawn every attacked slot
    unless ``per_slot`` is False, in which case one draw holds for the run."""

    max_k: int = 10
    per_slot: bool = True

    def __post_init__(self):
        if int(self.max_k) < 1:
            raise ConfigError("must be >= 1", "attack.max_k")

    @property
    def max_shift(self) -> int:
        return int(self.max_k)


ShiftStrategy = Union[ConstantShift, RandomShift]


@dataclass(frozen=True)
class AttackScenario:
    target: int | None = 4
    strategy: ShiftStrategy = field(default_factory=ConstantShift)
    frequency: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.frequency <= 1.0:
            raise ConfigError("must lie in [0, 1]", "attack.frequency")
        if self.target is not None and int(self.target) < 0:
            raise ConfigError("must be >= 0", "attack.target")

    def validate_for(self, n_pmus: int):
        if self.target is not None and self.target >= n_pmus:
            raise ConfigError(f"must be < number of PMUs ({n_pmus})", "attack.target")

    @property
    def active(self) -> bool:
        return self.target is not None and self.frequency > 0


def resolve_strategy(scenario: AttackScenario, rng: np.random.Generator) -> AttackScenario:
    """Fix a per-run random shift to a concrete constant; other scenarios pass through."""
    strat = scenario.strategy
    if isinstance(strat, RandomShift) and not strat.per_slot:
        k = int(rng.integers(1, strat.max_k + 1))
        return AttackScenario(scenario.target, ConstantShift(k), scenario.frequency, scenario.seed)
    return scenario


def schedule(scenario: AttackScenario, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(frequency) attack decision per slot."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    draws = rng.random(horizon)
    if scenario.target is None:
        return np.zeros(horizon, dtype=bool)
    return draws < scenario.frequency


def draw_shift(strategy: ShiftStrategy, rng: np.random.Generator | None) -> int:
    if isinstance(strategy, ConstantShift):
        return int(strategy.k)
    if rng is None:
        raise ValueError("a random shift strategy needs an rng")
    return int(rng.integers(1, strategy.max_k + 1))


class MeasurementBuffer:
    """Ring of the most recent true frames, indexed by slot."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._frames: deque[tuple[int, MeasurementFrame]] = deque(maxlen=capacity)
        self.events: list[str] = []

    @classmethod
    def for_scenario(cls, scenario: AttackScenario) -> "MeasurementBuffer":
        return cls(scenario.strategy.max_shift + 1)

    def push(self, slot: int, frame: MeasurementFrame):
        if self._frames and slot <= self._frames[-1][0]:
            raise ValueError(f"slot {slot} not after {self._frames[-1][0]}")
        self._frames.append((slot, frame))

    def __len__(self):
        return len(self._frames)

    @property
    def oldest_slot(self) -> int | None:
        return self._frames[0][0] if self._frames else None

    def lookup(self, slot: int) -> tuple[int, MeasurementFrame]:
        """Frame recorded at ``slot``, clamped to the oldest available."""
        if not self._frames:
            raise LookupError("buffer is empty")
        oldest = self._frames[0][0]
        if slot < oldest:
            slot = oldest
        for s, frame in reversed(self._frames):
            if s <= slot:
                return s, frame
        return self._frames[0]


def apply_tsa(
    buffer: MeasurementBuffer,
    frame: MeasurementFrame,
    scenario: AttackScenario,
    slot: int,
    mask,
    rng: np.random.Generator | None = None,
) -> MeasurementFrame:
    """Frame as delivered to the control center at ``slot``.

    ``mask`` is either the full schedule (indexed by ``slot``) or a boolean for
    this slot.  ``frame`` must already be pushed into ``buffer`` when the
    current reading is meant to be part of the history.
    """
    attacked = bool(mask[slot]) if np.ndim(mask) else bool(mask)
    if not attacked or scenario.target is None:
        return frame
    k = draw_shift(scenario.strategy, rng)
    wanted = slot - k
    oldest = buffer.oldest_slot
    if oldest is None:
        msg = f"slot {slot}: empty history, delivering current reading"
        buffer.events.append(msg)
        log.warning(msg)
        return frame
    if wanted < oldest:
        msg = f"slot {slot}: shift {k} reaches slot {wanted}, clamped to {oldest}"
        buffer.events.append(msg)
        log.warning(msg)
    _, past = buffer.lookup(wanted)
    values = frame.values.copy()
    values[scenario.target] = past.values[scenario.target]
    stamps = frame.stamps.copy()
    stamps[scenario.target] = slot
    return MeasurementFrame(values, stamps)
