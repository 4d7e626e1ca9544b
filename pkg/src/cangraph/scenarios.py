"""Labelled evaluation fixtures: clean and attacked population windows in alternation.

A fixture is one continuous synthetic capture in which every other
population window (``population_size * window_size`` frames after injection)
is attacked. Each attacked region's original frame count is chosen so that
originals plus injected frames fill the region's share exactly; population
boundaries therefore stay aligned with the clean/attacked layout whatever the
injection ratio.

DoS, fuzzy and spoofing attacks arrive in short bursts (``bursts`` per
attacked population, each active for ``duty`` of its slot). Replay runs
through the whole attacked population. Combined fixtures cycle their attack
kinds across the bursts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .attack_sim import DEFAULT_RATIOS, AttackKind, AttackSpec, inject, injected_count
from .can_io import FrameStream
from .graph import DEFAULT_WINDOW_SIZE
from .synthetic import synthesize_traffic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixtureSpec:
    kinds: tuple[AttackKind, ...]
    seed: int = 1
    n_attacked: int = 20
    n_clean: int = 20
    population_size: int = 50
    window_size: int = DEFAULT_WINDOW_SIZE
    ratios: dict = field(default_factory=dict)  # per-kind override of DEFAULT_RATIOS
    bursts: int = 5
    duty: float = 0.3

    def __post_init__(self):
        kinds = (self.kinds,) if isinstance(self.kinds, (str, AttackKind)) else self.kinds
        object.__setattr__(self, "kinds", tuple(AttackKind(k) for k in kinds))
        if not self.kinds or AttackKind.COMBINED in self.kinds:
            raise ValueError("list the attack kinds to combine, e.g. ('dos', 'fuzzy')")
        if self.n_attacked < 0 or self.n_clean < 0 or self.n_attacked + self.n_clean == 0:
            raise ValueError("a fixture needs at least one population")
        if self.bursts < 1 or not 0 < self.duty <= 1:
            raise ValueError("bursts must be >= 1 and duty in (0, 1]")

    def ratio(self, kind: AttackKind) -> float:
        return self.ratios.get(kind.value, self.ratios.get(kind, DEFAULT_RATIOS[kind]))

    @property
    def population_frames(self) -> int:
        return self.population_size * self.window_size


@dataclass(frozen=True)
class Fixture:
    stream: FrameStream
    truth: tuple[bool, ...]  # per population window, True when attacked
    spec: FixtureSpec
    clean: FrameStream  # the attack-free capture the attacks were injected into (with lead-in)


def originals_for(ratio: float, target: int) -> int:
    """Original frame count whose injected total fills exactly ``target`` frames."""
    if ratio >= 1:  # full-ratio attacks replace the region instead of growing it
        return target
    guess = round(target * (1 - ratio))
    for m in sorted(range(max(1, guess - 5), guess + 6), key=lambda m: abs(m - guess)):
        if m + injected_count(ratio, m) == target:
            return m
    raise ValueError(f"no region of originals fills {target} frames at ratio {ratio}")


def _population_order(n_attacked: int, n_clean: int) -> list[bool]:
    order = []
    while n_attacked or n_clean:
        if n_clean:
            order.append(False)
            n_clean -= 1
        if n_attacked:
            order.append(True)
            n_attacked -= 1
    return order


def build_fixture(spec: FixtureSpec) -> Fixture:
    """Synthesize and inject one labelled fixture, deterministic in ``spec.seed``."""
    pop = spec.population_frames
    order = _population_order(spec.n_attacked, spec.n_clean)
    continuous = len(spec.kinds) == 1 and spec.kinds[0] is AttackKind.REPLAY

    # (attacked kind or None, original frame count) segments after one clean lead-in population
    segments: list[tuple[AttackKind | None, int]] = []
    burst = 0
    for attacked in order:
        if not attacked:
            segments.append((None, pop))
        elif continuous:
            segments.append((AttackKind.REPLAY, originals_for(spec.ratio(AttackKind.REPLAY), pop)))
        else:
            slot = pop // spec.bursts
            for b in range(spec.bursts):
                kind = spec.kinds[burst % len(spec.kinds)]
                burst += 1
                active = round(slot * spec.duty) if b < spec.bursts - 1 else round((pop - slot * b) * spec.duty)
                length = slot if b < spec.bursts - 1 else pop - slot * b
                segments.append((kind, originals_for(spec.ratio(kind), active)))
                segments.append((None, length - active))

    # the lead-in population is recording history for replay and is cut off afterwards
    total = pop + sum(n for _, n in segments)
    clean = synthesize_traffic(total, seed=spec.seed)
    seeds = np.random.SeedSequence(spec.seed).generate_state(len(segments), dtype=np.uint64)
    subs = []
    position = pop
    for i, (kind, n) in enumerate(segments):
        if kind is not None and n > 0:
            subs.append(AttackSpec(kind, spec.ratio(kind), region=(position, position + n), seed=int(seeds[i])))
        position += n
    stream = inject(clean, AttackSpec(AttackKind.COMBINED, sub_specs=tuple(subs))) if subs else clean
    name = "+".join(k.value for k in spec.kinds)
    out = FrameStream(stream.frames[pop:], source=f"fixture({name}, seed={spec.seed})")
    logger.info("built %s fixture: %d frames, %d populations", name, len(out), len(order))
    return Fixture(out, tuple(order), spec, clean)
