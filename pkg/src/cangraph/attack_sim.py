"""Inject labelled DoS, fuzzy, spoofing, replay and combined attacks into clean logs.

Every injector takes a :class:`FrameStream` and an :class:`AttackSpec` and
returns a new stream in which original frames are labelled ``normal`` and
injected frames ``injected``. Injected frames are interleaved by index inside
``spec.region``; their timestamps are interpolated between neighbours so the
output stays time-ordered.

For ``injection_ratio = r < 1`` the region's ``L`` original frames are kept and
``round(r / (1 - r) * L)`` frames are inserted, so injected frames make up
``r`` of the region afterwards. ``r = 1`` replaces the region's originals
outright (the suspended ECU is silent and the attacker owns the region).
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .can_io import STANDARD_ID_MAX, CanFrame, FrameStream, Label


class AttackError(ValueError):
    pass


class AttackKind(str, enum.Enum):
    DOS = "dos"
    FUZZY = "fuzzy"
    SPOOF = "spoof"
    REPLAY = "replay"
    COMBINED = "combined"


DEFAULT_RATIOS = {
    AttackKind.DOS: 0.3,
    AttackKind.FUZZY: 0.2,
    AttackKind.SPOOF: 0.2,
    AttackKind.REPLAY: 0.2,
}
DEFAULT_SPOOF_ID = 0x0316
# fixed forged payload (an implausible RPM reading in the HCRL spoofing capture)
SPOOF_PAYLOAD = bytes.fromhex("ffff0000ffff0000")


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    injection_ratio: float = 0.2
    target_id: int = DEFAULT_SPOOF_ID
    id_range: tuple[int, int] = (0x000, STANDARD_ID_MAX)
    region: tuple[int, int] | None = None  # [start, stop) frame indices; None = whole stream
    seed: int = 0
    sub_specs: tuple["AttackSpec", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0 < self.injection_ratio <= 1:
            raise AttackError(f"injection_ratio must be in (0, 1], got {self.injection_ratio}")
        if not 0 <= self.seed < 2**64:
            raise AttackError("seed must be a 64-bit unsigned integer")
        if self.region is not None:
            object.__setattr__(self, "region", tuple(self.region))
        object.__setattr__(self, "id_range", tuple(self.id_range))
        object.__setattr__(self, "sub_specs", tuple(
            s if isinstance(s, AttackSpec) else AttackSpec.from_dict(s) for s in self.sub_specs
        ))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AttackSpec":
        d = dict(d)
        for key in ("target_id",):
            if isinstance(d.get(key), str):
                d[key] = int(d[key], 16)
        if "id_range" in d:
            d["id_range"] = tuple(int(x, 16) if isinstance(x, str) else x for x in d["id_range"])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise AttackError(f"unknown attack spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "injection_ratio": self.injection_ratio,
            "target_id": f"{self.target_id:04x}",
            "id_range": [f"{self.id_range[0]:04x}", f"{self.id_range[1]:04x}"],
            "region": list(self.region) if self.region is not None else None,
            "seed": self.seed,
            "sub_specs": [s.to_dict() for s in self.sub_specs],
        }


def load_attack_spec(text: str) -> AttackSpec:
    return AttackSpec.from_dict(json.loads(text))


def injected_count(ratio: float, region_length: int) -> int:
    if ratio >= 1:
        return region_length
    return round(ratio / (1 - ratio) * region_length)


def _resolve_region(stream: FrameStream, spec: AttackSpec) -> tuple[int, int]:
    start, stop = spec.region if spec.region is not None else (0, len(stream))
    if not 0 <= start < stop <= len(stream):
        raise AttackError(f"region [{start}, {stop}) empty or outside stream of {len(stream)} frames")
    return start, stop


def _as_normal(frames: Sequence[CanFrame]) -> list[CanFrame]:
    # originals keep an existing label; unlabelled input becomes "normal"
    return [f if f.label is not Label.UNLABELED else dataclasses.replace(f, label=Label.NORMAL) for f in frames]


def _normalised(stream: FrameStream) -> FrameStream:
    if all(f.label is not Label.UNLABELED for f in stream.frames):
        return stream
    return FrameStream(tuple(_as_normal(stream.frames)), source=stream.source, warnings=stream.warnings)


def _interleave(
    stream: FrameStream,
    region: tuple[int, int],
    injected: Sequence[tuple[int, int, bytes]],
    positions: np.ndarray | None,
    replace: bool,
) -> tuple[FrameStream, np.ndarray]:
    """Merge ``(id, dlc, payload)`` triples into the region at the given slot positions.

    ``positions`` are sorted indices into the merged region of length
    ``L + n`` (or ``n`` when replacing). Also returns the merged region's
    injected-slot mask.
    """
    start, stop = region
    frames = stream.frames
    before, originals, after = frames[:start], _as_normal(frames[start:stop]), frames[stop:]
    n = len(injected)
    if replace:
        originals_kept: list[CanFrame] = []
        slots = np.ones(n, dtype=bool)
    else:
        originals_kept = originals
        slots = np.zeros(len(originals) + n, dtype=bool)
        slots[positions] = True

    t_lo = originals[0].timestamp if not before else before[-1].timestamp
    t_hi = originals[-1].timestamp if not after else after[0].timestamp
    merged: list = []
    inj_iter = iter(injected)
    orig_iter = iter(originals_kept)
    for is_inj in slots:
        merged.append(next(inj_iter) if is_inj else next(orig_iter))

    # timestamps: each run of injected frames is spaced evenly between its neighbours
    out: list[CanFrame] = []
    i = 0
    while i < len(merged):
        item = merged[i]
        if isinstance(item, CanFrame):
            out.append(item)
            i += 1
            continue
        j = i
        while j < len(merged) and not isinstance(merged[j], CanFrame):
            j += 1
        prev_t = out[-1].timestamp if out else t_lo
        if replace:
            prev_t, next_t = originals[0].timestamp, originals[-1].timestamp
        else:
            next_t = merged[j].timestamp if j < len(merged) else t_hi
        run = j - i
        for k in range(run):
            aid, dlc, payload = merged[i + k]
            frac = (k + 1) / (run + 1)
            ts = round(prev_t + (next_t - prev_t) * frac, 6)
            ts = min(max(ts, prev_t), next_t)
            out.append(CanFrame(ts, aid, dlc, payload, Label.INJECTED))
        i = j
    return FrameStream(before + tuple(out) + after, source=stream.source), slots


def _random_positions(rng: np.random.Generator, region_length: int, n: int) -> np.ndarray:
    return np.sort(rng.choice(region_length + n, size=n, replace=False))


def _inject_generated(stream: FrameStream, spec: AttackSpec, make) -> tuple[FrameStream, np.ndarray]:
    region = _resolve_region(stream, spec)
    length = region[1] - region[0]
    n = injected_count(spec.injection_ratio, length)
    rng = np.random.default_rng(spec.seed)
    replace = spec.injection_ratio >= 1
    positions = None if replace else _random_positions(rng, length, n)
    return _interleave(stream, region, make(rng, n), positions, replace)


def _check_kind(spec: AttackSpec, kind: AttackKind) -> None:
    if spec.kind is not kind:
        raise AttackError(f"expected a {kind.value} spec, got {spec.kind.value}")


def inject_dos(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    """Flood the region with highest-priority id 0x000 frames carrying zero payloads."""
    _check_kind(spec, AttackKind.DOS)
    return _dos(_normalised(stream), spec)[0]


def _dos(stream, spec):
    return _inject_generated(stream, spec, lambda rng, n: [(0x000, 8, bytes(8))] * n)


def inject_fuzzy(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    """Inject frames with ids drawn uniformly from ``spec.id_range`` and random payloads."""
    _check_kind(spec, AttackKind.FUZZY)
    return _fuzzy(_normalised(stream), spec)[0]


def _fuzzy(stream, spec):
    lo, hi = spec.id_range
    if lo > hi:
        raise AttackError(f"empty id range {lo:#x}..{hi:#x}")

    def make(rng, n):
        ids = rng.integers(lo, hi + 1, size=n)
        payloads = rng.integers(0, 256, size=(n, 8), dtype=np.uint8)
        return [(int(a), 8, p.tobytes()) for a, p in zip(ids, payloads)]

    return _inject_generated(stream, spec, make)


def inject_spoof(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    """Interleave frames forging ``spec.target_id`` with a fixed payload."""
    _check_kind(spec, AttackKind.SPOOF)
    return _spoof(_normalised(stream), spec)[0]


def _spoof(stream, spec):
    target = spec.target_id
    return _inject_generated(stream, spec, lambda rng, n: [(target, 8, SPOOF_PAYLOAD)] * n)


def inject_replay(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    """Replay previously observed traffic into the region.

    The attacker records the traffic preceding the region and re-sends it,
    ids and payloads intact and paced in recorded order, at the injection
    rate. It is careful
    about the id sequence: a recorded frame is only sent into a gap between
    two live frames when both resulting transitions (live -> replayed and
    replayed -> live) are ones it has seen on this bus at least
    ``REPLAY_MIN_SUPPORT`` times. Frames that fit nowhere near their paced
    slot are skipped in favour of the next recorded frame, so the injected
    count is exact and no new transition appears on the bus.
    """
    _check_kind(spec, AttackKind.REPLAY)
    return _replay(_normalised(stream), spec)[0]


# a transition must have been seen this often before the replayer relies on it
REPLAY_MIN_SUPPORT = 10
# how far (in gaps) a replayed frame may drift from its paced slot
REPLAY_SEARCH = 400


def _pair_keys(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return left.astype(np.int64) << 32 | right.astype(np.int64)


def _replay(stream, spec):
    start, stop = _resolve_region(stream, spec)
    length = stop - start
    n = injected_count(spec.injection_ratio, length)
    history = max(length, 2 * n)
    if start < history:
        raise AttackError(
            f"replay needs {history} frames of history before the region, only {start} available"
        )
    rng = np.random.default_rng(spec.seed)
    # recording starts somewhere in the history and wraps around it if needed
    offset = int(rng.integers(0, history))
    recorded = stream.frames[start - history:start]
    recorded = recorded[offset:] + recorded[:offset]
    if spec.injection_ratio >= 1:
        injected = [(f.arbitration_id, f.dlc, f.data) for f in recorded[:n]]
        return _interleave(stream, (start, stop), injected, None, replace=True)

    ids = np.fromiter((f.arbitration_id for f in stream.frames), dtype=np.int64, count=len(stream))
    keys, support = np.unique(_pair_keys(ids[:start - 1], ids[1:start]), return_counts=True)
    trusted = keys[support >= REPLAY_MIN_SUPPORT]
    # gap g sits between live frames start+g-1 and start+g
    left = ids[start - 1:stop]
    right = ids[start:stop + 1] if stop < len(stream) else np.append(ids[start:stop], -1)
    at_end = right < 0

    valid: dict[int, np.ndarray] = {}
    used = np.zeros(length + 1, dtype=bool)
    chosen: list[tuple[int, CanFrame]] = []
    pace = length / n
    for frame in recorded:
        if len(chosen) == n:
            break
        aid = frame.arbitration_id
        if aid not in valid:
            ok_in = np.isin(_pair_keys(left, np.full_like(left, aid)), trusted)
            ok_out = at_end | np.isin(_pair_keys(np.full_like(right, aid), right), trusted)
            valid[aid] = np.flatnonzero(ok_in & ok_out)
        gap = _nearest_free(valid[aid], used, int(len(chosen) * pace))
        if gap is not None:
            used[gap] = True
            chosen.append((gap, frame))
    if len(chosen) < n:
        raise AttackError(
            f"only {len(chosen)} of {n} recorded frames fit the region without new transitions"
        )
    chosen.sort(key=lambda item: item[0])
    positions = np.array([g for g, _ in chosen]) + np.arange(n)
    injected = [(f.arbitration_id, f.dlc, f.data) for _, f in chosen]
    return _interleave(stream, (start, stop), injected, positions, replace=False)


def _nearest_free(candidates: np.ndarray, used: np.ndarray, target: int) -> int | None:
    """The unused candidate gap closest to ``target`` (within REPLAY_SEARCH), earlier on ties."""
    i = int(np.searchsorted(candidates, target))
    lo, hi = i - 1, i
    while True:
        d_lo = target - candidates[lo] if lo >= 0 else None
        d_hi = candidates[hi] - target if hi < len(candidates) else None
        if d_lo is not None and d_lo > REPLAY_SEARCH:
            d_lo = None
        if d_hi is not None and d_hi > REPLAY_SEARCH:
            d_hi = None
        if d_lo is None and d_hi is None:
            return None
        if d_hi is None or (d_lo is not None and d_lo <= d_hi):
            if not used[candidates[lo]]:
                return int(candidates[lo])
            lo -= 1
        else:
            if not used[candidates[hi]]:
                return int(candidates[hi])
            hi += 1


_INJECTORS = {
    AttackKind.DOS: _dos,
    AttackKind.FUZZY: _fuzzy,
    AttackKind.SPOOF: _spoof,
    AttackKind.REPLAY: _replay,
}


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def inject_combined(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    """Apply ``spec.sub_specs`` in order.

    Sub-spec regions index the *input* stream; they are remapped after each
    step so that earlier insertions do not shift later regions.
    """
    _check_kind(spec, AttackKind.COMBINED)
    subs = spec.sub_specs
    if not subs:
        raise AttackError("combined attack needs at least one sub-spec")
    if any(s.kind is AttackKind.COMBINED for s in subs):
        raise AttackError("combined attacks cannot nest")
    full = (0, len(stream))
    replays = [s.region or full for s in subs if s.kind is AttackKind.REPLAY]
    for i in range(len(replays)):
        for j in range(i + 1, len(replays)):
            if _overlaps(replays[i], replays[j]):
                raise AttackError(f"replay regions {replays[i]} and {replays[j]} overlap")

    # origin[k] = index of the input frame at output position k, or -1 for injected frames
    origin = np.arange(len(stream))
    current = _normalised(stream)
    for sub in subs:
        lo, hi = sub.region or full
        if not 0 <= lo < hi <= len(stream):
            raise AttackError(f"region [{lo}, {hi}) empty or outside stream of {len(stream)} frames")
        positions = np.flatnonzero((origin >= lo) & (origin < hi))
        a, b = int(positions[0]), int(positions[-1]) + 1
        current, mask = _INJECTORS[sub.kind](current, dataclasses.replace(sub, region=(a, b)))
        region_origin = np.full(mask.size, -1)
        if sub.injection_ratio < 1:  # r = 1 drops the region's originals
            region_origin[~mask] = origin[a:b]
        origin = np.concatenate([origin[:a], region_origin, origin[b:]])
    return current


def inject(stream: FrameStream, spec: AttackSpec) -> FrameStream:
    if spec.kind is AttackKind.COMBINED:
        return inject_combined(stream, spec)
    return _INJECTORS[spec.kind](_normalised(stream), spec)[0]
