"""ID-sequence transition-matrix detector used as a comparison point.

Training records every ordered pair of consecutive arbitration IDs seen in
attack-free traffic. A window is flagged when the fraction of its
consecutive pairs that were never seen exceeds a threshold (by default any
unseen pair flags). Replayed legitimate traffic only produces known pairs,
so this detector is structurally blind to careful replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .can_io import CanFrame, FrameStream

MATRIX_FORMAT = "cangraph-transition-matrix"
MATRIX_VERSION = 1


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    allowed: frozenset[tuple[int, int]]
    id_universe: frozenset[int]
    created_from: str = ""

    def __post_init__(self):
        stray = {i for pair in self.allowed for i in pair} - self.id_universe
        if stray:
            raise BaselineError(f"transition endpoints outside the id universe: {sorted(stray)[:5]}")


def _ids(frames: FrameStream | Iterable[CanFrame]) -> list[int]:
    return [f.arbitration_id for f in frames]


def baseline_train(stream: FrameStream | Sequence[CanFrame]) -> TransitionMatrix:
    ids = _ids(stream)
    if len(ids) < 2:
        raise BaselineError(f"training needs at least two frames to form a transition, got {len(ids)}")
    source = stream.source if isinstance(stream, FrameStream) else ""
    return TransitionMatrix(frozenset(zip(ids, ids[1:])), frozenset(ids), source)


def violation_fraction(matrix: TransitionMatrix, window_frames: Sequence[CanFrame]) -> float:
    ids = _ids(window_frames)
    if not ids:
        raise BaselineError("cannot score an empty window")
    pairs = list(zip(ids, ids[1:]))
    if not pairs:
        return 0.0
    return sum(p not in matrix.allowed for p in pairs) / len(pairs)


def baseline_detect(
    matrix: TransitionMatrix, window_frames: Sequence[CanFrame], violation_threshold: float = 0.0
) -> bool:
    """True when the share of never-seen transitions exceeds ``violation_threshold``."""
    return violation_fraction(matrix, window_frames) > violation_threshold


def save_matrix(matrix: TransitionMatrix) -> str:
    doc = {
        "format": MATRIX_FORMAT,
        "version": MATRIX_VERSION,
        "id_universe": [f"{i:x}" for i in sorted(matrix.id_universe)],
        "allowed": [[f"{a:x}", f"{b:x}"] for a, b in sorted(matrix.allowed)],
        "created_from": matrix.created_from,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_matrix(text: str) -> TransitionMatrix:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BaselineError(f"transition matrix is not valid JSON (truncated?): {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MATRIX_FORMAT:
        raise BaselineError("not a cangraph transition-matrix document")
    if doc.get("version") != MATRIX_VERSION:
        raise BaselineError(f"unsupported transition-matrix version {doc.get('version')!r}")
    try:
        universe = frozenset(int(i, 16) for i in doc["id_universe"])
        allowed = frozenset((int(a, 16), int(b, 16)) for a, b in doc["allowed"])
        return TransitionMatrix(allowed, universe, str(doc.get("created_from", "")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, BaselineError):
            raise
        raise BaselineError(f"malformed transition matrix: {exc}") from exc
