"""Attack-free periodic ECU traffic for tests and desk-scale experiments.

Each ECU message fires on its own period with a fixed phase and bounded
(uniform) release jitter; the merged, time-sorted sequence is the bus log. Phases belong
to the schedule (the vehicle), so two captures with different seeds differ
only in jitter and payload counters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .can_io import CanFrame, FrameStream, Label


@dataclass(frozen=True)
class ScheduledMessage:
    arbitration_id: int
    period: float  # seconds
    phase: float = 0.0  # seconds after the capture origin of the first release
    dlc: int = 8


# roughly the shape of a passenger-car powertrain/chassis bus: 26 ids, 10-200 ms periods
_IDS_AND_PERIODS = (
    (0x0002, 0.010),
    (0x00A0, 0.010),
    (0x00A1, 0.010),
    (0x0130, 0.010),
    (0x0131, 0.010),
    (0x0140, 0.010),
    (0x0153, 0.010),
    (0x018F, 0.010),
    (0x0260, 0.010),
    (0x02A0, 0.010),
    (0x0316, 0.010),
    (0x0329, 0.010),
    (0x0350, 0.020),
    (0x0370, 0.010),
    (0x043F, 0.010),
    (0x0440, 0.010),
    (0x04B1, 0.010),
    (0x04F0, 0.020),
    (0x0545, 0.010),
    (0x05A0, 0.100),
    (0x05A2, 0.100),
    (0x05F0, 0.200),
    (0x0690, 0.100),
    (0x0164, 0.010),
    (0x02C0, 0.010),
    (0x04F1, 0.100),
)


# Release jitter half-width (uniform): two messages whose phases are closer
# than twice this can swap order on the bus.
JITTER = 0.00012


def make_schedule(phase_seed: int) -> tuple[ScheduledMessage, ...]:
    """A schedule over the built-in id/period table with phases drawn from ``phase_seed``."""
    rng = np.random.default_rng(phase_seed)
    return tuple(
        ScheduledMessage(aid, period, phase=round(float(rng.uniform(0, period)), 6))
        for aid, period in _IDS_AND_PERIODS
    )


DEFAULT_SCHEDULE = make_schedule(2016)


def synthesize_traffic(
    n_frames: int,
    seed: int = 0,
    schedule: tuple[ScheduledMessage, ...] = DEFAULT_SCHEDULE,
    jitter: float = JITTER,
    origin: float | None = None,
    start_time: float = 1478198376.0,
    label: Label = Label.NORMAL,
) -> FrameStream:
    """Generate ``n_frames`` of periodic traffic, deterministic in ``seed``.

    ``origin`` is where on the vehicle's clock the capture begins (seconds);
    by default the seed picks a point in the first hour. Payload
    bytes carry a per-message rolling counter so repeated frames of the same
    id are not byte-identical.
    """
    rng = np.random.default_rng(seed)
    if origin is None:
        origin = float(rng.uniform(0.0, 3600.0))
    rate = sum(1.0 / m.period for m in schedule)
    duration = n_frames / rate * 1.05 + max(m.period for m in schedule)
    times, ids, seq = [], [], []
    for m in schedule:
        period = m.period
        k = math.ceil((origin - m.phase) / period) + np.arange(int(duration / period) + 2)
        t = m.phase + k * period - origin + rng.uniform(-jitter, jitter, size=k.size)
        times.append(t)
        ids.append(np.full(k.size, m.arbitration_id))
        seq.append(k)
    t_all = np.concatenate(times)
    order = np.argsort(t_all, kind="stable")
    t_all = t_all[order]
    t_all -= min(0.0, float(t_all[0]))
    id_all = np.concatenate(ids)[order]
    seq_all = np.concatenate(seq)[order]
    if t_all.size < n_frames:
        raise ValueError("schedule produced too few frames")  # unreachable with the 5% margin

    dlc = {m.arbitration_id: m.dlc for m in schedule}
    base = {m.arbitration_id: rng.integers(0, 256, size=m.dlc, dtype=np.uint8).tobytes() for m in schedule}
    frames = []
    for i in range(n_frames):
        aid = int(id_all[i])
        n = dlc[aid]
        payload = base[aid]
        if n:
            payload = payload[:-1] + bytes([(payload[-1] + int(seq_all[i])) & 0xFF])
        ts = round(start_time + float(t_all[i]), 6)
        frames.append(CanFrame(ts, aid, n, payload, label))
    return FrameStream(tuple(frames), source=f"synthetic(seed={seed})")
