"""Reading and writing CAN logs.

Two formats are supported:

* the HCRL car-hacking text log, one frame per line::

      Timestamp: 1478198376.389427        ID: 0316    000    DLC: 8    05 21 68 09 21 21 00 6f

* a canonical CSV with header ``timestamp,arbitration_id,dlc,data,label``.

Both parsers return a :class:`FrameStream`, which preserves input order exactly.
"""

from __future__ import annotations

import enum
import io
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

CSV_HEADER = "timestamp,arbitration_id,dlc,data,label"

STANDARD_ID_MAX = 0x7FF
EXTENDED_ID_MAX = 0x1FFFFFFF

# more than this fraction of malformed HCRL lines means the input is not HCRL
MALFORMED_LIMIT = 0.5


class CanIOError(Exception):
    """Base class for log reading/writing errors."""


class FormatMismatchError(CanIOError):
    pass


class RowError(CanIOError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class Label(enum.Enum):
    UNLABELED = ""
    NORMAL = "normal"
    INJECTED = "injected"


class IdWidth(enum.Enum):
    STANDARD = "standard"
    EXTENDED = "extended"


@dataclass(frozen=True, slots=True)
class CanFrame:
    timestamp: float
    arbitration_id: int
    dlc: int
    data: bytes = b""
    label: Label = Label.UNLABELED
    id_width: IdWidth = IdWidth.STANDARD

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} outside 0..8")
        if len(self.data) != self.dlc:
            raise ValueError(f"payload length {len(self.data)} != dlc {self.dlc}")
        limit = STANDARD_ID_MAX if self.id_width is IdWidth.STANDARD else EXTENDED_ID_MAX
        if not 0 <= self.arbitration_id <= limit:
            raise ValueError(
                f"arbitration id {self.arbitration_id:#x} out of range for {self.id_width.value} id"
            )
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")

    @property
    def injected(self) -> bool:
        return self.label is Label.INJECTED


@dataclass(frozen=True, slots=True)
class ParseWarning:
    line: int
    message: str


@dataclass(frozen=True)
class FrameStream:
    """An ordered, immutable sequence of frames plus where they came from.

    Equality compares frames only; ``source`` and ``warnings`` are metadata.
    """

    frames: tuple[CanFrame, ...]
    source: str = field(default="", compare=False)
    warnings: tuple[ParseWarning, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[CanFrame]:
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    @property
    def arbitration_ids(self) -> list[int]:
        return [f.arbitration_id for f in self.frames]


def _id_width(value: int, hex_digits: int) -> IdWidth:
    if value > STANDARD_ID_MAX or hex_digits > 4:
        return IdWidth.EXTENDED
    return IdWidth.STANDARD


def format_id(arbitration_id: int, id_width: IdWidth = IdWidth.STANDARD) -> str:
    """Lowercase hex id, 4 digits for standard ids and 8 for extended."""
    if id_width is IdWidth.EXTENDED:
        return f"{arbitration_id:08x}"
    return f"{arbitration_id:04x}"


def _monotonic_warnings(frames: Sequence[CanFrame], line_numbers: Sequence[int]) -> list[ParseWarning]:
    out = []
    for i in range(1, len(frames)):
        if frames[i].timestamp < frames[i - 1].timestamp:
            out.append(ParseWarning(line_numbers[i], "timestamp decreases"))
    return out


_TS_RE = re.compile(r"Timestamp:\s*(\S+)")
_ID_RE = re.compile(r"ID:\s*([0-9A-Fa-f]+)\b")
_DLC_RE = re.compile(r"DLC:\s*(\d+)")
_HEX_BYTE_RE = re.compile(r"^[0-9A-Fa-f]{2}$")


def parse_hcrl_line(line: str) -> CanFrame:
    """Parse one HCRL line. Raises ValueError with a reason if malformed."""
    ts_m = _TS_RE.search(line)
    id_m = _ID_RE.search(line)
    dlc_m = _DLC_RE.search(line)
    if not (ts_m and id_m and dlc_m):
        raise ValueError("missing Timestamp:/ID:/DLC: token")
    timestamp = float(ts_m.group(1))
    id_text = id_m.group(1)
    arbitration_id = int(id_text, 16)
    dlc = int(dlc_m.group(1))
    if dlc > 8:
        raise ValueError(f"dlc {dlc} > 8")
    tokens = line[dlc_m.end():].split()
    payload = []
    for tok in tokens[:dlc]:
        if not _HEX_BYTE_RE.match(tok):
            raise ValueError(f"bad payload byte {tok!r}")
        payload.append(int(tok, 16))
    if len(payload) != dlc:
        raise ValueError(f"expected {dlc} payload bytes, found {len(payload)}")
    return CanFrame(
        timestamp=timestamp,
        arbitration_id=arbitration_id,
        dlc=dlc,
        data=bytes(payload),
        id_width=_id_width(arbitration_id, len(id_text)),
    )


def parse_hcrl(text_lines: Iterable[str], source: str = "") -> FrameStream:
    frames: list[CanFrame] = []
    line_numbers: list[int] = []
    warnings: list[ParseWarning] = []
    n_nonempty = 0
    first_bad: tuple[int, str] | None = None
    try:
        for lineno, raw in enumerate(text_lines, start=1):
            line = raw.strip()
            if not line:
                continue
            n_nonempty += 1
            try:
                frames.append(parse_hcrl_line(line))
            except ValueError as exc:
                warnings.append(ParseWarning(lineno, str(exc)))
                if first_bad is None:
                    first_bad = (lineno, line)
                continue
            line_numbers.append(lineno)
    except (OSError, UnicodeDecodeError) as exc:
        raise CanIOError(f"cannot read {source or 'input'}: {exc}") from exc

    if n_nonempty and len(warnings) > MALFORMED_LIMIT * n_nonempty:
        lineno, line = first_bad
        raise FormatMismatchError(
            f"{len(warnings)}/{n_nonempty} lines are not HCRL frames; first offending line {lineno}: {line[:80]!r}"
        )
    warnings.extend(_monotonic_warnings(frames, line_numbers))
    warnings.sort(key=lambda w: w.line)
    for w in warnings:
        logger.warning("%s:%d: %s", source or "<hcrl>", w.line, w.message)
    return FrameStream(tuple(frames), source=source, warnings=tuple(warnings))


def _parse_csv_row(row: int, line: str) -> CanFrame:
    parts = line.split(",")
    if len(parts) != 5:
        raise RowError(row, f"expected 5 columns, found {len(parts)}")
    ts_text, id_text, dlc_text, data_text, label_text = (p.strip() for p in parts)
    try:
        timestamp = float(ts_text)
        arbitration_id = int(id_text, 16)
        dlc = int(dlc_text)
    except ValueError as exc:
        raise RowError(row, str(exc)) from None
    if len(data_text) != 2 * dlc:
        raise RowError(row, f"dlc {dlc} needs {2 * dlc} hex chars, found {len(data_text)}")
    try:
        data = bytes.fromhex(data_text)
        label = Label(label_text)
    except ValueError as exc:
        raise RowError(row, str(exc)) from None
    try:
        return CanFrame(timestamp, arbitration_id, dlc, data, label, _id_width(arbitration_id, len(id_text)))
    except ValueError as exc:
        raise RowError(row, str(exc)) from None


def iter_csv(text_lines: Iterable[str]) -> Iterator[CanFrame]:
    """Yield frames from canonical CSV lines one at a time (for streaming input)."""
    lines = iter(text_lines)
    header = next(lines, None)
    if header is None:
        return
    if header.strip().lower() != CSV_HEADER:
        raise FormatMismatchError(f"expected CSV header {CSV_HEADER!r}, got {header.strip()[:80]!r}")
    for row, raw in enumerate(lines, start=2):
        line = raw.strip()
        if line:
            yield _parse_csv_row(row, line)


def parse_csv(text_lines: Iterable[str], source: str = "") -> FrameStream:
    frames = []
    rows = []
    row = 1
    lines = iter(text_lines)
    header = next(lines, None)
    if header is not None:
        if header.strip().lower() != CSV_HEADER:
            raise FormatMismatchError(f"expected CSV header {CSV_HEADER!r}, got {header.strip()[:80]!r}")
        for row, raw in enumerate(lines, start=2):
            line = raw.strip()
            if line:
                frames.append(_parse_csv_row(row, line))
                rows.append(row)
    warnings = _monotonic_warnings(frames, rows)
    for w in warnings:
        logger.warning("%s:%d: %s", source or "<csv>", w.line, w.message)
    return FrameStream(tuple(frames), source=source, warnings=tuple(warnings))


def format_csv_row(frame: CanFrame) -> str:
    # repr() gives the shortest string that round-trips the float exactly
    return ",".join(
        (
            repr(float(frame.timestamp)),
            format_id(frame.arbitration_id, frame.id_width),
            str(frame.dlc),
            frame.data.hex(),
            frame.label.value,
        )
    )


def emit_csv(stream: FrameStream | Iterable[CanFrame]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for frame in stream:
        buf.write(format_csv_row(frame) + "\n")
    return buf.getvalue()


def sniff_format(first_line: str) -> str:
    """Guess ``"hcrl"`` or ``"csv"`` from the first non-empty line of a log."""
    if "Timestamp:" in first_line:
        return "hcrl"
    if first_line.strip().lower() == CSV_HEADER:
        return "csv"
    raise FormatMismatchError(f"cannot detect log format from line {first_line.strip()[:80]!r}")


def read_frames(path: str | Path, fmt: str = "auto") -> FrameStream:
    """Read a log file (``"-"`` for stdin) in ``hcrl``, ``csv`` or auto-detected format."""
    if fmt not in ("auto", "hcrl", "csv"):
        raise FormatMismatchError(f"unknown format {fmt!r}; expected auto, hcrl or csv")
    source = "stdin" if str(path) == "-" else str(path)
    try:
        if str(path) == "-":
            lines = sys.stdin.read().splitlines()
        else:
            lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CanIOError(f"cannot read {source}: {exc}") from exc
    if fmt == "auto":
        first = next((ln for ln in lines if ln.strip()), None)
        if first is None:
            return FrameStream((), source=source)
        fmt = sniff_format(first)
    if fmt == "hcrl":
        return parse_hcrl(lines, source=source)
    return parse_csv(lines, source=source)


def write_csv(stream: FrameStream | Iterable[CanFrame], path: str | Path) -> None:
    text = emit_csv(stream)
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
