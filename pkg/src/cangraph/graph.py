"""Per-window directed graphs over arbitration-ID sequences.

A stream is cut into consecutive, non-overlapping windows of ``window_size``
frames. Inside a window every adjacent pair of frames ``(i, i+1)`` adds the
directed edge ``id_i -> id_{i+1}``. Edges form a set, so repeated transitions
count once; pairs straddling two windows add nothing.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .can_io import STANDARD_ID_MAX, CanFrame, FrameStream, IdWidth, format_id

DEFAULT_WINDOW_SIZE = 200


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WindowingConfig:
    window_size: int = DEFAULT_WINDOW_SIZE
    drop_partial_tail: bool = True

    def __post_init__(self):
        if not isinstance(self.window_size, int) or self.window_size < 2:
            raise ConfigError(f"window_size must be an integer >= 2, got {self.window_size!r}")


@dataclass(frozen=True)
class WindowGraph:
    window_index: int
    node_ids: frozenset[int]
    edges: frozenset[tuple[int, int]]
    max_degree: int
    max_degree_id: int | None
    window_size: int
    injected_frames: int = 0

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def attacked(self) -> bool:
        return self.injected_frames > 0

    def degrees(self) -> dict[int, int]:
        """Distinct in-neighbours plus distinct out-neighbours for every node."""
        deg = dict.fromkeys(self.node_ids, 0)
        for src, dst in self.edges:
            deg[src] += 1
            deg[dst] += 1
        return deg


def graph_from_ids(ids: Sequence[int], window_index: int = 0, injected_frames: int = 0) -> WindowGraph:
    edges = frozenset(zip(ids, ids[1:]))
    nodes = frozenset(ids)
    deg = dict.fromkeys(nodes, 0)
    # each distinct (src, dst) pair is one out-neighbour of src and one in-neighbour of dst
    for src, dst in edges:
        deg[src] += 1
        deg[dst] += 1
    if deg:
        max_degree = max(deg.values())
        max_degree_id = min(n for n, d in deg.items() if d == max_degree)
    else:
        max_degree, max_degree_id = 0, None
    return WindowGraph(
        window_index=window_index,
        node_ids=nodes,
        edges=edges,
        max_degree=max_degree,
        max_degree_id=max_degree_id,
        window_size=len(ids),
        injected_frames=injected_frames,
    )


def build_graphs(
    stream: FrameStream | Sequence[CanFrame], config: WindowingConfig | None = None
) -> list[WindowGraph]:
    config = config or WindowingConfig()
    frames = stream.frames if isinstance(stream, FrameStream) else stream
    ids = [f.arbitration_id for f in frames]
    injected = [f.injected for f in frames]
    size = config.window_size
    graphs = []
    for k, start in enumerate(range(0, len(ids), size)):
        block = ids[start:start + size]
        if len(block) < size and config.drop_partial_tail:
            break
        graphs.append(graph_from_ids(block, k, sum(injected[start:start + size])))
    return graphs


def build_graphs_from_ids(ids: Sequence[int], config: WindowingConfig | None = None) -> list[WindowGraph]:
    config = config or WindowingConfig()
    size = config.window_size
    out = []
    for k, start in enumerate(range(0, len(ids), size)):
        block = list(ids[start:start + size])
        if len(block) < size and config.drop_partial_tail:
            break
        out.append(graph_from_ids(block, k))
    return out


def extract_edge_counts(graphs: Iterable[WindowGraph]) -> list[int]:
    return [g.edge_count for g in graphs]


def max_degree_histogram(graphs: Iterable[WindowGraph]) -> dict[int, int]:
    """How many windows each arbitration ID was the max-degree node of."""
    counts = Counter(g.max_degree_id for g in graphs if g.max_degree_id is not None)
    return dict(sorted(counts.items()))


def _hex(node: int) -> str:
    return format_id(node, IdWidth.EXTENDED if node > STANDARD_ID_MAX else IdWidth.STANDARD)


def to_dot(graph: WindowGraph, name: str | None = None) -> str:
    """Render a window graph as Graphviz DOT text with hex-id node labels."""
    name = name or f"window_{graph.window_index}"
    lines = [f'digraph "{name}" {{']
    for node in sorted(graph.node_ids):
        lines.append(f'  "{_hex(node)}";')
    for src, dst in sorted(graph.edges):
        lines.append(f'  "{_hex(src)}" -> "{_hex(dst)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
