from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cangraph.can_io import CanFrame, FrameStream, Label
from cangraph.graph import (
    ConfigError,
    WindowingConfig,
    build_graphs,
    build_graphs_from_ids,
    extract_edge_counts,
    graph_from_ids,
    max_degree_histogram,
    to_dot,
)
from oracles import graph_brute

A, B, C = 0x0A, 0x0B, 0x0C


def _stream(ids, injected=()):
    return FrameStream(tuple(
        CanFrame(i * 0.001, x, 0, b"", Label.INJECTED if i in injected else Label.NORMAL) for i, x in enumerate(ids)
    ))


def test_two_frame_window_direction():
    (g,) = build_graphs(_stream([0x043F, 0x0440]), WindowingConfig(window_size=2))
    assert g.node_ids == {0x043F, 0x0440}
    assert g.edges == {(0x043F, 0x0440)}


def test_single_id_window_has_one_self_loop():
    (g,) = build_graphs_from_ids([A] * 4, WindowingConfig(4))
    assert g.node_ids == {A} and g.edges == {(A, A)} and g.edge_count == 1
    assert g.max_degree == 2  # the self-loop counts once in each direction


def test_hand_enumerated_window():
    (g,) = build_graphs_from_ids([A, B, A, B, C], WindowingConfig(5))
    assert g.edges == {(A, B), (B, A), (B, C)}
    assert (g.edge_count, g.node_count, g.max_degree, g.max_degree_id) == (3, 3, 3, B)


def test_max_degree_tie_goes_to_lowest_id():
    g = graph_from_ids([C, B, A])
    assert g.max_degree == 2 and g.max_degree_id == B
    g = graph_from_ids([C, A])
    assert g.max_degree_id == A


def test_window_count_and_partial_tail():
    ids = list(range(10)) * 5  # 50 frames
    assert len(build_graphs_from_ids(ids, WindowingConfig(7))) == 50 // 7
    kept = build_graphs_from_ids(ids, WindowingConfig(7, drop_partial_tail=False))
    assert len(kept) == 8 and kept[-1].window_size == 1


def test_no_edges_across_window_boundaries():
    gs = build_graphs_from_ids([A, B, C, A], WindowingConfig(2))
    assert [g.edges for g in gs] == [{(A, B)}, {(C, A)}]


def test_window_size_validation():
    with pytest.raises(ConfigError):
        WindowingConfig(1)
    with pytest.raises(ConfigError):
        build_graphs_from_ids([A, B], WindowingConfig(window_size=0))


def test_injected_frames_counted_per_window():
    gs = build_graphs(_stream([A, B, C, A, B, C], injected={1, 5}), WindowingConfig(3))
    assert [g.injected_frames for g in gs] == [1, 1]
    assert all(g.attacked for g in gs)


def test_extract_edge_counts():
    assert extract_edge_counts([]) == []
    windows = [[A, B, A, B], [A, A, A, A], [A, B, C, A]]
    graphs = [graph_from_ids(w) for w in windows]
    assert extract_edge_counts(graphs) == [len(set(zip(w, w[1:]))) for w in windows] == [2, 1, 3]


def test_max_degree_histogram():
    assert max_degree_histogram([]) == {}
    dos = [graph_from_ids([0x000, x, 0x000, x + 1, 0x000, x + 2]) for x in range(0x100, 0x10A)]
    assert max_degree_histogram(dos) == {0x000: 10}
    rng = random.Random(5)
    windows = [[rng.randrange(6) for _ in range(12)] for _ in range(10)]
    expected: dict[int, int] = {}
    for w in windows:
        top = graph_brute(w)["max_degree_id"]
        expected[top] = expected.get(top, 0) + 1
    assert max_degree_histogram([graph_from_ids(w) for w in windows]) == dict(sorted(expected.items()))


def test_all_distinct_ids_give_size_minus_one_edges():
    ids = list(range(200))
    (g,) = build_graphs_from_ids(ids)
    assert g.edge_count == 199


def test_repeating_a_block_adds_nothing():
    block = [A, B, C, B]
    once = graph_from_ids(block)
    twice = graph_from_ids(block + block)
    # the only new pair is the seam (last -> first)
    assert twice.edges - once.edges <= {(block[-1], block[0])}


def test_window_permutation_permutes_graphs():
    rng = random.Random(9)
    ids = [rng.randrange(8) for _ in range(40)]
    windows = [ids[i:i + 10] for i in range(0, 40, 10)]
    order = [2, 0, 3, 1]
    shuffled = [x for k in order for x in windows[k]]
    a = build_graphs_from_ids(ids, WindowingConfig(10))
    b = build_graphs_from_ids(shuffled, WindowingConfig(10))
    assert [b[i].edges for i in range(4)] == [a[k].edges for k in order]


def test_dot_export():
    dot = to_dot(graph_from_ids([0x043F, 0x0440]))
    assert '"043f" -> "0440";' in dot
    assert dot.startswith('digraph "window_0" {')


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=2, max_size=60))
def test_graph_matches_brute_force(ids):
    g = graph_from_ids(ids)
    ref = graph_brute(ids)
    assert g.edges == ref["edges"]
    assert (g.edge_count, g.node_count, g.max_degree, g.max_degree_id) == (
        ref["edge_count"], ref["node_count"], ref["max_degree"], ref["max_degree_id"],
    )
    assert g.edge_count <= min(len(ids) - 1, g.node_count ** 2)
    assert all(a in g.node_ids and b in g.node_ids for a, b in g.edges)
    assert g.max_degree >= 1


def test_feature_sequence_deterministic():
    rng = random.Random(3)
    ids = [rng.randrange(30) for _ in range(2000)]
    assert build_graphs_from_ids(ids) == build_graphs_from_ids(list(ids))
