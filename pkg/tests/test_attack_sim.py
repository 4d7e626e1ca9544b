from __future__ import annotations

import json
from collections import Counter

import pytest

from cangraph.attack_sim import (
    DEFAULT_SPOOF_ID,
    REPLAY_MIN_SUPPORT,
    SPOOF_PAYLOAD,
    AttackError,
    AttackKind,
    AttackSpec,
    inject,
    inject_combined,
    inject_dos,
    inject_fuzzy,
    inject_replay,
    inject_spoof,
    injected_count,
    load_attack_spec,
)
from cangraph.can_io import Label, emit_csv
from cangraph.graph import build_graphs, extract_edge_counts, max_degree_histogram
from cangraph.synthetic import synthesize_traffic


@pytest.fixture(scope="module")
def clean():
    return synthesize_traffic(20_000, seed=7)


def _injected(stream):
    return [f for f in stream if f.label is Label.INJECTED]


def _check_accounting(before, after, spec):
    start, stop = spec.region or (0, len(before))
    n = injected_count(spec.injection_ratio, stop - start)
    assert len(after) == len(before) + n
    assert len(_injected(after)) == n
    # originals keep their order and are never relabelled injected
    assert [f for f in after if f.label is not Label.INJECTED] == list(before)
    ts = [f.timestamp for f in after]
    assert all(a <= b for a, b in zip(ts, ts[1:]))


def test_injected_count_formula():
    assert injected_count(0.3, 1000) == round(0.3 / 0.7 * 1000) == 429
    assert injected_count(0.2, 1000) == 250
    assert injected_count(1.0, 1000) == 1000


def test_dos(clean):
    spec = AttackSpec(AttackKind.DOS, 0.3, region=(5000, 6000), seed=1)
    out = inject_dos(clean, spec)
    _check_accounting(clean, out, spec)
    inj = _injected(out)
    assert len(inj) == 429
    assert all(f.arbitration_id == 0 and f.dlc == 8 and f.data == bytes(8) for f in inj)
    assert emit_csv(inject_dos(clean, spec)) == emit_csv(out)
    # injected frames stay inside the region
    first = next(i for i, f in enumerate(out) if f.injected)
    last = max(i for i, f in enumerate(out) if f.injected)
    assert first >= 5000 and last < 6000 + 429


def test_dos_dominates_max_degree(clean):
    out = inject_dos(clean, AttackSpec(AttackKind.DOS, 0.5, seed=2))
    hist = max_degree_histogram(build_graphs(out))
    assert max(hist, key=hist.get) == 0x000
    assert hist[0x000] >= 0.9 * sum(hist.values())


def test_fuzzy(clean):
    spec = AttackSpec(AttackKind.FUZZY, 0.2, id_range=(0x100, 0x1FF), seed=3)
    out = inject_fuzzy(clean, spec)
    _check_accounting(clean, out, spec)
    inj = _injected(out)
    assert all(0x100 <= f.arbitration_id <= 0x1FF and f.dlc == 8 for f in inj)
    assert len({f.arbitration_id for f in inj}) > 200
    assert [f.arbitration_id for f in _injected(inject_fuzzy(clean, spec))] == [f.arbitration_id for f in inj]
    other = inject_fuzzy(clean, AttackSpec(AttackKind.FUZZY, 0.2, id_range=(0x100, 0x1FF), seed=4))
    assert [f.arbitration_id for f in _injected(other)] != [f.arbitration_id for f in inj]
    before = sum(extract_edge_counts(build_graphs(clean))) / (len(clean) // 200)
    after = sum(extract_edge_counts(build_graphs(out))) / (len(out) // 200)
    assert after > before + 10
    with pytest.raises(AttackError, match="empty id range"):
        inject_fuzzy(clean, AttackSpec(AttackKind.FUZZY, 0.2, id_range=(5, 4)))


def test_spoof(clean):
    spec = AttackSpec(AttackKind.SPOOF, 0.2, seed=5)
    out = inject_spoof(clean, spec)
    _check_accounting(clean, out, spec)
    assert all(f.arbitration_id == DEFAULT_SPOOF_ID and f.data == SPOOF_PAYLOAD for f in _injected(out))
    heavy = inject_spoof(clean, AttackSpec(AttackKind.SPOOF, 0.5, seed=5))
    hist = max_degree_histogram(build_graphs(heavy))
    assert max(hist, key=hist.get) == DEFAULT_SPOOF_ID


def test_spoof_bimodal_edge_counts(clean):
    # attack every other block of 20 windows: edge counts split into two separated modes
    subs = tuple(
        AttackSpec(AttackKind.SPOOF, 0.3, region=(s, s + 4000), seed=s) for s in range(4000, 20_000, 8000)
    )
    out = inject(clean, AttackSpec(AttackKind.COMBINED, sub_specs=subs))
    graphs = build_graphs(out)
    attacked = [g.edge_count for g in graphs if g.attacked]
    normal = [g.edge_count for g in graphs if not g.attacked]
    assert min(attacked) > max(normal) - 5
    assert sorted(attacked)[len(attacked) // 2] > sorted(normal)[len(normal) // 2] + 10


def test_replay_no_new_transitions(clean):
    spec = AttackSpec(AttackKind.REPLAY, 0.2, region=(10_000, 14_000), seed=6)
    out = inject_replay(clean, spec)
    _check_accounting(clean, out, spec)
    history_ids = [f.arbitration_id for f in clean[:10_000]]
    support = Counter(zip(history_ids, history_ids[1:]))
    region = out[10_000:14_000 + 1000]
    for a, b in zip(region, region[1:]):
        if a.injected or b.injected:
            assert support[(a.arbitration_id, b.arbitration_id)] >= REPLAY_MIN_SUPPORT


def test_replay_copies_recorded_traffic(clean):
    spec = AttackSpec(AttackKind.REPLAY, 0.2, region=(10_000, 14_000), seed=6)
    inj = _injected(inject_replay(clean, spec))
    recorded = Counter((f.arbitration_id, f.dlc, f.data) for f in clean[2000:10_000])
    replayed = Counter((f.arbitration_id, f.dlc, f.data) for f in inj)
    assert not replayed - recorded  # every replayed frame was recorded earlier


def test_replay_full_ratio_copies_segment_exactly(clean):
    spec = AttackSpec(AttackKind.REPLAY, 1.0, region=(10_000, 11_000), seed=8)
    out = inject_replay(clean, spec)
    assert len(out) == len(clean)
    inj = out[10_000:11_000]
    assert all(f.injected for f in inj)
    ids = [f.arbitration_id for f in inj]
    # the recording covers max(region, 2 * injected) = 2000 frames and wraps around
    history = [f.arbitration_id for f in clean[8000:10_000]]
    segments = [[history[(k + i) % 2000] for i in range(1000)] for k in range(2000)]
    match = [seg for seg in segments if seg == ids]
    assert match and Counter(match[0]) == Counter(ids)


def test_replay_raises_edge_counts(clean):
    spec = AttackSpec(AttackKind.REPLAY, 0.2, region=(10_000, 20_000), seed=9)
    out = inject_replay(clean, spec)
    base = sorted(extract_edge_counts(build_graphs(clean[:10_000])))
    attacked = sorted(g.edge_count for g in build_graphs(out[10_000:]))
    assert attacked[len(attacked) // 2] >= base[len(base) // 2] + 8


def test_replay_needs_history(clean):
    with pytest.raises(AttackError, match="history"):
        inject_replay(clean, AttackSpec(AttackKind.REPLAY, 0.2, region=(1000, 5000)))


def test_region_validation(clean):
    for region in ((0, 0), (5, 3), (0, len(clean) + 1), (-1, 10)):
        with pytest.raises(AttackError):
            inject_dos(clean, AttackSpec(AttackKind.DOS, 0.3, region=region))
    with pytest.raises(AttackError):
        AttackSpec(AttackKind.DOS, 0.0)
    with pytest.raises(AttackError):
        AttackSpec(AttackKind.DOS, 1.5)
    with pytest.raises(AttackError, match="expected a dos spec"):
        inject_dos(clean, AttackSpec(AttackKind.FUZZY))


def test_combined_single_sub_equals_plain_attack(clean):
    sub = AttackSpec(AttackKind.FUZZY, 0.2, region=(3000, 6000), seed=10)
    assert inject_combined(clean, AttackSpec(AttackKind.COMBINED, sub_specs=(sub,))) == inject(clean, sub)


def test_combined_regions_index_the_input(clean):
    dos = AttackSpec(AttackKind.DOS, 0.3, region=(1000, 2000), seed=11)
    fuzzy = AttackSpec(AttackKind.FUZZY, 0.2, region=(3000, 4000), seed=12)
    out = inject(clean, AttackSpec(AttackKind.COMBINED, sub_specs=(dos, fuzzy)))
    assert len(out) == len(clean) + 429 + 250
    # the fuzzy region lands on the same original frames despite the earlier DoS insertions
    originals = [f for f in out if not f.injected]
    assert originals == list(clean)
    inj_positions = [i for i, f in enumerate(out) if f.injected and f.arbitration_id != 0]
    first_orig = out.frames.index(clean[3000])
    last_orig = out.frames.index(clean[3999])
    fuzzy_positions = [i for i in inj_positions if first_orig <= i <= last_orig]
    assert len(fuzzy_positions) >= 245  # a few fuzzy ids may be 0x000 by chance


def test_combined_overlapping_same_region(clean):
    subs = (
        AttackSpec(AttackKind.DOS, 0.3, region=(1000, 2000), seed=1),
        AttackSpec(AttackKind.SPOOF, 0.2, region=(1000, 2000), seed=2),
    )
    out = inject(clean, AttackSpec(AttackKind.COMBINED, sub_specs=subs))
    # the second attack sees the region as it is on the bus: 1000 originals + 429 DoS frames
    spoofed = injected_count(0.2, 1429)
    assert spoofed == 357
    assert len(out) == len(clean) + 429 + spoofed
    assert Counter(f.arbitration_id for f in _injected(out)) == {0x000: 429, DEFAULT_SPOOF_ID: spoofed}


def test_combined_rejects_overlapping_replays(clean):
    subs = (
        AttackSpec(AttackKind.REPLAY, 0.2, region=(10_000, 12_000)),
        AttackSpec(AttackKind.REPLAY, 0.2, region=(11_000, 13_000)),
    )
    with pytest.raises(AttackError, match="overlap"):
        inject(clean, AttackSpec(AttackKind.COMBINED, sub_specs=subs))
    with pytest.raises(AttackError, match="at least one"):
        inject(clean, AttackSpec(AttackKind.COMBINED))


def test_spec_config_round_trip():
    spec = AttackSpec(
        AttackKind.COMBINED,
        sub_specs=(AttackSpec("dos", 0.3, region=(0, 10), seed=3), AttackSpec("fuzzy", 0.2, id_range=(1, 0x7F))),
    )
    assert load_attack_spec(json.dumps(spec.to_dict())) == spec
    with pytest.raises(AttackError, match="unknown"):
        load_attack_spec('{"kind": "dos", "colour": 1}')


def test_unlabelled_input_becomes_normal(clean):
    unlabeled = synthesize_traffic(2000, seed=1, label=Label.UNLABELED)
    out = inject_dos(unlabeled, AttackSpec(AttackKind.DOS, 0.3, seed=1))
    assert {f.label for f in out} == {Label.NORMAL, Label.INJECTED}
