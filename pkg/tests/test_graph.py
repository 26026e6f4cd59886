import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from evcorr.aggregation import aggregate
from evcorr.correlation import ClusterTable, MetaEvent, correlate, promote
from evcorr.events import Batch, FiveTuple, RawEvent, RuleLabel, canonical_key
from evcorr.graph import (
    FlowGraph,
    build_gflow,
    build_ghyper,
    export_graph,
    flag_high_fanout,
    load_graph,
    shared_fields,
)
from evcorr.synth import sweep_events

from conftest import overlapping_events

A, B, C = "10.0.0.1", "10.0.0.2", "10.0.0.3"


def clusters_for(events, support=1):
    return promote(correlate(aggregate(Batch.of(events))), support)


def three_host_events():
    return [
        RawEvent(1, A, B, 1000, 80, "tcp", 100),
        RawEvent(2, A, C, 1001, 80, "tcp", 200),
        RawEvent(3, B, C, 1002, 53, "udp", 300),
    ]


def fanout_events(src, n_dst, base=0):
    return [RawEvent(base + i, src, f"10.2.0.{i + 1}", 40000 + i, 443, "tcp", 60) for i in range(n_dst)]


def _meta(label, tup, ts, members):
    fields = {f: getattr(tup, f) for f in label.fields}
    return MetaEvent(label, canonical_key(tup, label), fields, len(members), len(members), 10 * len(members),
                     ts, tuple(members))


class TestGhyper:
    def test_chain_of_four(self):
        metas = [_meta(RuleLabel.SC, FiveTuple(A, B, 1000 + i, 80, "tcp"), i + 1, [i]) for i in range(4)]
        g = build_ghyper(ClusterTable(tuple(reversed(metas)), 1))
        (grp,) = g.groups
        assert [n.ts for n in grp.nodes] == [1, 2, 3, 4]
        assert [(e.source, e.target) for e in grp.edges] == [(metas[i].key, metas[i + 1].key) for i in range(3)]
        assert all(e.shared_fields == 4 for e in grp.edges)

    def test_singleton_group(self):
        g = build_ghyper(clusters_for([RawEvent(1, A, B, 1, 2, "tcp", 5)]))
        (grp,) = g.groups
        assert len(grp.nodes) == 1 and grp.edges == ()

    def test_shared_fields_annotation(self):
        sc = _meta(RuleLabel.SC, FiveTuple(A, B, 1, 80, "tcp"), 1, [0])
        vc3 = _meta(RuleLabel.VC3, FiveTuple(A, B, 2, 80, "tcp"), 2, [1, 2])
        vc4 = _meta(RuleLabel.VC4, FiveTuple(A, B, 9, 9, "udp"), 3, [0, 1, 2, 3])
        assert shared_fields(sc, vc3) == 3
        assert shared_fields(vc3, vc4) == 2

    def test_groups_by_pair(self):
        g = build_ghyper(clusters_for(three_host_events()))
        assert [(x.src_ip, x.dst_ip) for x in g.groups] == [(A, B), (A, C), (B, C)]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 300))
    def test_structure_property(self, seed, n):
        ct = clusters_for(overlapping_events(random.Random(seed), n))
        g = build_ghyper(ct)
        assert len({(x.src_ip, x.dst_ip) for x in g.groups}) == len(g.groups)
        assert sum(len(x.nodes) for x in g.groups) == len(ct)
        assert sum(x.total_bytes for x in g.groups) == sum(c.bytes for c in ct)
        for grp in g.groups:
            assert all((c.src_ip, c.dst_ip) == (grp.src_ip, grp.dst_ip) for c in grp.nodes)
            order = [c.sort_key for c in grp.nodes]
            assert order == sorted(order)
            assert len(grp.edges) == max(0, len(grp.nodes) - 1)
            keys = [c.key for c in grp.nodes]
            assert [(e.source, e.target) for e in grp.edges] == list(zip(keys, keys[1:]))
            assert all(2 <= e.shared_fields <= 5 for e in grp.edges)


class TestGflow:
    def test_three_host_topology(self):
        g = build_gflow(clusters_for(three_host_events()))
        assert g.nodes == {A, B, C}
        assert set(g.edges) == {(A, B), (A, C), (B, C)}
        assert g.edges[(B, C)].bytes == 300

    def test_empty(self):
        g = build_gflow(clusters_for([]))
        assert g.nodes == set() and g.edges == {} and g.flagged == set()

    def test_fanout_boundary(self):
        g = build_gflow(clusters_for(fanout_events("10.1.0.6", 6) + fanout_events("10.1.0.5", 5, 100)), 5)
        assert g.flagged == {"10.1.0.6"}

    def test_three_host_threshold_one(self):
        g = build_gflow(clusters_for(three_host_events()))
        assert flag_high_fanout(g, 1) == {A}
        assert g.flagged == {A} and g.flag_threshold == 1
        assert flag_high_fanout(g, len(g.nodes)) == set()

    def test_sweep_scanner(self):
        scanner = "10.66.6.6"
        events = sweep_events(scanner, 20, seed=1) + three_host_events() + fanout_events("10.1.0.9", 4, 500)
        g = build_gflow(clusters_for(events), 5)
        assert g.flagged == {scanner}

    def test_self_loop_not_counted(self):
        events = fanout_events(A, 5) + [RawEvent(9, A, A, 1, 2, "tcp", 1)]
        g = build_gflow(clusters_for(events), 5)
        assert (A, A) in g.edges
        assert g.out_degree(A) == 5 and g.flagged == set()

    def test_antiparallel_edges(self):
        g = build_gflow(clusters_for([RawEvent(1, A, B, 1, 2, "tcp", 1), RawEvent(2, B, A, 2, 1, "tcp", 1)]))
        assert set(g.edges) == {(A, B), (B, A)}

    def test_requires_aggregate_set(self):
        ct = clusters_for(three_host_events())
        ct.aes = None
        with pytest.raises(ValueError):
            build_gflow(ct)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 300), st.integers(1, 3))
    def test_edge_soundness_and_sums(self, seed, n, support):
        ct = clusters_for(overlapping_events(random.Random(seed), n), support)
        g = build_gflow(ct)
        pairs = {(c.src_ip, c.dst_ip) for c in ct}
        assert set(g.edges) == pairs
        for pair, e in g.edges.items():
            pc = [c for c in ct if (c.src_ip, c.dst_ip) == pair]
            ids = {i for c in pc for i in c.members}
            assert e.cluster_count == len(pc)
            assert e.bytes == sum(ct.aes[i].bytes for i in ids)
            assert e.pkts == sum(ct.aes[i].pkts for i in ids)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 6))
    def test_flag_monotonic(self, seed, t):
        g = build_gflow(clusters_for(overlapping_events(random.Random(seed), 200)))
        assert flag_high_fanout(g, t + 1) <= flag_high_fanout(g, t)


class TestExport:
    def test_three_host_dot(self):
        g = build_gflow(clusters_for(three_host_events()), 1)
        dot = export_graph(g, "dot")
        assert dot.startswith("digraph gflow {")
        node_lines = [l for l in dot.splitlines() if "[label=" in l and "->" not in l]
        edge_lines = [l for l in dot.splitlines() if "->" in l]
        assert len(node_lines) == 3 and len(edge_lines) == 3
        assert f'"{A}" -> "{B}"' in dot and f'"{A}" -> "{C}"' in dot and f'"{B}" -> "{C}"' in dot
        flagged = [l for l in node_lines if "color=red" in l]
        assert len(flagged) == 1 and f'"{A}"' in flagged[0]

    def test_empty_documents(self):
        g = FlowGraph()
        assert export_graph(g, "dot").strip().endswith("}")
        doc = json.loads(export_graph(g, "json"))
        assert doc["nodes"] == [] and doc["edges"] == [] and doc["meta"]["kind"] == "gflow"
        assert json.loads(export_graph(build_ghyper(clusters_for([])), "json"))["nodes"] == []

    def test_json_schema(self):
        doc = json.loads(export_graph(build_gflow(clusters_for(three_host_events())), "json"))
        assert doc["schema"] == 1
        assert {"id", "out_degree", "in_degree", "flagged"} <= set(doc["nodes"][0])
        assert {"from", "to", "cluster_count", "bytes", "pkts"} <= set(doc["edges"][0])
        assert doc["meta"] == {"kind": "gflow", "flag_threshold": 5}

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 200))
    def test_json_round_trip(self, seed, n):
        ct = clusters_for(overlapping_events(random.Random(seed), n))
        for g in (build_gflow(ct), build_ghyper(ct)):
            text = export_graph(g, "json")
            again = load_graph(text)
            assert export_graph(again, "json") == text
            assert export_graph(again, "dot") == export_graph(g, "dot")

    def test_ghyper_round_trip_preserves_objects(self):
        ct = clusters_for(overlapping_events(random.Random(3), 80))
        g = build_ghyper(ct)
        assert load_graph(export_graph(g, "json")) == g

    def test_deterministic(self):
        events = overlapping_events(random.Random(9), 150)
        shuffled = list(events)
        random.Random(1).shuffle(shuffled)
        a, b = clusters_for(events), clusters_for(shuffled)
        for build in (build_gflow, build_ghyper):
            for fmt in ("json", "dot"):
                assert export_graph(build(a), fmt) == export_graph(build(b), fmt)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            export_graph(FlowGraph(), "gml")
