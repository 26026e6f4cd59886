"""Second-level correlation: cluster chains per host pair and the host flow graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

from .correlation import ClusterTable, MetaEvent
from .events import FIELDS, ip_sort_key

SCHEMA_VERSION = 1


class HyperEdge(NamedTuple):
    source: bytes
    target: bytes
    shared_fields: int


@dataclass(frozen=True)
class HyperEventGroup:
    """Temporal chain of every promoted cluster between one (src, dst) pair."""

    src_ip: str
    dst_ip: str
    nodes: tuple[MetaEvent, ...]
    edges: tuple[HyperEdge, ...]
    total_bytes: int
    total_pkts: int


@dataclass(frozen=True)
class HyperEventGraph:
    groups: tuple[HyperEventGroup, ...]

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def edge_count(self) -> int:
        return sum(len(g.edges) for g in self.groups)


@dataclass
class FlowEdge:
    cluster_count: int = 0
    bytes: int = 0
    pkts: int = 0


@dataclass
class FlowGraph:
    nodes: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], FlowEdge] = field(default_factory=dict)
    flagged: set[str] = field(default_factory=set)
    flag_threshold: int = 5

    def out_degree(self, host: str) -> int:
        """Distinct destinations other than ``host`` itself."""
        return sum(1 for (s, d) in self.edges if s == host and d != host)

    def in_degree(self, host: str) -> int:
        return sum(1 for (s, d) in self.edges if d == host and s != host)

    def sorted_nodes(self) -> list[str]:
        return sorted(self.nodes, key=ip_sort_key)

    def sorted_edges(self) -> list[tuple[tuple[str, str], FlowEdge]]:
        return sorted(self.edges.items(), key=lambda kv: (ip_sort_key(kv[0][0]), ip_sort_key(kv[0][1])))


def shared_fields(a: MetaEvent, b: MetaEvent) -> int:
    """Five-tuple positions both endpoints project and agree on."""
    return sum(
        1 for f in FIELDS
        if f in a.key_fields and f in b.key_fields and a.key_fields[f] == b.key_fields[f]
    )


def _pair_order(pair: tuple[str, str]) -> tuple[bytes, bytes]:
    return ip_sort_key(pair[0]), ip_sort_key(pair[1])


def build_ghyper(clusters: ClusterTable) -> HyperEventGraph:
    by_pair: dict[tuple[str, str], list[MetaEvent]] = {}
    for c in clusters:
        by_pair.setdefault((c.src_ip, c.dst_ip), []).append(c)

    groups = []
    for pair in sorted(by_pair, key=_pair_order):
        nodes = sorted(by_pair[pair], key=lambda m: m.sort_key)
        edges = tuple(
            HyperEdge(a.key, b.key, shared_fields(a, b)) for a, b in zip(nodes, nodes[1:])
        )
        groups.append(HyperEventGroup(
            src_ip=pair[0],
            dst_ip=pair[1],
            nodes=tuple(nodes),
            edges=edges,
            total_bytes=sum(n.bytes for n in nodes),
            total_pkts=sum(n.pkts for n in nodes),
        ))
    return HyperEventGraph(tuple(groups))


def build_gflow(clusters: ClusterTable, flag_threshold: int = 5) -> FlowGraph:
    """Host-level flow graph.

    Edge ``bytes``/``pkts`` sum the distinct member aggregates of the pair's
    clusters, so overlapping clusters are not double counted.
    """
    if clusters.aes is None and len(clusters):
        raise ValueError("cluster table carries no aggregate set")
    graph = FlowGraph(flag_threshold=flag_threshold)
    covered: set[int] = set()
    for c in clusters:
        pair = (c.src_ip, c.dst_ip)
        edge = graph.edges.get(pair)
        if edge is None:
            edge = graph.edges[pair] = FlowEdge()
            graph.nodes.update(pair)
        edge.cluster_count += 1
        if clusters.dropped_by_support:
            covered.update(c.members)
    # every member of a pair's clusters has that pair's endpoints, so walking the
    # aggregates once in order gives the per-pair union of members
    if len(clusters):
        for agg in clusters.aes:
            if clusters.dropped_by_support and agg.id not in covered:
                continue
            edge = graph.edges[(agg.tuple.src_ip, agg.tuple.dst_ip)]
            edge.bytes += agg.bytes
            edge.pkts += agg.pkts
    flag_high_fanout(graph, flag_threshold)
    return graph


def flag_high_fanout(graph: FlowGraph, threshold: int) -> set[str]:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    fanout: dict[str, set[str]] = {}
    for s, d in graph.edges:
        if s != d:
            fanout.setdefault(s, set()).add(d)
    graph.flagged = {h for h, dsts in fanout.items() if len(dsts) > threshold}
    graph.flag_threshold = threshold
    return set(graph.flagged)


# serialization

def _dot_id(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _gflow_dot(g: FlowGraph) -> str:
    out = ["digraph gflow {", "  rankdir=LR;", "  node [shape=ellipse];"]
    for host in g.sorted_nodes():
        attrs = f"label={_dot_id(host)}"
        if host in g.flagged:
            attrs += ", color=red, style=filled"
        out.append(f"  {_dot_id(host)} [{attrs}];")
    for (s, d), e in g.sorted_edges():
        label = f"clusters={e.cluster_count} pkts={e.pkts} bytes={e.bytes}"
        out.append(f"  {_dot_id(s)} -> {_dot_id(d)} [label={_dot_id(label)}];")
    out.append("}")
    return "\n".join(out) + "\n"


def _ghyper_dot(g: HyperEventGraph) -> str:
    out = ["digraph ghyper {", "  rankdir=LR;", "  node [shape=box];"]
    for i, grp in enumerate(g.groups):
        out.append(f"  subgraph cluster_{i} {{")
        out.append(f"    label={_dot_id(f'{grp.src_ip} -> {grp.dst_ip}')};")
        for n in grp.nodes:
            label = f"{n.label.value} count={n.count}\\npkts={n.pkts} bytes={n.bytes}"
            out.append(f"    {_dot_id(n.key.hex())} [label=\"{label}\"];")
        for e in grp.edges:
            out.append(f"    {_dot_id(e.source.hex())} -> {_dot_id(e.target.hex())} [label=\"{e.shared_fields}\"];")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def graph_to_dict(graph: HyperEventGraph | FlowGraph) -> dict:
    if isinstance(graph, FlowGraph):
        return {
            "schema": SCHEMA_VERSION,
            "nodes": [
                {"id": h, "out_degree": graph.out_degree(h), "in_degree": graph.in_degree(h),
                 "flagged": h in graph.flagged}
                for h in graph.sorted_nodes()
            ],
            "edges": [
                {"from": s, "to": d, "cluster_count": e.cluster_count, "bytes": e.bytes, "pkts": e.pkts}
                for (s, d), e in graph.sorted_edges()
            ],
            "meta": {"kind": "gflow", "flag_threshold": graph.flag_threshold},
        }
    nodes, edges, groups = [], [], []
    for i, grp in enumerate(graph.groups):
        for n in grp.nodes:
            d = n.to_dict()
            nodes.append({"id": d.pop("key"), "group": i, **d})
        edges.extend(
            {"from": e.source.hex(), "to": e.target.hex(), "shared_fields": e.shared_fields}
            for e in grp.edges
        )
        groups.append({
            "src_ip": grp.src_ip, "dst_ip": grp.dst_ip,
            "total_bytes": grp.total_bytes, "total_pkts": grp.total_pkts,
            "nodes": [n.key.hex() for n in grp.nodes],
        })
    return {
        "schema": SCHEMA_VERSION,
        "nodes": nodes,
        "edges": edges,
        "meta": {"kind": "ghyper", "flag_threshold": None, "groups": groups},
    }


def graph_from_dict(doc: dict) -> HyperEventGraph | FlowGraph:
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported graph schema {doc.get('schema')!r}")
    kind = doc["meta"]["kind"]
    if kind == "gflow":
        g = FlowGraph(flag_threshold=doc["meta"]["flag_threshold"])
        for n in doc["nodes"]:
            g.nodes.add(n["id"])
            if n["flagged"]:
                g.flagged.add(n["id"])
        for e in doc["edges"]:
            g.edges[(e["from"], e["to"])] = FlowEdge(e["cluster_count"], e["bytes"], e["pkts"])
        return g
    if kind != "ghyper":
        raise ValueError(f"unknown graph kind {kind!r}")
    metas = {}
    for n in doc["nodes"]:
        d = dict(n)
        d["key"] = d.pop("id")
        d.pop("group")
        metas[n["id"]] = MetaEvent.from_dict(d)
    edges_from: dict[str, dict] = {e["from"]: e for e in doc["edges"]}
    groups = []
    for grp in doc["meta"]["groups"]:
        nodes = tuple(metas[k] for k in grp["nodes"])
        edges = tuple(
            HyperEdge(bytes.fromhex(edges_from[k]["from"]), bytes.fromhex(edges_from[k]["to"]),
                      edges_from[k]["shared_fields"])
            for k in grp["nodes"][:-1]
        )
        groups.append(HyperEventGroup(grp["src_ip"], grp["dst_ip"], nodes, edges,
                                      grp["total_bytes"], grp["total_pkts"]))
    return HyperEventGraph(tuple(groups))


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def export_graph(graph: HyperEventGraph | FlowGraph, format: str = "json") -> str:
    if format == "json":
        return dumps_json(graph_to_dict(graph))
    if format == "dot":
        return _gflow_dot(graph) if isinstance(graph, FlowGraph) else _ghyper_dot(graph)
    raise ValueError(f"unknown export format {format!r}")


def load_graph(text: str) -> HyperEventGraph | FlowGraph:
    return graph_from_dict(json.loads(text))
