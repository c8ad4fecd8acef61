"""The undirected concept graph: BFS discovery and synonym reachability.

Relations become undirected edges tagged hierarchy or synonym.  When the
same unordered pair carries both a synonym and a hierarchy code, synonym
wins (synonymy is the stronger claim).
"""

from __future__ import annotations

import gzip
import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .ingest import ConceptCatalog
from .linking import CuiSet
from .reports import Assertion

DEFAULT_SYNONYM_RELS = frozenset({"SY"})
DEFAULT_DISCOVERY_DEPTH = 10

GRAPH_FORMAT = "cuisim-graph"
GRAPH_VERSION = 1


class EdgeKind(str, Enum):
    HIERARCHY = "hierarchy"
    SYNONYM = "synonym"


@dataclass
class ConceptGraph:
    """Immutable after build; BFS and expansion are pure reads.

    Synonym closures are memoized per CUI; the benign write race under
    concurrent reads always stores the same value.
    """

    nodes: frozenset[str]
    adjacency: dict[str, dict[str, EdgeKind]]
    synonym_rels: frozenset[str] = DEFAULT_SYNONYM_RELS
    _syn_closure: dict[str, frozenset[str]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def neighbors(self, cui: str, kinds: frozenset[EdgeKind] | None = None) -> Iterable[str]:
        for nbr, kind in self.adjacency.get(cui, {}).items():
            if kinds is None or kind in kinds:
                yield nbr

    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2

    def synonym_neighbors(self, cui: str) -> frozenset[str]:
        return frozenset(self.neighbors(cui, frozenset({EdgeKind.SYNONYM})))

    def synonym_closure(self, cui: str) -> frozenset[str]:
        """All CUIs reachable from ``cui`` via synonym edges only (incl. itself)."""
        cached = self._syn_closure.get(cui)
        if cached is not None:
            return cached
        component = {cui}
        stack = [cui]
        while stack:
            node = stack.pop()
            for nbr in self.neighbors(node, frozenset({EdgeKind.SYNONYM})):
                if nbr not in component:
                    component.add(nbr)
                    stack.append(nbr)
        closure = frozenset(component)
        for member in component:
            self._syn_closure.setdefault(member, closure)
        return closure

    def connected_components(self) -> int:
        seen: set[str] = set()
        count = 0
        for start in self.nodes:
            if start in seen:
                continue
            count += 1
            stack = [start]
            seen.add(start)
            while stack:
                node = stack.pop()
                for nbr in self.adjacency.get(node, {}):
                    if nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
        return count

    def stats(self) -> dict:
        kinds = defaultdict(int)
        for u, nbrs in self.adjacency.items():
            for v, kind in nbrs.items():
                if u < v:
                    kinds[kind.value] += 1
        return {
            "nodes": len(self.nodes),
            "edges": self.edge_count(),
            "connected_components": self.connected_components(),
            "edges_by_kind": dict(sorted(kinds.items())),
        }


@dataclass(frozen=True)
class DiscoveryResult:
    reached: frozenset[str]
    depth_used: int
    frontier_sizes: tuple[int, ...]


def build_graph(
    catalog: ConceptCatalog,
    synonym_rels: frozenset[str] | set[str] = DEFAULT_SYNONYM_RELS,
) -> ConceptGraph:
    synonym_rels = frozenset(synonym_rels)
    adjacency: dict[str, dict[str, EdgeKind]] = defaultdict(dict)
    for rel in catalog.relations:
        kind = EdgeKind.SYNONYM if rel.rel in synonym_rels else EdgeKind.HIERARCHY
        for u, v in ((rel.cui1, rel.cui2), (rel.cui2, rel.cui1)):
            if adjacency[u].get(v) is EdgeKind.SYNONYM:
                continue  # synonym precedence
            adjacency[u][v] = kind
    return ConceptGraph(
        nodes=frozenset(catalog.records),
        adjacency=dict(adjacency),
        synonym_rels=synonym_rels,
    )


def bfs_discover(
    graph: ConceptGraph,
    seeds: Iterable[str],
    depth: int,
    edge_kinds: frozenset[EdgeKind] | None = None,
) -> DiscoveryResult:
    """All CUIs within ``depth`` edges of any seed.

    Seeds absent from the graph stay isolated but remain in the result.  By
    default both edge kinds are traversed (the discovery pre-filter is
    recall oriented); restrict via ``edge_kinds``.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    seeds = set(seeds)
    reached = set(seeds)
    frontier = set(seeds)
    frontier_sizes = [len(seeds)]
    depth_used = 0
    for _ in range(depth):
        nxt: set[str] = set()
        for node in frontier:
            for nbr in graph.neighbors(node, edge_kinds):
                if nbr not in reached:
                    nxt.add(nbr)
        if not nxt:
            break
        depth_used += 1
        frontier_sizes.append(len(nxt))
        reached |= nxt
        frontier = nxt
    return DiscoveryResult(
        reached=frozenset(reached),
        depth_used=depth_used,
        frontier_sizes=tuple(frontier_sizes),
    )


def discover_candidate_reports(result: DiscoveryResult | None, index) -> frozenset[str]:
    """Report ids whose CuiSet overlaps the discovered subset (assertion
    ignored); a disabled discovery (``result is None``) returns every id.

    ``index`` is a retrieval ReportIndex (anything with ``inverted`` and
    ``reports`` mappings works).
    """
    if result is None:
        return frozenset(index.reports)
    hits: set[str] = set()
    for cui in result.reached:
        hits.update(index.inverted.get(cui, ()))
    return frozenset(hits)


def synonym_expand(
    target: CuiSet,
    candidate: CuiSet,
    graph: ConceptGraph,
    transitive: bool = True,
) -> CuiSet:
    """Copy ``target`` with candidate CUIs reachable over synonym edges added.

    Each added CUI inherits the assertion of the reaching target CUI
    (smallest CUI when several reach it); concept metadata comes from the
    candidate set.  The input sets are unmodified, and re-expanding the
    result against the same candidate adds nothing.
    """
    target_cuis = set(target.elements)
    added: dict[str, Assertion] = {}
    reach = graph.synonym_closure if transitive else graph.synonym_neighbors
    for cui in sorted(candidate.elements):
        if cui in target_cuis:
            continue
        for t in sorted(target_cuis):
            if cui in reach(t):
                added[cui] = target.elements[t]
                break
    if not added:
        return target
    return target.extended(added, donor=candidate)


def save_graph(graph: ConceptGraph, path: str | Path) -> None:
    edges = sorted(
        [u, v, kind.value]
        for u, nbrs in graph.adjacency.items()
        for v, kind in nbrs.items()
        if u < v
    )
    payload = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "synonym_rels": sorted(graph.synonym_rels),
        "nodes": sorted(graph.nodes),
        "edges": edges,
    }
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_graph(path: str | Path) -> ConceptGraph:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read graph snapshot {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt graph snapshot {path}: {exc}") from exc
    if payload.get("format") != GRAPH_FORMAT:
        raise DataError(f"{path} is not a graph snapshot")
    if payload.get("version") != GRAPH_VERSION:
        raise DataError(f"unsupported graph snapshot version {payload.get('version')!r}")
    adjacency: dict[str, dict[str, EdgeKind]] = defaultdict(dict)
    for u, v, kind in payload["edges"]:
        adjacency[u][v] = EdgeKind(kind)
        adjacency[v][u] = EdgeKind(kind)
    return ConceptGraph(
        nodes=frozenset(payload["nodes"]),
        adjacency=dict(adjacency),
        synonym_rels=frozenset(payload["synonym_rels"]),
    )
