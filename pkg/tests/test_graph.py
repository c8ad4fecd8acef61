"""Concept graph construction, BFS discovery and synonym expansion."""

from __future__ import annotations

import random

import networkx as nx
import pytest

from cuisim.graph import (
    EdgeKind,
    bfs_discover,
    build_graph,
    discover_candidate_reports,
    load_graph,
    save_graph,
    synonym_expand,
)
from cuisim.ingest import ConceptRecord, RelationRecord, build_catalog
from cuisim.retrieval import index_from_cui_sets

from conftest import make_cui_set


def _mini_catalog(cuis, relations):
    records = [
        ConceptRecord(cui=c, preferred_name=c, strings=(c,), source_vocabularies=frozenset({"SNOMEDCT_US"}))
        for c in cuis
    ]
    rels = [RelationRecord(cui1=a, rel=rel, cui2=b) for a, rel, b in relations]
    return build_catalog(records, [], rels)


def _cui(i: int) -> str:
    return f"C{i:07d}"


class TestBuildGraph:
    def test_hierarchy_edge_both_directions(self):
        cat = _mini_catalog([_cui(1), _cui(2)], [(_cui(1), "PAR", _cui(2))])
        g = build_graph(cat)
        assert g.adjacency[_cui(1)][_cui(2)] is EdgeKind.HIERARCHY
        assert g.adjacency[_cui(2)][_cui(1)] is EdgeKind.HIERARCHY

    def test_synonym_precedence(self):
        cat = _mini_catalog(
            [_cui(1), _cui(2)],
            [(_cui(1), "SY", _cui(2)), (_cui(2), "PAR", _cui(1))],
        )
        g = build_graph(cat)
        assert g.adjacency[_cui(1)][_cui(2)] is EdgeKind.SYNONYM
        assert g.edge_count() == 1

    def test_empty_relations_isolated_vertices(self):
        cat = _mini_catalog([_cui(1), _cui(2), _cui(3)], [])
        g = build_graph(cat)
        assert g.edge_count() == 0
        assert g.stats()["connected_components"] == 3

    def test_symmetry_involution(self, concept_graph):
        for u, nbrs in concept_graph.adjacency.items():
            for v, kind in nbrs.items():
                assert concept_graph.adjacency[v][u] is kind
                assert u != v


class TestBfsDiscover:
    def _path_graph(self, n=4):
        cuis = [_cui(i) for i in range(1, n + 1)]
        rels = [(cuis[i], "PAR", cuis[i + 1]) for i in range(n - 1)]
        return build_graph(_mini_catalog(cuis, rels))

    def test_path_depth2(self):
        g = self._path_graph()
        result = bfs_discover(g, {_cui(1)}, 2)
        assert result.reached == {_cui(1), _cui(2), _cui(3)}

    def test_depth_zero_identity(self):
        g = self._path_graph()
        result = bfs_discover(g, {_cui(1), _cui(3)}, 0)
        assert result.reached == {_cui(1), _cui(3)}
        assert result.depth_used == 0

    def test_exhaustion_before_budget(self):
        g = self._path_graph(4)
        result = bfs_discover(g, {_cui(1)}, 10)
        assert result.reached == {_cui(i) for i in range(1, 5)}
        assert result.depth_used == 3

    def test_seeds_absent_from_graph_stay_isolated(self):
        g = self._path_graph()
        result = bfs_discover(g, {"C9999999"}, 5)
        assert result.reached == {"C9999999"}

    def test_monotone_in_depth(self):
        rng = random.Random(7)
        g, _ = _random_graph(rng, 30, 45)
        seeds = {_cui(1), _cui(17)}
        previous = frozenset()
        for depth in range(8):
            reached = bfs_discover(g, seeds, depth).reached
            assert previous <= reached
            previous = reached

    def test_oracle_100_random_graphs(self):
        """bfs_discover equals brute-force shortest-path filtering."""
        rng = random.Random(20240811)
        for trial in range(100):
            n = rng.randint(2, 50)
            m = rng.randint(0, min(2 * n, n * (n - 1) // 2))
            g, nxg = _random_graph(rng, n, m)
            seeds = set(rng.sample(sorted(g.nodes), rng.randint(1, min(3, n))))
            depth = rng.randint(0, 10)
            got = bfs_discover(g, seeds, depth).reached
            lengths = nx.multi_source_dijkstra_path_length(nxg, seeds, weight=None)
            expected = {node for node, dist in lengths.items() if dist <= depth}
            assert got == expected, f"trial {trial}: depth {depth}"


def _random_graph(rng: random.Random, n: int, m: int):
    cuis = [_cui(i) for i in range(1, n + 1)]
    edges = set()
    while len(edges) < m:
        u, v = rng.sample(cuis, 2)
        edges.add((min(u, v), max(u, v)))
    rels = [(u, rng.choice(["PAR", "SY", "RB"]), v) for u, v in sorted(edges)]
    g = build_graph(_mini_catalog(cuis, rels))
    nxg = nx.Graph()
    nxg.add_nodes_from(cuis)
    nxg.add_edges_from(sorted(edges))
    return g, nxg


class TestDiscoverCandidateReports:
    def _index(self):
        return index_from_cui_sets(
            [
                make_cui_set("r1", {_cui(1): "present"}),
                make_cui_set("r2", {_cui(3): "present"}),
            ]
        )

    def test_overlap_prefilter(self):
        g = build_graph(_mini_catalog([_cui(1), _cui(2)], [(_cui(1), "PAR", _cui(2))]))
        result = bfs_discover(g, {_cui(1)}, 1)
        assert discover_candidate_reports(result, self._index()) == {"r1"}

    def test_disabled_returns_all(self):
        assert discover_candidate_reports(None, self._index()) == {"r1", "r2"}

    def test_empty_reached(self):
        g = build_graph(_mini_catalog([_cui(9)], []))
        result = bfs_discover(g, set(), 3)
        assert discover_candidate_reports(result, self._index()) == frozenset()


class TestSynonymExpand:
    def _graph(self, kinds):
        """kinds: list of (u, v, rel) with rel in {SY, PAR}."""
        cuis = sorted({u for u, _, _ in kinds} | {v for _, v, _ in kinds})
        return build_graph(_mini_catalog(cuis, [(u, rel, v) for u, v, rel in kinds]))

    def test_single_hop_synonym_added(self):
        g = self._graph([(_cui(1), _cui(2), "SY")])
        target = make_cui_set("t", {_cui(1): "present"})
        candidate = make_cui_set("c", {_cui(2): "present"})
        expanded = synonym_expand(target, candidate, g)
        assert set(expanded.elements) == {_cui(1), _cui(2)}
        assert expanded.elements[_cui(2)].value == "present"
        # Original unmodified.
        assert set(target.elements) == {_cui(1)}

    def test_hierarchy_edge_does_not_expand(self):
        g = self._graph([(_cui(1), _cui(2), "PAR")])
        target = make_cui_set("t", {_cui(1): "present"})
        candidate = make_cui_set("c", {_cui(2): "present"})
        assert synonym_expand(target, candidate, g).elements == target.elements

    def test_multi_hop_synonym_path(self):
        """X-Z-Y all synonym edges: Y reachable from X, so Y is added.

        Brute-force check: enumerate all simple paths in the fixture graph
        and require one consisting of synonym edges only.
        """
        g = self._graph([(_cui(1), _cui(3), "SY"), (_cui(3), _cui(2), "SY")])
        target = make_cui_set("t", {_cui(1): "uncertain"})
        candidate = make_cui_set("c", {_cui(2): "present"})
        nxg = nx.Graph()
        for u, nbrs in g.adjacency.items():
            for v, kind in nbrs.items():
                if kind is EdgeKind.SYNONYM:
                    nxg.add_edge(u, v)
        assert nx.has_path(nxg, _cui(1), _cui(2))
        expanded = synonym_expand(target, candidate, g)
        assert _cui(2) in expanded.elements
        # The added CUI inherits the reaching target CUI's assertion.
        assert expanded.elements[_cui(2)].value == "uncertain"

    def test_never_removes_elements(self):
        rng = random.Random(99)
        for _ in range(50):
            g, _ = _random_graph(rng, 10, 12)
            target = make_cui_set("t", {_cui(rng.randint(1, 10)): "present"})
            candidate = make_cui_set("c", {_cui(rng.randint(1, 10)): "absent"})
            expanded = synonym_expand(target, candidate, g)
            assert set(target.elements) <= set(expanded.elements)

    def test_idempotent_per_pair(self):
        g = self._graph([(_cui(1), _cui(3), "SY"), (_cui(3), _cui(2), "SY")])
        target = make_cui_set("t", {_cui(1): "present"})
        candidate = make_cui_set("c", {_cui(2): "present", _cui(3): "absent"})
        once = synonym_expand(target, candidate, g)
        twice = synonym_expand(once, candidate, g)
        assert once.elements == twice.elements

    def test_transitive_off_limits_to_one_hop(self):
        g = self._graph([(_cui(1), _cui(3), "SY"), (_cui(3), _cui(2), "SY")])
        target = make_cui_set("t", {_cui(1): "present"})
        candidate = make_cui_set("c", {_cui(2): "present"})
        expanded = synonym_expand(target, candidate, g, transitive=False)
        assert _cui(2) not in expanded.elements


class TestGraphSnapshot:
    def test_round_trip(self, concept_graph, tmp_path):
        path = tmp_path / "graph.json"
        save_graph(concept_graph, path)
        reloaded = load_graph(path)
        assert reloaded.nodes == concept_graph.nodes
        assert reloaded.adjacency == concept_graph.adjacency
        assert reloaded.synonym_rels == concept_graph.synonym_rels

    def test_stats_shape(self, concept_graph):
        stats = concept_graph.stats()
        assert stats["nodes"] == len(concept_graph.nodes)
        assert stats["edges"] == concept_graph.edge_count()
        assert stats["connected_components"] >= 1


def test_bfs_negative_depth_rejected(concept_graph):
    with pytest.raises(ValueError):
        bfs_discover(concept_graph, set(), -1)
