"""Graph container, builders, serialization, coverings, and monodromy."""

import pytest

from heckelab.rings import field_ctx, make_point
from heckelab.bundles import DivisorSpec, deep_threshold, fiber_count_formula
from heckelab.graph import (
    Edge,
    HeckeGraph,
    build_graph,
    check_covering,
    export,
    forgetful_map,
    monodromy,
    parse,
    split_components,
)


def mk(F, *entries):
    return DivisorSpec.make([(make_point(F, p), d) for p, d in entries])


@pytest.fixture(scope="module")
def worked_example():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1))
    return build_graph(2, D, x, 5, "bruteforce")


def test_builders_agree(worked_example):
    G = worked_example
    Gh = build_graph(G.q, G.D, G.x, G.n_max, "hybrid")
    assert (G.vertices, G.edges, G.boundary) == (Gh.vertices, Gh.edges, Gh.boundary)


def test_unramified_rule_builder():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = DivisorSpec(())
    Gb = build_graph(2, D, x, 5, "bruteforce")
    Gr = build_graph(2, D, x, 5, "cusp_rule")
    assert (Gb.vertices, Gb.edges, Gb.boundary) == (Gr.vertices, Gr.edges, Gr.boundary)
    # the half line: one vertex per gap
    assert len(Gb.vertex_ids()) == 6


def test_json_roundtrip_is_exact(worked_example):
    G = worked_example
    data = export(G, "json")
    G2 = parse(data)
    assert G2 == G
    assert export(G2, "json") == data


def test_dot_export_deterministic(worked_example):
    d1 = export(worked_example, "dot")
    d2 = export(worked_example, "dot")
    assert d1 == d2
    text = d1.decode()
    assert "rank=same" in text and "digraph" in text


def test_no_dangling_ids_and_silent_boundary(worked_example):
    G = worked_example
    nv = len(G.vertices)
    for e in G.edges:
        assert 0 <= e.src < nv and 0 <= e.dst < nv
    for b in G.boundary:
        assert not G.out_edges(b)
        assert G.vertices[b].gap > G.n_max or all(e.src != b for e in G.edges)


def test_out_degree_law_on_graph(worked_example):
    G = worked_example
    for v in G.vertex_ids():
        assert G.out_degree(v) == 2


@pytest.fixture(scope="module")
def covering_pair():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1), ((1, 1), 1))
    D2 = mk(F, ((0, 1), 1))
    n_max = deep_threshold(D, x) + 6
    G = build_graph(2, D, x, n_max, "hybrid")
    base = build_graph(2, D2, x, n_max, "hybrid")
    return G, base, D, D2


def test_covering_three_clauses_and_degree(covering_pair):
    G, base, D, D2 = covering_pair
    w = check_covering(G, base)
    assert w.ok, w.failures[:3]
    assert w.degree == fiber_count_formula(2, mk(G.F, ((1, 1), 1)), False) == 3


def test_covering_detects_corruption(covering_pair):
    G, base, D, D2 = covering_pair
    thr = deep_threshold(D, G.x)
    edges = list(G.edges)
    e0 = next(e for e in edges if G.vertices[e.src].gap == thr + 3)
    edges[edges.index(e0)] = Edge(e0.src, e0.dst, e0.mult + 1, e0.tag)
    bad = HeckeGraph(G.q, G.D, G.x, G.n_max, G.builder, G.vertices, edges, G.boundary)
    w = check_covering(bad, base)
    assert not w.ok and w.failures


def test_identity_covering(covering_pair):
    _, base, _, _ = covering_pair
    w = check_covering(base, base, {i: i for i in range(len(base.vertices))})
    assert w.ok and w.degree == 1


def test_splitting_into_components(covering_pair):
    G, base, D, D2 = covering_pair
    rep = split_components(G, mk(G.F, ((1, 1), 1)), D2)
    assert rep.ok, rep.failures[:3]
    assert rep.expected == 3


def test_splitting_unramified_base():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((1, 1), 1))
    G = build_graph(2, D, x, deep_threshold(D, x) + 6, "hybrid")
    rep = split_components(G, D, DivisorSpec(()))
    assert rep.ok and rep.expected == 3


def test_forgetful_map_is_total_on_cusp(covering_pair):
    G, base, D, D2 = covering_pair
    p = forgetful_map(G, base)
    thr = deep_threshold(D, G.x)
    for vid in G.vertex_ids(thr + 1, G.n_max):
        assert vid in p
        assert base.vertices[p[vid]].gap == G.vertices[vid].gap


def test_trivial_monodromy_walks(covering_pair):
    G, base, D, D2 = covering_pair
    thr = deep_threshold(D, G.x)
    n = thr + 2
    start = next(
        i for i in base.vertex_ids(n, n) if base.vertices[i].layer == "tower"
    )
    rec = monodromy(G, (start, []), base)
    assert rec.closed and rec.t == (1,)
    up = next(
        i for i in base.vertex_ids(n + 1, n + 1) if base.vertices[i].layer == "tower"
    )
    rec2 = monodromy(G, (start, [(1, up), (-1, start)]), base)
    assert rec2.closed and rec2.t == (1,)


def test_build_rejects_bad_config():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1))
    with pytest.raises(ValueError):
        build_graph(2, D, x, 4, "no_such_builder")
    with pytest.raises(ValueError):
        # the pure cusp rule cannot cover the nucleus when deep threshold >= 0
        build_graph(2, D, x, 4, "cusp_rule")
