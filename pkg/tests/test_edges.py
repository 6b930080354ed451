"""Edge builders: brute force, cusp rule, degrees, and q-binomials."""

import pytest
from hypothesis import given, settings, strategies as st

from heckelab.rings import field_ctx, make_point
from heckelab.bundles import (
    DivisorSpec,
    deep_threshold,
    enumerate_vertices,
    is_tower_vertex,
    level_ring,
    p1_position,
    vertex_key,
)
from heckelab.edges import (
    coset_reps,
    gaussian_binomial,
    neighbors_bruteforce,
    neighbors_cusp_rule,
    pgln_moves,
    pgln_total_out_degree,
)


def mk(F, *entries):
    return DivisorSpec.make([(make_point(F, p), d) for p, d in entries])


def test_coset_rep_counts():
    F = field_ctx(3)
    x = make_point(F, (0, 1))
    assert len(coset_reps(F, x, 1)) == 3
    assert len(coset_reps(F, x, 0)) == 4
    x2 = make_point(F, (1, 0, 1))
    assert len(coset_reps(F, x2, 1)) == 9


@pytest.mark.parametrize("q", [2, 3])
def test_worked_example_edge_structure(q):
    F = field_ctx(q)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1))
    L = level_ring(F, D)

    def pos(v):
        kind, p = p1_position(L, v.level, x)
        if kind == "inf":
            return "inf"
        return "0" if not p else "c"

    verts = enumerate_vertices(F, D, 4)
    for n in range(5):
        for v in verts[n]:
            edges = neighbors_bruteforce(F, v, D, x)
            assert sum(e.mult for e in edges) == q
            if n == 0:
                # c_0 -> one edge to each c_{1,phi}, phi != 0
                assert all(e.dst.gap == 1 and e.mult == 1 for e in edges)
                assert sorted(pos(e.dst) for e in edges) == sorted(
                    ["inf"] + ["c"] * (q - 1)
                )
            elif is_tower_vertex(L, v.level, x, 1):
                # c_{n,inf} -> c_{n+1,inf} and each c_{n+1,c}, mult 1
                assert all(e.dst.gap == n + 1 and e.mult == 1 for e in edges)
                assert sorted(pos(e.dst) for e in edges) == sorted(
                    ["inf"] + ["c"] * (q - 1)
                )
            else:
                # c_{n,phi != inf} -> c_{n-1,0} with multiplicity q
                assert len(edges) == 1 and edges[0].mult == q
                dst = edges[0].dst
                assert dst.gap == n - 1
                assert dst.gap == 0 or pos(dst) == "0"


@pytest.mark.parametrize(
    "q,entries,x_poly,n_max",
    [
        (2, [], (0, 1), 4),
        (2, [((1, 1), 1)], (0, 1), 4),
        (2, [((0, 1), 1), ((1, 1), 1)], (0, 1), 5),
        (2, [((0, 1), 2)], (0, 1), 5),
        (2, [((1, 1, 1), 1)], (1, 1, 1), 6),
        (3, [((0, 1), 1)], (0, 1), 4),
    ],
)
def test_out_degree_law_and_cusp_rule(q, entries, x_poly, n_max):
    F = field_ctx(q)
    x = make_point(F, x_poly)
    D = mk(F, *entries)
    L = level_ring(F, D)
    d_x = D.mult(x)
    expected = q ** x.deg + (1 if d_x == 0 else 0)
    thr = deep_threshold(D, x)
    verts = enumerate_vertices(F, D, n_max)
    for n in range(n_max + 1):
        for v in verts[n]:
            brute = neighbors_bruteforce(F, v, D, x)
            assert sum(e.mult for e in brute) == expected
            if n > thr:
                rule = neighbors_cusp_rule(F, v, D, x)
                bk = sorted((vertex_key(L, e.dst), e.mult) for e in brute)
                rk = sorted((vertex_key(L, e.dst), e.mult) for e in rule)
                assert bk == rk


def test_cusp_rule_refuses_shallow_gaps():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1), ((1, 1), 1))
    v = enumerate_vertices(F, D, 1)[1][0]
    with pytest.raises(ValueError):
        neighbors_cusp_rule(F, v, D, x)


@given(
    n=st.integers(2, 6),
    r=st.integers(1, 6),
    q=st.sampled_from([2, 3, 4, 5]),
)
@settings(max_examples=60, deadline=None)
def test_gaussian_binomial_pascal(n, r, q):
    if r > n:
        r = n
    lhs = gaussian_binomial(n, r, q)
    rhs = gaussian_binomial(n - 1, r - 1, q) + q ** r * gaussian_binomial(n - 1, r, q)
    assert lhs == rhs
    assert gaussian_binomial(n, r, q) == gaussian_binomial(n, n - r, q)


@pytest.mark.parametrize("q", [2, 3, 4])
@pytest.mark.parametrize("dx", [1, 2])
def test_pgln_degree_identity(q, dx):
    for n in range(2, 7):
        assert pgln_total_out_degree(q, dx, n) == gaussian_binomial(n, 1, q ** dx)


def test_pgln_moves_shape():
    moves = pgln_moves(3, 1)
    assert moves == [((-1, 0), 2), ((1, -1), 1), ((0, 1), 0)]
