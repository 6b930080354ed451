"""Divisors, section spaces, vertex enumeration, and canonical forms."""

import random

import pytest

from heckelab.rings import field_ctx, make_point, mat_mul
from heckelab.bundles import (
    DivisorSpec,
    bundle_context,
    cusp_threshold,
    deep_threshold,
    enumerate_vertices,
    fiber_count_formula,
    is_tower_vertex,
    level_ring,
    p1_position,
    vertex_count_formula,
)


def mk(F, *entries):
    return DivisorSpec.make([(make_point(F, p), d) for p, d in entries])


def test_divisor_basics():
    F = field_ctx(2)
    D = mk(F, ((0, 1), 2), ((1, 1), 1))
    assert D.deg == 3 and D.deg_red == 2
    assert str(D) in ("2*[t]+1*[t+1]", "1*[t+1]+2*[t]")
    x = make_point(F, (0, 1))
    D1, D2 = D.split_at(x)
    assert D2.deg == 2 and D1.deg == 1
    assert cusp_threshold(D) == 1 and deep_threshold(D, x) == 2


def test_divisor_rejects_duplicates_and_bad_mult():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    with pytest.raises(ValueError):
        DivisorSpec.make([(x, 1), (x, 1)])
    with pytest.raises(ValueError):
        DivisorSpec.make([(x, 0)])


@pytest.mark.parametrize(
    "q,entries",
    [
        (2, [((0, 1), 1)]),
        (2, [((0, 1), 1), ((1, 1), 1)]),
        (2, [((0, 1), 2)]),
        (3, [((0, 1), 1)]),
        (2, [((1, 1, 1), 1)]),
    ],
)
def test_vertex_counts_match_formula(q, entries):
    F = field_ctx(q)
    D = mk(F, *entries)
    verts = enumerate_vertices(F, D, 4)
    want = vertex_count_formula(F, D)
    for n in range(max(cusp_threshold(D) + 1, 1), 5):
        assert len(verts[n]) == want
        keys = {v.level for v in verts[n]}
        assert len(keys) == len(verts[n])


def test_fiber_count_formula_values():
    F2, F3 = field_ctx(2), field_ctx(3)
    assert fiber_count_formula(2, mk(F2, ((1, 1), 1)), False) == 3
    assert fiber_count_formula(2, mk(F2, ((1, 1), 1)), True) == 3
    assert fiber_count_formula(3, mk(F3, ((1, 1), 2)), True) == 36
    assert fiber_count_formula(2, DivisorSpec(()), False) == 1


def test_canonical_vertex_is_orbit_invariant():
    F = field_ctx(2)
    D = mk(F, ((0, 1), 1), ((1, 1), 1))
    L = level_ring(F, D)
    ctx = bundle_context(F, D)
    rng = random.Random(7)
    for n in (2, 3, 4):
        auts = ctx.aut_image(n)
        for v in enumerate_vertices(F, D, n)[n]:
            for _ in range(3):
                g = rng.choice(auts)
                moved = mat_mul(L, v.level, g)
                assert ctx.canonical_vertex(n, moved).level == v.level


def test_p1_position_and_towers():
    F = field_ctx(2)
    x = make_point(F, (0, 1))
    D = mk(F, ((0, 1), 1))
    L = level_ring(F, D)
    verts = enumerate_vertices(F, D, 3)[3]
    kinds = sorted(p1_position(L, v.level, x)[0] for v in verts)
    assert kinds == ["fin", "fin", "inf"]
    towers = [v for v in verts if is_tower_vertex(L, v.level, x, 1)]
    assert len(towers) == 1
    assert p1_position(L, towers[0].level, x)[0] == "inf"
