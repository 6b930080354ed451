"""The directed multigraph of a Hecke operator, its builders and verifiers.

A graph window holds every vertex of gap 0..n_max together with all outgoing
edge bundles; edges leaving the window end in explicit boundary vertices
whose own out-edges are not computed.  Vertex ids are deterministic (sorted
by gap, then canonical level key), so exports are byte-for-byte reproducible.

Verifiers cover the structural theorems: the forgetful map to a smaller
level is a covering of deep-cusp subgraphs, the deep cusp splits into
disjoint components of a predicted count, and lift discrepancies over the
x-ramified base lie in the torus T(k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .bundles import (
    DivisorSpec,
    Vertex,
    bundle_context,
    deep_threshold,
    enumerate_vertices,
    fiber_count_formula,
    is_tower_vertex,
    level_ring,
    p1_position,
    vertex_key,
)
from .edges import EdgeBundle, neighbors_bruteforce, neighbors_cusp_rule
from .rings import (
    FieldCtx,
    LevelRing,
    Mat2,
    Point,
    Poly,
    field_ctx,
    make_point,
    mat_key,
    mat_mul,
    parse_poly,
    pgl2_normalize,
    pnorm,
    poly_str,
)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    mult: int
    tag: str


class HeckeGraph:
    """An immutable truncated Hecke graph with deterministic vertex ids."""

    def __init__(
        self,
        q: int,
        D: DivisorSpec,
        x: Point,
        n_max: int,
        builder: str,
        vertices: Sequence[Vertex],
        edges: Sequence[Edge],
        boundary: Sequence[int],
    ) -> None:
        self.q = q
        self.F = field_ctx(q)
        self.D = D
        self.x = x
        self.n_max = n_max
        self.builder = builder
        self.L = level_ring(self.F, D)
        self.vertices: Tuple[Vertex, ...] = tuple(vertices)
        self.edges: Tuple[Edge, ...] = tuple(edges)
        self.boundary: Tuple[int, ...] = tuple(boundary)
        self._boundary_set = set(self.boundary)
        self.ids: Dict[Tuple, int] = {
            vertex_key(self.L, v): i for i, v in enumerate(self.vertices)
        }
        if len(self.ids) != len(self.vertices):
            raise ValueError("duplicate canonical vertices")
        self._out: Dict[int, List[Edge]] = {}
        self._in: Dict[int, List[Edge]] = {}
        for e in self.edges:
            if not (0 <= e.src < len(self.vertices) and 0 <= e.dst < len(self.vertices)):
                raise ValueError("dangling edge id")
            self._out.setdefault(e.src, []).append(e)
            self._in.setdefault(e.dst, []).append(e)

    # -- queries -------------------------------------------------------------
    def vertex_id(self, v: Vertex) -> int:
        return self.ids[vertex_key(self.L, v)]

    def out_edges(self, vid: int) -> List[Edge]:
        return self._out.get(vid, [])

    def in_edges(self, vid: int) -> List[Edge]:
        return self._in.get(vid, [])

    def is_boundary(self, vid: int) -> bool:
        return vid in self._boundary_set

    def vertex_ids(self, gap_lo: int = 0, gap_hi: Optional[int] = None) -> List[int]:
        hi = self.n_max if gap_hi is None else gap_hi
        return [
            i
            for i, v in enumerate(self.vertices)
            if gap_lo <= v.gap <= hi and i not in self._boundary_set
        ]

    def out_degree(self, vid: int) -> int:
        return sum(e.mult for e in self.out_edges(vid))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeckeGraph):
            return NotImplemented
        return (
            self.q == other.q
            and self.D == other.D
            and self.x == other.x
            and self.n_max == other.n_max
            and self.builder == other.builder
            and self.vertices == other.vertices
            and [v.layer for v in self.vertices] == [v.layer for v in other.vertices]
            and self.edges == other.edges
            and self.boundary == other.boundary
        )

    def __repr__(self) -> str:
        return (
            f"HeckeGraph(q={self.q}, D={self.D}, x={self.x}, n_max={self.n_max}, "
            f"{len(self.vertices)} vertices, {len(self.edges)} edge bundles)"
        )


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _layer_tag(L: LevelRing, v: Vertex, D: DivisorSpec, x: Point, thr: int) -> str:
    if v.gap <= thr:
        return "nucleus"
    d_x = D.mult(x)
    if d_x >= 1:
        if is_tower_vertex(L, v.level, x, d_x):
            return "tower"
        kind, p = p1_position(L, v.level, x)
        return "cusp:inf" if kind == "inf" else f"cusp:{poly_str(p)}"
    return "cusp"


def _edge_sets_equal(L: LevelRing, a: Sequence[EdgeBundle], b: Sequence[EdgeBundle]) -> bool:
    ka = sorted((vertex_key(L, e.dst), e.mult) for e in a)
    kb = sorted((vertex_key(L, e.dst), e.mult) for e in b)
    return ka == kb


def build_graph(
    q: int, D: DivisorSpec, x: Point, n_max: int, builder: str = "bruteforce"
) -> HeckeGraph:
    """Build the window of the Hecke graph at x with level divisor D.

    Vertices of every gap 0..n_max are included with complete out-edges;
    targets beyond the window are kept as boundary vertices without
    out-edges.  The hybrid builder uses brute force up to one layer above
    the deep-cusp threshold, the symbolic rule above, and cross-checks the
    overlap layer, failing hard on any mismatch.
    """
    if builder not in ("bruteforce", "cusp_rule", "hybrid"):
        raise ValueError(f"unknown builder {builder!r}")
    F = field_ctx(q)
    if x.is_infinity or any(p.is_infinity for p in D.support):
        raise ValueError("graph builds require finite divisor and Hecke points")
    thr = deep_threshold(D, x)
    if builder == "cusp_rule" and thr >= 0:
        raise ValueError(
            "cusp_rule builder requires a nucleus-free window; use hybrid"
        )
    L = level_ring(F, D)
    by_gap = enumerate_vertices(F, D, n_max)
    interior: List[Vertex] = []
    for n in range(n_max + 1):
        interior.extend(sorted(by_gap[n], key=lambda v: vertex_key(L, v)))

    out_bundles: Dict[Tuple, List[EdgeBundle]] = {}
    extra: Dict[Tuple, Vertex] = {}
    for v in interior:
        if builder == "bruteforce":
            ebs = neighbors_bruteforce(F, v, D, x)
        elif builder == "cusp_rule":
            ebs = neighbors_cusp_rule(F, v, D, x)
        else:
            if v.gap <= thr + 1:
                ebs = neighbors_bruteforce(F, v, D, x)
                if v.gap == thr + 1:
                    rule = neighbors_cusp_rule(F, v, D, x)
                    if not _edge_sets_equal(L, ebs, rule):
                        raise RuntimeError(
                            f"builder overlap mismatch at gap {v.gap}, "
                            f"vertex key {vertex_key(L, v)}"
                        )
            else:
                ebs = neighbors_cusp_rule(F, v, D, x)
        expected = q ** x.deg + (1 if D.mult(x) == 0 else 0)
        if sum(e.mult for e in ebs) != expected:
            raise AssertionError(f"out-multiplicity law violated at {v}")
        out_bundles[vertex_key(L, v)] = ebs
        for e in ebs:
            if e.dst.gap > n_max:
                extra.setdefault(vertex_key(L, e.dst), e.dst)

    boundary_vs = sorted(extra.values(), key=lambda v: vertex_key(L, v))
    all_vs = interior + boundary_vs
    tagged = [v.with_layer(_layer_tag(L, v, D, x, thr)) for v in all_vs]
    ids = {vertex_key(L, v): i for i, v in enumerate(all_vs)}
    edges: List[Edge] = []
    for v in interior:
        src = ids[vertex_key(L, v)]
        for e in out_bundles[vertex_key(L, v)]:
            tag = "+".join(sorted(set(e.tags)))
            edges.append(Edge(src, ids[vertex_key(L, e.dst)], e.mult, tag))
    edges.sort(key=lambda e: (e.src, e.dst, e.tag))
    boundary = [ids[vertex_key(L, v)] for v in boundary_vs]
    return HeckeGraph(q, D, x, n_max, builder, tagged, edges, boundary)


# ---------------------------------------------------------------------------
# Forgetful maps
# ---------------------------------------------------------------------------


def restrict_level(F: FieldCtx, D: DivisorSpec, D2: DivisorSpec, level: Mat2) -> Mat2:
    """Restrict a level matrix over O_D to O_{D2} (D2 <= D componentwise)."""
    L = level_ring(F, D)
    L2 = level_ring(F, D2)
    index: Dict[Point, int] = {p: i for i, (p, _) in enumerate(L.entries)}
    rows = []
    for i in range(2):
        row = []
        for j in range(2):
            comps = []
            for R2 in L2.rings:
                idx = index.get(R2.point)
                if idx is None:
                    raise ValueError(f"point {R2.point} not in the larger divisor")
                comps.append(R2.reduce(level[i][j][idx]))
            row.append(tuple(comps))
        rows.append(tuple(row))
    return (rows[0], rows[1])


def forgetful_map(G: HeckeGraph, G2: HeckeGraph) -> Dict[int, int]:
    """The vertex map of p_{D,D2} between two windows at the same x."""
    if G.q != G2.q or G.x != G2.x:
        raise ValueError("graphs must share q and x")
    ctx2 = bundle_context(G.F, G2.D)
    out: Dict[int, int] = {}
    for i, v in enumerate(G.vertices):
        if v.gap > G2.n_max:
            continue
        w = ctx2.canonical_vertex(v.gap, restrict_level(G.F, G.D, G2.D, v.level))
        out[i] = G2.vertex_id(w)
    return out


# ---------------------------------------------------------------------------
# Covering verification
# ---------------------------------------------------------------------------


@dataclass
class CoveringWitness:
    ok: bool
    band: Tuple[int, int]
    degree: Optional[int]
    vertex_map: Dict[int, int]
    failures: List[str] = field(default_factory=list)


def check_covering(
    G: HeckeGraph,
    G2: HeckeGraph,
    p: Optional[Dict[int, int]] = None,
) -> CoveringWitness:
    """Verify that the forgetful map is a covering of deep-cusp windows.

    Checks, on the safe band of the common window: surjectivity on vertices,
    the out-edge bijection (edges p(v) -> w match edges v -> p^{-1}(w) with
    multiplicity) and the dual in-edge bijection.
    """
    if p is None:
        p = forgetful_map(G, G2)
    deg_x = G.x.deg
    thr = max(deep_threshold(G.D, G.x), deep_threshold(G2.D, G2.x))
    hi = min(G.n_max, G2.n_max)
    blo, bhi = thr + 1 + deg_x, hi - deg_x
    failures: List[str] = []
    window1 = [i for i in G.vertex_ids(thr + 1, hi)]
    window2 = [i for i in G2.vertex_ids(thr + 1, hi)]
    wset1, wset2 = set(window1), set(window2)

    def out_counts(graph: HeckeGraph, vid: int, wset: Set[int]) -> Dict[int, int]:
        c: Dict[int, int] = {}
        for e in graph.out_edges(vid):
            if e.dst in wset:
                c[e.dst] = c.get(e.dst, 0) + e.mult
        return c

    def in_counts(graph: HeckeGraph, vid: int, wset: Set[int]) -> Dict[int, int]:
        c: Dict[int, int] = {}
        for e in graph.in_edges(vid):
            if e.src in wset:
                c[e.src] = c.get(e.src, 0) + e.mult
        return c

    band2 = [i for i in window2 if blo <= G2.vertices[i].gap <= bhi]
    hit = {p[i] for i in window1 if i in p}
    for w in band2:
        if w not in hit:
            failures.append(f"base vertex {w} not covered")

    fiber_sizes: Set[int] = set()
    fibers: Dict[int, List[int]] = {}
    for i in window1:
        if i in p:
            fibers.setdefault(p[i], []).append(i)
    for w in band2:
        fiber_sizes.add(len(fibers.get(w, [])))

    for v in window1:
        if not (blo <= G.vertices[v].gap <= bhi):
            continue
        pv = p[v]
        base_out = out_counts(G2, pv, wset2)
        lifted: Dict[int, int] = {}
        for dst, m in out_counts(G, v, wset1).items():
            lifted[p[dst]] = lifted.get(p[dst], 0) + m
        if base_out != lifted:
            failures.append(f"out-edge clause fails at vertex {v} over {pv}")
        base_in = in_counts(G2, pv, wset2)
        lifted_in: Dict[int, int] = {}
        for src, m in in_counts(G, v, wset1).items():
            lifted_in[p[src]] = lifted_in.get(p[src], 0) + m
        if base_in != lifted_in:
            failures.append(f"in-edge clause fails at vertex {v} over {pv}")

    degree = fiber_sizes.pop() if len(fiber_sizes) == 1 else None
    if degree is None and band2:
        failures.append("fiber size not constant on the band")
    return CoveringWitness(not failures, (blo, bhi), degree, p, failures)


# ---------------------------------------------------------------------------
# Deep-cusp splitting
# ---------------------------------------------------------------------------


@dataclass
class SplitReport:
    ok: bool
    expected: int
    components: List[List[int]]
    per_base_component: Dict[int, int]
    failures: List[str] = field(default_factory=list)


def _weak_components(ids: Iterable[int], edges: Iterable[Tuple[int, int]]) -> Dict[int, int]:
    parent = {i: i for i in ids}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        if a in parent and b in parent:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return {i: find(i) for i in parent}


def split_components(G: HeckeGraph, D1: DivisorSpec, D2: DivisorSpec) -> SplitReport:
    """Split the deep cusp of G (level D1+D2) over the base graph of D2.

    Computes the weakly-connected components of the deep-cusp window,
    asserts that their count per base component equals
    N = |T(O_{D1})| / |T(k)|^{δ_{D2,0}} * |P^1(O_{D1})| and that each
    component maps isomorphically onto its base component.
    """
    D = G.D
    if DivisorSpec(tuple(sorted(D1.entries + D2.entries, key=lambda e: e[0].sort_key()))) != D:
        raise ValueError("D1 + D2 must equal the divisor of the graph")
    N = fiber_count_formula(G.q, D1, D2.is_zero)
    G2 = build_graph(G.q, D2, G.x, G.n_max, "bruteforce" if G.builder == "bruteforce" else "hybrid")
    p = forgetful_map(G, G2)
    thr = deep_threshold(D, G.x)
    hi = G.n_max
    window = set(G.vertex_ids(thr + 1, hi))
    window2 = set(G2.vertex_ids(thr + 1, hi))
    failures: List[str] = []

    comp = _weak_components(
        window, [(e.src, e.dst) for e in G.edges if e.src in window and e.dst in window]
    )
    comp2 = _weak_components(
        window2, [(e.src, e.dst) for e in G2.edges if e.src in window2 and e.dst in window2]
    )
    groups: Dict[int, List[int]] = {}
    for i, root in comp.items():
        groups.setdefault(root, []).append(i)
    components = [sorted(g) for g in groups.values()]
    components.sort()

    per_base: Dict[int, int] = {}
    deg_x = G.x.deg
    for C in components:
        base_roots = {comp2[p[i]] for i in C}
        if len(base_roots) != 1:
            failures.append(f"component {C[:4]}... maps onto several base components")
            continue
        root = base_roots.pop()
        per_base[root] = per_base.get(root, 0) + 1
        # isomorphism onto the base component: injective on vertices and
        # out-edge multiplicities preserved away from the window boundary
        seen: Dict[int, int] = {}
        for i in C:
            if p[i] in seen:
                failures.append(f"vertices {seen[p[i]]} and {i} collide over {p[i]}")
            seen[p[i]] = i
        base_comp = {i for i, r in comp2.items() if r == root}
        if set(seen) != base_comp:
            failures.append("component does not map onto its base component")
        for i in C:
            if G.vertices[i].gap + deg_x > hi or G.vertices[i].gap - deg_x <= thr:
                continue
            mine = {}
            for e in G.out_edges(i):
                if e.dst in window:
                    mine[p[e.dst]] = mine.get(p[e.dst], 0) + e.mult
            base = {}
            for e in G2.out_edges(p[i]):
                if e.dst in window2:
                    base[e.dst] = base.get(e.dst, 0) + e.mult
            if mine != base:
                failures.append(f"edge multiplicities differ at vertex {i}")
    for root, count in per_base.items():
        if count != N:
            failures.append(
                f"base component {root}: {count} fiber components, expected {N}"
            )
    return SplitReport(not failures, N, components, per_base, failures)


# ---------------------------------------------------------------------------
# Torus monodromy
# ---------------------------------------------------------------------------


@dataclass
class MonodromyRecord:
    start_base: int
    steps: Tuple[Tuple[int, int], ...]
    start_lift: int
    end_lift: int
    t: Poly
    closed: bool


def _torus_twist(G: HeckeGraph, level: Mat2, c: Poly) -> Mat2:
    """Right-multiply the D'-components of a level matrix by diag(c, 1)."""
    rows = []
    for i in range(2):
        row = []
        for j in range(2):
            comps = []
            for idx, R in enumerate(G.L.rings):
                val = level[i][j][idx]
                if R.point != G.x and j == 0:
                    val = R.mul(val, R.reduce(c))
                comps.append(val)
            row.append(tuple(comps))
        rows.append(tuple(row))
    return (rows[0], rows[1])


def _fiber_discrepancy(G: HeckeGraph, a: int, b: int) -> Poly:
    """The t = diag(c,1) in T(k) with canonical(v_a * t|_{D'}) = v_b."""
    ctxD = bundle_context(G.F, G.D)
    va, vb = G.vertices[a], G.vertices[b]
    target = vertex_key(G.L, vb)
    candidates = [1] + [c for c in G.F.nonzero() if c != 1]
    for c in candidates:
        twisted = ctxD.canonical_vertex(va.gap, _torus_twist(G, va.level, (c,)))
        if vertex_key(G.L, twisted) == target:
            return (c,)
    raise AssertionError("lift discrepancy does not lie in T(k)")


class _Lifter:
    """Edge-by-edge walk lifting along the forgetful map to Gamma_{d_x[x]}."""

    def __init__(self, G: HeckeGraph, G_base: Optional[HeckeGraph] = None) -> None:
        d_x = G.D.mult(G.x)
        if d_x < 1:
            raise ValueError("monodromy requires d_x >= 1")
        self.G = G
        D2 = DivisorSpec(((G.x, d_x),))
        if G_base is None:
            G_base = build_graph(G.q, D2, G.x, G.n_max, "hybrid")
        self.base = G_base
        self.p = forgetful_map(G, G_base)
        self.fibers: Dict[int, List[int]] = {}
        for i, w in self.p.items():
            self.fibers.setdefault(w, []).append(i)

    def lift_forward(self, vid: int, w: int) -> int:
        targets = {e.dst for e in self.G.out_edges(vid) if self.p.get(e.dst) == w}
        if len(targets) != 1:
            raise AssertionError(f"forward lift not unique: {sorted(targets)}")
        return targets.pop()

    def lift_backward(self, vid: int, w: int) -> int:
        sources = {e.src for e in self.G.in_edges(vid) if self.p.get(e.src) == w}
        if len(sources) != 1:
            raise AssertionError(f"backward lift not unique: {sorted(sources)}")
        return sources.pop()


def monodromy(
    G: HeckeGraph,
    base_walk: Tuple[int, Sequence[Tuple[int, int]]],
    G_base: Optional[HeckeGraph] = None,
    start_lift: Optional[int] = None,
) -> MonodromyRecord:
    """Lift a closed topological walk in Gamma_{d_x[x]} and extract t in T(k).

    ``base_walk`` is (start vertex id in the base graph, steps); each step is
    (+1, w) for a forward edge to w or (-1, w) for a backward traversal of an
    edge from w.  The walk must return to its start vertex.
    """
    lifter = _Lifter(G, G_base)
    start, steps = base_walk
    cur_base = start
    for sign, w in steps:
        if sign not in (1, -1):
            raise ValueError("walk step sign must be +1 or -1")
        cur_base = w
    if cur_base != start:
        raise ValueError("walk is not closed in the base graph")
    if start_lift is None:
        start_lift = min(lifter.fibers[start])
    vid = start_lift
    for sign, w in steps:
        vid = lifter.lift_forward(vid, w) if sign == 1 else lifter.lift_backward(vid, w)
    t = _fiber_discrepancy(G, start_lift, vid)
    return MonodromyRecord(
        start, tuple((s, w) for s, w in steps), start_lift, vid, t, vid == start_lift
    )


def monodromy_group(G: HeckeGraph, G_base: Optional[HeckeGraph] = None) -> Set[Poly]:
    """All lift discrepancies over fundamental loops of the deep-cusp base.

    Builds a spanning tree of the (undirected) deep-cusp base window, assigns
    a coherent lift to each base vertex, and records the torus discrepancy of
    every non-tree edge.  Every discrepancy is asserted to lie in T(k).
    """
    lifter = _Lifter(G, G_base)
    base = lifter.base
    thr = deep_threshold(G.D, G.x)
    window = set(base.vertex_ids(thr + 1, base.n_max - G.x.deg))
    adj: Dict[int, List[Tuple[int, int]]] = {w: [] for w in window}
    base_edges = []
    for e in base.edges:
        if e.src in window and e.dst in window:
            base_edges.append(e)
            adj[e.src].append((e.dst, 1))
            adj[e.dst].append((e.src, -1))
    lift_of: Dict[int, int] = {}
    tree: Set[Tuple[int, int]] = set()
    ts: Set[Poly] = set()
    for root in sorted(window):
        if root in lift_of:
            continue
        lift_of[root] = min(lifter.fibers[root])
        queue = [root]
        while queue:
            w = queue.pop(0)
            for nb, sign in sorted(adj[w], key=lambda z: z[0]):
                if nb in lift_of:
                    continue
                lift_of[nb] = (
                    lifter.lift_forward(lift_of[w], nb)
                    if sign == 1
                    else lifter.lift_backward(lift_of[w], nb)
                )
                tree.add((min(w, nb), max(w, nb)))
                queue.append(nb)
    for e in base_edges:
        if (min(e.src, e.dst), max(e.src, e.dst)) in tree:
            continue
        got = lifter.lift_forward(lift_of[e.src], e.dst)
        ts.add(_fiber_discrepancy(G, lift_of[e.dst], got))
    return ts


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _level_to_str(L: LevelRing, level: Mat2) -> str:
    parts = []
    for i in range(2):
        for j in range(2):
            comps = [poly_str(p) for p in level[i][j]]
            parts.append("|".join(comps) if comps else "-")
    return ";".join(parts)


def _level_from_str(F: FieldCtx, L: LevelRing, text: str) -> Mat2:
    parts = text.split(";")
    if len(parts) != 4:
        raise ValueError("level string must have four entries")
    entries = []
    for part in parts:
        if part == "-":
            entries.append(())
        else:
            entries.append(tuple(parse_poly(F, c) for c in part.split("|")))
    return ((entries[0], entries[1]), (entries[2], entries[3]))


def export(G: HeckeGraph, format: str = "json") -> bytes:
    """Serialize a graph deterministically as JSON or DOT."""
    if format == "json":
        obj = {
            "meta": {
                "schema": SCHEMA_VERSION,
                "q": G.q,
                "divisor": [{"point": str(p), "mult": d} for p, d in G.D.entries],
                "x": str(G.x),
                "n_max": G.n_max,
                "builder": G.builder,
            },
            "vertices": [
                {"id": i, "gap": v.gap, "level": _level_to_str(G.L, v.level), "layer": v.layer}
                for i, v in enumerate(G.vertices)
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "mult": e.mult, "tag": e.tag}
                for e in G.edges
            ],
            "boundary": list(G.boundary),
        }
        return (json.dumps(obj, separators=(",", ":")) + "\n").encode()
    if format == "dot":
        lines = ["digraph hecke {"]
        for i, v in enumerate(G.vertices):
            lines.append(f'  v{i} [label="{v.gap}:{v.layer}"];')
        by_gap: Dict[int, List[int]] = {}
        for i, v in enumerate(G.vertices):
            by_gap.setdefault(v.gap, []).append(i)
        for gap in sorted(by_gap):
            row = "; ".join(f"v{i}" for i in by_gap[gap])
            lines.append(f"  {{ rank=same; {row}; }}")
        for e in G.edges:
            lines.append(f'  v{e.src} -> v{e.dst} [label="{e.mult}"];')
        lines.append("}")
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown format {format!r}")


def parse(data: bytes) -> HeckeGraph:
    """Reconstruct a graph from its JSON export (round-trip exact)."""
    obj = json.loads(data.decode())
    meta = obj["meta"]
    if meta["schema"] != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {meta['schema']}")
    F = field_ctx(meta["q"])
    entries = tuple(
        (make_point(F, parse_poly(F, d["point"])), d["mult"]) for d in meta["divisor"]
    )
    D = DivisorSpec(entries)
    x = make_point(F, parse_poly(F, meta["x"]))
    L = level_ring(F, D)
    vertices = [
        Vertex(v["gap"], _level_from_str(F, L, v["level"]), v["layer"])
        for v in obj["vertices"]
    ]
    edges = [Edge(e["src"], e["dst"], e["mult"], e["tag"]) for e in obj["edges"]]
    return HeckeGraph(
        meta["q"], D, x, meta["n_max"], meta["builder"], vertices, edges, obj["boundary"]
    )


# ---------------------------------------------------------------------------
# Position/torus labels for the rank-one ramified configuration
# ---------------------------------------------------------------------------


def x_standard_label(G: HeckeGraph, vid: int) -> Tuple[str, Tuple[int, ...]]:
    """The (position, y-class) label of a vertex of a d_x=1, deg x=1 graph.

    The level matrix is standardized at x by a unique automorphism-image
    element [[1, w],[0, eps]] (up to the stabilizer of the x-form, which
    acts on the y-component by right U(k)); the label is the x-position
    together with the key of the y-component modulo scalars and right U(k).
    Requires D = [x] + [y] with deg x = deg y = 1 and a deep-cusp vertex.
    """
    F = G.F
    D = G.D
    if D.mult(G.x) != 1 or G.x.deg != 1 or len(D.entries) != 2 or D.deg != 2:
        raise ValueError("labels require D = [x] + [y] with deg x = deg y = 1")
    ix = next(i for i, (p, _) in enumerate(D.entries) if p == G.x)
    iy = 1 - ix
    v = G.vertices[vid]
    if v.gap <= deep_threshold(D, G.x):
        raise ValueError("labels are defined on deep-cusp vertices only")
    Rx, Ry = G.L.rings[ix], G.L.rings[iy]
    a = ((v.level[0][0][ix], v.level[0][1][ix]), (v.level[1][0][ix], v.level[1][1][ix]))
    m = ((v.level[0][0][iy], v.level[0][1][iy]), (v.level[1][0][iy], v.level[1][1][iy]))
    kind, pos = p1_position(G.L, v.level, G.x)
    if kind == "inf":
        # a = [[0, b],[c, d]] standardizes to [[0,1],[1,0]] with eps = c/b
        b, c = a[0][1], a[1][0]
        eps = Rx.mul(c, Rx.inv(b))
        label = "inf"
    else:
        # a = [[a11, b],[c, d]] standardizes to [[1,0],[p,1]], eps = a11^2/det
        a11, b, c, d = a[0][0], a[0][1], a[1][0], a[1][1]
        det = Rx.sub(Rx.mul(a11, d), Rx.mul(b, c))
        eps = Rx.mul(Rx.mul(a11, a11), Rx.inv(det))
        label = poly_str(pos)
    g = (((1,), Ry.zero), (Ry.zero, eps))
    m_std = mat_mul(Ry, m, g)
    return label, _u_class_key(G, iy, m_std)


def _u_class_key(G: HeckeGraph, iy: int, m: Tuple) -> Tuple[int, ...]:
    """Canonical key of a y-level modulo scalars and right U(k)."""
    Ry = G.L.rings[iy]
    Ly = level_ring(G.F, DivisorSpec(((Ry.point, Ry.d),)))
    best = None
    for w in Ry.elements():
        u = (((1,), w), (Ry.zero, (1,)))
        prod = mat_mul(Ry, m, u)
        wrapped = (
            ((prod[0][0],), (prod[0][1],)),
            ((prod[1][0],), (prod[1][1],)),
        )
        k = mat_key(Ly, pgl2_normalize(Ly, wrapped))
        if best is None or k < best:
            best = k
    return best


def check_type2_rule(G: HeckeGraph) -> List[str]:
    """Verify the transport rule (inf, a) -> (c, a*t_{-c^2}) edge-for-edge.

    Checks every deep-cusp tower vertex of a d_x = 1, deg x = deg y = 1
    window: the gap+1 targets at finite positions c carry the y-class of the
    source multiplied by diag(-c^2, 1), and the tower target keeps the class.
    """
    F = G.F
    thr = deep_threshold(G.D, G.x)
    failures: List[str] = []
    ix = next(i for i, (p, _) in enumerate(G.D.entries) if p == G.x)
    iy = 1 - ix
    Ry = G.L.rings[iy]
    for vid in G.vertex_ids(thr + 2, G.n_max - 1):
        v = G.vertices[vid]
        if v.layer != "tower":
            continue
        label, acls = x_standard_label(G, vid)
        for e in G.out_edges(vid):
            tgt_label, bcls = x_standard_label(G, e.dst)
            if tgt_label == "inf":
                if bcls != acls:
                    failures.append(f"Type I at {vid}: y-class changed")
                continue
            c = parse_poly(F, tgt_label)
            cval = c[0] if c else 0
            s = F.neg(F.mul(cval, cval))
            # recompute a * t_{-c^2} within the source's standard frame
            va = G.vertices[vid]
            m = (
                (va.level[0][0][iy], va.level[0][1][iy]),
                (va.level[1][0][iy], va.level[1][1][iy]),
            )
            b, cc, d = (
                va.level[0][1][ix],
                va.level[1][0][ix],
                va.level[1][1][ix],
            )
            Rx = G.L.rings[ix]
            eps = Rx.mul(cc, Rx.inv(b))
            g = (((1,), Ry.zero), (Ry.zero, eps))
            m_std = mat_mul(Ry, m, g)
            t0 = (s,)
            twisted = ((Ry.mul(m_std[0][0], t0), m_std[0][1]),
                       (Ry.mul(m_std[1][0], t0), m_std[1][1]))
            if _u_class_key(G, iy, twisted) != bcls:
                failures.append(f"Type II at {vid} -> {e.dst}: t_(-c^2) rule fails")
    return failures
