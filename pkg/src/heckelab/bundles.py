"""Rank-2 bundles O(a)+O(b) on P^1 with level structure along a divisor.

Everything reduces to finite F_q-linear algebra on polynomial sections with
degree bounds:

* ``splitting_type``     -- splitting type of a subsheaf cut out by lattice
                            conditions, from the dimension profile of its
                            twisted global sections.
* ``aut_image``          -- the image of the bundle automorphism group in
                            PGL_2(O_{D1}), by honest section evaluation below
                            the cusp threshold and in closed form above it.
* ``canonical_vertex``   -- lexicographically least orbit representative of a
                            level structure under the automorphism image.
* ``enumerate_vertices`` -- all vertices (gap, level class) up to a gap bound.

A PGL_2 bundle class on P^1 is O(n)+O with splitting gap n >= 0.  Level
matrices are stored with rows indexed by trivialization coordinates and
columns by the bundle summands O(n), O; the automorphism image then acts by
right multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .rings import (
    FieldCtx,
    JetRing,
    LevelRing,
    Mat2,
    Point,
    Poly,
    SubgroupSpec,
    check_budget,
    enumerate_group,
    fq_nullspace,
    fq_rank,
    fq_rref,
    group_order,
    mat2,
    mat_is_invertible,
    mat_key,
    mat_mul,
    pgl2_normalize,
    pmod,
    pnorm,
    ppow,
)

# ---------------------------------------------------------------------------
# Divisors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivisorSpec:
    """An effective divisor sum d_y [y] with pairwise distinct points."""

    entries: Tuple[Tuple[Point, int], ...]

    def __post_init__(self) -> None:
        pts = [p for p, _ in self.entries]
        if len(set(pts)) != len(pts):
            raise ValueError("divisor points must be pairwise distinct")
        if any(d < 1 for _, d in self.entries):
            raise ValueError("divisor multiplicities must be >= 1")
        object.__setattr__(
            self, "entries", tuple(sorted(self.entries, key=lambda e: e[0].sort_key()))
        )

    @staticmethod
    def make(entries: Iterable[Tuple[Point, int]]) -> "DivisorSpec":
        return DivisorSpec(tuple(entries))

    @property
    def is_zero(self) -> bool:
        return not self.entries

    @property
    def deg(self) -> int:
        return sum(d * p.deg for p, d in self.entries)

    @property
    def deg_red(self) -> int:
        return sum(p.deg for p, _ in self.entries)

    @property
    def support(self) -> Tuple[Point, ...]:
        return tuple(p for p, _ in self.entries)

    def mult(self, point: Point) -> int:
        for p, d in self.entries:
            if p == point:
                return d
        return 0

    def without(self, point: Point) -> "DivisorSpec":
        return DivisorSpec(tuple((p, d) for p, d in self.entries if p != point))

    def only(self, point: Point) -> "DivisorSpec":
        return DivisorSpec(tuple((p, d) for p, d in self.entries if p == point))

    def split_at(self, x: Point) -> Tuple["DivisorSpec", "DivisorSpec"]:
        """(D1, D2) with D2 the part supported at x and D1 the rest."""
        return self.without(x), self.only(x)

    def __str__(self) -> str:
        if not self.entries:
            return "0"
        return "+".join(f"{d}*[{p}]" for p, d in self.entries)


def cusp_threshold(D: DivisorSpec) -> int:
    """Gaps strictly above this bound are in the D-cusp (genus 0)."""
    return D.deg - 2


def deep_threshold(D: DivisorSpec, x: Point) -> int:
    """Gaps strictly above this bound are in the deep (D, x) cusp."""
    return D.deg - 2 + x.deg


def level_ring(F: FieldCtx, D: DivisorSpec) -> LevelRing:
    return LevelRing(F, D.entries)


def fiber_count_formula(q: int, D1: DivisorSpec, D2_is_zero: bool) -> int:
    """Size of the fiber of the forgetful map p_{D,D2} over a deep-cusp vertex."""
    num = q ** (2 * (D1.deg - D1.deg_red))
    for y in D1.support:
        num *= q ** (2 * y.deg) - 1
    den = (q - 1) if D2_is_zero else 1
    if num % den:
        raise ArithmeticError("fiber count formula did not evaluate to an integer")
    return num // den


# ---------------------------------------------------------------------------
# Section spaces of modified bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeCondition:
    """A sublattice of O_y^2 of finite colength, given modulo pi^c.

    ``ring`` is O_y/pi^c and ``generators`` spans the image of the lattice in
    (O_y/pi^c)^2 as a module; pi^c O_y^2 is implicitly contained.
    """

    ring: JetRing
    generators: Tuple[Tuple[Poly, Poly], ...]


class SectionProblem:
    """Global sections of O(a)+O(b) twisted by m, subject to lattice conditions.

    Sections of the m-twist are pairs (f, g) of polynomials with
    deg f <= a+m, deg g <= b+m; at a finite point y the value in
    (O_y/pi^c)^2 is (f, g) reduced mod p_y^c, and at infinity it is the pair
    of reversed-coefficient expansions in s = 1/t.
    """

    def __init__(self, F: FieldCtx, a: int, b: int, conditions: Sequence[LatticeCondition]) -> None:
        if a < b:
            raise ValueError(f"expected a >= b, got ({a}, {b})")
        self.F = F
        self.a = a
        self.b = b
        self.conditions = tuple(conditions)
        self._annihilators: List[Tuple[JetRing, List[List[int]]]] = []
        self.colength = 0
        for cond in self.conditions:
            R = cond.ring
            L = R.coeff_len
            span_rows = []
            for u, v in cond.generators:
                for i in range(L):
                    mono = R.reduce((0,) * i + (1,))
                    w0, w1 = R.mul(mono, u), R.mul(mono, v)
                    span_rows.append(list(R.key(w0)) + list(R.key(w1)))
            rank = fq_rank(F, span_rows, 2 * L)
            self.colength += 2 * L - rank
            self._annihilators.append((R, fq_nullspace(F, span_rows, 2 * L)))

    # -- coefficient layout: f coefficients, then g coefficients ------------
    def _sizes(self, m: int) -> Tuple[int, int]:
        return max(self.a + m + 1, 0), max(self.b + m + 1, 0)

    def _value_columns(self, R: JetRing, m: int) -> List[List[int]]:
        """Per unknown coefficient, the value vector in (O_y/pi^c)^2."""
        nf, ng = self._sizes(m)
        L = R.coeff_len
        cols = []
        if R.point.is_infinity:
            # coefficient t^j of f contributes s^{deg-j} to the expansion
            for j in range(nf):
                e = self.a + m - j
                vec = [0] * (2 * L)
                if e < L:
                    vec[e] = 1
                cols.append(vec)
            for j in range(ng):
                e = self.b + m - j
                vec = [0] * (2 * L)
                if e < L:
                    vec[L + e] = 1
                cols.append(vec)
        else:
            for j in range(nf):
                red = R.reduce((0,) * j + (1,))
                cols.append(list(R.key(red)) + [0] * L)
            for j in range(ng):
                red = R.reduce((0,) * j + (1,))
                cols.append([0] * L + list(R.key(red)))
        return cols

    def constraint_rows(self, m: int) -> List[List[int]]:
        """Linear constraints on the coefficient vector of a section of E(m)."""
        nf, ng = self._sizes(m)
        n = nf + ng
        rows: List[List[int]] = []
        for R, annihilator in self._annihilators:
            if not annihilator:
                continue
            cols = self._value_columns(R, m)
            for z in annihilator:
                row = [0] * n
                for j, col in enumerate(cols):
                    acc = 0
                    for zv, cv in zip(z, col):
                        if zv and cv:
                            acc = self.F.add(acc, self.F.mul(zv, cv))
                    row[j] = acc
                rows.append(row)
        return rows

    def h0(self, m: int) -> int:
        nf, ng = self._sizes(m)
        n = nf + ng
        if n == 0:
            return 0
        return n - fq_rank(self.F, self.constraint_rows(m), n)

    def basis(self, m: int) -> List[Tuple[Poly, Poly]]:
        nf, ng = self._sizes(m)
        n = nf + ng
        if n == 0:
            return []
        vecs = fq_nullspace(self.F, self.constraint_rows(m), n)
        return [self.section_from_vec(v, m) for v in vecs]

    def section_from_vec(self, vec: Sequence[int], m: int) -> Tuple[Poly, Poly]:
        nf, _ = self._sizes(m)
        return pnorm(tuple(vec[:nf])), pnorm(tuple(vec[nf:]))


def splitting_type(
    F: FieldCtx, a: int, b: int, conditions: Sequence[LatticeCondition]
) -> Tuple[int, int]:
    """Splitting type (a', b') of the subsheaf of O(a)+O(b) cut out by the
    lattice conditions, a' >= b'."""
    problem = SectionProblem(F, a, b, conditions)
    total = a + b - problem.colength
    m = -a - 1
    while problem.h0(m) == 0:
        m += 1
        if m > -a + problem.colength + 2:
            raise ArithmeticError("inconsistent colength vs. degree drop")
    a_new = -m
    b_new = total - a_new
    if a_new < b_new:
        raise ArithmeticError("inconsistent colength vs. degree drop")
    for probe in range(m, -b_new + 2):
        expected = max(a_new + probe + 1, 0) + max(b_new + probe + 1, 0)
        if problem.h0(probe) != expected:
            raise ArithmeticError(
                f"inconsistent colength vs. degree drop at twist {probe}: "
                f"h0={problem.h0(probe)} expected={expected}"
            )
    return a_new, b_new


# ---------------------------------------------------------------------------
# Automorphism images and canonical vertices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vertex:
    """A vertex of the graph: splitting gap plus canonical level class."""

    gap: int
    level: Mat2
    layer: str = field(default="", compare=False, hash=False)

    def with_layer(self, layer: str) -> "Vertex":
        return Vertex(self.gap, self.level, layer)


def vertex_key(L: LevelRing, v: Vertex) -> Tuple:
    return (v.gap,) + mat_key(L, v.level)


class BundleContext:
    """Caches per (q, D): the level ring, automorphism images, canonical forms."""

    def __init__(self, F: FieldCtx, D: DivisorSpec) -> None:
        self.F = F
        self.D = D
        self.ring = level_ring(F, D)
        self._aut_cache: Dict[Tuple, List[Mat2]] = {}
        self._canon_cache: Dict[Tuple, Vertex] = {}
        self._orbit_reps: Dict[Tuple, Vertex] = {}

    def _gap_key(self, n: int) -> int:
        if n == 0:
            return 0
        return min(n, max(self.D.deg - 1, 1))

    def aut_image(self, n: int) -> List[Mat2]:
        key = (self._gap_key(n),)
        if key not in self._aut_cache:
            self._aut_cache[key] = aut_image(self.F, n, self.D, DivisorSpec(()))
        return self._aut_cache[key]

    def canonical_vertex(self, n: int, raw: Mat2) -> Vertex:
        L = self.ring
        if not mat_is_invertible(L, raw):
            raise ValueError("level matrix must be invertible over O_D")
        normal = pgl2_normalize(L, raw)
        cache_key = (self._gap_key(n), n, mat_key(L, normal))
        hit = self._canon_cache.get(cache_key)
        if hit is not None:
            return hit
        best = None
        best_key = None
        orbit_keys = []
        for g in self.aut_image(n):
            member = pgl2_normalize(L, mat_mul(L, normal, g))
            k = mat_key(L, member)
            orbit_keys.append(k)
            if best_key is None or k < best_key:
                best, best_key = member, k
        vertex = Vertex(n, best)  # type: ignore[arg-type]
        for k in orbit_keys:
            self._canon_cache[(self._gap_key(n), n, k)] = vertex
        return vertex


_CONTEXTS: Dict[Tuple, BundleContext] = {}


def bundle_context(F: FieldCtx, D: DivisorSpec) -> BundleContext:
    key = (F.q, D.entries)
    if key not in _CONTEXTS:
        _CONTEXTS[key] = BundleContext(F, D)
    return _CONTEXTS[key]


def aut_image(
    F: FieldCtx,
    n: int,
    D1: DivisorSpec,
    D2: DivisorSpec,
    phi2: Optional[Mat2] = None,
) -> List[Mat2]:
    """Image of Aut(O(n)+O, phi_{D2}) in PGL_2(O_{D1}), as an element list.

    Above the cusp threshold the closed forms apply: T(k) x| U(O_{D1}) when
    D2 = 0, and U(O_{D1}) otherwise.  Below it the actual automorphisms are
    evaluated: upper-triangular polynomial matrices [[alpha, s],[0, delta]]
    with deg s <= n (all of PGL_2(k) when n = 0), reduced along D1 and, when
    D2 is nonzero, restricted to the stabilizer of phi2 (identity level if
    not provided).
    """
    if set(D1.support) & set(D2.support):
        raise ValueError("D1 and D2 must have disjoint supports")
    L1 = level_ring(F, D1)
    n_threshold = (D1.deg + D2.deg) - 2
    if n > n_threshold and n > 0:
        tag = "U" if not D2.is_zero else "TkLtimesU"
        return list(enumerate_group(SubgroupSpec(tag, L1)))

    L2 = level_ring(F, D2)
    if phi2 is None:
        phi2 = ((L2.one, L2.zero), (L2.zero, L2.one))

    def stabilizes(g_poly: Mat2) -> bool:
        if D2.is_zero:
            return True
        g2 = tuple(
            tuple(L2.embed_poly(entry) for entry in row) for row in g_poly
        )
        moved = mat_mul(L2, phi2, g2)
        return pgl2_normalize(L2, moved) == pgl2_normalize(L2, phi2)

    out: List[Mat2] = []
    seen = set()

    def push(g_poly: Mat2) -> None:
        if not stabilizes(g_poly):
            return
        g1 = tuple(tuple(L1.embed_poly(entry) for entry in row) for row in g_poly)
        if not mat_is_invertible(L1, g1):
            return
        member = pgl2_normalize(L1, g1)
        k = mat_key(L1, member)
        if k not in seen:
            seen.add(k)
            out.append(member)

    if n == 0:
        check_budget(F.q ** 4, "automorphism enumeration at gap 0")
        for entries in product(F.elements(), repeat=4):
            g = mat2(*((c,) if c else () for c in entries))
            det = F.sub(F.mul(entries[0], entries[3]), F.mul(entries[1], entries[2]))
            if det:
                push(g)
    else:
        check_budget((F.q - 1) * F.q ** (n + 1), f"automorphism enumeration at gap {n}")
        for eps in F.nonzero():
            for tail in product(F.elements(), repeat=n + 1):
                g = mat2((1,), pnorm(tail), (), (eps,) if eps else ())
                push(g)
    return sorted(out, key=lambda m: mat_key(L1, m))


def canonical_vertex(F: FieldCtx, n: int, raw: Mat2, D: DivisorSpec) -> Vertex:
    """Canonical (lex-min) orbit representative; equal iff same orbit."""
    return bundle_context(F, D).canonical_vertex(n, raw)


def enumerate_vertices(F: FieldCtx, D: DivisorSpec, n_max: int) -> Dict[int, List[Vertex]]:
    """All vertices for 0 <= n <= n_max, canonical and sorted per gap."""
    ctx = bundle_context(F, D)
    L = ctx.ring
    spec = SubgroupSpec("GL2", L)
    check_budget(group_order(spec), f"vertex enumeration over {L!r}")
    per_gapkey: Dict[Tuple, List[Vertex]] = {}
    out: Dict[int, List[Vertex]] = {}
    for n in range(n_max + 1):
        # Orbit classes coincide for all gaps with the same automorphism image.
        cache_key = (ctx._gap_key(n),)
        if cache_key in per_gapkey:
            out[n] = [Vertex(n, v.level) for v in per_gapkey[cache_key]]
            continue
        seen = set()
        reps: List[Vertex] = []
        for m in enumerate_group(spec):
            normal = pgl2_normalize(L, m)
            k = mat_key(L, normal)
            if k in seen:
                continue
            vertex = ctx.canonical_vertex(n, normal)
            # mark the whole orbit as seen
            for g in ctx.aut_image(n):
                member = pgl2_normalize(L, mat_mul(L, normal, g))
                seen.add(mat_key(L, member))
            reps.append(vertex)
        reps = sorted(set(reps), key=lambda v: vertex_key(L, v))
        per_gapkey[cache_key] = reps
        out[n] = reps
    return out


def vertex_count_formula(F: FieldCtx, D: DivisorSpec) -> int:
    """Number of level classes per bundle at cusp gaps (D2 = 0 case)."""
    from .rings import p1_count

    L = level_ring(F, D)
    n = L.unit_count()
    for R in L.rings:
        n *= p1_count(R)
    if L.unit_count() == 0:
        raise AssertionError("unit count cannot vanish")
    total = n // (F.q - 1)
    if n % (F.q - 1):
        raise ArithmeticError("vertex count formula did not evaluate to an integer")
    return total


# ---------------------------------------------------------------------------
# P^1(k_x) positions of level classes (d_x >= 1)
# ---------------------------------------------------------------------------


def p1_position(L: LevelRing, level: Mat2, x: Point) -> Tuple[str, Optional[Poly]]:
    """Position of a level class at a ramification point x.

    The reduction of the matrix mod pi_x is invertible over k_x and its first
    column spans a line, i.e. a point of P^1(k_x): ("inf", None) when the
    (1,1) entry reduces to 0, otherwise ("fin", m21/m11 in k_x).
    """
    idx = next((i for i, R in enumerate(L.rings) if R.point == x), None)
    if idx is None:
        raise ValueError(f"point {x} is not in the divisor of the level ring")
    R = L.rings[idx]
    r11 = R.residue(level[0][0][idx])
    r21 = R.residue(level[1][0][idx])
    if not r11:
        if not r21:
            raise AssertionError("level matrix reduces to a singular matrix")
        return ("inf", None)
    k_x = R.residue_field()
    return ("fin", k_x.mul(r21, k_x.inv(r11)))


def is_tower_vertex(L: LevelRing, level: Mat2, x: Point, d_x: int) -> bool:
    """Whether the class sits on the infinity tower: position inf and the
    (1,1) entry vanishing in O_x/pi^{d_x}."""
    idx = next(i for i, R in enumerate(L.rings) if R.point == x)
    kind, _ = p1_position(L, level, x)
    return kind == "inf" and level[0][0][idx] == ()
