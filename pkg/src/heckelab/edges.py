"""Outgoing Hecke edges of a vertex: coset reps and level transport.

A Hecke modification at x replaces the bundle E by a subsheaf E' of
colength deg x.  The subsheaves are cut out by lattice conditions at x:

* if d_x >= 1 the level structure singles out one lattice (the kernel of the
  first row of the level matrix mod pi_x) and the q^{deg x} coset reps
  [[1, pi^d C],[0,1]]*Delta enumerate the edges into it;
* if d_x = 0 there are q^{deg x}+1 lattices, one per functional class in
  P^1(k_x), each contributing one edge.

Transport of the level matrix: away from x the new level is a*psi, where psi
is the inclusion E' -> E written in splitting bases; at x it is
Delta^{-1} * [[1, pi^d C],[0,1]] * a * psi computed in O_x/pi^{d+1} followed
by exact division of the first row by pi.

The brute-force builder resplits E' by honest section linear algebra; the
rule-based cusp builder uses the closed-form inclusions valid above the
deep-cusp threshold.  Both canonicalize targets and aggregate multiplicities.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

from .bundles import (
    BundleContext,
    DivisorSpec,
    LatticeCondition,
    SectionProblem,
    Vertex,
    bundle_context,
    deep_threshold,
    vertex_key,
)
from .rings import (
    FieldCtx,
    JetRing,
    LevelRing,
    Mat2,
    Point,
    Poly,
    fq_solve,
    jet_ring,
    mat2,
    mat_det,
    mat_mul,
    pmul,
    pnorm,
    ppow,
    pscale,
    psub,
)

# ---------------------------------------------------------------------------
# Coset representatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CosetRep:
    """One left coset tau*Delta of the Hecke double coset at x.

    ``tau`` is a 2x2 polynomial matrix over O_x and Delta = diag(pi, 1); the
    full representative is tau*Delta.  ``label`` is the parameter: the
    element C of k_x when d_x >= 1, the element c of k_x or "inf" when
    d_x = 0.
    """

    label: object
    tau: Tuple[Tuple[Poly, Poly], Tuple[Poly, Poly]]
    includes_delta: bool

    def full_matrix(self, pi: Poly, F: FieldCtx) -> Tuple[Tuple[Poly, Poly], Tuple[Poly, Poly]]:
        if not self.includes_delta:
            return self.tau
        (a, b), (c, d) = self.tau
        return ((pmul(F, a, pi), b), (pmul(F, c, pi), d))


def coset_reps(F: FieldCtx, x: Point, d_x: int) -> List[CosetRep]:
    """The left coset decomposition of the Hecke double coset at x."""
    if x.is_infinity:
        raise ValueError("Hecke modifications are implemented at finite points only")
    pi: Poly = x.poly  # type: ignore[assignment]
    r = x.deg
    reps: List[CosetRep] = []
    if d_x >= 1:
        pid = ppow(F, pi, d_x)
        for tail in product(F.elements(), repeat=r):
            C = pnorm(tail)
            tau = (((1,), pmul(F, pid, C)), ((), (1,)))
            reps.append(CosetRep(C, tau, True))
    else:
        for tail in product(F.elements(), repeat=r):
            c = pnorm(tail)
            reps.append(CosetRep(c, ((pi, c), ((), (1,))), False))
        reps.append(CosetRep("inf", (((1,), ()), ((), pi)), False))
    return reps


# ---------------------------------------------------------------------------
# Edge bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeBundle:
    """An aggregated directed edge with integer multiplicity."""

    src: Vertex
    dst: Vertex
    mult: int
    tags: Tuple[str, ...]


def _merge(src: Vertex, candidates: Sequence[Tuple[Vertex, str]], L: LevelRing) -> List[EdgeBundle]:
    groups: Dict[Tuple, Tuple[Vertex, List[str]]] = {}
    for target, tag in candidates:
        k = vertex_key(L, target)
        if k in groups:
            groups[k][1].append(tag)
        else:
            groups[k] = (target, [tag])
    out = []
    for k in sorted(groups):
        target, tags = groups[k]
        out.append(EdgeBundle(src, target, len(tags), tuple(sorted(tags))))
    return out


# ---------------------------------------------------------------------------
# Shared transport machinery
# ---------------------------------------------------------------------------


class EdgeContext:
    """Caches for edge computation for a fixed (q, D, x)."""

    def __init__(self, F: FieldCtx, D: DivisorSpec, x: Point) -> None:
        if x.is_infinity or any(p.is_infinity for p in D.support):
            raise ValueError("graph builds require finite divisor and Hecke points")
        self.F = F
        self.D = D
        self.x = x
        self.d_x = D.mult(x)
        self.bctx: BundleContext = bundle_context(F, D)
        self.L = self.bctx.ring
        self.pi: Poly = x.poly  # type: ignore[assignment]
        self.k_x = jet_ring(F, x, 1)
        self.x_index: Optional[int] = None
        for i, R in enumerate(self.L.rings):
            if R.point == x:
                self.x_index = i
        if self.d_x >= 1:
            self.R_plus = jet_ring(F, x, self.d_x + 1)
            self.R_x = self.L.rings[self.x_index]  # type: ignore[index]
        self._resplit_cache: Dict[Tuple, Tuple[int, int, Tuple]] = {}
        self.reps = coset_reps(F, x, self.d_x)

    # -- resplitting ---------------------------------------------------------
    def resplit(self, n: int, u: Tuple[Poly, Poly]) -> Tuple[int, int, Tuple]:
        """Splitting type and inclusion matrix for the lattice ker(u mod pi).

        u = (u1, u2) is a nonzero functional over k_x on the bundle
        coordinates; the subsheaf is the sections with u1*f + u2*g = 0 at x.
        Returns (a', b', psi) with psi the polynomial matrix whose columns
        are the new basis sections (det psi = pi).
        """
        key = (n, self.k_x.key(u[0]), self.k_x.key(u[1]))
        hit = self._resplit_cache.get(key)
        if hit is not None:
            return hit
        F = self.F
        gen = (u[1], self.k_x.neg(u[0]))
        cond = LatticeCondition(self.k_x, (gen,))
        problem = SectionProblem(F, n, 0, [cond])
        total = n - problem.colength
        m = -n - 1
        while problem.h0(m) == 0:
            m += 1
        a_new = -m
        b_new = total - a_new
        basis = problem.basis(-a_new)
        if not basis:
            raise AssertionError("empty section basis at the splitting twist")
        f1, g1 = basis[0]
        # Solve for the second column: lattice conditions plus det = pi.
        nf = max(n + (-b_new) + 1, 0)
        ng = max(0 + (-b_new) + 1, 0)
        ncols = nf + ng
        rows = problem.constraint_rows(-b_new)
        rhs = [0] * len(rows)
        deg_pi = len(self.pi) - 1
        for j in range(deg_pi + 1):
            row = [0] * ncols
            for i in range(nf):  # f2 coefficient i contributes -g1[j-i]
                if 0 <= j - i < len(g1):
                    row[i] = F.neg(g1[j - i])
            for i in range(ng):  # g2 coefficient i contributes f1[j-i]
                if 0 <= j - i < len(f1):
                    row[nf + i] = f1[j - i]
            rows.append(row)
            rhs.append(self.pi[j] if j < len(self.pi) else 0)
        sol = fq_solve(F, rows, rhs, ncols)
        if sol is None:
            raise AssertionError("no second basis section with det = pi")
        f2, g2 = pnorm(tuple(sol[:nf])), pnorm(tuple(sol[nf:]))
        psi = ((f1, f2), (g1, g2))
        det = psub(F, pmul(F, f1, g2), pmul(F, g1, f2))
        if det != self.pi:
            raise AssertionError("resplit determinant is not the uniformizer")
        result = (a_new, b_new, psi)
        self._resplit_cache[key] = result
        return result

    # -- transport -----------------------------------------------------------
    def transport_away(self, level: Mat2, psi: Tuple) -> List[List[Poly]]:
        """New level entries at every point other than x: a * psi reduced."""
        entries = [[None, None], [None, None]]
        for idx, R in enumerate(self.L.rings):
            if idx == self.x_index:
                continue
            psi_red = tuple(tuple(R.reduce(p) for p in row) for row in psi)
            a_red = ((level[0][0][idx], level[0][1][idx]), (level[1][0][idx], level[1][1][idx]))
            b = mat_mul(R, a_red, psi_red)
            for i in range(2):
                for j in range(2):
                    if entries[i][j] is None:
                        entries[i][j] = [None] * self.L.npoints
            for i in range(2):
                for j in range(2):
                    entries[i][j][idx] = b[i][j]
        return entries

    def transport_at_x(self, level: Mat2, psi: Tuple, C: Poly) -> Tuple[Tuple[Poly, Poly], Tuple[Poly, Poly]]:
        """Delta^{-1} * [[1, pi^d C],[0,1]] * a * psi, in O_x/pi^{d_x}."""
        R = self.R_plus
        ix = self.x_index
        tau12 = R.reduce(pmul(self.F, ppow(self.F, self.pi, self.d_x), C))
        tau = ((R.one, tau12), (R.zero, R.one))
        a_lift = (
            (level[0][0][ix], level[0][1][ix]),
            (level[1][0][ix], level[1][1][ix]),
        )
        psi_red = tuple(tuple(R.reduce(p) for p in row) for row in psi)
        m = mat_mul(R, mat_mul(R, tau, a_lift), psi_red)
        b11 = R.div_uniformizer(m[0][0])
        b12 = R.div_uniformizer(m[0][1])
        Rx = self.R_x
        b = (
            (Rx.reduce(b11), Rx.reduce(b12)),
            (Rx.reduce(m[1][0]), Rx.reduce(m[1][1])),
        )
        if not Rx.is_unit(
            Rx.sub(Rx.mul(b[0][0], b[1][1]), Rx.mul(b[0][1], b[1][0]))
        ):
            raise AssertionError("transported level matrix is not invertible")
        return b

    def assemble(self, away: List[List[Poly]], at_x: Optional[Tuple]) -> Mat2:
        entries = []
        for i in range(2):
            row = []
            for j in range(2):
                comps = []
                for idx in range(self.L.npoints):
                    if idx == self.x_index:
                        comps.append(at_x[i][j])  # type: ignore[index]
                    else:
                        comps.append(away[i][j][idx] if away[i][j] is not None else None)
                row.append(tuple(comps))
            entries.append(tuple(row))
        return (entries[0], entries[1])

    def level_row_residues(self, level: Mat2) -> Tuple[Poly, Poly]:
        """First row of the level matrix at x, reduced into k_x."""
        ix = self.x_index
        Rx = self.L.rings[ix]  # type: ignore[index]
        return (Rx.residue(level[0][0][ix]), Rx.residue(level[0][1][ix]))


_EDGE_CONTEXTS: Dict[Tuple, EdgeContext] = {}


def edge_context(F: FieldCtx, D: DivisorSpec, x: Point) -> EdgeContext:
    key = (F.q, D.entries, x)
    if key not in _EDGE_CONTEXTS:
        _EDGE_CONTEXTS[key] = EdgeContext(F, D, x)
    return _EDGE_CONTEXTS[key]


# ---------------------------------------------------------------------------
# Brute-force builder
# ---------------------------------------------------------------------------


def neighbors_bruteforce(F: FieldCtx, v: Vertex, D: DivisorSpec, x: Point) -> List[EdgeBundle]:
    """All outgoing edges of v, by honest resplitting of every modification."""
    ctx = edge_context(F, D, x)
    n = v.gap
    candidates: List[Tuple[Vertex, str]] = []
    if ctx.d_x >= 1:
        u = ctx.level_row_residues(v.level)
        a_new, b_new, psi = ctx.resplit(n, u)
        away = ctx.transport_away(v.level, psi)
        u1_unit = bool(u[0])
        tag = "CaseII" if u1_unit else "CaseI"
        for rep in ctx.reps:
            b_x = ctx.transport_at_x(v.level, psi, rep.label)  # type: ignore[arg-type]
            new_level = ctx.assemble(away, b_x)
            target = ctx.bctx.canonical_vertex(a_new - b_new, new_level)
            candidates.append((target, tag))
    else:
        functionals = [( (1,), p ) for p in _kx_elements(ctx)] + [((), (1,))]
        for u in functionals:
            a_new, b_new, psi = ctx.resplit(n, u)
            away = ctx.transport_away(v.level, psi)
            new_level = ctx.assemble(away, None)
            target = ctx.bctx.canonical_vertex(a_new - b_new, new_level)
            candidates.append((target, f"UnramifiedTwist({n - a_new},{-b_new})"))
    return _merge(v, candidates, ctx.L)


def _kx_elements(ctx: EdgeContext) -> List[Poly]:
    return [pnorm(t) for t in product(ctx.F.elements(), repeat=ctx.x.deg)]


# ---------------------------------------------------------------------------
# Rule-based cusp builder
# ---------------------------------------------------------------------------


def neighbors_cusp_rule(F: FieldCtx, v: Vertex, D: DivisorSpec, x: Point) -> List[EdgeBundle]:
    """Outgoing edges from the closed-form cusp inclusions (no linear algebra).

    Valid strictly above the deep-cusp threshold; rejects lower vertices.
    """
    ctx = edge_context(F, D, x)
    n = v.gap
    if n <= deep_threshold(D, x):
        raise ValueError(
            f"cusp rule requires gap > {deep_threshold(D, x)}, got {n}"
        )
    pi = ctx.pi
    candidates: List[Tuple[Vertex, str]] = []
    if ctx.d_x >= 1:
        u1, u2 = ctx.level_row_residues(v.level)
        if not u1:
            # Case I: subsheaf O(n) + O(-x), inclusion diag(1, pi), gap n+1.
            psi = (((1,), ()), ((), pi))
            gap_new = n + x.deg
            tag = "CaseI"
        else:
            # Case II: f = -(u2/u1)g mod pi; basis (pi, 0), (-h, 1), gap n - deg x.
            h = ctx.k_x.mul(u2, ctx.k_x.inv(u1))
            psi = ((pi, ctx.k_x.neg(h)), ((), (1,)))
            gap_new = n - x.deg
            tag = "CaseII"
        away = ctx.transport_away(v.level, psi)
        for rep in ctx.reps:
            b_x = ctx.transport_at_x(v.level, psi, rep.label)  # type: ignore[arg-type]
            new_level = ctx.assemble(away, b_x)
            target = ctx.bctx.canonical_vertex(gap_new, new_level)
            candidates.append((target, tag))
    else:
        # Twist the top summand (q^{deg x} lattices, one canonical target) ...
        gap_top = abs(n - x.deg)
        if n < x.deg and not D.is_zero:
            raise AssertionError("reflection below the top twist requires a trivial level")
        psi_top = ((pi, ()), ((), (1,)))
        away = ctx.transport_away(v.level, psi_top)
        target = ctx.bctx.canonical_vertex(gap_top, ctx.assemble(away, None))
        if n >= x.deg:
            tag_top = f"UnramifiedTwist({x.deg},0)"
        else:
            tag_top = f"UnramifiedTwist({n},{x.deg - n})"
        for _ in range(F.q ** x.deg):
            candidates.append((target, tag_top))
        # ... and the bottom summand (one lattice).
        psi_bot = (((1,), ()), ((), pi))
        away = ctx.transport_away(v.level, psi_bot)
        target = ctx.bctx.canonical_vertex(n + x.deg, ctx.assemble(away, None))
        candidates.append((target, f"UnramifiedTwist(0,{x.deg})"))
    return _merge(v, candidates, ctx.L)


# ---------------------------------------------------------------------------
# PGL_n lattice-walk skeleton
# ---------------------------------------------------------------------------


def gaussian_binomial(n: int, r: int, q: int) -> int:
    """The q-binomial coefficient binom(n, r)_q."""
    if r < 0 or r > n:
        return 0
    num = den = 1
    for i in range(r):
        num *= q ** (n - i) - 1
        den *= q ** (i + 1) - 1
    assert num % den == 0
    return num // den


def pgln_moves(n: int, deg_x: int) -> List[Tuple[Tuple[int, ...], int]]:
    """Deep-cusp moves for PGL_n: twisting summand L_i by -x.

    Gap coordinates are (deg L_1 - deg L_2, ..., deg L_{n-1} - deg L_n); the
    twist of L_i shifts adjacent gaps by +-deg x and carries cusp
    multiplicity q^{deg x (n-i)} (as a polynomial in q, returned as the
    exponent base q = 1 placeholder is avoided: multiplicities are returned
    for formal q via exponent).
    """
    if n < 2:
        raise ValueError("rank must be >= 2")
    out = []
    for i in range(1, n + 1):
        vec = [0] * (n - 1)
        if i >= 2:
            vec[i - 2] += deg_x
        if i <= n - 1:
            vec[i - 1] -= deg_x
        out.append((tuple(vec), deg_x * (n - i)))
    return out


def pgln_move_multiplicity(q: int, deg_x: int, exponent: int) -> int:
    return q ** exponent


def pgln_total_out_degree(q: int, deg_x: int, n: int) -> int:
    total = sum(q ** e for _, e in pgln_moves(n, deg_x))
    assert total == gaussian_binomial(n, 1, q ** deg_x)
    return total
