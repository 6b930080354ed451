"""Propagative decompositions and exact eigenform computations.

The window of a Hecke graph is partitioned into a finite core and a sequence
of layers.  Unramified at x: the layers are gap bands of width deg x above
the cusp threshold and the core is everything below.  Ramified at x: the
layers are the infinity-position towers, one per gap starting two above the
deep-cusp threshold, and the core is everything else up to the first layer.

All values live in exact scalar fields (rationals, or Q[x]/(m) for algebraic
eigenvalues).  A single propagation engine expresses every window vertex as
an affine-linear function of the core unknowns: a vertex is set by its own
eigen-equation once all its out-targets are known (needs lambda != 0), or a
fully known vertex with a single unknown out-target sets that target.  The
untouched core rows are the constraint system; its solution dimension p
yields the exact eigenspace dimension p - |Gamma_1| + sup|Gamma_i|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import sympy

from .bundles import DivisorSpec, deep_threshold
from .graph import HeckeGraph


class HypothesisError(ValueError):
    """A theorem hypothesis is violated (e.g. lambda = 0 in the ramified case)."""


class WindowError(ValueError):
    """The built window is too shallow for the requested computation."""


# ---------------------------------------------------------------------------
# Exact scalar fields
# ---------------------------------------------------------------------------


class RationalField:
    """The field Q with Fraction elements."""

    degree = 1

    def __init__(self) -> None:
        self.zero = Fraction(0)
        self.one = Fraction(1)

    def from_int(self, n: int) -> Fraction:
        return Fraction(n)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def neg(self, a):
        return -a

    def inv(self, a):
        if a == 0:
            raise ZeroDivisionError("inverse of zero")
        return 1 / Fraction(a)

    def div(self, a, b):
        return a / Fraction(b)

    def is_zero(self, a) -> bool:
        return a == 0

    def to_str(self, a) -> str:
        return str(a)

    def __repr__(self) -> str:
        return "QQ"


QQ = RationalField()


def _qpoly_divmod(a: Tuple[Fraction, ...], b: Tuple[Fraction, ...]):
    b = list(b)
    while b and b[-1] == 0:
        b.pop()
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    a = list(a)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 1)
    while len(a) >= len(b) and any(a):
        while a and a[-1] == 0:
            a.pop()
        if len(a) < len(b):
            break
        c = a[-1] / b[-1]
        k = len(a) - len(b)
        q[k] = c
        for i, bc in enumerate(b):
            a[k + i] -= c * bc
        a.pop()
    while a and a[-1] == 0:
        a.pop()
    return tuple(q), tuple(a)


class AlgebraicField:
    """The number field Q[x]/(m) for a monic irreducible m over Q.

    Elements are coefficient tuples of Fractions of length deg m.
    """

    def __init__(self, minpoly: Sequence[Union[int, Fraction]]) -> None:
        m = tuple(Fraction(c) for c in minpoly)
        if len(m) < 2 or m[-1] != 1:
            raise ValueError("minimal polynomial must be monic of degree >= 1")
        x = sympy.Symbol("x")
        poly = sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(m)], x)
        if not poly.is_irreducible:
            raise ValueError("minimal polynomial must be irreducible over Q")
        self.minpoly = m
        self.degree = len(m) - 1
        self.zero = (Fraction(0),) * self.degree
        self.one = tuple(
            Fraction(1) if i == 0 else Fraction(0) for i in range(self.degree)
        )

    def from_int(self, n: int):
        return tuple(
            Fraction(n) if i == 0 else Fraction(0) for i in range(self.degree)
        )

    def gen(self):
        return tuple(
            Fraction(1) if i == 1 else Fraction(0) for i in range(self.degree)
        )

    def add(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def sub(self, a, b):
        return tuple(x - y for x, y in zip(a, b))

    def neg(self, a):
        return tuple(-x for x in a)

    def mul(self, a, b):
        prod = [Fraction(0)] * (2 * self.degree - 1)
        for i, x in enumerate(a):
            if x == 0:
                continue
            for j, y in enumerate(b):
                if y:
                    prod[i + j] += x * y
        _, rem = _qpoly_divmod(tuple(prod), self.minpoly)
        return tuple(rem) + (Fraction(0),) * (self.degree - len(rem))

    def inv(self, a):
        if self.is_zero(a):
            raise ZeroDivisionError("inverse of zero")
        # extended euclid in Q[x] for gcd(a, m) = 1
        r0, r1 = self.minpoly, tuple(a)
        s0, s1 = (), (Fraction(1),)
        while any(r1):
            q, r = _qpoly_divmod(r0, r1)
            qs = list(s0) + [Fraction(0)] * max(0, len(q) + len(s1) - 1 - len(s0))
            for i, qc in enumerate(q):
                if qc:
                    for j, sc in enumerate(s1):
                        if sc:
                            qs[i + j] -= qc * sc
            r0, r1 = r1, r
            s0, s1 = s1, tuple(qs)
        r0 = tuple(r0)
        while r0 and r0[-1] == 0:
            r0 = r0[:-1]
        if len(r0) != 1:
            raise ZeroDivisionError("element not invertible")
        c = r0[0]
        out = tuple(x / c for x in s0)
        _, rem = _qpoly_divmod(out, self.minpoly)
        return tuple(rem) + (Fraction(0),) * (self.degree - len(rem))

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def is_zero(self, a) -> bool:
        return all(x == 0 for x in a)

    def to_str(self, a) -> str:
        return "[" + ",".join(str(x) for x in a) + "]"

    def __repr__(self) -> str:
        return f"QQ[x]/({self.minpoly})"


@dataclass(frozen=True)
class ExactScalar:
    """An exact eigenvalue: a rational, or an element of Q[x]/(m)."""

    field: object
    value: object

    @staticmethod
    def rational(x: Union[int, str, Fraction]) -> "ExactScalar":
        return ExactScalar(QQ, Fraction(x))

    @staticmethod
    def algebraic(minpoly: Sequence[int]) -> "ExactScalar":
        """The residue class of x in Q[x]/(m): a root of m."""
        K = AlgebraicField(minpoly)
        return ExactScalar(K, K.gen())

    def is_zero(self) -> bool:
        return self.field.is_zero(self.value)

    def __str__(self) -> str:
        return self.field.to_str(self.value)


# ---------------------------------------------------------------------------
# Exact linear algebra over a scalar field
# ---------------------------------------------------------------------------


def _rref(K, rows: List[List]) -> Tuple[List[List], List[int]]:
    rows = [list(r) for r in rows]
    if not rows:
        return rows, []
    ncols = len(rows[0])
    pivots: List[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if not K.is_zero(rows[i][c])), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = K.inv(rows[r][c])
        rows[r] = [K.mul(inv, v) for v in rows[r]]
        for i in range(len(rows)):
            if i != r and not K.is_zero(rows[i][c]):
                f = rows[i][c]
                rows[i] = [K.sub(v, K.mul(f, w)) for v, w in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def _nullspace(K, rows: List[List], ncols: int) -> List[List]:
    if not rows:
        return [
            [K.one if j == i else K.zero for j in range(ncols)] for i in range(ncols)
        ]
    rref, pivots = _rref(K, rows)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [K.zero] * ncols
        vec[fc] = K.one
        for row, pc in zip(rref, pivots):
            vec[pc] = K.neg(row[fc])
        basis.append(vec)
    return basis


def _solve(K, rows: List[List], rhs: List, ncols: int) -> Optional[List]:
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    rref, pivots = _rref(K, aug)
    for row, pc in zip(rref, pivots):
        if pc == ncols:
            return None
    sol = [K.zero] * ncols
    for row, pc in zip(rref, pivots):
        sol[pc] = row[ncols]
    return sol


def _rank(K, rows: List[List]) -> int:
    return len(_rref(K, rows)[0])


# ---------------------------------------------------------------------------
# Layered decompositions
# ---------------------------------------------------------------------------


@dataclass
class LayeredDecomposition:
    G: HeckeGraph
    kind: str  # "unramified" | "ramified"
    gamma_prime: List[int]
    layers: List[List[int]]
    window_limited: bool

    def __post_init__(self) -> None:
        self._index_layers()

    def _index_layers(self) -> None:
        self.layer_of: Dict[int, int] = {}
        for j, layer in enumerate(self.layers):
            for v in layer:
                self.layer_of[v] = j + 1
        self.core: List[int] = list(self.gamma_prime) + list(self.layers[0])

    # -- integer block matrices ----------------------------------------------
    def _block(self, rows: List[int], cols: List[int]) -> List[List[int]]:
        col_of = {v: j for j, v in enumerate(cols)}
        out = [[0] * len(cols) for _ in rows]
        for i, v in enumerate(rows):
            for e in self.G.out_edges(v):
                j = col_of.get(e.dst)
                if j is not None:
                    out[i][j] += e.mult
        return out

    @property
    def M(self) -> List[List[int]]:
        return self._block(self.gamma_prime, self.gamma_prime)

    @property
    def A(self) -> List[List[int]]:
        return self._block(self.gamma_prime, self.layers[0])

    @property
    def B(self) -> List[List[int]]:
        return self._block(self.layers[0], self.gamma_prime)

    def A_i(self, i: int) -> List[List[int]]:
        """Edges Gamma_{i-1} -> Gamma_i as a map C Gamma_i -> C Gamma_{i-1}."""
        if i < 2 or i > len(self.layers):
            raise ValueError("A_i is defined for 2 <= i <= number of layers")
        return self._block(self.layers[i - 2], self.layers[i - 1])

    def B_i(self, i: int) -> List[List[int]]:
        if i < 2 or i > len(self.layers):
            raise ValueError("B_i is defined for 2 <= i <= number of layers")
        return self._block(self.layers[i - 1], self.layers[i - 2])

    def M_i(self, i: int) -> List[List[int]]:
        if i < 1 or i > len(self.layers):
            raise ValueError("M_i is defined for 1 <= i <= number of layers")
        return self._block(self.layers[i - 1], self.layers[i - 1])

    @property
    def sup_layer_size(self) -> int:
        return max(len(layer) for layer in self.layers)


def layer_decompose(G: HeckeGraph) -> LayeredDecomposition:
    """Partition the window into the finite core and the cusp layers."""
    D, x = G.D, G.x
    d_x = D.mult(x)
    r = x.deg
    if d_x == 0:
        base = D.deg - 2 + r
        # bands (base + (j-1)r, base + jr]
        m = (G.n_max - base) // r
        if m < 2:
            raise WindowError("window too shallow: need at least two full layers")
        gamma_prime = [i for i in G.vertex_ids(0, max(base, -1)) if G.vertices[i].gap <= base]
        layers = []
        for j in range(1, m + 1):
            lo, hi = base + (j - 1) * r + 1, base + j * r
            layers.append(sorted(G.vertex_ids(max(lo, 0), hi)))
        kind = "unramified"
    else:
        g1 = deep_threshold(D, x) + 2
        if G.n_max < g1 + 1:
            raise WindowError("window too shallow: need at least two tower layers")
        towers = {
            i
            for i in G.vertex_ids(g1, G.n_max)
            if G.vertices[i].layer == "tower"
        }
        gamma_prime = [
            i for i in G.vertex_ids(0, g1) if i not in towers
        ]
        layers = []
        for gap in range(g1, G.n_max + 1):
            layers.append(
                sorted(i for i in towers if G.vertices[i].gap == gap)
            )
        kind = "ramified"
    sizes = [len(layer) for layer in layers]
    window_limited = len(sizes) < 3 or len(set(sizes[-3:])) != 1
    return LayeredDecomposition(G, kind, sorted(gamma_prime), layers, window_limited)


def check_propagative(L: LayeredDecomposition) -> str:
    """Classify the decomposition: "not", "propagative", or "strictly"."""
    strict = True
    for i in range(2, len(L.layers) + 1):
        A = [[Fraction(v) for v in row] for row in L.A_i(i)]
        nrows, ncols = len(L.layers[i - 2]), len(L.layers[i - 1])
        rank = _rank(QQ, A) if A else 0
        if rank < nrows:
            return "not"
        if nrows != ncols:
            strict = False
    return "strictly" if strict else "propagative"


# ---------------------------------------------------------------------------
# The propagation engine
# ---------------------------------------------------------------------------


class Propagation:
    """Affine-linear expressions for window vertices over the core unknowns.

    expr[v] is a vector of length (number of core unknowns) + 1; the last
    coordinate is the affine part contributed by the right-hand side g of
    (Phi - lambda) f = g (zero for eigenvector computations).
    """

    def __init__(
        self,
        L: LayeredDecomposition,
        lam: ExactScalar,
        g: Optional[Dict[int, object]] = None,
    ) -> None:
        if L.kind == "ramified" and lam.is_zero():
            raise HypothesisError("lambda = 0 is excluded in the ramified case")
        self.L = L
        self.K = lam.field
        self.lam = lam.value
        G = L.G
        K = self.K
        self.unknowns: List[int] = list(L.core)
        self.uindex = {v: i for i, v in enumerate(self.unknowns)}
        self.width = len(self.unknowns) + 1
        self.g = {
            v: (K.from_int(val) if isinstance(val, (int, Fraction)) else val)
            for v, val in (g or {}).items()
        }
        self.expr: Dict[int, List] = {}
        for i, u in enumerate(self.unknowns):
            vec = [K.zero] * self.width
            vec[i] = K.one
            self.expr[u] = vec
        self._interior = [i for i in G.vertex_ids(0, G.n_max)]
        self._used_rows: set = set()
        self._propagate()
        self.constraints = self._constraint_rows()
        self._verify_interior()

    # -- vector helpers -------------------------------------------------------
    def _vzero(self) -> List:
        return [self.K.zero] * self.width

    def _vadd(self, a, b):
        return [self.K.add(x, y) for x, y in zip(a, b)]

    def _vscale(self, a, c):
        return [self.K.mul(x, c) for x in a]

    def _gvec(self, v: int) -> List:
        vec = self._vzero()
        gv = self.g.get(v)
        if gv is not None:
            vec[-1] = gv
        return vec

    def _row_sum(self, v: int) -> Optional[List]:
        total = self._vzero()
        for e in self.L.G.out_edges(v):
            w = self.expr.get(e.dst)
            if w is None:
                return None
            total = self._vadd(total, self._vscale(w, self.K.from_int(e.mult)))
        return total

    # -- the two propagation rules --------------------------------------------
    def _propagate(self) -> None:
        K = self.K
        G = self.L.G
        lam_zero = K.is_zero(self.lam)
        changed = True
        while changed:
            changed = False
            for v in self._interior:
                # rule 1: set f(v) from its own equation, all targets known
                if v not in self.expr and not lam_zero and v not in self._used_rows:
                    total = self._row_sum(v)
                    if total is not None:
                        vec = self._vadd(total, self._vscale(self._gvec(v), K.from_int(-1)))
                        self.expr[v] = self._vscale(vec, K.inv(self.lam))
                        self._used_rows.add(v)
                        changed = True
                        continue
                # rule 2: a known vertex with one unknown target sets it
                if v in self.expr and v not in self._used_rows:
                    unknown_dsts = {e.dst for e in G.out_edges(v) if e.dst not in self.expr}
                    if len(unknown_dsts) == 1:
                        dst = unknown_dsts.pop()
                        mult = 0
                        partial = self._vzero()
                        for e in G.out_edges(v):
                            if e.dst == dst:
                                mult += e.mult
                            else:
                                partial = self._vadd(
                                    partial,
                                    self._vscale(self.expr[e.dst], K.from_int(e.mult)),
                                )
                        # lam*f(v) + g(v) = partial + mult*f(dst)
                        vec = self._vadd(self._vscale(self.expr[v], self.lam), self._gvec(v))
                        vec = self._vadd(vec, self._vscale(partial, K.from_int(-1)))
                        self.expr[dst] = self._vscale(vec, K.inv(K.from_int(mult)))
                        self._used_rows.add(v)
                        changed = True

    def _constraint_rows(self) -> List[List]:
        """Rows of Gamma' vertices: sum_out - lam*f(v) - g(v) = 0."""
        K = self.K
        rows = []
        for v in self.L.gamma_prime:
            if v in self._used_rows:
                continue
            total = self._row_sum(v)
            if total is None:
                raise WindowError(
                    f"core vertex {v} has out-targets beyond the expressible window"
                )
            vec = self._vadd(total, self._vscale(self.expr[v], K.neg(self.lam)))
            vec = self._vadd(vec, self._vscale(self._gvec(v), K.from_int(-1)))
            rows.append(vec)
        return rows

    def _verify_interior(self) -> None:
        """Every fully expressed interior equation must hold identically."""
        K = self.K
        core = set(self.L.core)
        for v in self._interior:
            if v in core or v not in self.expr:
                continue
            total = self._row_sum(v)
            if total is None:
                continue
            vec = self._vadd(total, self._vscale(self.expr[v], K.neg(self.lam)))
            vec = self._vadd(vec, self._vscale(self._gvec(v), K.from_int(-1)))
            if any(not K.is_zero(c) for c in vec):
                raise AssertionError(f"propagated equation fails at vertex {v}")

    # -- instantiation ---------------------------------------------------------
    def instantiate(self, assignment: List, affine: bool) -> Dict[int, object]:
        """Value table from core unknown values (+ affine coordinate 1)."""
        K = self.K
        coords = list(assignment) + [K.one if affine else K.zero]
        out = {}
        for v, vec in self.expr.items():
            total = K.zero
            for c, a in zip(vec, coords):
                if not K.is_zero(c) and not K.is_zero(a):
                    total = K.add(total, K.mul(c, a))
            out[v] = total
        return out

    def solution_dim(self) -> int:
        return len(self.unknowns) - _rank(
            self.K, [row[:-1] for row in self.constraints]
        )


# ---------------------------------------------------------------------------
# Dimension bounds and the nucleus spectrum
# ---------------------------------------------------------------------------


@dataclass
class DimBounds:
    lower: int
    upper: int
    exact: int
    window_limited: bool


def dim_bounds(lam: ExactScalar, L: LayeredDecomposition) -> DimBounds:
    """(lower, upper, exact) eigenspace dimensions for the window's graph.

    lower = sup|Gamma_i|, upper = lower + dim ker(lambda - M), and the exact
    value is p - |Gamma_1| + sup|Gamma_i| with p the solution dimension of
    the core system (lambda - M)v' = A v_1.
    """
    if check_propagative(L) == "not":
        raise ValueError("decomposition is not propagative")
    K = lam.field
    lower = L.sup_layer_size
    M = L.M
    n = len(M)
    lamM = [
        [
            K.sub(
                K.mul(lam.value, K.one) if i == j else K.zero,
                K.from_int(M[i][j]),
            )
            for j in range(n)
        ]
        for i in range(n)
    ]
    ker = len(_nullspace(K, lamM, n)) if n else 0
    upper = lower + ker
    prop = Propagation(L, lam)
    p = prop.solution_dim()
    exact = p - len(L.layers[0]) + lower
    return DimBounds(lower, upper, exact, L.window_limited)


@dataclass
class NucleusSpectrum:
    charpoly: Tuple[int, ...]  # little-endian integer coefficients
    factors: List[Tuple[Tuple[int, ...], int]]
    gershgorin_bound: int
    gershgorin_ok: bool


def nucleus_spectrum(L: LayeredDecomposition) -> NucleusSpectrum:
    """The exact integer characteristic polynomial of the core adjacency."""
    M = L.M
    n = len(M)
    x = sympy.Symbol("x")
    if n == 0:
        poly = sympy.Poly(1, x)
    else:
        poly = sympy.Matrix(M).charpoly(x)
    coeffs = [int(c) for c in reversed(poly.all_coeffs())]
    _, factors = sympy.factor_list(poly.as_expr(), x)
    fac_out = []
    for f, mult in sorted(factors, key=lambda fm: sympy.default_sort_key(fm[0])):
        fp = sympy.Poly(f, x)
        fac_out.append((tuple(int(c) for c in reversed(fp.all_coeffs())), int(mult)))
    G = L.G
    d_x = G.D.mult(G.x)
    bound = G.q ** G.x.deg + (1 if d_x == 0 else 0)
    ok = all(sum(abs(v) for v in row) <= bound for row in M)
    return NucleusSpectrum(tuple(coeffs), fac_out, bound, ok)


def charpoly_at(spec: NucleusSpectrum, lam: ExactScalar):
    """Evaluate det(lambda - M) at an exact scalar."""
    K = lam.field
    total = K.zero
    power = K.one
    for c in spec.charpoly:
        if c:
            total = K.add(total, K.mul(K.from_int(c), power))
        power = K.mul(power, lam.value)
    return total


# ---------------------------------------------------------------------------
# Eigenform propagation and resolvents
# ---------------------------------------------------------------------------


def propagate_eigenform(
    lam: ExactScalar,
    seed: Dict[int, object],
    L: LayeredDecomposition,
    depth: Optional[int] = None,
) -> Dict[int, object]:
    """Extend seed values on Gamma' + Gamma_1 to the window, layer by layer.

    The seed must satisfy the core equations (lambda - M)v' = A v_1; the
    extension is the unique one satisfying the eigen-equation at every
    expressible vertex.  ``depth`` truncates the output to vertices of gap
    at most (first layer gap) + depth.
    """
    K = lam.field
    prop = Propagation(L, lam)
    vals = [seed.get(u, 0) for u in prop.unknowns]
    vals = [K.from_int(v) if isinstance(v, (int, Fraction)) else v for v in vals]
    for row in prop.constraints:
        total = K.zero
        for c, a in zip(row[:-1], vals):
            total = K.add(total, K.mul(c, a))
        if not K.is_zero(total):
            raise ValueError("seed violates the core boundary equation")
    table = prop.instantiate(vals, affine=False)
    if depth is not None:
        G = L.G
        cap = G.vertices[L.layers[0][0]].gap + depth
        table = {v: x for v, x in table.items() if G.vertices[v].gap <= cap}
    return table


@dataclass
class ResolventSolution:
    particular: Dict[int, object]
    homogeneous: List[Dict[int, object]]


def solve_resolvent(
    lam: ExactScalar,
    g: Dict[int, object],
    L: LayeredDecomposition,
    depth: Optional[int] = None,
) -> ResolventSolution:
    """Solve (Phi - lambda) f = g on the window, exactly.

    Requires lambda outside the nucleus spectrum (det(lambda - M) != 0).
    Returns one particular solution and a basis of the homogeneous space;
    the homogeneous dimension equals the lower dimension bound.
    """
    spec = nucleus_spectrum(L)
    if lam.field.is_zero(charpoly_at(spec, lam)):
        raise HypothesisError("lambda is an eigenvalue of the core adjacency")
    K = lam.field
    g = {v: (K.from_int(x) if isinstance(x, (int, Fraction)) else x) for v, x in g.items()}
    prop = Propagation(L, lam, g)
    ncols = len(prop.unknowns)
    rows = [r[:-1] for r in prop.constraints]
    rhs = [K.neg(r[-1]) for r in prop.constraints]
    part = _solve(K, rows, rhs, ncols)
    if part is None:
        raise AssertionError("resolvent system unexpectedly inconsistent")
    hom_basis = _nullspace(K, rows, ncols)
    particular = prop.instantiate(part, affine=True)
    hom_prop = Propagation(L, lam)  # homogeneous expressions (g = 0)
    homogeneous = [hom_prop.instantiate(vec, affine=False) for vec in hom_basis]
    if depth is not None:
        G = L.G
        cap = G.vertices[L.layers[0][0]].gap + depth
        particular = {v: x for v, x in particular.items() if G.vertices[v].gap <= cap}
        homogeneous = [
            {v: x for v, x in h.items() if G.vertices[v].gap <= cap}
            for h in homogeneous
        ]
    return ResolventSolution(particular, homogeneous)


def verify_eigen_equation(
    G: HeckeGraph, lam: ExactScalar, table: Dict[int, object], g: Optional[Dict[int, object]] = None
) -> List[int]:
    """Interior vertices where (Phi - lambda) f != g; empty list iff exact."""
    K = lam.field
    bad = []
    for v in G.vertex_ids(0, G.n_max):
        if v not in table:
            continue
        total = K.zero
        complete = True
        for e in G.out_edges(v):
            if e.dst not in table:
                complete = False
                break
            x = table[e.dst]
            total = K.add(total, K.mul(K.from_int(e.mult), x))
        if not complete:
            continue
        want = K.mul(lam.value, table[v])
        if g and v in g:
            gv = g[v]
            gv = K.from_int(gv) if isinstance(gv, (int, Fraction)) else gv
            want = K.add(want, gv)
        if not K.is_zero(K.sub(total, want)):
            bad.append(v)
    return bad


def generalized_kernel_dims(
    lam: ExactScalar, L: LayeredDecomposition, k_max: int
) -> List[int]:
    """dim ker(Phi - lambda)^k on the window for k = 1..k_max.

    Built by iterated resolvent solves: each level adds one preimage per
    basis element of the previous kernel, plus the homogeneous space.
    """
    K = lam.field
    base = solve_resolvent(lam, {}, L)
    kernel: List[Dict[int, object]] = list(base.homogeneous)
    dims = [len(kernel)]
    level = list(base.homogeneous)
    for _ in range(1, k_max):
        nxt = []
        for f in level:
            sol = solve_resolvent(lam, f, L)
            nxt.append(sol.particular)
        kernel.extend(nxt)
        level = nxt
        dims.append(len(kernel))
    # confirm linear independence of the constructed kernel tables
    verts = sorted(set().union(*[set(t) for t in kernel])) if kernel else []
    rows = [[t.get(v, K.zero) for v in verts] for t in kernel]
    if _rank(K, rows) != len(kernel):
        raise AssertionError("generalized kernel vectors are dependent")
    return dims


# ---------------------------------------------------------------------------
# Closed-form dimension evaluators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimFormulaParams:
    q: int
    r: int  # deg x
    d_x: int
    dprime_points: Tuple[Tuple[int, int], ...] = ()  # (deg y, mult d_y)
    h: int = 1  # |Pic^0(X)(F_q)|
    genus: int = 0


def dim_formula(params: DimFormulaParams, case: str) -> Tuple[Fraction, Dict[str, Fraction]]:
    """The lower-bound dimension formula and its per-point factor table."""
    q, r, h = params.q, params.r, params.h
    degD = sum(deg * mult for deg, mult in params.dprime_points)
    degDred = sum(deg for deg, _ in params.dprime_points)
    table: Dict[str, Fraction] = {"base": Fraction(r * h)}
    if case == "unramified_at_x":
        if params.d_x != 0:
            raise ValueError("unramified case requires d_x = 0")
        if not params.dprime_points:
            return Fraction(r * h), table
        value = Fraction(r * h) * Fraction(q ** (2 * (degD - degDred)), q - 1)
        table["wild"] = Fraction(q ** (2 * (degD - degDred)), q - 1)
        for i, (deg, _) in enumerate(params.dprime_points):
            f = Fraction(q ** (2 * deg) - 1)
            table[f"y{i}"] = f
            value *= f
        return value, table
    if case == "ramified_at_x_only":
        if params.d_x < 1 or params.dprime_points:
            raise ValueError("ramified-only case requires d_x >= 1 and D' = 0")
        f = Fraction((q ** r - 1) * q ** (r * (params.d_x - 1)), q - 1)
        table["x"] = f
        return Fraction(r * h) * f, table
    if case == "mixed":
        if params.d_x < 1 or not params.dprime_points:
            raise ValueError("mixed case requires d_x >= 1 and D' != 0")
        f = Fraction(
            (q ** r - 1)
            * q ** (2 * (degD - degDred) + r * (params.d_x - 1)),
            q - 1,
        )
        table["x"] = f
        value = Fraction(r * h) * f
        for i, (deg, _) in enumerate(params.dprime_points):
            fy = Fraction(q ** (2 * deg) - 1)
            table[f"y{i}"] = fy
            value *= fy
        return value, table
    raise ValueError(f"unknown case {case!r}")


# ---------------------------------------------------------------------------
# Eigenform families in lambda
# ---------------------------------------------------------------------------


def eigenform_family(
    vertex: int,
    samples: Sequence[Fraction],
    L: LayeredDecomposition,
    depth: int,
    base_vertex: int = 0,
) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]:
    """Interpolate f_lambda(vertex) as a rational function of lambda.

    For each sample, the eigenform normalized to 1 at ``base_vertex`` is
    computed; the family is reconstructed with denominator
    det(lambda - M) * lambda^depth and numerator degree at most
    |Gamma'| + 2*depth.  Three held-out samples must have exactly zero
    residual.  Returns (numerator, denominator) as little-endian rational
    coefficient tuples (normalized to cancel common factors via sympy).
    """
    spec = nucleus_spectrum(L)
    n_den = len(L.gamma_prime) + depth
    n_num = len(L.gamma_prime) + 2 * depth + 1  # number of coefficients
    needed = n_num + 3
    if len(samples) < needed:
        raise ValueError(f"need at least {needed} samples, got {len(samples)}")

    def den_at(lv: Fraction) -> Fraction:
        total = Fraction(0)
        p = Fraction(1)
        for c in spec.charpoly:
            total += c * p
            p *= lv
        return total * lv ** depth

    def f_at(lv: Fraction) -> Fraction:
        lam = ExactScalar.rational(lv)
        prop = Propagation(L, lam)
        ns = _nullspace(QQ, [r[:-1] for r in prop.constraints], len(prop.unknowns))
        if not ns:
            raise ValueError(f"no eigenform at sample {lv}")
        vec = ns[0]
        table = prop.instantiate(vec, affine=False)
        b = table.get(base_vertex)
        if b is None or b == 0:
            raise ValueError("eigenform vanishes at the normalization vertex")
        return table[vertex] / b

    fit, held = list(samples[: n_num]), list(samples[n_num : n_num + 3])
    rows = []
    rhs = []
    for lv in fit:
        rows.append([lv ** j for j in range(n_num)])
        rhs.append(f_at(lv) * den_at(lv))
    coeffs = _solve(QQ, rows, rhs, n_num)
    if coeffs is None:
        raise ValueError("interpolation rank failure: family not rational of assumed degree")
    for lv in held:
        value = sum(c * lv ** j for j, c in enumerate(coeffs))
        if value != f_at(lv) * den_at(lv):
            raise ValueError("nonzero residual at held-out sample")
    num = tuple(coeffs)
    den = tuple(Fraction(c) for c in spec.charpoly) if depth == 0 else tuple(
        [Fraction(0)] * depth + [Fraction(c) for c in spec.charpoly]
    )
    x = sympy.Symbol("x")
    num_poly = sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(num)] or [0], x)
    den_poly = sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(den)], x)
    gcd = sympy.gcd(num_poly, den_poly)
    num_poly = sympy.div(num_poly, gcd, x)[0]
    den_poly = sympy.div(den_poly, gcd, x)[0]
    lead = den_poly.LC()
    num_poly = num_poly * sympy.Rational(1) / lead
    den_poly = den_poly * sympy.Rational(1) / lead
    def to_tuple(p):
        cs = sympy.Poly(p, x).all_coeffs()
        return tuple(Fraction(int(sympy.numer(c)), int(sympy.denom(c))) for c in reversed(cs))
    return to_tuple(num_poly), to_tuple(den_poly)
