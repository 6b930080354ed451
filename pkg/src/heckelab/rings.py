"""Exact arithmetic for finite fields, truncated local rings and their products.

The building blocks are:

* ``FieldCtx``      -- the coefficient field F_q, q = p^e.  Elements are
                       integers in [0, q) whose base-p digits are the
                       coefficients in the polynomial basis of the defining
                       irreducible.
* polynomials       -- little-endian tuples of field elements with no
                       trailing zeros; ``()`` is the zero polynomial.
* ``JetRing``       -- F_q[t]/(p_y(t)^d) for a monic irreducible p_y (the
                       local ring at a finite point truncated to order d), or
                       F_q[s]/(s^d) at the point at infinity.  The fixed
                       uniformizer is p_y(t) itself (s at infinity).
* ``LevelRing``     -- a finite product of jet rings, one per divisor point.
* 2x2 matrices      -- nested tuples of ring elements, rows = coordinates of
                       the trivialization, columns = images of the bundle
                       basis.  Scalar normalization scans entries row-major
                       and rescales the first unit to 1, independently in
                       every product component.
* subgroup specs    -- closed-form orders and exhaustive enumerators for the
                       matrix groups acting on level structures.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Iterator, Optional, Sequence, Tuple

Poly = Tuple[int, ...]  # little-endian, no trailing zeros; () == 0

DEFAULT_BUDGET = 2 ** 20


def enumeration_budget() -> int:
    """Current enumeration budget (element count), env-overridable."""
    raw = os.environ.get("HECKE_LAB_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        value = int(raw)
    except ValueError as exc:
        raise BudgetError(f"HECKE_LAB_BUDGET must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise BudgetError(f"HECKE_LAB_BUDGET must be positive, got {value}")
    return value


class BudgetError(RuntimeError):
    """An enumeration would exceed the configured element budget."""


def check_budget(size: int, what: str) -> None:
    budget = enumeration_budget()
    if size > budget:
        raise BudgetError(f"{what} has {size} elements, exceeding the budget {budget}")


# ---------------------------------------------------------------------------
# Base field F_q
# ---------------------------------------------------------------------------

def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def _prime_power(q: int) -> Tuple[int, int]:
    """Return (p, e) with q = p^e, or raise ValueError."""
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    for p in range(2, q + 1):
        if not _is_prime(p):
            continue
        if q % p:
            continue
        e, n = 0, q
        while n % p == 0:
            n //= p
            e += 1
        if n != 1:
            raise ValueError(f"q = {q} is not a prime power")
        return p, e
    raise ValueError(f"q = {q} is not a prime power")


class FieldCtx:
    """The finite field F_q with q = p^e.

    Elements are integers 0..q-1; the base-p digits of an element are its
    coefficients over F_p in the basis 1, z, ..., z^{e-1}, where z is a root
    of the lexicographically smallest monic irreducible of degree e.
    """

    def __init__(self, q: int) -> None:
        p, e = _prime_power(q)
        self.q = q
        self.p = p
        self.e = e
        self.modulus = self._find_irreducible() if e > 1 else (0, 1)
        self._mul: list[list[int]] = [[0] * q for _ in range(q)]
        self._inv: list[int] = [0] * q
        for a in range(q):
            for b in range(a, q):
                v = self._mul_slow(a, b)
                self._mul[a][b] = v
                self._mul[b][a] = v
        for a in range(1, q):
            for b in range(1, q):
                if self._mul[a][b] == 1:
                    self._inv[a] = b
                    break

    # -- integer <-> digit vector helpers ----------------------------------
    def _digits(self, a: int) -> list[int]:
        out = []
        for _ in range(self.e):
            out.append(a % self.p)
            a //= self.p
        return out

    def _undigits(self, ds: Sequence[int]) -> int:
        out = 0
        for d in reversed(ds):
            out = out * self.p + (d % self.p)
        return out

    def _find_irreducible(self) -> Tuple[int, ...]:
        # Lexicographically smallest monic irreducible of degree e over F_p,
        # by trial division against all monic polynomials of lower degree.
        p, e = self.p, self.e
        for tail in range(p ** e):
            digits = []
            t = tail
            for _ in range(e):
                digits.append(t % p)
                t //= p
            cand = tuple(digits) + (1,)
            if _fp_irreducible(cand, p):
                return cand
        raise AssertionError("no irreducible polynomial found")

    def _mul_slow(self, a: int, b: int) -> int:
        if self.e == 1:
            return (a * b) % self.p
        pa, pb = self._digits(a), self._digits(b)
        prod = [0] * (2 * self.e - 1)
        for i, ca in enumerate(pa):
            if ca:
                for j, cb in enumerate(pb):
                    prod[i + j] = (prod[i + j] + ca * cb) % self.p
        # reduce modulo the defining irreducible
        for i in range(len(prod) - 1, self.e - 1, -1):
            c = prod[i]
            if c:
                prod[i] = 0
                for j in range(self.e):
                    prod[i - self.e + j] = (prod[i - self.e + j] - c * self.modulus[j]) % self.p
        return self._undigits(prod[: self.e])

    # -- public arithmetic --------------------------------------------------
    def add(self, a: int, b: int) -> int:
        if self.e == 1:
            return (a + b) % self.p
        pa, pb = self._digits(a), self._digits(b)
        return self._undigits([(x + y) % self.p for x, y in zip(pa, pb)])

    def sub(self, a: int, b: int) -> int:
        if self.e == 1:
            return (a - b) % self.p
        pa, pb = self._digits(a), self._digits(b)
        return self._undigits([(x - y) % self.p for x, y in zip(pa, pb)])

    def neg(self, a: int) -> int:
        return self.sub(0, a)

    def mul(self, a: int, b: int) -> int:
        return self._mul[a][b]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero is not invertible in F_q")
        return self._inv[a]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def elements(self) -> range:
        return range(self.q)

    def nonzero(self) -> range:
        return range(1, self.q)

    def __repr__(self) -> str:
        return f"FieldCtx(q={self.q})"


def _fp_irreducible(poly: Tuple[int, ...], p: int) -> bool:
    """Irreducibility over F_p by trial division (small degrees only)."""
    deg = len(poly) - 1
    if deg <= 0:
        return False
    if deg == 1:
        return True

    def fp_mod(a: list[int], b: list[int]) -> list[int]:
        a = a[:]
        binv = pow(b[-1], p - 2, p)
        while len(a) >= len(b) and any(a):
            while a and a[-1] == 0:
                a.pop()
            if len(a) < len(b):
                break
            c = (a[-1] * binv) % p
            off = len(a) - len(b)
            for i, bc in enumerate(b):
                a[off + i] = (a[off + i] - c * bc) % p
            while a and a[-1] == 0:
                a.pop()
        return a

    for d in range(1, deg // 2 + 1):
        for tail in range(p ** d):
            digits = []
            t = tail
            for _ in range(d):
                digits.append(t % p)
                t //= p
            divisor = digits + [1]
            if not fp_mod(list(poly), divisor):
                return False
    return True


@lru_cache(maxsize=None)
def field_ctx(q: int) -> FieldCtx:
    return FieldCtx(q)


# ---------------------------------------------------------------------------
# Polynomials over F_q (little-endian tuples)
# ---------------------------------------------------------------------------

def pnorm(c: Sequence[int]) -> Poly:
    i = len(c)
    while i > 0 and c[i - 1] == 0:
        i -= 1
    return tuple(c[:i])


def pdeg(a: Poly) -> int:
    """Degree; -1 for the zero polynomial."""
    return len(a) - 1


def padd(F: FieldCtx, a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return pnorm([F.add(a[i] if i < len(a) else 0, b[i] if i < len(b) else 0) for i in range(n)])


def psub(F: FieldCtx, a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return pnorm([F.sub(a[i] if i < len(a) else 0, b[i] if i < len(b) else 0) for i in range(n)])


def pscale(F: FieldCtx, a: Poly, s: int) -> Poly:
    if s == 0:
        return ()
    return pnorm([F.mul(c, s) for c in a])


def pmul(F: FieldCtx, a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return ()
    out = [0] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca:
            for j, cb in enumerate(b):
                if cb:
                    out[i + j] = F.add(out[i + j], F.mul(ca, cb))
    return pnorm(out)


def pdivmod(F: FieldCtx, a: Poly, b: Poly) -> Tuple[Poly, Poly]:
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    r = list(a)
    q: list[int] = [0] * max(len(a) - len(b) + 1, 0)
    binv = F.inv(b[-1])
    while len(pnorm(r)) >= len(b):
        r = list(pnorm(r))
        c = F.mul(r[-1], binv)
        off = len(r) - len(b)
        q[off] = c
        for i, bc in enumerate(b):
            r[off + i] = F.sub(r[off + i], F.mul(c, bc))
    return pnorm(q), pnorm(r)


def pmod(F: FieldCtx, a: Poly, b: Poly) -> Poly:
    return pdivmod(F, a, b)[1]


def ppow(F: FieldCtx, a: Poly, n: int) -> Poly:
    out: Poly = (1,)
    for _ in range(n):
        out = pmul(F, out, a)
    return out


def pxgcd(F: FieldCtx, a: Poly, b: Poly) -> Tuple[Poly, Poly, Poly]:
    """Extended gcd: returns (g, u, v) with u*a + v*b = g, g monic or zero."""
    r0, r1 = a, b
    u0, u1 = (1,), ()
    v0, v1 = (), (1,)
    while r1:
        q, r = pdivmod(F, r0, r1)
        r0, r1 = r1, r
        u0, u1 = u1, psub(F, u0, pmul(F, q, u1))
        v0, v1 = v1, psub(F, v0, pmul(F, q, v1))
    if r0:
        lead_inv = F.inv(r0[-1])
        r0 = pscale(F, r0, lead_inv)
        u0 = pscale(F, u0, lead_inv)
        v0 = pscale(F, v0, lead_inv)
    return r0, u0, v0


def p_irreducible(F: FieldCtx, a: Poly) -> bool:
    """Irreducibility over F_q by trial division (intended for small degrees)."""
    deg = pdeg(a)
    if deg <= 0:
        return False
    if deg == 1:
        return True
    for d in range(1, deg // 2 + 1):
        for tail in product(F.elements(), repeat=d):
            divisor = pnorm(tuple(tail) + (1,))
            if not pmod(F, a, divisor):
                return False
    return True


# ---------------------------------------------------------------------------
# Dense linear algebra over F_q (small systems only)
# ---------------------------------------------------------------------------

def fq_rref(F: FieldCtx, rows: Sequence[Sequence[int]], ncols: int) -> Tuple[list[list[int]], list[int]]:
    """Reduced row echelon form; returns (nonzero rows, pivot column list)."""
    mat = [list(r) + [0] * (ncols - len(r)) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(mat)) if mat[i][c]), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        inv = F.inv(mat[r][c])
        mat[r] = [F.mul(v, inv) for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c]:
                f = mat[i][c]
                mat[i] = [F.sub(v, F.mul(f, w)) for v, w in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    return mat[:r], pivots


def fq_rank(F: FieldCtx, rows: Sequence[Sequence[int]], ncols: int) -> int:
    return len(fq_rref(F, rows, ncols)[0])


def fq_nullspace(F: FieldCtx, rows: Sequence[Sequence[int]], ncols: int) -> list[list[int]]:
    """Basis of {x : A x = 0}, one vector per free column."""
    rref, pivots = fq_rref(F, rows, ncols)
    pivot_set = set(pivots)
    basis = []
    for free in range(ncols):
        if free in pivot_set:
            continue
        vec = [0] * ncols
        vec[free] = 1
        for row, pc in zip(rref, pivots):
            vec[pc] = F.neg(row[free])
        basis.append(vec)
    return basis


def fq_solve(F: FieldCtx, rows: Sequence[Sequence[int]], rhs: Sequence[int], ncols: int) -> Optional[list[int]]:
    """One solution of A x = b, or None if inconsistent."""
    aug = [list(r) + [0] * (ncols - len(r)) + [v] for r, v in zip(rows, rhs)]
    rref, pivots = fq_rref(F, aug, ncols + 1)
    if ncols in pivots:
        return None
    x = [0] * ncols
    for row, pc in zip(rref, pivots):
        x[pc] = row[ncols]
    return x


def fq_in_rowspace(F: FieldCtx, rref_rows: Sequence[Sequence[int]], pivots: Sequence[int], vec: Sequence[int]) -> bool:
    v = list(vec)
    for row, pc in zip(rref_rows, pivots):
        if v[pc]:
            f = v[pc]
            v = [F.sub(a, F.mul(f, b)) for a, b in zip(v, row)]
    return not any(v)


# ---------------------------------------------------------------------------
# Points of P^1 over F_q
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=False)
class Point:
    """A closed point of P^1: a monic irreducible in t, or infinity (None)."""

    poly: Optional[Poly]

    @property
    def is_infinity(self) -> bool:
        return self.poly is None

    @property
    def deg(self) -> int:
        return 1 if self.poly is None else pdeg(self.poly)

    def sort_key(self) -> Tuple[int, int, Poly]:
        if self.poly is None:
            return (1, 1, ())
        return (0, pdeg(self.poly), self.poly)

    def __str__(self) -> str:
        if self.poly is None:
            return "inf"
        return poly_str(self.poly)

    def __repr__(self) -> str:
        return f"Point({self})"


INFINITY = Point(None)


def make_point(F: FieldCtx, poly: Sequence[int]) -> Point:
    p = pnorm(tuple(poly))
    if pdeg(p) < 1:
        raise ValueError(f"a point polynomial must have degree >= 1, got {p}")
    if p[-1] != 1:
        raise ValueError(f"point polynomial must be monic, got {p}")
    if not p_irreducible(F, p):
        raise ValueError(f"point polynomial {poly_str(p)} is reducible over F_{F.q}")
    return Point(p)


def poly_str(p: Poly, var: str = "t") -> str:
    if not p:
        return "0"
    terms = []
    for i in range(len(p) - 1, -1, -1):
        c = p[i]
        if c == 0:
            continue
        if i == 0:
            terms.append(str(c))
        else:
            head = "" if c == 1 else f"{c}*"
            terms.append(f"{head}{var}" if i == 1 else f"{head}{var}^{i}")
    return "+".join(terms)


def parse_poly(F: FieldCtx, text: str, var: str = "t") -> Poly:
    """Parse '+'-separated monomials like 't^2+t+1' or '2*t+1'.

    Coefficients are integers in [0, q) in the polynomial-basis encoding.
    """
    text = text.strip().replace(" ", "")
    if not text:
        raise ValueError("empty polynomial string")
    if text == "0":
        return ()
    coeffs: dict[int, int] = {}
    for term in text.split("+"):
        if not term:
            raise ValueError(f"malformed polynomial {text!r}")
        if var in term:
            head, _, tail = term.partition(var)
            coeff = 1 if head in ("", "*") else int(head.rstrip("*"))
            if tail == "":
                power = 1
            elif tail.startswith("^"):
                power = int(tail[1:])
            else:
                raise ValueError(f"malformed term {term!r}")
        else:
            coeff = int(term)
            power = 0
        if not 0 <= coeff < F.q:
            raise ValueError(f"coefficient {coeff} out of range for F_{F.q}")
        coeffs[power] = F.add(coeffs.get(power, 0), coeff)
    out = [0] * (max(coeffs) + 1)
    for power, c in coeffs.items():
        out[power] = c
    return pnorm(out)


def parse_point(F: FieldCtx, text: str) -> Point:
    if text.strip() == "inf":
        return INFINITY
    return make_point(F, parse_poly(F, text))


# ---------------------------------------------------------------------------
# Jet rings O_y / pi_y^d
# ---------------------------------------------------------------------------

class JetRing:
    """F_q[t]/(p_y(t)^d), with uniformizer pi = p_y(t) (s at infinity).

    Elements are reduced polynomial tuples (degree < d*deg(p_y)).  At the
    point at infinity the local variable is s = 1/t and the ring is
    F_q[s]/(s^d).
    """

    def __init__(self, F: FieldCtx, point: Point, d: int) -> None:
        if d < 1:
            raise ValueError(f"truncation order must be >= 1, got {d}")
        self.F = F
        self.point = point
        self.d = d
        self.base: Poly = (0, 1) if point.is_infinity else point.poly  # type: ignore[assignment]
        self.res_deg = point.deg
        self.modulus = ppow(F, self.base, d)
        self.coeff_len = self.res_deg * d
        self.size = F.q ** self.coeff_len
        self.zero: Poly = ()
        self.one: Poly = (1,)
        # memo tables pay off for the small rings that dominate builds
        self._memo = self.size <= 4096
        self._add_cache: dict = {}
        self._sub_cache: dict = {}
        self._mul_cache: dict = {}
        self._inv_cache: dict = {}

    # -- basics --------------------------------------------------------------
    def reduce(self, a: Sequence[int]) -> Poly:
        return pmod(self.F, pnorm(tuple(a)), self.modulus)

    def add(self, a: Poly, b: Poly) -> Poly:
        if self._memo:
            out = self._add_cache.get((a, b))
            if out is None:
                out = padd(self.F, a, b)
                self._add_cache[(a, b)] = out
            return out
        return padd(self.F, a, b)

    def sub(self, a: Poly, b: Poly) -> Poly:
        if self._memo:
            out = self._sub_cache.get((a, b))
            if out is None:
                out = psub(self.F, a, b)
                self._sub_cache[(a, b)] = out
            return out
        return psub(self.F, a, b)

    def neg(self, a: Poly) -> Poly:
        return psub(self.F, (), a)

    def mul(self, a: Poly, b: Poly) -> Poly:
        if self._memo:
            out = self._mul_cache.get((a, b))
            if out is None:
                out = pmod(self.F, pmul(self.F, a, b), self.modulus)
                self._mul_cache[(a, b)] = out
            return out
        return pmod(self.F, pmul(self.F, a, b), self.modulus)

    def scale(self, a: Poly, c: int) -> Poly:
        return pscale(self.F, a, c)

    def is_unit(self, a: Poly) -> bool:
        return bool(pmod(self.F, a, self.base))

    def inv(self, a: Poly) -> Poly:
        if self._memo:
            out = self._inv_cache.get(a)
            if out is not None:
                return out
        g, u, _ = pxgcd(self.F, a, self.modulus)
        if g != (1,):
            raise ZeroDivisionError(f"{a} is not a unit in {self!r}")
        out = pmod(self.F, u, self.modulus)
        if self._memo:
            self._inv_cache[a] = out
        return out

    def val(self, a: Poly) -> int:
        """pi-adic valuation in 0..d (zero has valuation d)."""
        if not a:
            return self.d
        v, rest = 0, a
        while True:
            q, r = pdivmod(self.F, rest, self.base)
            if r:
                return v
            v += 1
            rest = q
            if v == self.d:
                return self.d

    def div_uniformizer(self, a: Poly, k: int = 1) -> Poly:
        """Exact division by pi^k; the result is well defined mod pi^{d-k}."""
        q, r = pdivmod(self.F, a, ppow(self.F, self.base, k))
        if r:
            raise ValueError(f"{a} is not divisible by pi^{k}")
        return q

    def residue(self, a: Poly) -> Poly:
        """Image in the residue field O/pi (a polynomial of degree < deg y)."""
        return pmod(self.F, a, self.base)

    def truncate(self, a: Poly, k: int) -> Poly:
        """Image in O/pi^k for k <= d."""
        if not 1 <= k <= self.d:
            raise ValueError(f"truncation order {k} out of range 1..{self.d}")
        return pmod(self.F, a, ppow(self.F, self.base, k))

    def key(self, a: Poly) -> Tuple[int, ...]:
        """Fixed-length coefficient vector, for deterministic ordering."""
        return tuple(a) + (0,) * (self.coeff_len - len(a))

    # -- enumeration -----------------------------------------------------------
    def elements(self) -> Iterator[Poly]:
        check_budget(self.size, f"element enumeration of {self!r}")
        for tail in product(self.F.elements(), repeat=self.coeff_len):
            yield pnorm(tail)

    def units(self) -> Iterator[Poly]:
        for a in self.elements():
            if self.is_unit(a):
                yield a

    def unit_count(self) -> int:
        Q = self.F.q ** self.res_deg
        return (Q - 1) * Q ** (self.d - 1)

    def subring(self, k: int) -> "JetRing":
        return JetRing(self.F, self.point, k)

    def residue_field(self) -> "JetRing":
        return JetRing(self.F, self.point, 1)

    def __repr__(self) -> str:
        return f"JetRing({self.point}, d={self.d}, q={self.F.q})"


def jet_ring(F: FieldCtx, point: Point, d: int) -> JetRing:
    """Ring context for O_y/pi_y^d (validates the point polynomial)."""
    if not point.is_infinity and not p_irreducible(F, point.poly):  # type: ignore[arg-type]
        raise ValueError(f"point polynomial {point} is reducible over F_{F.q}")
    return JetRing(F, point, d)


def p1_classes(R: JetRing) -> Iterator[Tuple[Poly, Poly]]:
    """The points of P^1(O) for the local ring O: unimodular pairs up to units.

    Canonical representatives: (1, b) for b in O, and (a, 1) for a in pi*O.
    """
    check_budget(2 * R.size, f"P^1 enumeration over {R!r}")
    for b in R.elements():
        yield (R.one, b)
    for a in R.elements():
        if not R.is_unit(a):
            yield (a, R.one)


def p1_count(R: JetRing) -> int:
    Q = R.F.q ** R.res_deg
    return (Q + 1) * Q ** (R.d - 1)


# ---------------------------------------------------------------------------
# Level rings O_D
# ---------------------------------------------------------------------------

class LevelRing:
    """The product ring O_D over an effective divisor D = sum d_y [y].

    Elements are tuples of jet-ring elements, one per point, with the points
    kept in a fixed canonical order.
    """

    def __init__(self, F: FieldCtx, entries: Sequence[Tuple[Point, int]]) -> None:
        pts = [p for p, _ in entries]
        if len(set(pts)) != len(pts):
            raise ValueError("divisor points must be pairwise distinct")
        self.F = F
        self.entries: Tuple[Tuple[Point, int], ...] = tuple(
            sorted(entries, key=lambda e: e[0].sort_key())
        )
        self.rings: Tuple[JetRing, ...] = tuple(JetRing(F, p, d) for p, d in self.entries)
        self.size = 1
        for R in self.rings:
            self.size *= R.size
        self.zero = tuple(R.zero for R in self.rings)
        self.one = tuple(R.one for R in self.rings)

    @property
    def npoints(self) -> int:
        return len(self.rings)

    def add(self, a, b):
        return tuple(R.add(x, y) for R, x, y in zip(self.rings, a, b))

    def sub(self, a, b):
        return tuple(R.sub(x, y) for R, x, y in zip(self.rings, a, b))

    def neg(self, a):
        return tuple(R.neg(x) for R, x in zip(self.rings, a))

    def mul(self, a, b):
        return tuple(R.mul(x, y) for R, x, y in zip(self.rings, a, b))

    def is_unit(self, a) -> bool:
        return all(R.is_unit(x) for R, x in zip(self.rings, a))

    def inv(self, a):
        return tuple(R.inv(x) for R, x in zip(self.rings, a))

    def key(self, a) -> Tuple[int, ...]:
        out: Tuple[int, ...] = ()
        for R, x in zip(self.rings, a):
            out += R.key(x)
        return out

    def elements(self) -> Iterator[Tuple[Poly, ...]]:
        check_budget(self.size, f"element enumeration of {self!r}")
        for combo in product(*(list(R.elements()) for R in self.rings)):
            yield combo

    def units(self) -> Iterator[Tuple[Poly, ...]]:
        for combo in product(*(list(R.units()) for R in self.rings)):
            yield combo

    def unit_count(self) -> int:
        n = 1
        for R in self.rings:
            n *= R.unit_count()
        return n

    def embed_scalar(self, c: int) -> Tuple[Poly, ...]:
        """The constant c in F_q embedded diagonally."""
        return tuple((c,) if c else () for _ in self.rings)

    def embed_poly(self, f: Poly) -> Tuple[Poly, ...]:
        """A polynomial in F_q[t] reduced in every component.

        At infinity the reduction of f(t) is only defined for constants; the
        level rings used by graph builds never include infinity.
        """
        out = []
        for R in self.rings:
            if R.point.is_infinity:
                if pdeg(f) > 0:
                    raise ValueError("cannot reduce a nonconstant polynomial at infinity")
                out.append(f)
            else:
                out.append(R.reduce(f))
        return tuple(out)

    def __repr__(self) -> str:
        inner = ", ".join(f"{p}^{d}" for p, d in self.entries)
        return f"LevelRing(q={self.F.q}; {inner})"


# ---------------------------------------------------------------------------
# 2x2 matrices over a jet ring or level ring
# ---------------------------------------------------------------------------

Mat2 = Tuple[Tuple[object, object], Tuple[object, object]]


def mat2(a11, a12, a21, a22) -> Mat2:
    """Rows are trivialization coordinates: ((a11, a12), (a21, a22))."""
    return ((a11, a12), (a21, a22))


def mat_mul(R, A: Mat2, B: Mat2) -> Mat2:
    return (
        (
            R.add(R.mul(A[0][0], B[0][0]), R.mul(A[0][1], B[1][0])),
            R.add(R.mul(A[0][0], B[0][1]), R.mul(A[0][1], B[1][1])),
        ),
        (
            R.add(R.mul(A[1][0], B[0][0]), R.mul(A[1][1], B[1][0])),
            R.add(R.mul(A[1][0], B[0][1]), R.mul(A[1][1], B[1][1])),
        ),
    )


def mat_det(R, A: Mat2):
    return R.sub(R.mul(A[0][0], A[1][1]), R.mul(A[0][1], A[1][0]))


def mat_scale(R, A: Mat2, c) -> Mat2:
    return (
        (R.mul(A[0][0], c), R.mul(A[0][1], c)),
        (R.mul(A[1][0], c), R.mul(A[1][1], c)),
    )


def mat_is_invertible(R, A: Mat2) -> bool:
    return R.is_unit(mat_det(R, A))


def mat_identity(R) -> Mat2:
    return ((R.one, R.zero), (R.zero, R.one))


def mat_key(R: LevelRing, A: Mat2) -> Tuple[int, ...]:
    """Deterministic lexicographic key: point-major, then row-major entries."""
    out: Tuple[int, ...] = ()
    for i, ring in enumerate(R.rings):
        for row in A:
            for entry in row:
                out += ring.key(entry[i])
    return out


def pgl2_normalize(R: LevelRing, A: Mat2) -> Mat2:
    """Canonical representative of A modulo unit scalars of O_D.

    Independently in every product component, the first unit entry in
    row-major scan order is rescaled to 1.  Two invertible matrices normalize
    equal iff they differ by a unit scalar of O_D.
    """
    if not mat_is_invertible(R, A):
        raise ValueError("pgl2_normalize requires an invertible matrix")
    scal = []
    for i, ring in enumerate(R.rings):
        c = None
        for row in A:
            for entry in row:
                if ring.is_unit(entry[i]):
                    c = ring.inv(entry[i])
                    break
            if c is not None:
                break
        if c is None:
            raise ValueError("invertible matrix with no unit entry in a component")
        scal.append(c)
    scalar = tuple(scal)
    return mat_scale(R, A, scalar)


# ---------------------------------------------------------------------------
# Subgroup specifications
# ---------------------------------------------------------------------------

SUBGROUP_TAGS = ("GL2", "Borel", "TkLtimesU", "U", "Scalars", "Tk")


@dataclass(frozen=True)
class SubgroupSpec:
    """A tagged matrix subgroup over a level ring.

    Tags: GL2 (all invertible matrices), Borel (invertible upper triangular),
    TkLtimesU (PGL classes [[1, w],[0, eps]], eps in F_q^x, w in O_D),
    U (unipotent upper triangular), Scalars (unit multiples of the identity),
    Tk (PGL torus classes diag(c, 1) with c in F_q^x).
    """

    tag: str
    ring: LevelRing = field(compare=False)

    def __post_init__(self) -> None:
        if self.tag not in SUBGROUP_TAGS:
            raise ValueError(f"unknown subgroup tag {self.tag!r}; expected one of {SUBGROUP_TAGS}")


def group_order(spec: SubgroupSpec) -> int:
    R = spec.ring
    q = R.F.q
    if spec.tag == "GL2":
        n = 1
        for jr in R.rings:
            Q = q ** jr.res_deg
            n *= (Q * Q - 1) * (Q * Q - Q) * Q ** (4 * (jr.d - 1))
        return n
    if spec.tag == "Borel":
        return R.unit_count() ** 2 * R.size
    if spec.tag == "TkLtimesU":
        return (q - 1) * R.size
    if spec.tag == "U":
        return R.size
    if spec.tag == "Scalars":
        return R.unit_count()
    if spec.tag == "Tk":
        return q - 1
    raise AssertionError(spec.tag)


def enumerate_group(spec: SubgroupSpec) -> Iterator[Mat2]:
    """Yield each subgroup element exactly once (PGL classes for Tk/TkLtimesU)."""
    R = spec.ring
    order = group_order(spec)
    check_budget(order, f"enumeration of {spec.tag} over {R!r}")
    if spec.tag == "GL2":
        pool = list(R.elements())
        for a, b, c, d in product(pool, repeat=4):
            m = mat2(a, b, c, d)
            if mat_is_invertible(R, m):
                yield m
    elif spec.tag == "Borel":
        units = list(R.units())
        pool = list(R.elements())
        for a, d in product(units, repeat=2):
            for b in pool:
                yield mat2(a, b, R.zero, d)
    elif spec.tag == "TkLtimesU":
        for eps in R.F.nonzero():
            e = R.embed_scalar(eps)
            for w in R.elements():
                yield mat2(R.one, w, R.zero, e)
    elif spec.tag == "U":
        for w in R.elements():
            yield mat2(R.one, w, R.zero, R.one)
    elif spec.tag == "Scalars":
        for u in R.units():
            yield mat2(u, R.zero, R.zero, u)
    elif spec.tag == "Tk":
        for c in R.F.nonzero():
            yield mat2(R.embed_scalar(c), R.zero, R.zero, R.one)
    else:
        raise AssertionError(spec.tag)
