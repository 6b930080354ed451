"""Command-line interface: builders, verifiers, spectral queries, exports.

Exit codes: 0 success, 2 configuration error, 3 mathematical-hypothesis
violation, 4 internal invariant failure.  All outputs are exact strings and
byte-reproducible; files are written atomically and the build manifest
records a content hash of the emitted graph.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .rings import (
    BudgetError,
    FieldCtx,
    field_ctx,
    parse_poly,
    parse_point,
    poly_str,
    Point,
)
from .bundles import DivisorSpec, cusp_threshold, deep_threshold, fiber_count_formula
from .edges import (
    gaussian_binomial,
    neighbors_bruteforce,
    neighbors_cusp_rule,
    pgln_total_out_degree,
)
from .graph import (
    HeckeGraph,
    build_graph,
    check_covering,
    check_type2_rule,
    export,
    monodromy_group,
    parse,
    split_components,
)
from .spectral import (
    AlgebraicField,
    ExactScalar,
    HypothesisError,
    Propagation,
    QQ,
    WindowError,
    _nullspace,
    charpoly_at,
    check_propagative,
    dim_bounds,
    layer_decompose,
    nucleus_spectrum,
    propagate_eigenform,
    solve_resolvent,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_INTERNAL = 4

ALL_CHECKS = ("degrees", "covering", "splitting", "monodromy", "oracle", "qbinom", "fibers")


class ConfigError(ValueError):
    """Invalid command-line configuration."""


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _parse_point_str(F: FieldCtx, text: str) -> Point:
    """A point as a monic irreducible polynomial in t (or x) over F_q."""
    text = text.strip()
    if text == "inf":
        raise ConfigError("the point at infinity is not supported; use a finite point")
    if "t" not in text and "x" in text:
        text = text.replace("x", "t")
    try:
        return parse_point(F, text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_divisor(F: FieldCtx, text: str) -> DivisorSpec:
    """Comma-separated point:multiplicity pairs, e.g. 't:1,t+1:2'; '' is 0."""
    text = text.strip()
    if not text or text == "0":
        return DivisorSpec(())
    entries = []
    for chunk in text.split(","):
        point_str, sep, mult_str = chunk.rpartition(":")
        if not sep:
            point_str, mult_str = chunk, "1"
        try:
            mult = int(mult_str)
        except ValueError as exc:
            raise ConfigError(f"bad multiplicity in divisor entry {chunk!r}") from exc
        if mult < 1:
            raise ConfigError(f"divisor multiplicities must be >= 1, got {mult}")
        entries.append((_parse_point_str(F, point_str), mult))
    try:
        return DivisorSpec.make(entries)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_qpoly(text: str) -> Tuple[Fraction, ...]:
    """A polynomial over Q in x (or t), little-endian coefficient tuple."""
    text = text.strip().replace(" ", "").replace("t", "x")
    if not text:
        raise ConfigError("empty polynomial string")
    text = text.replace("-", "+-")
    coeffs: Dict[int, Fraction] = {}
    for term in text.split("+"):
        if not term:
            continue
        if "x" in term:
            head, _, tail = term.partition("x")
            if head in ("", "-"):
                coeff = Fraction(-1 if head == "-" else 1)
            else:
                coeff = Fraction(head.rstrip("*"))
            power = 1 if tail == "" else int(tail.lstrip("^"))
        else:
            coeff, power = Fraction(term), 0
        coeffs[power] = coeffs.get(power, Fraction(0)) + coeff
    deg = max(coeffs) if coeffs else 0
    return tuple(coeffs.get(i, Fraction(0)) for i in range(deg + 1))


def parse_scalar(text: str) -> ExactScalar:
    """Exact scalars: 'p/q' rationals, or algebraic 'minpoly:residue'."""
    text = text.strip()
    if ":" in text:
        mp_str, res_str = text.split(":", 1)
        mp = _parse_qpoly(mp_str)
        try:
            K = AlgebraicField(mp)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = _parse_qpoly(res_str)
        if len(res) > K.degree:
            raise ConfigError("residue degree must be below the minimal polynomial degree")
        value = tuple(res) + (Fraction(0),) * (K.degree - len(res))
        return ExactScalar(K, value)
    try:
        return ExactScalar.rational(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad rational {text!r}") from exc


def _scalar_str(K, value) -> str:
    return K.to_str(value)


def _field(q: int) -> FieldCtx:
    try:
        return field_ctx(q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _common_config(args) -> Tuple[FieldCtx, DivisorSpec, Point]:
    if args.q is None or args.x is None or args.div is None:
        raise ConfigError("--q, --div and --x are required (flags or config file)")
    F = _field(args.q)
    D = _parse_divisor(F, args.div)
    x = _parse_point_str(F, args.x)
    return F, D, x


def _default_n_max(D: DivisorSpec, x: Point, depth: int = 6) -> int:
    return max(deep_threshold(D, x), -1) + 2 + depth


def _build(args, F: FieldCtx, D: DivisorSpec, x: Point) -> HeckeGraph:
    n_max = args.n_max if args.n_max is not None else _default_n_max(D, x)
    builder = getattr(args, "builder", None) or "hybrid"
    if builder not in ("bruteforce", "cusp_rule", "hybrid"):
        raise ConfigError(f"unknown builder {builder!r}")
    return build_graph(args.q, D, x, n_max, builder)


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".heckelab-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(payload: dict, out: Optional[str]) -> None:
    data = (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()
    if out:
        _atomic_write(out, data)
    else:
        sys.stdout.write(data.decode())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build(args) -> int:
    F, D, x = _common_config(args)
    G = _build(args, F, D, x)
    fmt = args.format or "json"
    if fmt not in ("json", "dot"):
        raise ConfigError(f"unknown format {fmt!r}")
    data = export(G, fmt)
    if args.out:
        _atomic_write(args.out, data)
    else:
        sys.stdout.write(data.decode())
    manifest = {
        "config": {
            "q": args.q,
            "divisor": str(D),
            "x": poly_str(x.poly),
            "n_max": G.n_max,
            "builder": G.builder,
            "format": fmt,
        },
        "counts": {
            "vertices": len(G.vertex_ids()),
            "edges": len(G.edges),
            "boundary": len(G.boundary),
        },
        "thresholds": {
            "cusp": cusp_threshold(D),
            "deep": deep_threshold(D, x),
        },
        "content_hash": "sha256:" + hashlib.sha256(data).hexdigest(),
    }
    manifest_path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if manifest_path:
        _atomic_write(
            manifest_path,
            (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode(),
        )
    else:
        sys.stderr.write(json.dumps(manifest, sort_keys=True) + "\n")
    return EXIT_OK


def _check_degrees(G: HeckeGraph) -> Tuple[bool, Optional[dict]]:
    d_x = G.D.mult(G.x)
    expected = G.q ** G.x.deg + (1 if d_x == 0 else 0)
    for v in G.vertex_ids():
        total = G.out_degree(v)
        if total != expected:
            return False, {"vertex": v, "out_degree": total, "expected": expected}
    return True, None


def _check_oracle(G: HeckeGraph) -> Tuple[bool, Optional[dict]]:
    from .bundles import level_ring, vertex_key

    F = G.F
    L = level_ring(F, G.D)
    thr = deep_threshold(G.D, G.x)
    for i in G.vertex_ids(thr + 1, G.n_max):
        v = G.vertices[i]
        brute = neighbors_bruteforce(F, v, G.D, G.x)
        rule = neighbors_cusp_rule(F, v, G.D, G.x)
        bk = sorted((vertex_key(L, e.dst), e.mult) for e in brute)
        rk = sorted((vertex_key(L, e.dst), e.mult) for e in rule)
        if bk != rk:
            return False, {"vertex": i, "gap": v.gap}
    return True, None


def _check_qbinom(G: HeckeGraph) -> Tuple[bool, Optional[dict]]:
    for n in range(2, 7):
        got = pgln_total_out_degree(G.q, G.x.deg, n)
        want = gaussian_binomial(n, 1, G.q ** G.x.deg)
        if got != want:
            return False, {"n": n, "got": got, "expected": want}
    return True, None


def _divisor_diff(D: DivisorSpec, D2: DivisorSpec) -> DivisorSpec:
    entries = []
    for p, m in D.entries:
        m2 = D2.mult(p)
        if m2 > m:
            raise ConfigError("base divisor must divide the full divisor")
        if m - m2:
            entries.append((p, m - m2))
    for p, m in D2.entries:
        if D.mult(p) < m:
            raise ConfigError("base divisor must divide the full divisor")
    return DivisorSpec.make(entries) if entries else DivisorSpec(())


def _covering_base(args, G: HeckeGraph) -> Tuple[DivisorSpec, HeckeGraph]:
    F = G.F
    d_x = G.D.mult(G.x)
    if args.d2 is not None:
        D2 = _parse_divisor(F, args.d2)
    else:
        D2 = DivisorSpec.make([(G.x, d_x)]) if d_x else DivisorSpec(())
    for p, m in D2.entries:
        if G.D.mult(p) < m:
            raise ConfigError("base divisor must divide the full divisor")
    base = build_graph(G.q, D2, G.x, G.n_max, "hybrid")
    return D2, base


def cmd_verify(args) -> int:
    F, D, x = _common_config(args)
    if args.graph:
        with open(args.graph, "rb") as fh:
            G = parse(fh.read())
    else:
        G = _build(args, F, D, x)
    checks = list(ALL_CHECKS) if not args.checks else [
        c.strip() for c in args.checks.split(",") if c.strip()
    ]
    for c in checks:
        if c not in ALL_CHECKS:
            raise ConfigError(f"unknown check {c!r}; choose from {', '.join(ALL_CHECKS)}")
    report: List[dict] = []

    def record(name: str, ok: bool, witness=None, note=None) -> None:
        entry = {"check": name, "ok": ok}
        if witness is not None:
            entry["witness"] = witness
        if note is not None:
            entry["note"] = note
        report.append(entry)

    base_cache: Optional[Tuple[DivisorSpec, HeckeGraph]] = None

    def base_graph() -> Tuple[DivisorSpec, HeckeGraph]:
        nonlocal base_cache
        if base_cache is None:
            base_cache = _covering_base(args, G)
        return base_cache

    for name in checks:
        if name == "degrees":
            ok, witness = _check_degrees(G)
            record(name, ok, witness)
        elif name == "oracle":
            ok, witness = _check_oracle(G)
            record(name, ok, witness)
        elif name == "qbinom":
            ok, witness = _check_qbinom(G)
            record(name, ok, witness)
        elif name in ("covering", "fibers"):
            D2, base = base_graph()
            if D2 == G.D:
                record(name, True, note="base equals the full divisor; identity covering")
                continue
            w = check_covering(G, base)
            if name == "covering":
                record(name, w.ok, w.failures[:3] or None, note=f"degree {w.degree}")
            else:
                want = fiber_count_formula(G.q, _divisor_diff(G.D, D2), D2.is_zero)
                ok = w.ok and w.degree == want
                record(name, ok, None if ok else {"degree": w.degree, "expected": want})
        elif name == "splitting":
            D2, base = base_graph()
            if D2 == G.D:
                record(name, True, note="base equals the full divisor; trivial splitting")
                continue
            rep = split_components(G, _divisor_diff(G.D, D2), D2)
            record(
                name,
                rep.ok,
                rep.failures[:3] or None,
                note=f"{len(rep.components)} components, expected {rep.expected}",
            )
        elif name == "monodromy":
            d_x = G.D.mult(G.x)
            if d_x == 0 or G.D == DivisorSpec.make([(G.x, d_x)]):
                record(name, True, note="no nontrivial fibers over x; monodromy trivial")
                continue
            try:
                ts = monodromy_group(G)
                fails = check_type2_rule(G) if G.q == 4 else []
                ok = not fails
                record(
                    name,
                    ok,
                    fails[:3] or None,
                    note="t values: " + ", ".join(poly_str(t) for t in sorted(ts)),
                )
            except ValueError as exc:
                record(name, False, str(exc))
    all_ok = all(entry["ok"] for entry in report)
    _emit({"ok": all_ok, "checks": report}, args.out)
    return EXIT_OK if all_ok else EXIT_INTERNAL


def cmd_spectrum(args) -> int:
    F, D, x = _common_config(args)
    G = _build(args, F, D, x)
    L = layer_decompose(G)
    spec = nucleus_spectrum(L)
    _emit(
        {
            "charpoly": list(spec.charpoly),
            "factors": [[list(f), m] for f, m in spec.factors],
            "gershgorin_bound": spec.gershgorin_bound,
            "gershgorin_ok": spec.gershgorin_ok,
            "propagative": check_propagative(L),
            "core_size": len(L.gamma_prime),
            "layer_sizes": [len(layer) for layer in L.layers],
        },
        args.out,
    )
    return EXIT_OK


def cmd_dims(args) -> int:
    F, D, x = _common_config(args)
    if not args.lam:
        raise ConfigError("--lambda is required")
    G = _build(args, F, D, x)
    L = layer_decompose(G)
    rows = []
    for text in args.lam:
        lam = parse_scalar(text)
        db = dim_bounds(lam, L)
        rows.append(
            {
                "lambda": text,
                "lower": db.lower,
                "upper": db.upper,
                "exact": db.exact,
                "window_limited": db.window_limited,
            }
        )
    if len(rows) == 1:
        out = dict(rows[0])
        del out["lambda"]
        _emit(out, args.out)
    else:
        _emit({"bounds": rows}, args.out)
    return EXIT_OK


def _vertex_rows(G: HeckeGraph, K, table: Dict[int, object]) -> List[dict]:
    rows = []
    for v in sorted(table):
        vert = G.vertices[v]
        rows.append(
            {
                "id": v,
                "gap": vert.gap,
                "layer": vert.layer,
                "value": _scalar_str(K, table[v]),
            }
        )
    return rows


def cmd_propagate(args) -> int:
    F, D, x = _common_config(args)
    if args.lam is None:
        raise ConfigError("--lambda is required")
    lam = parse_scalar(args.lam[0] if isinstance(args.lam, list) else args.lam)
    depth = args.depth if args.depth is not None else 6
    if args.n_max is None:
        args = argparse.Namespace(**{**vars(args), "n_max": _default_n_max(D, x, depth)})
    G = _build(args, F, D, x)
    L = layer_decompose(G)
    K = lam.field
    prop = Propagation(L, lam)
    basis = _nullspace(K, [r[:-1] for r in prop.constraints], len(prop.unknowns))
    if not basis:
        raise HypothesisError("no eigenform for the requested lambda on this window")
    a = Fraction(args.seed_a or "1")
    seed = {u: basis[0][i] for i, u in enumerate(prop.unknowns)}
    table = propagate_eigenform(lam, seed, L, depth)
    # normalize so the lowest-id vertex takes the value a
    pivot = min(table)
    if K.is_zero(table[pivot]):
        raise HypothesisError("eigenform vanishes at the normalization vertex")
    factor = K.mul(K.from_int(a), K.inv(table[pivot]))
    table = {v: K.mul(factor, val) for v, val in table.items()}
    _emit(
        {
            "lambda": str(lam),
            "normalization_vertex": pivot,
            "values": _vertex_rows(G, K, table),
        },
        args.out,
    )
    return EXIT_OK


def _offending_factor(L, lam: ExactScalar) -> Optional[List[int]]:
    spec = nucleus_spectrum(L)
    K = lam.field
    for coeffs, _ in spec.factors:
        total, power = K.zero, K.one
        for c in coeffs:
            total = K.add(total, K.mul(K.from_int(c), power))
            power = K.mul(power, lam.value)
        if K.is_zero(total):
            return list(coeffs)
    return None


def cmd_solve(args) -> int:
    F, D, x = _common_config(args)
    if args.lam is None:
        raise ConfigError("--lambda is required")
    lam = parse_scalar(args.lam[0] if isinstance(args.lam, list) else args.lam)
    G = _build(args, F, D, x)
    L = layer_decompose(G)
    K = lam.field
    g: Dict[int, object] = {}
    if args.g:
        for chunk in args.g.split(","):
            vid_str, sep, val_str = chunk.partition(":")
            if not sep:
                raise ConfigError(f"bad right-hand side entry {chunk!r}; use id:value")
            try:
                vid = int(vid_str)
                val = Fraction(val_str)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad right-hand side entry {chunk!r}") from exc
            if vid < 0 or vid >= len(G.vertices) or G.is_boundary(vid):
                raise ConfigError(f"right-hand side vertex {vid} is not interior")
            g[vid] = K.from_int(val)
    try:
        sol = solve_resolvent(lam, g, L, args.depth)
    except HypothesisError as exc:
        factor = _offending_factor(L, lam)
        raise HypothesisError(
            f"{exc}; offending charpoly factor {factor}" if factor else str(exc)
        ) from exc
    _emit(
        {
            "lambda": str(lam),
            "particular": _vertex_rows(G, K, sol.particular),
            "homogeneous_dim": len(sol.homogeneous),
            "homogeneous": [_vertex_rows(G, K, h) for h in sol.homogeneous],
        },
        args.out,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flag defaults")
    p.add_argument("--q", type=int, help="prime power order of the base field")
    p.add_argument("--div", help="divisor as point:mult pairs, e.g. 't:1,t+1:1'")
    p.add_argument("--x", help="the Hecke point as a monic irreducible polynomial in t")
    p.add_argument("--n-max", dest="n_max", type=int, help="largest gap in the window")
    p.add_argument("--builder", choices=("bruteforce", "cusp_rule", "hybrid"))
    p.add_argument("--out", help="output path (stdout if omitted)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heckelab",
        description="Graphs of Hecke operators for PGL2 over P1 and their eigenforms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a graph window and write JSON or DOT")
    _add_common(p)
    p.add_argument("--format", choices=("json", "dot"))
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", help="run structural checks and report pass/fail")
    _add_common(p)
    p.add_argument("--checks", help="comma list from: " + ", ".join(ALL_CHECKS))
    p.add_argument("--d2", help="base divisor for covering/splitting checks")
    p.add_argument("--graph", help="verify a previously exported graph file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="nucleus characteristic polynomial and factors")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dims", help="eigenspace dimension bounds at exact lambdas")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", action="append", help="exact scalar, repeatable")
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("propagate", help="propagate a normalized eigenform")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", help="exact scalar")
    p.add_argument("--seed-a", dest="seed_a", help="normalization value a (default 1)")
    p.add_argument("--depth", type=int, help="layers beyond the first (default 6)")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("solve", help="solve the resolvent equation (Phi - lambda) f = g")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", help="exact scalar")
    p.add_argument("--g", help="right-hand side as id:value pairs, comma separated")
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_solve)
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    for key, value in data.items():
        attr = key.replace("-", "_")
        if attr == "lambda":
            attr = "lam"
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            if attr == "lam" and not isinstance(value, list):
                value = [str(value)]
            setattr(args, attr, value)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args)
        return args.func(args)
    except (ConfigError, BudgetError, WindowError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except HypothesisError as exc:
        sys.stderr.write(f"hypothesis violation: {exc}\n")
        return EXIT_HYPOTHESIS
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except (AssertionError, RuntimeError) as exc:
        sys.stderr.write(f"internal invariant failure: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
