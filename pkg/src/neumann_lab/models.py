"""Generators for the lab's graph families and their canonical exhaustions.

Families:

* ``comb``: the two-dimensional half-grid with an exponentially weighted
  base row and geometrically accelerating teeth; vertex (k, n) has measure
  2^{-n} on the base (k = 0) and 1 elsewhere, tooth edges carry weight
  2^{n k} and base edges 4^{n+2}.  Weights are exact big rationals;
  converting them to floats is guarded and caps the usable truncation.
* ``bd``: birth-death chains on 0, 1, 2, ... given by rate and measure
  sequences, either closed-form presets or restricted arithmetic
  expressions in r evaluated exactly in rational arithmetic.
* ``path`` / ``random``: finite paths and seeded random connected graphs
  for the invariant corpus.

Exhaustion rules: prefixes for chains, growing rectangles
{(k, n): k <= 2j, n <= j} for the comb, hop balls otherwise.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .birth_death import BdChain, SeriesCertificate, convergent, divergent
from .errors import InputError, OverflowCapError
from .graphs import Exhaustion, WeightedGraph
from .operators import FLOAT_EXP_CAP

__all__ = [
    "ModelSpec",
    "Model",
    "make_comb",
    "comb_vertex_id",
    "comb_vertex_label",
    "comb_rectangle",
    "comb_truncation",
    "make_bd_chain",
    "make_finite_path",
    "make_random_connected",
    "make_exhaustion",
    "parse_sequence_expr",
    "build_model",
    "PRESETS",
]


@dataclass(frozen=True)
class ModelSpec:
    family: str               # "comb" | "bd" | "path" | "random" | "file"
    parameters: dict
    exhaustion_rule: str      # "comb-rectangles" | "chain-prefixes" | "hop-balls"


@dataclass(frozen=True)
class Model:
    """A graph plus the metadata experiments need to address it."""

    graph: WeightedGraph
    spec: ModelSpec
    origin: int = 0
    chain: BdChain | None = None

    @property
    def name(self) -> str:
        return self.graph.name


# -- comb ---------------------------------------------------------------------


def comb_vertex_id(k: int, n: int) -> int:
    """Pairing (k, n) -> id enumerating diagonals; invertible without state."""
    if k < 0 or n < 0:
        raise InputError(f"comb indices must be nonnegative, got ({k},{n})")
    s = k + n
    return s * (s + 1) // 2 + n


def comb_vertex_label(v: int) -> tuple[int, int]:
    s = int((math.isqrt(8 * v + 1) - 1) // 2)
    n = v - s * (s + 1) // 2
    return s - n, n


def _comb_weight(a: tuple[int, int], b: tuple[int, int]) -> Fraction:
    (k1, n1), (k2, n2) = a, b
    if n1 == n2 and abs(k1 - k2) == 1:
        return Fraction(2) ** (n1 * min(k1, k2))
    if k1 == k2 == 0 and abs(n1 - n2) == 1:
        return Fraction(4) ** (min(n1, n2) + 2)
    raise InputError(f"not a comb edge: {a} - {b}")


def _comb_measure(label: tuple[int, int]) -> Fraction:
    k, n = label
    return Fraction(1, 2 ** n) if k == 0 else Fraction(1)


def _comb_neighbors(v: int) -> dict[int, Fraction]:
    k, n = comb_vertex_label(v)
    out = {}
    out[comb_vertex_id(k + 1, n)] = _comb_weight((k, n), (k + 1, n))
    if k > 0:
        out[comb_vertex_id(k - 1, n)] = _comb_weight((k, n), (k - 1, n))
    if k == 0:
        out[comb_vertex_id(0, n + 1)] = _comb_weight((0, n), (0, n + 1))
        if n > 0:
            out[comb_vertex_id(0, n - 1)] = _comb_weight((0, n), (0, n - 1))
    return out


def make_comb() -> WeightedGraph:
    """The infinite comb as a lazy graph over pairing-function vertex ids."""
    return WeightedGraph.lazy(
        neighbor_fn=_comb_neighbors,
        measure_fn=lambda v: _comb_measure(comb_vertex_label(v)),
        label_fn=comb_vertex_label,
        name="comb",
    )


def comb_rectangle(j: int) -> list[int]:
    """Vertex ids of {(k, n): k <= 2j, n <= j}, new-level ordering by (n, k)."""
    if j < 0:
        raise InputError("rectangle index must be nonnegative")
    _check_comb_exponent(j * max(2 * j - 1, 0))
    out = []
    for jj in range(j + 1):
        # vertices new to level jj, sorted by (n, k)
        fresh = []
        for n in range(jj + 1):
            for k in range(2 * jj + 1):
                if jj == 0 or not (k <= 2 * (jj - 1) and n <= jj - 1):
                    fresh.append((n, k))
        fresh.sort()
        out.extend(comb_vertex_id(k, n) for n, k in fresh)
    return out


def _check_comb_exponent(exponent: int):
    if exponent > FLOAT_EXP_CAP:
        cap = 0
        while (cap + 1) * max(2 * (cap + 1) - 1, 0) <= FLOAT_EXP_CAP:
            cap += 1
        raise OverflowCapError(
            f"comb truncation needs weights ~2^{exponent}, beyond the float cap "
            f"2^{FLOAT_EXP_CAP}; largest usable rectangle index is {cap}",
            usable_cap=cap)


def comb_truncation(depth: int, teeth: int) -> list[int]:
    """Truncation for the tooth-decay solve: tooth 0 to ``depth``, base rows
    n <= teeth, tooth n capped so weights stay float-representable."""
    if depth < 1 or teeth < 1:
        raise InputError("depth and teeth must be >= 1")
    verts = [comb_vertex_id(k, 0) for k in range(depth + 1)]
    for n in range(1, teeth + 1):
        verts.append(comb_vertex_id(0, n))
        k_cap = min(depth, max(2, (FLOAT_EXP_CAP - 100) // n))
        verts.extend(comb_vertex_id(k, n) for k in range(1, k_cap + 1))
    return verts


# -- expression-driven chains -------------------------------------------------

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def parse_sequence_expr(expr: str) -> Callable[[int], Fraction]:
    """Compile a restricted arithmetic expression in r to an exact sequence.

    Allowed: integer literals, the variable r, + - * / and ** with an
    integer-valued exponent, parentheses, unary minus.  Everything is
    evaluated in rational arithmetic, so e.g. ``2**(-r)`` and
    ``1/(r+1)**2`` stay exact at every index.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as ex:
        raise InputError(f"cannot parse expression {expr!r}: {ex}") from None

    def check(node: ast.AST):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, int):
                raise InputError(
                    f"only integer literals are allowed in {expr!r} "
                    f"(write rationals as fractions like 1/2)")
        elif isinstance(node, ast.Name):
            if node.id != "r":
                raise InputError(f"unknown variable {node.id!r} in {expr!r}")
        else:
            raise InputError(f"disallowed syntax {type(node).__name__} in {expr!r}")

    check(tree)

    def evaluate(node: ast.AST, r: int) -> Fraction:
        if isinstance(node, ast.Expression):
            return evaluate(node.body, r)
        if isinstance(node, ast.Constant):
            return Fraction(node.value)
        if isinstance(node, ast.Name):
            return Fraction(r)
        if isinstance(node, ast.UnaryOp):
            v = evaluate(node.operand, r)
            return -v if isinstance(node.op, ast.USub) else v
        left = evaluate(node.left, r)
        right = evaluate(node.right, r)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            if right == 0:
                raise InputError(f"division by zero in {expr!r} at r={r}")
            return left / right
        if right.denominator != 1:
            raise InputError(f"non-integer exponent in {expr!r} at r={r}")
        if left == 0 and right < 0:
            raise InputError(f"zero to a negative power in {expr!r} at r={r}")
        return left ** int(right)

    def fn(r: int) -> Fraction:
        return evaluate(tree, r)

    fn.expression = expr
    return fn


def make_bd_chain(rate, measure, name: str = "bd", *,
                  measure_total=None, measure_tail=None,
                  certificates: dict | None = None) -> Model:
    """Birth-death chain model; rate/measure as expressions or callables.

    The chain graph and the analytic view share the same sequences.
    Positivity is validated on a prefix and enforced lazily afterwards.
    """
    rate_fn = parse_sequence_expr(rate) if isinstance(rate, str) else rate
    measure_fn = parse_sequence_expr(measure) if isinstance(measure, str) else measure
    for r in range(64):
        if rate_fn(r) <= 0:
            raise InputError(f"rate expression nonpositive at r={r}")
        if measure_fn(r) <= 0:
            raise InputError(f"measure expression nonpositive at r={r}")
    chain = BdChain(rate=rate_fn, measure=measure_fn, name=name,
                    measure_total=measure_total, measure_tail=measure_tail,
                    certificates=certificates or {})

    def neighbors(v: int) -> dict:
        out = {v + 1: chain.rate_at(v)}
        if v > 0:
            out[v - 1] = chain.rate_at(v - 1)
        return out

    graph = WeightedGraph.lazy(
        neighbor_fn=neighbors,
        measure_fn=chain.measure_at,
        name=name,
    )
    spec = ModelSpec("bd", {"rate": getattr(rate_fn, "expression", "<callable>"),
                            "measure": getattr(measure_fn, "expression", "<callable>")},
                     "chain-prefixes")
    return Model(graph=graph, spec=spec, origin=0, chain=chain)


# -- finite families ----------------------------------------------------------


def make_finite_path(n: int, b=1, m=1, c=0) -> Model:
    if n < 1:
        raise InputError("path needs at least one vertex")
    edges = {(i, i + 1): b for i in range(n - 1)}
    measure = {i: m for i in range(n)}
    killing = {i: c for i in range(n)} if c else None
    g = WeightedGraph.from_data(edges, measure, killing, name=f"path-{n}")
    return Model(graph=g, spec=ModelSpec("path", {"n": n}, "hop-balls"), origin=0)


def make_random_connected(seed: int, max_vertices: int = 60,
                          with_killing: bool = False) -> Model:
    """Seeded random connected graph: spanning tree plus extra edges,
    b in [0.1, 3], m in [0.5, 2], optional sparse killing in [0, 0.5]."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_vertices + 1))
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = float(rng.uniform(0.1, 3.0))
    for _ in range(int(rng.integers(0, n))):
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        edges.setdefault((u, v), float(rng.uniform(0.1, 3.0)))
    measure = {v: float(rng.uniform(0.5, 2.0)) for v in range(n)}
    killing = {}
    if with_killing:
        for v in range(n):
            if rng.random() < 0.3:
                killing[v] = float(rng.uniform(0.0, 0.5))
    g = WeightedGraph.from_data(edges, measure, killing, name=f"random-{seed}")
    return Model(graph=g, spec=ModelSpec("random", {"seed": seed, "n": n}, "hop-balls"),
                 origin=0)


# -- exhaustions --------------------------------------------------------------


def make_exhaustion(model: Model, count: int,
                    indices: Sequence[int] | None = None) -> Exhaustion:
    """Family-appropriate nested connected sets.

    ``indices`` overrides the default 0..count-1 parameter range: rectangle
    indices for the comb, prefix lengths for chains, hop radii otherwise.
    """
    if count < 1 and not indices:
        raise InputError("count must be >= 1")
    rule = model.spec.exhaustion_rule
    g = model.graph
    if rule == "comb-rectangles":
        idx = list(indices) if indices is not None else list(range(count))
        sets = [comb_rectangle(j) for j in idx]
    elif rule == "chain-prefixes":
        sizes = list(indices) if indices is not None else list(range(1, count + 1))
        if any(s < 1 for s in sizes):
            raise InputError("prefix sizes must be >= 1")
        _check_chain_cap(model, max(sizes))
        sets = [list(range(s)) for s in sizes]
    elif rule == "hop-balls":
        from .analysis import hop_distances
        verts = list(g.vertices())
        dist = hop_distances(g, verts, model.origin)
        radii = list(indices) if indices is not None else list(range(count))
        sets = []
        for r in radii:
            ball = [v for v in verts if dist.get(v, math.inf) <= r]
            ball.sort(key=lambda v: (dist[v], v))
            sets.append(ball)
    else:
        raise InputError(f"unknown exhaustion rule {rule!r}")
    return Exhaustion.build(g, sets)


def _check_chain_cap(model: Model, size: int):
    if model.chain is None:
        return
    probe = model.chain.rate_at(size - 1)
    if isinstance(probe, (int, Fraction)):
        num = Fraction(probe)
        bits = num.numerator.bit_length() - num.denominator.bit_length()
        if bits > FLOAT_EXP_CAP:
            lo, hi = 1, size
            while lo < hi:  # largest representable prefix
                mid = (lo + hi + 1) // 2
                p = Fraction(model.chain.rate_at(mid - 1))
                if p.numerator.bit_length() - p.denominator.bit_length() <= FLOAT_EXP_CAP:
                    lo = mid
                else:
                    hi = mid - 1
            raise OverflowCapError(
                f"chain rates at r={size - 1} exceed the float cap; largest usable "
                f"prefix is {lo}", usable_cap=lo)


# -- presets -------------------------------------------------------------------


@lru_cache(maxsize=None)
def _square_tail(n: int) -> float:
    """sum_{k >= n} 1/k^2 by partial summation with an Euler-Maclaurin tail."""
    cut = n + 20000
    partial = math.fsum(1.0 / (k * k) for k in range(n, cut))
    # remainder sum_{k >= cut}: 1/(cut - 1/2) corrects to O(cut^-5)
    return partial + 1.0 / (cut - 0.5)


def _tail_rate_chain() -> Model:
    """Chain with m(r) = (r+1)^{-2} and b(r, r+1) equal to the tail mass
    m(B_r^c); both classification series then diverge while m(X) is finite."""
    def measure(r: int) -> Fraction:
        return Fraction(1, (r + 1) ** 2)

    def tail(r: int) -> float:
        return _square_tail(r + 2)

    return make_bd_chain(
        rate=tail, measure=measure, name="bd:tail",
        measure_total=float(mp.pi ** 2 / 6),
        measure_tail=tail,
        certificates={
            "measure": "finite",
            "inv_b": divergent("1/b(r) grows like r", power=-1.0),
            "tail": divergent("terms are identically 1", power=0.0),
            "hamburger": divergent("summands grow like r^2", power=-2.0),
        },
    )


def _preset_comb() -> Model:
    return Model(graph=make_comb(),
                 spec=ModelSpec("comb", {}, "comb-rectangles"),
                 origin=comb_vertex_id(0, 0))


PRESETS: dict[str, Callable[[], Model]] = {
    "comb": _preset_comb,
    "bd:unit": lambda: make_bd_chain(
        "1", "1", name="bd:unit",
        certificates={
            "measure": divergent("constant measure", power=0.0),
            "inv_b": divergent("constant terms", power=0.0),
            "hamburger": divergent("summands grow like r^2", power=-2.0),
        }),
    "bd:geo": lambda: make_bd_chain(
        "2**r", "2**(-r)", name="bd:geo",
        measure_total=Fraction(2),
        measure_tail=lambda r: Fraction(1, 2 ** r),
        certificates={
            "measure": "finite",
            "inv_b": convergent("geometric", ratio=0.5),
            "tail": convergent("terms 4^{-r}", ratio=0.25),
            "hamburger": convergent("summands shrink like 2^{-r}", ratio=0.5),
        }),
    "bd:explosive": lambda: make_bd_chain(
        "4**r", "1", name="bd:explosive",
        certificates={
            "measure": divergent("constant measure", power=0.0),
            "inv_b": convergent("geometric", ratio=0.25),
            "hamburger": divergent("summands approach (4/3)^2", power=0.0),
        }),
    "bd:tail": _tail_rate_chain,
}


def build_model(name: str, seed: int | None = None) -> Model:
    """Resolve a model name: preset, ``random[:n]``, ``path:n`` or ``file:path``."""
    if name in PRESETS:
        return PRESETS[name]()
    if name.startswith("file:"):
        from .graphs import parse_graph_file
        path = name[5:]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as ex:
            raise InputError(f"cannot read graph file {path!r}: {ex}") from ex
        g = parse_graph_file(text, name=path)
        origin = min(g.vertices())
        return Model(graph=g, spec=ModelSpec("file", {"path": path}, "hop-balls"),
                     origin=origin)
    if name.startswith("path:"):
        return make_finite_path(int(name[5:]))
    if name.startswith("random"):
        size = 60
        if ":" in name:
            size = int(name.split(":", 1)[1])
        if seed is None:
            raise InputError("random model needs --seed")
        return make_random_connected(seed, max_vertices=size)
    if name.startswith("bd:"):
        raise InputError(
            f"unknown chain preset {name!r}; available: bd:unit, bd:geo, "
            f"bd:explosive, bd:tail, or use make_bd_chain with expressions")
    raise InputError(f"unknown model {name!r}")
