"""Weighted graphs over discrete measure spaces.

A graph here is a countable vertex set X with a strictly positive measure m,
symmetric nonnegative edge weights b with zero diagonal and finite row sums,
and a nonnegative killing term c.  Vertices are opaque integer ids; models
that need structured indices (e.g. a two-dimensional comb) attach a label map.

Finite graphs store each undirected edge once and mirror it on read, which
makes the symmetry b(x,y) = b(y,x) hold by construction.  Infinite graphs are
described by neighbor/measure/killing callbacks and are only ever
materialized through an :class:`Exhaustion`.

Weights may be ``int``, :class:`~fractions.Fraction`, or ``float``.  Exact
rational weights survive untouched until operator assembly, which matters for
models whose weights span hundreds of orders of magnitude.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .errors import InputError

__all__ = [
    "WeightedGraph",
    "Exhaustion",
    "VertexFunction",
    "formal_laplacian",
    "weighted_degree",
    "vertex_boundary",
    "is_connected",
    "parse_graph_file",
    "write_graph_file",
]


def _as_number(x):
    """Accept int/Fraction/float weights, reject everything else."""
    if isinstance(x, (int, Fraction, float)):
        return x
    raise InputError(f"unsupported numeric type {type(x).__name__}")


class WeightedGraph:
    """Immutable weighted graph, either finite (explicit) or lazy (callbacks).

    Parameters are not passed directly; use :meth:`from_data` for finite
    graphs and :meth:`lazy` for infinite ones.
    """

    def __init__(self, *, _edges=None, _measure=None, _killing=None,
                 _neighbor_fn=None, _measure_fn=None, _killing_fn=None,
                 _row_sum_fn=None, _label_fn=None, name=""):
        self.name = name
        self._edges = _edges          # {(min,max): b} for finite graphs
        self._adj = None              # {x: {y: b}} mirror, finite only
        self._measure = _measure
        self._killing = _killing
        self._neighbor_fn = _neighbor_fn
        self._measure_fn = _measure_fn
        self._killing_fn = _killing_fn
        self._row_sum_fn = _row_sum_fn
        self._label_fn = _label_fn
        if _edges is not None:
            adj = {x: {} for x in _measure}
            for (x, y), b in _edges.items():
                adj[x][y] = b
                adj[y][x] = b
            self._adj = adj

    # -- construction ---------------------------------------------------

    @classmethod
    def from_data(cls, edges: Mapping[tuple[int, int], object],
                  measure: Mapping[int, object],
                  killing: Mapping[int, object] | None = None,
                  name: str = "") -> "WeightedGraph":
        """Build a finite graph from one-entry-per-edge data.

        ``edges`` maps unordered pairs to positive weights; supplying the
        same pair twice (in either orientation) is rejected, as are loops,
        nonpositive measures and negative weights.
        """
        killing = dict(killing or {})
        canon: dict[tuple[int, int], object] = {}
        for (x, y), b in edges.items():
            if x == y:
                raise InputError(f"loop edge at vertex {x}")
            b = _as_number(b)
            if b < 0:
                raise InputError(f"negative edge weight b({x},{y}) = {b}")
            if b == 0:
                continue
            key = (x, y) if x < y else (y, x)
            if key in canon:
                raise InputError(f"duplicate edge {key}")
            canon[key] = b
        m = {}
        for x, mx in measure.items():
            mx = _as_number(mx)
            if mx <= 0:
                raise InputError(f"nonpositive measure m({x}) = {mx}")
            m[x] = mx
        for (x, y) in canon:
            if x not in m or y not in m:
                raise InputError(f"edge ({x},{y}) touches unknown vertex")
        for x, cx in killing.items():
            cx = _as_number(cx)
            if cx < 0:
                raise InputError(f"negative killing c({x}) = {cx}")
            if x not in m:
                raise InputError(f"killing on unknown vertex {x}")
        return cls(_edges=canon, _measure=m, _killing=killing, name=name)

    @classmethod
    def lazy(cls, neighbor_fn: Callable[[int], Mapping[int, object]],
             measure_fn: Callable[[int], object],
             killing_fn: Callable[[int], object] | None = None,
             row_sum_fn: Callable[[int], object] | None = None,
             label_fn: Callable[[int], object] | None = None,
             name: str = "") -> "WeightedGraph":
        """Build a lazily enumerated (typically infinite) graph.

        ``neighbor_fn(x)`` returns ``{y: b(x,y)}`` for the locally finite
        neighborhood of ``x``; ``row_sum_fn`` may be supplied when the total
        degree has a cheaper closed form than summing neighbors.
        """
        return cls(_neighbor_fn=neighbor_fn, _measure_fn=measure_fn,
                   _killing_fn=killing_fn, _row_sum_fn=row_sum_fn,
                   _label_fn=label_fn, name=name)

    # -- queries ---------------------------------------------------------

    @property
    def is_finite(self) -> bool:
        return self._edges is not None

    def vertices(self) -> Iterable[int]:
        if not self.is_finite:
            raise InputError("lazy graph has no global vertex enumeration")
        return sorted(self._measure)

    def __len__(self) -> int:
        if not self.is_finite:
            raise InputError("lazy graph has no size")
        return len(self._measure)

    def neighbors(self, x: int) -> dict[int, object]:
        """Neighbor map {y: b(x,y)} with positive weights only."""
        if self.is_finite:
            return dict(self._adj.get(x, {}))
        return {y: b for y, b in self._neighbor_fn(x).items() if b > 0}

    def edge_weight(self, x: int, y: int):
        """b(x,y), mirrored read; 0 for non-edges and on the diagonal."""
        if x == y:
            return 0
        if self.is_finite:
            key = (x, y) if x < y else (y, x)
            return self._edges.get(key, 0)
        return self._neighbor_fn(x).get(y, 0)

    def measure(self, x: int):
        if self.is_finite:
            try:
                return self._measure[x]
            except KeyError:
                raise InputError(f"unknown vertex {x}") from None
        return self._measure_fn(x)

    def killing(self, x: int):
        if self.is_finite:
            return self._killing.get(x, 0)
        if self._killing_fn is None:
            return 0
        return self._killing_fn(x)

    def row_sum(self, x: int):
        """Total degree sum_y b(x,y) of the full (unrestricted) graph."""
        if self._row_sum_fn is not None:
            return self._row_sum_fn(x)
        return sum(self.neighbors(x).values())

    def label(self, x: int):
        if self._label_fn is None:
            return x
        return self._label_fn(x)


# -- vertex functions ------------------------------------------------------


@dataclass(frozen=True)
class VertexFunction:
    """Finitely supported (or truncation-supported) function on vertices.

    ``values`` omits zeros; evaluation outside the stored support returns 0.
    Norms are measure-weighted: ``norm(g, p)**p == sum |f|^p m`` and
    ``norm(g, inf) == sup |f|``.
    """

    values: Mapping[int, object]
    finite_support: bool = True

    def __call__(self, x: int):
        return self.values.get(x, 0)

    def support(self) -> list[int]:
        return [x for x, v in self.values.items() if v != 0]

    def norm(self, graph: WeightedGraph, p: float = 2) -> float:
        if p == math.inf:
            return max((abs(float(v)) for v in self.values.values()), default=0.0)
        if p <= 0:
            raise InputError(f"invalid norm order {p}")
        total = 0.0
        for x, v in self.values.items():
            total += abs(float(v)) ** p * float(graph.measure(x))
        return total ** (1.0 / p)

    @staticmethod
    def indicator(x: int) -> "VertexFunction":
        return VertexFunction({x: 1})

    @staticmethod
    def delta(graph: WeightedGraph, x: int) -> "VertexFunction":
        """Point mass normalized to unit l1(m) norm: 1_x / m(x)."""
        m = graph.measure(x)
        if isinstance(m, (int, Fraction)):
            return VertexFunction({x: Fraction(1, 1) / Fraction(m)})
        return VertexFunction({x: 1.0 / m})


# -- exhaustions -----------------------------------------------------------


@dataclass(frozen=True)
class Exhaustion:
    """Nested finite connected vertex sets X_0 <= X_1 <= ... of one graph.

    The per-set vertex order is the insertion order: X_{k+1} lists X_k's
    vertices first, then the new ones, so extension-by-zero embeddings are
    index-stable across levels.
    """

    graph: WeightedGraph
    sets: tuple[tuple[int, ...], ...] = field(default=())

    @staticmethod
    def build(graph: WeightedGraph, sets: Sequence[Sequence[int]]) -> "Exhaustion":
        if not sets:
            raise InputError("exhaustion needs at least one set")
        canon: list[tuple[int, ...]] = []
        prev: list[int] = []
        prev_set: set[int] = set()
        for k, raw in enumerate(sets):
            raw = list(raw)
            raw_set = set(raw)
            if len(raw) != len(raw_set):
                raise InputError(f"duplicate vertices in exhaustion set {k}")
            if not prev_set <= raw_set:
                raise InputError(f"exhaustion set {k} does not contain set {k - 1}")
            new = [x for x in raw if x not in prev_set]
            ordered = prev + new
            if not is_connected(graph, ordered):
                raise InputError(f"exhaustion set {k} induces a disconnected subgraph")
            canon.append(tuple(ordered))
            prev, prev_set = ordered, raw_set
        return Exhaustion(graph, tuple(canon))

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, k: int) -> tuple[int, ...]:
        return self.sets[k]

    def truncated(self, count: int) -> "Exhaustion":
        return Exhaustion(self.graph, self.sets[:count])


# -- pointwise operations --------------------------------------------------


def formal_laplacian(g: WeightedGraph, f: VertexFunction, x: int):
    """(1/m) sum_y b(x,y)(f(x) - f(y)) + (c/m) f(x) at a single vertex.

    Requires sum_y b(x,y)|f(y)| < infinity, which holds automatically for
    finitely supported f on locally finite graphs.
    """
    if not f.finite_support and not g.is_finite:
        raise InputError("formal Laplacian needs finitely supported f on lazy graphs")
    fx = f(x)
    acc = 0
    for y, b in g.neighbors(x).items():
        acc += b * (fx - f(y))
    m = g.measure(x)
    return (acc + g.killing(x) * fx) / m


def weighted_degree(g: WeightedGraph, x: int):
    """(sum_y b(x,y) + c(x)) / m(x)."""
    return (g.row_sum(x) + g.killing(x)) / g.measure(x)


def vertex_boundary(g: WeightedGraph, subset: Iterable[int]) -> set[int]:
    """Vertices of the subset carrying an edge that leaves it."""
    inside = set(subset)
    out = set()
    for x in inside:
        for y, b in g.neighbors(x).items():
            if b > 0 and y not in inside:
                out.add(x)
                break
    return out


def is_connected(g: WeightedGraph, subset: Iterable[int]) -> bool:
    """True iff the subgraph induced on the finite subset is connected."""
    inside = set(subset)
    if not inside:
        return True
    start = next(iter(inside))
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y, b in g.neighbors(x).items():
            if b > 0 and y in inside and y not in seen:
                seen.add(y)
                queue.append(y)
    return seen == inside


# -- file format -------------------------------------------------------------
#
#   # comment
#   V <id> <m> <c>
#   E <id1> <id2> <b>
#
# Values are parsed as Fractions when they contain '/' or are integers,
# as floats otherwise.


def _parse_value(tok: str):
    if "/" in tok:
        return Fraction(tok)
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def parse_graph_file(text: str, name: str = "file") -> WeightedGraph:
    """Parse the line-oriented graph format; duplicate edges, nonpositive m
    and negative b or c are rejected."""
    measure: dict[int, object] = {}
    killing: dict[int, object] = {}
    edges: dict[tuple[int, int], object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "V":
                if len(parts) != 4:
                    raise InputError("V line needs: V <id> <m> <c>")
                x = int(parts[1])
                if x in measure:
                    raise InputError(f"duplicate vertex {x}")
                m = _parse_value(parts[2])
                c = _parse_value(parts[3])
                if m <= 0:
                    raise InputError(f"nonpositive measure at vertex {x}")
                if c < 0:
                    raise InputError(f"negative killing at vertex {x}")
                measure[x] = m
                if c != 0:
                    killing[x] = c
            elif parts[0] == "E":
                if len(parts) != 4:
                    raise InputError("E line needs: E <id1> <id2> <b>")
                x, y = int(parts[1]), int(parts[2])
                b = _parse_value(parts[3])
                if b < 0:
                    raise InputError(f"negative edge weight ({x},{y})")
                key = (x, y) if x < y else (y, x)
                if key in edges:
                    raise InputError(f"duplicate edge {key}")
                edges[key] = b
            else:
                raise InputError(f"unknown record {parts[0]!r}")
        except (ValueError, ZeroDivisionError) as ex:
            raise InputError(f"line {lineno}: {ex}") from ex
        except InputError as ex:
            raise InputError(f"line {lineno}: {ex}") from None
    return WeightedGraph.from_data(edges, measure, killing, name=name)


def write_graph_file(g: WeightedGraph) -> str:
    """Serialize a finite graph back to the text format."""
    if not g.is_finite:
        raise InputError("only finite graphs can be serialized")
    lines = []
    for x in g.vertices():
        lines.append(f"V {x} {g.measure(x)} {g.killing(x)}")
    done = set()
    for x in g.vertices():
        for y, b in sorted(g.neighbors(x).items()):
            key = (x, y) if x < y else (y, x)
            if key not in done:
                done.add(key)
                lines.append(f"E {key[0]} {key[1]} {b}")
    return "\n".join(lines) + "\n"
