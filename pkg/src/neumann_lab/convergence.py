"""Exhaustion experiments: Neumann convergence curves, Dirichlet-gap
diagnostics and l1 mass-defect runs.

The infinite-graph heat operators are approximated by large truncations.
The Dirichlet side enjoys domain monotonicity (truncations increase
entrywise for nonnegative data), so its reference is a monotone limit with
an increment stopping rule.  The Neumann side has no monotonicity; when no
explicit reference is supplied, the largest truncation is accepted only
after a self-consistency check (distance between the two largest iterates
below tolerance).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NeumannLabError, TruncationInsufficientError
from .graphs import Exhaustion, VertexFunction, WeightedGraph
from .operators import OperatorKind, assemble_dirichlet, assemble_neumann
from .semigroup import SemigroupEngine

__all__ = [
    "ConvergenceReport",
    "dirichlet_reference",
    "dirichlet_resolvent_reference",
    "neumann_convergence_experiment",
    "dirichlet_gap_experiment",
    "l1_defect_experiment",
    "DEFAULT_REFERENCE_TOL",
]

DEFAULT_REFERENCE_TOL = 1e-8

# entrywise slack for the Dirichlet monotonicity assertion
MONOTONE_SLACK = 1e-11

PAIRING_SLACK = 1e-10

GAP_FLOOR_ABSOLUTE = 1e-6


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("NEUMANN_LAB_THREADS")
    if cap is not None:
        try:
            cap = max(1, int(cap))
        except ValueError:
            raise InputError(f"NEUMANN_LAB_THREADS={cap!r} is not an integer") from None
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _ordered_map(fn: Callable, items: Sequence):
    """Map preserving order; parallel when allowed, identical results either way."""
    workers = _worker_count(len(items))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _norms(diff: dict[int, float], graph: WeightedGraph, probe: int):
    l1 = sum(abs(v) * float(graph.measure(x)) for x, v in diff.items())
    l2 = math.sqrt(sum(v * v * float(graph.measure(x)) for x, v in diff.items()))
    return l1, l2, abs(diff.get(probe, 0.0))


def _extended(op, vec) -> dict[int, float]:
    return {x: float(v) for x, v in zip(op.vertices, vec)}


@dataclass
class ConvergenceReport:
    """Per-truncation distance curves plus experiment metadata.

    ``sizes[i]`` is |X_k| for the i-th truncation; the distance lists are
    measured against the reference named by ``reference_kind``.  The
    resolvent pairing column, when present, is checked nonincreasing at
    construction time (it decreases exactly in theory).
    """

    experiment: str
    reference_kind: str
    t: float
    sizes: list[int]
    l1_distance: list[float]
    l2_distance: list[float]
    pointwise_distance: list[float]
    alpha: float | None = None
    quadratic_pairings: list[float] | None = None
    l1_bounds: list[float] | None = None
    stochastic_defect: float | None = None
    gap_floor: float | None = None
    floor_threshold: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sizes)
        for name in ("l1_distance", "l2_distance", "pointwise_distance"):
            if len(getattr(self, name)) != n:
                raise InputError(f"{name} length mismatch")
        if any(d < 0 for d in self.l1_distance + self.l2_distance + self.pointwise_distance):
            raise InputError("distances must be nonnegative")
        if self.quadratic_pairings is not None:
            for a, b in zip(self.quadratic_pairings, self.quadratic_pairings[1:]):
                if b > a + PAIRING_SLACK:
                    raise NeumannLabError(
                        f"resolvent pairings must be nonincreasing, got {a!r} -> {b!r}")

    # fixed CSV column order, one row per truncation
    CSV_COLUMNS = ("k", "size", "l1", "l2", "pointwise", "pairing", "bound")

    def rows(self) -> list[dict]:
        out = []
        for i, size in enumerate(self.sizes):
            out.append({
                "k": i,
                "size": size,
                "l1": self.l1_distance[i],
                "l2": self.l2_distance[i],
                "pointwise": self.pointwise_distance[i],
                "pairing": None if self.quadratic_pairings is None else self.quadratic_pairings[i],
                "bound": None if self.l1_bounds is None else self.l1_bounds[i],
            })
        return out

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "experiment": self.experiment,
            "reference_kind": self.reference_kind,
            "t": self.t,
            "alpha": self.alpha,
            "sizes": self.sizes,
            "l1_distance": self.l1_distance,
            "l2_distance": self.l2_distance,
            "pointwise_distance": self.pointwise_distance,
            "quadratic_pairings": self.quadratic_pairings,
            "l1_bounds": self.l1_bounds,
            "stochastic_defect": self.stochastic_defect,
            "gap_floor": self.gap_floor,
            "floor_threshold": self.floor_threshold,
            "metadata": self.metadata,
        }


def _monotone_limit(g: WeightedGraph, exhaustion: Exhaustion, tol: float,
                    apply_fn, what: str):
    """Shared monotone-truncation loop for Dirichlet heat and resolvents.

    ``apply_fn(subset) -> (vertices, values)`` must produce entrywise
    nondecreasing extensions by zero.  Stops when the l1 increment drops
    below tol; raises with the last increment when the exhaustion ends
    first.
    """
    prev: dict[int, float] | None = None
    increment = math.inf
    used = 0
    clamps = 0
    for k, subset in enumerate(exhaustion.sets):
        vertices, values, clamped = apply_fn(subset)
        clamps += clamped
        current = {x: float(v) for x, v in zip(vertices, values)}
        if prev is not None:
            increment = 0.0
            for x, v_old in prev.items():
                v_new = current.get(x, 0.0)
                if v_new < v_old - MONOTONE_SLACK:
                    raise NeumannLabError(
                        f"{what}: truncation monotonicity violated at vertex {x}: "
                        f"{v_old!r} -> {v_new!r}")
                increment += abs(v_new - v_old) * float(g.measure(x))
            for x, v_new in current.items():
                if x not in prev:
                    increment += abs(v_new) * float(g.measure(x))
            if increment < tol:
                return current, {"sets_used": k + 1, "last_increment": increment,
                                 "clamped_entries": clamps}
        prev = current
        used = k + 1
    raise TruncationInsufficientError(
        f"{what}: increment {increment:.3e} still above tol {tol:.3e} "
        f"after {used} truncations", last_increment=increment)


def dirichlet_reference(g: WeightedGraph, exhaustion: Exhaustion, t: float,
                        phi: VertexFunction, tol: float = DEFAULT_REFERENCE_TOL):
    """Monotone-limit proxy for the full-space Dirichlet heat action.

    Runs P_{t,k} phi (extended by zero) up the exhaustion until the l1
    increment falls below tol; increments are entrywise nonnegative by
    domain monotonicity, which is asserted along the way.  Returns
    (VertexFunction, info dict).
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    if any(float(v) < 0 for v in phi.values.values()):
        raise InputError("phi must be nonnegative")

    def apply_fn(subset):
        op = assemble_dirichlet(g, subset)
        engine = SemigroupEngine(op)
        vec = op.local_vector(_restrict_ok(phi, subset))
        out = engine.heat_vec(t, vec)
        return op.vertices, out, engine.telemetry.clamped_entries

    limit, info = _monotone_limit(g, exhaustion, tol, apply_fn, "dirichlet heat reference")
    return VertexFunction({x: v for x, v in limit.items() if v != 0.0}), info


def dirichlet_resolvent_reference(g: WeightedGraph, exhaustion: Exhaustion,
                                  alpha: float, f: VertexFunction,
                                  tol: float = DEFAULT_REFERENCE_TOL):
    """Monotone-limit proxy for the full-space Dirichlet resolvent."""
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if any(float(v) < 0 for v in f.values.values()):
        raise InputError("f must be nonnegative")

    def apply_fn(subset):
        op = assemble_dirichlet(g, subset)
        engine = SemigroupEngine(op)
        vec = op.local_vector(_restrict_ok(f, subset))
        out = engine.resolvent_vec(alpha, vec)
        return op.vertices, out, 0

    limit, info = _monotone_limit(g, exhaustion, tol, apply_fn,
                                  "dirichlet resolvent reference")
    return VertexFunction({x: v for x, v in limit.items() if v != 0.0}), info


def _restrict_ok(phi: VertexFunction, subset) -> VertexFunction:
    inside = set(subset)
    missing = [x for x, v in phi.values.items() if v != 0 and x not in inside]
    if missing:
        raise InputError(f"initial data supported outside truncation at {missing[:3]}")
    return phi


def neumann_convergence_experiment(g: WeightedGraph, exhaustion: Exhaustion,
                                   t: float, phi: VertexFunction,
                                   reference: VertexFunction | None = None,
                                   alpha: float | None = None,
                                   probe: int | None = None,
                                   self_tol: float = 1e-6,
                                   name: str = "") -> ConvergenceReport:
    """Distance curves of Neumann truncations against a Neumann reference.

    With ``reference=None`` the last exhaustion set provides the reference
    and must pass the self-consistency gate: its distance to the previous
    iterate must fall below ``self_tol`` (no monotonicity is available on
    the Neumann side).  An explicit reference must cover the largest
    iterate set.  When ``alpha`` is given, the resolvent pairings
    <R_alpha phi, phi>_m are recorded per truncation.
    """
    sets = list(exhaustion.sets)
    if reference is None:
        if len(sets) < 3:
            raise InputError("self-consistent reference needs at least 3 exhaustion sets")
        iterate_sets, ref_set = sets[:-1], sets[-1]
    else:
        iterate_sets, ref_set = sets, None
    probe = probe if probe is not None else sets[0][0]

    def one(subset):
        op = assemble_neumann(g, subset)
        engine = SemigroupEngine(op)
        vec = op.local_vector(_restrict_ok(phi, subset))
        heat = _extended(op, engine.heat_vec(t, vec))
        pairing = None
        if alpha is not None:
            u = engine.resolvent_vec(alpha, vec)
            pairing = float((u * vec * op.measure_vector).sum())
        return heat, pairing, engine.telemetry.clamped_entries

    results = _ordered_map(one, iterate_sets)

    if reference is None:
        ref_heat, _, ref_clamps = one(ref_set)
        last_heat = results[-1][0]
        diff = {x: ref_heat.get(x, 0.0) - last_heat.get(x, 0.0)
                for x in set(ref_heat) | set(last_heat)}
        _, self_dist, _ = _norms(diff, g, probe)
        if self_dist > self_tol:
            raise TruncationInsufficientError(
                f"neumann reference not self-consistent: l2 distance {self_dist:.3e} "
                f"above {self_tol:.3e}", last_increment=self_dist)
        ref_map = ref_heat
        ref_kind = "neumann-self-consistent"
    else:
        largest = set(iterate_sets[-1])
        ref_support = set(reference.values)
        if not largest <= ref_support:
            raise InputError("reference does not cover the largest iterate set")
        ref_map = {x: float(v) for x, v in reference.values.items()}
        ref_kind = "explicit-reference"
        ref_clamps = 0

    l1s, l2s, points, pairings = [], [], [], []
    clamps = 0
    for heat, pairing, clamped in results:
        clamps += clamped
        diff = {x: heat.get(x, 0.0) - ref_map.get(x, 0.0)
                for x in set(heat) | set(ref_map)}
        l1, l2, pt = _norms(diff, g, probe)
        l1s.append(l1)
        l2s.append(l2)
        points.append(pt)
        pairings.append(pairing)
    has_pairings = alpha is not None
    return ConvergenceReport(
        experiment="neumann-convergence",
        reference_kind=ref_kind,
        t=t,
        sizes=[len(s) for s in iterate_sets],
        l1_distance=l1s,
        l2_distance=l2s,
        pointwise_distance=points,
        alpha=alpha,
        quadratic_pairings=pairings if has_pairings else None,
        metadata={"graph": name or g.name, "probe": probe,
                  "clamped_entries": clamps + ref_clamps,
                  "self_tol": self_tol},
    )


def dirichlet_gap_experiment(g: WeightedGraph, exhaustion: Exhaustion, t: float,
                             phi: VertexFunction,
                             ref_exhaustion: Exhaustion | None = None,
                             tol: float = DEFAULT_REFERENCE_TOL,
                             probe: int | None = None,
                             name: str = "") -> ConvergenceReport:
    """Distances of Neumann truncations to the Dirichlet monotone limit.

    A floor that persists across truncations is evidence (never proof) that
    the Dirichlet and Neumann forms differ; decay toward zero is evidence
    of uniqueness.  The decision threshold max(10 tol, 1e-6) is recorded
    with the report.
    """
    if all(float(v) == 0 for v in phi.values.values()):
        raise InputError("phi must be nonzero")
    if any(float(v) < 0 for v in phi.values.values()):
        raise InputError("phi must be nonnegative")
    ref, ref_info = dirichlet_reference(g, ref_exhaustion or exhaustion, t, phi, tol)
    probe = probe if probe is not None else exhaustion.sets[0][0]
    ref_map = {x: float(v) for x, v in ref.values.items()}

    def one(subset):
        op = assemble_neumann(g, subset)
        engine = SemigroupEngine(op)
        vec = op.local_vector(_restrict_ok(phi, subset))
        return _extended(op, engine.heat_vec(t, vec)), engine.telemetry.clamped_entries

    results = _ordered_map(one, exhaustion.sets)
    l1s, l2s, points = [], [], []
    clamps = ref_info["clamped_entries"]
    for heat, clamped in results:
        clamps += clamped
        diff = {x: heat.get(x, 0.0) - ref_map.get(x, 0.0)
                for x in set(heat) | set(ref_map)}
        l1, l2, pt = _norms(diff, g, probe)
        l1s.append(l1)
        l2s.append(l2)
        points.append(pt)
    threshold = max(10 * tol, GAP_FLOOR_ABSOLUTE)
    return ConvergenceReport(
        experiment="dirichlet-gap",
        reference_kind="dirichlet-limit",
        t=t,
        sizes=[len(s) for s in exhaustion.sets],
        l1_distance=l1s,
        l2_distance=l2s,
        pointwise_distance=points,
        gap_floor=l2s[-1],
        floor_threshold=threshold,
        metadata={"graph": name or g.name, "probe": probe,
                  "clamped_entries": clamps, "tol": tol,
                  "reference_info": ref_info,
                  "floor_is_evidence": l2s[-1] > threshold},
    )


def l1_defect_experiment(g: WeightedGraph, exhaustion: Exhaustion, t: float,
                         phi: VertexFunction,
                         ref_exhaustion: Exhaustion | None = None,
                         tol: float = DEFAULT_REFERENCE_TOL,
                         probe: int | None = None,
                         name: str = "") -> ConvergenceReport:
    """l1 distances d_k = |P_N phi - P_D(ref) phi|_1 with the two-sided
    theoretical envelope.

    Per truncation the upper bound 2(|phi|_1 - |P_D_k phi|_1) and the lower
    bound |phi|_1 - |P_D(ref) phi|_1 (the stochastic mass defect) are
    asserted to within 1e-9; both are exact inequalities for the
    truncation proxies.  Requires a killing-free graph.
    """
    ref_ex = ref_exhaustion or exhaustion
    for subset in (exhaustion.sets[-1], ref_ex.sets[-1]):
        for x in subset:
            if g.killing(x) != 0:
                raise InputError(
                    "stochastic-completeness experiment requires killing c = 0 "
                    f"(violated at vertex {x})")
    if any(float(v) < 0 for v in phi.values.values()):
        raise InputError("phi must be nonnegative")
    if all(float(v) == 0 for v in phi.values.values()):
        raise InputError("phi must be nonzero")

    ref, ref_info = dirichlet_reference(g, ref_ex, t, phi, tol)
    ref_map = {x: float(v) for x, v in ref.values.items()}
    phi_l1 = phi.norm(g, 1)
    ref_l1 = sum(abs(v) * float(g.measure(x)) for x, v in ref_map.items())
    defect = phi_l1 - ref_l1
    probe = probe if probe is not None else exhaustion.sets[0][0]

    def one(subset):
        d_op = assemble_dirichlet(g, subset)
        n_op = assemble_neumann(g, subset)
        d_engine = SemigroupEngine(d_op)
        n_engine = SemigroupEngine(n_op)
        vec_d = d_op.local_vector(_restrict_ok(phi, subset))
        u_d = d_engine.heat_vec(t, vec_d)
        u_n = n_engine.heat_vec(t, n_op.local_vector(phi))
        heat_n = _extended(n_op, u_n)
        d_l1 = float((np.abs(u_d) * d_op.measure_vector).sum())
        clamped = d_engine.telemetry.clamped_entries + n_engine.telemetry.clamped_entries
        return heat_n, d_l1, clamped

    results = _ordered_map(one, exhaustion.sets)
    l1s, l2s, points, bounds = [], [], [], []
    clamps = ref_info["clamped_entries"]
    for heat_n, d_l1, clamped in results:
        clamps += clamped
        diff = {x: heat_n.get(x, 0.0) - ref_map.get(x, 0.0)
                for x in set(heat_n) | set(ref_map)}
        l1, l2, pt = _norms(diff, g, probe)
        bound = 2.0 * (phi_l1 - d_l1)
        if l1 > bound + 1e-9:
            raise NeumannLabError(
                f"l1 distance {l1!r} exceeds its theoretical bound {bound!r}")
        if l1 < defect - 1e-9:
            raise NeumannLabError(
                f"l1 distance {l1!r} fell below the stochastic defect {defect!r}")
        l1s.append(l1)
        l2s.append(l2)
        points.append(pt)
        bounds.append(bound)
    return ConvergenceReport(
        experiment="l1-defect",
        reference_kind="dirichlet-limit",
        t=t,
        sizes=[len(s) for s in exhaustion.sets],
        l1_distance=l1s,
        l2_distance=l2s,
        pointwise_distance=points,
        l1_bounds=bounds,
        stochastic_defect=defect,
        metadata={"graph": name or g.name, "probe": probe,
                  "clamped_entries": clamps, "tol": tol,
                  "reference_info": ref_info},
    )
