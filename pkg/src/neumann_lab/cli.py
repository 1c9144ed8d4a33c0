"""Command-line front end: named experiments, CSV/JSON reports, plot data.

Exit codes: 0 success, 1 input or invariant error, 2 truncation
insufficient, 3 undetermined classification.  Reports carry a schema
version and a machine-readable error reason; re-running a config
reproduces the report byte for byte apart from the timestamp.
``NEUMANN_LAB_THREADS`` caps worker threads for per-truncation loops.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from . import analysis, birth_death, convergence, models
from .errors import (
    InputError,
    NeumannLabError,
    OverflowCapError,
    TruncationInsufficientError,
    UndeterminedClassificationError,
)
from .graphs import VertexFunction
from .operators import assemble_neumann, dump_matrix
from .semigroup import SemigroupEngine

EXPERIMENTS = ("neumann-convergence", "dirichlet-gap", "l1-defect", "feller",
               "gap", "classify", "comb-beta", "uniform-l1", "ec")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="neumann-lab",
        description="Run truncation experiments for Dirichlet/Neumann graph "
                    "Laplacian semigroups and emit CSV/JSON reports.")
    p.add_argument("--model", required=True,
                   help="preset (comb, bd:unit, bd:geo, bd:explosive, bd:tail), "
                        "path:N, random[:N], or file:PATH")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--t", type=float, default=1.0,
                   help="heat time, or the window length for uniform-l1")
    p.add_argument("--alpha", type=float, default=None,
                   help="resolvent parameter (enables pairing columns)")
    p.add_argument("--horizon", type=int, default=1000,
                   help="series horizon for classify; window size for ec")
    p.add_argument("--truncations", default=None,
                   help="exhaustion parameters: 'a:b[:step]' inclusive, or 'i,j,k'; "
                        "rectangle indices for the comb, prefix sizes for chains, "
                        "hop radii otherwise")
    p.add_argument("--ref", type=int, default=None,
                   help="explicit reference truncation parameter (default: "
                        "self-consistency or 4x extension)")
    p.add_argument("--tol", type=float, default=convergence.DEFAULT_REFERENCE_TOL,
                   help="reference stopping tolerance")
    p.add_argument("--out", default=None,
                   help="output path prefix; writes PREFIX.json, PREFIX.csv, "
                        "PREFIX_tidy.csv (stdout JSON when omitted)")
    p.add_argument("--seed", type=int, default=None, help="seed for random models")
    p.add_argument("--certify", default=None,
                   help="series certificates 'inv_b=divergent:note,measure=infinite'")
    p.add_argument("--depth", type=int, default=40, help="tooth depth for comb-beta")
    p.add_argument("--x", type=int, default=None,
                   help="source vertex id (default: the model's origin)")
    p.add_argument("--grid", type=int, default=64, help="time grid size for uniform-l1")
    p.add_argument("--kind", choices=("dirichlet", "neumann"), default="dirichlet",
                   help="restriction kind for feller")
    p.add_argument("--rate", default=None,
                   help="rate expression in r for --model bd:custom, e.g. '4**r'")
    p.add_argument("--measure", default=None,
                   help="measure expression in r for --model bd:custom")
    p.add_argument("--dump-matrix", action="store_true",
                   help="also write the largest truncation's matrix as triples")
    return p


def parse_truncations(text: str) -> list[int]:
    try:
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            if len(parts) == 2:
                lo, hi, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                lo, hi, step = parts
            else:
                raise ValueError("too many ':'")
            if step < 1 or hi < lo:
                raise ValueError("empty range")
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",")]
    except ValueError as ex:
        raise InputError(f"cannot parse --truncations {text!r}: {ex}") from None


def parse_certificates(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise InputError(f"certificate {item!r} must look like key=verdict[:note]")
        key, value = item.split("=", 1)
        note = ""
        if ":" in value:
            value, note = value.split(":", 1)
        key, value = key.strip(), value.strip()
        if key == "measure":
            if value in ("finite", "infinite"):
                out[key] = value
            else:
                raise InputError("measure certificate must be finite or infinite")
        elif key in ("inv_b", "tail", "hamburger"):
            if value == "divergent":
                out[key] = birth_death.divergent(note)
            elif value == "convergent":
                out[key] = birth_death.convergent(note)
            else:
                raise InputError(f"verdict {value!r} must be divergent or convergent")
        else:
            raise InputError(f"unknown certificate key {key!r}")
    return out


def default_truncations(model: models.Model) -> list[int]:
    rule = model.spec.exhaustion_rule
    if rule == "comb-rectangles":
        return list(range(2, 9))
    if rule == "chain-prefixes":
        return list(range(10, 201, 10))
    size = len(model.graph)
    return list(range(0, max(1, size)))


def reference_indices(model: models.Model, indices: list[int], factor: int = 4) -> list[int]:
    """Continue an exhaustion so the reference exceeds the largest iterate
    by ~factor in vertex count (capped by float representability)."""
    top = max(indices)
    rule = model.spec.exhaustion_rule
    if rule == "comb-rectangles":
        # vertex count of rectangle j grows ~2j^2
        goal = max(top + 1, int(top * factor ** 0.5) + 1)
        cap = goal
        while cap > top:
            try:
                models.comb_rectangle(cap)
                break
            except OverflowCapError as ex:
                cap = ex.usable_cap
        return list(range(top, cap + 1)) if cap > top else [top]
    if rule == "chain-prefixes":
        goal = top * factor
        if model.chain is not None:
            try:
                models.make_exhaustion(model, 0, indices=[goal])
            except OverflowCapError as ex:
                goal = ex.usable_cap
        step = max(1, (goal - top) // 12)
        return list(range(top, goal + 1, step))
    return indices


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _tidy_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("k", "metric", "value"))
    for k, metric, value in rows:
        writer.writerow((k, metric, value))
    return buf.getvalue()


def _report_files(report) -> tuple[str | None, str | None]:
    """CSV and tidy-CSV payloads for the report types that have rows."""
    if isinstance(report, convergence.ConvergenceReport):
        cols = report.CSV_COLUMNS
        rows = [[r[c] for c in cols] for r in report.rows()]
        tidy = []
        for r in report.rows():
            for metric in ("l1", "l2", "pointwise", "pairing", "bound"):
                if r[metric] is not None:
                    tidy.append((r["k"], metric, r[metric]))
        return _csv_text(cols, rows), _tidy_text(tidy)
    if isinstance(report, analysis.FellerReport):
        cols = ("radius", "sup_outside")
        rows = list(zip(report.ball_radii, report.sup_outside))
        tidy = [(r, "sup_outside", s) for r, s in rows]
        return _csv_text(cols, rows), _tidy_text(tidy)
    if isinstance(report, birth_death.BdClassification):
        cols = ("r", "inv_b_partial", "tail_partial", "hamburger_partial")
        n = len(report.series_inv_b.partial_sums)
        rows = []
        for r in range(n):
            tail = (float(report.series_tail.partial_sums[r])
                    if r < len(report.series_tail.partial_sums) else None)
            hamb = (float(report.hamburger.partial_sums[r])
                    if r < len(report.hamburger.partial_sums) else None)
            rows.append((r, float(report.series_inv_b.partial_sums[r]), tail, hamb))
        tidy = []
        for r, ib, tl, hb in rows:
            tidy.append((r, "inv_b_partial", ib))
            if tl is not None:
                tidy.append((r, "tail_partial", tl))
            if hb is not None:
                tidy.append((r, "hamburger_partial", hb))
        return _csv_text(cols, rows), _tidy_text(tidy)
    if isinstance(report, birth_death.CombBetaResult):
        lo = report.window[0]
        rows = [(lo + i, ratio) for i, ratio in enumerate(report.ratios)]
        return (_csv_text(("k", "ratio"), rows),
                _tidy_text([(k, "ratio", v) for k, v in rows]))
    return None, None


def run(args) -> tuple[dict, object]:
    """Execute the configured experiment; returns (json payload, report)."""
    if args.model == "bd:custom":
        if not args.rate or not args.measure:
            raise InputError("bd:custom needs --rate and --measure expressions")
        model = models.make_bd_chain(args.rate, args.measure, name="bd:custom")
    else:
        model = models.build_model(args.model, seed=args.seed)
    g = model.graph
    x = args.x if args.x is not None else model.origin
    indices = (parse_truncations(args.truncations) if args.truncations
               else default_truncations(model))
    phi = VertexFunction.indicator(x)

    if args.experiment == "neumann-convergence":
        ex = models.make_exhaustion(model, 0, indices=indices)
        reference = None
        if args.ref is not None:
            if args.ref <= max(indices):
                raise InputError("--ref must exceed the largest truncation")
            ref_ex = models.make_exhaustion(model, 0, indices=[args.ref])
            op = assemble_neumann(g, ref_ex.sets[0])
            vec = op.local_vector(phi)
            out = SemigroupEngine(op).heat_vec(args.t, vec)
            reference = VertexFunction({v: float(u) for v, u in zip(op.vertices, out)})
        report = convergence.neumann_convergence_experiment(
            g, ex, args.t, phi, reference=reference, alpha=args.alpha,
            probe=x, name=model.name)
    elif args.experiment == "dirichlet-gap":
        ex = models.make_exhaustion(model, 0, indices=indices)
        ref_ex = models.make_exhaustion(
            model, 0, indices=reference_indices(model, indices))
        report = convergence.dirichlet_gap_experiment(
            g, ex, args.t, phi, ref_exhaustion=ref_ex, tol=args.tol,
            probe=x, name=model.name)
    elif args.experiment == "l1-defect":
        ex = models.make_exhaustion(model, 0, indices=indices)
        ref_ex = models.make_exhaustion(
            model, 0, indices=reference_indices(model, indices))
        report = convergence.l1_defect_experiment(
            g, ex, args.t, phi, ref_exhaustion=ref_ex, tol=args.tol,
            probe=x, name=model.name)
    elif args.experiment == "feller":
        ex = models.make_exhaustion(model, 0, indices=indices)
        alpha = args.alpha if args.alpha is not None else 1.0
        report = analysis.feller_estimate(g, ex, alpha, x, kind=args.kind,
                                          tol=args.tol, name=model.name)
    elif args.experiment == "gap":
        ex = models.make_exhaustion(model, 0, indices=indices)
        gap, info = analysis.semigroup_gap(g, ex, args.t, x, tol=args.tol)
        report = {"schema": 1, "experiment": "gap", "t": args.t, "source": x,
                  "gap_at_source": info["gap_at_source"],
                  "max_gap": info["max_gap"],
                  "self_distance": info["self_distance"],
                  "metadata": {"graph": model.name, "tol": args.tol}}
    elif args.experiment == "classify":
        if model.chain is None:
            raise InputError("classify needs a birth-death chain model")
        certs = parse_certificates(args.certify)
        report = birth_death.classify(model.chain, args.horizon, certs)
    elif args.experiment == "comb-beta":
        if model.spec.family != "comb":
            raise InputError("comb-beta runs on the comb model")
        report = birth_death.comb_beta_extraction(args.depth)
    elif args.experiment == "uniform-l1":
        ex = models.make_exhaustion(model, 0, indices=indices)
        subset = ex.sets[-1]
        res = analysis.uniform_l1_check(g, subset, args.t, phi, grid=args.grid)
        report = {"schema": 1, "experiment": "uniform-l1", "T": args.t,
                  "value": res.value, "bound": res.bound,
                  "grid": res.grid_size, "kind": res.kind,
                  "metadata": {"graph": model.name, "subset_size": len(subset)}}
    elif args.experiment == "ec":
        if model.spec.exhaustion_rule == "chain-prefixes":
            window = list(range(args.horizon + 1))
        elif model.spec.family == "comb":
            window = models.comb_rectangle(min(args.horizon, 8))
        else:
            window = list(g.vertices())
        value = analysis.ec_constant(g, window)
        report = {"schema": 1, "experiment": "ec", "constant": value,
                  "window_size": len(window),
                  "metadata": {"graph": model.name}}
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown experiment {args.experiment!r}")

    payload = report if isinstance(report, dict) else report.to_json_dict()
    payload = dict(payload)
    payload["status"] = "ok"
    payload["config"] = {
        "model": args.model, "experiment": args.experiment, "t": args.t,
        "alpha": args.alpha, "horizon": args.horizon,
        "truncations": indices if args.experiment not in ("classify", "comb-beta", "ec") else None,
        "tol": args.tol, "seed": args.seed, "depth": args.depth,
        "x": x, "grid": args.grid, "kind": args.kind, "ref": args.ref,
    }
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    if args.dump_matrix and args.experiment not in ("classify", "comb-beta"):
        ex = models.make_exhaustion(model, 0, indices=indices)
        payload["matrix_dump"] = dump_matrix(assemble_neumann(g, ex.sets[-1]))
    return payload, report


def _emit(payload: dict, report, out_prefix: str | None):
    text = json.dumps(payload, indent=2, default=float)
    if out_prefix is None:
        print(text)
        return
    with open(out_prefix + ".json", "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    csv_text, tidy_text = _report_files(report)
    if csv_text is not None:
        with open(out_prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    if tidy_text is not None:
        with open(out_prefix + "_tidy.csv", "w", encoding="utf-8") as fh:
            fh.write(tidy_text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload, report = run(args)
    except (TruncationInsufficientError,) as ex:
        _emit_error(args, ex, "truncation-insufficient")
        return 2
    except UndeterminedClassificationError as ex:
        _emit_error(args, ex, "undetermined-classification")
        return 3
    except (InputError, OverflowCapError) as ex:
        _emit_error(args, ex, "input-error")
        return 1
    except NeumannLabError as ex:
        _emit_error(args, ex, "invariant-violation")
        return 1
    if isinstance(report, birth_death.BdClassification) and report.undetermined:
        _emit(payload, report, args.out)
        return 3
    _emit(payload, report, args.out)
    return 0


def _emit_error(args, ex: Exception, kind: str):
    payload = {
        "schema": 1,
        "status": "error",
        "error_kind": kind,
        "reason": str(ex),
        "config": {"model": args.model, "experiment": args.experiment},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    extra = getattr(ex, "last_increment", None)
    if extra is not None:
        payload["last_increment"] = float(extra)
    cap = getattr(ex, "usable_cap", None)
    if cap is not None:
        payload["usable_cap"] = cap
    text = json.dumps(payload, indent=2, default=float)
    if args.out is None:
        print(text)
    else:
        with open(args.out + ".json", "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    sys.exit(main())
