"""Closed-form classification and recursion solvers for birth-death chains.

A birth-death chain lives on the half line 0, 1, 2, ... with edges exactly
between consecutive integers and no killing.  For this class the heat-
vanishing property of the Neumann semigroup has an exact characterization:

    Feller  <=>  m(X) = infinity,  or both
                 sum 1/b(r,r+1)  and  sum m(B_r^c)/b(r,r+1)  diverge,

where B_r^c is the tail {r+1, r+2, ...}.  Equivalently, no nontrivial
l1 alpha-harmonic function exists.  Feller also forces essential
self-adjointness, whose own exact criterion is the divergence of the
moment-type series  sum (sum_{k<=r} 1/b)^2 m(r+1).

Series divergence can never be read off finitely many partial sums, so
every boolean verdict requires a certificate: a comparison-style bound or
an explicit caller assertion.  Without one the verdict is undetermined.
Partial sums are computed exactly whenever rates and measures are rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath as mp

from .analysis import HarmonicSolution
from .errors import InputError, NeumannLabError, TruncationInsufficientError, UndeterminedClassificationError
from .graphs import VertexFunction

__all__ = [
    "BdChain",
    "SeriesCertificate",
    "SeriesRecord",
    "BdClassification",
    "classify",
    "solve_alpha_harmonic",
    "hamburger_series",
    "comb_beta_extraction",
    "CombBetaResult",
    "divergent",
    "convergent",
]

# switch the float recursion to arbitrary-exponent arithmetic beyond this
LOG_DOMAIN_SWITCH = 1e100


@dataclass(frozen=True)
class BdChain:
    """Birth-death chain data: rate(r) = b(r, r+1) > 0 and measure m(r) > 0.

    ``measure_total`` is the exact total mass when finite and known;
    ``measure_tail(r)`` returns m({r+1, r+2, ...}) when a closed form
    exists.  ``certificates`` carries default series certificates for the
    classifier (keys: "measure", "inv_b", "tail", "hamburger").
    """

    rate: Callable[[int], object]
    measure: Callable[[int], object]
    name: str = "bd"
    measure_total: object | None = None
    measure_tail: Callable[[int], object] | None = None
    certificates: dict = field(default_factory=dict)

    def rate_at(self, r: int):
        value = self.rate(r)
        if value <= 0:
            raise InputError(f"rate b({r},{r + 1}) = {value} must be positive")
        return value

    def measure_at(self, r: int):
        value = self.measure(r)
        if value <= 0:
            raise InputError(f"measure m({r}) = {value} must be positive")
        return value


@dataclass(frozen=True)
class SeriesCertificate:
    """Auditable justification for a divergence/convergence verdict.

    ``method`` is "comparison" (with an asymptotic power ``term ~ r^-power``
    or a geometric ``ratio``) or "assertion" (caller-supplied).  The
    comparison data must be consistent with the claimed verdict.
    """

    verdict: str                  # "divergent" | "convergent"
    method: str = "assertion"
    note: str = ""
    power: float | None = None
    ratio: float | None = None

    def __post_init__(self):
        if self.verdict not in ("divergent", "convergent"):
            raise InputError(f"unknown verdict {self.verdict!r}")
        if self.method not in ("comparison", "assertion"):
            raise InputError(f"unknown certificate method {self.method!r}")
        if self.method == "comparison":
            if self.power is None and self.ratio is None:
                raise InputError("comparison certificate needs a power or a ratio")
            if self.power is not None:
                ok = (self.power <= 1) if self.verdict == "divergent" else (self.power > 1)
                if not ok:
                    raise InputError(
                        f"power {self.power} inconsistent with verdict {self.verdict!r}")
            if self.ratio is not None:
                ok = (self.ratio >= 1) if self.verdict == "divergent" else (self.ratio < 1)
                if not ok:
                    raise InputError(
                        f"ratio {self.ratio} inconsistent with verdict {self.verdict!r}")


def divergent(note: str = "", *, power: float | None = None,
              ratio: float | None = None) -> SeriesCertificate:
    method = "comparison" if (power is not None or ratio is not None) else "assertion"
    return SeriesCertificate("divergent", method, note, power, ratio)


def convergent(note: str = "", *, power: float | None = None,
               ratio: float | None = None) -> SeriesCertificate:
    method = "comparison" if (power is not None or ratio is not None) else "assertion"
    return SeriesCertificate("convergent", method, note, power, ratio)


@dataclass(frozen=True)
class SeriesRecord:
    """Partial sums of a positive series plus its certified verdict."""

    name: str
    partial_sums: list
    verdict: str                  # "divergent" | "convergent" | "undetermined"
    certificate: SeriesCertificate | None = None

    @property
    def last(self):
        return self.partial_sums[-1] if self.partial_sums else 0

    def require(self, what: str) -> str:
        if self.verdict == "undetermined":
            raise UndeterminedClassificationError(
                f"series {self.name!r} has no certificate; needed for {what}")
        return self.verdict


@dataclass(frozen=True)
class BdClassification:
    """Exact classification of one chain at the given horizon.

    Booleans are None when the underlying series verdicts are undetermined;
    ``undetermined`` flags that state.  Invariants: the Feller flag matches
    the two-series/infinite-measure criterion, the l1-harmonic flag is its
    negation, and Feller implies essential self-adjointness.
    """

    chain: str
    horizon: int
    measure_total: object | None
    measure_verdict: str          # "finite" | "infinite" | "undetermined"
    series_inv_b: SeriesRecord
    series_tail: SeriesRecord
    hamburger: SeriesRecord
    neumann_feller: bool | None
    nontrivial_l1_harmonic_exists: bool | None
    ess_self_adjoint: bool | None

    @property
    def undetermined(self) -> bool:
        return None in (self.neumann_feller, self.nontrivial_l1_harmonic_exists)

    def to_json_dict(self) -> dict:
        def series(rec: SeriesRecord) -> dict:
            return {"name": rec.name,
                    "last_partial_sum": float(rec.last),
                    "verdict": rec.verdict,
                    "certificate": None if rec.certificate is None else {
                        "verdict": rec.certificate.verdict,
                        "method": rec.certificate.method,
                        "note": rec.certificate.note,
                        "power": rec.certificate.power,
                        "ratio": rec.certificate.ratio,
                    }}
        return {
            "schema": 1,
            "experiment": "classify",
            "chain": self.chain,
            "horizon": self.horizon,
            "measure_total": None if self.measure_total is None else float(self.measure_total),
            "measure_verdict": self.measure_verdict,
            "series_inv_b": series(self.series_inv_b),
            "series_tail": series(self.series_tail),
            "hamburger": series(self.hamburger),
            "neumann_feller": self.neumann_feller,
            "nontrivial_l1_harmonic_exists": self.nontrivial_l1_harmonic_exists,
            "ess_self_adjoint": self.ess_self_adjoint,
            "undetermined": self.undetermined,
        }


def _partial_sums(terms) -> list:
    out = []
    acc = 0
    for t in terms:
        acc = acc + t
        out.append(acc)
    return out


def _tail_mass(chain: BdChain, r: int, prefix_mass):
    """m(B_r^c) from the exact total or the supplied tail function."""
    if chain.measure_total is not None:
        tail = chain.measure_total - prefix_mass
        if tail < 0:
            raise InputError(
                f"measure_total {chain.measure_total} smaller than prefix mass at r={r}")
        return tail
    if chain.measure_tail is not None:
        return chain.measure_tail(r)
    return None


def classify(chain: BdChain, horizon: int,
             certificates: dict | None = None) -> BdClassification:
    """Evaluate the classification series to the horizon and combine their
    certified verdicts into the Feller / l1-harmonic / self-adjointness
    booleans.

    ``certificates`` overrides the chain's defaults per key ("measure",
    "inv_b", "tail", "hamburger").  The measure certificate may also be the
    string "finite" or "infinite".  Missing certificates leave the
    corresponding verdicts (and dependent booleans) undetermined rather
    than guessing from partial sums.
    """
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    certs = dict(chain.certificates)
    certs.update(certificates or {})

    rates = [chain.rate_at(r) for r in range(horizon + 1)]
    measures = [chain.measure_at(r) for r in range(horizon + 1)]

    inv_b_terms = [1 / Fraction(b) if isinstance(b, (int, Fraction)) else 1.0 / b
                   for b in rates]
    inv_b_partials = _partial_sums(inv_b_terms)

    measure_partials = _partial_sums(measures)

    tail_terms = []
    tails_known = True
    for r in range(horizon + 1):
        tail = _tail_mass(chain, r, measure_partials[r])
        if tail is None:
            tails_known = False
            break
        tail_terms.append(tail / rates[r])
    tail_partials = _partial_sums(tail_terms) if tails_known else []

    hamb_terms = [(inv_b_partials[r]) ** 2 * measures[r + 1] for r in range(horizon)]
    hamb_partials = _partial_sums(hamb_terms)

    # measure verdict
    mcert = certs.get("measure")
    if chain.measure_total is not None:
        measure_verdict = "finite"
    elif isinstance(mcert, str):
        if mcert not in ("finite", "infinite"):
            raise InputError(f"measure certificate must be finite/infinite, got {mcert!r}")
        measure_verdict = mcert
    elif isinstance(mcert, SeriesCertificate):
        measure_verdict = "infinite" if mcert.verdict == "divergent" else "finite"
    else:
        measure_verdict = "undetermined"

    def record(name: str, partials: list, default_verdict: str | None = None) -> SeriesRecord:
        cert = certs.get(name)
        if cert is None:
            verdict = default_verdict or "undetermined"
            return SeriesRecord(name, partials, verdict, None)
        if not isinstance(cert, SeriesCertificate):
            raise InputError(f"certificate for {name!r} must be a SeriesCertificate")
        return SeriesRecord(name, partials, cert.verdict, cert)

    inv_b_rec = record("inv_b", inv_b_partials)
    # with infinite total mass every tail is infinite, so the tail series
    # diverges without further evidence
    tail_default = "divergent" if measure_verdict == "infinite" else None
    tail_rec = record("tail", tail_partials, tail_default)
    hamb_rec = record("hamburger", hamb_partials)

    if measure_verdict == "infinite":
        feller: bool | None = True
    elif measure_verdict == "finite":
        if inv_b_rec.verdict == "undetermined" or tail_rec.verdict == "undetermined":
            feller = None
        else:
            feller = (inv_b_rec.verdict == "divergent" and tail_rec.verdict == "divergent")
    else:
        feller = None

    exists = None if feller is None else (not feller)
    esa = {"divergent": True, "convergent": False, "undetermined": None}[hamb_rec.verdict]
    if feller is True and esa is False:
        raise NeumannLabError(
            "inconsistent certificates: Feller holds but the self-adjointness "
            "series is certified convergent")
    return BdClassification(
        chain=chain.name,
        horizon=horizon,
        measure_total=chain.measure_total,
        measure_verdict=measure_verdict,
        series_inv_b=inv_b_rec,
        series_tail=tail_rec,
        hamburger=hamb_rec,
        neumann_feller=feller,
        nontrivial_l1_harmonic_exists=exists,
        ess_self_adjoint=esa,
    )


def hamburger_series(chain: BdChain, horizon: int,
                     certificate: SeriesCertificate | None = None) -> SeriesRecord:
    """Partial sums of sum_r (sum_{k<=r} 1/b)^2 m(r+1) with its verdict.

    Divergence is the exact essential-self-adjointness criterion for these
    chains; it must be certified divergent whenever the chain is Feller.
    """
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    cert = certificate or chain.certificates.get("hamburger")
    inv = 0
    partials = []
    acc = 0
    for r in range(horizon):
        b = chain.rate_at(r)
        inv = inv + (1 / Fraction(b) if isinstance(b, (int, Fraction)) else 1.0 / b)
        acc = acc + inv * inv * chain.measure_at(r + 1)
        partials.append(acc)
    verdict = cert.verdict if cert is not None else "undetermined"
    return SeriesRecord("hamburger", partials, verdict, cert)


# -- alpha-harmonic recursion -------------------------------------------------


def _is_exact(*values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def solve_alpha_harmonic(chain: BdChain, alpha, u0, horizon: int) -> HarmonicSolution:
    """March the three-term recursion of (Delta + alpha) u = 0 from u(0).

    u(1) = u(0)(1 + alpha m(0)/b(0,1)) and for r >= 1
    u(r+1) = u(r) + [ b(r-1,r)(u(r)-u(r-1)) + alpha m(r) u(r) ] / b(r,r+1).

    For u0 > 0 the solution is strictly increasing (asserted).  Rational
    inputs are solved exactly; the float path switches to arbitrary-
    exponent arithmetic beyond 1e100 so ratios and boundedness verdicts
    survive overflow.  Returns partial l1 sums together with the running
    lower bounds alpha*u(0)*m(0) * sum_{k<r} (truncated tail)/b(k,k+1)
    that they must dominate.
    """
    if horizon < 2:
        raise InputError("horizon must be >= 2")
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if u0 < 0:
        raise InputError("u0 must be nonnegative")

    rates = [chain.rate_at(r) for r in range(horizon + 1)]
    measures = [chain.measure_at(r) for r in range(horizon + 1)]

    if u0 == 0:
        zero = VertexFunction({})
        return HarmonicSolution(alpha=float(alpha), values=zero, residual=0.0,
                                partial_l1=[0] * (horizon + 1),
                                lemma_lower_bounds=[0] * (horizon + 1),
                                trivial=True)

    exact = _is_exact(alpha, u0, *rates, *measures)
    if exact:
        alpha_n, u_prev = Fraction(alpha), Fraction(u0)
        rates = [Fraction(b) for b in rates]
        measures = [Fraction(m) for m in measures]
    else:
        alpha_n, u_prev = float(alpha), float(u0)
        rates = [float(b) for b in rates]
        measures = [float(m) for m in measures]

    values = [u_prev]
    u_curr = u_prev * (1 + alpha_n * measures[0] / rates[0])
    values.append(u_curr)
    lifted = False
    for r in range(1, horizon):
        if not exact and not lifted and abs(u_curr) > LOG_DOMAIN_SWITCH:
            # lift the whole state into unbounded-exponent arithmetic
            u_prev, u_curr = mp.mpf(u_prev), mp.mpf(u_curr)
            rates = [mp.mpf(b) for b in rates]
            measures = [mp.mpf(m) for m in measures]
            alpha_n = mp.mpf(alpha_n)
            lifted = True
        step = (rates[r - 1] * (u_curr - u_prev) + alpha_n * measures[r] * u_curr) / rates[r]
        u_prev, u_curr = u_curr, u_curr + step
        values.append(u_curr)
    for a, b in zip(values, values[1:]):
        if not b > a:
            raise NeumannLabError(f"alpha-harmonic solution failed to increase: {a!r} -> {b!r}")

    partial_l1 = _partial_sums(v * m for v, m in zip(values, measures))

    # running lower bounds: alpha u(0) m(0) * sum_{k<H} (sum_{k<r<=H} m(r))/b(k)
    # computed incrementally as M(H) C(H) - sum_{k<H} M(k)/b(k)
    alpha_tilde = alpha_n * values[0] * measures[0]
    bounds = [0]
    mass_prefix = measures[0]
    inv_prefix = 0
    weighted = 0
    for h in range(1, horizon + 1):
        inv_prefix = inv_prefix + 1 / rates[h - 1]
        weighted = weighted + mass_prefix / rates[h - 1]
        mass_prefix = mass_prefix + measures[h]
        bounds.append(alpha_tilde * (mass_prefix * inv_prefix - weighted))

    # residual of the recursion over the interior, exact arithmetic -> 0;
    # normalize before leaving mpf so huge scales cannot overflow to inf
    residual = 0.0
    if not exact:
        for r in range(1, horizon):
            lhs = (rates[r - 1] * (values[r] - values[r - 1])
                   + rates[r] * (values[r] - values[r + 1])) / measures[r] + alpha_n * values[r]
            scale = rates[r] * values[r] / measures[r]
            if scale != 0:
                residual = max(residual, abs(float(lhs / scale)))

    vf = VertexFunction({r: v for r, v in enumerate(values)})
    return HarmonicSolution(alpha=float(alpha), values=vf, residual=residual,
                            partial_l1=partial_l1, lemma_lower_bounds=bounds,
                            trivial=False)


# -- comb construction --------------------------------------------------------


@dataclass(frozen=True)
class CombBetaResult:
    """Fitted geometric decay rate along the comb's first tooth."""

    beta: float
    spread: float
    depth: int
    teeth: int
    window: tuple[int, int]
    ratios: list[float]

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "experiment": "comb-beta",
            "beta": self.beta,
            "spread": self.spread,
            "depth": self.depth,
            "teeth": self.teeth,
            "window": list(self.window),
            "analytic_target": (3.0 - math.sqrt(5.0)) / 2.0,
        }


def comb_beta_extraction(depth: int, teeth: int | None = None,
                         spread_tol: float = 1e-9) -> CombBetaResult:
    """Decay rate of the 1-harmonic function along the comb's base tooth.

    Solves (Delta + 1) u = 0 on a comb truncation with u(0,0) = 1 and decay
    closure u = 0 outside, then fits the ratio u(k+1,0)/u(k,0) over the
    middle third of the tooth.  The interior recursion on tooth 0 is
    3u(k) = u(k-1) + u(k+1), so the ratios converge to the decaying root of
    x^2 - 3x + 1 = 0 regardless of the rest of the truncation; the window
    spread certifies stabilization.
    """
    from . import models
    from ._elim import gth_factor
    import numpy as np

    if depth < 6:
        raise InputError("depth must be >= 6")
    if teeth is None:
        teeth = max(2, min(10, depth // 5))
    g = models.make_comb()
    verts = models.comb_truncation(depth=depth, teeth=teeth)
    origin = models.comb_vertex_id(0, 0)
    others = [v for v in verts if v != origin]
    index = {v: i for i, v in enumerate(others)}
    offdiag = [dict() for _ in others]
    excess = np.ones(len(others))  # alpha = 1
    rhs = np.zeros(len(others))
    for i, v in enumerate(others):
        mv = g.measure(v)
        for w, b in g.neighbors(v).items():
            rate = float(Fraction(b) / Fraction(mv))
            if w == origin:
                rhs[i] += rate  # u(0,0) = 1 moved to the right-hand side
            elif w in index:
                offdiag[i][index[w]] = rate
            # neighbors outside the truncation: decay closure u = 0
    factors = gth_factor(offdiag, excess)
    solution = factors.solve_nonneg(rhs)
    tooth = [1.0] + [float(solution[index[models.comb_vertex_id(k, 0)]])
                     for k in range(1, depth + 1)]
    lo, hi = depth // 3, 2 * depth // 3
    ratios = [tooth[k + 1] / tooth[k] for k in range(lo, hi)]
    spread = max(ratios) - min(ratios)
    if spread > spread_tol:
        raise TruncationInsufficientError(
            f"tooth ratios did not stabilize: spread {spread:.3e} over window "
            f"[{lo},{hi})", last_increment=spread)
    beta = sum(ratios) / len(ratios)
    return CombBetaResult(beta=beta, spread=spread, depth=depth, teeth=teeth,
                          window=(lo, hi), ratios=ratios)
