"""Heat semigroups e^{-tL} and resolvents (L+alpha)^{-1} of restricted operators.

Two engines sit behind one interface:

* moderate dynamic range (weighted degrees up to ``spectral_limit``): full
  symmetric eigendecomposition of S = M^{1/2} A M^{-1/2}; one factorization
  serves every t and keeps the spectrum available for diagnostics.
* extreme dynamic range (degrees up to ~1e300 for the fast-growth models):
  the eigendecomposition of S in float64 destroys the small eigenvalues
  (absolute error scales with the matrix norm), so the heat operator is
  evaluated through a uniform rational approximation of exp on [0, inf)
  whose shifted linear systems are solved sparsely in scaled-precision
  arithmetic.  No spectral data is exposed in this mode.

Resolvents always go through subtraction-free M-matrix elimination, which is
componentwise accurate for nonnegative data at any dynamic range; signed
right-hand sides are split by sign.  Residuals are verified in exact rational
arithmetic, so the check itself cannot drown in rounding.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import _elim
from .errors import InputError, NeumannLabError
from .graphs import VertexFunction
from .operators import DENSE_SIZE_CAP, RestrictedOperator, evaluate_form

__all__ = [
    "SemigroupEngine",
    "ResolventResult",
    "heat_apply",
    "resolvent_apply",
    "heat_oracle",
    "variational_value",
    "SPECTRAL_SCALE_LIMIT",
]

# above this weighted-degree scale, eigh eigenvalue errors (~eps * scale)
# would exceed the 1e-10 tolerances the experiments run at
SPECTRAL_SCALE_LIMIT = 1e5

CLAMP_RELATIVE = 1e-12

PSD_TOLERANCE = 1e-10


class _Telemetry:
    """Thread-safe counter for positivity clamps."""

    def __init__(self):
        self._lock = threading.Lock()
        self.clamped_entries = 0

    def add(self, k: int):
        if k:
            with self._lock:
                self.clamped_entries += k


@dataclass(frozen=True)
class ResolventResult:
    """Solution of (L + alpha) u = f with its verified residual."""

    solution: VertexFunction
    alpha: float
    residual_norm: float


class SemigroupEngine:
    """Shared factorization for heat and resolvent actions of one operator."""

    def __init__(self, op: RestrictedOperator, spectral_limit: float = SPECTRAL_SCALE_LIMIT):
        self.operator = op
        n = len(op)
        self.mode = "spectral" if (op.scale <= spectral_limit and n <= DENSE_SIZE_CAP) else "stiff"
        self.telemetry = _Telemetry()
        self._gth_cache: dict[float, _elim.GTHFactors] = {}
        self._lock = threading.Lock()
        if self.mode == "spectral":
            S = op.symmetrized
            lam, U = np.linalg.eigh(S)
            radius = max(abs(lam[0]), abs(lam[-1]), 1e-300)
            if lam[0] < -PSD_TOLERANCE * radius:
                raise NeumannLabError(
                    f"operator not positive semidefinite: min eigenvalue {lam[0]:.3e}")
            self._eigenvalues = lam
            self._basis = U
            self._sqrt_m = np.sqrt(op.measure_vector)
        else:
            self._eigenvalues = None
            self._basis = None
            self._sqrt_m = None

    # -- spectral data ----------------------------------------------------

    @property
    def spectral(self):
        """(eigenvalues, m-orthonormal eigenvector matrix) or None (stiff mode)."""
        if self.mode != "spectral":
            return None
        return self._eigenvalues, self._basis

    # -- exact matrix pieces shared by the solvers -----------------------

    @cached_property
    def _offdiag_exact(self):
        op = self.operator
        rows = []
        for i in range(len(op)):
            mi = op.measures[i]
            if isinstance(mi, (int, Fraction)):
                rows.append({j: Fraction(b) / Fraction(mi) if isinstance(b, (int, Fraction))
                             else b / float(mi)
                             for j, b in op.weights[i].items()})
            else:
                rows.append({j: float(b) / mi for j, b in op.weights[i].items()})
        return rows

    @cached_property
    def _excess_exact(self):
        op = self.operator
        out = []
        for i in range(len(op)):
            k, mi = op.killing_mass[i], op.measures[i]
            if isinstance(k, (int, Fraction)) and isinstance(mi, (int, Fraction)):
                out.append(Fraction(k) / Fraction(mi))
            else:
                out.append(float(k) / float(mi))
        return out

    @cached_property
    def _offdiag_float(self):
        return [{j: float(b) for j, b in row.items()} for row in self._offdiag_exact]

    # -- heat -------------------------------------------------------------

    def heat_vec(self, t: float, vec: np.ndarray) -> np.ndarray:
        """e^{-tL} vec; clamps tiny negatives to 0 when vec >= 0."""
        if t < 0:
            raise InputError(f"negative time t = {t}")
        vec = np.asarray(vec, dtype=float)
        if t == 0.0:
            return vec.copy()
        if self.mode == "spectral":
            lam = np.maximum(self._eigenvalues, 0.0)
            w = self._sqrt_m * vec
            out = self._basis @ (np.exp(-t * lam) * (self._basis.T @ w))
            out /= self._sqrt_m
        else:
            out = _elim.cf_heat(self._offdiag_exact, self._excess_exact, t, vec,
                                self.operator.scale)
        if (vec >= 0.0).all():
            thresh = CLAMP_RELATIVE * (np.max(np.abs(vec)) if vec.size else 0.0)
            small_neg = (out < 0.0) & (out > -thresh)
            self.telemetry.add(int(np.count_nonzero(small_neg)))
            out[small_neg] = 0.0
        return out

    # -- resolvent ----------------------------------------------------------

    def _gth(self, alpha: float) -> _elim.GTHFactors:
        with self._lock:
            fac = self._gth_cache.get(alpha)
            if fac is None:
                excess = np.array([float(e) + alpha for e in self._excess_exact])
                fac = _elim.gth_factor(self._offdiag_float, excess)
                self._gth_cache[alpha] = fac
        return fac

    def resolvent_vec(self, alpha: float, vec: np.ndarray) -> np.ndarray:
        """(L + alpha)^{-1} vec via subtraction-free elimination."""
        if alpha <= 0:
            raise InputError(f"resolvent parameter must be positive, got {alpha}")
        return self._gth(alpha).solve(np.asarray(vec, dtype=float))

    def resolvent_residual(self, alpha: float, u: np.ndarray, f: np.ndarray) -> float:
        """l2(m) norm of (L+alpha)u - f, accumulated in exact rationals."""
        op = self.operator
        n = len(op)
        total = Fraction(0)
        alpha_f = Fraction(alpha)
        for i in range(n):
            acc = (Fraction(sum(self._offdiag_exact[i].values()))
                   + Fraction(self._excess_exact[i]) + alpha_f) * Fraction(u[i])
            for j, b in self._offdiag_exact[i].items():
                acc -= Fraction(b) * Fraction(u[j])
            acc -= Fraction(f[i])
            total += acc * acc * Fraction(op.measures[i])
        return float(total) ** 0.5


# -- module-level operations matching the lab's vocabulary -------------------


def heat_apply(engine: SemigroupEngine, t: float, f: VertexFunction) -> VertexFunction:
    """e^{-tL} f for f supported on the engine's subset."""
    op = engine.operator
    vec = op.local_vector(f)
    return op.vertex_function(engine.heat_vec(t, vec))


def resolvent_apply(engine: SemigroupEngine, alpha: float, f: VertexFunction) -> ResolventResult:
    """(L + alpha)^{-1} f with an exact-arithmetic residual certificate."""
    op = engine.operator
    vec = op.local_vector(f)
    u = engine.resolvent_vec(alpha, vec)
    residual = engine.resolvent_residual(alpha, u, vec)
    return ResolventResult(op.vertex_function(u), alpha, residual)


def heat_oracle(op: RestrictedOperator, t: float, v: VertexFunction,
                steps: int = 10_000) -> VertexFunction:
    """Independent check of the heat action: classical 4th-order one-step
    integration of u' = -Lu with uniform steps.

    Requires (t/steps) * ||L|| < 0.5 (Gershgorin bound), otherwise the
    explicit scheme is unstable and a parameter error is raised.
    """
    if t < 0:
        raise InputError(f"negative time t = {t}")
    if steps < 1:
        raise InputError("steps must be >= 1")
    vec = op.local_vector(v)
    if t == 0.0:
        return op.vertex_function(vec)
    A = op.matrix
    norm_bound = 2.0 * op.scale
    h = t / steps
    if h * norm_bound >= 0.5:
        raise InputError(
            f"step size {h:.3e} too large for operator norm ~{norm_bound:.3e}; "
            f"increase steps above {int(2 * t * norm_bound) + 1}")
    u = vec.copy()
    for _ in range(steps):
        k1 = A @ u
        k2 = A @ (u - 0.5 * h * k1)
        k3 = A @ (u - 0.5 * h * k2)
        k4 = A @ (u - h * k3)
        u = u - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return op.vertex_function(u)


def variational_value(op: RestrictedOperator, alpha: float, f: VertexFunction,
                      v: VertexFunction) -> float:
    """Q(v) + alpha * || v - f/alpha ||_m^2, the functional whose unique
    minimizer over the subset is the resolvent (L+alpha)^{-1} f."""
    if alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    energy = evaluate_form(op, v)
    vvec = op.local_vector(v)
    fvec = op.local_vector(f)
    diff = vvec - fvec / alpha
    penalty = float(np.sum(diff * diff * op.measure_vector))
    return energy + alpha * penalty
