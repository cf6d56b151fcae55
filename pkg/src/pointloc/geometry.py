"""Core geometric types, the hidden-hyperplane query oracle, and the
sign-query subroutines everything else is built from.

The oracle answers ternary linear queries sign(<x,h> + b) with an explicit
zero floor (|value| <= sign_floor * |x| * |h| reads as 0); in binary
non-homogeneous mode it answers sign(alpha) * sign(<x/alpha, h> + b) with
the alpha = 0 coefficient perturbed so the case is unreachable.  Instance
generators keep every planted margin either exactly 0 or >= 1e-9, so the
floor never misclassifies.

A ``SubspaceOracle`` exposes the same query surface for a linearly
transformed view of the problem: a query q in the view maps to the base
query M @ q, which collapses to one dot product against the pulled-back
functional.  Counters and budgets always live on the root oracle.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    BudgetExhausted,
    DegenerateHyperplane,
    InvalidSpec,
    RangeExceeded,
)

LABEL_NEG = -1
LABEL_ZERO = 0
LABEL_POS = 1
LABEL_BOTTOM = 2

LT, EQ, GT = -1, 0, 1

DEFAULT_SIGN_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperplane:
    """Hidden classifier: normal vector plus optional bias (0 if homogeneous)."""

    normal: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        if normal.ndim != 1:
            raise InvalidSpec("hyperplane normal must be a vector")
        if not np.all(np.isfinite(normal)) or not math.isfinite(self.bias):
            raise InvalidSpec("hyperplane entries must be finite")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.normal))


class WeightedPointSet:
    """Unit points X in R^d together with a probability distribution mu."""

    __slots__ = ("points", "weights")

    UNIT_TOL = 1e-9
    WEIGHT_TOL = 1e-12

    def __init__(self, points, weights):
        points = np.ascontiguousarray(points, dtype=np.float64)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if points.ndim != 2 or weights.ndim != 1 or len(weights) != len(points):
            raise InvalidSpec("points must be (n,d), weights (n,)")
        if len(points) == 0:
            raise InvalidSpec("empty point set")
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
            raise InvalidSpec("non-finite entries")
        norms = np.linalg.norm(points, axis=1)
        if np.any(np.abs(norms - 1.0) > self.UNIT_TOL):
            raise InvalidSpec("points must have unit norm within 1e-9")
        if np.any(weights <= 0.0):
            raise InvalidSpec("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > self.WEIGHT_TOL:
            raise InvalidSpec("weights must sum to 1 within 1e-12")
        self.points = points
        self.weights = weights

    @classmethod
    def normalized(cls, points, weights=None) -> "WeightedPointSet":
        """Build a valid pair from raw data: unit-normalize points, drop
        zero-weight entries, renormalize the distribution."""
        points = np.asarray(points, dtype=np.float64)
        n = len(points)
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=np.float64)
        keep = weights > 0.0
        points, weights = points[keep], weights[keep]
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms == 0.0):
            raise InvalidSpec("cannot normalize a zero point")
        points = points / norms[:, None]
        weights = weights / weights.sum()
        return cls(points, weights)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def restrict(self, indices) -> "WeightedPointSet":
        """Sub-pair on the given indices with the renormalized distribution."""
        indices = np.asarray(indices, dtype=np.int64)
        w = self.weights[indices]
        return WeightedPointSet(self.points[indices], w / w.sum())


@dataclass(frozen=True)
class MarginOracleConfig:
    """Representativeness factor for the simulated margin oracle."""

    lam: float = 20.0

    def __post_init__(self):
        if self.lam < 5.0:
            raise InvalidSpec("lambda must be >= 5 (simulation bound is 5/lambda)")


@dataclass
class PartialLabeling:
    """Per-point label in {-,0,+,bottom} with optional inference certificates.

    rel_margin is present exactly on points labeled by inference (the
    factor-2 relative-margin certificate C_v); direct-query labels carry
    provenance only.
    """

    labels: np.ndarray
    rel_margin: np.ndarray
    ref_index: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "PartialLabeling":
        return cls(
            labels=np.full(n, LABEL_BOTTOM, dtype=np.int8),
            rel_margin=np.full(n, np.nan),
            ref_index=np.full(n, -1, dtype=np.int32),
        )

    @property
    def n(self) -> int:
        return len(self.labels)

    def labeled_mask(self) -> np.ndarray:
        return self.labels != LABEL_BOTTOM

    def coverage(self, weights: np.ndarray) -> float:
        return float(weights[self.labeled_mask()].sum())

    def merge_from(self, other: "PartialLabeling", index_map: np.ndarray) -> None:
        """Copy other's non-bottom entries onto self at index_map positions."""
        mask = other.labeled_mask()
        tgt = index_map[mask]
        self.labels[tgt] = other.labels[mask]
        self.rel_margin[tgt] = other.rel_margin[mask]
        self.ref_index[tgt] = other.ref_index[mask]

    def validate(self) -> None:
        ok = np.isin(self.labels, [LABEL_NEG, LABEL_ZERO, LABEL_POS, LABEL_BOTTOM])
        if not ok.all():
            raise InvalidSpec("labels outside {-1,0,1,bottom}")
        has_cert = ~np.isnan(self.rel_margin)
        if np.any(has_cert & (self.labels == LABEL_BOTTOM)):
            raise InvalidSpec("certificate on an unlabeled point")
        if np.any(self.rel_margin[has_cert] <= 0.0):
            raise InvalidSpec("certificates must be positive")


class _OracleCore:
    """Counter and budget state shared by a root oracle and its views."""

    __slots__ = ("queries_used", "oracle_calls_used", "caps")

    def __init__(self, budget=None):
        self.queries_used = 0
        self.oracle_calls_used = 0
        self.caps: list[int] = []
        if budget is not None:
            self.caps.append(int(budget))

    def remaining(self) -> int:
        if not self.caps:
            return int(kernels.BIG_BUDGET)
        return min(c - self.queries_used for c in self.caps)

    def consume(self, nq: int) -> None:
        if nq > self.remaining():
            raise BudgetExhausted(
                f"{nq} queries requested, {self.remaining()} remaining"
            )
        self.queries_used += nq


class _OracleBase:
    """Query surface shared by the root oracle and subspace views.

    A view answers exactly like the root oracle would on the lifted query
    M q; in particular the zero floor keeps the root's scale
    sign_floor * |M q| * |h|, so a view whose pulled-back functional is
    pure rounding noise answers 0 everywhere rather than inventing signs.
    """

    core: _OracleCore
    h_eff: np.ndarray
    alpha_vec: np.ndarray
    bias_const: float
    binary: bool
    floor_scale: float       # sign_floor * |h| of the ROOT oracle
    lift_total: np.ndarray | None  # None = identity (root)

    @property
    def queries_used(self) -> int:
        return self.core.queries_used

    @property
    def oracle_calls_used(self) -> int:
        return self.core.oracle_calls_used

    def remaining(self) -> int:
        return self.core.remaining()

    def consume(self, nq: int) -> None:
        self.core.consume(nq)

    def note_oracle_call(self) -> None:
        self.core.oracle_calls_used += 1

    @contextlib.contextmanager
    def local_budget(self, cap: int):
        """Scoped query cap on top of any outer caps."""
        self.core.caps.append(self.core.queries_used + int(cap))
        try:
            yield
        finally:
            self.core.caps.pop()

    # raw (query-free) evaluations used to feed kernels
    def margins_of(self, mat: np.ndarray) -> np.ndarray:
        return mat @ self.h_eff + self.bias_const

    def alphas_of(self, mat: np.ndarray) -> np.ndarray:
        if self.binary:
            return mat @ self.alpha_vec
        return np.zeros(len(mat))

    def norms_of(self, mat: np.ndarray) -> np.ndarray:
        """Base-space norms |M q| of the rows (floor scaling)."""
        if self.lift_total is None:
            return np.linalg.norm(mat, axis=1)
        return np.linalg.norm(mat @ self.lift_total.T, axis=1)

    def sign(self, q) -> int:
        """One ternary (or simulated binary) linear query."""
        q = np.asarray(q, dtype=np.float64)
        self.consume(1)
        v = float(q @ self.h_eff) + self.bias_const
        alpha = float(q @ self.alpha_vec) if self.binary else 0.0
        base = q if self.lift_total is None else self.lift_total @ q
        thr = self.floor_scale * float(np.linalg.norm(base))
        return int(kernels.qsign(v, alpha, thr, self.binary))

    def view(self, lift: np.ndarray) -> "SubspaceOracle":
        return SubspaceOracle(self, lift)


class QueryOracle(_OracleBase):
    """The hidden hyperplane plus query/budget accounting.

    mode 'ternary': queries are d-vectors answered in {-,0,+}.
    mode 'binary': queries are (d+1)-vectors (x, alpha) answered in {-,+}
    through the non-homogeneous simulation.
    """

    def __init__(self, hidden: Hyperplane, *, mode: str = "ternary",
                 budget=None, sign_floor: float = DEFAULT_SIGN_FLOOR):
        if mode not in ("ternary", "binary"):
            raise InvalidSpec(f"unknown oracle mode {mode!r}")
        self.hidden = hidden
        self.mode = mode
        self.sign_floor = float(sign_floor)
        self.core = _OracleCore(budget)
        self.binary = mode == "binary"
        d = hidden.dim
        if self.binary:
            self.h_eff = np.concatenate([hidden.normal, [hidden.bias]])
            self.alpha_vec = np.zeros(d + 1)
            self.alpha_vec[d] = 1.0
            self.bias_const = 0.0
        else:
            self.h_eff = hidden.normal.copy()
            self.alpha_vec = np.zeros(d)
            self.bias_const = hidden.bias
        hnorm = float(np.linalg.norm(self.h_eff))
        self.floor_scale = self.sign_floor * hnorm
        self.lift_total = None

    @property
    def query_dim(self) -> int:
        return len(self.h_eff)


class SubspaceOracle(_OracleBase):
    """Linearly transformed view: a query q here is the base query lift @ q."""

    def __init__(self, parent: _OracleBase, lift: np.ndarray):
        self.parent = parent
        self.lift = np.ascontiguousarray(lift, dtype=np.float64)
        self.core = parent.core
        self.h_eff = self.lift.T @ parent.h_eff
        self.alpha_vec = self.lift.T @ parent.alpha_vec
        self.bias_const = parent.bias_const
        self.binary = parent.binary
        self.floor_scale = parent.floor_scale
        if parent.lift_total is None:
            self.lift_total = self.lift
        else:
            self.lift_total = parent.lift_total @ self.lift

    @property
    def query_dim(self) -> int:
        return self.lift.shape[1]


# ---------------------------------------------------------------------------
# operations


def sign_query(oracle: _OracleBase, x) -> int:
    return oracle.sign(x)


def normalized_margin(x, h: Hyperplane) -> float:
    """m(x,h) = <x,h>/|h|.  Harness-only: uses the hidden normal."""
    hn = h.norm()
    if hn == 0.0:
        raise DegenerateHyperplane("normalized margin undefined for h = 0")
    return float(np.dot(x, h.normal)) / hn

def margin_norm(S, h: Hyperplane) -> float:
    """sqrt(sum of squared normalized margins); 0 on the empty set."""
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        return 0.0
    hn = h.norm()
    if hn == 0.0:
        raise DegenerateHyperplane("margin norm undefined for h = 0")
    m = S @ h.normal / hn
    return float(np.linalg.norm(m))


def gaussian_representative(S, rng: np.random.Generator) -> np.ndarray:
    """Gaussian combination sum_i g_i x_i; its margin is N(0, |S|_h^2)."""
    S = np.asarray(S, dtype=np.float64)
    if len(S) == 0:
        raise InvalidSpec("representative of an empty set")
    g = rng.standard_normal(len(S))
    return g @ S


def compare_abs_margin(oracle: _OracleBase, x, y) -> int:
    """GT/EQ/LT comparison of |<x,h>| vs |<y,h>| in exactly 2 queries,
    via the identity (a+b)(a-b) = a^2 - b^2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s1 = oracle.sign(x + y)
    s2 = oracle.sign(x - y)
    p = s1 * s2
    if p > 0:
        return GT
    if p < 0:
        return LT
    return EQ


def median_abs_margin(oracle: _OracleBase, candidates) -> int:
    """Index of a median-|margin| candidate (deterministic selection,
    ties toward the lowest index).  Costs at most 2 * c_sel * len queries."""
    candidates = np.ascontiguousarray(candidates, dtype=np.float64)
    if len(candidates) == 0:
        raise InvalidSpec("median of an empty candidate list")
    vals = oracle.margins_of(candidates)
    norms = oracle.norms_of(candidates)
    alphas = oracle.alphas_of(candidates)
    idx, queries, status = kernels.mom_median(
        vals, norms, alphas, oracle.floor_scale, oracle.binary,
        np.int64(oracle.remaining()),
    )
    oracle.consume(int(queries))
    if status == kernels.STATUS_BUDGET:
        raise BudgetExhausted("median selection hit the query budget")
    return int(idx)


def relative_margin_search(oracle: _OracleBase, w, x_ref, tol: float,
                           range_cap: float, ref_sign: int | None = None) -> float:
    """gamma with <w,h> ~= gamma * <x_ref,h>, |error| <= tol, by bracketing
    sign(<w - alpha*x_ref, h>) over alpha in [-range_cap, range_cap].

    Query count <= ceil(log2(2*range_cap/tol)) + 2 (excluding the reference
    sign query when ref_sign is not supplied).
    """
    if tol <= 0.0 or range_cap < 1.0:
        raise InvalidSpec("need tol > 0 and range_cap >= 1")
    w = np.asarray(w, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if ref_sign is None:
        ref_sign = oracle.sign(x_ref)
    if ref_sign == 0:
        raise DegenerateHyperplane("reference point has sign 0")
    vw = float(oracle.margins_of(w[None, :])[0])
    vref = float(oracle.margins_of(x_ref[None, :])[0])
    aw = float(oracle.alphas_of(w[None, :])[0])
    aref = float(oracle.alphas_of(x_ref[None, :])[0])
    nw = float(oracle.norms_of(w[None, :])[0])
    nref = float(oracle.norms_of(x_ref[None, :])[0])
    gamma, queries, status = kernels.bisect_ratio(
        vw, vref, nw, nref,
        aw, aref, int(ref_sign), float(tol), float(range_cap),
        oracle.floor_scale, oracle.binary, np.int64(oracle.remaining()),
    )
    oracle.consume(int(queries))
    if status == kernels.STATUS_BUDGET:
        raise BudgetExhausted("ratio search hit the query budget")
    if status == kernels.STATUS_RANGE:
        raise RangeExceeded(f"true ratio outside [-{range_cap}, {range_cap}]")
    return float(gamma)


def lift_instance(pair: WeightedPointSet) -> WeightedPointSet:
    """Non-homogeneous embedding x -> (x,1)/|(x,1)|, weights preserved.

    The label of the image under (h,b) equals the label of x under the
    affine classifier sign(<x,h>+b)."""
    lifted = np.hstack([pair.points, np.ones((pair.n, 1))])
    lifted /= np.linalg.norm(lifted, axis=1)[:, None]
    return WeightedPointSet(lifted, pair.weights.copy())


def lifted_query(oracle: QueryOracle, x, alpha: float) -> int:
    """sign(<(x,alpha),(h,b)>) through one binary query of the base oracle."""
    if not oracle.binary:
        raise InvalidSpec("lifted_query requires a binary-mode oracle")
    q = np.concatenate([np.asarray(x, dtype=np.float64), [float(alpha)]])
    return oracle.sign(q)


def oracle_truth_sign(x, hidden: Hyperplane, *, binary: bool,
                      sign_floor: float = DEFAULT_SIGN_FLOOR) -> int:
    """Ground-truth label with the same floor semantics the oracle uses."""
    x = np.asarray(x, dtype=np.float64)
    v = float(x @ hidden.normal) + hidden.bias
    hnorm = math.hypot(hidden.norm(), abs(hidden.bias)) if binary else hidden.norm()
    thr = sign_floor * float(np.linalg.norm(x)) * hnorm
    if binary:
        return 1 if v > thr else (-1 if v < -thr else 1)
    return int(kernels.qsign(v, 0.0, thr, False))
