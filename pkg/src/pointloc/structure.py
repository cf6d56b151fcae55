"""Margin-structure search over an isotropic pair.

Per level i, draws r samples of size m/2^i, takes their Gaussian
representatives through the simulated margin oracle, and selects the
median by absolute margin with comparison queries; a gap of factor ell
between consecutive level medians certifies the margin-gap structure and
fixes the reference point and coverage parameter k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .errors import PointlocError
from .geometry import (
    GT,
    MarginOracleConfig,
    WeightedPointSet,
    compare_abs_margin,
    median_abs_margin,
    _OracleBase,
)

MARGIN_GAP = "margin_gap"
LARGE_MARGIN = "large_margin"

K_MIN = 0.1


@dataclass(frozen=True)
class StructureResult:
    kind: str                 # MARGIN_GAP | LARGE_MARGIN
    x_ref: np.ndarray         # representative at the returned level
    k: float                  # 2^(level+1)/5 clamped into [1/10, d]
    level: int


@dataclass(frozen=True)
class StructureParams:
    ell: float                # gap parameter, > 2
    p: float                  # failure probability budget
    m: int                    # sample base, power of two >= 10d
    r: int                    # subsets per level
    c_structured: int = 5

    def __post_init__(self):
        if self.ell <= 2.0:
            raise PointlocError("gap parameter ell must exceed 2")
        if self.m & (self.m - 1) or self.m <= 0:
            raise PointlocError("m must be a power of two")
        if self.r < 1:
            raise PointlocError("r must be >= 1")

    @classmethod
    def derive(cls, d: int, p: float, lam: float, cfg: EngineConfig) -> "StructureParams":
        m = 1
        while m < 10 * d:
            m *= 2
        r = math.ceil(cfg.r_constant * math.log(4.0 * math.log2(m) / p))
        return cls(ell=cfg.ell_for(d, lam), p=p, m=m, r=max(1, r))


def clamp_k(level: int, d: int) -> float:
    return min(max(2.0 ** (level + 1) / 5.0, K_MIN), float(d))


def check_gap(oracle: _OracleBase, a, b, ell: float) -> bool:
    """True iff |<a,h>| > ell * |<b,h>|; two queries via compare_abs_margin."""
    return compare_abs_margin(oracle, a, ell * np.asarray(b, dtype=np.float64)) == GT


def structure_search(oracle: _OracleBase, pair: WeightedPointSet,
                     mcfg: MarginOracleConfig, params: StructureParams,
                     rng: np.random.Generator) -> StructureResult:
    """Locate the margin structure of a 1/4-isotropic pair.

    Returns MarginGap at the first level whose median representative beats
    the next level's by factor ell, else LargeMargin at the loop exit
    level.  Caller guarantees a nonzero hidden normal (via the zero test).
    """
    d = pair.d
    medians: list[np.ndarray] = []
    level = 0
    while 2**level < 2 * d:
        size = max(1, params.m // 2**level)
        picks = rng.choice(pair.n, size=(params.r, size), p=pair.weights)
        coeffs = rng.standard_normal((params.r, size))
        reps = np.einsum("rs,rsd->rd", coeffs, pair.points[picks])
        oracle.core.oracle_calls_used += params.r
        med = median_abs_margin(oracle, reps)
        medians.append(reps[med])
        level += 1

    level = 0
    while 2**level < d:
        if check_gap(oracle, medians[level], medians[level + 1], params.ell):
            return StructureResult(MARGIN_GAP, medians[level], clamp_k(level, d), level)
        level += 1
    return StructureResult(LARGE_MARGIN, medians[level], clamp_k(level, d), level)
