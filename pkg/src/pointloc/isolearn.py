"""Reliable weak learner for pairs in 1/4-isotropic position.

Pipeline: degenerate-hyperplane test, structure search, optional
dimensionality reduction, per-basis-vector relative-margin estimation, and
threshold inference.  Labels are emitted only when the inferred score
clears 2/(3 lambda sqrt(10 d)), which simultaneously yields the factor-2
relative-margin certificate consumed by zero-error verification.

Soundness note: with the bisection tolerance used here, labels from rounds
that skip dimensionality reduction are deterministically correct given the
oracle's answers; the only probabilistic failure surface is the
small-margin property of V, which is exactly what the verification layer
re-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, EngineConfig
from .dimreduce import ReducedSubspace, dim_reduce
from .errors import BudgetExhausted, RangeExceeded
from .geometry import (
    LABEL_ZERO,
    MarginOracleConfig,
    PartialLabeling,
    WeightedPointSet,
    gaussian_representative,
    relative_margin_search,
    _OracleBase,
)
from .structure import StructureParams, StructureResult, structure_search

MAX_CAP_DOUBLINGS = 40


@dataclass
class InferenceRecord:
    """Outcome of the per-point decision rule for one learner run."""

    gamma: np.ndarray        # estimated relative margins per V-perp basis vector
    beta: np.ndarray         # (n, e) coefficients <x, w_i>
    score: np.ndarray        # beta @ gamma
    threshold: float


@dataclass
class IsoLearnReport:
    """Replay/verification data for a single iso_learn run."""

    aborted: str = ""
    zero_case: bool = False
    structure: StructureResult | None = None
    ref_sign: int = 0
    reduced: ReducedSubspace | None = None
    w_basis: np.ndarray | None = None
    inference: InferenceRecord | None = None
    queries: int = 0
    oracle_calls: int = 0
    budget_cap: int = 0


def gamma_tolerance(d: int, lam: float) -> float:
    return 1.0 / (3.0 * math.sqrt(10.0) * lam * d**1.5)


def score_threshold(d: int, lam: float) -> float:
    return 2.0 / (3.0 * lam * math.sqrt(10.0 * d))


def gamma_range_cap(d: int, lam: float) -> float:
    return max(1.0, 2.0 * lam * math.sqrt(10.0 * d))


def iso_budget(d: int, lam: float, p: float, cfg: EngineConfig) -> int:
    return math.ceil(
        cfg.iso_budget_constant * d * math.log2(2 * d) * math.log2(2 * d * lam / p)
    )


def zero_hyperplane_test(oracle: _OracleBase, pair: WeightedPointSet,
                         rng: np.random.Generator) -> bool:
    """True iff the hidden hyperplane is all-zero.

    One query on a Gaussian combination of X; only if that sign is 0 are
    the d standard basis vectors checked (so the non-degenerate path costs
    a single query almost surely).
    """
    combo = gaussian_representative(pair.points, rng)
    if oracle.sign(combo) != 0:
        return False
    d = oracle.query_dim
    eye = np.eye(d)
    return all(oracle.sign(eye[i]) == 0 for i in range(d))


def iso_learn(oracle: _OracleBase, pair: WeightedPointSet,
              mcfg: MarginOracleConfig, p: float, rng: np.random.Generator,
              cfg: EngineConfig = DEFAULT_CONFIG, round_id: int = 0) -> PartialLabeling:
    labeling, _ = iso_learn_report(oracle, pair, mcfg, p, rng, cfg, round_id)
    return labeling


def iso_learn_report(oracle: _OracleBase, pair: WeightedPointSet,
                     mcfg: MarginOracleConfig, p: float, rng: np.random.Generator,
                     cfg: EngineConfig = DEFAULT_CONFIG,
                     round_id: int = 0) -> tuple[PartialLabeling, IsoLearnReport]:
    """Weak-learn a 1/4-isotropic pair; failures degrade to all-bottom."""
    n, d = pair.n, pair.d
    lam = mcfg.lam
    report = IsoLearnReport()
    labeling = PartialLabeling.empty(n)
    q0, c0 = oracle.queries_used, oracle.oracle_calls_used
    report.budget_cap = iso_budget(d, lam, p, cfg)

    try:
        with oracle.local_budget(report.budget_cap):
            if zero_hyperplane_test(oracle, pair, rng):
                labeling.labels[:] = LABEL_ZERO
                labeling.ref_index[:] = round_id
                report.zero_case = True
                return labeling, report

            params = StructureParams.derive(d, p / 2.0, lam, cfg)
            sres = structure_search(oracle, pair, mcfg, params, rng)
            report.structure = sres
            ref_sign = oracle.sign(sres.x_ref)
            report.ref_sign = ref_sign
            if ref_sign == 0:
                report.aborted = "degenerate-reference"
                return labeling, report

            if sres.k < d / 10.0:
                red = dim_reduce(oracle, pair, sres.x_ref, mcfg, params.ell,
                                 sres.k, p / 2.0, rng, cfg)
                if red is None:
                    report.aborted = "dimreduce-failure"
                    return labeling, report
                report.reduced = red
                w_basis = red.w_basis
            else:
                w_basis = np.eye(d)
            report.w_basis = w_basis

            tol = gamma_tolerance(d, lam)
            cap0 = gamma_range_cap(d, lam)
            gammas = np.empty(w_basis.shape[1])
            for i in range(w_basis.shape[1]):
                cap = cap0
                doublings = 0
                while True:
                    try:
                        gammas[i] = relative_margin_search(
                            oracle, w_basis[:, i], sres.x_ref, tol, cap, ref_sign
                        )
                        break
                    except RangeExceeded:
                        doublings += 1
                        if doublings > MAX_CAP_DOUBLINGS:
                            report.aborted = "gamma-range"
                            return labeling, report
                        cap *= 2.0

            threshold = score_threshold(d, lam)
            beta = pair.points @ w_basis
            score = beta @ gammas
            report.inference = InferenceRecord(gammas, beta, score, threshold)

            mask = np.abs(score) >= threshold
            labeling.labels[mask] = (ref_sign * np.sign(score[mask])).astype(np.int8)
            labeling.rel_margin[mask] = np.abs(score[mask])
            labeling.ref_index[mask] = round_id
            return labeling, report
    except BudgetExhausted:
        report.aborted = "budget"
        return PartialLabeling.empty(n), report
    finally:
        report.queries = oracle.queries_used - q0
        report.oracle_calls = oracle.oracle_calls_used - c0
