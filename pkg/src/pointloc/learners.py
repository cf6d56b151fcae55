"""Learner stack: transform + isotropic weak learning, restart boosting to
constant coverage, weight-halving majority-vote boosting, and the active
halfspace learner built on top.

partial_learn moves an arbitrary pair into a dense isotropic subspace and
runs the isotropic learner through a transformed oracle view.  weak_learn
repeats it on the uninferred remainder under a fixed query budget, falling
back to direct point queries when a round degenerates (reference point on
the hyperplane), which is how exactly-on-hyperplane mass gets labeled.
boost reweights by 1/11 per label and takes majority votes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .config import DEFAULT_CONFIG, EngineConfig
from .errors import BudgetExhausted, Infeasible, NoVote, PointlocError
from .geometry import (
    LABEL_BOTTOM,
    Hyperplane,
    MarginOracleConfig,
    PartialLabeling,
    QueryOracle,
    WeightedPointSet,
    _OracleBase,
)
from .isolearn import iso_learn_report
from .isotropy import dense_isotropic_subspace


@dataclass
class SmallEntry:
    """One small-margin sample member, in base coordinates."""

    point_id: int
    vector: np.ndarray
    scale: float          # |T_j(v)|: transformed-margin denominator


@dataclass
class RoundTranscript:
    """Everything zero-error verification needs about one inference round."""

    round_id: int
    dim: int              # dimension the inference ran in
    lam: float
    ref_vec: np.ndarray   # base query vector of x_ref (its T-norm is absorbed, i.e. 1)
    ref_sign: int
    smalls: list[SmallEntry] = field(default_factory=list)
    labeled: dict[int, tuple[float, float]] = field(default_factory=dict)
    # point_id -> (C_v certificate, |T_i(v)| scale at this round)


@dataclass
class RoundRecord:
    round_id: int
    kind: str             # 'iso' | 'zero' | 'direct'
    k: float
    queries: int
    oracle_calls: int
    coverage: float
    dim: int
    transcript: RoundTranscript | None = None
    aborted: str = ""


@dataclass
class RunRecord:
    """Per-run complexity accounting (empirical ED/MD stand-in)."""

    queries_total: int = 0
    oracle_calls: int = 0
    rounds: int = 0
    per_round: list = field(default_factory=list)
    errors_vs_truth: int | None = None
    flags: list = field(default_factory=list)


@dataclass
class WeightState:
    """Boosting weights wt(x) = 11^-labels(x), tracked by exact counts."""

    label_counts: np.ndarray
    round: int = 0

    @property
    def weights(self) -> np.ndarray:
        return 11.0 ** (-self.label_counts.astype(np.float64))

    def distribution(self) -> np.ndarray:
        """Normalized weights, exponent-shifted so skewed counts stay finite."""
        shifted = self.label_counts - self.label_counts.min()
        w = 11.0 ** (-shifted.astype(np.float64))
        return w / w.sum()


def partial_learn(oracle: _OracleBase, pair: WeightedPointSet, p: float,
                  rng: np.random.Generator, cfg: EngineConfig = DEFAULT_CONFIG,
                  round_id: int = 0, point_ids: np.ndarray | None = None
                  ) -> tuple[PartialLabeling, RoundRecord]:
    """Dense-subspace transform + isotropic weak learning; bottom outside V."""
    if point_ids is None:
        point_ids = np.arange(pair.n)
    q0, c0 = oracle.queries_used, oracle.oracle_calls_used

    witness, transform = dense_isotropic_subspace(
        pair, 0.25, max_iter=cfg.forster_max_iter, snap_tol=cfg.snap_tol,
        detect_every=cfg.forster_detect_every,
    )
    members = witness.member_indices
    images, scales = transform.transform_points(pair.points[members])
    sub_pair = WeightedPointSet.normalized(images, pair.weights[members])
    sub_oracle = oracle.view(transform.lift_matrix())

    lam = cfg.lambda_for(pair.d, p)
    mcfg = MarginOracleConfig(lam)
    sub_labeling, rep = iso_learn_report(sub_oracle, sub_pair, mcfg, p / 2.0,
                                         rng, cfg, round_id)

    labeling = PartialLabeling.empty(pair.n)
    labeling.merge_from(sub_labeling, members)

    transcript = None
    kind = "zero" if rep.zero_case else "iso"
    if rep.inference is not None and rep.structure is not None:
        transcript = RoundTranscript(
            round_id=round_id,
            dim=sub_pair.d,
            lam=lam,
            ref_vec=transform.lift_matrix() @ rep.structure.x_ref,
            ref_sign=rep.ref_sign,
        )
        if rep.reduced is not None:
            for s in rep.reduced.small_indices:
                transcript.smalls.append(SmallEntry(
                    point_id=int(point_ids[members[s]]),
                    vector=pair.points[members[s]],
                    scale=float(scales[s]),
                ))
        lm = sub_labeling.labeled_mask() & ~np.isnan(sub_labeling.rel_margin)
        for s in np.flatnonzero(lm):
            transcript.labeled[int(point_ids[members[s]])] = (
                float(sub_labeling.rel_margin[s]), float(scales[s]))

    k = rep.structure.k if rep.structure is not None else float(sub_pair.d)
    record = RoundRecord(
        round_id=round_id, kind=kind, k=k,
        queries=oracle.queries_used - q0,
        oracle_calls=oracle.oracle_calls_used - c0,
        coverage=labeling.coverage(pair.weights),
        dim=sub_pair.d, transcript=transcript, aborted=rep.aborted,
    )
    return labeling, record


def weaklearn_budget(d: int, cfg: EngineConfig) -> int:
    return math.ceil(5.0 * cfg.weaklearn_budget_constant * d
                     * max(1.0, math.log2(d)) ** 2)


def weak_learn(oracle: _OracleBase, pair: WeightedPointSet,
               rng: np.random.Generator, cfg: EngineConfig = DEFAULT_CONFIG,
               point_ids: np.ndarray | None = None, round_base: int = 0
               ) -> tuple[PartialLabeling, list[RoundRecord]]:
    """Restart boosting of partial_learn to constant coverage.

    Runs on the uninferred remainder until everything is labeled or the
    budget 5 c d log^2(d) is hit.  A round that labels nothing (zero or
    degenerate reference) triggers a direct-query round on the heaviest
    remaining points, which is both sound and the only way points exactly
    on the hyperplane ever get labeled.
    """
    if point_ids is None:
        point_ids = np.arange(pair.n)
    d = pair.d
    p = float(d) ** -cfg.weaklearn_p_exponent
    labeling = PartialLabeling.empty(pair.n)
    records: list[RoundRecord] = []
    rid = round_base
    remaining = np.arange(pair.n)
    with oracle.local_budget(weaklearn_budget(d, cfg)):
        while len(remaining) and oracle.remaining() > 8:
            sub = pair.restrict(remaining)
            try:
                lab, rec = partial_learn(oracle, sub, p, rng, cfg, rid,
                                         point_ids[remaining])
            except BudgetExhausted:
                break
            records.append(rec)
            rid += 1
            mask = lab.labeled_mask()
            if mask.any():
                labeling.merge_from(lab, remaining)
                remaining = remaining[~mask]
                continue
            # stall: direct queries, heaviest mass first
            order = np.argsort(-pair.weights[remaining], kind="stable")
            take = remaining[order][: cfg.direct_round_chunk]
            q0 = oracle.queries_used
            exhausted = False
            for idx in take:
                try:
                    s = oracle.sign(pair.points[idx])
                except BudgetExhausted:
                    exhausted = True
                    break
                labeling.labels[idx] = s
                labeling.ref_index[idx] = rid
            done = labeling.labels[take] != LABEL_BOTTOM
            records.append(RoundRecord(
                round_id=rid, kind="direct", k=0.0,
                queries=oracle.queries_used - q0, oracle_calls=0,
                coverage=float(pair.weights[take[done]].sum()), dim=d,
            ))
            rid += 1
            remaining = remaining[labeling.labels[remaining] == LABEL_BOTTOM]
            if exhausted:
                break
    return labeling, records


def boost(oracle: _OracleBase, X: np.ndarray, delta: float,
          rng: np.random.Generator, cfg: EngineConfig = DEFAULT_CONFIG
          ) -> tuple[np.ndarray, RunRecord, WeightState]:
    """Weight-halving (by 11) majority-vote boosting of weak_learn.

    Returns a total labeling of X; raises NoVote if some point never got a
    usable vote (designed probability <= delta).
    """
    if not 0.0 < delta < 1.0:
        raise PointlocError("delta must lie in (0,1)")
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    norms = np.linalg.norm(X, axis=1)
    final = np.full(n, LABEL_BOTTOM, dtype=np.int8)
    final[norms == 0.0] = 0  # the zero vector is on every hyperplane
    active = np.flatnonzero(norms > 0.0)
    unit = X[active] / norms[active][:, None]

    rounds_total = math.ceil(cfg.boost_round_constant * math.log(n / delta))
    counts = np.zeros(len(active), dtype=np.int64)
    votes = np.full((rounds_total, len(active)), LABEL_BOTTOM, dtype=np.int8)
    record = RunRecord()
    q0, c0 = oracle.queries_used, oracle.oracle_calls_used
    rid = 0
    for t in range(rounds_total):
        shifted = counts - counts.min()
        wts = 11.0 ** (-shifted.astype(np.float64))
        keep = np.flatnonzero(wts > 0.0)
        pair = WeightedPointSet(unit[keep], wts[keep] / wts[keep].sum())
        qr = oracle.queries_used
        lab, recs = weak_learn(oracle, pair, rng, cfg, point_ids=keep,
                               round_base=rid)
        rid += len(recs) + 1
        votes[t, keep] = lab.labels
        labeled = keep[lab.labeled_mask()]
        counts[labeled] += 1
        record.per_round.append({
            "round": t,
            "queries": oracle.queries_used - qr,
            "coverage": lab.coverage(pair.weights),
            "k_values": [r.k for r in recs],
            "transcripts": recs,
        })
    record.rounds = rounds_total
    record.queries_total = oracle.queries_used - q0
    record.oracle_calls = oracle.oracle_calls_used - c0

    pos = (votes == 1).sum(axis=0)
    neg = (votes == -1).sum(axis=0)
    zer = (votes == 0).sum(axis=0)
    none = (pos + neg + zer) == 0
    if none.any():
        raise NoVote(f"{int(none.sum())} points received no vote")
    conflict = (zer > 0) & ((pos + neg) > 0)
    if conflict.any():
        raise NoVote(f"{int(conflict.sum())} points mix zero and nonzero votes")
    out = np.zeros(len(active), dtype=np.int8)
    out[pos > neg] = 1
    out[neg > pos] = -1
    tie = (pos == neg) & (pos > 0)
    if tie.any():
        record.flags.append(f"{int(tie.sum())} majority ties resolved by round order")
        for i in np.flatnonzero(tie):
            col = votes[:, i]
            first = col[col != LABEL_BOTTOM][0]
            out[i] = first
    final[active] = out
    return final, record, WeightState(counts, rounds_total)


def active_learn_halfspace(sample_source, oracle: QueryOracle, epsilon: float,
                           delta: float, rng: np.random.Generator,
                           cfg: EngineConfig = DEFAULT_CONFIG
                           ) -> tuple[Hyperplane, RunRecord]:
    """PAC active learner: label a passive sample with boost, then output any
    hypothesis consistent with all collected labels."""
    d = oracle.hidden.dim
    n = math.ceil(cfg.active_sample_constant * (d + math.log(2.0 / delta)) / epsilon)
    X = np.asarray(sample_source(n, rng), dtype=np.float64)
    if oracle.binary:
        work = np.hstack([X, np.ones((len(X), 1))])
    else:
        work = X
    labels, record, _ = boost(oracle, work, delta / 2.0, rng, cfg)
    w = _consistent_hypothesis(work, labels)
    if oracle.binary:
        return Hyperplane(w[:d], float(w[d])), record
    return Hyperplane(w, 0.0), record


def _consistent_hypothesis(points: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Feasibility program maximizing the minimum signed agreement margin."""
    norms = np.linalg.norm(points, axis=1)
    ok = norms > 0.0
    unit = points[ok] / norms[ok][:, None]
    labs = labels[ok]
    dim = points.shape[1]
    signed = unit[labs != 0] * labs[labs != 0, None].astype(np.float64)
    a_ub = np.hstack([-signed, np.ones((len(signed), 1))]) if len(signed) else None
    b_ub = np.zeros(len(signed)) if len(signed) else None
    zero_rows = unit[labs == 0]
    a_eq = np.hstack([zero_rows, np.zeros((len(zero_rows), 1))]) if len(zero_rows) else None
    b_eq = np.zeros(len(zero_rows)) if len(zero_rows) else None
    c = np.zeros(dim + 1)
    c[dim] = -1.0
    bounds = [(-1.0, 1.0)] * dim + [(0.0, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success or res.x is None or res.x[dim] <= 1e-12:
        raise Infeasible("no hypothesis with strictly positive agreement margin")
    w = res.x[:dim]
    return w / np.linalg.norm(w)
