"""Zero-error pipeline: constraint matrices from relative-margin
certificates, batched argmin reduction of matrix verification to
lower-dimensional point location, and the batched learner-verification
loop that yields unconditionally correct labels.

Only inference labels produced through dimensionality reduction carry any
probabilistic risk (the small-margin property of the subspace V); direct
and zero-test labels are query-exact and commit immediately.  A batch of
weak learners is verified by checking, per round, that every accepted
small point is genuinely small relative to that round's reference --
either through later-round certificates (the matrix verification problem
on the reference points) or by direct comparison queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, EngineConfig, relative_gap_constant
from .errors import GiveUp, PointlocError, UnlabeledSmallPoint
from .geometry import (
    LABEL_BOTTOM,
    LT,
    PartialLabeling,
    WeightedPointSet,
    compare_abs_margin,
    _OracleBase,
)
from .isotropy import _orth
from .learners import RoundTranscript, RunRecord, weak_learn


@dataclass
class ConstraintMatrix:
    """Reference points x_i, thresholds C_ij (nan = absent, diagonal absent),
    and the resolved sign of each <x_i, h>."""

    points: np.ndarray   # (m, D)
    entries: np.ndarray  # (m, m)
    signs: np.ndarray    # (m,)

    @property
    def m(self) -> int:
        return len(self.points)


@dataclass
class VerificationOutcome:
    verified: bool
    failing_pair: tuple[int, int] | None
    queries: int


def build_constraints(transcripts: list[RoundTranscript],
                      cfg: EngineConfig = DEFAULT_CONFIG) -> ConstraintMatrix:
    """Reduce the per-round small-point inequalities to reference-point
    comparisons.

    For a small v of round j labeled by a later round i with certificate
    C_v, it suffices to verify
    |<x_i,h>| <= [|T_j(v)| / (2 c(d) C_v |T_i(v)|)] * (|T_i(x_i)|/|T_j(x_j)|) * |<x_j,h>|;
    the entry C_ij keeps the smallest such threshold over S_{j,i}.
    Raises UnlabeledSmallPoint when some small point has no later
    certificate (the caller falls back to direct checks for that round).
    """
    m = len(transcripts)
    entries = np.full((m, m), np.nan)
    for j, tj in enumerate(transcripts):
        if not tj.smalls:
            continue
        c_j = relative_gap_constant(tj.dim, tj.lam)
        ref_norm_j = getattr(tj, "ref_norm", 1.0)
        for small in tj.smalls:
            owner = None
            for i in range(j + 1, m):
                if small.point_id in transcripts[i].labeled:
                    owner = i
                    break
            if owner is None:
                raise UnlabeledSmallPoint(
                    f"round {tj.round_id}: point {small.point_id} never certified later"
                )
            c_v, scale_i = transcripts[owner].labeled[small.point_id]
            ref_norm_i = getattr(transcripts[owner], "ref_norm", 1.0)
            val = (small.scale / (2.0 * c_j * c_v * scale_i)) * (ref_norm_i / ref_norm_j)
            cur = entries[owner, j]
            entries[owner, j] = val if np.isnan(cur) else min(cur, val)
    points = np.vstack([t.ref_vec for t in transcripts]) if m else np.empty((0, 0))
    signs = np.array([t.ref_sign for t in transcripts], dtype=np.int64)
    return ConstraintMatrix(points, entries, signs)


def choose_batch(m: int, cfg: EngineConfig = DEFAULT_CONFIG) -> int:
    """b = max(1, floor(m / (C4 log2(m) beta(m)))), beta = 2^sqrt(log2 m * log2 log2 m)."""
    lm = math.log2(m)
    beta = 2.0 ** math.sqrt(lm * math.log2(lm))
    return max(1, math.floor(m / (cfg.c4 * lm * beta)))


def matrix_verify(oracle: _OracleBase, cmat: ConstraintMatrix,
                  b: int | None = None, depth: int = 0,
                  rng: np.random.Generator | None = None,
                  cfg: EngineConfig = DEFAULT_CONFIG) -> VerificationOutcome:
    """Decide whether |<x_i,h>| <= C_ij |<x_j,h>| for all filled entries.

    Signs eliminate the absolute values; per row only the argmin inequality
    needs a direct check.  Below the brute-force threshold (or at the
    recursion cap) argmins come from sequential comparison queries; above
    it, columns are split into batches whose pairwise comparisons form a
    point-location problem in batch-size dimensions, solved by the
    zero-error pipeline recursively.
    """
    m = cmat.m
    q0 = oracle.queries_used
    if m == 0:
        return VerificationOutcome(True, None, 0)
    if b is not None and not b < m:
        raise PointlocError("batch size must satisfy b < m")
    signs = cmat.signs
    tilde = cmat.points * signs[:, None]

    filled = ~np.isnan(cmat.entries)
    np.fill_diagonal(filled, False)
    # zero-sign columns force zero-sign rows; no queries needed
    for i, j in zip(*np.nonzero(filled)):
        if signs[j] == 0 and signs[i] != 0:
            return VerificationOutcome(False, (int(i), int(j)), oracle.queries_used - q0)

    rows = [i for i in range(m) if signs[i] != 0]
    use_brute = m <= cfg.brute_force_threshold or depth >= cfg.recursion_depth_cap

    def final_check(i: int, j: int) -> VerificationOutcome | None:
        s = oracle.sign(tilde[i] - cmat.entries[i, j] * tilde[j])
        if s > 0:
            return VerificationOutcome(False, (i, int(j)),
                                       oracle.queries_used - q0)
        return None

    if use_brute:
        for i in rows:
            cols = [j for j in np.flatnonzero(filled[i]) if signs[j] != 0]
            if not cols:
                continue
            best = cols[0]
            for j in cols[1:]:
                s = oracle.sign(cmat.entries[i, j] * tilde[j]
                                - cmat.entries[i, best] * tilde[best])
                if s < 0:
                    best = j
            bad = final_check(i, int(best))
            if bad is not None:
                return bad
        return VerificationOutcome(True, None, oracle.queries_used - q0)

    # batched reduction to lower-dimensional point location
    if rng is None:
        rng = np.random.default_rng(0)
    if b is None:
        b = choose_batch(m, cfg)
    cols_all = [j for j in range(m) if signs[j] != 0]
    nbatches = math.ceil(len(cols_all) / b)
    winners: dict[int, list[int]] = {i: [] for i in rows}
    for bi in range(nbatches):
        batch = cols_all[bi * b:(bi + 1) * b]
        basis = _orth(tilde[batch].T)
        if basis.shape[1] == 0:
            # all batch references are ~zero vectors; values are all 0
            for i in rows:
                js = [j for j in batch if filled[i, j]]
                if js:
                    winners[i].append(js[0])
            continue
        diffs = []
        keys = []
        for i in rows:
            js = [j for j in batch if filled[i, j]]
            for a in range(len(js)):
                for c in range(a + 1, len(js)):
                    j1, j2 = js[a], js[c]
                    diffs.append(cmat.entries[i, j1] * tilde[j1]
                                 - cmat.entries[i, j2] * tilde[j2])
                    keys.append((i, j1, j2))
        cmp_sign: dict[tuple[int, int, int], int] = {}
        if diffs:
            coords = np.asarray(diffs) @ basis
            sub = oracle.view(basis)
            sub_labels, _ = zero_error_locate(sub, coords, rng, cfg,
                                              depth=depth + 1)
            for key, lab in zip(keys, sub_labels):
                cmp_sign[key] = int(lab)
        for i in rows:
            js = [j for j in batch if filled[i, j]]
            if not js:
                continue
            best = js[0]
            for j in js[1:]:
                key = (i, best, j) if best < j else (i, j, best)
                s = cmp_sign.get(key, 0)
                if best > j:
                    s = -s
                if s > 0:  # value at best exceeds value at j
                    best = j
            winners[i].append(best)
    # merge batch winners with direct comparisons, then final inequalities
    for i in rows:
        cand = winners[i]
        if not cand:
            continue
        best = cand[0]
        for j in cand[1:]:
            s = oracle.sign(cmat.entries[i, j] * tilde[j]
                            - cmat.entries[i, best] * tilde[best])
            if s < 0:
                best = j
        bad = final_check(i, int(best))
        if bad is not None:
            return bad
    return VerificationOutcome(True, None, oracle.queries_used - q0)


def direct_round_checks(oracle: _OracleBase,
                        transcripts: list[RoundTranscript]) -> tuple[bool, tuple | None]:
    """Per-small direct verification: |<x_ref,h>| >= (c(d)/|T_j(v)|) |<v,h>|,
    one comparison (<= 4 queries with the sign resolutions) per point."""
    for t in transcripts:
        if not t.smalls:
            continue
        c_j = relative_gap_constant(t.dim, t.lam)
        ref_norm = getattr(t, "ref_norm", 1.0)
        for small in t.smalls:
            scaled = (c_j * ref_norm / small.scale) * small.vector
            if compare_abs_margin(oracle, t.ref_vec, scaled) == LT:
                return False, (t.round_id, small.point_id)
    return True, None


def _verify_batch(oracle: _OracleBase, transcripts: list[RoundTranscript],
                  rng: np.random.Generator, cfg: EngineConfig,
                  depth: int) -> tuple[bool, tuple | None]:
    """Verify one batch of learner rounds.

    Uses the certificate route (build_constraints + matrix_verify) when
    every small point was certified by a later round of the batch, and the
    direct four-query checks otherwise.
    """
    with_smalls = [t for t in transcripts if t.smalls]
    if not with_smalls:
        return True, None
    try:
        cmat = build_constraints(transcripts, cfg)
    except UnlabeledSmallPoint:
        return direct_round_checks(oracle, transcripts)
    out = matrix_verify(oracle, cmat, None, depth, rng, cfg)
    return out.verified, out.failing_pair


def zero_error_locate(oracle: _OracleBase, X: np.ndarray,
                      rng: np.random.Generator,
                      cfg: EngineConfig = DEFAULT_CONFIG,
                      depth: int = 0) -> tuple[np.ndarray, RunRecord]:
    """Totally label X with zero mislabels.

    Runs weak_learn rounds in batches of d^2, commits query-exact labels
    (direct queries, zero-hyperplane rounds) immediately, and commits
    inference labels only after their supporting small-margin inequalities
    verify; a failed verification discards the batch and reruns it.  The
    restart cap surfaces pathological configurations as an explicit GiveUp
    instead of looping.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    record = RunRecord()
    labels = np.full(n, LABEL_BOTTOM, dtype=np.int8)
    if n == 0:
        return labels, record
    d = X.shape[1]
    norms = np.linalg.norm(X, axis=1)
    labels[norms == 0.0] = 0
    unit = np.zeros_like(X)
    nz = norms > 0.0
    unit[nz] = X[nz] / norms[nz][:, None]

    batch_size = max(1, d * d)
    expected_wls = math.ceil(math.log(max(n, 2)) / math.log(100.0)) + 1
    cap = cfg.restart_cap_factor * max(1, math.ceil(expected_wls / batch_size))
    q0, c0 = oracle.queries_used, oracle.oracle_calls_used

    attempts = 0
    fail_streak = 0
    batch_index = 0
    rid = 0
    last_fail: tuple | None = None
    while True:
        unl = np.flatnonzero(labels == LABEL_BOTTOM)
        if len(unl) == 0:
            break
        attempts += 1
        if fail_streak > cap:
            raise GiveUp(
                f"restart cap {cap} exhausted: {len(unl)} unlabeled, "
                f"last failing inequality {last_fail}"
            )
        pending = PartialLabeling.empty(n)
        transcripts: list[RoundTranscript] = []
        wl_count = 0
        qb = oracle.queries_used
        while wl_count < batch_size:
            todo = np.flatnonzero(
                (labels == LABEL_BOTTOM) & (pending.labels == LABEL_BOTTOM))
            if len(todo) == 0:
                break
            pair = WeightedPointSet(unit[todo], np.full(len(todo), 1.0 / len(todo)))
            lab, recs = weak_learn(oracle, pair, rng, cfg, point_ids=todo,
                                   round_base=rid)
            wl_count += 1
            rid += len(recs) + 1
            for rec in recs:
                if rec.transcript is not None:
                    transcripts.append(rec.transcript)
            # query-exact labels commit now; certified ones await verification
            mask = lab.labeled_mask()
            exact = mask & np.isnan(lab.rel_margin)
            labels[todo[exact]] = lab.labels[exact]
            certified = mask & ~np.isnan(lab.rel_margin)
            pending.labels[todo[certified]] = lab.labels[certified]
            pending.rel_margin[todo[certified]] = lab.rel_margin[certified]
            if not mask.any():
                break  # out of budget for this batch; verify and retry

        transcripts.sort(key=lambda t: t.round_id)
        ok, fail = _verify_batch(oracle, transcripts, rng, cfg, depth)
        if ok and cfg.forced_verification_failure_rate > 0.0:
            if rng.random() < cfg.forced_verification_failure_rate:
                ok, fail = False, ("forced", batch_index)
        record.per_round.append({
            "batch": batch_index,
            "attempt": attempts,
            "verified": bool(ok),
            "weak_learns": wl_count,
            "queries": oracle.queries_used - qb,
        })
        if ok:
            mask = pending.labeled_mask()
            labels[mask] = pending.labels[mask]
            batch_index += 1
            fail_streak = 0
        else:
            last_fail = fail
            fail_streak += 1
        record.rounds += wl_count

    record.queries_total = oracle.queries_used - q0
    record.oracle_calls = oracle.oracle_calls_used - c0
    return labels, record
