"""Experiment orchestration: trial execution, truth checking against the
planted hyperplane, query accounting cross-checks, aggregation, and
report serialization (JSON + plot-ready CSV).

Reports contain no timestamps and serialize with sorted keys, so identical
configs produce byte-identical bodies.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import DEFAULT_CONFIG, EngineConfig
from .errors import GiveUp, Infeasible, IoFailure, NoVote, PointlocError
from .geometry import (
    Hyperplane,
    QueryOracle,
    WeightedPointSet,
    lift_instance,
    oracle_truth_sign,
)
from .instances import FAMILIES, InstanceSpec, gen_instance
from .learners import active_learn_halfspace, boost
from .seeding import SeedStream
from .verification import zero_error_locate

CSV_COLUMNS = [
    "mode", "family", "d", "n", "seed", "delta", "epsilon",
    "queries_total", "oracle_calls", "rounds", "errors_vs_truth",
    "coverage", "labeled", "flags", "error",
]


@dataclass
class ExperimentReport:
    config: dict
    trials: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def failed(self) -> bool:
        return bool(self.aggregates.get("invariant_violations", 0))


def truth_labels(points: np.ndarray, hidden: Hyperplane, binary: bool,
                 sign_floor: float) -> np.ndarray:
    return np.array(
        [oracle_truth_sign(x, hidden, binary=binary, sign_floor=sign_floor)
         for x in points], dtype=np.int8)


def _engine_config(config: dict) -> EngineConfig:
    cfg = DEFAULT_CONFIG
    if config.get("theory_constants"):
        cfg = cfg.with_theory_constants()
    forced = config.get("forced_verification_failure_rate")
    if forced:
        from dataclasses import replace
        cfg = replace(cfg, forced_verification_failure_rate=float(forced))
    return cfg


def run_trial(mode: str, spec: InstanceSpec, trial_seed: int,
              cfg: EngineConfig, delta: float, epsilon: float) -> dict:
    """One trial: build instance + oracle, run the requested learner, and
    check every emitted label against the planted hyperplane."""
    pair, hidden = gen_instance(spec)
    binary = spec.family == "lifted-nonhomogeneous"
    oracle = QueryOracle(hidden, mode="binary" if binary else "ternary",
                         sign_floor=cfg.sign_floor)
    rng = SeedStream(trial_seed).child(f"trial-{mode}")
    work = lift_instance(pair).points if binary else pair.points
    truth = truth_labels(pair.points, hidden, binary, cfg.sign_floor)

    row = {
        "mode": mode, "family": spec.family, "d": spec.d, "n": spec.n,
        "seed": spec.seed, "delta": delta, "epsilon": epsilon,
        "queries_total": 0, "oracle_calls": 0, "rounds": 0,
        "errors_vs_truth": 0, "coverage": 0.0, "labeled": 0,
        "flags": "", "error": "",
    }
    try:
        if mode == "bounded":
            labels, record, _ = boost(oracle, work, delta, rng, cfg)
            row["labeled"] = int(len(labels))
            row["coverage"] = 1.0
            row["errors_vs_truth"] = int(np.sum(labels != truth))
            row["rounds"] = record.rounds
            row["flags"] = ";".join(record.flags)
            row["queries_total"] = record.queries_total
            row["oracle_calls"] = record.oracle_calls
            if record.queries_total != oracle.queries_used:
                row["flags"] += ";query-accounting-mismatch"
        elif mode == "zero":
            labels, record = zero_error_locate(oracle, work, rng, cfg)
            row["labeled"] = int(len(labels))
            row["coverage"] = 1.0
            row["errors_vs_truth"] = int(np.sum(labels != truth))
            row["rounds"] = record.rounds
            row["queries_total"] = record.queries_total
            row["oracle_calls"] = record.oracle_calls
            if record.queries_total != oracle.queries_used:
                row["flags"] += ";query-accounting-mismatch"
        elif mode == "active":
            source = _family_sampler(spec)
            hyp, record = active_learn_halfspace(source, oracle, epsilon,
                                                 delta, rng, cfg)
            row["queries_total"] = record.queries_total
            row["oracle_calls"] = record.oracle_calls
            row["rounds"] = record.rounds
            holdout = source(10_000, SeedStream(trial_seed).child("holdout"))
            pred = truth_labels(holdout, hyp, binary, cfg.sign_floor)
            actual = truth_labels(holdout, hidden, binary, cfg.sign_floor)
            row["coverage"] = 1.0
            row["errors_vs_truth"] = int(np.sum(pred != actual))
            row["labeled"] = len(holdout)
        else:
            raise PointlocError(f"unknown mode {mode!r}")
    except (NoVote, GiveUp, Infeasible) as exc:
        row["error"] = type(exc).__name__
        row["queries_total"] = oracle.queries_used
        row["oracle_calls"] = oracle.oracle_calls_used
    return row


def _family_sampler(spec: InstanceSpec):
    """i.i.d. sample source matching the spec family's ambient distribution."""
    def draw(n, rng):
        pts = rng.standard_normal((n, spec.d))
        return pts / np.linalg.norm(pts, axis=1)[:, None]
    return draw


def run_experiment(config: dict) -> ExperimentReport:
    """Execute the trial grid; exit status is carried by report.failed."""
    mode = config.get("mode", "bounded")
    families = config.get("families", ["uniform-sphere"])
    d_list = config.get("d_list", [4])
    n_list = config.get("n_list", [100])
    trials = int(config.get("trials", 1))
    seed = int(config.get("seed", 0))
    delta = float(config.get("delta", 0.1))
    epsilon = float(config.get("epsilon", 0.05))
    family_params = config.get("family_params", {})
    cfg = _engine_config(config)

    for fam in families:
        if fam not in FAMILIES:
            raise PointlocError(f"unknown family {fam!r}")

    report = ExperimentReport(config=dict(config))
    violations = 0
    t_index = 0
    for fam in families:
        for d in d_list:
            for n in n_list:
                for t in range(trials):
                    spec = InstanceSpec(d=int(d), n=int(n), family=fam,
                                        params=dict(family_params),
                                        seed=seed + t_index)
                    row = run_trial(mode, spec, seed + t_index, cfg,
                                    delta, epsilon)
                    if mode == "zero" and (row["errors_vs_truth"] or row["error"]):
                        violations += 1
                    if "query-accounting-mismatch" in row["flags"]:
                        violations += 1
                    report.trials.append(row)
                    t_index += 1
    report.aggregates = _aggregate(report.trials)
    report.aggregates["invariant_violations"] = violations
    return report


def _aggregate(rows: list[dict]) -> dict:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["mode"], r["family"], r["d"], r["n"]), []).append(r)
    out = {}
    for key, grp in sorted(groups.items()):
        qs = np.array([g["queries_total"] for g in grp], dtype=float)
        errs = np.array([g["errors_vs_truth"] for g in grp])
        out["|".join(map(str, key))] = {
            "trials": len(grp),
            "median_queries": float(np.median(qs)),
            "p95_queries": float(np.percentile(qs, 95)),
            "total_errors": int(errs.sum()),
            "error_run_fraction": float(np.mean(errs > 0)),
            "mean_coverage": float(np.mean([g["coverage"] for g in grp])),
            "failures": int(sum(1 for g in grp if g["error"])),
        }
    return out


def report_json(report: ExperimentReport) -> str:
    return json.dumps(asdict(report), sort_keys=True, indent=2) + "\n"


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report.trials:
        writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
    return buf.getvalue()


def emit_report(report: ExperimentReport, out_prefix: str) -> list[str]:
    """Write <prefix>.json and <prefix>.csv; returns the paths."""
    paths = []
    try:
        jpath = f"{out_prefix}.json"
        with open(jpath, "w", encoding="utf-8") as fh:
            fh.write(report_json(report))
        paths.append(jpath)
        cpath = f"{out_prefix}.csv"
        with open(cpath, "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))
        paths.append(cpath)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return paths


def load_report(path: str) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentReport(config=raw["config"], trials=raw["trials"],
                            aggregates=raw["aggregates"], version=raw["version"])


def instance_to_json(pair: WeightedPointSet, hidden: Hyperplane,
                     spec: InstanceSpec) -> str:
    payload = {
        "d": spec.d,
        "n": spec.n,
        "family": spec.family,
        "seed": spec.seed,
        "points": pair.points.tolist(),
        "weights": pair.weights.tolist(),
        "hyperplane": {"normal": hidden.normal.tolist(), "bias": hidden.bias},
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def instance_from_json(text: str):
    raw = json.loads(text)
    pair = WeightedPointSet(np.array(raw["points"]), np.array(raw["weights"]))
    hidden = Hyperplane(np.array(raw["hyperplane"]["normal"]),
                        raw["hyperplane"]["bias"])
    return pair, hidden, raw
