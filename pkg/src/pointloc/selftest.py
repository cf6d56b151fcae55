"""Fast invariant battery behind `pointloc selftest`.

A trimmed version of the test suite's hard checks: margin-oracle
simulation rate, comparison identity, isotropy characterization on small
instances, matrix verification against brute force, and one zero-error
run per family.
"""

from __future__ import annotations

import numpy as np

from .config import DEFAULT_CONFIG
from .geometry import (
    GT,
    LT,
    Hyperplane,
    QueryOracle,
    WeightedPointSet,
    compare_abs_margin,
    lift_instance,
    margin_norm,
)
from .harness import truth_labels
from .instances import FAMILIES, InstanceSpec, gen_instance
from .isotropy import forster_transform, heavy_subspace_witness, IsotropicTransform
from .seeding import SeedStream
from .verification import ConstraintMatrix, matrix_verify, zero_error_locate


def _check(name: str, ok: bool, verbose: bool) -> bool:
    if verbose:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return ok


def run_selftest(seed: int = 0, verbose: bool = False) -> bool:
    stream = SeedStream(seed)
    ok = True

    # margin-oracle simulation failure rate at lambda = 10
    rng = stream.child("oracle-sim")
    h = Hyperplane(np.array([1.0, 0.0, 0.0]))
    S = rng.standard_normal((5, 3))
    S /= np.linalg.norm(S, axis=1)[:, None]
    sigma = margin_norm(S, h)
    draws = rng.standard_normal((20_000, 5)) @ (S @ h.normal)
    m = np.abs(draws)
    fail_rate = np.mean((m < sigma / 10) | (m > sigma * 10))
    ok &= _check("gaussian margin-oracle failure rate <= 5/lambda", fail_rate <= 0.5, verbose)

    # comparison identity on random pairs
    rng = stream.child("compare")
    good = True
    hid = Hyperplane(rng.standard_normal(6))
    oracle = QueryOracle(hid)
    for _ in range(100):
        x, y = rng.standard_normal(6), rng.standard_normal(6)
        c = compare_abs_margin(oracle, x, y)
        direct = abs(x @ hid.normal) - abs(y @ hid.normal)
        good &= (c == GT) == (direct > 1e-12) and (c == LT) == (direct < -1e-12)
    ok &= _check("compare_abs_margin matches direct comparison", good, verbose)

    # isotropy characterization on a batch of small instances
    rng = stream.child("isotropy")
    good = True
    for _ in range(20):
        n, d = 10, 4
        pts = rng.standard_normal((n, d))
        if rng.random() < 0.5:
            pts[: n // 2, d // 2:] = 0.0  # plant a heavy subspace
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        pair = WeightedPointSet(pts, np.full(n, 1.0 / n))
        res = forster_transform(pair, 0.25)
        wit = heavy_subspace_witness(pair, strict=True)
        good &= isinstance(res, IsotropicTransform) == (wit is None)
    ok &= _check("forster success iff no strict heavy subspace", good, verbose)

    # matrix verification == brute force on small random matrices
    rng = stream.child("verify")
    good = True
    for _ in range(25):
        m, d = 6, 4
        hid = Hyperplane(rng.standard_normal(d))
        pts = rng.standard_normal((m, d))
        entries = np.full((m, m), np.nan)
        for i in range(m):
            for j in range(m):
                if i != j and rng.random() < 0.6:
                    entries[i, j] = rng.uniform(0.1, 3.0)
        vals = pts @ hid.normal
        signs = np.sign(vals).astype(np.int64)
        expected = True
        for i in range(m):
            for j in range(m):
                if not np.isnan(entries[i, j]):
                    expected &= abs(vals[i]) <= entries[i, j] * abs(vals[j]) + 1e-12
        oracle = QueryOracle(hid)
        out = matrix_verify(oracle, ConstraintMatrix(pts, entries, signs))
        good &= out.verified == expected
    ok &= _check("matrix_verify matches brute force (m=6)", good, verbose)

    # one zero-error run per family
    for fam in FAMILIES:
        spec = InstanceSpec(d=4, n=40, family=fam, seed=seed + 77)
        pair, hidden = gen_instance(spec)
        binary = fam == "lifted-nonhomogeneous"
        oracle = QueryOracle(hidden, mode="binary" if binary else "ternary")
        work = lift_instance(pair).points if binary else pair.points
        labels, _ = zero_error_locate(oracle, work, stream.child(f"ze-{fam}"))
        truth = truth_labels(pair.points, hidden, binary, DEFAULT_CONFIG.sign_floor)
        ok &= _check(f"zero-error soundness on {fam}", bool(np.all(labels == truth)), verbose)

    return bool(ok)
