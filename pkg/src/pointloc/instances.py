"""Instance generation for the benchmark harness.

Five families: uniform-sphere, clustered-subspace (orthogonal clusters
with geometrically decaying mass, each a strict heavy-subspace violator,
which forces the dense-subspace recursion to peel clusters one per round),
margin-gap (plants the large/small margin split at a configurable ratio),
on-hyperplane-mix (plants exact-zero margins), and lifted-nonhomogeneous
(unit points plus a bias, consumed through the binary query simulation).

Determinism contract: a spec is reproduced bit-for-bit from its seed.
Every nonzero planted margin is at least MIN_MARGIN so the oracle's sign
floor can never misclassify.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .geometry import Hyperplane, WeightedPointSet
from .seeding import SeedStream

MIN_MARGIN = 1e-9

FAMILIES = (
    "uniform-sphere",
    "clustered-subspace",
    "margin-gap",
    "on-hyperplane-mix",
    "lifted-nonhomogeneous",
)


@dataclass(frozen=True)
class InstanceSpec:
    d: int
    n: int
    family: str = "uniform-sphere"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise InvalidSpec("need d >= 1 and n >= 1")
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")


def gen_instance(spec: InstanceSpec) -> tuple[WeightedPointSet, Hyperplane]:
    rng = SeedStream(spec.seed).child(f"instance-{spec.family}")
    builder = {
        "uniform-sphere": _uniform_sphere,
        "clustered-subspace": _clustered_subspace,
        "margin-gap": _margin_gap,
        "on-hyperplane-mix": _on_hyperplane_mix,
        "lifted-nonhomogeneous": _lifted_nonhomogeneous,
    }[spec.family]
    return builder(spec, rng)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _random_unit_rows(rng, n, d):
    pts = rng.standard_normal((n, d))
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def _hidden(rng, d) -> Hyperplane:
    scale = rng.uniform(0.5, 2.0)
    return Hyperplane(scale * _unit(rng.standard_normal(d)), 0.0)


def _resample_off_floor(rng, pts, normal, bias=0.0):
    """Redraw points whose planted margin falls inside (0, MIN_MARGIN)."""
    hn = np.linalg.norm(normal)
    for _ in range(64):
        margins = np.abs(pts @ normal + bias) / max(hn, 1e-300)
        bad = (margins > 0) & (margins < MIN_MARGIN)
        if not bad.any():
            return pts
        redraw = _random_unit_rows(rng, int(bad.sum()), pts.shape[1])
        pts[bad] = redraw
    raise InvalidSpec("could not place all points off the margin floor")


def _uniform_sphere(spec, rng):
    h = _hidden(rng, spec.d)
    pts = _random_unit_rows(rng, spec.n, spec.d)
    pts = _resample_off_floor(rng, pts, h.normal)
    return WeightedPointSet(pts, np.full(spec.n, 1.0 / spec.n)), h


def _planted_margin_points(rng, n, d, hdir, lo, hi):
    """Unit points with |margin| drawn uniformly from [lo, hi], random side."""
    m = rng.uniform(lo, hi, size=n) * rng.choice([-1.0, 1.0], size=n)
    orth = rng.standard_normal((n, d))
    orth -= np.outer(orth @ hdir, hdir)
    norms = np.linalg.norm(orth, axis=1)
    # regenerate the (measure-zero) rows parallel to h
    while np.any(norms == 0.0):
        bad = norms == 0.0
        orth[bad] = rng.standard_normal((int(bad.sum()), d))
        orth[bad] -= np.outer(orth[bad] @ hdir, hdir)
        norms = np.linalg.norm(orth, axis=1)
    orth /= norms[:, None]
    return m[:, None] * hdir + np.sqrt(1.0 - m * m)[:, None] * orth


def _margin_gap(spec, rng):
    """Plants the margin-split structure: a k/d fraction of the mass at
    |margin| in [t, t_hi], the rest inside a narrow band around t/ratio."""
    if spec.d < 2:
        raise InvalidSpec("margin-gap needs d >= 2")
    p = spec.params
    k_frac = float(p.get("k_frac", 0.25))
    t = float(p.get("t", 0.2))
    ratio = float(p.get("ratio", 1e4))
    t_hi = float(p.get("t_hi", min(1.0, 5.0 * t)))
    if not (0.0 < k_frac <= 1.0 and 0.0 < t < t_hi <= 1.0 and ratio > 1.0):
        raise InvalidSpec("margin-gap parameters out of range")
    if t / ratio < MIN_MARGIN:
        raise InvalidSpec("gap ratio pushes small margins under the floor")
    hdir = _unit(rng.standard_normal(spec.d))
    n_large = int(np.ceil(spec.n * k_frac))
    large = _planted_margin_points(rng, n_large, spec.d, hdir, t, t_hi)
    small = _planted_margin_points(rng, spec.n - n_large, spec.d, hdir,
                                   0.5 * t / ratio, t / ratio)
    pts = np.vstack([large, small]) if spec.n > n_large else large
    perm = rng.permutation(spec.n)
    scale = rng.uniform(0.5, 2.0)
    return (WeightedPointSet(pts[perm], np.full(spec.n, 1.0 / spec.n)),
            Hyperplane(scale * hdir, 0.0))


def _on_hyperplane_mix(spec, rng):
    """Floor(n * zero_frac) points exactly on the hyperplane, rest uniform."""
    if spec.d < 2:
        raise InvalidSpec("on-hyperplane-mix needs d >= 2")
    zero_frac = float(spec.params.get("zero_frac", 0.1))
    if not 0.0 <= zero_frac <= 1.0:
        raise InvalidSpec("zero_frac must lie in [0,1]")
    h = _hidden(rng, spec.d)
    hdir = _unit(h.normal)
    n_zero = int(np.floor(spec.n * zero_frac))
    on = _random_unit_rows(rng, n_zero, spec.d) if n_zero else np.empty((0, spec.d))
    if n_zero:
        on -= np.outer(on @ hdir, hdir)
        on /= np.linalg.norm(on, axis=1)[:, None]
    off = _random_unit_rows(rng, spec.n - n_zero, spec.d)
    off = _resample_off_floor(rng, off, h.normal)
    pts = np.vstack([on, off])
    perm = rng.permutation(spec.n)
    return WeightedPointSet(pts[perm], np.full(spec.n, 1.0 / spec.n)), h


def _clustered_subspace(spec, rng):
    """Orthogonal cluster subspaces with point counts proportional to decay^j.

    The skew lives in the counts (weights stay uniform), so it survives any
    learner-side reweighting: under the uniform distribution every
    prefix-removal leaves the heaviest remaining cluster a strict
    heavy-subspace violator, and the dense-subspace recursion labels one
    cluster per learner round (the d-linear benchmark workload).
    """
    p = spec.params
    cdim = int(p.get("cluster_dim", 2))
    violation = float(p.get("violation", 2.7))
    if spec.d < 2 * cdim:
        raise InvalidSpec("need at least two clusters: d >= 2*cluster_dim")
    n_clusters = int(p.get("n_clusters", spec.d // cdim))
    if n_clusters * cdim > spec.d or n_clusters < 1:
        raise InvalidSpec("clusters exceed the ambient dimension")
    if spec.n < n_clusters:
        raise InvalidSpec("need at least one point per cluster")
    # stagewise-calibrated shares: after peeling j clusters the heaviest
    # remaining one still decisively violates 1/4-isotropic feasibility in
    # the leftover d - j*cdim dimensions (its top eigenvalue share exceeds
    # (1+1/4)/d'), so the dense-subspace recursion peels exactly one
    # cluster per learner round
    shares = np.empty(n_clusters)
    rem = 1.0
    for j in range(n_clusters - 1):
        frac = min(0.8, violation * cdim / (spec.d - j * cdim))
        shares[j] = frac * rem
        rem *= 1.0 - frac
    shares[n_clusters - 1] = rem
    counts = np.maximum(1, np.floor(shares * spec.n).astype(int))
    while counts.sum() > spec.n:
        counts[np.argmax(counts)] -= 1
    counts[0] += spec.n - counts.sum()
    q, _ = np.linalg.qr(rng.standard_normal((spec.d, spec.d)))
    h = _hidden(rng, spec.d)
    pts = []
    for j in range(n_clusters):
        basis = q[:, j * cdim:(j + 1) * cdim]
        local = _random_unit_rows(rng, counts[j], cdim)
        cluster = local @ basis.T
        for _ in range(64):
            margins = np.abs(cluster @ h.normal)
            bad = (margins > 0) & (margins < MIN_MARGIN * np.linalg.norm(h.normal))
            if not bad.any():
                break
            local = _random_unit_rows(rng, int(bad.sum()), cdim)
            cluster[bad] = local @ basis.T
        pts.append(cluster)
    pts = np.vstack(pts)
    perm = rng.permutation(spec.n)
    return WeightedPointSet.normalized(pts[perm]), h


def _lifted_nonhomogeneous(spec, rng):
    """Unit points with a nonzero bias; every |<x,h>+b| >= MIN_MARGIN."""
    h_normal = _unit(rng.standard_normal(spec.d)) * rng.uniform(0.5, 2.0)
    bias = float(rng.uniform(0.1, 0.6) * rng.choice([-1.0, 1.0]))
    pts = _random_unit_rows(rng, spec.n, spec.d)
    for _ in range(64):
        vals = np.abs(pts @ h_normal + bias)
        bad = vals < MIN_MARGIN
        if not bad.any():
            break
        pts[bad] = _random_unit_rows(rng, int(bad.sum()), spec.d)
    return (WeightedPointSet(pts, np.full(spec.n, 1.0 / spec.n)),
            Hyperplane(h_normal, bias))
