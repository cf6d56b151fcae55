"""Construction of the high-dimensional small-margin subspace V.

Samples of size ~3d/k are accepted when the margin of their Gaussian
representative compares below (lambda^2/ell) times the reference margin;
the union of accepted samples feeds a uniform covariance whose
above-floor eigenspace is V.  Points of X with margin at least t then
project almost entirely onto the low-dimensional complement V-perp, which
is what the inference step exploits.
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
    gaussian_representative,
    _OracleBase,
)


@dataclass(frozen=True)
class SmallMarginCertificate:
    sample: np.ndarray          # point indices into the pair
    representative: np.ndarray  # Gaussian combination x_S
    accepted: bool


@dataclass(frozen=True)
class ReducedSubspace:
    v_basis: np.ndarray         # (d, dim V) small-margin subspace
    w_basis: np.ndarray         # (d, d - dim V) complement used for inference
    eigen_floor: float
    certificates: list[SmallMarginCertificate]

    @property
    def small_indices(self) -> np.ndarray:
        """Union (with multiplicity removed) of accepted sample members."""
        acc = [c.sample for c in self.certificates if c.accepted]
        if not acc:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(acc))


def small_margin_accept(oracle: _OracleBase, pair: WeightedPointSet, sample,
                        x_ref, ell: float, lam: float,
                        rng: np.random.Generator) -> SmallMarginCertificate:
    """Accept the sample iff |m(x_S,h)| <= (lambda^2/ell) |m(x_ref,h)|,
    checked with one comparison (2 queries) against the scaled reference."""
    sample = np.asarray(sample, dtype=np.int64)
    rep = gaussian_representative(pair.points[sample], rng)
    oracle.note_oracle_call()
    scaled = (lam * lam / ell) * np.asarray(x_ref, dtype=np.float64)
    accepted = compare_abs_margin(oracle, rep, scaled) != GT
    return SmallMarginCertificate(sample, rep, accepted)


def top_eigenspace(M: np.ndarray, floor: float):
    """Orthonormal basis of the span of eigenvectors with eigenvalue >= floor,
    plus the complementary basis (M symmetric within 1e-10)."""
    M = np.asarray(M, dtype=np.float64)
    if np.max(np.abs(M - M.T)) > 1e-10:
        raise PointlocError("matrix is not symmetric within 1e-10")
    evals, evecs = np.linalg.eigh(M)
    keep = evals >= floor
    return evecs[:, keep], evecs[:, ~keep]


def dim_reduce(oracle: _OracleBase, pair: WeightedPointSet, x_ref,
               mcfg: MarginOracleConfig, ell: float, k: float, p: float,
               rng: np.random.Generator, cfg: EngineConfig) -> ReducedSubspace | None:
    """Find V via verified-small samples; None reports failure (the caller
    aborts its round).

    Up to ceil(log2(1/p)) outer rounds; each gathers ceil(c1 * k * ln d)
    samples of size ceil(3d/k) and succeeds when the unified covariance has
    at least d - 10k eigenvalues above 1/(4d).
    """
    d = pair.d
    if not k < d / 10:
        raise PointlocError("dim_reduce requires k < d/10")
    sample_size = math.ceil(3.0 * d / k)
    per_round = max(1, math.ceil(cfg.c1_dimreduce * k * math.log(max(d, 2))))
    outer = max(1, math.ceil(math.log2(1.0 / p)))
    floor = cfg.eigen_floor_factor / d
    need = d - 10.0 * k

    for _ in range(outer):
        certs = []
        members: list[np.ndarray] = []
        for _ in range(per_round):
            sample = rng.choice(pair.n, size=sample_size, p=pair.weights)
            cert = small_margin_accept(oracle, pair, sample, x_ref, ell, mcfg.lam, rng)
            certs.append(cert)
            if cert.accepted:
                members.append(cert.sample)
        if not members:
            continue
        union = np.concatenate(members)  # multiset union
        pts = pair.points[union]
        cov = pts.T @ pts / len(pts)
        evals, evecs = np.linalg.eigh(cov)
        keep = evals >= floor
        if int(keep.sum()) + 1e-9 >= need:
            return ReducedSubspace(
                v_basis=evecs[:, keep],
                w_basis=evecs[:, ~keep],
                eigen_floor=floor,
                certificates=certs,
            )
    return None
