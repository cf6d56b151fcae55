"""Isotropic position machinery.

eps-isotropy checking, the fixed-point whitening iteration computing an
approximate isotropic (radial) transform, heavy-subspace detection and
witnesses, the dense-isotropic-subspace recursion, and the brute-force
exact-feasibility checker.

The underlying dichotomy: a pair (X, mu) admits an eps-isotropic transform
for every eps > 0 iff no k-dimensional subspace carries more than k/d of
the mass.  The whitening iteration T <- Cov(X_T)^{-1/2} T converges in the
feasible case; in the infeasible case the covariance spectrum degenerates
and the heavy subspace is read off the top eigenvectors, snapped to the
nearest span of data points, and verified directly against the mass
condition (it is only reported when the verification passes, so failure
reports are never spurious).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalBreakdown, PointlocError, SizeLimitExceeded
from .geometry import WeightedPointSet

EIG_ZERO = 1e-14
MEMBER_TOL = 1e-9
EQ_TOL = 1e-9
HEAVY_SLACK = 0.05
COLLAPSE_TOL = 1e-9

BRUTE_MAX_N = 16
BRUTE_MAX_D = 8


def covariance(pair: WeightedPointSet) -> np.ndarray:
    """Second-moment matrix sum_i mu_i x_i x_i^T (trace 1 for unit points)."""
    return (pair.points * pair.weights[:, None]).T @ pair.points


def is_eps_isotropic(pair: WeightedPointSet, eps: float) -> bool:
    """True iff all covariance eigenvalues lie in [(1-eps)/d, (1+eps)/d].

    Equivalent to the directional definition by the variational
    characterization of Rayleigh quotients.  A 1e-12 absolute guard absorbs
    eigensolver rounding.
    """
    if eps < 0:
        raise PointlocError("eps must be >= 0")
    d = pair.d
    evals = np.linalg.eigvalsh(covariance(pair))
    return bool(
        evals[0] >= (1.0 - eps) / d - 1e-12 and evals[-1] <= (1.0 + eps) / d + 1e-12
    )


@dataclass(frozen=True)
class IsotropicTransform:
    """Invertible map acting inside the host subspace spanned by `basis`."""

    basis: np.ndarray        # (d, k) orthonormal columns
    map: np.ndarray          # (k, k)
    residual_eps: float

    def transform_points(self, points: np.ndarray):
        """Map points (assumed inside the host subspace) to unit images.

        Returns (images, pre-normalization norms |T c_x|); the norms are the
        margin-scale corrections the verification layer consumes.
        """
        coords = points @ self.basis
        image = coords @ self.map.T
        norms = np.linalg.norm(image, axis=1)
        return image / norms[:, None], norms

    def lift_matrix(self) -> np.ndarray:
        """M with <q, h_transformed> = <M q, h> for any view query q."""
        return self.basis @ np.linalg.inv(self.map)


@dataclass(frozen=True)
class SubspaceWitness:
    basis: np.ndarray            # (d, k) orthonormal columns
    mass: float
    member_indices: np.ndarray


@dataclass(frozen=True)
class HeavySubspaceDetected:
    """Failure value of the transform search, carrying a verified witness."""

    witness: SubspaceWitness


def _orth(cols: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the column span (absolute singular-value cut)."""
    if cols.size == 0:
        return cols.reshape(cols.shape[0], 0)
    d, m = cols.shape
    if m > 2 * d:
        # wide case: eigenvectors of the (small) Gram matrix
        evals, evecs = np.linalg.eigh(cols @ cols.T)
        keep = evals > tol * tol
        return evecs[:, keep][:, ::-1]
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    rank = int(np.sum(s > tol))
    return u[:, :rank]


def _membership(points: np.ndarray, basis: np.ndarray, tol: float) -> np.ndarray:
    # explicit residuals: 1 - |proj|^2 cancels catastrophically near zero
    resid = points - (points @ basis) @ basis.T
    return np.linalg.norm(resid, axis=1) <= tol


def _witness_from_members(pair: WeightedPointSet, rough_mask: np.ndarray,
                          strict: bool) -> SubspaceWitness | None:
    """Span-of-members witness: re-derive the subspace from the snapped
    points so members sit exactly inside it, then verify the mass."""
    if not rough_mask.any():
        return None
    basis = _orth(pair.points[rough_mask].T)
    k = basis.shape[1]
    if k == 0 or k >= pair.d:
        return None
    mask = _membership(pair.points, basis, MEMBER_TOL)
    mass = float(pair.weights[mask].sum())
    share = k / pair.d
    ok = mass > share + 1e-12 if strict else mass >= share - EQ_TOL
    if not ok:
        return None
    return SubspaceWitness(basis, mass, np.flatnonzero(mask))


def _span_deficiency_witness(pair: WeightedPointSet) -> SubspaceWitness | None:
    basis = _orth(pair.points.T)
    if basis.shape[1] >= pair.d:
        return None
    return SubspaceWitness(basis, 1.0, np.arange(pair.n))


def _snap_rank_k(points: np.ndarray, cand: np.ndarray, k: int,
                 snap_tol: float, rough_cap: float = 0.2) -> np.ndarray:
    """Greedy rank-k snap: walk points by distance to the candidate subspace,
    keeping each one that stays within a rank-k span.

    Eigenvector candidates are tilted away from the true point-spanned
    subspace by roughly (residual margin / spectral gap), so a fixed
    distance threshold cannot separate members; anchoring the span on the
    nearest points does.  The caller verifies the resulting mass exactly,
    so over-eager snaps are harmless.
    """
    n, d = points.shape
    proj = points @ cand
    dist2 = np.maximum(0.0, 1.0 - np.einsum("ij,ij->i", proj, proj))
    dist = np.sqrt(dist2)
    order = np.argsort(dist, kind="stable")
    basis = np.zeros((k, d))
    rank = 0
    mask = np.zeros(n, dtype=bool)
    consumed = 0
    for i in order:
        if dist[i] > rough_cap or rank == k:
            break
        consumed += 1
        r = points[i].copy()
        for _ in range(2):
            r -= (basis[:rank] @ r) @ basis[:rank]
        rn = np.linalg.norm(r)
        if rn <= snap_tol:
            mask[i] = True
        elif rank < k:
            basis[rank] = r / rn
            rank += 1
            mask[i] = True
    # once the span is full the rest is a batched membership test
    rest = order[consumed:]
    rest = rest[dist[rest] <= rough_cap]
    if len(rest):
        resid = points[rest] - (points[rest] @ basis[:rank].T) @ basis[:rank]
        mask[rest[np.linalg.norm(resid, axis=1) <= snap_tol]] = True
    return mask


def _detect_heavy(pair: WeightedPointSet, transform: np.ndarray,
                  evals: np.ndarray, evecs: np.ndarray, snap_tol: float,
                  slack: float = HEAVY_SLACK, strict: bool = True) -> SubspaceWitness | None:
    """Candidate heavy subspaces from the transformed covariance spectrum.

    Top-k eigenvector prefixes whose cumulative eigenvalue mass exceeds the
    dimension-proportional share (by `slack`) are pulled back through the
    transform, snapped to the nearest rank-k point set, and verified
    directly against the mass condition.
    """
    d = pair.d
    order = np.argsort(evals)[::-1]
    ev_desc = evals[order]
    cum = np.cumsum(ev_desc)
    for k in range(1, d):
        if cum[k - 1] <= k / d + slack:
            continue
        w_t = evecs[:, order[:k]]
        try:
            pre = np.linalg.solve(transform, w_t)
        except np.linalg.LinAlgError:
            continue
        cand = _orth(pre)
        if cand.shape[1] == 0:
            continue
        rough = _snap_rank_k(pair.points, cand, k, snap_tol)
        wit = _witness_from_members(pair, rough, strict)
        if wit is not None:
            return wit
    return None


def forster_transform(pair: WeightedPointSet, eps: float, max_iter: int = 10_000,
                      *, snap_tol: float = 1e-6, detect_every: int = 50):
    """Whitening fixed point T <- Cov(X_T)^{-1/2} T with per-step point
    renormalization, rescaled so the largest singular value of T is 1.

    Returns an IsotropicTransform with residual max |d*lambda_i - 1| <= eps,
    or HeavySubspaceDetected carrying a directly verified witness.  A
    covariance eigenvalue below 1e-14 counts as numerical breakdown and is
    treated as detection.
    """
    if not 0.0 < eps < 1.0:
        raise PointlocError("eps must lie in (0,1)")
    d = pair.d
    wit = _span_deficiency_witness(pair)
    if wit is not None:
        return HeavySubspaceDetected(wit)

    X, w = pair.points, pair.weights
    T = np.eye(d)
    Y = X
    evals = evecs = None
    for it in range(max_iter):
        C = (Y * w[:, None]).T @ Y
        evals, evecs = np.linalg.eigh(C)
        if evals[0] >= EIG_ZERO:
            resid = float(np.max(np.abs(d * evals - 1.0)))
            if resid <= eps:
                smax = np.linalg.svd(T, compute_uv=False)[0]
                return IsotropicTransform(np.eye(d), T / smax, resid)
        if evals[0] < EIG_ZERO or it % detect_every == 0:
            wit = _detect_heavy(pair, T, evals, evecs, snap_tol)
            if wit is not None:
                return HeavySubspaceDetected(wit)
            if evals[0] < EIG_ZERO:
                wit = _last_resort_witness(pair, T, evals, evecs, snap_tol)
                if wit is not None:
                    return HeavySubspaceDetected(wit)
                raise NumericalBreakdown(
                    "covariance spectrum collapsed with no verifiable witness"
                )
        inv_sqrt = (evecs * evals**-0.5) @ evecs.T
        T = inv_sqrt @ T
        # Frobenius normalization keeps T bounded cheaply between steps; the
        # exact largest-singular-value rescale happens once on success
        T /= np.linalg.norm(T) / math.sqrt(d)
        Y = X @ T.T
        norms = np.linalg.norm(Y, axis=1)
        if norms.min() < COLLAPSE_TOL:
            # points crushed to the rounding floor: the infeasible directions
            # are being squeezed out; their span is the heavy candidate
            crushed = norms < max(COLLAPSE_TOL, 1e-3 * norms.max())
            wit = _witness_from_members(pair, crushed, strict=True)
            if wit is None:
                wit = _witness_from_members(pair, crushed, strict=False)
            if wit is not None:
                return HeavySubspaceDetected(wit)
            raise NumericalBreakdown(
                "transform collapsed points with no verifiable witness"
            )
        Y = Y / norms[:, None]

    wit = _last_resort_witness(pair, T, evals, evecs, snap_tol)
    if wit is None:
        raise NumericalBreakdown(
            f"no convergence after {max_iter} iterations and no witness found"
        )
    return HeavySubspaceDetected(wit)


def _last_resort_witness(pair, T, evals, evecs, snap_tol):
    wit = _detect_heavy(pair, T, evals, evecs, snap_tol, slack=0.0, strict=True)
    if wit is not None:
        return wit
    if pair.n <= BRUTE_MAX_N and pair.d <= BRUTE_MAX_D:
        wit = heavy_subspace_witness(pair, strict=True)
        if wit is not None:
            return wit
    # boundary-feasible stall: a non-strict witness still lets the caller
    # recurse (the dense-subspace contract only needs mass >= k/d)
    return _detect_heavy(pair, T, evals, evecs, snap_tol, slack=0.0, strict=False)


def heavy_subspace_witness(pair: WeightedPointSet, strict: bool = True) -> SubspaceWitness | None:
    """Brute-force witness search over spans of point subsets (desk scale).

    Correct because any extremal subspace may be taken as a span of points
    of X.  Raises SizeLimitExceeded above n=16 or d=8.
    """
    if pair.n > BRUTE_MAX_N or pair.d > BRUTE_MAX_D:
        raise SizeLimitExceeded(f"brute force capped at n<=16, d<=8; got {pair.n}, {pair.d}")
    if pair.d == 1:
        return None
    mask = np.zeros(pair.n, np.uint8)
    mode = 0 if strict else 1
    found, k = kernels.scan_subspaces(pair.points, pair.weights, mode,
                                      MEMBER_TOL, EQ_TOL, mask)
    if not found:
        return None
    members = mask.astype(bool)
    basis = _orth(pair.points[members].T)
    return SubspaceWitness(basis, float(pair.weights[members].sum()),
                           np.flatnonzero(members))


def exact_isotropic_feasible(pair: WeightedPointSet) -> bool:
    """Exact-position feasibility: every k-dim span of points either holds
    mass < k/d, or exactly k/d with the remaining mass inside some
    (d-k)-dimensional subspace.  Brute force, desk scale."""
    if pair.n > BRUTE_MAX_N or pair.d > BRUTE_MAX_D:
        raise SizeLimitExceeded(f"brute force capped at n<=16, d<=8; got {pair.n}, {pair.d}")
    if pair.d == 1:
        return True
    mask = np.zeros(pair.n, np.uint8)
    found, _ = kernels.scan_subspaces(pair.points, pair.weights, 2,
                                      MEMBER_TOL, EQ_TOL, mask)
    return not bool(found)


def dense_isotropic_subspace(pair: WeightedPointSet, eps: float,
                             *, max_iter: int = 10_000, snap_tol: float = 1e-6,
                             detect_every: int = 50):
    """Dense subspace V with mu(X cap V) >= dim(V)/d plus a transform putting
    the restricted pair in eps-isotropic position.

    Attempts the whitening transform and recurses into the detected heavy
    subspace on failure; the dimension strictly decreases and d = 1 always
    succeeds, so this terminates.  Both postconditions are re-checked on
    every call.
    """
    d0 = pair.d
    basis = np.eye(d0)
    cur = pair
    indices = np.arange(pair.n)
    while True:
        res = forster_transform(cur, eps, max_iter, snap_tol=snap_tol,
                                detect_every=detect_every)
        if isinstance(res, IsotropicTransform):
            transform = IsotropicTransform(basis, res.map, res.residual_eps)
            mass = float(pair.weights[indices].sum())
            witness = SubspaceWitness(basis, mass, indices)
            k = basis.shape[1]
            if mass < k / d0 - 1e-9:
                raise PointlocError(
                    f"dense-subspace mass postcondition violated: {mass} < {k}/{d0}"
                )
            images, _ = transform.transform_points(pair.points[indices])
            check = WeightedPointSet.normalized(images, pair.weights[indices])
            if not is_eps_isotropic(check, eps):
                raise PointlocError("dense-subspace isotropy postcondition violated")
            return witness, transform
        wit = res.witness
        indices = indices[wit.member_indices]
        basis = basis @ wit.basis
        local = cur.points[wit.member_indices] @ wit.basis
        cur = WeightedPointSet.normalized(local, cur.weights[wit.member_indices])
