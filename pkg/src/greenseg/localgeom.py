"""Local surface analysis: radius neighborhoods, PCA normals, curvature and
normal consistency against the fitted ground plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import LabeledCloud, Plane, PointCloud, SegParams, SemanticLabel

_TIE_TOL = 1e-12
# slack handed to the tree; candidates are then re-checked exactly
_RADIUS_SLACK = 1e-9
# relative eigenvalue gap below which the closed-form eigenvector is not trusted
_DEGENERATE_GAP = 1e-6


@dataclass(frozen=True)
class LocalSurface:
    normal: np.ndarray
    curvature: float
    neighbor_count: int
    rho: float


class SpatialIndex:
    """Closed-ball radius queries over a fixed set of points.

    A k-d tree proposes candidates with a slightly inflated radius; every
    candidate is then re-tested with ``|p - q|^2 <= r^2`` so results are
    exactly the closed ball.
    """

    def __init__(self, points):
        if isinstance(points, PointCloud):
            points = points.points
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        # sliding-midpoint splits query noticeably faster on surface-like clouds
        self._tree = cKDTree(self.points, balanced_tree=False) if len(self.points) else None
        self._pair_cache: dict[float, tuple] = {}

    def __len__(self) -> int:
        return len(self.points)

    def _loose(self, r: float) -> float:
        return r * (1 + _RADIUS_SLACK) + 1e-15

    def query(self, q, r: float) -> np.ndarray:
        """Sorted indices of points with |p - q| <= r."""
        q = np.asarray(q, dtype=np.float64).reshape(3)
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        idx = np.asarray(self._tree.query_ball_point(q, self._loose(r)), dtype=np.intp)
        d2 = np.sum((self.points[idx] - q) ** 2, axis=1)
        return np.sort(idx[d2 <= r * r])

    def query_many(self, qs, r: float) -> list[np.ndarray]:
        qs = np.asarray(qs, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            return [np.empty(0, dtype=np.intp) for _ in qs]
        nested = self._tree.query_ball_point(qs, self._loose(r))
        out = []
        for q, idx in zip(qs, nested):
            idx = np.asarray(idx, dtype=np.intp)
            d2 = np.sum((self.points[idx] - q) ** 2, axis=1)
            out.append(np.sort(idx[d2 <= r * r]))
        return out

    def pairs(self, r: float, with_offsets: bool = False):
        """All index pairs (i < j) with |p_i - p_j| <= r.

        With ``with_offsets=True`` also returns ``p_j - p_i`` per pair.
        Results are cached per radius since the indexed points never change.
        """
        cached = self._pair_cache.get(r)
        if cached is None:
            cached = self._pair_cache[r] = self._pairs(r)
        return cached if with_offsets else cached[:2]

    def _pairs(self, r: float):
        empty_i = np.empty(0, dtype=np.intp)
        pr = (self._tree.query_pairs(self._loose(r), output_type="ndarray")
              if self._tree is not None else np.empty((0, 2), dtype=np.intp))
        if len(pr) == 0:
            return empty_i, empty_i, np.empty((0, 3))
        i, j = pr[:, 0].astype(np.intp), pr[:, 1].astype(np.intp)
        d = self.points[j] - self.points[i]
        keep = np.einsum("ij,ij->i", d, d) <= r * r
        return i[keep], j[keep], d[keep]


def build_index(cloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def local_covariance(neighbors) -> np.ndarray:
    """Biased (1/N) covariance about the neighborhood centroid."""
    pts = np.asarray(neighbors, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("neighborhood must contain at least one point")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    return 0.5 * (cov + cov.T)


def _canonical_sign(normals: np.ndarray) -> np.ndarray:
    # orient toward +z; if the z component vanishes, toward +x, then +y
    x, y, z = normals[..., 0], normals[..., 1], normals[..., 2]
    ref = np.where(np.abs(z) > _TIE_TOL, z, np.where(np.abs(x) > _TIE_TOL, x, y))
    return np.where((ref < 0)[..., None], -normals, normals)


def _min_eigenpairs(covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest eigenvalue and its eigenvector of each symmetric 3x3 matrix.

    Closed form: the trigonometric solution locates lambda_min, the null
    direction of C - lambda_min I comes from the best-conditioned cross
    product of its rows, and lambda_min is then recomputed as v'Cv.
    Near-degenerate spectra (two smallest eigenvalues close, or all equal)
    go through LAPACK instead.
    """
    a, b, c = covs[:, 0, 0], covs[:, 1, 1], covs[:, 2, 2]
    d, e, f = covs[:, 0, 1], covs[:, 1, 2], covs[:, 0, 2]
    q = (a + b + c) / 3.0
    p = np.sqrt(((a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * (d * d + e * e + f * f)) / 6.0)
    shifted = covs - q[:, None, None] * np.eye(3)
    r = np.linalg.det(shifted / np.where(p > 0, p, 1.0)[:, None, None]) / 2.0
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    lam = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)

    m = covs - lam[:, None, None] * np.eye(3)
    cands = np.stack([np.cross(m[:, 0], m[:, 1]), np.cross(m[:, 0], m[:, 2]),
                      np.cross(m[:, 1], m[:, 2])], axis=1)
    norms2 = np.einsum("nki,nki->nk", cands, cands)
    best = np.argmax(norms2, axis=1)
    rows = np.arange(len(covs))
    vec = cands[rows, best]
    size = np.sqrt(norms2[rows, best])
    # |cross| ~ (l_mid - l_min)(l_max - l_min); tiny means the null space is not a line
    scale = np.maximum(3.0 * q, 0.0)
    bad = size <= _DEGENERATE_GAP * scale * scale
    vec = vec / np.where(bad, 1.0, size)[:, None]
    lam = np.einsum("ni,nij,nj->n", vec, covs, vec)
    if bad.any():
        evals, evecs = np.linalg.eigh(covs[bad])
        lam[bad], vec[bad] = evals[:, 0], evecs[:, :, 0]
    return lam, vec


def normals_and_curvatures(covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched version of :func:`normal_and_curvature` over (M, 3, 3)."""
    covs = np.asarray(covs, dtype=np.float64).reshape(-1, 3, 3)
    if len(covs) == 0:
        return np.empty((0, 3)), np.empty(0)
    lam, vec = _min_eigenpairs(covs)
    lam_min = np.clip(lam, 0.0, None)
    trace = np.clip(np.trace(covs, axis1=1, axis2=2), 0.0, None)
    normals = _canonical_sign(vec)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    flat = trace <= 0.0
    safe = np.where(flat, 1.0, trace)
    kappa = np.where(flat, 0.0, lam_min / safe)
    normals[flat] = (0.0, 0.0, 1.0)
    return normals, np.minimum(kappa, 1.0 / 3.0)


def normal_and_curvature(cov) -> tuple[np.ndarray, float]:
    """Unit normal (smallest-eigenvalue direction) and surface variation
    lambda_min / trace. A zero matrix gives (+z, 0)."""
    normals, kappa = normals_and_curvatures(np.asarray(cov)[None])
    return normals[0], float(kappa[0])


def consistency_score(m, n) -> float | np.ndarray:
    """|m . n| for unit vectors (row-wise for arrays)."""
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    score = np.abs(np.sum(m * n, axis=-1))
    score = np.minimum(score, 1.0)
    return float(score) if score.ndim == 0 else score


def neighborhood_stats(index: SpatialIndex, query_idx: np.ndarray, r: float):
    """Neighbor counts and covariance matrices for points of the index.

    The neighborhood of point i is every indexed point within r of it,
    itself included. Moments are accumulated relative to the query point to
    keep the covariance well conditioned.
    """
    n = len(index)
    query_idx = np.asarray(query_idx, dtype=np.intp)
    i, j, d = index.pairs(r, with_offsets=True)
    dt = np.ascontiguousarray(d.T)
    # each pair adds d to i's sums and -d to j's; second moments go to both
    counts = np.bincount(i, minlength=n) + np.bincount(j, minlength=n) + 1
    s1 = np.empty((n, 3))
    s2 = np.empty((n, 3, 3))
    for a in range(3):
        s1[:, a] = np.bincount(i, dt[a], n) - np.bincount(j, dt[a], n)
        for b in range(a, 3):
            w = dt[a] * dt[b]
            s2[:, a, b] = np.bincount(i, w, n) + np.bincount(j, w, n)
            s2[:, b, a] = s2[:, a, b]
    s1, s2 = s1[query_idx], s2[query_idx]
    c = counts[query_idx].astype(np.float64)
    mean = s1 / c[:, None]
    covs = s2 / c[:, None, None] - mean[:, :, None] * mean[:, None, :]
    return counts[query_idx], covs


@dataclass(frozen=True)
class FilterResult:
    """Outcome of the normal-consistency and curvature checks.

    ``ground0`` lists the baseline ground indices; ``normals``, ``kappa``,
    ``rho`` and ``counts`` are aligned with it. ``candidates`` is the subset
    that passed every check. ``reclass_index``/``reclass_labels`` hold the
    new labels of the points that failed.
    """

    ground0: np.ndarray
    normals: np.ndarray
    kappa: np.ndarray
    rho: np.ndarray
    counts: np.ndarray
    passed_rho: np.ndarray
    candidates: np.ndarray
    reclass_index: np.ndarray
    reclass_labels: np.ndarray

    @property
    def reclassified(self) -> dict[int, SemanticLabel]:
        return {int(i): SemanticLabel(int(lbl))
                for i, lbl in zip(self.reclass_index, self.reclass_labels)}

    def surface(self, point_index: int) -> LocalSurface:
        k = int(np.searchsorted(self.ground0, point_index))
        if k >= len(self.ground0) or self.ground0[k] != point_index:
            raise KeyError(point_index)
        return LocalSurface(self.normals[k], float(self.kappa[k]),
                            int(self.counts[k]), float(self.rho[k]))

    def lookup(self, point_index: np.ndarray) -> np.ndarray:
        """Positions in ``ground0`` of the given point indices."""
        return np.searchsorted(self.ground0, point_index)


def split_label(kappa: np.ndarray, params: SegParams) -> np.ndarray:
    """Demotion target for a rejected ground point: flat-but-inconsistent
    surfaces become obstacle, scattered ones noise."""
    return np.where(kappa <= params.kappa_split, int(SemanticLabel.OBSTACLE),
                    int(SemanticLabel.NOISE)).astype(np.uint8)


def geometric_filter(labeled: LabeledCloud, plane: Plane, index: SpatialIndex,
                     params: SegParams) -> FilterResult:
    ground0 = np.flatnonzero(labeled.mask(SemanticLabel.GROUND))
    counts, covs = neighborhood_stats(index, ground0, params.r_neighbors)
    normals, kappa = normals_and_curvatures(covs)
    rho = consistency_score(normals, plane.normal) if len(ground0) else np.empty(0)
    enough = counts >= params.n_neighbors_min
    passed_rho = enough & (rho >= params.rho_min)
    passed = passed_rho & (kappa <= params.kappa_max)

    reclass = np.where(enough, split_label(kappa, params),
                       int(SemanticLabel.NOISE)).astype(np.uint8)
    failed = ~passed
    return FilterResult(
        ground0=ground0,
        normals=normals,
        kappa=kappa,
        rho=np.asarray(rho, dtype=np.float64),
        counts=counts,
        passed_rho=passed_rho,
        candidates=ground0[passed],
        reclass_index=ground0[failed],
        reclass_labels=reclass[failed],
    )
