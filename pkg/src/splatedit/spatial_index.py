"""KNN machinery: k-d tree queries, majority-vote ROI relabeling, and
background inpainting after removals.

Queries are exact and deterministic: results are ordered by (distance,
gaussian index), so equidistant neighbors always resolve to the lower index.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInputError
from .splat_model import (
    COL_DC,
    COL_OPA,
    COL_REST,
    COL_ROT,
    COL_SCL,
    GaussianScene,
    GaussianSplat,
    SemanticOverlay,
    UNLABELED_ID,
    Aabb,
)

DEFAULT_K = 16

# Classes whose Gaussians count as inpainting background besides unlabeled.
BACKGROUND_CLASSES = frozenset({"wall", "floor", "ceiling"})


class KdIndex:
    """Immutable k-d tree over (position, gaussian index) pairs.

    Bound to the scene snapshot it was built from; rebuild after mutations.
    """

    def __init__(self, positions: np.ndarray, ids: np.ndarray, leaf_size: int = 16):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.ids = np.ascontiguousarray(ids, dtype=np.int64)
        self.leaf_size = leaf_size
        self._tree = cKDTree(self.positions, leafsize=leaf_size, balanced_tree=True)

    @property
    def size(self) -> int:
        return len(self.ids)

    def query(self, point, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest entries as (gaussian ids, distances), ordered by
        (distance, gaussian id). k is clamped to the index size."""
        point = np.asarray(point, dtype=np.float64)
        n = self.size
        k_eff = min(max(int(k), 1), n)
        m = k_eff
        while True:
            m_q = min(m + 8, n)
            dist, pos = self._tree.query(point, k=m_q)
            dist = np.atleast_1d(dist)
            pos = np.atleast_1d(pos)
            if m_q == n or dist[k_eff - 1] < dist[m_q - 1]:
                break
            m = m_q
        return self._resolve(dist, pos, k_eff)

    def _resolve(self, dist: np.ndarray, pos: np.ndarray, k_eff: int) -> tuple[np.ndarray, np.ndarray]:
        ids = self.ids[pos]
        order = np.lexsort((ids, dist))
        take = order[:k_eff]
        return ids[take], dist[take]

    def query_batch(self, points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``query`` over (B, 3) points; returns (B, k_eff) arrays."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = self.size
        k_eff = min(max(int(k), 1), n)
        m_q = min(k_eff + 1, n)
        dist, pos = self._tree.query(points, k=m_q)
        dist = dist.reshape(len(points), m_q)
        pos = pos.reshape(len(points), m_q)
        ids = self.ids[pos]

        out_ids = ids[:, :k_eff].copy()
        out_dist = dist[:, :k_eff].copy()
        # Rows whose k-th distance reappears at the boundary (or anywhere
        # inside) may be ordered arbitrarily by the tree; redo those exactly.
        tied = (dist[:, :-1] == dist[:, 1:]).any(axis=1) if m_q > 1 else np.zeros(len(points), bool)
        for row in np.flatnonzero(tied):
            out_ids[row], out_dist[row] = self.query(points[row], k_eff)
        return out_ids, out_dist


def build_index(scene: GaussianScene, subset=None, leaf_size: int = 16) -> KdIndex:
    """Index the whole scene or the given gaussian-index subset."""
    if subset is None:
        ids = np.arange(len(scene), dtype=np.int64)
    else:
        ids = np.asarray(sorted(subset), dtype=np.int64)
    if len(ids) == 0:
        raise EmptyInputError("cannot build a spatial index over zero Gaussians")
    return KdIndex(scene.positions[ids].astype(np.float64), ids, leaf_size=leaf_size)


def knn_query(index: KdIndex, point, k: int) -> list[tuple[int, float]]:
    """k nearest (gaussian index, distance) pairs, ascending distance,
    equidistant entries by lower gaussian index."""
    ids, dist = index.query(point, k)
    return [(int(i), float(d)) for i, d in zip(ids, dist)]


def relabel_roi(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    roi: Aabb,
    k: int = DEFAULT_K,
    index: KdIndex | None = None,
) -> SemanticOverlay:
    """Majority-vote relabeling of every Gaussian inside ``roi``.

    Votes come from the k nearest neighbors in the whole scene (self excluded)
    using the pre-pass labels, so one pass never cascades into the next. A
    tied vote falls back to the label of the single nearest neighbor. The
    unlabeled sentinel votes like any other label.
    """
    inside = np.flatnonzero(roi.contains(scene.positions.astype(np.float64)))
    result = overlay.copy()
    if len(inside) == 0 or len(scene) < 2:
        return result
    if index is None:
        index = build_index(scene)
    neigh_ids, _ = index.query_batch(scene.positions[inside].astype(np.float64), k + 1)
    old = overlay.assignment
    new_labels = result.assignment
    for row, gi in enumerate(inside):
        ids = neigh_ids[row]
        ids = ids[ids != gi][:k]
        labels = old[ids]
        votes: dict[int, int] = {}
        for lab in labels.tolist():
            votes[lab] = votes.get(lab, 0) + 1
        best = max(votes.values())
        winners = [lab for lab, c in votes.items() if c == best]
        new_labels[gi] = winners[0] if len(winners) == 1 else labels[0]
    return result


def background_indices(overlay: SemanticOverlay) -> np.ndarray:
    """Gaussians that count as background: unlabeled or wall/floor/ceiling."""
    bg_ids = [i for i, rec in overlay.instances.items() if rec.class_name in BACKGROUND_CLASSES]
    mask = overlay.assignment == np.uint32(UNLABELED_ID)
    if bg_ids:
        mask |= np.isin(overlay.assignment, np.array(bg_ids, dtype=np.uint32))
    return np.flatnonzero(mask)


def inpaint_background(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    removed: list[GaussianSplat],
    k: int = DEFAULT_K,
) -> tuple[list[GaussianSplat], int]:
    """Synthesize fill Gaussians where ``removed`` ones used to be.

    For each removed Gaussian the k nearest background Gaussians define a
    least-squares plane; the new Gaussian sits at the projection of the old
    position onto it and averages the neighbors' appearance fields. Gaussians
    whose neighborhood has fewer than 3 non-collinear points are skipped.

    Returns (new splats, skipped count). New splats are background
    (unlabeled); existing Gaussians are never touched.
    """
    if not removed:
        return [], 0
    bg = background_indices(overlay)
    if len(bg) == 0:
        return [], len(removed)
    k_eff = min(k, len(bg))
    index = build_index(scene, subset=bg)
    queries = np.array([s.position for s in removed], dtype=np.float64)
    neigh_ids, _ = index.query_batch(queries, k_eff)

    records = scene.records()
    out: list[GaussianSplat] = []
    skipped = 0
    for row, splat in enumerate(removed):
        ids = neigh_ids[row]
        pts = scene.positions[ids].astype(np.float64)
        plane = _fit_plane(pts)
        if plane is None:
            skipped += 1
            continue
        center, normal = plane
        p = splat.position.astype(np.float64)
        projected = p - np.dot(p - center, normal) * normal

        rows = records[ids]
        rot = rows[:, COL_ROT].astype(np.float64)
        rot = np.where((rot @ rot[0])[:, np.newaxis] < 0, -rot, rot)
        mean_rot = rot.mean(axis=0)
        nrm = np.linalg.norm(mean_rot)
        mean_rot = mean_rot / nrm if nrm > 0 else np.array([1.0, 0.0, 0.0, 0.0])

        out.append(
            GaussianSplat(
                position=projected.astype(np.float32),
                rotation=mean_rot.astype(np.float32),
                log_scale=rows[:, COL_SCL].astype(np.float64).mean(axis=0).astype(np.float32),
                logit_opacity=float(rows[:, COL_OPA].astype(np.float64).mean()),
                sh_dc=rows[:, COL_DC].astype(np.float64).mean(axis=0).astype(np.float32),
                sh_rest=rows[:, COL_REST].astype(np.float64).mean(axis=0).astype(np.float32),
            )
        )
    return out, skipped


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Least-squares plane through >= 3 non-collinear points, or None."""
    if len(points) < 3:
        return None
    center = points.mean(axis=0)
    _, svals, vt = np.linalg.svd(points - center, full_matrices=False)
    if svals[0] <= 0 or svals[1] <= 1e-9 * svals[0]:
        return None
    return center, vt[2]
