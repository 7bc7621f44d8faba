"""Synthetic scene builders shared across the test suite."""

from __future__ import annotations

import json

import numpy as np

from splatedit.splat_model import (
    COL_POS,
    COL_ROT,
    GaussianScene,
    InstanceRecord,
    PLY_PROPERTIES,
    RECORD_FLOATS,
    SemanticOverlay,
    TOOL_COMMENT,
    UNLABELED_ID,
)


def random_records(n: int, rng: np.random.Generator, spread: float = 10.0) -> np.ndarray:
    """Plausible Gaussian records with unit (float32) quaternions."""
    rec = rng.normal(0.0, 1.0, size=(n, RECORD_FLOATS)).astype(np.float32)
    rec[:, COL_POS] = rng.uniform(-spread, spread, size=(n, 3)).astype(np.float32)
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    rec[:, COL_ROT] = quat.astype(np.float32)
    # renormalize in float32 so stored rows are unit within 1e-6
    q32 = rec[:, COL_ROT].astype(np.float64)
    rec[:, COL_ROT] = (q32 / np.linalg.norm(q32, axis=1, keepdims=True)).astype(np.float32)
    rec[:, 55:58] = rng.uniform(-5.0, -2.0, size=(n, 3)).astype(np.float32)  # log scales
    return rec


def make_scene(n: int, seed: int = 0, spread: float = 10.0) -> GaussianScene:
    rng = np.random.default_rng(seed)
    return GaussianScene(random_records(n, rng, spread=spread))


def blob_records(
    center,
    n: int,
    rng: np.random.Generator,
    size: float = 0.5,
    color=(0.5, 0.5, 0.5),
) -> np.ndarray:
    """A compact blob of Gaussians around ``center`` with a given DC color."""
    from splatedit.splat_model import SH_C0

    rec = random_records(n, rng, spread=0.0)
    rec[:, COL_POS] = (
        np.asarray(center, dtype=np.float64)
        + rng.uniform(-size / 2, size / 2, size=(n, 3))
    ).astype(np.float32)
    rec[:, 6:9] = ((np.asarray(color, dtype=np.float64) - 0.5) / SH_C0).astype(np.float32)
    return rec


def labeled_scene(instances, background=0, seed: int = 0, room=None):
    """Build (scene, overlay) from [(class_name, center, size, count), ...].

    Instance ids are assigned 0..len-1 in list order; optional unlabeled
    background splats spread over ``room`` (a (lo, hi) pair) or the union
    bounds. Passing a room keeps the scene center (the grounding viewpoint)
    away from the object cluster, like a real indoor scan.
    """
    rng = np.random.default_rng(seed)
    chunks = []
    labels = []
    records = {}
    for idx, (class_name, center, size, count) in enumerate(instances):
        chunks.append(blob_records(center, count, rng, size=size))
        labels.append(np.full(count, idx, dtype=np.uint32))
        records[idx] = InstanceRecord(id=idx, class_name=class_name, confidence=0.95)
    if background:
        if room is not None:
            lo = np.asarray(room[0], dtype=np.float64)
            hi = np.asarray(room[1], dtype=np.float64)
        else:
            lo = np.min([c[:, COL_POS].min(axis=0) for c in chunks], axis=0) - 1.0
            hi = np.max([c[:, COL_POS].max(axis=0) for c in chunks], axis=0) + 1.0
        bg = random_records(background, rng)
        bg[:, COL_POS] = rng.uniform(lo, hi, size=(background, 3)).astype(np.float32)
        # pin the extreme corners so the scene bounds equal the room exactly
        bg[0, COL_POS] = lo.astype(np.float32)
        bg[1, COL_POS] = hi.astype(np.float32)
        chunks.append(bg)
        labels.append(np.full(background, UNLABELED_ID, dtype=np.uint32))
    scene = GaussianScene(np.vstack(chunks))
    overlay = SemanticOverlay(np.concatenate(labels), records)
    return scene, overlay


def write_labels_files(overlay: SemanticOverlay, json_path, bin_path, confidences=None):
    instances = []
    for rec in sorted(overlay.instances.values(), key=lambda r: r.id):
        conf = confidences.get(rec.id, rec.confidence) if confidences else rec.confidence
        instances.append({"id": rec.id, "class": rec.class_name, "confidence": conf})
    with open(json_path, "w") as fh:
        json.dump({"version": 1, "instances": instances}, fh)
    with open(bin_path, "wb") as fh:
        fh.write(np.ascontiguousarray(overlay.assignment, dtype="<u4").tobytes())


def spread_corruption(positions, count, rng, k=16, cap=6):
    """Pick ``count`` indices to mislabel such that no k-neighborhood contains
    more than ``cap`` corrupted points (so a clean strict majority survives
    everywhere). Greedy with a per-neighborhood budget."""
    from splatedit.spatial_index import KdIndex

    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    index = KdIndex(positions, np.arange(n, dtype=np.int64))
    neigh, _ = index.query_batch(positions, k + 1)
    neighborhoods = [row[row != i][:k] for i, row in enumerate(neigh)]
    # reverse adjacency: whose neighborhoods contain point c
    reverse = [[] for _ in range(n)]
    for p, row in enumerate(neighborhoods):
        for c in row:
            reverse[c].append(p)
    counts = np.zeros(n, dtype=np.int64)
    chosen = []
    for c in rng.permutation(n):
        affected = reverse[c]
        if all(counts[p] < cap for p in affected):
            chosen.append(int(c))
            for p in affected:
                counts[p] += 1
            if len(chosen) >= count:
                break
    if len(chosen) < count:
        raise RuntimeError(f"could only spread {len(chosen)}/{count} corruptions")
    return np.array(chosen, dtype=np.int64)


def reference_ply_bytes(records: np.ndarray) -> bytes:
    """Independent PLY writer following the documented wire format."""
    lines = ["ply", "format binary_little_endian 1.0", f"comment {TOOL_COMMENT}",
             f"element vertex {len(records)}"]
    lines += [f"property float {p}" for p in PLY_PROPERTIES]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + np.ascontiguousarray(records, dtype="<f4").tobytes()
