#!/usr/bin/env python3
"""Generate a synthetic demo scene (scene.ply + labels.json + labels.bin).

Layout: a floor plane plus two stools flanking a table along the +y wall, so
"remove the stool to the left of the table" grounds the stool at x < 0.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from splatedit.splat_model import (
    COL_DC,
    COL_OPA,
    COL_POS,
    COL_ROT,
    COL_SCL,
    GaussianScene,
    SH_C0,
    UNLABELED_ID,
    save_ply,
)


def records(n, rng, center, size, color, z_range=None):
    rec = np.zeros((n, 62), dtype=np.float32)
    pos = np.asarray(center) + rng.uniform(-0.5, 0.5, size=(n, 3)) * np.asarray(size)
    if z_range is not None:
        pos[:, 2] = rng.uniform(z_range[0], z_range[1], size=n)
    rec[:, COL_POS] = pos.astype(np.float32)
    rec[:, COL_DC] = ((np.asarray(color) - 0.5) / SH_C0).astype(np.float32)
    rec[:, COL_OPA] = 6.0
    rec[:, COL_SCL] = np.log(0.03)
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    rec[:, COL_ROT] = quat.astype(np.float32)
    q = rec[:, COL_ROT].astype(np.float64)
    rec[:, COL_ROT] = (q / np.linalg.norm(q, axis=1, keepdims=True)).astype(np.float32)
    return rec


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--splats", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.splats
    n_stool = max(n // 10, 10)
    n_table = max(n * 16 // 100, 10)
    n_floor = n - 2 * n_stool - n_table

    chunks = [
        records(n_floor, rng, (0, 0, 0.01), (16, 16, 0.0), (0.45, 0.42, 0.40),
                z_range=(0.0, 0.02)),
        records(n_stool, rng, (-2.0, 5.0, 0.3), (0.5, 0.5, 0.0), (0.55, 0.27, 0.07),
                z_range=(0.1, 0.5)),
        records(n_stool, rng, (2.0, 5.0, 0.3), (0.5, 0.5, 0.0), (0.1, 0.1, 0.12),
                z_range=(0.1, 0.5)),
        records(n_table, rng, (0.0, 5.0, 0.45), (1.4, 0.9, 0.0), (0.5, 0.36, 0.2),
                z_range=(0.1, 0.8)),
    ]
    labels = np.concatenate([
        np.full(n_floor, UNLABELED_ID, dtype=np.uint32),
        np.full(n_stool, 0, dtype=np.uint32),
        np.full(n_stool, 1, dtype=np.uint32),
        np.full(n_table, 2, dtype=np.uint32),
    ])
    scene = GaussianScene(np.vstack(chunks))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ply(scene, out / "scene.ply")
    (out / "labels.bin").write_bytes(labels.astype("<u4").tobytes())
    (out / "labels.json").write_text(json.dumps({
        "version": 1,
        "instances": [
            {"id": 0, "class": "stool", "confidence": 0.95},
            {"id": 1, "class": "stool", "confidence": 0.93},
            {"id": 2, "class": "table", "confidence": 0.97},
        ],
    }, indent=2))
    print(f"wrote {len(scene)} splats to {out}")


if __name__ == "__main__":
    main()
