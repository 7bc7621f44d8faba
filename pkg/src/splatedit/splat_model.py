"""In-memory Gaussian scene representation plus bit-exact 3DGS PLY and label sidecar I/O.

Storage conventions follow the 3DGS reference export: opacity is a logit,
scales are natural logs of per-axis standard deviations, rot_0 is the
quaternion w component, and color is degree-3 spherical harmonics
(3 DC + 45 rest coefficients). Normals are carried verbatim but unused.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingIdError,
    EmptyInstanceError,
    FormatError,
    IoError,
    LabelMismatchError,
    TruncationError,
)

# Instance id marking unlabeled/background Gaussians. 0 stays a valid id.
UNLABELED_ID = 0xFFFFFFFF

# Degree-0 SH basis constant: rgb = sh_dc * SH_C0 + 0.5
SH_C0 = 0.28209479177387814

TOOL_COMMENT = "generated by splatedit"

PLY_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
)
RECORD_FLOATS = len(PLY_PROPERTIES)  # 62
RECORD_BYTES = RECORD_FLOATS * 4

# Column slices into the (N, 62) float32 record array.
COL_POS = slice(0, 3)
COL_NRM = slice(3, 6)
COL_DC = slice(6, 9)
COL_REST = slice(9, 54)
COL_OPA = 54
COL_SCL = slice(55, 58)
COL_ROT = slice(58, 62)

QUAT_NORM_TOL = 1e-6


@dataclass
class GaussianSplat:
    """A single anisotropic 3D Gaussian."""

    position: np.ndarray      # (3,) float32, world units
    rotation: np.ndarray      # (4,) float32 quaternion (w, x, y, z), unit norm
    log_scale: np.ndarray     # (3,) float32, ln of per-axis stddev
    logit_opacity: float
    sh_dc: np.ndarray         # (3,) float32 degree-0 SH coefficients
    sh_rest: np.ndarray       # (45,) float32 degree 1..3 coefficients

    def covariance(self) -> np.ndarray:
        """Reconstruct the 3x3 world covariance R diag(exp(s))^2 R^T."""
        r = rotation_matrix(self.rotation.astype(np.float64))
        s = np.exp(self.log_scale.astype(np.float64))
        m = r * (s ** 2)[np.newaxis, :]
        return m @ r.T

    def to_record(self) -> np.ndarray:
        rec = np.zeros(RECORD_FLOATS, dtype=np.float32)
        rec[COL_POS] = self.position
        rec[COL_DC] = self.sh_dc
        rec[COL_REST] = self.sh_rest
        rec[COL_OPA] = self.logit_opacity
        rec[COL_SCL] = self.log_scale
        rec[COL_ROT] = self.rotation
        return rec


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a (w, x, y, z) quaternion; assumes unit norm."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_matrices(q: np.ndarray) -> np.ndarray:
    """Vectorized rotation matrices for (N, 4) quaternions."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", np.asarray(self.min, dtype=np.float64))
        object.__setattr__(self, "max", np.asarray(self.max, dtype=np.float64))

    @property
    def center(self) -> np.ndarray:
        return (self.min + self.max) / 2.0

    @property
    def size(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))

    def corners(self) -> np.ndarray:
        """All 8 corners as an (8, 3) array."""
        lo, hi = self.min, self.max
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.min) & (pts <= self.max), axis=1)

    def to_json(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Aabb":
        return cls(np.array(d["min"]), np.array(d["max"]))


class GaussianScene:
    """Ordered Gaussian set backed by a single (N, 62) float32 record array.

    Memory index i corresponds to vertex i of the source file; mutation
    happens only through the editor under the session's exclusive-writer
    contract.
    """

    def __init__(self, data: np.ndarray, source_path: str = ""):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] != RECORD_FLOATS:
            raise ValueError(f"expected (N, {RECORD_FLOATS}) records, got {data.shape}")
        self._data = data
        self.source_path = source_path
        self._bounds: Aabb | None = None

    # -- column views (write-through) --

    @property
    def positions(self) -> np.ndarray:
        return self._data[:, COL_POS]

    @property
    def normals(self) -> np.ndarray:
        return self._data[:, COL_NRM]

    @property
    def sh_dc(self) -> np.ndarray:
        return self._data[:, COL_DC]

    @property
    def sh_rest(self) -> np.ndarray:
        return self._data[:, COL_REST]

    @property
    def logit_opacities(self) -> np.ndarray:
        return self._data[:, COL_OPA]

    @property
    def log_scales(self) -> np.ndarray:
        return self._data[:, COL_SCL]

    @property
    def rotations(self) -> np.ndarray:
        return self._data[:, COL_ROT]

    def __len__(self) -> int:
        return self._data.shape[0]

    def __getitem__(self, i: int) -> GaussianSplat:
        row = self._data[i]
        return GaussianSplat(
            position=row[COL_POS].copy(),
            rotation=row[COL_ROT].copy(),
            log_scale=row[COL_SCL].copy(),
            logit_opacity=float(row[COL_OPA]),
            sh_dc=row[COL_DC].copy(),
            sh_rest=row[COL_REST].copy(),
        )

    @property
    def bounds(self) -> Aabb:
        """Exact min/max of all positions; recomputed lazily after mutation."""
        if self._bounds is None:
            if len(self) == 0:
                self._bounds = Aabb(np.zeros(3), np.zeros(3))
            else:
                pos = self.positions.astype(np.float64)
                self._bounds = Aabb(pos.min(axis=0), pos.max(axis=0))
        return self._bounds

    def invalidate_bounds(self) -> None:
        self._bounds = None

    # -- record-level access used by the editor and the journal --

    def records(self) -> np.ndarray:
        return self._data

    def rows(self, indices: np.ndarray) -> np.ndarray:
        return self._data[indices].copy()

    def set_rows(self, indices: np.ndarray, rows: np.ndarray) -> None:
        self._data[indices] = rows
        self.invalidate_bounds()

    def delete_rows(self, indices: np.ndarray) -> np.ndarray:
        """Remove rows (sorted ascending indices); returns the removed records."""
        removed = self._data[indices].copy()
        self._data = np.delete(self._data, indices, axis=0)
        self.invalidate_bounds()
        return removed

    def append_records(self, records: np.ndarray) -> None:
        records = np.asarray(records, dtype=np.float32).reshape(-1, RECORD_FLOATS)
        self._data = np.ascontiguousarray(np.vstack([self._data, records]))
        self.invalidate_bounds()

    def insert_rows(self, indices: np.ndarray, rows: np.ndarray) -> None:
        """Re-insert rows so they land at their original positions (undo path)."""
        indices = np.asarray(indices, dtype=np.int64)
        obj = indices - np.arange(len(indices))
        self._data = np.ascontiguousarray(np.insert(self._data, obj, rows, axis=0))
        self.invalidate_bounds()

    def copy(self) -> "GaussianScene":
        return GaussianScene(self._data.copy(), self.source_path)


@dataclass
class InstanceRecord:
    """One segmented instance from the label sidecar."""

    id: int
    class_name: str
    confidence: float

    def __post_init__(self):
        if not self.class_name:
            raise FormatError("instance class_name must be nonempty")
        if not (0.0 <= self.confidence <= 1.0):
            raise FormatError(f"instance {self.id}: confidence {self.confidence} outside [0, 1]")
        self.class_name = self.class_name.lower()


@dataclass
class SemanticOverlay:
    """Per-Gaussian instance assignment plus the instance table."""

    assignment: np.ndarray                       # (N,) uint32, UNLABELED_ID = background
    instances: dict[int, InstanceRecord] = field(default_factory=dict)

    def members(self, instance_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == np.uint32(instance_id))

    def copy(self) -> "SemanticOverlay":
        return SemanticOverlay(self.assignment.copy(), dict(self.instances))

    def validate(self, scene: GaussianScene) -> None:
        if len(self.assignment) != len(scene):
            raise LabelMismatchError(len(scene), len(self.assignment))
        present = set(np.unique(self.assignment).tolist()) - {UNLABELED_ID}
        missing = present - set(self.instances)
        if missing:
            raise DanglingIdError(f"assignment references unknown instance ids {sorted(missing)}")


# --- PLY I/O ---------------------------------------------------------------


def _read_header(fh) -> tuple[int, int]:
    """Parse the header; returns (vertex_count, header_byte_length)."""
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise FormatError("not a PLY file (missing 'ply' magic)")
    header_len = len(magic)
    fmt_seen = False
    count = None
    props: list[str] = []
    in_vertex = False
    while True:
        raw = fh.readline()
        if not raw:
            raise FormatError("header ended before end_header")
        header_len += len(raw)
        line = raw.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise FormatError(f"unsupported format {' '.join(parts[1:])!r}; "
                                  "need binary_little_endian 1.0")
            fmt_seen = True
        elif parts[0] == "element":
            if parts[1] == "vertex":
                count = int(parts[2])
                in_vertex = True
            else:
                raise FormatError(f"unsupported element {parts[1]!r}")
        elif parts[0] == "property":
            if not in_vertex:
                raise FormatError("property declared outside element vertex")
            if parts[1] not in ("float", "float32"):
                raise FormatError(f"property {parts[2]!r} has type {parts[1]!r}; need float32")
            props.append(parts[2])
        else:
            raise FormatError(f"unsupported header keyword {parts[0]!r}")
    if not fmt_seen:
        raise FormatError("missing format declaration")
    if count is None:
        raise FormatError("missing 'element vertex' declaration")
    if props != PLY_PROPERTIES:
        missing = [p for p in PLY_PROPERTIES if p not in props]
        extra = [p for p in props if p not in PLY_PROPERTIES]
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        if not detail:
            detail.append("property order differs from the 3DGS convention")
        raise FormatError("vertex properties do not match the 3DGS layout: " + "; ".join(detail))
    return count, header_len


def load_ply(path: str | os.PathLike) -> GaussianScene:
    """Load a 3DGS PLY. Quaternions are renormalized (tolerance 1e-6); every
    other value is preserved bit-exactly."""
    try:
        with open(path, "rb") as fh:
            count, header_len = _read_header(fh)
            payload = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    expected = count * RECORD_BYTES
    if len(payload) < expected:
        raise TruncationError(expected, len(payload), header_len + len(payload))
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after vertex data")
    data = np.frombuffer(payload, dtype="<f4").reshape(count, RECORD_FLOATS).copy()
    _renormalize_rotations(data)
    return GaussianScene(data, source_path=str(path))


def _renormalize_rotations(data: np.ndarray) -> None:
    """Normalize quaternion rows whose norm is off by more than the tolerance.

    Rows already unit within tolerance are left byte-identical so that a
    conforming file round-trips exactly.
    """
    if data.shape[0] == 0:
        return
    rot = data[:, COL_ROT]
    norms = np.linalg.norm(rot.astype(np.float64), axis=1)
    off = np.abs(norms - 1.0) > QUAT_NORM_TOL
    if not np.any(off):
        return
    zero = off & (norms == 0.0)
    fix = off & ~zero
    rot[fix] = (rot[fix].astype(np.float64) / norms[fix, np.newaxis]).astype(np.float32)
    rot[zero] = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)


def ply_header(count: int) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"comment {TOOL_COMMENT}",
             f"element vertex {count}"]
    lines += [f"property float {name}" for name in PLY_PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def save_ply(scene: GaussianScene, path: str | os.PathLike) -> None:
    """Write the canonical header and raw float32 records."""
    try:
        with open(path, "wb") as fh:
            fh.write(ply_header(len(scene)))
            fh.write(np.ascontiguousarray(scene.records(), dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --- label sidecar ----------------------------------------------------------


def load_labels(
    scene: GaussianScene,
    json_path: str | os.PathLike,
    bin_path: str | os.PathLike,
    min_confidence: float = 0.8,
) -> SemanticOverlay:
    """Load labels.json + labels.bin and drop instances below ``min_confidence``.

    Gaussians of dropped instances become unlabeled background.
    """
    try:
        with open(json_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {json_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{json_path}: invalid JSON: {exc}") from exc
    if not isinstance(meta, dict) or "instances" not in meta:
        raise FormatError(f"{json_path}: missing 'instances' key")
    if meta.get("version", 1) != 1:
        raise FormatError(f"{json_path}: unsupported version {meta.get('version')!r}")
    records: dict[int, InstanceRecord] = {}
    for item in meta["instances"]:
        try:
            rec = InstanceRecord(int(item["id"]), str(item["class"]), float(item["confidence"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{json_path}: malformed instance entry {item!r}") from exc
        if rec.id in records:
            raise FormatError(f"{json_path}: duplicate instance id {rec.id}")
        if rec.id == UNLABELED_ID:
            raise FormatError(f"{json_path}: instance id {rec.id} collides with the unlabeled sentinel")
        records[rec.id] = rec

    try:
        with open(bin_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {bin_path}: {exc}") from exc
    if len(raw) % 4 != 0:
        raise FormatError(f"{bin_path}: size {len(raw)} is not a multiple of 4")
    assignment = np.frombuffer(raw, dtype="<u4").copy()
    if len(assignment) != len(scene):
        raise LabelMismatchError(len(scene), len(assignment))

    present = set(np.unique(assignment).tolist()) - {UNLABELED_ID}
    dangling = present - set(records)
    if dangling:
        raise DanglingIdError(f"{bin_path}: unknown instance ids {sorted(dangling)}")

    dropped = [i for i, rec in records.items() if rec.confidence < min_confidence]
    if dropped:
        assignment[np.isin(assignment, np.array(dropped, dtype=np.uint32))] = UNLABELED_ID
        for i in dropped:
            del records[i]
    return SemanticOverlay(assignment=assignment, instances=records)


def save_labels(
    overlay: SemanticOverlay,
    json_path: str | os.PathLike,
    bin_path: str | os.PathLike,
) -> None:
    meta = {
        "version": 1,
        "instances": [
            {"id": rec.id, "class": rec.class_name, "confidence": rec.confidence}
            for rec in sorted(overlay.instances.values(), key=lambda r: r.id)
        ],
    }
    try:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
        with open(bin_path, "wb") as fh:
            fh.write(np.ascontiguousarray(overlay.assignment, dtype="<u4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write labels: {exc}") from exc


def instance_aabb(scene: GaussianScene, overlay: SemanticOverlay, instance_id: int) -> Aabb:
    """Tight AABB over member Gaussian positions (centers only, no 3-sigma extent)."""
    idx = overlay.members(instance_id)
    if len(idx) == 0:
        raise EmptyInstanceError(f"instance {instance_id} has no assigned Gaussians")
    pos = scene.positions[idx].astype(np.float64)
    return Aabb(pos.min(axis=0), pos.max(axis=0))
