"""The five edit operations (remove / recolor / add / move / replace) applied
inside the grounded ROI, with pre-edit KNN relabeling, optional post-removal
inpainting, and a copy-on-write journal that makes every edit reversible.

All mutations run under the session's exclusive-writer contract.
"""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDirectionError,
    EditError,
    EmptyAssetError,
    InvalidScaleError,
)
from .grounding import UP_AXES, GroundingResult, build_egocentric_view
from .prompt_parser import EditCommand, OperationKind, Relation
from .spatial_index import DEFAULT_K, inpaint_background, relabel_roi
from .splat_model import (
    Aabb,
    COL_DC,
    COL_OPA,
    COL_POS,
    COL_REST,
    COL_ROT,
    COL_SCL,
    GaussianScene,
    GaussianSplat,
    InstanceRecord,
    SemanticOverlay,
    SH_C0,
    UNLABELED_ID,
    instance_aabb,
    load_ply,
)

_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_U32 = np.empty(0, dtype=np.uint32)
_EMPTY_ROWS = np.empty((0, 62), dtype=np.float32)


@dataclass
class JournalEntry:
    """Reversible record of one edit.

    Index arrays refer to the pre-edit frame; mutations apply in the order
    relabel -> modify -> delete -> append, and invert in reverse.
    """

    op: str
    prompt: str | None = None
    timestamp: float = 0.0
    pre_version: int = 0
    post_version: int = 0
    relabeled_indices: np.ndarray = field(default_factory=lambda: _EMPTY_I64.copy())
    relabeled_prior: np.ndarray = field(default_factory=lambda: _EMPTY_U32.copy())
    modified_indices: np.ndarray = field(default_factory=lambda: _EMPTY_I64.copy())
    modified_rows: np.ndarray = field(default_factory=lambda: _EMPTY_ROWS.copy())
    deleted_indices: np.ndarray = field(default_factory=lambda: _EMPTY_I64.copy())
    deleted_rows: np.ndarray = field(default_factory=lambda: _EMPTY_ROWS.copy())
    deleted_labels: np.ndarray = field(default_factory=lambda: _EMPTY_U32.copy())
    added_count: int = 0
    added_instances: list[InstanceRecord] = field(default_factory=list)
    removed_instances: list[InstanceRecord] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def describe(self) -> dict:
        return {
            "op": self.op,
            "prompt": self.prompt,
            "timestamp": self.timestamp,
            "relabeled": int(len(self.relabeled_indices)),
            "modified": int(len(self.modified_indices)),
            "deleted": int(len(self.deleted_indices)),
            "added": self.added_count,
            **self.extra,
        }

    def to_bytes(self) -> bytes:
        return pickle.dumps(self, protocol=pickle.HIGHEST_PROTOCOL)

    @staticmethod
    def from_bytes(blob: bytes) -> "JournalEntry":
        return pickle.loads(blob)


class EditJournal:
    """Ordered edit history; inverse replay restores the exact prior state."""

    def __init__(self):
        self.entries: list[JournalEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: JournalEntry) -> None:
        self.entries.append(entry)

    def pop(self) -> JournalEntry:
        return self.entries.pop()


@dataclass
class AssetGaussians:
    """Generated object (PLY, degree-3 SH) ready for add/replace."""

    name: str
    scene: GaussianScene
    native_aabb: Aabb

    @property
    def aabb(self) -> Aabb:
        return self.scene.bounds


def load_asset(name: str, path) -> AssetGaussians:
    scene = load_ply(path)
    if len(scene) == 0:
        raise EmptyAssetError(f"asset {name!r} contains no Gaussians")
    return AssetGaussians(name=name.lower(), scene=scene, native_aabb=scene.bounds)


@dataclass
class EditKnobs:
    """User-visible edit parameters and their defaults."""

    kappa: float = 1.0
    step_ratio: float = 0.25
    max_move_ratio: float = 0.10
    inpaint: bool = True
    keep_sh_rest: bool = False
    knn_k: int = DEFAULT_K
    up_axis: str = "z"


# --- operations -------------------------------------------------------------


def remove_object(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    result: GroundingResult,
    inpaint: bool = True,
    k: int = DEFAULT_K,
) -> JournalEntry:
    """Delete every Gaussian of the winner instance; optionally fill the hole
    with background-fitted Gaussians."""
    entry = JournalEntry(op="remove")
    instance_id = result.winner.instance_id
    members = overlay.members(instance_id)
    entry.deleted_indices = members.astype(np.int64)
    entry.deleted_labels = overlay.assignment[members].copy()
    entry.deleted_rows = scene.delete_rows(members)
    overlay.assignment = np.delete(overlay.assignment, members)
    record = overlay.instances.pop(instance_id, None)
    if record is not None:
        entry.removed_instances.append(record)

    if inpaint and len(entry.deleted_rows):
        removed_splats = [_splat_from_record(row) for row in entry.deleted_rows]
        new_splats, skipped = inpaint_background(scene, overlay, removed_splats, k=k)
        entry.extra["inpaint_skipped"] = skipped
        if new_splats:
            _append_splats(scene, overlay, new_splats, UNLABELED_ID)
            entry.added_count = len(new_splats)
    return entry


def recolor_object(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    result: GroundingResult,
    color: tuple[float, float, float],
    keep_sh_rest: bool = False,
) -> JournalEntry:
    """Set the instance's DC color to ``color``; view-dependent residuals are
    zeroed unless ``keep_sh_rest`` asks to retain the old texture detail."""
    if not all(0.0 <= v <= 1.0 for v in color):
        raise EditError(f"color {color} outside [0,1]^3")
    entry = JournalEntry(op="recolor")
    members = overlay.members(result.winner.instance_id)
    entry.modified_indices = members.astype(np.int64)
    entry.modified_rows = scene.rows(members)
    sh_dc = (np.asarray(color, dtype=np.float64) - 0.5) / SH_C0
    scene.sh_dc[members] = sh_dc.astype(np.float32)
    if not keep_sh_rest:
        scene.sh_rest[members] = 0.0
    return entry


def scale_asset(asset: AssetGaussians, s: float) -> AssetGaussians:
    """Uniform scale about the asset centroid: positions scale by s, every
    log-scale component grows by ln(s); rotation/opacity/SH are untouched."""
    if not (s > 0.0):
        raise InvalidScaleError(f"scale factor must be > 0, got {s}")
    scene = asset.scene.copy()
    pos = scene.positions.astype(np.float64)
    centroid = pos.mean(axis=0)
    scene.positions[:] = ((pos - centroid) * s + centroid).astype(np.float32)
    scene.log_scales[:] = (scene.log_scales.astype(np.float64) + np.log(s)).astype(np.float32)
    scene.invalidate_bounds()
    return AssetGaussians(name=asset.name, scene=scene, native_aabb=asset.native_aabb)


def _extent(aabb: Aabb, direction: np.ndarray) -> tuple[float, float]:
    proj = aabb.corners() @ direction
    return float(proj.min()), float(proj.max())


def _center_along(aabb: Aabb, direction: np.ndarray) -> float:
    lo, hi = _extent(aabb, direction)
    return (lo + hi) / 2.0


def add_object(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    asset: AssetGaussians,
    result: GroundingResult,
    relation: Relation,
    kappa: float = 1.0,
    up_axis: str = "z",
) -> JournalEntry:
    """Insert the asset next to the grounded reference object(s).

    The asset is scaled so its longest box edge is kappa times the
    reference's, then translated so the facing box sides touch for the given
    view-dependent relation (on/above stack on top, middle centers between
    the references, lateral relations stand on the reference's floor line).
    """
    if len(asset.scene) == 0:
        raise EmptyAssetError(f"asset {asset.name!r} contains no Gaussians")
    if not (kappa > 0.0):
        raise InvalidScaleError(f"kappa must be > 0, got {kappa}")
    supported = (Relation.LEFT, Relation.RIGHT, Relation.FRONT, Relation.BACK,
                 Relation.ON, Relation.ABOVE, Relation.MIDDLE)
    if relation not in supported:
        raise EditError(f"add does not support relation {relation.value!r}")

    refs = result.ranked if relation is Relation.MIDDLE else [result.winner]
    ref_boxes = [_current_aabb(scene, overlay, r.instance_id, r.aabb) for r in refs]
    ref_edge = max(float(max(b.size)) for b in ref_boxes)
    asset_edge = float(max(asset.aabb.size))
    if asset_edge <= 0.0:
        raise EmptyAssetError(f"asset {asset.name!r} has a degenerate bounding box")
    s = kappa * ref_edge / asset_edge
    scaled = scale_asset(asset, s)
    a_box = scaled.aabb

    up = UP_AXES[up_axis]
    up_i = int(np.argmax(up))
    lateral = [i for i in range(3) if i != up_i]

    t = np.zeros(3)
    if relation in (Relation.ON, Relation.ABOVE):
        ref = ref_boxes[0]
        for i in lateral:
            t[i] = ref.center[i] - a_box.center[i]
        t[up_i] = ref.max[up_i] - a_box.min[up_i]
    elif relation is Relation.MIDDLE:
        mean_center = np.mean([b.center for b in ref_boxes], axis=0)
        for i in lateral:
            t[i] = mean_center[i] - a_box.center[i]
        floor = min(b.min[up_i] for b in ref_boxes)
        t[up_i] = floor - a_box.min[up_i]
    else:
        ref = ref_boxes[0]
        view = build_egocentric_view(scene, [], refs, up_axis=up_axis)
        right = view.right
        fwd_lat = np.cross(up, right)
        fwd_lat = fwd_lat / np.linalg.norm(fwd_lat)
        if relation is Relation.LEFT:
            contact_axis, other_axis = right, fwd_lat
            alpha = _extent(ref, contact_axis)[0] - _extent(a_box, contact_axis)[1]
        elif relation is Relation.RIGHT:
            contact_axis, other_axis = right, fwd_lat
            alpha = _extent(ref, contact_axis)[1] - _extent(a_box, contact_axis)[0]
        elif relation is Relation.FRONT:
            contact_axis, other_axis = fwd_lat, right
            alpha = _extent(ref, contact_axis)[0] - _extent(a_box, contact_axis)[1]
        else:  # BACK
            contact_axis, other_axis = fwd_lat, right
            alpha = _extent(ref, contact_axis)[1] - _extent(a_box, contact_axis)[0]
        beta = _center_along(ref, other_axis) - _center_along(a_box, other_axis)
        gamma = ref.min[up_i] - a_box.min[up_i]
        t = alpha * contact_axis + beta * other_axis + gamma * up

    entry = JournalEntry(op="add")
    new_id = _fresh_instance_id(overlay)
    record = InstanceRecord(id=new_id, class_name=asset.name, confidence=1.0)
    records = scaled.scene.records().copy()
    records[:, COL_POS] = (records[:, COL_POS].astype(np.float64) + t).astype(np.float32)
    scene.append_records(records)
    overlay.assignment = np.concatenate(
        [overlay.assignment, np.full(len(records), new_id, dtype=np.uint32)]
    )
    overlay.instances[new_id] = record
    entry.added_count = len(records)
    entry.added_instances.append(record)
    entry.extra["asset"] = asset.name
    entry.extra["scale"] = s
    return entry


def move_object(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    result: GroundingResult,
    relation: Relation,
    reference: GroundingResult,
    step_ratio: float = 0.25,
    max_ratio: float = 0.10,
) -> JournalEntry:
    """Translate the target along the line to the reference centroid:
    displacement = step_ratio * distance, toward for close / away for far
    away, capped at max_ratio of the scene diagonal."""
    if relation not in (Relation.CLOSE, Relation.FAR_AWAY):
        raise EditError(f"move supports 'close' and 'far away', got {relation.value!r}")
    if not (0.0 < step_ratio <= 1.0):
        raise EditError(f"step_ratio must be in (0, 1], got {step_ratio}")
    target_id = result.winner.instance_id
    ref_id = reference.winner.instance_id
    if target_id == ref_id:
        raise EditError("move target and reference are the same instance")
    members = overlay.members(target_id)
    target_centroid = scene.positions[members].astype(np.float64).mean(axis=0)
    ref_members = overlay.members(ref_id)
    ref_centroid = scene.positions[ref_members].astype(np.float64).mean(axis=0)
    delta = ref_centroid - target_centroid
    distance = float(np.linalg.norm(delta))
    if distance == 0.0:
        raise DegenerateDirectionError("target and reference centroids coincide")
    direction = delta / distance
    magnitude = min(step_ratio * distance, max_ratio * scene.bounds.diagonal)
    t = direction * magnitude if relation is Relation.CLOSE else -direction * magnitude

    entry = JournalEntry(op="move")
    entry.modified_indices = members.astype(np.int64)
    entry.modified_rows = scene.rows(members)
    scene.positions[members] = (
        scene.positions[members].astype(np.float64) + t
    ).astype(np.float32)
    scene.invalidate_bounds()
    entry.extra["translation"] = t.tolist()
    return entry


def replace_object(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    target_result: GroundingResult,
    asset: AssetGaussians,
    up_axis: str = "z",
) -> JournalEntry:
    """Swap the target for the asset: remove without inpainting, then place
    the asset scaled to the target's longest edge, centered on the target's
    footprint with its base on the target's floor line."""
    if len(asset.scene) == 0:
        raise EmptyAssetError(f"asset {asset.name!r} contains no Gaussians")
    target_id = target_result.winner.instance_id
    target_box = _current_aabb(scene, overlay, target_id, target_result.winner.aabb)

    entry = remove_object(scene, overlay, target_result, inpaint=False)
    entry.op = "replace"

    asset_edge = float(max(asset.aabb.size))
    if asset_edge <= 0.0:
        raise EmptyAssetError(f"asset {asset.name!r} has a degenerate bounding box")
    s = float(max(target_box.size)) / asset_edge
    scaled = scale_asset(asset, s)
    a_box = scaled.aabb

    up_i = int(np.argmax(UP_AXES[up_axis]))
    t = np.asarray(target_box.center) - np.asarray(a_box.center)
    # Vertical placement pins the floor line, not the box center.
    t[up_i] = target_box.min[up_i] - a_box.min[up_i]

    new_id = _fresh_instance_id(overlay)
    record = InstanceRecord(id=new_id, class_name=asset.name, confidence=1.0)
    records = scaled.scene.records().copy()
    records[:, COL_POS] = (records[:, COL_POS].astype(np.float64) + t).astype(np.float32)
    scene.append_records(records)
    overlay.assignment = np.concatenate(
        [overlay.assignment, np.full(len(records), new_id, dtype=np.uint32)]
    )
    overlay.instances[new_id] = record
    entry.added_count = len(records)
    entry.added_instances.append(record)
    entry.extra["asset"] = asset.name
    entry.extra["scale"] = s
    return entry


# --- composition and undo ----------------------------------------------------


def apply_relabel(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    roi: Aabb,
    k: int,
    entry: JournalEntry,
) -> None:
    """Run the pre-edit KNN relabel pass and fold its delta into ``entry``."""
    refined = relabel_roi(scene, overlay, roi, k=k)
    changed = np.flatnonzero(refined.assignment != overlay.assignment)
    if len(changed):
        entry.relabeled_indices = changed.astype(np.int64)
        entry.relabeled_prior = overlay.assignment[changed].copy()
        overlay.assignment = refined.assignment


def execute(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    command: EditCommand,
    primary: GroundingResult,
    reference: GroundingResult | None = None,
    asset: AssetGaussians | None = None,
    knobs: EditKnobs | None = None,
) -> JournalEntry:
    """Dispatch one parsed command: relabel the ROI, then run the operation.

    ``primary`` is the grounding of the object being edited (for add: of the
    reference object). The returned entry covers the relabel pass and the
    operation together so undo restores the exact pre-edit state.
    """
    knobs = knobs or EditKnobs()
    pre = JournalEntry(op=command.op.value)
    apply_relabel(scene, overlay, primary.roi, knobs.knn_k, pre)

    try:
        if command.op is OperationKind.REMOVE:
            entry = remove_object(scene, overlay, primary, inpaint=knobs.inpaint, k=knobs.knn_k)
        elif command.op is OperationKind.RECOLOR:
            entry = recolor_object(scene, overlay, primary, command.color,
                                   keep_sh_rest=knobs.keep_sh_rest)
        elif command.op is OperationKind.MOVE:
            if reference is None:
                raise EditError("move needs a grounded reference object")
            entry = move_object(scene, overlay, primary, command.relation, reference,
                                step_ratio=knobs.step_ratio, max_ratio=knobs.max_move_ratio)
        elif command.op is OperationKind.ADD:
            if asset is None:
                raise EditError("add needs a registered asset")
            entry = add_object(scene, overlay, asset, primary, command.relation,
                               kappa=knobs.kappa, up_axis=knobs.up_axis)
        elif command.op is OperationKind.REPLACE:
            if asset is None:
                raise EditError("replace needs a registered asset")
            entry = replace_object(scene, overlay, primary, asset, up_axis=knobs.up_axis)
        else:
            raise EditError(f"unsupported operation {command.op}")
    except BaseException:
        # a failed operation must not leave the relabel pass applied,
        # or the state would drift with nothing in the journal to undo
        if len(pre.relabeled_indices):
            overlay.assignment[pre.relabeled_indices] = pre.relabeled_prior
        raise

    entry.relabeled_indices = pre.relabeled_indices
    entry.relabeled_prior = pre.relabeled_prior
    entry.timestamp = time.time()
    return entry


def undo_entry(scene: GaussianScene, overlay: SemanticOverlay, entry: JournalEntry) -> None:
    """Inverse-apply one journal entry; exact fieldwise restoration."""
    if entry.added_count:
        n = len(scene)
        tail = np.arange(n - entry.added_count, n, dtype=np.int64)
        scene.delete_rows(tail)
        overlay.assignment = overlay.assignment[: n - entry.added_count]
    for record in entry.added_instances:
        overlay.instances.pop(record.id, None)
    if len(entry.deleted_indices):
        scene.insert_rows(entry.deleted_indices, entry.deleted_rows)
        obj = entry.deleted_indices - np.arange(len(entry.deleted_indices))
        overlay.assignment = np.insert(overlay.assignment, obj, entry.deleted_labels)
    for record in entry.removed_instances:
        overlay.instances[record.id] = record
    if len(entry.modified_indices):
        scene.set_rows(entry.modified_indices, entry.modified_rows)
    if len(entry.relabeled_indices):
        overlay.assignment[entry.relabeled_indices] = entry.relabeled_prior


# --- helpers -----------------------------------------------------------------


def _splat_from_record(row: np.ndarray) -> GaussianSplat:
    return GaussianSplat(
        position=row[COL_POS].copy(),
        rotation=row[COL_ROT].copy(),
        log_scale=row[COL_SCL].copy(),
        logit_opacity=float(row[COL_OPA]),
        sh_dc=row[COL_DC].copy(),
        sh_rest=row[COL_REST].copy(),
    )


def _append_splats(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    splats: list[GaussianSplat],
    label: int,
) -> None:
    records = np.stack([s.to_record() for s in splats])
    scene.append_records(records)
    overlay.assignment = np.concatenate(
        [overlay.assignment, np.full(len(splats), label, dtype=np.uint32)]
    )


def _fresh_instance_id(overlay: SemanticOverlay) -> int:
    return (max(overlay.instances) + 1) if overlay.instances else 0


def _current_aabb(scene, overlay, instance_id: int, fallback: Aabb) -> Aabb:
    """Post-relabel box of the instance; grounding-time box if it emptied."""
    try:
        return instance_aabb(scene, overlay, instance_id)
    except Exception:
        return fallback
