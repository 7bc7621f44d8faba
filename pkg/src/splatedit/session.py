"""Session lifecycle: import, semantic grounding cache, edit dispatch, undo,
and on-disk persistence.

A session directory holds scene.ply, labels.json/labels.bin, config.json,
state.json, journal.bin (length-prefixed pickled entries), a grounding cache,
and timings.jsonl. Writes go through temp-file + rename so an interrupted
import never leaves a half-written session.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import shutil
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .editor import (
    AssetGaussians,
    EditJournal,
    EditKnobs,
    JournalEntry,
    execute,
    load_asset,
    undo_entry,
)
from .errors import (
    AssetNotFoundError,
    EditError,
    NothingToUndoError,
)
from .grounding import (
    ExternalScorer,
    GroundingResult,
    LexicalScorer,
    ground,
)
from .preview import PreviewImage, render_preview
from .prompt_parser import (
    EditCommand,
    ObjectDescriptor,
    OperationKind,
    Relation,
    normalize_prompt,
    parse_prompt,
)
from .splat_model import (
    GaussianScene,
    SemanticOverlay,
    instance_aabb,
    load_labels,
    load_ply,
    save_labels,
    save_ply,
)

log = logging.getLogger(__name__)

SCORER_URL_ENV = "SPLATEDIT_SCORER_URL"


@dataclass
class SessionConfig:
    """All user-visible knobs, persisted with the session."""

    min_confidence: float = 0.8
    knn_k: int = 16
    kappa: float = 1.0
    step_ratio: float = 0.25
    max_move_ratio: float = 0.10
    inpaint: bool = True
    keep_sh_rest: bool = False
    up_axis: str = "z"
    margin_ratio: float = 0.02
    scorer_url: str | None = None
    assets_dir: str | None = None

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SessionConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def knobs(self, **overrides) -> EditKnobs:
        base = EditKnobs(
            kappa=self.kappa,
            step_ratio=self.step_ratio,
            max_move_ratio=self.max_move_ratio,
            inpaint=self.inpaint,
            keep_sh_rest=self.keep_sh_rest,
            knn_k=self.knn_k,
            up_axis=self.up_axis,
        )
        for key, value in overrides.items():
            if value is not None and hasattr(base, key):
                setattr(base, key, value)
        return base


@dataclass
class GroundingBundle:
    """Everything one prompt needed from grounding (cached as a unit)."""

    primary: GroundingResult
    reference: GroundingResult | None = None

    def to_json(self) -> dict:
        return {
            "primary": self.primary.to_json(),
            "reference": self.reference.to_json() if self.reference else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GroundingBundle":
        return cls(
            primary=GroundingResult.from_json(d["primary"]),
            reference=GroundingResult.from_json(d["reference"]) if d["reference"] else None,
        )


@dataclass
class EditOutcome:
    journal_id: int
    bundle: GroundingBundle
    entry: JournalEntry
    timings: dict


def _atomic_write(path: Path, data: bytes, durable: bool = False) -> None:
    """Unique temp-file + rename (safe under concurrent writers); ``durable``
    adds an fsync, used at import so a freshly written session is always
    loadable."""
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            if durable:
                os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


class Session:
    """One scene + overlay with exclusive-writer editing semantics."""

    def __init__(
        self,
        directory: Path,
        scene: GaussianScene,
        overlay: SemanticOverlay,
        config: SessionConfig,
        version: int = 0,
        next_version: int = 1,
    ):
        self.dir = Path(directory)
        self.id = self.dir.name
        self.scene = scene
        self.overlay = overlay
        self.config = config
        self.version = version
        self._next_version = next_version
        self.journal = EditJournal()
        self.cache: dict[str, GroundingBundle] = {}
        self.timings: list[dict] = []
        self._scorer = None

    # -- construction ------------------------------------------------------

    @classmethod
    def import_session(
        cls,
        ply_path,
        labels_json,
        labels_bin,
        min_confidence: float = 0.8,
        session_dir=None,
        config: SessionConfig | None = None,
    ) -> "Session":
        """Create a session directory from a scene and its label sidecar.

        Confidence filtering happens once here; reopening the session reuses
        the saved instance semantics without re-parsing the original labels.
        """
        t0 = time.perf_counter()
        config = config or SessionConfig()
        config.min_confidence = min_confidence
        scene = load_ply(ply_path)
        overlay = load_labels(scene, labels_json, labels_bin, min_confidence)
        session_dir = Path(session_dir)
        session_dir.mkdir(parents=True, exist_ok=True)
        session = cls(session_dir, scene, overlay, config)
        session._persist_all(durable=True)
        session._record_timing(
            phase="import", prompt=None,
            timings={"total": time.perf_counter() - t0},
            cache_hit=False, scorer_calls=0,
        )
        return session

    @classmethod
    def open(cls, session_dir) -> "Session":
        """Reopen a persisted session; skips label re-parsing and reloads the
        grounding cache and journal."""
        session_dir = Path(session_dir)
        config = SessionConfig.from_json(
            json.loads((session_dir / "config.json").read_text())
        )
        scene = load_ply(session_dir / "scene.ply")
        # saved instance semantics are already confidence-filtered
        overlay = load_labels(
            scene, session_dir / "labels.json", session_dir / "labels.bin", 0.0
        )
        state = json.loads((session_dir / "state.json").read_text())
        session = cls(
            session_dir, scene, overlay, config,
            version=state["version"], next_version=state["next_version"],
        )
        session.journal = _read_journal(session_dir / "journal.bin")
        cache_path = session_dir / "grounding_cache.json"
        if cache_path.exists():
            raw = json.loads(cache_path.read_text())
            session.cache = {k: GroundingBundle.from_json(v) for k, v in raw.items()}
        log.info(
            "session %s: reusing saved instance semantics (%d instances, cache hit)",
            session.id, len(overlay.instances),
        )
        return session

    # -- scorer --------------------------------------------------------------

    @property
    def scorer(self):
        if self._scorer is None:
            url = os.environ.get(SCORER_URL_ENV) or self.config.scorer_url
            if url:
                self._scorer = ExternalScorer(
                    url, fallback=LexicalScorer(),
                    preview_provider=self._scorer_preview,
                )
            else:
                self._scorer = LexicalScorer()
        return self._scorer

    def _scorer_preview(self, context: dict) -> bytes:
        instance_id = context.get("instance_id")
        if instance_id is None:
            return b""
        crop = instance_aabb(self.scene, self.overlay, instance_id)
        image = render_preview(
            self.scene, width=224, height=224, up_axis=self.config.up_axis, crop=crop
        )
        return image.to_png()

    # -- grounding -----------------------------------------------------------

    def _cache_key(self, prompt: str) -> str:
        return f"{normalize_prompt(prompt)}|v{self.version}"

    def ground_prompt(
        self, prompt: str, command: EditCommand | None = None
    ) -> tuple[GroundingBundle, bool, EditCommand]:
        """Cache-aware grounding; returns (bundle, cache_hit, command)."""
        command = command or parse_prompt(prompt)
        key = self._cache_key(prompt)
        hit = key in self.cache
        if hit:
            bundle = self.cache[key]
            bundle.primary.trace.cache_hit = True
            if bundle.reference:
                bundle.reference.trace.cache_hit = True
            return bundle, True, command
        bundle = self._ground_uncached(prompt, command)
        self.cache[key] = bundle
        self._persist_cache()
        return bundle, False, command

    def _ground_uncached(self, prompt: str, command: EditCommand) -> GroundingBundle:
        cfg = self.config
        if command.op is OperationKind.ADD:
            if not command.references:
                raise EditError("add needs a reference object ('on the table', ...)")
            ref_cmd = _descriptor_command(command, command.references[0])
            primary = ground(
                self.scene, self.overlay, ref_cmd, self.scorer,
                prompt=command.references[0].class_name,
                up_axis=cfg.up_axis, margin_ratio=cfg.margin_ratio,
            )
            return GroundingBundle(primary=primary)
        if command.op is OperationKind.MOVE:
            target_cmd = _descriptor_command(command, command.target)
            primary = ground(
                self.scene, self.overlay, target_cmd, self.scorer, prompt=prompt,
                up_axis=cfg.up_axis, margin_ratio=cfg.margin_ratio,
            )
            reference = None
            if command.references:
                ref_cmd = _descriptor_command(command, command.references[0])
                reference = ground(
                    self.scene, self.overlay, ref_cmd, self.scorer,
                    prompt=command.references[0].class_name,
                    up_axis=cfg.up_axis, margin_ratio=cfg.margin_ratio,
                )
            return GroundingBundle(primary=primary, reference=reference)
        primary = ground(
            self.scene, self.overlay, command, self.scorer, prompt=prompt,
            up_axis=cfg.up_axis, margin_ratio=cfg.margin_ratio,
        )
        return GroundingBundle(primary=primary)

    # -- editing ---------------------------------------------------------------

    def edit(self, prompt: str, **knob_overrides) -> EditOutcome:
        """Parse -> ground (cache-aware) -> edit -> journal -> persist."""
        t_start = time.perf_counter()
        command = parse_prompt(prompt)
        t_parse = time.perf_counter()

        bundle, cache_hit, _ = self.ground_prompt(prompt, command)
        scorer_calls = 0 if cache_hit else _bundle_scorer_calls(bundle)
        t_ground = time.perf_counter()

        asset = None
        if command.op in (OperationKind.ADD, OperationKind.REPLACE):
            asset = self._resolve_asset(command.asset_ref)
        knobs = self.config.knobs(**knob_overrides)
        entry = execute(
            self.scene, self.overlay, command, bundle.primary,
            reference=bundle.reference, asset=asset, knobs=knobs,
        )
        entry.prompt = prompt
        entry.pre_version = self.version
        self.version = self._next_version
        self._next_version += 1
        entry.post_version = self.version
        self.journal.append(entry)
        self._persist_state_and_scene()
        self._append_journal(entry)
        t_edit = time.perf_counter()

        timings = {
            "parse": t_parse - t_start,
            "ground": t_ground - t_parse,
            "edit": t_edit - t_ground,
            "total": t_edit - t_start,
            "cache_hit": cache_hit,
            "scorer_calls": scorer_calls,
        }
        self._record_timing(
            phase="edit", prompt=prompt, timings=timings,
            cache_hit=cache_hit, scorer_calls=scorer_calls,
        )
        return EditOutcome(
            journal_id=len(self.journal) - 1,
            bundle=bundle,
            entry=entry,
            timings=timings,
        )

    def undo(self) -> JournalEntry:
        if len(self.journal) == 0:
            raise NothingToUndoError("journal is empty")
        t0 = time.perf_counter()
        entry = self.journal.pop()
        undo_entry(self.scene, self.overlay, entry)
        self.version = entry.pre_version
        self._persist_state_and_scene()
        self._rewrite_journal()
        self._record_timing(
            phase="undo", prompt=entry.prompt,
            timings={"total": time.perf_counter() - t0},
            cache_hit=False, scorer_calls=0,
        )
        return entry

    def _resolve_asset(self, name: str | None) -> AssetGaussians:
        if not name:
            raise EditError("no asset name in the prompt")
        root = Path(self.config.assets_dir) if self.config.assets_dir else self.dir / "assets"
        slug = name.replace(" ", "_")
        path = root / slug / "asset.ply"
        if not path.exists():
            raise AssetNotFoundError(
                f"asset {name!r} not registered (expected {path}); "
                f"run: splatedit assets add --name {slug!r} --ply <file>"
            )
        return load_asset(name, path)

    def register_asset(self, name: str, ply_path) -> Path:
        root = Path(self.config.assets_dir) if self.config.assets_dir else self.dir / "assets"
        slug = name.replace(" ", "_")
        target = root / slug
        target.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(ply_path, target / "asset.ply")
        return target / "asset.ply"

    # -- read-only services ------------------------------------------------------

    def preview(
        self,
        azimuth: float = 45.0,
        elevation: float = 30.0,
        width: int = 512,
        height: int = 512,
        crop_id: int | None = None,
        highlight_id: int | None = None,
    ) -> PreviewImage:
        crop = None
        if crop_id is not None:
            crop = instance_aabb(self.scene, self.overlay, crop_id)
        highlight = None
        if highlight_id is not None:
            highlight = self.overlay.members(highlight_id)
        return render_preview(
            self.scene, azimuth=azimuth, elevation=elevation,
            width=width, height=height, up_axis=self.config.up_axis,
            crop=crop, highlight=highlight,
        )

    def export(self, path) -> None:
        save_ply(self.scene, path)

    def history(self) -> list[dict]:
        return [
            {"journal_id": i, **entry.describe()}
            for i, entry in enumerate(self.journal.entries)
        ]

    def meta(self) -> dict:
        counts = {}
        ids, freq = np.unique(self.overlay.assignment, return_counts=True)
        for uid, c in zip(ids.tolist(), freq.tolist()):
            counts[uid] = c
        return {
            "splat_count": len(self.scene),
            "bounds": self.scene.bounds.to_json(),
            "version": self.version,
            "instances": [
                {
                    "id": rec.id,
                    "class": rec.class_name,
                    "confidence": rec.confidence,
                    "member_count": counts.get(rec.id, 0),
                }
                for rec in sorted(self.overlay.instances.values(), key=lambda r: r.id)
            ],
        }

    # -- persistence ------------------------------------------------------------

    def _persist_all(self, durable: bool = False) -> None:
        self._persist_state_and_scene(durable=durable)
        self._rewrite_journal()
        self._persist_cache()

    def _persist_state_and_scene(self, durable: bool = False) -> None:
        from .splat_model import ply_header

        records = np.ascontiguousarray(self.scene.records(), dtype="<f4")
        _atomic_write(self.dir / "scene.ply", ply_header(len(self.scene)) + records.tobytes(),
                      durable=durable)
        tmp_json = self.dir / "labels.json.tmp"
        tmp_bin = self.dir / "labels.bin.tmp"
        save_labels(self.overlay, tmp_json, tmp_bin)
        os.replace(tmp_json, self.dir / "labels.json")
        os.replace(tmp_bin, self.dir / "labels.bin")
        _atomic_write(
            self.dir / "config.json",
            json.dumps(self.config.to_json(), indent=2).encode(),
            durable=durable,
        )
        _atomic_write(
            self.dir / "state.json",
            json.dumps({"version": self.version, "next_version": self._next_version}).encode(),
            durable=durable,
        )

    def _persist_cache(self) -> None:
        payload = {k: v.to_json() for k, v in self.cache.items()}
        _atomic_write(self.dir / "grounding_cache.json", json.dumps(payload).encode())

    def _append_journal(self, entry: JournalEntry) -> None:
        blob = entry.to_bytes()
        with open(self.dir / "journal.bin", "ab") as fh:
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)

    def _rewrite_journal(self) -> None:
        chunks = []
        for entry in self.journal.entries:
            blob = entry.to_bytes()
            chunks.append(struct.pack("<Q", len(blob)) + blob)
        _atomic_write(self.dir / "journal.bin", b"".join(chunks))

    def _record_timing(self, phase, prompt, timings, cache_hit, scorer_calls) -> None:
        row = {
            "ts": time.time(),
            "phase": phase,
            "prompt": prompt,
            "cache_hit": cache_hit,
            "scorer_calls": scorer_calls,
            **{k: v for k, v in timings.items() if isinstance(v, float)},
        }
        self.timings.append(row)
        with open(self.dir / "timings.jsonl", "a") as fh:
            fh.write(json.dumps(row) + "\n")


def _descriptor_command(command: EditCommand, descriptor: ObjectDescriptor) -> EditCommand:
    """Derived command grounding a bare descriptor with no spatial filter."""
    return EditCommand(
        op=command.op,
        target=descriptor,
        relation=Relation.NONE,
        references=[],
    )


def _bundle_scorer_calls(bundle: GroundingBundle) -> int:
    calls = bundle.primary.trace.scorer_calls
    if bundle.reference:
        calls += bundle.reference.trace.scorer_calls
    return calls


def _read_journal(path: Path) -> EditJournal:
    journal = EditJournal()
    if not path.exists():
        return journal
    blob = path.read_bytes()
    offset = 0
    while offset + 8 <= len(blob):
        (length,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        if offset + length > len(blob):
            log.warning("journal %s: truncated tail ignored", path)
            break
        journal.append(JournalEntry.from_bytes(blob[offset: offset + length]))
        offset += length
    return journal
