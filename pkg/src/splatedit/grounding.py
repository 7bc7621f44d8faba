"""Open-vocabulary object grounding.

Pipeline per prompt: class filter -> view-dependent relation filter (2D
egocentric projection from the scene center) -> language-object scoring. The
winner's axis-aligned box is the ROI all edits are confined to.
"""

from __future__ import annotations

import base64
import logging
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import AmbiguousRelationError, NoMatchError
from .prompt_parser import (
    EditCommand,
    ObjectDescriptor,
    Relation,
    STOPWORDS,
    color_table,
    descriptor_matches,
    parse_prompt,
)
from .splat_model import Aabb, GaussianScene, SemanticOverlay, SH_C0, UNLABELED_ID

log = logging.getLogger(__name__)

UP_AXES = {"z": np.array([0.0, 0.0, 1.0]), "y": np.array([0.0, 1.0, 0.0])}

DEFAULT_MARGIN_RATIO = 0.02


@dataclass
class Candidate:
    """One labeled instance with the geometry grounding needs."""

    instance_id: int
    class_name: str
    aabb: Aabb
    centroid: np.ndarray            # (3,) float64
    mean_color: np.ndarray          # (3,) in [0,1], mean of clamp(sh_dc*C0 + 0.5)
    member_count: int
    score: float | None = None

    def summary(self, relation_satisfied: bool) -> dict:
        """Scorer context: what a language-object scorer may look at."""
        name, _ = color_table().nearest_name(self.mean_color)
        return {
            "instance_id": self.instance_id,
            "class_name": self.class_name,
            "mean_color": [float(v) for v in self.mean_color],
            "color_name": name,
            "aabb_dims": [float(v) for v in self.aabb.size],
            "relation_satisfied": relation_satisfied,
        }

    def to_json(self) -> dict:
        return {
            "id": self.instance_id,
            "class": self.class_name,
            "aabb": self.aabb.to_json(),
            "centroid": self.centroid.tolist(),
            "mean_color": [float(v) for v in self.mean_color],
            "member_count": self.member_count,
            "score": self.score,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Candidate":
        return cls(
            instance_id=d["id"],
            class_name=d["class"],
            aabb=Aabb.from_json(d["aabb"]),
            centroid=np.array(d["centroid"], dtype=np.float64),
            mean_color=np.array(d["mean_color"], dtype=np.float64),
            member_count=d["member_count"],
            score=d["score"],
        )


class ScorerContract(Protocol):
    """Rates prompt/candidate compatibility; higher is better. Scores are
    comparable only within one grounding invocation."""

    def score(self, prompt: str, context: dict) -> float: ...


def extract_candidates(scene: GaussianScene, overlay: SemanticOverlay) -> list[Candidate]:
    """Geometry summaries for every instance with at least one member,
    ordered by instance id."""
    assignment = overlay.assignment
    order = np.argsort(assignment, kind="stable")
    sorted_ids = assignment[order]
    unique, starts, counts = np.unique(sorted_ids, return_index=True, return_counts=True)
    out: list[Candidate] = []
    for uid, start, count in zip(unique.tolist(), starts.tolist(), counts.tolist()):
        if uid == UNLABELED_ID or uid not in overlay.instances:
            continue
        idx = order[start:start + count]
        pos = scene.positions[idx].astype(np.float64)
        colors = np.clip(scene.sh_dc[idx].astype(np.float64) * SH_C0 + 0.5, 0.0, 1.0)
        out.append(
            Candidate(
                instance_id=uid,
                class_name=overlay.instances[uid].class_name,
                aabb=Aabb(pos.min(axis=0), pos.max(axis=0)),
                centroid=pos.mean(axis=0),
                mean_color=colors.mean(axis=0),
                member_count=count,
            )
        )
    return out


def find_candidates(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    descriptor: ObjectDescriptor,
    pool: list[Candidate] | None = None,
) -> list[Candidate]:
    """Instances whose class contains all descriptor tokens (case-insensitive).

    A color attribute never filters here; it only participates in scoring.
    """
    if pool is None:
        pool = extract_candidates(scene, overlay)
    return [c for c in pool if descriptor_matches(descriptor, c.class_name)]


@dataclass(frozen=True)
class EgocentricView:
    """Virtual viewer at the scene center with an orthonormal screen basis.

    right = forward x up (normalized), screen_up = right x forward; the frame
    (right, screen_up, toward-viewer) is right-handed. Predicates read
    orthographic screen coordinates off this basis.
    """

    eye: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    right: np.ndarray
    screen_up: np.ndarray

    def sx(self, p: np.ndarray) -> float:
        return float(np.dot(p - self.eye, self.right))

    def sy(self, p: np.ndarray) -> float:
        return float(np.dot(p - self.eye, self.screen_up))

    def depth(self, p: np.ndarray) -> float:
        return float(np.dot(p - self.eye, self.forward))

    def g(self, p: np.ndarray) -> float:
        """Gravity height (world coordinate along the up axis)."""
        return float(np.dot(p, self.up))

    def screen(self, p: np.ndarray) -> np.ndarray:
        return np.array([self.sx(p), self.sy(p)])


def build_egocentric_view(
    scene: GaussianScene,
    candidates: list[Candidate],
    references: list[Candidate],
    up_axis: str = "z",
) -> EgocentricView:
    """Viewer at the scene-bounds center looking toward the mean centroid of
    candidates and references. A forward parallel to up is tilted 1e-3 rad
    toward +x to keep the basis well defined."""
    up = UP_AXES[up_axis]
    eye = scene.bounds.center
    pts = [c.centroid for c in candidates] + [r.centroid for r in references]
    forward = np.mean(pts, axis=0) - eye if pts else np.array([1.0, 0.0, 0.0])
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        forward = np.array([1.0, 0.0, 0.0])
    else:
        forward = forward / norm
    if np.linalg.norm(np.cross(forward, up)) < 1e-6:
        tilt = 1e-3
        forward = forward * math.cos(tilt) + np.array([1.0, 0.0, 0.0]) * math.sin(tilt)
        forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    screen_up = np.cross(right, forward)
    return EgocentricView(eye=eye, forward=forward, up=up, right=right, screen_up=screen_up)


def _support(aabb: Aabb, direction: np.ndarray) -> tuple[float, float]:
    """Extent interval of the box along an arbitrary unit direction."""
    proj = aabb.corners() @ direction
    return float(proj.min()), float(proj.max())


def _lateral_overlap(a: Aabb, b: Aabb, up: np.ndarray) -> float:
    """Smallest per-axis overlap of the two boxes in the plane normal to up
    (up is axis-aligned). >= 0 means the footprints touch or intersect."""
    lateral = [i for i in range(3) if up[i] == 0.0]
    spans = [
        min(a.max[i], b.max[i]) - max(a.min[i], b.min[i])
        for i in lateral
    ]
    return min(spans)


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns CCW hull vertices (collinear dropped)."""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return np.array(pts)

    def half(seq):
        out: list[tuple] = []
        for p in seq:
            while len(out) >= 2:
                ox, oy = out[-2]
                ax, ay = out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    return np.array(hull if hull else pts[:1])


def _point_to_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = min(1.0, max(0.0, float(np.dot(p - a, ab)) / denom))
    return float(np.linalg.norm(p - (a + t * ab)))


def _inside_hull(p: np.ndarray, ref_points: np.ndarray, margin: float) -> bool:
    """Screen point inside the convex hull of the reference screen points.

    A degenerate hull (<= 2 effective points) thickens to a segment of
    half-width ``margin``.
    """
    hull = _convex_hull_2d(ref_points)
    if len(hull) == 1:
        return float(np.linalg.norm(p - hull[0])) <= margin
    if len(hull) == 2:
        return _point_to_segment_distance(p, hull[0], hull[1]) <= margin
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            return False
    return True


def apply_relation_filter(
    view: EgocentricView,
    candidates: list[Candidate],
    relation: Relation,
    reference_groups: list[list[Candidate]],
    margin: float,
) -> list[Candidate]:
    """Keep candidates satisfying the view-dependent relation.

    ``reference_groups`` holds the matching instances of each reference
    descriptor; a candidate must satisfy the predicate against at least one
    instance of every group. Middle pools all reference instances into one
    hull and needs at least two of them.
    """
    flat = [r for group in reference_groups for r in group]

    if relation is Relation.MIDDLE:
        if len(flat) < 2:
            raise AmbiguousRelationError(
                f"'middle' needs >= 2 reference instances, found {len(flat)}"
            )
        ref_screen = np.array([view.screen(r.centroid) for r in flat])
        return [c for c in candidates if _inside_hull(view.screen(c.centroid), ref_screen, margin)]

    if relation in (Relation.CLOSE, Relation.FAR_AWAY):
        pair = [
            float(np.linalg.norm(c.centroid - r.centroid))
            for c in candidates
            for r in flat
        ]
        if not pair:
            return []
        median = float(np.median(pair))
        survivors = []
        for c in candidates:
            d = min(float(np.linalg.norm(c.centroid - r.centroid)) for r in flat)
            keep = d <= median if relation is Relation.CLOSE else d > median
            if keep:
                survivors.append(c)
        return survivors

    def predicate(c: Candidate, r: Candidate) -> bool:
        if relation is Relation.LEFT:
            return view.sx(c.centroid) < view.sx(r.centroid) - margin
        if relation is Relation.RIGHT:
            return view.sx(c.centroid) > view.sx(r.centroid) + margin
        if relation is Relation.ABOVE:
            _, r_gmax = _support(r.aabb, view.up)
            return view.g(c.centroid) > r_gmax and _lateral_overlap(c.aabb, r.aabb, view.up) >= 0
        if relation in (Relation.UNDER, Relation.BELOW):
            r_gmin, _ = _support(r.aabb, view.up)
            return view.g(c.centroid) < r_gmin
        if relation is Relation.ON:
            _, r_gmax = _support(r.aabb, view.up)
            c_gmin, _ = _support(c.aabb, view.up)
            above = view.g(c.centroid) > r_gmax and _lateral_overlap(c.aabb, r.aabb, view.up) >= 0
            return above and (c_gmin - r_gmax) <= margin
        if relation is Relation.FRONT:
            return view.depth(c.centroid) < view.depth(r.centroid) - margin
        if relation is Relation.BACK:
            return view.depth(c.centroid) > view.depth(r.centroid) + margin
        raise ValueError(f"unsupported relation {relation}")

    survivors = []
    for c in candidates:
        ok = all(
            any(predicate(c, r) for r in group if r.instance_id != c.instance_id)
            for group in reference_groups
        )
        if ok and reference_groups:
            survivors.append(c)
    return survivors


@dataclass
class GroundingTrace:
    """Per-stage record of the grounding pipeline, for UI display."""

    prompt: str
    stages: list[dict] = field(default_factory=list)
    scorer_calls: int = 0
    cache_hit: bool = False

    def add(self, name: str, survivors: list[Candidate], note: str = "") -> None:
        self.stages.append(
            {
                "stage": name,
                "survivors": [c.instance_id for c in survivors],
                **({"note": note} if note else {}),
            }
        )

    @property
    def empty_stage(self) -> str | None:
        for s in self.stages:
            if not s["survivors"]:
                return s["stage"]
        return None

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "stages": self.stages,
            "scorer_calls": self.scorer_calls,
            "cache_hit": self.cache_hit,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GroundingTrace":
        return cls(
            prompt=d["prompt"],
            stages=list(d["stages"]),
            scorer_calls=d["scorer_calls"],
            cache_hit=d["cache_hit"],
        )


@dataclass
class GroundingResult:
    """Winner plus the full ranking; roi is the winner's box."""

    winner: Candidate
    ranked: list[Candidate]
    roi: Aabb
    trace: GroundingTrace

    def to_json(self) -> dict:
        return {
            "winner": self.winner.to_json(),
            "ranked": [c.to_json() for c in self.ranked],
            "roi": self.roi.to_json(),
            "trace": self.trace.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "GroundingResult":
        return cls(
            winner=Candidate.from_json(d["winner"]),
            ranked=[Candidate.from_json(c) for c in d["ranked"]],
            roi=Aabb.from_json(d["roi"]),
            trace=GroundingTrace.from_json(d["trace"]),
        )


def score_candidates(
    scorer: ScorerContract,
    prompt: str,
    survivors: list[Candidate],
    trace: GroundingTrace | None = None,
    relation_satisfied: bool = False,
) -> GroundingResult:
    """Rank survivors with the scorer; winner is the argmax, ties resolve to
    the lower instance id."""
    trace = trace or GroundingTrace(prompt=prompt)
    if not survivors:
        raise NoMatchError(
            f"no candidate matches {prompt!r} "
            f"(emptied at stage: {trace.empty_stage or 'class_filter'})",
            trace=trace,
        )
    scored = []
    for c in survivors:
        value = float(scorer.score(prompt, c.summary(relation_satisfied)))
        trace.scorer_calls += 1
        scored.append((value, c))
    for value, c in scored:
        c.score = value
    ranked = [c for _, c in sorted(scored, key=lambda t: (-t[0], t[1].instance_id))]
    winner = ranked[0]
    trace.add("scorer", ranked, note=f"{trace.scorer_calls} scorer calls")
    return GroundingResult(winner=winner, ranked=ranked, roi=winner.aabb, trace=trace)


def ground(
    scene: GaussianScene,
    overlay: SemanticOverlay,
    command: EditCommand,
    scorer: ScorerContract,
    prompt: str | None = None,
    up_axis: str = "z",
    margin_ratio: float = DEFAULT_MARGIN_RATIO,
) -> GroundingResult:
    """Full grounding pass for the command's target descriptor.

    Stages: class filter, then the relation filter when the command carries a
    relation with resolvable references (otherwise spatial interpretation is
    bypassed), then scoring. ``prompt`` is what the scorer sees; it defaults
    to a reconstruction of the command.
    """
    trace = GroundingTrace(prompt if prompt is not None else prompt_of(command))
    pool = extract_candidates(scene, overlay)
    descriptor = command.target
    matched = find_candidates(scene, overlay, descriptor, pool=pool)
    trace.add("class_filter", matched, note=f"class={descriptor.class_name!r}")

    survivors = matched
    relation_applied = False
    if command.relation is not Relation.NONE and command.references and matched:
        groups = [find_candidates(scene, overlay, ref, pool=pool) for ref in command.references]
        if any(not g for g in groups):
            missing = [r.class_name for r, g in zip(command.references, groups) if not g]
            survivors = []
            trace.add("relation_filter", survivors, note=f"reference not found: {missing}")
        else:
            view = build_egocentric_view(scene, matched, [r for g in groups for r in g], up_axis)
            margin = margin_ratio * scene.bounds.diagonal
            survivors = apply_relation_filter(view, matched, command.relation, groups, margin)
            relation_applied = True
            trace.add("relation_filter", survivors, note=f"relation={command.relation.value}")

    return score_candidates(scorer, trace.prompt, survivors, trace=trace,
                            relation_satisfied=relation_applied)


def prompt_of(command: EditCommand) -> str:
    """Readable reconstruction of the command for traces and scorers."""
    parts = [command.op.value, _descr_text(command.target)]
    if command.relation is not Relation.NONE:
        parts.append(command.relation.value)
    for ref in command.references:
        parts.append(_descr_text(ref))
    if command.color_name:
        parts.append(f"to {command.color_name}")
    return " ".join(parts)


def _descr_text(d: ObjectDescriptor) -> str:
    return f"{d.color_attr} {d.class_name}" if d.color_attr else d.class_name


# --- scorers ----------------------------------------------------------------


class LexicalScorer:
    """Deterministic offline scorer.

    score = 2 * (fraction of prompt class tokens present in the candidate
    class) + 1 * (candidate mean color within ``color_threshold`` of the
    prompt color) + 0.25 * (relation flags satisfied).
    """

    def __init__(self, color_threshold: float = 0.35):
        self.color_threshold = color_threshold
        self.call_count = 0

    def _target_of(self, prompt: str) -> ObjectDescriptor:
        try:
            return parse_prompt(prompt).target
        except Exception:
            words = [
                t for t in prompt.lower().split()
                if t not in STOPWORDS and t.isalpha()
            ]
            table = color_table()
            color = None
            lead = table.match_leading(words)
            if lead is not None and len(words) > lead[1]:
                color, n = lead
                words = words[n:]
            return ObjectDescriptor(class_name=" ".join(words) or prompt, color_attr=color)

    def score(self, prompt: str, context: dict) -> float:
        self.call_count += 1
        target = self._target_of(prompt)
        class_tokens = target.class_tokens
        cand_tokens = context["class_name"].split()
        matched = sum(
            1 for t in class_tokens
            if any(t == c or t.rstrip("s") == c.rstrip("s") for c in cand_tokens)
        )
        fraction = matched / len(class_tokens) if class_tokens else 0.0
        value = 2.0 * fraction
        if target.color_attr is not None:
            want = np.array(color_table().lookup(target.color_attr))
            have = np.array(context["mean_color"])
            if float(np.linalg.norm(want - have)) <= self.color_threshold:
                value += 1.0
        if context.get("relation_satisfied"):
            value += 0.25
        return value


class ExternalScorer:
    """HTTP scorer client: POST /score with the prompt and an optional
    candidate preview; falls back to the lexical scorer on timeout/errors."""

    def __init__(self, url: str, timeout: float = 2.0,
                 fallback: LexicalScorer | None = None,
                 preview_provider=None):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.fallback = fallback or LexicalScorer()
        self.preview_provider = preview_provider
        self.call_count = 0

    def score(self, prompt: str, context: dict) -> float:
        import requests

        self.call_count += 1
        png = b""
        if self.preview_provider is not None:
            try:
                png = self.preview_provider(context)
            except Exception:
                log.warning("preview provider failed; sending empty image")
        payload = {
            "prompt": prompt,
            "image_png_b64": base64.b64encode(png).decode("ascii"),
            "meta": {k: v for k, v in context.items() if k != "preview"},
        }
        try:
            resp = requests.post(self.url + "/score", json=payload, timeout=self.timeout)
            resp.raise_for_status()
            return float(resp.json()["score"])
        except Exception as exc:
            log.warning("external scorer failed (%s); falling back to lexical", exc)
            return self.fallback.score(prompt, context)
