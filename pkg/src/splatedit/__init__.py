"""splatedit: prompt-driven editing of 3D Gaussian Splatting scenes.

Pipeline: instance labels -> open-vocabulary grounding (fully in 3D) ->
direct Gaussian edits inside the ROI, with a session cache that makes
repeated edits fast.
"""

from .editor import (
    AssetGaussians,
    EditJournal,
    EditKnobs,
    JournalEntry,
    add_object,
    load_asset,
    move_object,
    recolor_object,
    remove_object,
    replace_object,
    scale_asset,
    undo_entry,
)
from .errors import SplatEditError
from .grounding import (
    Candidate,
    EgocentricView,
    ExternalScorer,
    GroundingResult,
    LexicalScorer,
    ScorerContract,
    build_egocentric_view,
    find_candidates,
    ground,
    score_candidates,
)
from .prompt_parser import (
    EditCommand,
    ObjectDescriptor,
    OperationKind,
    Relation,
    lookup_color,
    parse_prompt,
)
from .session import EditOutcome, Session, SessionConfig
from .spatial_index import KdIndex, build_index, inpaint_background, knn_query, relabel_roi
from .splat_model import (
    Aabb,
    GaussianScene,
    GaussianSplat,
    InstanceRecord,
    SemanticOverlay,
    UNLABELED_ID,
    instance_aabb,
    load_labels,
    load_ply,
    save_ply,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "AssetGaussians",
    "Candidate",
    "EditCommand",
    "EditJournal",
    "EditKnobs",
    "EditOutcome",
    "EgocentricView",
    "ExternalScorer",
    "GaussianScene",
    "GaussianSplat",
    "GroundingResult",
    "InstanceRecord",
    "JournalEntry",
    "KdIndex",
    "LexicalScorer",
    "ObjectDescriptor",
    "OperationKind",
    "Relation",
    "ScorerContract",
    "SemanticOverlay",
    "Session",
    "SessionConfig",
    "SplatEditError",
    "UNLABELED_ID",
    "add_object",
    "build_egocentric_view",
    "build_index",
    "find_candidates",
    "ground",
    "inpaint_background",
    "instance_aabb",
    "knn_query",
    "load_asset",
    "load_labels",
    "load_ply",
    "lookup_color",
    "move_object",
    "parse_prompt",
    "recolor_object",
    "relabel_roi",
    "remove_object",
    "replace_object",
    "save_ply",
    "scale_asset",
    "score_candidates",
    "undo_entry",
]
