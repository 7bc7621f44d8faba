// Payload shapes of the splatedit HTTP API.

export interface Box {
  min: number[];
  max: number[];
}

export interface InstanceInfo {
  id: number;
  class: string;
  confidence: number;
  member_count: number;
}

export interface SceneMeta {
  splat_count: number;
  bounds: Box;
  version: number;
  instances: InstanceInfo[];
}

export interface CandidateJson {
  id: number;
  class: string;
  aabb: Box;
  centroid: number[];
  mean_color: number[];
  member_count: number;
  score: number | null;
}

export interface TraceStage {
  stage: string;
  survivors: number[];
  note?: string;
}

export interface TraceJson {
  prompt: string;
  stages: TraceStage[];
  scorer_calls: number;
  cache_hit: boolean;
}

export interface GroundingResultJson {
  winner: CandidateJson;
  ranked: CandidateJson[];
  roi: Box;
  trace: TraceJson;
}

export interface GroundResponse {
  cache_hit: boolean;
  primary: GroundingResultJson;
  reference: GroundingResultJson | null;
}

export interface HistoryEntry {
  journal_id: number;
  op: string;
  prompt: string | null;
  timestamp: number;
  relabeled: number;
  modified: number;
  deleted: number;
  added: number;
}

export interface EditKnobs {
  kappa?: number;
  step_ratio?: number;
  max_move_ratio?: number;
  inpaint?: boolean;
  keep_sh_rest?: boolean;
  knn_k?: number;
}

export interface EditResponse {
  journal_id: number;
  timings: Record<string, number | boolean>;
  entry: Omit<HistoryEntry, "journal_id">;
  grounding: { primary: GroundingResultJson; reference: GroundingResultJson | null };
}

export interface UndoResponse {
  undone: Omit<HistoryEntry, "journal_id">;
  journal_length: number;
}

export interface ApiErrorBody {
  error: string;
  stage: string;
  type: string;
  trace?: TraceJson;
}
