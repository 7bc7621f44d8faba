// UI state machine. Holds no scene truth of its own: every count, color and
// history row comes from server responses. Exactly one edit request may be in
// flight at a time; grounding previews never mutate the session.

import { ApiClient } from "./api.js";
import { indicesInBox, parseSplats, type SplatBuffer } from "./splats.js";
import type {
  Box,
  CandidateJson,
  EditKnobs,
  GroundResponse,
  HistoryEntry,
  SceneMeta,
  TraceJson,
} from "./types.js";

export type Phase = "empty" | "loading" | "idle" | "preview" | "editing" | "error";

export interface PreviewState {
  prompt: string;
  winner: CandidateJson;
  ranked: CandidateJson[];
  roi: Box;
  trace: TraceJson;
  cacheHit: boolean;
}

export interface ControllerEvents {
  onChange?: (controller: AppController) => void;
  onError?: (message: string, stage: string) => void;
}

export class BusyError extends Error {
  constructor() {
    super("an edit is already in flight");
  }
}

export class AppController {
  phase: Phase = "empty";
  meta: SceneMeta | null = null;
  splats: SplatBuffer | null = null;
  history: HistoryEntry[] = [];
  preview: PreviewState | null = null;
  lastError: { message: string; stage: string } | null = null;

  private editInFlight = false;

  constructor(
    readonly api: ApiClient,
    private readonly events: ControllerEvents = {},
  ) {}

  get busy(): boolean {
    return this.editInFlight;
  }

  get canSubmit(): boolean {
    return this.phase === "idle" && !this.editInFlight;
  }

  get canConfirm(): boolean {
    return this.phase === "preview" && !this.editInFlight;
  }

  get canUndo(): boolean {
    return this.history.length > 0 && !this.editInFlight && this.phase !== "loading";
  }

  /** Splat indices tinted for the current grounding preview (ROI members). */
  highlightIndices(): Uint32Array {
    if (!this.preview || !this.splats) return new Uint32Array(0);
    return indicesInBox(this.splats.positions, this.preview.roi);
  }

  async loadScene(): Promise<void> {
    this.phase = "loading";
    this.emit();
    try {
      const [meta, raw, history] = await Promise.all([
        this.api.meta(),
        this.api.splats(),
        this.api.history(),
      ]);
      const splats = parseSplats(raw);
      if (splats.count !== meta.splat_count) {
        throw new Error(
          `splat buffer has ${splats.count} records but meta reports ${meta.splat_count}`,
        );
      }
      this.meta = meta;
      this.splats = splats;
      this.history = history;
      this.preview = null;
      this.phase = "idle";
      this.lastError = null;
    } catch (err) {
      this.fail(err);
      throw err;
    } finally {
      this.emit();
    }
  }

  /** Ground the prompt and stage a preview; the session is not mutated. */
  async submitPrompt(prompt: string): Promise<PreviewState> {
    if (this.editInFlight) throw new BusyError();
    if (!prompt.trim()) throw new Error("empty prompt");
    let response: GroundResponse;
    try {
      response = await this.api.ground(prompt);
    } catch (err) {
      this.fail(err);
      this.emit();
      throw err;
    }
    this.preview = {
      prompt,
      winner: response.primary.winner,
      ranked: response.primary.ranked,
      roi: response.primary.roi,
      trace: response.primary.trace,
      cacheHit: response.cache_hit,
    };
    this.phase = "preview";
    this.lastError = null;
    this.emit();
    return this.preview;
  }

  cancelPreview(): void {
    this.preview = null;
    if (this.phase === "preview") this.phase = "idle";
    this.emit();
  }

  /** Apply the previewed prompt. Rejects synchronously while one is pending. */
  async confirmEdit(knobs: EditKnobs = {}): Promise<void> {
    if (this.editInFlight) throw new BusyError();
    if (!this.preview) throw new Error("nothing to confirm: ground a prompt first");
    const prompt = this.preview.prompt;
    this.editInFlight = true;
    this.phase = "editing";
    this.emit();
    try {
      await this.api.edit(prompt, knobs);
      this.preview = null;
      await this.loadScene();
    } catch (err) {
      this.fail(err);
      throw err;
    } finally {
      this.editInFlight = false;
      this.emit();
    }
  }

  /** Revert the latest edit and refresh from the server. */
  async undoLast(): Promise<void> {
    if (this.editInFlight) throw new BusyError();
    this.editInFlight = true;
    this.phase = "editing";
    this.emit();
    try {
      await this.api.undo();
      await this.loadScene();
    } catch (err) {
      this.fail(err);
      throw err;
    } finally {
      this.editInFlight = false;
      this.emit();
    }
  }

  private fail(err: unknown): void {
    const stage = (err as { stage?: string }).stage ?? "ui";
    const message = err instanceof Error ? err.message : String(err);
    this.lastError = { message, stage };
    this.phase = this.splats ? "idle" : "error";
    this.events.onError?.(message, stage);
  }

  private emit(): void {
    this.events.onChange?.(this);
  }
}
