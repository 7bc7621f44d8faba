// Typed client for the splatedit HTTP API. The fetch implementation is
// injectable so tests can run against mocks or a live server alike.

import type {
  ApiErrorBody,
  EditKnobs,
  EditResponse,
  GroundResponse,
  HistoryEntry,
  SceneMeta,
  UndoResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly stage: string;
  readonly kind: string;
  readonly body: ApiErrorBody | null;

  constructor(message: string, stage: string, kind: string, body: ApiErrorBody | null = null) {
    super(message);
    this.stage = stage;
    this.kind = kind;
    this.body = body;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`cannot reach ${this.baseUrl}: ${String(err)}`, "network", "NetworkError");
    }
    if (!response.ok) {
      let body: ApiErrorBody | null = null;
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body
      }
      throw new ApiError(
        body?.error ?? `${response.status} on ${path}`,
        body?.stage ?? "server",
        body?.type ?? `HTTP${response.status}`,
        body,
      );
    }
    return response;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    return (await response.json()) as T;
  }

  meta(): Promise<SceneMeta> {
    return this.json<SceneMeta>("/scene/meta");
  }

  async splats(): Promise<ArrayBuffer> {
    const response = await this.request("/scene/splats");
    return response.arrayBuffer();
  }

  ground(prompt: string): Promise<GroundResponse> {
    return this.json<GroundResponse>("/ground", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ prompt }),
    });
  }

  edit(prompt: string, knobs: EditKnobs = {}): Promise<EditResponse> {
    return this.json<EditResponse>("/edit", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ prompt, ...knobs }),
    });
  }

  undo(): Promise<UndoResponse> {
    return this.json<UndoResponse>("/undo", { method: "POST" });
  }

  history(): Promise<HistoryEntry[]> {
    return this.json<HistoryEntry[]>("/history");
  }

  previewUrl(params: { azimuth?: number; elevation?: number; cropId?: number } = {}): string {
    const query = new URLSearchParams();
    if (params.azimuth !== undefined) query.set("azimuth", String(params.azimuth));
    if (params.elevation !== undefined) query.set("elevation", String(params.elevation));
    if (params.cropId !== undefined) query.set("crop_id", String(params.cropId));
    const suffix = query.toString();
    return `${this.baseUrl}/preview.png${suffix ? "?" + suffix : ""}`;
  }
}
