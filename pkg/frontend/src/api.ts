// Client for the /v1 inference endpoints. The UI talks only this wire format.

import type { Stroke3 } from "./strokes.js";

export interface CompletionWire {
  strokes: Stroke3[];
  svg: string;
  stop_reason: string;
}

export interface CompleteResponse {
  completions: CompletionWire[];
  prefix_token_count: number;
  seed: number;
}

export interface ClassifyResponse {
  topk: { class: string; probability: number }[];
  k: number;
}

export interface HealthResponse {
  status: string;
  loaded_checkpoints: string[];
  versions: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async complete(body: {
    class: string;
    strokes: Stroke3[];
    num_samples: number;
    temperature: number;
    seed?: number;
  }): Promise<CompleteResponse> {
    const response = await fetch(`${this.baseUrl}/v1/complete`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<CompleteResponse>(response);
  }

  async classify(strokes: Stroke3[]): Promise<ClassifyResponse> {
    const response = await fetch(`${this.baseUrl}/v1/classify`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ strokes }),
    });
    return parseOrThrow<ClassifyResponse>(response);
  }

  async health(): Promise<HealthResponse> {
    const response = await fetch(`${this.baseUrl}/v1/health`);
    return parseOrThrow<HealthResponse>(response);
  }
}
