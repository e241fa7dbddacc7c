// REST client for the clustering service. All clustering semantics live
// server-side; this module only moves JSON and polls long solves.

import type {
  ClustersResponse,
  CurveResponse,
  FeedbackAccepted,
  FeedbackBatchWire,
  FeedbackRejected,
  IterateResponse,
  SampleSummary,
  StatusResponse,
} from "./wire.js";
import { normalizeBatch } from "./wire.js";

const DEFAULT_POLL_INTERVAL_MS = 300;
const DEFAULT_POLL_TIMEOUT_MS = 10 * 60 * 1000;

export class ApiError extends Error {
  readonly status: number;
  readonly ids: number[];

  constructor(status: number, message: string, ids: number[] = []) {
    super(message);
    this.status = status;
    this.ids = ids;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const payload = text ? JSON.parse(text) : {};
    if (!response.ok) {
      const detail = payload.detail ?? payload.error ?? response.statusText;
      const ids = Array.isArray(payload.ids) ? payload.ids : [];
      throw new ApiError(response.status, String(detail), ids);
    }
    return payload as T;
  }

  createSession(config: unknown): Promise<{ id: string; status: string }> {
    return this.request("POST", "/sessions", { config });
  }

  status(sessionId: string): Promise<StatusResponse> {
    return this.request("GET", `/sessions/${sessionId}/status`);
  }

  clusters(sessionId: string): Promise<ClustersResponse> {
    return this.request("GET", `/sessions/${sessionId}/clusters`);
  }

  sample(sessionId: string, sampleId: number): Promise<SampleSummary & { cluster: number }> {
    return this.request("GET", `/sessions/${sessionId}/samples/${sampleId}`);
  }

  /** Rejections (contradictory batches) resolve as FeedbackRejected rather
   * than throwing, so the board can highlight the offending cards. */
  async postFeedback(
    sessionId: string,
    batch: FeedbackBatchWire,
  ): Promise<FeedbackAccepted | FeedbackRejected> {
    try {
      return await this.request<FeedbackAccepted>(
        "POST",
        `/sessions/${sessionId}/feedback`,
        normalizeBatch(batch),
      );
    } catch (error) {
      if (error instanceof ApiError && error.status === 422 && error.ids.length > 0) {
        return { accepted: false, error: error.message, ids: error.ids };
      }
      throw error;
    }
  }

  iterate(sessionId: string): Promise<IterateResponse> {
    return this.request("POST", `/sessions/${sessionId}/iterate`);
  }

  curve(sessionId: string): Promise<CurveResponse> {
    return this.request("GET", `/sessions/${sessionId}/curve`);
  }

  /** Poll /status until the session leaves the "solving" state. */
  async pollUntilIdle(
    sessionId: string,
    options: {
      intervalMs?: number;
      timeoutMs?: number;
      onTick?: (status: StatusResponse) => void;
      sleep?: (ms: number) => Promise<void>;
    } = {},
  ): Promise<StatusResponse> {
    const intervalMs = options.intervalMs ?? DEFAULT_POLL_INTERVAL_MS;
    const timeoutMs = options.timeoutMs ?? DEFAULT_POLL_TIMEOUT_MS;
    const sleep =
      options.sleep ?? ((ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms)));
    const start = Date.now();
    for (;;) {
      const status = await this.status(sessionId);
      options.onTick?.(status);
      if (status.status === "idle") {
        return status;
      }
      if (status.status === "error") {
        throw new ApiError(500, status.error ?? "solve failed");
      }
      if (Date.now() - start > timeoutMs) {
        throw new ApiError(408, `solve still running after ${timeoutMs}ms`);
      }
      await sleep(intervalMs);
    }
  }
}
