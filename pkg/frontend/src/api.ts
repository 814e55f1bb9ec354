/** Thin typed client for the chat service; fetch is injectable for tests. */

import type { ChatResponse, ReportResponse, VoteResponse } from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private fetchFn: FetchLike,
    private base = "",
  ) {}

  private async request<T>(method: string, path: string, payload?: object): Promise<T> {
    let response;
    try {
      response = await this.fetchFn(this.base + path, {
        method,
        headers: { "Content-Type": "application/json" },
        body: payload === undefined ? undefined : JSON.stringify(payload),
      });
    } catch {
      throw new ApiError("server unreachable", 0);
    }
    const body = (await response.json().catch(() => ({}))) as Record<string, unknown>;
    if (!response.ok) {
      const message = typeof body.error === "string" ? body.error : `HTTP ${response.status}`;
      throw new ApiError(message, response.status);
    }
    return body as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request("POST", "/session", {});
  }

  chat(sessionId: string, utterance: string): Promise<ChatResponse> {
    return this.request("POST", "/chat", { session_id: sessionId, utterance });
  }

  vote(lineId: string, winner: string): Promise<VoteResponse> {
    return this.request("POST", "/vote", { line_id: lineId, winner });
  }

  report(): Promise<ReportResponse> {
    return this.request("GET", "/report");
  }
}
