// Thin typed client over the /v1 JSON API.

import type {
  ApiErrorBody,
  SessionConfigPayload,
  SessionListEntry,
  SessionView,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field?: string;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.field = body.field;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let body: ApiErrorBody;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = { code: "http_error", message: `request failed (${response.status})` };
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

export async function createSession(
  base: string,
  payload: SessionConfigPayload,
): Promise<SessionView> {
  return request<SessionView>(`${base}/v1/sessions`, {
    method: "POST",
    body: JSON.stringify(payload),
  });
}

export async function getState(base: string, sessionId: string): Promise<SessionView> {
  return request<SessionView>(`${base}/v1/sessions/${sessionId}`);
}

export async function submitResults(
  base: string,
  sessionId: string,
  results: number[],
): Promise<SessionView> {
  return request<SessionView>(`${base}/v1/sessions/${sessionId}/results`, {
    method: "POST",
    body: JSON.stringify({ results }),
  });
}

export async function abortSession(base: string, sessionId: string): Promise<SessionView> {
  return request<SessionView>(`${base}/v1/sessions/${sessionId}/abort`, {
    method: "POST",
  });
}

export async function listSessions(base: string): Promise<SessionListEntry[]> {
  const body = await request<{ sessions: SessionListEntry[] }>(`${base}/v1/sessions`);
  return body.sessions;
}

export async function fetchTranscript(base: string, sessionId: string): Promise<string> {
  const response = await fetch(`${base}/v1/sessions/${sessionId}/transcript`);
  if (!response.ok) {
    throw new ApiError(response.status, {
      code: "http_error",
      message: `transcript fetch failed (${response.status})`,
    });
  }
  return await response.text();
}
