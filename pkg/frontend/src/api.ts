/**
 * Typed client for the /v1 screening-session API.
 *
 * The anonymous pool type deliberately has no outcome or membership fields:
 * the dashboard can only ever see what the server's filtration view exposes,
 * and the compiler keeps it that way.
 */

export interface PoolEntry {
  handle: string;
  x: number[];
}

export interface ScreenedRecord {
  handle: string;
  x: number[];
  membership: 0 | 1;
  outcome: number | null;
  is_null: boolean | null;
}

export interface NonNullRecord {
  handle: string;
  x: number[];
  y: number;
}

export interface ViewPayload {
  step: number;
  alpha: number;
  k: number;
  n: number;
  m: number;
  count_null_labeled: number;
  count_test: number;
  screened: ScreenedRecord[];
  revealed_nonnull_labeled: NonNullRecord[];
  anonymous_pool: PoolEntry[];
}

export interface AuditEntry {
  step: number;
  event: string;
  payload: Record<string, unknown>;
}

export interface SessionState {
  id: string;
  status: "running" | "stopped" | "exhausted";
  step: number;
  alpha: number;
  k: number;
  n: number;
  m: number;
  policy: string;
  fdp_estimate: number;
  count_null_labeled: number;
  count_test: number;
  trajectory: [number, number][];
  audit_tail: AuditEntry[];
  view?: ViewPayload;
  selection?: number[];
}

export interface SelectionResult {
  selected: number[];
  T: number;
  alpha: number;
  seed: number;
  trajectory: [number, number][];
  audit: AuditEntry[];
}

export interface WhatIfPreview {
  lambda: number;
  order: string[];
}

export interface CreateSessionRequest {
  sim?: { setting: number; n: number; m: number; sigma: number; seed: number };
  csv?: string;
  k: number;
  alpha: number;
  seed: number;
  policy: string;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${base}${path}`, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail = typeof body === "object" && body !== null && "detail" in body
      ? String((body as { detail: unknown }).detail)
      : response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class SessionApi {
  constructor(private base: string) {}

  create(req: CreateSessionRequest): Promise<{ id: string; status: string; step: number }> {
    return request(this.base, "/v1/sessions", { method: "POST", body: JSON.stringify(req) });
  }

  state(id: string): Promise<SessionState> {
    return request(this.base, `/v1/sessions/${id}/state`);
  }

  advance(id: string, steps: number): Promise<{ status: string; step: number; performed: number; fdp_estimate: number }> {
    return request(this.base, `/v1/sessions/${id}/advance`, {
      method: "POST",
      body: JSON.stringify({ steps }),
    });
  }

  setPolicy(id: string, spec: string): Promise<{ status: string; policy: string }> {
    return request(this.base, `/v1/sessions/${id}/policy`, {
      method: "POST",
      body: JSON.stringify({ spec }),
    });
  }

  setLambda(id: string, lam: number): Promise<{ status: string; policy: string }> {
    return request(this.base, `/v1/sessions/${id}/policy`, {
      method: "POST",
      body: JSON.stringify({ lam }),
    });
  }

  injectLabel(id: string, handle: string, y: number): Promise<{ status: string; handle: string }> {
    return request(this.base, `/v1/sessions/${id}/labels`, {
      method: "POST",
      body: JSON.stringify({ handle, y }),
    });
  }

  whatIf(id: string, lambdas: number[]): Promise<{ step: number; previews: WhatIfPreview[] }> {
    return request(this.base, `/v1/sessions/${id}/whatif`, {
      method: "POST",
      body: JSON.stringify({ lambdas }),
    });
  }

  finalize(id: string): Promise<SelectionResult> {
    return request(this.base, `/v1/sessions/${id}/finalize`, { method: "POST" });
  }

  events(id: string): Promise<{ id: string; events: { kind: string; payload: Record<string, unknown>; step: number }[] }> {
    return request(this.base, `/v1/sessions/${id}/events`);
  }
}

/** Serialises user mutations so they reach the server one at a time. */
export class ActionQueue {
  private tail: Promise<unknown> = Promise.resolve();

  enqueue<T>(action: () => Promise<T>): Promise<T> {
    const next = this.tail.then(action, action);
    this.tail = next.catch(() => undefined);
    return next;
  }
}
