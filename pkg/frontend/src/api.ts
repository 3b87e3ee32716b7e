/**
 * Typed client for the query service. The console talks to the server
 * through exactly three endpoints; everything else is client-side.
 */

import type { Diagnostic } from "./lexer.js";

export interface TablePayload {
  columns: string[];
  rows: (string | number | boolean | null)[][];
  truncated: boolean;
}

export interface PatternStats {
  alias: string;
  estimated: number;
  scanned: number;
  matched: number;
}

export interface QueryStats {
  planning_ms: number;
  execution_ms: number;
  per_pattern: PatternStats[];
}

/** Exactly one of `table` / `diagnostics` is present, keyed by `ok`. */
export interface QueryResponse {
  ok: boolean;
  table?: TablePayload;
  diagnostics?: Diagnostic[];
  stats?: QueryStats;
  plan?: unknown;
}

export interface CheckResponse {
  diagnostics: Diagnostic[];
}

export interface StoreStats {
  event_count: number;
  entity_count: number;
  partition_count: number;
  entities_by_kind: Record<string, number>;
  agents: number[];
}

export interface QueryOptions {
  explain_only?: boolean;
  max_rows?: number;
}

export interface Transport {
  check(query: string): Promise<CheckResponse>;
  query(query: string, options?: QueryOptions): Promise<QueryResponse>;
  stats(): Promise<StoreStats>;
}

export class HttpError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "HttpError";
  }
}

export class HttpTransport implements Transport {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new HttpError(resp.status, `${path} failed with status ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  check(query: string): Promise<CheckResponse> {
    return this.post<CheckResponse>("/api/check", { query });
  }

  query(query: string, options?: QueryOptions): Promise<QueryResponse> {
    const body: Record<string, unknown> = { query };
    if (options !== undefined) {
      body["options"] = options;
    }
    return this.post<QueryResponse>("/api/query", body);
  }

  async stats(): Promise<StoreStats> {
    const resp = await this.fetchFn(this.base + "/api/stats");
    if (!resp.ok) {
      throw new HttpError(resp.status, `/api/stats failed with status ${resp.status}`);
    }
    return (await resp.json()) as StoreStats;
  }
}
