// Typed client for the service HTTP contract. fetch is injectable for tests.

import type { EventRecord, Metrics, PipelineState, WarningRecord } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly base: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchFn(this.base + path, init);
    const payload = await resp.json().catch(() => null);
    if (!resp.ok) {
      const detail =
        payload && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, detail);
    }
    return payload as T;
  }

  start(): Promise<PipelineState> {
    return this.json("POST", "/control/start");
  }

  stop(): Promise<PipelineState> {
    return this.json("POST", "/control/stop");
  }

  recordStart(): Promise<PipelineState> {
    return this.json("POST", "/control/record/start");
  }

  recordStop(): Promise<PipelineState> {
    return this.json("POST", "/control/record/stop");
  }

  warning(reason: string, eventSeq?: number): Promise<WarningRecord> {
    const body: Record<string, unknown> = { reason };
    if (eventSeq !== undefined) body.event_seq = eventSeq;
    return this.json("POST", "/control/warning", body);
  }

  latest(n: number): Promise<EventRecord[]> {
    return this.json("GET", `/detections/latest?n=${n}`);
  }

  vehicles(plate: string): Promise<EventRecord[]> {
    return this.json("GET", `/vehicles/${encodeURIComponent(plate)}`);
  }

  metrics(): Promise<Metrics> {
    return this.json("GET", "/metrics");
  }

  streamUrl(): string {
    return this.base + "/stream";
  }

  frameLatestUrl(): string {
    return this.base + "/frame/latest";
  }

  cropUrl(seq: number): string {
    return this.base + `/crops/${seq}`;
  }
}
