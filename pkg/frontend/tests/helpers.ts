// Shared test scaffolding: a scripted fake stream body and a stubbed service.

import type { EventRecord, Metrics, PipelineState, PipelineStateName } from "../src/types.js";

export class FakeBody {
  private chunks: Uint8Array[] = [];
  private waiter: (() => void) | null = null;
  private done = false;

  push(text: string): void {
    this.chunks.push(new TextEncoder().encode(text));
    this.waiter?.();
  }

  end(): void {
    this.done = true;
    this.waiter?.();
  }

  getReader() {
    return {
      read: async (): Promise<{ done: boolean; value?: Uint8Array }> => {
        for (;;) {
          const value = this.chunks.shift();
          if (value) return { done: false, value };
          if (this.done) return { done: true };
          await new Promise<void>((resolve) => {
            this.waiter = resolve;
          });
          this.waiter = null;
        }
      },
      releaseLock: () => undefined,
      cancel: async () => undefined,
    };
  }
}

export function streamResponse(body: FakeBody): Response {
  return { ok: true, status: 200, body } as unknown as Response;
}

export function jsonResponse(payload: unknown, status = 200): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => payload,
  } as unknown as Response;
}

export function pipelineState(state: PipelineStateName): PipelineState {
  return {
    state,
    started_at: state === "idle" ? null : 1000,
    fps: state === "idle" ? 0 : 24.5,
    frames_processed: 10,
    frames_dropped: 0,
    last_error: null,
  };
}

export function metricsAt(state: PipelineStateName): Metrics {
  return { fps: 24.5, frames_in: 10, frames_dropped: 0, events_total: 3, state };
}

export function detection(seq: number, plate = "ঢাকা মেট্রো গ ১২-৩৪৫৬"): EventRecord {
  return {
    seq,
    frame_index: seq - 1,
    timestamp_ms: (seq - 1) * 33.333,
    vehicle_class: { label: "bus", score: 0.9, scores: [0.9, 0.05, 0.03, 0.02] },
    plate_rect: { x: 24, y: 20, width: 16, height: 8 },
    detector_score: 0.9,
    raw_text: plate,
    normalized_text: plate,
    ocr_ms: 5.0,
    ocr_timed_out: false,
    ocr_error: "",
    crop_ref: `crops/${String(seq).padStart(6, "0")}.pgm`,
  };
}

export interface StubCall {
  method: string;
  url: string;
  body: unknown;
}

/** Routes ApiClient calls to canned responses and records every call. */
export class StubService {
  calls: StubCall[] = [];
  state: PipelineStateName = "idle";
  vehicles: Record<string, EventRecord[]> = {};
  latestRecords: EventRecord[] = [];

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, url, body });
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/control/start") {
      this.state = this.state === "idle" ? "running" : this.state;
      return jsonResponse(pipelineState(this.state));
    }
    if (path === "/control/stop") {
      this.state = "idle";
      return jsonResponse(pipelineState(this.state));
    }
    if (path === "/control/record/start") {
      if (this.state === "idle") return jsonResponse({ error: "cannot record while idle" }, 409);
      this.state = "recording+running";
      return jsonResponse(pipelineState(this.state));
    }
    if (path === "/control/record/stop") {
      if (this.state === "recording+running") this.state = "running";
      return jsonResponse(pipelineState(this.state));
    }
    if (path === "/control/warning") {
      return jsonResponse({ timestamp_ms: 1, event_seq: body?.event_seq ?? null,
                            reason: body?.reason ?? "" });
    }
    if (path === "/metrics") {
      return jsonResponse(metricsAt(this.state));
    }
    if (path.startsWith("/detections/latest")) {
      return jsonResponse(this.latestRecords);
    }
    if (path.startsWith("/vehicles/")) {
      const plate = decodeURIComponent(path.slice("/vehicles/".length));
      return jsonResponse(this.vehicles[plate] ?? []);
    }
    return jsonResponse({ error: `no stub for ${path}` }, 404);
  };

  callsTo(path: string): StubCall[] {
    return this.calls.filter((c) => c.url.endsWith(path));
  }
}
