// Console state container: single source of truth the UI renders from.

import type {
  EventRecord,
  Metrics,
  PipelineState,
  StreamMessage,
  WarningRecord,
} from "./types.js";

export const DETECTION_CAP = 200;

export interface ConsoleState {
  connected: boolean;
  pipeline: PipelineState | null;
  metrics: Metrics | null;
  detections: EventRecord[]; // newest first, bounded
  banner: WarningRecord | null; // set iff an unacknowledged warning exists
  queryPlate: string;
  queryResults: EventRecord[] | null; // null = no query ran yet
}

type Listener = (state: ConsoleState) => void;

export class ConsoleStore {
  private state: ConsoleState = {
    connected: false,
    pipeline: null,
    metrics: null,
    detections: [],
    banner: null,
    queryPlate: "",
    queryResults: null,
  };
  private listeners = new Set<Listener>();

  getState(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private commit(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  setConnected(connected: boolean): void {
    if (connected !== this.state.connected) this.commit({ connected });
  }

  setPipeline(pipeline: PipelineState): void {
    this.commit({ pipeline });
  }

  setMetrics(metrics: Metrics): void {
    // metrics carry the authoritative state name at 1 Hz; mirror it so the
    // buttons track the machine even if a state message was missed
    const pipeline: PipelineState = this.state.pipeline
      ? { ...this.state.pipeline, state: metrics.state, fps: metrics.fps }
      : {
          state: metrics.state,
          started_at: null,
          fps: metrics.fps,
          frames_processed: 0,
          frames_dropped: metrics.frames_dropped,
          last_error: null,
        };
    this.commit({ metrics, pipeline });
  }

  addDetection(record: EventRecord): void {
    if (this.state.detections.some((d) => d.seq === record.seq)) return;
    const detections = [record, ...this.state.detections].slice(0, DETECTION_CAP);
    this.commit({ detections });
  }

  setWarning(warning: WarningRecord): void {
    this.commit({ banner: warning });
  }

  acknowledgeWarning(): void {
    this.commit({ banner: null });
  }

  setQuery(plate: string, results: EventRecord[] | null): void {
    this.commit({ queryPlate: plate, queryResults: results });
  }

  apply(message: StreamMessage): void {
    switch (message.kind) {
      case "detection":
        this.addDetection(message.payload);
        break;
      case "state":
        this.setPipeline(message.payload);
        break;
      case "metrics":
        this.setMetrics(message.payload);
        break;
      case "warning":
        this.setWarning(message.payload);
        break;
    }
  }
}
