// Wire types mirroring the service's JSON payloads.

export interface VehicleClass {
  label: string;
  score: number;
  scores: number[];
}

export interface PixelRect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface EventRecord {
  seq: number;
  frame_index: number;
  timestamp_ms: number;
  vehicle_class: VehicleClass;
  plate_rect: PixelRect;
  detector_score: number;
  raw_text: string;
  normalized_text: string;
  ocr_ms: number;
  ocr_timed_out: boolean;
  ocr_error: string;
  crop_ref: string;
}

export type PipelineStateName = "idle" | "running" | "recording+running";

export interface PipelineState {
  state: PipelineStateName;
  started_at: number | null;
  fps: number;
  frames_processed: number;
  frames_dropped: number;
  last_error: string | null;
}

export interface Metrics {
  fps: number;
  frames_in: number;
  frames_dropped: number;
  events_total: number;
  state: PipelineStateName;
}

export interface WarningRecord {
  timestamp_ms: number;
  event_seq: number | null;
  reason: string;
}

export type StreamMessage =
  | { kind: "detection"; payload: EventRecord }
  | { kind: "state"; payload: PipelineState }
  | { kind: "metrics"; payload: Metrics }
  | { kind: "warning"; payload: WarningRecord };
