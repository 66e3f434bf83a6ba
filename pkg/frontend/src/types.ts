// Wire types mirroring the gateway's JSON payloads.

export type GateRole = "entry" | "exit";
export type AlertKind = "recognized_notify" | "unknown_person";
export type AlertState = "pending" | "delivered" | "validated" | "registered" | "dismissed";
export type AttendanceStatus = "inside" | "departed";

export interface AlertView {
  alert_id: string;
  kind: AlertKind;
  camera_id: string;
  gate: GateRole;
  created_ts: number;
  delivered_ts: number | null;
  state: AlertState;
  person_id: string | null;
  display_name: string | null;
  sla_met: boolean | null;
  has_snapshot: boolean;
  snapshot?: string | null; // base64, present on GET /api/alerts views
}

export interface AttendanceRecord {
  person_id: string;
  display_name: string;
  entry_ts: number;
  exit_ts: number | null;
  status: AttendanceStatus;
  session_index: number;
}

export interface RecognitionRow {
  ts: number;
  camera_id: string;
  gate: GateRole;
  person_id: string;
  display_name: string;
  similarity: number;
  frame_seq: number;
}

export interface AppearancePayload {
  person_id: string;
  display_name: string;
  camera_id: string;
  gate: GateRole;
  first_ts: number;
  last_ts: number;
  row_count: number;
  max_similarity: number;
}

export interface StatsPayload {
  frames_received: number;
  frames_processed: number;
  frames_dropped: number;
  frames_in_flight: number;
  budget_violations: number;
  stage_ms?: Record<string, { p50: number | null; p95: number | null; max: number | null; count: number }>;
}

export type PushEventKind =
  | "recognition_row"
  | "appearance_opened"
  | "attendance_changed"
  | "alert_raised"
  | "alert_resolved"
  | "stats_tick";

export interface PushEvent {
  event_seq: number;
  kind: PushEventKind;
  payload: unknown;
  ts: number;
}

export interface GalleryEntrySummary {
  person_id: string;
  display_name: string;
  pose_kinds: string[];
  enrolled_at: number;
  source: string;
}

export type ResolveAction =
  | { action: "validate"; person_id: string }
  | { action: "register"; display_name: string }
  | { action: "dismiss" };

export interface ResolveResult {
  ok: boolean;
  status: number;
  error?: string;
  message?: string;
  alert?: AlertView;
  attendance?: AttendanceRecord | null;
  registered_person_id?: string | null;
}
