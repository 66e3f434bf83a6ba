// Pure console state. Reducers never touch the network or the DOM, which is
// what the convergence tests exercise: any interleaving of push events and
// REST syncs must leave the alert queue mirroring server truth.

import type {
  AlertView,
  AppearancePayload,
  AttendanceRecord,
  GalleryEntrySummary,
  PushEvent,
  RecognitionRow,
  StatsPayload,
} from "./types";

export type Connection = "connecting" | "live" | "reconnecting" | "replay";
export type GateFilter = "all" | "entry" | "exit";
export type RosterFilter = "all" | "inside" | "departed";

export interface FeedItem {
  seq: number;
  ts: number;
  tone: "ok" | "alert" | "info";
  gate: string;
  text: string;
}

export interface ConsoleState {
  connection: Connection;
  eventCursor: number;
  pendingAlerts: AlertView[];
  roster: AttendanceRecord[];
  stats: StatsPayload | null;
  feed: FeedItem[];
  gallery: GalleryEntrySummary[];
  gateFilter: GateFilter;
  rosterFilter: RosterFilter;
  notice: string | null;
}

export const FEED_LIMIT = 200;

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    eventCursor: 0,
    pendingAlerts: [],
    roster: [],
    stats: null,
    feed: [],
    gallery: [],
    gateFilter: "all",
    rosterFilter: "all",
    notice: null,
  };
}

const OPEN_STATES = new Set(["pending", "delivered"]);

function isQueueable(alert: AlertView): boolean {
  return alert.kind === "unknown_person" && OPEN_STATES.has(alert.state);
}

function pushFeed(state: ConsoleState, item: FeedItem): void {
  state.feed.unshift(item);
  if (state.feed.length > FEED_LIMIT) {
    state.feed.length = FEED_LIMIT;
  }
}

function upsertRoster(state: ConsoleState, record: AttendanceRecord): void {
  const idx = state.roster.findIndex(
    (r) => r.person_id === record.person_id && r.session_index === record.session_index,
  );
  if (idx >= 0) {
    state.roster[idx] = record;
  } else {
    state.roster.push(record);
  }
}

/** Apply one push event; stale seqs (replays after reconnect) are dropped. */
export function applyEvent(state: ConsoleState, event: PushEvent): ConsoleState {
  if (event.event_seq <= state.eventCursor) {
    return state;
  }
  state.eventCursor = event.event_seq;
  switch (event.kind) {
    case "recognition_row": {
      const row = event.payload as RecognitionRow;
      pushFeed(state, {
        seq: event.event_seq,
        ts: row.ts,
        tone: "ok",
        gate: row.gate,
        text: `${row.display_name} recognized (${(row.similarity * 100).toFixed(0)}%) at ${row.camera_id}`,
      });
      break;
    }
    case "appearance_opened": {
      const app = event.payload as AppearancePayload;
      pushFeed(state, {
        seq: event.event_seq,
        ts: app.first_ts,
        tone: "info",
        gate: app.gate,
        text: `${app.display_name} walkthrough started at ${app.camera_id}`,
      });
      break;
    }
    case "attendance_changed": {
      const record = event.payload as AttendanceRecord;
      upsertRoster(state, record);
      pushFeed(state, {
        seq: event.event_seq,
        ts: record.exit_ts ?? record.entry_ts,
        tone: "info",
        gate: record.status === "inside" ? "entry" : "exit",
        text:
          record.status === "inside"
            ? `${record.display_name} entered`
            : `${record.display_name} departed`,
      });
      break;
    }
    case "alert_raised": {
      const alert = event.payload as AlertView;
      if (isQueueable(alert) && !state.pendingAlerts.some((a) => a.alert_id === alert.alert_id)) {
        state.pendingAlerts.push(alert);
      }
      pushFeed(state, {
        seq: event.event_seq,
        ts: alert.created_ts,
        tone: alert.kind === "unknown_person" ? "alert" : "ok",
        gate: alert.gate,
        text:
          alert.kind === "unknown_person"
            ? `unknown person at ${alert.camera_id}`
            : `${alert.display_name ?? alert.person_id} notified at ${alert.camera_id}`,
      });
      break;
    }
    case "alert_resolved": {
      const alert = event.payload as AlertView;
      state.pendingAlerts = state.pendingAlerts.filter((a) => a.alert_id !== alert.alert_id);
      pushFeed(state, {
        seq: event.event_seq,
        ts: event.ts,
        tone: "info",
        gate: alert.gate,
        text: `alert ${alert.alert_id} ${alert.state}${alert.display_name ? ` (${alert.display_name})` : ""}`,
      });
      break;
    }
    case "stats_tick": {
      state.stats = event.payload as StatsPayload;
      break;
    }
  }
  return state;
}

/** Replace the queue with server truth (GET /api/alerts) — the sync anchor. */
export function syncAlerts(state: ConsoleState, serverAlerts: AlertView[]): ConsoleState {
  state.pendingAlerts = serverAlerts.filter(isQueueable);
  return state;
}

export function syncRoster(state: ConsoleState, records: AttendanceRecord[]): ConsoleState {
  state.roster = records.slice();
  return state;
}

export function syncGallery(state: ConsoleState, entries: GalleryEntrySummary[]): ConsoleState {
  state.gallery = entries.slice();
  return state;
}

// -- selectors ---------------------------------------------------------------

export function visibleAlerts(state: ConsoleState): AlertView[] {
  return state.pendingAlerts.filter(
    (a) => state.gateFilter === "all" || a.gate === state.gateFilter,
  );
}

export function visibleFeed(state: ConsoleState): FeedItem[] {
  return state.feed.filter((f) => state.gateFilter === "all" || f.gate === state.gateFilter);
}

export function visibleRoster(state: ConsoleState): AttendanceRecord[] {
  const rows = state.roster.filter(
    (r) => state.rosterFilter === "all" || r.status === state.rosterFilter,
  );
  rows.sort((a, b) => b.entry_ts - a.entry_ts || a.person_id.localeCompare(b.person_id));
  return rows;
}

export function formatTs(ts: number | null): string {
  if (ts === null) {
    return "—";
  }
  const d = new Date(ts);
  return d.toLocaleTimeString([], { hour12: false });
}
