// Push-stream subscription with cursor-based resume.
//
// On every (re)connect the owner is told to resync queue/roster over REST;
// replayed events older than the cursor are dropped by the reducer, so the
// combination converges regardless of where the connection died. After
// repeated failures the resume cursor is abandoned (the server answers 410
// when the ring buffer has moved on) and a fresh subscription plus resync
// carries the state instead.

import type { PushEvent } from "./types";

// Structural subset of the DOM EventSource, so tests can substitute a
// node-side implementation.
type EventSourceLike = {
  close(): void;
  addEventListener(type: string, listener: (ev: { data: string }) => void): void;
  onopen: ((ev: any) => any) | null;
  onerror: ((ev: any) => any) | null;
};

export type EventSourceFactory = (url: string) => EventSourceLike;

const KINDS = [
  "recognition_row",
  "appearance_opened",
  "attendance_changed",
  "alert_raised",
  "alert_resolved",
  "stats_tick",
] as const;

export interface StreamHandlers {
  onEvent(event: PushEvent): void;
  onStatus(status: "live" | "reconnecting"): void;
  onOpen(): void;
}

export class LiveStream {
  private source: EventSourceLike | null = null;
  private cursor = 0;
  private failures = 0;
  private stopped = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly base: string,
    private readonly handlers: StreamHandlers,
    private readonly makeSource: EventSourceFactory,
    private readonly retryMs = 1000,
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.source?.close();
    this.source = null;
  }

  get eventCursor(): number {
    return this.cursor;
  }

  private connect(): void {
    const resume = this.failures < 2 && this.cursor > 0 ? `?since=${this.cursor}` : "";
    const source = this.makeSource(`${this.base}/api/events${resume}`);
    this.source = source;
    source.onopen = () => {
      this.failures = 0;
      this.handlers.onStatus("live");
      this.handlers.onOpen();
    };
    source.onerror = () => {
      if (this.stopped) {
        return;
      }
      this.failures += 1;
      source.close();
      this.handlers.onStatus("reconnecting");
      this.retryTimer = setTimeout(() => this.connect(), this.retryMs);
    };
    for (const kind of KINDS) {
      source.addEventListener(kind, (ev) => {
        const event = JSON.parse(ev.data) as PushEvent;
        if (event.event_seq > this.cursor) {
          this.cursor = event.event_seq;
        }
        this.handlers.onEvent(event);
      });
    }
  }
}
