// Bootstrap: builds the client, stream, and state, and keeps them converged.
// Exported as boot() so tests can inject fetch/EventSource/document.

import { GatewayClient } from "./api";
import { render, wireFilters, type Actions } from "./render";
import {
  applyEvent,
  initialState,
  syncAlerts,
  syncGallery,
  syncRoster,
  type ConsoleState,
} from "./state";
import { LiveStream, type EventSourceFactory } from "./stream";
import type { ResolveAction } from "./types";

export interface BootOptions {
  base?: string;
  doc?: Document;
  fetchImpl?: typeof fetch;
  eventSourceFactory?: EventSourceFactory;
  retryMs?: number;
}

export class ConsoleApp {
  readonly state: ConsoleState = initialState();
  private readonly client: GatewayClient;
  private readonly stream: LiveStream;
  private readonly doc: Document;
  private noticeTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(options: BootOptions = {}) {
    this.doc = options.doc ?? document;
    const base = options.base ?? "";
    const fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
    this.client = new GatewayClient(base, fetchImpl);
    const factory: EventSourceFactory =
      options.eventSourceFactory ?? ((url: string) => new EventSource(url));
    this.stream = new LiveStream(
      base,
      {
        onEvent: (event) => {
          applyEvent(this.state, event);
          if (event.kind === "alert_raised") {
            // event payloads omit snapshots; pull the full alert views
            void this.refreshAlerts();
          }
          this.draw();
        },
        onStatus: (status) => {
          this.state.connection = status;
          this.draw();
        },
        onOpen: () => {
          void this.resync();
        },
      },
      factory,
      options.retryMs ?? 1000,
    );
  }

  start(): this {
    wireFilters(this.doc, this.actions);
    this.stream.start();
    void this.resync();
    this.draw();
    return this;
  }

  stop(): void {
    this.stream.stop();
  }

  async refreshAlerts(): Promise<void> {
    try {
      syncAlerts(this.state, await this.client.getAlerts());
      this.draw();
    } catch {
      // transient; the stream's next open triggers a full resync
    }
  }

  /** Pull server truth; push events between syncs only ever move us forward. */
  async resync(): Promise<void> {
    try {
      const [alerts, roster, gallery] = await Promise.all([
        this.client.getAlerts(),
        this.client.getAttendance(),
        this.client.getGallery(),
      ]);
      syncAlerts(this.state, alerts);
      syncRoster(this.state, roster);
      syncGallery(this.state, gallery.entries);
      this.draw();
    } catch {
      this.state.connection = "reconnecting";
      this.draw();
    }
  }

  private readonly actions: Actions = {
    resolve: (alertId: string, action: ResolveAction) => {
      void this.submitResolution(alertId, action);
    },
    setGateFilter: (filter: string) => {
      this.state.gateFilter = filter as ConsoleState["gateFilter"];
      this.draw();
    },
    setRosterFilter: (filter: string) => {
      this.state.rosterFilter = filter as ConsoleState["rosterFilter"];
      this.draw();
    },
  };

  private async submitResolution(alertId: string, action: ResolveAction): Promise<void> {
    let result;
    try {
      result = await this.client.resolveAlert(alertId, action);
    } catch (err) {
      this.flashNotice(`Could not reach the gateway: ${String(err)}`);
      this.draw();
      return;
    }
    if (result.ok) {
      this.state.pendingAlerts = this.state.pendingAlerts.filter((a) => a.alert_id !== alertId);
      try {
        if (result.attendance) {
          syncRoster(this.state, await this.client.getAttendance());
        }
        if (action.action === "register") {
          syncGallery(this.state, (await this.client.getGallery()).entries);
        }
      } catch {
        // push events carry the same updates; the next resync reconciles
      }
      this.flashNotice(
        action.action === "dismiss"
          ? `Alert ${alertId} dismissed.`
          : action.action === "register"
            ? `Registered ${("display_name" in action && action.display_name) || ""} and admitted.`
            : "Identity confirmed and admitted.",
      );
    } else if (result.status === 409) {
      this.flashNotice("Another official already resolved this alert — refreshing queue.");
      await this.resync();
    } else {
      this.flashNotice(`Could not resolve: ${result.message ?? result.error ?? result.status}`);
    }
    this.draw();
  }

  private flashNotice(text: string): void {
    this.state.notice = text;
    if (this.noticeTimer !== null) {
      clearTimeout(this.noticeTimer);
    }
    this.noticeTimer = setTimeout(() => {
      this.state.notice = null;
      this.draw();
    }, 4000);
  }

  draw(): void {
    render(this.doc, this.state, this.actions);
  }
}

export function boot(options: BootOptions = {}): ConsoleApp {
  return new ConsoleApp(options).start();
}

declare global {
  interface Window {
    gatewatchConsole?: ConsoleApp;
  }
}

// Auto-boot only when loaded as a page <script>; test imports boot() themselves.
if (typeof document !== "undefined" && document.currentScript) {
  const auto = () => {
    window.gatewatchConsole = boot();
  };
  if (document.readyState === "loading") {
    window.addEventListener("DOMContentLoaded", auto);
  } else {
    auto();
  }
}
