// Thin fetch client for the gateway. The console performs no matching logic;
// every mutation goes through POST endpoints and reads are plain GETs.

import type {
  AlertView,
  AttendanceRecord,
  AttendanceStatus,
  GalleryEntrySummary,
  ResolveAction,
  ResolveResult,
} from "./types";

export class GatewayClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  getAttendance(status?: AttendanceStatus): Promise<AttendanceRecord[]> {
    const query = status ? `?status=${status}` : "";
    return this.getJson(`/api/attendance${query}`);
  }

  getAlerts(states: string[] = ["pending", "delivered"]): Promise<AlertView[]> {
    const query = states.length ? `?state=${states.join(",")}` : "";
    return this.getJson(`/api/alerts${query}`);
  }

  getGallery(): Promise<{ dimension: number; entries: GalleryEntrySummary[] }> {
    return this.getJson("/api/gallery");
  }

  getMetrics(): Promise<Record<string, unknown>> {
    return this.getJson("/api/metrics");
  }

  async resolveAlert(alertId: string, action: ResolveAction): Promise<ResolveResult> {
    const resp = await this.fetchImpl(`${this.base}/api/alerts/${alertId}/resolve`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(action),
    });
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (resp.ok) {
      return { ok: true, status: resp.status, ...body } as ResolveResult;
    }
    return {
      ok: false,
      status: resp.status,
      error: (body.error as string) ?? "error",
      message: (body.message as string) ?? `HTTP ${resp.status}`,
    };
  }
}
