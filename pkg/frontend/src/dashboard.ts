/**
 * Read-only session dashboard state fed by GET /session/status polling.
 * Tracks one learning-curve point per completed iteration; no metric is
 * computed client-side.
 */

import type { ApiClient, SessionStatus } from "./api.js";

export interface CurvePoint {
  iteration: number;
  token_f1: number;
  entity_f1: number;
  sentence_accuracy: number;
}

export class Dashboard {
  status: SessionStatus | null = null;
  /** True when the server is unreachable or reports no session. */
  stale = false;
  curve: CurvePoint[] = [];

  async poll(api: ApiClient): Promise<void> {
    let status: SessionStatus | null;
    try {
      status = await api.status();
    } catch {
      this.stale = true;
      return;
    }
    if (status === null) {
      this.stale = true;
      this.status = null;
      return;
    }
    this.stale = false;
    this.status = status;
    const m = status.latest_metrics;
    if (m && !this.curve.some((p) => p.iteration === status.iteration)) {
      this.curve.push({
        iteration: status.iteration,
        token_f1: m.token_f1,
        entity_f1: m.entity_f1,
        sentence_accuracy: m.sentence_accuracy,
      });
      this.curve.sort((a, b) => a.iteration - b.iteration);
    }
  }
}
