// Dashboard state: a rolling window of score messages, the operator's
// markers, and the gauge color semantics. Pure data, no DOM.

import { parseScore, ScoreMessage } from "./schema.js";

export const HISTORY_CAPACITY = 120;

export type GaugeColor = "green" | "amber" | "red" | "gray";

export interface Marker {
  t: number;
  label: number | string;
}

export interface GaugeView {
  value: number | null;
  color: GaugeColor;
  label: string;
}

// color carries the clinical reading (quality 4+ tends to give usable
// vitals); the numeric score is always displayed alongside
export function gaugeColor(quality: number | null): GaugeColor {
  if (quality === null) return "gray";
  const rounded = Math.min(5, Math.max(1, Math.floor(quality + 0.5)));
  if (rounded >= 4) return "green";
  if (rounded === 3) return "amber";
  return "red";
}

export function gaugeView(quality: number | null): GaugeView {
  return {
    value: quality,
    color: gaugeColor(quality),
    label: quality === null ? "--" : quality.toFixed(2),
  };
}

export type ConnectionStatus = "connecting" | "open" | "closed";

export class UiState {
  history: ScoreMessage[] = [];
  markers: Marker[] = [];
  dropped = 0;
  connection: ConnectionStatus = "connecting";

  ingest(raw: unknown): ScoreMessage | null {
    const msg = parseScore(raw);
    if (msg === null) {
      this.dropped += 1;
      return null;
    }
    const last = this.history[this.history.length - 1];
    if (last !== undefined && msg.t <= last.t) {
      this.dropped += 1; // duplicate or time-travelling message
      return null;
    }
    this.history.push(msg);
    if (this.history.length > HISTORY_CAPACITY) {
      this.history.splice(0, this.history.length - HISTORY_CAPACITY);
    }
    return msg;
  }

  latest(): ScoreMessage | null {
    return this.history[this.history.length - 1] ?? null;
  }

  heartGauge(): GaugeView {
    return gaugeView(this.latest()?.heart_quality ?? null);
  }

  lungGauge(): GaugeView {
    return gaugeView(this.latest()?.lung_quality ?? null);
  }

  addMarker(t: number, label: number | string): Marker {
    const last = this.markers[this.markers.length - 1];
    const marker = { t: last !== undefined && t <= last.t ? last.t + 1e-6 : t, label };
    this.markers.push(marker);
    return marker;
  }
}
