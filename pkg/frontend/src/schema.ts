// Wire schema of the scoring stream. The engine emits versioned score
// messages once per second of stream time; anything that fails the guard
// is dropped and counted, never rendered.

export const SCHEMA_VERSION = 1;

export interface ScoreMessage {
  type: "score";
  v: number;
  t: number;
  heart_quality: number | null;
  lung_quality: number | null;
  hr: number | null;
  hr_flag: boolean;
  br: number | null;
  br_flag: boolean;
  latency_ms: number;
  window_s: number;
  warmup: boolean;
}

export interface MarkerAck {
  type: "marker_ack";
  t: number;
  label: number | string;
}

function numOrNull(v: unknown): v is number | null {
  return v === null || typeof v === "number";
}

export function parseScore(raw: unknown): ScoreMessage | null {
  if (typeof raw !== "object" || raw === null) return null;
  const m = raw as Record<string, unknown>;
  if (m.type !== "score" || m.v !== SCHEMA_VERSION) return null;
  if (typeof m.t !== "number" || typeof m.latency_ms !== "number") return null;
  if (!numOrNull(m.heart_quality) || !numOrNull(m.lung_quality)) return null;
  if (!numOrNull(m.hr) || !numOrNull(m.br)) return null;
  if (typeof m.hr_flag !== "boolean" || typeof m.br_flag !== "boolean") return null;
  if (typeof m.window_s !== "number" || typeof m.warmup !== "boolean") return null;
  const q = (v: number | null) =>
    v === null ? null : Math.min(5, Math.max(1, v));
  return {
    type: "score",
    v: m.v,
    t: m.t,
    heart_quality: q(m.heart_quality as number | null),
    lung_quality: q(m.lung_quality as number | null),
    hr: m.hr as number | null,
    br: m.br as number | null,
    hr_flag: m.hr_flag,
    br_flag: m.br_flag,
    latency_ms: m.latency_ms,
    window_s: m.window_s,
    warmup: m.warmup,
  };
}

export function parseMarkerAck(raw: unknown): MarkerAck | null {
  if (typeof raw !== "object" || raw === null) return null;
  const m = raw as Record<string, unknown>;
  if (m.type !== "marker_ack" || typeof m.t !== "number") return null;
  if (typeof m.label !== "number" && typeof m.label !== "string") return null;
  return { type: "marker_ack", t: m.t, label: m.label };
}
