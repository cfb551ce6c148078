// Session markers export in the annotation CSV schema. Only integer
// quality labels become rows; free-text markers stay in the session log.

import { Marker } from "./state.js";

export const CSV_HEADER = "recording_id,rater_id,score";

export function markersToCsv(markers: Marker[], sessionId = "session"): string {
  const rows = [CSV_HEADER];
  for (const m of markers) {
    const score = typeof m.label === "number" ? m.label : Number(m.label);
    if (!Number.isInteger(score) || score < 1 || score > 5) continue;
    rows.push(`${sessionId}-${m.t.toFixed(3)},operator,${score}`);
  }
  return rows.join("\n") + "\n";
}
