// Rolling-history chart layout. The geometry is computed as plain data
// so tests can assert spans and clamping without a canvas; drawing is a
// thin adapter over any 2D context.

import { ScoreMessage } from "./schema.js";
import { Marker } from "./state.js";

export const WINDOW_SECONDS = 120;

export interface SeriesPoint {
  x: number; // 0..1 across the window
  y: number; // 0..1 within the series' own axis
  flagged: boolean;
}

export interface ChartLayout {
  spanSeconds: number;
  t0: number;
  t1: number;
  heartQuality: SeriesPoint[];
  lungQuality: SeriesPoint[];
  hr: SeriesPoint[];
  br: SeriesPoint[];
  markers: { x: number; label: string }[];
}

const QUALITY_AXIS: [number, number] = [1, 5];
const HR_AXIS: [number, number] = [70, 220];
const BR_AXIS: [number, number] = [15, 80];

function norm(v: number, [lo, hi]: [number, number]): number {
  return Math.min(1, Math.max(0, (v - lo) / (hi - lo)));
}

export function layoutChart(
  history: ScoreMessage[],
  markers: Marker[] = [],
): ChartLayout {
  const t1 = history.length > 0 ? history[history.length - 1].t : 0;
  const t0 = t1 - WINDOW_SECONDS;
  const x = (t: number) => (t - t0) / WINDOW_SECONDS;
  const layout: ChartLayout = {
    spanSeconds: WINDOW_SECONDS,
    t0,
    t1,
    heartQuality: [],
    lungQuality: [],
    hr: [],
    br: [],
    markers: [],
  };
  for (const msg of history) {
    if (msg.t < t0) continue;
    if (msg.heart_quality !== null) {
      layout.heartQuality.push({
        x: x(msg.t),
        y: norm(msg.heart_quality, QUALITY_AXIS),
        flagged: false,
      });
    }
    if (msg.lung_quality !== null) {
      layout.lungQuality.push({
        x: x(msg.t),
        y: norm(msg.lung_quality, QUALITY_AXIS),
        flagged: false,
      });
    }
    if (msg.hr !== null) {
      layout.hr.push({ x: x(msg.t), y: norm(msg.hr, HR_AXIS), flagged: msg.hr_flag });
    }
    if (msg.br !== null) {
      layout.br.push({ x: x(msg.t), y: norm(msg.br, BR_AXIS), flagged: msg.br_flag });
    }
  }
  for (const m of markers) {
    if (m.t >= t0 && m.t <= t1) {
      layout.markers.push({ x: x(m.t), label: String(m.label) });
    }
  }
  return layout;
}

export interface Context2DLike {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  // canvas contexts type these as unions with gradients/patterns
  strokeStyle: unknown;
  fillStyle: unknown;
  lineWidth: number;
}

const SERIES_STYLE: [keyof Pick<ChartLayout, "heartQuality" | "lungQuality" | "hr" | "br">, string][] = [
  ["heartQuality", "#c0392b"],
  ["lungQuality", "#2980b9"],
  ["hr", "#e67e22"],
  ["br", "#16a085"],
];

export function drawChart(
  ctx: Context2DLike,
  layout: ChartLayout,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  for (const [key, color] of SERIES_STYLE) {
    const points = layout[key];
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    for (const p of points) {
      const px = p.x * width;
      const py = (1 - p.y) * height;
      if (!pen) {
        ctx.moveTo(px, py);
        pen = true;
      } else {
        ctx.lineTo(px, py);
      }
    }
    ctx.stroke();
    for (const p of points) {
      if (!p.flagged) continue;
      // hollow point marks a low-confidence estimate
      ctx.beginPath();
      ctx.arc(p.x * width, (1 - p.y) * height, 3, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }
  ctx.strokeStyle = "#7f8c8d";
  for (const m of layout.markers) {
    ctx.beginPath();
    ctx.moveTo(m.x * width, 0);
    ctx.lineTo(m.x * width, height);
    ctx.stroke();
  }
}
