// Browser bootstrap: wires the stream client, state, gauges, and chart
// to the DOM. All behavior lives in the imported modules; this file only
// adapts them to elements.

import { drawChart, layoutChart } from "./chart.js";
import { markersToCsv } from "./csv.js";
import { parseMarkerAck } from "./schema.js";
import { StreamClient } from "./socket.js";
import { GaugeView, UiState } from "./state.js";

const COLORS: Record<GaugeView["color"], string> = {
  green: "#27ae60",
  amber: "#f39c12",
  red: "#c0392b",
  gray: "#95a5a6",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderGauge(target: HTMLElement, view: GaugeView): void {
  target.style.background = COLORS[view.color];
  target.textContent = view.label;
}

function main(): void {
  const state = new UiState();
  const canvas = el<HTMLCanvasElement>("history");
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("canvas unavailable");

  const status = el<HTMLSpanElement>("status");
  const heart = el<HTMLDivElement>("heart-gauge");
  const lung = el<HTMLDivElement>("lung-gauge");
  const hr = el<HTMLSpanElement>("hr");
  const br = el<HTMLSpanElement>("br");
  const dropped = el<HTMLSpanElement>("dropped");

  const render = () => {
    renderGauge(heart, state.heartGauge());
    renderGauge(lung, state.lungGauge());
    const last = state.latest();
    hr.textContent = last?.hr === null || last === null
      ? "--" : `${last.hr.toFixed(0)}${last.hr_flag ? "?" : ""}`;
    br.textContent = last?.br === null || last === null
      ? "--" : `${last.br.toFixed(0)}${last.br_flag ? "?" : ""}`;
    dropped.textContent = String(state.dropped);
    drawChart(ctx, layoutChart(state.history, state.markers), canvas.width, canvas.height);
  };

  const url = `ws://${location.host}/ws/stream`;
  const client = new StreamClient(url, {
    onStatus: (s) => {
      state.connection = s;
      status.textContent = s;
    },
    onMessage: (raw) => {
      const ack = parseMarkerAck(raw);
      if (ack !== null) {
        state.addMarker(ack.t, ack.label);
        render();
        return;
      }
      if (state.ingest(raw) !== null) render();
      else dropped.textContent = String(state.dropped);
    },
  });
  client.connect();

  for (const score of [1, 2, 3, 4, 5]) {
    el<HTMLButtonElement>(`mark-${score}`).addEventListener("click", () => {
      client.mark(score);
    });
  }

  el<HTMLAnchorElement>("export").addEventListener("click", (ev) => {
    const link = ev.currentTarget as HTMLAnchorElement;
    const blob = new Blob([markersToCsv(state.markers)], { type: "text/csv" });
    link.href = URL.createObjectURL(blob);
    link.download = "session-markers.csv";
  });
}

window.addEventListener("load", main);
