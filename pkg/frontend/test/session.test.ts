// End-to-end session against a scripted engine emitting one score per
// second: gauges keep pace, the rolling history fills its 120 s window,
// and operator markers land in the session annotation CSV.

import { describe, expect, it, vi } from "vitest";

import { layoutChart, WINDOW_SECONDS } from "../src/chart.js";
import { markersToCsv } from "../src/csv.js";
import { parseMarkerAck } from "../src/schema.js";
import { StreamClient } from "../src/socket.js";
import { UiState } from "../src/state.js";
import { FakeSocket, ScriptedEngine } from "./fakes.js";

function wireSession(engine: ScriptedEngine) {
  const state = new UiState();
  let gaugeUpdates = 0;
  let socket: FakeSocket | null = null;
  const client = new StreamClient("ws://scripted", {
    factory: () => {
      socket = engine.connect();
      return socket;
    },
    onStatus: (s) => {
      state.connection = s;
    },
    onMessage: (raw) => {
      const ack = parseMarkerAck(raw);
      if (ack !== null) {
        state.addMarker(ack.t, ack.label);
        return;
      }
      if (state.ingest(raw) !== null) {
        state.heartGauge();
        state.lungGauge();
        gaugeUpdates += 1;
      }
    },
  });
  client.connect();
  return {
    state,
    client,
    socket: () => socket!,
    gaugeUpdates: () => gaugeUpdates,
  };
}

describe("scripted 1 Hz session", () => {
  it("updates gauges at stream rate and fills the 120 s history", () => {
    vi.useFakeTimers();
    const engine = new ScriptedEngine();
    const session = wireSession(engine);
    session.socket().openNow();

    for (let sec = 0; sec < 130; sec++) {
      vi.advanceTimersByTime(1000);
      engine.emitSecond(session.socket());
    }

    expect(session.gaugeUpdates()).toBe(130); // one render per emitted second
    expect(session.state.history.length).toBe(120);
    const layout = layoutChart(session.state.history, session.state.markers);
    expect(layout.t1 - layout.t0).toBe(WINDOW_SECONDS);
    expect(layout.heartQuality.length).toBe(120); // all post-warmup points drawn
    expect(session.state.dropped).toBe(0);
    vi.useRealTimers();
  });

  it("round-trips markers into the session csv", () => {
    const engine = new ScriptedEngine();
    const session = wireSession(engine);
    session.socket().openNow();
    for (let sec = 0; sec < 15; sec++) engine.emitSecond(session.socket());

    session.client.mark(5);
    for (let sec = 0; sec < 3; sec++) engine.emitSecond(session.socket());
    session.client.mark(2);

    const rows = engine.csv().trim().split("\n");
    expect(rows[0]).toBe("recording_id,rater_id,score");
    expect(rows.length).toBe(3);
    expect(rows[1]).toBe("session-15.000,operator,5");
    expect(rows[2]).toBe("session-18.000,operator,2");

    // the acknowledged markers mirror into the UI's own export
    const exported = markersToCsv(session.state.markers);
    expect(exported).toContain(",operator,5");
    expect(exported).toContain(",operator,2");
    const ts = session.state.markers.map((m) => m.t);
    expect([...ts].sort((a, b) => a - b)).toEqual(ts);
  });

  it("queues taps while disconnected and flushes after reconnect", () => {
    vi.useFakeTimers();
    const engine = new ScriptedEngine();
    const session = wireSession(engine);
    session.socket().openNow();
    engine.emitSecond(session.socket());

    session.socket().dropFromServer();
    session.client.mark(3); // tapped while offline
    expect(session.client.queuedCount()).toBe(1);

    vi.advanceTimersByTime(5000); // reconnect fires within five seconds
    session.socket().openNow();
    expect(session.client.queuedCount()).toBe(0);
    expect(engine.csv()).toContain(",operator,3");
    vi.useRealTimers();
  });

  it("drops malformed engine output without breaking the stream", () => {
    const engine = new ScriptedEngine();
    const session = wireSession(engine);
    session.socket().openNow();
    engine.emitSecond(session.socket());
    session.socket().serverPush({ type: "score", v: 99 });
    session.socket().onmessage?.({ data: "not json at all" });
    engine.emitSecond(session.socket());
    expect(session.state.dropped).toBe(2);
    expect(session.state.history.length).toBe(2);
  });
});
