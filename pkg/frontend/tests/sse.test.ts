import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SseParser", () => {
  it("parses a complete frame", () => {
    const parser = new SseParser();
    const events = parser.push('id: 3\ndata: {"seq":3}\n\n');
    expect(events).toEqual([{ id: 3, data: '{"seq":3}' }]);
  });

  it("reassembles frames split across arbitrary chunk boundaries", () => {
    const raw = 'id: 1\ndata: {"seq":1}\n\nid: 2\ndata: {"seq":2}\n\n';
    for (let cut = 0; cut <= raw.length; cut++) {
      const parser = new SseParser();
      const events = [...parser.push(raw.slice(0, cut)), ...parser.push(raw.slice(cut))];
      expect(events.map((e) => e.id)).toEqual([1, 2]);
    }
  });

  it("skips heartbeat comment frames", () => {
    const parser = new SseParser();
    const events = parser.push(':hb\n\n:hb\n\nid: 1\ndata: {}\n\n');
    expect(events).toEqual([{ id: 1, data: "{}" }]);
  });

  it("holds incomplete frames until the terminator arrives", () => {
    const parser = new SseParser();
    expect(parser.push('id: 9\ndata: {"text":"án')).toEqual([]);
    expect(parser.push('imo"}\n')).toEqual([]);
    expect(parser.push("\n")).toEqual([{ id: 9, data: '{"text":"ánimo"}' }]);
  });
});
