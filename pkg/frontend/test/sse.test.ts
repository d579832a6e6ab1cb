import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SseParser", () => {
  it("parses a single frame", () => {
    const parser = new SseParser();
    const events = parser.feed('event: token\ndata: {"text": "He"}\n\n');
    expect(events).toEqual([{ name: "token", data: { text: "He" } }]);
  });

  it("handles frames split at arbitrary byte boundaries", () => {
    const parser = new SseParser();
    const whole = 'event: action\ndata: {"kind": "search", "query": "q"}\n\n';
    const events = [
      ...parser.feed(whole.slice(0, 9)),
      ...parser.feed(whole.slice(9, 23)),
      ...parser.feed(whole.slice(23)),
    ];
    expect(events).toEqual([{ name: "action", data: { kind: "search", query: "q" } }]);
  });

  it("parses several frames from one chunk", () => {
    const parser = new SseParser();
    const events = parser.feed(
      'event: token\ndata: {"text": "a"}\n\nevent: token\ndata: {"text": "b"}\n\n',
    );
    expect(events.map((e) => (e.data as { text: string }).text)).toEqual(["a", "b"]);
  });

  it("ignores heartbeat comments", () => {
    const parser = new SseParser();
    expect(parser.feed(": keepalive\n\n")).toEqual([]);
    expect(parser.feed(': keepalive\n\nevent: done\ndata: {"stop": "x"}\n\n')).toEqual([
      { name: "done", data: { stop: "x" } },
    ]);
  });

  it("keeps non-JSON data as text", () => {
    const parser = new SseParser();
    expect(parser.feed("data: plain words\n\n")).toEqual([
      { name: "message", data: "plain words" },
    ]);
  });
});
