import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SseParser", () => {
  it("parses id/data framed events", () => {
    const parser = new SseParser();
    const events = parser.push('id: 1\ndata: {"a":1}\n\nid: 2\ndata: {"a":2}\n\n');
    expect(events).toEqual([
      { id: 1, data: '{"a":1}' },
      { id: 2, data: '{"a":2}' },
    ]);
  });

  it("handles chunk boundaries mid-line", () => {
    const parser = new SseParser();
    expect(parser.push("id: 4")).toEqual([]);
    expect(parser.push("2\ndata: hel")).toEqual([]);
    expect(parser.push("lo\n\n")).toEqual([{ id: 42, data: "hello" }]);
  });

  it("ignores keepalive comments and unknown fields", () => {
    const parser = new SseParser();
    const events = parser.push(": keepalive\n\nretry: 1000\nid: 7\ndata: x\n\n");
    expect(events).toEqual([{ id: 7, data: "x" }]);
  });

  it("joins multi-line data", () => {
    const parser = new SseParser();
    const events = parser.push("id: 1\ndata: a\ndata: b\n\n");
    expect(events).toEqual([{ id: 1, data: "a\nb" }]);
  });

  it("tolerates crlf line endings", () => {
    const parser = new SseParser();
    const events = parser.push("id: 3\r\ndata: y\r\n\r\n");
    expect(events).toEqual([{ id: 3, data: "y" }]);
  });
});
