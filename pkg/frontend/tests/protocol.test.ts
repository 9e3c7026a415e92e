import { describe, expect, it } from "vitest";

import {
  cmdFrame, effortFrame, helloFrame, parseFrame, serializeFrame,
} from "../src/protocol.js";

describe("frame grammar", () => {
  it("round-trips its own frames", () => {
    for (const frame of [helloFrame("console"), effortFrame(150),
                         cmdFrame("start", { age: 30 })]) {
      expect(parseFrame(serializeFrame(frame))).toEqual(frame);
    }
  });

  it("keeps unknown fields", () => {
    const parsed = parseFrame('{"type":"state","t_s":1.5,"experimental":[1]}');
    expect(parsed).toMatchObject({ t_s: 1.5, experimental: [1] });
  });

  it("rejects unknown types and non-objects", () => {
    expect(parseFrame('{"type":"telemetry"}')).toBeNull();
    expect(parseFrame("[1,2]")).toBeNull();
    expect(parseFrame("{nope")).toBeNull();
    expect(parseFrame("42")).toBeNull();
  });
});
