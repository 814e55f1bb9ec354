import { describe, expect, it } from "vitest";

import { SessionView } from "../src/state.js";
import type { ChatResponse } from "../src/types.js";

function response(lineId = "s1:l0"): ChatResponse {
  return {
    session_id: "s1",
    line_id: lineId,
    candidates: [
      { model: "a", text: "from a", score: 0.9 },
      { model: "b", text: "from b", score: 0.4 },
    ],
    tie: false,
  };
}

describe("SessionView", () => {
  it("stores candidates verbatim under neutral labels", () => {
    const view = new SessionView(() => 0.99); // keep server order
    const line = view.addLine("hi", response());
    expect(line.slots.map((s) => s.label)).toEqual(["Answer 1", "Answer 2"]);
    expect(line.slots.map((s) => s.text)).toEqual(["from a", "from b"]);
    expect(line.slots.map((s) => s.score)).toEqual([0.9, 0.4]);
    expect(line.voteState).toBe("unvoted");
  });

  it("randomizes placement from the injected rng", () => {
    const keep = new SessionView(() => 0.99);
    const flip = new SessionView(() => 0.0);
    const kept = keep.addLine("hi", response());
    const flipped = flip.addLine("hi", response("s1:l1"));
    expect(kept.slots.map((s) => s.model)).toEqual(["a", "b"]);
    expect(flipped.slots.map((s) => s.model)).toEqual(["b", "a"]);
    // labels stay positional, hiding the identity either way
    expect(flipped.slots.map((s) => s.label)).toEqual(["Answer 1", "Answer 2"]);
  });

  it("placement varies across lines of one session", () => {
    const sequence = [0.99, 0.0];
    let i = 0;
    const view = new SessionView(() => sequence[i++ % sequence.length]!);
    const first = view.addLine("one", response("s1:l0"));
    const second = view.addLine("two", response("s1:l1"));
    expect(first.slots.map((s) => s.model)).not.toEqual(
      second.slots.map((s) => s.model),
    );
  });

  it("tracks vote state transitions per line", () => {
    const view = new SessionView(() => 0.99);
    view.addLine("hi", response());
    view.setVote("s1:l0", "b");
    expect(view.line("s1:l0").voteState).toBe("b");
    view.setVote("s1:l0", "tie");
    expect(view.line("s1:l0").voteState).toBe("tie");
  });

  it("keeps the server line order", () => {
    const view = new SessionView(() => 0.99);
    view.addLine("one", response("s1:l0"));
    view.addLine("two", response("s1:l1"));
    expect(view.lines.map((l) => l.lineId)).toEqual(["s1:l0", "s1:l1"]);
  });

  it("throws on unknown line ids", () => {
    const view = new SessionView(() => 0.99);
    expect(() => view.line("nope")).toThrow(/unknown line/);
  });
});
