/** An in-memory stand-in for the chat service, speaking its exact JSON
 * schemas.  Candidates and the Jaccard value are canned; votes persist with
 * last-wins semantics so re-vote behavior is observable. */

import type { FetchLike } from "../src/api.js";
import type { CandidatePayload } from "../src/types.js";

interface Call {
  method: string;
  path: string;
  body: Record<string, unknown> | null;
}

export class FakeServer {
  calls: Call[] = [];
  votes = new Map<string, string>(); // line id -> latest human winner
  lines = new Set<string>();
  down = false;
  rejectVotes = false;
  jaccard = 0.58;
  tieOnNextChat = false;

  private sessionCounter = 0;
  private lineCounter = 0;

  candidatesFor(line: number): CandidatePayload[] {
    return [
      { model: "a", text: `alpha answer ${line}`, score: 0.8123 },
      { model: "b", text: `bravo answer ${line}`, score: 0.7911 },
    ];
  }

  fetch: FetchLike = async (input, init) => {
    if (this.down) throw new TypeError("network down");
    const method = init?.method ?? "GET";
    const path = input.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? (JSON.parse(init.body) as Record<string, unknown>) : null;
    this.calls.push({ method, path, body });
    const respond = (status: number, payload: unknown) => ({
      ok: status < 400,
      status,
      json: async () => payload,
    });

    if (method === "POST" && path === "/session") {
      this.sessionCounter += 1;
      return respond(200, { session_id: `s${this.sessionCounter}` });
    }
    if (method === "POST" && path === "/chat") {
      if (!body || typeof body.utterance !== "string" || !body.utterance.trim()) {
        return respond(400, { error: "utterance must not be empty" });
      }
      const sessionId = (body.session_id as string) || `s${++this.sessionCounter}`;
      const lineId = `${sessionId}:l${this.lineCounter++}`;
      this.lines.add(lineId);
      const tie = this.tieOnNextChat;
      this.tieOnNextChat = false;
      return respond(200, {
        session_id: sessionId,
        line_id: lineId,
        candidates: this.candidatesFor(this.lineCounter - 1),
        tie,
      });
    }
    if (method === "POST" && path === "/vote") {
      const lineId = body?.line_id as string;
      const winner = body?.winner as string;
      if (!this.lines.has(lineId)) {
        return respond(404, { error: `unknown line id '${lineId}'` });
      }
      if (this.rejectVotes) {
        return respond(400, { error: "vote rejected" });
      }
      this.votes.set(lineId, winner);
      return respond(200, { line_id: lineId, winner, source: "human" });
    }
    if (method === "GET" && path === "/report") {
      const counts: Record<string, number> = {};
      for (const winner of this.votes.values()) {
        if (winner !== "TIE") counts[winner] = (counts[winner] ?? 0) + 1;
      }
      const contested = Object.values(counts).reduce((a, b) => a + b, 0);
      const percentages =
        contested === 0
          ? null
          : Object.fromEntries(
              Object.entries(counts).map(([m, n]) => [
                m,
                Math.round((10000 * n) / contested) / 100,
              ]),
            );
      const tally = { counts, percentages, contested };
      return respond(200, {
        human: tally,
        adversarial: { counts: {}, percentages: null, contested: 0 },
        jaccard: this.jaccard,
      });
    }
    return respond(404, { error: `no such endpoint ${path}` });
  };
}
