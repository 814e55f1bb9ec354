/** Client-side session model.
 *
 * Lines mirror the server history in order.  Every number shown to the user
 * (scores, tie flags, tallies, agreement) is stored verbatim from a server
 * payload; nothing is recomputed here.  Model identities are blinded behind
 * neutral labels with per-line randomized placement so human votes carry no
 * position or identity bias.
 */

import type { ChatResponse, VoteState } from "./types.js";

export interface SlotView {
  label: string; // neutral: "Answer 1", "Answer 2", ...
  model: string; // real id, used when submitting the vote
  text: string;
  score: number | null;
}

export interface LineView {
  lineId: string;
  utterance: string;
  tie: boolean;
  slots: SlotView[]; // render order, randomized per line
  voteState: VoteState;
}

export class SessionView {
  sessionId = "";
  lines: LineView[] = [];

  constructor(private rng: () => number = Math.random) {}

  addLine(utterance: string, response: ChatResponse): LineView {
    this.sessionId = response.session_id;
    const shuffled = [...response.candidates];
    for (let i = shuffled.length - 1; i > 0; i--) {
      const j = Math.floor(this.rng() * (i + 1));
      [shuffled[i], shuffled[j]] = [shuffled[j]!, shuffled[i]!];
    }
    const line: LineView = {
      lineId: response.line_id,
      utterance,
      tie: response.tie,
      slots: shuffled.map((candidate, i) => ({
        label: `Answer ${i + 1}`,
        model: candidate.model,
        text: candidate.text,
        score: candidate.score,
      })),
      voteState: "unvoted",
    };
    this.lines.push(line);
    return line;
  }

  line(lineId: string): LineView {
    const found = this.lines.find((l) => l.lineId === lineId);
    if (!found) throw new Error(`unknown line ${lineId}`);
    return found;
  }

  setVote(lineId: string, state: VoteState): void {
    this.line(lineId).voteState = state;
  }
}
