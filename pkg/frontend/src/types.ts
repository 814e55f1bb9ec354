/** JSON payloads of the chat service, mirrored verbatim. */

export interface CandidatePayload {
  model: string;
  text: string;
  score: number | null;
}

export interface ChatResponse {
  session_id: string;
  line_id: string;
  candidates: CandidatePayload[];
  tie: boolean;
}

export interface VoteResponse {
  line_id: string;
  winner: string;
  source: string;
}

export interface TallyPayload {
  counts: Record<string, number>;
  percentages: Record<string, number> | null;
  contested: number;
}

export interface ReportResponse {
  human: TallyPayload;
  adversarial: TallyPayload;
  jaccard: number;
}

export const TIE = "TIE";

/** Vote state of one dialogue line as the UI tracks it. */
export type VoteState = "unvoted" | "tie" | string;
