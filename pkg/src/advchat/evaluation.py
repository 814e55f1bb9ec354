"""Answer ranking, human/adversarial vote tallying and agreement.

The discriminator's geometric-mean score orders candidate answers; two top
scores within 5% of the smaller one are a tie, and ties carry no vote.
Winner sets from the human and the adversarial judge meet in the Jaccard
index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import EncodedSequence
from .errors import FormatError, UsageError
from .model import (
    DiscriminatorParams,
    GeneratorParams,
    answer_probability,
    answer_score,
    greedy_decode,
)

TIE = "TIE"
TIE_THRESHOLD = 0.05

HUMAN = "human"
ADVERSARIAL = "adversarial"


@dataclass
class Candidate:
    model_id: str
    answer: EncodedSequence
    score: float  # geometric-mean score S
    probability: float  # chain-rule product P


@dataclass
class VoteRecord:
    line_id: str
    winner: str  # a model id, or TIE (which carries no vote)
    source: str  # human | adversarial

    def to_json(self) -> str:
        return json.dumps(
            {"line_id": self.line_id, "winner": self.winner, "source": self.source},
            sort_keys=True,
        )


@dataclass
class TallySummary:
    counts: dict[str, int]
    percentages: dict[str, float] | None  # None when no line was contested
    contested: int


@dataclass
class RankingResult:
    candidates: list[Candidate]  # best first
    tie: bool  # top two scores within the threshold

    @property
    def winner(self) -> str:
        return TIE if self.tie else self.candidates[0].model_id


def scores_tied(a: float, b: float) -> bool:
    """True when |a - b| is smaller than 5% of the smaller score."""
    return abs(a - b) < TIE_THRESHOLD * min(a, b)


def rank_answers(
    x: EncodedSequence,
    candidates: Sequence[tuple[str, EncodedSequence]],
    disc: DiscriminatorParams,
    by_probability: bool = False,
) -> RankingResult:
    """Score every candidate answer against the context and order them.

    Ranking uses the geometric-mean score by default; ``by_probability``
    switches to the raw chain-rule product for comparison runs.  Ordering is
    input-order independent: equal keys fall back to the model id.
    """
    if not candidates:
        raise UsageError("rank_answers needs at least one candidate")
    scored = []
    for model_id, answer in candidates:
        scored.append(
            Candidate(
                model_id,
                answer,
                answer_score(x, answer, disc),
                answer_probability(x, answer, disc),
            )
        )
    key = (lambda c: c.probability) if by_probability else (lambda c: c.score)
    scored.sort(key=lambda c: (-key(c), c.model_id))
    tie = len(scored) >= 2 and scores_tied(key(scored[0]), key(scored[1]))
    return RankingResult(scored, tie)


def jaccard_index(h_set, a_set) -> float:
    """|H ∩ A| / |H ∪ A| over any hashable ids; two empty sets count as
    identical selections, 1.0."""
    h, a = set(h_set), set(a_set)
    union = h | a
    if not union:
        return 1.0
    return len(h & a) / len(union)


def tally(votes: Sequence[VoteRecord]) -> TallySummary:
    """Per-model win counts over the non-tie records.  Percentages are over
    contested lines only, rounded to 2 decimals; with zero contested lines
    they are undefined (None)."""
    counts: dict[str, int] = {}
    for vote in votes:
        if vote.winner == TIE:
            continue
        counts[vote.winner] = counts.get(vote.winner, 0) + 1
    contested = sum(counts.values())
    if contested == 0:
        return TallySummary(counts, None, 0)
    percentages = {
        model: round(100.0 * n / contested, 2) for model, n in counts.items()
    }
    return TallySummary(counts, percentages, contested)


def ab_session(
    contexts: Sequence[EncodedSequence],
    gen_a: GeneratorParams,
    gen_b: GeneratorParams,
    disc: DiscriminatorParams,
    model_ids: tuple[str, str] = ("a", "b"),
    line_prefix: str = "line",
) -> tuple[list[dict], list[VoteRecord]]:
    """Decode every context with both generators and let the discriminator
    vote; the human votes for the same lines arrive later through the
    service."""
    lines = []
    votes = []
    for i, x in enumerate(contexts):
        answers = [
            (model_ids[0], greedy_decode(x, gen_a).answer),
            (model_ids[1], greedy_decode(x, gen_b).answer),
        ]
        ranking = rank_answers(x, answers, disc)
        line_id = f"{line_prefix}{i}"
        lines.append({"line_id": line_id, "ranking": ranking})
        votes.append(VoteRecord(line_id, ranking.winner, ADVERSARIAL))
    return lines, votes


# ---------------------------------------------------------------------------
# vote store
# ---------------------------------------------------------------------------


def append_vote(path, vote: VoteRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(vote.to_json() + "\n")


def load_votes(path) -> list[VoteRecord]:
    path = Path(path)
    if not path.exists():
        return []
    votes = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            votes.append(
                VoteRecord(payload["line_id"], payload["winner"], payload["source"])
            )
        except (json.JSONDecodeError, KeyError, TypeError):
            raise FormatError(f"{path}: line {lineno}: not a vote record") from None
    return votes


def dedupe_votes(votes: Sequence[VoteRecord]) -> list[VoteRecord]:
    """The store is append-only; a re-vote overwrites, so the last record
    per (line, source) wins."""
    latest: dict[tuple[str, str], VoteRecord] = {}
    for vote in votes:
        latest[(vote.line_id, vote.source)] = vote
    return list(latest.values())


def winner_set(votes: Sequence[VoteRecord], source: str) -> set[tuple[str, str]]:
    """The set of winning answers, each identified by (line id, model id)."""
    return {
        (v.line_id, v.winner)
        for v in votes
        if v.source == source and v.winner != TIE
    }


def report(votes: Sequence[VoteRecord]) -> dict:
    """Tallies per source plus the Jaccard agreement of the winner sets."""
    votes = dedupe_votes(votes)
    human = tally([v for v in votes if v.source == HUMAN])
    adversarial = tally([v for v in votes if v.source == ADVERSARIAL])
    agreement = jaccard_index(winner_set(votes, HUMAN), winner_set(votes, ADVERSARIAL))
    return {"human": human, "adversarial": adversarial, "jaccard": agreement}
