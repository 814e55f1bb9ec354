"""A/B evaluation demo: teacher-forcing-only model vs adversarially trained
model, judged by the adversarial model's discriminator.

Decodes every toy-corpus context with both generators, ranks each pair of
answers by the geometric-mean score with the 5% tie rule, and prints the
adversarial tally.  Expects the model directories produced by train_toy.py
and adversarial_toy.py.

Usage: python scripts/ab_eval_toy.py [tf_model_dir] [adv_model_dir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from advchat.corpus import build_vocabulary, encode_pairs, load_corpus, make_pairs
from advchat.evaluation import ab_session, tally
from advchat.model import load_model_pair

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    tf_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "toy"
    adv_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else ROOT / "runs" / "adversarial"
    tf_pair = load_model_pair(tf_dir / "model.weights")
    adv_pair = load_model_pair(adv_dir / "model.weights")

    corpus = load_corpus(ROOT / "data" / "toy_corpus.txt")
    vocab = build_vocabulary(corpus, tf_pair.config.s_v)
    pairs = encode_pairs(make_pairs(corpus, tf_pair.config.n_u), vocab,
                         tf_pair.config.s_s)
    contexts = [p.x for p in pairs]

    lines, votes = ab_session(contexts, tf_pair.gen, adv_pair.gen,
                              adv_pair.disc,
                              model_ids=("teacher_forcing", "adversarial"))
    for line, vote in zip(lines, votes):
        ranking = line["ranking"]
        scores = ", ".join(f"{c.model_id} {c.score:.4f}"
                           for c in ranking.candidates)
        print(f"{line['line_id']:8s} winner {vote.winner:16s} ({scores})")

    summary = tally(votes)
    print(f"\ncontested lines: {summary.contested} of {len(votes)}")
    for model, count in sorted(summary.counts.items()):
        pct = summary.percentages[model] if summary.percentages else 0.0
        print(f"  {model}: {count} wins ({pct:.2f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
