"""Desk-scale end-to-end adversarial run on the bundled toy corpus.

Pretrains by teacher forcing, then runs two adversarial epochs
(self-conversation, discriminator training, frozen-discriminator generator
update, interleaved teacher forcing), printing the per-phase history and the
post-run memorization.  Roughly one minute.

Usage: python scripts/adversarial_toy.py [outdir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from advchat.config import ModelConfig, TrainingConfig
from advchat.corpus import (
    build_vocabulary,
    encode_pairs,
    load_corpus,
    make_pairs,
    save_vocabulary,
)
from advchat.model import save_model_pair
from advchat.training import adversarial_training, memorized_fraction

ROOT = Path(__file__).resolve().parent.parent
DESK = ModelConfig(s_s=12, s_v=120, s_e=16, s_se=32, s_sed=32, n_u=2)
LOOP = TrainingConfig(
    adversarial_epochs=2, n_g=1, n_d=5, n_tf=2, n_m=10,
    lr_g=2e-3, lr_d=5e-3, batch_size=2, seed=0,
    pretrain_epochs=700, turns=2,
)


def main() -> int:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "adversarial"
    corpus = load_corpus(ROOT / "data" / "toy_corpus.txt")
    vocab = build_vocabulary(corpus, DESK.s_v)
    pairs = encode_pairs(make_pairs(corpus, DESK.n_u), vocab, DESK.s_s)

    result = adversarial_training(pairs, DESK, LOOP,
                                  sep_index=vocab.sep_index, outdir=outdir)
    for rec in result.history:
        loss = "-" if rec.mean_loss is None else f"{rec.mean_loss:.4f}"
        extra = ""
        if rec.phase == "g_adversarial":
            extra = "  mean_l " + " -> ".join(
                f"{v:.4f}" for v in rec.metrics["mean_l"])
        print(f"epoch {rec.epoch} {rec.phase:16s} loss {loss:>7s} "
              f"({rec.seconds:5.1f}s){extra}")

    fraction = memorized_fraction(pairs, result.pair.gen)
    print(f"post-run memorization: {fraction:.0%}")
    save_model_pair(result.pair, outdir / "model.weights")
    save_vocabulary(vocab, outdir / "vocab.json")
    print(f"model written to {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
