"""Desk-scale memorization run on the bundled toy corpus.

Teacher-forces the generator until the mean per-token cross-entropy drops
under 0.1 and at least 90% of training answers decode exactly, then writes
the model directory.  Takes well under a minute.

Usage: python scripts/train_toy.py [outdir]
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from advchat.config import ModelConfig
from advchat.corpus import (
    build_vocabulary,
    encode_pairs,
    load_corpus,
    make_pairs,
    save_vocabulary,
)
from advchat.model import init_model_pair, save_model_pair
from advchat.numerics import AdamState
from advchat.training import memorized_fraction, teacher_forcing_epoch

ROOT = Path(__file__).resolve().parent.parent
DESK = ModelConfig(s_s=12, s_v=120, s_e=16, s_se=32, s_sed=32, n_u=2)


def main() -> int:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "toy"
    corpus = load_corpus(ROOT / "data" / "toy_corpus.txt")
    vocab = build_vocabulary(corpus, DESK.s_v)
    pairs = encode_pairs(make_pairs(corpus, DESK.n_u), vocab, DESK.s_s)
    print(f"{len(corpus)} dialogues, {len(pairs)} pairs, vocabulary {vocab.size}")

    pair = init_model_pair(DESK, np.random.default_rng(0))
    opt = AdamState()
    started = time.perf_counter()
    for epoch in range(1, 501):
        loss = teacher_forcing_epoch(pairs, pair.gen, opt, lr=1e-2, batch_size=2)
        if epoch % 25 == 0 or loss < 0.1:
            fraction = memorized_fraction(pairs, pair.gen)
            print(f"epoch {epoch:3d}  loss {loss:.4f}  memorized {fraction:.0%}")
            if loss < 0.1 and fraction >= 0.9:
                break
    print(f"done in {time.perf_counter() - started:.0f}s")

    outdir.mkdir(parents=True, exist_ok=True)
    save_model_pair(pair, outdir / "model.weights")
    save_vocabulary(vocab, outdir / "vocab.json")
    print(f"model written to {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
