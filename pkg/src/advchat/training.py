"""Teacher forcing, self-conversation, and the adversarial training loop.

The loop alternates four phases per adversarial epoch, in order: regenerate
the machine set from the current generator by self-conversation, train the
discriminator on human-vs-machine token examples, update the generator
through the frozen discriminator toward all-ones targets, then interleave
teacher forcing on the human set so the memorized answers survive.

Everything is driven by one seeded generator-of-randomness, so a run is
reproducible bit for bit from (corpus, config, seed).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ModelConfig, TrainingConfig
from .corpus import BOS, EOS, EncodedPair, EncodedSequence, encode_indices
from .errors import UsageError
from .model import (
    DiscriminatorParams,
    GeneratorParams,
    ModelPair,
    combined_step_outputs,
    discriminator_step_outputs,
    generator_step_distributions,
    greedy_decode,
    init_model_pair,
    one_hot,
    params_digest,
    save_model_pair,
)
from .numerics import (
    AdamState,
    Tape,
    adam_step,
    add_n,
    backward,
    binary_ce,
    categorical_ce,
    mse,
    zero_grad,
)


def _batches(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start: start + size]


def set_trainable(params, flag: bool) -> None:
    for p in params:
        p.trainable = flag


# ---------------------------------------------------------------------------
# teacher forcing
# ---------------------------------------------------------------------------


def teacher_forcing_epoch(
    pairs: Sequence[EncodedPair],
    gen: GeneratorParams,
    opt: AdamState,
    lr: float,
    batch_size: int = 4,
    train_embedding: bool = False,
) -> float:
    """One pass over the human pairs with cross-entropy against each gold
    token, one Adam step per batch; returns the mean per-token loss.

    PAD positions never contribute: the walk stops at the answer's effective
    length, so padding a gold answer changes nothing.
    """
    if not pairs:
        raise UsageError("teacher forcing needs a non-empty pair list")
    emb = gen.embedding
    stepped = gen.own_parameters() + ([emb] if train_embedding else [])
    was_trainable = emb.trainable
    emb.trainable = train_embedding
    total = 0.0
    tokens = 0
    try:
        for batch in _batches(list(pairs), batch_size):
            zero_grad(stepped + [emb])
            for pair in batch:
                if pair.y.effective_length == 0:
                    continue
                s_v = gen.embedding.shape[1]
                with Tape() as tape:
                    losses = [
                        categorical_ce(p, one_hot(int(pair.y.indices[i]), s_v))
                        for i, p in generator_step_distributions(pair.x, pair.y, gen)
                    ]
                    loss = add_n(losses)
                backward(tape, loss)
                total += loss.item()
                tokens += len(losses)
            adam_step(stepped, opt, lr)
    finally:
        emb.trainable = was_trainable
    return total / max(tokens, 1)


# ---------------------------------------------------------------------------
# self-conversation
# ---------------------------------------------------------------------------


@dataclass
class MachinePair:
    """One machine-generated training unit: the human seed context, the
    generator's reply to it (used as the machine context), and the
    generator's answer to its own reply."""

    seed: EncodedSequence
    x: EncodedSequence
    y: EncodedSequence


@dataclass
class MachineSet:
    pairs: list[MachinePair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for p in self.pairs:
            for seq in (p.seed, p.x, p.y):
                h.update(seq.indices.tobytes())
                h.update(seq.effective_length.to_bytes(4, "little"))
        return h.hexdigest()


def _split_utterances(seq: EncodedSequence, sep_index: int | None) -> list[list[int]]:
    ids = seq.real().tolist()
    if sep_index is None:
        return [ids]
    out: list[list[int]] = [[]]
    for i in ids:
        if i == sep_index:
            out.append([])
        else:
            out[-1].append(i)
    return out


def _join_utterances(
    utterances: Sequence[Sequence[int]], sep_index: int | None, s_s: int
) -> EncodedSequence:
    ids: list[int] = []
    for k, u in enumerate(utterances):
        if k and sep_index is not None:
            ids.append(sep_index)
        ids.extend(u)
    return encode_indices(ids, s_s)


def _without_eos(seq: EncodedSequence) -> list[int]:
    return [i for i in seq.real().tolist() if i != EOS]


def self_conversation(
    h_pairs: Sequence[EncodedPair],
    gen: GeneratorParams,
    n_m: int,
    turns: int,
    rng: np.random.Generator,
    n_u: int,
    sep_index: int | None = None,
) -> MachineSet:
    """Build the machine set by letting the generator talk to itself.

    Seeds are human contexts drawn by seeded shuffle, cycling when
    exhausted.  Each seed is answered, the answer folded into the rolling
    context window (last n_u utterances), and the process repeated ``turns``
    times; the emitted pair is (second-to-last utterance as the context, the
    final decoded answer).
    """
    if not h_pairs:
        raise UsageError("self-conversation needs a non-empty seed set")
    if turns < 1:
        raise UsageError(f"turns must be at least 1, got {turns}")
    order = [h_pairs[int(j)] for j in rng.permutation(len(h_pairs))]
    out: list[MachinePair] = []
    for i in range(n_m):
        seed = order[i % len(order)].x
        utterances = _split_utterances(seed, sep_index)
        decodes = []
        for _ in range(turns):
            context = _join_utterances(utterances[-n_u:], sep_index, seed.s_s)
            result = greedy_decode(context, gen)
            decodes.append(result)
            utterances.append(_without_eos(result.answer))
        machine_context = _join_utterances([utterances[-2]], sep_index, seed.s_s)
        out.append(MachinePair(seed=seed, x=machine_context, y=decodes[-1].answer))
    return MachineSet(out)


# ---------------------------------------------------------------------------
# discriminator training
# ---------------------------------------------------------------------------


def _labelled_examples(h_pairs, machine: MachineSet):
    examples = [(p.x, p.y, 1.0) for p in h_pairs]
    examples += [(p.x, p.y, 0.0) for p in machine.pairs]
    return examples


def train_discriminator(
    h_pairs: Sequence[EncodedPair],
    machine: MachineSet,
    disc: DiscriminatorParams,
    n_d: int,
    lr: float,
    opt: AdamState | None = None,
    batch_size: int = 4,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Token-level binary cross-entropy over H (label 1) and M (label 0)
    for n_d epochs; the shared embedding is never updated here.  Returns the
    mean per-token loss of each epoch."""
    if not h_pairs or not len(machine):
        raise UsageError("discriminator training needs both H and M examples")
    opt = opt if opt is not None else AdamState()
    examples = _labelled_examples(h_pairs, machine)
    stepped = disc.own_parameters()
    emb = disc.embedding
    was_trainable = emb.trainable
    emb.trainable = False
    epoch_losses: list[float] = []
    try:
        for _ in range(n_d):
            if rng is not None:
                ordered = [examples[int(j)] for j in rng.permutation(len(examples))]
            else:
                ordered = examples
            total = 0.0
            count = 0
            for batch in _batches(ordered, batch_size):
                zero_grad(stepped + [emb])
                for x, y, label in batch:
                    if y.effective_length == 0:
                        continue
                    with Tape() as tape:
                        losses = [
                            binary_ce(l, np.array([label]))
                            for _, l in discriminator_step_outputs(x, y, disc)
                        ]
                        loss = add_n(losses)
                    backward(tape, loss)
                    total += loss.item()
                    count += len(losses)
                adam_step(stepped, opt, lr)
            epoch_losses.append(total / max(count, 1))
    finally:
        emb.trainable = was_trainable
    return epoch_losses


def token_accuracy(
    h_pairs: Sequence[EncodedPair], machine: MachineSet, disc: DiscriminatorParams
) -> float:
    """Fraction of token examples the discriminator labels correctly at the
    0.5 threshold."""
    correct = 0
    count = 0
    for x, y, label in _labelled_examples(h_pairs, machine):
        for _, l in discriminator_step_outputs(x, y, disc):
            predicted = 1.0 if float(l.data[0]) > 0.5 else 0.0
            correct += int(predicted == label)
            count += 1
    return correct / max(count, 1)


# ---------------------------------------------------------------------------
# generator update through the frozen discriminator
# ---------------------------------------------------------------------------


def mean_discriminator_output(
    machine: MachineSet, gen: GeneratorParams, disc: DiscriminatorParams
) -> float:
    """Mean l over every machine token, with the generator's distribution in
    the discriminator's current-token slot."""
    total = 0.0
    count = 0
    for pair in machine.pairs:
        for _, _, l in combined_step_outputs(pair.x, pair.y, gen, disc):
            total += float(l.data[0])
            count += 1
    return total / max(count, 1)


def adversarial_generator_update(
    machine: MachineSet,
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    n_g: int,
    lr: float,
    opt: AdamState | None = None,
    batch_size: int = 4,
    train_embedding: bool = False,
) -> tuple[list[float], list[float]]:
    """Update the generator so the frozen discriminator reads its tokens as
    human: MSE of l against all-ones targets, n_g epochs over M.

    The discriminator must already be frozen; every one of its parameters is
    bit-identical afterwards.  Returns (per-epoch mean MSE, mean l measured
    before the first and after every epoch).
    """
    frozen = disc.own_parameters()
    if any(p.trainable for p in frozen):
        raise UsageError("discriminator must be frozen before a generator update")
    if not len(machine):
        raise UsageError("generator update needs a non-empty machine set")
    opt = opt if opt is not None else AdamState()
    emb = gen.embedding
    stepped = gen.own_parameters() + ([emb] if train_embedding else [])
    was_trainable = emb.trainable
    emb.trainable = train_embedding
    target = np.ones(1)
    epoch_losses: list[float] = []
    mean_l = [mean_discriminator_output(machine, gen, disc)]
    try:
        for _ in range(n_g):
            total = 0.0
            count = 0
            for batch in _batches(machine.pairs, batch_size):
                zero_grad(stepped + [emb] + frozen)
                for pair in batch:
                    if pair.y.effective_length == 0:
                        continue
                    with Tape() as tape:
                        losses = [
                            mse(l, target)
                            for _, _, l in combined_step_outputs(
                                pair.x, pair.y, gen, disc
                            )
                        ]
                        loss = add_n(losses)
                    backward(tape, loss)
                    total += loss.item()
                    count += len(losses)
                adam_step(stepped, opt, lr)
            epoch_losses.append(total / max(count, 1))
            mean_l.append(mean_discriminator_output(machine, gen, disc))
    finally:
        emb.trainable = was_trainable
    return epoch_losses, mean_l


# ---------------------------------------------------------------------------
# the full loop
# ---------------------------------------------------------------------------


@dataclass
class PhaseRecord:
    epoch: int  # 0 is the initial pretraining phase
    phase: str  # pretrain | selfconv | d_train | g_adversarial | teacher_forcing
    mean_loss: float | None
    seconds: float
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "epoch": self.epoch,
            "phase": self.phase,
            "mean_loss": self.mean_loss,
            "seconds": round(self.seconds, 6),
        }
        payload.update(self.metrics)
        return json.dumps(payload, sort_keys=True)


@dataclass
class AdversarialResult:
    pair: ModelPair
    history: list[PhaseRecord]
    checkpoints: list[Path]


EPOCH_PHASES = ("selfconv", "d_train", "g_adversarial", "teacher_forcing")


def adversarial_training(
    h_pairs: Sequence[EncodedPair],
    model_config: ModelConfig,
    train_config: TrainingConfig,
    sep_index: int | None = None,
    outdir: Path | str | None = None,
    log_name: str = "history.jsonl",
) -> AdversarialResult:
    """The end-to-end adversarial loop.

    Pretrain the generator by teacher forcing, then per epoch: regenerate M
    from the current generator, train D on H-vs-M token labels, freeze D and
    push G toward all-ones through it, unfreeze, and interleave teacher
    forcing on H.  Generator and discriminator live in one shared-embedding
    model pair, so the weight "imports" between phases are by reference;
    digests recorded in the history prove the shared view stayed bit-exact.
    """
    cfg = train_config
    rng = np.random.default_rng(cfg.seed)
    pair = init_model_pair(model_config, rng)
    history: list[PhaseRecord] = []
    checkpoints: list[Path] = []
    opt_tf = AdamState()
    opt_d = AdamState()
    opt_adv = AdamState()
    log_path = None
    if outdir is not None:
        outdir = Path(outdir)
        (outdir / "checkpoints").mkdir(parents=True, exist_ok=True)
        log_path = outdir / log_name
        log_path.write_text("")

    def record(rec: PhaseRecord) -> None:
        history.append(rec)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")

    started = time.perf_counter()
    losses = [
        teacher_forcing_epoch(h_pairs, pair.gen, opt_tf, cfg.lr_g,
                              cfg.batch_size, cfg.train_embedding)
        for _ in range(cfg.pretrain_epochs)
    ]
    record(PhaseRecord(0, "pretrain", losses[-1], time.perf_counter() - started,
                       {"epochs": cfg.pretrain_epochs, "first_loss": losses[0]}))

    for epoch in range(1, cfg.adversarial_epochs + 1):
        t0 = time.perf_counter()
        machine = self_conversation(
            h_pairs, pair.gen, cfg.n_m, cfg.turns, rng, model_config.n_u, sep_index
        )
        record(PhaseRecord(epoch, "selfconv", None, time.perf_counter() - t0,
                           {"m_digest": machine.digest(), "size": len(machine)}))

        t0 = time.perf_counter()
        d_losses = train_discriminator(
            h_pairs, machine, pair.disc, cfg.n_d, cfg.lr_d,
            opt_d, cfg.batch_size, rng,
        )
        record(PhaseRecord(epoch, "d_train", d_losses[-1],
                           time.perf_counter() - t0, {"epoch_losses": d_losses}))

        t0 = time.perf_counter()
        digest_before = params_digest(pair.disc.named_parameters())
        set_trainable(pair.disc.own_parameters(), False)
        try:
            g_losses, mean_l = adversarial_generator_update(
                machine, pair.gen, pair.disc, cfg.n_g, cfg.lr_g,
                opt_adv, cfg.batch_size, cfg.train_embedding,
            )
        finally:
            set_trainable(pair.disc.own_parameters(), True)
        digest_after = params_digest(pair.disc.named_parameters())
        record(PhaseRecord(epoch, "g_adversarial", g_losses[-1],
                           time.perf_counter() - t0,
                           {"mean_l": mean_l,
                            "d_digest_before": digest_before,
                            "d_digest_after": digest_after}))

        t0 = time.perf_counter()
        tf_losses = [
            teacher_forcing_epoch(h_pairs, pair.gen, opt_tf, cfg.lr_g,
                                  cfg.batch_size, cfg.train_embedding)
            for _ in range(cfg.n_tf)
        ]
        record(PhaseRecord(epoch, "teacher_forcing", tf_losses[-1],
                           time.perf_counter() - t0, {"epochs": cfg.n_tf}))

        if outdir is not None:
            path = Path(outdir) / "checkpoints" / f"epoch_{epoch:03d}.weights"
            save_model_pair(pair, path)
            checkpoints.append(path)

    return AdversarialResult(pair, history, checkpoints)


def memorized_fraction(
    h_pairs: Sequence[EncodedPair], gen: GeneratorParams
) -> float:
    """Fraction of training pairs whose greedy decode reproduces the gold
    answer token-exactly, EOS included."""
    if not h_pairs:
        return 0.0
    hits = 0
    for pair in h_pairs:
        if greedy_decode(pair.x, gen).answer == pair.y:
            hits += 1
    return hits / len(h_pairs)
