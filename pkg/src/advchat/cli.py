"""Command-line entry points.

Subcommands: train (teacher forcing only), adversarial-train (the full
loop), chat (terminal REPL), selfconv (emit a machine set), rank,
eval-report, serve.

Flags mirror the config dataclass field names.  Precedence, lowest to
highest: built-in defaults, then flags, then the --config JSON file.  The
serve address falls back to $ADVCHAT_ADDR when no flag is given.

Exit codes: 0 success, 1 usage error, 2 data-format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainingConfig
from .corpus import (
    build_vocabulary,
    encode_context,
    encode_pad,
    encode_pairs,
    load_corpus,
    load_pretrained_vectors,
    load_vocabulary,
    make_pairs,
    save_corpus,
    save_vocabulary,
    tokenize,
    indices_to_tokens,
)
from .errors import ConfigError, DimensionError, FormatError, UsageError
from .evaluation import load_votes, rank_answers, report
from .model import init_model_pair, load_model_pair, save_model_pair
from .numerics import AdamState
from .service import ADDR_ENV_VAR, DEFAULT_ADDR, ChatService, make_server
from .training import (
    PhaseRecord,
    adversarial_training,
    memorized_fraction,
    self_conversation,
    teacher_forcing_epoch,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model dimensions")
    for name in ("s_s", "s_v", "s_e", "s_se", "s_sed", "n_u", "head_width"):
        group.add_argument(f"--{name.replace('_', '-')}", dest=name,
                           type=int, default=None)


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    for name in ("adversarial_epochs", "n_g", "n_d", "n_tf", "n_m",
                 "batch_size", "seed", "pretrain_epochs", "turns"):
        group.add_argument(f"--{name.replace('_', '-')}", dest=name,
                           type=int, default=None)
    group.add_argument("--lr-g", dest="lr_g", type=float, default=None)
    group.add_argument("--lr-d", dest="lr_d", type=float, default=None)
    group.add_argument("--train-embedding", dest="train_embedding",
                       action="store_const", const=True, default=None)


def _resolve(args, cls, section: str):
    values = {}
    for f in dataclasses.fields(cls):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    config_path = getattr(args, "config", None)
    if config_path:
        payload = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise FormatError(f"{config_path}: config file must hold a JSON object")
        values.update(payload.get(section, {}))
    return cls.from_dict(values)


def _load_model_dir(path: str):
    model_dir = Path(path)
    pair = load_model_pair(model_dir / "model.weights")
    vocab = load_vocabulary(model_dir / "vocab.json")
    return pair, vocab


def _save_model_dir(pair, vocab, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    save_model_pair(pair, outdir / "model.weights")
    save_vocabulary(vocab, outdir / "vocab.json")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    model_cfg = _resolve(args, ModelConfig, "model")
    train_cfg = _resolve(args, TrainingConfig, "training")
    corpus = load_corpus(args.corpus)
    vocab = build_vocabulary(corpus, model_cfg.s_v)
    pairs = encode_pairs(make_pairs(corpus, model_cfg.n_u), vocab, model_cfg.s_s)
    if not pairs:
        raise UsageError("corpus yields no context/answer pairs")

    rng = np.random.default_rng(train_cfg.seed)
    pretrained = None
    if args.vectors:
        pretrained = load_pretrained_vectors(args.vectors, vocab, model_cfg.s_e, rng)
    pair = init_model_pair(model_cfg, rng, pretrained)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    opt = AdamState()
    log_path = outdir / "history.jsonl"
    stride = max(1, train_cfg.pretrain_epochs // 10)
    import time as _time

    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, train_cfg.pretrain_epochs + 1):
            t0 = _time.perf_counter()
            loss = teacher_forcing_epoch(
                pairs, pair.gen, opt, train_cfg.lr_g,
                train_cfg.batch_size, train_cfg.train_embedding,
            )
            log.write(PhaseRecord(epoch, "teacher_forcing", loss,
                                  _time.perf_counter() - t0).to_json() + "\n")
            if epoch % stride == 0 or epoch == train_cfg.pretrain_epochs:
                print(f"epoch {epoch}/{train_cfg.pretrain_epochs}  "
                      f"mean per-token loss {loss:.4f}")
    _save_model_dir(pair, vocab, outdir)
    print(f"memorized {memorized_fraction(pairs, pair.gen):.0%} of training answers")
    print(f"model written to {outdir}")
    return 0


def cmd_adversarial_train(args) -> int:
    model_cfg = _resolve(args, ModelConfig, "model")
    train_cfg = _resolve(args, TrainingConfig, "training")
    corpus = load_corpus(args.corpus)
    vocab = build_vocabulary(corpus, model_cfg.s_v)
    pairs = encode_pairs(make_pairs(corpus, model_cfg.n_u), vocab, model_cfg.s_s)
    if not pairs:
        raise UsageError("corpus yields no context/answer pairs")

    outdir = Path(args.out)
    result = adversarial_training(pairs, model_cfg, train_cfg,
                                  sep_index=vocab.sep_index, outdir=outdir)
    _save_model_dir(result.pair, vocab, outdir)
    for rec in result.history:
        loss = "-" if rec.mean_loss is None else f"{rec.mean_loss:.4f}"
        print(f"epoch {rec.epoch} {rec.phase}: loss {loss} ({rec.seconds:.1f}s)")
    print(f"memorized {memorized_fraction(pairs, result.pair.gen):.0%} "
          f"of training answers")
    print(f"model written to {outdir}")
    return 0


def _build_service(args) -> ChatService:
    pair, vocab = _load_model_dir(args.model)
    generators = {"a": pair.gen}
    if getattr(args, "model_b", None):
        pair_b = load_model_pair(Path(args.model_b) / "model.weights")
        if pair_b.config.s_v != pair.config.s_v:
            raise DimensionError(
                f"model-b vocabulary size {pair_b.config.s_v} does not match "
                f"{pair.config.s_v}"
            )
        generators["b"] = pair_b.gen
    return ChatService(generators, pair.disc, vocab, pair.config,
                       Path(args.votes))


def cmd_chat(args) -> int:
    service = _build_service(args)
    session = service.create_session()["session_id"]
    print("chat started; type 'quit' to leave")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            break
        if text.lower() in ("quit", "exit"):
            break
        if not text:
            continue
        response = service.chat(session, text)
        for candidate in response["candidates"]:
            score = candidate["score"]
            shown = f" [score {score:.4f}]" if score is not None else ""
            print(f"{candidate['model']}> {candidate['text']}{shown}")
        if response["tie"]:
            print("(discriminator calls this a tie)")
    return 0


def cmd_selfconv(args) -> int:
    train_cfg = _resolve(args, TrainingConfig, "training")
    pair, vocab = _load_model_dir(args.model)
    corpus = load_corpus(args.corpus)
    pairs = encode_pairs(make_pairs(corpus, pair.config.n_u), vocab, pair.config.s_s)
    machine = self_conversation(
        pairs, pair.gen, train_cfg.n_m, train_cfg.turns,
        np.random.default_rng(train_cfg.seed), pair.config.n_u, vocab.sep_index,
    )
    dialogues = [
        [indices_to_tokens(m.x, vocab), indices_to_tokens(m.y, vocab)]
        for m in machine.pairs
    ]
    save_corpus(dialogues, args.out)
    print(f"{len(machine)} machine pairs written to {args.out}")
    return 0


def cmd_rank(args) -> int:
    pair, vocab = _load_model_dir(args.model)
    context = encode_context([tokenize(args.context)], vocab, pair.config.s_s)
    candidates = [
        (f"answer-{i + 1}", encode_pad(tokenize(text), vocab, pair.config.s_s,
                                       with_eos=True))
        for i, text in enumerate(args.answer)
    ]
    ranking = rank_answers(context, candidates, pair.disc,
                           by_probability=args.by_probability)
    for candidate in ranking.candidates:
        print(f"{candidate.model_id}: score {candidate.score:.6f} "
              f"probability {candidate.probability:.6g}")
    print(f"winner: {ranking.winner}")
    return 0


def cmd_eval_report(args) -> int:
    votes = load_votes(args.votes)
    summary = report(votes)
    payload = {
        "human": {
            "counts": summary["human"].counts,
            "percentages": summary["human"].percentages,
            "contested": summary["human"].contested,
        },
        "adversarial": {
            "counts": summary["adversarial"].counts,
            "percentages": summary["adversarial"].percentages,
            "contested": summary["adversarial"].contested,
        },
        "jaccard": summary["jaccard"],
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import os

    service = _build_service(args)
    addr = args.addr or os.environ.get(ADDR_ENV_VAR) or DEFAULT_ADDR
    server = make_server(service, addr, args.ui_dir)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="advchat",
                     description="adversarially trained conversational agent")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="teacher forcing only")
    train.add_argument("--corpus", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--vectors", default=None,
                       help="optional pretrained word-vector text file")
    train.add_argument("--config", default=None)
    _add_model_flags(train)
    _add_training_flags(train)
    train.set_defaults(func=cmd_train)

    adv = sub.add_parser("adversarial-train", help="the full adversarial loop")
    adv.add_argument("--corpus", required=True)
    adv.add_argument("--out", required=True)
    adv.add_argument("--config", default=None)
    _add_model_flags(adv)
    _add_training_flags(adv)
    adv.set_defaults(func=cmd_adversarial_train)

    chat = sub.add_parser("chat", help="terminal REPL against a model dir")
    chat.add_argument("--model", required=True)
    chat.add_argument("--model-b", default=None)
    chat.add_argument("--votes", default="votes.jsonl")
    chat.set_defaults(func=cmd_chat)

    selfconv = sub.add_parser("selfconv", help="emit a machine set to a file")
    selfconv.add_argument("--model", required=True)
    selfconv.add_argument("--corpus", required=True)
    selfconv.add_argument("--out", required=True)
    selfconv.add_argument("--config", default=None)
    _add_training_flags(selfconv)
    selfconv.set_defaults(func=cmd_selfconv)

    rank = sub.add_parser("rank", help="score candidate answers for a context")
    rank.add_argument("--model", required=True)
    rank.add_argument("--context", required=True)
    rank.add_argument("--answer", action="append", required=True)
    rank.add_argument("--by-probability", action="store_true")
    rank.set_defaults(func=cmd_rank)

    eval_report = sub.add_parser("eval-report", help="tally votes and agreement")
    eval_report.add_argument("--votes", required=True)
    eval_report.set_defaults(func=cmd_eval_report)

    serve = sub.add_parser("serve", help="run the HTTP/JSON service")
    serve.add_argument("--model", required=True)
    serve.add_argument("--model-b", default=None)
    serve.add_argument("--votes", default="votes.jsonl")
    serve.add_argument("--addr", default=None,
                       help=f"host:port (or ${ADDR_ENV_VAR})")
    serve.add_argument("--ui-dir", default=None)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (FormatError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
