"""Dialogue corpus ingestion, vocabulary, sequence encoding and persistence.

File formats owned by this module:

* corpus files: UTF-8 text, one utterance per line, blank line between
  dialogues;
* pretrained word vectors: ``token f1 f2 ... f_{s_e}`` per line;
* weight files: binary, magic + version + JSON config block + named
  parameter blocks (row-major little-endian float64), bit-exact round trip;
* vocabulary files: a JSON array of tokens in index order.

All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import re
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ModelConfig
from .errors import ConfigError, DimensionError, FormatError
from .numerics import Parameter

PAD, BOS, EOS, UNK = 0, 1, 2, 3
PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)
SEP_TOKEN = "<sep>"

# One dialogue is a list of utterances, oldest first; one utterance is a
# list of tokens.
Dialogue = list

_TOKEN_RE = re.compile(r"[.,!?']|[^\s.,!?']+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split; . , ! ? ' become standalone tokens."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocabulary:
    """Bidirectional token/index map with the four reserved indices."""

    index_to_token: list[str]
    token_to_index: dict[str, int]

    @classmethod
    def from_tokens(cls, regular_tokens: Sequence[str]) -> "Vocabulary":
        index_to_token = list(RESERVED_TOKENS) + list(regular_tokens)
        token_to_index = {t: i for i, t in enumerate(index_to_token)}
        if len(token_to_index) != len(index_to_token):
            raise ConfigError("vocabulary tokens are not unique")
        return cls(index_to_token, token_to_index)

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_index.get(token, UNK)

    def token(self, index: int) -> str:
        return self.index_to_token[index]

    @property
    def sep_index(self) -> int | None:
        return self.token_to_index.get(SEP_TOKEN)


def build_vocabulary(corpus: Sequence[Dialogue], s_v: int) -> Vocabulary:
    """Frequency-ranked vocabulary over a corpus.

    The s_v - 4 most frequent tokens take indices 4 .. s_v - 1, frequency
    descending with lexicographic tie-break.  The separator token counts one
    occurrence per adjacent-utterance boundary, since that is how often it
    appears in concatenated contexts.
    """
    if s_v < 5:
        raise ConfigError(f"s_v must be at least 5, got {s_v}")
    if not corpus:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    for dialogue in corpus:
        for utterance in dialogue:
            counts.update(utterance)
        if len(dialogue) >= 2:
            counts[SEP_TOKEN] += len(dialogue) - 1
    for reserved in RESERVED_TOKENS:
        counts.pop(reserved, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary.from_tokens([t for t, _ in ranked[: s_v - 4]])


@dataclass
class EncodedSequence:
    """Fixed-length index vector with its count of real (non-PAD) tokens."""

    indices: np.ndarray
    effective_length: int

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if not 0 <= self.effective_length <= self.indices.size:
            raise DimensionError(
                f"effective_length {self.effective_length} out of range "
                f"for {self.indices.size} slots"
            )

    @property
    def s_s(self) -> int:
        return int(self.indices.size)

    def real(self) -> np.ndarray:
        return self.indices[: self.effective_length]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncodedSequence):
            return NotImplemented
        return (
            self.effective_length == other.effective_length
            and np.array_equal(self.indices, other.indices)
        )


def encode_pad(
    tokens: Sequence[str], vocab: Vocabulary, s_s: int, with_eos: bool
) -> EncodedSequence:
    """Map tokens to indices (UNK for misses), append EOS if asked,
    truncate to s_s and pad the tail with zeros."""
    ids = [vocab.lookup(t) for t in tokens]
    if with_eos:
        ids.append(EOS)
    ids = ids[:s_s]
    out = np.zeros(s_s, dtype=np.int64)
    out[: len(ids)] = ids
    return EncodedSequence(out, len(ids))


def encode_indices(ids: Sequence[int], s_s: int) -> EncodedSequence:
    """Pad an already-encoded token-index list out to s_s slots."""
    ids = list(ids)[:s_s]
    out = np.zeros(s_s, dtype=np.int64)
    out[: len(ids)] = ids
    return EncodedSequence(out, len(ids))


def encode_context(
    utterances: Sequence[Sequence[str]], vocab: Vocabulary, s_s: int
) -> EncodedSequence:
    """Concatenate context utterances, oldest first, separated by <sep>."""
    tokens: list[str] = []
    for i, utterance in enumerate(utterances):
        if i:
            tokens.append(SEP_TOKEN)
        tokens.extend(utterance)
    return encode_pad(tokens, vocab, s_s, with_eos=False)


def indices_to_tokens(
    seq: EncodedSequence, vocab: Vocabulary, strip_eos: bool = True
) -> list[str]:
    ids = seq.real().tolist()
    if strip_eos:
        ids = [i for i in ids if i != EOS]
    return [vocab.token(i) for i in ids]


@dataclass
class DialoguePair:
    """A training unit: up to n_u context utterances and the answer."""

    context: list
    answer: list


@dataclass
class EncodedPair:
    x: EncodedSequence
    y: EncodedSequence


def make_pairs(corpus: Sequence[Dialogue], n_u: int) -> list[DialoguePair]:
    """Every utterance after the first becomes an answer; its context is the
    previous n_u utterances, oldest first."""
    if n_u < 1:
        raise ConfigError(f"n_u must be at least 1, got {n_u}")
    pairs = []
    for dialogue in corpus:
        for k in range(1, len(dialogue)):
            context = [list(u) for u in dialogue[max(0, k - n_u): k]]
            pairs.append(DialoguePair(context, list(dialogue[k])))
    return pairs


def encode_pairs(
    pairs: Sequence[DialoguePair], vocab: Vocabulary, s_s: int
) -> list[EncodedPair]:
    return [
        EncodedPair(
            encode_context(p.context, vocab, s_s),
            encode_pad(p.answer, vocab, s_s, with_eos=True),
        )
        for p in pairs
    ]


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------


def load_corpus(path) -> list[Dialogue]:
    """One utterance per line, blank line between dialogues."""
    corpus: list[Dialogue] = []
    current: Dialogue = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            current.append(tokenize(line))
        elif current:
            corpus.append(current)
            current = []
    if current:
        corpus.append(current)
    return corpus


def save_corpus(corpus: Sequence[Dialogue], path) -> None:
    chunks = ["\n".join(detokenize(u) for u in dialogue) for dialogue in corpus]
    _atomic_write_text(Path(path), "\n\n".join(chunks) + "\n")


# ---------------------------------------------------------------------------
# pretrained word vectors
# ---------------------------------------------------------------------------


def load_pretrained_vectors(
    path, vocab: Vocabulary, s_e: int, rng: np.random.Generator
) -> np.ndarray:
    """Build the (s_e, s_v) embedding from a plain-text vector file.

    Tokens found in the file get their stored vector; missing tokens get a
    seeded uniform draw in [-0.05, 0.05]; the PAD column stays all zeros.
    """
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != s_e:
                raise FormatError(
                    f"{path}: line {lineno}: expected {s_e} floats after the "
                    f"token, found {len(values)}"
                )
            if token in vocab.token_to_index:
                vectors[token] = np.array([float(v) for v in values])
    out = np.zeros((s_e, vocab.size))
    for j in range(vocab.size):
        if j == PAD:
            continue
        token = vocab.token(j)
        if token in vectors:
            out[:, j] = vectors[token]
        else:
            out[:, j] = rng.uniform(-0.05, 0.05, s_e)
    return out


# ---------------------------------------------------------------------------
# weight files
# ---------------------------------------------------------------------------

WEIGHTS_MAGIC = b"ACWT"
WEIGHTS_VERSION = 1


def save_weights(named_params: dict[str, Parameter], config: ModelConfig, path) -> None:
    """Write a weight file: magic, version, config JSON, named blocks."""
    buf = bytearray()
    buf += WEIGHTS_MAGIC
    buf += struct.pack("<I", WEIGHTS_VERSION)
    cfg = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    buf += struct.pack("<I", len(cfg))
    buf += cfg
    buf += struct.pack("<I", len(named_params))
    for name, p in named_params.items():
        nb = name.encode("utf-8")
        buf += struct.pack("<I", len(nb))
        buf += nb
        buf += struct.pack("<B", 1 if p.trainable else 0)
        buf += struct.pack("<I", p.data.ndim)
        for extent in p.data.shape:
            buf += struct.pack("<Q", extent)
        buf += np.ascontiguousarray(p.data, dtype="<f8").tobytes()
    _atomic_write_bytes(Path(path), bytes(buf))


class _Reader:
    def __init__(self, blob: bytes, path) -> None:
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(
                f"{self.path}: truncated at offset {self.off} "
                f"(needed {n} more bytes, {len(self.blob) - self.off} left)"
            )
        out = self.blob[self.off: self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]


def load_weights(
    path, expect_config: ModelConfig | None = None
) -> tuple[dict[str, Parameter], ModelConfig]:
    """Read a weight file back into fresh Parameters; errors name the offset."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0")
    version = r.u32()
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at offset 4")
    config = ModelConfig.from_dict(json.loads(r.take(r.u32()).decode("utf-8")))
    if expect_config is not None and config != expect_config:
        raise DimensionError(
            f"{path}: stored config {config} does not match requested {expect_config}"
        )
    params: dict[str, Parameter] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        trainable = bool(r.u8())
        shape = tuple(r.u64() for _ in range(r.u32()))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).copy()
        params[name] = Parameter(data, name, trainable=trainable)
    if r.off != len(r.blob):
        raise FormatError(f"{path}: {len(r.blob) - r.off} trailing bytes at offset {r.off}")
    return params, config


# ---------------------------------------------------------------------------
# vocabulary files
# ---------------------------------------------------------------------------


def save_vocabulary(vocab: Vocabulary, path) -> None:
    _atomic_write_text(Path(path), json.dumps(vocab.index_to_token, ensure_ascii=False))


def load_vocabulary(path) -> Vocabulary:
    tokens = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(tokens, list) or tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
        raise FormatError(f"{path}: not a vocabulary file (reserved prefix missing)")
    return Vocabulary.from_tokens(tokens[len(RESERVED_TOKENS):])


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
