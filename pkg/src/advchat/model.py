"""The generator, the token-level discriminator, and answer scoring.

The generator runs two LSTMs over the shared word embedding — one for the
dialogue context, one for the incomplete answer — and feeds the concatenated
sentence embeddings through dense layers to a next-token distribution.  The
context sentence embedding is part of the input at *every* decoding step,
never just the decoder's initial state.

The discriminator mirrors the structure with its own pair of LSTMs and one
sigmoid output unit over [current-token vector, context embedding, answer
embedding].  Its per-token outputs compose into an answer probability (chain
rule) and a length-normalized geometric-mean score.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .corpus import BOS, EOS, PAD, EncodedSequence, encode_indices
from .errors import DimensionError, UsageError
from .numerics import (
    PROB_EPS,
    Parameter,
    Tensor,
    add,
    affine,
    column,
    concat,
    gather_columns,
    mul,
    relu,
    sigmoid,
    softmax,
    tanh,
)

WEIGHT_INIT_RANGE = 0.08
FORGET_BIAS_INIT = 1.0

_GATE_NAMES = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g")


@dataclass
class LstmParams:
    """Input/forget/output/candidate gate weights, each (s_h, s_in + s_h),
    with one (s_h,) bias per gate.  The input slice of each weight matrix
    comes first, the recurrent slice second."""

    w_i: Parameter
    w_f: Parameter
    w_o: Parameter
    w_g: Parameter
    b_i: Parameter
    b_f: Parameter
    b_o: Parameter
    b_g: Parameter

    @property
    def hidden_size(self) -> int:
        return self.b_i.shape[0]

    def named(self, prefix: str) -> dict[str, Parameter]:
        return {f"{prefix}.{g}": getattr(self, g) for g in _GATE_NAMES}

    def parameters(self) -> list[Parameter]:
        return [getattr(self, g) for g in _GATE_NAMES]


def init_lstm(s_in: int, s_h: int, rng: np.random.Generator, prefix: str) -> LstmParams:
    """Uniform weight init; forget-gate bias starts at 1 for gradient flow."""
    kw = {}
    for g in ("w_i", "w_f", "w_o", "w_g"):
        kw[g] = Parameter(
            rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, (s_h, s_in + s_h)),
            f"{prefix}.{g}",
        )
    for g in ("b_i", "b_o", "b_g"):
        kw[g] = Parameter(np.zeros(s_h), f"{prefix}.{g}")
    kw["b_f"] = Parameter(np.full(s_h, FORGET_BIAS_INIT), f"{prefix}.b_f")
    return LstmParams(**kw)


LstmState = tuple[Tensor, Tensor]  # (hidden, cell)


def lstm_initial_state(s_h: int) -> LstmState:
    return Tensor(np.zeros(s_h)), Tensor(np.zeros(s_h))


def lstm_step(x_t: Tensor, state: LstmState, params: LstmParams) -> LstmState:
    h_prev, c_prev = state
    z = concat([x_t, h_prev])
    gate_i = sigmoid(affine(params.w_i, z, params.b_i))
    gate_f = sigmoid(affine(params.w_f, z, params.b_f))
    gate_o = sigmoid(affine(params.w_o, z, params.b_o))
    cand = tanh(affine(params.w_g, z, params.b_g))
    c = add(mul(gate_f, c_prev), mul(gate_i, cand))
    h = mul(gate_o, tanh(c))
    return h, c


def lstm_encode(matrix: Tensor, params: LstmParams, mask: int) -> Tensor:
    """Final hidden state over columns 0..mask-1; PAD steps are never run."""
    if mask == 0:
        return Tensor(np.zeros(params.hidden_size))
    state = lstm_initial_state(params.hidden_size)
    for t in range(mask):
        state = lstm_step(column(matrix, t), state, params)
    return state[0]


@dataclass
class GeneratorParams:
    """The shared embedding, two sentence-encoder LSTMs and the dense head."""

    embedding: Parameter  # (s_e, s_v); PAD column pinned to zero
    ctx: LstmParams
    ans: LstmParams
    w1: Parameter  # (h, 2 * s_se)
    b1: Parameter
    w2: Parameter  # (s_v, h)
    b2: Parameter

    def named_parameters(self) -> dict[str, Parameter]:
        out = {"embedding": self.embedding}
        out.update(self.ctx.named("gen.ctx"))
        out.update(self.ans.named("gen.ans"))
        out.update({"gen.w1": self.w1, "gen.b1": self.b1,
                    "gen.w2": self.w2, "gen.b2": self.b2})
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def own_parameters(self) -> list[Parameter]:
        """The generator weights updated by training, embedding excluded."""
        return self.ctx.parameters() + self.ans.parameters() + [
            self.w1, self.b1, self.w2, self.b2,
        ]


@dataclass
class DiscriminatorParams:
    """Two sentence-encoder LSTMs plus one sigmoid unit; embedding shared."""

    embedding: Parameter
    ctx: LstmParams
    ans: LstmParams
    w_d: Parameter  # (1, s_v + 2 * s_sed)
    b_d: Parameter  # (1,)

    def named_parameters(self) -> dict[str, Parameter]:
        out = {"embedding": self.embedding}
        out.update(self.ctx.named("disc.ctx"))
        out.update(self.ans.named("disc.ans"))
        out.update({"disc.w_d": self.w_d, "disc.b_d": self.b_d})
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def own_parameters(self) -> list[Parameter]:
        return self.ctx.parameters() + self.ans.parameters() + [self.w_d, self.b_d]


def make_embedding(
    config: ModelConfig,
    rng: np.random.Generator,
    pretrained: np.ndarray | None = None,
) -> Parameter:
    if pretrained is not None:
        if pretrained.shape != (config.s_e, config.s_v):
            raise DimensionError(
                f"pretrained embedding is {pretrained.shape}, "
                f"config wants {(config.s_e, config.s_v)}"
            )
        data = pretrained.copy()
    else:
        data = rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE,
                           (config.s_e, config.s_v))
    data[:, PAD] = 0.0
    return Parameter(data, "embedding")


def init_generator(
    config: ModelConfig, rng: np.random.Generator, embedding: Parameter | None = None
) -> GeneratorParams:
    if embedding is None:
        embedding = make_embedding(config, rng)
    ctx = init_lstm(config.s_e, config.s_se, rng, "gen.ctx")
    ans = init_lstm(config.s_e, config.s_se, rng, "gen.ans")
    h = config.h
    w1 = Parameter(rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE,
                               (h, 2 * config.s_se)), "gen.w1")
    b1 = Parameter(np.zeros(h), "gen.b1")
    w2 = Parameter(rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE,
                               (config.s_v, h)), "gen.w2")
    b2 = Parameter(np.zeros(config.s_v), "gen.b2")
    return GeneratorParams(embedding, ctx, ans, w1, b1, w2, b2)


def init_discriminator(
    config: ModelConfig, rng: np.random.Generator, embedding: Parameter
) -> DiscriminatorParams:
    ctx = init_lstm(config.s_e, config.s_sed, rng, "disc.ctx")
    ans = init_lstm(config.s_e, config.s_sed, rng, "disc.ans")
    w_d = Parameter(rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE,
                                (1, config.s_v + 2 * config.s_sed)), "disc.w_d")
    b_d = Parameter(np.zeros(1), "disc.b_d")
    return DiscriminatorParams(embedding, ctx, ans, w_d, b_d)


@dataclass
class ModelPair:
    """A generator and discriminator sharing one embedding object."""

    gen: GeneratorParams
    disc: DiscriminatorParams
    config: ModelConfig

    def __post_init__(self) -> None:
        if self.gen.embedding is not self.disc.embedding:
            raise UsageError("generator and discriminator must share one embedding")

    def named_parameters(self) -> dict[str, Parameter]:
        out = self.gen.named_parameters()
        out.update(self.disc.named_parameters())
        return out

    def all_parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())


def init_model_pair(
    config: ModelConfig,
    rng: np.random.Generator,
    pretrained_embedding: np.ndarray | None = None,
) -> ModelPair:
    embedding = make_embedding(config, rng, pretrained_embedding)
    gen = init_generator(config, rng, embedding)
    disc = init_discriminator(config, rng, embedding)
    return ModelPair(gen, disc, config)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def embed(seq: EncodedSequence, embedding: Parameter) -> Tensor:
    """Column t of the result is the embedding of token seq[t]; equivalent to
    embedding @ one-hot-matrix without materializing the one-hots."""
    return gather_columns(embedding, seq.indices, skip_index=PAD)


def token_embedding(index: int, embedding: Parameter) -> Tensor:
    return column(gather_columns(embedding, [index], skip_index=PAD), 0)


def generator_head(params: GeneratorParams, e_c: Tensor, e_a: Tensor) -> Tensor:
    hidden = relu(affine(params.w1, concat([e_c, e_a]), params.b1))
    return softmax(affine(params.w2, hidden, params.b2))


def generator_forward(
    x: EncodedSequence, y_partial: EncodedSequence, params: GeneratorParams
) -> Tensor:
    """Next-token distribution given the context and the answer so far.

    The context embedding e_c is recomputed here on every call, so each
    decoding step conditions on the full dialogue history, not on a decayed
    initial state.
    """
    if y_partial.effective_length < 1 or y_partial.indices[0] != BOS:
        raise UsageError("y_partial must begin with BOS")
    e_c = lstm_encode(embed(x, params.embedding), params.ctx, x.effective_length)
    e_a = lstm_encode(embed(y_partial, params.embedding), params.ans,
                      y_partial.effective_length)
    return generator_head(params, e_c, e_a)


@dataclass
class DecodeResult:
    """A decoded answer (EOS-terminated unless the length cap hit), its
    conditional probability, and the per-step max probabilities."""

    answer: EncodedSequence
    probability: float
    step_probabilities: list[float]


def greedy_decode(x: EncodedSequence, params: GeneratorParams) -> DecodeResult:
    """Argmax decoding: grow the answer one max-probability token at a time,
    multiplying the running probability, until EOS or s_s - 1 tokens.

    The context embedding is computed once and reused unchanged; the answer
    LSTM state is carried forward across steps, which yields exactly the
    same numbers as re-encoding the prefix from scratch.
    """
    s_s = x.s_s
    e_c = lstm_encode(embed(x, params.embedding), params.ctx, x.effective_length)
    state = lstm_initial_state(params.ans.hidden_size)
    last = BOS
    tokens: list[int] = []
    probs: list[float] = []
    probability = 1.0
    while len(tokens) < s_s - 1:
        state = lstm_step(token_embedding(last, params.embedding), state, params.ans)
        p = generator_head(params, e_c, state[0])
        j = int(np.argmax(p.data))  # ties resolve to the lowest index
        tokens.append(j)
        step_p = float(p.data[j])
        probs.append(step_p)
        probability *= step_p
        if j == EOS:
            break
        last = j
    return DecodeResult(encode_indices(tokens, s_s), probability, probs)


def one_hot(index: int, s_v: int) -> np.ndarray:
    out = np.zeros(s_v)
    out[index] = 1.0
    return out


def discriminator_forward(
    x: EncodedSequence,
    y_partial: EncodedSequence,
    current: Tensor,
    params: DiscriminatorParams,
) -> Tensor:
    """Probability (one-element tensor) that the current token is
    human-generated, given the context and the incomplete answer.

    ``current`` is the generator's probability vector when the discriminator
    sits inside the combined adversarial model, or a one-hot vector for a
    stored token.
    """
    s_v = params.embedding.shape[1]
    if current.shape != (s_v,):
        raise DimensionError(
            f"current-token vector has shape {current.shape}, expected ({s_v},)"
        )
    e_cd = lstm_encode(embed(x, params.embedding), params.ctx, x.effective_length)
    e_ad = lstm_encode(embed(y_partial, params.embedding), params.ans,
                       y_partial.effective_length)
    e_d = concat([current, e_cd, e_ad])
    return sigmoid(affine(params.w_d, e_d, params.b_d))


def generator_step_distributions(
    x: EncodedSequence, y: EncodedSequence, params: GeneratorParams
):
    """Teacher-forced walk over y: yield (position, next-token distribution)
    for every real position, conditioning on the gold prefix so far.

    Carrying the answer-LSTM state forward gives the same numbers as calling
    :func:`generator_forward` once per prefix, at linear instead of quadratic
    cost.  Safe to run under a Tape.
    """
    e_c = lstm_encode(embed(x, params.embedding), params.ctx, x.effective_length)
    state = lstm_initial_state(params.ans.hidden_size)
    last = BOS
    for i in range(y.effective_length):
        state = lstm_step(token_embedding(last, params.embedding), state, params.ans)
        yield i, generator_head(params, e_c, state[0])
        last = int(y.indices[i])


def discriminator_step_outputs(
    x: EncodedSequence, y: EncodedSequence, params: DiscriminatorParams
):
    """Per-token discriminator walk over y with one-hot current tokens:
    yield (position, l) where l is a one-element tensor.  Taped-compatible."""
    s_v = params.embedding.shape[1]
    e_cd = lstm_encode(embed(x, params.embedding), params.ctx, x.effective_length)
    state = lstm_initial_state(params.ans.hidden_size)
    last = BOS
    for i in range(y.effective_length):
        state = lstm_step(token_embedding(last, params.embedding), state, params.ans)
        current = Tensor(one_hot(int(y.indices[i]), s_v))
        e_d = concat([current, e_cd, state[0]])
        yield i, sigmoid(affine(params.w_d, e_d, params.b_d))
        last = int(y.indices[i])


def combined_step_outputs(
    x: EncodedSequence,
    y: EncodedSequence,
    gen: GeneratorParams,
    disc: DiscriminatorParams,
):
    """The combined adversarial model, teacher-forced on y: at each position
    the generator's distribution p fills the discriminator's current-token
    slot, so gradients of any loss on l flow through the frozen
    discriminator into the generator.  Yields (position, p, l)."""
    emb = gen.embedding
    e_c = lstm_encode(embed(x, emb), gen.ctx, x.effective_length)
    e_cd = lstm_encode(embed(x, emb), disc.ctx, x.effective_length)
    gen_state = lstm_initial_state(gen.ans.hidden_size)
    disc_state = lstm_initial_state(disc.ans.hidden_size)
    last = BOS
    for i in range(y.effective_length):
        token = token_embedding(last, emb)
        gen_state = lstm_step(token, gen_state, gen.ans)
        disc_state = lstm_step(token, disc_state, disc.ans)
        p = generator_head(gen, e_c, gen_state[0])
        e_d = concat([p, e_cd, disc_state[0]])
        yield i, p, sigmoid(affine(disc.w_d, e_d, disc.b_d))
        last = int(y.indices[i])


def token_discriminator_outputs(
    x: EncodedSequence, y: EncodedSequence, params: DiscriminatorParams
) -> list[float]:
    """l_i for every real token of y (EOS included, PAD never): the
    discriminator on (x, BOS-prefixed answer prefix, one-hot current token)."""
    return [float(l.data[0]) for _, l in discriminator_step_outputs(x, y, params)]


def probability_from_token_outputs(outputs) -> float:
    """Chain-rule answer probability: the streamed product of l_i.
    An empty answer gives the empty product, 1.0."""
    product = 1.0
    for l_i in outputs:
        product *= l_i
    return product


def score_from_token_outputs(outputs) -> float:
    """Geometric mean of l_i, as exp(mean log l_i) for stability."""
    outputs = list(outputs)
    if not outputs:
        raise ValueError("no geometric mean over zero tokens")
    return math.exp(sum(math.log(max(l_i, PROB_EPS)) for l_i in outputs) / len(outputs))


def answer_probability(
    x: EncodedSequence, y: EncodedSequence, params: DiscriminatorParams
) -> float:
    return probability_from_token_outputs(token_discriminator_outputs(x, y, params))


def answer_score(
    x: EncodedSequence, y: EncodedSequence, params: DiscriminatorParams
) -> float:
    if y.effective_length == 0:
        raise ValueError("cannot score an empty answer")
    return score_from_token_outputs(token_discriminator_outputs(x, y, params))


# ---------------------------------------------------------------------------
# persistence and identity
# ---------------------------------------------------------------------------


def params_digest(named: dict[str, Parameter]) -> str:
    """Order-independent sha256 over names, shapes and raw values."""
    h = hashlib.sha256()
    for name in sorted(named):
        p = named[name]
        h.update(name.encode())
        h.update(repr(p.data.shape).encode())
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()


def save_model_pair(pair: ModelPair, path) -> None:
    from .corpus import save_weights

    save_weights(pair.named_parameters(), pair.config, path)


def load_model_pair(path, expect_config: ModelConfig | None = None) -> ModelPair:
    from .corpus import load_weights

    params, config = load_weights(path, expect_config)

    def lstm_from(prefix: str) -> LstmParams:
        return LstmParams(**{g: params[f"{prefix}.{g}"] for g in _GATE_NAMES})

    try:
        gen = GeneratorParams(
            params["embedding"], lstm_from("gen.ctx"), lstm_from("gen.ans"),
            params["gen.w1"], params["gen.b1"], params["gen.w2"], params["gen.b2"],
        )
        disc = DiscriminatorParams(
            params["embedding"], lstm_from("disc.ctx"), lstm_from("disc.ans"),
            params["disc.w_d"], params["disc.b_d"],
        )
    except KeyError as missing:
        raise DimensionError(f"{path}: parameter block {missing} missing") from None
    return ModelPair(gen, disc, config)
