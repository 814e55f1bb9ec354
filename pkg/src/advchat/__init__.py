"""Adversarially trained generative conversational agent.

A dual-encoder generator (context LSTM + incomplete-answer LSTM feeding dense
layers, with the context embedding supplied at every decoding step), a
token-level discriminator over the same shared word embedding, the
end-to-end adversarial training loop, discriminator-based answer ranking,
and a small HTTP service for chat and A/B evaluation.
"""

__version__ = "0.1.0"
