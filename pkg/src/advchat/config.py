"""Dataclass configs for model dimensions and the training loop.

Defaults are the full-scale values; tests and the bundled experiment scripts
override them with desk-scale settings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions shared by the generator and the discriminator.

    s_s   padded sequence length (tokens)
    s_v   vocabulary size, including the four reserved indices
    s_e   word-embedding width
    s_se  generator sentence-embedding width (context and answer LSTMs)
    s_sed discriminator sentence-embedding width
    n_u   context window, in utterances
    head_width  generator hidden dense layer; defaults to s_se when None
    """

    s_s: int = 50
    s_v: int = 7000
    s_e: int = 100
    s_se: int = 300
    s_sed: int = 300
    n_u: int = 2
    head_width: int | None = None

    def __post_init__(self) -> None:
        for f in ("s_s", "s_v", "s_e", "s_se", "s_sed", "n_u"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be positive, got {getattr(self, f)}")
        if self.s_v < 5:
            raise ConfigError(f"s_v must be at least 5 (reserved indices plus one word), got {self.s_v}")
        if self.head_width is not None and self.head_width < 1:
            raise ConfigError(f"head_width must be positive, got {self.head_width}")

    @property
    def h(self) -> int:
        return self.head_width if self.head_width is not None else self.s_se

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs of the adversarial loop.

    n_g / n_d / n_tf  epochs per phase: generator update, discriminator
                      training, and the interleaved teacher forcing
    n_m               size of the machine-generated set per epoch
    turns             self-conversation feedback iterations per seed
    pretrain_epochs   initial teacher-forcing epochs before the loop
    train_embedding   whether the shared embedding is updated during
                      teacher forcing and generator updates (off: only the
                      LSTM and dense weights move, never the embedding)
    """

    adversarial_epochs: int = 5
    n_g: int = 1
    n_d: int = 15
    n_tf: int = 1
    n_m: int = 7900
    lr_g: float = 5e-5
    lr_d: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    pretrain_epochs: int = 100
    turns: int = 2
    train_embedding: bool = False

    def __post_init__(self) -> None:
        for f in ("adversarial_epochs", "n_g", "n_d", "n_tf", "n_m", "batch_size",
                  "pretrain_epochs", "turns"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be at least 1, got {getattr(self, f)}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
