from __future__ import annotations

import dataclasses
from dataclasses import dataclass

ATTENTION_MODES = ("joint", "self")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters.

    Encoder and decoder widths default to the published values; block count,
    feed-forward width and every training setting are our own defaults.
    ``attention="self"`` swaps the cross-object attention for per-object
    self-attention (ablation).
    """

    token_dim: int = 512
    num_groups: int = 256
    group_size: int = 64
    group_radius: float = 0.15
    patch_hidden: tuple = (784, 512)
    pos_dim: int = 512
    heads: int = 8
    dropout: float = 0.1
    decoder_blocks: int = 2
    ff_hidden: int = 1024
    head_hidden: tuple = (512, 256)
    num_channels: int = 5
    feature_dim: int = 1024
    norm_epsilon: float = 1e-5
    seed: int = 0
    attention: str = "joint"
    epochs: int = 300
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    augment: bool = True
    jitter: float = 0.005
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "patch_hidden", tuple(int(v) for v in self.patch_hidden))
        object.__setattr__(self, "head_hidden", tuple(int(v) for v in self.head_hidden))
        object.__setattr__(self, "betas", tuple(float(v) for v in self.betas))
        self.validate()

    def validate(self) -> None:
        ints = {
            "token_dim": self.token_dim,
            "num_groups": self.num_groups,
            "group_size": self.group_size,
            "pos_dim": self.pos_dim,
            "heads": self.heads,
            "decoder_blocks": self.decoder_blocks,
            "ff_hidden": self.ff_hidden,
            "num_channels": self.num_channels,
        }
        for name, value in ints.items():
            if int(value) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.feature_dim < 0:
            raise ValueError("feature_dim must be >= 0")
        if not self.patch_hidden or min(self.patch_hidden) < 1:
            raise ValueError("patch_hidden needs at least one positive width")
        if min(self.head_hidden, default=1) < 1:
            raise ValueError("head_hidden widths must be positive")
        if self.token_dim % self.heads:
            raise ValueError(f"token_dim {self.token_dim} is not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.group_radius <= 0:
            raise ValueError("group_radius must be positive")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["patch_hidden"] = list(self.patch_hidden)
        d["head_hidden"] = list(self.head_hidden)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def small(cls, **overrides) -> "ModelConfig":
        """Tiny 64-bit configuration used by the gradient check."""
        base = dict(
            token_dim=32,
            num_groups=8,
            group_size=8,
            group_radius=0.5,
            patch_hidden=(24, 32),
            pos_dim=16,
            heads=4,
            dropout=0.0,
            decoder_blocks=2,
            ff_hidden=48,
            head_hidden=(32, 16),
            num_channels=2,
            feature_dim=6,
            dtype="float64",
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def compact(cls, **overrides) -> "ModelConfig":
        """Reduced widths for desk-scale benchmarks (N = 512, T = 64, k = 16)."""
        base = dict(
            token_dim=128,
            num_groups=64,
            group_size=16,
            patch_hidden=(196, 128),
            pos_dim=128,
            ff_hidden=256,
            head_hidden=(128, 64),
            feature_dim=256,
        )
        base.update(overrides)
        return cls(**base)
