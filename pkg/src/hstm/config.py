"""Codec configuration: toy channel plan, coding options, and YAML I/O."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import yaml

__all__ = ["CodecConfig", "AblationFlags", "load_config", "save_config"]


@dataclass
class AblationFlags:
    """Runtime switches that must match between encoder and decoder.

    Each prior feeding the entropy model can be masked to zero, the frame
    generator can fall back to a single refinement stage, and the
    spatial-channel quantization step can be pinned to 1.0.  The set in use
    travels in the stream header as a bitfield.
    """

    no_hyper_prior: bool = False
    no_temporal_prior: bool = False
    no_latent_prior: bool = False
    single_unet: bool = False
    no_qs_sc: bool = False

    def to_bits(self) -> int:
        bits = 0
        for i, flag in enumerate(self._ordered()):
            if flag:
                bits |= 1 << i
        return bits

    def _ordered(self):
        return (self.no_hyper_prior, self.no_temporal_prior, self.no_latent_prior,
                self.single_unet, self.no_qs_sc)

    @classmethod
    def from_bits(cls, bits: int) -> "AblationFlags":
        names = ["no_hyper_prior", "no_temporal_prior", "no_latent_prior",
                 "single_unet", "no_qs_sc"]
        return cls(**{name: bool(bits >> i & 1) for i, name in enumerate(names)})


@dataclass
class CodecConfig:
    """Channel widths and coding options for the desk-scale model."""

    y_channels: int = 8        # main latent
    hyper_channels: int = 8    # hyper feature / hyper latent
    mv_channels: int = 4       # motion latent
    mv_hyper_channels: int = 4
    feature_channels: int = 8  # propagated full-resolution feature
    context_channels: int = 8  # context pyramid levels
    hidden_channels: int = 8   # fusion / transform trunk width
    intra_period: int = 32
    me_block: int = 8
    me_range: int = 7
    seed: int = 0
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)
        if self.y_channels % 2 or self.mv_channels % 2:
            raise ValueError("latent channel counts must be even for the dual split")
        if self.intra_period < 1:
            raise ValueError("intra_period must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> CodecConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return CodecConfig(**data)


def save_config(path, config: CodecConfig):
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
