"""Toy conditional denoisers.

Two variants expose the same ``predict(z_t, conditioning, t)`` contract:

* ``input-concat``: conditioning channels are concatenated to the noisy
  latent before the first convolution.
* ``control-module``: a trainable copy of the encoder path processes the
  conditioning and feeds residuals into the frozen-shape base UNet through
  zero-initialized convolutions, so conditioning is a no-op at init.

Text enters through a bag-of-features embedding (words plus adjacent-word
bigrams) along two routes: added to the timestep embedding and broadcast as
a few spatial input channels. A presence flag per stream keeps null
conditioning separable from genuinely zero features.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .conditioning import NumericConditioning

VARIANTS = ("input-concat", "control-module")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "input-concat"
    codec_id: str = "identity"
    image_size: int = 32
    z_channels: int = 3
    latent_size: int = 32
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 2)
    temb_dim: int = 96
    text_dim: int = 32
    text_channels: int = 10
    vocab: tuple[str, ...] = ()
    encoder_signature: tuple[tuple[str, int], ...] = (
        ("identity", 0),
        ("conv", 1),
        ("patch", 1),
    )
    layer_channels: tuple[int, ...] = (3, 8, 12)
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    init_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.layer_channels) != len(self.encoder_signature):
            raise ValueError("layer_channels must match encoder_signature length")

    @property
    def cond_channels(self) -> int:
        """Channels consumed by input concatenation: S + its flag, every
        appearance tensor (each already carries S appended), the appearance
        flag, and the broadcast text embedding channels."""
        text = self.text_channels if self.vocab else 0
        return 2 + 1 + sum(c + 2 for c in self.layer_channels) + 1 + text

    @property
    def low_level_channels(self) -> int:
        return self.layer_channels[0] + 2

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "codec_id": self.codec_id,
            "image_size": self.image_size,
            "z_channels": self.z_channels,
            "latent_size": self.latent_size,
            "base_channels": self.base_channels,
            "channel_mults": list(self.channel_mults),
            "temb_dim": self.temb_dim,
            "text_dim": self.text_dim,
            "text_channels": self.text_channels,
            "vocab": list(self.vocab),
            "encoder_signature": [[e, l] for e, l in self.encoder_signature],
            "layer_channels": list(self.layer_channels),
            "timesteps": self.timesteps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        return cls(
            variant=doc["variant"],
            codec_id=doc["codec_id"],
            image_size=int(doc["image_size"]),
            z_channels=int(doc["z_channels"]),
            latent_size=int(doc["latent_size"]),
            base_channels=int(doc["base_channels"]),
            channel_mults=tuple(int(m) for m in doc["channel_mults"]),
            temb_dim=int(doc["temb_dim"]),
            text_dim=int(doc["text_dim"]),
            text_channels=int(doc.get("text_channels", 0)),
            vocab=tuple(doc["vocab"]),
            encoder_signature=tuple((e, int(l)) for e, l in doc["encoder_signature"]),
            layer_channels=tuple(int(c) for c in doc["layer_channels"]),
            timesteps=int(doc["timesteps"]),
            beta_start=float(doc["beta_start"]),
            beta_end=float(doc["beta_end"]),
            init_seed=int(doc["init_seed"]),
        )


_WORD_RE = re.compile(r"[a-z]+")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def bag_vector(text: str, vocab: Sequence[str]) -> np.ndarray:
    """Presence multi-hot over vocabulary features found in the text.

    Features are single words plus adjacent-word bigrams joined with an
    underscore; bigrams keep adjective-noun bindings that a plain word bag
    loses. Presence (not counts or means) keeps feature scale identical
    between long training captions and short edit prompts.
    """
    index = {w: i for i, w in enumerate(vocab)}
    v = np.zeros(len(vocab), dtype=np.float32)
    words = tokenize(text)
    features = words + [f"{a}_{b}" for a, b in zip(words, words[1:])]
    for feature in features:
        if feature in index:
            v[index[feature]] = 1.0
    return v


@dataclass(eq=False)
class BatchedConditioning:
    """Torch-side batch of NumericConditioning values."""

    structure: torch.Tensor  # B x 2 x h x w
    structure_flag: torch.Tensor  # B
    appearance: torch.Tensor  # B x sum(C_l + 2) x h x w
    appearance_flag: torch.Tensor  # B
    text_bag: torch.Tensor  # B x V
    text_flag: torch.Tensor  # B

    def __len__(self) -> int:
        return self.structure.shape[0]


def batch_conditioning(
    numerics: Sequence[NumericConditioning], vocab: Sequence[str]
) -> BatchedConditioning:
    structure = torch.from_numpy(np.stack([n.structure_channels for n in numerics]))
    appearance = torch.from_numpy(
        np.stack([np.concatenate(n.appearance_channels, axis=0) for n in numerics])
    )
    bags = torch.from_numpy(np.stack([bag_vector(n.text, vocab) for n in numerics]))
    return BatchedConditioning(
        structure=structure.float(),
        structure_flag=torch.tensor([n.structure_flag for n in numerics], dtype=torch.float32),
        appearance=appearance.float(),
        appearance_flag=torch.tensor([n.appearance_flag for n in numerics], dtype=torch.float32),
        text_bag=bags.float(),
        text_flag=torch.tensor([n.text_flag for n in numerics], dtype=torch.float32),
    )


def resize_conditioning(numeric: NumericConditioning, size: tuple[int, int]) -> NumericConditioning:
    """Nearest-neighbor resize of conditioning channels to the latent grid."""
    h, w = size
    src_h = numeric.structure_channels.shape[1]
    src_w = numeric.structure_channels.shape[2]
    if (src_h, src_w) == (h, w):
        return numeric
    rows = ((np.arange(h) + 0.5) * src_h / h).astype(np.int64)
    cols = ((np.arange(w) + 0.5) * src_w / w).astype(np.int64)

    def rs(block: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(block[:, rows][:, :, cols])

    return NumericConditioning(
        structure_channels=rs(numeric.structure_channels),
        structure_flag=numeric.structure_flag,
        appearance_channels=tuple(rs(b) for b in numeric.appearance_channels),
        appearance_flag=numeric.appearance_flag,
        text=numeric.text,
        text_flag=numeric.text_flag,
    )


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, emb.new_zeros(emb.shape[0], 1)], dim=1)
    return emb


def zero_module(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


def _norm(channels: int) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temb_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.temb_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class SmallUNet(nn.Module):
    """Three-level UNet; optional per-stage control residuals."""

    def __init__(self, in_channels: int, out_channels: int, base: int, mults: Sequence[int], temb_dim: int):
        super().__init__()
        chans = [base * m for m in mults]
        self.conv_in = nn.Conv2d(in_channels, chans[0], 3, padding=1)
        self.down_res0 = ResBlock(chans[0], chans[0], temb_dim)
        self.down0 = nn.Conv2d(chans[0], chans[1], 3, stride=2, padding=1)
        self.down_res1 = ResBlock(chans[1], chans[1], temb_dim)
        self.down1 = nn.Conv2d(chans[1], chans[2], 3, stride=2, padding=1)
        self.mid = ResBlock(chans[2], chans[2], temb_dim)
        self.up1 = nn.ConvTranspose2d(chans[2], chans[1], 2, stride=2)
        self.up_res1 = ResBlock(chans[1] * 2, chans[1], temb_dim)
        self.up0 = nn.ConvTranspose2d(chans[1], chans[0], 2, stride=2)
        self.up_res0 = ResBlock(chans[0] * 2, chans[0], temb_dim)
        self.out_norm = _norm(chans[0])
        self.out_conv = zero_module(nn.Conv2d(chans[0], out_channels, 3, padding=1))
        self.stage_channels = (chans[0], chans[0], chans[1], chans[2])

    def forward(
        self,
        x: torch.Tensor,
        temb: torch.Tensor,
        control: Sequence[torch.Tensor] | None = None,
    ) -> torch.Tensor:
        h0 = self.conv_in(x)
        if control is not None:
            h0 = h0 + control[0]
        d0 = self.down_res0(h0, temb)
        if control is not None:
            d0 = d0 + control[1]
        d1 = self.down_res1(self.down0(d0), temb)
        if control is not None:
            d1 = d1 + control[2]
        mid = self.mid(self.down1(d1), temb)
        if control is not None:
            mid = mid + control[3]
        u1 = self.up_res1(torch.cat([self.up1(mid), d1], dim=1), temb)
        u0 = self.up_res0(torch.cat([self.up0(u1), d0], dim=1), temb)
        return self.out_conv(torch.nn.functional.silu(self.out_norm(u0)))


class _EmbeddingTrunk(nn.Module):
    """Shared timestep + text embedding."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.temb_dim = cfg.temb_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.temb_dim, cfg.temb_dim),
            nn.SiLU(),
            nn.Linear(cfg.temb_dim, cfg.temb_dim),
        )
        self.text_proj = nn.Linear(len(cfg.vocab) + 1, cfg.text_dim) if cfg.vocab else None
        if self.text_proj is not None:
            self.text_mlp = nn.Sequential(nn.SiLU(), nn.Linear(cfg.text_dim, cfg.temb_dim))
        self.text_spatial = (
            nn.Linear(len(cfg.vocab) + 1, cfg.text_channels)
            if cfg.vocab and cfg.text_channels
            else None
        )

    def _text_input(self, cond: BatchedConditioning) -> torch.Tensor:
        gated_bag = cond.text_bag * cond.text_flag[:, None]
        return torch.cat([gated_bag, cond.text_flag[:, None]], dim=1)

    def forward(self, t: torch.Tensor, cond: BatchedConditioning) -> torch.Tensor:
        temb = self.time_mlp(sinusoidal_embedding(t, self.temb_dim))
        if self.text_proj is not None:
            temb = temb + self.text_mlp(self.text_proj(self._text_input(cond)))
        return temb

    def text_map(self, cond: BatchedConditioning, h: int, w: int) -> torch.Tensor | None:
        """Broadcast text embedding channels; gives text a pixel-level path."""
        if self.text_spatial is None:
            return None
        vec = self.text_spatial(self._text_input(cond))
        return vec[:, :, None, None].expand(-1, -1, h, w)


def _flag_map(flag: torch.Tensor, h: int, w: int) -> torch.Tensor:
    return flag[:, None, None, None].expand(-1, 1, h, w)


class ConcatDenoiser(nn.Module):
    """Input-concatenation variant: conditioning joins z at the first layer."""

    variant = "input-concat"

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.embed = _EmbeddingTrunk(cfg)
        self.unet = SmallUNet(
            in_channels=cfg.z_channels + cfg.cond_channels,
            out_channels=cfg.z_channels,
            base=cfg.base_channels,
            mults=cfg.channel_mults,
            temb_dim=cfg.temb_dim,
        )

    def predict(self, z: torch.Tensor, cond: BatchedConditioning, t: torch.Tensor) -> torch.Tensor:
        _, _, h, w = z.shape
        if cond.structure.shape[2:] != z.shape[2:]:
            raise ValueError(
                f"conditioning resolution {tuple(cond.structure.shape[2:])} does not "
                f"match latent resolution {tuple(z.shape[2:])}"
            )
        parts = [
            z,
            cond.structure,
            _flag_map(cond.structure_flag, h, w),
            cond.appearance,
            _flag_map(cond.appearance_flag, h, w),
        ]
        text_map = self.embed.text_map(cond, h, w)
        if text_map is not None:
            parts.append(text_map)
        return self.unet(torch.cat(parts, dim=1), self.embed(t, cond))

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class ControlDenoiser(nn.Module):
    """Control-module variant: conditioning enters a trainable encoder copy.

    All paths from the control branch into the base pass through
    zero-initialized convolutions, so at initialization predictions are
    independent of the conditioning.
    """

    variant = "control-module"

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.embed = _EmbeddingTrunk(cfg)
        self.base = SmallUNet(
            in_channels=cfg.z_channels,
            out_channels=cfg.z_channels,
            base=cfg.base_channels,
            mults=cfg.channel_mults,
            temb_dim=cfg.temb_dim,
        )
        chans = self.base.stage_channels
        # trainable copy of the encoder path
        self.c_conv_in = nn.Conv2d(cfg.z_channels, chans[1], 3, padding=1)
        self.c_res0 = ResBlock(chans[1], chans[1], cfg.temb_dim)
        self.c_down0 = nn.Conv2d(chans[1], chans[2], 3, stride=2, padding=1)
        self.c_res1 = ResBlock(chans[2], chans[2], cfg.temb_dim)
        self.c_down1 = nn.Conv2d(chans[2], chans[3], 3, stride=2, padding=1)
        self.c_mid = ResBlock(chans[3], chans[3], cfg.temb_dim)

        hint_channels = 2 + 1 + cfg.low_level_channels + 1
        if cfg.vocab and cfg.text_channels:
            hint_channels += cfg.text_channels
        self.hint_block = nn.Sequential(
            nn.Conv2d(hint_channels, chans[1], 3, padding=1),
            nn.SiLU(),
            zero_module(nn.Conv2d(chans[1], chans[1], 3, padding=1)),
        )
        mid_c = cfg.layer_channels[1] + 2 + 1 if len(cfg.layer_channels) > 1 else None
        high_c = cfg.layer_channels[2] + 2 + 1 if len(cfg.layer_channels) > 2 else None
        self.mid_proj = nn.Conv2d(mid_c, chans[1], 1) if mid_c else None
        self.high_proj = nn.Conv2d(high_c, chans[2], 1) if high_c else None

        self.zc = nn.ModuleList(
            [zero_module(nn.Conv2d(c_in, c_out, 1)) for c_in, c_out in zip(
                (chans[1], chans[1], chans[2], chans[3]), chans
            )]
        )

    def _split_layers(self, cond: BatchedConditioning) -> list[torch.Tensor]:
        blocks = []
        offset = 0
        for c in self.config.layer_channels:
            blocks.append(cond.appearance[:, offset : offset + c + 2])
            offset += c + 2
        return blocks

    def predict(self, z: torch.Tensor, cond: BatchedConditioning, t: torch.Tensor) -> torch.Tensor:
        _, _, h, w = z.shape
        if cond.structure.shape[2:] != z.shape[2:]:
            raise ValueError(
                f"conditioning resolution {tuple(cond.structure.shape[2:])} does not "
                f"match latent resolution {tuple(z.shape[2:])}"
            )
        temb = self.embed(t, cond)
        layers = self._split_layers(cond)
        s_flag = _flag_map(cond.structure_flag, h, w)
        f_flag = _flag_map(cond.appearance_flag, h, w)

        hint_parts = [cond.structure, s_flag, layers[0], f_flag]
        text_map = self.embed.text_map(cond, h, w)
        if text_map is not None:
            hint_parts.append(text_map)
        c = self.c_conv_in(z) + self.hint_block(torch.cat(hint_parts, dim=1))
        c0 = c
        d0 = self.c_res0(c0, temb)
        if self.mid_proj is not None and len(layers) > 1:
            d0 = d0 + self.mid_proj(torch.cat([layers[1], f_flag], dim=1))
        d1_in = self.c_down0(d0)
        d1 = self.c_res1(d1_in, temb)
        if self.high_proj is not None and len(layers) > 2:
            half = torch.nn.functional.avg_pool2d(torch.cat([layers[2], f_flag], dim=1), 2)
            d1 = d1 + self.high_proj(half)
        mid = self.c_mid(self.c_down1(d1), temb)

        residuals = [zc(f) for zc, f in zip(self.zc, (c0, d0, d1, mid))]
        return self.base(z, temb, control=residuals)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(cfg: ModelConfig):
    """Construct a denoiser variant with seed-reproducible initialization."""
    torch.manual_seed(cfg.init_seed)
    if cfg.variant == "input-concat":
        return ConcatDenoiser(cfg)
    return ControlDenoiser(cfg)
