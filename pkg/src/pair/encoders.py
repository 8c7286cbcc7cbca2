"""Feature encoder backends.

Four built-ins cover the desk-scale needs: an identity encoder and a mean
pooling encoder for exact tests, a small fixed-weight convolutional encoder
for low-level texture features, and a patch self-attention encoder for
higher-level features. An adapter slot accepts externally computed features
(e.g. from pretrained backbones) without making them a dependency.

All encoders are pure functions of their seed and the input image.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InvalidLayerError, UnknownBackendError
from .representation import EncoderStack, FeatureMap, Image

DEFAULT_ENCODER_SEED = 2301

# Conventional low/mid/high block picks when plugging real pretrained
# conv/transformer backbones into the adapter slot.
ADAPTER_DEFAULT_LAYERS = (1, 6, 18)


def _chw(image: Image) -> np.ndarray:
    return np.transpose(image.pixels, (2, 0, 1)).astype(np.float32)


class IdentityEncoder:
    """Layer 0 returns the raw image as a 3-channel feature map."""

    encoder_id = "identity"

    @property
    def layers(self) -> tuple[int, ...]:
        return (0,)

    def channels(self, layer: int) -> int:
        self._check(layer)
        return 3

    def extract(self, image: Image, layer: int) -> FeatureMap:
        self._check(layer)
        return FeatureMap(_chw(image), self.encoder_id, layer)

    def _check(self, layer: int) -> None:
        if layer != 0:
            raise InvalidLayerError(f"identity encoder has only layer 0, got {layer}")


class MeanPoolEncoder:
    """Layer l mean-pools the image over non-overlapping 2**l blocks."""

    encoder_id = "meanpool"

    def __init__(self, max_level: int = 3):
        self._layers = tuple(range(1, max_level + 1))

    @property
    def layers(self) -> tuple[int, ...]:
        return self._layers

    def channels(self, layer: int) -> int:
        self._check(layer)
        return 3

    def extract(self, image: Image, layer: int) -> FeatureMap:
        self._check(layer)
        s = 2**layer
        x = _chw(image)
        c, height, width = x.shape
        h, w = height // s, width // s
        x = x[:, : h * s, : w * s].reshape(c, h, s, w, s)
        pooled = x.mean(axis=(2, 4))
        return FeatureMap(pooled, self.encoder_id, layer)

    def _check(self, layer: int) -> None:
        if layer not in self._layers:
            raise InvalidLayerError(f"meanpool layers are {self._layers}, got {layer}")


def _conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution, x: C_in x H x W, weight: C_out x C_in x 3 x 3."""
    c_in, h, w = x.shape
    padded = np.zeros((c_in, h + 2, w + 2), dtype=np.float32)
    padded[:, 1:-1, 1:-1] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    # windows: C_in x H x W x 3 x 3
    out = np.einsum("ihwxy,oixy->ohw", windows, weight, optimize=True)
    return out + bias[:, None, None]


def _pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))


class ConvEncoder:
    """Small fixed-seed convolutional feature extractor.

    Layer 1 is a 3x3 conv + ReLU at full resolution; layer 2 adds a 2x
    pooling and a second conv block. Weights are frozen at construction so
    extraction is deterministic.
    """

    encoder_id = "conv"

    def __init__(self, channels: int = 8, seed: int = DEFAULT_ENCODER_SEED):
        self._c = channels
        rng = np.random.default_rng(seed)
        scale1 = np.sqrt(2.0 / (3 * 9))
        self.w1 = rng.normal(0.0, scale1, size=(channels, 3, 3, 3)).astype(np.float32)
        self.b1 = np.zeros(channels, dtype=np.float32)
        scale2 = np.sqrt(2.0 / (channels * 9))
        self.w2 = rng.normal(0.0, scale2, size=(channels, channels, 3, 3)).astype(np.float32)
        self.b2 = np.zeros(channels, dtype=np.float32)

    @property
    def layers(self) -> tuple[int, ...]:
        return (1, 2)

    def channels(self, layer: int) -> int:
        self._check(layer)
        return self._c

    def extract(self, image: Image, layer: int) -> FeatureMap:
        self._check(layer)
        h1 = np.maximum(_conv3x3(_chw(image), self.w1, self.b1), 0.0)
        if layer == 1:
            return FeatureMap(h1, self.encoder_id, 1)
        h2 = np.maximum(_conv3x3(_pool2(h1), self.w2, self.b2), 0.0)
        return FeatureMap(h2, self.encoder_id, 2)

    def _check(self, layer: int) -> None:
        if layer not in (1, 2):
            raise InvalidLayerError(f"conv encoder layers are (1, 2), got {layer}")


class PatchAttentionEncoder:
    """Single-head self-attention over non-overlapping image patches.

    Images are cut into p x p patches, projected, and mixed with one
    softmax-attention block per layer. Feature maps come back at the patch
    grid resolution. Weights are frozen at construction.
    """

    encoder_id = "patch"

    def __init__(
        self,
        channels: int = 12,
        patch_size: int = 4,
        seed: int = DEFAULT_ENCODER_SEED + 1,
    ):
        self._c = channels
        self.patch_size = patch_size
        rng = np.random.default_rng(seed)
        d_in = 3 * patch_size * patch_size
        self.w_embed = rng.normal(0, 1 / np.sqrt(d_in), (d_in, channels)).astype(np.float32)
        self._blocks = []
        for _ in range(2):
            wq = rng.normal(0, 1 / np.sqrt(channels), (channels, channels)).astype(np.float32)
            wk = rng.normal(0, 1 / np.sqrt(channels), (channels, channels)).astype(np.float32)
            wv = rng.normal(0, 1 / np.sqrt(channels), (channels, channels)).astype(np.float32)
            wo = rng.normal(0, 1 / np.sqrt(channels), (channels, channels)).astype(np.float32)
            self._blocks.append((wq, wk, wv, wo))

    @property
    def layers(self) -> tuple[int, ...]:
        return (1, 2)

    def channels(self, layer: int) -> int:
        self._check(layer)
        return self._c

    def extract(self, image: Image, layer: int) -> FeatureMap:
        self._check(layer)
        p = self.patch_size
        x = _chw(image)
        c, height, width = x.shape
        gh, gw = height // p, width // p
        patches = (
            x[:, : gh * p, : gw * p]
            .reshape(c, gh, p, gw, p)
            .transpose(1, 3, 0, 2, 4)
            .reshape(gh * gw, c * p * p)
        )
        tokens = patches @ self.w_embed
        for wq, wk, wv, wo in self._blocks[:layer]:
            q, k, v = tokens @ wq, tokens @ wk, tokens @ wv
            logits = (q @ k.T) / np.sqrt(np.float32(self._c))
            logits -= logits.max(axis=1, keepdims=True)
            attn = np.exp(logits)
            attn /= attn.sum(axis=1, keepdims=True)
            tokens = tokens + (attn @ v) @ wo
        grid = tokens.reshape(gh, gw, self._c).transpose(2, 0, 1)
        return FeatureMap(np.ascontiguousarray(grid), self.encoder_id, layer)

    def _check(self, layer: int) -> None:
        if layer not in (1, 2):
            raise InvalidLayerError(f"patch encoder layers are (1, 2), got {layer}")


class ExternalFeatureAdapter:
    """Adapter slot for user-supplied feature extractors.

    The callable receives the Image and the layer index and must return a
    C x h x w array. Channel counts per layer are declared up front so the
    rest of the pipeline can size conditioning tensors without calling it.
    """

    def __init__(
        self,
        encoder_id: str,
        layer_channels: dict[int, int],
        fn: Callable[[Image, int], np.ndarray],
    ):
        self.encoder_id = encoder_id
        self._layer_channels = dict(layer_channels)
        self._fn = fn

    @property
    def layers(self) -> tuple[int, ...]:
        return tuple(sorted(self._layer_channels))

    def channels(self, layer: int) -> int:
        if layer not in self._layer_channels:
            raise InvalidLayerError(f"{self.encoder_id!r} layers are {self.layers}, got {layer}")
        return self._layer_channels[layer]

    def extract(self, image: Image, layer: int) -> FeatureMap:
        values = np.asarray(self._fn(image, layer), dtype=np.float32)
        if values.shape[0] != self.channels(layer):
            raise InvalidLayerError(
                f"{self.encoder_id!r} layer {layer} returned {values.shape[0]} channels, "
                f"declared {self.channels(layer)}"
            )
        return FeatureMap(values, self.encoder_id, layer)


_ENCODERS: dict[str, object] = {}


def register_encoder(encoder) -> None:
    _ENCODERS[encoder.encoder_id] = encoder


def get_encoder(encoder_id: str):
    if encoder_id not in _ENCODERS:
        raise UnknownBackendError(
            f"encoder {encoder_id!r} is not registered (available: {sorted(_ENCODERS)})"
        )
    return _ENCODERS[encoder_id]


register_encoder(IdentityEncoder())
register_encoder(MeanPoolEncoder())
register_encoder(ConvEncoder())
register_encoder(PatchAttentionEncoder())


def default_stack() -> EncoderStack:
    """Default appearance slots: raw color, conv texture, patch attention."""
    return EncoderStack(
        slots=(
            (get_encoder("identity"), 0),
            (get_encoder("conv"), 1),
            (get_encoder("patch"), 1),
        )
    )


def stack_from_signature(signature: list[tuple[str, int]] | tuple) -> EncoderStack:
    return EncoderStack(slots=tuple((get_encoder(eid), layer) for eid, layer in signature))
