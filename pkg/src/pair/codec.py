"""Latent codecs bridging images and the diffusion state space."""
from __future__ import annotations

import numpy as np

from .errors import UnknownBackendError
from .representation import Image


class IdentityCodec:
    """Pixel-space codec: CHW float32 in [-1, 1]; exact round trip."""

    codec_id = "identity"
    channels = 3
    latent_range = (-1.0, 1.0)

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        return (3, height, width)

    def encode(self, image: Image) -> np.ndarray:
        return (np.transpose(image.pixels, (2, 0, 1)) * 2.0 - 1.0).astype(np.float32)

    def decode(self, latent: np.ndarray) -> Image:
        px = np.transpose(np.asarray(latent, dtype=np.float32), (1, 2, 0))
        return Image(np.clip((px + 1.0) / 2.0, 0.0, 1.0))


class PatchAutoencoderCodec:
    """Linear patch autoencoder: 2x2 pixel blocks mixed by an orthogonal matrix.

    Encoding folds each 2x2 RGB block into a 12-channel latent position and
    mixes channels with a seeded orthogonal matrix; decoding applies the
    transpose. Reconstruction is exact up to float rounding, so the latent
    path can be exercised without any pretraining.
    """

    codec_id = "patch-ortho"
    channels = 12
    patch = 2

    def __init__(self, seed: int = 7):
        rng = np.random.default_rng(seed)
        gaussian = rng.normal(size=(12, 12))
        q, r = np.linalg.qr(gaussian)
        q *= np.sign(np.diag(r))  # fix sign convention for determinism
        self._mix = q.astype(np.float32)
        # latents are Q @ (patch values in [-1, 1]); each channel is bounded
        # by the L1 norm of its mixing row
        bound = float(np.abs(self._mix).sum(axis=1).max())
        self.latent_range = (-bound, bound)

    def latent_shape(self, height: int, width: int) -> tuple[int, int, int]:
        if height % self.patch or width % self.patch:
            raise ValueError("image sides must be divisible by the patch size")
        return (12, height // self.patch, width // self.patch)

    def encode(self, image: Image) -> np.ndarray:
        p = self.patch
        x = (np.transpose(image.pixels, (2, 0, 1)) * 2.0 - 1.0).astype(np.float32)
        c, h, w = x.shape
        gh, gw = h // p, w // p
        blocks = (
            x.reshape(c, gh, p, gw, p).transpose(1, 3, 0, 2, 4).reshape(gh, gw, c * p * p)
        )
        mixed = blocks @ self._mix.T
        return np.ascontiguousarray(mixed.transpose(2, 0, 1))

    def decode(self, latent: np.ndarray) -> Image:
        p = self.patch
        z = np.asarray(latent, dtype=np.float32)
        _, gh, gw = z.shape
        blocks = z.transpose(1, 2, 0) @ self._mix
        x = (
            blocks.reshape(gh, gw, 3, p, p)
            .transpose(2, 0, 3, 1, 4)
            .reshape(3, gh * p, gw * p)
        )
        px = np.transpose(x, (1, 2, 0))
        return Image(np.clip((px + 1.0) / 2.0, 0.0, 1.0))


_CODECS = {
    "identity": IdentityCodec,
    "patch-ortho": PatchAutoencoderCodec,
}


def make_codec(codec_id: str):
    if codec_id not in _CODECS:
        raise UnknownBackendError(f"codec {codec_id!r} unknown (available: {sorted(_CODECS)})")
    return _CODECS[codec_id]()
