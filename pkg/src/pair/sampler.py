"""DDIM sampling, inversion, and multimodal classifier-free guidance.

Two guidance combiners are available. The factorized combiner guides the
text stream against the fully unconditional prediction, so text influence
survives rich image conditioning; the joint combiner (kept for ablations)
guides text against the structure+appearance prediction instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from .conditioning import ConditioningBundle, bundle_variant, encode_bundle
from .editops import GuidanceWeights
from .errors import ShapeMismatchError
from .models import batch_conditioning, resize_conditioning
from .representation import Image
from .schedule import NoiseSchedule, forward_diffuse

COMBINERS = ("factorized", "joint")
DEFAULT_STEPS = 50


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = DEFAULT_STEPS
    eta: float = 0.0
    seed: int = 0
    combiner: str = "factorized"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}, got {self.combiner!r}")


@dataclass(frozen=True, eq=False)
class GuidedPrediction:
    """The four raw predictions and their guided combination."""

    e_uncond: object
    e_structure: object
    e_structure_appearance: object
    e_fourth: object  # text-only (factorized) or fully conditioned (joint)
    combined: object


def _check_shapes(*arrays) -> None:
    shapes = {tuple(a.shape) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"prediction shapes differ: {sorted(shapes)}")


def cfg_combine_factorized(e0, eS, eSF, ey, weights: GuidanceWeights):
    """e0 + sS (eS - e0) + sF (eSF - eS) + sy (ey - e0).

    The text term is anchored at the unconditional prediction, independent
    of the image conditioning streams.
    """
    _check_shapes(e0, eS, eSF, ey)
    return (
        e0
        + weights.s_structure * (eS - e0)
        + weights.s_appearance * (eSF - eS)
        + weights.s_text * (ey - e0)
    )


def cfg_combine_joint(e0, eS, eSF, eSFy, weights: GuidanceWeights):
    """e0 + sS (eS - e0) + sF (eSF - eS) + sy (eSFy - eSF).

    Direct expansion of the fully conditioned score; text guidance is
    entangled with the image conditioning.
    """
    _check_shapes(e0, eS, eSF, eSFy)
    return (
        e0
        + weights.s_structure * (eS - e0)
        + weights.s_appearance * (eSF - eS)
        + weights.s_text * (eSFy - eSF)
    )


def ddim_step(
    z_t,
    eps,
    t: int,
    t_prev: int,
    schedule: NoiseSchedule,
    eta: float = 0.0,
    rng: np.random.Generator | None = None,
    clip_z0: tuple[float, float] | None = None,
):
    """One reverse DDIM update from t to t_prev (deterministic when eta=0).

    ``clip_z0`` clamps the implied clean-latent estimate to the codec's
    value range; at large t the estimate amplifies prediction error by
    1/sqrt(alpha_bar_t) and unclamped trajectories can leave the data
    manifold entirely.
    """
    if not (schedule.num_steps >= t > t_prev >= 0):
        raise ValueError(f"need T >= t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t_prev]
    z0_hat = (z_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    if clip_z0 is not None:
        z0_hat = _clip(z0_hat, clip_z0[0], clip_z0[1])
        # keep the update self-consistent with the clamped estimate
        eps = (z_t - np.sqrt(ab_t) * z0_hat) / np.sqrt(1.0 - ab_t)
    if eta == 0.0:
        return np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps
    if rng is None:
        raise ValueError("eta > 0 requires an RNG")
    sigma = (
        eta
        * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        * np.sqrt(1.0 - ab_t / ab_prev)
    )
    direction = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps
    noise = rng.standard_normal(tuple(z_t.shape)).astype(np.float32)
    if isinstance(z_t, torch.Tensor):
        noise = torch.from_numpy(noise)
    return np.sqrt(ab_prev) * z0_hat + direction + sigma * noise


def _clip(value, lo: float, hi: float):
    if isinstance(value, torch.Tensor):
        return value.clamp(lo, hi)
    return np.clip(value, lo, hi)


def timestep_sequence(num_steps: int, steps: int) -> list[int]:
    """Strictly decreasing subsequence T = t_0 > t_1 > ... > t_steps = 0."""
    if steps > num_steps:
        raise ValueError(f"steps {steps} exceeds schedule length {num_steps}")
    ts = np.linspace(num_steps, 0, steps + 1)
    seq = sorted({int(round(v)) for v in ts}, reverse=True)
    if seq[0] != num_steps or seq[-1] != 0:
        raise ValueError("timestep subsequence must span T..0")
    return seq


class GuidanceEvaluator:
    """Evaluates the four conditioning variants for one bundle.

    The four variants are encoded once and stacked; each step runs one
    batched forward pass, which matches four independent calls.
    """

    def __init__(self, model, bundle: ConditioningBundle, combiner: str):
        cfg = model.config
        if combiner == "factorized":
            variants = [
                (False, False, False),
                (True, False, False),
                (True, True, False),
                (False, False, True),
            ]
        else:
            variants = [
                (False, False, False),
                (True, False, False),
                (True, True, False),
                (True, True, True),
            ]
        numerics = []
        for s, f, y in variants:
            numeric = encode_bundle(
                bundle_variant(bundle, s, f, y),
                cfg.image_size,
                cfg.image_size,
                cfg.layer_channels,
            )
            if cfg.latent_size != cfg.image_size:
                numeric = resize_conditioning(numeric, (cfg.latent_size, cfg.latent_size))
            numerics.append(numeric)
        self.model = model
        self.combiner = combiner
        self.cond = batch_conditioning(numerics, cfg.vocab)

    @torch.no_grad()
    def __call__(self, z: torch.Tensor, t: int, weights: GuidanceWeights) -> GuidedPrediction:
        z4 = z.unsqueeze(0).expand(4, -1, -1, -1)
        tt = torch.full((4,), int(t), dtype=torch.long)
        preds = self.model.predict(z4, self.cond, tt)
        e0, eS, eSF, e4 = preds[0], preds[1], preds[2], preds[3]
        if self.combiner == "factorized":
            combined = cfg_combine_factorized(e0, eS, eSF, e4, weights)
        else:
            combined = cfg_combine_joint(e0, eS, eSF, e4, weights)
        return GuidedPrediction(e0, eS, eSF, e4, combined)


def _region_to_latent(region_mask: np.ndarray, latent_shape: tuple[int, int, int]) -> np.ndarray:
    """Map a pixel-space region to the latent grid; any covered pixel marks a cell."""
    _, lh, lw = latent_shape
    h, w = region_mask.shape
    if (h, w) == (lh, lw):
        return region_mask.astype(bool)
    if h % lh or w % lw:
        raise ShapeMismatchError(f"region {region_mask.shape} not reducible to {(lh, lw)}")
    bh, bw = h // lh, w // lw
    return region_mask.reshape(lh, bh, lw, bw).any(axis=(1, 3))


def sample(
    model,
    bundle: ConditioningBundle,
    weights: GuidanceWeights,
    cfg: SamplerConfig,
    schedule: NoiseSchedule,
    codec,
    region_mask: np.ndarray | None = None,
    original: Image | None = None,
    init_latent: np.ndarray | None = None,
    progress_cb: Callable[[int, int], None] | None = None,
    clip_denoised: bool | None = None,
) -> Image:
    """Run guided DDIM over the step subsequence and decode the result.

    With a region mask, each step composites the evolving latent inside the
    region with the forward-noised original outside it, and the decoded
    output is composited once more in pixel space, so pixels outside the
    region come back bit-exact.

    ``clip_denoised`` clamps the per-step clean-latent estimate to the
    codec's value range. The default clips when synthesizing from fresh
    noise (keeps trajectories on-manifold) but not when resuming from a
    provided latent, because inversion round trips need the bare recurrence.
    """
    if region_mask is not None and original is None:
        raise ValueError("masked sampling requires the original image")
    model.eval()
    rng = np.random.default_rng(cfg.seed)
    latent_shape = codec.latent_shape(model.config.image_size, model.config.image_size)

    if init_latent is not None:
        z = torch.from_numpy(np.asarray(init_latent, dtype=np.float32).copy())
    else:
        z = torch.from_numpy(rng.standard_normal(latent_shape).astype(np.float32))

    original_latent = None
    latent_region = None
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        original_latent = torch.from_numpy(codec.encode(original))
        latent_region = torch.from_numpy(
            _region_to_latent(region_mask, latent_shape)[None].astype(np.float32)
        )

    evaluate = GuidanceEvaluator(model, bundle, cfg.combiner)
    if clip_denoised is None:
        clip_denoised = init_latent is None
    clip_z0 = getattr(codec, "latent_range", None) if clip_denoised else None
    seq = timestep_sequence(schedule.num_steps, cfg.steps)
    total = len(seq) - 1
    for i in range(total):
        t, t_prev = seq[i], seq[i + 1]
        guided = evaluate(z, t, weights)
        z = ddim_step(
            z, guided.combined, t, t_prev, schedule, eta=cfg.eta, rng=rng, clip_z0=clip_z0
        )
        if latent_region is not None:
            if t_prev > 0:
                noise = torch.from_numpy(
                    rng.standard_normal(latent_shape).astype(np.float32)
                )
                keep = forward_diffuse(original_latent, t_prev, noise, schedule)
            else:
                keep = original_latent
            z = latent_region * z + (1.0 - latent_region) * keep
        if progress_cb is not None:
            progress_cb(i + 1, total)

    decoded = codec.decode(z.numpy())
    if region_mask is not None:
        m = region_mask[:, :, None]
        pixels = np.where(m, decoded.pixels, original.pixels)
        return Image(pixels)
    return decoded


def ddim_invert(
    model,
    image: Image,
    bundle: ConditioningBundle,
    weights: GuidanceWeights,
    cfg: SamplerConfig,
    schedule: NoiseSchedule,
    codec,
) -> np.ndarray:
    """Run the DDIM recurrence backwards from z_0 to z_T.

    Only the deterministic sampler (eta = 0) can be inverted.
    """
    if cfg.eta != 0.0:
        raise ValueError("DDIM inversion requires eta = 0")
    model.eval()
    z = torch.from_numpy(codec.encode(image))
    evaluate = GuidanceEvaluator(model, bundle, cfg.combiner)
    seq = list(reversed(timestep_sequence(schedule.num_steps, cfg.steps)))  # 0 .. T
    for i in range(len(seq) - 1):
        t_lo, t_hi = seq[i], seq[i + 1]
        guided = evaluate(z, t_lo, weights)
        eps = guided.combined
        ab_lo = schedule.alpha_bar[t_lo]
        ab_hi = schedule.alpha_bar[t_hi]
        z0_hat = (z - np.sqrt(1.0 - ab_lo) * eps) / np.sqrt(ab_lo)
        z = np.sqrt(ab_hi) * z0_hat + np.sqrt(1.0 - ab_hi) * eps
    return z.numpy()
