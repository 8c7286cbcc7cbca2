"""Shared edit-execution pipeline used by both the CLI and the HTTP service.

Loading a checkpoint yields a ModelContext bundling the denoiser, its noise
schedule, latent codec, and encoder stack. ``execute_edit`` then runs
editops -> conditioning -> guided masked sampling identically for every
entry point, which is what makes CLI and service outputs byte-identical for
the same spec and seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .codec import make_codec
from .conditioning import ConditioningBundle, assemble_conditioning
from .editops import EditSpec, apply_edit, default_guidance, default_region
from .encoders import stack_from_signature
from .models import ModelConfig
from .representation import (
    EncoderStack,
    Image,
    SceneDescription,
    SceneObject,
    build_scene,
    segment,
)
from .sampler import SamplerConfig, sample
from .schedule import NoiseSchedule


@dataclass(eq=False)
class ModelContext:
    model: object
    config: ModelConfig
    schedule: NoiseSchedule
    codec: object
    stack: EncoderStack

    @classmethod
    def from_checkpoint(cls, path: str) -> "ModelContext":
        from .checkpoint import load_checkpoint

        model, _ = load_checkpoint(path)
        return cls.from_model(model)

    @classmethod
    def from_model(cls, model) -> "ModelContext":
        cfg: ModelConfig = model.config
        return cls(
            model=model,
            config=cfg,
            schedule=NoiseSchedule.linear(cfg.timesteps, cfg.beta_start, cfg.beta_end),
            codec=make_codec(cfg.codec_id),
            stack=stack_from_signature(cfg.encoder_signature),
        )


def scene_for(
    ctx: ModelContext,
    image: Image,
    backend: str = "oracle",
    caption: str | None = None,
    category_names: tuple[str, ...] = (),
) -> SceneDescription:
    """Segment an image and build its scene with the context's encoder stack."""
    pmap = segment(image, backend)
    return build_scene(
        image, pmap, ctx.stack, caption=caption, category_names=category_names
    )


def execute_edit(
    ctx: ModelContext,
    spec: EditSpec,
    scene: SceneDescription,
    ref_scene: SceneDescription | None = None,
    steps: int | None = None,
    eta: float = 0.0,
    combiner: str = "factorized",
    progress_cb: Callable[[int, int], None] | None = None,
) -> tuple[Image, SceneDescription]:
    """Apply an edit spec and sample the resulting image.

    Sampling is masked to the edit's implied region (or the spec's explicit
    region mask) with the unedited image as the preserved outside content.
    """
    spec.validate()
    edited = apply_edit(spec, scene, ref_scene)
    bundle = assemble_conditioning(edited)
    if spec.prompt is not None:
        bundle = ConditioningBundle(bundle.structure, bundle.appearance, spec.prompt)
    weights = spec.guidance if spec.guidance is not None else default_guidance(spec.prompt is not None)
    region = default_region(spec, scene, edited)
    cfg = SamplerConfig(
        steps=steps if steps is not None else SamplerConfig().steps,
        eta=eta,
        seed=spec.seed,
        combiner=combiner,
    )
    out = sample(
        ctx.model,
        bundle,
        weights,
        cfg,
        ctx.schedule,
        ctx.codec,
        region_mask=region,
        original=scene.image,
        progress_cb=progress_cb,
    )
    return out, edited


def appearance_region_edit(
    ctx: ModelContext,
    image: Image,
    scene: SceneDescription,
    target_object: int,
    driver_image: Image,
    driver_region: np.ndarray,
    region: np.ndarray,
    cfg: SamplerConfig,
) -> Image:
    """Re-render a region using appearance pooled from a driver-image region.

    The target object's appearance tuple is replaced by features pooled over
    the driver region, then the region is resampled with masked guidance.
    This is the benchmark's patch-level appearance transfer.
    """
    appearance = ctx.stack.object_appearance(driver_image, np.asarray(driver_region, bool))
    objects = list(scene.objects)
    target = scene.object(target_object)
    objects[target_object] = SceneObject(target.structure, appearance)
    edited = replace(scene, objects=tuple(objects))
    bundle = assemble_conditioning(edited)
    weights = default_guidance(prompt_given=False)
    return sample(
        ctx.model,
        bundle,
        weights,
        cfg,
        ctx.schedule,
        ctx.codec,
        region_mask=np.asarray(region, bool),
        original=image,
    )
