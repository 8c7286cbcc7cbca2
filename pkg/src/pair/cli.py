"""Command-line entry points.

Exit codes: 0 on success, 1 on expected failures (bad flags, domain
errors), 2 on internal errors. ``--json`` switches commands to
machine-readable output on stdout.
"""
from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click
import numpy as np

from .errors import PairError


@click.group()
@click.version_option(package_name="pair", prog_name="pair")
def cli():
    """Object-level image editing with paired structure/appearance conditioning."""


@cli.group()
def data():
    """Dataset commands."""


@data.command("gen")
@click.option("--n", type=int, required=True, help="Number of samples to generate.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--size", type=int, default=32, show_default=True, help="Canvas side length.")
@click.option("--min-objects", type=int, default=1, show_default=True)
@click.option("--max-objects", type=int, default=4, show_default=True)
@click.option("--texture-prob", type=float, default=0.4, show_default=True)
@click.option("--val-fraction", type=float, default=0.1, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def data_gen(n, seed, out_dir, size, min_objects, max_objects, texture_prob, val_fraction, as_json):
    """Generate a synthetic shapes dataset with panoptic ground truth."""
    from .data import GeneratorConfig, generate_dataset

    cfg = GeneratorConfig(
        canvas_size=size,
        min_objects=min_objects,
        max_objects=max_objects,
        texture_prob=texture_prob,
        val_fraction=val_fraction,
    )
    manifest = generate_dataset(cfg, n, out_dir, seed=seed)
    if as_json:
        click.echo(json.dumps({
            "status": "ok",
            "root": str(manifest.root),
            "count": manifest.count,
            "train": len(manifest.train_indices),
            "val": len(manifest.val_indices),
        }, sort_keys=True))
    else:
        click.echo(
            f"wrote {manifest.count} samples to {manifest.root} "
            f"({len(manifest.train_indices)} train / {len(manifest.val_indices)} val)"
        )


@data.command("scene")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--index", type=int, required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True,
              help="Checkpoint whose encoder stack computes appearance.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def data_scene(dataset_dir, index, checkpoint, out_path):
    """Build a full scene JSON (with appearance) from a dataset sample."""
    from .data import load_manifest, load_training_scene
    from .engine import ModelContext
    from .sceneio import save_scene

    ctx = ModelContext.from_checkpoint(checkpoint)
    manifest = load_manifest(dataset_dir)
    _, scene = load_training_scene(manifest, index, ctx.stack)
    save_scene(scene, out_path)
    click.echo(f"wrote {out_path}")


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with {model: {...}, training: {...}} overrides.")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--steps", type=int, default=None, help="Override training steps.")
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--variant", type=click.Choice(["input-concat", "control-module"]), default=None)
@click.option("--codec", type=click.Choice(["identity", "patch-ortho"]), default=None)
@click.option("--log-every", type=int, default=100, show_default=True)
def train_cmd(config_path, data_dir, out_path, steps, batch_size, lr, seed, variant, codec, log_every):
    """Train a toy denoiser on a generated dataset."""
    from .checkpoint import save_trainer
    from .train_setup import build_training_run

    overrides = {}
    if config_path:
        overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
    flags = {"steps": steps, "batch_size": batch_size, "learning_rate": lr, "seed": seed}
    training = overrides.get("training", {})
    training.update({k: v for k, v in flags.items() if v is not None})
    overrides["training"] = training
    model_overrides = overrides.get("model", {})
    if variant is not None:
        model_overrides["variant"] = variant
    if codec is not None:
        model_overrides["codec_id"] = codec
    overrides["model"] = model_overrides

    trainer = build_training_run(data_dir, overrides)
    click.echo(
        f"training {trainer.model_config.variant} model "
        f"({trainer.model.parameter_count} params) on {len(trainer.samples)} samples"
    )
    trainer.run(log_every=log_every, log=lambda msg: click.echo(msg))
    save_trainer(out_path, trainer)
    click.echo(f"saved checkpoint to {out_path}")


def _guidance_from_flags(s_s, s_f, s_y):
    from .editops import GuidanceWeights

    return GuidanceWeights(s_s, s_f, s_y)


def _load_scene_arg(scene_path):
    from .sceneio import load_scene

    return load_scene(scene_path)


@cli.command("sample")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--scene", "scene_path", type=click.Path(exists=True), default=None,
              help="Scene JSON providing conditioning; omit for unconditional sampling.")
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sS", "s_s", type=float, default=6.0, show_default=True)
@click.option("--sF", "s_f", type=float, default=4.0, show_default=True)
@click.option("--sy", "s_y", type=float, default=2.0, show_default=True)
@click.option("--combiner", type=click.Choice(["factorized", "joint"]), default="factorized",
              show_default=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None,
              help="PNG whose bright pixels define the region to resample.")
@click.option("--prompt", type=str, default=None)
def sample_cmd(checkpoint, out_path, scene_path, steps, eta, seed, s_s, s_f, s_y, combiner,
               mask_path, prompt):
    """Sample an image from a checkpoint, optionally conditioned on a scene."""
    from .conditioning import ConditioningBundle, assemble_conditioning
    from .engine import ModelContext
    from .imageio import png_read, png_write
    from .sampler import SamplerConfig, sample

    ctx = ModelContext.from_checkpoint(checkpoint)
    original = None
    region = None
    if scene_path:
        scene = _load_scene_arg(scene_path)
        bundle = assemble_conditioning(scene)
        original = scene.image
    else:
        bundle = ConditioningBundle(structure=None, appearance=None, text=None)
    if prompt is not None:
        bundle = ConditioningBundle(bundle.structure, bundle.appearance, prompt)
    if mask_path:
        if original is None:
            raise PairError("--mask requires --scene (the original image to preserve)")
        region = png_read(mask_path).pixels.mean(axis=2) > 0.5

    cfg = SamplerConfig(steps=steps, eta=eta, seed=seed, combiner=combiner)
    image = sample(
        ctx.model, bundle, _guidance_from_flags(s_s, s_f, s_y), cfg, ctx.schedule,
        ctx.codec, region_mask=region, original=original,
    )
    png_write(image, out_path)
    click.echo(f"wrote {out_path}")


@cli.command("edit")
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True,
              help="EditSpec JSON file.")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--scene", "scene_path", type=click.Path(exists=True), default=None,
              help="Target scene JSON (defaults to the spec's scene path).")
@click.option("--ref-scene", "ref_path", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the spec's seed.")
@click.option("--sS", "s_s", type=float, default=None, help="Override guidance sS.")
@click.option("--sF", "s_f", type=float, default=None, help="Override guidance sF.")
@click.option("--sy", "s_y", type=float, default=None, help="Override guidance sy.")
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None,
              help="PNG region mask overriding the spec / edit default.")
@click.option("--combiner", type=click.Choice(["factorized", "joint"]), default="factorized",
              show_default=True)
@click.option("--json", "as_json", is_flag=True)
def edit_cmd(spec_path, checkpoint, out_path, scene_path, ref_path, steps, eta, seed,
             s_s, s_f, s_y, mask_path, combiner, as_json):
    """Apply an edit spec and write the sampled result."""
    import dataclasses

    from .editops import EditSpec, GuidanceWeights, default_guidance
    from .engine import ModelContext, execute_edit
    from .imageio import png_read, png_write

    spec = EditSpec.from_json(json.loads(Path(spec_path).read_text(encoding="utf-8")))
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if mask_path is not None:
        overrides["region_mask"] = png_read(mask_path).pixels.mean(axis=2) > 0.5
    if any(v is not None for v in (s_s, s_f, s_y)):
        base = spec.guidance or default_guidance(spec.prompt is not None)
        overrides["guidance"] = GuidanceWeights(
            base.s_structure if s_s is None else s_s,
            base.s_appearance if s_f is None else s_f,
            base.s_text if s_y is None else s_y,
        )
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    scene_file = scene_path or spec.scene
    if not scene_file:
        raise PairError("no target scene: pass --scene or set 'scene' in the spec")
    scene = _load_scene_arg(scene_file)
    ref_file = ref_path or spec.ref_scene
    ref_scene = _load_scene_arg(ref_file) if ref_file else None

    ctx = ModelContext.from_checkpoint(checkpoint)
    image, _ = execute_edit(ctx, spec, scene, ref_scene, steps=steps, eta=eta, combiner=combiner)
    png_write(image, out_path)
    if as_json:
        click.echo(json.dumps({"status": "ok", "out": str(out_path), "seed": spec.seed},
                              sort_keys=True))
    else:
        click.echo(f"wrote {out_path}")


@cli.command("invert")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--sS", "s_s", type=float, default=1.0, show_default=True)
@click.option("--sF", "s_f", type=float, default=1.0, show_default=True)
@click.option("--sy", "s_y", type=float, default=0.0, show_default=True)
@click.option("--combiner", type=click.Choice(["factorized", "joint"]), default="factorized")
def invert_cmd(checkpoint, scene_path, out_path, steps, s_s, s_f, s_y, combiner):
    """DDIM-invert a scene's image to its terminal latent (saved as .npy)."""
    from .conditioning import assemble_conditioning
    from .engine import ModelContext
    from .sampler import SamplerConfig, ddim_invert

    ctx = ModelContext.from_checkpoint(checkpoint)
    scene = _load_scene_arg(scene_path)
    bundle = assemble_conditioning(scene)
    cfg = SamplerConfig(steps=steps, eta=0.0, combiner=combiner)
    z = ddim_invert(ctx.model, scene.image, bundle, _guidance_from_flags(s_s, s_f, s_y),
                    cfg, ctx.schedule, ctx.codec)
    np.save(out_path, z)
    click.echo(f"wrote {out_path}")


@cli.command("eval")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--pairs", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", type=click.Path(), required=True)
@click.option("--steps", type=int, default=30, show_default=True)
def eval_cmd(dataset_dir, checkpoint, pairs, seed, out_csv, steps):
    """Run the appearance benchmark (ours vs. baselines) and write a CSV."""
    from .data import load_manifest, load_training_scene
    from .engine import ModelContext
    from .metrics import run_appearance_benchmark
    from .sampler import SamplerConfig

    ctx = ModelContext.from_checkpoint(checkpoint)
    manifest = load_manifest(dataset_dir)
    count = min(manifest.count, max(pairs * 2, 16))
    samples = []
    for idx in range(count):
        image, scene = load_training_scene(manifest, idx, ctx.stack)
        samples.append((image, scene))
    reports = run_appearance_benchmark(
        ctx, samples, pairs, SamplerConfig(steps=steps, seed=seed), out_csv=out_csv, seed=seed
    )
    click.echo(f"wrote {out_csv}")
    for method, report in reports.items():
        click.echo(
            f"  {method}: fid={report.fid:.3f} l1={report.l1_locality:.4f} "
            f"ssim={report.ssim_faithfulness:.3f}"
        )


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Service config JSON (or set PAIR_CONFIG).")
def serve_cmd(config_path):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app, load_service_config

    cfg = load_service_config(config_path)
    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port)


@cli.command("inspect")
@click.argument("scene_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def inspect_cmd(scene_path, as_json):
    """Summarize a scene JSON file."""
    scene = _load_scene_arg(scene_path)
    objects = [
        {
            "id": i,
            "category": obj.structure.category,
            "category_name": scene.category_name(obj.structure.category),
            "area": obj.structure.area,
            "appearance_layers": len(obj.appearance),
        }
        for i, obj in enumerate(scene.objects)
    ]
    if as_json:
        click.echo(json.dumps({
            "width": scene.image.width,
            "height": scene.image.height,
            "caption": scene.caption,
            "objects": objects,
        }, sort_keys=True))
    else:
        click.echo(f"{scene.image.width}x{scene.image.height}, caption: {scene.caption!r}")
        for o in objects:
            click.echo(
                f"  object {o['id']}: {o['category_name']} (category {o['category']}), "
                f"{o['area']} px, {o['appearance_layers']} appearance layers"
            )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except PairError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
