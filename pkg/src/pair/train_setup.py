"""Assemble a training run from a dataset directory and config overrides."""
from __future__ import annotations

from dataclasses import fields

from .codec import make_codec
from .data import build_vocab, load_manifest, load_training_scene
from .encoders import stack_from_signature
from .models import ModelConfig
from .training import Trainer, TrainingConfig, prepare_sample


def model_config_from(overrides: dict) -> ModelConfig:
    base = ModelConfig(vocab=build_vocab())
    allowed = {f.name for f in fields(ModelConfig)}
    bad = set(overrides) - allowed
    if bad:
        raise ValueError(f"unknown model config keys: {sorted(bad)}")
    merged = base.to_json()
    merged.update(overrides)
    cfg = ModelConfig.from_json(merged)
    if cfg.codec_id == "patch-ortho":
        codec = make_codec(cfg.codec_id)
        shape = codec.latent_shape(cfg.image_size, cfg.image_size)
        cfg = ModelConfig.from_json(
            merged | {"z_channels": shape[0], "latent_size": shape[1]}
        )
    return cfg


def training_config_from(overrides: dict) -> TrainingConfig:
    base = TrainingConfig()
    doc = base.to_json()
    dropout = doc.pop("dropout")
    dropout.update(overrides.pop("dropout", {}))
    allowed = set(doc)
    bad = set(overrides) - allowed
    if bad:
        raise ValueError(f"unknown training config keys: {sorted(bad)}")
    doc.update(overrides)
    doc["dropout"] = dropout
    return TrainingConfig.from_json(doc)


def build_training_run(dataset_dir: str, overrides: dict | None = None) -> Trainer:
    overrides = overrides or {}
    model_cfg = model_config_from(dict(overrides.get("model", {})))
    train_cfg = training_config_from(dict(overrides.get("training", {})))

    manifest = load_manifest(dataset_dir)
    stack = stack_from_signature(model_cfg.encoder_signature)
    codec = make_codec(model_cfg.codec_id)
    samples = []
    for idx in manifest.train_indices:
        image, scene = load_training_scene(manifest, idx, stack)
        samples.append(prepare_sample(image, scene, codec))
    return Trainer(model_cfg, train_cfg, samples)
