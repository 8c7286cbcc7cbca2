"""Shared fixtures.

The trained toy model used by behavioral acceptance checks is expensive
(about ten minutes on CPU), so it is cached under tests/_cache keyed by a
hash of its exact configuration; delete the directory to force a retrain.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from pair.checkpoint import load_checkpoint, save_trainer
from pair.data import (
    CATEGORY_NAMES,
    GeneratorConfig,
    build_vocab,
    generate_dataset,
    generate_sample,
    load_manifest,
)
from pair.encoders import default_stack
from pair.engine import ModelContext
from pair.models import ModelConfig, build_model
from pair.representation import build_scene

CACHE_DIR = Path(__file__).parent / "_cache"

TOY_DATASET_SEED = 7
TOY_DATASET_SIZE = 600
TOY_TRAIN_STEPS = 2000
TOY_BATCH = 32
TOY_LR = 2e-3


def make_scene(index: int, seed: int = TOY_DATASET_SEED, stack=None, caption="auto"):
    """Generate one synthetic sample and build its full scene."""
    image, pmap, cap, meta = generate_sample((seed, index), GeneratorConfig())
    scene = build_scene(
        image,
        pmap,
        stack or default_stack(),
        caption=cap if caption == "auto" else caption,
        category_names=CATEGORY_NAMES,
    )
    return image, scene, meta


@pytest.fixture(scope="session")
def stack():
    return default_stack()


@pytest.fixture(scope="session")
def toy_dataset():
    """Full-size generated dataset, cached on disk."""
    root = CACHE_DIR / f"ds-{TOY_DATASET_SEED}-{TOY_DATASET_SIZE}"
    if not (root / "manifest.json").exists():
        generate_dataset(GeneratorConfig(), TOY_DATASET_SIZE, root, seed=TOY_DATASET_SEED)
    return load_manifest(root)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyds")
    generate_dataset(GeneratorConfig(), 24, root, seed=11)
    return load_manifest(root)


def default_model_config(**overrides) -> ModelConfig:
    base = ModelConfig(vocab=build_vocab()).to_json()
    base.update(overrides)
    return ModelConfig.from_json(base)


@pytest.fixture(scope="session")
def untrained_ctx():
    """Fresh input-concat model; its zero-initialized head predicts zero."""
    return ModelContext.from_model(build_model(default_model_config()))


@pytest.fixture(scope="session")
def quick_trained_ctx():
    """Briefly trained model for behavioral checks that only need a
    non-degenerate denoiser."""
    from pair.codec import IdentityCodec
    from pair.training import Trainer, TrainingConfig, prepare_sample

    samples = []
    for i in range(6):
        image, scene, _ = make_scene(500 + i)
        samples.append(prepare_sample(image, scene, IdentityCodec()))
    trainer = Trainer(
        default_model_config(),
        TrainingConfig(steps=60, batch_size=6, learning_rate=2e-3, seed=4),
        samples,
    )
    trainer.run()
    return ModelContext.from_model(trainer.model)


@pytest.fixture(scope="session")
def untrained_checkpoint(tmp_path_factory, untrained_ctx):
    from pair.checkpoint import save_checkpoint

    path = tmp_path_factory.mktemp("ckpt") / "untrained.ckpt"
    save_checkpoint(path, untrained_ctx.model)
    return path


@pytest.fixture(scope="session")
def trained_ctx(toy_dataset):
    """The 2000-step toy model behind the behavioral acceptance criteria."""
    key_doc = {
        "model": default_model_config().to_json(),
        "steps": TOY_TRAIN_STEPS,
        "batch": TOY_BATCH,
        "lr": TOY_LR,
        "dataset": [TOY_DATASET_SEED, TOY_DATASET_SIZE],
    }
    key = hashlib.sha256(json.dumps(key_doc, sort_keys=True).encode()).hexdigest()[:12]
    path = CACHE_DIR / f"toy-{key}.ckpt"
    if not path.exists():
        from pair.train_setup import build_training_run

        trainer = build_training_run(
            str(toy_dataset.root),
            {
                "training": {
                    "steps": TOY_TRAIN_STEPS,
                    "batch_size": TOY_BATCH,
                    "learning_rate": TOY_LR,
                    "seed": 0,
                }
            },
        )
        trainer.run(log_every=500)
        CACHE_DIR.mkdir(exist_ok=True)
        save_trainer(path, trainer)
    model, _ = load_checkpoint(path)
    return ModelContext.from_model(model), path
