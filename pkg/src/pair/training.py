"""Training loop with the simplified noise-prediction objective."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .conditioning import (
    ConditioningBundle,
    DropoutConfig,
    apply_dropout,
    assemble_conditioning,
    encode_bundle,
)
from .errors import PairError
from .models import ModelConfig, batch_conditioning, build_model, resize_conditioning
from .representation import Image, SceneDescription
from .schedule import NoiseSchedule


class TrainingDiverged(PairError):
    """Loss became non-finite; training aborts rather than continuing."""


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 2e-3
    batch_size: int = 32
    steps: int = 2000
    dropout: DropoutConfig = field(
        # appearance drops more often than structure so the model sees
        # structure-only conditioning; structure drops often enough that
        # text-only batches teach the text pathway
        default_factory=lambda: DropoutConfig(0.3, 0.4, 0.1)
    )
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.steps <= 0:
            raise ValueError("learning_rate, batch_size, and steps must be positive")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "steps": self.steps,
            "dropout": {
                "p_structure": self.dropout.p_structure,
                "p_appearance": self.dropout.p_appearance,
                "p_text": self.dropout.p_text,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingConfig":
        d = doc.get("dropout", {})
        return cls(
            learning_rate=float(doc["learning_rate"]),
            batch_size=int(doc["batch_size"]),
            steps=int(doc["steps"]),
            dropout=DropoutConfig(
                float(d.get("p_structure", 0.3)),
                float(d.get("p_appearance", 0.4)),
                float(d.get("p_text", 0.1)),
            ),
            seed=int(doc["seed"]),
        )


@dataclass(eq=False)
class TrainingSample:
    image: Image
    scene: SceneDescription
    bundle: ConditioningBundle
    latent: np.ndarray  # codec-encoded z0, C x h x w


def prepare_sample(image: Image, scene: SceneDescription, codec) -> TrainingSample:
    return TrainingSample(
        image=image,
        scene=scene,
        bundle=assemble_conditioning(scene),
        latent=codec.encode(image),
    )


def training_step(
    model,
    optimizer: torch.optim.Optimizer,
    batch: Sequence[TrainingSample],
    schedule: NoiseSchedule,
    dropout: DropoutConfig,
    rng: np.random.Generator,
) -> float:
    """One optimizer update on a batch; returns the scalar loss.

    Timesteps are sampled uniformly in [1, T], noise is standard Gaussian,
    and conditioning dropout is drawn per sample. All randomness comes from
    ``rng`` so training is reproducible and resumable.
    """
    cfg: ModelConfig = model.config
    t = rng.integers(1, schedule.num_steps + 1, size=len(batch))
    z0 = np.stack([s.latent for s in batch])
    eps = rng.standard_normal(z0.shape).astype(np.float32)

    numerics = []
    for sample in batch:
        dropped = apply_dropout(sample.bundle, dropout, rng)
        numeric = encode_bundle(
            dropped, cfg.image_size, cfg.image_size, cfg.layer_channels
        )
        if cfg.latent_size != cfg.image_size:
            numeric = resize_conditioning(numeric, (cfg.latent_size, cfg.latent_size))
        numerics.append(numeric)
    cond = batch_conditioning(numerics, cfg.vocab)

    ab = schedule.alpha_bar[t].astype(np.float32)
    coeff_signal = np.sqrt(ab)[:, None, None, None]
    coeff_noise = np.sqrt(1.0 - ab)[:, None, None, None]
    z_t = torch.from_numpy(coeff_signal * z0 + coeff_noise * eps).float()

    optimizer.zero_grad(set_to_none=True)
    pred = model.predict(z_t, cond, torch.from_numpy(t).long())
    loss = torch.mean((pred - torch.from_numpy(eps)) ** 2)
    value = float(loss.detach())
    if not np.isfinite(value):
        raise TrainingDiverged(
            f"loss became non-finite ({value}) at t range "
            f"[{int(t.min())}, {int(t.max())}]; aborting"
        )
    loss.backward()
    optimizer.step()
    return value


class Trainer:
    """Owns the model, optimizer, and RNG stream for a training run."""

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainingConfig,
        samples: Sequence[TrainingSample],
        model=None,
    ):
        if not samples:
            raise ValueError("training requires at least one sample")
        self.model_config = model_config
        self.train_config = train_config
        self.samples = list(samples)
        self.model = model if model is not None else build_model(model_config)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=train_config.learning_rate
        )
        self.schedule = NoiseSchedule.linear(
            model_config.timesteps, model_config.beta_start, model_config.beta_end
        )
        self.rng = np.random.default_rng(train_config.seed)
        self.step = 0
        self.losses: list[float] = []

    def run(
        self,
        steps: int | None = None,
        log_every: int = 100,
        log: Callable[[str], None] | None = None,
    ) -> list[float]:
        target = self.step + (steps if steps is not None else self.train_config.steps)
        batch_size = min(self.train_config.batch_size, len(self.samples))
        while self.step < target:
            idx = self.rng.integers(0, len(self.samples), size=batch_size)
            batch = [self.samples[i] for i in idx]
            loss = training_step(
                self.model,
                self.optimizer,
                batch,
                self.schedule,
                self.train_config.dropout,
                self.rng,
            )
            self.step += 1
            self.losses.append(loss)
            if log is not None and (self.step % log_every == 0 or self.step == target):
                recent = self.losses[-log_every:]
                log(f"step {self.step}/{target} loss {np.mean(recent):.4f}")
        return self.losses

    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def restore_rng(self, state: dict) -> None:
        self.rng.bit_generator.state = state
