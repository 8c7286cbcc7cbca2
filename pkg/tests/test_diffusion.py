import numpy as np
import pytest
import torch

from pair.checkpoint import (
    checkpoint_fingerprint,
    load_checkpoint,
    resume_trainer,
    save_checkpoint,
    save_trainer,
)
from pair.codec import IdentityCodec, PatchAutoencoderCodec, make_codec
from pair.conditioning import (
    ConditioningBundle,
    DropoutConfig,
    assemble_conditioning,
    encode_bundle,
)
from pair.errors import CorruptCheckpoint
from pair.models import batch_conditioning, build_model
from pair.schedule import NoiseSchedule, forward_diffuse
from pair.training import (
    Trainer,
    TrainingConfig,
    TrainingDiverged,
    prepare_sample,
    training_step,
)
from tests.conftest import default_model_config, make_scene


def small_samples(n=6, codec=None):
    codec = codec or IdentityCodec()
    samples = []
    for i in range(n):
        image, scene, _ = make_scene(60 + i)
        samples.append(prepare_sample(image, scene, codec))
    return samples


class TestSchedule:
    def test_linear_schedule_invariants(self):
        sched = NoiseSchedule.linear(1000)
        assert sched.alpha_bar[0] == 1.0
        assert np.all(np.diff(sched.alpha_bar) <= 0)
        assert np.all(sched.alpha_bar > 0) and np.all(sched.alpha_bar <= 1)
        assert sched.num_steps == 1000

    def test_rejects_bad_alpha_bar(self):
        with pytest.raises(ValueError):
            NoiseSchedule(betas=np.array([0.1]), alpha_bar=np.array([0.9, 0.8]))
        with pytest.raises(ValueError):
            NoiseSchedule.from_betas(np.array([1.5]))

    def test_custom_zero_beta_keeps_signal(self):
        sched = NoiseSchedule.from_betas(np.array([0.0, 0.1]))
        assert sched.alpha_bar[1] == 1.0


class TestForwardDiffuse:
    def test_alpha_bar_one_returns_z0(self):
        sched = NoiseSchedule.from_betas(np.array([0.0, 0.1]))
        rng = np.random.default_rng(0)
        z0 = rng.standard_normal((3, 8, 8)).astype(np.float32)
        eps = rng.standard_normal((3, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(forward_diffuse(z0, 1, eps, sched), z0)

    def test_zero_noise_scales_signal(self):
        sched = NoiseSchedule.linear(100)
        z0 = np.ones((2, 4, 4), dtype=np.float32)
        out = forward_diffuse(z0, 50, np.zeros_like(z0), sched)
        np.testing.assert_allclose(out, np.sqrt(sched.alpha_bar[50]), rtol=1e-6)

    def test_matches_independent_closed_form(self):
        # recompute the coefficients from betas by hand, in float64
        betas = np.linspace(1e-4, 0.02, 200)
        sched = NoiseSchedule.from_betas(betas)
        rng = np.random.default_rng(1)
        z0 = rng.standard_normal((2, 5, 5))
        eps = rng.standard_normal((2, 5, 5))
        for t in (1, 7, 100, 200):
            ab = np.prod(1.0 - betas[:t])
            expected = np.sqrt(ab) * z0 + np.sqrt(1 - ab) * eps
            np.testing.assert_allclose(forward_diffuse(z0, t, eps, sched), expected, rtol=1e-10)

    def test_t_out_of_range(self):
        sched = NoiseSchedule.linear(10)
        z = np.zeros((1, 4, 4), dtype=np.float32)
        for t in (0, 11, -3):
            with pytest.raises(ValueError):
                forward_diffuse(z, t, z, sched)

    def test_shape_mismatch(self):
        sched = NoiseSchedule.linear(10)
        with pytest.raises(ValueError):
            forward_diffuse(np.zeros((1, 4, 4)), 5, np.zeros((1, 4, 5)), sched)

    def test_linear_in_signal_and_noise(self):
        sched = NoiseSchedule.linear(50)
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 3, 4, 4))
        for t in (1, 25, 50):
            lhs = forward_diffuse(2.0 * a, t, 3.0 * b, sched)
            rhs = 2.0 * forward_diffuse(a, t, np.zeros_like(b), sched) + (
                3.0 * forward_diffuse(np.zeros_like(a), t, b, sched)
            )
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_variance_identity(self):
        # Var(z_t) ~= alpha_bar * Var(z0) + (1 - alpha_bar) over noise draws
        sched = NoiseSchedule.linear(1000)
        rng = np.random.default_rng(3)
        z0 = rng.standard_normal(10_000)
        for t in (100, 500, 900):
            eps = rng.standard_normal(10_000)
            zt = forward_diffuse(z0, t, eps, sched)
            ab = sched.alpha_bar[t]
            expected = ab * z0.var() + (1 - ab)
            assert abs(zt.var() - expected) / expected < 0.05


class TestTrainingStep:
    def test_deterministic_per_seed(self):
        samples = small_samples(4)
        cfg = default_model_config()
        losses = []
        for _ in range(2):
            model = build_model(cfg)
            opt = torch.optim.Adam(model.parameters(), lr=1e-3)
            sched = NoiseSchedule.linear(cfg.timesteps)
            rng = np.random.default_rng(9)
            losses.append(
                training_step(model, opt, samples, sched, DropoutConfig(), rng)
            )
        assert losses[0] == losses[1]

    def test_init_loss_near_one(self):
        # zero-initialized output head predicts 0, so the loss starts at
        # E[eps^2] = 1
        samples = small_samples(6)
        cfg = default_model_config()
        model = build_model(cfg)
        opt = torch.optim.Adam(model.parameters(), lr=0.0)
        sched = NoiseSchedule.linear(cfg.timesteps)
        rng = np.random.default_rng(1)
        losses = [
            training_step(model, opt, samples, sched, DropoutConfig(), rng)
            for _ in range(5)
        ]
        assert 0.8 <= np.mean(losses) <= 1.2

    def test_loss_drops_below_initial(self):
        samples = small_samples(6)
        trainer = Trainer(
            default_model_config(),
            TrainingConfig(steps=120, batch_size=6, learning_rate=2e-3, seed=0),
            samples,
        )
        losses = trainer.run()
        assert np.mean(losses[-10:]) < losses[0]

    def test_non_finite_loss_aborts(self):
        samples = small_samples(2)
        cfg = default_model_config()
        model = build_model(cfg)
        with torch.no_grad():
            model.unet.out_conv.weight.fill_(float("nan"))
            model.unet.out_conv.bias.fill_(float("nan"))
        opt = torch.optim.Adam(model.parameters(), lr=1e-3)
        sched = NoiseSchedule.linear(cfg.timesteps)
        with pytest.raises(TrainingDiverged):
            training_step(model, opt, samples, sched, DropoutConfig(), np.random.default_rng(0))


class TestInjectConditioning:
    def test_control_variant_zero_init_invariance(self):
        cfg = default_model_config(variant="control-module")
        model = build_model(cfg)
        image, scene, _ = make_scene(70)
        bundle = assemble_conditioning(scene)
        full = encode_bundle(bundle, 32, 32, cfg.layer_channels)
        null = encode_bundle(ConditioningBundle(None, None, None), 32, 32, cfg.layer_channels)
        z = torch.randn(2, 3, 32, 32)
        t = torch.tensor([100, 900])
        with torch.no_grad():
            a = model.predict(z, batch_conditioning([full, full], cfg.vocab), t)
            b = model.predict(z, batch_conditioning([null, null], cfg.vocab), t)
        assert torch.equal(a, b)

    def test_input_concat_channel_arithmetic(self):
        cfg = default_model_config()
        model = build_model(cfg)
        expected = (
            cfg.z_channels
            + 2  # structure channels
            + 1  # structure presence flag
            + sum(c + 2 for c in cfg.layer_channels)
            + 1  # appearance presence flag
            + cfg.text_channels
        )
        assert model.unet.conv_in.in_channels == expected

    def test_resolution_mismatch_rejected(self):
        cfg = default_model_config()
        model = build_model(cfg)
        image, scene, _ = make_scene(71)
        numeric = encode_bundle(assemble_conditioning(scene), 32, 32, cfg.layer_channels)
        cond = batch_conditioning([numeric], cfg.vocab)
        with pytest.raises(ValueError):
            model.predict(torch.randn(1, 3, 16, 16), cond, torch.tensor([10]))

    def test_presence_flags_matter_after_training(self):
        samples = small_samples(4)
        trainer = Trainer(
            default_model_config(),
            TrainingConfig(steps=40, batch_size=4, learning_rate=2e-3, seed=1),
            samples,
        )
        trainer.run()
        model = trainer.model
        cfg = model.config
        null = encode_bundle(ConditioningBundle(None, None, None), 32, 32, cfg.layer_channels)
        # same zeros but with presence flags raised
        forged = type(null)(
            structure_channels=null.structure_channels,
            structure_flag=1.0,
            appearance_channels=null.appearance_channels,
            appearance_flag=1.0,
            text=null.text,
            text_flag=1.0,
        )
        z = torch.randn(1, 3, 32, 32)
        t = torch.tensor([500])
        with torch.no_grad():
            a = model.predict(z, batch_conditioning([null], cfg.vocab), t)
            b = model.predict(z, batch_conditioning([forged], cfg.vocab), t)
        assert (a - b).abs().max() > 1e-6


class TestCodecs:
    def test_identity_exact(self):
        image, _, _ = make_scene(72)
        codec = IdentityCodec()
        back = codec.decode(codec.encode(image))
        np.testing.assert_allclose(back.pixels, image.pixels, atol=1e-6)

    def test_patch_codec_near_exact(self):
        image, _, _ = make_scene(73)
        codec = PatchAutoencoderCodec()
        z = codec.encode(image)
        assert z.shape == codec.latent_shape(32, 32) == (12, 16, 16)
        back = codec.decode(z)
        assert np.abs(back.pixels - image.pixels).max() < 1e-5

    def test_unknown_codec(self):
        from pair.errors import UnknownBackendError

        with pytest.raises(UnknownBackendError):
            make_codec("bogus")


class TestCheckpoint:
    def test_save_load_identical_predictions(self, tmp_path):
        cfg = default_model_config()
        model = build_model(cfg)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        loaded, header = load_checkpoint(path)
        image, scene, _ = make_scene(74)
        numeric = encode_bundle(assemble_conditioning(scene), 32, 32, cfg.layer_channels)
        cond = batch_conditioning([numeric], cfg.vocab)
        z = torch.randn(1, 3, 32, 32)
        t = torch.tensor([321])
        with torch.no_grad():
            a = model.predict(z, cond, t)
            b = loaded.predict(z, cond, t)
        assert torch.equal(a, b)

    def test_truncated_file_rejected(self, tmp_path):
        cfg = default_model_config()
        model = build_model(cfg)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        data = path.read_bytes()
        (tmp_path / "t.ckpt").write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "t.ckpt")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_save_load_save_byte_stable(self, tmp_path):
        samples = small_samples(3)
        trainer = Trainer(
            default_model_config(),
            TrainingConfig(steps=5, batch_size=3, learning_rate=1e-3, seed=2),
            samples,
        )
        trainer.run()
        p1 = tmp_path / "a.ckpt"
        save_trainer(p1, trainer)
        resumed = resume_trainer(p1, samples)
        p2 = tmp_path / "b.ckpt"
        save_trainer(p2, resumed)
        assert p1.read_bytes() == p2.read_bytes()
        assert checkpoint_fingerprint(p1) == checkpoint_fingerprint(p2)

    def test_resume_equals_uninterrupted(self, tmp_path):
        samples = small_samples(4)
        cfg = default_model_config()
        tcfg = TrainingConfig(steps=16, batch_size=4, learning_rate=1e-3, seed=3)

        straight = Trainer(cfg, tcfg, samples)
        all_losses = straight.run(steps=16)

        split = Trainer(cfg, tcfg, samples)
        first = split.run(steps=8)
        path = tmp_path / "half.ckpt"
        save_trainer(path, split)
        resumed = resume_trainer(path, samples)
        second = resumed.run(steps=8)

        assert first == all_losses[:8]
        assert second == all_losses[8:]
