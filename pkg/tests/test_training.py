import json
import math

import numpy as np
import pytest

from gestura.projector import init_params, projector_forward
from gestura.training import (
    EncoderStub,
    FreezeViolationError,
    LLMStub,
    Stage2Sample,
    TrainConfig,
    TrainableProjector,
    alignment_loss_and_grads,
    batched,
    build_cot_prompt,
    cross_entropy_from_logits,
    lr_at,
    make_separable_toy_set,
    run_stage1_epoch,
    run_stage2_step,
    write_loss_trace,
)

# one toy fixture shared by the stage tests
D_IN, D_V, D_H, D_Z, D_G = 12, 16, 24, 8, 20


def stage1_setup(seed=0):
    config = TrainConfig(epochs_stage1=5, batch_size=8, peak_lr_stage1=1e-3, seed=seed)
    samples = make_separable_toy_set(d_in=D_IN, seed=seed)
    encoder = EncoderStub(d_in=D_IN, d_v=D_V, seed=seed)
    llm = LLMStub(d_z=D_Z, vocab_size=16, seed=seed, frozen=True)
    projector = TrainableProjector(init_params(D_V, D_H, D_Z, seed=seed))
    return config, samples, encoder, llm, projector


class TestLrSchedule:
    def test_starts_at_zero(self):
        assert lr_at(0, 1000, 0.1) == 0.0

    def test_peak_at_warmup_end(self):
        total = 100
        warmup = math.ceil(0.03 * total)
        assert lr_at(warmup, total, 0.5) == 0.5

    def test_ends_at_zero(self):
        assert lr_at(1000, 1000, 0.1) == 0.0

    def test_linear_during_warmup(self):
        total = 1000
        warmup = math.ceil(0.03 * total)
        for step in range(warmup + 1):
            assert abs(lr_at(step, total, 1.0) - step / warmup) < 1e-15

    def test_cosine_against_direct_formula(self):
        total, peak = 1000, 0.2
        warmup = math.ceil(0.03 * total)
        for step in range(warmup + 1, total + 1):
            progress = (step - warmup) / (total - warmup)
            expected = peak * 0.5 * (1 + math.cos(math.pi * progress))
            assert abs(lr_at(step, total, peak) - expected) < 1e-15

    def test_monotone_decay_after_peak(self):
        total = 500
        warmup = math.ceil(0.03 * total)
        values = [lr_at(s, total, 1.0) for s in range(warmup, total + 1)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_out_of_range_step(self):
        with pytest.raises(ValueError):
            lr_at(-1, 100, 0.1)
        with pytest.raises(ValueError):
            lr_at(101, 100, 0.1)


class TestStubs:
    def test_encoder_views_are_distinct(self):
        enc = EncoderStub(d_in=6, d_v=4, n_views=3, seed=0)
        x = np.ones(6)
        views = enc.encode_views(x)
        assert len(views) == 3
        assert not np.allclose(views[0], views[1])

    def test_encoder_digest_stable(self):
        enc = EncoderStub(d_in=6, d_v=4, seed=0)
        assert enc.digest() == enc.digest()
        assert enc.digest() == EncoderStub(d_in=6, d_v=4, seed=0).digest()

    def test_llm_frozen_rejects_updates(self):
        llm = LLMStub(d_z=4, vocab_size=8, seed=0, frozen=True)
        with pytest.raises(FreezeViolationError):
            llm.apply_gradients(np.zeros_like(llm.W), np.zeros_like(llm.b), 0.1)

    def test_llm_vocab_cap(self):
        with pytest.raises(ValueError):
            LLMStub(d_z=4, vocab_size=65)

    def test_projector_frozen_rejects_updates(self):
        proj = TrainableProjector(init_params(4, 5, 3, seed=0), frozen=True)
        with pytest.raises(FreezeViolationError):
            proj.apply_gradients(init_params(4, 5, 3, seed=1), 0.1)

    def test_handles_report_state(self):
        enc = EncoderStub(d_in=6, d_v=4, seed=0)
        h = enc.handle()
        assert h.name == "video_encoder" and h.frozen and h.digest == enc.digest()


class TestAlignmentLoss:
    def test_identical_views_zero_pair_loss(self):
        z = np.array([1.0, 0.0, 0.0])
        negative = np.array([0.0, 1.0, 0.0])  # orthogonal, below the margin
        loss, grads = alignment_loss_and_grads([z, z.copy()], negative, margin=0.2)
        assert abs(loss) < 1e-12

    def test_negative_above_margin_penalized(self):
        z = np.array([1.0, 0.0])
        loss, _ = alignment_loss_and_grads([z], z.copy(), margin=0.2)
        assert abs(loss - (1.0 - 0.2)) < 1e-12

    def test_grads_match_finite_differences(self):
        rng = np.random.default_rng(0)
        views = [rng.normal(size=5) for _ in range(3)]
        negative = rng.normal(size=5)
        _, grads = alignment_loss_and_grads(views, negative, margin=0.2)
        h = 1e-6
        for a in range(3):
            for j in range(5):
                plus = [v.copy() for v in views]
                minus = [v.copy() for v in views]
                plus[a][j] += h
                minus[a][j] -= h
                lp, _ = alignment_loss_and_grads(plus, negative, margin=0.2)
                lm, _ = alignment_loss_and_grads(minus, negative, margin=0.2)
                fd = (lp - lm) / (2 * h)
                assert abs(grads[a][j] - fd) < 1e-6


class TestStage1:
    def test_loss_strictly_decreases_over_epochs(self):
        config, samples, encoder, llm, projector = stage1_setup()
        batches = batched(samples, config.batch_size)
        total = len(batches) * config.epochs_stage1
        means = []
        for epoch in range(1, config.epochs_stage1 + 1):
            rep = run_stage1_epoch(batches, projector, encoder, llm, config, epoch,
                                   total, step_offset=(epoch - 1) * len(batches))
            means.append(rep.mean_loss)
        assert all(a > b for a, b in zip(means, means[1:])), means

    def test_frozen_digests_unchanged(self):
        config, samples, encoder, llm, projector = stage1_setup()
        batches = batched(samples, config.batch_size)
        enc_digest, llm_digest = encoder.digest(), llm.digest()
        proj_digest = projector.digest()
        run_stage1_epoch(batches, projector, encoder, llm, config, 1, len(batches))
        assert encoder.digest() == enc_digest
        assert llm.digest() == llm_digest
        assert projector.digest() != proj_digest  # the projector must move

    def test_unfrozen_llm_rejected(self):
        config, samples, encoder, llm, projector = stage1_setup()
        llm.frozen = False
        with pytest.raises(FreezeViolationError):
            run_stage1_epoch(batched(samples, 8), projector, encoder, llm, config, 1, 10)

    def test_same_class_views_align(self):
        # after training, combined projections of a class sit closer to each
        # other than to other classes
        config, samples, encoder, llm, projector = stage1_setup()
        batches = batched(samples, config.batch_size)
        total = len(batches) * config.epochs_stage1
        rep = None
        for epoch in range(1, config.epochs_stage1 + 1):
            rep = run_stage1_epoch(batches, projector, encoder, llm, config, epoch,
                                   total, step_offset=(epoch - 1) * len(batches))
        combined = np.stack(rep.combined_projections)
        labels = np.array(rep.labels)
        unit = combined / np.linalg.norm(combined, axis=1, keepdims=True)
        sims = unit @ unit.T
        same = labels[:, None] == labels[None, :]
        off_diag = ~np.eye(len(labels), dtype=bool)
        within = sims[same & off_diag].mean()
        across = sims[~same].mean()
        assert within > across


class TestCrossEntropy:
    def test_matches_log_softmax(self):
        logits = np.array([2.0, -1.0, 0.5, 0.0])
        targets = [0, 2]
        loss, dlogits = cross_entropy_from_logits(logits, targets)
        probs = np.exp(logits) / np.sum(np.exp(logits))
        expected = -(math.log(probs[0]) + math.log(probs[2])) / 2
        assert abs(loss - expected) < 1e-12
        counts = np.array([0.5, 0.0, 0.5, 0.0])
        np.testing.assert_allclose(dlogits, probs - counts, atol=1e-12)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=6)
        targets = [1, 1, 4]
        _, dlogits = cross_entropy_from_logits(logits, targets)
        h = 1e-6
        for j in range(6):
            lp = logits.copy()
            lp[j] += h
            lm = logits.copy()
            lm[j] -= h
            fd = (cross_entropy_from_logits(lp, targets)[0]
                  - cross_entropy_from_logits(lm, targets)[0]) / (2 * h)
            assert abs(dlogits[j] - fd) < 1e-6

    def test_minimal_at_target_argmax(self):
        peaked = np.array([10.0, 0.0, 0.0])
        flat = np.zeros(3)
        assert cross_entropy_from_logits(peaked, [0])[0] < cross_entropy_from_logits(flat, [0])[0]


class TestStage2:
    def make_setup(self, seed=0):
        config = TrainConfig(epochs_stage2=5, batch_size=8, seed=seed)
        encoder = EncoderStub(d_in=D_IN, d_v=D_V, seed=seed)
        llm = LLMStub(d_z=D_Z, vocab_size=16, seed=seed, frozen=False)
        projector = TrainableProjector(init_params(D_G + D_V, D_H, D_Z, seed=seed + 1))
        rng = np.random.default_rng(seed)
        toy = make_separable_toy_set(d_in=D_IN, seed=seed)
        samples = [Stage2Sample(features=s.features,
                                ground=rng.uniform(-1, 1, size=D_G),
                                target_tokens=[s.label]) for s in toy]
        return config, samples, encoder, llm, projector

    def test_loss_decreases_and_encoder_frozen(self):
        config, samples, encoder, llm, projector = self.make_setup()
        batches = batched(samples, config.batch_size)
        total = len(batches) * config.epochs_stage2
        enc_digest = encoder.digest()
        llm_digest = llm.digest()
        losses = []
        step = 0
        for _ in range(config.epochs_stage2):
            for batch in batches:
                step += 1
                rep = run_stage2_step(batch, projector, encoder, llm, config, step, total)
                losses.append(rep.loss)
        assert losses[-1] < losses[0]
        assert encoder.digest() == enc_digest
        assert llm.digest() != llm_digest

    def test_concat_length_is_ground_plus_video(self):
        config, samples, encoder, llm, projector = self.make_setup()
        rep = run_stage2_step(samples[:4], projector, encoder, llm, config, 1, 10)
        assert rep.concatenated_lengths == [D_G + D_V] * 4

    def test_frozen_llm_rejected(self):
        config, samples, encoder, llm, projector = self.make_setup()
        llm.frozen = True
        with pytest.raises(FreezeViolationError):
            run_stage2_step(samples[:4], projector, encoder, llm, config, 1, 10)

    def test_frozen_projector_rejected(self):
        config, samples, encoder, llm, projector = self.make_setup()
        projector.frozen = True
        with pytest.raises(FreezeViolationError):
            run_stage2_step(samples[:4], projector, encoder, llm, config, 1, 10)

    def test_prompt_contains_feature_marker_and_format(self):
        config, samples, encoder, llm, projector = self.make_setup()
        rep = run_stage2_step(samples[:2], projector, encoder, llm, config, 1, 10)
        for prompt in rep.prompts:
            assert f"<features:{D_Z}>" in prompt
            assert "<think>" in prompt and "<answer>" in prompt


class TestBuildCotPrompt:
    def test_example_round_trips_through_parser(self):
        from gestura.datasets import parse_cot

        prompt = build_cot_prompt(np.zeros(8), "What does this gesture mean?")
        # the embedded worked example is itself a valid trace
        start = prompt.rindex("<think>")
        trace = parse_cot(prompt[start:])
        assert trace.answer.strip()


class TestLossTrace:
    def test_round_trip(self, tmp_path):
        records = [{"stage": 1, "epoch": 1, "step": i, "lr": 0.1 * i, "loss": 1.0 / (i + 1)}
                   for i in range(1, 4)]
        path = tmp_path / "trace.jsonl"
        write_loss_trace(path, records)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["step"] == 1
        assert set(json.loads(lines[-1])) == {"stage", "epoch", "step", "lr", "loss"}


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.peak_lr_stage1 == 1e-3
        assert cfg.peak_lr_stage2 == 2e-5
        assert cfg.warmup_ratio == 0.03

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(warmup_ratio=0.0)
        with pytest.raises(ValueError):
            TrainConfig(peak_lr_stage1=-1)
