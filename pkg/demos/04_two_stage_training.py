"""Two-stage toy training run.

Stage 1 aligns multi-view projections with the encoder and language
stub frozen; stage 2 unfreezes the language stub and trains the
ground-feature projector under cross-entropy. Prints the loss curves
and the frozen-parameter digests before and after.
"""

import numpy as np

from gestura.projector import init_params
from gestura.training import (
    EncoderStub,
    LLMStub,
    Stage2Sample,
    TrainConfig,
    TrainableProjector,
    batched,
    lr_at,
    make_separable_toy_set,
    run_stage1_epoch,
    run_stage2_step,
)

config = TrainConfig(epochs_stage1=5, epochs_stage2=3, batch_size=8,
                     peak_lr_stage1=1e-3, seed=0)
samples = make_separable_toy_set(n_classes=3, d_in=12, seed=0)
encoder = EncoderStub(d_in=12, d_v=16, seed=0)
llm = LLMStub(d_z=8, vocab_size=16, seed=0, frozen=True)
projector = TrainableProjector(init_params(16, 24, 8, seed=0))

print("learning-rate schedule samples (total 100 steps, peak 1e-3):")
for step in (0, 3, 25, 50, 100):
    print(f"  step {step:3d}: {lr_at(step, 100, 1e-3):.2e}")

batches = batched(samples, config.batch_size)
total = len(batches) * config.epochs_stage1
enc_before, llm_before = encoder.digest()[:12], llm.digest()[:12]
print(f"\nstage 1 (encoder {enc_before}..., llm {llm_before}... frozen):")
for epoch in range(1, config.epochs_stage1 + 1):
    rep = run_stage1_epoch(batches, projector, encoder, llm, config, epoch,
                           total, step_offset=(epoch - 1) * len(batches))
    print(f"  epoch {epoch}: mean loss {rep.mean_loss:.4f}")
print(f"encoder digest unchanged: {encoder.digest()[:12] == enc_before}")

llm.frozen = False
ground_projector = TrainableProjector(init_params(20 + 16, 24, 8, seed=1))
rng = np.random.default_rng(0)
stage2 = [Stage2Sample(features=s.features, ground=rng.uniform(-1, 1, size=20),
                       target_tokens=[s.label]) for s in samples]
batches2 = batched(stage2, config.batch_size)
total2 = len(batches2) * config.epochs_stage2

print("\nstage 2 (encoder frozen, projector + llm training):")
step = 0
for epoch in range(1, config.epochs_stage2 + 1):
    losses = []
    for batch in batches2:
        step += 1
        rep = run_stage2_step(batch, ground_projector, encoder, llm, config, step, total2)
        losses.append(rep.loss)
    print(f"  epoch {epoch}: mean loss {np.mean(losses):.4f}")
print(f"encoder digest unchanged: {encoder.digest()[:12] == enc_before}")
print(f"llm digest moved:         {llm.digest()[:12] != llm_before}")
