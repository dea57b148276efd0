"""Toy-scale two-stage training harness.

Stage 1 aligns multi-view projections with a cosine alignment loss while
the encoder and language-model stubs stay frozen; stage 2 trains the
ground-feature projector together with the language-model stub under a
token-level cross-entropy, with the encoder still frozen. The learning
rate follows linear warmup into cosine decay.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import COT_TEMPLATE_EXAMPLE_RESPONSE
from .projector import ProjectorParams, concat_ground, projector_backward, projector_forward

MAX_STUB_VOCAB = 64


class FreezeViolationError(RuntimeError):
    """An update touched a component whose parameters are frozen."""


@dataclass
class TrainConfig:
    epochs_stage1: int = 1
    epochs_stage2: int = 1
    batch_size: int = 8
    peak_lr_stage1: float = 1e-3
    peak_lr_stage2: float = 2e-5
    warmup_ratio: float = 0.03
    seed: int = 0
    alignment_margin: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.warmup_ratio < 1.0):
            raise ValueError("warmup_ratio must be in (0, 1)")
        if self.peak_lr_stage1 <= 0 or self.peak_lr_stage2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs_stage1 < 1 or self.epochs_stage2 < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")


def lr_at(step: int, total_steps: int, peak_lr: float, warmup_ratio: float = 0.03) -> float:
    """Linear warmup to the peak over ceil(warmup_ratio * total_steps)
    steps, then cosine decay to 0 at total_steps."""
    if not (0 <= step <= total_steps):
        raise ValueError(f"step must be in [0, {total_steps}], got {step}")
    warmup = math.ceil(warmup_ratio * total_steps)
    if warmup >= total_steps:
        raise ValueError("total_steps too small for the warmup ratio")
    if step <= warmup:
        return peak_lr * step / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def _digest_arrays(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()


@dataclass
class ComponentHandle:
    """Snapshot of a component's identity, freeze state, and parameter digest."""

    name: str
    frozen: bool
    digest: str


class EncoderStub:
    """Frozen seeded linear video-encoder stand-in.

    Holds one mixing matrix per semantic view; encode(x) with no view uses
    view 0 as the plain feature path.
    """

    name = "video_encoder"

    def __init__(self, d_in: int, d_v: int, n_views: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(d_in)
        self.view_mats = rng.normal(0.0, scale, size=(n_views, d_v, d_in))
        self.frozen = True

    @property
    def n_views(self) -> int:
        return self.view_mats.shape[0]

    def encode(self, x, view: int = 0) -> np.ndarray:
        return self.view_mats[view] @ np.asarray(x, dtype=np.float64)

    def encode_views(self, x) -> list[np.ndarray]:
        return [self.encode(x, view) for view in range(self.n_views)]

    def digest(self) -> str:
        return _digest_arrays([self.view_mats])

    def handle(self) -> ComponentHandle:
        return ComponentHandle(self.name, self.frozen, self.digest())


class LLMStub:
    """Seeded linear token-scoring head over a toy vocabulary."""

    name = "llm_stub"

    def __init__(self, d_z: int, vocab_size: int = 32, seed: int = 0, frozen: bool = True):
        if vocab_size > MAX_STUB_VOCAB:
            raise ValueError(f"stub vocabulary capped at {MAX_STUB_VOCAB}")
        rng = np.random.default_rng(seed)
        self.W = rng.normal(0.0, 1.0 / math.sqrt(d_z), size=(vocab_size, d_z))
        self.b = np.zeros(vocab_size)
        self.frozen = frozen

    @property
    def vocab_size(self) -> int:
        return self.W.shape[0]

    def logits(self, z) -> np.ndarray:
        return self.W @ np.asarray(z, dtype=np.float64) + self.b

    def generate(self, z, length: int = 1) -> list[int]:
        token = int(np.argmax(self.logits(z)))
        return [token] * length

    def apply_gradients(self, dW, db, lr: float) -> None:
        if self.frozen:
            raise FreezeViolationError("llm_stub is frozen")
        self.W -= lr * dW
        self.b -= lr * db

    def digest(self) -> str:
        return _digest_arrays([self.W, self.b])

    def handle(self) -> ComponentHandle:
        return ComponentHandle(self.name, self.frozen, self.digest())


class TrainableProjector:
    """Single-writer wrapper pairing projector params with a freeze flag."""

    name = "projector"

    def __init__(self, params: ProjectorParams, frozen: bool = False):
        self.params = params
        self.frozen = frozen

    def apply_gradients(self, grads: ProjectorParams, lr: float) -> None:
        if self.frozen:
            raise FreezeViolationError("projector is frozen")
        for own, grad in zip(self.params.blocks(), grads.blocks()):
            own -= lr * grad

    def digest(self) -> str:
        return _digest_arrays(self.params.blocks())

    def handle(self) -> ComponentHandle:
        return ComponentHandle(self.name, self.frozen, self.digest())


def _zero_grads(params: ProjectorParams) -> ProjectorParams:
    return ProjectorParams(*(np.zeros_like(b) for b in params.blocks()))


def _accumulate(into: ProjectorParams, grads: ProjectorParams) -> None:
    for acc, g in zip(into.blocks(), grads.blocks()):
        acc += g


def _cosine_and_grad(a, b):
    """cos(a, b) and its gradient with respect to a (b treated constant)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0, np.zeros_like(a)
    c = float(np.dot(a, b) / (na * nb))
    grad = b / (na * nb) - c * a / (na * na)
    return c, grad


@dataclass
class ToySample:
    features: np.ndarray
    label: int


def make_separable_toy_set(n_classes: int = 3, per_class: int = 16, d_in: int = 12,
                           noise: float = 0.05, seed: int = 0) -> list[ToySample]:
    """Clearly separable toy samples: orthogonal class prototypes plus noise."""
    if n_classes > d_in:
        raise ValueError("need d_in >= n_classes for orthogonal prototypes")
    rng = np.random.default_rng(seed)
    prototypes = np.eye(d_in)[:n_classes]
    samples = []
    for label in range(n_classes):
        for _ in range(per_class):
            x = prototypes[label] + rng.normal(0.0, noise, size=d_in)
            samples.append(ToySample(features=x, label=label))
    return samples


def batched(samples, batch_size):
    return [samples[i:i + batch_size] for i in range(0, len(samples), batch_size)]


@dataclass
class Stage1EpochReport:
    epoch: int
    batch_losses: list[float]
    view_projections: list[np.ndarray]  # one (n_views, d_z) array per sample
    combined_projections: list[np.ndarray]
    labels: list[int]
    steps: list[dict] = field(default_factory=list)

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.batch_losses))


def alignment_loss_and_grads(z_views, z_negative, margin: float):
    """Cosine alignment loss: pull a sample's views together, push one
    random negative apart beyond the margin. Negative is stop-gradient."""
    n = len(z_views)
    loss = 0.0
    grads = [np.zeros_like(z) for z in z_views]
    for a in range(n):
        for b in range(a + 1, n):
            c_ab, g_a = _cosine_and_grad(z_views[a], z_views[b])
            _, g_b = _cosine_and_grad(z_views[b], z_views[a])
            loss += 1.0 - c_ab
            grads[a] -= g_a
            grads[b] -= g_b
    for a in range(n):
        c_an, g_a = _cosine_and_grad(z_views[a], z_negative)
        if c_an > margin:
            loss += c_an - margin
            grads[a] += g_a
    return loss, grads


def run_stage1_epoch(
    batches,
    projector: TrainableProjector,
    encoder_stub: EncoderStub,
    llm_stub: LLMStub,
    config: TrainConfig,
    epoch: int,
    total_steps: int,
    step_offset: int = 0,
) -> Stage1EpochReport:
    """One pre-training epoch: update the projector only.

    Both stubs must be frozen; their digests are asserted unchanged.
    """
    if not encoder_stub.frozen:
        raise FreezeViolationError("stage 1 requires a frozen video encoder")
    if not llm_stub.frozen:
        raise FreezeViolationError("stage 1 requires a frozen llm stub")
    encoder_digest = encoder_stub.digest()
    llm_digest = llm_stub.digest()
    rng = np.random.default_rng(config.seed + 7919 * epoch)

    report = Stage1EpochReport(epoch=epoch, batch_losses=[], view_projections=[],
                               combined_projections=[], labels=[])
    step = step_offset
    for batch in batches:
        grads = _zero_grads(projector.params)
        batch_loss = 0.0
        view_features = [encoder_stub.encode_views(s.features) for s in batch]
        projections = [
            [projector_forward(v, projector.params) for v in views]
            for views in view_features
        ]
        for i, sample in enumerate(batch):
            z_views = projections[i]
            others = [j for j in range(len(batch)) if j != i]
            if others:
                j = int(rng.choice(others))
                z_negative = projections[j][0]
            else:
                z_negative = np.zeros_like(z_views[0])
            loss, z_grads = alignment_loss_and_grads(z_views, z_negative, config.alignment_margin)
            batch_loss += loss
            for v, upstream in zip(view_features[i], z_grads):
                g, _ = projector_backward(v, projector.params, upstream)
                _accumulate(grads, g)
            report.view_projections.append(np.stack(z_views))
            report.combined_projections.append(np.mean(z_views, axis=0))
            report.labels.append(sample.label)
        batch_loss /= len(batch)
        for block in grads.blocks():
            block /= len(batch)
        step += 1
        lr = lr_at(step, total_steps, config.peak_lr_stage1, config.warmup_ratio)
        projector.apply_gradients(grads, lr)
        report.batch_losses.append(batch_loss)
        report.steps.append({"stage": 1, "epoch": epoch, "step": step, "lr": lr, "loss": batch_loss})

    if encoder_stub.digest() != encoder_digest:
        raise FreezeViolationError("video encoder parameters changed during stage 1")
    if llm_stub.digest() != llm_digest:
        raise FreezeViolationError("llm stub parameters changed during stage 1")
    return report


def build_cot_prompt(projected_features, question: str) -> str:
    """Stage-2 instruction template with feature placeholder markers and the
    fixed <think>/<answer> target format."""
    z = np.asarray(projected_features, dtype=np.float64)
    return (
        "You are given a gesture clip as projected features.\n"
        f"Features: <features:{z.shape[-1]}>\n"
        f"Question: {question}\n"
        "Think step by step about the gesture's appearance, its conventional "
        "meaning, and the intention behind it. Write your reasoning enclosed "
        "in <think> ... </think>, and conclude with the inferred gesture "
        "meaning enclosed in <answer> ... </answer>.\n"
        "For example, your response should look like this:\n"
        f"{COT_TEMPLATE_EXAMPLE_RESPONSE}"
    )


@dataclass
class Stage2Sample:
    features: np.ndarray  # raw toy clip vector fed to the encoder stub
    ground: np.ndarray  # relative landmark encoding G for the clip
    target_tokens: list[int]
    question: str = "Please describe the gesture in detail and provide its meaning or intent."


@dataclass
class Stage2StepReport:
    step: int
    loss: float
    lr: float
    prompts: list[str]
    concatenated_lengths: list[int]


def cross_entropy_from_logits(logits, target_tokens):
    """Mean negative log-likelihood of the targets under one logits vector."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    log_probs = shifted - math.log(np.sum(np.exp(shifted)))
    loss = -float(np.mean([log_probs[t] for t in target_tokens]))
    probs = np.exp(log_probs)
    counts = np.bincount(target_tokens, minlength=logits.size) / len(target_tokens)
    dlogits = probs - counts
    return loss, dlogits


def run_stage2_step(
    batch,
    projector_ground: TrainableProjector,
    encoder_stub: EncoderStub,
    llm_stub: LLMStub,
    config: TrainConfig,
    step: int,
    total_steps: int,
) -> Stage2StepReport:
    """One fine-tuning step: landmark encoding concatenated with video
    features, projected, scored by the llm stub under cross-entropy.

    The encoder stays frozen; the projector and llm stub both update.
    """
    if not encoder_stub.frozen:
        raise FreezeViolationError("stage 2 requires a frozen video encoder")
    if llm_stub.frozen:
        raise FreezeViolationError("stage 2 requires a trainable llm stub")
    if projector_ground.frozen:
        raise FreezeViolationError("stage 2 requires a trainable projector")
    encoder_digest = encoder_stub.digest()

    grads = _zero_grads(projector_ground.params)
    dW = np.zeros_like(llm_stub.W)
    db = np.zeros_like(llm_stub.b)
    total_loss = 0.0
    prompts = []
    concat_lengths = []
    for sample in batch:
        v_feat = encoder_stub.encode(sample.features)
        combined = concat_ground(sample.ground, v_feat)
        concat_lengths.append(combined.size)
        z = projector_forward(combined, projector_ground.params)
        prompts.append(build_cot_prompt(z, sample.question))
        logits = llm_stub.logits(z)
        loss, dlogits = cross_entropy_from_logits(logits, sample.target_tokens)
        total_loss += loss
        dW += np.outer(dlogits, z)
        db += dlogits
        dz = llm_stub.W.T @ dlogits
        g, _ = projector_backward(combined, projector_ground.params, dz)
        _accumulate(grads, g)

    n = len(batch)
    total_loss /= n
    for block in grads.blocks():
        block /= n
    dW /= n
    db /= n
    lr = lr_at(step, total_steps, config.peak_lr_stage2, config.warmup_ratio)
    projector_ground.apply_gradients(grads, lr)
    llm_stub.apply_gradients(dW, db, lr)

    if encoder_stub.digest() != encoder_digest:
        raise FreezeViolationError("video encoder parameters changed during stage 2")
    return Stage2StepReport(step=step, loss=total_loss, lr=lr, prompts=prompts,
                            concatenated_lengths=concat_lengths)


def write_loss_trace(path, records) -> None:
    """Line-delimited trace: one {stage, epoch, step, lr, loss} record per step."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({k: rec[k] for k in ("stage", "epoch", "step", "lr", "loss")}) + "\n")
