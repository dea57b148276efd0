"""Command-line entry point exposing every pipeline stage.

Output is machine-readable JSON by default; --pretty renders human
tables where one exists. All randomness takes an explicit --seed.
Exit codes: 0 success, 1 operation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

JUDGE_ENDPOINT_ENV = "GESTURA_JUDGE_ENDPOINT"


def _judge_backend():
    from . import judge as judge_mod

    endpoint = os.environ.get(JUDGE_ENDPOINT_ENV)
    if endpoint:
        return judge_mod.RemoteJudge(endpoint)
    return judge_mod.DeterministicJudge()


def _emit(payload, pretty_text=None, pretty=False):
    if pretty and pretty_text is not None:
        print(pretty_text)
    else:
        print(json.dumps(payload))


def cmd_encode_landmarks(args):
    from .landmarks import encode_landmarks, load_landmark_file

    clip = load_landmark_file(args.landmark_file)
    rows = []
    for frame in clip.frames:
        enc = encode_landmarks(frame)
        rows.append({
            "frame_index": frame.frame_index,
            "valid": enc.valid,
            "degenerate_count": enc.degenerate_count,
            "values": enc.values.tolist(),
        })
    payload = {"clip_id": clip.clip_id, "rows": rows}
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
    else:
        _emit(payload)
    return 0


def cmd_sample_frames(args):
    from .clips import sample_frame_indices

    _emit({"indices": sample_frame_indices(args.n_frames, args.k)})
    return 0


def cmd_split_dataset(args):
    from .datasets import load_manifest, split_dataset, split_to_json

    manifest = load_manifest(args.manifest)
    split = split_dataset(manifest, open_fraction=args.open_fraction,
                          closed_test_fraction=args.closed_test_fraction, seed=args.seed)
    text = split_to_json(split)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def cmd_validate_dataset(args):
    from .datasets import load_manifest, manifest_stats

    manifest = load_manifest(args.manifest)
    _emit({"ok": True, "stats": manifest_stats(manifest)})
    return 0


def cmd_parse_cot(args):
    from .datasets import CoTParseError, parse_cot

    if args.input == "-":
        text = sys.stdin.read()
    else:
        with open(args.input, encoding="utf-8") as fh:
            text = fh.read()
    try:
        trace = parse_cot(text)
    except CoTParseError as exc:
        _emit({"ok": False, "kind": exc.kind, "offset": exc.offset, "message": str(exc)})
        return 1
    _emit({"ok": True, "think": trace.think, "answer": trace.answer})
    return 0


def _topk_pretty(table, report=None):
    from .metrics import TOPK_LEVELS

    lines = [f"{'Category':<24} {'Samples':>7} " + " ".join(f"Top-{k:>1}".rjust(8) for k in TOPK_LEVELS)]
    for name in sorted(table.categories):
        row = table.categories[name]
        accs = " ".join(f"{table.accuracy(k, name):8.4f}" for k in TOPK_LEVELS)
        lines.append(f"{name:<24} {row['n_samples']:>7} {accs}")
    accs = " ".join(f"{table.accuracy(k):8.4f}" for k in TOPK_LEVELS)
    lines.append(f"{'Overall':<24} {table.n_samples:>7} {accs}")
    if report:
        deltas = " ".join(f"{report[k]['delta_pp']:+8.1f}" for k in TOPK_LEVELS)
        lines.append(f"{'Delta vs chance (pp)':<24} {'':>7} {deltas}")
    return "\n".join(lines)


def cmd_eval_metrics(args):
    from . import judge as judge_mod
    from . import metrics

    with open(args.input, encoding="utf-8") as fh:
        spec = json.load(fh)

    report = {}
    pretty_parts = []

    if "bleu" in spec:
        pairs = [(metrics.tokenize(rec["candidate"]),
                  [metrics.tokenize(r) for r in rec["references"]]) for rec in spec["bleu"]]
        result = metrics.corpus_bleu(pairs)
        report["bleu"] = {
            "scores": result.scores,
            "precisions": result.precisions,
            "brevity_penalty": result.brevity_penalty,
        }

    scores = list(spec.get("scores", []))
    if "judge" in spec:
        backend = _judge_backend()
        for rec in spec["judge"]:
            req = judge_mod.JudgeRequest(prediction=rec["prediction"], gold=rec["gold"])
            scores.append(judge_mod.score(req, backend).score)
    if scores:
        report["acc"] = {"semantic_acc": metrics.semantic_acc(scores),
                         "n_samples": len(scores)}

    if "topk" in spec:
        table = metrics.topk_table(spec["topk"])
        topk_report = {
            "overall": {str(k): table.accuracy(k) for k in metrics.TOPK_LEVELS},
            "per_category": {
                name: {str(k): table.accuracy(k, name) for k in metrics.TOPK_LEVELS}
                for name in table.categories
            },
            "n_samples": table.n_samples,
        }
        chance = None
        if "pool_size" in spec:
            chance = metrics.chance_delta_report(table, spec["pool_size"])
            topk_report["chance_delta_pp"] = {str(k): v["delta_pp"] for k, v in chance.items()}
        report["topk"] = topk_report
        pretty_parts.append(_topk_pretty(table, chance))

    if "agreement" in spec:
        a = spec["agreement"]["a"]
        b = spec["agreement"]["b"]
        agreement = {"kappa": metrics.cohen_kappa(a, b)}
        if all(x in (0, 1) for x in list(a) + list(b)):
            agreement["mcc"] = metrics.mcc(a, b)
            agreement["mae"] = metrics.mae_binary(a, b)
        report["agreement"] = agreement

    if "bootstrap" in spec:
        cfg = spec["bootstrap"]
        result = metrics.bootstrap_ci(
            cfg["samples"],
            n_resamples=cfg.get("n_resamples", 10000),
            method=cfg.get("method", "percentile"),
            confidence=cfg.get("confidence", 0.95),
            seed=cfg.get("seed", args.seed),
        )
        report["bootstrap"] = {
            "estimate": result.estimate, "low": result.low, "high": result.high,
            "method": result.method, "n_resamples": result.n_resamples, "seed": result.seed,
        }

    if "ttest" in spec:
        result = metrics.one_sample_t(spec["ttest"]["values"], spec["ttest"]["mu0"])
        report["ttest"] = {"t": result.t, "p_two_sided": result.p_two_sided,
                           "cohen_d": result.cohen_d}

    text = json.dumps(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    _emit(report, pretty_text="\n\n".join(pretty_parts) or None, pretty=args.pretty)
    return 0


def cmd_train_toy(args):
    from .projector import init_params
    from .training import (
        EncoderStub,
        LLMStub,
        Stage2Sample,
        TrainConfig,
        TrainableProjector,
        batched,
        make_separable_toy_set,
        run_stage1_epoch,
        run_stage2_step,
        write_loss_trace,
    )

    config = TrainConfig(epochs_stage1=args.epochs_stage1, epochs_stage2=args.epochs_stage2,
                         batch_size=args.batch_size, seed=args.seed,
                         peak_lr_stage1=args.peak_lr_stage1, peak_lr_stage2=args.peak_lr_stage2)
    d_in, d_v, d_h, d_z, d_g = 12, 16, 24, 8, 20
    samples = make_separable_toy_set(d_in=d_in, seed=config.seed)
    encoder = EncoderStub(d_in=d_in, d_v=d_v, seed=config.seed)
    llm = LLMStub(d_z=d_z, vocab_size=16, seed=config.seed, frozen=True)
    projector = TrainableProjector(init_params(d_v, d_h, d_z, seed=config.seed))

    batches = batched(samples, config.batch_size)
    total_steps_1 = len(batches) * config.epochs_stage1
    records = []
    stage1_losses = []
    for epoch in range(1, config.epochs_stage1 + 1):
        rep = run_stage1_epoch(batches, projector, encoder, llm, config, epoch,
                               total_steps_1, step_offset=(epoch - 1) * len(batches))
        records.extend(rep.steps)
        stage1_losses.append(rep.mean_loss)

    rng = np.random.default_rng(config.seed)
    llm.frozen = False
    ground_projector = TrainableProjector(init_params(d_g + d_v, d_h, d_z, seed=config.seed + 1))
    stage2 = [
        Stage2Sample(features=s.features,
                     ground=rng.uniform(-1, 1, size=d_g),
                     target_tokens=[s.label % llm.vocab_size])
        for s in samples
    ]
    batches2 = batched(stage2, config.batch_size)
    total_steps_2 = len(batches2) * config.epochs_stage2
    stage2_losses = []
    step = 0
    for epoch in range(1, config.epochs_stage2 + 1):
        for batch in batches2:
            step += 1
            rep = run_stage2_step(batch, ground_projector, encoder, llm, config, step, total_steps_2)
            records.append({"stage": 2, "epoch": epoch, "step": step, "lr": rep.lr, "loss": rep.loss})
            stage2_losses.append(rep.loss)

    if args.trace:
        write_loss_trace(args.trace, records)
    _emit({
        "stage1_epoch_mean_loss": stage1_losses,
        "stage2_step_loss_first": stage2_losses[0],
        "stage2_step_loss_last": stage2_losses[-1],
        "n_steps": len(records),
    })
    return 0


def cmd_serve(args):
    from .serving import MockBackend, ServerConfig, serve

    backend = MockBackend(comm_ms=args.comm_ms, infer_ms=args.infer_ms, tts_ms=args.tts_ms)
    handle = serve(ServerConfig(backend=backend, host=args.host, port=args.port))
    print(json.dumps({"address": handle.address, "backend": backend.kind}), flush=True)
    try:
        handle._thread.join()
    except KeyboardInterrupt:
        handle.stop()
    return 0


def cmd_client_send(args):
    from .serving import client_send

    response = client_send(args.clip, args.landmarks, args.server, intent_pool=args.intent)
    _emit({
        "clip_id": response.clip_id,
        "description": response.description,
        "meaning": response.meaning,
        "intention": response.intention,
        "ranked_intents": response.ranked_intents,
        "latency": response.latency.to_dict(),
    })
    return 0


def cmd_bench_latency(args):
    from .serving import bench_latency

    body = {
        "clip_id": "bench",
        "view": "egocentric",
        "intent_pool": [],
        "frames": ["AA=="] * 8,
    }
    report = bench_latency(args.server, body, args.n_requests, concurrency=args.concurrency)
    _emit(report)
    return 0


def cmd_judge_agreement(args):
    from . import metrics

    with open(args.input, encoding="utf-8") as fh:
        spec = json.load(fh)
    a, b = spec["a"], spec["b"]
    payload = {"kappa": metrics.cohen_kappa(a, b)}
    if all(x in (0, 1) for x in list(a) + list(b)):
        payload["mcc"] = metrics.mcc(a, b)
        payload["mae"] = metrics.mae_binary(a, b)
    _emit(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gestura", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode-landmarks", help="encode a landmark file into 1024-value rows")
    p.add_argument("landmark_file")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_encode_landmarks)

    p = sub.add_parser("sample-frames", help="uniform frame sampling indices")
    p.add_argument("--n-frames", type=int, required=True)
    p.add_argument("--k", type=int, default=8)
    p.set_defaults(func=cmd_sample_frames)

    p = sub.add_parser("split-dataset", help="open/closed split of a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--open-fraction", type=float, default=0.10)
    p.add_argument("--closed-test-fraction", type=float, default=0.10)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_split_dataset)

    p = sub.add_parser("validate-dataset", help="validate a manifest and report stats")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate_dataset)

    p = sub.add_parser("parse-cot", help="parse a tagged reasoning trace ('-' for stdin)")
    p.add_argument("input")
    p.set_defaults(func=cmd_parse_cot)

    p = sub.add_parser("eval-metrics", help="compute metric report sections from a JSON spec")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_eval_metrics)

    p = sub.add_parser("train-toy", help="run the toy two-stage training pipeline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs-stage1", type=int, default=3)
    p.add_argument("--epochs-stage2", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--peak-lr-stage1", type=float, default=1e-3)
    p.add_argument("--peak-lr-stage2", type=float, default=2e-5)
    p.add_argument("--trace", help="write the per-step loss trace to this path")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("serve", help="run the inference server with a mock backend")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--comm-ms", type=float, default=0.0)
    p.add_argument("--infer-ms", type=float, default=0.0)
    p.add_argument("--tts-ms", type=float, default=0.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client-send", help="send a clip + landmark file to a server")
    p.add_argument("--clip", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--server", required=True)
    p.add_argument("--intent", action="append", default=[])
    p.set_defaults(func=cmd_client_send)

    p = sub.add_parser("bench-latency", help="aggregate request latency against a server")
    p.add_argument("--server", required=True)
    p.add_argument("--n-requests", type=int, default=20)
    p.add_argument("--concurrency", type=int, default=8)
    p.set_defaults(func=cmd_bench_latency)

    p = sub.add_parser("judge-agreement", help="kappa/MCC/MAE between two verdict sequences")
    p.add_argument("input")
    p.set_defaults(func=cmd_judge_agreement)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
