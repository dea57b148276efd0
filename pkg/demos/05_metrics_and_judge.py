"""Evaluation suite tour: BLEU, top-k intent accuracy, agreement
statistics, bootstrap intervals, and the deterministic semantic judge.
"""

import numpy as np

from gestura.judge import DeterministicJudge, JudgeRequest, stability_probe
from gestura.metrics import (
    TopKTable,
    bleu,
    bootstrap_ci,
    chance_delta_report,
    cohen_kappa,
    mae_binary,
    mcc,
    one_sample_t,
    semantic_acc,
    tokenize,
)

candidate = tokenize("raising the thumb upward to signal approval")
reference = tokenize("the thumb raised upward signals approval or agreement")
result = bleu(candidate, [reference])
print("BLEU-1..4:", [f"{s:.4f}" for s in result.scores],
      f"(BP {result.brevity_penalty:.4f})")

judge = DeterministicJudge()
pairs = [
    ("a greeting wave of the open palm", "an open palm waved in greeting"),
    ("thumb pressed to index finger", "the ok sign of approval"),
    ("completely unrelated text", "a beckoning gesture"),
]
scores = [judge.score(JudgeRequest(prediction=p, gold=g)).score for p, g in pairs]
print(f"judge scores {scores} -> semantic ACC {semantic_acc(scores):.1f}%")

probe = stability_probe([JudgeRequest(prediction=p, gold=g) for p, g in pairs], judge)
print(f"paraphrase stability std: {probe.std:.4f} (deterministic judge)")

table = TopKTable()
rng = np.random.default_rng(0)
for category in ("come here", "thumbs up", "stop"):
    for _ in range(13):
        rank = int(rng.integers(1, 12))
        table.add(category, rank if rank <= 10 else None)
print("\ntop-k accuracy:", {k: round(table.accuracy(k), 4) for k in (1, 3, 5)})
deltas = chance_delta_report(table, pool_size=10)
print("delta vs chance (pp):", {k: round(v["delta_pp"], 1) for k, v in deltas.items()})

rater_a = rng.integers(0, 2, size=200).tolist()
rater_b = [x if rng.random() < 0.9 else 1 - x for x in rater_a]
print(f"\nkappa {cohen_kappa(rater_a, rater_b):.4f}, "
      f"mcc {mcc(rater_a, rater_b):.4f}, mae {mae_binary(rater_a, rater_b):.4f}")

samples = rng.normal(4.2, 0.8, size=60)
for method in ("percentile", "bca"):
    ci = bootstrap_ci(samples, method=method, n_resamples=5000, seed=0)
    print(f"bootstrap {method:10s}: {ci.estimate:.3f} [{ci.low:.3f}, {ci.high:.3f}]")

t = one_sample_t(samples, 4.0)
print(f"t = {t.t:.3f}, p = {t.p_two_sided:.4f}, d = {t.cohen_d:.3f}")
