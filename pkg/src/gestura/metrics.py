"""Quantitative evaluation suite.

BLEU-1..4 with clipped n-gram counts and brevity penalty, judge-based
semantic accuracy, top-k intent accuracy tables, Cohen's kappa, MCC,
binary MAE, percentile and BCa bootstrap confidence intervals, and a
one-sample t-test with Cohen's d.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

TOPK_LEVELS = (1, 3, 5)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word tokens with punctuation separated."""
    return _TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_counts(candidate, references, n):
    cand = _ngram_counts(candidate, n)
    total = sum(cand.values())
    if total == 0:
        return 0, 0
    max_ref = Counter()
    for ref in references:
        ref_counts = _ngram_counts(ref, n)
        for gram, count in ref_counts.items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    clipped = sum(min(count, max_ref[gram]) for gram, count in cand.items())
    return clipped, total


def _effective_ref_length(c, references):
    # closest reference length; ties broken toward the shorter reference
    return min((len(r) for r in references), key=lambda rl: (abs(rl - c), rl))


@dataclass
class BleuResult:
    """Modified precisions, brevity penalty, and BLEU-1..max_n."""

    precisions: list[float]
    brevity_penalty: float
    candidate_length: int
    reference_length: int
    scores: list[float]

    def bleu_n(self, n: int) -> float:
        return self.scores[n - 1]


def _scores_from_precisions(precisions, bp, max_n):
    scores = []
    for n in range(1, max_n + 1):
        ps = precisions[:n]
        if any(p == 0.0 for p in ps):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(math.fsum(math.log(p) / n for p in ps)))
    return scores


def bleu(candidate, references, max_n: int = 4) -> BleuResult:
    """Sentence-level BLEU over pre-tokenized sequences, no smoothing.

    BLEU-n = BP * exp(sum_{i<=n} log(p_i) / n); zero if any p_i is zero.
    BP = 1 when the candidate is longer than the effective reference.
    """
    if not references:
        raise ValueError("at least one reference is required")
    candidate = list(candidate)
    references = [list(r) for r in references]
    if not candidate:
        return BleuResult([0.0] * max_n, 0.0, 0, _effective_ref_length(0, references), [0.0] * max_n)
    precisions = []
    for n in range(1, max_n + 1):
        clipped, total = _clipped_counts(candidate, references, n)
        precisions.append(clipped / total if total else 0.0)
    c = len(candidate)
    r = _effective_ref_length(c, references)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return BleuResult(precisions, bp, c, r, _scores_from_precisions(precisions, bp, max_n))


def corpus_bleu(pairs, max_n: int = 4) -> BleuResult:
    """Corpus-level BLEU: clipped counts and lengths summed over sentences."""
    if not pairs:
        raise ValueError("at least one candidate/references pair is required")
    clipped_sum = [0] * max_n
    total_sum = [0] * max_n
    c_sum = 0
    r_sum = 0
    for candidate, references in pairs:
        if not references:
            raise ValueError("at least one reference is required")
        candidate = list(candidate)
        references = [list(r) for r in references]
        for n in range(1, max_n + 1):
            clipped, total = _clipped_counts(candidate, references, n)
            clipped_sum[n - 1] += clipped
            total_sum[n - 1] += total
        c_sum += len(candidate)
        r_sum += _effective_ref_length(len(candidate), references)
    precisions = [clipped_sum[i] / total_sum[i] if total_sum[i] else 0.0 for i in range(max_n)]
    if c_sum == 0:
        return BleuResult(precisions, 0.0, 0, r_sum, [0.0] * max_n)
    bp = 1.0 if c_sum > r_sum else math.exp(1.0 - r_sum / c_sum)
    return BleuResult(precisions, bp, c_sum, r_sum, _scores_from_precisions(precisions, bp, max_n))


def semantic_acc(scores, threshold: int = 4) -> float:
    """Percentage of judge scores at or above the acceptance threshold."""
    values = [s.score if hasattr(s, "score") else int(s) for s in scores]
    if not values:
        raise ValueError("at least one score is required")
    return 100.0 * sum(1 for v in values if v >= threshold) / len(values)


@dataclass
class TopKTable:
    """Per-category hit counts at k=1,3,5 plus the pooled overall row."""

    categories: dict = field(default_factory=dict)  # name -> {n_samples, hits{k}}

    def add(self, category: str, rank_of_truth):
        row = self.categories.setdefault(category, {"n_samples": 0, "hits": {k: 0 for k in TOPK_LEVELS}})
        row["n_samples"] += 1
        if rank_of_truth is not None:
            if rank_of_truth < 1:
                raise ValueError("rank_of_truth must be >= 1 when present")
            for k in TOPK_LEVELS:
                if rank_of_truth <= k:
                    row["hits"][k] += 1

    @property
    def n_samples(self) -> int:
        return sum(row["n_samples"] for row in self.categories.values())

    def hits(self, k: int) -> int:
        return sum(row["hits"][k] for row in self.categories.values())

    def accuracy(self, k: int, category: str | None = None) -> float:
        if category is None:
            n = self.n_samples
            return self.hits(k) / n if n else 0.0
        row = self.categories[category]
        return row["hits"][k] / row["n_samples"] if row["n_samples"] else 0.0


def topk_table(per_sample) -> TopKTable:
    """Build the top-k table from (category, rank_of_truth) records.

    rank_of_truth is 1-based; None means the truth was absent from the
    ranked list.
    """
    table = TopKTable()
    for record in per_sample:
        if isinstance(record, dict):
            table.add(record["category"], record.get("rank_of_truth"))
        else:
            category, rank = record
            table.add(category, rank)
    return table


def cohen_kappa(labels_a, labels_b) -> float:
    """Cohen's kappa over two equal-length categorical sequences."""
    a = list(labels_a)
    b = list(labels_b)
    if len(a) != len(b):
        raise ValueError("label sequences must have equal length")
    if not a:
        raise ValueError("label sequences must be non-empty")
    n = len(a)
    labels = sorted(set(a) | set(b), key=str)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    p_e = sum((counts_a[l] / n) * (counts_b[l] / n) for l in labels)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def mcc(binary_a, binary_b) -> float:
    """Matthews correlation coefficient; 0.0 when any denominator factor is 0."""
    a = [int(x) for x in binary_a]
    b = [int(x) for x in binary_b]
    if len(a) != len(b):
        raise ValueError("label sequences must have equal length")
    if any(x not in (0, 1) for x in a + b):
        raise ValueError("labels must be binary (0/1)")
    tp = sum(1 for x, y in zip(a, b) if x == 1 and y == 1)
    tn = sum(1 for x, y in zip(a, b) if x == 0 and y == 0)
    fp = sum(1 for x, y in zip(a, b) if x == 1 and y == 0)
    fn = sum(1 for x, y in zip(a, b) if x == 0 and y == 1)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def mae_binary(a, b) -> float:
    """Mean absolute difference between two binary sequences."""
    xs = [int(x) for x in a]
    ys = [int(y) for y in b]
    if len(xs) != len(ys):
        raise ValueError("sequences must have equal length")
    if not xs:
        raise ValueError("sequences must be non-empty")
    return sum(abs(x - y) for x, y in zip(xs, ys)) / len(xs)


@dataclass
class BootstrapResult:
    estimate: float
    low: float
    high: float
    method: str
    n_resamples: int
    seed: int


def _apply_statistic(statistic, resampled):
    # statistic maps a 1-D sample to a scalar; use the axis form when the
    # callable supports it (numpy reductions), otherwise loop per resample
    try:
        out = np.asarray(statistic(resampled, axis=1), dtype=np.float64)
        if out.shape == (resampled.shape[0],):
            return out
    except TypeError:
        pass
    return np.array([statistic(row) for row in resampled], dtype=np.float64)


def bootstrap_ci(
    samples,
    statistic=np.mean,
    n_resamples: int = 10000,
    method: str = "percentile",
    confidence: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Bootstrap CI of a statistic, percentile or BCa, seeded and deterministic."""
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 1 or data.size < 2:
        raise ValueError("need at least two 1-D samples")
    if method not in ("percentile", "bca"):
        raise ValueError(f"method must be 'percentile' or 'bca', got {method!r}")
    rng = np.random.default_rng(seed)
    n = data.size
    idx = rng.integers(0, n, size=(n_resamples, n))
    boot = _apply_statistic(statistic, data[idx])
    point = float(statistic(data))
    alpha = 1.0 - confidence

    if np.all(boot == boot[0]):
        return BootstrapResult(point, float(boot[0]), float(boot[0]), method, n_resamples, seed)

    if method == "percentile":
        low, high = np.quantile(boot, [alpha / 2, 1 - alpha / 2])
        return BootstrapResult(point, float(low), float(high), method, n_resamples, seed)

    # BCa: bias correction from the fraction of resamples below the point
    # estimate, acceleration from jackknife skewness
    frac = np.mean(boot < point)
    frac = min(max(frac, 1.0 / (n_resamples + 1)), n_resamples / (n_resamples + 1))
    z0 = ndtri(frac)
    jack = _apply_statistic(statistic, _jackknife_matrix(data))
    jmean = jack.mean()
    num = np.sum((jmean - jack) ** 3)
    den = np.sum((jmean - jack) ** 2) ** 1.5
    a = 0.0 if den == 0.0 else num / (6.0 * den)
    z_lo = ndtri(alpha / 2)
    z_hi = ndtri(1 - alpha / 2)
    q_lo = ndtr(z0 + (z0 + z_lo) / (1 - a * (z0 + z_lo)))
    q_hi = ndtr(z0 + (z0 + z_hi) / (1 - a * (z0 + z_hi)))
    low, high = np.quantile(boot, [q_lo, q_hi])
    return BootstrapResult(point, float(low), float(high), method, n_resamples, seed)


def _jackknife_matrix(data):
    n = data.size
    # n x (n-1) matrix of leave-one-out samples
    tiled = np.broadcast_to(data, (n, n))
    mask = ~np.eye(n, dtype=bool)
    return tiled[mask].reshape(n, n - 1)


def _betacf(a, b, x, max_iter=200, eps=3e-12):
    # continued fraction for the regularized incomplete beta function
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < 1e-300:
        d = 1e-300
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def _betai(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log(1.0 - x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return _betai(df / 2.0, 0.5, x)


@dataclass
class TTestResult:
    t: float
    p_two_sided: float
    cohen_d: float


def one_sample_t(values, mu0: float) -> TTestResult:
    """One-sample t-test against mu0 with Cohen's d effect size."""
    data = np.asarray(values, dtype=np.float64)
    if data.size < 2:
        raise ValueError("need at least two values")
    sd = float(np.std(data, ddof=1))
    if sd == 0.0:
        raise ValueError("values have zero variance")
    mean = float(np.mean(data))
    n = data.size
    t = (mean - mu0) / (sd / math.sqrt(n))
    d = (mean - mu0) / sd
    p = t_sf_two_sided(t, n - 1)
    return TTestResult(t=t, p_two_sided=p, cohen_d=d)


def chance_delta_report(table: TopKTable, pool_size: int, ks=TOPK_LEVELS) -> dict:
    """Accuracy vs the k/pool_size chance baseline, delta in percentage points."""
    if pool_size < 5:
        raise ValueError("pool_size must be >= 5")
    report = {}
    for k in ks:
        accuracy = table.accuracy(k)
        chance = k / pool_size
        report[k] = {
            "accuracy": accuracy,
            "chance": chance,
            "delta_pp": 100.0 * (accuracy - chance),
        }
    return report
