"""Semantic judge on the 0-5 scale.

Two backends share one interface: a deterministic token-overlap judge
for tests and offline runs, and a remote client speaking the serving
wire format. Scores are cacheable; a paraphrase-stability probe reports
verdict variance across prompt variants.
"""

from __future__ import annotations

import hashlib
import math
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

import requests

from .metrics import tokenize

ACCEPT_THRESHOLD = 4

# Half-open F1 bands mapping token overlap to the 0-5 scale; the last
# band is closed at 1.0 so an exact match always scores 5.
SCORE_BANDS = ((0.0, 0.1), (0.1, 0.35), (0.35, 0.55), (0.55, 0.7), (0.7, 0.85), (0.85, 1.0))

JUDGE_PROMPT_VARIANTS = (
    "Score the semantic similarity of the prediction against the ground "
    "truth on a 0-5 scale, where 0 is completely unrelated, 1-3 is a weak "
    "or partial match, and 4-5 is semantically accurate. Reply with a "
    "single integer.",
    "On a scale from 0 (completely unrelated) through 1-3 (weak or partial "
    "match) up to 4-5 (semantically accurate), rate how close the "
    "prediction is to the ground truth. Answer with one integer only.",
    "How semantically similar is the prediction to the ground truth? Use "
    "0 for completely unrelated, 1-3 for a weak or partial match, 4-5 for "
    "semantically accurate. Output a single integer.",
)


class BackendUnavailableError(RuntimeError):
    """Remote judge could not be reached after retries."""


class JudgeProtocolError(RuntimeError):
    """Remote judge replied with something other than a single 0-5 integer."""


@dataclass
class JudgeScore:
    score: int
    rationale: str | None = None

    def __post_init__(self):
        if not (0 <= self.score <= 5):
            raise ValueError(f"score must be in 0..5, got {self.score}")


@dataclass
class JudgeRequest:
    prediction: str
    gold: str
    prompt_variant: int = 0

    def __post_init__(self):
        if not self.prediction.strip() or not self.gold.strip():
            raise ValueError("prediction and gold must be non-empty")
        if self.prompt_variant < 0:
            raise ValueError("prompt_variant must be >= 0")


def token_f1(prediction: str, gold: str) -> float:
    """Clipped-count token overlap F1 between two texts."""
    pred = Counter(tokenize(prediction))
    ref = Counter(tokenize(gold))
    n_pred = sum(pred.values())
    n_ref = sum(ref.values())
    if n_pred == 0 or n_ref == 0:
        return 0.0
    overlap = sum(min(pred[t], ref[t]) for t in pred)
    if overlap == 0:
        return 0.0
    precision = overlap / n_pred
    recall = overlap / n_ref
    return 2 * precision * recall / (precision + recall)


def f1_to_score(f1: float) -> int:
    for score, (lo, hi) in enumerate(SCORE_BANDS):
        if lo <= f1 < hi:
            return score
    return 5  # f1 == 1.0


class DeterministicJudge:
    """Bit-reproducible judge: token-overlap F1 mapped onto 0-5 bands."""

    kind = "deterministic"

    def score(self, request: JudgeRequest) -> JudgeScore:
        f1 = token_f1(request.prediction, request.gold)
        return JudgeScore(score=f1_to_score(f1), rationale=f"token_f1={f1:.4f}")


class RemoteJudge:
    """Client for a remote judge endpoint speaking the serving wire format."""

    kind = "remote"

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 2):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def score(self, request: JudgeRequest) -> JudgeScore:
        body = {
            "prediction": request.prediction,
            "gold": request.gold,
            "variant": request.prompt_variant,
        }
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                reply = requests.post(f"{self.endpoint}/judge", json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(0.05 * (attempt + 1))
                continue
            if reply.status_code != 200:
                raise JudgeProtocolError(f"judge endpoint returned HTTP {reply.status_code}")
            try:
                payload = reply.json()
                score = payload["score"]
            except (ValueError, KeyError, TypeError) as exc:
                raise JudgeProtocolError(f"malformed judge reply: {exc}") from exc
            if not isinstance(score, int) or not (0 <= score <= 5):
                raise JudgeProtocolError(f"judge reply score must be an integer 0-5, got {score!r}")
            return JudgeScore(score=score)
        raise BackendUnavailableError(f"judge endpoint unreachable after retries: {last_error}")


class JudgeCache:
    """Thread-safe (prediction, gold, variant) -> score cache.

    Optionally persists each entry to an append-only file of
    "<key hash>\\t<score>" records.
    """

    def __init__(self, path=None):
        self._entries: dict[str, int] = {}
        self._lock = threading.Lock()
        self._path = path
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        key, _, value = line.strip().partition("\t")
                        if key and value:
                            self._entries[key] = int(value)
            except FileNotFoundError:
                pass

    @staticmethod
    def key(request: JudgeRequest) -> str:
        digest = hashlib.sha256()
        for part in (request.prediction, request.gold, str(request.prompt_variant)):
            digest.update(part.encode("utf-8"))
            digest.update(b"\x00")
        return digest.hexdigest()

    def get(self, request: JudgeRequest):
        with self._lock:
            return self._entries.get(self.key(request))

    def put(self, request: JudgeRequest, score: int) -> None:
        key = self.key(request)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = score
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(f"{key}\t{score}\n")

    def __len__(self):
        return len(self._entries)


def score(request: JudgeRequest, backend, cache: JudgeCache | None = None) -> JudgeScore:
    """Score one request, consulting the cache first when one is given."""
    if cache is not None:
        cached = cache.get(request)
        if cached is not None:
            return JudgeScore(score=cached)
    result = backend.score(request)
    if cache is not None:
        cache.put(request, result.score)
    return result


def accept(judged, threshold: int = ACCEPT_THRESHOLD) -> bool:
    """A prediction counts as correct when its score reaches the threshold."""
    value = judged.score if hasattr(judged, "score") else int(judged)
    return value >= threshold


@dataclass
class StabilityReport:
    verdicts: list[list[bool]]  # [item][variant]
    acceptance_rates: list[float]  # per variant
    std: float


def stability_probe(requests_, backend, n_variants: int = 3,
                    cache: JudgeCache | None = None) -> StabilityReport:
    """Re-judge every item under paraphrased prompt variants and report the
    standard deviation of the per-variant acceptance rates."""
    if n_variants < 2:
        raise ValueError("n_variants must be >= 2")
    items = list(requests_)
    if not items:
        raise ValueError("at least one request is required")
    verdicts = []
    for item in items:
        row = []
        for variant in range(n_variants):
            req = JudgeRequest(prediction=item.prediction, gold=item.gold, prompt_variant=variant)
            row.append(accept(score(req, backend, cache)))
        verdicts.append(row)
    rates = [sum(row[v] for row in verdicts) / len(items) for v in range(n_variants)]
    mean_rate = sum(rates) / n_variants
    std = math.sqrt(sum((r - mean_rate) ** 2 for r in rates) / n_variants)
    return StabilityReport(verdicts=verdicts, acceptance_rates=rates, std=std)
