"""Dataset model: three-dimension annotations, reasoning-trace grammar,
annotation prompt templates, manifest statistics, and the open/closed
split procedure.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"
_TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)

# Violation kinds reported by parse_cot.
MISSING_THINK = "missing_think"
MISSING_ANSWER = "missing_answer"
DUPLICATE_THINK = "duplicate_think"
DUPLICATE_ANSWER = "duplicate_answer"
UNCLOSED_TAG = "unclosed_tag"
NESTED_TAGS = "nested_tags"
OUT_OF_ORDER = "out_of_order"
INTERLEAVED_TEXT = "interleaved_text"
EMPTY_BLOCK = "empty_block"


class CoTParseError(ValueError):
    """Structured parse failure naming the violation kind and byte offset."""

    def __init__(self, kind: str, offset: int, message: str):
        super().__init__(f"{kind} at byte {offset}: {message}")
        self.kind = kind
        self.offset = offset


@dataclass
class CoTTrace:
    think: str
    answer: str

    def __post_init__(self):
        for name, text in (("think", self.think), ("answer", self.answer)):
            if not text.strip():
                raise ValueError(f"{name} payload must be non-empty")
            for tag in _TAGS:
                if tag in text:
                    raise ValueError(f"{name} payload must not contain tag literal {tag}")


@dataclass
class QAAnnotation:
    clip_id: str
    description: str
    meaning: str
    intention: str | None = None

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("description must be non-empty")
        if not self.meaning.strip():
            raise ValueError("meaning must be non-empty")


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def _find_all(text: str, needle: str) -> list[int]:
    out = []
    start = 0
    while True:
        i = text.find(needle, start)
        if i < 0:
            return out
        out.append(i)
        start = i + 1


def parse_cot(text: str) -> CoTTrace:
    """Parse exactly one <think> block followed by one <answer> block.

    Only whitespace may surround the two blocks. Any other shape raises
    CoTParseError carrying the violation kind and byte offset.
    """
    occurrences = {tag: _find_all(text, tag) for tag in _TAGS}

    for tag, kind in ((THINK_OPEN, DUPLICATE_THINK), (THINK_CLOSE, DUPLICATE_THINK),
                      (ANSWER_OPEN, DUPLICATE_ANSWER), (ANSWER_CLOSE, DUPLICATE_ANSWER)):
        pos = occurrences[tag]
        if len(pos) > 1:
            raise CoTParseError(kind, _byte_offset(text, pos[1]), f"tag {tag} appears more than once")

    if not occurrences[THINK_OPEN]:
        raise CoTParseError(MISSING_THINK, 0, "no <think> block")
    if not occurrences[ANSWER_OPEN]:
        raise CoTParseError(MISSING_ANSWER, 0, "no <answer> block")
    if not occurrences[THINK_CLOSE]:
        raise CoTParseError(UNCLOSED_TAG, _byte_offset(text, occurrences[THINK_OPEN][0]),
                            "<think> is never closed")
    if not occurrences[ANSWER_CLOSE]:
        raise CoTParseError(UNCLOSED_TAG, _byte_offset(text, occurrences[ANSWER_OPEN][0]),
                            "<answer> is never closed")

    t0 = occurrences[THINK_OPEN][0]
    t1 = occurrences[THINK_CLOSE][0]
    a0 = occurrences[ANSWER_OPEN][0]
    a1 = occurrences[ANSWER_CLOSE][0]

    if t0 < a0 < t1 or a0 < t0 < a1:
        inner = min(x for x in (a0, t0) if x > min(t0, a0))
        raise CoTParseError(NESTED_TAGS, _byte_offset(text, inner), "tags are nested")
    if not (t0 < t1 < a0 < a1):
        raise CoTParseError(OUT_OF_ORDER, _byte_offset(text, min(t0, a0)),
                            "blocks must appear as <think>...</think><answer>...</answer>")

    for lo, hi in ((0, t0), (t1 + len(THINK_CLOSE), a0), (a1 + len(ANSWER_CLOSE), len(text))):
        segment = text[lo:hi]
        stripped = segment.lstrip()
        if stripped:
            at = lo + (len(segment) - len(stripped))
            raise CoTParseError(INTERLEAVED_TEXT, _byte_offset(text, at),
                                f"unexpected text {stripped[:20]!r} outside the tagged blocks")

    think = text[t0 + len(THINK_OPEN):t1]
    answer = text[a0 + len(ANSWER_OPEN):a1]
    if not think.strip():
        raise CoTParseError(EMPTY_BLOCK, _byte_offset(text, t0), "empty think payload")
    if not answer.strip():
        raise CoTParseError(EMPTY_BLOCK, _byte_offset(text, a0), "empty answer payload")
    return CoTTrace(think=think, answer=answer)


def render_cot(trace: CoTTrace) -> str:
    """Canonical tagged rendering; round-trips through parse_cot."""
    return f"{THINK_OPEN}{trace.think}{THINK_CLOSE}{ANSWER_OPEN}{trace.answer}{ANSWER_CLOSE}"


_CAPTION_TEMPLATE = (
    "Please caption the following hand gesture video by providing a detailed "
    "description of hands and its potential meaning:\n"
    "Gesture Video: {video}\n"
    "Provide your response only as a Python dictionary string with keys, "
    "'description', and 'meaning'.\n"
    "- 'description' should be a clear, concise explanation of the gesture's "
    "physical appearance and common usage.\n"
    "- 'meaning' should explain the potential interpretation or cultural "
    "significance of the gesture.\n"
    "DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the "
    "Python dictionary string.\n"
    "For example, your response should look like this: {{'description': "
    "'Raising the thumb upward while other fingers are curled.', 'meaning': "
    "'Represents approval or agreement.'}}"
)

_COT_TEMPLATE = (
    "Given the following gesture description and its intended meaning, please "
    "explain the reasoning process that connects the physical appearance of "
    "the gesture to its intended interpretation.\n"
    "- Gesture Description: {description}\n"
    "- Intended Meaning: {meaning}\n"
    "Write your reasoning enclosed in <think> ... </think>, and conclude with "
    "the inferred gesture meaning enclosed in <answer> ... </answer>.\n"
    "Only output the reasoning and answer in the specified format. DO NOT "
    "include any other text, comments, or explanations.\n"
    "For example, your response should look like this:\n"
    "<think>Raising the thumb is commonly used in many cultures to indicate "
    "positivity or agreement. Since the gesture matches this form, the "
    "intended meaning is approval.</think>\n"
    "<answer>Represents approval or agreement.</answer>"
)

# The worked example embedded in the CoT template; used by round-trip tests.
COT_TEMPLATE_EXAMPLE_RESPONSE = (
    "<think>Raising the thumb is commonly used in many cultures to indicate "
    "positivity or agreement. Since the gesture matches this form, the "
    "intended meaning is approval.</think>\n"
    "<answer>Represents approval or agreement.</answer>"
)

_PROMPT_STAGES = {
    "caption": (_CAPTION_TEMPLATE, ("video",)),
    "cot": (_COT_TEMPLATE, ("description", "meaning")),
}


def render_annotation_prompt(stage: str, fields: dict) -> str:
    """Byte-stable rendering of the caption or reasoning prompt template."""
    if stage not in _PROMPT_STAGES:
        raise ValueError(f"stage must be one of {sorted(_PROMPT_STAGES)}, got {stage!r}")
    template, required = _PROMPT_STAGES[stage]
    missing = [name for name in required if name not in fields]
    if missing:
        raise ValueError(f"missing required fields for {stage!r} prompt: {missing}")
    return template.format(**{name: fields[name] for name in required})


def validate_caption_record(record) -> list[str]:
    """Check the two-key caption dictionary shape; returns violations."""
    violations = []
    if not isinstance(record, dict):
        return ["record is not a dictionary"]
    for key in ("description", "meaning"):
        if key not in record:
            violations.append(f"missing key {key!r}")
        elif not isinstance(record[key], str) or not record[key].strip():
            violations.append(f"empty value for {key!r}")
    for key in record:
        if key not in ("description", "meaning"):
            violations.append(f"unexpected key {key!r}")
    return violations


@dataclass
class ManifestClip:
    clip_id: str
    class_label: str
    view: str
    annotation: QAAnnotation | None = None


@dataclass
class DatasetManifest:
    classes: list[str]
    clips: list[ManifestClip] = field(default_factory=list)

    def __post_init__(self):
        known = set(self.classes)
        if len(known) != len(self.classes):
            raise ValueError("duplicate class names in manifest")
        for clip in self.clips:
            if clip.class_label not in known:
                raise ValueError(f"clip {clip.clip_id!r} references unknown class {clip.class_label!r}")


@dataclass
class SplitAssignment:
    seed: int
    open_set_classes: list[str]
    assignments: dict  # class -> {"train": [...], "closed_test": [...]}


def split_dataset(
    manifest: DatasetManifest,
    open_fraction: float = 0.10,
    closed_test_fraction: float = 0.10,
    seed: int = 0,
) -> SplitAssignment:
    """Withhold ~10% of classes entirely; per retained class set aside
    ceil(10%) of its clips for closed-set testing.

    Open-set class count is round-half-up with a floor of 1. Selection is
    a seeded shuffle, deterministic in (manifest, seed).
    """
    classes = sorted(manifest.classes)
    if len(classes) < 10:
        raise ValueError(f"need at least 10 classes to split, got {len(classes)}")
    by_class: dict[str, list[str]] = {c: [] for c in classes}
    for clip in manifest.clips:
        by_class[clip.class_label].append(clip.clip_id)

    rng = random.Random(seed)
    n_open = max(1, math.floor(open_fraction * len(classes) + 0.5))
    shuffled = classes[:]
    rng.shuffle(shuffled)
    open_set = sorted(shuffled[:n_open])
    retained = [c for c in classes if c not in set(open_set)]

    for c in retained:
        if not by_class[c]:
            raise ValueError(f"retained class {c!r} has no clips")

    assignments = {}
    for c in retained:
        clip_ids = sorted(by_class[c])
        rng.shuffle(clip_ids)
        n_test = math.ceil(closed_test_fraction * len(clip_ids))
        assignments[c] = {
            "closed_test": sorted(clip_ids[:n_test]),
            "train": sorted(clip_ids[n_test:]),
        }
    return SplitAssignment(seed=seed, open_set_classes=open_set, assignments=assignments)


def manifest_stats(manifest: DatasetManifest) -> dict:
    """Exact sample/class/caption-type counts plus per-view totals."""
    per_view: dict[str, int] = {}
    dimensions = set()
    for clip in manifest.clips:
        per_view[clip.view] = per_view.get(clip.view, 0) + 1
        if clip.annotation is not None:
            dimensions.add("description")
            dimensions.add("meaning")
            if clip.annotation.intention is not None:
                dimensions.add("intention")
    return {
        "n_samples": len(manifest.clips),
        "n_classes": len(manifest.classes),
        "n_caption_types": len(dimensions),
        "per_view": per_view,
    }


def manifest_to_json(manifest: DatasetManifest) -> str:
    return json.dumps(
        {
            "classes": manifest.classes,
            "clips": [
                {
                    "clip_id": c.clip_id,
                    "class_label": c.class_label,
                    "view": c.view,
                    "annotation": None
                    if c.annotation is None
                    else {
                        "clip_id": c.annotation.clip_id,
                        "description": c.annotation.description,
                        "meaning": c.annotation.meaning,
                        "intention": c.annotation.intention,
                    },
                }
                for c in manifest.clips
            ],
        }
    )


def manifest_from_json(text: str) -> DatasetManifest:
    doc = json.loads(text)
    clips = []
    for rec in doc.get("clips", []):
        ann = rec.get("annotation")
        clips.append(
            ManifestClip(
                clip_id=rec["clip_id"],
                class_label=rec["class_label"],
                view=rec["view"],
                annotation=None
                if ann is None
                else QAAnnotation(
                    clip_id=ann.get("clip_id", rec["clip_id"]),
                    description=ann["description"],
                    meaning=ann["meaning"],
                    intention=ann.get("intention"),
                ),
            )
        )
    return DatasetManifest(classes=list(doc["classes"]), clips=clips)


def load_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        return manifest_from_json(fh.read())


def split_to_json(split: SplitAssignment) -> str:
    return json.dumps(
        {
            "seed": split.seed,
            "open_set_classes": split.open_set_classes,
            "assignments": split.assignments,
        },
        sort_keys=True,
    )


def split_from_json(text: str) -> SplitAssignment:
    doc = json.loads(text)
    return SplitAssignment(
        seed=int(doc["seed"]),
        open_set_classes=list(doc["open_set_classes"]),
        assignments=dict(doc["assignments"]),
    )


def write_cot_corpus(path, records) -> None:
    """One JSON record per line: {clip_id, prompt, trace}."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_cot_corpus(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
