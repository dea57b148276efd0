"""Dataset formats: annotation prompts, CoT grammar, open/closed split.

Renders the two annotation prompt templates, parses valid and malformed
reasoning traces, and runs the open/closed split on a synthetic
110-class manifest.
"""

from gestura.datasets import (
    CoTParseError,
    CoTTrace,
    DatasetManifest,
    ManifestClip,
    manifest_stats,
    parse_cot,
    render_annotation_prompt,
    render_cot,
    split_dataset,
)

prompt = render_annotation_prompt("caption", {"video": "clip-0042.mp4"})
print("caption prompt (first 2 lines):")
print("\n".join(prompt.splitlines()[:2]))

trace = CoTTrace(
    think="An open palm moving side to side is the canonical greeting form.",
    answer="A friendly wave of greeting.",
)
rendered = render_cot(trace)
print(f"\nround trip ok: {parse_cot(rendered) == trace}")

for bad in ("<answer>no reasoning</answer>",
            "<think>a</think>stray<answer>b</answer>",
            "<think>a<answer>b</answer></think>"):
    try:
        parse_cot(bad)
    except CoTParseError as exc:
        print(f"rejected ({exc.kind} @ byte {exc.offset}): {bad[:40]}")

classes = [f"gesture-{i:03d}" for i in range(110)]
clips = [ManifestClip(f"{c}/clip-{j:02d}", c, "egocentric")
         for c in classes for j in range(14)]
manifest = DatasetManifest(classes=classes, clips=clips)
print(f"\nmanifest stats: {manifest_stats(manifest)}")

split = split_dataset(manifest, seed=0)
n_test = sum(len(p["closed_test"]) for p in split.assignments.values())
n_train = sum(len(p["train"]) for p in split.assignments.values())
print(f"open-set classes withheld: {len(split.open_set_classes)} of 110")
print(f"retained clips: {n_train} train / {n_test} closed-set test")
