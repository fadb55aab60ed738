"""Assembling the co-training corpus: text and visual halves at 1:1.

Text records are derived from visual ones by dropping the grounding and,
where available, substituting the full unambiguous referring expression. The
larger side is subsampled without replacement, so counts land on exact ratio
multiples and nothing is fabricated.
"""

from groundkit.core import Instruction, NormBox
from groundkit.ingest import DatasetManifest, Grounding, Sample, make_provenance
from groundkit.mixture import MixtureSpec, build_mixture, mixture_stats, text_from_visual

visual = DatasetManifest(
    records=[
        Sample(
            episode_id=f"ep-{i:03d}",
            modality="visual",
            instruction=Instruction(text="pick up", modality="grounded"),
            grounding=Grounding(box=NormBox(0.1 + 0.002 * i, 0.2, 0.5, 0.8)),
        )
        for i in range(40)
    ],
    provenance=make_provenance(seed=0),
)

# Full referring expressions for a few episodes; the rest keep the minimal text.
overrides = {
    "ep-000": "Pick the bottle on the far right of the cluster.",
    "ep-001": "Pick the egg in the right tray, row 2, column 3.",
}
text = text_from_visual(visual, overrides)
print("first three text instructions:")
for record in text.records[:3]:
    print("  -", record.instruction.text)

mixed = build_mixture(text, visual, MixtureSpec(shuffle_seed=5))
stats = mixture_stats(mixed)
print("\nmixture:", stats["total"], "records,", stats["text"], "text /", stats["visual"], "visual")
print("format histogram:", stats["format_histogram"])

# an unbalanced corpus: the larger side is trimmed, ids of dropped records kept
small_visual = DatasetManifest(records=visual.records[:7], provenance=make_provenance())
mixed2 = build_mixture(text, small_visual, MixtureSpec(shuffle_seed=5))
stats2 = mixture_stats(mixed2)
print("\n40 text + 7 visual at 1:1 ->", stats2["text"], "/", stats2["visual"])
print("dropped text records:", len(mixed2.provenance["dropped_episode_ids"]["text"]))
