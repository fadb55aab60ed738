"""Co-training corpus assembly: the union of text and visual samples at a fixed ratio.

The default 1:1 mixture subsamples the larger modality (seeded, without
replacement) down to exact ratio multiples, then interleaves both sides with a
seeded shuffle. Oversampling the smaller side with replacement is available
behind a flag for callers that cannot afford to drop data.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from .ingest import DatasetManifest, Sample, make_provenance
from .core import Instruction


class MixtureError(ValueError):
    """The requested mixture cannot be built from the given manifests."""


@dataclass(frozen=True)
class MixtureSpec:
    ratio_text: int = 1
    ratio_visual: int = 1
    shuffle_seed: int = 0
    dedup: bool = False
    oversample: bool = False

    def __post_init__(self) -> None:
        if self.ratio_text < 1 or self.ratio_visual < 1:
            raise MixtureError("mixture ratios must be positive integers")


def _record_key(sample: Sample) -> tuple:
    grounding = sample.grounding
    return (
        sample.episode_id,
        sample.modality,
        sample.instruction.text,
        sample.instruction.modality,
        grounding.box.as_tuple() if grounding else None,
        grounding.format.value if grounding else None,
    )


def _dedup(records: list[Sample]) -> list[Sample]:
    seen: set[tuple] = set()
    out = []
    for record in records:
        key = _record_key(record)
        if key not in seen:
            seen.add(key)
            out.append(record)
    return out


def _check_side(manifest: DatasetManifest, modality: str) -> list[Sample]:
    if not manifest.records:
        raise MixtureError(f"a mixture requires both modalities; {modality} manifest is empty")
    for record in manifest.records:
        if record.modality != modality:
            raise MixtureError(
                f"{modality} manifest contains a {record.modality!r} record "
                f"(episode {record.episode_id})"
            )
    return list(manifest.records)


def _subsample(records: list[Sample], keep: int, rng: random.Random) -> tuple[list[Sample], list[str]]:
    if keep >= len(records):
        return list(records), []
    kept_idx = sorted(rng.sample(range(len(records)), keep))
    kept_set = set(kept_idx)
    dropped = [records[i].episode_id for i in range(len(records)) if i not in kept_set]
    return [records[i] for i in kept_idx], dropped


def build_mixture(
    text_manifest: DatasetManifest,
    visual_manifest: DatasetManifest,
    spec: MixtureSpec = MixtureSpec(),
) -> DatasetManifest:
    """Balance and interleave the two modalities into one co-training manifest."""
    text_records = _check_side(text_manifest, "text")
    visual_records = _check_side(visual_manifest, "visual")
    if spec.dedup:
        text_records = _dedup(text_records)
        visual_records = _dedup(visual_records)

    n_text, n_visual = len(text_records), len(visual_records)
    rng = random.Random(spec.shuffle_seed)

    if spec.oversample:
        # keep the larger side intact, repeat draws from the smaller one
        scale = max((n_text + spec.ratio_text - 1) // spec.ratio_text,
                    (n_visual + spec.ratio_visual - 1) // spec.ratio_visual)
        keep_text = scale * spec.ratio_text
        keep_visual = scale * spec.ratio_visual
        kept_text = list(text_records) + [
            text_records[rng.randrange(n_text)] for _ in range(keep_text - n_text)
        ]
        kept_visual = list(visual_records) + [
            visual_records[rng.randrange(n_visual)] for _ in range(keep_visual - n_visual)
        ]
        dropped_text: list[str] = []
        dropped_visual: list[str] = []
    else:
        scale = min(n_text // spec.ratio_text, n_visual // spec.ratio_visual)
        if scale < 1:
            raise MixtureError(
                f"cannot satisfy ratio {spec.ratio_text}:{spec.ratio_visual} "
                f"with {n_text} text and {n_visual} visual records"
            )
        kept_text, dropped_text = _subsample(text_records, scale * spec.ratio_text, rng)
        kept_visual, dropped_visual = _subsample(visual_records, scale * spec.ratio_visual, rng)

    combined = kept_text + kept_visual
    rng.shuffle(combined)
    provenance = make_provenance(seed=spec.shuffle_seed)
    provenance.update(
        {
            "ratio": f"{spec.ratio_text}:{spec.ratio_visual}",
            "source_counts": {"text": n_text, "visual": n_visual},
            "kept_counts": {"text": len(kept_text), "visual": len(kept_visual)},
            "dropped_episode_ids": {"text": dropped_text, "visual": dropped_visual},
            "oversample": spec.oversample,
        }
    )
    return DatasetManifest(records=combined, provenance=provenance)


def mixture_stats(manifest: DatasetManifest) -> dict:
    """Per-modality and per-episode counts plus a format histogram."""
    modality_counts = Counter(r.modality for r in manifest.records)
    episode_counts = Counter(r.episode_id for r in manifest.records)
    format_hist = Counter(
        r.grounding.format.value for r in manifest.records if r.grounding is not None
    )
    return {
        "total": len(manifest.records),
        "text": modality_counts.get("text", 0),
        "visual": modality_counts.get("visual", 0),
        "per_episode": dict(sorted(episode_counts.items())),
        "format_histogram": dict(sorted(format_hist.items())),
    }


def text_from_visual(
    visual_manifest: DatasetManifest,
    instruction_overrides: dict[str, str] | None = None,
) -> DatasetManifest:
    """Derive a text-only manifest from a visual one.

    Grounding is dropped; when an override is given for an episode (its full
    unambiguous referring expression), it replaces the minimal intent text.
    """
    overrides = instruction_overrides or {}
    records = []
    for record in visual_manifest.records:
        if record.modality != "visual":
            raise MixtureError("text_from_visual expects a visual manifest")
        text = overrides.get(record.episode_id, record.instruction.text)
        records.append(
            Sample(
                episode_id=record.episode_id,
                modality="text",
                instruction=Instruction(text=text, modality="text-only"),
                grounding=None,
            )
        )
    provenance = dict(visual_manifest.provenance)
    provenance["derived_from"] = "visual"
    return DatasetManifest(records=records, provenance=provenance)
