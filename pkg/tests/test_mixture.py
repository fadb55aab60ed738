import random

import pytest

from groundkit.core import GroundingFormat, Instruction, NormBox
from groundkit.ingest import DatasetManifest, Grounding, Sample
from groundkit.mixture import (
    MixtureError,
    MixtureSpec,
    build_mixture,
    mixture_stats,
    text_from_visual,
)


def text_manifest(n, prefix="t") -> DatasetManifest:
    return DatasetManifest(
        records=[
            Sample(
                episode_id=f"{prefix}-{i:04d}",
                modality="text",
                instruction=Instruction(text=f"pick the bottle {i}"),
            )
            for i in range(n)
        ]
    )


def visual_manifest(n, prefix="v", fmt=GroundingFormat.BOX_OVERLAY) -> DatasetManifest:
    return DatasetManifest(
        records=[
            Sample(
                episode_id=f"{prefix}-{i:04d}",
                modality="visual",
                instruction=Instruction(text="pick up", modality="grounded"),
                grounding=Grounding(box=NormBox(0.1, 0.1, 0.6, 0.6), format=fmt),
            )
            for i in range(n)
        ]
    )


class TestBuildMixture:
    def test_already_balanced(self):
        mixed = build_mixture(text_manifest(10), visual_manifest(10), MixtureSpec())
        stats = mixture_stats(mixed)
        assert stats["total"] == 20 and stats["text"] == 10 and stats["visual"] == 10

    def test_subsamples_larger_side(self):
        mixed = build_mixture(text_manifest(100), visual_manifest(10), MixtureSpec(shuffle_seed=1))
        stats = mixture_stats(mixed)
        assert stats["text"] == 10 and stats["visual"] == 10
        assert len(mixed.provenance["dropped_episode_ids"]["text"]) == 90

    def test_min_count_rule(self):
        mixed = build_mixture(text_manifest(7), visual_manifest(10), MixtureSpec())
        stats = mixture_stats(mixed)
        assert stats["total"] == 14 and stats["text"] == 7 and stats["visual"] == 7

    def test_empty_side_rejected(self):
        with pytest.raises(MixtureError, match="both modalities"):
            build_mixture(text_manifest(0), visual_manifest(5), MixtureSpec())
        with pytest.raises(MixtureError, match="both modalities"):
            build_mixture(text_manifest(5), visual_manifest(0), MixtureSpec())

    def test_modality_purity_enforced(self):
        mixed_up = visual_manifest(3)
        with pytest.raises(MixtureError, match="visual"):
            build_mixture(mixed_up, visual_manifest(3), MixtureSpec())

    def test_ratio_invariant_randomized(self):
        rng = random.Random(2)
        for _ in range(60):
            n_t = rng.randint(1, 200)
            n_v = rng.randint(1, 200)
            ratio_t = rng.randint(1, 3)
            ratio_v = rng.randint(1, 3)
            spec = MixtureSpec(ratio_text=ratio_t, ratio_visual=ratio_v, shuffle_seed=rng.randint(0, 999))
            try:
                mixed = build_mixture(text_manifest(n_t), visual_manifest(n_v), spec)
            except MixtureError:
                assert min(n_t // ratio_t, n_v // ratio_v) < 1
                continue
            stats = mixture_stats(mixed)
            assert abs(stats["text"] - stats["visual"] * ratio_t / ratio_v) <= 1

    def test_seed_determinism(self):
        a = build_mixture(text_manifest(50), visual_manifest(30), MixtureSpec(shuffle_seed=9))
        b = build_mixture(text_manifest(50), visual_manifest(30), MixtureSpec(shuffle_seed=9))
        assert a.records == b.records
        c = build_mixture(text_manifest(50), visual_manifest(30), MixtureSpec(shuffle_seed=10))
        assert a.records != c.records

    def test_union_no_fabrication(self):
        text, visual = text_manifest(40), visual_manifest(25)
        mixed = build_mixture(text, visual, MixtureSpec(shuffle_seed=3))
        source = {id(r) for r in text.records} | {id(r) for r in visual.records}
        pool = list(text.records) + list(visual.records)
        for record in mixed.records:
            assert any(record == p for p in pool)
        assert mixed.provenance["source_counts"] == {"text": 40, "visual": 25}
        assert mixed.provenance["kept_counts"] == {"text": 25, "visual": 25}

    def test_oversample_flag(self):
        spec = MixtureSpec(shuffle_seed=4, oversample=True)
        mixed = build_mixture(text_manifest(5), visual_manifest(12), spec)
        stats = mixture_stats(mixed)
        assert stats["text"] == stats["visual"] == 12

    def test_dedup(self):
        dup = text_manifest(5)
        dup.records.extend(text_manifest(5).records)  # exact duplicates
        mixed = build_mixture(dup, visual_manifest(20), MixtureSpec(dedup=True))
        assert mixture_stats(mixed)["text"] == 5


class TestMixtureStats:
    def test_balanced(self):
        mixed = build_mixture(text_manifest(10), visual_manifest(10), MixtureSpec())
        stats = mixture_stats(mixed)
        assert stats["text"] == 10 and stats["visual"] == 10

    def test_empty(self):
        stats = mixture_stats(DatasetManifest())
        assert stats == {
            "total": 0,
            "text": 0,
            "visual": 0,
            "per_episode": {},
            "format_histogram": {},
        }

    def test_format_histogram_sums_to_visual(self):
        overlay = visual_manifest(6, prefix="a", fmt=GroundingFormat.BOX_OVERLAY)
        masked = visual_manifest(4, prefix="b", fmt=GroundingFormat.OBJECT_MASK)
        manifest = DatasetManifest(records=overlay.records + masked.records)
        stats = mixture_stats(manifest)
        assert sum(stats["format_histogram"].values()) == stats["visual"] == 10
        assert stats["format_histogram"] == {"mask": 4, "overlay": 6}


class TestTextFromVisual:
    def test_grounding_dropped_and_overrides_applied(self):
        visual = visual_manifest(3)
        overrides = {"v-0001": "Pick the bottle on the far right of the cluster."}
        derived = text_from_visual(visual, overrides)
        assert all(r.modality == "text" and r.grounding is None for r in derived.records)
        assert derived.records[1].instruction.text == overrides["v-0001"]
        assert derived.records[0].instruction.text == "pick up"

    def test_rejects_text_input(self):
        with pytest.raises(MixtureError, match="visual manifest"):
            text_from_visual(text_manifest(2))
