import json
from pathlib import Path

import pytest

from episode_factory import make_episode

from groundkit.annotate import read_label
from groundkit.cli import main
from groundkit.core import Instruction, NormBox, load_image
from groundkit.ingest import (
    DatasetManifest,
    Grounding,
    Sample,
    make_provenance,
    read_manifest,
    write_manifest,
)
from groundkit.mixture import text_from_visual
from groundkit.render import detect_overlay, default_style


@pytest.fixture
def workspace(tmp_path, reference_response):
    root = tmp_path / "episodes"
    for i in range(4):
        make_episode(root, f"ep-{i:03d}", task="pick")
    tape = tmp_path / "tape.json"
    tape.write_text(json.dumps({"*": reference_response}))
    return tmp_path


def test_annotate_then_mix_round_trip(workspace):
    root = workspace / "episodes"
    assert main(["annotate", "--root", str(root), "--episodes", "ep-*", "--mock", str(workspace / "tape.json")]) == 0
    labels = sorted((root / "labels").glob("*.json"))
    assert len(labels) == 4
    label = read_label(labels[0])
    assert label.box.as_tuple() == (0.411, 0.618, 0.457, 0.732)

    records = [
        Sample(
            episode_id=read_label(p).episode_id,
            modality="visual",
            instruction=Instruction(text="pick up", modality="grounded"),
            grounding=Grounding(box=read_label(p).box),
        )
        for p in labels
    ]
    visual = DatasetManifest(records=records, provenance=make_provenance(seed=0))
    write_manifest(visual, workspace / "visual.jsonl")
    write_manifest(text_from_visual(visual), workspace / "text.jsonl")

    out = workspace / "mixed.jsonl"
    assert main([
        "mix",
        "--text", str(workspace / "text.jsonl"),
        "--visual", str(workspace / "visual.jsonl"),
        "--seed", "3",
        "--out", str(out),
    ]) == 0
    mixed = read_manifest(out)
    assert len(mixed.records) == 8


def test_render_overlay_detectable(workspace):
    root = workspace / "episodes"
    image_path = root / "ep-000" / "high" / "000.png"
    out_path = workspace / "overlay.png"
    assert main([
        "render", "--format", "overlay",
        "--image", str(image_path),
        "--box", "0.2,0.2,0.8,0.8",
        "--out", str(out_path),
    ]) == 0
    rendered = load_image(out_path)
    detect_overlay(rendered, default_style(rendered.width, rendered.height))


def test_sim_report(workspace, capsys):
    report_path = workspace / "report.json"
    assert main([
        "sim", "--family", "clutter", "--policy", "both",
        "--trials", "10", "--scenes", "2", "--seed", "5",
        "--report", str(report_path),
    ]) == 0
    table = capsys.readouterr().out
    assert "grounded" in table and "clutter" in table
    report = json.loads(report_path.read_text())
    cells = {(c["family"], c["policy"]): c for c in report["cells"]}
    assert cells[("clutter", "grounded")]["rate"] == 1.0
    assert cells[("clutter", "grounded")]["trials"] == 20


def test_audit_draw_and_score(workspace):
    records = [
        Sample(
            episode_id=f"ep-{i:03d}",
            modality="visual",
            instruction=Instruction(text="pick up", modality="grounded"),
            grounding=Grounding(box=NormBox(0.1, 0.1, 0.5, 0.5)),
        )
        for i in range(10)
    ]
    write_manifest(DatasetManifest(records=records), workspace / "v.jsonl")
    batch_path = workspace / "audit.json"
    assert main([
        "audit", "--manifest", str(workspace / "v.jsonl"),
        "--n", "5", "--seed", "2", "--out", str(batch_path),
    ]) == 0
    batch = json.loads(batch_path.read_text())
    assert len(batch["items"]) == 5
    for item in batch["items"]:
        item["verdict"] = "correct-target"
    batch_path.write_text(json.dumps(batch))
    assert main(["audit", "--manifest", str(workspace / "v.jsonl"), "--score", str(batch_path)]) == 0
