"""Episode loading, frame sampling, and dataset manifest I/O.

Episode layout on disk::

    <root>/<episode_id>/
        meta.json                 # {"episode_id": ..., "task": ...}
        high/000.png ...          # overhead camera
        left_wrist/000.png ...
        right_wrist/000.png ...

Manifests are UTF-8 line-delimited records: a header line with provenance
followed by one sample per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .core import GroundingFormat, ImageBuffer, Instruction, NormBox, load_image

CAMERA_ROLES = ("high", "left_wrist", "right_wrist")
FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")
DEFAULT_FRAMES = 20
MANIFEST_KIND = "groundkit-manifest"
MANIFEST_VERSION = 1
TOOL_VERSION = "0.1.0"


class IngestError(ValueError):
    """Episode directory does not match the expected layout."""


class ManifestError(ValueError):
    """A manifest file or record is malformed."""


@dataclass(frozen=True)
class Episode:
    """One demonstration episode: three synchronized camera streams plus task text."""

    episode_id: str
    task_text: str
    cameras: dict[str, tuple[Path, ...]]

    def frame_count(self, camera: str) -> int:
        return len(self.cameras[camera])


@dataclass(frozen=True)
class FrameSample:
    camera: str
    indices: tuple[int, ...]


@dataclass(frozen=True)
class Grounding:
    """Box plus marker metadata attached to a visual-modality sample."""

    box: NormBox
    format: GroundingFormat = GroundingFormat.BOX_OVERLAY
    marker: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.format, GroundingFormat):
            object.__setattr__(self, "format", GroundingFormat(self.format))


@dataclass(frozen=True)
class Sample:
    episode_id: str
    modality: str  # "text" | "visual"
    instruction: Instruction
    grounding: Grounding | None = None


@dataclass
class DatasetManifest:
    records: list[Sample] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return self.records == other.records and self.provenance == other.provenance


def make_provenance(seed: int | None = None, source_roots: Iterable[str] = ()) -> dict:
    return {
        "tool_version": TOOL_VERSION,
        "seed": seed,
        "source_roots": list(source_roots),
    }


def check_resolvable(manifest: DatasetManifest, root) -> None:
    """Raise when a referenced episode directory is missing under the root."""
    root = Path(root)
    missing = sorted(
        {r.episode_id for r in manifest.records if not (root / r.episode_id).is_dir()}
    )
    if missing:
        raise ManifestError(f"episodes not resolvable under {root}: {', '.join(missing[:5])}")


def _frame_files(camera_dir: Path) -> tuple[Path, ...]:
    frames = [
        p
        for p in camera_dir.iterdir()
        if p.suffix.lower() in FRAME_SUFFIXES and p.stem.isdigit()
    ]
    frames.sort(key=lambda p: (int(p.stem), p.name))
    return tuple(frames)


def scan_episode(dir_path) -> Episode:
    """Read one episode directory into an :class:`Episode`."""
    root = Path(dir_path)
    if not root.is_dir():
        raise IngestError(f"episode directory not found: {root}")
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise IngestError(f"metadata file missing: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"unreadable metadata {meta_path}: {exc}") from exc
    episode_id = meta.get("episode_id") or root.name
    task_text = meta.get("task", "")
    if not task_text:
        raise IngestError(f"metadata {meta_path} has no task text")

    cameras: dict[str, tuple[Path, ...]] = {}
    for role in CAMERA_ROLES:
        camera_dir = root / role
        if not camera_dir.is_dir():
            raise IngestError(f"camera role {role} absent: {camera_dir}")
        frames = _frame_files(camera_dir)
        if not frames:
            raise IngestError(f"camera role {role} has no frames: {camera_dir}")
        cameras[role] = frames
    return Episode(episode_id=episode_id, task_text=task_text, cameras=cameras)


def sample_uniform(episode: Episode, camera: str, frames: int = DEFAULT_FRAMES) -> FrameSample:
    """Endpoint-inclusive uniform frame sampling.

    With N source frames and a budget of T, index k maps to
    ``floor(k * (N - 1) / (T - 1))``, so frame 0 and frame N-1 are always in
    the sample. When N < T every frame is used once.
    """
    if frames < 2:
        raise ValueError(f"frame budget must be >= 2, got {frames}")
    if camera not in episode.cameras:
        raise IngestError(f"camera role {camera} absent")
    n = episode.frame_count(camera)
    if n >= frames:
        indices = tuple(k * (n - 1) // (frames - 1) for k in range(frames))
    else:
        indices = tuple(range(n))
    return FrameSample(camera=camera, indices=indices)


def load_frames(episode: Episode, sample: FrameSample) -> list[ImageBuffer]:
    files = episode.cameras[sample.camera]
    return [load_image(files[i]) for i in sample.indices]


def _sample_to_obj(sample: Sample, line_no: int | None = None) -> dict:
    where = f"record {line_no}: " if line_no is not None else ""
    if sample.modality not in ("text", "visual"):
        raise ManifestError(f"{where}unknown modality {sample.modality!r}")
    if (sample.modality == "visual") != (sample.grounding is not None):
        raise ManifestError(
            f"{where}modality {sample.modality!r} and grounding presence disagree"
        )
    obj: dict = {
        "episode_id": sample.episode_id,
        "modality": sample.modality,
        "instruction": {
            "text": sample.instruction.text,
            "modality": sample.instruction.modality,
        },
    }
    if sample.grounding is not None:
        obj["box"] = list(sample.grounding.box.as_tuple())
        obj["format"] = sample.grounding.format.value
        if sample.grounding.marker:
            obj["marker"] = sample.grounding.marker
    return obj


def _sample_from_obj(obj: dict, line_no: int) -> Sample:
    try:
        modality = obj["modality"]
        instruction = Instruction(
            text=obj["instruction"]["text"],
            modality=obj["instruction"].get("modality", "text-only"),
        )
        grounding = None
        if modality == "visual":
            box = obj["box"]
            grounding = Grounding(
                box=NormBox(box[0], box[1], box[2], box[3]),
                format=GroundingFormat(obj["format"]),
                marker=obj.get("marker", {}),
            )
        elif "box" in obj or "format" in obj:
            raise ManifestError(f"line {line_no}: text record carries grounding fields")
        sample = Sample(
            episode_id=obj["episode_id"],
            modality=modality,
            instruction=instruction,
            grounding=grounding,
        )
    except ManifestError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ManifestError(f"line {line_no}: {exc}") from exc
    # re-check the invariant in one place
    _sample_to_obj(sample, line_no)
    return sample


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {
                "kind": MANIFEST_KIND,
                "version": MANIFEST_VERSION,
                "provenance": manifest.provenance,
            },
            ensure_ascii=False,
        )
    ]
    for i, sample in enumerate(manifest.records, start=1):
        lines.append(json.dumps(_sample_to_obj(sample, i), ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty file, header record missing")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line 1: {exc}") from exc
    if header.get("kind") != MANIFEST_KIND:
        raise ManifestError(f"line 1: not a {MANIFEST_KIND} header")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"line {line_no}: {exc}") from exc
        records.append(_sample_from_obj(obj, line_no))
    return DatasetManifest(records=records, provenance=header.get("provenance", {}))
