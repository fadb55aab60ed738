"""Automatic box annotation for demonstration episodes.

Covers the full annotation flow: prompt construction, one multimodal-model
request per episode carrying 20 uniformly sampled frames from each of the
three cameras, strict parsing of the structured response, conversion of the
wire-order box, and propagation onto the first overhead frame. A replay mock
keyed by a request fingerprint makes every pipeline stage testable offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .core import (
    BoxValidationError,
    ImageBuffer,
    NormBox,
    ThousandBox,
    encode_png,
    thousand_to_norm,
)
from .ingest import CAMERA_ROLES, DEFAULT_FRAMES, DatasetManifest, Episode, load_frames, sample_uniform

TASK_TYPES = ("pick", "place")
ARMS = ("left", "right")
DEFAULT_AUDIT_SIZE = 50


class ModelClientError(RuntimeError):
    """Transport-level failure talking to the multimodal model."""

    def __init__(self, message: str, raw_response: str | None = None):
        super().__init__(message)
        self.raw_response = raw_response


class AnnotationParseError(ValueError):
    """The model response does not satisfy the output schema."""

    def __init__(self, message: str, raw_response: str | None = None):
        super().__init__(message)
        self.raw_response = raw_response


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str = ""
    credential: str = ""
    model: str = ""
    timeout_s: float = 60.0
    max_retries: int = 2
    max_in_flight: int = 4

    @classmethod
    def from_env(cls) -> "ClientConfig":
        return cls(
            endpoint=os.environ.get("GROUNDKIT_MODEL_ENDPOINT", ""),
            credential=os.environ.get("GROUNDKIT_MODEL_KEY", ""),
            model=os.environ.get("GROUNDKIT_MODEL_ID", ""),
            timeout_s=float(os.environ.get("GROUNDKIT_MODEL_TIMEOUT_S", "60")),
            max_retries=int(os.environ.get("GROUNDKIT_MODEL_RETRIES", "2")),
            max_in_flight=int(os.environ.get("GROUNDKIT_MAX_IN_FLIGHT", "4")),
        )


class ModelClient(ABC):
    """Contract: one multimodal request in, the raw response text out."""

    @abstractmethod
    def request(self, images: Sequence[ImageBuffer], prompt: str) -> str:
        raise NotImplementedError


def request_fingerprint(images: Sequence[ImageBuffer], prompt: str) -> str:
    """Stable digest of a request: prompt bytes plus every image's pixel bytes."""
    h = hashlib.sha256()
    h.update(prompt.encode("utf-8"))
    for img in images:
        h.update(f"{img.width}x{img.height}".encode())
        h.update(img.tobytes())
    return h.hexdigest()


class ReplayMockClient(ModelClient):
    """Deterministic client replaying canned responses from a tape.

    The tape maps request fingerprints to response text; the key ``"*"`` is a
    fallback served for any request without its own entry.
    """

    def __init__(self, tape: dict[str, str] | None = None):
        self.tape = dict(tape or {})

    @classmethod
    def load(cls, path) -> "ReplayMockClient":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.tape, indent=2), encoding="utf-8")

    def add(self, images: Sequence[ImageBuffer], prompt: str, response: str) -> str:
        key = request_fingerprint(images, prompt)
        self.tape[key] = response
        return key

    def request(self, images: Sequence[ImageBuffer], prompt: str) -> str:
        key = request_fingerprint(images, prompt)
        if key in self.tape:
            return self.tape[key]
        if "*" in self.tape:
            return self.tape["*"]
        raise ModelClientError(f"no tape entry for request {key[:12]}")


class HttpModelClient(ModelClient):
    """Minimal JSON-over-HTTP client for a hosted multimodal model.

    Sends ``{"model", "prompt", "images": [<base64 png>, ...]}`` and expects
    the response body to be either ``{"text": ...}`` or plain text. A
    semaphore caps concurrent requests at ``config.max_in_flight``.
    """

    def __init__(self, config: ClientConfig):
        if not config.endpoint:
            raise ValueError("model endpoint not configured")
        self.config = config
        self._gate = threading.Semaphore(max(1, config.max_in_flight))

    def request(self, images: Sequence[ImageBuffer], prompt: str) -> str:
        import requests

        payload = {
            "model": self.config.model,
            "prompt": prompt,
            "images": [base64.b64encode(encode_png(img)).decode("ascii") for img in images],
        }
        headers = {}
        if self.config.credential:
            headers["Authorization"] = f"Bearer {self.config.credential}"
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._gate:
                    resp = requests.post(
                        self.config.endpoint,
                        json=payload,
                        headers=headers,
                        timeout=self.config.timeout_s,
                    )
                resp.raise_for_status()
                try:
                    body = resp.json()
                    if isinstance(body, dict) and "text" in body:
                        return body["text"]
                except ValueError:
                    pass
                return resp.text
            except Exception as exc:  # noqa: BLE001 - every transport error is retryable
                last_error = exc
                if attempt < self.config.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        raise ModelClientError(f"model request failed after retries: {last_error}")


def _load_template(name: str) -> str:
    return resources.files("groundkit.templates").joinpath(name).read_text(encoding="utf-8")


def _escape_braces(text: str) -> str:
    return text.replace("{", "{{").replace("}", "}}")


def build_annotation_prompt(task_text: str, num_high: int, num_left: int, num_right: int) -> str:
    """Fill the episode-annotation template with the task and view counts."""
    if not task_text:
        raise ValueError("task text required")
    for name, count in (("num_high", num_high), ("num_left", num_left), ("num_right", num_right)):
        if count < 1:
            raise ValueError(f"{name} must be >= 1, got {count}")
    template = _load_template("annotation_prompt.txt")
    # longest placeholders first so "{num_high}" never clobbers its derived forms
    out = template.replace("{num_high+num_left-1}", str(num_high + num_left - 1))
    out = out.replace("{num_high-1}", str(num_high - 1))
    out = out.replace("{num_high}", str(num_high))
    out = out.replace("{task}", _escape_braces(task_text))
    return out


def build_point_to_box_prompt(task_text: str) -> str:
    """Fill the point-to-box template with the spoken command."""
    if not task_text:
        raise ValueError("task text required")
    template = _load_template("point_to_box_prompt.txt")
    return template.replace("{task}", _escape_braces(task_text))


@dataclass(frozen=True)
class LabeledBox:
    box: ThousandBox
    label: str


@dataclass(frozen=True)
class AnnotationRecord:
    """Structured episode annotation parsed from a model response."""

    task_type: str
    arm_used: str
    key_frame_index: int
    bounding_boxes: tuple[LabeledBox, ...]
    reasoning_step1: str
    reasoning_step2: str
    reasoning_step3: str
    object_verification: str | None = None
    container_verification: str | None = None


def serialize_record(record: AnnotationRecord) -> str:
    """Canonical JSON form of a record, in schema field order."""
    obj: dict = {
        "task_type": record.task_type,
        "arm_used": record.arm_used,
        "reasoning_step1": record.reasoning_step1,
        "key_frame_index": record.key_frame_index,
        "reasoning_step2": record.reasoning_step2,
        "bounding_boxes": [
            {"box_2d": lb.box.to_wire(), "label": lb.label} for lb in record.bounding_boxes
        ],
        "reasoning_step3": record.reasoning_step3,
    }
    if record.object_verification is not None:
        obj["object_verification"] = record.object_verification
    if record.container_verification is not None:
        obj["container_verification"] = record.container_verification
    return json.dumps(obj, ensure_ascii=False, indent=2)


def _scan_json(text: str, opener: str, want_type):
    """First top-level JSON value of the wanted type, ignoring surrounding prose."""
    decoder = json.JSONDecoder()
    pos = text.find(opener)
    while pos != -1:
        try:
            value, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find(opener, pos + 1)
            continue
        if isinstance(value, want_type):
            return value
        pos = text.find(opener, pos + 1)
    return None


def _require_int(value, what: str, raw: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise AnnotationParseError(f"{what} must only be integers, got {value!r}", raw)
    return value


def _parse_box_entry(entry, raw: str) -> LabeledBox:
    if not isinstance(entry, dict):
        raise AnnotationParseError(f"box entry must be an object, got {type(entry).__name__}", raw)
    wire = entry.get("box_2d", entry.get("original_box"))
    if wire is None:
        raise AnnotationParseError("box entry missing box_2d", raw)
    if not isinstance(wire, list) or len(wire) != 4:
        raise AnnotationParseError(f"box_2d must be a 4-element list, got {wire!r}", raw)
    values = [_require_int(v, "box_2d values", raw) for v in wire]
    for v in values:
        if not 0 <= v <= 1000:
            raise AnnotationParseError(f"box_2d coordinate out of [0, 1000]: {v}", raw)
    try:
        box = ThousandBox.from_wire(values)
    except BoxValidationError as exc:
        raise AnnotationParseError(f"box ordering invalid: {exc}", raw) from exc
    label = entry.get("label")
    if not isinstance(label, str) or not label:
        raise AnnotationParseError("box entry missing label", raw)
    return LabeledBox(box=box, label=label)


def parse_annotation_response(text: str) -> AnnotationRecord:
    """Parse and validate an episode-annotation response.

    Tolerates prose and code fences around the JSON payload, accepts both the
    ``bounding_boxes``/``box_2d`` schema shape and the ``bbox_results``/
    ``original_box`` shape seen in live outputs, and rejects anything that
    breaks the schema with a named error.
    """
    obj = _scan_json(text, "{", dict)
    if obj is None:
        raise AnnotationParseError("no JSON object found in response", text)

    task_type = obj.get("task_type")
    if task_type is None:
        raise AnnotationParseError("missing required field task_type", text)
    if task_type not in TASK_TYPES:
        raise AnnotationParseError(f"unknown task_type {task_type!r}", text)

    arm_used = obj.get("arm_used")
    if arm_used is None:
        raise AnnotationParseError("missing required field arm_used", text)
    if arm_used not in ARMS:
        raise AnnotationParseError(f"unknown arm_used {arm_used!r}", text)

    if "key_frame_index" not in obj:
        raise AnnotationParseError("missing required field key_frame_index", text)
    key_frame_index = _require_int(obj["key_frame_index"], "key_frame_index", text)
    if key_frame_index < 0:
        raise AnnotationParseError(f"key_frame_index must be >= 0, got {key_frame_index}", text)

    raw_boxes = obj.get("bounding_boxes", obj.get("bbox_results"))
    if raw_boxes is None:
        raise AnnotationParseError("missing required field bounding_boxes", text)
    if not isinstance(raw_boxes, list) or not raw_boxes:
        raise AnnotationParseError("bounding_boxes must be a non-empty list", text)
    boxes = tuple(_parse_box_entry(entry, text) for entry in raw_boxes)

    reasoning = []
    for step in ("reasoning_step1", "reasoning_step2", "reasoning_step3"):
        value = obj.get(step)
        if not isinstance(value, str):
            raise AnnotationParseError(f"missing required field {step}", text)
        reasoning.append(value)

    object_verification = obj.get("object_verification")
    container_verification = obj.get("container_verification")
    if object_verification is not None and container_verification is not None:
        raise AnnotationParseError("conflicting verification fields: both present", text)
    if task_type == "pick":
        if not isinstance(object_verification, str):
            raise AnnotationParseError("missing required field object_verification", text)
    else:
        if not isinstance(container_verification, str):
            raise AnnotationParseError("missing required field container_verification", text)

    return AnnotationRecord(
        task_type=task_type,
        arm_used=arm_used,
        key_frame_index=key_frame_index,
        bounding_boxes=boxes,
        reasoning_step1=reasoning[0],
        reasoning_step2=reasoning[1],
        reasoning_step3=reasoning[2],
        object_verification=object_verification,
        container_verification=container_verification,
    )


@dataclass(frozen=True)
class GroundedLabel:
    """One episode segment's grounding: a box on the first overhead frame."""

    episode_id: str
    segment_id: int
    box: NormBox
    label: str
    task_type: str
    arm_used: str
    key_frame_index: int
    grounded_frame_index: int = 0
    provenance: dict = field(default_factory=dict)


def annotate_episode(
    episode: Episode,
    client: ModelClient,
    frames: int = DEFAULT_FRAMES,
    propagate_to_first: bool = True,
    segment_id: int = 0,
) -> GroundedLabel:
    """Run the annotation pipeline on one episode.

    Samples the frame budget from every camera, sends a single request with
    high-view frames first, then the left and right wrist streams, parses the
    structured response, and copies the first box onto overhead frame 0. The
    copy relies on the overhead camera being static; ``propagate_to_first``
    disables it and keeps the box on the reported key frame instead.
    """
    samples = {role: sample_uniform(episode, role, frames) for role in CAMERA_ROLES}
    images: list[ImageBuffer] = []
    for role in CAMERA_ROLES:
        images.extend(load_frames(episode, samples[role]))
    prompt = build_annotation_prompt(
        episode.task_text,
        num_high=len(samples["high"].indices),
        num_left=len(samples["left_wrist"].indices),
        num_right=len(samples["right_wrist"].indices),
    )
    raw = client.request(images, prompt)
    record = parse_annotation_response(raw)
    if record.key_frame_index >= len(images):
        raise AnnotationParseError(
            f"key_frame_index {record.key_frame_index} out of range for {len(images)} frames",
            raw,
        )
    first = record.bounding_boxes[0]
    provenance = {
        "raw_response": raw,
        "reasoning": [record.reasoning_step1, record.reasoning_step2, record.reasoning_step3],
        "frame_indices": {role: list(samples[role].indices) for role in CAMERA_ROLES},
        "extra_boxes": len(record.bounding_boxes) - 1,
        "propagated_to_first": propagate_to_first,
    }
    task_hint = episode.task_text.lower()
    if record.task_type not in task_hint and any(t in task_hint for t in TASK_TYPES):
        # trust the model's classification but keep the disagreement on record
        provenance["task_type_discrepancy"] = {
            "task_text": episode.task_text,
            "model_task_type": record.task_type,
        }
    return GroundedLabel(
        episode_id=episode.episode_id,
        segment_id=segment_id,
        box=thousand_to_norm(first.box),
        label=first.label,
        task_type=record.task_type,
        arm_used=record.arm_used,
        key_frame_index=record.key_frame_index,
        grounded_frame_index=0 if propagate_to_first else record.key_frame_index,
        provenance=provenance,
    )


def annotate_episodes(
    episodes: Sequence[Episode],
    client: ModelClient,
    frames: int = DEFAULT_FRAMES,
    max_workers: int = 1,
) -> list[GroundedLabel]:
    """Annotate many episodes; parallel and sequential runs yield the same labels."""
    if max_workers <= 1:
        labels = [annotate_episode(ep, client, frames) for ep in episodes]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            labels = list(pool.map(lambda ep: annotate_episode(ep, client, frames), episodes))
    return sorted(labels, key=lambda lb: (lb.episode_id, lb.segment_id))


def label_path(root, label: GroundedLabel) -> Path:
    return Path(root) / "labels" / f"{label.episode_id}.{label.segment_id}.json"


def write_label(label: GroundedLabel, root) -> Path:
    path = label_path(root, label)
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = {
        "episode_id": label.episode_id,
        "segment_id": label.segment_id,
        "box": list(label.box.as_tuple()),
        "label": label.label,
        "task_type": label.task_type,
        "arm_used": label.arm_used,
        "key_frame_index": label.key_frame_index,
        "grounded_frame_index": label.grounded_frame_index,
        "provenance": label.provenance,
    }
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def read_label(path) -> GroundedLabel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    box = obj["box"]
    return GroundedLabel(
        episode_id=obj["episode_id"],
        segment_id=obj["segment_id"],
        box=NormBox(box[0], box[1], box[2], box[3]),
        label=obj["label"],
        task_type=obj["task_type"],
        arm_used=obj["arm_used"],
        key_frame_index=obj["key_frame_index"],
        grounded_frame_index=obj.get("grounded_frame_index", 0),
        provenance=obj.get("provenance", {}),
    )


@dataclass(frozen=True)
class PointedBox:
    """Point-to-box result: the proposed region plus selection provenance."""

    box: NormBox
    label: str
    provenance: dict = field(default_factory=dict)


def point_to_box(image: ImageBuffer, task_text: str, client: ModelClient) -> PointedBox:
    """Ask the model which region a pointing gesture indicates."""
    prompt = build_point_to_box_prompt(task_text)
    raw = client.request([image], prompt)
    entries = _scan_json(raw, "[", list)
    if entries is None:
        raise AnnotationParseError("no JSON list found in response", raw)
    if not entries:
        raise AnnotationParseError("no region returned", raw)
    first = _parse_box_entry(entries[0], raw)
    return PointedBox(
        box=thousand_to_norm(first.box),
        label=first.label,
        provenance={"raw_response": raw, "regions_returned": len(entries)},
    )


VERDICTS = ("correct-target", "coverage-insufficient", "wrong-target", "unreviewed")


@dataclass
class AuditItem:
    episode_id: str
    box: NormBox
    format: str
    verdict: str = "unreviewed"


@dataclass
class AuditBatch:
    seed: int
    items: list[AuditItem] = field(default_factory=list)


def draw_audit_batch(manifest: DatasetManifest, n: int = DEFAULT_AUDIT_SIZE, seed: int = 0) -> AuditBatch:
    """Seeded sample of visual records for human review, without replacement."""
    visual = [r for r in manifest.records if r.modality == "visual"]
    if n > len(visual):
        raise ValueError(f"n={n} exceeds available visual records ({len(visual)})")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(visual)), n))
    items = [
        AuditItem(
            episode_id=visual[i].episode_id,
            box=visual[i].grounding.box,
            format=visual[i].grounding.format.value,
        )
        for i in chosen
    ]
    return AuditBatch(seed=seed, items=items)


def audit_accuracy(batch: AuditBatch) -> float | None:
    """correct-target fraction; ``None`` when the batch is empty."""
    if not batch.items:
        return None
    correct = sum(1 for item in batch.items if item.verdict == "correct-target")
    return correct / len(batch.items)


def write_audit_batch(batch: AuditBatch, path) -> None:
    obj = {
        "seed": batch.seed,
        "items": [
            {
                "episode_id": item.episode_id,
                "box": list(item.box.as_tuple()),
                "format": item.format,
                "verdict": item.verdict,
            }
            for item in batch.items
        ],
    }
    Path(path).write_text(json.dumps(obj, indent=2), encoding="utf-8")


def read_audit_batch(path) -> AuditBatch:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    items = []
    for entry in obj["items"]:
        if entry["verdict"] not in VERDICTS:
            raise ValueError(f"unknown verdict {entry['verdict']!r}")
        box = entry["box"]
        items.append(
            AuditItem(
                episode_id=entry["episode_id"],
                box=NormBox(box[0], box[1], box[2], box[3]),
                format=entry["format"],
                verdict=entry["verdict"],
            )
        )
    return AuditBatch(seed=obj["seed"], items=items)
