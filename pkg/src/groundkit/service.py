"""HTTP facade over annotation, rendering, point-to-box, and simulator trials.

Sessions are in-memory and single-writer; images cross the wire as base64 PNG
inside JSON bodies. Every non-2xx response carries
``{"error": {"code", "message", "detail"}}``. The request/response shapes are
published in docs/api-contract.md (contract version v1) and are consumed by
the browser UI and by the contract tests on both sides.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import itertools
import os
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .annotate import (
    AnnotationParseError,
    ClientConfig,
    HttpModelClient,
    ModelClient,
    ModelClientError,
    ReplayMockClient,
    annotate_episode,
    point_to_box,
)
from .core import (
    GroundedInstruction,
    ImageBuffer,
    NormBox,
    decode_png,
    encode_png,
)
from .ingest import scan_episode
from .render import default_style, render_overlay
from .sim import (
    FAMILIES,
    Scene,
    TrialProtocol,
    _substream,
    gen_scene,
    render_overhead,
    run_trial,
)

CONTRACT_VERSION = "v1"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class ServiceConfig:
    client: ModelClient | None = None
    protocol: TrialProtocol = TrialProtocol()

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        tape = os.environ.get("GROUNDKIT_MOCK_TAPE", "")
        if tape:
            return cls(client=ReplayMockClient.load(tape))
        cfg = ClientConfig.from_env()
        if cfg.endpoint:
            return cls(client=HttpModelClient(cfg))
        return cls(client=None)


@dataclass
class Session:
    session_id: str
    seed: int
    scene: Scene | None = None
    overhead: ImageBuffer | None = None
    pending: GroundedInstruction | None = None
    proposal: dict | None = None
    history: list[dict] = field(default_factory=list)
    trial_count: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def trial_seed(session_seed: int, trial_index: int) -> int:
    """Per-trial seed in a session's stream; exposed so CLI runs can match."""
    return _substream(session_seed, "session-trial", trial_index)


def _b64_image(image: ImageBuffer) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def _image_from_b64(data: str) -> ImageBuffer:
    try:
        return decode_png(base64.b64decode(data, validate=True))
    except (binascii.Error, ValueError, OSError) as exc:
        raise ApiError(422, "bad-image", f"could not decode image: {exc}") from exc


def _parse_box(values) -> NormBox:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise ApiError(422, "box-ordering", f"box must be [x_min, y_min, x_max, y_max], got {values!r}")
    try:
        return NormBox(float(values[0]), float(values[1]), float(values[2]), float(values[3]))
    except (TypeError, ValueError) as exc:
        raise ApiError(422, "box-ordering", str(exc)) from exc


def _scene_summary(scene: Scene) -> dict:
    return {
        "family": scene.family,
        "table_cm": [scene.table_width_cm, scene.table_height_cm],
        "px_per_cm": scene.px_per_cm,
        "objects": [
            {
                "id": o.object_id,
                "class": o.class_name,
                "color": o.color_name,
                "shape": o.shape,
                "center_cm": list(o.center),
                "extent_cm": list(o.extent),
            }
            for o in scene.objects
        ],
        "trays": [
            {
                "id": t.tray_id,
                "rows": t.rows,
                "cols": t.cols,
                "pitch_cm": t.pitch,
                "occupancy": t.occupancy,
            }
            for t in scene.trays
        ],
        "goal_cm": list(scene.goal) if scene.goal else None,
        "target_id": scene.target_id,
    }


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="groundkit service", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, Session] = {}
    counter = itertools.count(1)
    registry_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def handle_api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message, "detail": exc.detail}},
        )

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "session-not-found", f"unknown session {session_id}")
        return session

    async def body_of(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception as exc:  # noqa: BLE001
            raise ApiError(400, "bad-json", f"request body is not JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise ApiError(400, "bad-json", "request body must be a JSON object")
        return body

    @app.get("/health")
    async def health():
        return {
            "status": "ok" if config.client is not None else "mock-only",
            "version": __version__,
            "contract": CONTRACT_VERSION,
            "model_configured": config.client is not None,
        }

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await body_of(request) if await request.body() else {}
        with registry_lock:
            session_id = f"s-{next(counter):06d}"
        seed = body.get("seed")
        if seed is None:
            seed = int.from_bytes(hashlib.sha256(session_id.encode()).digest()[:4], "big")
        sessions[session_id] = Session(session_id=session_id, seed=int(seed))
        return {"session_id": session_id, "seed": sessions[session_id].seed}

    @app.post("/sessions/{session_id}/scene")
    async def set_scene(session_id: str, request: Request):
        session = get_session(session_id)
        body = await body_of(request)
        family = body.get("family")
        if family not in FAMILIES:
            raise ApiError(400, "invalid-family", f"family must be one of {list(FAMILIES)}")
        seed = int(body.get("seed", 0))
        params = body.get("params") or {}
        with session.lock:
            scene = gen_scene(family, params, seed=seed)
            session.scene = scene
            session.overhead = render_overhead(scene)
            session.pending = None
            session.proposal = None
            return {
                "image_png_b64": _b64_image(session.overhead),
                "width": session.overhead.width,
                "height": session.overhead.height,
                "scene": _scene_summary(scene),
                "scene_seed": seed,
            }

    @app.post("/sessions/{session_id}/ground")
    async def ground(session_id: str, request: Request):
        session = get_session(session_id)
        body = await body_of(request)
        box = _parse_box(body.get("box"))
        text = body.get("text") or "pick up"
        with session.lock:
            if session.overhead is None:
                raise ApiError(409, "no-scene", "create a scene before grounding")
            style = default_style(session.overhead.width, session.overhead.height)
            preview = render_overlay(session.overhead, box, style)
            session.pending = GroundedInstruction(text=text, grounded_image=preview, box=box)
            return {
                "preview_png_b64": _b64_image(preview),
                "box": list(box.as_tuple()),
                "text": text,
            }

    @app.post("/sessions/{session_id}/point-to-box")
    async def propose_box(session_id: str, request: Request):
        session = get_session(session_id)
        body = await body_of(request)
        if config.client is None:
            raise ApiError(502, "model-not-configured", "no model client or mock tape configured")
        image = _image_from_b64(body.get("image_png_b64", ""))
        text = body.get("text") or "pick up"
        try:
            pointed = point_to_box(image, text, config.client)
        except ModelClientError as exc:
            raise ApiError(502, "model-failure", str(exc), detail=exc.raw_response or "") from exc
        except AnnotationParseError as exc:
            code = "no-region" if "no region" in str(exc) else "parse-failure"
            raise ApiError(422, code, str(exc), detail=exc.raw_response or "") from exc
        with session.lock:
            session.proposal = {
                "box": list(pointed.box.as_tuple()),
                "label": pointed.label,
                "text": text,
                "regions_returned": pointed.provenance.get("regions_returned", 1),
            }
            return dict(session.proposal)

    @app.post("/sessions/{session_id}/confirm")
    async def confirm(session_id: str, request: Request):
        session = get_session(session_id)
        body = await body_of(request)
        with session.lock:
            if body.get("box") is not None:
                box = _parse_box(body["box"])
                text = body.get("text") or "pick up"
            elif session.proposal is not None:
                box = _parse_box(session.proposal["box"])
                text = body.get("text") or session.proposal["text"]
            else:
                raise ApiError(409, "no-proposal", "nothing to confirm: no box given or proposed")
            if session.overhead is None:
                raise ApiError(409, "no-scene", "create a scene before confirming a grounding")
            style = default_style(session.overhead.width, session.overhead.height)
            preview = render_overlay(session.overhead, box, style)
            session.pending = GroundedInstruction(text=text, grounded_image=preview, box=box)
            session.proposal = None
            return {
                "preview_png_b64": _b64_image(preview),
                "box": list(box.as_tuple()),
                "text": text,
            }

    @app.post("/sessions/{session_id}/trial")
    async def trial(session_id: str, request: Request):
        session = get_session(session_id)
        body = await body_of(request)
        policy = body.get("policy")
        if policy not in ("text", "grounded"):
            raise ApiError(400, "invalid-policy", "policy must be 'text' or 'grounded'")
        with session.lock:
            if session.scene is None:
                raise ApiError(409, "no-scene", "create a scene before running trials")
            if policy == "grounded":
                if session.pending is None:
                    raise ApiError(409, "no-pending-grounding", "draw or confirm a box first")
                instruction = session.pending
                instruction_text = session.pending.text
            else:
                instruction_text = body.get("instruction_text", "")
                if not instruction_text:
                    raise ApiError(400, "missing-instruction", "text policy needs instruction_text")
                instruction = instruction_text
            seed = trial_seed(session.seed, session.trial_count)
            try:
                result = run_trial(session.scene, policy, instruction, config.protocol, seed)
            except ValueError as exc:
                raise ApiError(400, "unparseable-text", str(exc)) from exc
            entry = {
                "trial_index": session.trial_count,
                "policy": policy,
                "instruction_text": instruction_text,
                "success": result.success,
                "attempts": result.attempts,
                "failure_reason": result.failure_reason,
                "chosen": result.chosen if isinstance(result.chosen, str) else (
                    list(result.chosen) if result.chosen else None
                ),
                "elapsed_s": round(result.elapsed_s, 3),
                "trace": result.trace,
                "box": list(session.pending.box.as_tuple()) if policy == "grounded" else None,
            }
            session.trial_count += 1
            session.history.append(entry)
            return entry

    @app.get("/sessions/{session_id}/history")
    async def history(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return {"session_id": session_id, "trials": list(session.history)}

    @app.post("/annotate")
    async def annotate(request: Request):
        body = await body_of(request)
        episode_dir = body.get("episode_dir")
        if not episode_dir:
            raise ApiError(400, "missing-episode", "episode_dir is required")
        client = config.client
        if client is None:
            raise ApiError(502, "model-not-configured", "no model client or mock tape configured")
        frames = int(body.get("frames", 20))
        try:
            episode = scan_episode(episode_dir)
            label = annotate_episode(episode, client, frames=frames)
        except ModelClientError as exc:
            raise ApiError(502, "model-failure", str(exc), detail=exc.raw_response or "") from exc
        except AnnotationParseError as exc:
            raise ApiError(422, "parse-failure", str(exc), detail=exc.raw_response or "") from exc
        except ValueError as exc:
            raise ApiError(400, "bad-episode", str(exc)) from exc
        return {
            "episode_id": label.episode_id,
            "segment_id": label.segment_id,
            "box": list(label.box.as_tuple()),
            "label": label.label,
            "task_type": label.task_type,
            "arm_used": label.arm_used,
            "key_frame_index": label.key_frame_index,
            "grounded_frame_index": label.grounded_frame_index,
        }

    return app


def main() -> None:
    import uvicorn

    host = os.environ.get("GROUNDKIT_BIND_HOST", "127.0.0.1")
    port = int(os.environ.get("GROUNDKIT_BIND_PORT", "8787"))
    uvicorn.run(create_app(ServiceConfig.from_env()), host=host, port=port)


if __name__ == "__main__":
    main()
