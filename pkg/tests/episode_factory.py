"""Synthetic episode directories for tests and golden generation.

Frame content is a fixed function of (episode_id, camera, frame index) so
fixture episodes are byte-identical across runs and processes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

CAMERAS = ("high", "left_wrist", "right_wrist")


def frame_array(episode_id: str, camera: str, index: int, width: int = 32, height: int = 24) -> np.ndarray:
    digest = hashlib.sha256(f"{episode_id}/{camera}/{index}".encode()).digest()
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = list(digest[:3])
    # a moving stripe so consecutive frames differ structurally
    col = (index * 3) % width
    arr[:, col : col + 2] = list(digest[3:6])
    return arr


def make_episode(
    root,
    episode_id: str,
    task: str = "pick",
    frames_per_camera: int = 20,
    width: int = 32,
    height: int = 24,
) -> Path:
    episode_dir = Path(root) / episode_id
    for camera in CAMERAS:
        cam_dir = episode_dir / camera
        cam_dir.mkdir(parents=True, exist_ok=True)
        for i in range(frames_per_camera):
            Image.fromarray(frame_array(episode_id, camera, i, width, height)).save(
                cam_dir / f"{i:03d}.png"
            )
    (episode_dir / "meta.json").write_text(
        json.dumps({"episode_id": episode_id, "task": task}), encoding="utf-8"
    )
    return episode_dir
