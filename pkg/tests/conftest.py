from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from episode_factory import make_episode  # noqa: E402

from groundkit.core import ImageBuffer  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def reference_response() -> str:
    return (FIXTURES / "reference_pick_response.json").read_text(encoding="utf-8")


@pytest.fixture
def episode_dir(tmp_path):
    return make_episode(tmp_path, "ep-0001", task="pick", frames_per_camera=20)


@pytest.fixture
def checker_image() -> ImageBuffer:
    """Deterministic 120x90 scene; channel values < 255, so never marker-colored."""
    rng = np.random.default_rng(1234)
    arr = rng.integers(0, 255, size=(90, 120, 3), dtype=np.uint8)
    return ImageBuffer.from_array(arr)
