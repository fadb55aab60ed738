"""The automatic annotation pipeline, end to end, with no network.

A synthetic three-camera episode goes through frame sampling, prompt
construction, a replay-mock model call, strict parsing, and propagation of
the box onto the first overhead frame. The mock tape holds a real-format
response, so every downstream stage runs exactly as it would live.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from episode_factory import make_episode  # noqa: E402

from groundkit.annotate import (  # noqa: E402
    ReplayMockClient,
    annotate_episode,
    build_annotation_prompt,
    write_label,
)
from groundkit.ingest import sample_uniform, scan_episode  # noqa: E402

RESPONSE = json.dumps(
    {
        "task_type": "pick",
        "arm_used": "left",
        "reasoning_step1": "The left wrist view shows the approach to a green bottle.",
        "key_frame_index": 19,
        "reasoning_step2": "The gripper closes at the end of the high-view sweep.",
        "bounding_boxes": [{"box_2d": [618, 411, 732, 457], "label": "green bottle"}],
        "reasoning_step3": "The overhead camera is static, so the frame-0 location matches.",
        "object_verification": "Same position and appearance in frame 0 as at the grasp moment.",
    }
)

with tempfile.TemporaryDirectory() as tmp:
    episode_dir = make_episode(tmp, "demo-ep-01", task="pick", frames_per_camera=39)
    episode = scan_episode(episode_dir)
    print("episode:", episode.episode_id, "task:", episode.task_text)

    sample = sample_uniform(episode, "high", 20)
    print("sampled high-view frames:", sample.indices)

    prompt = build_annotation_prompt(episode.task_text, 20, 20, 20)
    print("\nprompt head:")
    print("\n".join(prompt.splitlines()[:4]))

    client = ReplayMockClient({"*": RESPONSE})
    label = annotate_episode(episode, client)
    print("\nlabel box on frame 0:", label.box.as_tuple())
    print("label:", label.label, "| task:", label.task_type, "| arm:", label.arm_used)

    path = write_label(label, tmp)
    print("stored at:", Path(path).name)
