"""A live-steering session against the HTTP facade, in process.

The same flow the browser UI drives: create a session, generate a scene,
ground a box, run trials, and watch the text-vs-grounded tally diverge.
"""

import base64

from fastapi.testclient import TestClient

from groundkit.service import ServiceConfig, create_app

client = TestClient(create_app(ServiceConfig()))

sid = client.post("/sessions", json={"seed": 42}).json()["session_id"]
scene = client.post(f"/sessions/{sid}/scene", json={"family": "clutter", "seed": 9}).json()
print("session", sid, "| scene:", len(scene["scene"]["objects"]), "objects,",
      scene["width"], "x", scene["height"], "px")

# tight box around the ground-truth target, from the scene summary
objs = {o["id"]: o for o in scene["scene"]["objects"]}
target = objs[scene["scene"]["target_id"]]
tw, th = scene["scene"]["table_cm"]
(cx, cy), (ex, ey) = target["center_cm"], target["extent_cm"]
box = [
    (cx - ex / 2 - 0.5) / tw,
    (cy - ey / 2 - 0.5) / th,
    (cx + ex / 2 + 0.5) / tw,
    (cy + ey / 2 + 0.5) / th,
]
client.post(f"/sessions/{sid}/ground", json={"box": box, "text": "pick up"})

tally = {"text": 0, "grounded": 0}
rounds = 20
for _ in range(rounds):
    grounded = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"}).json()
    tally["grounded"] += grounded["success"]
    text = client.post(
        f"/sessions/{sid}/trial", json={"policy": "text", "instruction_text": "pick the bottle"}
    ).json()
    tally["text"] += text["success"]

print(f"after {rounds} rounds: grounded {tally['grounded']}/{rounds}, text {tally['text']}/{rounds}")
history = client.get(f"/sessions/{sid}/history").json()["trials"]
print("history length:", len(history), "| last attempt trace:", history[-1]["trace"])
