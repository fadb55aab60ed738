"""The referring gap, quantified: text-only vs grounded across six families.

The text policy parses spatial language and draws uniformly when words leave
several candidates; the grounded policy reads the box marker off the image.
On referent-sensitive scenes the gap is structural, not a parser weakness:
the same text policy is perfect when the instruction uniquely identifies the
target (see the reference-instruction check at the end).
"""

from groundkit.sim import (
    UNAMBIGUOUS_INSTRUCTIONS,
    EvalConfig,
    TrialProtocol,
    run_eval,
    run_trial,
    unambiguous_scene,
)

config = EvalConfig(scenes_per_family=5, root_seed=7)
report = run_eval(config)
print("success rates, 150 trials per cell (5 scenes x 30 trials):\n")
print(report.to_table())

print("\nwith unambiguous referring expressions the text policy is exact:")
for family, instruction in sorted(UNAMBIGUOUS_INSTRUCTIONS.items()):
    scene = unambiguous_scene(family)
    protocol = TrialProtocol(place_tolerance_cm=4.0 if family == "egg-place" else 10.0)
    result = run_trial(scene, "text", instruction, protocol, seed=0)
    print(f"  {family:12s} {'ok' if result.success and result.attempts == 1 else 'FAIL'}  {instruction}")
