"""Run one grasp trial and print what the oracle and the sensors saw."""
import sys

import numpy as np

from grasplab.oracle import compute_contacts, lift_outcome
from grasplab.trials import SensorRig, calibrate_rig, run_trial
from grasplab.world import FORCE_RANGE, generate_object, place_object

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
obj = generate_object(seed, "cylinder_like")
rig = calibrate_rig([obj], seed, FORCE_RANGE, SensorRig())
scene = place_object(obj, seed)
rec = run_trial(scene, seed, FORCE_RANGE, rig, noise=False)

p = rec.params
print(f"object {obj.object_id}: mass {obj.material.mass:.3f} kg, mu {obj.material.friction_mu:.2f}")
print(f"grasp at ({p.ee_x:.1f}, {p.ee_y:.1f}, {p.ee_z:.1f}) mm, phi {p.phi:.2f} rad, force {p.force:.1f} N")
c = compute_contacts(scene, p)
for side, patch in (("left", c.left), ("right", c.right)):
    print(f"  {side}: " + (f"patch half-length {patch.length:.1f} mm" if patch else "no contact"))
out = lift_outcome(scene, p, c, noise=False)
print(f"oracle: success={out.success} mode={out.failure_mode} margin={out.margin:.2f}")
print(f"auto label: {rec.label}")
for name, frame in sorted(rec.frames.items()):
    print(f"  {name:16s} {frame.kind:8s} {frame.codes.dtype} {frame.codes.shape} mean code {np.mean(frame.codes):.1f}")
