"""
The simulated canal and its contact model
=========================================

A tour of the geometry: centerline, checkpoints, and the wall force felt by
the instrument as it moves off-center.
"""

import numpy as np

from canalrl.env import CanalAnatomy, InstrumentPose, centerline_point, contact_force

# The default canal is 40 mm long with a 150 degree flexion, so the middle
# third bends by 30 degrees.
anatomy = CanalAnatomy()
print("bend angle (deg):", np.degrees(anatomy.bend_angle))

# Sample the centerline. Points come back in mm, tangents are unit vectors.
for s in np.linspace(0, 1, 6):
    point, tangent = centerline_point(anatomy, s)
    print(f"s={s:.1f}  point={np.round(point, 2)}  tangent={np.round(tangent, 3)}")

# Checkpoints sit at fixed arc-length fractions along the same curve.
print("checkpoints:\n", np.round(anatomy.checkpoint_points(), 2))

# The instrument (radius 2.5 mm) is a little wider than the canal (2.25 mm),
# so both walls press on it. On the centerline the two sides cancel.
centered = InstrumentPose(centerline_point(anatomy, 0.3)[0], np.zeros(3))
print("force on centerline:", contact_force(anatomy, centered))

# Push the tip sideways and the net force grows, pointing back to the middle.
for offset in (0.1, 0.5, 1.0, 2.0, 4.0):
    pose = InstrumentPose(centered.position + [0.0, offset, 0.0], np.zeros(3))
    f = contact_force(anatomy, pose)
    print(f"lateral offset {offset:3.1f} mm -> force {np.round(f, 3)}  |F|={np.linalg.norm(f):.3f} N")

# A sharper flexion makes the straight instrument jam against the bend.
sharp = CanalAnatomy(flexion_angle_deg=115.0)
mid = InstrumentPose(centerline_point(sharp, 0.5)[0], np.zeros(3))
print("sharp bend, straight instrument at s=0.5: |F| =", np.linalg.norm(contact_force(sharp, mid)))
