"""
Calibrating a camera from its own footage
=========================================

Vanishing points voted over 20 frames give the focal length and the
ground-plane homography; one bus of known height fixes the camera height.
The mapping error budget is then propagated to ground coordinates.
"""

import numpy as np

from streetscope import synth
from streetscope.calibration import (build_camera, estimate_height, estimate_scene_vanishing_points,
                                     image_to_world, position_uncertainty)

scene = synth.make_scene(seed=3, yaw_deg=-12, pitch_deg=20, f=360, h=9.0)
frames = [synth.render_line_image(scene, 6, 6, 0.5, seed=k)[0] for k in range(20)]

u0, v0, u1 = estimate_scene_vanishing_points(frames)
tu0, tv0, tu1 = scene.vanishing_points()
print(f"u0 {u0:8.2f}  (true {tu0:8.2f})")
print(f"v0 {v0:8.2f}  (true {tv0:8.2f})")
print(f"u1 {u1:8.2f}  (true {tu1:8.2f})")

# height from a 4.95 m double-decker bus seen in the frame
bottom, top = synth.object_pixels(scene, (2.0, 25.0), synth.BUS_HEIGHT_M)
provisional = build_camera(scene.dims, u0, v0, u1, 1.0)
h = estimate_height(provisional, {"bottom": bottom, "top": top, "physical_height": synth.BUS_HEIGHT_M})
cam = build_camera(scene.dims, u0, v0, u1, h)
print(f"focal {cam.f:.1f} px (true {scene.f}), height {h:.2f} m (true {scene.h})")

# a pedestrian's foot point, mapped with the estimated and the true camera
uv = np.array([200.0, 240.0])
truth_xy = scene.backproject_ground(uv)
print(f"foot pixel {uv} -> {np.round(image_to_world(cam, uv), 2)} m (true {np.round(truth_xy, 2)})")

r = position_uncertainty(cam, uv, {"u0": 2.0, "v0": 1.0, "u1": 2.0, "h": 0.5})
print(f"first-order uncertainty dX {r.dX:.2f} m, dY {r.dY:.2f} m")
for name, (dx, dy) in r.per_parameter.items():
    print(f"  from {name:2s}: {dx:.3f}, {dy:.3f}")
