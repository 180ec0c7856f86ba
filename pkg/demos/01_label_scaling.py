#!/usr/bin/env python3
"""Label scaling: how shrinking s pulls out-of-view points into the heatmap.

Projects the reference object under a view where part of the object falls
outside the 256x256 image, then renders the label stack at four scales.
The smaller the scale, the more feature points land inside the map.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from oovtrack import (
    Pose,
    ScaleConfig,
    project,
    reference_scene,
    render_labels,
    to_heatmap_space,
)

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

scene = reference_scene()
# move the camera close so the object spills out of the frame
close = Pose(q=scene.pose.q, t=scene.pose.t - np.array([0.12, 0.0, 1.15]))
p_c = project(scene.model, close, scene.k)
print("projections span:", p_c.min(axis=0).round(1), "to", p_c.max(axis=0).round(1))

fig, axes = plt.subplots(1, 4, figsize=(16, 4.2))
for ax, s in zip(axes, (1.0, 0.5, 1.0 / 3.0, 0.25)):
    cfg = ScaleConfig(s=s, n_img=scene.cfg.n_img)
    p_s = to_heatmap_space(p_c, cfg)
    stack = render_labels(p_s, sigma=5.0, dims=cfg.n_map, scale=s)
    inside = int(np.sum((p_s >= 0).all(axis=1) & (p_s <= 255).all(axis=1)))
    print(f"s = {s:.3g}: {inside}/{len(scene.model)} points inside the heatmap")
    ax.imshow(stack.values.max(axis=0), cmap="magma", origin="upper")
    ax.set_title(f"s = {s:.3g}  ({inside}/{len(scene.model)} in view)")
    ax.set_axis_off()
fig.suptitle("Same view, shrinking label scale: out-of-view points enter the map")
fig.tight_layout()
fig.savefig(out_dir / "label_scaling.png", dpi=110)
print("wrote", out_dir / "label_scaling.png")
