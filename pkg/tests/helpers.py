"""Shared test utilities (seeded random scenes, Monte-Carlo oracles)."""

import numpy as np

from oovtrack import ObjectModel, Pose
from oovtrack.geometry import quat_from_axis_angle, quat_multiply


def random_pose(rng, base: Pose = None, max_angle=0.5, max_shift=0.3) -> Pose:
    """A pose near `base` (default: canonical 2 m stand-off, identity rotation)."""
    if base is None:
        base = Pose(q=np.array([1.0, 0, 0, 0]), t=np.array([0.0, 0.0, 2.0]))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    dq = quat_from_axis_angle(axis * rng.uniform(0, max_angle))
    return Pose(q=quat_multiply(dq, base.q), t=base.t + rng.uniform(-max_shift, max_shift, 3))


def random_model(rng, n=10) -> ObjectModel:
    pts = rng.uniform(-0.3, 0.3, size=(n, 3))
    return ObjectModel(tuple(f"f{i}" for i in range(n)), pts)


def rotation_between(qa, qb) -> float:
    """Relative rotation angle between two unit quaternions, radians."""
    return 2.0 * np.arccos(np.clip(abs(np.dot(qa, qb)), -1.0, 1.0))


def monte_carlo_visibility(points, dims, n_samples, rng) -> float:
    """Point-in-polygon area-ratio estimate; independent oracle for the
    hull-clipping visibility computation."""
    from oovtrack.evaluation import convex_hull

    hull = convex_hull(points)
    lo = hull.min(axis=0)
    hi = hull.max(axis=0)
    samples = rng.uniform(lo, hi, size=(n_samples, 2))
    # inside test against every hull edge (hull is counter-clockwise)
    inside = np.ones(n_samples, dtype=bool)
    m = len(hull)
    for i in range(m):
        a, b = hull[i], hull[(i + 1) % m]
        cross = (b[0] - a[0]) * (samples[:, 1] - a[1]) - (b[1] - a[1]) * (samples[:, 0] - a[0])
        inside &= cross >= 0
    n_hull = int(inside.sum())
    if n_hull == 0:
        return 0.0
    in_rect = (
        (samples[:, 0] >= 0)
        & (samples[:, 0] <= dims[0])
        & (samples[:, 1] >= 0)
        & (samples[:, 1] <= dims[1])
    )
    return float((inside & in_rect).sum() / n_hull)
