"""Camera model, pose representation and the image <-> heatmap coordinate maps.

Conventions used throughout the toolkit:

* 2D points are ``(x, y)`` with the origin at the top-left pixel centre,
  x growing rightwards, y growing downwards; arrays of points have shape
  ``(n, 2)``.  Grid arrays are indexed ``[row, col]`` == ``[y, x]``.
* Quaternions are Hamilton, scalar first ``(w, x, y, z)``, encode the
  world-to-camera rotation and are kept on the w >= 0 hemisphere.
* A pose maps world points into the camera frame: ``p_cam = R p + t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthError, SingularTransform

MIN_DEPTH = 1e-9


# ---------------------------------------------------------------------------
# quaternion helpers


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Unit quaternion on the w >= 0 hemisphere (q and -q are one rotation)."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_axis_angle(v: np.ndarray) -> np.ndarray:
    """Quaternion of the rotation by angle ``|v|`` about axis ``v/|v|``."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    if theta < 1e-12:
        # first-order expansion, renormalised
        q = np.concatenate(([1.0], 0.5 * v))
        return q / np.linalg.norm(q)
    axis = v / theta
    half = 0.5 * theta
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotation_angle(q: np.ndarray) -> float:
    """Absolute rotation angle in radians, in [0, pi]."""
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))


def quats_to_matrices(qs: np.ndarray) -> np.ndarray:
    """Batched quat_to_matrix: (n, 4) -> (n, 3, 3)."""
    w, x, y, z = qs[:, 0], qs[:, 1], qs[:, 2], qs[:, 3]
    m = np.empty((qs.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quats_from_axis_angles(v: np.ndarray) -> np.ndarray:
    """Batched quat_from_axis_angle: (n, 3) -> (n, 4) unit quaternions."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v, axis=1)
    half = 0.5 * theta
    # sin(theta/2)/theta with its theta -> 0 limit of 1/2
    factor = np.where(theta > 1e-12, np.sin(half) / np.where(theta > 0, theta, 1.0), 0.5)
    q = np.column_stack([np.cos(half), v * factor[:, None]])
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quats_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Hamilton product; a is (n, 4), b is (4,) or (n, 4)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), a.shape)
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.column_stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @classmethod
    def from_json(cls, path) -> "CameraIntrinsics":
        with open(path) as f:
            d = json.load(f)
        return cls(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"])

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump({"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}, f, indent=2)
            f.write("\n")


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform: unit quaternion + translation (metres)."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _readonly(quat_normalize(self.q)))
        t = np.asarray(self.t, dtype=np.float64)
        if t.shape != (3,):
            raise ValueError("t must be a 3-vector")
        object.__setattr__(self, "t", _readonly(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(q=np.array([1.0, 0, 0, 0]), t=np.zeros(3))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """World points (n, 3) -> camera-frame points (n, 3)."""
        return np.asarray(points, dtype=np.float64) @ self.rotation_matrix().T + self.t

    def retract(self, delta: np.ndarray) -> "Pose":
        """Left perturbation by a 6-vector [axis-angle, dt].

        New transform: p -> exp(w)(R p + t) + dt, i.e. R' = exp(w) R and
        t' = exp(w) t + dt.
        """
        delta = np.asarray(delta, dtype=np.float64)
        dq = quat_from_axis_angle(delta[:3])
        dr = quat_to_matrix(dq)
        return Pose(q=quat_multiply(dq, self.q), t=dr @ self.t + delta[3:])


@dataclass(frozen=True)
class ObjectModel:
    """Named 3D feature points; the ordering fixes heatmap channel indices."""

    names: tuple
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        names = tuple(self.names)
        if len(names) != pts.shape[0]:
            raise ValueError("one name per point required")
        if len(set(names)) != len(names):
            raise ValueError("point names must be unique")
        if pts.shape[0] < 4:
            raise ValueError("at least 4 points required")
        centred = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centred, compute_uv=False)
        if sv[1] < 1e-12 * max(sv[0], 1.0):
            raise ValueError("points are collinear; pose is unobservable")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "points", _readonly(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_json(cls, path) -> "ObjectModel":
        with open(path) as f:
            d = json.load(f)
        names = [p["name"] for p in d["points"]]
        pts = [p["xyz"] for p in d["points"]]
        return cls(names=tuple(names), points=np.array(pts))

    def to_json(self, path, name: str = "object") -> None:
        doc = {
            "name": name,
            "points": [
                {"name": n, "xyz": [float(v) for v in p]}
                for n, p in zip(self.names, self.points)
            ],
        }
        with open(path, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")


@dataclass(frozen=True)
class ScaleConfig:
    """Label-scaling parameters: zoom factor s plus image and heatmap sizes.

    ``n_img`` and ``n_map`` are (width, height) in pixels.  The heatmap
    side lengths play the role of N in the scaling map.
    """

    s: float
    n_img: tuple = (256, 256)
    n_map: tuple = None

    def __post_init__(self):
        if not (0.0 < self.s <= 1.0):
            raise ValueError("s must be in (0, 1]")
        n_img = (int(self.n_img[0]), int(self.n_img[1]))
        n_map = n_img if self.n_map is None else (int(self.n_map[0]), int(self.n_map[1]))
        if min(n_img) <= 0 or min(n_map) <= 0:
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "n_img", n_img)
        object.__setattr__(self, "n_map", n_map)


@dataclass(frozen=True)
class Affine2:
    """2D affine transform as a 2x3 matrix [A | b] acting on pixel coordinates."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError("affine matrix must be 2x3")
        if abs(np.linalg.det(m[:, :2])) <= 1e-12:
            raise SingularTransform("linear part is not invertible")
        object.__setattr__(self, "m", _readonly(m))

    @classmethod
    def identity(cls) -> "Affine2":
        return cls(np.array([[1.0, 0, 0], [0, 1.0, 0]]))

    @classmethod
    def from_params(
        cls,
        angle: float = 0.0,
        scale: float = 1.0,
        translation=(0.0, 0.0),
        center=(0.0, 0.0),
    ) -> "Affine2":
        """Rotation by ``angle`` (counter-clockwise, radians) and isotropic
        scaling about ``center``, followed by a translation."""
        c, s = np.cos(angle), np.sin(angle)
        lin = scale * np.array([[c, -s], [s, c]])
        center = np.asarray(center, dtype=np.float64)
        off = center + np.asarray(translation, dtype=np.float64) - lin @ center
        return cls(np.column_stack([lin, off]))


def apply_affine(points: np.ndarray, t: Affine2) -> np.ndarray:
    """Apply an affine transform to one (2,) point or a stack (n, 2)."""
    p = np.asarray(points, dtype=np.float64)
    return p @ t.m[:, :2].T + t.m[:, 2]


def invert_affine(t: Affine2) -> Affine2:
    lin = t.m[:, :2]
    det = np.linalg.det(lin)
    if abs(det) <= 1e-12:
        raise SingularTransform("linear part is not invertible")
    inv = np.linalg.inv(lin)
    return Affine2(np.column_stack([inv, -inv @ t.m[:, 2]]))


# ---------------------------------------------------------------------------
# projection and the image <-> heatmap maps


def project(model, pose: Pose, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of model points under a pose, (n, 2) pixel coords.

    Raises DepthError if any point has camera-frame depth z <= 1e-9.
    """
    pts = model.points if isinstance(model, ObjectModel) else np.asarray(model, dtype=np.float64)
    cam = pose.transform(pts)
    z = cam[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise DepthError(f"{int(np.sum(z <= MIN_DEPTH))} point(s) at depth <= {MIN_DEPTH}")
    u = k.fx * cam[:, 0] / z + k.cx
    v = k.fy * cam[:, 1] / z + k.cy
    return np.column_stack([u, v])


def to_heatmap_space(p: np.ndarray, cfg: ScaleConfig) -> np.ndarray:
    """Image coordinates -> heatmap coordinates: p_s = s*p + N(1-s)/2.

    N is the heatmap (width, height), applied per axis.  For s < 1 the map
    contracts the image into the centre of the heatmap, so locations beyond
    the image bounds land at valid heatmap coordinates.
    """
    n = np.array(cfg.n_map, dtype=np.float64)
    return cfg.s * np.asarray(p, dtype=np.float64) + n * (1.0 - cfg.s) / 2.0


def from_heatmap_space(p: np.ndarray, cfg: ScaleConfig) -> np.ndarray:
    """Exact inverse of to_heatmap_space."""
    n = np.array(cfg.n_map, dtype=np.float64)
    return (np.asarray(p, dtype=np.float64) - n * (1.0 - cfg.s) / 2.0) / cfg.s
