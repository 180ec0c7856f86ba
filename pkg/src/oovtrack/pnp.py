"""Pose from 2D-3D correspondences.

Initialisation is chosen by configuration: a 12-parameter DLT for 6+
general points, a plane-homography decomposition for coplanar sets (covers
4-corner objects), and POSIT for 4-5 non-coplanar points.  Every branch is
polished by damped Gauss-Newton (Levenberg-Marquardt) on the pixel
reprojection error, which is what the accuracy contract is stated on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, Diverged, NoSolution
from .geometry import CameraIntrinsics, Pose, project, quat_normalize

_PLANAR_TOL = 1e-9


@dataclass(frozen=True)
class Correspondences:
    """Paired 3D model points (n, 3) and 2D image points (n, 2), n >= 4."""

    points_3d: np.ndarray
    points_2d: np.ndarray

    def __post_init__(self):
        p3 = np.asarray(self.points_3d, dtype=np.float64)
        p2 = np.asarray(self.points_2d, dtype=np.float64)
        if p3.ndim != 2 or p3.shape[1] != 3 or p2.shape != (p3.shape[0], 2):
            raise DegenerateConfiguration("need matching (n,3) and (n,2) arrays")
        if p3.shape[0] < 4:
            raise DegenerateConfiguration(f"{p3.shape[0]} pairs; at least 4 required")
        d = p3[:, None, :] - p3[None, :, :]
        dist = np.sqrt((d**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 0.0:
            raise DegenerateConfiguration("duplicate 3D points")
        c2 = p2 - p2.mean(axis=0)
        sv = np.linalg.svd(c2, compute_uv=False)
        if sv[1] < 1e-9 * max(sv[0], 1.0):
            raise DegenerateConfiguration("image points are collinear")
        object.__setattr__(self, "points_3d", p3)
        object.__setattr__(self, "points_2d", p2)

    def __len__(self) -> int:
        return self.points_3d.shape[0]


def _normalized_coords(corr: Correspondences, k: CameraIntrinsics) -> np.ndarray:
    p = corr.points_2d
    return np.column_stack([(p[:, 0] - k.cx) / k.fx, (p[:, 1] - k.cy) / k.fy])


def _orthogonalize(m: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to a 3x3 matrix (Frobenius sense)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _pose_from_rt(r: np.ndarray, t: np.ndarray) -> Pose:
    # rotation matrix -> quaternion (Shepperd's method via largest pivot)
    tr = np.trace(r)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        if i == 0:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            q = np.array(
                [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2
            q = np.array(
                [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2
            q = np.array(
                [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
            )
    return Pose(q=quat_normalize(q), t=t)


def _depths(r: np.ndarray, t: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ r[2] + t[2]


def _dlt_full(p3: np.ndarray, xn: np.ndarray) -> tuple:
    """12-parameter DLT for [R|t] from normalized image coordinates."""
    n = p3.shape[0]
    a = np.zeros((2 * n, 12))
    hom = np.column_stack([p3, np.ones(n)])
    a[0::2, 0:4] = hom
    a[0::2, 8:12] = -xn[:, 0:1] * hom
    a[1::2, 4:8] = hom
    a[1::2, 8:12] = -xn[:, 1:2] * hom
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * sv[0]:
        raise DegenerateConfiguration("rank-deficient DLT system")
    p = vt[-1].reshape(3, 4)
    for cand in (p, -p):
        m = cand[:, :3]
        alpha = np.linalg.norm(m[2])
        if alpha < 1e-12:
            continue
        m = m / alpha
        t = cand[:, 3] / alpha
        r = _orthogonalize(m)
        if np.median(_depths(r, t, p3)) > 0:
            return r, t
    raise NoSolution("no DLT solution with points in front of the camera")


def _homography_planar(p3: np.ndarray, xn: np.ndarray) -> tuple:
    """Plane-homography pose for (near-)coplanar 3D points."""
    centroid = p3.mean(axis=0)
    centred = p3 - centroid
    _, _, vt = np.linalg.svd(centred)
    basis = vt.T.copy()  # columns: in-plane e1, e2, normal e3
    if np.linalg.det(basis) < 0:
        basis[:, 2] = -basis[:, 2]
    ab = centred @ basis[:, :2]  # plane coordinates
    n = p3.shape[0]
    a = np.zeros((2 * n, 9))
    hom = np.column_stack([ab, np.ones(n)])
    a[0::2, 0:3] = hom
    a[0::2, 6:9] = -xn[:, 0:1] * hom
    a[1::2, 3:6] = hom
    a[1::2, 6:9] = -xn[:, 1:2] * hom
    _, sv, vvt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * sv[0]:
        raise DegenerateConfiguration("rank-deficient homography system")
    hmat = vvt[-1].reshape(3, 3)
    h1, h2, h3 = hmat[:, 0], hmat[:, 1], hmat[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    best = None
    for sign in (lam, -lam):
        r1, r2, tp = sign * h1, sign * h2, sign * h3
        rp = _orthogonalize(np.column_stack([r1, r2, np.cross(r1, r2)]))
        depths = _depths(rp, tp, np.column_stack([ab, np.zeros(n)]))
        if np.all(depths > 0):
            rw = rp @ basis.T
            tw = tp - rw @ centroid
            resid = np.linalg.norm(_project_normalized(rw, tw, p3) - xn)
            if best is None or resid < best[0]:
                best = (resid, rw, tw)
    if best is None:
        raise NoSolution("no homography decomposition with positive depths")
    return best[1], best[2]


def _project_normalized(r: np.ndarray, t: np.ndarray, p3: np.ndarray) -> np.ndarray:
    cam = p3 @ r.T + t
    return cam[:, :2] / cam[:, 2:3]


def _posit(p3: np.ndarray, xn: np.ndarray, iters: int = 30) -> tuple:
    """DeMenthon POSIT for 4+ non-coplanar points (weak-perspective start)."""
    rel = p3[1:] - p3[0]
    pinv = np.linalg.pinv(rel)
    eps = np.zeros(rel.shape[0])
    r = np.eye(3)
    z0 = 1.0
    for _ in range(iters):
        xp = xn[1:, 0] * (1.0 + eps) - xn[0, 0]
        yp = xn[1:, 1] * (1.0 + eps) - xn[0, 1]
        ivec = pinv @ xp
        jvec = pinv @ yp
        s1, s2 = np.linalg.norm(ivec), np.linalg.norm(jvec)
        if s1 < 1e-12 or s2 < 1e-12:
            raise DegenerateConfiguration("POSIT scale collapsed")
        i = ivec / s1
        j = jvec / s2
        r = _orthogonalize(np.vstack([i, j, np.cross(i, j)]))
        z0 = 2.0 / (s1 + s2)
        new_eps = (rel @ r[2]) / z0
        if np.max(np.abs(new_eps - eps)) < 1e-12:
            eps = new_eps
            break
        eps = new_eps
    p0_cam = np.array([xn[0, 0] * z0, xn[0, 1] * z0, z0])
    t = p0_cam - r @ p3[0]
    return r, t


def _is_planar(p3: np.ndarray) -> bool:
    sv = np.linalg.svd(p3 - p3.mean(axis=0), compute_uv=False)
    return sv[2] < max(_PLANAR_TOL, 1e-6 * sv[0])


def reprojection_rms(pose: Pose, corr: Correspondences, k: CameraIntrinsics) -> float:
    """RMS pixel reprojection error of a pose over the correspondences."""
    d = project(corr.points_3d, pose, k) - corr.points_2d
    return float(np.sqrt(np.mean(np.sum(d**2, axis=1))))


def _residual_jacobian(pose: Pose, corr: Correspondences, k: CameraIntrinsics):
    r = pose.rotation_matrix()
    cam = corr.points_3d @ r.T + pose.t
    z = cam[:, 2]
    if np.any(z <= 1e-9):
        return None, None, np.inf
    u = k.fx * cam[:, 0] / z + k.cx
    v = k.fy * cam[:, 1] / z + k.cy
    res = np.column_stack([u, v]) - corr.points_2d
    n = cam.shape[0]
    jac = np.zeros((2 * n, 6))
    # d(u,v)/dp_cam
    du = np.column_stack([k.fx / z, np.zeros(n), -k.fx * cam[:, 0] / z**2])
    dv = np.column_stack([np.zeros(n), k.fy / z, -k.fy * cam[:, 1] / z**2])
    # dp_cam/dw = -[p_cam]_x (left perturbation), dp_cam/dt = I
    px, py, pz = cam[:, 0], cam[:, 1], cam[:, 2]
    # cross-product matrix rows applied to the projection jacobians
    jac[0::2, 0] = du[:, 1] * -pz + du[:, 2] * py
    jac[0::2, 1] = du[:, 0] * pz + du[:, 2] * -px
    jac[0::2, 2] = du[:, 0] * -py + du[:, 1] * px
    jac[1::2, 0] = dv[:, 1] * -pz + dv[:, 2] * py
    jac[1::2, 1] = dv[:, 0] * pz + dv[:, 2] * -px
    jac[1::2, 2] = dv[:, 0] * -py + dv[:, 1] * px
    jac[0::2, 3:6] = du
    jac[1::2, 3:6] = dv
    return res.reshape(-1), jac, float(np.sum(res**2))


def refine_pose(
    init: Pose,
    corr: Correspondences,
    k: CameraIntrinsics,
    max_iters: int = 100,
    tol: float = 1e-10,
) -> Pose:
    """Levenberg-Marquardt on pixel reprojection error.

    The accepted-cost sequence is non-increasing; raises Diverged when no
    damping level yields a decrease, and DepthError if the initial pose puts
    points behind the camera.
    """
    project(corr.points_3d, init, k)  # raises DepthError on a bad start
    pose = init
    res, jac, cost = _residual_jacobian(pose, corr, k)
    lam = 1e-3
    for _ in range(max_iters):
        jtj = jac.T @ jac
        g = jac.T @ res
        if np.linalg.norm(g, np.inf) < 1e-15:
            break
        accepted = False
        diag = np.maximum(np.diag(jtj), 1e-12)
        while lam < 1e14:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            cand = pose.retract(delta)
            c_res, c_jac, c_cost = _residual_jacobian(cand, corr, k)
            if c_cost < cost:
                rel = (cost - c_cost) / max(cost, 1e-300)
                pose, res, jac, cost = cand, c_res, c_jac, c_cost
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if rel < tol or np.linalg.norm(delta) < 1e-15:
                    return pose
                break
            lam *= 10
        if not accepted:
            if cost <= 1e-20:  # already at numerical zero, nothing to improve
                return pose
            raise Diverged("no damping level decreased the reprojection cost")
    return pose


def solve_pnp(corr: Correspondences, k: CameraIntrinsics) -> Pose:
    """Pose whose projection best matches the correspondences.

    Noiseless input recovers the pose to ~1e-6 px RMS; the returned pose
    always has every correspondence in front of the camera.
    """
    xn = _normalized_coords(corr, k)
    p3 = corr.points_3d
    if _is_planar(p3):
        r, t = _homography_planar(p3, xn)
    elif len(corr) >= 6:
        r, t = _dlt_full(p3, xn)
    else:
        r, t = _posit(p3, xn)
    init = _pose_from_rt(r, t)
    if np.any(_depths(init.rotation_matrix(), init.t, p3) <= 0):
        raise NoSolution("initialisation leaves points behind the camera")
    try:
        pose = refine_pose(init, corr, k, max_iters=100, tol=1e-14)
    except Diverged:
        pose = init
    if np.any(_depths(pose.rotation_matrix(), pose.t, p3) <= 0):
        raise NoSolution("refined pose leaves points behind the camera")
    return pose
