"""Optimisation-based pose estimation over negative-log cost maps.

The scalar objective sums, over channels, the cost map sampled at the
scaled projection of the corresponding model point; minimising it aligns
the projections with the predicted feature locations.  Gradients chain the
exact piecewise-linear bilinear image gradient with the scaling factor, the
pinhole projection Jacobian and a left axis-angle pose perturbation; the
optimiser is steepest descent with Armijo backtracking.

Points behind the camera or outside the grid are charged the flat
out-of-bounds ceiling, so every pose has a finite cost and bad hypotheses
are penalised rather than fatal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteCost
from .geometry import MIN_DEPTH, CameraIntrinsics, ObjectModel, Pose, ScaleConfig
from .heatmap import CostStack, HeatmapStack, cost_value_grad, smooth, to_cost


class OptStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    STALLED = "Stalled"


@dataclass(frozen=True)
class OptSettings:
    max_iters: int = 200
    step_init: float = 1.0
    step_shrink: float = 0.5
    grad_tol: float = 1e-8
    cost_tol: float = 2e-6
    blur_sigma: float = 5.0
    metric_damping: float = 1e-3  # relative Tikhonov floor on the step metric
    fd_eps_image: float = 0.5  # px, for finite-difference probes of image terms
    fd_eps_pose: float = 1e-6  # axis-angle / metres, for gradient validation

    def __post_init__(self):
        if self.max_iters < 1 or self.step_init <= 0 or not (0 < self.step_shrink < 1):
            raise ValueError("invalid optimiser settings")
        if self.grad_tol <= 0 or self.cost_tol <= 0 or self.blur_sigma < 0:
            raise ValueError("invalid optimiser tolerances")
        if self.metric_damping <= 0:
            raise ValueError("metric_damping must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "OptSettings":
        return cls(**d)


@dataclass(frozen=True)
class OptResult:
    pose: Pose
    status: OptStatus
    iterations: int
    cost: float


def build_cost(stack: HeatmapStack, blur_sigma: float = 5.0, eps: float = 1e-8) -> CostStack:
    """Standard pipeline: smooth the heatmaps, then negative-log normalise."""
    return to_cost(smooth(stack, blur_sigma), eps=eps)


def _scaled_projections(pose: Pose, model: ObjectModel, k: CameraIntrinsics, cfg: ScaleConfig):
    """Camera-frame points, validity mask and heatmap-space projections."""
    cam = model.points @ pose.rotation_matrix().T + pose.t
    z = cam[:, 2]
    valid = z > MIN_DEPTH
    zs = np.where(valid, z, 1.0)
    u = k.fx * cam[:, 0] / zs + k.cx
    v = k.fy * cam[:, 1] / zs + k.cy
    n = np.array(cfg.n_map, dtype=np.float64)
    ps = cfg.s * np.column_stack([u, v]) + n * (1.0 - cfg.s) / 2.0
    return cam, valid, ps


def pose_cost(
    pose: Pose,
    cost: CostStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
) -> float:
    """Total cost of a pose hypothesis; finite for every pose."""
    if cost.n_channels != len(model):
        raise ValueError("cost channels must match model points")
    cam, valid, ps = _scaled_projections(pose, model, k, cfg)
    val, _, _ = cost_value_grad(cost, ps)
    oob = cost.oob_cost.astype(np.float64)
    phi = float(np.where(valid, val, oob).sum())
    if not np.isfinite(phi):
        raise NonFiniteCost(f"cost evaluated to {phi}")
    return phi


def pose_gradient(
    pose: Pose,
    cost: CostStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
) -> np.ndarray:
    """d(total cost)/d[axis-angle, translation], a 6-vector.

    Chain: bilinear cell gradient x scale s x projection Jacobian x
    [-[p_cam]_x | I].  Out-of-grid and behind-camera points sit on the flat
    ceiling and contribute zero.
    """
    if cost.n_channels != len(model):
        raise ValueError("cost channels must match model points")
    cam, valid, ps = _scaled_projections(pose, model, k, cfg)
    _, gx, gy = cost_value_grad(cost, ps)
    gx = np.where(valid, gx, 0.0) * cfg.s
    gy = np.where(valid, gy, 0.0) * cfg.s
    x, y, z = cam[:, 0], cam[:, 1], np.where(valid, cam[:, 2], 1.0)
    # d(u,v)/dp_cam contracted with the image gradient
    gcx = gx * k.fx / z
    gcy = gy * k.fy / z
    gcz = -(gx * k.fx * x + gy * k.fy * y) / z**2
    g = np.zeros(6)
    # rotation part: dp_cam/dw = -[p_cam]_x
    g[0] = np.sum(gcy * -z + gcz * y)
    g[1] = np.sum(gcx * z + gcz * -x)
    g[2] = np.sum(gcx * -y + gcy * x)
    g[3] = np.sum(gcx)
    g[4] = np.sum(gcy)
    g[5] = np.sum(gcz)
    return g


def pose_gradient_fd(
    pose: Pose,
    cost: CostStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
    eps: float = 1e-6,
) -> np.ndarray:
    """Central finite differences of pose_cost; validation oracle."""
    g = np.zeros(6)
    for j in range(6):
        d = np.zeros(6)
        d[j] = eps
        up = pose_cost(pose.retract(d), cost, model, k, cfg)
        dn = pose_cost(pose.retract(-d), cost, model, k, cfg)
        g[j] = (up - dn) / (2 * eps)
    return g


def projection_jacobian(pose: Pose, model: ObjectModel, k: CameraIntrinsics) -> np.ndarray:
    """d(projections)/d[axis-angle, t], stacked (2n, 6).

    Pure pose geometry; also serves as the step metric for the optimiser
    (its Gram matrix measures how much image motion a parameter move causes,
    which removes the translation/rotation unit mismatch).
    """
    cam = model.points @ pose.rotation_matrix().T + pose.t
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    n = cam.shape[0]
    zero = np.zeros(n)
    du = np.stack([k.fx / z, zero, -k.fx * x / z**2], axis=1)
    dv = np.stack([zero, k.fy / z, -k.fy * y / z**2], axis=1)
    jac = np.zeros((2 * n, 6))
    # columns 0..2: d p_cam/dw = -[p_cam]_x contracted with du/dv
    jac[0::2, 0] = du[:, 1] * -z + du[:, 2] * y
    jac[0::2, 1] = du[:, 0] * z + du[:, 2] * -x
    jac[0::2, 2] = du[:, 0] * -y + du[:, 1] * x
    jac[1::2, 0] = dv[:, 1] * -z + dv[:, 2] * y
    jac[1::2, 1] = dv[:, 0] * z + dv[:, 2] * -x
    jac[1::2, 2] = dv[:, 0] * -y + dv[:, 1] * x
    jac[0::2, 3:] = du
    jac[1::2, 3:] = dv
    return jac


def optimise(
    init: Pose,
    cost: CostStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
    settings: OptSettings = OptSettings(),
) -> OptResult:
    """Gradient descent with Armijo backtracking; cost never increases.

    The descent direction is the gradient preconditioned by the (damped)
    Gram matrix of the projection Jacobian.  Plain steepest descent zig-zags
    in the narrow valley created by the rotation/translation unit mismatch
    and stalls 1-2 px from the optimum; measuring steps in image-motion
    units removes the valley while everything else (the summed cost-map
    objective, the monotone line search, the first-order gradient) is
    unchanged.

    Terminates CONVERGED on the gradient tolerance or when the relative cost
    decrease stays below cost_tol for two consecutive accepted steps;
    STALLED when no descent step exists (including a bitwise-zero gradient
    on a flat plateau); MAX_ITERS otherwise.
    """
    pose = init
    phi = pose_cost(pose, cost, model, k, cfg)
    step0 = settings.step_init
    iterations = 0
    small_streak = 0
    eye = np.eye(6)
    for it in range(1, settings.max_iters + 1):
        iterations = it
        g = pose_gradient(pose, cost, model, k, cfg)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            return OptResult(pose, OptStatus.STALLED, iterations, phi)
        if gn < settings.grad_tol:
            return OptResult(pose, OptStatus.CONVERGED, iterations, phi)
        jac = projection_jacobian(pose, model, k)
        metric = jac.T @ jac
        lam = settings.metric_damping * np.trace(metric) / 6.0
        try:
            direction = -np.linalg.solve(metric + lam * eye, g)
        except np.linalg.LinAlgError:
            direction = -g
        slope = float(g @ direction)
        if slope >= 0.0:  # damaged metric; fall back to raw steepest descent
            direction = -g
            slope = -gn * gn
        step = step0
        accepted = False
        while step > 1e-14:
            cand = pose.retract(step * direction)
            phic = pose_cost(cand, cost, model, k, cfg)
            if phic < phi + 1e-4 * step * slope:
                rel = (phi - phic) / max(abs(phi), 1e-300)
                pose, phi = cand, phic
                step0 = min(step * 2.0, 64.0)
                accepted = True
                small_streak = small_streak + 1 if rel < settings.cost_tol else 0
                break
            step *= settings.step_shrink
        if not accepted:
            return OptResult(pose, OptStatus.STALLED, iterations, phi)
        if small_streak >= 2:
            return OptResult(pose, OptStatus.CONVERGED, iterations, phi)
    return OptResult(pose, OptStatus.MAX_ITERS, iterations, phi)
