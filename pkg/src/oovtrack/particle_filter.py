"""Particle-filter pose tracker.

Each particle is a pose hypothesis with a support weight.  A step runs
motion update -> heatmap weighting -> estimate -> systematic resampling;
the weight of a particle is the sum of heatmap values sampled at the
scaled projections of the model points under that particle's pose, so
hypotheses whose projections land on confident predictions are kept and
replicated while the rest die out.

The estimate is computed before resampling, while the weights still carry
information.  Particle state is stored as arrays (quaternions (n,4),
translations (n,3), weights (n,)) so weighting vectorises over particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRotation
from .geometry import (
    MIN_DEPTH,
    CameraIntrinsics,
    ObjectModel,
    Pose,
    ScaleConfig,
    quats_from_axis_angles,
    quats_multiply,
    quats_to_matrices,
)
from .heatmap import HeatmapStack, sample_each_channel
from .predictor import substream


@dataclass(frozen=True)
class MotionConfig:
    """Zero-velocity Gaussian random walk: per-step perturbation scales."""

    sigma_t: float = 0.01  # metres, per axis
    sigma_r: float = 0.0087  # radians (~0.5 deg), axis-angle magnitude
    seed: int = 0

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_r < 0:
            raise ValueError("motion sigmas must be >= 0")


class ParticleSet:
    """Weighted pose hypotheses; immutable from the outside."""

    def __init__(self, qs: np.ndarray, ts: np.ndarray, weights: np.ndarray, normalised: bool):
        qs = np.asarray(qs, dtype=np.float64)
        ts = np.asarray(ts, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        n = qs.shape[0]
        if n == 0:
            raise ValueError("particle set may not be empty")
        if qs.shape != (n, 4) or ts.shape != (n, 3) or weights.shape != (n,):
            raise ValueError("inconsistent particle array shapes")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and >= 0")
        if normalised and abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("normalised flag set but weights do not sum to 1")
        for a in (qs, ts, weights):
            a.flags.writeable = False
        self.qs = qs
        self.ts = ts
        self.weights = weights
        self.normalised = normalised

    def __len__(self) -> int:
        return self.qs.shape[0]

    def pose(self, i: int) -> Pose:
        return Pose(q=self.qs[i], t=self.ts[i])


def init_particles(prior: Pose, spread: MotionConfig, count: int, rng=None) -> ParticleSet:
    """Particles sampled around a prior pose with uniform weights."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(spread.seed)
    axis_angles = rng.normal(0.0, spread.sigma_r, size=(count, 3))
    dts = rng.normal(0.0, spread.sigma_t, size=(count, 3))
    qs = quats_multiply(quats_from_axis_angles(axis_angles), prior.q)
    ts = prior.t + dts
    return ParticleSet(qs, ts, np.full(count, 1.0 / count), normalised=True)


def motion_update(pset: ParticleSet, m: MotionConfig, step: int = 0, rng=None) -> ParticleSet:
    """Independent random-walk perturbation of every pose; weights unchanged.

    Deterministic for a given (m.seed, step); pass ``rng`` to share a stream.
    """
    if rng is None:
        rng = substream(m.seed, step)
    n = len(pset)
    axis_angles = rng.normal(0.0, m.sigma_r, size=(n, 3))
    dts = rng.normal(0.0, m.sigma_t, size=(n, 3))
    if m.sigma_r > 0:
        qs = quats_multiply(quats_from_axis_angles(axis_angles), pset.qs)
        qs = qs / np.linalg.norm(qs, axis=1, keepdims=True)
    else:
        qs = pset.qs
    return ParticleSet(qs, pset.ts + dts, pset.weights, pset.normalised)


def project_particles(
    qs: np.ndarray, ts: np.ndarray, points: np.ndarray, k: CameraIntrinsics
):
    """Project model points under every particle pose.

    Returns (uv (n_particles, n_points, 2), valid (n_particles,)) where a
    particle is valid only if all its depths exceed the near-plane floor.
    """
    rot = quats_to_matrices(qs)
    cam = np.einsum("nij,pj->npi", rot, points) + ts[:, None, :]
    z = cam[:, :, 2]
    valid = np.all(z > MIN_DEPTH, axis=1)
    zs = np.where(z > MIN_DEPTH, z, 1.0)
    u = k.fx * cam[:, :, 0] / zs + k.cx
    v = k.fy * cam[:, :, 1] / zs + k.cy
    return np.stack([u, v], axis=-1), valid


def raw_weights(
    pset: ParticleSet,
    stack: HeatmapStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
) -> np.ndarray:
    """Un-normalised support: w_i = sum over channels of h_c at the scaled
    projection of point c under particle i's pose.  Out-of-grid samples are
    zero and a particle with any point behind the camera scores zero."""
    if stack.n_channels != len(model):
        raise ValueError("stack channels must match model points")
    uv, valid = project_particles(pset.qs, pset.ts, model.points, k)
    n = np.array(cfg.n_map, dtype=np.float64)
    ps = cfg.s * uv + n * (1.0 - cfg.s) / 2.0
    raw = sample_each_channel(stack, ps).sum(axis=1)
    return np.where(valid, raw, 0.0)


def normalize_weights(raw: np.ndarray) -> np.ndarray:
    """Scale weights to sum to one; uniform fallback when all are zero."""
    raw = np.asarray(raw, dtype=np.float64)
    total = raw.sum()
    if total <= 0.0:
        return np.full(raw.shape[0], 1.0 / raw.shape[0])
    return raw / total


def weigh(
    pset: ParticleSet,
    stack: HeatmapStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
) -> ParticleSet:
    """Reweight particles by summed heatmap support of their projections."""
    weights = normalize_weights(raw_weights(pset, stack, model, k, cfg))
    return ParticleSet(pset.qs, pset.ts, weights, normalised=True)


def resample(pset: ParticleSet, step: int = 0, rng=None) -> ParticleSet:
    """Systematic resampling; count preserved, output weights uniform."""
    if not pset.normalised:
        raise ValueError("resample requires normalised weights")
    if rng is None:
        rng = substream(0, step)
    n = len(pset)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(pset.weights)
    cum[-1] = 1.0  # guard against round-off excluding the last slot
    idx = np.searchsorted(cum, positions, side="left")
    return ParticleSet(pset.qs[idx], pset.ts[idx], np.full(n, 1.0 / n), normalised=True)


def estimate(pset: ParticleSet) -> Pose:
    """Weighted-average pose: linear in t, sign-aligned quaternion mean."""
    if not pset.normalised:
        raise ValueError("estimate requires normalised weights")
    t = pset.weights @ pset.ts
    ref = pset.qs[int(np.argmax(pset.weights))]
    signs = np.where(pset.qs @ ref >= 0.0, 1.0, -1.0)
    qsum = (pset.weights * signs) @ pset.qs
    norm = np.linalg.norm(qsum)
    if norm < 1e-6:
        raise DegenerateRotation("weighted quaternion sum is near zero")
    return Pose(q=qsum / norm, t=t)


def step(
    pset: ParticleSet,
    stack: HeatmapStack,
    model: ObjectModel,
    k: CameraIntrinsics,
    cfg: ScaleConfig,
    m: MotionConfig,
    step_index: int = 0,
):
    """One filter step; returns (resampled set, pre-resample estimate)."""
    rng = substream(m.seed, step_index)
    moved = motion_update(pset, m, rng=rng)
    weighted = weigh(moved, stack, model, k, cfg)
    est = estimate(weighted)
    return resample(weighted, rng=rng), est


class ParticleFilterTracker:
    """Stateful convenience wrapper: feed stacks, get pose estimates."""

    def __init__(
        self,
        prior: Pose,
        model: ObjectModel,
        k: CameraIntrinsics,
        cfg: ScaleConfig,
        motion: MotionConfig,
        count: int = 500,
    ):
        self.model = model
        self.k = k
        self.cfg = cfg
        self.motion = motion
        self.particles = init_particles(prior, motion, count)
        self.step_index = 0

    def step(self, stack: HeatmapStack) -> Pose:
        self.particles, est = step(
            self.particles, stack, self.model, self.k, self.cfg, self.motion, self.step_index
        )
        self.step_index += 1
        return est
