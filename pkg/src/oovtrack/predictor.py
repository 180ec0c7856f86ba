"""Heatmap producers: a synthetic oracle and an OOVH file reader.

The oracle renders noisy Gaussian heatmaps from a known scene and stands in
for a trained network, which keeps every downstream claim testable at desk
scale.  The file predictor reads stacks exported by the trainer through the
OOVH wire format.

Anything that implements ``predict(index) -> HeatmapStack`` can drive the
trackers; ``index`` identifies the frame/view and also derives the RNG
substream, so parallel runs reproduce regardless of scheduling.

RNG: numpy PCG64 (``np.random.default_rng``); substreams come from
``SeedSequence(entropy=seed, spawn_key=(index,))``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, OOVHFormatError, TruncatedFile, VersionMismatch
from .geometry import CameraIntrinsics, ObjectModel, Pose, ScaleConfig, project, to_heatmap_space
from .heatmap import HeatmapStack, add_blobs, render_labels

OOVH_MAGIC = b"OOVH"
OOVH_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth for synthetic experiments: object, pose, camera, scaling."""

    model: ObjectModel
    pose: Pose
    k: CameraIntrinsics
    cfg: ScaleConfig
    label_sigma: float = 5.0


@dataclass(frozen=True)
class NoiseConfig:
    """Prediction-error model for the oracle.

    jitter_sigma  px std applied to each heatmap-space point
    amp_range     (lo, hi) peak amplitude range, in (0, 1]
    dropout_prob  probability a channel comes out empty
    clutter_blobs spurious Gaussians added per channel
    clutter_amp   their peak amplitude
    """

    jitter_sigma: float = 0.0
    amp_range: tuple = (1.0, 1.0)
    dropout_prob: float = 0.0
    clutter_blobs: int = 0
    clutter_amp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.amp_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("amp_range must satisfy 0 < lo <= hi <= 1")
        if not (0.0 <= self.dropout_prob <= 1.0):
            raise ValueError("dropout_prob must be a probability")
        if self.jitter_sigma < 0 or self.clutter_blobs < 0 or self.clutter_amp < 0:
            raise ValueError("noise magnitudes must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        d = dict(d)
        if "amp_range" in d:
            d["amp_range"] = tuple(d["amp_range"])
        return cls(**d)


def substream(seed: int, index: int) -> np.random.Generator:
    """Deterministic RNG substream for (seed, index); schedule-independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def render_noisy(
    points_hm: np.ndarray,
    noise: NoiseConfig,
    sigma: float,
    dims,
    scale: float,
    rng: np.random.Generator,
) -> HeatmapStack:
    """Noisy Gaussian stack for given heatmap-space points.

    Draw order per call: jitters (n,2), amplitudes (n), dropout (n), then
    clutter positions (n, blobs, 2); changing it would change every seeded
    fixture downstream.
    """
    pts = np.atleast_2d(np.asarray(points_hm, dtype=np.float64))
    n = pts.shape[0]
    jit = rng.normal(0.0, noise.jitter_sigma, size=(n, 2)) if noise.jitter_sigma > 0 else np.zeros((n, 2))
    amps = rng.uniform(noise.amp_range[0], noise.amp_range[1], size=n)
    dropped = rng.random(n) < noise.dropout_prob
    amps = np.where(dropped, 0.0, amps)
    stack = render_labels(pts + jit, sigma, dims, amplitudes=amps, scale=scale)
    if noise.clutter_blobs > 0 and noise.clutter_amp > 0:
        w, h = int(dims[0]), int(dims[1])
        pos = rng.uniform(low=[0.0, 0.0], high=[w - 1.0, h - 1.0], size=(n, noise.clutter_blobs, 2))
        values = stack.values.copy()
        for i in range(n):
            add_blobs(values[i], pos[i], sigma, np.full(noise.clutter_blobs, noise.clutter_amp))
        np.clip(values, 0.0, 1.0, out=values)
        stack = HeatmapStack(values=values, scale=scale)
    return stack


def oracle_predict(scene: SceneTruth, noise: NoiseConfig, rng=None) -> HeatmapStack:
    """Render noisy heatmaps for a static scene (network stand-in).

    Deterministic for a given (scene, noise, seed); DepthError propagates if
    any model point sits behind the camera.
    """
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    p_c = project(scene.model, scene.pose, scene.k)
    p_s = to_heatmap_space(p_c, scene.cfg)
    return render_noisy(p_s, noise, scene.label_sigma, scene.cfg.n_map, scene.cfg.s, rng)


class OraclePredictor:
    """predict(index) renders the scene with noise from substream (seed, index)."""

    def __init__(self, scene: SceneTruth, noise: NoiseConfig):
        self.scene = scene
        self.noise = noise

    def predict(self, index: int = 0) -> HeatmapStack:
        return oracle_predict(self.scene, self.noise, substream(self.noise.seed, index))


class FilePredictor:
    """predict(index) loads ``pattern.format(index=...)`` from a directory."""

    def __init__(self, directory, pattern: str = "view_{index:05d}.oovh"):
        self.directory = Path(directory)
        self.pattern = pattern

    def path_for(self, index: int) -> Path:
        return self.directory / self.pattern.format(index=index)

    def predict(self, index: int) -> HeatmapStack:
        return load_heatmaps(self.path_for(index))


def save_heatmaps(stack: HeatmapStack, path) -> None:
    """Write a stack in the OOVH binary format (little-endian, f32)."""
    header = _HEADER.pack(
        OOVH_MAGIC, OOVH_VERSION, stack.n_channels, stack.height, stack.width, stack.scale
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(stack.values, dtype="<f4").tobytes())


def load_heatmaps(path) -> HeatmapStack:
    """Read an OOVH file; validates magic, version and payload length."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    if raw[:4] != OOVH_MAGIC:
        raise BadMagic(f"{path}: magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    _, version, n, h, w, s = _HEADER.unpack_from(raw)
    if version != OOVH_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {OOVH_VERSION}")
    if n == 0 or h == 0 or w == 0:
        raise OOVHFormatError(f"{path}: empty dimensions {(n, h, w)}")
    expected = _HEADER.size + 4 * n * h * w
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise OOVHFormatError(f"{path}: {len(raw) - expected} trailing bytes")
    values = np.frombuffer(raw, dtype="<f4", count=n * h * w, offset=_HEADER.size)
    return HeatmapStack(values=values.reshape(n, h, w), scale=float(s))
