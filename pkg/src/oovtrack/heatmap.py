"""Heatmap stacks: Gaussian label rendering, bilinear sampling, cost maps.

Heatmap values live in [0, 1] (one channel per model point, confidence of
that point's 2D location).  Cost maps are the per-channel normalised
negative-log transform used by the optimisation tracker; outside the grid
they take a finite per-channel ceiling so degenerate poses stay finite.

Storage is float32; sums are accumulated in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ChannelOutOfRange

# Gaussian support radius in sigmas for label rendering; the truncated tail
# is below exp(-32) ~ 1.3e-14, under the normalisation eps floor, so the
# rendered support is never what limits the optimiser's attraction basin.
RENDER_SUPPORT_SIGMAS = 8.0


def _frozen32(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HeatmapStack:
    """Per-point confidence maps, values in [0, 1], plus the scale that made them."""

    values: np.ndarray  # (n_channels, height, width) float32
    scale: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ValueError("values must have shape (channels, height, width)")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap values must be finite")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen32(v))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class CostStack:
    """Negative-log cost maps; ``oob_cost[c]`` is charged outside the grid."""

    values: np.ndarray  # (n_channels, height, width) float32, >= 0
    oob_cost: np.ndarray  # (n_channels,) float32
    scale: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values)
        oob = np.asarray(self.oob_cost)
        if v.ndim != 3 or oob.shape != (v.shape[0],):
            raise ValueError("values (c,h,w) and oob_cost (c,) required")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(oob))):
            raise ValueError("cost values must be finite")
        maxes = v.max(axis=(1, 2)) if v.size else np.zeros(v.shape[0])
        if np.any(oob < maxes - 1e-6):
            raise ValueError("oob_cost must dominate in-grid costs")
        object.__setattr__(self, "values", _frozen32(v))
        object.__setattr__(self, "oob_cost", _frozen32(oob))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def render_labels(
    points: np.ndarray,
    sigma: float,
    dims,
    amplitudes=None,
    scale: float = 1.0,
) -> HeatmapStack:
    """Render one Gaussian blob per point into a fresh stack.

    ``points`` are continuous heatmap-space coordinates (n, 2); ``dims`` is
    (width, height).  Channel i holds a * exp(-|x - p_i|^2 / (2 sigma^2));
    the default peak amplitude is 1.  Points far outside the grid produce
    (near-)empty channels.  Rendering writes only a +-8 sigma window per
    blob, which is exact to ~1.3e-14.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w, h = int(dims[0]), int(dims[1])
    n = pts.shape[0]
    amps = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=np.float64)
    out = np.zeros((n, h, w), dtype=np.float32)
    rad = int(math.ceil(RENDER_SUPPORT_SIGMAS * sigma)) + 1
    inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        if amps[i] == 0.0:
            continue
        px, py = pts[i]
        x0 = max(int(math.floor(px)) - rad, 0)
        x1 = min(int(math.ceil(px)) + rad + 1, w)
        y0 = max(int(math.floor(py)) - rad, 0)
        y1 = min(int(math.ceil(py)) + rad + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) - px
        ys = np.arange(y0, y1, dtype=np.float64) - py
        g = amps[i] * np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) * inv)
        out[i, y0:y1, x0:x1] = g
    return HeatmapStack(values=out, scale=scale)


def add_blobs(grid: np.ndarray, points: np.ndarray, sigma: float, amplitudes) -> None:
    """Accumulate Gaussian blobs into a writable (h, w) grid in place."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    amps = np.asarray(amplitudes, dtype=np.float64).ravel()
    h, w = grid.shape
    rad = int(math.ceil(RENDER_SUPPORT_SIGMAS * sigma)) + 1
    inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(pts.shape[0]):
        px, py = pts[i]
        x0 = max(int(math.floor(px)) - rad, 0)
        x1 = min(int(math.ceil(px)) + rad + 1, w)
        y0 = max(int(math.floor(py)) - rad, 0)
        y1 = min(int(math.ceil(py)) + rad + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) - px
        ys = np.arange(y0, y1, dtype=np.float64) - py
        g = amps[i] * np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) * inv)
        grid[y0:y1, x0:x1] += g.astype(np.float32)


def _gather_bilinear(values: np.ndarray, pts: np.ndarray, fill) -> np.ndarray:
    """Bilinear sample channel i of ``values`` (c,h,w) at pts[..., i, :].

    ``pts`` has shape (..., c, 2); the result has shape (..., c).  Points
    outside [0, w-1] x [0, h-1] return the per-channel ``fill`` value.
    """
    c, h, w = values.shape
    x = pts[..., 0]
    y = pts[..., 1]
    inside = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ci = np.arange(c).reshape((1,) * (pts.ndim - 2) + (c,))
    v00 = values[ci, y0, x0].astype(np.float64)
    v10 = values[ci, y0, x1].astype(np.float64)
    v01 = values[ci, y1, x0].astype(np.float64)
    v11 = values[ci, y1, x1].astype(np.float64)
    out = (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )
    return np.where(inside, out, fill)


def sample(stack: HeatmapStack, channel: int, p) -> float:
    """Bilinear heatmap value at a continuous point; 0.0 outside the grid."""
    if not (0 <= channel < stack.n_channels):
        raise ChannelOutOfRange(f"channel {channel} of {stack.n_channels}")
    pt = np.asarray(p, dtype=np.float64).reshape(1, 2)
    return float(_gather_bilinear(stack.values[channel : channel + 1], pt, 0.0)[0])


def sample_each_channel(stack: HeatmapStack, pts: np.ndarray) -> np.ndarray:
    """Sample channel i at pts[..., i, :] with zero fill; shape (..., c)."""
    return _gather_bilinear(stack.values, np.asarray(pts, dtype=np.float64), 0.0)


def sample_cost(cost: CostStack, channel: int, p) -> float:
    """Bilinear cost value; outside the grid returns oob_cost[channel]."""
    if not (0 <= channel < cost.n_channels):
        raise ChannelOutOfRange(f"channel {channel} of {cost.n_channels}")
    pt = np.asarray(p, dtype=np.float64).reshape(1, 2)
    fill = float(cost.oob_cost[channel])
    return float(_gather_bilinear(cost.values[channel : channel + 1], pt, fill)[0])


def sample_cost_each_channel(cost: CostStack, pts: np.ndarray) -> np.ndarray:
    return _gather_bilinear(
        cost.values, np.asarray(pts, dtype=np.float64), cost.oob_cost.astype(np.float64)
    )


def cost_value_grad(cost: CostStack, pts: np.ndarray):
    """Per-channel bilinear cost value and its (d/dx, d/dy) at pts (c, 2).

    Within a cell the bilinear surface is linear in each coordinate, so the
    gradient is exact; outside the grid the cost is the flat oob ceiling and
    the gradient is zero.
    """
    values = cost.values
    c, h, w = values.shape
    pts = np.asarray(pts, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1]
    inside = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ci = np.arange(c)
    v00 = values[ci, y0, x0].astype(np.float64)
    v10 = values[ci, y0, x1].astype(np.float64)
    v01 = values[ci, y1, x0].astype(np.float64)
    v11 = values[ci, y1, x1].astype(np.float64)
    val = (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )
    gx = (v10 - v00) * (1 - fy) + (v11 - v01) * fy
    gy = (v01 - v00) * (1 - fx) + (v11 - v10) * fx
    oob = cost.oob_cost.astype(np.float64)
    val = np.where(inside, val, oob)
    gx = np.where(inside, gx, 0.0)
    gy = np.where(inside, gy, 0.0)
    return val, gx, gy


def to_cost(stack: HeatmapStack, eps: float = 1e-8) -> CostStack:
    """Normalise each channel to unit mass, then apply the negative log.

    c(x) = -log((h(x) + eps) / S) with S = sum(h + eps); the eps floor keeps
    empty channels finite.  The out-of-grid cost is the in-grid maximum, so
    a projection that leaves the map is never cheaper than the worst cell.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = stack.values.astype(np.float64)
    n, h, w = v.shape
    sums = v.sum(axis=(1, 2)) + h * w * eps
    cost = np.log(sums)[:, None, None] - np.log(v + eps)
    oob = cost.max(axis=(1, 2))
    return CostStack(values=cost, oob_cost=oob, scale=stack.scale)


def smooth(stack: HeatmapStack, blur_sigma: float) -> HeatmapStack:
    """Per-channel Gaussian blur with reflective boundary; 0 is a no-op."""
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    if blur_sigma == 0:
        return stack
    out = np.empty_like(stack.values)
    for i in range(stack.n_channels):
        gaussian_filter(stack.values[i], sigma=blur_sigma, mode="reflect", output=out[i])
    # convolution with a unit-mass kernel cannot exceed the input maximum,
    # but guard against float round-off above 1.0
    np.clip(out, 0.0, 1.0, out=out)
    return HeatmapStack(values=out, scale=stack.scale)


def peaks(stack: HeatmapStack):
    """Per-channel argmax locations (n, 2) as (x, y) plus peak values (n,)."""
    n, h, w = stack.values.shape
    flat = stack.values.reshape(n, -1)
    idx = flat.argmax(axis=1)
    ys, xs = np.divmod(idx, w)
    vals = flat[np.arange(n), idx].astype(np.float64)
    return np.column_stack([xs, ys]).astype(np.float64), vals
