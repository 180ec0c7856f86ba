"""Synthetic robustness-vs-visibility evaluation.

Views are random affine transforms of a reference scene's projections,
cropped to a fixed frame; the fraction of the feature-point convex hull
left inside the frame measures how much of the object is visible.  For
each view and each label scale the pipeline predicts heatmaps, pulls the
channel peaks back through the inverse transform into the original camera
frame, re-renders them as a cost landscape and recovers the pose with the
gradient-descent tracker.  Errors are grouped by visibility rounded to the
nearest bucket and summarised by medians.

Per-view work is pure and seeded independently, so results do not depend
on the worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateHull, OovtrackError
from .geometry import (
    Affine2,
    CameraIntrinsics,
    ObjectModel,
    Pose,
    ScaleConfig,
    apply_affine,
    from_heatmap_space,
    invert_affine,
    project,
    quat_from_axis_angle,
    quat_multiply,
    to_heatmap_space,
)
from .heatmap import peaks, render_labels, to_cost
from .optimizer import OptSettings, optimise
from .predictor import FilePredictor, NoiseConfig, SceneTruth, render_noisy

METRICS = ("translation_m", "rotation_rad", "reprojection_px")


# ---------------------------------------------------------------------------
# convex hull, clipping, visibility


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns hull vertices in counter-clockwise
    order (in the usual math orientation of the coordinate values)."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.shape[0] < 3:
        raise DegenerateHull("need at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise DegenerateHull("points are collinear")
    return hull


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area (absolute)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon_rect(poly: np.ndarray, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to [0,w] x [0,h]."""
    def clip_edge(vertices, inside, intersect):
        out = []
        n = len(vertices)
        for i in range(n):
            cur, nxt = vertices[i], vertices[(i + 1) % n]
            cin, nin = inside(cur), inside(nxt)
            if cin:
                out.append(cur)
                if not nin:
                    out.append(intersect(cur, nxt))
            elif nin:
                out.append(intersect(cur, nxt))
        return out

    def x_cut(a, b, x):
        t = (x - a[0]) / (b[0] - a[0])
        return (x, a[1] + t * (b[1] - a[1]))

    def y_cut(a, b, y):
        t = (y - a[1]) / (b[1] - a[1])
        return (a[0] + t * (b[0] - a[0]), y)

    verts = [tuple(p) for p in np.asarray(poly, dtype=np.float64)]
    for inside, intersect in (
        (lambda p: p[0] >= 0.0, lambda a, b: x_cut(a, b, 0.0)),
        (lambda p: p[0] <= width, lambda a, b: x_cut(a, b, width)),
        (lambda p: p[1] >= 0.0, lambda a, b: y_cut(a, b, 0.0)),
        (lambda p: p[1] <= height, lambda a, b: y_cut(a, b, height)),
    ):
        verts = clip_edge(verts, inside, intersect)
        if not verts:
            return np.zeros((0, 2))
    return np.array(verts)


def visibility_fraction(points: np.ndarray, dims) -> float:
    """Hull-area fraction inside the image rectangle [0,w] x [0,h]."""
    hull = convex_hull(points)
    total = polygon_area(hull)
    if total <= 0.0:
        raise DegenerateHull("hull has zero area")
    clipped = clip_polygon_rect(hull, float(dims[0]), float(dims[1]))
    frac = polygon_area(clipped) / total
    return float(min(max(frac, 0.0), 1.0))


# ---------------------------------------------------------------------------
# views and error metrics


@dataclass(frozen=True)
class TransformRanges:
    """Uniform sampling ranges for the random view transforms."""

    rotation: float = np.pi / 6  # radians, +- about the frame centre
    scale: tuple = (0.7, 1.6)
    translation: tuple = (150.0, 150.0)  # px, +- per axis

    def __post_init__(self):
        lo, hi = self.scale
        if not (0 < lo <= hi):
            raise ValueError("scale range must be positive and ordered")
        if self.rotation < 0 or min(self.translation) < 0:
            raise ValueError("ranges must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRanges":
        d = dict(d)
        if "rotation_deg" in d:
            d["rotation"] = float(np.radians(d.pop("rotation_deg")))
        if "scale" in d:
            d["scale"] = tuple(d["scale"])
        if "translation" in d:
            d["translation"] = tuple(d["translation"])
        return cls(**d)


@dataclass(frozen=True)
class View:
    """One synthetic evaluation sample."""

    index: int
    transform: Affine2
    dims: tuple
    gt_pose: Pose
    visibility: float
    seed: int


@dataclass(frozen=True)
class ErrorTriple:
    translation_m: float
    rotation_rad: float
    reprojection_px: float

    def metric(self, name: str) -> float:
        return getattr(self, name)


def pose_errors(est: Pose, gt: Pose, model: ObjectModel, k: CameraIntrinsics) -> ErrorTriple:
    """Translation, absolute rotation, and RMS reprojection differences."""
    dt = float(np.linalg.norm(est.t - gt.t))
    dot = float(np.clip(abs(est.q @ gt.q), -1.0, 1.0))
    rot = 2.0 * float(np.arccos(dot))
    d = project(model, est, k) - project(model, gt, k)
    rep = float(np.sqrt(np.mean(np.sum(d**2, axis=1))))
    return ErrorTriple(dt, rot, rep)


def generate_view(
    scene: SceneTruth,
    ranges: TransformRanges,
    rng: np.random.Generator,
    index: int = 0,
    seed: int = 0,
    visibility_floor: float = 0.3,
    max_attempts: int = 500,
) -> View:
    """Sample a random affine view with visibility above the floor.

    Transforms that push the hull below the floor are rejected and
    resampled from the same stream, so the accepted view is a deterministic
    function of the stream state.
    """
    dims = scene.cfg.n_img
    p_c = project(scene.model, scene.pose, scene.k)
    center = (dims[0] / 2.0, dims[1] / 2.0)
    for _ in range(max_attempts):
        angle = rng.uniform(-ranges.rotation, ranges.rotation)
        scale = rng.uniform(ranges.scale[0], ranges.scale[1])
        tx = rng.uniform(-ranges.translation[0], ranges.translation[0])
        ty = rng.uniform(-ranges.translation[1], ranges.translation[1])
        t = Affine2.from_params(angle=angle, scale=scale, translation=(tx, ty), center=center)
        vis = visibility_fraction(apply_affine(p_c, t), dims)
        if vis >= visibility_floor:
            return View(
                index=index, transform=t, dims=dims, gt_pose=scene.pose,
                visibility=vis, seed=seed,
            )
    raise ConfigError(f"no view above visibility {visibility_floor} in {max_attempts} draws")


# ---------------------------------------------------------------------------
# the sweep


@dataclass(frozen=True)
class SweepConfig:
    scene: SceneTruth
    s_values: tuple = (1.0, 0.5, 1.0 / 3.0, 0.25)
    views: int = 2500
    seed: int = 0
    noise: NoiseConfig = NoiseConfig()
    ranges: TransformRanges = TransformRanges()
    visibility_floor: float = 0.3
    bucket_width: float = 0.1
    blur_sigma: float = 5.0
    init_rot: float = float(np.radians(1.5))
    init_trans: float = 0.03
    opt: OptSettings = OptSettings(max_iters=150)
    predictor_mode: str = "oracle"  # or "files"
    files_dir: str = ""

    def __post_init__(self):
        if self.views < 1:
            raise ValueError("views must be >= 1")
        n_buckets = 1.0 / self.bucket_width
        if abs(n_buckets - round(n_buckets)) > 1e-9:
            raise ValueError("bucket width must divide 1.0")
        if self.predictor_mode not in ("oracle", "files"):
            raise ValueError("predictor_mode must be 'oracle' or 'files'")
        if self.predictor_mode == "files" and not self.files_dir:
            raise ValueError("files mode needs files_dir")


def s_dir_name(s: float) -> str:
    return f"s_{s:.6g}"


def bucket_of(visibility: float, width: float) -> float:
    """Round half-up to the nearest bucket.

    The quotient is snapped at 1e-9 first so values like 0.95/0.1, which
    float arithmetic puts a hair below the true half, still round up.
    """
    return float(np.floor(round(visibility / width, 9) + 0.5)) * width


def perturbed_pose(pose: Pose, rot: float, trans: float, rng: np.random.Generator) -> Pose:
    """Rotate by a fixed angle about a random axis and shift by a fixed
    distance in a random direction; the sweep's optimiser initialisation."""
    axis = rng.normal(size=3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    direction = rng.normal(size=3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    dq = quat_from_axis_angle(axis * rot)
    return Pose(q=quat_multiply(dq, pose.q), t=pose.t + direction * trans)


def _recover_pose_from_stack(stack, view: View, cfg_s: ScaleConfig, sweep: SweepConfig, rng):
    """Peaks -> inverse transform -> re-rendered cost -> optimiser."""
    scene = sweep.scene
    pk, amps = peaks(stack)
    inv = invert_affine(view.transform)
    p_c_est = apply_affine(from_heatmap_space(pk, cfg_s), inv)
    q_s = to_heatmap_space(p_c_est, cfg_s)
    # a Gaussian blob blurred by sigma_b is the wider Gaussian; rendering it
    # directly avoids a full-grid convolution per view
    sig = scene.label_sigma
    sig_eff = float(np.sqrt(sig**2 + sweep.blur_sigma**2))
    amp_scale = sig**2 / sig_eff**2
    est_stack = render_labels(
        q_s, sig_eff, cfg_s.n_map, amplitudes=amps * amp_scale, scale=cfg_s.s
    )
    cost = to_cost(est_stack)
    init = perturbed_pose(view.gt_pose, sweep.init_rot, sweep.init_trans, rng)
    result = optimise(init, cost, scene.model, scene.k, cfg_s, sweep.opt)
    return result


def _eval_view(sweep: SweepConfig, index: int) -> list:
    """All per-s rows for one view; independent of scheduling."""
    scene = sweep.scene
    view_rng = np.random.default_rng(np.random.SeedSequence(entropy=sweep.seed, spawn_key=(index,)))
    view = generate_view(
        scene, sweep.ranges, view_rng, index=index, seed=sweep.seed,
        visibility_floor=sweep.visibility_floor,
    )
    p_c = project(scene.model, scene.pose, scene.k)
    view_pts = apply_affine(p_c, view.transform)
    rows = []
    for s_idx, s in enumerate(sweep.s_values):
        cfg_s = ScaleConfig(s=s, n_img=scene.cfg.n_img, n_map=scene.cfg.n_map)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=sweep.seed, spawn_key=(index, s_idx))
        )
        row = {
            "view": index,
            "s": s,
            "visibility": view.visibility,
            "bucket": bucket_of(view.visibility, sweep.bucket_width),
            "status": "",
            "failed": False,
            "error": "",
        }
        try:
            if sweep.predictor_mode == "oracle":
                p_s = to_heatmap_space(view_pts, cfg_s)
                stack = render_noisy(
                    p_s, sweep.noise, scene.label_sigma, cfg_s.n_map, s, rng
                )
            else:
                fp = FilePredictor(f"{sweep.files_dir}/{s_dir_name(s)}")
                stack = fp.predict(index)
                if stack.n_channels != len(scene.model):
                    raise ConfigError(
                        f"{fp.path_for(index)}: {stack.n_channels} channels for "
                        f"{len(scene.model)}-point model"
                    )
                if abs(stack.scale - s) > 1e-6:
                    raise ConfigError(f"{fp.path_for(index)}: scale {stack.scale} != {s}")
            result = _recover_pose_from_stack(stack, view, cfg_s, sweep, rng)
            err = pose_errors(result.pose, view.gt_pose, scene.model, scene.k)
            row["status"] = result.status.value
            for m in METRICS:
                row[m] = err.metric(m)
        except (OovtrackError, OSError) as exc:
            row["failed"] = True
            row["error"] = f"{type(exc).__name__}: {exc}"
            for m in METRICS:
                row[m] = float("nan")
        rows.append(row)
    return rows


@dataclass
class SweepResult:
    config: SweepConfig
    view_rows: list
    aggregates: list = field(default_factory=list)

    def aggregate(self) -> list:
        """Median per (s, bucket, metric) over non-failed rows."""
        groups = {}
        for row in self.view_rows:
            groups.setdefault((row["s"], row["bucket"]), []).append(row)
        out = []
        for s in self.config.s_values:
            buckets = sorted({b for (ss, b) in groups if ss == s})
            for b in buckets:
                rows = groups[(s, b)]
                ok = [r for r in rows if not r["failed"]]
                for m in METRICS:
                    med = float(np.median([r[m] for r in ok])) if ok else float("nan")
                    out.append(
                        {
                            "s": s,
                            "bucket": b,
                            "metric": m,
                            "median": med,
                            "count": len(rows),
                            "failures": len(rows) - len(ok),
                        }
                    )
        self.aggregates = out
        return out

    def median_for(self, s: float, bucket: float, metric: str) -> float:
        for a in self.aggregates:
            if abs(a["s"] - s) < 1e-9 and abs(a["bucket"] - bucket) < 1e-9 and a["metric"] == metric:
                return a["median"]
        return float("nan")

    def failure_fraction(self) -> float:
        n = len(self.view_rows)
        return sum(r["failed"] for r in self.view_rows) / max(n, 1)


def run_sweep(cfg: SweepConfig, threads: int = 1) -> SweepResult:
    """Evaluate every (view, s) pair; deterministic for a fixed seed."""
    indices = range(cfg.views)
    if threads <= 1:
        per_view = [_eval_view(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, cfg.views // (8 * threads))
            per_view = list(pool.map(_eval_view_task, [(cfg, i) for i in indices], chunksize=chunk))
    rows = [row for group in per_view for row in group]
    result = SweepResult(config=cfg, view_rows=rows)
    result.aggregate()
    return result


def _eval_view_task(args) -> list:
    return _eval_view(*args)


def generate_views(cfg: SweepConfig) -> list:
    """The sweep's views alone (no prediction); the trainer-facing contract."""
    out = []
    for index in range(cfg.views):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(index,)))
        out.append(
            generate_view(
                cfg.scene, cfg.ranges, rng, index=index, seed=cfg.seed,
                visibility_floor=cfg.visibility_floor,
            )
        )
    return out


# ---------------------------------------------------------------------------
# output writers


def _fmt(x: float) -> str:
    return repr(float(x))


def write_aggregate_csv(result: SweepResult, path) -> None:
    lines = ["s,visibility_bucket,metric,median,count,failures"]
    for a in result.aggregates:
        lines.append(
            f"{a['s']:.6g},{a['bucket']:.1f},{a['metric']},{_fmt(a['median'])},"
            f"{a['count']},{a['failures']}"
        )
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def write_view_csv(result: SweepResult, path) -> None:
    cols = ["view", "s", "visibility", "bucket", *METRICS, "status", "failed", "error"]
    lines = [",".join(cols)]
    for r in result.view_rows:
        vals = [
            str(r["view"]), f"{r['s']:.6g}", _fmt(r["visibility"]), f"{r['bucket']:.1f}",
            *[_fmt(r[m]) for m in METRICS],
            r["status"], str(int(r["failed"])), r["error"].replace(",", ";"),
        ]
        lines.append(",".join(vals))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def write_views_json(cfg: SweepConfig, views: list, path) -> None:
    """Per-view geometry for external heatmap producers (file mode)."""
    scene = cfg.scene
    p_c = project(scene.model, scene.pose, scene.k)
    doc = {
        "dims": list(scene.cfg.n_img),
        "map_dims": list(scene.cfg.n_map),
        "s_values": [float(s) for s in cfg.s_values],
        "label_sigma": scene.label_sigma,
        "point_names": list(scene.model.names),
        "views": [],
    }
    for v in views:
        view_pts = apply_affine(p_c, v.transform)
        doc["views"].append(
            {
                "index": v.index,
                "transform": [list(map(float, row)) for row in v.transform.m],
                "visibility": v.visibility,
                "gt_pose": {"q": [float(x) for x in v.gt_pose.q], "t": [float(x) for x in v.gt_pose.t]},
                "gt_points_view": [[float(a), float(b)] for a, b in view_pts],
            }
        )
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def write_plots(result: SweepResult, out_dir) -> list:
    """One PNG per metric: median error vs visibility bucket, a line per s."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    labels = {
        "translation_m": "median translation error (m)",
        "rotation_rad": "median rotation error (rad)",
        "reprojection_px": "median reprojection error (px)",
    }
    for m in METRICS:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        for s in result.config.s_values:
            pts = sorted(
                (a["bucket"], a["median"])
                for a in result.aggregates
                if a["metric"] == m and abs(a["s"] - s) < 1e-9 and np.isfinite(a["median"])
            )
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"s={s:.3g}")
        ax.set_xlabel("visible fraction of the object")
        ax.set_ylabel(labels[m])
        ax.invert_xaxis()
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = f"{out_dir}/{m}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# reference scene


def reference_model() -> ObjectModel:
    """10 well-spread, non-coplanar feature points (metres)."""
    pts = np.array(
        [
            [-0.25, -0.18, -0.12],
            [0.25, -0.18, -0.12],
            [0.25, 0.18, -0.12],
            [-0.25, 0.18, -0.12],
            [-0.25, -0.18, 0.12],
            [0.25, -0.18, 0.12],
            [0.25, 0.18, 0.12],
            [-0.25, 0.18, 0.12],
            [0.0, -0.27, 0.03],
            [0.07, 0.26, -0.04],
        ]
    )
    names = tuple(f"p{i}" for i in range(len(pts)))
    return ObjectModel(names=names, points=pts)


def reference_scene(s: float = 0.5, dims=(256, 256), label_sigma: float = 5.0) -> SceneTruth:
    """The repo's canonical synthetic scene for tests and demos."""
    model = reference_model()
    k = CameraIntrinsics(fx=320.0, fy=320.0, cx=dims[0] / 2.0, cy=dims[1] / 2.0)
    q = quat_from_axis_angle(0.35 * np.array([0.29, 0.92, 0.27]))
    pose = Pose(q=q, t=np.array([0.02, -0.01, 2.0]))
    cfg = ScaleConfig(s=s, n_img=dims, n_map=dims)
    return SceneTruth(model=model, pose=pose, k=k, cfg=cfg, label_sigma=label_sigma)
