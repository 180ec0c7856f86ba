"""Command-line entry point.

Subcommands: sweep, track (pf|opt), render, heatmap-info, pnp-check.
Every output-producing run writes a manifest (command, config, seed, out
directory, version, timestamp) before any work starts, so it can be
reproduced exactly.

Exit codes: 0 success, 1 runtime failure, 2 usage, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_scene, load_sweep_config
from .errors import ConfigError, OovtrackError
from .evaluation import (
    pose_errors,
    run_sweep,
    generate_views,
    write_aggregate_csv,
    write_plots,
    write_view_csv,
    write_views_json,
)
from .geometry import Pose, ScaleConfig, project, to_heatmap_space
from .heatmap import render_labels
from .optimizer import OptSettings, build_cost, optimise
from .particle_filter import MotionConfig, ParticleFilterTracker
from .pnp import Correspondences, solve_pnp
from .predictor import OraclePredictor, load_heatmaps, save_heatmaps


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int
    out: str
    version: str
    timestamp: str

    @classmethod
    def create(cls, command: str, config: str, seed, out: str) -> "RunManifest":
        return cls(
            command=command,
            config=str(config),
            seed=-1 if seed is None else int(seed),
            out=str(out),
            version=__version__,
            timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )

    def write(self) -> None:
        out = Path(self.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.json", "w") as f:
            json.dump(self.__dict__, f, indent=2)
            f.write("\n")


def _cmd_sweep(args) -> int:
    cfg = load_sweep_config(args.config, seed=args.seed)
    out = Path(args.out)
    RunManifest.create("sweep", args.config, cfg.seed, out).write()
    result = run_sweep(cfg, threads=args.threads)
    write_aggregate_csv(result, out / "results.csv")
    write_view_csv(result, out / "views.csv")
    write_views_json(cfg, generate_views(cfg), out / "views.json")
    write_plots(result, out)
    fails = sum(r["failed"] for r in result.view_rows)
    print(f"sweep: {cfg.views} views x {len(cfg.s_values)} scales, {fails} failed rows")
    print(f"results in {out}")
    return 0


def _cmd_track(args) -> int:
    scene, noise = load_scene(args.scene)
    out = Path(args.out)
    RunManifest.create(f"track:{args.mode}", args.scene, args.seed, out).write()
    if args.seed is not None:
        noise = replace(noise, seed=int(args.seed))
    predictor = OraclePredictor(scene, noise)
    motion = MotionConfig(sigma_t=args.sigma_t, sigma_r=np.radians(args.sigma_r_deg),
                          seed=noise.seed)
    rows = ["step,tx,ty,tz,qw,qx,qy,qz,translation_m,rotation_rad,reprojection_px"]
    overlays = []
    if args.mode == "pf":
        tracker = ParticleFilterTracker(
            prior=scene.pose, model=scene.model, k=scene.k, cfg=scene.cfg,
            motion=motion, count=args.particles,
        )
        estimates = []
        for step_i in range(args.steps):
            stack = predictor.predict(step_i)
            est = tracker.step(stack)
            estimates.append((step_i, est, stack))
    else:
        settings = OptSettings(blur_sigma=args.blur_sigma)
        est = scene.pose
        estimates = []
        for step_i in range(args.steps):
            stack = predictor.predict(step_i)
            cost = build_cost(stack, settings.blur_sigma)
            res = optimise(est, cost, scene.model, scene.k, scene.cfg, settings)
            est = res.pose
            estimates.append((step_i, est, stack))
    for step_i, est, stack in estimates:
        err = pose_errors(est, scene.pose, scene.model, scene.k)
        q, t = est.q, est.t
        rows.append(
            f"{step_i},{t[0]!r},{t[1]!r},{t[2]!r},{q[0]!r},{q[1]!r},{q[2]!r},{q[3]!r},"
            f"{err.translation_m!r},{err.rotation_rad!r},{err.reprojection_px!r}"
        )
        if args.overlay_every and step_i % args.overlay_every == 0:
            overlays.append((step_i, est, stack))
    with open(out / "traj.csv", "w", newline="") as f:
        f.write("\n".join(rows) + "\n")
    for step_i, est, stack in overlays:
        _write_overlay(out / f"overlay_{step_i:05d}.png", scene, est, stack)
    print(f"track[{args.mode}]: {args.steps} steps -> {out/'traj.csv'}")
    return 0


def _write_overlay(path, scene, est: Pose, stack) -> None:
    """Model projected under the estimated pose over the prediction image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    bg = stack.values.max(axis=0)
    gt_px = project(scene.model, scene.pose, scene.k)
    est_px = project(scene.model, est, scene.k)
    gt_hm = to_heatmap_space(gt_px, scene.cfg)
    est_hm = to_heatmap_space(est_px, scene.cfg)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.imshow(bg, cmap="gray", origin="upper")
    ax.scatter(gt_hm[:, 0], gt_hm[:, 1], s=45, facecolors="none", edgecolors="lime",
               label="ground truth")
    ax.scatter(est_hm[:, 0], est_hm[:, 1], s=18, c="red", marker="x", label="estimate")
    ax.legend(loc="lower right", fontsize=7)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _cmd_render(args) -> int:
    scene, _ = load_scene(args.scene)
    out = Path(args.out)
    RunManifest.create("render", args.scene, None, out).write()
    p_c = project(scene.model, scene.pose, scene.k)
    for s in args.s:
        cfg_s = ScaleConfig(s=s, n_img=scene.cfg.n_img, n_map=scene.cfg.n_map)
        p_s = to_heatmap_space(p_c, cfg_s)
        stack = render_labels(p_s, scene.label_sigma, cfg_s.n_map, scale=s)
        name = f"labels_s_{s:.6g}"
        save_heatmaps(stack, out / f"{name}.oovh")
        if not args.no_png:
            _write_stack_png(out / f"{name}.png", stack)
        in_grid = int(
            np.sum(
                (p_s[:, 0] >= 0) & (p_s[:, 0] <= cfg_s.n_map[0] - 1)
                & (p_s[:, 1] >= 0) & (p_s[:, 1] <= cfg_s.n_map[1] - 1)
            )
        )
        print(f"s={s:.6g}: {in_grid}/{len(scene.model)} points inside the heatmap")
    return 0


def _write_stack_png(path, stack) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.imshow(stack.values.max(axis=0), cmap="magma", origin="upper")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _cmd_heatmap_info(args) -> int:
    stack = load_heatmaps(args.file)
    v = stack.values
    print(
        f"channels={stack.n_channels} height={stack.height} width={stack.width} "
        f"s={stack.scale:.6g} min={v.min():.6g} max={v.max():.6g}"
    )
    return 0


def _cmd_pnp_check(args) -> int:
    from .evaluation import reference_scene

    rng = np.random.default_rng(args.seed)
    scene = reference_scene()
    worst_rot = worst_t = 0.0
    for _ in range(args.trials):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        from .geometry import quat_from_axis_angle, quat_multiply

        q = quat_multiply(quat_from_axis_angle(axis * rng.uniform(0, 0.6)), scene.pose.q)
        t = scene.pose.t + rng.normal(0, 0.1, 3)
        gt = Pose(q=q, t=t)
        px = project(scene.model, gt, scene.k)
        if args.noise_px > 0:
            px = px + rng.normal(0, args.noise_px, px.shape)
        est = solve_pnp(Correspondences(scene.model.points, px), scene.k)
        rot = 2 * np.arccos(np.clip(abs(est.q @ gt.q), -1, 1))
        worst_rot = max(worst_rot, rot)
        worst_t = max(worst_t, float(np.linalg.norm(est.t - gt.t)))
    print(
        f"pnp-check: {args.trials} scenes, noise {args.noise_px} px -> "
        f"max rotation error {worst_rot:.3g} rad, max translation error {worst_t:.3g} m"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oovtrack", description=__doc__)
    p.add_argument("--version", action="version", version=f"oovtrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run the robustness-vs-visibility sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=_cmd_sweep)

    tp = sub.add_parser("track", help="track a static synthetic scene")
    tp.add_argument("--mode", choices=("pf", "opt"), required=True)
    tp.add_argument("--scene", required=True)
    tp.add_argument("--steps", type=int, default=200)
    tp.add_argument("--out", required=True)
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--particles", type=int, default=500)
    tp.add_argument("--sigma-t", type=float, default=0.01)
    tp.add_argument("--sigma-r-deg", type=float, default=0.5)
    tp.add_argument("--blur-sigma", type=float, default=5.0)
    tp.add_argument("--overlay-every", type=int, default=50)
    tp.set_defaults(func=_cmd_track)

    rp = sub.add_parser("render", help="render ground-truth label stacks per scale")
    rp.add_argument("--scene", required=True)
    rp.add_argument("--s", type=float, nargs="+", default=[1.0, 0.5, 1.0 / 3.0, 0.25])
    rp.add_argument("--out", required=True)
    rp.add_argument("--no-png", action="store_true")
    rp.set_defaults(func=_cmd_render)

    hp = sub.add_parser("heatmap-info", help="print OOVH file header info")
    hp.add_argument("file")
    hp.set_defaults(func=_cmd_heatmap_info)

    np_ = sub.add_parser("pnp-check", help="PnP round-trip self test")
    np_.add_argument("--trials", type=int, default=100)
    np_.add_argument("--seed", type=int, default=0)
    np_.add_argument("--noise-px", type=float, default=0.0)
    np_.set_defaults(func=_cmd_pnp_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"oovtrack: config error: {exc}", file=sys.stderr)
        return 3
    except OovtrackError as exc:
        print(f"oovtrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"oovtrack: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
