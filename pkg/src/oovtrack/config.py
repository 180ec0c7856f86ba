"""JSON configuration loading for scenes and sweeps.

A scene file bundles the object model, camera intrinsics, ground-truth
pose, scaling config and oracle noise; model/camera may be inlined or
referenced by path (relative to the scene file).  See README for the
schemas.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluation import SweepConfig, TransformRanges
from .geometry import CameraIntrinsics, ObjectModel, Pose, ScaleConfig
from .optimizer import OptSettings
from .predictor import NoiseConfig, SceneTruth


def _load_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _sub_document(entry, base: Path, what: str) -> dict:
    if isinstance(entry, str):
        return _load_json(base / entry)
    if isinstance(entry, dict):
        return entry
    raise ConfigError(f"{what} must be an object or a file path")


def load_model(doc: dict) -> ObjectModel:
    try:
        names = tuple(p["name"] for p in doc["points"])
        pts = np.array([p["xyz"] for p in doc["points"]], dtype=np.float64)
        return ObjectModel(names=names, points=pts)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model document: {exc}") from exc


def load_camera(doc: dict) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(fx=doc["fx"], fy=doc["fy"], cx=doc["cx"], cy=doc["cy"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad camera document: {exc}") from exc


def load_scene(path) -> tuple:
    """Returns (SceneTruth, NoiseConfig) from a scene file."""
    path = Path(path)
    doc = _load_json(path)
    base = path.parent
    try:
        model = load_model(_sub_document(doc["model"], base, "model"))
        k = load_camera(_sub_document(doc["camera"], base, "camera"))
        pose = Pose(q=np.array(doc["pose"]["q"]), t=np.array(doc["pose"]["t"]))
        sc = doc.get("scale", {})
        cfg = ScaleConfig(
            s=sc.get("s", 1.0),
            n_img=tuple(sc.get("n_img", (256, 256))),
            n_map=tuple(sc["n_map"]) if "n_map" in sc else None,
        )
        scene = SceneTruth(
            model=model, pose=pose, k=k, cfg=cfg,
            label_sigma=float(doc.get("label_sigma", 5.0)),
        )
        noise = NoiseConfig.from_dict(doc.get("noise", {}))
        return scene, noise
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad scene document ({exc})") from exc


def load_sweep_config(path, seed=None) -> SweepConfig:
    path = Path(path)
    doc = _load_json(path)
    base = path.parent
    try:
        scene_entry = doc["scene"]
        if isinstance(scene_entry, str):
            scene, noise = load_scene(base / scene_entry)
        else:
            tmp = dict(scene_entry)
            model = load_model(_sub_document(tmp["model"], base, "model"))
            k = load_camera(_sub_document(tmp["camera"], base, "camera"))
            pose = Pose(q=np.array(tmp["pose"]["q"]), t=np.array(tmp["pose"]["t"]))
            sc = tmp.get("scale", {})
            cfg = ScaleConfig(
                s=sc.get("s", 1.0),
                n_img=tuple(sc.get("n_img", (256, 256))),
                n_map=tuple(sc["n_map"]) if "n_map" in sc else None,
            )
            scene = SceneTruth(
                model=model, pose=pose, k=k, cfg=cfg,
                label_sigma=float(tmp.get("label_sigma", 5.0)),
            )
            noise = NoiseConfig.from_dict(tmp.get("noise", {}))
        if "noise" in doc:
            noise = NoiseConfig.from_dict(doc["noise"])
        kwargs = {
            "scene": scene,
            "noise": noise,
            "s_values": tuple(doc.get("s_values", (1.0, 0.5, 1.0 / 3.0, 0.25))),
            "views": int(doc.get("views", 2500)),
            "seed": int(doc["seed"] if seed is None else seed) if ("seed" in doc or seed is not None) else 0,
            "visibility_floor": float(doc.get("visibility_floor", 0.3)),
            "bucket_width": float(doc.get("bucket_width", 0.1)),
            "blur_sigma": float(doc.get("blur_sigma", 5.0)),
        }
        if "transform_ranges" in doc:
            kwargs["ranges"] = TransformRanges.from_dict(doc["transform_ranges"])
        if "init_rot_deg" in doc:
            kwargs["init_rot"] = float(np.radians(doc["init_rot_deg"]))
        if "init_trans_m" in doc:
            kwargs["init_trans"] = float(doc["init_trans_m"])
        if "opt" in doc:
            kwargs["opt"] = OptSettings.from_dict(doc["opt"])
        pred = doc.get("predictor", {"mode": "oracle"})
        kwargs["predictor_mode"] = pred.get("mode", "oracle")
        if kwargs["predictor_mode"] == "files":
            kwargs["files_dir"] = str(base / pred["dir"])
        return SweepConfig(**kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad sweep config ({exc})") from exc
