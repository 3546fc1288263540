"""Command-line entry points: simulate, register, track, rod-template, evaluate, run-experiment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as nav_io
from .errors import SpineNavError
from .evaluation import (
    BatchReport,
    evaluate_trial,
    load_config,
    plans_from_dicts,
    plans_to_dicts,
    run_experiment,
    _registration_dict,
)
from .geometry import PointCloud, Ray, RigidTransform
from .navigation import build_rod_template, catmull_rom_centripetal, screw_head_capture
from .phantom import PhantomParams, PhantomSpec, generate_phantom
from .registration import RegistrationConfig, RegistrationResult, register
from .simulation import DigitizationSim, digitization_time_s, simulate_digitization
from .tracking import (
    CameraModel,
    CornerFilterState,
    CornerObservation,
    KalmanConfig,
    MarkerGeometry,
    StereoRig,
    estimate_marker_pose,
    kalman_update,
)


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    params = PhantomParams(**cfg.get("phantom", {}))
    digit_cfg = dict(cfg.get("digitization", {}))
    if "strokes" in digit_cfg and digit_cfg["strokes"] is not None:
        digit_cfg["strokes"] = tuple(digit_cfg["strokes"])
    digit_cfg.setdefault("seed", seed + 1)

    spec = generate_phantom(seed, params)
    sim = DigitizationSim(**digit_cfg)
    intra = simulate_digitization(spec, sim)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nav_io.write_ply_mesh(spec.mesh, out / "mesh.ply")
    nav_io.write_ply_cloud(spec.preoperative_cloud(), out / "pre_cloud.ply")
    nav_io.write_ply_cloud(intra, out / "intra.ply")
    nav_io.write_json(plans_to_dicts(spec.plans), out / "plans.json")
    nav_io.write_transform(spec.ground_truth_pose, out / "ground_truth.json")
    nav_io.write_json(
        {k: [int(i) for i in v] for k, v in spec.regions.items()}, out / "regions.json"
    )
    nav_io.write_json(
        {
            "seed": seed,
            "n_points": len(intra),
            "digitization_time_s": digitization_time_s(len(intra), sim),
        },
        out / "simulate_summary.json",
    )
    print(f"wrote phantom and digitization artifacts to {out}")
    return 0


def _cmd_register(args) -> int:
    intra = nav_io.read_ply_cloud(args.intra)
    pre = nav_io.read_ply_cloud(args.pre)
    cfg = RegistrationConfig(**(nav_io.read_json(args.config) if args.config else {}))
    result = register(intra, pre, _parse_vector(args.approach), cfg)
    payload = _registration_dict(result)
    if args.out:
        nav_io.write_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _load_rig(path) -> StereoRig:
    raw = nav_io.read_json(path)

    def cam(d) -> CameraModel:
        return CameraModel(
            fx=d["fx"],
            fy=d["fy"],
            cx=d["cx"],
            cy=d["cy"],
            image_width=d["image_width"],
            image_height=d["image_height"],
            cam_to_rig=nav_io.transform_from_dict(d["cam_to_rig"]),
        )

    return StereoRig(left=cam(raw["left"]), right=cam(raw["right"]))


def _cmd_track(args) -> int:
    rig = _load_rig(args.rig)
    marker_cfg = nav_io.read_json(args.marker)
    geom = MarkerGeometry.square(marker_cfg["side_length_mm"])
    kalman_cfg = KalmanConfig(**marker_cfg.get("kalman", {}))

    records = nav_io.read_observations_csv(args.obs)
    frames: dict[float, dict] = {}
    for rec in records:
        frames.setdefault(rec.timestamp_s, {})[(rec.camera, rec.corner_id)] = rec

    filters: dict[tuple[str, int], CornerFilterState] = {}
    lines = []
    for ts in sorted(frames):
        frame = frames[ts]
        if len(frame) != 8:
            continue  # incomplete stereo frame
        pixels = {"L": np.zeros((4, 2)), "R": np.zeros((4, 2))}
        for (camera, corner_id), rec in frame.items():
            obs = CornerObservation(corner_id, (rec.u_px, rec.v_px), ts)
            key = (camera, corner_id)
            if key not in filters:
                filters[key] = CornerFilterState.from_first_observation(obs, kalman_cfg)
            else:
                filters[key] = kalman_update(filters[key], obs, kalman_cfg)
            pixels[camera][corner_id - 1] = filters[key].position
        pose = estimate_marker_pose(rig, pixels["L"], pixels["R"], geom)
        lines.append(
            json.dumps(
                {
                    "timestamp_s": ts,
                    "pose": nav_io.transform_to_dict(pose.pose),
                    "reprojection_rmse_px": pose.reprojection_rmse,
                    "triangulation_gaps_mm": [float(g) for g in pose.triangulation_gaps],
                },
                sort_keys=True,
            )
        )
    output = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(output)
    else:
        sys.stdout.write(output)
    return 0


def _cmd_rod_template(args) -> int:
    heads = []
    for line in Path(args.heads).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.lower().startswith("x"):
            continue
        heads.append([float(v) for v in line.replace(",", " ").split()])
    captured = screw_head_capture(np.asarray(heads), args.min_separation)
    template = build_rod_template(captured, args.tolerance)
    ts = np.linspace(0.0, 1.0, args.samples)
    polyline = catmull_rom_centripetal(template.control_points, ts)
    payload = {
        "control_points_mm": [[float(v) for v in p] for p in template.control_points],
        "knots": [float(v) for v in template.knots],
        "polyline_mm": [[float(v) for v in p] for p in polyline],
        "estimated_length_mm": template.estimated_length,
    }
    if args.out:
        nav_io.write_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    mesh = nav_io.read_ply_mesh(args.mesh)
    plans = plans_from_dicts(nav_io.read_json(args.plans))
    spec = PhantomSpec(
        mesh=mesh, regions={}, ground_truth_pose=RigidTransform.identity(), plans=plans
    )

    executed = []
    for item in nav_io.read_json(args.executed):
        if "ray" in item:
            executed.append(
                Ray(np.asarray(item["ray"]["origin_mm"]), np.asarray(item["ray"]["direction"]))
            )
        elif "points_ply" in item:
            executed.append(nav_io.read_ply_cloud(Path(args.executed).parent / item["points_ply"]))
        else:
            raise SpineNavError(f"executed entry needs 'ray' or 'points_ply': {item}")

    reg_raw = nav_io.read_json(args.registration)
    reg = RegistrationResult(
        transform=nav_io.transform_from_dict(reg_raw["transform"]),
        final_rmse=reg_raw["final_rmse_mm"],
        chosen_configuration=reg_raw["chosen_configuration"],
        configuration_rmses=tuple(reg_raw["configuration_rmses_mm"]),
        iterations=tuple(reg_raw["iterations"]),
        rmse_histories=tuple(reg_raw.get("rmse_histories", [[], []])),
        warnings=list(reg_raw.get("warnings", [])),
    )
    report = evaluate_trial(
        spec, executed, reg, n_points=args.n_points, digitization_time=args.digitization_time
    )
    payload = report.to_dict()
    if args.out:
        nav_io.write_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    if args.text:
        print(BatchReport(trials=[report]).text_table())
    return 0


def _cmd_run_experiment(args) -> int:
    report = run_experiment(args.config, args.out)
    print(report.text_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinenav", description="Surgical navigation geometry toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a phantom and simulated digitization")
    p.add_argument("--config", required=True, help="experiment config (JSON or TOML)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("register", help="register a digitized cloud to a model cloud")
    p.add_argument("--intra", required=True, help="digitized cloud (PLY)")
    p.add_argument("--pre", required=True, help="model cloud with normals (PLY)")
    p.add_argument("--approach", default="0,0,-1", help="approach direction, e.g. 0,0,-1")
    p.add_argument("--config", default=None, help="RegistrationConfig overrides (JSON)")
    p.add_argument("--out", default=None, help="result JSON path (default: stdout)")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("track", help="estimate marker poses from an observation stream")
    p.add_argument("--rig", required=True, help="stereo rig calibration (JSON)")
    p.add_argument("--obs", required=True, help="corner observation stream (CSV)")
    p.add_argument("--marker", required=True, help="marker description (JSON)")
    p.add_argument("--out", default=None, help="output JSONL path (default: stdout)")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("rod-template", help="spline template through captured screw heads")
    p.add_argument("--heads", required=True, help="head positions CSV (x,y,z mm per row)")
    p.add_argument("--tolerance", type=float, default=0.1, help="arc length tolerance (mm)")
    p.add_argument("--min-separation", type=float, default=5.0, help="capture spacing gate (mm)")
    p.add_argument("--samples", type=int, default=100, help="polyline sample count")
    p.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    p.set_defaults(func=_cmd_rod_template)

    p = sub.add_parser("evaluate", help="quantify executed trajectories against plans")
    p.add_argument("--mesh", required=True, help="preoperative model mesh (PLY)")
    p.add_argument("--plans", required=True, help="screw plans (JSON)")
    p.add_argument("--executed", required=True, help="executed trajectories (JSON)")
    p.add_argument("--registration", required=True, help="registration result (JSON)")
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--digitization-time", type=float, default=None)
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    p.add_argument("--text", action="store_true", help="also print the text table")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run-experiment", help="full seeded generate/register/evaluate batch")
    p.add_argument("--config", required=True, help="experiment config (JSON or TOML)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_run_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpineNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
