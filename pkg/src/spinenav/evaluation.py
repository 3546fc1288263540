"""Trial quantification and the end-to-end seeded experiment runner.

Executed trajectories are quantified against the plan the way a postoperative
CT evaluation would: fit an axis to the wire sample, measure the 3D angle to
the planned trajectory, and take the first intersection of the executed axis
with the preoperative model as the achieved entry point. Wires that miss the
model are counted and excluded from entry-point statistics.

Executed geometry must already be expressed in the preoperative frame; the
experiment runner performs that alignment with the phantom's ground-truth
pose, mirroring how postoperative scans are aligned to the plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as nav_io
from .errors import InvalidParams, MismatchedLengths
from .geometry import PointCloud, Ray, RigidTransform, ray_mesh_first_intersection, unit_vector
from .navigation import ScrewPlan, trajectory_angle
from .phantom import PhantomParams, PhantomSpec, generate_phantom
from .registration import RegistrationConfig, RegistrationResult, register
from .simulation import DigitizationSim, digitization_time_s, fit_trajectory_axis, simulate_digitization

CONFIG_SCHEMA_VERSION = 1


@dataclass
class ScrewResult:
    """Quantified outcome for one executed screw/wire."""

    index: int
    trajectory_error_deg: float
    entry_point_error_mm: float | None
    missed: bool = False


def _summary(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "sd": None, "min": None, "max": None, "n": 0}
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {
        "mean": float(arr.mean()),
        "sd": sd,
        "min": float(arr.min()),
        "max": float(arr.max()),
        "n": int(arr.size),
    }


@dataclass
class TrialReport:
    """Per-trial metrics: screw errors plus registration bookkeeping."""

    screws: list[ScrewResult]
    registration_rmse_mm: float
    n_points: int | None = None
    digitization_time_s: float | None = None
    chosen_configuration: int | None = None

    def trajectory_errors(self) -> np.ndarray:
        return np.array([s.trajectory_error_deg for s in self.screws])

    def entry_errors(self) -> np.ndarray:
        return np.array(
            [s.entry_point_error_mm for s in self.screws if not s.missed], dtype=np.float64
        )

    def n_missed(self) -> int:
        return sum(1 for s in self.screws if s.missed)

    def aggregates(self) -> dict:
        return {
            "trajectory_error_deg": _summary(self.trajectory_errors()),
            "entry_point_error_mm": _summary(self.entry_errors()),
        }

    def to_dict(self) -> dict:
        return {
            "screws": [
                {
                    "index": s.index,
                    "trajectory_error_deg": s.trajectory_error_deg,
                    "entry_point_error_mm": s.entry_point_error_mm,
                    "missed": s.missed,
                }
                for s in self.screws
            ],
            "registration_rmse_mm": self.registration_rmse_mm,
            "n_points": self.n_points,
            "digitization_time_s": self.digitization_time_s,
            "chosen_configuration": self.chosen_configuration,
            "n_missed": self.n_missed(),
            "aggregates": self.aggregates(),
        }


def evaluate_trial(
    spec: PhantomSpec,
    executed,
    reg: RegistrationResult,
    n_points: int | None = None,
    digitization_time: float | None = None,
) -> TrialReport:
    """Quantify executed trajectories against the phantom's plans.

    Args:
        executed: one item per plan, each a Ray, a PointCloud, or an (N, 3)
            array of wire samples, already in the preoperative frame.
        reg: the registration whose RMSE the report carries.

    Raises:
        MismatchedLengths: executed count differs from the plan count.
    """
    if len(executed) != len(spec.plans):
        raise MismatchedLengths(
            f"{len(executed)} executed trajectories for {len(spec.plans)} plans"
        )
    results = []
    for i, (plan, item) in enumerate(zip(spec.plans, executed)):
        axis = _as_axis(item)
        traj_err = trajectory_angle(axis.direction, plan.trajectory)
        entry = _first_entry(axis, spec)
        if entry is None:
            results.append(ScrewResult(i, traj_err, None, missed=True))
        else:
            err = float(np.linalg.norm(entry - plan.entry_point))
            results.append(ScrewResult(i, traj_err, err))
    return TrialReport(
        screws=results,
        registration_rmse_mm=reg.final_rmse,
        n_points=n_points,
        digitization_time_s=digitization_time,
        chosen_configuration=reg.chosen_configuration,
    )


def _as_axis(item) -> Ray:
    if isinstance(item, Ray):
        return item
    if isinstance(item, PointCloud):
        return fit_trajectory_axis(item)
    return fit_trajectory_axis(PointCloud(np.asarray(item, dtype=np.float64)))


def _first_entry(axis: Ray, spec: PhantomSpec):
    """First model intersection along the trajectory, cast from outside."""
    projections = (spec.mesh.vertices - axis.origin) @ axis.direction
    start = projections.min() - 0.05 * (projections.max() - projections.min()) - 1.0
    recast = Ray(axis.at(start), axis.direction)
    return ray_mesh_first_intersection(recast, spec.mesh)


@dataclass
class BatchReport:
    """Pooled metrics over a batch of seeded trials."""

    trials: list[TrialReport]
    seed: int | None = None

    def summary(self) -> dict:
        traj = np.concatenate([t.trajectory_errors() for t in self.trials]) if self.trials else []
        entry = np.concatenate([t.entry_errors() for t in self.trials]) if self.trials else []
        return {
            "trajectory_error_deg": _summary(traj),
            "entry_point_error_mm": _summary(entry),
            "registration_rmse_mm": _summary([t.registration_rmse_mm for t in self.trials]),
            "digitization_time_s": _summary(
                [t.digitization_time_s for t in self.trials if t.digitization_time_s is not None]
            ),
            "points_collected": _summary(
                [t.n_points for t in self.trials if t.n_points is not None]
            ),
            "n_missed": sum(t.n_missed() for t in self.trials),
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": self.seed,
            "n_trials": len(self.trials),
            "trials": [t.to_dict() for t in self.trials],
            "summary": self.summary(),
        }

    def text_table(self) -> str:
        """Aligned four-column summary table, one metric per row."""
        rows = [
            ("Trajectory err. (deg)", "trajectory_error_deg"),
            ("Entry point err. (mm)", "entry_point_error_mm"),
            ("Reg. RMSE (mm)", "registration_rmse_mm"),
            ("Digitization time (s)", "digitization_time_s"),
            ("# points collected", "points_collected"),
        ]
        summary = self.summary()
        lines = [f"{'Result':<24}{'Mean':>10}{'SD':>10}{'min.':>10}{'max.':>10}"]
        for label, key in rows:
            s = summary[key]
            if s["n"] == 0:
                lines.append(f"{label:<24}{'-':>10}{'-':>10}{'-':>10}{'-':>10}")
                continue
            lines.append(
                f"{label:<24}{s['mean']:>10.2f}{s['sd']:>10.2f}{s['min']:>10.2f}{s['max']:>10.2f}"
            )
        lines.append(f"Missed entries: {summary['n_missed']}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Experiment configuration and orchestration
# ---------------------------------------------------------------------------


def load_config(source) -> dict:
    """Load an experiment config from a dict, JSON, or TOML file."""
    if isinstance(source, dict):
        cfg = dict(source)
    else:
        path = Path(source)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            cfg = tomllib.loads(path.read_text())
        else:
            cfg = json.loads(path.read_text())
    version = cfg.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise InvalidParams(
            f"unsupported config schema_version {version!r}; expected {CONFIG_SCHEMA_VERSION}"
        )
    return cfg


@dataclass(frozen=True)
class ExecutionNoise:
    """Noise applied to the displayed plan when simulating navigated insertion."""

    trajectory_noise_deg: float = 0.0
    entry_jitter_mm: float = 0.0
    wire_radius_mm: float = 0.0
    wire_points: int = 200
    wire_tail_mm: float = 10.0

    def __post_init__(self):
        if min(self.trajectory_noise_deg, self.entry_jitter_mm, self.wire_radius_mm) < 0:
            raise InvalidParams("execution noise values must be >= 0")
        if self.wire_points < 10:
            raise InvalidParams("wire_points must be >= 10 for a stable axis fit")


def _perpendicular_basis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(direction @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = unit_vector(np.cross(direction, helper))
    return u, np.cross(direction, u)


def simulate_execution(
    plan: ScrewPlan,
    displayed: RigidTransform,
    noise: ExecutionNoise,
    rng: np.random.Generator,
) -> np.ndarray:
    """Wire samples (world frame, tail to tip) for one navigated insertion.

    ``displayed`` maps the preoperative frame to the world frame as the
    navigation system believes it (the inverse of the registration result),
    so registration error propagates into the executed wire exactly as it
    would through holographic guidance.
    """
    entry = displayed.apply(plan.entry_point)
    direction = unit_vector(displayed.rotate(plan.trajectory))
    u1, u2 = _perpendicular_basis(direction)

    if noise.entry_jitter_mm > 0:
        entry = entry + rng.normal(0.0, noise.entry_jitter_mm) * u1 + rng.normal(
            0.0, noise.entry_jitter_mm
        ) * u2
    if noise.trajectory_noise_deg > 0:
        phase = rng.uniform(0, 2 * np.pi)
        tilt_axis = unit_vector(np.cos(phase) * u1 + np.sin(phase) * u2)
        angle = rng.normal(0.0, noise.trajectory_noise_deg)
        direction = RigidTransform.from_axis_angle(tilt_axis, angle).rotate(direction)
        u1, u2 = _perpendicular_basis(direction)

    ts = np.linspace(-noise.wire_tail_mm, plan.planned_length, noise.wire_points)
    pts = entry[None, :] + ts[:, None] * direction[None, :]
    if noise.wire_radius_mm > 0:
        phases = rng.uniform(0, 2 * np.pi, size=noise.wire_points)
        pts = pts + noise.wire_radius_mm * (
            np.cos(phases)[:, None] * u1 + np.sin(phases)[:, None] * u2
        )
    return pts


def run_experiment(config, out_dir=None) -> BatchReport:
    """Generate, digitize, register, execute, and evaluate seeded trials.

    The config is a dict or a JSON/TOML path with a top-level
    ``schema_version`` and optional sections ``phantom``, ``digitization``,
    ``registration``, and ``execution``. Every random stage is seeded from
    the top-level seed, so reruns produce identical artifacts. When out_dir
    is given, per-trial inputs and results are written under it along with a
    batch report (JSON and text).
    """
    cfg = load_config(config)
    seed = int(cfg.get("seed", 0))
    n_trials = int(cfg.get("n_trials", 1))
    approach = cfg.get("approach", [0.0, 0.0, -1.0])

    phantom_params = PhantomParams(**cfg.get("phantom", {}))
    digit_cfg = dict(cfg.get("digitization", {}))
    if "strokes" in digit_cfg and digit_cfg["strokes"] is not None:
        digit_cfg["strokes"] = tuple(digit_cfg["strokes"])
    reg_cfg = RegistrationConfig(**cfg.get("registration", {}))
    exec_noise = ExecutionNoise(**cfg.get("execution", {}))

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    trials = []
    for trial in range(n_trials):
        stage_seed = lambda k: int(
            np.random.SeedSequence(entropy=seed, spawn_key=(trial, k)).generate_state(1)[0]
        )
        spec = generate_phantom(stage_seed(0), phantom_params)
        sim = DigitizationSim(seed=stage_seed(1), **digit_cfg)
        intra = simulate_digitization(spec, sim)
        pre_cloud = spec.preoperative_cloud()
        reg = register(intra, pre_cloud, approach, reg_cfg)

        displayed = reg.transform.inverse()
        back_to_pre = spec.ground_truth_pose.inverse()
        rng_exec = np.random.default_rng(stage_seed(2))
        executed = [
            PointCloud(back_to_pre.apply_points(simulate_execution(plan, displayed, exec_noise, rng_exec)))
            for plan in spec.plans
        ]
        report = evaluate_trial(
            spec,
            executed,
            reg,
            n_points=len(intra),
            digitization_time=digitization_time_s(len(intra), sim),
        )
        trials.append(report)
        if out_path is not None:
            _write_trial_artifacts(out_path / f"trial_{trial:03d}", spec, intra, reg, report)

    batch = BatchReport(trials=trials, seed=seed)
    if out_path is not None:
        nav_io.write_json(batch.to_dict(), out_path / "report.json")
        (out_path / "report.txt").write_text(batch.text_table() + "\n")
    return batch


def _registration_dict(reg: RegistrationResult) -> dict:
    return {
        "transform": nav_io.transform_to_dict(reg.transform),
        "final_rmse_mm": reg.final_rmse,
        "chosen_configuration": reg.chosen_configuration,
        "configuration_rmses_mm": list(reg.configuration_rmses),
        "iterations": list(reg.iterations),
        "rmse_histories": [list(h) for h in reg.rmse_histories],
        "warnings": list(reg.warnings),
    }


def plans_to_dicts(plans: list[ScrewPlan]) -> list[dict]:
    return [
        {
            "entry_point_mm": [float(v) for v in p.entry_point],
            "trajectory": [float(v) for v in p.trajectory],
            "planned_length_mm": p.planned_length,
        }
        for p in plans
    ]


def plans_from_dicts(rows) -> list[ScrewPlan]:
    return [
        ScrewPlan(row["entry_point_mm"], row["trajectory"], row["planned_length_mm"])
        for row in rows
    ]


def _write_trial_artifacts(trial_dir: Path, spec, intra, reg, report) -> None:
    trial_dir.mkdir(parents=True, exist_ok=True)
    nav_io.write_ply_mesh(spec.mesh, trial_dir / "mesh.ply")
    nav_io.write_ply_cloud(spec.preoperative_cloud(), trial_dir / "pre_cloud.ply")
    nav_io.write_ply_cloud(intra, trial_dir / "intra.ply")
    nav_io.write_json(plans_to_dicts(spec.plans), trial_dir / "plans.json")
    nav_io.write_transform(spec.ground_truth_pose, trial_dir / "ground_truth.json")
    nav_io.write_json(_registration_dict(reg), trial_dir / "registration.json")
    nav_io.write_json(report.to_dict(), trial_dir / "report.json")
