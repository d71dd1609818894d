"""Closed-loop mission: simworld -> fusion -> guidance -> targeting, with logging."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fusion
from .config import MissionConfig
from .geodesy import llh_to_enu
from .guidance import PathComplete, PathFollower
from .odometry import EncoderGlitchError, Pose2D, WheelIncrement, check_increment
from .simworld import World
from .targeting import (
    HOME,
    LowTank,
    TankState,
    TargetingError,
    aim,
    incremental_angles,
    plan_spray,
    range_from_ground_plane,
    ray_miss_distance,
)

# Floors for filter noise when the world is configured noiseless.
MIN_GPS_STD_M = 1e-3
MIN_IMU_STD_RAD = 1e-4
GLITCH_FACTOR = 2.0

CSV_COLUMNS = (
    "tick",
    "time_s",
    "true_x_m",
    "true_y_m",
    "true_theta_rad",
    "est_x_m",
    "est_y_m",
    "est_theta_rad",
    "cross_track_m",
    "nees",
)


@dataclass
class MissionResult:
    records: list[dict]
    report: dict
    final_tank: TankState
    world: World

    @property
    def status(self) -> str:
        return self.report["status"]


def _initial_estimate(cfg: MissionConfig, truth: Pose2D, world: World) -> fusion.StateEstimate:
    f = cfg.filter
    mean = truth
    if f.sample_initial_error:
        e = world.rng["init"].normal(0.0, 1.0, 3) * [f.initial_std_xy_m, f.initial_std_xy_m, f.initial_std_theta_rad]
        mean = Pose2D(truth.x_m + e[0], truth.y_m + e[1], truth.theta_rad + e[2])
    return fusion.StateEstimate.from_std(mean, f.initial_std_xy_m, f.initial_std_theta_rad)


def run_mission(cfg: MissionConfig, seed: int | None = None) -> MissionResult:
    seed = cfg.seed if seed is None else seed
    path = cfg.path()
    datum = cfg.datum_obj()
    geometry = cfg.geometry()
    noise = cfg.noise_obj()
    start = cfg.start_pose(path)
    world = World(start, cfg.plant_list(), datum, geometry, noise, cfg.sim.tick_hz, seed)
    dt = world.dt
    cam = geometry.camera
    h = geometry.camera_to_nozzle

    f = cfg.filter
    slip_std = f.slip_std if f.slip_std is not None else noise.encoder_slip_std
    gps_std = f.gps_std_m or max(noise.gps_std_m, MIN_GPS_STD_M)
    imu_std = f.imu_std_rad or max(noise.imu_std_rad, MIN_IMU_STD_RAD)

    est = _initial_estimate(cfg, start, world)
    follower = PathFollower(
        path,
        cfg.guidance.lookahead_m,
        cfg.guidance.v_nominal_mps,
        geometry.track_width_m,
        geometry.max_wheel_speed_mps,
        cfg.guidance.mode,
    )
    sp = cfg.spray
    tank = TankState(sp.tank_capacity_ml, sp.tank_initial_ml)
    plant_index = {p.plant_id: i for i, p in enumerate(world.plants)}
    plant_height = {p.id: p.height_m for p in cfg.plants}

    last_offset: dict[tuple[str, str], float] = {}
    handled: set[str] = set()
    nozzle = {m.side: HOME for m in geometry.mounts}
    busy_until = {m.side: -math.inf for m in geometry.mounts}
    active: list[tuple[str, float]] = []
    records: list[dict] = []
    status = "timeout"
    max_ticks = int(round(cfg.sim.duration_cap_s * cfg.sim.tick_hz))

    for _ in range(max_ticks):
        try:
            cmd, arc = follower.command(est.mean)
        except PathComplete:
            status = "complete"
            break
        bundle = world.step(cmd)
        t = bundle.time_s

        # Fusion
        inc = bundle.encoders
        try:
            check_increment(inc, GLITCH_FACTOR * geometry.max_wheel_speed_mps, dt)
        except EncoderGlitchError:
            inc = WheelIncrement(cmd.v_left_mps * dt, cmd.v_right_mps * dt, inc.track_width_m)
        if f.process_model == "slip":
            q = fusion.slip_noise(est.mean.theta_rad, inc, slip_std)
        else:
            q = fusion.travel_scaled_noise(inc, f.sigma_xy, f.sigma_theta)
        est = fusion.predict(est, inc, q)
        if bundle.heading_rad is not None:
            est = fusion.update_heading(est, fusion.HeadingFix(bundle.heading_rad, imu_std, t)).estimate
        gps_status = "absent"
        if bundle.gps is not None:
            enu = llh_to_enu(bundle.gps, datum)
            res = fusion.update_gps(est, fusion.GpsFix(enu.east_m, enu.north_m, gps_std, t))
            est = res.estimate
            gps_status = "accepted" if res.accepted else "rejected"

        # Targeting: act on the first crossing of the image centre column.
        events = []
        for det in bundle.detections:
            pid = det.plant_id
            if pid is None or pid in handled:
                continue
            key = (pid, det.side)
            offset = det.center[0] - 0.5 * cam.width_px
            prev = last_offset.get(key)
            last_offset[key] = offset
            if prev is None or (offset != 0.0 and (prev > 0.0) == (offset > 0.0)):
                continue
            handled.add(pid)
            event = {"plant_id": pid, "side": det.side, "time_s": t}
            try:
                if sp.range_source == "truth":
                    rng_m = det.range_m
                else:
                    alpha_y, alpha_z = (det.center[1] - 0.5 * cam.height_px) * cam.rad_per_px_y, offset * cam.rad_per_px_x
                    drop = geometry.mount(det.side).z_m - plant_height[pid]
                    rng_m = range_from_ground_plane(alpha_y, alpha_z, drop)
                pose, _ = aim(cam, det, rng_m, h, geometry.servo_limit_rad)
            except TargetingError as err:
                events.append({**event, "status": "unreachable", "reason": str(err)})
                continue
            if t < busy_until[det.side]:
                events.append({**event, "status": "nozzle_busy"})
                continue
            try:
                plan, tank = plan_spray(sp.volume_per_plant_ml, sp.flow_l_per_min, tank)
            except LowTank as err:
                events.append({**event, "status": "low_tank", "reason": str(err)})
                continue
            d_tilt, d_pan = incremental_angles(nozzle[det.side], pose)
            nozzle[det.side] = pose
            idx = plant_index[pid]
            miss = ray_miss_distance(pose, world.plant_in_nozzle(idx, det.side))
            world.plants[idx].sprayed_volume_ml += plan.volume_ml
            busy_until[det.side] = t + plan.duration_s
            active.append((pid, t + plan.duration_s))
            events.append(
                {
                    **event,
                    "status": "sprayed",
                    "range_m": rng_m,
                    "pan_rad": pose.pan_rad,
                    "tilt_rad": pose.tilt_rad,
                    "delta_pan_rad": d_pan,
                    "delta_tilt_rad": d_tilt,
                    "miss_m": miss,
                    "volume_ml": plan.volume_ml,
                    "duration_s": plan.duration_s,
                    "tank_remaining_ml": tank.remaining_ml,
                }
            )
        active = [(pid, end) for pid, end in active if end > t]

        truth = world.true_pose
        cov = est.covariance
        records.append(
            {
                "tick": bundle.tick,
                "time_s": t,
                "true_pose": [truth.x_m, truth.y_m, truth.theta_rad],
                "est_pose": [est.mean.x_m, est.mean.y_m, est.mean.theta_rad],
                "cov_diag": [float(cov[0, 0]), float(cov[1, 1]), float(cov[2, 2])],
                "gps": gps_status,
                "wheel_speeds_mps": [cmd.v_left_mps, cmd.v_right_mps],
                "curvature_inv_m": cmd.curvature_inv_m,
                "saturated": cmd.saturated or arc.behind,
                "reference": list(follower.reference),
                "spray_events": events,
                "active_sprays": [pid for pid, _ in active],
                "cross_track_m": path.cross_track(truth.x_m, truth.y_m),
                "nees": fusion.nees(truth, est),
            }
        )

    meta = {
        "name": cfg.name,
        "seed": seed,
        "status": status,
        "tick_hz": cfg.sim.tick_hz,
        "plants": [p.id for p in cfg.plants],
        "tank_capacity_ml": tank.capacity_ml,
        "tank_initial_ml": sp.tank_initial_ml if sp.tank_initial_ml is not None else sp.tank_capacity_ml,
        "volume_per_plant_ml": sp.volume_per_plant_ml,
    }
    return MissionResult(records, summarize(records, meta), tank, world)


def summarize(records: list[dict], meta: dict) -> dict:
    """Build the run report from step records alone (plus static mission metadata)."""
    xte = np.array([r["cross_track_m"] for r in records]) if records else np.zeros(1)
    results = {pid: {"status": "not_detected", "volume_ml": 0.0, "miss_m": None} for pid in meta["plants"]}
    for r in records:
        for ev in r["spray_events"]:
            entry = results[ev["plant_id"]]
            entry["status"] = ev["status"]
            entry["side"] = ev["side"]
            entry["time_s"] = ev["time_s"]
            if ev["status"] == "sprayed":
                entry["volume_ml"] += ev["volume_ml"]
                entry["miss_m"] = ev["miss_m"]
    consumed = sum(e["volume_ml"] for e in results.values())
    misses = [e["miss_m"] for e in results.values() if e["miss_m"] is not None]
    gps = [r["gps"] for r in records]
    n_sprayed = sum(e["status"] == "sprayed" for e in results.values())
    return {
        "name": meta["name"],
        "seed": meta["seed"],
        "status": meta["status"],
        "ticks": len(records),
        "sim_time_s": records[-1]["time_s"] if records else 0.0,
        "cross_track": {
            "mean_m": float(np.mean(xte)),
            "variance_m2": float(np.var(xte)),
            "std_m": float(np.std(xte)),
            "max_m": float(np.max(xte)),
        },
        "gps": {
            "accepted": gps.count("accepted"),
            "rejected": gps.count("rejected"),
            "absent": gps.count("absent"),
        },
        "spray": {
            "plants_total": len(results),
            "plants_sprayed": n_sprayed,
            "all_sprayed": n_sprayed == len(results),
            "max_miss_m": max(misses) if misses else None,
            "per_plant": results,
        },
        "tank": {
            "capacity_ml": meta["tank_capacity_ml"],
            "initial_ml": meta["tank_initial_ml"],
            "consumed_ml": consumed,
            "remaining_ml": meta["tank_initial_ml"] - consumed,
            "sprays_per_full_tank": int(meta["tank_capacity_ml"] // meta["volume_per_plant_ml"]),
        },
        "mean_nees": float(np.mean([r["nees"] for r in records])) if records else None,
    }


def dumps_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=True)


def write_outputs(result: MissionResult, out_dir: str | Path, csv_export: bool = False) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"log": out / "steps.jsonl", "report": out / "report.json"}
    with open(paths["log"], "w", newline="\n") as fh:
        for rec in result.records:
            fh.write(dumps_record(rec) + "\n")
    paths["report"].write_text(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    if csv_export:
        paths["csv"] = out / "trace.csv"
        with open(paths["csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in result.records:
                w.writerow([r["tick"], r["time_s"], *r["true_pose"], *r["est_pose"], r["cross_track_m"], r["nees"]])
    return paths


def read_log(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
