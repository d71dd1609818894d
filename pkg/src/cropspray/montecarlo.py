"""Monte Carlo batches over seeds: cross-track statistics and NEES consistency."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import chi2

from .config import MissionConfig
from .mission import run_mission

STATE_DIM = 3
CROSS_TRACK_BOUND_M = 0.10


def nees_band(runs: int, dof: int = STATE_DIM, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided interval for the run-averaged NEES of a consistent filter."""
    alpha = 1.0 - confidence
    return (
        float(chi2.ppf(alpha / 2, runs * dof) / runs),
        float(chi2.ppf(1 - alpha / 2, runs * dof) / runs),
    )


def _one(args: tuple[MissionConfig, int]) -> dict:
    cfg, seed = args
    try:
        result = run_mission(cfg, seed=seed)
    except Exception as err:  # counted as a failed run
        return {"seed": seed, "error": f"{type(err).__name__}: {err}"}
    recs = result.records
    return {
        "seed": seed,
        "report": result.report,
        "nees": np.array([r["nees"] for r in recs]),
        "cov_trace": np.array([sum(r["cov_diag"]) for r in recs]),
        "time_s": np.array([r["time_s"] for r in recs]),
    }


def run_batch(cfg: MissionConfig, runs: int, base_seed: int | None = None, workers: int = 1) -> dict:
    """Run ``runs`` seeds starting at ``base_seed`` (default: the config seed)."""
    if runs < 1:
        raise ValueError("need at least one run")
    base = cfg.seed if base_seed is None else base_seed
    jobs = [(cfg, base + i) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one, jobs))
    else:
        outcomes = [_one(j) for j in jobs]
    return aggregate(outcomes, cfg.noise.gps_outages, 1.0 / cfg.noise.gps_rate_hz)


def _outage_trace(t: np.ndarray, trace: np.ndarray, start: float, end: float, gap_s: float) -> dict:
    """Covariance-trace behaviour around one GPS outage window.

    The filter stays blind until the first scheduled fix after ``end``, so the
    window examined for the peak extends by one fix interval ``gap_s``.
    """
    during = (t >= start) & (t < end + gap_s)
    later = t >= start
    k_later = int(np.argmax(np.where(later, trace, -np.inf)))
    return {
        "window_s": [start, end],
        "at_start": float(np.interp(start, t, trace)),
        "peak": float(trace[during].max()) if during.any() else None,
        "peak_time_s_after_start": float(t[k_later]),
        "final": float(trace[-1]),
    }


def aggregate(outcomes: list[dict], outages=(), gap_s: float = 0.0) -> dict:
    ok = [o for o in outcomes if "error" not in o]
    failed = [{"seed": o["seed"], "error": o["error"]} for o in outcomes if "error" in o]
    summary: dict = {"runs": len(outcomes), "succeeded": len(ok), "failed": failed}
    if not ok:
        return summary

    reports = [o["report"] for o in ok]
    xte_means = np.array([r["cross_track"]["mean_m"] for r in reports])
    summary["cross_track"] = {
        "mean_of_means_m": float(xte_means.mean()),
        "max_of_means_m": float(xte_means.max()),
        "mean_variance_m2": float(np.mean([r["cross_track"]["variance_m2"] for r in reports])),
        "fraction_mean_below_bound": float(np.mean(xte_means < CROSS_TRACK_BOUND_M)),
        "bound_m": CROSS_TRACK_BOUND_M,
    }
    summary["status_counts"] = {s: sum(r["status"] == s for r in reports) for s in sorted({r["status"] for r in reports})}
    summary["gps_rejections"] = int(sum(r["gps"]["rejected"] for r in reports))

    # Runs can differ in length by a few ticks; compare over the common prefix.
    n = min(len(o["nees"]) for o in ok)
    nees = np.stack([o["nees"][:n] for o in ok])
    anees = nees.mean(axis=0)
    lo, hi = nees_band(len(ok))
    trace = np.stack([o["cov_trace"][:n] for o in ok]).mean(axis=0)
    t = ok[0]["time_s"][:n]
    k_peak = int(np.argmax(trace))
    summary["nees"] = {
        "band": [lo, hi],
        "final": float(anees[-1]),
        "time_mean": float(anees.mean()),
        "fraction_ticks_in_band": float(np.mean((anees >= lo) & (anees <= hi))),
        "final_in_band": bool(lo <= anees[-1] <= hi),
        "time_mean_in_band": bool(lo <= anees.mean() <= hi),
        "ticks": n,
    }
    summary["cov_trace"] = {
        "peak": float(trace[k_peak]),
        "peak_time_s": float(t[k_peak]),
        "final": float(trace[-1]),
        "series": [[float(t[i]), float(trace[i])] for i in range(0, n, max(1, n // 100))],
        "outages": [_outage_trace(t, trace, a, b, gap_s) for a, b in outages if a < t[-1]],
    }
    summary["per_run"] = reports
    return summary


def passes(summary: dict) -> bool:
    """Acceptance bands: consistent NEES and cross-track mean under bound in >= 95% of runs."""
    if summary.get("failed") or "nees" not in summary:
        return False
    return (
        summary["nees"]["time_mean_in_band"]
        and summary["nees"]["final_in_band"]
        and summary["cross_track"]["fraction_mean_below_bound"] >= 0.95
    )
