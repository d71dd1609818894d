"""Surveyed vs RTK-observed ECEF coordinates of two ground control points.

The quoted horizontal errors (3.2 cm, 5.8 cm, mean 4.5 cm) are the norms of the
ECEF x-y components of the observed-minus-actual deltas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geodesy import EcefCoord

REPORTED_ERRORS_CM = (3.2, 5.8)
REPORTED_MEAN_CM = 4.5
TOLERANCE_CM = 0.1


@dataclass(frozen=True)
class ControlPoint:
    name: str
    actual: EcefCoord
    observed: EcefCoord


POINTS = (
    ControlPoint(
        "point1",
        EcefCoord(1110825.867, 6235329.584, 750012.164),
        EcefCoord(1110825.87085, 6235329.55216, 750012.098407),
    ),
    ControlPoint(
        "point2",
        EcefCoord(1110706.361, 6235347.832, 750033.936),
        EcefCoord(1110706.36502, 6235347.89016, 750033.982406),
    ),
)


def horizontal_error_m(a: EcefCoord, b: EcefCoord) -> float:
    return math.hypot(b.x_m - a.x_m, b.y_m - a.y_m)


def error_3d_m(a: EcefCoord, b: EcefCoord) -> float:
    return math.dist((a.x_m, a.y_m, a.z_m), (b.x_m, b.y_m, b.z_m))


def evaluate(points=POINTS) -> dict:
    rows = [
        {
            "name": p.name,
            "horizontal_cm": 100.0 * horizontal_error_m(p.actual, p.observed),
            "error_3d_cm": 100.0 * error_3d_m(p.actual, p.observed),
        }
        for p in points
    ]
    mean = sum(r["horizontal_cm"] for r in rows) / len(rows)
    ok = abs(mean - REPORTED_MEAN_CM) <= TOLERANCE_CM and all(
        abs(r["horizontal_cm"] - ref) <= TOLERANCE_CM for r, ref in zip(rows, REPORTED_ERRORS_CM)
    )
    return {"points": rows, "mean_horizontal_cm": mean, "within_tolerance": ok}


def format_report(result: dict) -> str:
    lines = [f"{'point':<8} {'horizontal':>11} {'expected':>9} {'3-D':>8}"]
    for row, ref in zip(result["points"], REPORTED_ERRORS_CM):
        lines.append(f"{row['name']:<8} {row['horizontal_cm']:>8.2f} cm {ref:>6.1f} cm {row['error_3d_cm']:>5.2f} cm")
    lines.append(f"{'mean':<8} {result['mean_horizontal_cm']:>8.2f} cm {REPORTED_MEAN_CM:>6.1f} cm")
    lines.append("PASS" if result["within_tolerance"] else f"FAIL (tolerance +/-{TOLERANCE_CM} cm)")
    return "\n".join(lines)
