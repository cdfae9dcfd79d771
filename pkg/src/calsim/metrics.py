"""Benchmark metrics: time limits, infraction distances and comfort."""
from __future__ import annotations

import math
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

BENCHMARK_SPEED = 10.0 / 3.6  # m/s used to derive time limits


def time_limit(route_length: float) -> float:
    """Seconds needed to drive ``route_length`` meters at 10 km/h."""
    if route_length <= 0:
        raise ValueError("route length must be positive")
    return route_length / BENCHMARK_SPEED


def km_between_infractions(total_km: float, count: int) -> Union[float, str]:
    """Average km per infraction, or ``">total"`` when none occurred."""
    if total_km < 0:
        raise ValueError("total distance must be non-negative")
    if count > 0:
        return total_km / count
    return f">{total_km:g}"


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if len(x) else math.nan


def jerk_series(speed: Sequence[float], heading: Sequence[float], turning: Sequence[bool],
                dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample (longitudinal, lateral-straight, lateral-turn) jerk in m/s^3.

    Longitudinal jerk is the second central difference of speed. Lateral
    acceleration v*yaw_rate is formed on half steps and differenced back onto
    the interior samples, so both jerks live on samples 1..n-2.
    """
    v = np.asarray(speed, float)
    if len(v) < 3:
        raise ValueError("jerk needs at least three samples")
    h = np.unwrap(np.asarray(heading, float))
    turn = np.asarray(turning, bool)
    j_long = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    yaw_rate = np.diff(h) / dt
    a_lat = 0.5 * (v[1:] + v[:-1]) * yaw_rate
    j_lat = np.diff(a_lat) / dt
    inner_turn = turn[1:-1]
    return j_long, j_lat[~inner_turn], j_lat[inner_turn]


def jerk_metrics(speed: Sequence[float], heading: Sequence[float], turning: Sequence[bool],
                 dt: float) -> Tuple[float, float, float]:
    """RMS (longitudinal, lateral-straight, lateral-turn) jerk; an empty class reports NaN."""
    return tuple(_rms(j) for j in jerk_series(speed, heading, turning, dt))


def median_centerline_distance(episodes: Iterable[Sequence[float]]) -> float:
    """Median over episodes of each episode's median |d|."""
    meds = [float(np.median(np.abs(np.asarray(d, float)))) for d in episodes if len(d)]
    if not meds:
        raise ValueError("need at least one non-empty episode")
    return float(np.median(meds))
