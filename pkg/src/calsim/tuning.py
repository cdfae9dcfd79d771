"""Ultimate-gain oscillation probe for PID tuning.

All gains start at zero; kp is raised until the speed loop oscillates with a
steady amplitude. The calibration plant is the longitudinal part of the
vehicle model on a straight road, driven by a P-only controller whose output
maps to throttle when positive and brake when negative, through an actuator
lag of a few steps (without a lag the loop can only oscillate at the
two-step sampling limit).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .controller import PIDGains, ziegler_nichols_gains
from .simulation import DT, VehicleParams, VehicleState, step_vehicle

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class ProbePlant:
    target_kmh: float = 20.0
    start_kmh: float = 10.0
    lag_steps: int = 4
    duration: float = 40.0  # s per kp trial
    dt: float = DT
    vehicle: VehicleParams = field(default_factory=VehicleParams)


@dataclass(frozen=True)
class ProbeResult:
    conclusive: bool
    ku: Optional[float] = None
    tu: Optional[float] = None
    gains: Optional[PIDGains] = None
    trials: int = 0
    message: str = ""


def simulate_p_loop(kp: float, plant: ProbePlant) -> np.ndarray:
    """Speed error trace of the P-only loop."""
    n = int(round(plant.duration / plant.dt))
    target = plant.target_kmh * KMH
    state = VehicleState(0.0, 0.0, 0.0, plant.start_kmh * KMH)
    pending = deque([0.0] * plant.lag_steps)
    err = np.empty(n)
    for k in range(n):
        e = target - state.v
        err[k] = e
        pending.append(kp * e)
        u = pending.popleft()
        state = step_vehicle(state, min(max(u, 0.0), 1.0), min(max(-u, 0.0), 1.0), 0.0, plant.vehicle, plant.dt)
    return err


def find_peaks(e: np.ndarray) -> List[int]:
    """Indices of alternating extrema of ``e`` about its mean."""
    x = e - e.mean()
    sign = np.sign(x)
    peaks: List[int] = []
    start = 0
    for k in range(1, len(x)):
        if sign[k] != sign[k - 1] and sign[k] != 0:
            if sign[k - 1] != 0 and k - start > 0:
                seg = slice(start, k)
                idx = start + int(np.argmax(np.abs(x[seg])))
                peaks.append(idx)
            start = k
    return peaks


def sustained_oscillation(e: np.ndarray, dt: float, tol: float = 0.10, min_amp: float = 0.05,
                          min_peaks: int = 3):
    """(period) if the tail of ``e`` shows >= ``min_peaks`` alternating peaks whose
    amplitudes agree within ``tol``; otherwise None."""
    tail = e[len(e) // 2:]
    peaks = find_peaks(tail)[1:]  # the first extremum may be cut by the window
    if len(peaks) < min_peaks:
        return None
    x = tail - tail.mean()
    amp = np.abs(x[peaks[-min_peaks - 1:] if len(peaks) > min_peaks else peaks])
    if amp.min() < min_amp or amp.max() > (1.0 + tol) * amp.min():
        return None
    spacing = np.diff(peaks) * dt
    return 2.0 * float(np.mean(spacing))


def probe(plant: ProbePlant = ProbePlant(), kp_start: float = 0.05, kp_max: float = 50.0,
          factor: float = 1.05, classical: bool = False) -> ProbeResult:
    kp = kp_start
    trials = 0
    while kp <= kp_max + 1e-12:
        trials += 1
        tu = sustained_oscillation(simulate_p_loop(kp, plant), plant.dt)
        if tu is not None:
            return ProbeResult(True, kp, tu, ziegler_nichols_gains(kp, tu, classical), trials,
                               f"sustained oscillation at kp={kp:.4g}")
        kp *= factor
    return ProbeResult(False, trials=trials, message=f"no sustained oscillation for kp <= {kp_max:g}")
