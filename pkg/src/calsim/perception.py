"""Perception-noise model standing in for a learned affordance predictor.

Turns ground-truth :class:`Affordances` into classifier-style outputs:
detection probabilities for the two binary affordances, a confused speed-sign
class, Gaussian regression noise and a fixed latency.
"""
from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .affordances import MAX_CENTER_DISTANCE, MAX_VEHICLE_DISTANCE, Affordances

SIGN_CLASSES = (None, 30, 60, 90)


def _identity4():
    return tuple(tuple(1.0 if i == j else 0.0 for j in range(4)) for i in range(4))


@dataclass(frozen=True)
class PerceptionModel:
    p_tp_red: float = 1.0
    p_fp_red: float = 0.0
    p_tp_hazard: float = 1.0
    p_fp_hazard: float = 0.0
    # detection confidence ~ U(lo, hi); undetected outputs 1 - confidence
    confidence: Tuple[float, float] = (1.0, 1.0)
    sign_confusion: Tuple[Tuple[float, ...], ...] = field(default_factory=_identity4)
    sigma_d: float = 0.0
    sigma_psi: float = 0.0
    sigma_ell: float = 0.0
    latency_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_tp_red", "p_fp_red", "p_tp_hazard", "p_fp_hazard"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        lo, hi = self.confidence
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"confidence range {self.confidence} invalid")
        m = np.asarray(self.sign_confusion, float)
        if m.shape != (4, 4) or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("sign_confusion must be a row-stochastic 4x4 matrix")
        if min(self.sigma_d, self.sigma_psi, self.sigma_ell) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.latency_steps < 0:
            raise ValueError("latency_steps must be >= 0")

    def with_seed(self, seed: int) -> "PerceptionModel":
        return dataclasses.replace(self, seed=int(seed))


def _confusion(p_keep: float):
    off = (1.0 - p_keep) / 3.0
    return tuple(tuple(p_keep if i == j else off for j in range(4)) for i in range(4))


PRESETS = {
    "clean": PerceptionModel(),
    "train": PerceptionModel(p_tp_red=0.99, p_fp_red=0.002, p_tp_hazard=0.99, p_fp_hazard=0.002,
                             confidence=(0.9, 1.0), sign_confusion=_confusion(0.98),
                             sigma_d=0.05, sigma_psi=0.01, sigma_ell=0.5, latency_steps=1),
    "test": PerceptionModel(p_tp_red=0.95, p_fp_red=0.01, p_tp_hazard=0.97, p_fp_hazard=0.005,
                            confidence=(0.75, 1.0), sign_confusion=_confusion(0.9),
                            sigma_d=0.12, sigma_psi=0.025, sigma_ell=1.5, latency_steps=2),
}
PRESET_ALIASES = {"train-like": "train", "test-like": "test"}


def preset(name: str) -> PerceptionModel:
    return PRESETS[PRESET_ALIASES.get(name, name)]


@dataclass(frozen=True)
class PerceivedAffordances:
    hazard_stop: bool = False
    red_light: bool = False
    speed_sign: Optional[int] = None
    vehicle_distance: float = MAX_VEHICLE_DISTANCE
    relative_angle: float = 0.0
    center_distance: float = 0.0
    p_red: float = 0.0
    p_hazard: float = 0.0


def exact(truth: Affordances) -> PerceivedAffordances:
    """Noise-free perception of ``truth``."""
    return PerceivedAffordances(truth.hazard_stop, truth.red_light, truth.speed_sign, truth.vehicle_distance,
                                truth.relative_angle, truth.center_distance,
                                float(truth.red_light), float(truth.hazard_stop))


class PerceptionSimulator:
    """Stateful perception stream: one instance per episode.

    Every call consumes the same number of random draws so the stream is a
    pure function of the seed and the truth sequence.
    """

    def __init__(self, model: PerceptionModel):
        self.model = model
        self.rng = np.random.Generator(np.random.PCG64(model.seed))
        self._buffer: deque = deque(maxlen=model.latency_steps + 1)
        self._confusion = np.cumsum(np.asarray(model.sign_confusion, float), axis=1)

    def _detect(self, truth: bool, p_tp: float, p_fp: float, u_det: float, u_conf: float):
        detected = u_det < (p_tp if truth else p_fp)
        lo, hi = self.model.confidence
        conf = lo + (hi - lo) * u_conf
        return detected, (conf if detected else 1.0 - conf)

    def perceive(self, truth: Affordances, step: int = 0) -> PerceivedAffordances:
        if not self._buffer:
            self._buffer.extend([truth] * (self.model.latency_steps + 1))
        else:
            self._buffer.append(truth)
        delayed = self._buffer[0]
        m = self.model
        u = self.rng.random(5)
        z = self.rng.standard_normal(3)

        red, p_red = self._detect(delayed.red_light, m.p_tp_red, m.p_fp_red, u[0], u[1])
        hazard, p_hazard = self._detect(delayed.hazard_stop, m.p_tp_hazard, m.p_fp_hazard, u[2], u[3])
        row = SIGN_CLASSES.index(delayed.speed_sign)
        sign = SIGN_CLASSES[min(int(np.searchsorted(self._confusion[row], u[4], side="right")), 3)]

        d = delayed.center_distance + m.sigma_d * z[0]
        psi = delayed.relative_angle + m.sigma_psi * z[1]
        ell = delayed.vehicle_distance + m.sigma_ell * z[2]
        return PerceivedAffordances(
            hazard_stop=bool(hazard),
            red_light=bool(red),
            speed_sign=sign,
            vehicle_distance=float(min(max(ell, 0.0), MAX_VEHICLE_DISTANCE)),
            relative_angle=float(min(max(psi, -math.pi), math.pi)),
            center_distance=float(min(max(d, -MAX_CENTER_DISTANCE), MAX_CENTER_DISTANCE)),
            p_red=float(p_red),
            p_hazard=float(p_hazard),
        )

