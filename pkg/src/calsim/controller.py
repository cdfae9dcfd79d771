"""Longitudinal state machine and damped Stanley lateral control.

Steering sign: the controller outputs a wheel angle where positive steers to
the right (clockwise), so that positive heading error / left offset produce a
corrective command directly from the Stanley law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Tuple

from .perception import PerceivedAffordances
from .town import KMH


class LongitudinalState(IntEnum):
    """Ordered by priority: larger value wins."""

    CRUISING = 0
    FOLLOWING = 1
    OVER_LIMIT = 2
    RED_LIGHT = 3
    HAZARD_STOP = 4

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class PIDGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd)) or self.kp < 0:
            raise ValueError(f"invalid PID gains {self}")


@dataclass
class PIDState:
    integral: float = 0.0
    prev_error: Optional[float] = None
    integral_limit: float = 10.0

    def reset(self):
        self.integral = 0.0
        self.prev_error = None


def pid_step(gains: PIDGains, state: PIDState, error: float, dt: float) -> Tuple[float, PIDState]:
    """One discrete PID update; the derivative term is zero right after a reset."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    lim = state.integral_limit
    integral = min(max(state.integral + error * dt, -lim), lim)
    derivative = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    u = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return u, PIDState(integral, error, lim)


def ziegler_nichols_gains(ku: float, tu: float, classical: bool = False) -> PIDGains:
    """PID coefficients from the ultimate gain and oscillation period.

    The default uses ki = Tu/2 and kd = Tu/8 literally; ``classical=True``
    gives the textbook form ki = kp/(Tu/2), kd = kp*Tu/8.
    """
    if ku <= 0 or tu <= 0:
        raise ValueError("Ku and Tu must be positive")
    kp = 0.6 * ku
    if classical:
        return PIDGains(kp, kp / (tu / 2.0), kp * tu / 8.0)
    return PIDGains(kp, tu / 2.0, tu / 8.0)


@dataclass(frozen=True)
class ControllerConfig:
    p_rl: float = 0.9
    p_hs: float = 0.7
    follow_trigger: float = 35.0  # m
    over_limit_margin: float = 15.0  # km/h
    turn_speed_reduction: float = 10.0  # km/h
    cruise_cap: Optional[float] = None  # km/h
    follow_c: float = 1.25  # 1/s
    follow_d: float = 0.05
    follow_brake: bool = True
    stanley_k: float = 1.0  # 1/s
    v_eps: float = 0.5  # m/s
    damping: float = 0.5
    steer_limit: float = 0.61  # rad
    integral_limit: float = 10.0
    cruise_gains: PIDGains = field(default_factory=lambda: PIDGains(0.5, 0.1, 0.02))
    follow_gains: PIDGains = field(default_factory=lambda: PIDGains(0.6, 0.1, 0.05))

    def __post_init__(self):
        if not (0 <= self.p_rl <= 1 and 0 <= self.p_hs <= 1):
            raise ValueError("probability thresholds must lie in [0, 1]")
        if self.follow_trigger <= 0:
            raise ValueError("follow_trigger must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


@dataclass(frozen=True)
class ControlOutput:
    throttle: float
    brake: float
    steer: float
    active_state: LongitudinalState
    target_speed: float = 0.0  # m/s, informational


def update_speed_limit_memory(memory: int, perceived_sign: Optional[int]) -> int:
    return memory if perceived_sign is None else perceived_sign


def select_state(p: PerceivedAffordances, v: float, limit_kmh: float, cfg: ControllerConfig) -> LongitudinalState:
    if p.p_hazard > cfg.p_hs:
        return LongitudinalState.HAZARD_STOP
    if p.p_red > cfg.p_rl:
        return LongitudinalState.RED_LIGHT
    if v > (limit_kmh + cfg.over_limit_margin) * KMH:
        return LongitudinalState.OVER_LIMIT
    if p.vehicle_distance < cfg.follow_trigger:
        return LongitudinalState.FOLLOWING
    return LongitudinalState.CRUISING


def car_following_error(v: float, v_max: float, ell: float, c: float, d: float) -> float:
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    return v_max * (1.0 - math.exp(-(c / v_max) * ell) - d) - v


def cruise_target_kmh(limit_kmh: float, command: str, cfg: ControllerConfig) -> float:
    target = limit_kmh
    if cfg.cruise_cap is not None:
        target = min(target, cfg.cruise_cap)
    if command in ("left", "right"):
        target = min(target, limit_kmh - cfg.turn_speed_reduction)
    return target


def over_limit_brake(v: float, limit_kmh: float) -> float:
    return 0.3 * (v / KMH) / limit_kmh


def red_light_brake(v: float) -> float:
    return 0.2 * (v / KMH) / 30.0


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def stanley_steering(psi: float, d: float, v: float, k: float, v_eps: float = 0.5) -> float:
    return psi + math.atan(k * d / max(v, v_eps))


def damped_steering(delta_sc: float, delta_prev: float, damping: float, steer_limit: float = math.inf) -> float:
    delta = delta_sc - damping * (delta_sc - delta_prev)
    return min(max(delta, -steer_limit), steer_limit)


class Controller:
    """Per-episode controller state: PID integrators, limit memory, last steer."""

    def __init__(self, cfg: ControllerConfig, speed_limit: int = 30, dt: float = 0.05):
        self.cfg = cfg
        self.dt = dt
        self.speed_limit = speed_limit
        self.cruise_pid = PIDState(integral_limit=cfg.integral_limit)
        self.follow_pid = PIDState(integral_limit=cfg.integral_limit)
        self.prev_steer = 0.0
        self.state: Optional[LongitudinalState] = None

    def longitudinal(self, state: LongitudinalState, p: PerceivedAffordances, v: float, command: str):
        cfg = self.cfg
        limit = self.speed_limit
        if state == LongitudinalState.HAZARD_STOP:
            return 0.0, 1.0, 0.0
        if state == LongitudinalState.RED_LIGHT:
            return 0.0, _clamp01(red_light_brake(v)), 0.0
        if state == LongitudinalState.OVER_LIMIT:
            return 0.0, _clamp01(over_limit_brake(v, limit)), limit * KMH
        if state == LongitudinalState.FOLLOWING:
            v_max = limit * KMH
            target = v_max * (1.0 - math.exp(-(cfg.follow_c / v_max) * p.vehicle_distance) - cfg.follow_d)
            err = car_following_error(v, v_max, p.vehicle_distance, cfg.follow_c, cfg.follow_d)
            u, self.follow_pid = pid_step(cfg.follow_gains, self.follow_pid, err, self.dt)
            brake = _clamp01(-u) if cfg.follow_brake else 0.0
            return _clamp01(u), brake, target
        target = cruise_target_kmh(limit, command, cfg) * KMH
        u, self.cruise_pid = pid_step(cfg.cruise_gains, self.cruise_pid, target - v, self.dt)
        return _clamp01(u), 0.0, target

    def step(self, p: PerceivedAffordances, v: float, command: str) -> ControlOutput:
        cfg = self.cfg
        self.speed_limit = update_speed_limit_memory(self.speed_limit, p.speed_sign)
        state = select_state(p, v, self.speed_limit, cfg)
        if state != self.state:
            if state != LongitudinalState.CRUISING:
                self.cruise_pid.reset()
            if state != LongitudinalState.FOLLOWING:
                self.follow_pid.reset()
        self.state = state
        throttle, brake, target = self.longitudinal(state, p, v, command)

        delta_sc = stanley_steering(p.relative_angle, p.center_distance, v, cfg.stanley_k, cfg.v_eps)
        steer = damped_steering(delta_sc, self.prev_steer, cfg.damping, cfg.steer_limit)
        self.prev_steer = steer
        return ControlOutput(throttle, brake, steer, state, target)


def control_step(p: PerceivedAffordances, v: float, command: str, controller: Controller) -> ControlOutput:
    return controller.step(p, v, command)
