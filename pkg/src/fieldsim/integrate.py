"""Adaptive Dormand-Prince 5(4) integration of ``dy/dt = rhs(t, y)``.

The state is a flat float array.  Errors are measured with the mixed
absolute/relative RMS norm

    sqrt(mean((err_i / (atol + rtol * max(|y_i|, |y_new_i|)))**2))

and a step is accepted when that norm is at most 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteRhs, StepSizeUnderflow

DT_MIN = 1e-22

# Dormand-Prince tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th minus embedded 4th order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_initial: float = 1e-14
    dt_max: float = 1e-12
    renormalize_every: int = 0
    t_end: Optional[float] = None
    torque_threshold: Optional[float] = None
    observe_every_steps: int = 1
    adaptive: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.rtol >= 1e-14 and self.atol > 0):
            raise ValueError(f"need rtol >= 1e-14 and atol > 0, got {self.rtol}, {self.atol}")
        if not (0 < self.dt_initial <= self.dt_max):
            raise ValueError(f"need 0 < dt_initial <= dt_max, got {self.dt_initial}, {self.dt_max}")
        if self.renormalize_every < 0 or self.observe_every_steps < 1:
            raise ValueError("renormalize_every must be >= 0 and observe_every_steps >= 1")
        if self.t_end is None and self.torque_threshold is None:
            raise ValueError("need t_end or torque_threshold")


@dataclass
class StepResult:
    accepted: bool
    error_norm: float
    dt_next: float
    t_new: float
    # derivative at the new state (FSAL stage); None if rejected
    dydt: Optional[np.ndarray] = None


def _eval(rhs, t, y):
    k = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(k)):
        raise NonFiniteRhs(f"rhs returned non-finite values at t={t!r}")
    return k


def rk45_step(rhs: Callable, y: np.ndarray, t: float, dt: float, cfg: IntegratorConfig, k1: Optional[np.ndarray] = None) -> StepResult:
    """One Dormand-Prince attempt; ``y`` is advanced in place only if accepted."""
    if not dt > 0:
        raise ValueError(f"step size must be positive, got {dt!r}")
    ks = [_eval(rhs, t, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y.copy()
        for a, k in zip(_A[i], ks):
            if a:
                yi += (dt * a) * k
        ks.append(_eval(rhs, t + _C[i] * dt, yi))
    y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
    err = np.zeros_like(y)
    for e, k in zip(_E, ks):
        if e:
            err += (dt * e) * k
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    error_norm = float(np.sqrt(np.mean((err / scale) ** 2))) if y.size else 0.0

    if not cfg.adaptive:
        y[...] = y_new
        return StepResult(True, error_norm, dt, t + dt, ks[6])

    if error_norm == 0.0:
        factor = 5.0
    else:
        factor = min(5.0, max(0.2, 0.9 * error_norm ** -0.2))
    dt_next = min(dt * factor, cfg.dt_max)
    if error_norm <= 1.0:
        y[...] = y_new
        return StepResult(True, error_norm, dt_next, t + dt, ks[6])
    if dt_next < DT_MIN:
        raise StepSizeUnderflow(f"step size fell to {dt_next:.3g} s at t={t!r}")
    return StepResult(False, error_norm, dt_next, t, None)


def unit_project(y: np.ndarray, components: int = 3) -> None:
    """Rescale every site's vector to unit length, in place."""
    v = y.reshape(-1, components)
    v /= np.sqrt((v * v).sum(axis=1))[:, None]


def site_max_norm(dydt: np.ndarray, components: int = 3) -> float:
    v = dydt.reshape(-1, components)
    return float(np.sqrt((v * v).sum(axis=1)).max()) if v.size else 0.0


@dataclass
class IntegrationSummary:
    t: float
    steps: int
    rejected: int
    rhs_evaluations: int
    converged: bool
    max_torque: float


def integrate(
    rhs: Callable,
    y: np.ndarray,
    cfg: IntegratorConfig,
    observers: Sequence[Callable] = (),
    t0: float = 0.0,
    components: int = 1,
) -> IntegrationSummary:
    """Advance ``y`` in place to ``cfg.t_end`` or until the torque drops.

    Observers are called as ``obs(t, y, dydt, steps)`` for the initial state,
    every ``observe_every_steps`` accepted steps and the final state.  In
    relax mode (``torque_threshold`` set) integration stops as soon as the
    largest per-site ``|dy/dt|`` is below the threshold; ``t_end``, when
    also given, bounds the relaxation time.  ``components`` is the number of
    consecutive state entries forming one site vector (3 for magnetization);
    it sets the grouping for the torque norm and for renormalization.
    """
    evals = 0

    def counted(t, state):
        nonlocal evals
        evals += 1
        return rhs(t, state)

    relax = cfg.torque_threshold is not None
    t = t0
    dt = cfg.dt_initial
    steps = rejected = 0
    dydt = _eval(counted, t, y)
    observed_at = 0

    def notify():
        nonlocal observed_at
        observed_at = steps
        for obs in observers:
            obs(t, y, dydt, steps)

    notify()
    converged = False
    while steps < cfg.max_steps:
        if relax and site_max_norm(dydt, components) < cfg.torque_threshold:
            converged = True
            break
        if cfg.t_end is not None:
            remaining = cfg.t_end - t
            if remaining <= 0:
                converged = not relax
                break
            clipped = dt >= remaining
            step_dt = remaining if clipped else dt
        else:
            clipped, step_dt = False, dt
        res = rk45_step(counted, y, t, step_dt, cfg, k1=dydt)
        if not res.accepted:
            rejected += 1
            dt = res.dt_next
            continue
        steps += 1
        t = cfg.t_end if clipped else res.t_new
        dydt = res.dydt
        if not clipped or res.dt_next < dt:
            dt = res.dt_next
        if cfg.renormalize_every and steps % cfg.renormalize_every == 0:
            unit_project(y, components)
            dydt = _eval(counted, t, y)
        if steps % cfg.observe_every_steps == 0:
            notify()
    if observed_at != steps:
        notify()
    return IntegrationSummary(t, steps, rejected, evals, converged, site_max_norm(dydt, components))
