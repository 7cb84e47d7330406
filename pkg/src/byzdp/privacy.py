"""Gaussian-mechanism calibration for per-step, per-worker (epsilon, delta)-DP.

The honest worker releases the mean of b clipped per-point gradients computed
on a without-replacement sample from m points, plus N(0, s^2 I_d) noise. The
noise scale

    s = 2C / (b ln((e^eps - 1) m / b + 1)) * sqrt(2 ln(1.25 b / (m delta)))

makes each such release (eps, delta)-DP: the mean-gradient sensitivity is
2C/b, the Gaussian mechanism then gives an inner budget of
(ln((e^eps - 1) m/b + 1), m delta / b), and sub-sampling amplification brings
that back down to (eps, delta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ContractViolationError


class PrivacyRegimeWarning(UserWarning):
    """The inner budget left the (0, 1) range the Gaussian-mechanism bound is stated for."""


# ------------------------------------------------------------- calibration

def sensitivity_mean_grad(c: float, b: int) -> float:
    """Worst-case change of the b-point mean of norm-C-clipped gradients: 2C/b."""
    if not c > 0:
        raise ContractViolationError("clip bound must be positive")
    if b < 1:
        raise ContractViolationError("batch size must be >= 1")
    return 2.0 * c / b


def amplified_epsilon(epsilon: float, b: int, m: int) -> float:
    """Sub-sampling amplification: ln(1 + (b/m)(e^eps - 1)).

    Strictly below epsilon for b < m, equal at b = m.
    """
    if not epsilon > 0:
        raise ContractViolationError("epsilon must be positive")
    if not 1 <= b <= m:
        raise ContractViolationError("need 1 <= b <= m")
    return math.log1p((b / m) * math.expm1(epsilon))


def inner_epsilon(epsilon: float, b: int, m: int) -> float:
    """Inverse of the amplification map: the budget the inner mechanism must meet."""
    if not epsilon > 0:
        raise ContractViolationError("epsilon must be positive")
    if not 1 <= b <= m:
        raise ContractViolationError("need 1 <= b <= m")
    return math.log1p((m / b) * math.expm1(epsilon))


def noise_scale(c: float, b: int, m: int, epsilon: float, delta: float) -> float:
    """Noise standard deviation for per-step (epsilon, delta)-DP at one worker.

    Emits PrivacyRegimeWarning when the inner budget is >= 1, which happens
    for small b/m even with epsilon < 1; the closed form is still evaluated
    as written.
    """
    if not 0 < epsilon < 1:
        raise CalibrationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < delta < 1:
        raise CalibrationError(f"delta must lie in (0, 1), got {delta}")
    if not 1 <= b <= m:
        raise CalibrationError(f"need 1 <= b <= m, got b={b}, m={m}")
    if not c > 0:
        raise CalibrationError("clip bound must be positive")
    log_arg = 1.25 * b / (m * delta)
    if not log_arg > 1.0:
        raise CalibrationError(
            f"need 1.25 b / (m delta) > 1 for a positive log factor, got {log_arg}")
    eps_inner = inner_epsilon(epsilon, b, m)
    if eps_inner >= 1.0:
        warnings.warn(
            f"inner budget {eps_inner:.4f} >= 1 is outside the stated range of the "
            "Gaussian-mechanism bound", PrivacyRegimeWarning, stacklevel=2)
    return (2.0 * c / (b * eps_inner)) * math.sqrt(2.0 * math.log(log_arg))


def gaussian_noise(d: int, s: float, rng: np.random.Generator) -> np.ndarray:
    """d independent N(0, s^2) draws; s = 0 returns zeros without touching rng."""
    if d < 1:
        raise ContractViolationError("dimension must be >= 1")
    if s < 0:
        raise ContractViolationError("noise scale must be nonnegative")
    if s == 0.0:
        return np.zeros(d)
    return rng.normal(0.0, s, d)


# ------------------------------------------------------------------- types

@dataclass(frozen=True)
class PrivacyParams:
    """A calibrated per-step, per-worker privacy budget.

    The derived fields are recomputed and cross-checked on construction, so a
    PrivacyParams instance always carries the noise scale that matches its
    (epsilon, delta, c, b, m).
    """

    epsilon: float
    delta: float
    c: float
    b: int
    m: int
    s: float = field(default=None)
    epsilon_inner: float = field(default=None)

    def __post_init__(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PrivacyRegimeWarning)
            s = noise_scale(self.c, self.b, self.m, self.epsilon, self.delta)
        eps_inner = inner_epsilon(self.epsilon, self.b, self.m)
        if self.s is None:
            object.__setattr__(self, "s", s)
        elif not math.isclose(self.s, s, rel_tol=1e-12):
            raise CalibrationError("stored noise scale does not match the closed form")
        if self.epsilon_inner is None:
            object.__setattr__(self, "epsilon_inner", eps_inner)
        elif not math.isclose(self.epsilon_inner, eps_inner, rel_tol=1e-12):
            raise CalibrationError("stored inner epsilon does not match the closed form")


@dataclass(frozen=True)
class CompositionReport:
    """Overall budget of T repetitions of a per-step (epsilon, delta) release."""

    steps: int
    per_step: tuple[float, float]
    basic: tuple[float, float]
    advanced: tuple[float, float]
    delta_slack: float

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "per_step_epsilon": self.per_step[0],
            "per_step_delta": self.per_step[1],
            "basic_epsilon": self.basic[0],
            "basic_delta": self.basic[1],
            "advanced_epsilon": self.advanced[0],
            "advanced_delta": self.advanced[1],
            "delta_slack": self.delta_slack,
        }


def compose(epsilon: float, delta: float, steps: int,
            delta_slack: float = 1e-4) -> CompositionReport:
    """Basic and advanced composition of T identical (epsilon, delta) steps.

    basic:    (T eps, T delta)
    advanced: (eps sqrt(2 T ln(1/slack)) + T eps (e^eps - 1), T delta + slack)
    """
    if steps < 1:
        raise ContractViolationError("steps must be >= 1")
    if not 0 < delta_slack < 1:
        raise ContractViolationError("delta slack must lie in (0, 1)")
    basic = (steps * epsilon, steps * delta)
    adv_eps = (epsilon * math.sqrt(2.0 * steps * math.log(1.0 / delta_slack))
               + steps * epsilon * math.expm1(epsilon))
    advanced = (adv_eps, steps * delta + delta_slack)
    return CompositionReport(steps, (epsilon, delta), basic, advanced, delta_slack)
