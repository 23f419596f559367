"""Normal-reference CATE moments and the MSE-optimal smoothing parameter."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .bias import LOG2, kernel_closed
from .errors import DegenerateMomentsError, InvalidArgumentError

# Moments of the simulation CATE, which is Logistic(0, 1): density max 1/4, Var(tau^2) = 16 pi^4/45.
LOGISTIC_P_TAU = 0.25
LOGISTIC_VAR_TAU_SQ = 16 * math.pi ** 4 / 45


class MomentSource(str, enum.Enum):
    RULE_OF_THUMB = "rule_of_thumb"
    KNOWN_TRUTH = "known_truth"


@dataclass(frozen=True)
class CateMoments:
    mu: float
    sigma2: float
    p_tau: float
    var_tau_sq: float
    source: MomentSource = MomentSource.RULE_OF_THUMB

    def __post_init__(self):
        object.__setattr__(self, "source", MomentSource(self.source))
        for name in ("sigma2", "p_tau", "var_tau_sq"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DegenerateMomentsError(f"{name} must be positive and finite, got {v}")

    @classmethod
    def known_truth(cls, p_tau=LOGISTIC_P_TAU, var_tau_sq=LOGISTIC_VAR_TAU_SQ, mu=0.0,
                    sigma2=math.pi ** 2 / 3):
        """Defaults describe a Logistic(0, 1) CATE."""
        return cls(mu, sigma2, p_tau, var_tau_sq, MomentSource.KNOWN_TRUTH)


@dataclass(frozen=True)
class SmoothingChoice:
    c2: float
    s_star: float
    rate_exponent: float
    margin_assumed: bool
    n: int


def estimate_cate_moments(tau_hats) -> CateMoments:
    """Rule-of-thumb moments from CATE estimates, treating them as normal.

    Uses the 1/n variance, p_tau = 1/sqrt(2 pi sigma2) and
    Var(tau^2) = 2 sigma2 (2 mu^2 + sigma2).
    """
    t = np.asarray(tau_hats, dtype=float).ravel()
    if t.size < 2:
        raise InvalidArgumentError("need at least two CATE estimates")
    if not np.isfinite(t).all():
        raise InvalidArgumentError("CATE estimates must be finite")
    mu = float(t.mean())
    sigma2 = float(np.mean(t * t) - mu * mu)
    if not sigma2 > 1e-14 * max(1.0, mu * mu):
        raise DegenerateMomentsError("CATE estimates have zero variance; s* is undefined")
    return CateMoments(mu, sigma2, 1.0 / math.sqrt(2 * math.pi * sigma2),
                       2 * sigma2 * (2 * mu * mu + sigma2), MomentSource.RULE_OF_THUMB)


def _check_n(n):
    if not n >= 1:
        raise InvalidArgumentError(f"sample size must be positive, got {n}")


def c2_opt_margin(moments: CateMoments, alpha4: float, c4: float, n: int) -> SmoothingChoice:
    """Minimizer of c5^2 s^{-2(a+1)} + (Var/16) s^2/n with c5 = c4 * bias kernel.

    s* = c2 n^{1/(2(a+2))}.
    """
    if not c4 > 0:
        raise InvalidArgumentError(f"c4 must be positive, got {c4}")
    if not alpha4 > 0:
        raise InvalidArgumentError(f"alpha4 must be positive, got {alpha4}")
    _check_n(n)
    c5 = c4 * kernel_closed(alpha4)
    expo = 1.0 / (2 * (alpha4 + 2))
    c2 = ((alpha4 + 1) * c5 ** 2 / (moments.var_tau_sq / 16)) ** expo
    return SmoothingChoice(c2, c2 * n ** expo, expo, True, int(n))


def c2_opt_no_margin(moments: CateMoments, n: int) -> SmoothingChoice:
    """c2 = ((2 log 2)^2 / (Var/16))^{1/4}, s* = c2 n^{1/4}."""
    _check_n(n)
    c2 = ((2 * LOG2) ** 2 / (moments.var_tau_sq / 16)) ** 0.25
    return SmoothingChoice(c2, c2 * n ** 0.25, 0.25, False, int(n))


def mse_upper_bound(s, n: int, moments: CateMoments, alpha4: float, c4: float):
    """Worst-case squared bias plus variance of the smoothed estimator at ``s``."""
    s = np.asarray(s, dtype=float)
    c5 = c4 * kernel_closed(alpha4)
    return c5 ** 2 / s ** (2 * (alpha4 + 1)) + moments.var_tau_sq / 16 * s ** 2 / n


def choose_smoothing(moments: CateMoments, n: int, alpha4: float = 1.0, c4=None,
                     margin_assumed: bool = True) -> SmoothingChoice:
    """s* under the margin condition (c4 defaults to p_tau) or without it."""
    if not margin_assumed:
        return c2_opt_no_margin(moments, n)
    return c2_opt_margin(moments, alpha4, moments.p_tau if c4 is None else c4, n)
