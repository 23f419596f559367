"""Worst-case smoothing bias, folded-normal critical values and bias-aware intervals."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import expit, ndtr, ndtri

from .errors import InvalidArgumentError, NumericError

QUAD_TOL = 1e-9
LOG2 = math.log(2.0)


class BoundMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class BiasBound:
    upper: float
    lower: Optional[float]
    alpha4: float
    s: float
    method: BoundMethod


@dataclass(frozen=True)
class BiasAwareCI:
    center: float
    se: float
    bias_bound: float
    critical_value: float
    lo: float
    hi: float
    level: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@lru_cache(maxsize=None)
def _bernoulli_fraction(m: int) -> Fraction:
    if m == 0:
        return Fraction(1)
    # sum_{k=0}^{m} C(m+1, k) B_k = 0
    acc = sum(math.comb(m + 1, k) * _bernoulli_fraction(k) for k in range(m))
    return -acc / (m + 1)


def bernoulli_number(m: int) -> float:
    """B_m with the B_1 = -1/2 convention, exact up to the final float conversion."""
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise InvalidArgumentError(f"Bernoulli index must be a natural number, got {m!r}")
    if m > 20:
        raise InvalidArgumentError("Bernoulli numbers are only supported up to m = 20")
    return float(_bernoulli_fraction(int(m)))


def even_order(alpha4: float) -> Optional[int]:
    """alpha4 + 1 as an int when it is an even natural number, else None."""
    k = alpha4 + 1
    if float(k).is_integer() and int(k) % 2 == 0 and int(k) >= 2:
        return int(k)
    return None


def kernel_closed(alpha4: float) -> float:
    """pi^k (2^k - 2) |B_k| with k = alpha4 + 1; the k-th absolute moment of Logistic(0, 1)."""
    k = even_order(alpha4)
    if k is None:
        raise InvalidArgumentError(
            f"closed form needs alpha4 + 1 to be an even natural number (alpha4={alpha4}); "
            "use the quadrature bound instead")
    return math.pi ** k * (2 ** k - 2) * abs(bernoulli_number(k))


def kernel_quadrature(alpha4: float) -> float:
    """2 * int_{1/2}^{1} [log(p / (1 - p))]^(alpha4 + 1) dp.

    With u = logit(p) this is 2 * int_0^inf u^k sigmoid(u) sigmoid(-u) du,
    which has no endpoint singularity.
    """
    if not alpha4 >= 0:
        raise InvalidArgumentError(f"alpha4 must be nonnegative, got {alpha4}")
    k = alpha4 + 1.0

    def integrand(u):
        return u ** k * expit(u) * expit(-u)

    value, err = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-13, limit=200)
    if not err < QUAD_TOL:
        raise NumericError(f"bias kernel quadrature reached only {err:.2e}")
    return 2.0 * value


def _lower(c6, c8, kernel, s, alpha4):
    if c6 is None or c8 is None:
        return None
    return c6 * c8 * kernel * s ** (-(alpha4 + 1))


def _check_bound_args(c4, s):
    if not c4 > 0:
        raise InvalidArgumentError(f"c4 must be positive, got {c4}")
    if not s > 0:
        raise InvalidArgumentError(f"smoothing parameter must be positive, got {s}")


def bias_bound_closed(c4: float, alpha4: float, s: float, c6=None, c8=None) -> BiasBound:
    _check_bound_args(c4, s)
    kernel = kernel_closed(alpha4)
    upper = c4 * kernel * s ** (-(alpha4 + 1))
    return BiasBound(upper, _lower(c6, c8, kernel, s, alpha4), alpha4, s, BoundMethod.CLOSED_FORM)


def bias_bound_quadrature(c4: float, alpha4: float, s: float, c6=None, c8=None) -> BiasBound:
    _check_bound_args(c4, s)
    kernel = kernel_quadrature(alpha4)
    upper = c4 * kernel * s ** (-(alpha4 + 1))
    return BiasBound(upper, _lower(c6, c8, kernel, s, alpha4), alpha4, s, BoundMethod.QUADRATURE)


def bias_bound(c4: float, alpha4: float, s: float, c6=None, c8=None) -> BiasBound:
    """Closed form when it applies, quadrature otherwise."""
    if even_order(alpha4) is not None:
        return bias_bound_closed(c4, alpha4, s, c6, c8)
    return bias_bound_quadrature(c4, alpha4, s, c6, c8)


def bias_bound_no_margin(s: float) -> BiasBound:
    """2 log 2 / s, the bound without any margin condition."""
    if not s > 0:
        raise InvalidArgumentError(f"smoothing parameter must be positive, got {s}")
    return BiasBound(2 * LOG2 / s, None, 0.0, s, BoundMethod.CLOSED_FORM)


# --- analytic CATE densities used as a numerical check on the bias ------------------------


@dataclass(frozen=True)
class LogisticDensity:
    loc: float = 0.0
    scale: float = 1.0

    def pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return expit(u) * expit(-u) / self.scale


@dataclass(frozen=True)
class NormalDensity:
    mean: float = 0.0
    sd: float = 1.0

    def pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * u * u) / (self.sd * math.sqrt(2 * math.pi))

    def positive_part_mean(self) -> float:
        """E[tau 1{tau > 0}] = mu Phi(mu/sigma) + sigma phi(mu/sigma)."""
        r = self.mean / self.sd
        return self.mean * float(ndtr(r)) + self.sd * math.exp(-0.5 * r * r) / math.sqrt(2 * math.pi)


def _quad(f, a, b, points=None):
    kwargs = dict(epsabs=1e-12, epsrel=1e-12, limit=500)
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = points
    value, err = integrate.quad(f, a, b, **kwargs)
    if not err < QUAD_TOL:
        raise NumericError(f"quadrature reached only {err:.2e}")
    return value


def _check_density(density):
    if not isinstance(density, (LogisticDensity, NormalDensity)):
        raise InvalidArgumentError(f"unsupported CATE density {density!r}")


def positive_part_mean(density) -> float:
    """E[tau 1{tau > 0}] by quadrature."""
    _check_density(density)
    return _quad(lambda t: t * density.pdf(t), 0.0, np.inf)


def bias_oracle_prop2(density, s: float) -> float:
    """E[m_sig(tau, s)] - E[max(tau, 0)] for an analytic CATE density.

    The difference m_sig - max = -|t| sigmoid(-s|t|) is integrated after the
    substitution u = s|t|, so very large ``s`` stays accurate.
    """
    _check_density(density)
    if not s > 0:
        raise InvalidArgumentError(f"smoothing parameter must be positive, got {s}")

    def integrand(u):
        t = u / s
        return u * expit(-u) * (density.pdf(t) + density.pdf(-t))

    return -_quad(integrand, 0.0, np.inf) / (s * s)


def smoothed_welfare(density, s: float) -> float:
    """E[m_sig(tau, s)] under ``density``."""
    return positive_part_mean(density) + bias_oracle_prop2(density, s)


# --- inference ---------------------------------------------------------------------------


def folded_normal_cdf(c, bias_ratio):
    c = np.asarray(c, dtype=float)
    return ndtr(c - bias_ratio) - ndtr(-c - bias_ratio)


def folded_normal_cv(bias_ratio: float, level: float = 0.95, tol: float = 1e-10) -> float:
    """Level quantile of |N(A, 1)| by bisection."""
    if not bias_ratio >= 0:
        raise InvalidArgumentError(f"bias ratio must be nonnegative, got {bias_ratio}")
    if not 0 < level < 1:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    z = float(ndtri(0.5 + level / 2))
    lo, hi = z, bias_ratio + z + 10.0
    # for huge ratios the bracket cannot shrink below a few ulps of hi
    floor = max(tol, 4 * np.finfo(float).eps * hi)
    while hi - lo > floor:
        mid = 0.5 * (lo + hi)
        if folded_normal_cdf(mid, bias_ratio) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def formula_se(s: float, n: int, var_tau_sq: float) -> float:
    """sqrt((s^2 / n) * Var(tau^2) / 16)."""
    return math.sqrt(s * s / n * var_tau_sq / 16.0)


def build_ci(theta_hat: float, s: float, n: int, moments, bound: BiasBound,
             level: float = 0.95) -> BiasAwareCI:
    if not (math.isfinite(theta_hat) and math.isfinite(s)):
        raise NumericError("non-finite estimate or smoothing parameter")
    se = formula_se(s, n, moments.var_tau_sq)
    if not se > 0:
        raise NumericError("standard error is zero")
    cv = folded_normal_cv(bound.upper / se, level)
    return BiasAwareCI(theta_hat, se, bound.upper, cv, theta_hat - cv * se, theta_hat + cv * se,
                       level)
