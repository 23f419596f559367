"""Moment functions for max(t, 0) and their derivatives in t.

Every function is vectorized over ``t`` and returns a float for scalar input.
The derivative of the smoothed moment in the CATE value ``t`` is the Riesz
weight of the treated-arm regression; the control-arm weight is its negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Family


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def sigmoid(x):
    return _out(expit(np.asarray(x, dtype=float)))


def m_indicator(t):
    """t * 1{t > 0}."""
    t = np.asarray(t, dtype=float)
    return _out(np.where(t > 0, t, 0.0))


def m_sig(t, s):
    """t / (1 + exp(-s t)); never overflows since expit saturates cleanly."""
    t = np.asarray(t, dtype=float)
    return _out(t * expit(s * t))


def m_lse(t, h):
    """(1/h) log(1 + exp(h t)), written as max(t, 0) + log1p(exp(-h|t|)) / h.

    The split form never rounds below max(t, 0).
    """
    t = np.asarray(t, dtype=float)
    return _out(np.maximum(t, 0.0) + np.log1p(np.exp(-h * np.abs(t))) / h)


def _logistic_density(h):
    # sigmoid(h) sigmoid(-h) = (1 / (2 cosh(h/2)))^2; cosh >= 1 keeps it <= 1/4 after rounding
    half = 0.5 / np.cosh(np.minimum(np.abs(h), 1400.0) / 2.0)
    return half * half


def _a1_of_h(h):
    h = np.asarray(h, dtype=float)
    return expit(h) + h * _logistic_density(h)


def riesz_weight(t, s):
    """A1(s t) = [1 + (1 + h) e^{-h}] / (1 + e^{-h})^2 with h = s t.

    Computed as sigmoid(h) + h sigmoid(h) sigmoid(-h). Equals d m_sig / dt.
    A1(0) = 1/2, A1 -> 1 as h -> inf, A1 -> 0 as h -> -inf.
    """
    return _out(_a1_of_h(s * np.asarray(t, dtype=float)))


def riesz_weight_derivative(h):
    """dA1/dh = e^{-h}[(2 + h) e^{-h} + (2 - h)] / (1 + e^{-h})^3.

    Evaluated as q (2 - h tanh(h/2)) with q = sigmoid(h) sigmoid(-h) <= 1/4;
    since h tanh(h/2) >= 0 the bound |dA1/dh| <= 1/2 also holds in floating point.
    """
    h = np.asarray(h, dtype=float)
    return _out(_logistic_density(h) * (2.0 - h * np.tanh(h / 2.0)))


def lse_weight(t, h):
    """d m_lse / dt = sigmoid(h t)."""
    return _out(expit(h * np.asarray(t, dtype=float)))


def indicator_weight(t):
    t = np.asarray(t, dtype=float)
    return _out(np.where(t > 0, 1.0, 0.0))


def half_ate_limit_check(t, s):
    """m_sig(t, s) - t/2; vanishes as s -> 0."""
    t = np.asarray(t, dtype=float)
    return _out(t * (expit(s * t) - 0.5))


@dataclass(frozen=True)
class MomentEval:
    value: float
    weight_treated: float
    weight_control: float


def moment(t, s, family=Family.SIGMOID):
    """Moment value at CATE ``t`` for ``family``."""
    family = Family(family)
    if family is Family.SIGMOID:
        return m_sig(t, s)
    if family is Family.LSE:
        return m_lse(t, s)
    return m_indicator(t)


def weight(t, s, family=Family.SIGMOID):
    """Treated-arm Riesz weight for ``family``; the control arm uses the negative."""
    family = Family(family)
    if family is Family.SIGMOID:
        return riesz_weight(t, s)
    if family is Family.LSE:
        return lse_weight(t, s)
    return indicator_weight(t)


def evaluate(t: float, s: float, family=Family.SIGMOID) -> MomentEval:
    w = weight(t, s, family)
    return MomentEval(moment(t, s, family), w, -w)
