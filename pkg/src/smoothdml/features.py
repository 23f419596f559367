"""Polynomial/interaction dictionaries b(z) and their frozen standardization."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class DictionarySpec:
    """Recipe for a dictionary.

    ``power_terms`` holds ``(index, max_degree)`` pairs and contributes
    z_j, z_j^2, ..., z_j^max_degree for each pair. ``noise_columns`` appends
    independent standard-normal columns drawn from the design seed.
    """

    include_intercept: bool = True
    power_terms: tuple = ()
    interactions: tuple = ()
    noise_columns: int = 0
    standardize: bool = True

    def __post_init__(self):
        power = tuple((int(j), int(deg)) for j, deg in self.power_terms)
        inter = tuple((int(a), int(b)) for a, b in self.interactions)
        object.__setattr__(self, "power_terms", power)
        object.__setattr__(self, "interactions", inter)
        for j, deg in power:
            if deg < 1:
                raise InvalidArgumentError(f"degree for covariate {j} must be >= 1")
            if j < 0:
                raise InvalidArgumentError(f"negative covariate index {j}")
        for a, b in inter:
            if a == b or a < 0 or b < 0:
                raise InvalidArgumentError(f"invalid interaction pair ({a}, {b})")
        if self.noise_columns < 0:
            raise InvalidArgumentError("noise_columns must be >= 0")

    @property
    def dimension(self) -> int:
        return (int(self.include_intercept) + sum(deg for _, deg in self.power_terms)
                + len(self.interactions) + self.noise_columns)

    def max_index(self) -> int:
        idx = [j for j, _ in self.power_terms] + [k for pair in self.interactions for k in pair]
        return max(idx, default=-1)

    def check(self, q: int) -> None:
        if self.max_index() >= q:
            raise InvalidArgumentError(
                f"dictionary references covariate {self.max_index()} but only {q} exist")


def _all_pairs(q):
    return tuple(itertools.combinations(range(q), 2))


def _sim_spec(degree, noise=0):
    return DictionarySpec(
        include_intercept=True,
        power_terms=tuple((j, degree) for j in range(6)),
        interactions=_all_pairs(6) if degree > 2 else (),
        noise_columns=noise,
    )


# Empirical presets assume the column order age, education, black, hispanic, prevearn.
_AGE, _EDUC, _BLACK, _HISP, _PREV = range(5)

PRESETS = {
    "sim1": _sim_spec(2),
    "sim2": _sim_spec(3),
    "sim3": _sim_spec(6, noise=6),
    "emp1": DictionarySpec(
        power_terms=((_AGE, 2), (_EDUC, 2), (_BLACK, 1), (_HISP, 1), (_PREV, 2)),
        interactions=_all_pairs(5)),
    "emp2": DictionarySpec(
        power_terms=((_AGE, 3), (_EDUC, 3), (_BLACK, 1), (_HISP, 1), (_PREV, 3))),
    "emp3": DictionarySpec(
        power_terms=((_AGE, 4), (_EDUC, 4), (_BLACK, 1), (_HISP, 1), (_PREV, 3))),
    "emp4": DictionarySpec(
        power_terms=((_AGE, 6), (_EDUC, 6), (_BLACK, 1), (_HISP, 1), (_PREV, 3)),
        interactions=_all_pairs(5)),
}


def get_preset(name: str) -> DictionarySpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown dictionary preset {name!r}; choose from {sorted(PRESETS)}") from None


def draw_noise(spec: DictionarySpec, n: int, seed) -> Optional[np.ndarray]:
    if spec.noise_columns == 0:
        return None
    return np.random.default_rng(seed).standard_normal((n, spec.noise_columns))


def column_names(spec: DictionarySpec, covariate_names=None) -> list:
    q = spec.max_index() + 1
    names = list(covariate_names) if covariate_names else [f"z{j + 1}" for j in range(q)]
    out = ["intercept"] if spec.include_intercept else []
    for j, deg in spec.power_terms:
        out += [names[j] if k == 1 else f"{names[j]}^{k}" for k in range(1, deg + 1)]
    out += [f"{names[a]}*{names[b]}" for a, b in spec.interactions]
    out += [f"noise{k + 1}" for k in range(spec.noise_columns)]
    return out


def expand(spec: DictionarySpec, z: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Raw (unstandardized) dictionary evaluated at the rows of ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    spec.check(z.shape[1])
    n = z.shape[0]
    cols = []
    if spec.include_intercept:
        cols.append(np.ones(n))
    for j, deg in spec.power_terms:
        cols += [z[:, j] ** k for k in range(1, deg + 1)]
    for a, b in spec.interactions:
        cols.append(z[:, a] * z[:, b])
    if spec.noise_columns:
        if noise is None:
            raise InvalidArgumentError(f"dictionary needs {spec.noise_columns} noise columns")
        noise = np.atleast_2d(np.asarray(noise, dtype=float))
        if noise.shape != (n, spec.noise_columns):
            raise InvalidArgumentError(
                f"noise must have shape {(n, spec.noise_columns)}, got {noise.shape}")
        cols += list(noise.T)
    if not cols:
        return np.empty((n, 0))
    return np.column_stack(cols)


def standardization(spec: DictionarySpec, raw: np.ndarray):
    """Column means and sds (ddof=0) of ``raw``; identity where not standardized.

    The intercept is never touched. A constant non-intercept column is left
    unstandardized with a warning.
    """
    p = raw.shape[1]
    means = np.zeros(p)
    sds = np.ones(p)
    if not spec.standardize or raw.shape[0] == 0:
        return means, sds
    start = int(spec.include_intercept)
    m = raw[:, start:].mean(axis=0)
    sd = raw[:, start:].std(axis=0)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(m))
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant dictionary column(s) left unstandardized",
                      RuntimeWarning, stacklevel=2)
    means[start:] = np.where(constant, 0.0, m)
    sds[start:] = np.where(constant, 1.0, sd)
    return means, sds


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple
    column_means: np.ndarray
    column_sds: np.ndarray
    spec: DictionarySpec
    noise: Optional[np.ndarray] = None
    n_covariates: Optional[int] = None

    @property
    def p(self) -> int:
        return self.values.shape[1]


def build_design(ds: Dataset, spec: DictionarySpec, seed=0, fit_rows=None,
                 noise: Optional[np.ndarray] = None) -> DesignMatrix:
    """Realize ``spec`` on ``ds``.

    Standardization statistics come from ``fit_rows`` (all rows by default)
    and are then applied to every row. ``seed`` only feeds the noise columns.
    """
    spec.check(ds.q)
    if noise is None:
        noise = draw_noise(spec, ds.n, seed)
    raw = expand(spec, ds.z, noise)
    fit = raw if fit_rows is None else raw[fit_rows]
    means, sds = standardization(spec, fit)
    values = (raw - means) / sds
    return DesignMatrix(values, tuple(column_names(spec, ds.covariate_names)), means, sds, spec,
                        noise, ds.q)


def apply_transform(dm: DesignMatrix, z, noise=None) -> np.ndarray:
    """Feature vector for a single covariate vector, using the frozen statistics."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise InvalidArgumentError("apply_transform expects one covariate vector")
    expected = dm.n_covariates if dm.n_covariates is not None else dm.spec.max_index() + 1
    if z.shape[0] != expected:
        raise InvalidArgumentError(
            f"covariate vector has length {z.shape[0]}, expected {expected}")
    if noise is not None:
        noise = np.asarray(noise, dtype=float)[None, :]
    raw = expand(dm.spec, z[None, :], noise)[0]
    return (raw - dm.column_means) / dm.column_sds
