"""Observation records, datasets, fold plans and smoothing configuration."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import DataError, DegenerateDesignError, InvalidArgumentError

DEFAULT_FOLDS = 5


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Observation:
    y: float
    d: int
    z: tuple


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcomes ``y``, binary treatment ``d`` and covariates ``z`` (n x q).

    Arrays are copied and made read-only on construction. ``d`` must hold
    exactly 0/1 values; anything else is rejected rather than coerced.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        d_raw = np.asarray(self.d)
        if y.ndim != 1 or d_raw.ndim != 1 or z.ndim != 2:
            raise InvalidArgumentError("y and d must be vectors, z a matrix")
        if not (len(y) == len(d_raw) == z.shape[0]):
            raise InvalidArgumentError(
                f"length mismatch: y={len(y)}, d={len(d_raw)}, z={z.shape[0]}")
        bad = ~np.isin(d_raw, (0, 1))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"treatment must be 0 or 1, got {d_raw[row]!r}", row=row, column="d")
        names = tuple(self.covariate_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise InvalidArgumentError("covariate_names length does not match z")
        object.__setattr__(self, "y", _frozen(y, float))
        object.__setattr__(self, "d", _frozen(d_raw, np.int8))
        object.__setattr__(self, "z", _frozen(z, float))
        object.__setattr__(self, "covariate_names", names)

    @classmethod
    def from_observations(cls, observations: Iterable[Observation], covariate_names=()):
        obs = list(observations)
        if not obs:
            raise DataError("dataset is empty")
        q = len(obs[0].z)
        for i, o in enumerate(obs):
            if len(o.z) != q:
                raise DataError(f"expected {q} covariates, got {len(o.z)}", row=i)
        return cls(
            y=[o.y for o in obs],
            d=[o.d for o in obs],
            z=np.array([o.z for o in obs], dtype=float).reshape(len(obs), q),
            covariate_names=covariate_names,
        )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def q(self) -> int:
        return self.z.shape[1]

    def __len__(self):
        return self.n

    def __iter__(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield Observation(float(self.y[i]), int(self.d[i]), tuple(self.z[i]))

    def subset(self, rows) -> "Dataset":
        return Dataset(self.y[rows], self.d[rows], self.z[rows], self.covariate_names)


def validate_dataset(ds: Dataset, n_folds: Optional[int] = None) -> None:
    """Raise unless every observation and dataset invariant holds."""
    for name, arr in (("y", ds.y), ("z", ds.z)):
        finite = np.isfinite(arr)
        if not finite.all():
            bad = np.argwhere(~finite)[0]
            raise DataError(f"non-finite value in {name}", row=int(bad[0]))
    treated = int(ds.d.sum())
    if treated == 0 or treated == ds.n:
        arm = "control" if treated == ds.n else "treated"
        raise DegenerateDesignError(f"the {arm} arm is empty")
    if n_folds is not None and ds.n < 2 * n_folds:
        raise DegenerateDesignError(f"n={ds.n} is too small for {n_folds} folds")


@dataclass(frozen=True, eq=False)
class FoldPlan:
    assignments: np.ndarray
    n_folds: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "assignments", _frozen(self.assignments, np.int64))

    @property
    def n(self) -> int:
        return len(self.assignments)

    def fold(self, ell: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == ell)

    def folds(self) -> list:
        return [self.fold(ell) for ell in range(self.n_folds)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_folds)


def make_fold_plan(n: int, n_folds: int = DEFAULT_FOLDS, seed: int = 0) -> FoldPlan:
    """Shuffle 0..n-1 with ``seed`` and cut the permutation into contiguous folds.

    The first ``n % n_folds`` folds receive one extra observation.
    """
    if n_folds < 2:
        raise InvalidArgumentError(f"need at least 2 folds, got {n_folds}")
    if n < 2 * n_folds:
        raise InvalidArgumentError(f"n={n} must be at least 2 * n_folds={2 * n_folds}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, n_folds)
    sizes = [base + (1 if ell < extra else 0) for ell in range(n_folds)]
    assignments = np.empty(n, dtype=np.int64)
    start = 0
    for ell, size in enumerate(sizes):
        assignments[perm[start:start + size]] = ell
        start += size
    return FoldPlan(assignments, n_folds, seed)


class Family(str, enum.Enum):
    SIGMOID = "sigmoid"
    LSE = "lse"
    INDICATOR = "indicator"


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing family and margin constants.

    ``s=None`` asks the estimator to pick the MSE-optimal smoothing parameter;
    ``c4=None`` means the upper margin constant is estimated (rule of thumb).
    """

    family: Family = Family.SIGMOID
    s: Optional[float] = None
    alpha4: float = 1.0
    c4: Optional[float] = None
    c6: Optional[float] = None
    c8: Optional[float] = None
    margin_assumed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is not Family.INDICATOR and self.s is not None and not self.s > 0:
            raise InvalidArgumentError(f"smoothing parameter must be positive, got {self.s}")
        if not self.alpha4 > 0:
            raise InvalidArgumentError(f"alpha4 must be positive, got {self.alpha4}")
        for name in ("c4", "c6", "c8"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")
        if (self.c6 is None) != (self.c8 is None):
            raise InvalidArgumentError("c6 and c8 must be given together")
        if self.c6 is not None and self.c4 is not None and self.c6 * self.c8 > self.c4:
            raise InvalidArgumentError("c6 * c8 cannot exceed c4")
