"""Shared data model for ATE estimation: datasets, nuisance estimates, results."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

METHODS = ("imp", "iptw", "aiptw", "tmle", "dsm", "pencomp")
MODEL_KINDS = ("glm", "gam", "sl")
VARIANCE_SOURCES = ("analytic", "bootstrap", "wild_bootstrap", "rubin", "none")

DEFAULT_PS_EPS = 0.01


class DataError(ValueError):
    """Base class for invalid input data."""


class EmptyArm(DataError):
    pass


class NonFinite(DataError):
    pass


class NonBinaryTreatment(DataError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CausalDataset:
    """Covariates ``X`` (n x p), binary treatment ``A`` and outcome ``Y``.

    ``ids`` is a stable unit identifier used to seed per-unit randomness and
    to order units canonically, so that stochastic estimators do not depend
    on row order. Construct through :func:`validate_dataset`.
    """

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...]
    ids: np.ndarray

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CausalDataset):
            return NotImplemented
        return (
            self.column_names == other.column_names
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.Y, other.Y)
            and np.array_equal(self.ids, other.ids)
        )

    __hash__ = None  # type: ignore[assignment]

    def subset(self, rows: np.ndarray, *, renumber: bool = False) -> "CausalDataset":
        """Rows ``rows`` as a new validated dataset (ids renumbered 0..k-1 if asked)."""
        ids = np.arange(len(rows)) if renumber else self.ids[rows]
        return validate_dataset(self.X[rows], self.A[rows], self.Y[rows], self.column_names, ids)

    def canonical_order(self) -> np.ndarray:
        """Row permutation that sorts units by id."""
        return np.argsort(self.ids, kind="stable")


def validate_dataset(
    X,
    A=None,
    Y=None,
    column_names: Sequence[str] | None = None,
    ids=None,
) -> CausalDataset:
    """Validate raw arrays and return an immutable :class:`CausalDataset`.

    Inputs are copied, never mutated. Passing an existing dataset returns an
    equal dataset.
    """
    if isinstance(X, CausalDataset):
        d = X
        return CausalDataset(d.X, d.A, d.Y, d.column_names, d.ids)

    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DataError("X must be a 2-d matrix")
    A = np.asarray(A, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    n = Y.shape[0]
    if X.shape[0] != n or A.shape[0] != n:
        raise DataError(f"length mismatch: X has {X.shape[0]} rows, A {A.shape[0]}, Y {n}")
    if n < 2:
        raise DataError("need at least 2 units")
    for name, arr in (("X", X), ("A", A), ("Y", Y)):
        if not np.all(np.isfinite(arr)):
            raise NonFinite(f"non-finite value in {name}")
    bad = np.flatnonzero((A != 0) & (A != 1))
    if bad.size:
        raise NonBinaryTreatment(f"treatment value {A[bad[0]]!r} at row {bad[0]} is not 0/1", row=int(bad[0]))
    n1 = int(A.sum())
    if n1 == 0 or n1 == n:
        raise EmptyArm("both treatment arms must be non-empty")

    if column_names is None:
        column_names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
    column_names = tuple(str(c) for c in column_names)
    if len(column_names) != X.shape[1]:
        raise DataError("column_names length does not match X")
    if ids is None:
        ids = np.arange(n)
    ids = np.asarray(ids).ravel()
    if ids.shape[0] != n:
        raise DataError("ids length does not match")
    ids = np.array(ids, dtype=np.int64, copy=True)
    ids.setflags(write=False)
    return CausalDataset(_frozen(X), _frozen(A), _frozen(Y), column_names, ids)


@dataclass(frozen=True, eq=False)
class NuisanceEstimates:
    """Per-unit propensity and arm-specific outcome predictions.

    ``e_hat`` is clamped to ``[eps, 1 - eps]``; ``n_clamped`` counts how many
    raw propensities were moved by the clamp.
    """

    e_hat: np.ndarray
    m1_hat: np.ndarray
    m0_hat: np.ndarray
    model_kind: str = "glm"
    eps: float = DEFAULT_PS_EPS
    n_clamped: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not (0 < self.eps < 0.5):
            raise ValueError("eps must be in (0, 0.5)")
        n = self.e_hat.shape[0]
        if self.m1_hat.shape[0] != n or self.m0_hat.shape[0] != n:
            raise ValueError("nuisance vectors must share length")
        for name in ("e_hat", "m1_hat", "m0_hat"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFinite(f"non-finite {name}")
        if np.any(self.e_hat < self.eps) or np.any(self.e_hat > 1 - self.eps):
            raise ValueError("e_hat violates clamp bounds")

    @classmethod
    def build(cls, e_raw, m1, m0, model_kind: str = "glm", eps: float = DEFAULT_PS_EPS,
              flags: Sequence[str] = ()) -> "NuisanceEstimates":
        e_raw = np.asarray(e_raw, dtype=float).ravel()
        e = np.clip(e_raw, eps, 1 - eps)
        n_clamped = int(np.count_nonzero(e != e_raw))
        return cls(_frozen(e), _frozen(np.asarray(m1, dtype=float).ravel()),
                   _frozen(np.asarray(m0, dtype=float).ravel()), model_kind, eps, n_clamped, tuple(flags))

    def subset(self, rows) -> "NuisanceEstimates":
        return NuisanceEstimates(_frozen(self.e_hat[rows]), _frozen(self.m1_hat[rows]),
                                 _frozen(self.m0_hat[rows]), self.model_kind, self.eps,
                                 self.n_clamped, self.flags)


@dataclass(frozen=True)
class AteEstimate:
    method: str
    model_kind: str
    point: float
    se: float
    ci_lo: float
    ci_hi: float
    level: float = 0.95
    variance_source: str = "analytic"
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.variance_source not in VARIANCE_SOURCES:
            raise ValueError(f"unknown variance source {self.variance_source!r}")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.variance_source == "none":
            return
        if not self.se >= 0:
            raise ValueError("se must be non-negative")
        if not self.ci_lo <= self.ci_hi:
            raise ValueError("ci_lo must not exceed ci_hi")

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo

    @classmethod
    def point_only(cls, method: str, model_kind: str, point: float, level: float = 0.95,
                   flags: Sequence[str] = ()) -> "AteEstimate":
        nan = math.nan
        return cls(method, model_kind, float(point), nan, nan, nan, level, "none", tuple(flags))
