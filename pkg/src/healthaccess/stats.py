"""Shared statistical primitives.

Everything here operates on immutable inputs and returns plain result
objects: standardization, QR-based OLS with leverage, variance inflation
factors, Cook's distance influence screening, and Pearson correlation whose
significance runs through an in-house regularized incomplete beta function
(continued-fraction evaluation, ~1e-14 accuracy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ContractError, DegenerateInputError, SingularDesignError


@dataclass
class DataMatrix:
    """Rectangular named numeric table (rows keyed, columns named)."""

    row_keys: list
    columns: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_keys), len(self.columns)):
            raise ContractError("DataMatrix shape mismatch")
        if len(set(self.columns)) != len(self.columns):
            raise ContractError("duplicate column names")
        if len(set(self.row_keys)) != len(self.row_keys):
            raise ContractError("duplicate row keys")

    @property
    def n_rows(self):
        return len(self.row_keys)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def subset_rows(self, keys) -> "DataMatrix":
        idx = {k: i for i, k in enumerate(self.row_keys)}
        rows = [idx[k] for k in keys]
        return DataMatrix(list(keys), list(self.columns), self.values[rows])


def zscore(matrix: DataMatrix) -> DataMatrix:
    """Column-wise standardization to mean 0, sample (n-1) sd 1."""
    values = matrix.values
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    for j, s in enumerate(sd):
        if s == 0.0 or not np.isfinite(s):
            raise DegenerateInputError(
                f"column {matrix.columns[j]!r} has zero variance")
    return DataMatrix(list(matrix.row_keys), list(matrix.columns),
                      (values - mean) / sd)


def zscore_vector(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    sd = y.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateInputError("response has zero variance")
    return (y - y.mean()) / sd


# ---------------------------------------------------------------------------
# ordinary least squares


@dataclass
class OlsFit:
    coefficients: np.ndarray   # intercept first when fitted with one
    column_names: list[str]
    fitted: np.ndarray
    residuals: np.ndarray
    mse: float                 # SSE / (n - p)
    leverage: np.ndarray
    n_params: int


def _design(X, intercept: bool):
    if isinstance(X, DataMatrix):
        mat, names = X.values, list(X.columns)
    else:
        mat = np.asarray(X, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        names = [f"x{j}" for j in range(mat.shape[1])]
    if intercept:
        mat = np.column_stack([np.ones(mat.shape[0]), mat])
        names = ["intercept"] + names
    return mat, names


def ols(y, X, intercept: bool = True) -> OlsFit:
    """Least squares via pivoted QR, with hat-matrix leverages."""
    y = np.asarray(y, dtype=float)
    mat, names = _design(X, intercept)
    n, p = mat.shape
    if len(y) != n:
        raise ContractError("y length does not match X rows")
    if n <= p:
        raise ContractError(f"need more than {p} observations, got {n}")
    Q, R, piv = scipy.linalg.qr(mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < p:
        dependent = [names[j] for j in piv[rank:]]
        raise SingularDesignError(
            f"design is rank deficient; dependent columns: {dependent}",
            dependent_columns=dependent)
    coef_piv = scipy.linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(p)
    coef[piv] = coef_piv
    fitted = mat @ coef
    resid = y - fitted
    mse = float(resid @ resid) / (n - p)
    leverage = np.einsum("ij,ij->i", Q, Q)
    return OlsFit(coefficients=coef, column_names=names, fitted=fitted,
                  residuals=resid, mse=mse, leverage=leverage, n_params=p)


# ---------------------------------------------------------------------------
# collinearity and influence diagnostics


def vif(X: DataMatrix) -> dict[str, float]:
    """Variance inflation factor per column; +inf for (near-)exact collinearity."""
    n, p = X.values.shape
    if p < 3:
        raise ContractError("vif requires at least 3 columns")
    if n < p + 2:
        raise ContractError("vif requires at least columns+2 rows")
    out = {}
    for j, name in enumerate(X.columns):
        yj = X.values[:, j]
        others = np.delete(X.values, j, axis=1)
        mat = np.column_stack([np.ones(n), others])
        coef, *_ = np.linalg.lstsq(mat, yj, rcond=None)
        resid = yj - mat @ coef
        tss = float(((yj - yj.mean()) ** 2).sum())
        if tss == 0.0:
            raise DegenerateInputError(f"column {name!r} has zero variance")
        r2 = 1.0 - float(resid @ resid) / tss
        out[name] = math.inf if 1.0 - r2 <= 1e-10 else 1.0 / (1.0 - r2)
    return out


@dataclass
class InfluenceReport:
    cooks_d: np.ndarray
    threshold: float
    flagged: list        # row keys (or indices) with D above threshold
    row_keys: list
    fit: OlsFit


def cooks_distance(y, X, intercept: bool = True,
                   row_keys: Sequence | None = None) -> InfluenceReport:
    """Cook's distance per observation via the leverage identity, with the
    4/n flagging threshold."""
    fit = ols(y, X, intercept=intercept)
    n = len(fit.residuals)
    h = fit.leverage
    if np.any(h >= 1.0 - 1e-12):
        raise DegenerateInputError(
            "an observation has leverage 1 (it determines its own fit)")
    d = (fit.residuals ** 2 / (fit.n_params * fit.mse)) * (h / (1.0 - h) ** 2)
    threshold = 4.0 / n
    keys = list(row_keys) if row_keys is not None else list(range(n))
    flagged = [keys[i] for i in range(n) if d[i] > threshold]
    return InfluenceReport(cooks_d=d, threshold=threshold, flagged=flagged,
                           row_keys=keys, fit=fit)


# ---------------------------------------------------------------------------
# t distribution via the regularized incomplete beta function


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Lentz continued fraction for the incomplete beta (NR style)."""
    eps = 1e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to ~1e-14."""
    if not (a > 0 and b > 0):
        raise ContractError("betainc_regularized requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _beta_cont_frac(a, b, x) / a
    return 1.0 - bt * _beta_cont_frac(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ContractError("df must be positive")
    x = df / (df + t * t)
    p = 0.5 * betainc_regularized(df / 2.0, 0.5, x)
    return p if t >= 0 else 1.0 - p


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|)."""
    if df <= 0:
        raise ContractError("df must be positive")
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# correlation


@dataclass
class PearsonResult:
    r: float
    p_value: float
    n: int


def pearson(x, y) -> PearsonResult:
    """Sample correlation with a two-sided t test p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("pearson expects two equal-length vectors")
    n = len(x)
    if n < 3:
        raise ContractError("pearson requires n >= 3")
    xd, yd = x - x.mean(), y - y.mean()
    sxx, syy = float(xd @ xd), float(yd @ yd)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("pearson requires nonconstant inputs")
    r = float(xd @ yd) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return PearsonResult(r=r, p_value=0.0, n=n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return PearsonResult(r=r, p_value=t_two_sided_p(t, n - 2), n=n)


# ---------------------------------------------------------------------------
# survey validation


@dataclass
class ValidationReport:
    r_pre: float
    p_pre: float
    n_pre: int
    r_post: float
    p_post: float
    n_post: int
    removed: list
    threshold: float

    def to_dict(self) -> dict:
        return {"r_pre": self.r_pre, "p_pre": self.p_pre, "n_pre": self.n_pre,
                "r_post": self.r_post, "p_post": self.p_post,
                "n_post": self.n_post,
                "removed": [list(k) for k in self.removed],
                "threshold": self.threshold}


def validate_against_survey(scores: Mapping[tuple[str, str], float],
                            survey) -> ValidationReport:
    """Correlate state-month perception scores with the survey delayed ratio,
    before and after removing high-influence observations (Cook's D > 4/n).

    The regression runs delayed_ratio on score; Pearson r is direction-free.
    """
    survey_map = survey.as_map() if hasattr(survey, "as_map") else dict(survey)
    keys = sorted(set(scores) & set(survey_map))
    if len(keys) < 10:
        raise ContractError(
            f"only {len(keys)} joined (state, month) pairs; need >= 10")
    x = np.array([scores[k] for k in keys])
    y = np.array([survey_map[k] for k in keys])
    pre = pearson(x, y)
    influence = cooks_distance(y, x, row_keys=keys)
    removed = list(influence.flagged)
    keep = [i for i, k in enumerate(keys) if k not in set(removed)]
    if len(keep) < 3:
        raise DegenerateInputError("influence filter removed nearly all data")
    post = pearson(x[keep], y[keep])
    return ValidationReport(r_pre=pre.r, p_pre=pre.p_value, n_pre=pre.n,
                            r_post=post.r, p_post=post.p_value, n_post=post.n,
                            removed=removed, threshold=influence.threshold)
