"""Single-response SIMPLS partial least squares with permutation inference.

``SimplsRegressor`` follows the scikit-learn estimator contract
(fit/predict/transform, get_params) so it composes with model-selection
tooling; the functional wrappers below add the permutation-derived p-values
and standard errors, cross-validated component selection, and the
county-level regression driver that emits a coefficient table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.model_selection import KFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ContractError, DegenerateInputError
from .stats import DataMatrix, vif as compute_vif, zscore, zscore_vector


def _simpls_core(Xc: np.ndarray, yc: np.ndarray, n_components: int):
    """Component loop on pre-centered data.

    Returns (R, P, V, Q, T, U, n_extracted, exhausted); raises
    DegenerateInputError when X'y is numerically zero from the start.
    """
    n, p = Xc.shape
    s = Xc.T @ yc
    tol = max(1e-14, 1e-12 * np.linalg.norm(s))
    R = np.zeros((p, n_components))
    P = np.zeros((p, n_components))
    V = np.zeros((p, n_components))
    Q = np.zeros(n_components)
    T = np.zeros((n, n_components))
    U = np.zeros((n, n_components))
    a = 0
    exhausted = False
    while a < n_components:
        if np.linalg.norm(s) <= tol:
            exhausted = True
            break
        r = s.copy()
        t = Xc @ r
        norm_t = np.linalg.norm(t)
        if norm_t <= 1e-14:
            exhausted = True
            break
        t /= norm_t
        r /= norm_t
        p_vec = Xc.T @ t
        q = float(yc @ t)
        u = yc * q
        v = p_vec.copy()
        if a > 0:
            # two Gram-Schmidt passes: one is not enough to keep the basis
            # (and hence the scores) orthogonal once components degenerate
            v -= V[:, :a] @ (V[:, :a].T @ v)
            v -= V[:, :a] @ (V[:, :a].T @ v)
            u -= T[:, :a] @ (T[:, :a].T @ u)
        v /= np.linalg.norm(v)
        s = s - v * (v @ s)
        if a > 0:
            s -= V[:, :a] @ (V[:, :a].T @ s)
        R[:, a], P[:, a], V[:, a], Q[a], T[:, a], U[:, a] = r, p_vec, v, q, t, u
        a += 1
    if a == 0:
        raise DegenerateInputError(
            "X'y is numerically zero; no covariance to model")
    return R, P, V, Q, T, U, a, exhausted


class SimplsRegressor(BaseEstimator, RegressorMixin):
    """PLS regression solved by direct deflation of the X'y cross-product.

    Each component's weight direction maximizes covariance with the response
    subject to orthogonality of the score vectors, enforced by projecting the
    cross-product against the orthonormalized loading basis. Scores are
    normalized to unit length. Inputs are centered internally; pass
    standardized data when coefficients should be scale-free.

    Attributes (after fit): ``x_weights_`` (p, A), ``x_loadings_`` (p, A),
    ``y_loadings_`` (A,), ``x_scores_`` (n, A), ``y_scores_`` (n, A),
    ``coef_`` (p,), ``x_means_``, ``y_mean_``, ``n_components_`` (components
    actually extracted), ``exhausted_`` (True when the residual covariance
    ran out early).
    """

    def __init__(self, n_components: int = 2):
        self.n_components = n_components

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        n, p = X.shape
        if self.n_components < 1:
            raise ContractError("n_components must be >= 1")
        self.x_means_ = X.mean(axis=0)
        self.y_mean_ = float(y.mean())
        Xc = X - self.x_means_
        yc = y - self.y_mean_
        rank = np.linalg.matrix_rank(Xc)
        if self.n_components > min(rank, n - 1):
            raise ContractError(
                f"n_components={self.n_components} exceeds usable rank "
                f"{min(rank, n - 1)}")

        R, P, V, Q, T, U, a, exhausted = _simpls_core(Xc, yc, self.n_components)
        if exhausted:
            warnings.warn(
                f"residual covariance exhausted after {a} of "
                f"{self.n_components} components", stacklevel=2)
        self.x_weights_ = R[:, :a]
        self.x_loadings_ = P[:, :a]
        self.y_loadings_ = Q[:a]
        self.x_scores_ = T[:, :a]
        self.y_scores_ = U[:, :a]
        self.coef_ = self.x_weights_ @ self.y_loadings_
        self.n_components_ = a
        self.exhausted_ = exhausted
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return (X - self.x_means_) @ self.coef_ + self.y_mean_

    def transform(self, X):
        check_is_fitted(self, "x_weights_")
        X = check_array(X)
        return (X - self.x_means_) @ self.x_weights_


def simpls_fit(X, y, n_components: int) -> SimplsRegressor:
    """Functional wrapper: a fitted SimplsRegressor."""
    return SimplsRegressor(n_components=n_components).fit(X, y)


# ---------------------------------------------------------------------------
# permutation inference


@dataclass
class PlsFit:
    model: SimplsRegressor
    r2: float
    rmse: float
    coeffs: dict[str, float]
    p_values: dict[str, float]
    std_errs: dict[str, float]
    p_upper_bound: set[str]      # predictors whose p printed as "< 1/n_perm"
    n_perm: int
    seed: int
    n_components: int
    n_retried_permutations: int = 0


def _as_array_and_names(X):
    if isinstance(X, DataMatrix):
        return X.values, list(X.columns)
    X = np.asarray(X, dtype=float)
    return X, [f"x{j}" for j in range(X.shape[1])]


def permutation_inference(X, y, n_components: int, n_perm: int = 1000,
                          seed: int = 0, corrected: bool = False) -> PlsFit:
    """Fit on the observed data, then refit against row-permuted responses.

    Per-coefficient p is the plain proportion of permuted |coefficients| at
    least as large as the observed one (``corrected=True`` switches to the
    (1+c)/(n_perm+1) variant); the standard error is the sample standard
    deviation of the permuted coefficients. A zero proportion is reported as
    an upper bound 1/n_perm and flagged in ``p_upper_bound``.
    """
    if n_perm < 1:
        raise ContractError("n_perm must be >= 1")
    mat, names = _as_array_and_names(X)
    y = np.asarray(y, dtype=float)
    model = simpls_fit(mat, y, n_components)
    pred = model.predict(mat)
    resid = y - pred
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        raise DegenerateInputError("response has zero variance")
    r2 = 1.0 - float(resid @ resid) / sst
    rmse = float(np.sqrt(np.mean(resid ** 2)))

    p = mat.shape[1]
    # permutation refits reuse the observed fit's component count and skip
    # per-call validation: X is unchanged, only y rows are shuffled
    Xc = mat - mat.mean(axis=0)
    yc = y - y.mean()
    a_obs = model.n_components_
    perm_coefs = np.empty((n_perm, p))
    n_retried = 0
    for k in range(n_perm):
        for retry in range(11):
            rng_key = [seed, k] if retry == 0 else [seed, k, retry]
            rng = np.random.default_rng(rng_key)
            yp = yc[rng.permutation(len(yc))]
            try:
                R, _, _, Q, _, _, a, _ = _simpls_core(Xc, yp, a_obs)
            except DegenerateInputError:
                n_retried += 1
                continue
            perm_coefs[k] = R[:, :a] @ Q[:a]
            break
        else:
            raise DegenerateInputError(
                f"permutation {k} failed after 10 retries")

    obs = np.abs(model.coef_)
    counts = (np.abs(perm_coefs) >= obs).sum(axis=0)
    if corrected:
        p_vals = (counts + 1) / (n_perm + 1)
        upper = set()
    else:
        p_vals = counts / n_perm
        upper = {names[j] for j in range(p) if counts[j] == 0}
        p_vals = np.where(counts == 0, 1.0 / n_perm, p_vals)
    std_errs = perm_coefs.std(axis=0, ddof=1)

    return PlsFit(
        model=model, r2=r2, rmse=rmse,
        coeffs={names[j]: float(model.coef_[j]) for j in range(p)},
        p_values={names[j]: float(p_vals[j]) for j in range(p)},
        std_errs={names[j]: float(std_errs[j]) for j in range(p)},
        p_upper_bound=upper, n_perm=n_perm, seed=seed,
        n_components=model.n_components_, n_retried_permutations=n_retried)


# ---------------------------------------------------------------------------
# component selection


def select_components(X, y, folds: int = 5, max_components: int | None = None,
                      seed: int = 0) -> int:
    """Component count by seeded k-fold CV with the one-standard-error rule:
    the smallest count whose mean out-of-fold RMSE is within one standard
    error of the minimum."""
    mat, _ = _as_array_and_names(X)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if folds < 2 or n < folds * 2:
        raise ContractError(f"need >= {folds * 2} rows for {folds}-fold CV")
    rank = int(np.linalg.matrix_rank(mat - mat.mean(axis=0)))
    cap = max(1, min(rank, n - n // folds - 1))
    if max_components is None:
        max_components = cap
    elif max_components > cap:
        warnings.warn(f"max_components clamped to usable rank {cap}",
                      stacklevel=2)
        max_components = cap
    kf = KFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(kf.split(mat))
    fold_rmse = np.zeros((max_components, folds))
    for a in range(1, max_components + 1):
        for f, (train, test) in enumerate(splits):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    model = simpls_fit(mat[train], y[train], a)
                except (ContractError, DegenerateInputError):
                    fold_rmse[a - 1, f] = np.inf
                    continue
            err = y[test] - model.predict(mat[test])
            fold_rmse[a - 1, f] = np.sqrt(np.mean(err ** 2))
    mean_rmse = fold_rmse.mean(axis=1)
    best = int(np.argmin(mean_rmse))
    se = fold_rmse[best].std(ddof=1) / np.sqrt(folds)
    for a in range(max_components):
        if mean_rmse[a] <= mean_rmse[best] + se:
            return a + 1
    return best + 1


# ---------------------------------------------------------------------------
# county-level regression driver


@dataclass
class RegressionReport:
    fit: PlsFit
    vif: dict[str, float]
    n_obs: int
    dropped_fips: list[str]
    predictor_names: list[str] = field(default_factory=list)

    def table_rows(self) -> list[tuple[str, float, float, float]]:
        """(variable, coefficient, p_value, std_err) per predictor."""
        return [(name, self.fit.coeffs[name], self.fit.p_values[name],
                 self.fit.std_errs[name]) for name in self.predictor_names]

    def sidecar(self) -> dict:
        return {"r2": self.fit.r2, "rmse": self.fit.rmse,
                "coeffs": dict(self.fit.coeffs),
                "p_values": dict(self.fit.p_values),
                "std_errs": dict(self.fit.std_errs),
                "n_components": self.fit.n_components,
                "n_perm": self.fit.n_perm, "seed": self.fit.seed,
                "n_obs": self.n_obs,
                "vif": {k: ("inf" if v == float("inf") else v)
                        for k, v in self.vif.items()},
                "p_upper_bound": sorted(self.fit.p_upper_bound),
                "dropped_fips": self.dropped_fips}


def run_regression(dependent: Mapping[str, float], covariates: DataMatrix,
                   n_components: int | str = "cv", n_perm: int = 1000,
                   seed: int = 0, folds: int = 5, min_n: int = 30,
                   corrected: bool = False) -> RegressionReport:
    """Join a fips-keyed dependent variable to the covariate table, z-score
    both sides, report VIF, and run SIMPLS permutation inference."""
    cov_keys = set(covariates.row_keys)
    joined = sorted(k for k in dependent if k in cov_keys)
    dropped = sorted(set(dependent) - cov_keys)
    if len(joined) < min_n:
        raise ContractError(
            f"only {len(joined)} counties after covariate join; need >= {min_n}")
    Xm = zscore(covariates.subset_rows(joined))
    y = zscore_vector(np.array([dependent[k] for k in joined]))
    vif_map = compute_vif(Xm) if len(Xm.columns) >= 3 else {}
    if n_components == "cv":
        n_components = select_components(Xm, y, folds=folds, seed=seed)
    fit = permutation_inference(Xm, y, int(n_components), n_perm=n_perm,
                                seed=seed, corrected=corrected)
    return RegressionReport(fit=fit, vif=vif_map, n_obs=len(joined),
                            dropped_fips=dropped,
                            predictor_names=list(covariates.columns))
