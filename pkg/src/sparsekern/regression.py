"""Readout training: ridge, cross-validated ridge, kernel ridge, robust baselines."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NonConvergenceError, SingularSystemError, ValidationError
from .rng import FOLDS, substream


def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, float).ravel()
    y_pred = np.asarray(y_pred, float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    return float(np.mean((y_true - y_pred) ** 2))


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, float).ravel()
    y_pred = np.asarray(y_pred, float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValidationError("R^2 is undefined for zero-variance targets")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class Dataset:
    """Design matrix plus targets, with optional column names."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    target_name: str = "target"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2:
            raise ValidationError(f"X must be 2-d, got shape {self.X.shape}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValidationError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        if self.X.shape[0] < 1:
            raise ValidationError("dataset needs at least one sample")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValidationError("dataset entries must be finite")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]


def load_csv_dataset(path, target: str | None = None) -> Dataset:
    """Headered CSV; the target column defaults to the last one."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValidationError(f"{path}: CSV has a header but no data rows")
    if target is None:
        target = header[-1]
    if target not in header:
        raise ValidationError(f"{path}: no column named {target!r}")
    t_idx = header.index(target)
    try:
        data = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from exc
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    keep = [j for j in range(len(header)) if j != t_idx]
    return Dataset(
        X=data[:, keep],
        y=data[:, t_idx],
        feature_names=[header[j] for j in keep],
        target_name=target,
    )


@dataclass
class RidgeFit:
    """Linear readout f(x) = coefficients . features + intercept."""

    coefficients: np.ndarray
    intercept: float
    penalty: float
    diagnostics: dict = field(default_factory=dict)

    def predict(self, F) -> np.ndarray:
        F = np.asarray(F, float)
        if F.ndim == 1:
            F = F[None, :]
        if F.shape[1] != self.coefficients.shape[0]:
            raise ValidationError(f"expected {self.coefficients.shape[0]} feature columns, got {F.shape[1]}")
        return F @ self.coefficients + self.intercept

    def to_dict(self) -> dict:
        return {
            "lambda": self.penalty,
            "intercept": self.intercept,
            "coefficients": [float(c) for c in self.coefficients],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RidgeFit":
        return cls(
            coefficients=np.asarray(doc["coefficients"], float),
            intercept=float(doc["intercept"]),
            penalty=float(doc["lambda"]),
            diagnostics=dict(doc.get("diagnostics", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _solve_spd(A, b, context):
    try:
        c, low = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"{context}: system is singular; try a penalty > 0") from exc
    return scipy.linalg.cho_solve((c, low), b, check_finite=False)


def _ridge_coefficients(Fc, yc, penalty, gram=None):
    """Solve (Fc^T Fc + penalty I) a = Fc^T yc, via the cheaper of the two paths."""
    n, mdim = Fc.shape
    if penalty == 0.0:
        return _solve_spd(Fc.T @ Fc, Fc.T @ yc, "unpenalized least squares")
    if mdim <= n and gram is None:
        A = Fc.T @ Fc
        A[np.diag_indices_from(A)] += penalty
        return _solve_spd(A, Fc.T @ yc, "ridge")
    K = gram if gram is not None else Fc @ Fc.T
    A = K + penalty * np.eye(n)
    beta = _solve_spd(A, yc, "ridge (dual)")
    return Fc.T @ beta


def ridge_fit(F, y, penalty: float, fit_intercept: bool = True) -> RidgeFit:
    """Ridge regression on a feature matrix.

    The intercept is handled by centering y and the columns of F (it is not
    penalized); with fit_intercept=False the raw normal equations are solved,
    which is the form dual to kernel ridge on F F^T.
    """
    F = np.asarray(F, float)
    y = np.asarray(y, float).ravel()
    if F.ndim != 2 or F.shape[0] != y.shape[0]:
        raise ValidationError(f"feature matrix {F.shape} does not match targets {y.shape}")
    if penalty < 0:
        raise ValidationError(f"penalty must be nonnegative, got {penalty}")
    if fit_intercept:
        mu = F.mean(axis=0)
        ym = float(y.mean())
        coef = _ridge_coefficients(F - mu, y - ym, penalty)
        intercept = ym - float(mu @ coef)
    else:
        coef = _ridge_coefficients(F, y, penalty)
        intercept = 0.0
    fit = RidgeFit(coefficients=coef, intercept=intercept, penalty=float(penalty))
    pred = fit.predict(F)
    fit.diagnostics = {"train_mse": mse(y, pred), "train_r2": r2_score(y, pred) if y.std() > 0 else 0.0}
    return fit


def log_lambda_grid(low: float, high: float, count: int) -> np.ndarray:
    """Logarithmically spaced penalty grid, endpoints included."""
    if low <= 0 or high <= 0 or count < 1:
        raise ValidationError("grid endpoints must be positive and count >= 1")
    return np.geomspace(low, high, count)


def _cv_folds(n, k_folds, seed):
    if k_folds < 2:
        raise ValidationError(f"cross-validation needs k_folds >= 2, got {k_folds}")
    if n < k_folds:
        raise ValidationError(f"fewer samples ({n}) than folds ({k_folds})")
    perm = substream(seed, FOLDS).permutation(n)
    return np.array_split(perm, k_folds)


def _map_folds(fn, folds, threads):
    """Evaluate folds, optionally in a pool; results come back in fold order."""
    if threads > 1 and len(folds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, folds))
    return [fn(fold) for fold in folds]


def ridge_cv(F, y, lambda_grid, k_folds: int = 5, seed: int = 0, fit_intercept: bool = True,
             threads: int = 1):
    """Pick the grid penalty minimizing mean validation MSE; refit on all data.

    Folds are a seeded deterministic permutation and may evaluate in parallel
    (aggregation is in fold order, so results never depend on scheduling);
    ties prefer the earliest grid entry. Returns (best_lambda, RidgeFit).
    """
    F = np.asarray(F, float)
    y = np.asarray(y, float).ravel()
    grid = np.asarray(lambda_grid, float).ravel()
    if grid.size == 0:
        raise ValidationError("lambda grid must be nonempty")
    folds = _cv_folds(F.shape[0], k_folds, seed)

    def fold_scores(fold):
        mask = np.ones(F.shape[0], dtype=bool)
        mask[fold] = False
        Ftr, ytr = F[mask], y[mask]
        if fit_intercept:
            mu, ym = Ftr.mean(axis=0), float(ytr.mean())
        else:
            mu, ym = np.zeros(F.shape[1]), 0.0
        Fc, yc = Ftr - mu, ytr - ym
        Fva = F[fold] - mu
        gram = Fc @ Fc.T if Fc.shape[1] > Fc.shape[0] else None
        out = np.empty(grid.size)
        for j, lam in enumerate(grid):
            coef = _ridge_coefficients(Fc, yc, lam, gram=gram)
            out[j] = mse(y[fold], Fva @ coef + ym)
        return out

    scores = np.sum(_map_folds(fold_scores, folds, threads), axis=0)
    best = float(grid[int(np.argmin(scores))])
    return best, ridge_fit(F, y, best, fit_intercept=fit_intercept)


@dataclass
class KernelRidgeFit:
    """Dual readout f(x) = sum_i dual_coef[i] k(x_i, x)."""

    dual_coef: np.ndarray
    penalty: float

    def predict(self, K_cross) -> np.ndarray:
        K_cross = np.asarray(K_cross, float)
        return K_cross @ self.dual_coef


def kernel_ridge_fit(G, y, penalty: float) -> KernelRidgeFit:
    """Solve (G + penalty I) beta = y on a symmetric Gram matrix.

    Uses a symmetric-indefinite solve: Gram matrices of valid kernels are PSD,
    but corrupted data can push closed-form kernels negative.
    """
    G = np.asarray(G, float)
    y = np.asarray(y, float).ravel()
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValidationError(f"Gram matrix must be square, got {G.shape}")
    if G.shape[0] != y.shape[0]:
        raise ValidationError(f"Gram size {G.shape[0]} does not match targets {y.shape[0]}")
    if not np.allclose(G, G.T, atol=1e-8 * max(1.0, float(np.abs(G).max()))):
        raise ValidationError("Gram matrix must be symmetric")
    if penalty <= 0:
        raise ValidationError(f"kernel ridge needs penalty > 0, got {penalty}")
    A = G + penalty * np.eye(G.shape[0])
    beta = scipy.linalg.solve(A, y, assume_a="sym", check_finite=False)
    return KernelRidgeFit(dual_coef=beta, penalty=float(penalty))


def kernel_ridge_cv(G, y, lambda_grid, k_folds: int = 5, seed: int = 0, threads: int = 1):
    """Grid CV for kernel ridge on a precomputed Gram matrix."""
    G = np.asarray(G, float)
    y = np.asarray(y, float).ravel()
    grid = np.asarray(lambda_grid, float).ravel()
    if grid.size == 0:
        raise ValidationError("lambda grid must be nonempty")
    folds = _cv_folds(G.shape[0], k_folds, seed)

    def fold_scores(fold):
        mask = np.ones(G.shape[0], dtype=bool)
        mask[fold] = False
        Gtr = G[np.ix_(mask, mask)]
        Gva = G[np.ix_(fold, mask)]
        ytr = y[mask]
        eye = np.eye(Gtr.shape[0])
        out = np.empty(grid.size)
        for j, lam in enumerate(grid):
            beta = scipy.linalg.solve(Gtr + lam * eye, ytr, assume_a="sym", check_finite=False)
            out[j] = mse(y[fold], Gva @ beta)
        return out

    scores = np.sum(_map_folds(fold_scores, folds, threads), axis=0)
    best = float(grid[int(np.argmin(scores))])
    return best, kernel_ridge_fit(G, y, best)


def linear_ols(X, y) -> RidgeFit:
    """Ordinary least squares with intercept (ridge at zero penalty)."""
    return ridge_fit(X, y, 0.0, fit_intercept=True)


def trimmed_linear(X, y, z_thresh: float = 3.0) -> RidgeFit:
    """Drop samples with any |standardized coordinate| > z_thresh, then OLS.

    Diagnostics are computed on the retained rows and include their count.
    """
    if z_thresh <= 0:
        raise ValidationError(f"trim threshold must be positive, got {z_thresh}")
    X = np.asarray(X, float)
    y = np.asarray(y, float).ravel()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0  # constant columns cannot flag outliers
    keep = np.all(np.abs((X - mu) / sd) <= z_thresh, axis=1)
    if not np.any(keep):
        raise ValidationError("trimming removed every sample; raise z_thresh")
    fit = linear_ols(X[keep], y[keep])
    fit.diagnostics["n_used"] = int(keep.sum())
    return fit


def huber_fit(X, y, delta: float = 1.35, iterations: int = 100, tol: float = 1e-8) -> RidgeFit:
    """Huber-loss linear fit via iteratively reweighted least squares.

    Converged when the coefficient update falls below tol; hitting the
    iteration cap raises NonConvergenceError carrying the last iterate.
    """
    if delta <= 0:
        raise ValidationError(f"Huber transition must be positive, got {delta}")
    if iterations < 1:
        raise ValidationError("iteration cap must be at least 1")
    X = np.asarray(X, float)
    y = np.asarray(y, float).ravel()
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)
    converged = False
    for it in range(iterations):
        resid = y - A @ theta
        w = np.minimum(1.0, delta / np.maximum(np.abs(resid), 1e-300))
        Aw = A * w[:, None]
        theta_new = np.linalg.solve(A.T @ Aw, Aw.T @ y)
        step = float(np.max(np.abs(theta_new - theta)))
        theta = theta_new
        if step < tol:
            converged = True
            break
    fit = RidgeFit(coefficients=theta[:-1], intercept=float(theta[-1]), penalty=0.0)
    pred = fit.predict(X)
    fit.diagnostics = {"train_mse": mse(y, pred), "train_r2": r2_score(y, pred), "iterations": it + 1}
    if not converged:
        raise NonConvergenceError(f"Huber IRLS did not converge in {iterations} iterations", last_fit=fit)
    return fit


def train_test_split_indices(n: int, train_fraction: float, seed: int):
    """Deterministic shuffled split; returns (train_idx, test_idx)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train fraction must be in (0, 1), got {train_fraction}")
    from .rng import SPLIT

    perm = substream(seed, SPLIT).permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    return perm[:n_train], perm[n_train:]
