"""Service operations: the single implementation behind the HTTP endpoints
and the CLI. Inputs and outputs are the schema models."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..experiments import convergence_study, eigen_study, polytest_study, stability_study
from ..features import apply_features, build_feature_map
from ..kernels import SparseSignD1, kernel_from_dict
from ..model import SparseRegressionModel, model_from_json_dict
from ..regression import log_lambda_grid, mse, r2_score, ridge_cv, ridge_fit
from .schemas import (
    ConvergenceRequest,
    EigenRequest,
    FitRequest,
    FitResponse,
    PolytestRequest,
    PredictRequest,
    PredictResponse,
    StabilityRequest,
    StudyResponse,
)


def _as_matrix(rows, name) -> np.ndarray:
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"{name} must be a list of equal-length rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} entries must be finite")
    return X


def run_fit(req: FitRequest) -> FitResponse:
    X = _as_matrix(req.x, "x")
    y = np.asarray(req.y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError(f"y must have one entry per row of x ({X.shape[0]}), got {y.shape}")
    if req.penalty is not None and req.penalty_grid:
        raise ValidationError("give either a fixed penalty or a penalty grid, not both")

    cfg = req.features
    l = X.shape[1]
    fmap = build_feature_map(
        l,
        cfg.m,
        cfg.degree.to_core(l),
        cfg.weight_law.to_core(),
        cfg.nonlinearity.to_core(),
        seed=req.seed,
        threads=req.threads,
    )
    F = apply_features(fmap, X, threads=req.threads)
    if req.penalty is not None:
        best = req.penalty
        fit = ridge_fit(F, y, best)
    else:
        # default grid scales with the sample count: 1e-4 n .. 1e2 n, 5 points
        n = X.shape[0]
        grid = req.penalty_grid if req.penalty_grid else log_lambda_grid(1e-4 * n, 1e2 * n, 5)
        best, fit = ridge_cv(F, y, grid, k_folds=req.cv_folds, seed=req.seed, threads=req.threads)

    columns = req.feature_columns or [f"x{j}" for j in range(l)]
    if len(columns) != l:
        raise ValidationError(f"feature_columns has {len(columns)} names for {l} columns")
    model = SparseRegressionModel(fmap, fit, feature_columns=columns, target_column=req.target_column)
    # Metrics go through the same chunked predict path the predict op uses,
    # so a fit-then-predict round trip reproduces them bit for bit.
    train_pred = model.predict(X, threads=req.threads)
    metrics = {
        "n": int(X.shape[0]),
        "l": l,
        "m": cfg.m,
        "output_dim": fmap.output_dim,
        "lambda": float(best),
        "train_mse": mse(y, train_pred),
        "train_r2": r2_score(y, train_pred) if float(np.std(y)) > 0 else 0.0,
    }
    return FitResponse(model=model.to_json_dict(), metrics=metrics)


def run_predict(req: PredictRequest) -> PredictResponse:
    model = model_from_json_dict(req.model)
    X = np.asarray(req.x, dtype=float)
    if X.size == 0:
        return PredictResponse(predictions=[])
    X = _as_matrix(req.x, "x")
    preds = model.predict(X, threads=req.threads)
    return PredictResponse(predictions=[float(v) for v in preds])


def _study_response(result) -> StudyResponse:
    return StudyResponse(name=result.name, columns=result.columns, csv=result.render_csv(), meta=result.meta)


def run_convergence(req: ConvergenceRequest) -> StudyResponse:
    if req.degree is None:
        from ..degrees import RegularDegrees

        degree = RegularDegrees(l=req.l, d=req.l)
    else:
        degree = req.degree.to_core(req.l)
    result = convergence_study(
        degree,
        req.weight_law.to_core(),
        req.nonlinearity.to_core(),
        req.m_grid,
        n_probe_pairs=req.n_probe_pairs,
        seed=req.seed,
        threads=req.threads,
    )
    return _study_response(result)


def run_polytest(req: PolytestRequest) -> StudyResponse:
    result = polytest_study(
        l=req.l,
        d_grid=req.d_grid,
        n_grid=req.n_grid,
        seed=req.seed,
        m=req.m,
        weight_variance=req.weight_variance,
        n_test=req.n_test,
        k_folds=req.k_folds,
        threads=req.threads,
    )
    return _study_response(result)


def run_stability(req: StabilityRequest) -> StudyResponse:
    result = stability_study(
        n=req.n,
        l=req.l,
        p=req.p,
        sigma=req.sigma,
        seed=req.seed,
        mode=req.mode,
        train_fraction=req.train_fraction,
        k_folds=req.k_folds,
        z_thresh=req.z_thresh,
        huber_delta=req.huber_delta,
        corrupt_test=req.corrupt_test,
        threads=req.threads,
    )
    return _study_response(result)


def run_eigen(req: EigenRequest) -> StudyResponse:
    kernel = kernel_from_dict(req.kernel) if req.kernel is not None else SparseSignD1(c=1.0)
    X = _as_matrix(req.x, "x") if req.x is not None else None
    result = eigen_study(
        n=req.n,
        l=req.l,
        p_grid=req.p_grid,
        sigma_grid=req.sigma_grid,
        kernel=kernel,
        seed=req.seed,
        mode=req.mode,
        X=X,
        threads=req.threads,
    )
    return _study_response(result)
