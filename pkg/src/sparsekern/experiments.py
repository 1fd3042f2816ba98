"""Scripted studies: kernel convergence, the polynomial learning-curve study,
and the input-corruption stability/eigenvalue studies.

Every study is a pure function of (config, seed) and returns a StudyResult
whose CSV/meta rendering is byte-stable across reruns and thread counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .degrees import DegreeSpec, RegularDegrees
from .errors import ValidationError
from .features import BiasLaw, Nonlinearity, WeightLaw, apply_features, build_feature_map
from .kernels import KernelSpec, SparseSignD1, gram_matrix, limiting_kernel_spec
from .regression import (
    huber_fit,
    kernel_ridge_cv,
    linear_ols,
    log_lambda_grid,
    mse,
    r2_score,
    ridge_cv,
    train_test_split_indices,
    trimmed_linear,
)
from .rng import CELLS, CORRUPT, DATA, PROBES, TARGET, child_seed, substream

_PREDICT_CHUNK = 2048


def _versions() -> dict:
    return {
        "sparsekern": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_meta_json(meta: dict) -> str:
    """Canonical byte-stable rendering for <name>.meta.json."""
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


@dataclass
class StudyResult:
    """Rows plus metadata; `write` emits <name>.csv and <name>.meta.json."""

    name: str
    columns: list
    rows: list
    meta: dict

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def render_meta(self) -> str:
        return render_meta_json(self.meta)

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        meta_path = out / f"{self.name}.meta.json"
        csv_path.write_text(self.render_csv(), encoding="utf-8")
        meta_path.write_text(self.render_meta(), encoding="utf-8")
        return csv_path, meta_path


# ---------------------------------------------------------------------------
# Kernel convergence


def probe_pairs(l: int, n_pairs: int, seed: int) -> tuple:
    """Fixed evaluation pairs in [-1, 1]^l.

    Half are independent uniform pairs; the other half stress the extremes by
    alternating antipodal and near-duplicate partners.
    """
    rng = substream(seed, PROBES)
    half = n_pairs // 2
    X1 = rng.uniform(-1, 1, (half, l))
    Y1 = rng.uniform(-1, 1, (half, l))
    rest = n_pairs - half
    X2 = rng.uniform(-1, 1, (rest, l))
    jitter = rng.normal(0.0, 1e-3, (rest, l))
    Y2 = np.where((np.arange(rest) % 2 == 0)[:, None], -X2, np.clip(X2 + jitter, -1, 1))
    return np.vstack([X1, X2]), np.vstack([Y1, Y2])


def convergence_study(
    degree_spec: DegreeSpec,
    weight_law: WeightLaw,
    nonlinearity: Nonlinearity,
    m_grid,
    n_probe_pairs: int = 200,
    seed: int = 0,
    threads: int = 1,
) -> StudyResult:
    """Sup |empirical - oracle| over fixed probe pairs, per feature count.

    Maps at different m share the same seed, so the feature sets are nested
    and the error trend is directly comparable across the grid.
    """
    m_grid = [int(m) for m in m_grid]
    if not m_grid:
        raise ValidationError("m grid must be nonempty")
    if any(m < 1 for m in m_grid):
        raise ValidationError(f"feature counts must be positive, got {m_grid}")
    if n_probe_pairs < 1:
        raise ValidationError("need at least one probe pair")
    oracle = limiting_kernel_spec(degree_spec, weight_law, nonlinearity)
    X, Y = probe_pairs(degree_spec.l, n_probe_pairs, seed)
    target = oracle.pair_values(X, Y)

    rows = []
    for m in m_grid:
        fmap = build_feature_map(degree_spec.l, m, degree_spec, weight_law, nonlinearity, seed, threads=threads)
        FX = apply_features(fmap, X, threads=threads)
        FY = apply_features(fmap, Y, threads=threads)
        err = float(np.max(np.abs(np.sum(FX * FY, axis=1) - target)))
        rows.append({"m": m, "metric": "sup_abs_error", "value": err})

    meta = {
        "study": "convergence",
        "seed": seed,
        "config": {
            "degree_spec": degree_spec.to_dict(),
            "weight_law": weight_law.to_dict(),
            "nonlinearity": nonlinearity.to_dict(),
            "m_grid": m_grid,
            "n_probe_pairs": n_probe_pairs,
            "oracle": oracle.to_dict(),
        },
        "versions": _versions(),
    }
    return StudyResult("convergence", ["m", "metric", "value"], rows, meta)


def loglog_slope(m_values, errors) -> float:
    """Least-squares slope of log(error) against log(m)."""
    return float(np.polyfit(np.log(np.asarray(m_values, float)), np.log(np.asarray(errors, float)), 1)[0])


# ---------------------------------------------------------------------------
# Polynomial test function


@dataclass(frozen=True, eq=False)
class PolyTarget:
    """Mostly-linear target with a small sparse cubic part.

    f(x) = c1 a.x + c2 p(x) where p has 3 degree-3 monomials; c1, c2 are
    calibrated so the linear/nonlinear standard deviations land at
    (1-alpha)/Z and alpha/Z with Z = sqrt(alpha^2 + (1-alpha)^2).
    """

    l: int
    a: np.ndarray
    terms: tuple  # ((indices, coefficient), ...)
    c1: float
    c2: float
    alpha: float
    noise_std: float
    sigma_lin: float
    sigma_nonlin: float

    @classmethod
    def sample(cls, seed: int, l: int = 16, alpha: float = 0.05, noise_std: float = 0.05,
               calibration_size: int = 100_000) -> "PolyTarget":
        if l < 3:
            raise ValidationError("the cubic terms need l >= 3")
        if not 0 < alpha < 1:
            raise ValidationError(f"nonlinear fraction must be in (0, 1), got {alpha}")
        if calibration_size < 10_000:
            raise ValidationError("calibration sample must have at least 1e4 points")
        rng = substream(seed, TARGET)
        a = rng.standard_normal(l)
        terms = tuple(
            (tuple(int(i) for i in np.sort(rng.choice(l, size=3, replace=False))), float(rng.standard_normal()))
            for _ in range(3)
        )
        cal = substream(seed, TARGET, 1).random((calibration_size, l))
        lin = cal @ a
        nonlin = cls._poly(cal, terms)
        sigma_lin = float(lin.std())
        sigma_nonlin = float(nonlin.std())
        z = math.sqrt(alpha**2 + (1 - alpha) ** 2)
        return cls(
            l=l,
            a=a,
            terms=terms,
            c1=(1 - alpha) / (z * sigma_lin),
            c2=alpha / (z * sigma_nonlin),
            alpha=alpha,
            noise_std=noise_std,
            sigma_lin=sigma_lin,
            sigma_nonlin=sigma_nonlin,
        )

    @staticmethod
    def _poly(X, terms):
        out = np.zeros(X.shape[0])
        for idx, coef in terms:
            out += coef * X[:, idx].prod(axis=1)
        return out

    def linear_component(self, X) -> np.ndarray:
        return self.c1 * (np.asarray(X, float) @ self.a)

    def nonlinear_component(self, X) -> np.ndarray:
        return self.c2 * self._poly(np.asarray(X, float), self.terms)

    def evaluate(self, X) -> np.ndarray:
        return self.linear_component(X) + self.nonlinear_component(X)

    def observe(self, X, rng: np.random.Generator) -> np.ndarray:
        return self.evaluate(X) + rng.normal(0.0, self.noise_std, size=np.asarray(X).shape[0])


_VARIANCE_CONVENTIONS = ("inv_sqrt_d", "inv_d")


def _polytest_cell(target, Xtr, ytr, Xte, yte, d, m, convention, lambda_grid, k_folds, cv_seed, map_seed, threads):
    l = target.l
    sigma = d ** (-0.25) if convention == "inv_sqrt_d" else d ** (-0.5)
    law = WeightLaw(kind="gaussian_iso", sigma=sigma, bias=BiasLaw(kind="uniform", a1=-math.pi, a2=math.pi))
    fmap = build_feature_map(l, m, RegularDegrees(l=l, d=d), law, Nonlinearity("sincos"), map_seed, threads=threads)
    Ftr = apply_features(fmap, Xtr, threads=threads)
    best, fit = ridge_cv(Ftr, ytr, lambda_grid, k_folds=k_folds, seed=cv_seed)
    preds = np.concatenate([
        fit.predict(apply_features(fmap, Xte[lo : lo + _PREDICT_CHUNK], threads=threads))
        for lo in range(0, Xte.shape[0], _PREDICT_CHUNK)
    ])
    return mse(yte, preds), best


def polytest_study(
    l: int = 16,
    d_grid=(1, 3, 10, 16),
    n_grid=(100, 200, 400, 800),
    seed: int = 0,
    m: int = 192,
    weight_variance: str = "inv_sqrt_d",
    n_test: int = 10_000,
    lambda_grid=None,
    k_folds: int = 5,
    alpha: float = 0.05,
    noise_std: float = 0.05,
    threads: int = 1,
) -> StudyResult:
    """Learning-curve study over in-degree and training-set size.

    Fourier-pair features of regular degree d, per-weight variance d^(-1/2)
    (literal convention; `weight_variance="inv_d"` switches to 1/d), uniform
    phases, penalty cross-validated per cell, test MSE on fresh noisy points.
    """
    d_grid = [int(d) for d in d_grid]
    n_grid = [int(n) for n in n_grid]
    if any(not 1 <= d <= l for d in d_grid):
        raise ValidationError(f"degrees must lie in [1, {l}], got {d_grid}")
    if any(n < k_folds for n in n_grid):
        raise ValidationError(f"every n must be at least k_folds={k_folds}, got {n_grid}")
    if weight_variance not in _VARIANCE_CONVENTIONS:
        raise ValidationError(f"weight_variance must be one of {_VARIANCE_CONVENTIONS}")
    if lambda_grid is None:
        lambda_grid = log_lambda_grid(1e-4, 1e2, 7)

    target = PolyTarget.sample(seed, l=l, alpha=alpha, noise_std=noise_std)
    rng_te = substream(seed, DATA, 0)
    Xte = rng_te.random((n_test, l))
    yte = target.observe(Xte, rng_te)
    trains = {}
    for n_idx, n in enumerate(n_grid):
        rng_tr = substream(seed, DATA, 1 + n_idx)
        Xtr = rng_tr.random((n, l))
        trains[n] = (Xtr, target.observe(Xtr, rng_tr))

    cells = [(d, n, n_idx) for d in d_grid for n_idx, n in enumerate(n_grid)]

    def run(ci):
        d, n, n_idx = cells[ci]
        Xtr, ytr = trains[n]
        # Common random numbers: every degree at a given n draws its features
        # from the same substreams, pairing the comparison across degrees.
        return _polytest_cell(
            target, Xtr, ytr, Xte, yte, d, m, weight_variance, lambda_grid, k_folds,
            cv_seed=child_seed(seed, DATA, 1 + n_idx),
            map_seed=child_seed(seed, CELLS, n_idx),
            threads=1,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(cells))))
    else:
        results = [run(ci) for ci in range(len(cells))]

    rows = []
    for (d, n, _), (test_mse, best) in zip(cells, results):
        rows.append({"d": d, "n": n, "metric": "test_mse", "value": test_mse})
        rows.append({"d": d, "n": n, "metric": "selected_lambda", "value": best})

    meta = {
        "study": "polytest",
        "seed": seed,
        "config": {
            "l": l,
            "d_grid": d_grid,
            "n_grid": n_grid,
            "m": m,
            "weight_variance": weight_variance,
            "n_test": n_test,
            "lambda_grid": [float(v) for v in lambda_grid],
            "k_folds": k_folds,
            "alpha": alpha,
            "noise_std": noise_std,
        },
        "versions": _versions(),
    }
    return StudyResult("polytest", ["d", "n", "metric", "value"], rows, meta)


# ---------------------------------------------------------------------------
# Input corruption


_CORRUPTION_MODES = ("per-coordinate", "per-sample")


@dataclass(frozen=True)
class CorruptionSpec:
    """Replace entries (or whole rows) with N(0, sigma^2) noise w.p. p."""

    p: float
    sigma: float = 6.0
    mode: str = "per-coordinate"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"corruption probability must lie in [0, 1], got {self.p}")
        if self.sigma <= 0:
            raise ValidationError(f"noise scale must be positive, got {self.sigma}")
        if self.mode not in _CORRUPTION_MODES:
            raise ValidationError(f"mode must be one of {_CORRUPTION_MODES}, got {self.mode!r}")

    def to_dict(self):
        return {"p": self.p, "sigma": self.sigma, "mode": self.mode}


def corrupt_inputs(X, spec: CorruptionSpec, seed: int):
    """Returns (corrupted copy, boolean mask of replaced entries)."""
    X = np.asarray(X, dtype=float)
    rng = substream(seed, CORRUPT)
    out = X.copy()
    if spec.mode == "per-coordinate":
        mask = rng.random(X.shape) < spec.p
        noise = rng.standard_normal(X.shape) * spec.sigma
        out[mask] = noise[mask]
    else:
        rows = rng.random(X.shape[0]) < spec.p
        noise = rng.standard_normal(X.shape) * spec.sigma
        out[rows] = noise[rows]
        mask = np.broadcast_to(rows[:, None], X.shape).copy()
    return out, mask


def stability_study(
    n: int = 800,
    l: int = 20,
    p: float = 0.03,
    sigma: float = 6.0,
    seed: int = 0,
    mode: str = "per-coordinate",
    train_fraction: float = 0.75,
    lambda_grid=None,
    k_folds: int = 5,
    z_thresh: float = 3.0,
    huber_delta: float = 1.35,
    corrupt_test: bool = False,
    threads: int = 1,
) -> StudyResult:
    """Linear ground truth, corrupted inputs, four readouts, R^2 scores.

    Targets are the clean y = X beta throughout. Models train on corrupted
    inputs; test inputs are clean held-out rows by default (corrupt_test=True
    scores against corrupted test inputs instead). Train scores are computed
    on the rows each model actually fit (the kept subset for trimming).
    """
    if lambda_grid is None:
        lambda_grid = log_lambda_grid(1e-4, 1e2, 7)
    rng = substream(seed, DATA)
    X = rng.standard_normal((n, l))
    beta = rng.standard_normal(l)
    y = X @ beta
    spec = CorruptionSpec(p=p, sigma=sigma, mode=mode)
    Xc, _ = corrupt_inputs(X, spec, seed)
    tr, te = train_test_split_indices(n, train_fraction, seed)
    Xtr, ytr, yte = Xc[tr], y[tr], y[te]
    Xte = Xc[te] if corrupt_test else X[te]

    rows = []

    def record(model, train_r2, test_r2):
        rows.append({"model": model, "split": "train", "metric": "r2", "value": float(train_r2)})
        rows.append({"model": model, "split": "test", "metric": "r2", "value": float(test_r2)})

    ols = linear_ols(Xtr, ytr)
    record("linear", ols.diagnostics["train_r2"], r2_score(yte, ols.predict(Xte)))

    kernel = SparseSignD1(c=1.0)
    G = gram_matrix(kernel, Xtr, threads=threads)
    best, krr = kernel_ridge_cv(G, ytr, lambda_grid, k_folds=k_folds, seed=seed, threads=threads)
    record("kernel_l1", r2_score(ytr, krr.predict(G)), r2_score(yte, krr.predict(kernel.cross(Xte, Xtr))))
    rows.append({"model": "kernel_l1", "split": "train", "metric": "selected_lambda", "value": best})

    trim = trimmed_linear(Xtr, ytr, z_thresh=z_thresh)
    record("trim_linear", trim.diagnostics["train_r2"], r2_score(yte, trim.predict(Xte)))

    hub = huber_fit(Xtr, ytr, delta=huber_delta)
    record("huber", hub.diagnostics["train_r2"], r2_score(yte, hub.predict(Xte)))

    meta = {
        "study": "stability",
        "seed": seed,
        "config": {
            "n": n,
            "l": l,
            "corruption": spec.to_dict(),
            "train_fraction": train_fraction,
            "lambda_grid": [float(v) for v in lambda_grid],
            "k_folds": k_folds,
            "z_thresh": z_thresh,
            "huber_delta": huber_delta,
            "corrupt_test": corrupt_test,
            "kernel": kernel.to_dict(),
        },
        "versions": _versions(),
    }
    return StudyResult("stability", ["model", "split", "metric", "value"], rows, meta)


# ---------------------------------------------------------------------------
# Eigenvalue amplification


def _sorted_eigs(G):
    vals = np.linalg.eigvalsh(G)
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order]


def eigen_amplification(X, grid, kernel: KernelSpec, seed: int, mode: str = "per-coordinate",
                        threads: int = 1) -> StudyResult:
    """Per (p, sigma) config: 10 log10 |eig_corrupted / eig_clean|, rank by |.|.

    Unchanged eigenvalues report 0 dB exactly; a clean eigenvalue at the
    numerical-rank floor reports +inf, and summaries must exclude those
    sentinels.
    """
    X = np.asarray(X, dtype=float)
    grid = [(float(p), float(s)) for p, s in grid]
    if not grid:
        raise ValidationError("corruption grid must be nonempty")
    clean = _sorted_eigs(gram_matrix(kernel, X, threads=threads))
    floor = X.shape[0] * np.finfo(float).eps * float(np.max(np.abs(clean), initial=0.0))
    rows = []
    for ci, (p, s) in enumerate(grid):
        Xc, _ = corrupt_inputs(X, CorruptionSpec(p=p, sigma=s, mode=mode), child_seed(seed, CELLS, ci))
        noisy = _sorted_eigs(gram_matrix(kernel, Xc, threads=threads))
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = 10.0 * np.log10(np.abs(noisy) / np.abs(clean))
        amp = np.where(np.abs(clean) <= floor, np.inf, amp)
        amp = np.where(noisy == clean, 0.0, amp)
        for rank, value in enumerate(amp):
            rows.append({"p": p, "sigma": s, "rank": rank, "metric": "amplification_db", "value": float(value)})
    meta = {
        "study": "eigen",
        "seed": seed,
        "config": {
            "n": int(X.shape[0]),
            "l": int(X.shape[1]),
            "grid": [{"p": p, "sigma": s} for p, s in grid],
            "mode": mode,
            "kernel": kernel.to_dict(),
        },
        "versions": _versions(),
    }
    return StudyResult("eigen", ["p", "sigma", "rank", "metric", "value"], rows, meta)


def eigen_study(
    n: int = 800,
    l: int = 20,
    p_grid=(0.03, 0.2, 0.5),
    sigma_grid=(2.0, 6.0, 10.0),
    kernel: KernelSpec | None = None,
    seed: int = 0,
    mode: str = "per-coordinate",
    X=None,
    threads: int = 1,
) -> StudyResult:
    """Cross-product corruption grid on standard normal data (or supplied X)."""
    if kernel is None:
        kernel = SparseSignD1(c=1.0)
    if X is None:
        X = substream(seed, DATA).standard_normal((n, l))
    grid = [(p, s) for p in p_grid for s in sigma_grid]
    return eigen_amplification(X, grid, kernel, seed, mode=mode, threads=threads)


def amplification_summary(result: StudyResult, p: float, sigma: float, top: int | None = None) -> float:
    """Mean |amplification| over the leading ranks of one config, inf excluded."""
    vals = [
        row["value"]
        for row in result.rows
        if row["p"] == p and row["sigma"] == sigma and np.isfinite(row["value"])
        and (top is None or row["rank"] < top)
    ]
    if not vals:
        raise ValidationError(f"no finite amplification values for p={p}, sigma={sigma}")
    return float(np.mean(np.abs(vals)))
