"""Command-line client for the sparsekern service operations.

All subcommands build the same request models the HTTP endpoints accept and
run them in process by default; --server posts them to a running service
instead. Exit codes: 0 success, 2 usage/validation, 1 runtime failure. Status
messages go to stderr; stdout only ever carries data.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import os
import sys
from pathlib import Path

import click

from .errors import ValidationError
from .experiments import render_meta_json
from .regression import load_csv_dataset, log_lambda_grid
from .service import operations
from .service.schemas import (
    BiasModel,
    ConvergenceRequest,
    DegreeModel,
    EigenRequest,
    FeatureConfigModel,
    FitRequest,
    FitResponse,
    NonlinearityModel,
    PolytestRequest,
    PredictRequest,
    PredictResponse,
    StabilityRequest,
    StudyResponse,
    WeightLawModel,
)

_ENDPOINTS = {
    "fit": ("/fit", operations.run_fit, FitResponse),
    "predict": ("/predict", operations.run_predict, PredictResponse),
    "convergence": ("/study/convergence", operations.run_convergence, StudyResponse),
    "polytest": ("/study/polytest", operations.run_polytest, StudyResponse),
    "stability": ("/study/stability", operations.run_stability, StudyResponse),
    "eigen": ("/study/eigen", operations.run_eigen, StudyResponse),
}


class CliState:
    def __init__(self, seed, out_dir, threads, server):
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.threads = threads if threads > 0 else (os.cpu_count() or 1)
        self.server = server


def _dispatch(state: CliState, op: str, request):
    path, local, response_cls = _ENDPOINTS[op]
    if not state.server:
        return local(request)
    import httpx

    resp = httpx.post(state.server.rstrip("/") + path, json=request.model_dump(), timeout=None)
    if resp.status_code == 422:
        detail = resp.json().get("detail", resp.text)
        raise ValidationError(str(detail))
    resp.raise_for_status()
    return response_cls.model_validate(resp.json())


def _guard(fn):
    """Map package validation errors to exit 2, other failures to exit 1."""

    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except ValidationError as exc:
            raise click.UsageError(str(exc)) from exc
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapped


def _parse_degree(text: str) -> DegreeModel:
    kind, _, arg = text.partition(":")
    try:
        if kind == "regular":
            return DegreeModel(kind="regular", d=int(arg))
        if kind == "binomial":
            return DegreeModel(kind="binomial", p=float(arg))
        if kind == "custom":
            weights = json.loads(Path(arg).read_text(encoding="utf-8"))
            return DegreeModel(kind="custom", weights=[float(w) for w in weights])
    except (ValueError, OSError) as exc:
        raise click.UsageError(f"bad degree spec {text!r}: {exc}") from exc
    raise click.UsageError(f"degree spec must be regular:D, binomial:P or custom:FILE, got {text!r}")


def _parse_nonlinearity(text: str) -> NonlinearityModel:
    kind, _, arg = text.partition(":")
    if kind == "threshold_poly":
        try:
            return NonlinearityModel(kind="threshold_poly", power=int(arg or 1))
        except ValueError as exc:
            raise click.UsageError(f"bad threshold_poly power {arg!r}") from exc
    if arg:
        raise click.UsageError(f"nonlinearity {kind!r} takes no argument")
    try:
        return NonlinearityModel(kind=kind)
    except Exception as exc:
        raise click.UsageError(f"unknown nonlinearity {text!r}") from exc


def _parse_bias(text: str | None) -> BiasModel:
    if text is None:
        return BiasModel(kind="uniform", a1=-math.pi, a2=math.pi)
    if text == "none":
        return BiasModel(kind="none")
    kind, _, rest = text.partition(":")
    if kind == "uniform":
        try:
            a1, a2 = (float(v) for v in rest.split(":"))
            return BiasModel(kind="uniform", a1=a1, a2=a2)
        except ValueError as exc:
            raise click.UsageError(f"bad bias spec {text!r}: expected uniform:A1:A2") from exc
    raise click.UsageError(f"bias must be uniform:A1:A2 or none, got {text!r}")


def _parse_grid(text: str) -> list:
    """Penalty grid: either LO:HI:COUNT (log spaced) or a comma list."""
    if ":" in text:
        try:
            lo, hi, count = text.split(":")
            return [float(v) for v in log_lambda_grid(float(lo), float(hi), int(count))]
        except (ValueError, ValidationError) as exc:
            raise click.UsageError(f"bad penalty grid {text!r}: {exc}") from exc
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise click.UsageError(f"bad penalty grid {text!r}") from exc


def _int_list(text: str, flag: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise click.UsageError(f"bad {flag} {text!r}: expected comma-separated integers") from exc


def _float_list(text: str, flag: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise click.UsageError(f"bad {flag} {text!r}: expected comma-separated numbers") from exc


def _parse_kernel(text: str) -> dict:
    kind, _, arg = text.partition(":")
    if kind == "l1":
        return {"variant": "sparse_sign_d1", "c": float(arg) if arg else 1.0}
    if kind == "rbf":
        return {"variant": "rbf", "sigma": float(arg) if arg else 1.0}
    if kind == "step":
        return {"variant": "sparse_step_d1"}
    raise click.UsageError(f"kernel must be l1[:C], rbf[:SIGMA] or step, got {text!r}")


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _write_study(state: CliState, resp: StudyResponse):
    state.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = state.out_dir / f"{resp.name}.csv"
    meta_path = state.out_dir / f"{resp.name}.meta.json"
    csv_path.write_text(resp.csv, encoding="utf-8")
    meta_path.write_text(render_meta_json(resp.meta), encoding="utf-8")
    click.echo(f"wrote {csv_path} and {meta_path}", err=True)


@click.group()
@click.version_option()
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed; all randomness derives from it.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True, help="Directory for output artifacts.")
@click.option("--threads", type=click.IntRange(min=0), default=0, show_default=True, envvar="SPARSEKERN_THREADS", help="Worker threads; 0 = auto.")
@click.option("--server", default=None, help="Base URL of a running sparsekern service; requests are POSTed there instead of running locally.")
@click.pass_context
def main(ctx, seed, out_dir, threads, server):
    """Sparse random feature regression and kernel studies."""
    ctx.obj = CliState(seed, out_dir, threads, server)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Training CSV with a header row.")
@click.option("--target", default=None, help="Target column name; defaults to the last column.")
@click.option("--degree", default="regular:1", show_default=True, help="regular:D | binomial:P | custom:FILE (JSON pmf over 0..l).")
@click.option("--nonlinearity", "nonlinearity_name", default="cosine", show_default=True, help="step|sign|cosine|sincos|exponential|threshold_poly:P")
@click.option("--m", default=1000, show_default=True, type=click.IntRange(min=1), help="Number of random features.")
@click.option("--lambda", "penalty", type=float, default=None, help="Fixed ridge penalty (skips cross-validation).")
@click.option("--lambda-grid", "penalty_grid", default=None, help="LO:HI:COUNT log grid or comma list; default 1e-4*n .. 1e2*n, 5 points.")
@click.option("--weight-law", default="gaussian_scaled", show_default=True, type=click.Choice(["gaussian_iso", "gaussian_scaled", "rademacher"]))
@click.option("--sigma", default=1.0, show_default=True, type=float, help="Weight scale.")
@click.option("--bias", default=None, help="uniform:A1:A2 or none; default uniform over [-pi, pi].")
@click.option("--folds", default=5, show_default=True, type=int, help="Cross-validation folds.")
@click.pass_obj
@_guard
def fit(state, data_path, target, degree, nonlinearity_name, m, penalty, penalty_grid, weight_law, sigma, bias, folds):
    """Fit a sparse random feature regressor on CSV data."""
    ds = load_csv_dataset(data_path, target=target)
    grid = _parse_grid(penalty_grid) if penalty_grid is not None else None
    req = FitRequest(
        x=ds.X.tolist(),
        y=ds.y.tolist(),
        features=FeatureConfigModel(
            m=m,
            degree=_parse_degree(degree),
            weight_law=WeightLawModel(kind=weight_law, sigma=sigma, bias=_parse_bias(bias)),
            nonlinearity=_parse_nonlinearity(nonlinearity_name),
        ),
        penalty=penalty,
        penalty_grid=grid,
        cv_folds=folds,
        seed=state.seed,
        threads=state.threads,
        feature_columns=ds.feature_names,
        target_column=ds.target_name,
    )
    resp = _dispatch(state, "fit", req)
    _write_json(state.out_dir / "model.json", resp.model)
    _write_json(state.out_dir / "metrics.json", resp.metrics)
    click.echo(
        f"fit {resp.metrics['n']} rows, {resp.metrics['output_dim']} feature columns, "
        f"lambda={resp.metrics['lambda']:g}, train R^2={resp.metrics['train_r2']:.4f}",
        err=True,
    )


def _read_predict_matrix(data_path, columns):
    """Rows of the model's feature columns; ([], n=0) for an empty file."""
    with open(data_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) == 1 and not any(rows[0]):
        return []
    header, body = rows[0], rows[1:]
    if not body:
        return []
    missing = [c for c in columns if c not in header]
    if missing:
        raise ValidationError(f"{data_path}: missing model feature columns {missing}")
    idx = [header.index(c) for c in columns]
    try:
        return [[float(row[j]) for j in idx] for row in body]
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{data_path}: bad cell ({exc})") from exc


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="model.json written by fit.")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="CSV containing the model's feature columns.")
@click.option("--output", default=None, help="Output CSV path; '-' for stdout; default <out-dir>/predictions.csv.")
@click.pass_obj
@_guard
def predict(state, model_path, data_path, output):
    """Predict with a stored model; one row per input row, order preserved."""
    doc = json.loads(Path(model_path).read_text(encoding="utf-8"))
    columns = doc.get("data", {}).get("feature_columns", [])
    matrix = _read_predict_matrix(data_path, columns)
    resp = _dispatch(state, "predict", PredictRequest(model=doc, x=matrix, threads=state.threads))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prediction"])
    for v in resp.predictions:
        writer.writerow([repr(float(v))])
    text = buf.getvalue()
    if output == "-":
        click.echo(text, nl=False)
    else:
        out_path = Path(output) if output else state.out_dir / "predictions.csv"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path} ({len(resp.predictions)} rows)", err=True)


@main.group()
def study():
    """Reproducible studies; each writes <name>.csv and <name>.meta.json."""


@study.command("convergence")
@click.option("--l", "dim", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--degree", default=None, help="Degree spec; default regular:L (dense).")
@click.option("--nonlinearity", "nonlinearity_name", default="cosine", show_default=True)
@click.option("--weight-law", default="gaussian_iso", show_default=True, type=click.Choice(["gaussian_iso", "gaussian_scaled", "rademacher"]))
@click.option("--sigma", default=1.0, show_default=True, type=float)
@click.option("--bias", default=None, help="uniform:A1:A2 or none; default uniform over [-pi, pi].")
@click.option("--m-grid", default="256,1024,4096,16384", show_default=True)
@click.option("--probe-pairs", default=200, show_default=True, type=int)
@click.pass_obj
@_guard
def study_convergence(state, dim, degree, nonlinearity_name, weight_law, sigma, bias, m_grid, probe_pairs):
    """Sup |empirical - oracle| kernel error across feature counts."""
    req = ConvergenceRequest(
        l=dim,
        degree=_parse_degree(degree) if degree else None,
        weight_law=WeightLawModel(kind=weight_law, sigma=sigma, bias=_parse_bias(bias)),
        nonlinearity=_parse_nonlinearity(nonlinearity_name),
        m_grid=_int_list(m_grid, "--m-grid"),
        n_probe_pairs=probe_pairs,
        seed=state.seed,
        threads=state.threads,
    )
    _write_study(state, _dispatch(state, "convergence", req))


@study.command("polytest")
@click.option("--l", "dim", default=16, show_default=True, type=click.IntRange(min=3))
@click.option("--d-grid", default="1,3,10,16", show_default=True)
@click.option("--n-grid", default="100,200,400,800", show_default=True)
@click.option("--m", default=192, show_default=True, type=click.IntRange(min=1))
@click.option("--variance-convention", default="inv_sqrt_d", show_default=True, type=click.Choice(["inv_sqrt_d", "inv_d"]))
@click.option("--n-test", default=10_000, show_default=True, type=int)
@click.option("--folds", default=5, show_default=True, type=int)
@click.pass_obj
@_guard
def study_polytest(state, dim, d_grid, n_grid, m, variance_convention, n_test, folds):
    """Learning curves over in-degree and training-set size."""
    req = PolytestRequest(
        l=dim,
        d_grid=_int_list(d_grid, "--d-grid"),
        n_grid=_int_list(n_grid, "--n-grid"),
        m=m,
        weight_variance=variance_convention,
        n_test=n_test,
        k_folds=folds,
        seed=state.seed,
        threads=state.threads,
    )
    _write_study(state, _dispatch(state, "polytest", req))


@study.command("stability")
@click.option("--n", default=800, show_default=True, type=int)
@click.option("--l", "dim", default=20, show_default=True, type=int)
@click.option("--p", default=0.03, show_default=True, type=float)
@click.option("--sigma", default=6.0, show_default=True, type=float)
@click.option("--mode", default="per-coordinate", show_default=True, type=click.Choice(["per-coordinate", "per-sample"]))
@click.option("--train-fraction", default=0.75, show_default=True, type=float)
@click.option("--folds", default=5, show_default=True, type=int)
@click.option("--z-thresh", default=3.0, show_default=True, type=float)
@click.option("--huber-delta", default=1.35, show_default=True, type=float)
@click.option("--corrupt-test", is_flag=True, help="Score on corrupted test inputs instead of clean ones.")
@click.pass_obj
@_guard
def study_stability(state, n, dim, p, sigma, mode, train_fraction, folds, z_thresh, huber_delta, corrupt_test):
    """R^2 of linear/kernel/trimmed/Huber readouts under input corruption."""
    req = StabilityRequest(
        n=n, l=dim, p=p, sigma=sigma, mode=mode, train_fraction=train_fraction,
        k_folds=folds, z_thresh=z_thresh, huber_delta=huber_delta,
        corrupt_test=corrupt_test, seed=state.seed, threads=state.threads,
    )
    _write_study(state, _dispatch(state, "stability", req))


@study.command("eigen")
@click.option("--n", default=800, show_default=True, type=int)
@click.option("--l", "dim", default=20, show_default=True, type=int)
@click.option("--p-grid", default="0.03,0.2,0.5", show_default=True)
@click.option("--sigma-grid", default="2,6,10", show_default=True)
@click.option("--mode", default="per-coordinate", show_default=True, type=click.Choice(["per-coordinate", "per-sample"]))
@click.option("--kernel", "kernel_name", default="l1", show_default=True, help="l1[:C] | rbf[:SIGMA] | step")
@click.option("--data", "data_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Optional CSV of inputs; default N(0, I) samples.")
@click.pass_obj
@_guard
def study_eigen(state, n, dim, p_grid, sigma_grid, mode, kernel_name, data_path):
    """Kernel-eigenvalue amplification under corruption."""
    x = None
    if data_path:
        with open(data_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ValidationError(f"{data_path}: need a header and at least one row")
        try:
            x = [[float(v) for v in row] for row in rows[1:]]
        except ValueError as exc:
            raise ValidationError(f"{data_path}: non-numeric cell ({exc})") from exc
    req = EigenRequest(
        n=n, l=dim,
        p_grid=_float_list(p_grid, "--p-grid"),
        sigma_grid=_float_list(sigma_grid, "--sigma-grid"),
        kernel=_parse_kernel(kernel_name),
        mode=mode, x=x, seed=state.seed, threads=state.threads,
    )
    _write_study(state, _dispatch(state, "eigen", req))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@_guard
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
