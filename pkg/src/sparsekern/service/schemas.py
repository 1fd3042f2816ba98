"""Pydantic request/response models for the service and the CLI client."""

from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..degrees import BinomialDegrees, CustomDegrees, DegreeSpec, RegularDegrees
from ..features import BiasLaw, Nonlinearity, WeightLaw


class NonlinearityModel(BaseModel):
    kind: Literal["step", "sign", "cosine", "sincos", "exponential", "threshold_poly"] = "cosine"
    power: int = 0

    def to_core(self) -> Nonlinearity:
        return Nonlinearity(kind=self.kind, power=self.power)


class BiasModel(BaseModel):
    kind: Literal["uniform", "none"] = "uniform"
    a1: float = -math.pi
    a2: float = math.pi

    def to_core(self) -> BiasLaw:
        if self.kind == "none":
            return BiasLaw.none()
        return BiasLaw(kind="uniform", a1=self.a1, a2=self.a2)


class WeightLawModel(BaseModel):
    kind: Literal["gaussian_iso", "gaussian_scaled", "rademacher"] = "gaussian_scaled"
    sigma: float = 1.0
    bias: BiasModel = Field(default_factory=BiasModel)

    def to_core(self) -> WeightLaw:
        return WeightLaw(kind=self.kind, sigma=self.sigma, bias=self.bias.to_core())


class DegreeModel(BaseModel):
    kind: Literal["regular", "binomial", "custom"] = "regular"
    d: Optional[int] = None
    p: Optional[float] = None
    weights: Optional[list[float]] = None

    def to_core(self, l: int) -> DegreeSpec:
        if self.kind == "regular":
            return RegularDegrees(l=l, d=self.d if self.d is not None else 1)
        if self.kind == "binomial":
            return BinomialDegrees(l=l, p=self.p if self.p is not None else 0.5)
        return CustomDegrees(l=l, weights=tuple(self.weights or ()))


class FeatureConfigModel(BaseModel):
    m: int = 1000
    degree: DegreeModel = Field(default_factory=DegreeModel)
    weight_law: WeightLawModel = Field(default_factory=WeightLawModel)
    nonlinearity: NonlinearityModel = Field(default_factory=NonlinearityModel)


class FitRequest(BaseModel):
    x: list[list[float]]
    y: list[float]
    features: FeatureConfigModel = Field(default_factory=FeatureConfigModel)
    penalty: Optional[float] = None
    penalty_grid: Optional[list[float]] = None
    cv_folds: int = 5
    seed: int = 0
    threads: int = 1
    feature_columns: Optional[list[str]] = None
    target_column: str = "target"


class FitResponse(BaseModel):
    model: dict
    metrics: dict


class PredictRequest(BaseModel):
    model: dict
    x: list[list[float]]
    threads: int = 1


class PredictResponse(BaseModel):
    predictions: list[float]


class StudyResponse(BaseModel):
    name: str
    columns: list[str]
    csv: str
    meta: dict


class ConvergenceRequest(BaseModel):
    l: int = 8
    degree: Optional[DegreeModel] = None  # defaults to regular d=l (dense)
    weight_law: WeightLawModel = Field(
        default_factory=lambda: WeightLawModel(kind="gaussian_iso", sigma=1.0)
    )
    nonlinearity: NonlinearityModel = Field(default_factory=NonlinearityModel)
    m_grid: list[int] = Field(default_factory=lambda: [256, 1024, 4096, 16384])
    n_probe_pairs: int = 200
    seed: int = 0
    threads: int = 1


class PolytestRequest(BaseModel):
    l: int = 16
    d_grid: list[int] = Field(default_factory=lambda: [1, 3, 10, 16])
    n_grid: list[int] = Field(default_factory=lambda: [100, 200, 400, 800])
    m: int = 192
    weight_variance: Literal["inv_sqrt_d", "inv_d"] = "inv_sqrt_d"
    n_test: int = 10_000
    k_folds: int = 5
    seed: int = 0
    threads: int = 1


class StabilityRequest(BaseModel):
    n: int = 800
    l: int = 20
    p: float = 0.03
    sigma: float = 6.0
    mode: Literal["per-coordinate", "per-sample"] = "per-coordinate"
    train_fraction: float = 0.75
    k_folds: int = 5
    z_thresh: float = 3.0
    huber_delta: float = 1.35
    corrupt_test: bool = False
    seed: int = 0
    threads: int = 1


class EigenRequest(BaseModel):
    n: int = 800
    l: int = 20
    p_grid: list[float] = Field(default_factory=lambda: [0.03, 0.2, 0.5])
    sigma_grid: list[float] = Field(default_factory=lambda: [2.0, 6.0, 10.0])
    kernel: Optional[dict] = None  # KernelSpec document; default sparse_sign_d1 with c=1
    mode: Literal["per-coordinate", "per-sample"] = "per-coordinate"
    x: Optional[list[list[float]]] = None
    seed: int = 0
    threads: int = 1
