"""Sparse random feature maps: sampling, application, serialization.

A map holds m features phi_i(x) = scale * h(w_i . x_{N_i} + b_i) with
neighborhoods N_i of size d_i, stored CSR-style (sorted column indices per
feature row). Maps are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .degrees import DegreeSpec, sample_degrees
from .errors import ValidationError
from .rng import FEATURES, substream

_SERIAL_VERSION = 1
_BUILD_CHUNK = 2048

_NONLIN_KINDS = ("step", "sign", "cosine", "sincos", "exponential", "threshold_poly")
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise activation applied to pre-activations w.x + b.

    Amplitudes follow the random-features conventions under which each
    family's empirical kernel estimates its closed form directly: `step` and
    `threshold_poly` carry the arc-cosine amplitude sqrt(2)*heaviside(z)*z^p
    (so threshold_poly with power 0 is exactly `step`), `cosine` is the
    classical Fourier feature sqrt(2)*cos(z) whose phase should be uniform
    over a period, `sincos` emits the unit-amplitude (sin z, cos z) pair, and
    `sign`/`exponential` are the bare functions. sign(0) = 0 and step(0) = 0.
    """

    kind: str
    power: int = 0

    def __post_init__(self):
        if self.kind not in _NONLIN_KINDS:
            raise ValidationError(f"unknown nonlinearity {self.kind!r}")
        if self.kind == "threshold_poly" and self.power < 0:
            raise ValidationError("threshold_poly power must be nonnegative")

    @property
    def outputs_per_feature(self) -> int:
        return 2 if self.kind == "sincos" else 1

    @property
    def is_lipschitz(self) -> bool:
        """Globally Lipschitz activations (uniform-rate convergence applies)."""
        if self.kind in ("cosine", "sincos"):
            return True
        return self.kind == "threshold_poly" and self.power == 1

    def apply(self, Z: np.ndarray) -> np.ndarray:
        """Map (n, m) pre-activations to (n, m * outputs_per_feature) outputs.

        For `sincos` the two outputs of feature i land in columns 2i, 2i+1.
        """
        if self.kind == "step":
            return _SQRT2 * (Z > 0)
        if self.kind == "sign":
            return np.sign(Z)
        if self.kind == "cosine":
            return _SQRT2 * np.cos(Z)
        if self.kind == "exponential":
            return np.exp(Z)
        if self.kind == "threshold_poly":
            if self.power == 0:
                return _SQRT2 * (Z > 0)
            return _SQRT2 * (Z > 0) * np.maximum(Z, 0.0) ** self.power
        out = np.empty((Z.shape[0], 2 * Z.shape[1]))
        out[:, 0::2] = np.sin(Z)
        out[:, 1::2] = np.cos(Z)
        return out

    def to_dict(self) -> dict:
        if self.kind == "threshold_poly":
            return {"kind": self.kind, "power": self.power}
        return {"kind": self.kind}


def nonlinearity_from_dict(doc: dict) -> Nonlinearity:
    return Nonlinearity(kind=doc["kind"], power=int(doc.get("power", 0)))


@dataclass(frozen=True)
class BiasLaw:
    """Bias distribution: uniform over [a1, a2], or none (bias fixed at 0)."""

    kind: str = "uniform"
    a1: float = -math.pi
    a2: float = math.pi

    def __post_init__(self):
        if self.kind not in ("uniform", "none"):
            raise ValidationError(f"unknown bias law {self.kind!r}")
        if self.kind == "uniform" and not self.a1 < self.a2:
            raise ValidationError(f"bias interval requires a1 < a2, got [{self.a1}, {self.a2}]")

    @classmethod
    def none(cls) -> "BiasLaw":
        return cls(kind="none", a1=0.0, a2=0.0)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "none":
            return 0.0
        return float(rng.uniform(self.a1, self.a2))

    def to_dict(self):
        if self.kind == "none":
            return {"kind": "none"}
        return {"kind": "uniform", "a1": self.a1, "a2": self.a2}


_WEIGHT_KINDS = ("gaussian_iso", "gaussian_scaled", "rademacher")


@dataclass(frozen=True)
class WeightLaw:
    """Law of the nonzero weights on a feature's neighborhood.

    gaussian_iso: each weight i.i.d. N(0, sigma^2).
    gaussian_scaled: N(0, sigma^2 / d) given degree d, so E||w||^2 = sigma^2
        for every degree.
    rademacher: +-sigma with equal probability.
    """

    kind: str = "gaussian_iso"
    sigma: float = 1.0
    bias: BiasLaw = field(default_factory=BiasLaw)

    def __post_init__(self):
        if self.kind not in _WEIGHT_KINDS:
            raise ValidationError(f"unknown weight law {self.kind!r}")
        if self.sigma <= 0:
            raise ValidationError(f"weight scale must be positive, got {self.sigma}")

    def std_for_degree(self, d: int) -> float:
        if self.kind == "gaussian_scaled":
            return self.sigma / math.sqrt(d) if d > 0 else 0.0
        return self.sigma

    def mean_abs_weight(self, d: int) -> float:
        """E|w| of a single nonzero weight at degree d."""
        if self.kind == "rademacher":
            return self.sigma
        return self.std_for_degree(d) * math.sqrt(2.0 / math.pi)

    def sample(self, rng: np.random.Generator, d: int) -> np.ndarray:
        if d == 0:
            return np.empty(0)
        if self.kind == "rademacher":
            return self.sigma * (2.0 * rng.integers(0, 2, size=d) - 1.0)
        return rng.standard_normal(d) * self.std_for_degree(d)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma, "bias": self.bias.to_dict()}


def weight_law_from_dict(doc: dict) -> WeightLaw:
    bias = doc.get("bias", {"kind": "uniform", "a1": -math.pi, "a2": math.pi})
    return WeightLaw(
        kind=doc["kind"],
        sigma=float(doc.get("sigma", 1.0)),
        bias=BiasLaw(kind=bias["kind"], a1=float(bias.get("a1", 0.0)), a2=float(bias.get("a2", 0.0))),
    )


def degree_zero_constant(nonlinearity: Nonlinearity, bias: BiasLaw) -> float:
    """Exact E[h(b)^2] under the bias law: the degree-0 kernel contribution."""
    if bias.kind == "none":
        h0 = nonlinearity.apply(np.zeros((1, 1)))
        return float(np.sum(h0**2))
    a1, a2 = bias.a1, bias.a2
    width = a2 - a1
    kind = nonlinearity.kind
    if kind == "sign":
        return 1.0
    if kind == "sincos":
        return 1.0
    if kind == "cosine":
        # E[2 cos^2 b] = 1 + E[cos 2b]
        return 1.0 + (math.sin(2 * a2) - math.sin(2 * a1)) / (2 * width)
    if kind == "exponential":
        return (math.exp(2 * a2) - math.exp(2 * a1)) / (2 * width)
    # step / threshold_poly: 2 E[heaviside(b) b^(2p)]
    p = nonlinearity.power if kind == "threshold_poly" else 0
    if a2 <= 0:
        return 0.0
    lo = max(a1, 0.0)
    return 2.0 * (a2 ** (2 * p + 1) - lo ** (2 * p + 1)) / ((2 * p + 1) * width)


def sample_neighborhood(l: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform d-subset of {0, ..., l-1}, returned sorted."""
    if not 0 <= d <= l:
        raise ValidationError(f"degree must satisfy 0 <= d <= l, got d={d}, l={l}")
    if d == 0:
        return np.empty(0, dtype=np.int64)
    if d == l:
        return np.arange(l, dtype=np.int64)
    return np.sort(rng.choice(l, size=d, replace=False)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SparseFeatureMap:
    """Immutable sampled feature map with CSR-style weight storage."""

    l: int
    m: int
    nonlinearity: Nonlinearity
    scale: float
    seed: int
    degrees: np.ndarray  # (m,) int64
    indptr: np.ndarray  # (m+1,) int64
    indices: np.ndarray  # (sum d_i,) int64, sorted within each feature
    weights: np.ndarray  # (sum d_i,) float64
    biases: np.ndarray  # (m,) float64

    @property
    def output_dim(self) -> int:
        return self.m * self.nonlinearity.outputs_per_feature

    def neighborhood(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def feature_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i] : self.indptr[i + 1]]

    def weight_matrix(self) -> sp.csr_matrix:
        """(m, l) sparse weight matrix; row i holds feature i's weights."""
        return sp.csr_matrix(
            (self.weights, self.indices.astype(np.int32), self.indptr),
            shape=(self.m, self.l),
        )

    def to_json_dict(self) -> dict:
        return {
            "version": _SERIAL_VERSION,
            "l": self.l,
            "m": self.m,
            "nonlinearity": self.nonlinearity.to_dict(),
            "scale": self.scale,
            "seed": self.seed,
            "degrees": [int(d) for d in self.degrees],
            "neighborhoods": [[int(j) for j in self.neighborhood(i)] for i in range(self.m)],
            "weights": [[float(w) for w in self.feature_weights(i)] for i in range(self.m)],
            "biases": [float(b) for b in self.biases],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def feature_map_from_json_dict(doc: dict) -> SparseFeatureMap:
    if doc.get("version") != _SERIAL_VERSION:
        raise ValidationError(f"unsupported feature map version {doc.get('version')!r}")
    degrees = np.asarray(doc["degrees"], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
    indices = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in doc["neighborhoods"]] or [np.empty(0, np.int64)])
    weights = np.concatenate([np.asarray(w, dtype=float) for w in doc["weights"]] or [np.empty(0)])
    return SparseFeatureMap(
        l=int(doc["l"]),
        m=int(doc["m"]),
        nonlinearity=nonlinearity_from_dict(doc["nonlinearity"]),
        scale=float(doc["scale"]),
        seed=int(doc["seed"]),
        degrees=degrees,
        indptr=indptr,
        indices=indices,
        weights=weights,
        biases=np.asarray(doc["biases"], dtype=float),
    )


def feature_map_from_json(text: str) -> SparseFeatureMap:
    return feature_map_from_json_dict(json.loads(text))


def _build_range(lo, hi, l, degrees, weight_law, seed):
    """Sample neighborhoods/weights/biases for features lo..hi-1.

    Feature i draws, in fixed order, from its own (seed, FEATURES, i)
    substream, so output is identical however ranges are split over workers.
    """
    nbhds = []
    wts = []
    biases = np.empty(hi - lo)
    for i in range(lo, hi):
        rng = substream(seed, FEATURES, i)
        d = int(degrees[i])
        nbhds.append(sample_neighborhood(l, d, rng))
        wts.append(weight_law.sample(rng, d))
        biases[i - lo] = weight_law.bias.sample(rng)
    return nbhds, wts, biases


def build_feature_map(
    l: int,
    m: int,
    degree_spec: DegreeSpec,
    weight_law: WeightLaw,
    nonlinearity: Nonlinearity,
    seed: int,
    threads: int = 1,
) -> SparseFeatureMap:
    """Sample a feature map: degrees, then per-feature neighborhood/weights/bias."""
    if m < 1:
        raise ValidationError(f"feature count must be positive, got {m}")
    if degree_spec.l != l:
        raise ValidationError(f"degree spec dimension {degree_spec.l} != l={l}")
    degrees = sample_degrees(degree_spec, m, seed)

    ranges = [(lo, min(lo + _BUILD_CHUNK, m)) for lo in range(0, m, _BUILD_CHUNK)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _build_range(*r, l, degrees, weight_law, seed), ranges))
    else:
        parts = [_build_range(lo, hi, l, degrees, weight_law, seed) for lo, hi in ranges]

    nbhds = [nb for part in parts for nb in part[0]]
    wts = [w for part in parts for w in part[1]]
    biases = np.concatenate([part[2] for part in parts])
    indptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
    indices = np.concatenate(nbhds) if nbhds else np.empty(0, np.int64)
    weights = np.concatenate(wts) if wts else np.empty(0)
    return SparseFeatureMap(
        l=l,
        m=m,
        nonlinearity=nonlinearity,
        scale=1.0 / math.sqrt(m),
        seed=int(seed),
        degrees=degrees,
        indptr=indptr,
        indices=indices.astype(np.int64),
        weights=weights,
        biases=biases,
    )


def _check_inputs(fmap: SparseFeatureMap, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != fmap.l:
        raise ValidationError(f"input must be (n, {fmap.l}), got {X.shape}")
    return X


def apply_features(fmap: SparseFeatureMap, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """Feature matrix F with F[j, i] = scale * h(w_i . x_j + b_i).

    Sparse matvec keeps the cost at O(n * sum d_i). For `sincos`, feature i
    produces columns 2i and 2i+1.
    """
    X = _check_inputs(fmap, X)
    W = fmap.weight_matrix()
    nl = fmap.nonlinearity

    def chunk(lo, hi):
        Z = (W[lo:hi] @ X.T).T + fmap.biases[lo:hi]
        return nl.apply(Z)

    if threads > 1 and fmap.m >= 2 * threads:
        bounds = np.linspace(0, fmap.m, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda b: chunk(*b), zip(bounds[:-1], bounds[1:])))
        F = np.hstack(blocks)
    else:
        F = chunk(0, fmap.m)
    return fmap.scale * F


def empirical_kernel(fmap: SparseFeatureMap, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """Gram matrix F F^T of the scaled features; estimates the limiting kernel."""
    F = apply_features(fmap, X, threads=threads)
    return F @ F.T
