"""Exact limiting kernels for random feature families.

Every spec is an immutable, pure description; evaluation is side-effect free.
The additive forms (RegularAdditive, DegreeMixture) enumerate neighborhoods by
brute force and are guarded so the combinatorics stay tractable — past the
guard, Monte Carlo features are the intended tool.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial.distance import cdist

from .degrees import BinomialDegrees, CustomDegrees, DegreeSpec, RegularDegrees
from .errors import NoOracleError, ValidationError
from .features import BiasLaw, Nonlinearity, WeightLaw, degree_zero_constant

_COMB_GUARD = 10**6


class KernelSpec:
    """Base class for exact kernel oracles."""

    def value(self, x, xp) -> float:
        x = np.asarray(x, dtype=float).ravel()
        xp = np.asarray(xp, dtype=float).ravel()
        if x.shape != xp.shape:
            raise ValidationError(f"dimension mismatch: {x.shape} vs {xp.shape}")
        return float(self.pair_values(x[None, :], xp[None, :])[0])

    def pair_values(self, X, Y) -> np.ndarray:
        """k(X[i], Y[i]) for paired rows."""
        raise NotImplementedError

    def cross(self, X, Y) -> np.ndarray:
        """(len(X), len(Y)) matrix of k(X[i], Y[j])."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        out = np.empty((X.shape[0], Y.shape[0]))
        for i in range(X.shape[0]):
            out[i] = self.pair_values(np.broadcast_to(X[i], Y.shape), Y)
        return out

    def gram(self, X, threads: int = 1) -> np.ndarray:
        """Symmetric Gram matrix; default assembles rows from pair_values."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        G = np.empty((n, n))

        def fill(rows):
            for i in rows:
                vals = self.pair_values(np.broadcast_to(X[i], (n - i, X.shape[1])), X[i:])
                G[i, i:] = vals
                G[i:, i] = vals

        if threads > 1 and n >= 2 * threads:
            bounds = np.linspace(0, n, threads + 1, dtype=int)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(lambda b: fill(range(b[0], b[1])), zip(bounds[:-1], bounds[1:])))
        else:
            fill(range(n))
        return G

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RBF(KernelSpec):
    """exp(-||x - x'||^2 / (2 sigma^2))."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValidationError(f"RBF bandwidth must be positive, got {self.sigma}")

    def pair_values(self, X, Y):
        sq = np.sum((np.asarray(X, float) - np.asarray(Y, float)) ** 2, axis=-1)
        return np.exp(-sq / (2.0 * self.sigma**2))

    def gram(self, X, threads: int = 1):
        sq = cdist(X, X, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))

    def cross(self, X, Y):
        sq = cdist(np.asarray(X, float), np.asarray(Y, float), "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))

    def to_dict(self):
        return {"variant": "rbf", "sigma": self.sigma}


@dataclass(frozen=True)
class ArcCos0(KernelSpec):
    """1 - angle(x, x') / pi; the step-nonlinearity kernel on dense weights."""

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        nx = np.linalg.norm(X, axis=-1, keepdims=True)
        ny = np.linalg.norm(Y, axis=-1, keepdims=True)
        if np.any(nx == 0) or np.any(ny == 0):
            raise ValidationError("arc-cosine kernel is undefined at the zero vector")
        U = X / nx
        V = Y / ny
        # Half-angle form is well conditioned at both ends (arccos of the raw
        # cosine loses ~8 digits near aligned inputs).
        diff = np.minimum(np.linalg.norm(U - V, axis=-1) / 2.0, 1.0)
        summ = np.minimum(np.linalg.norm(U + V, axis=-1) / 2.0, 1.0)
        obtuse = np.sum(U * V, axis=-1) < 0
        theta = np.where(obtuse, math.pi - 2.0 * np.arcsin(summ), 2.0 * np.arcsin(diff))
        return 1.0 - theta / math.pi

    def to_dict(self):
        return {"variant": "arccos0"}


@dataclass(frozen=True)
class DenseSign(KernelSpec):
    """Sign-nonlinearity kernel for w ~ N(0, sigma^2 l^-1 I), b ~ U[a1, a2].

    1 - 2 sigma sqrt(2/(pi l)) ||x - x'||_2 / (a2 - a1); valid while the
    pre-activations stay inside the bias interval.
    """

    sigma: float = 1.0
    a1: float = -1.0
    a2: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not self.a1 < self.a2:
            raise ValidationError(f"bias interval requires a1 < a2, got [{self.a1}, {self.a2}]")

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        l = X.shape[-1]
        dist = np.linalg.norm(X - Y, axis=-1)
        return 1.0 - 2.0 * self.sigma * math.sqrt(2.0 / (math.pi * l)) * dist / (self.a2 - self.a1)

    def to_dict(self):
        return {"variant": "dense_sign", "sigma": self.sigma, "a1": self.a1, "a2": self.a2}


@dataclass(frozen=True, eq=False)
class MGFGaussian(KernelSpec):
    """Exponential-nonlinearity kernel via the Gaussian moment generating function.

    k(x, x') = exp(m^T (x+x') + (x+x')^T Sigma (x+x') / 2) * bias_constant,
    for w ~ N(m, Sigma) and an independent bias with E exp(2b) = bias_constant
    (the caller must supply a finite value; some bias laws have none).
    """

    mean: np.ndarray = field(default_factory=lambda: np.zeros(1))
    covariance: np.ndarray = field(default_factory=lambda: np.eye(1))
    bias_constant: float = 1.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValidationError("covariance must be symmetric")
        if mean.size and np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValidationError("covariance must be positive semidefinite")
        if not np.isfinite(self.bias_constant):
            raise ValidationError("bias_constant must be finite")

    def pair_values(self, X, Y):
        S = np.asarray(X, float) + np.asarray(Y, float)
        quad = 0.5 * np.sum((S @ self.covariance) * S, axis=-1)
        return np.exp(S @ self.mean + quad) * self.bias_constant

    def to_dict(self):
        return {
            "variant": "mgf_gaussian",
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "bias_constant": self.bias_constant,
        }


@dataclass(frozen=True)
class SparseStepD1(KernelSpec):
    """1 - (fraction of coordinates whose signs disagree); sgn(0) = 0."""

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        mismatch = np.mean(np.sign(X) != np.sign(Y), axis=-1)
        return 1.0 - mismatch

    def gram(self, X, threads: int = 1):
        S = np.sign(np.asarray(X, float))
        # Hamming distance over sign patterns, vectorized over value levels.
        n, l = S.shape
        agree = np.zeros((n, n))
        for v in (-1.0, 0.0, 1.0):
            M = (S == v).astype(float)
            agree += M @ M.T
        return agree / l

    def to_dict(self):
        return {"variant": "sparse_step_d1"}


@dataclass(frozen=True)
class SparseSignD1(KernelSpec):
    """1 - (c / l) ||x - x'||_1 with c = 2 E|w| / (a2 - a1) (the random stump).

    May go negative for distant points; positive semidefiniteness holds on the
    parameter/domain combinations matching the generative model.
    """

    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValidationError(f"stump constant must be positive, got {self.c}")

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        l = X.shape[-1]
        return 1.0 - (self.c / l) * np.sum(np.abs(X - Y), axis=-1)

    def gram(self, X, threads: int = 1):
        l = X.shape[1]
        return 1.0 - (self.c / l) * cdist(X, X, "cityblock")

    def cross(self, X, Y):
        X = np.asarray(X, float)
        return 1.0 - (self.c / X.shape[1]) * cdist(X, np.asarray(Y, float), "cityblock")

    def to_dict(self):
        return {"variant": "sparse_sign_d1", "c": self.c}


def _check_enumerable(l: int, d: int):
    if not 1 <= d <= l:
        raise ValidationError(f"degree must satisfy 1 <= d <= l, got d={d}, l={l}")
    if math.comb(l, d) > _COMB_GUARD:
        raise ValidationError(
            f"C({l},{d}) = {math.comb(l, d)} neighborhoods exceed the enumeration "
            f"guard ({_COMB_GUARD}); use Monte Carlo features instead"
        )


@dataclass(frozen=True)
class RegularAdditive(KernelSpec):
    """Average of a d-dimensional base kernel over all C(l, d) neighborhoods."""

    d: int
    base: KernelSpec

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"degree must be positive, got {self.d}")

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        l = X.shape[-1]
        _check_enumerable(l, self.d)
        total = np.zeros(X.shape[0])
        count = 0
        for nb in combinations(range(l), self.d):
            idx = list(nb)
            total += self.base.pair_values(X[:, idx], Y[:, idx])
            count += 1
        return total / count

    def gram(self, X, threads: int = 1):
        X = np.asarray(X, float)
        l = X.shape[1]
        _check_enumerable(l, self.d)
        n = X.shape[0]
        G = np.zeros((n, n))
        count = 0
        for nb in combinations(range(l), self.d):
            G += self.base.gram(X[:, list(nb)])
            count += 1
        return G / count

    def to_dict(self):
        return {"variant": "regular_additive", "d": self.d, "base": self.base.to_dict()}


@dataclass(frozen=True, eq=False)
class DegreeMixture(KernelSpec):
    """sum_d D(d) * k_d^additive, with a constant term for degree 0.

    `bases` maps each degree d >= 1 with positive mass to its d-dimensional
    base kernel; `zero_term` is E[h(b)^2], the exact degree-0 feature product.
    """

    pmf: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    bases: dict = field(default_factory=dict)
    zero_term: float = 0.0

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if pmf.ndim != 1 or pmf.size < 1:
            raise ValidationError("pmf must be a nonempty vector over degrees 0..l")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValidationError("pmf must be nonnegative and sum to 1")
        for d, w in enumerate(pmf):
            if d >= 1 and w > 0 and d not in self.bases:
                raise ValidationError(f"degree {d} has mass {w} but no base kernel")

    def pair_values(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        if self.pmf.size - 1 > X.shape[-1]:
            raise ValidationError(f"pmf covers degrees up to {self.pmf.size - 1} but inputs have dim {X.shape[-1]}")
        out = np.full(X.shape[0], self.pmf[0] * self.zero_term)
        for d, w in enumerate(self.pmf):
            if d == 0 or w == 0:
                continue
            out += w * RegularAdditive(d, self.bases[d]).pair_values(X, Y)
        return out

    def gram(self, X, threads: int = 1):
        X = np.asarray(X, float)
        n = X.shape[0]
        G = np.full((n, n), self.pmf[0] * self.zero_term)
        for d, w in enumerate(self.pmf):
            if d == 0 or w == 0:
                continue
            G += w * RegularAdditive(d, self.bases[d]).gram(X, threads=threads)
        return G

    def to_dict(self):
        return {
            "variant": "degree_mixture",
            "pmf": self.pmf.tolist(),
            "bases": {str(d): b.to_dict() for d, b in self.bases.items()},
            "zero_term": self.zero_term,
        }


def kernel_from_dict(doc: dict) -> KernelSpec:
    variant = doc.get("variant")
    if variant == "rbf":
        return RBF(sigma=doc["sigma"])
    if variant == "arccos0":
        return ArcCos0()
    if variant == "dense_sign":
        return DenseSign(sigma=doc["sigma"], a1=doc["a1"], a2=doc["a2"])
    if variant == "mgf_gaussian":
        return MGFGaussian(
            mean=np.asarray(doc["mean"], float),
            covariance=np.asarray(doc["covariance"], float),
            bias_constant=doc["bias_constant"],
        )
    if variant == "sparse_step_d1":
        return SparseStepD1()
    if variant == "sparse_sign_d1":
        return SparseSignD1(c=doc["c"])
    if variant == "regular_additive":
        return RegularAdditive(d=doc["d"], base=kernel_from_dict(doc["base"]))
    if variant == "degree_mixture":
        return DegreeMixture(
            pmf=np.asarray(doc["pmf"], float),
            bases={int(d): kernel_from_dict(b) for d, b in doc["bases"].items()},
            zero_term=doc["zero_term"],
        )
    raise ValidationError(f"unknown kernel variant {variant!r}")


# Functional entry points over the oracle classes.


def rbf_kernel(x, xp, sigma: float) -> float:
    return RBF(sigma).value(x, xp)


def arccos0_kernel(x, xp) -> float:
    return ArcCos0().value(x, xp)


def dense_sign_kernel(x, xp, sigma: float, a1: float, a2: float, l: int) -> float:
    x = np.asarray(x, float).ravel()
    if x.size != l:
        raise ValidationError(f"expected dimension l={l}, got {x.size}")
    return DenseSign(sigma, a1, a2).value(x, xp)


def mgf_gaussian_kernel(x, xp, mean, covariance, bias_constant: float) -> float:
    return MGFGaussian(mean, covariance, bias_constant).value(x, xp)


def sparse_step_d1(x, xp) -> float:
    return SparseStepD1().value(x, xp)


def sparse_sign_d1(x, xp, c: float, l: int) -> float:
    x = np.asarray(x, float).ravel()
    if x.size != l:
        raise ValidationError(f"expected dimension l={l}, got {x.size}")
    return SparseSignD1(c).value(x, xp)


def regular_additive_kernel(x, xp, d: int, base: KernelSpec) -> float:
    return RegularAdditive(d, base).value(x, xp)


def degree_mixture_kernel(x, xp, pmf, bases: dict, zero_term: float = 0.0) -> float:
    return DegreeMixture(np.asarray(pmf, float), bases, zero_term).value(x, xp)


def gram_matrix(spec: KernelSpec, X, threads: int = 1) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"data must be a 2-d matrix, got shape {X.shape}")
    return spec.gram(X, threads=threads)


def gram_to_csv(G: np.ndarray) -> str:
    """Row-major CSV; the header row carries the n column labels."""
    n = G.shape[0]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"k_{j}" for j in range(n)])
    for row in G:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _dense_base_for(nonlinearity: Nonlinearity, law: WeightLaw, d: int) -> KernelSpec:
    """Closed-form kernel of a dense feature on d inputs, if one exists."""
    s = law.std_for_degree(d)
    kind = nonlinearity.kind
    if kind in ("cosine", "sincos"):
        if law.kind == "rademacher":
            raise NoOracleError("no closed form for Fourier features with Rademacher weights")
        return RBF(sigma=1.0 / s)
    if kind == "step" or (kind == "threshold_poly" and nonlinearity.power == 0):
        if law.bias.kind != "none":
            raise NoOracleError("biased step features have no closed-form kernel")
        if d == 1:
            return ArcCos0()  # any sign-symmetric scalar weight law gives the same angle kernel
        if law.kind == "rademacher":
            raise NoOracleError("step features with Rademacher weights have no closed form beyond d=1")
        return ArcCos0()
    if kind == "sign":
        if law.bias.kind != "uniform":
            raise NoOracleError("sign features need a uniform bias interval for a closed form")
        if d == 1:
            c = 2.0 * law.mean_abs_weight(1) / (law.bias.a2 - law.bias.a1)
            return SparseSignD1(c=c)
        if law.kind == "rademacher":
            raise NoOracleError("sign features with Rademacher weights have no closed form beyond d=1")
        return DenseSign(sigma=s * math.sqrt(d), a1=law.bias.a1, a2=law.bias.a2)
    if kind == "exponential":
        if law.kind == "rademacher":
            raise NoOracleError("no closed form for exponential features with Rademacher weights")
        if law.bias.kind == "none":
            const = 1.0
        else:
            const = degree_zero_constant(Nonlinearity("exponential"), law.bias)
        return MGFGaussian(mean=np.zeros(d), covariance=s**2 * np.eye(d), bias_constant=const)
    raise NoOracleError(f"no closed-form kernel for nonlinearity {kind!r}")


def _cosine_phase_ok(bias: BiasLaw) -> bool:
    # E[cos 2b] must vanish; uniform over any multiple of pi does it exactly.
    if bias.kind != "uniform":
        return False
    width = bias.a2 - bias.a1
    return abs(width / math.pi - round(width / math.pi)) < 1e-9 and width > 0


def limiting_kernel_spec(degree_spec: DegreeSpec, weight_law: WeightLaw, nonlinearity: Nonlinearity) -> KernelSpec:
    """Exact kernel a feature map with these laws converges to, if known."""
    if nonlinearity.kind == "cosine" and not _cosine_phase_ok(weight_law.bias):
        raise NoOracleError(
            "cosine features need a uniform phase over a multiple of pi for the RBF limit"
        )
    if nonlinearity.kind == "threshold_poly" and nonlinearity.power >= 1:
        raise NoOracleError("no closed form for threshold_poly powers >= 1")
    l = degree_spec.l

    def additive(d):
        base = _dense_base_for(nonlinearity, weight_law, d)
        if d == l:
            return base
        if d == 1:
            # Direct closed forms; identical to the subset average but robust
            # to zero coordinates (step) and cheaper to evaluate.
            if nonlinearity.kind == "step" or (nonlinearity.kind == "threshold_poly" and nonlinearity.power == 0):
                return SparseStepD1()
            if nonlinearity.kind == "sign":
                return base  # already the stump kernel, dimension-generic
        return RegularAdditive(d, base)

    if isinstance(degree_spec, RegularDegrees):
        return additive(degree_spec.d)
    if isinstance(degree_spec, (BinomialDegrees, CustomDegrees)):
        pmf = degree_spec.pmf()
        bases = {d: _dense_base_for(nonlinearity, weight_law, d) for d in range(1, l + 1) if pmf[d] > 0}
        zero = degree_zero_constant(nonlinearity, weight_law.bias) if pmf[0] > 0 else 0.0
        return DegreeMixture(pmf=pmf, bases=bases, zero_term=zero)
    raise NoOracleError(f"unsupported degree spec {type(degree_spec).__name__}")
