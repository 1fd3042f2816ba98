import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    arccos0_scalar,
    enumerate_additive,
    gauss_hermite_pair_expectation,
    half_normal_mean,
    rbf_scalar,
)
from sparsekern import (
    ArcCos0,
    BiasLaw,
    BinomialDegrees,
    CustomDegrees,
    DegreeMixture,
    DenseSign,
    MGFGaussian,
    NoOracleError,
    Nonlinearity,
    RBF,
    RegularAdditive,
    RegularDegrees,
    SparseSignD1,
    SparseStepD1,
    ValidationError,
    WeightLaw,
    apply_features,
    arccos0_kernel,
    build_feature_map,
    degree_mixture_kernel,
    dense_sign_kernel,
    empirical_kernel,
    gram_matrix,
    gram_to_csv,
    kernel_from_dict,
    limiting_kernel_spec,
    mgf_gaussian_kernel,
    rbf_kernel,
    regular_additive_kernel,
    sparse_sign_d1,
    sparse_step_d1,
)

UNIFORM_PI = BiasLaw(kind="uniform", a1=-math.pi, a2=math.pi)


# ---------------------------------------------------------------------------
# rbf


def test_rbf_at_zero_distance():
    x = np.array([0.3, -1.2, 4.0])
    assert rbf_kernel(x, x, sigma=2.0) == 1.0


def test_rbf_half_value():
    # ||x - x'||^2 = 2 sigma^2 ln 2 inverts the exponential to 1/2.
    sigma = 1.7
    dist = math.sqrt(2 * sigma**2 * math.log(2))
    assert rbf_kernel([0.0], [dist], sigma) == pytest.approx(0.5, abs=1e-12)


def test_rbf_wide_bandwidth_limit():
    assert rbf_kernel([0.0, 0.0], [1.0, 2.0], sigma=1e6) == pytest.approx(1.0, abs=1e-6)


def test_rbf_validation():
    with pytest.raises(ValidationError):
        rbf_kernel([1.0], [1.0], sigma=0.0)
    with pytest.raises(ValidationError):
        rbf_kernel([1.0, 2.0], [1.0], sigma=1.0)


# ---------------------------------------------------------------------------
# arc-cosine p=0


def test_arccos0_aligned():
    assert arccos0_kernel([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-12)


def test_arccos0_antipodal():
    assert arccos0_kernel([1.0, -0.5], [-1.0, 0.5]) == pytest.approx(0.0, abs=1e-12)


def test_arccos0_orthogonal():
    assert arccos0_kernel([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.5, abs=1e-12)


def test_arccos0_zero_vector_rejected():
    with pytest.raises(ValidationError):
        arccos0_kernel([0.0, 0.0], [1.0, 1.0])


# ---------------------------------------------------------------------------
# dense sign


def test_dense_sign_at_zero_distance():
    x = [0.1, 0.2]
    assert dense_sign_kernel(x, x, sigma=1.0, a1=-1, a2=1, l=2) == 1.0


def test_dense_sign_hand_value():
    # sigma=1, l=1, a2=-a1=1, |x - x'| = 1: 1 - sqrt(2/pi)
    got = dense_sign_kernel([1.0], [0.0], sigma=1.0, a1=-1.0, a2=1.0, l=1)
    assert got == pytest.approx(1.0 - math.sqrt(2.0 / math.pi), abs=1e-12)


def test_dense_sign_monte_carlo():
    # w ~ N(0, sigma^2/l I) maps to an isotropic per-coordinate std sigma/sqrt(l);
    # sigma small and a wide interval keep pre-activations in range.
    l, sigma, a = 5, 0.25, 2.0
    law = WeightLaw(kind="gaussian_iso", sigma=sigma / math.sqrt(l), bias=BiasLaw(kind="uniform", a1=-a, a2=a))
    fmap = build_feature_map(l, 100_000, RegularDegrees(l=l, d=l), law, Nonlinearity("sign"), seed=31)
    gen = np.random.default_rng(31)
    X = gen.uniform(-1, 1, (8, l))
    G = empirical_kernel(fmap, X)
    exact = DenseSign(sigma=sigma, a1=-a, a2=a).gram(X)
    assert np.max(np.abs(G - exact)) < 0.02


def test_dense_sign_validation():
    with pytest.raises(ValidationError):
        DenseSign(sigma=1.0, a1=1.0, a2=-1.0)


# ---------------------------------------------------------------------------
# MGF kernel


def test_mgf_degenerate_is_constant():
    k = mgf_gaussian_kernel([1.0, 2.0], [-3.0, 0.5], mean=np.zeros(2), covariance=np.zeros((2, 2)), bias_constant=1.0)
    assert k == 1.0


def test_mgf_dot_product_ratio_on_sphere():
    # For zero mean and covariance sigma^-2 I on unit vectors,
    # k(x, x') / k(x, x) = exp(sigma^-2 (x.x' - 1)).
    sigma = 2.0
    x = np.array([1.0, 0.0])
    xp = np.array([math.cos(1.1), math.sin(1.1)])
    cov = np.eye(2) / sigma**2
    ratio = mgf_gaussian_kernel(x, xp, np.zeros(2), cov, 1.0) / mgf_gaussian_kernel(x, x, np.zeros(2), cov, 1.0)
    assert ratio == pytest.approx(math.exp((x @ xp - 1.0) / sigma**2), rel=1e-12)


def test_mgf_monte_carlo_small_dim():
    # Exponential features, Gaussian weights N(0, sigma^-2 I) with sigma=2, no bias.
    sigma = 2.0
    law = WeightLaw(kind="gaussian_iso", sigma=1.0 / sigma, bias=BiasLaw.none())
    fmap = build_feature_map(2, 1_000_000, RegularDegrees(l=2, d=2), law, Nonlinearity("exponential"), seed=32)
    angles = np.array([0.0, 0.9, 2.2, 3.8, 5.1])
    X = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    Y = np.roll(X, 1, axis=0)
    FX = apply_features(fmap, X)
    FY = apply_features(fmap, Y)
    emp = np.sum(FX * FY, axis=1)
    exact = MGFGaussian(mean=np.zeros(2), covariance=np.eye(2) / sigma**2, bias_constant=1.0).pair_values(X, Y)
    assert np.max(np.abs(emp - exact) / exact) < 0.02


def test_mgf_validation():
    with pytest.raises(ValidationError):
        MGFGaussian(mean=np.zeros(2), covariance=np.array([[1.0, 2.0], [2.0, 1.0]]), bias_constant=1.0)  # indefinite
    with pytest.raises(ValidationError):
        MGFGaussian(mean=np.zeros(2), covariance=np.eye(2), bias_constant=math.inf)


# ---------------------------------------------------------------------------
# degree-1 step kernel


def test_sparse_step_identical_inputs():
    x = np.array([0.5, -1.0, 2.0, 0.1])
    assert sparse_step_d1(x, x) == 1.0


def test_sparse_step_hand_value():
    got = sparse_step_d1([1.0, 1.0, -1.0, 1.0], [1.0, -1.0, -1.0, -1.0])
    assert got == pytest.approx(0.5, abs=1e-15)
    # brute force: average the scalar arc-cosine p=0 kernel per coordinate
    brute = enumerate_additive([1.0, 1.0, -1.0, 1.0], [1.0, -1.0, -1.0, -1.0], 1, arccos0_scalar)
    assert got == pytest.approx(brute, abs=1e-12)


def test_sparse_step_hypercube_hamming():
    gen = np.random.default_rng(33)
    for _ in range(20):
        x = gen.choice([-1.0, 1.0], size=10)
        flips = gen.integers(0, 11)
        xp = x.copy()
        idx = gen.choice(10, size=flips, replace=False)
        xp[idx] *= -1
        assert sparse_step_d1(x, xp) == pytest.approx(1.0 - flips / 10, abs=1e-15)


# ---------------------------------------------------------------------------
# degree-1 sign (stump) kernel


def test_sparse_sign_identical_inputs():
    x = np.array([0.2, -0.4])
    assert sparse_sign_d1(x, x, c=1.0, l=2) == 1.0


def test_sparse_sign_hand_value():
    # Rademacher weights (E|w| = 1) with a2 = -a1 = 1 give c = 1.
    got = sparse_sign_d1([0.5, 0.0], [0.0, 0.5], c=1.0, l=2)
    assert got == pytest.approx(0.5, abs=1e-15)


def test_sparse_sign_gaussian_constant_and_monte_carlo():
    # c = 2 E|w| / (a2 - a1) with E|w| the half-normal mean.
    sigma_w, a = 0.25, 2.0
    c = 2 * half_normal_mean(sigma_w) / (2 * a)
    law = WeightLaw(kind="gaussian_iso", sigma=sigma_w, bias=BiasLaw(kind="uniform", a1=-a, a2=a))
    fmap = build_feature_map(4, 100_000, RegularDegrees(l=4, d=1), law, Nonlinearity("sign"), seed=34)
    gen = np.random.default_rng(34)
    X = gen.uniform(-1, 1, (8, 4))
    G = empirical_kernel(fmap, X)
    exact = SparseSignD1(c=c).gram(X)
    assert np.max(np.abs(G - exact)) < 0.02


def test_sparse_sign_validation():
    with pytest.raises(ValidationError):
        SparseSignD1(c=0.0)


# ---------------------------------------------------------------------------
# regular additive kernel


def test_additive_full_degree_equals_base():
    gen = np.random.default_rng(35)
    x, xp = gen.uniform(-1, 1, (2, 5))
    base = RBF(sigma=0.8)
    assert regular_additive_kernel(x, xp, 5, base) == pytest.approx(base.value(x, xp), abs=1e-15)


def test_additive_d1_step_equals_hamming_form():
    gen = np.random.default_rng(36)
    for _ in range(50):
        x, xp = gen.standard_normal((2, 7))
        a = regular_additive_kernel(x, xp, 1, ArcCos0())
        b = sparse_step_d1(x, xp)
        assert a == pytest.approx(b, abs=1e-12)


def test_additive_d1_stump_equals_l1_form():
    gen = np.random.default_rng(37)
    c = 0.7
    for _ in range(50):
        x, xp = gen.uniform(-1, 1, (2, 6))
        a = regular_additive_kernel(x, xp, 1, SparseSignD1(c=c))
        b = sparse_sign_d1(x, xp, c=c, l=6)
        assert a == pytest.approx(b, abs=1e-12)


def test_additive_l3_d2_rbf_hand_enumeration():
    gen = np.random.default_rng(38)
    x, xp = gen.uniform(-1, 1, (2, 3))
    got = regular_additive_kernel(x, xp, 2, RBF(sigma=1.0))
    pairs = [(0, 1), (0, 2), (1, 2)]
    expected = np.mean([rbf_scalar(x[list(p)], xp[list(p)], 1.0) for p in pairs])
    assert got == pytest.approx(expected, abs=1e-12)
    brute = enumerate_additive(x, xp, 2, lambda u, v: rbf_scalar(u, v, 1.0))
    assert got == pytest.approx(brute, abs=1e-12)


def test_additive_combinatorial_guard():
    x = np.zeros(40)
    with pytest.raises(ValidationError, match="Monte Carlo"):
        regular_additive_kernel(x, x, 20, RBF(sigma=1.0))


# ---------------------------------------------------------------------------
# degree mixture kernel


def test_mixture_point_mass_equals_regular():
    gen = np.random.default_rng(39)
    x, xp = gen.uniform(-1, 1, (2, 4))
    pmf = [0.0, 0.0, 1.0, 0.0, 0.0]
    got = degree_mixture_kernel(x, xp, pmf, bases={2: RBF(1.0)})
    assert got == pytest.approx(regular_additive_kernel(x, xp, 2, RBF(1.0)), abs=1e-15)


def test_mixture_binomial_p1_is_dense():
    gen = np.random.default_rng(40)
    x, xp = gen.uniform(-1, 1, (2, 3))
    pmf = BinomialDegrees(l=3, p=1.0).pmf()
    got = degree_mixture_kernel(x, xp, pmf, bases={3: RBF(1.0)})
    assert got == pytest.approx(rbf_scalar(x, xp, 1.0), abs=1e-12)


def test_mixture_monte_carlo_l2():
    # Half the features see one coordinate, half see both.
    law = WeightLaw(kind="gaussian_iso", sigma=1.0, bias=UNIFORM_PI)
    spec = CustomDegrees(l=2, weights=(0.0, 0.5, 0.5))
    fmap = build_feature_map(2, 100_000, spec, law, Nonlinearity("cosine"), seed=41)
    gen = np.random.default_rng(41)
    X = gen.uniform(-1, 1, (12, 2))
    G = empirical_kernel(fmap, X)
    mix = DegreeMixture(pmf=np.array([0.0, 0.5, 0.5]), bases={1: RBF(1.0), 2: RBF(1.0)})
    assert np.max(np.abs(G - mix.gram(X))) < 0.02


def test_mixture_requires_bases_for_massive_degrees():
    with pytest.raises(ValidationError):
        DegreeMixture(pmf=np.array([0.0, 1.0]), bases={})


def test_mixture_pmf_validation():
    with pytest.raises(ValidationError):
        DegreeMixture(pmf=np.array([0.5, 0.4]), bases={1: RBF(1.0)})


@given(st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=25, deadline=None)
def test_mixture_linear_in_pmf(t):
    gen = np.random.default_rng(42)
    x, xp = gen.uniform(-1, 1, (2, 3))
    bases = {1: RBF(1.0), 2: RBF(0.7), 3: RBF(1.3)}
    p1 = np.array([0.0, 1.0, 0.0, 0.0])
    p2 = np.array([0.0, 0.0, 0.5, 0.5])
    blend = t * p1 + (1 - t) * p2
    k_blend = degree_mixture_kernel(x, xp, blend, bases=bases)
    k_parts = t * degree_mixture_kernel(x, xp, p1, bases=bases) + (1 - t) * degree_mixture_kernel(x, xp, p2, bases=bases)
    assert k_blend == pytest.approx(k_parts, abs=1e-12)


# ---------------------------------------------------------------------------
# gram assembly


def test_gram_single_point():
    X = np.array([[0.3, -0.4]])
    G = gram_matrix(RBF(1.0), X)
    assert G.shape == (1, 1) and G[0, 0] == 1.0


def test_gram_permutation_equivariance():
    gen = np.random.default_rng(43)
    X = gen.uniform(-1, 1, (9, 4))
    perm = gen.permutation(9)
    spec = RegularAdditive(2, RBF(0.9))
    G = gram_matrix(spec, X)
    Gp = gram_matrix(spec, X[perm])
    assert np.allclose(Gp, G[np.ix_(perm, perm)], atol=1e-12)


def test_gram_rbf_psd():
    gen = np.random.default_rng(44)
    X = gen.standard_normal((50, 6))
    eigs = np.linalg.eigvalsh(gram_matrix(RBF(1.0), X))
    assert eigs.min() >= -1e-8


@pytest.mark.parametrize(
    "spec",
    [
        ArcCos0(),
        SparseStepD1(),
        SparseSignD1(c=1.0),
        DenseSign(sigma=0.2, a1=-2.0, a2=2.0),
        MGFGaussian(mean=np.zeros(3), covariance=0.1 * np.eye(3), bias_constant=1.0),
        RegularAdditive(2, RBF(1.0)),
        DegreeMixture(pmf=np.array([0.0, 0.5, 0.5, 0.0]), bases={1: RBF(1.0), 2: RBF(1.0)}),
    ],
)
def test_gram_psd_on_valid_domain(spec):
    gen = np.random.default_rng(45)
    X = gen.uniform(0.1, 1.0, (25, 3))  # strictly positive keeps arccos0 away from zero vectors
    G = gram_matrix(spec, X)
    assert np.allclose(G, G.T, atol=1e-12)
    eigs = np.linalg.eigvalsh((G + G.T) / 2)
    assert eigs.min() >= -1e-8 * max(1.0, np.linalg.norm(G, 2))


def test_gram_threads_identical():
    gen = np.random.default_rng(46)
    X = gen.uniform(-1, 1, (30, 4))
    spec = RegularAdditive(2, RBF(1.0))
    assert np.array_equal(gram_matrix(spec, X, threads=1), gram_matrix(spec, X, threads=8))


def test_gram_csv_export():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    text = gram_to_csv(gram_matrix(RBF(1.0), X))
    lines = text.strip().split("\n")
    assert lines[0] == "k_0,k_1"
    assert len(lines) == 3
    assert float(lines[1].split(",")[0]) == 1.0


# ---------------------------------------------------------------------------
# symmetry and serialization


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_kernel_symmetry(seed):
    gen = np.random.default_rng(seed)
    x, xp = gen.uniform(0.05, 1.0, (2, 4))
    specs = [
        RBF(1.1),
        ArcCos0(),
        SparseStepD1(),
        SparseSignD1(c=0.8),
        DenseSign(sigma=0.3, a1=-2, a2=2),
        MGFGaussian(mean=np.zeros(4), covariance=0.2 * np.eye(4), bias_constant=1.5),
        RegularAdditive(2, RBF(0.9)),
    ]
    for spec in specs:
        assert spec.value(x, xp) == pytest.approx(spec.value(xp, x), rel=1e-14, abs=1e-14)


def test_kernel_spec_serialization_round_trip():
    specs = [
        RBF(2.5),
        ArcCos0(),
        SparseStepD1(),
        SparseSignD1(c=0.4),
        DenseSign(sigma=0.7, a1=-1.5, a2=2.5),
        MGFGaussian(mean=np.array([0.1, -0.2]), covariance=0.3 * np.eye(2), bias_constant=1.2),
        RegularAdditive(2, RBF(1.0)),
        DegreeMixture(pmf=np.array([0.1, 0.4, 0.5]), bases={1: RBF(1.0), 2: ArcCos0()}, zero_term=1.0),
    ]
    gen = np.random.default_rng(47)
    x, xp = gen.uniform(0.05, 1.0, (2, 2))
    for spec in specs:
        back = kernel_from_dict(spec.to_dict())
        if isinstance(spec, (RegularAdditive, MGFGaussian)) and spec.to_dict().get("variant") == "regular_additive":
            pass
        try:
            assert back.value(x, xp) == pytest.approx(spec.value(x, xp), abs=1e-15)
        except ValidationError:
            # dimension-specific specs may reject the 2-d probe; identity of
            # the document is still required
            assert back.to_dict() == spec.to_dict()
        assert back.to_dict() == spec.to_dict()


# ---------------------------------------------------------------------------
# Monte Carlo agreement at 3 * (empirical std / sqrt(m))


def _mc_agreement(fmap, oracle, X, Y):
    FX = apply_features(fmap, X)
    FY = apply_features(fmap, Y)
    m = fmap.m
    prods = FX * FY * m  # per-feature contributions (pairs jointly for sincos)
    if fmap.nonlinearity.kind == "sincos":
        prods = prods[:, 0::2] + prods[:, 1::2]
    emp = prods.mean(axis=1)
    std = prods.std(axis=1)
    exact = oracle.pair_values(X, Y)
    bound = 3.0 * std / math.sqrt(m) + 1e-9
    return np.abs(emp - exact), bound


@pytest.mark.parametrize(
    "degree,law,nl",
    [
        (("regular", 4), WeightLaw("gaussian_iso", 1.0, UNIFORM_PI), Nonlinearity("cosine")),
        (("regular", 1), WeightLaw("gaussian_iso", 1.0, BiasLaw.none()), Nonlinearity("step")),
        (("regular", 1), WeightLaw("rademacher", 1.0, BiasLaw(kind="uniform", a1=-1, a2=1)), Nonlinearity("sign")),
        (("regular", 2), WeightLaw("gaussian_scaled", 1.0, UNIFORM_PI), Nonlinearity("sincos")),
        (("binomial", 0.5), WeightLaw("gaussian_scaled", 1.0, UNIFORM_PI), Nonlinearity("cosine")),
    ],
)
def test_oracles_match_their_estimators(degree, law, nl):
    l = 4
    spec = RegularDegrees(l=l, d=degree[1]) if degree[0] == "regular" else BinomialDegrees(l=l, p=degree[1])
    oracle = limiting_kernel_spec(spec, law, nl)
    fmap = build_feature_map(l, 60_000, spec, law, nl, seed=48)
    gen = np.random.default_rng(48)
    X = gen.uniform(-1, 1, (20, l))
    Y = gen.uniform(-1, 1, (20, l))
    err, bound = _mc_agreement(fmap, oracle, X, Y)
    assert np.all(err <= bound), (err.max(), bound[np.argmax(err)])


def test_threshold_poly_relu_matches_quadrature():
    # No closed form in the package; an independent Gauss-Hermite oracle
    # evaluates E[h(w.x) h(w.x')] for the dense ReLU feature.
    l = 3
    law = WeightLaw("gaussian_iso", 1.0, BiasLaw.none())
    nl = Nonlinearity("threshold_poly", power=1)
    with pytest.raises(NoOracleError):
        limiting_kernel_spec(RegularDegrees(l=l, d=l), law, nl)
    fmap = build_feature_map(l, 200_000, RegularDegrees(l=l, d=l), law, nl, seed=49)
    gen = np.random.default_rng(49)
    X = gen.uniform(-1, 1, (6, l))
    Y = gen.uniform(-1, 1, (6, l))
    FX = apply_features(fmap, X)
    FY = apply_features(fmap, Y)
    emp = np.sum(FX * FY, axis=1)
    h = lambda z: math.sqrt(2.0) * np.maximum(z, 0.0)
    exact = np.array([
        gauss_hermite_pair_expectation(h, float(x @ x), float(y @ y), float(x @ y))
        for x, y in zip(X, Y)
    ])
    assert np.max(np.abs(emp - exact)) < 0.05


# ---------------------------------------------------------------------------
# limiting kernel mapping


def test_limiting_spec_dense_cosine_is_rbf():
    spec = limiting_kernel_spec(RegularDegrees(l=8, d=8), WeightLaw("gaussian_iso", 0.5, UNIFORM_PI), Nonlinearity("cosine"))
    assert spec == RBF(sigma=2.0)


def test_limiting_spec_step_d1():
    spec = limiting_kernel_spec(RegularDegrees(l=8, d=1), WeightLaw("gaussian_iso", 1.0, BiasLaw.none()), Nonlinearity("step"))
    assert isinstance(spec, SparseStepD1)


def test_limiting_spec_sign_d1_constant():
    law = WeightLaw("gaussian_iso", 0.25, BiasLaw(kind="uniform", a1=-2, a2=2))
    spec = limiting_kernel_spec(RegularDegrees(l=8, d=1), law, Nonlinearity("sign"))
    assert isinstance(spec, SparseSignD1)
    assert spec.c == pytest.approx(2 * half_normal_mean(0.25) / 4.0, abs=1e-15)


def test_limiting_spec_biased_step_has_no_oracle():
    with pytest.raises(NoOracleError):
        limiting_kernel_spec(RegularDegrees(l=4, d=1), WeightLaw("gaussian_iso", 1.0, UNIFORM_PI), Nonlinearity("step"))


def test_limiting_spec_scaled_mixture_bandwidths():
    law = WeightLaw("gaussian_scaled", 1.0, UNIFORM_PI)
    spec = limiting_kernel_spec(BinomialDegrees(l=3, p=0.5), law, Nonlinearity("sincos"))
    assert isinstance(spec, DegreeMixture)
    # per-degree std sigma/sqrt(d) maps to an RBF bandwidth sqrt(d)
    assert spec.bases[2] == RBF(sigma=math.sqrt(2.0))
    assert spec.zero_term == 1.0
