import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdisc import (
    DimensionError,
    Family,
    KdiscError,
    KernelSpec,
    MeanKernel,
    UnsupportedKernelError,
    cross_partial_trace,
    evaluate,
    grad_x,
    gram,
    pairwise_distances,
)
from kdisc.kernels import kernel_pairs

from conftest import RADIAL_NAMES, SMOOTH_NAMES, make_kernel, radial_kernels

E1 = math.exp(-1.0)


# -- closed-form values ---------------------------------------------------------


def test_gaussian_unit_distance():
    assert evaluate(KernelSpec("gaussian", 1.0), [0.0], [1.0]) == pytest.approx(E1, rel=1e-15)


def test_matern_at_zero_distance_is_one():
    for bw in (0.1, 1.0, 37.0):
        assert evaluate(make_kernel("matern1.5", bw), [0.3, -2.0], [0.3, -2.0]) == 1.0


def test_laplace_uses_l1_distance():
    assert evaluate(KernelSpec("laplace", 2.0), [0.0], [2.0]) == pytest.approx(E1, rel=1e-15)
    assert evaluate(KernelSpec("laplace", 1.0), [0.0, 0.0], [1.0, 2.0]) == pytest.approx(math.exp(-3.0), rel=1e-15)


def test_imq_is_normalised():
    assert evaluate(KernelSpec("imq", 2.0), [0.0], [2.0]) == pytest.approx(2.0**-0.5, rel=1e-15)


@pytest.mark.parametrize(
    "nu, profile",
    [
        (0.5, lambda u: math.exp(-u)),
        (1.5, lambda u: (1 + math.sqrt(3) * u) * math.exp(-math.sqrt(3) * u)),
        (2.5, lambda u: (1 + math.sqrt(5) * u + 5 * u * u / 3) * math.exp(-math.sqrt(5) * u)),
        (3.5, lambda u: (1 + math.sqrt(7) * u + 14 * u**2 / 5 + 7 * math.sqrt(7) * u**3 / 15) * math.exp(-math.sqrt(7) * u)),
        (4.5, lambda u: (1 + 3 * u + 27 * u**2 / 7 + 18 * u**3 / 7 + 27 * u**4 / 35) * math.exp(-3 * u)),
    ],
)
def test_matern_profiles(nu, profile):
    k = KernelSpec("matern", 1.7, nu=nu)
    for dist in (0.05, 0.9, 2.3, 6.0):
        x, y = np.zeros(2), np.array([dist * 0.6, dist * 0.8])
        assert evaluate(k, x, y) == pytest.approx(profile(dist / 1.7), rel=1e-13)


def test_matern_general_order():
    k = KernelSpec("matern", 1.0, r=3.0, nu=0.5)
    d = (1.0 + 2.0**3) ** (1 / 3)
    assert evaluate(k, [0.0, 0.0], [1.0, -2.0]) == pytest.approx(math.exp(-d), rel=1e-14)


def test_indicator_exact_equality():
    k = KernelSpec("indicator")
    assert evaluate(k, [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert evaluate(k, [1.0, 2.0], [1.0, 2.0 + 1e-15]) == 0.0


def test_far_points_underflow_to_zero():
    for k in radial_kernels(1.0):
        assert evaluate(k, [0.0], [1e6]) <= 1e-300 or k.family is Family.IMQ


# -- distances and Gram matrices -------------------------------------------------


def test_pairwise_distances_examples():
    X = np.array([[0.0], [3.0]])
    np.testing.assert_array_equal(pairwise_distances(X, X, r=1), [[0, 3], [3, 0]])
    np.testing.assert_allclose(pairwise_distances([[0.0, 0.0]], [[3.0, 4.0]], r=2), [[5.0]], rtol=1e-15)
    np.testing.assert_array_equal(pairwise_distances([[1.0, 1.0]], [[1.0, 1.0]], r=7), [[0.0]])


def test_pairwise_distances_symmetric_on_same_object(rng):
    X = rng.normal(size=(12, 3))
    for r in (1, 2, 3.5):
        D = pairwise_distances(X, X, r=r)
        np.testing.assert_array_equal(D, D.T)
        np.testing.assert_array_equal(np.diag(D), 0.0)


def test_pairwise_distances_rejects_bad_input():
    with pytest.raises(DimensionError):
        pairwise_distances(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(KdiscError):
        pairwise_distances(np.zeros((2, 2)), np.zeros((2, 2)), r=0.5)


def test_gram_examples():
    G = gram(KernelSpec("gaussian", 1.0), [[0.0], [1.0]])
    np.testing.assert_allclose(G, [[1, E1], [E1, 1]], rtol=1e-15)
    np.testing.assert_array_equal(gram(KernelSpec("indicator"), [[1.0], [2.0]]), np.eye(2))
    for k in radial_kernels(0.8):
        assert gram(k, [[0.4, 1.0]]).tolist() == [[1.0]]


@pytest.mark.parametrize("kernel", radial_kernels(0.7) + [KernelSpec("indicator")], ids=lambda k: f"{k.name}-r{k.r}")
def test_gram_bit_identical_to_evaluate(kernel, rng):
    X = rng.normal(size=(9, 3))
    Y = rng.normal(size=(7, 3))
    X[2] = Y[4]
    G = gram(kernel, X, Y)
    for i in range(9):
        for j in range(7):
            assert G[i, j] == evaluate(kernel, X[i], Y[j])
    I = rng.integers(0, 9, size=40)
    J = rng.integers(0, 7, size=40)
    np.testing.assert_array_equal(kernel_pairs(kernel, X, Y, I, J), G[I, J])


def test_gram_of_mean_kernel(rng):
    ks = radial_kernels(1.3)[:3]
    X = rng.normal(size=(5, 2))
    expected = sum(gram(k, X) for k in ks) / 3
    np.testing.assert_allclose(gram(MeanKernel(ks), X), expected, rtol=1e-15)


# -- validation ----------------------------------------------------------------


def test_evaluate_errors():
    k = KernelSpec("gaussian", 1.0)
    with pytest.raises(DimensionError):
        evaluate(k, [0.0, 1.0], [0.0])
    with pytest.raises(KdiscError):
        evaluate(k, [np.nan], [0.0])
    with pytest.raises(KdiscError):
        evaluate(k, [np.inf], [0.0])
    for bad in (0.0, -1.0, np.inf, np.nan):
        with pytest.raises(KdiscError):
            KernelSpec("gaussian", bad)


def test_kernel_spec_parameters():
    assert KernelSpec("gaussian").r == 2.0
    assert KernelSpec("laplace").r == 1.0
    assert KernelSpec("matern", nu=1.5).r == 2.0
    assert KernelSpec("indicator", bandwidth=-3.0).r is None
    with pytest.raises(KdiscError):
        KernelSpec("gaussian", 1.0, r=1.0)
    with pytest.raises(KdiscError):
        KernelSpec("matern", 1.0, nu=2.0)
    with pytest.raises(KdiscError):
        KernelSpec("matern", 1.0, r=0.5, nu=1.5)
    with pytest.raises(KdiscError):
        KernelSpec("gaussian", 1.0, nu=1.5)
    with pytest.raises(KdiscError):
        KernelSpec("cauchy", 1.0)
    assert KernelSpec.from_name("Matern3.5", 2.0, r=4.0) == KernelSpec("matern", 2.0, r=4.0, nu=3.5)
    assert KernelSpec("matern", 2.0, nu=2.5).to_dict() == {"family": "matern2.5", "bandwidth": 2.0, "r": 2.0}


@pytest.mark.parametrize("name, r", [("laplace", None), ("matern0.5", None), ("matern1.5", 1.0), ("indicator", None)])
def test_derivatives_rejected_for_non_smooth(name, r):
    k = make_kernel(name, 1.0, r=r)
    assert not k.differentiable
    with pytest.raises(UnsupportedKernelError):
        grad_x(k, [0.0], [1.0])
    with pytest.raises(UnsupportedKernelError):
        cross_partial_trace(k, [0.0], [1.0])


# -- derivative examples ----------------------------------------------------------


def test_grad_examples():
    g = KernelSpec("gaussian", 1.0)
    np.testing.assert_array_equal(grad_x(g, [0.3, 0.1], [0.3, 0.1]), [0.0, 0.0])
    assert grad_x(g, [1.0], [0.0])[0] == pytest.approx(-2 * E1, rel=1e-15)
    np.testing.assert_array_equal(grad_x(KernelSpec("imq", 1.0), [0.0], [0.0]), [0.0])


def test_cross_trace_examples():
    assert cross_partial_trace(KernelSpec("gaussian", 1.0), [0.0], [0.0]) == pytest.approx(2.0, rel=1e-15)
    assert cross_partial_trace(KernelSpec("gaussian", 2.0), [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.5, rel=1e-15)
    assert cross_partial_trace(KernelSpec("gaussian", 1.0), [1.0], [0.0]) == pytest.approx(-2 * E1, rel=1e-14)


def test_matern_derivatives_at_zero_distance():
    # trace at x = y is -d Psi''(0) / lam^2, and Psi''(0) = -nu / (nu - 1) for Matérn profiles
    lam = 1.3
    for nu in (1.5, 2.5, 3.5, 4.5):
        second = -nu / (nu - 1)
        k = KernelSpec("matern", lam, nu=nu)
        assert cross_partial_trace(k, [0.2, 0.2], [0.2, 0.2]) == pytest.approx(-2 * second / lam**2, rel=1e-13)
        np.testing.assert_array_equal(grad_x(k, [0.2, 0.2], [0.2, 0.2]), [0.0, 0.0])


# -- invariants ------------------------------------------------------------------


@pytest.mark.parametrize("kernel", radial_kernels(0.9) + [KernelSpec("indicator")], ids=lambda k: f"{k.name}-r{k.r}")
def test_symmetry_exact(kernel, rng):
    X = rng.normal(size=(1000, 3)) * rng.uniform(0.1, 5.0, size=(1000, 1))
    Y = rng.normal(size=(1000, 3))
    for x, y in zip(X, Y):
        assert evaluate(kernel, x, y) == evaluate(kernel, y, x)


@pytest.mark.parametrize("kernel", radial_kernels(0.05) + radial_kernels(40.0), ids=lambda k: f"{k.name}-{k.bandwidth}")
def test_unit_diagonal(kernel, rng):
    for x in rng.normal(size=(50, 4)) * 100:
        assert evaluate(kernel, x, x) == 1.0


@pytest.mark.parametrize("name", RADIAL_NAMES)
def test_bandwidth_limits(name, rng):
    for _ in range(20):
        x, y = rng.normal(size=(2, 3))
        assert evaluate(make_kernel(name, 1e-12), x, y) <= 1e-10
        assert evaluate(make_kernel(name, 1e12), x, y) >= 1 - 1e-6


@pytest.mark.parametrize("name", RADIAL_NAMES)
def test_gram_positive_semidefinite(name, rng):
    kernel = make_kernel(name)
    for _ in range(20):
        n, d = rng.integers(2, 31), rng.integers(1, 6)
        X = rng.normal(size=(n, d)) * rng.uniform(0.2, 3.0)
        lam = rng.uniform(0.2, 4.0)
        G = gram(kernel.with_bandwidth(lam), X)
        np.testing.assert_array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * n


def test_matern_non_euclidean_order_psd_only_in_one_dimension(rng):
    k = make_kernel("matern2.5", 1.0, r=3.0)
    for _ in range(20):
        n = int(rng.integers(2, 31))
        G = gram(k, rng.normal(size=(n, 1)))
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * n
    wide = k.with_bandwidth(3.0)
    worst = min(np.linalg.eigvalsh(gram(wide, rng.normal(size=(30, 3)))).min() for _ in range(20))
    assert worst < -1e-8 * 30


@pytest.mark.parametrize("kernel", radial_kernels(1.0), ids=lambda k: f"{k.name}-r{k.r}")
def test_bandwidth_scaling_identity(kernel, rng):
    for _ in range(100):
        x, y = rng.normal(size=(2, 3))
        lam = float(np.exp(rng.uniform(-3, 3)))
        scaled = evaluate(kernel.with_bandwidth(lam), x, y)
        unit = evaluate(kernel.with_bandwidth(1.0), x / lam, y / lam)
        assert scaled == pytest.approx(unit, rel=1e-12, abs=1e-300)


def _random_triple(rng, d):
    lam = float(rng.uniform(0.4, 2.5))
    x = rng.normal(size=d)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    y = x + direction * lam * rng.uniform(0.1, 2.5)
    return x, y, lam


@pytest.mark.parametrize("name", SMOOTH_NAMES)
def test_grad_matches_central_differences(name, rng):
    h = 1e-5
    for _ in range(200):
        d = int(rng.integers(1, 5))
        x, y, lam = _random_triple(rng, d)
        k = make_kernel(name, lam)
        fd = np.empty(d)
        for c in range(d):
            e = np.zeros(d)
            e[c] = h
            fd[c] = (evaluate(k, x + e, y) - evaluate(k, x - e, y)) / (2 * h)
        g = grad_x(k, x, y)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


@pytest.mark.parametrize("name", SMOOTH_NAMES)
def test_cross_trace_matches_second_differences(name, rng):
    h = 1e-4
    for _ in range(200):
        d = int(rng.integers(1, 5))
        x, y, lam = _random_triple(rng, d)
        k = make_kernel(name, lam)
        fd = 0.0
        for c in range(d):
            e = np.zeros(d)
            e[c] = h
            fd += (evaluate(k, x + e, y + e) - evaluate(k, x + e, y - e) - evaluate(k, x - e, y + e) + evaluate(k, x - e, y - e)) / (4 * h * h)
        t = cross_partial_trace(k, x, y)
        assert abs(t - fd) <= 1e-4 * abs(t)


@settings(max_examples=200, deadline=None)
@given(
    name=st.sampled_from(RADIAL_NAMES),
    lam=st.floats(1e-3, 1e3),
    pts=arrays(np.float64, (2, 3), elements=st.floats(-1e3, 1e3)),
)
def test_values_in_unit_interval(name, lam, pts):
    v = evaluate(make_kernel(name, lam), pts[0], pts[1])
    assert 0.0 <= v <= 1.0


@pytest.mark.parametrize("name, r", [("gaussian", None), ("laplace", None), ("imq", None), ("matern1.5", 3.0), ("indicator", None)])
def test_dict_round_trip(name, r):
    k = make_kernel(name, 0.7, r)
    assert KernelSpec.from_dict(k.to_dict()) == k
