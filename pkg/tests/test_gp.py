import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treeucb.gp import (
    HardBoxKernel,
    NotSymmetricError,
    SoftBoxKernel,
    block_quadratic_form,
    demo_curves,
    gp_posterior,
    gram,
    psd_check,
    soft_kernel_eval,
    total_variation,
    tree_mean,
)
from treeucb.partition import Domain, Partition

from conftest import random_partition

UNIT1 = Domain.unit(1)
HALVES = Partition.trivial(UNIT1).split(0, 0, 0.5)


def test_hard_gram_same_region():
    K = gram(HardBoxKernel(HALVES), [[0.1], [0.2]])
    assert np.array_equal(K, np.ones((2, 2)))
    assert np.allclose(np.linalg.eigvalsh(K), [0, 2])


def test_hard_gram_different_regions():
    assert np.array_equal(gram(HardBoxKernel(HALVES), [[0.1], [0.9]]), np.eye(2))


def test_three_point_quadratic_form(rng):
    K = gram(HardBoxKernel(HALVES), [[0.1], [0.2], [0.9]])
    for _ in range(100):
        v = rng.normal(size=3)
        assert v @ K @ v == pytest.approx((v[0] + v[1]) ** 2 + v[2] ** 2, abs=1e-12)
        assert v @ K @ v >= 0


def test_hard_gram_is_permuted_block_diagonal(rng):
    p = random_partition(rng, 2, 8)
    X = rng.uniform(0, 1, (50, 2))
    K = gram(HardBoxKernel(p), X)
    labels = p.locate(X)
    order = np.argsort(labels, kind="stable")
    Ks = K[np.ix_(order, order)]
    sizes = np.unique(labels, return_counts=True)[1]
    blocks = np.zeros_like(Ks)
    start = 0
    for s in sizes:
        blocks[start:start + s, start:start + s] = 1
        start += s
    assert np.array_equal(Ks, blocks)
    assert psd_check(K, 1e-8)[0]


def test_psd_check_examples():
    ok, lam = psd_check(np.array([[1, 1.5], [1.5, 1]]))
    assert not ok and lam == pytest.approx(-0.5)
    assert psd_check(np.eye(4)) == (True, 1.0)
    with pytest.raises(NotSymmetricError):
        psd_check(np.array([[1, 0.2], [0.1, 1]]))


@given(seed=st.integers(0, 2**32 - 1))
def test_block_formula_matches_matrix(seed):
    rng = np.random.default_rng(seed)
    p = random_partition(rng, int(rng.integers(1, 4)), int(rng.integers(1, 33)))
    X = rng.uniform(0, 1, (int(rng.integers(1, 101)), p.domain.dims))
    K = gram(HardBoxKernel(p), X)
    labels = p.locate(X)
    v = rng.normal(size=len(X))
    assert abs(v @ K @ v - block_quadratic_form(labels, v)) <= 1e-10 * max(1.0, abs(v @ K @ v))


def test_posterior_single_point():
    m, v = gp_posterior(HardBoxKernel(HALVES), [[0.2]], [1.0], 1.0, [[0.3]])
    assert m[0] == pytest.approx(0.5)
    assert v[0] == pytest.approx(0.5)


def test_posterior_in_empty_region_is_prior():
    m, v = gp_posterior(HardBoxKernel(HALVES), [[0.2], [0.3]], [1.0, 0.4], 0.5, [[0.8]])
    assert m[0] == 0 and v[0] == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 5, 50])
@pytest.mark.parametrize("s2", [1e-2, 1.0, 10.0])
def test_posterior_closed_form(n, s2, rng):
    X = rng.uniform(0, 0.5, (n, 1))
    y = rng.normal(size=n)
    m, _ = gp_posterior(HardBoxKernel(HALVES), X, y, s2, [[0.25]])
    K = np.ones((n, n)) + s2 * np.eye(n)
    dense = np.ones(n) @ np.linalg.solve(K, y)
    assert m[0] == pytest.approx(y.sum() / (n + s2), abs=1e-9)
    assert m[0] == pytest.approx(dense, abs=1e-9)


def test_noiseless_limit_is_region_mean(rng):
    X = rng.uniform(0, 0.5, (20, 1))
    y = rng.normal(size=20)
    for s2 in (1e-2, 1e-4, 1e-6):
        m, _ = gp_posterior(HardBoxKernel(HALVES), X, y, s2, [[0.25]])
        assert abs(m[0] - y.mean()) <= 2 * s2 * abs(y.sum()) / 20 ** 2 + 1e-12
    assert tree_mean(HALVES, X, y, [[0.25]])[0] == pytest.approx(y.mean())
    assert np.isnan(tree_mean(HALVES, X, y, [[0.75]])[0])


def test_noise_variance_must_be_positive():
    with pytest.raises(ValueError):
        gp_posterior(HardBoxKernel(HALVES), [[0.1]], [1.0], 0.0, [[0.1]])


def test_soft_kernel_self_similarity(rng):
    k = SoftBoxKernel(random_partition(rng, 2, 6), 7.0)
    X = rng.uniform(0, 1, (30, 2))
    assert np.allclose(np.diag(k(X)), 1.0)
    assert soft_kernel_eval(k, X[0], X[0]) == pytest.approx(1.0)


def test_soft_kernel_saturation():
    k = SoftBoxKernel(HALVES, 1000.0)
    assert soft_kernel_eval(k, [0.1], [0.2]) >= 0.999
    assert soft_kernel_eval(k, [0.1], [0.9]) <= 0.001


@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([1.0, 10.0, 100.0, 1000.0]))
def test_soft_kernel_range_symmetry_psd(seed, alpha):
    rng = np.random.default_rng(seed)
    p = random_partition(rng, 2, int(rng.integers(1, 12)))
    X = rng.uniform(0, 1, (40, 2))
    K = SoftBoxKernel(p, alpha)(X)
    assert np.all((K >= 0) & (K <= 1))
    assert np.allclose(K, K.T, atol=1e-12)
    assert psd_check(gram(SoftBoxKernel(p, alpha), X), 1e-8)[0]


def test_soft_kernel_approaches_hard_kernel(rng):
    p = random_partition(rng, 2, 10)
    X = rng.uniform(0, 1, (400, 2))
    # keep points at least 0.01 from every interior face
    dist = SoftBoxKernel(p, 1.0).signed_distance(X)
    X = X[np.max(dist, axis=1) >= 0.01]
    hard = gram(HardBoxKernel(p), X)
    errs = [np.max(np.abs(gram(SoftBoxKernel(p, a), X) - hard)) for a in (1e2, 1e3, 1e4, 1e6)]
    assert errs[-1] <= 1e-6
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_signed_distance_signs():
    k = SoftBoxKernel(HALVES, 1.0)
    s = k.signed_distance([[0.2], [0.7]])
    # columns follow region ids 1 ([0, .5)) and 2 ([.5, 1])
    assert s[0, 0] == pytest.approx(0.3) and s[0, 1] == pytest.approx(-0.3)
    assert s[1, 0] == pytest.approx(-0.2) and s[1, 1] == pytest.approx(0.2)


def test_demo_curves_shapes(rng):
    X = rng.uniform(0, 1, 30)
    curves = demo_curves(HALVES, X, np.sin(5 * X), [10, 100], 0.01, grid=64)
    assert set(curves) == {"x", "tree_mean", "gp_hard", "gp_soft@10", "gp_soft@100"}
    assert all(len(v) == 64 for v in curves.values())
    with pytest.raises(ValueError):
        demo_curves(Partition.trivial(Domain.unit(2)), X, X, [10], 0.1)


def test_total_variation():
    assert total_variation([0, 1, 0, 2]) == 4
    assert total_variation([3.0]) == 0
