import numpy as np
import pytest

from crashprint import _core
from crashprint._core import _fallback

try:
    from crashprint._core import _kernels
except ImportError:  # extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


def inputs(seed=0, n=60, d=5, k=4):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    d2 = ((x[:, None] - x[None]) ** 2).sum(-1)
    labels = rng.integers(0, k, n).astype(np.int64)
    y = rng.normal(size=(n, 2))
    p = rng.uniform(size=(n, n))
    p = p + p.T
    np.fill_diagonal(p, 0)
    return x, d2, labels, y, p / p.sum()


def test_backend_selected():
    assert _core.BACKEND in ("cython", "python")


@needs_ext
def test_perplexity_search_parity():
    _, d2, _, _, _ = inputs()
    a, ba = _kernels.binary_search_perplexity(d2, 10.0)
    b, bb = _fallback.binary_search_perplexity(d2, 10.0)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(ba, bb, rtol=1e-10)


@needs_ext
def test_tsne_gradient_parity():
    _, _, _, y, p = inputs(1)
    ga, kla = _kernels.tsne_gradient(p, y)
    gb, klb = _fallback.tsne_gradient(p, y)
    np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-14)
    assert kla == pytest.approx(klb, rel=1e-12)


@needs_ext
def test_distance_sums_parity():
    x, _, labels, _, _ = inputs(2)
    np.testing.assert_allclose(_kernels.cluster_distance_sums(x, labels, 4),
                               _fallback.cluster_distance_sums(x, labels, 4), rtol=1e-12)


def test_distance_sums_bruteforce():
    x, _, labels, _, _ = inputs(3, n=15)
    out = _core.cluster_distance_sums(x, labels, 4)
    for i in range(15):
        for c in range(4):
            expected = sum(np.sqrt(((x[i] - x[j]) ** 2).sum()) for j in range(15) if labels[j] == c)
            assert out[i, c] == pytest.approx(expected, abs=1e-12)


def test_tsne_gradient_matches_finite_differences():
    _, _, _, y, p = inputs(4, n=8)
    grad, _ = _core.tsne_gradient(p, y)
    eps = 1e-6
    for i, j in [(0, 0), (3, 1), (7, 0)]:
        up, down = y.copy(), y.copy()
        up[i, j] += eps
        down[i, j] -= eps
        numeric = (_core.tsne_gradient(p, up)[1] - _core.tsne_gradient(p, down)[1]) / (2 * eps)
        assert grad[i, j] == pytest.approx(numeric, rel=1e-5)
