import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wavemix import dwt
from wavemix.errors import ConfigurationError, LengthError, StructureError

FILTERS = (1, 2, 5, 7)


def dense_level_matrix(h, m):
    """One analysis step as an explicit m x m matrix (circular indexing)."""
    h = np.asarray(h)
    g = ((-1.0) ** np.arange(h.size)) * h[::-1]
    A = np.zeros((m, m))
    for k in range(m // 2):
        for n in range(h.size):
            A[k, (2 * k + n) % m] += h[n]
            A[m // 2 + k, (2 * k + n) % m] += g[n]
    return A


def dense_transform(h, M):
    """Full pyramid as a product of per-level matrices, built independently."""
    W = np.eye(M)
    m = M
    out_rows = []
    while m > 1:
        A = dense_level_matrix(h, m)
        step = A @ W
        out_rows.insert(0, step[m // 2 : m])
        W = step[: m // 2]
        m //= 2
    return np.vstack([W] + out_rows)


def test_haar_matches_explicit_4x4_matrix():
    s = 1 / np.sqrt(2)
    W = np.array(
        [
            [0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, -0.5, -0.5],
            [s, -s, 0, 0],
            [0, 0, s, -s],
        ]
    )
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=4)
        np.testing.assert_allclose(dwt.forward_array(x, 1), W @ x, atol=1e-12)


def test_d2_taps_match_closed_form():
    r3 = np.sqrt(3)
    ref = np.array([1 + r3, 3 + r3, 3 - r3, 1 - r3]) / (4 * np.sqrt(2))
    np.testing.assert_allclose(dwt.get_filter(2).lowpass_taps, ref, atol=1e-15)


@pytest.mark.parametrize("p", FILTERS)
def test_filter_invariants(p):
    h = dwt.get_filter(p).lowpass_taps
    assert h.size == 2 * p
    assert h.sum() == pytest.approx(np.sqrt(2), abs=1e-14)
    for shift in range(0, h.size, 2):
        dot = np.dot(h[: h.size - shift], h[shift:])
        assert dot == pytest.approx(1.0 if shift == 0 else 0.0, abs=1e-14)
    g = dwt.get_filter(p).highpass_taps
    n = np.arange(h.size)
    for m in range(p):
        assert np.dot(n**m, g) == pytest.approx(0.0, abs=1e-9 * max(1, h.size**m))


@pytest.mark.parametrize("p", FILTERS)
def test_filters_are_minimum_phase(p):
    # extremal phase: every zero of H(z) other than the p-fold zero at -1 lies inside the unit circle
    roots = np.roots(dwt.get_filter(p).lowpass_taps)
    away = roots[np.abs(roots + 1) > 1e-2]
    assert np.all(np.abs(away) < 1 + 1e-9)


@pytest.mark.parametrize("p", FILTERS)
@pytest.mark.parametrize("M", [2, 8, 32])
def test_matches_dense_matrix_oracle(p, M):
    W = dense_transform(dwt.get_filter(p).lowpass_taps, M)
    np.testing.assert_allclose(W @ W.T, np.eye(M), atol=1e-12)
    x = np.random.default_rng(M + p).normal(size=M)
    np.testing.assert_allclose(dwt.forward_array(x, p), W @ x, atol=1e-12)


@pytest.mark.parametrize("p", FILTERS)
def test_polynomials_have_zero_interior_details(p):
    M = 256
    t = np.arange(M) / M
    x = sum((t - 0.5) ** m for m in range(p))
    c = dwt.forward_array(x, p)
    finest = c[M // 2 :]
    # coefficients whose support does not wrap around the boundary
    interior = finest[: (M - 2 * p) // 2]
    assert np.max(np.abs(interior)) < 1e-9


@pytest.mark.parametrize("p", FILTERS)
@pytest.mark.parametrize("M", [8, 64, 1024, 4096])
def test_round_trip_and_parseval(p, M):
    x = np.random.default_rng(p * M).normal(size=M)
    c = dwt.forward_array(x, p)
    assert np.max(np.abs(dwt.inverse_array(c, p) - x)) < 1e-10
    assert abs(np.dot(c, c) - np.dot(x, x)) / np.dot(x, x) < 1e-9


@settings(max_examples=60, deadline=None)
@given(
    p=st.sampled_from(FILTERS),
    logm=st.integers(0, 9),
    seed=st.integers(0, 2**32 - 1),
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
)
def test_linearity(p, logm, seed, a, b):
    M = 2**logm
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, M))
    lhs = dwt.forward_array(a * x + b * y, p)
    rhs = a * dwt.forward_array(x, p) + b * dwt.forward_array(y, p)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    p=st.sampled_from(FILTERS),
    x=st.integers(0, 8).flatmap(
        lambda k: arrays(np.float64, 2**k, elements=st.floats(-1e6, 1e6, allow_subnormal=False))
    ),
)
def test_round_trip_property(p, x):
    back = dwt.inverse(dwt.forward(x, p), p)
    scale = max(1.0, float(np.max(np.abs(x))))
    assert np.max(np.abs(back - x)) <= 1e-10 * scale


def test_batched_rows_match_single_rows():
    X = np.random.default_rng(1).normal(size=(5, 64))
    C = dwt.forward_array(X, 5)
    for row, c in zip(X, C):
        np.testing.assert_array_equal(dwt.forward_array(row, 5), c)


def test_constant_signal_has_only_scaling_coefficient():
    c = dwt.forward_array(np.full(16, 3.0), 2)
    assert c[0] == pytest.approx(3.0 * 4)
    assert np.max(np.abs(c[1:])) < 1e-12


def test_bumps_round_trip():
    from wavemix.simgen import test_function

    x = test_function("bumps", 256)
    assert np.max(np.abs(dwt.inverse_array(dwt.forward_array(x, 2), 2) - x)) < 1e-10


def test_tree_layout():
    tree = dwt.CoefficientTree.from_parts(1.0, [[2.0], [3.0, 4.0], [5, 6, 7, 8]])
    assert tree.M == 8 and tree.J == 3
    assert tree.scaling == 1.0
    np.testing.assert_array_equal(tree.level(2), [5, 6, 7, 8])
    assert [d.size for d in tree.details] == [1, 2, 4]
    np.testing.assert_array_equal(dwt.level_of_index(8), [-1, 0, 1, 1, 2, 2, 2, 2])
    with pytest.raises(IndexError):
        tree.level(3)


def test_errors():
    with pytest.raises(LengthError):
        dwt.forward(np.zeros(6), 1)
    with pytest.raises(LengthError):
        dwt.forward(np.zeros((2, 4)), 1)
    with pytest.raises(ValueError):
        dwt.forward(np.array([0.0, np.nan]), 1)
    with pytest.raises(StructureError):
        dwt.CoefficientTree(np.zeros(3))
    with pytest.raises(StructureError):
        dwt.CoefficientTree.from_parts(0.0, [[1.0, 2.0]])
    with pytest.raises(ConfigurationError):
        dwt.get_filter(3)
    with pytest.raises(ConfigurationError):
        dwt.get_filter("sym4")


def test_filter_name_aliases():
    assert dwt.get_filter("db5") is dwt.get_filter(5) is dwt.get_filter("D5")
    assert dwt.get_filter(7).name == "d7"
