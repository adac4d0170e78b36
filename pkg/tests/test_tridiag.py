import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magflow.tridiag import cyclic_apply, cyclic_tridiagonal_solve


def dense(lower, diag, upper, n):
    A = np.diag(np.full(n, diag)) + np.diag(np.full(n - 1, upper), 1) + np.diag(np.full(n - 1, lower), -1)
    A[0, -1] = lower
    A[-1, 0] = upper
    return A


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 300), st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2**32 - 1))
def test_matches_dense_solve(n, lo, up, seed):
    diag = 2.5 + abs(lo) + abs(up)  # strictly diagonally dominant
    rhs = np.random.default_rng(seed).normal(size=(n, 2))
    x = cyclic_tridiagonal_solve(lo, diag, up, rhs)
    assert np.allclose(dense(lo, diag, up, n) @ x, rhs, atol=1e-12)
    assert np.allclose(cyclic_apply(lo, diag, up, x), rhs, atol=1e-12)


def test_vector_rhs_and_h1_operator():
    n = 256
    c = 1.2 * n * n
    rhs = np.cos(2 * np.pi * np.arange(n) / n)
    x = cyclic_tridiagonal_solve(0.1 - c, 1 + 2 * c, 0.1 - c, rhs)
    assert x.shape == (n,)
    assert np.allclose(cyclic_apply(0.1 - c, 1 + 2 * c, 0.1 - c, x), rhs, atol=1e-10)


def test_too_small():
    with pytest.raises(ValueError):
        cyclic_tridiagonal_solve(1.0, 4.0, 1.0, np.ones(2))
