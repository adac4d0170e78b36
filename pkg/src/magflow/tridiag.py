"""Cyclic (periodic) tridiagonal solves.

scipy's banded solver handles the open tridiagonal part; the two corner
entries are folded in with a Sherman-Morrison rank-one correction.
"""

import numpy as np
from scipy.linalg import solve_banded


def cyclic_tridiagonal_solve(lower, diag, upper, rhs):
    """Solve the periodic system with constant bands.

    Row i reads lower * x[i-1] + diag * x[i] + upper * x[i+1] = rhs[i] with
    indices taken mod n. ``rhs`` may carry trailing columns, which are solved
    simultaneously.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if n < 3:
        raise ValueError("cyclic tridiagonal solve needs n >= 3")
    gamma = -diag
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    ab[1, 0] = diag - gamma
    ab[1, -1] = diag - upper * lower / gamma
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = upper
    cols = rhs.reshape(n, -1)
    both = solve_banded((1, 1), ab, np.column_stack([cols, u]), check_finite=False)
    y, z = both[:, :-1], both[:, -1]
    # v = (1, 0, ..., 0, lower / gamma), so u v^T fills the corners (0, n-1) and (n-1, 0)
    vy = y[0] + (lower / gamma) * y[-1]
    vz = z[0] + (lower / gamma) * z[-1]
    if not np.isfinite(vz) or abs(1.0 + vz) < 1e-300:
        raise np.linalg.LinAlgError("singular cyclic tridiagonal system")
    x = y - np.outer(z, vy / (1.0 + vz))
    return x.reshape(rhs.shape)


def cyclic_apply(lower, diag, upper, x):
    """Multiply the periodic constant-band matrix by x (along axis 0)."""
    x = np.asarray(x, dtype=float)
    return lower * np.roll(x, 1, axis=0) + diag * x + upper * np.roll(x, -1, axis=0)
