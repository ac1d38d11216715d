"""Random conic instances with a planted strictly feasible primal-dual pair."""

import numpy as np
import scipy.sparse as sp

from polyargmin.conic import ConeLayout, ConicProblem, svec


def _random_pd(rng, k):
    B = rng.standard_normal((k, k))
    return B @ B.T / k + 0.5 * np.eye(k)


def planted_instance(seed, n_free=10, n_blocks=20, max_size=4, rows_per_block=None, n_nonneg=3):
    """Block-arrow instance: each PSD block owns a few equality rows that
    also touch every free variable.

    Returns the problem and the planted (x0, y0, s0)."""
    rng = np.random.default_rng(seed)
    sizes = tuple(int(k) for k in rng.integers(1, max_size + 1, size=n_blocks))
    layout = ConeLayout(n_free, n_nonneg, sizes)
    n = layout.dim
    rows, cols, vals = [], [], []
    r = 0
    # nonneg entries each get one row coupled to the free variables
    for i in range(n_nonneg):
        cols_i = [n_free + i] + list(range(n_free))
        vals_i = [1.0 + rng.random()] + list(rng.standard_normal(n_free))
        rows += [r] * len(cols_i)
        cols += cols_i
        vals += vals_i
        r += 1
    for off, k in zip(layout.psd_offsets, sizes):
        p = k * (k + 1) // 2
        nrows = rows_per_block or int(rng.integers(1, p + 1))
        for _ in range(min(nrows, p)):
            cols_i = list(range(off, off + p)) + list(range(n_free))
            vals_i = list(rng.standard_normal(p)) + list(rng.standard_normal(n_free) / np.sqrt(n_free + 1))
            rows += [r] * len(cols_i)
            cols += cols_i
            vals += vals_i
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    x0 = np.zeros(n)
    s0 = np.zeros(n)
    x0[:n_free] = rng.standard_normal(n_free)
    x0[n_free : n_free + n_nonneg] = 0.5 + rng.random(n_nonneg)
    s0[n_free : n_free + n_nonneg] = 0.5 + rng.random(n_nonneg)
    for off, k in zip(layout.psd_offsets, sizes):
        p = k * (k + 1) // 2
        x0[off : off + p] = svec(_random_pd(rng, k))
        s0[off : off + p] = svec(_random_pd(rng, k))
    y0 = rng.standard_normal(r)
    b = A @ x0
    c = A.T @ y0 + s0
    return ConicProblem(c=c, A=A, b=b, layout=layout), (x0, y0, s0)
