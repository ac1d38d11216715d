import io

import numpy as np
import pytest
import scipy.sparse as sp

from planted import planted_instance
from polyargmin.conic import (
    ConeLayout,
    ConicProblem,
    SolverSettings,
    Status,
    dump_text,
    load_text,
    psd_blocks,
    smat,
    solve,
    svec,
)


def test_svec_inner_product():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 4, 4))
    A, B = A + A.T, B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))
    assert np.allclose(smat(svec(A), 4), A)


def test_correlation_example():
    # min 2 W01 s.t. W00 = W11 = 1, W PSD
    c = np.array([0.0, np.sqrt(2.0), 0.0])
    A = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 0, 1.0]]))
    sol = solve(ConicProblem(c, A, np.array([1.0, 1.0]), ConeLayout(0, 0, (2,))))
    assert sol.status is Status.OPTIMAL
    assert sol.primal_objective == pytest.approx(-2, abs=1e-7)
    W = psd_blocks(sol.x, ConeLayout(0, 0, (2,)))[0]
    assert np.allclose(W, [[1, -1], [-1, 1]], atol=1e-4)


def test_free_and_nonneg_example():
    # min x s.t. x - t = 3, t >= 0
    prob = ConicProblem(np.array([1.0, 0.0]), sp.csr_matrix([[1.0, -1.0]]), np.array([3.0]), ConeLayout(1, 1))
    sol = solve(prob)
    assert sol.status is Status.OPTIMAL
    assert sol.x[0] == pytest.approx(3, abs=1e-7)


def test_unbounded_example():
    prob = ConicProblem(np.array([-1.0]), sp.csr_matrix((0, 1)), np.zeros(0), ConeLayout(0, 1))
    assert solve(prob).status is Status.DUAL_INFEASIBLE


def test_unbounded_free_direction():
    # x1 does not appear in any constraint but is rewarded
    prob = ConicProblem(np.array([-1.0, 1.0, 0.0]), sp.csr_matrix([[0.0, 1.0, -1.0]]), np.array([1.0]),
                        ConeLayout(2, 1))
    sol = solve(prob)
    assert sol.status is Status.DUAL_INFEASIBLE
    assert sol.x[0] > 0


def test_primal_infeasible():
    # t = -1 with t >= 0
    prob = ConicProblem(np.array([1.0]), sp.csr_matrix([[1.0]]), np.array([-1.0]), ConeLayout(0, 1))
    assert solve(prob).status is Status.PRIMAL_INFEASIBLE


@pytest.mark.parametrize("seed", range(20))
def test_planted_instances(seed):
    prob, (x0, y0, s0) = planted_instance(seed)
    sol = solve(prob)
    assert sol.status is Status.OPTIMAL
    assert sol.gap <= 1e-8
    assert sol.primal_residual <= 1e-8 and sol.dual_residual <= 1e-8
    # weak duality brackets the optimum between the planted pair
    assert prob.b @ y0 - 1e-6 <= sol.primal_objective <= prob.c @ x0 + 1e-6
    for X in psd_blocks(sol.x, prob.layout):
        assert np.linalg.eigvalsh(X).min() >= -1e-8


def test_larger_planted_instance():
    prob, _ = planted_instance(99, n_free=30, n_blocks=50, max_size=4)
    sol = solve(prob)
    assert sol.status is Status.OPTIMAL and sol.gap <= 1e-8


def test_bitwise_determinism():
    prob, _ = planted_instance(3)
    a, b = solve(prob), solve(prob)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.y.tobytes() == b.y.tobytes()
    assert a.iterations == b.iterations


def test_thread_count_does_not_change_result():
    prob, _ = planted_instance(5)
    a = solve(prob, SolverSettings(threads=1))
    b = solve(prob, SolverSettings(threads=4))
    assert a.x.tobytes() == b.x.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_cost_scaling_robust(seed):
    prob, _ = planted_instance(seed)
    a = solve(prob)
    big = ConicProblem(prob.c * 1e3, prob.A, prob.b, prob.layout)
    b = solve(big)
    assert b.status is Status.OPTIMAL
    scale = 1 + np.max(np.abs(a.x))
    assert np.max(np.abs(a.x - b.x)) / scale <= 1e-5


def test_iteration_limit():
    prob, _ = planted_instance(1)
    sol = solve(prob, SolverSettings(max_iter=2))
    assert sol.status is Status.ITERATION_LIMIT


def test_dump_load_roundtrip():
    prob, _ = planted_instance(4)
    buf = io.StringIO()
    dump_text(prob, buf)
    buf.seek(0)
    back = load_text(buf)
    assert back.layout == prob.layout
    assert np.array_equal(back.b, prob.b) and np.array_equal(back.c, prob.c)
    assert (back.A != prob.A).nnz == 0


def test_validation():
    with pytest.raises(ValueError):
        ConicProblem(np.zeros(2), sp.csr_matrix((1, 3)), np.zeros(1), ConeLayout(3))
    with pytest.raises(ValueError):
        ConeLayout(0, 0, (0,))
    with pytest.raises(ValueError):
        SolverSettings(max_iter=0)
    with pytest.raises(ValueError):
        load_text(io.StringIO("garbage\n"))
