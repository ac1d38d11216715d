"""Primal-dual interior-point solver for conic programs over
free x nonnegative x PSD cones.

Primal::

    minimize    c^T x
    subject to  A x = b,   x = (x_free, x_nonneg, svec(X_1), ..., svec(X_K))
                x_nonneg >= 0,  X_j PSD

Dual::

    maximize    b^T y
    subject to  A^T y + s = c,  s_free = 0, s_nonneg >= 0, S_j PSD

PSD blocks are vectorized with ``svec``: the upper triangle in row-major
order (``numpy.triu_indices``), off-diagonal entries scaled by sqrt(2), so
that ``svec(X) . svec(S) = trace(X S)``.

The method is an infeasible-start path-following scheme with Nesterov-Todd
scaling and Mehrotra predictor-corrector steps.  Each Newton system is
reduced to the equality multipliers and free variables.  With ``T`` the
block-diagonal square root of the inverse scaling, ``A_c T`` splits into
independent row groups whenever rows only share cone variables within
small groups (one group per data sample in the fitting problems); each
group is factored by a small batched QR and the free variables are
recovered from a dense Schur complement of size ``n_free``.  Solves go
through the orthogonal factors directly, which keeps them accurate when
the scaling becomes extreme near an optimal face that is far from the
origin.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from threadpoolctl import threadpool_limits

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class ConeLayout:
    n_free: int = 0
    n_nonneg: int = 0
    psd_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "psd_sizes", tuple(int(k) for k in self.psd_sizes))
        if self.n_free < 0 or self.n_nonneg < 0 or any(k <= 0 for k in self.psd_sizes):
            raise ValueError("cone sizes must be nonnegative (PSD blocks positive)")

    @property
    def psd_dims(self) -> list[int]:
        return [k * (k + 1) // 2 for k in self.psd_sizes]

    @property
    def dim(self) -> int:
        return self.n_free + self.n_nonneg + sum(self.psd_dims)

    @property
    def psd_offsets(self) -> np.ndarray:
        start = self.n_free + self.n_nonneg
        return start + np.concatenate([[0], np.cumsum(self.psd_dims)[:-1]]).astype(int) if self.psd_sizes else np.zeros(0, int)

    @property
    def degree(self) -> int:
        return self.n_nonneg + sum(self.psd_sizes)

    def to_dict(self) -> dict:
        return {"n_free": self.n_free, "n_nonneg": self.n_nonneg, "psd_sizes": list(self.psd_sizes)}


@dataclass
class ConicProblem:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    layout: ConeLayout

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.A = sp.csr_matrix(self.A, dtype=float)
        n = self.layout.dim
        if self.c.shape[0] != n or self.A.shape != (self.b.shape[0], n):
            raise ValueError(
                f"dimension mismatch: layout {n}, c {self.c.shape}, A {self.A.shape}, b {self.b.shape}"
            )


@dataclass(frozen=True)
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    tol_infeas: float = 1e-8
    max_iter: int = 200
    reg: float = 1e-9
    step_fraction: float = 0.99
    refine_steps: int = 5
    threads: int = 1

    def __post_init__(self):
        for name in ("tol_gap", "tol_feas", "tol_infeas", "reg", "step_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1 or self.threads < 1:
            raise ValueError("max_iter and threads must be >= 1")


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: Status
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    history: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


# ---------------------------------------------------------------------------
# svec helpers


def svec_index(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(k)


def svec(X: np.ndarray) -> np.ndarray:
    """Batched svec: ``(..., k, k) -> (..., k(k+1)/2)``."""
    k = X.shape[-1]
    i, j = svec_index(k)
    scale = np.where(i == j, 1.0, SQRT2)
    return X[..., i, j] * scale


def smat(v: np.ndarray, k: int) -> np.ndarray:
    """Batched inverse of :func:`svec`."""
    i, j = svec_index(k)
    scale = np.where(i == j, 1.0, 1.0 / SQRT2)
    X = np.zeros(v.shape[:-1] + (k, k))
    X[..., i, j] = v * scale
    X[..., j, i] = v * scale
    return X


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


class _PSDGroup:
    """All PSD blocks of one size, handled as a stacked batch."""

    def __init__(self, k: int, offsets: np.ndarray):
        self.k = k
        self.p = k * (k + 1) // 2
        self.idx = offsets[:, None] + np.arange(self.p)[None, :]  # (count, p)
        self.count = len(offsets)
        # svec basis matrices E_q, shape (p, k, k)
        self.basis = smat(np.eye(self.p), k)

    def gather(self, v):
        return smat(v[self.idx], self.k)


class _Scaling:
    """Nesterov-Todd scaling at the current iterate."""

    def __init__(self, solver: "_IPM", x: np.ndarray, s: np.ndarray):
        lay = solver.layout
        nl0, nl1 = lay.n_free, lay.n_free + lay.n_nonneg
        xl, sl = x[nl0:nl1], s[nl0:nl1]
        self.lam_l = np.sqrt(xl * sl)
        self.w_l = np.sqrt(xl / sl)
        self.groups = []
        for g in solver.groups:
            X, S = g.gather(x), g.gather(s)
            Lx = np.linalg.cholesky(X)
            Ls = np.linalg.cholesky(S)
            U, lam, Vt = np.linalg.svd(np.swapaxes(Ls, -1, -2) @ Lx)
            isq = 1.0 / np.sqrt(lam)
            R = Lx @ np.swapaxes(Vt, -1, -2) * isq[:, None, :]
            RinvT = Ls @ U * isq[:, None, :]
            self.groups.append((g, lam, R, RinvT))


class _IPM:
    def __init__(self, problem: ConicProblem, settings: SolverSettings, scale=(1.0, 1.0)):
        self.problem = problem
        self.settings = settings
        # problem.b and problem.c are the originals divided by these factors;
        # stopping tests are evaluated in original units
        self.sb, self.sc = scale
        self.layout = lay = problem.layout
        nf = lay.n_free
        self.nf = nf
        A = problem.A
        self.A = A
        self.At = A.T.tocsr()
        self.Af = A[:, :nf].toarray() if nf else np.zeros((A.shape[0], 0))
        self.Ac = A[:, nf:].tocsr()
        self.Act = self.Ac.T.tocsr()
        self.m = A.shape[0]
        offs = lay.psd_offsets
        self.groups: list[_PSDGroup] = []
        sizes = np.array(lay.psd_sizes, dtype=int)
        for k in sorted(set(lay.psd_sizes)):
            self.groups.append(_PSDGroup(k, offs[sizes == k]))
        self._block_pattern()
        self._components()

    # -- cone utilities ----------------------------------------------------

    def identity(self) -> np.ndarray:
        lay = self.layout
        e = np.zeros(lay.dim)
        e[lay.n_free : lay.n_free + lay.n_nonneg] = 1.0
        for g in self.groups:
            e[g.idx] = svec(np.broadcast_to(np.eye(g.k), (g.count, g.k, g.k)))
        return e

    def _block_pattern(self):
        # sparse pattern of block-diagonal operators on the cone part
        lay = self.layout
        nf = lay.n_free
        rows = [np.arange(lay.n_nonneg)]
        cols = [np.arange(lay.n_nonneg)]
        for g in self.groups:
            loc = g.idx - nf
            rows.append(np.repeat(loc, g.p, axis=1).ravel())
            cols.append(np.tile(loc, (1, g.p)).ravel())
        self._hrows = np.concatenate(rows)
        self._hcols = np.concatenate(cols)
        self._ncone = lay.dim - nf

    def max_step(self, sc: _Scaling, dx_scaled, ds_scaled) -> float:
        """Largest alpha keeping lambda + alpha * d in the cone, for the
        scaled directions of x and s (both given per cone part)."""
        alpha = np.inf
        lam_l = sc.lam_l
        for d in (dx_scaled[0], ds_scaled[0]):
            neg = d < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-lam_l[neg] / d[neg])))
        for (g, lam, *_), dxg, dsg in zip(sc.groups, dx_scaled[1], ds_scaled[1]):
            isq = 1.0 / np.sqrt(lam)
            for D in (dxg, dsg):
                T = D * isq[:, :, None] * isq[:, None, :]
                ev = np.linalg.eigvalsh(_sym(T))[:, 0]
                if np.any(ev < 0):
                    alpha = min(alpha, float(np.min(-1.0 / ev[ev < 0])))
        return alpha

    # -- Newton system -----------------------------------------------------

    def _block_operator(self, diag, mats) -> sp.csr_matrix:
        # block-diagonal svec matrix of D -> P D P^T for each PSD block
        data = [diag]
        for g, P in zip(self.groups, mats):
            PEP = np.einsum("bij,qjk,blk->bqil", P, g.basis, P)
            data.append(np.swapaxes(svec(PEP), 1, 2).ravel())
        return sp.csr_matrix(
            (np.concatenate(data), (self._hrows, self._hcols)), shape=(self._ncone, self._ncone)
        )

    def t_matrix(self, sc: _Scaling) -> sp.csr_matrix:
        """Square root ``T`` of ``H^{-1} = T T^T`` (``D -> R D R^T`` per block)."""
        return self._block_operator(sc.w_l, [R for _, _, R, _ in sc.groups])

    def tinv_matrix(self, sc: _Scaling) -> sp.csr_matrix:
        """``T^{-1}``: ``D -> R^{-1} D R^{-T}``."""
        return self._block_operator(1.0 / sc.w_l, [np.swapaxes(RinvT, -1, -2) for _, _, _, RinvT in sc.groups])

    def _components(self):
        """Group equality rows that share cone variables.

        ``A_c H^{-1} A_c^T`` is block diagonal over these groups because
        ``H^{-1}`` is block diagonal over cones."""
        lay = self.layout
        ncone = self._ncone
        self._comp_groups = []
        self._maxc = []
        self._row_group = self._row_comp = self._row_loc = np.zeros(0, dtype=int)
        self._col_loc = np.full(ncone, -1, dtype=int)
        if self.m == 0:
            return
        unit = np.empty(ncone, dtype=int)
        unit[: lay.n_nonneg] = np.arange(lay.n_nonneg)
        nu = lay.n_nonneg
        for off, p in zip(lay.psd_offsets, lay.psd_dims):
            unit[off - self.nf : off - self.nf + p] = nu
            nu += 1
        Ac = self.Ac.tocoo()
        B = sp.csr_matrix((np.ones(Ac.nnz), (Ac.row, unit[Ac.col])), shape=(self.m, max(nu, 1)))
        ncomp, labels = connected_components(B @ B.T, directed=False)
        # every cone unit touched by a row belongs to that row's component
        unit_comp = np.full(max(nu, 1), -1, dtype=int)
        unit_comp[unit[Ac.col]] = labels[Ac.row]
        col_comp = unit_comp[unit]
        attached = np.flatnonzero(col_comp >= 0)
        corder = attached[np.argsort(col_comp[attached], kind="stable")]
        ccount = np.bincount(col_comp[attached], minlength=ncomp)
        cstart = np.concatenate([[0], np.cumsum(ccount)])
        self._col_loc[corder] = np.arange(len(corder)) - cstart[col_comp[corder]]

        order = np.argsort(labels, kind="stable")
        sizes = np.bincount(labels, minlength=ncomp)
        starts = np.concatenate([[0], np.cumsum(sizes)])
        self._row_group = np.empty(self.m, dtype=int)
        self._row_comp = np.empty(self.m, dtype=int)
        self._row_loc = np.empty(self.m, dtype=int)
        comp_batch = np.empty(ncomp, dtype=int)
        comp_group = np.empty(ncomp, dtype=int)
        for gi, r in enumerate(sorted(set(sizes.tolist()))):
            comps = np.flatnonzero(sizes == r)
            comp_batch[comps] = np.arange(len(comps))
            comp_group[comps] = gi
            rows = np.stack([order[starts[k] : starts[k] + r] for k in comps])
            self._comp_groups.append((r, rows))
            self._maxc.append(max(int(ccount[comps].max()), r))
            self._row_group[rows] = gi
            self._row_comp[rows] = np.arange(len(comps))[:, None]
            self._row_loc[rows] = np.arange(r)[None, :]
        # cone columns of each group as (column, batch index, slot)
        self._gcols = []
        for gi in range(len(self._comp_groups)):
            cols = attached[comp_group[col_comp[attached]] == gi]
            self._gcols.append((cols, comp_batch[col_comp[cols]], self._col_loc[cols]))

    def factor(self, sc: _Scaling):
        """Factor ``A_c H^{-1} A_c^T = L L^T`` blockwise from QR of
        ``(A_c T)^T``, never forming the product (its condition number is
        the square of that of the factor), then the free-variable Schur
        complement ``K^T K`` from QR of ``K = L^{-1} A_f``."""
        reg = self.settings.reg
        self._T = self.t_matrix(sc)
        self._Tt = self._T.T.tocsr()
        self._Tinv = self.tinv_matrix(sc)
        B = (self.Ac @ self._T).tocoo()
        g_of = self._row_group[B.row]
        self._fac = []
        for gi, (r, rows) in enumerate(self._comp_groups):
            sel = g_of == gi
            Bt = np.zeros((rows.shape[0], self._maxc[gi], r))
            br, bc = B.row[sel], B.col[sel]
            np.add.at(Bt, (self._row_comp[br], self._col_loc[bc], self._row_loc[br]), B.data[sel])
            Q, Rm = np.linalg.qr(Bt)
            d = np.abs(np.einsum("bii->bi", Rm))
            top = np.maximum(d.max(axis=1), 1e-300)
            bad = np.flatnonzero(d.min(axis=1) <= 1e-14 * top)
            if bad.size:
                # rank-deficient block: Tikhonov rows sqrt(reg) * scale
                shift = np.sqrt(reg) * top[bad, None, None] * np.eye(r)
                Qb, Rm[bad] = np.linalg.qr(np.concatenate([Bt[bad], shift], axis=1))
                Q[bad] = Qb[:, : Bt.shape[1]]
            Linv = np.linalg.inv(np.swapaxes(Rm, -1, -2))
            if not np.all(np.isfinite(Linv)):
                raise np.linalg.LinAlgError("multiplier block not factorizable")
            self._fac.append((rows, Linv, Q))
        self._schur = None
        if self.nf:
            K = np.zeros((self.m, self.nf))
            for rows, Linv, _ in self._fac:
                K[rows.ravel()] = (Linv @ self.Af[rows]).reshape(-1, self.nf)
            self._K = K
            RK = np.linalg.qr(K, mode="r")
            d = np.abs(np.diag(RK))
            if d.min() <= 1e-14 * max(d.max(), 1e-300):
                RK = np.linalg.qr(np.vstack([K, np.sqrt(reg) * max(d.max(), 1.0) * np.eye(self.nf)]), mode="r")
            if not np.all(np.isfinite(RK)):
                raise np.linalg.LinAlgError("Schur complement not factorizable")
            self._schur = RK

    def _half_solve(self, v):
        # u = L^{-1} v, blockwise (returned in row order)
        u = np.zeros(self.m)
        for rows, Linv, _ in self._fac:
            u[rows] = np.einsum("bij,bj->bi", Linv, v[rows])
        return u

    def _half_solve_t(self, u):
        # L^{-T} u
        out = np.zeros(self.m)
        for rows, Linv, _ in self._fac:
            out[rows] = np.einsum("bji,bj->bi", Linv, u[rows])
        return out

    def _q_apply_t(self, v):
        # Q^T v blockwise: v in cone coordinates, result in row order
        u = np.zeros(self.m)
        for (rows, _, Q), (cols, bi, loc) in zip(self._fac, self._gcols):
            V = np.zeros(Q.shape[:2])
            V[bi, loc] = v[cols]
            u[rows] = np.einsum("bci,bc->bi", Q, V)
        return u

    def _q_apply(self, w, out):
        # out += Q w, scattered back to cone coordinates
        for (rows, _, Q), (cols, bi, loc) in zip(self._fac, self._gcols):
            out[cols] += np.einsum("bci,bi->bc", Q, w[rows])[bi, loc]
        return out

    def solve_newton(self, sc: _Scaling, rp, rd, rc_l, rc_groups):
        """Solve A dx = rp, A^T dy + ds = rd, lambda o (W dx + W^-T ds) = rc.

        ``rc_*`` are in the scaled space.  Returns unscaled (dx, dy, ds)."""
        nf = self.nf
        # z = lambda^{-1} <> rc in the scaled space
        z = np.zeros(self._ncone)
        z[: len(rc_l)] = rc_l / sc.lam_l
        for (g, lam, *_), rc in zip(sc.groups, rc_groups):
            Z = 2.0 * rc / (lam[:, :, None] + lam[:, None, :])
            z[g.idx - nf] = svec(_sym(Z))
        dx, dy, ds = self._core(rp, rd, z)
        # iterative refinement on the full linearized system, with the
        # complementarity rows kept in scaled form
        scale = 1.0 + max(np.max(np.abs(rp), initial=0.0), np.max(np.abs(rd), initial=0.0))
        prev = np.inf
        for _ in range(self.settings.refine_steps):
            e1 = rp - self.A @ dx
            e2 = rd - self.At @ dy - ds
            e3 = z - self._Tinv @ dx[nf:] - self._Tt @ ds[nf:]
            err = max(np.max(np.abs(e), initial=0.0) for e in (e1, e2, e3))
            if err <= 1e-15 * scale or err >= prev:
                break
            prev = err
            cx, cy, cs = self._core(e1, e2, e3)
            dx, dy, ds = dx + cx, dy + cy, ds + cs
        return dx, dy, ds

    def _core(self, rp, rd, z):
        """One solve of the linearized system in scaled form.

        With ``v = T^T rd_c - z`` the cone part satisfies
        ``T^{-1} dx_c = (A_c T)^T dy - v``.  Writing ``(A_c T)^T = Q R``
        blockwise and ``w = R dy``, everything is expressed through ``Q``
        and triangular solves, so ``A_c T`` is never multiplied into a
        right-hand side (that would amplify rounding by cond(R))."""
        nf = self.nf
        rd_c = rd[nf:]
        v = self._Tt @ rd_c - z
        if self.m == 0:
            return np.concatenate([np.zeros(nf), self._T @ -v]), np.zeros(0), np.concatenate([np.zeros(nf), rd_c])
        u = self._half_solve(rp) + self._q_apply_t(v)
        if nf:
            RK = self._schur
            t = scipy.linalg.solve_triangular(RK, self._K.T @ u - rd[:nf], trans="T")
            dxf = scipy.linalg.solve_triangular(RK, t)
            w = u - self._K @ dxf
        else:
            dxf = np.zeros(0)
            w = u
        dy = self._half_solve_t(w)
        xhat = self._q_apply(w, -v)
        dx_c = self._T @ xhat
        ds_c = rd_c - self.Act @ dy
        return np.concatenate([dxf, dx_c]), dy, np.concatenate([np.zeros(nf), ds_c])

    def scaled(self, sc: _Scaling, dx, ds):
        """Scaled directions (W dx, W^-T ds) per cone part."""
        lay = self.layout
        nl0, nl1 = lay.n_free, lay.n_free + lay.n_nonneg
        wx_l = dx[nl0:nl1] / sc.w_l
        ws_l = ds[nl0:nl1] * sc.w_l
        wx_g, ws_g = [], []
        for g, lam, R, RinvT in sc.groups:
            dX, dS = g.gather(dx), g.gather(ds)
            wx_g.append(_sym(np.swapaxes(RinvT, -1, -2) @ dX @ RinvT))
            ws_g.append(_sym(np.swapaxes(R, -1, -2) @ dS @ R))
        return (wx_l, wx_g), (ws_l, ws_g)

    # -- main loop ---------------------------------------------------------

    def run(self) -> Solution:
        st = self.settings
        prob = self.problem
        lay = self.layout
        A, b, c = self.A, prob.b, prob.c
        nf = self.nf
        nu = max(lay.degree, 1)

        x = self.identity()
        s = self.identity()
        y = np.zeros(self.m)

        sb, sc_, sbc = self.sb, self.sc, self.sb * self.sc
        bnorm = (1.0 + sb * np.max(np.abs(b), initial=0.0)) / sb
        cnorm = (1.0 + sc_ * np.max(np.abs(c), initial=0.0)) / sc_
        history = []
        status = Status.ITERATION_LIMIT
        best = None
        sc = None

        for it in range(st.max_iter + 1):
            rp = b - A @ x
            rd = c - self.At @ y - s
            pobj = float(c @ x)
            dobj = float(b @ y)
            pres = float(np.max(np.abs(rp), initial=0.0)) / bnorm
            dres = float(np.max(np.abs(rd), initial=0.0)) / cnorm
            gap = abs(pobj - dobj) / (1.0 / sbc + abs(pobj))
            mu = float(x[nf:] @ s[nf:]) / nu
            compl = mu * nu / (1.0 / sbc + abs(pobj))
            history.append((it, sbc * pobj, sbc * dobj, pres, dres, gap, sbc * mu))
            log.debug("it %3d pobj % .9e dobj % .9e pres %.2e dres %.2e gap %.2e mu %.2e",
                      it, pobj, dobj, pres, dres, gap, mu)
            merit = max(pres, dres, gap)
            if best is None or merit < best[0]:
                best = (merit, x.copy(), y.copy(), s.copy(), it)

            if pres <= st.tol_feas and dres <= st.tol_feas and gap <= st.tol_gap and compl <= st.tol_gap:
                status = Status.OPTIMAL
                break
            # approximate Farkas certificates
            if dobj > 0 and pres > st.tol_feas:
                if np.max(np.abs(self.At @ y + s), initial=0.0) <= st.tol_infeas * sb * dobj:
                    status = Status.PRIMAL_INFEASIBLE
                    break
            if pobj < 0:
                Ax = A @ x
                if np.max(np.abs(Ax), initial=0.0) <= st.tol_infeas * sc_ * (-pobj) and dres > st.tol_feas:
                    status = Status.DUAL_INFEASIBLE
                    break
            if it == st.max_iter:
                break

            try:
                if sc is None:
                    sc = _Scaling(self, x, s)
                self.factor(sc)
                # predictor
                rc_l = -sc.lam_l**2
                rc_g = [-np.einsum("bi,ij->bij", lam**2, np.eye(g.k)) for g, lam, *_ in sc.groups]
                dxa, dya, dsa = self.solve_newton(sc, rp, rd, rc_l, rc_g)
                wx, ws = self.scaled(sc, dxa, dsa)
                alpha_aff = min(1.0, self.max_step(sc, wx, ws))
                xa = x[nf:] + alpha_aff * dxa[nf:]
                sa = s[nf:] + alpha_aff * dsa[nf:]
                sigma = min(1.0, max(0.0, float(xa @ sa) / nu / mu)) ** 3
                # corrector
                rc_l = -sc.lam_l**2 - ws[0] * wx[0] + sigma * mu
                rc_g = []
                for (g, lam, *_), wxg, wsg in zip(sc.groups, wx[1], ws[1]):
                    corr = _sym(wsg @ wxg)
                    rc_g.append(-np.einsum("bi,ij->bij", lam**2, np.eye(g.k)) - corr + sigma * mu * np.eye(g.k))
                dx, dy, ds = self.solve_newton(sc, rp, rd, rc_l, rc_g)
                wx, ws = self.scaled(sc, dx, ds)
                alpha = min(1.0, st.step_fraction * self.max_step(sc, wx, ws))
            except np.linalg.LinAlgError as exc:
                log.warning("factorization failed at iteration %d: %s", it, exc)
                status = Status.NUMERICAL_FAILURE
                break
            if not np.isfinite(alpha) or alpha <= 1e-14:
                status = Status.NUMERICAL_FAILURE
                break
            # rounding can leave a nominally interior point on the boundary;
            # back off until the next scaling is computable
            for _ in range(30):
                xn, sn = x + alpha * dx, s + alpha * ds
                try:
                    sc = _Scaling(self, xn, sn)
                    if np.all(np.isfinite(sc.lam_l)) and np.all(sc.lam_l > 0):
                        break
                except np.linalg.LinAlgError:
                    pass
                alpha *= 0.5
            else:
                status = Status.NUMERICAL_FAILURE
                break
            x, s = xn, sn
            y = y + alpha * dy

        if status in (Status.ITERATION_LIMIT, Status.NUMERICAL_FAILURE) and best is not None:
            _, x, y, s, _ = best
            rp = b - A @ x
            rd = c - self.At @ y - s
            pobj, dobj = float(c @ x), float(b @ y)
            pres = float(np.max(np.abs(rp), initial=0.0)) / bnorm
            dres = float(np.max(np.abs(rd), initial=0.0)) / cnorm
            gap = abs(pobj - dobj) / (1.0 / sbc + abs(pobj))
        return Solution(
            x=x, y=y, s=s, status=status,
            primal_objective=pobj, dual_objective=dobj,
            primal_residual=pres, dual_residual=dres, gap=gap,
            iterations=it, history=history,
        )


def _free_range(problem: ConicProblem):
    """Orthonormal basis of the row space of the free columns of ``A``, or
    None when they have full column rank."""
    nf = problem.layout.n_free
    if nf == 0:
        return None
    Af = problem.A[:, :nf].toarray()
    if Af.shape[0] < nf:
        # a thin SVD of a wide matrix would drop the null-space rows of Vt
        Af = np.vstack([Af, np.zeros((nf - Af.shape[0], nf))])
    _, sv, Vt = np.linalg.svd(Af, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(sv > max(Af.shape) * np.finfo(float).eps * sv[0]))
    if rank == nf:
        return None
    return Vt[:rank].T, Vt[rank:].T


def _report(problem: ConicProblem, x, y, s, status, iterations, history) -> Solution:
    b, c, A = problem.b, problem.c, problem.A
    pobj, dobj = float(c @ x), float(b @ y)
    return Solution(
        x=x, y=y, s=s, status=status, primal_objective=pobj, dual_objective=dobj,
        primal_residual=float(np.max(np.abs(b - A @ x), initial=0.0)) / (1.0 + np.max(np.abs(b), initial=0.0)),
        dual_residual=float(np.max(np.abs(c - A.T @ y - s), initial=0.0)) / (1.0 + np.max(np.abs(c), initial=0.0)),
        gap=abs(pobj - dobj) / (1.0 + abs(pobj)), iterations=iterations, history=history,
    )


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> Solution:
    """Solve ``problem``.

    Free variables in the null space of their columns of ``A`` are removed
    first: they cannot affect feasibility, and either carry no cost (then
    any value is optimal and zero is returned) or certify that the
    objective is unbounded below (``DualInfeasible`` with the ray as
    ``x``)."""
    settings = settings or SolverSettings()
    lay = problem.layout
    nf = lay.n_free
    with threadpool_limits(limits=settings.threads):
        split = _free_range(problem)
        if split is None:
            return _run_scaled(problem, problem, settings, lambda xr: xr, lambda sr: sr)
        V, Nul = split
        cf = problem.c[:nf]
        cn = Nul @ (Nul.T @ cf)
        cnorm = 1.0 + np.max(np.abs(problem.c), initial=0.0)
        if np.max(np.abs(cn)) > settings.tol_infeas * cnorm:
            ray = np.zeros(lay.dim)
            ray[:nf] = -cn / np.max(np.abs(cn))
            m = problem.A.shape[0]
            return _report(problem, ray, np.zeros(m), np.zeros(lay.dim), Status.DUAL_INFEASIBLE, 0, [])
        A = sp.hstack([sp.csr_matrix(problem.A[:, :nf] @ V), problem.A[:, nf:]]).tocsr()
        c = np.concatenate([V.T @ cf, problem.c[nf:]])
        red = ConicProblem(c=c, A=A, b=problem.b, layout=ConeLayout(V.shape[1], lay.n_nonneg, lay.psd_sizes))
        r = V.shape[1]
        return _run_scaled(problem, red, settings,
                           lambda xr: np.concatenate([V @ xr[:r], xr[r:]]),
                           lambda sr: np.concatenate([np.zeros(nf), sr[r:]]))


def _pow2(v: np.ndarray) -> float:
    big = np.max(np.abs(v), initial=0.0)
    return 1.0 if big == 0.0 else float(2.0 ** np.round(np.log2(big)))


def _run_scaled(problem, red, settings, lift_x, lift_s) -> Solution:
    """Run the IPM on ``red`` with ``b`` and ``c`` divided by powers of two
    near their max norms (exact in floating point), then lift the solution
    back to ``problem``.  A unit starting point is only well centered when
    the data are of unit size."""
    sb, sc = _pow2(red.b), _pow2(red.c)
    scaled = ConicProblem(c=red.c / sc, A=red.A, b=red.b / sb, layout=red.layout)
    sol = _IPM(scaled, settings, (sb, sc)).run()
    return _report(problem, lift_x(sol.x * sb), sol.y * sc, lift_s(sol.s * sc),
                   sol.status, sol.iterations, sol.history)


def psd_blocks(solution_vec: np.ndarray, layout: ConeLayout) -> list[np.ndarray]:
    """Unpack the PSD blocks of a primal (or dual) vector as matrices."""
    out = []
    for off, k in zip(layout.psd_offsets, layout.psd_sizes):
        out.append(smat(solution_vec[off : off + k * (k + 1) // 2], k))
    return out


# ---------------------------------------------------------------------------
# plain-text dump


def dump_text(problem: ConicProblem, fh) -> None:
    """Write ``problem`` in the plain-text conic format (see README)."""
    lay = problem.layout
    A = problem.A.tocoo()
    fh.write("# polyargmin conic v1\n")
    fh.write(f"cones free {lay.n_free} nonneg {lay.n_nonneg} psd {len(lay.psd_sizes)}")
    fh.write("".join(f" {k}" for k in lay.psd_sizes) + "\n")
    fh.write(f"dims {A.shape[0]} {A.shape[1]} {A.nnz}\n")
    order = np.lexsort((A.col, A.row))
    for r, cidx, v in zip(A.row[order], A.col[order], A.data[order]):
        fh.write(f"A {r} {cidx} {float(v)!r}\n")
    for i, v in enumerate(problem.b):
        fh.write(f"b {i} {float(v)!r}\n")
    for i, v in enumerate(problem.c):
        if v != 0.0:
            fh.write(f"c {i} {float(v)!r}\n")


def load_text(fh) -> ConicProblem:
    header = fh.readline()
    if not header.startswith("# polyargmin conic v1"):
        raise ValueError("not a polyargmin conic file")
    cones = fh.readline().split()
    n_free, n_nonneg, npsd = int(cones[2]), int(cones[4]), int(cones[6])
    sizes = tuple(int(k) for k in cones[7 : 7 + npsd])
    _, m, n, _nnz = fh.readline().split()
    m, n = int(m), int(n)
    rows, cols, vals = [], [], []
    b = np.zeros(m)
    c = np.zeros(n)
    for line in fh:
        tag, *rest = line.split()
        if tag == "A":
            rows.append(int(rest[0]))
            cols.append(int(rest[1]))
            vals.append(float(rest[2]))
        elif tag == "b":
            b[int(rest[0])] = float(rest[1])
        elif tag == "c":
            c[int(rest[0])] = float(rest[1])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProblem(c=c, A=A, b=b, layout=ConeLayout(n_free, n_nonneg, sizes))
