"""Symmetric indefinite KKT factorizations that also report inertia."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 150
# Pivots of the equilibrated matrix below this size count as zero.
ZERO_PIVOT = 1e-13
# Threshold used when a factor without off-diagonal pivoting proves unstable.
PIVOT_THRESH = 0.01


class Singular(Exception):
    pass


class Factorization:
    """Factor of a symmetric matrix with its inertia when it can be read off.

    ``inertia`` is ``(n_pos, n_neg, n_zero)`` or None when the pivot order did
    not stay symmetric; callers then fall back to a curvature test.
    """

    def __init__(self, K, n_primal, pivoting=False):
        self.K = K
        self.n = K.shape[0]
        self.inertia = None
        # symmetric equilibration D K D keeps the inertia (Sylvester) and makes
        # pivot sizes comparable across barrier, Hessian and Jacobian blocks
        self.d = _equilibrate(K)
        Ks = sp.diags(self.d) @ K @ sp.diags(self.d)
        if n_primal < DENSE_LIMIT:
            self._dense(Ks.toarray())
        else:
            self._sparse(sp.csc_matrix(Ks), PIVOT_THRESH if pivoting else 0.0)

    def _dense(self, A):
        if not np.all(np.isfinite(A)):
            raise Singular("non-finite KKT entries")
        _, d, _ = la.ldl(A, lower=True)
        ev = _block_eigs(d)
        tiny = ZERO_PIVOT * max(1.0, np.abs(A).max())
        self.inertia = (int((ev > tiny).sum()), int((ev < -tiny).sum()), int((np.abs(ev) <= tiny).sum()))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", la.LinAlgWarning)
                self._lu = la.lu_factor(A, check_finite=False)
        except (la.LinAlgError, la.LinAlgWarning, ValueError) as e:
            raise Singular(str(e)) from e
        self._solve = lambda b: la.lu_solve(self._lu, b, check_finite=False)

    def _sparse(self, A, thresh):
        if not np.all(np.isfinite(A.data)):
            raise Singular("non-finite KKT entries")
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A" if thresh == 0.0 else "COLAMD",
                diag_pivot_thresh=thresh,
                options=dict(SymmetricMode=thresh == 0.0),
            )
        except RuntimeError as e:
            raise Singular(str(e)) from e
        if np.array_equal(lu.perm_r, lu.perm_c):
            # no off-diagonal pivoting: P A P^T = L D L^T with D = diag(U)
            d = lu.U.diagonal()
            if not np.all(np.isfinite(d)):
                raise Singular("non-finite pivot")
            tiny = ZERO_PIVOT * max(1.0, np.abs(A.data).max())
            self.inertia = (int((d > tiny).sum()), int((d < -tiny).sum()), int((np.abs(d) <= tiny).sum()))
        self._lu = lu
        self._solve = lu.solve

    def _scaled_solve(self, b):
        return self.d * self._solve(self.d * b)

    def solve(self, b, refine=3):
        """Solve with iterative refinement; ``self.accuracy`` is the final relative residual."""
        x = self._scaled_solve(b)
        scale = 1.0 + np.abs(b).max()
        for _ in range(refine + 1):
            r = b - self.K @ x
            self.accuracy = float(np.abs(r).max()) / scale
            if self.accuracy <= 1e-12 or _ == refine:
                break
            x = x + self._scaled_solve(r)
        if not np.all(np.isfinite(x)):
            raise Singular("non-finite solution")
        return x

    def residual(self, x, b):
        return float(np.abs(b - self.K @ x).max())


def _equilibrate(K, passes=3):
    """Ruiz scaling vector ``d`` so that rows of ``diag(d) K diag(d)`` have unit max."""
    A = abs(sp.csr_matrix(K))
    d = np.ones(K.shape[0])
    for _ in range(passes):
        S = sp.diags(d) @ A @ sp.diags(d)
        r = np.asarray(S.max(axis=1).todense()).ravel()
        r[r == 0] = 1.0
        d = d / np.sqrt(r)
    return d


def _block_eigs(d):
    """Eigenvalues of the 1x1/2x2 block diagonal factor from ``scipy.linalg.ldl``."""
    n = d.shape[0]
    out = np.empty(n)
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            out[i:i + 2] = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            i += 2
        else:
            out[i] = d[i, i]
            i += 1
    return out


def kkt_matrix(M, Jg, delta_x, delta_c):
    """Assemble ``[[M + delta_x I, Jg^T], [Jg, -delta_c I]]``."""
    n = M.shape[0]
    m = Jg.shape[0]
    top = M + delta_x * sp.identity(n, format="csr") if delta_x else M
    if m == 0:
        return sp.csr_matrix(top)
    return sp.bmat([[top, Jg.T], [Jg, -delta_c * sp.identity(m, format="csr")]], format="csc")
