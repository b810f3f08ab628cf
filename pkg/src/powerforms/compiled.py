"""Vectorized evaluation of a MathProgram for the solvers.

Every expression is expanded into a sum of terms ``c * f_1(t_1) * ... * f_K(t_K)``
where each factor ``f`` is an integer power, sin, cos or tan of an affine
argument ``t = a.x + b``. Values, Jacobians and Lagrangian Hessians then reduce
to a handful of numpy gathers and ``bincount`` scatters over fixed sparsity
patterns computed once at compile time.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .errors import NonAffineArgument
from .expr import Constant, Power, Product, Sum, VarRef, _Unary

ONE, POW, SIN, COS, TAN = range(5)
_TRIG = {"sin": SIN, "cos": COS, "tan": TAN}


def _mul_keys(a, b):
    """Product of two factor tuples, merging repeated power factors of the same argument."""
    merged = defaultdict(int)
    others = []
    for f in a + b:
        if f[0] == POW:
            merged[f[2]] += f[1]
        else:
            others.append(f)
    out = [(POW, p, arg) for arg, p in merged.items()] + others
    return tuple(sorted(out))


def _as_affine(poly):
    """Affine form ``(((idx, coef), ...), const)`` of an expanded polynomial, or None."""
    coefs = defaultdict(float)
    const = 0.0
    for key, c in poly.items():
        if not key:
            const += c
        elif len(key) == 1 and key[0][0] == POW and key[0][1] == 1:
            entries, b = key[0][2]
            const += c * b
            for i, a in entries:
                coefs[i] += c * a
        else:
            return None
    return tuple(sorted((i, a) for i, a in coefs.items() if a != 0.0)), const


def _var_factor(i):
    return (POW, 1, (((i, 1.0),), 0.0))


class _Expander:
    def __init__(self):
        self.memo = {}

    def __call__(self, node):
        key = id(node)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        out = self._expand(node)
        # keep node alive so its id is not recycled while the memo is in use
        self.memo[key] = (node, out)
        return out

    def _expand(self, node):
        if isinstance(node, Constant):
            return {(): node.value} if node.value != 0.0 else {}
        if isinstance(node, VarRef):
            return {(_var_factor(node.index),): 1.0}
        if isinstance(node, Sum):
            out = defaultdict(float)
            for a in node.args:
                for k, c in self(a).items():
                    out[k] += c
            return dict(out)
        if isinstance(node, Product):
            acc = {(): 1.0}
            for a in node.args:
                acc = self._mul(acc, self(a))
            return acc
        if isinstance(node, Power):
            base = self(node.base)
            n = node.exponent
            if n == 0:
                return {(): 1.0}
            aff = _as_affine(base)
            if aff is not None:
                entries, b = aff
                if not entries:
                    return {(): b ** n}
                if len(entries) == 1 and b == 0.0:
                    i, a = entries[0]
                    return {((POW, n, (((i, 1.0),), 0.0)),): a ** n}
                return {((POW, n, aff),): 1.0}
            acc = {(): 1.0}
            for _ in range(n):
                acc = self._mul(acc, base)
            return acc
        if isinstance(node, _Unary):
            aff = _as_affine(self(node.arg))
            if aff is None:
                raise NonAffineArgument(f"{node.op}() argument must be affine in the variables")
            entries, b = aff
            if not entries:
                return {(): float({"sin": np.sin, "cos": np.cos, "tan": np.tan}[node.op](b))}
            return {((_TRIG[node.op], 1, aff),): 1.0}
        raise TypeError(f"unsupported node {type(node).__name__}")

    @staticmethod
    def _mul(p, q):
        out = defaultdict(float)
        for k1, c1 in p.items():
            for k2, c2 in q.items():
                out[_mul_keys(k1, k2)] += c1 * c2
        return dict(out)


def _csr_pattern(rows, cols, shape):
    """Unique (row, col) pattern in CSR order and the position of each input pair in it."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keys = rows * shape[1] + cols
    uniq, inv = np.unique(keys, return_inverse=True)
    r = uniq // shape[1]
    c = uniq % shape[1]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, c.astype(np.int32), inv


class CompiledProgram:
    """Fixed-structure numeric view of a MathProgram.

    Row 0 is the objective; rows 1..m are constraint bodies in program order.
    """

    def __init__(self, prog):
        self.n = prog.n_vars
        self.m = len(prog.constraints)
        self.lower_c = np.array([c.lower for c in prog.constraints], dtype=float)
        self.upper_c = np.array([c.upper for c in prog.constraints], dtype=float)
        self.tags = [c.tag for c in prog.constraints]
        self.convex = prog.convex
        expand = _Expander()
        polys = [expand(prog.objective)] + [expand(c.body) for c in prog.constraints]
        # affine rows as ((idx, coef), ...), const; None for nonlinear rows
        self.affine = [_as_affine(p) for p in polys[1:]]
        self._build(polys)

    def _build(self, polys):
        n = self.n
        fids = {None: 0}
        f_kind, f_pow, f_const = [ONE], [0], [0.0]
        a_rows, a_cols, a_vals = [], [], []
        row_const = np.zeros(len(polys))
        t_row, t_coef, t_slots = [], [], []
        for r, poly in enumerate(polys):
            for key, c in poly.items():
                if not key:
                    row_const[r] += c
                    continue
                if c == 0.0:
                    continue
                slots = []
                for f in key:
                    fid = fids.get(f)
                    if fid is None:
                        fid = len(f_kind)
                        fids[f] = fid
                        kind, p, (entries, b) = f
                        f_kind.append(kind)
                        f_pow.append(p)
                        f_const.append(b)
                        for i, a in entries:
                            a_rows.append(fid)
                            a_cols.append(i)
                            a_vals.append(a)
                    slots.append(fid)
                t_row.append(r)
                t_coef.append(c)
                t_slots.append(slots)

        nf = len(f_kind)
        self.f_kind = np.array(f_kind)
        self.f_pow = np.array(f_pow, dtype=float)
        self.f_const = np.array(f_const)
        self.A = sp.csr_matrix((a_vals, (a_rows, a_cols)), shape=(nf, n))
        self.A.sum_duplicates()
        self.row_const = row_const
        K = max((len(s) for s in t_slots), default=1)
        T = len(t_row)
        self.K = K
        self.t_row = np.array(t_row, dtype=np.int64)
        self.t_coef = np.array(t_coef, dtype=float)
        slots = np.zeros((T, K), dtype=np.int64)
        for k, s in enumerate(t_slots):
            slots[k, :len(s)] = s
        self.t_slots = slots
        self.n_rows = len(polys)

        # per-factor affine entries
        A = self.A
        f_entries = [
            (A.indices[A.indptr[f]:A.indptr[f + 1]], A.data[A.indptr[f]:A.indptr[f + 1]])
            for f in range(nf)
        ]
        nonlinear = (self.f_kind != ONE) & ~((self.f_kind == POW) & (self.f_pow == 1))

        # first derivatives: one entry per (term, slot, affine entry)
        je_t, je_k, je_a, je_r, je_c = [], [], [], [], []
        # second derivatives (full symmetric storage): (term, pair id, coef, i, j)
        he_t, he_p, he_a, he_i, he_j = [], [], [], [], []
        pairs = [(k, k) for k in range(K)] + [(k, l) for k in range(K) for l in range(k + 1, K)]
        pair_id = {p: q for q, p in enumerate(pairs)}
        for t in range(T):
            r = t_row[t]
            s = t_slots[t]
            for k, fid in enumerate(s):
                idx, vals = f_entries[fid]
                je_t.extend([t] * len(idx))
                je_k.extend([k] * len(idx))
                je_a.extend(vals)
                je_r.extend([r] * len(idx))
                je_c.extend(idx)
                if nonlinear[fid]:
                    q = pair_id[(k, k)]
                    for i, ai in zip(idx, vals):
                        for j, aj in zip(idx, vals):
                            he_t.append(t); he_p.append(q); he_a.append(ai * aj); he_i.append(i); he_j.append(j)
                for l in range(k + 1, len(s)):
                    idx2, vals2 = f_entries[s[l]]
                    q = pair_id[(k, l)]
                    for i, ai in zip(idx, vals):
                        for j, aj in zip(idx2, vals2):
                            a = ai * aj
                            he_t.append(t); he_p.append(q); he_a.append(a); he_i.append(i); he_j.append(j)
                            he_t.append(t); he_p.append(q); he_a.append(a); he_i.append(j); he_j.append(i)

        self.pairs = pairs
        self.je_t = np.array(je_t, dtype=np.int64)
        self.je_k = np.array(je_k, dtype=np.int64)
        self.je_a = np.array(je_a, dtype=float)
        je_r = np.array(je_r, dtype=np.int64)
        je_c = np.array(je_c, dtype=np.int64)
        self.jac_indptr, self.jac_indices, self.je_pos = _csr_pattern(je_r, je_c, (self.n_rows, n))
        self.jac_nnz = len(self.jac_indices)

        self.he_t = np.array(he_t, dtype=np.int64)
        self.he_p = np.array(he_p, dtype=np.int64)
        self.he_a = np.array(he_a, dtype=float)
        self.hess_indptr, self.hess_indices, self.he_pos = _csr_pattern(he_i, he_j, (n, n))
        self.hess_nnz = len(self.hess_indices)
        self._cache_x = None
        self._curvature_parts(he_i, he_j)

    def _curvature_parts(self, he_i, he_j):
        """Split the constant Hessian of each quadratic constraint row into signed parts.

        For a row with Hessian ``Q = P + N`` (``P`` its positive and ``N`` its
        negative semidefinite part), ``-N`` is stored as ``neg`` and ``P`` as ``pos``.
        """
        self.curv_row = np.zeros(0, dtype=np.int64)
        if not self.convex:
            return
        kind, pw = self.f_kind, self.f_pow
        slot_deg = np.where(kind[self.t_slots] == POW, pw[self.t_slots], 0.0)
        trig = np.isin(kind[self.t_slots], (SIN, COS, TAN)).any(axis=1)
        deg = slot_deg.sum(axis=1)
        bad = np.zeros(self.n_rows, dtype=bool)
        np.logical_or.at(bad, self.t_row, trig | (deg > 2))
        bad[0] = True  # objective rows are never convexified
        he_i, he_j = np.asarray(he_i, dtype=np.int64), np.asarray(he_j, dtype=np.int64)
        # at any point the Hessian of a quadratic row is its constant one; use x = 0
        G, G1, G2, except1 = self._factors(np.zeros(self.n))
        vals = self._term_hessian(G, G1, G2, except1, self.t_coef)[self.he_t, self.he_p] * self.he_a
        rows = self.t_row[self.he_t]
        keep = ~bad[rows] & (vals != 0.0)
        by_row = defaultdict(list)
        for r, i, j, v in zip(rows[keep], he_i[keep], he_j[keep], vals[keep]):
            by_row[int(r)].append((int(i), int(j), float(v)))
        ci, cj, cr, cn, cpos = [], [], [], [], []
        for r, entries in by_row.items():
            idx = sorted({i for i, _, _ in entries})
            loc = {v: k for k, v in enumerate(idx)}
            Q = np.zeros((len(idx), len(idx)))
            for i, j, v in entries:
                Q[loc[i], loc[j]] += v
            ev, V = np.linalg.eigh(Q)
            N = -(V * np.minimum(ev, 0.0)) @ V.T
            P = (V * np.maximum(ev, 0.0)) @ V.T
            for a, i in enumerate(idx):
                for b, j in enumerate(idx):
                    ci.append(i); cj.append(j); cr.append(r - 1); cn.append(N[a, b]); cpos.append(P[a, b])
        self.curv_i = np.array(ci, dtype=np.int64)
        self.curv_j = np.array(cj, dtype=np.int64)
        self.curv_row = np.array(cr, dtype=np.int64)
        self.curv_neg = np.array(cn)
        self.curv_pos = np.array(cpos)
        self._cache_x = None

    def convexity_correction(self, lam):
        """PSD matrix that lifts ``sum(lam * Hess c)`` to its convex projection row by row.

        Only quadratic constraint rows contribute; ``None`` if there are none.
        """
        if not len(self.curv_row):
            return None
        y = lam[self.curv_row]
        vals = np.maximum(y, 0.0) * self.curv_neg + np.maximum(-y, 0.0) * self.curv_pos
        return sp.csr_matrix((vals, (self.curv_i, self.curv_j)), shape=(self.n, self.n))

    # -- evaluation -------------------------------------------------------------------

    def _factors(self, x):
        if self._cache_x is not None and np.array_equal(x, self._cache_x):
            return self._cache
        t = self.A @ x + self.f_const
        kind, p = self.f_kind, self.f_pow
        g = np.ones_like(t)
        g1 = np.zeros_like(t)
        g2 = np.zeros_like(t)
        m = kind == POW
        if m.any():
            tt, pp = t[m], p[m]
            g[m] = tt ** pp
            g1[m] = pp * tt ** (pp - 1)
            g2[m] = np.where(pp >= 2, pp * (pp - 1) * tt ** np.maximum(pp - 2, 0), 0.0)
        m = kind == SIN
        if m.any():
            g[m] = np.sin(t[m]); g1[m] = np.cos(t[m]); g2[m] = -g[m]
        m = kind == COS
        if m.any():
            g[m] = np.cos(t[m]); g1[m] = -np.sin(t[m]); g2[m] = -g[m]
        m = kind == TAN
        if m.any():
            tn = np.tan(t[m])
            g[m] = tn; g1[m] = 1 + tn * tn; g2[m] = 2 * tn * (1 + tn * tn)
        S = self.t_slots
        G, G1, G2 = g[S], g1[S], g2[S]
        K = self.K
        # products of the other slots' values
        if K == 1:
            except1 = np.ones_like(G)
        else:
            pre = np.ones_like(G)
            suf = np.ones_like(G)
            for k in range(1, K):
                pre[:, k] = pre[:, k - 1] * G[:, k - 1]
                suf[:, K - 1 - k] = suf[:, K - k] * G[:, K - k]
            except1 = pre * suf
        self._cache_x = x.copy()
        self._cache = (G, G1, G2, except1)
        return self._cache

    def rows(self, x):
        """Values of all rows (objective first)."""
        G, _, _, except1 = self._factors(x)
        vals = self.t_coef * G[:, 0] * except1[:, 0]
        return self.row_const + np.bincount(self.t_row, weights=vals, minlength=self.n_rows)

    def objective(self, x):
        return float(self.rows(x)[0])

    def constraints(self, x):
        return self.rows(x)[1:]

    def _jac_all(self, x):
        G, G1, _, except1 = self._factors(x)
        dT = self.t_coef[:, None] * except1 * G1
        vals = dT[self.je_t, self.je_k] * self.je_a
        data = np.bincount(self.je_pos, weights=vals, minlength=self.jac_nnz)
        return sp.csr_matrix((data, self.jac_indices, self.jac_indptr), shape=(self.n_rows, self.n))

    def gradient_and_jacobian(self, x):
        J = self._jac_all(x)
        grad = np.asarray(J[0].todense()).ravel()
        return grad, J[1:]

    def hessian(self, x, obj_weight, lam):
        """Full symmetric Hessian of ``obj_weight * f + sum(lam * c)``."""
        G, G1, G2, except1 = self._factors(x)
        w = np.concatenate(([obj_weight], lam))
        H = self._term_hessian(G, G1, G2, except1, w[self.t_row] * self.t_coef)
        vals = H[self.he_t, self.he_p] * self.he_a
        data = np.bincount(self.he_pos, weights=vals, minlength=self.hess_nnz)
        return sp.csr_matrix((data, self.hess_indices, self.hess_indptr), shape=(self.n, self.n))

    def _term_hessian(self, G, G1, G2, except1, tw):
        # second derivative of each term with respect to each slot pair, weighted by tw
        K = self.K
        H = np.empty((len(tw), len(self.pairs)))
        for q, (k, l) in enumerate(self.pairs):
            if k == l:
                H[:, q] = except1[:, k] * G2[:, k]
            else:
                others = [j for j in range(K) if j != k and j != l]
                prod = np.prod(G[:, others], axis=1) if others else 1.0
                H[:, q] = prod * G1[:, k] * G1[:, l]
        H *= tw[:, None]
        return H
