"""Batched numeric evaluation of a polynomial system and its derivatives.

The symbolic derivatives are taken once; every monomial that appears in g, J
or the Hessian stack is collected into one table so a batch of points costs a
single power table plus a few dense contractions. Reductions always run over
the monomial axis in a fixed order, so a row gives bit-identical results
whatever batch it is evaluated in.
"""

from __future__ import annotations

import numpy as np

from .polynomial import PolySystem, Polynomial, differentiate


class _SparseRows:
    """Coefficient rows stored as (row, monomial, value) triples.

    ``apply`` computes out[r, o] = sum of value * M[r, monomial] over the
    triples of output o, reduced segment by segment in a fixed order.
    """

    def __init__(self, n_out: int, rows, cols, vals):
        order = np.argsort(np.asarray(rows, dtype=np.int64), kind="stable")
        self.n_out = n_out
        self.rows = np.asarray(rows, dtype=np.int64)[order]
        self.cols = np.asarray(cols, dtype=np.int64)[order]
        self.vals = np.asarray(vals, dtype=float)[order]
        self.targets, self.starts = np.unique(self.rows, return_index=True)

    def apply(self, M: np.ndarray) -> np.ndarray:
        out = np.zeros((M.shape[0], self.n_out))
        if self.vals.size:
            prod = M[:, self.cols] * self.vals
            out[:, self.targets] = np.add.reduceat(prod, self.starts, axis=1)
        return out


class CompiledSystem:
    def __init__(self, sys: PolySystem, order: int = 2):
        if sys.m < 1:
            raise ValueError("system has no equalities")
        self.system = sys
        self.n = sys.n
        self.m = sys.m
        self.order = order
        n, m = self.n, self.m

        g = list(sys.equalities)
        J = [[differentiate(gi, j) for j in range(n)] for gi in g]
        H = []
        if order >= 2:
            # layout (k, i, j): d^2 g_i / dx_j dx_k
            H = [differentiate(J[i][j], k) for k in range(n) for i in range(m) for j in range(n)]

        index: dict[tuple[int, ...], int] = {}
        for p in g + [e for row in J for e in row] + H:
            for a in p.terms:
                index.setdefault(a, len(index))
        if not index:
            index[(0,) * n] = 0
        self.exponents = np.array(list(index), dtype=np.int64).reshape(len(index), n)
        self.maxdeg = int(self.exponents.max(initial=0))
        self._var_idx = np.arange(n)[:, None]
        self._exp_t = self.exponents.T

        def coef_matrix(polys: list[Polynomial]) -> _SparseRows:
            rows, cols, vals = [], [], []
            for r, p in enumerate(polys):
                for a, c in p.terms.items():
                    rows.append(r)
                    cols.append(index[a])
                    vals.append(c)
            return _SparseRows(len(polys), rows, cols, vals)

        self._Cg = coef_matrix(g)
        self._CJ = coef_matrix([e for row in J for e in row])
        self._CH = coef_matrix(H) if H else None

    def _monomials(self, X: np.ndarray) -> np.ndarray:
        N = X.shape[0]
        pw = np.empty((N, self.n, self.maxdeg + 1))
        pw[:, :, 0] = 1.0
        for d in range(1, self.maxdeg + 1):
            pw[:, :, d] = pw[:, :, d - 1] * X
        # (N, n, K) gather, multiplied across variables in index order
        G = pw[:, self._var_idx, self._exp_t]
        M = G[:, 0]
        for j in range(1, self.n):
            M = M * G[:, j]
        return M

    @staticmethod
    def _contract(M: np.ndarray, C: "_SparseRows") -> np.ndarray:
        return C.apply(M)

    def _prep(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n:
            raise ValueError(f"point has dimension {X.shape[1]}, system has {self.n} variables")
        return X, single

    def evaluate(self, X, want_jac: bool = False, want_hess: bool = False):
        """Return g (N, m), optionally J (N, m, n) and H (N, n, m, n)."""
        X, single = self._prep(X)
        N = X.shape[0]
        M = self._monomials(X)
        out = [self._contract(M, self._Cg)]
        if want_jac:
            out.append(self._contract(M, self._CJ).reshape(N, self.m, self.n))
        if want_hess:
            if self._CH is None:
                raise ValueError("compiled without second derivatives")
            out.append(self._contract(M, self._CH).reshape(N, self.n, self.m, self.n))
        if single:
            out = [o[0] for o in out]
        return out[0] if len(out) == 1 else tuple(out)

    def values(self, X):
        return self.evaluate(X)

    def jac(self, X):
        return self.evaluate(X, want_jac=True)[1]
