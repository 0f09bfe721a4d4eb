"""Synthetic matrix cocycles with known exponents.

All random matrices are drawn from counter-based streams indexed by the step,
so ``matrix(n)`` can be recomputed in any order.
"""
from __future__ import annotations

import numpy as np

from .lyapunov import MatrixCocycle
from .rng import stream_rng


class ConstantCocycle(MatrixCocycle):
    def __init__(self, A):
        A = np.asarray(A, float)
        super().__init__(lambda n: A, A.shape[0])


def diagonal_cocycle(diag) -> ConstantCocycle:
    return ConstantCocycle(np.diag(np.asarray(diag, float)))


class GaussianCocycle(MatrixCocycle):
    """I.i.d. matrices with standard normal entries scaled by ``1/sqrt(dim)``."""

    def __init__(self, dim: int, seed: int = 0, start: int = 0):
        self.seed = seed
        super().__init__(self._mat, dim, start)

    def _mat(self, n):
        return stream_rng(self.seed, "velocity", n).standard_normal((self.dim, self.dim)) / np.sqrt(self.dim)

    def fresh(self):
        return GaussianCocycle(self.dim, self.seed)


class TriangularCocycle(MatrixCocycle):
    """Lower-triangular cocycle conjugated by a random bounded change of basis.

    ``L_n`` has diagonal ``exp(a_i + spread * u)`` with ``u`` uniform on [-1, 1]
    and off-diagonal entries uniform on ``[-offdiag, offdiag]``.  The cocycle is
    ``A_n = C_{n+1} L_n C_n^{-1}`` with ``C_n = Q_n diag(1 + 0.5 u)`` (``Q_n``
    orthogonal), or ``A_n = L_n`` when ``conjugate`` is false.  Its exponents are
    the Birkhoff averages of ``log |L_n[i, i]|``, and
    ``F_i(n) = C_n span(e_i, ..., e_d)`` is an invariant flag when the
    ``a_i`` are nonincreasing.
    """

    def __init__(self, a, seed: int = 0, spread: float = 0.5, offdiag: float = 1.0,
                 conjugate: bool = True, start: int = 0):
        self.a = np.asarray(a, float)
        self.seed, self.spread, self.offdiag, self.conjugate = seed, spread, offdiag, conjugate
        super().__init__(self._mat, self.a.size, start)

    def fresh(self):
        return TriangularCocycle(self.a, self.seed, self.spread, self.offdiag, self.conjugate)

    def log_diagonal(self, n):
        rng = stream_rng(self.seed, "velocity", n)
        d = self.dim
        u = rng.uniform(-1, 1, d)
        return self.a + self.spread * u, rng

    def triangular(self, n):
        logd, rng = self.log_diagonal(n)
        d = self.dim
        L = np.tril(rng.uniform(-self.offdiag, self.offdiag, (d, d)), -1)
        L[np.diag_indices(d)] = np.exp(logd)
        return L

    def change_of_basis(self, n):
        if not self.conjugate:
            return np.eye(self.dim)
        rng = stream_rng(self.seed, "sampler", n)
        Q, R = np.linalg.qr(rng.standard_normal((self.dim, self.dim)))
        Q = Q * np.sign(np.diag(R))
        return Q * (1 + 0.5 * rng.uniform(-1, 1, self.dim))[None, :]

    def _mat(self, n):
        L = self.triangular(n)
        if not self.conjugate:
            return L
        return self.change_of_basis(n + 1) @ L @ np.linalg.inv(self.change_of_basis(n))

    def flag(self, n, i):
        """Basis of ``F_{i+1}(n)``: image of the last ``dim - i`` coordinates."""
        return self.change_of_basis(n)[:, i:]

    def birkhoff_exponents(self, n: int, start: int = 0) -> np.ndarray:
        """Diagonal Birkhoff averages over steps ``start..n-1`` (sorted)."""
        acc = np.zeros(self.dim)
        for j in range(start, n):
            acc += self.log_diagonal(j)[0]
        return np.sort(acc / (n - start))[::-1]
