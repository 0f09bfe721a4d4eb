"""Finite-dimensional geometry of subspaces under several norms.

Quadratic norms ``||x|| = ||w * x||_2`` get exact linear-algebra paths computed
in the whitened frame ``x -> w * x``.  Weighted l^p norms are handled by
sampling or local optimization; those results are returned as
:class:`Estimate` values with ``approximate=True``.

Subspaces are given by basis columns in ambient coordinates.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize
from scipy.special import gammaln

from .errors import RankError, SplittingError

RANK_TOL = 1e-10
COND_GUARD = 1e14


class Estimate(float):
    """A float carrying accuracy metadata for sampling-based results."""

    def __new__(cls, value, approximate=True, error=None, bracket=None):
        obj = super().__new__(cls, value)
        obj.approximate = approximate
        obj.error = error
        obj.bracket = bracket
        return obj


@dataclass(frozen=True, eq=False)
class FiniteNorm:
    """``(sum_i |w_i x_i|^p)^{1/p}``; ``p = 2`` is the quadratic case."""

    weights: np.ndarray
    p: float = 2.0
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("norm weights must be a non-empty vector of positive finite numbers")
        if not (1 <= self.p < np.inf):
            raise ValueError("p must lie in [1, inf)")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def quadratic(cls, weights, name=""):
        return cls(np.asarray(weights, float), 2.0, name)

    @classmethod
    def lp(cls, p, weights, name=""):
        return cls(np.asarray(weights, float), float(p), name)

    @property
    def kind(self) -> str:
        return "quadratic" if self.p == 2 else "weighted_lp"

    @property
    def is_quadratic(self) -> bool:
        return self.p == 2

    @property
    def n(self) -> int:
        return self.weights.size

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        w = self.weights if x.ndim == 1 else self.weights[:, None]
        if self.p == 2:
            return np.linalg.norm(w * x, axis=0)
        return np.sum(np.abs(w * x) ** self.p, axis=0) ** (1 / self.p)

    def whiten(self, X):
        X = np.asarray(X, float)
        return X * (self.weights if X.ndim == 1 else self.weights[:, None])

    def unwhiten(self, X):
        X = np.asarray(X, float)
        return X / (self.weights if X.ndim == 1 else self.weights[:, None])

    def conjugate(self, A):
        """Matrix of ``A`` in the whitened frame, ``W A W^{-1}``."""
        return self.weights[:, None] * np.asarray(A, float) / self.weights[None, :]


@dataclass(frozen=True, eq=False)
class AmbientSpace:
    n: int
    norms: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("ambient dimension must be >= 1")
        if len(self.norms) < 1:
            raise ValueError("an ambient space needs at least one norm")
        for nm in self.norms:
            if nm.n != self.n:
                raise ValueError("norm dimension differs from ambient dimension")


@dataclass(frozen=True, eq=False)
class Subspace:
    basis: np.ndarray
    ambient: Optional[AmbientSpace] = None

    def __post_init__(self):
        B = np.array(self.basis, float)
        if B.ndim == 1:
            B = B[:, None]
        n, k = B.shape
        if not 1 <= k <= n:
            raise ValueError(f"subspace dimension {k} must lie in [1, {n}]")
        if self.ambient is not None and self.ambient.n != n:
            raise ValueError("basis does not live in the ambient space")
        cn = np.linalg.norm(B, axis=0)
        if np.any(cn == 0) or np.linalg.svd(B / cn, compute_uv=False)[-1] <= RANK_TOL:
            raise RankError("subspace basis is rank deficient")
        B.flags.writeable = False
        object.__setattr__(self, "basis", B)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def codim(self) -> int:
        return self.n - self.dim

    def frame(self, norm: FiniteNorm) -> np.ndarray:
        """Orthonormal basis of the whitened subspace (quadratic norms)."""
        return np.linalg.qr(norm.whiten(self.basis))[0]


def _as_sub(E) -> Subspace:
    return E if isinstance(E, Subspace) else Subspace(E)


def _check_same(E: Subspace, F: Subspace):
    if E.n != F.n:
        raise ValueError("subspaces live in different ambient spaces")


def _sphere(rng, k, m):
    c = rng.standard_normal((k, m))
    return c / np.linalg.norm(c, axis=0)


def _ratio_extreme(f, k, rng, maximize, starts=12):
    """Optimize a scale-invariant function of coefficient vectors c in R^k."""
    sign = -1.0 if maximize else 1.0
    cands = list(np.eye(k).T) + list(_sphere(rng, k, max(starts, 64)).T)
    vals = [f(c) for c in cands]
    order = np.argsort(vals)[::-1] if maximize else np.argsort(vals)
    best = vals[order[0]]
    if k == 1:
        return best
    for idx in order[:starts]:
        res = optimize.minimize(lambda c: sign * f(c), cands[idx], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        v = sign * res.fun
        best = max(best, v) if maximize else min(best, v)
    return best


# -- alpha, distances, angles -------------------------------------------------------

def alpha(E, normV: FiniteNorm, normB: FiniteNorm, rng=None):
    """``sup_{v in E} ||v||_V / ||v||_B``."""
    E = _as_sub(E)
    if normV.is_quadratic and normB.is_quadratic:
        Q = E.frame(normB)
        M = (normV.weights / normB.weights)[:, None] * Q
        return float(np.linalg.svd(M, compute_uv=False)[0])
    rng = rng or np.random.default_rng(0)
    B = E.basis
    val = _ratio_extreme(lambda c: float(normV(B @ c) / normB(B @ c)), E.dim, rng, True)
    return Estimate(val)


def _one_sided(Q1, Q2):
    s = np.linalg.svd(Q2.T @ Q1, compute_uv=False)
    smin = 0.0 if Q1.shape[1] > Q2.shape[1] else float(min(s.min(), 1.0))
    return math.sqrt(max(0.0, 2.0 - 2.0 * smin))


def hausdorff_distance(E, E2, norm: FiniteNorm, rng=None, samples: int = 400):
    """Hausdorff distance between the unit spheres of ``E`` and ``E2``."""
    E, E2 = _as_sub(E), _as_sub(E2)
    _check_same(E, E2)
    if norm.is_quadratic:
        Q1, Q2 = E.frame(norm), E2.frame(norm)
        return max(_one_sided(Q1, Q2), _one_sided(Q2, Q1))
    rng = rng or np.random.default_rng(0)

    def dist_to_sphere(e, S):
        B = S.basis

        def f(c):
            y = B @ c
            ny = norm(y)
            return float(norm(e - y / ny)) if ny > 0 else 2.0
        return _ratio_extreme(f, S.dim, rng, False, starts=4)

    def side(S1, S2, m):
        C = _sphere(rng, S1.dim, m)
        pts = S1.basis @ C
        pts = pts / norm(pts)
        d = np.array([dist_to_sphere(pts[:, j], S2) for j in range(m)])
        return d, pts

    m = max(8, samples // 20)
    d1, p1 = side(E, E2, m)
    d2, p2 = side(E2, E, m)
    lo = max(d1.max(), d2.max())
    # covering radius of the sample sets bounds how far the sampled sup can be off
    test = [(E, p1), (E2, p2)]
    cover = 0.0
    for S, pts in test:
        probe = S.basis @ _sphere(rng, S.dim, 64)
        probe = probe / norm(probe)
        dd = np.array([[norm(probe[:, i] - pts[:, j]) for j in range(pts.shape[1])]
                       for i in range(probe.shape[1])])
        cover = max(cover, dd.min(axis=1).max())
    return Estimate(lo, bracket=(lo, lo + 2 * cover))


def angle_sin(v, F, norm: FiniteNorm, rng=None):
    """``inf_{w in F} ||v - w|| / ||v||`` (the sine of the angle to ``F``)."""
    v = np.asarray(v, float)
    F = _as_sub(F)
    nv = float(norm(v))
    if nv == 0:
        raise ValueError("angle to a subspace is undefined for the zero vector")
    if norm.is_quadratic:
        Q = F.frame(norm)
        w = norm.whiten(v)
        r = w - Q @ (Q.T @ w)
        return float(min(1.0, np.linalg.norm(r) / nv))
    c0 = np.linalg.lstsq(F.basis, v, rcond=None)[0]
    res = optimize.minimize(lambda c: float(norm(v - F.basis @ c)), c0, method="Powell",
                            options={"xtol": 1e-10, "ftol": 1e-13, "maxiter": 20000})
    best = min(float(res.fun), float(norm(v - F.basis @ c0)), nv)
    return Estimate(min(1.0, best / nv))


def sin_angle_min(E, F, norm: FiniteNorm, rng=None, samples: int = 200):
    """``inf`` over unit ``e in E`` of ``sin angle(e, F)``."""
    E, F = _as_sub(E), _as_sub(F)
    _check_same(E, F)
    if norm.is_quadratic:
        QE, QF = E.frame(norm), F.frame(norm)
        R = QE - QF @ (QF.T @ QE)
        return float(np.linalg.svd(R, compute_uv=False).min())
    rng = rng or np.random.default_rng(0)
    C = np.concatenate([np.eye(E.dim), _sphere(rng, E.dim, samples)], axis=1)
    vals = [angle_sin(E.basis @ c, F, norm) for c in C.T]
    return Estimate(min(vals))


# -- determinants and norms ---------------------------------------------------------

def _restricted_singular_values(A, E: Subspace, norm: FiniteNorm):
    Q = E.frame(norm)
    M = norm.conjugate(A) @ Q
    return np.linalg.svd(M, compute_uv=False)


def log_busemann_det(A, E, norm: FiniteNorm) -> float:
    """``log det(A|E)`` for a quadratic norm; ``-inf`` when ``A|E`` is singular."""
    E = _as_sub(E)
    if not norm.is_quadratic:
        d = busemann_det(A, E, norm)
        return math.log(d) if d > 0 else -math.inf
    s = _restricted_singular_values(A, E, norm)
    if s[0] == 0 or s[-1] <= s[0] / COND_GUARD:
        return -math.inf
    val = float(np.sum(np.log(s)))
    return val if val > math.log(1e-300) else -math.inf


def busemann_det(A, E, norm: FiniteNorm, rng=None, samples: int = 200_000):
    """Ratio of Busemann-Hausdorff volumes ``Vol(A S) / Vol(S)`` for ``S`` in ``E``."""
    E = _as_sub(E)
    A = np.asarray(A, float)
    if norm.is_quadratic:
        ld = log_busemann_det(A, E, norm)
        return 0.0 if ld == -math.inf else math.exp(ld)
    rng = rng or np.random.default_rng(0)
    B, AB = E.basis, A @ E.basis
    sv = np.linalg.svd(AB, compute_uv=False)
    if sv[-1] <= sv[0] / COND_GUARD:
        return Estimate(0.0, error=0.0)
    k, n = E.dim, E.n
    # uniform points in the Euclidean unit ball of R^k, shared by both volumes
    g = rng.standard_normal((k, samples))
    r = rng.random(samples) ** (1 / k)
    U = g / np.linalg.norm(g, axis=0) * r
    cp = n ** min(0.0, 1 / norm.p - 0.5) * norm.weights.min()

    def log_ball_volume(M):
        R = 1.0 / (cp * np.linalg.svd(M, compute_uv=False)[-1])
        frac = float(np.mean(norm(M @ (R * U)) <= 1.0))
        if frac == 0:
            raise RuntimeError("hit-or-miss sampling found no points inside the unit ball")
        logv = k * math.log(R) + (k / 2) * math.log(math.pi) - gammaln(k / 2 + 1) + math.log(frac)
        return logv, math.sqrt((1 - frac) / (frac * samples))

    lvE, eE = log_ball_volume(B)
    lvA, eA = log_ball_volume(AB)
    val = math.exp(lvE - lvA)
    return Estimate(val, error=val * math.hypot(eE, eA))


def min_norm(A, E, norm: FiniteNorm, rng=None):
    """``inf`` over unit ``v in E`` of ``||A v||``."""
    E = _as_sub(E)
    A = np.asarray(A, float)
    if norm.is_quadratic:
        return float(_restricted_singular_values(A, E, norm)[-1])
    rng = rng or np.random.default_rng(0)
    B = E.basis
    val = _ratio_extreme(lambda c: float(norm(A @ B @ c) / norm(B @ c)), E.dim, rng, False)
    return Estimate(val)


def operator_norm_finite(A, norm: FiniteNorm, rng=None):
    """Operator norm of ``A`` from the normed space to itself."""
    A = np.asarray(A, float)
    if norm.is_quadratic:
        return float(np.linalg.svd(norm.conjugate(A), compute_uv=False)[0])
    if norm.p == 1:
        # the unit ball is the convex hull of +-e_j / w_j
        return float(np.max(norm(A) / norm.weights))
    rng = rng or np.random.default_rng(0)
    n = A.shape[1]
    return Estimate(_ratio_extreme(lambda c: float(norm(A @ c) / norm(c)), n, rng, True))


def cross_norm(A, normB: FiniteNorm, normV: FiniteNorm) -> float:
    """``||A||_{B -> V}`` for quadratic norms."""
    M = normV.weights[:, None] * np.asarray(A, float) / normB.weights[None, :]
    return float(np.linalg.svd(M, compute_uv=False)[0])


# -- projectors and complements -------------------------------------------------------

@dataclass
class Projector:
    matrix: np.ndarray
    norm: float


def oblique_projector(E, F, norm: FiniteNorm, rng=None) -> Projector:
    """Projection onto ``E`` along ``F`` and its operator norm."""
    E, F = _as_sub(E), _as_sub(F)
    _check_same(E, F)
    C = np.concatenate([E.basis, F.basis], axis=1)
    if C.shape[1] != C.shape[0]:
        raise SplittingError(f"dim E + dim F = {C.shape[1]} differs from ambient {C.shape[0]}")
    Cn = C / np.linalg.norm(C, axis=0)
    if np.linalg.svd(Cn, compute_uv=False)[-1] <= RANK_TOL:
        raise SplittingError("E and F are not complementary")
    coef = np.linalg.solve(C, np.eye(C.shape[0]))[: E.dim]
    P = E.basis @ coef
    return Projector(P, operator_norm_finite(P, norm, rng))


@dataclass
class Complement:
    subspace: Subspace
    projector_norm: float
    bound: float
    certified: bool


def _complement_candidates(F: Subspace, norm: FiniteNorm, rng, tries):
    n, k = F.n, F.codim
    Qf = np.linalg.qr(F.basis, mode="complete")[0]
    yield Qf[:, F.dim:]
    Qw = np.linalg.qr(norm.whiten(F.basis), mode="complete")[0]
    yield norm.unwhiten(Qw[:, F.dim:])
    combos = itertools.combinations(range(n), k)
    if math.comb(n, k) > tries:
        combos = (tuple(sorted(rng.choice(n, k, replace=False))) for _ in range(tries))
    for I in combos:
        yield np.eye(n)[:, list(I)]
    for _ in range(tries):
        yield rng.standard_normal((n, k))


def bounded_complement(F, norm: FiniteNorm, rng=None, tries: int = 200) -> Complement:
    """A complement ``E`` of ``F`` with ``||pi_{E//F}|| <= sqrt(k) + 1``."""
    F = _as_sub(F)
    k = F.codim
    if k < 1:
        raise ValueError("F must have codimension >= 1")
    bound = math.sqrt(k) + 1
    if norm.is_quadratic:
        Qw = np.linalg.qr(norm.whiten(F.basis), mode="complete")[0]
        E = Subspace(norm.unwhiten(Qw[:, F.dim:]))
        return Complement(E, oblique_projector(E, F, norm).norm, math.sqrt(k), True)
    rng = rng or np.random.default_rng(0)
    best = None
    for Bc in _complement_candidates(F, norm, rng, tries):
        try:
            E = Subspace(Bc)
            pn = float(oblique_projector(E, F, norm, rng).norm)
        except (SplittingError, RankError):
            continue
        if best is None or pn < best[1]:
            best = (E, pn)
        if pn <= bound:
            return Complement(E, pn, bound, True)
    if best is None:
        raise SplittingError("no complement found")
    return Complement(best[0], best[1], bound, False)


@dataclass
class SimultaneousComplement:
    subspace: Subspace
    sin_angles: list
    projector_norms: list
    certified: bool


def simultaneous_complement(Fs: Sequence, norm: FiniteNorm, rng=None, candidates: int = 2000,
                            restarts: int = 3, min_sin: float = 1e-6) -> SimultaneousComplement:
    """One ``E`` complementing every ``F_i``, built one direction at a time.

    Each new direction maximizes (over random candidates, then a local
    refinement) the smallest sine of its angle to the spans ``E + F_i``.
    """
    Fs = [_as_sub(F) for F in Fs]
    if not Fs:
        raise ValueError("need at least one subspace")
    n, k = Fs[0].n, Fs[0].codim
    if any(F.n != n or F.codim != k for F in Fs):
        raise ValueError("all subspaces must share ambient space and codimension")
    if k < 1:
        raise ValueError("codimension must be >= 1")
    if len(Fs) == 1:
        c = bounded_complement(Fs[0], norm, rng)
        return SimultaneousComplement(c.subspace, [sin_angle_min(c.subspace, Fs[0], norm)],
                                      [c.projector_norm], c.certified)
    rng = rng or np.random.default_rng(0)
    ncand = candidates if norm.is_quadratic else max(50, candidates // 40)
    basis = np.zeros((n, 0))
    ok = True
    for _ in range(k):
        spans = [Subspace(np.concatenate([basis, F.basis], axis=1)) for F in Fs]

        def score(v):
            if not np.any(v):
                return 0.0
            return min(float(angle_sin(v, G, norm)) for G in spans)

        best_v, best = None, -1.0
        for _ in range(restarts):
            V = rng.standard_normal((n, ncand))
            if norm.is_quadratic:
                sc = np.full(ncand, np.inf)
                for G in spans:
                    Q = G.frame(norm)
                    W = norm.whiten(V)
                    r = np.linalg.norm(W - Q @ (Q.T @ W), axis=0) / np.linalg.norm(W, axis=0)
                    sc = np.minimum(sc, r)
            else:
                sc = np.array([score(V[:, j]) for j in range(ncand)])
            j = int(np.argmax(sc))
            v = V[:, j]
            res = optimize.minimize(lambda x: -score(x), v, method="Nelder-Mead",
                                    options={"maxiter": 200 * n, "xatol": 1e-8, "fatol": 1e-10})
            if -res.fun > sc[j]:
                v, s = res.x, -res.fun
            else:
                s = sc[j]
            if s > best:
                best_v, best = v, s
            if best > min_sin:
                break
        if best <= min_sin:
            ok = False
        basis = np.concatenate([basis, best_v[:, None] / np.linalg.norm(best_v)], axis=1)
    E = Subspace(basis)
    sins, pns = [], []
    for F in Fs:
        sins.append(float(sin_angle_min(E, F, norm)))
        try:
            pns.append(float(oblique_projector(E, F, norm).norm))
        except SplittingError:
            pns.append(math.inf)
            ok = False
    return SimultaneousComplement(E, sins, pns, ok and min(sins) > min_sin)


def quotient_step(A, E_x, F_Tx, E_Tx, F_x=None, tol: float = 1e-8) -> np.ndarray:
    """Matrix of ``pi_{E(Tx)//F(Tx)} A |_{E(x)}`` in the given bases."""
    A = np.asarray(A, float)
    E_x, F_Tx, E_Tx = _as_sub(E_x), _as_sub(F_Tx), _as_sub(E_Tx)
    if F_x is not None:
        F_x = _as_sub(F_x)
        AF = A @ F_x.basis
        Q = np.linalg.qr(F_Tx.basis)[0]
        res = np.linalg.norm(AF - Q @ (Q.T @ AF))
        if res > tol * max(1.0, np.linalg.norm(AF)):
            raise ValueError(f"A does not map F(x) into F(Tx) (residual {res:.3g})")
    C = np.concatenate([E_Tx.basis, F_Tx.basis], axis=1)
    if C.shape[0] != C.shape[1]:
        raise SplittingError("E(Tx) and F(Tx) do not have complementary dimensions")
    Cn = C / np.linalg.norm(C, axis=0)
    if np.linalg.svd(Cn, compute_uv=False)[-1] <= RANK_TOL:
        raise SplittingError("E(Tx) and F(Tx) are not complementary")
    coef = np.linalg.solve(C, A @ E_x.basis)
    return coef[: E_Tx.dim]
