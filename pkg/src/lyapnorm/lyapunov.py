"""Estimators for exponents, spectra, volume growth and regularity functions.

Every estimator drives a :class:`CocycleHandle`, whose ``apply`` maps a block of
column vectors through the current time-one map and advances the driver.
Norms are :class:`~lyapnorm.geometry.FiniteNorm` objects; block iterations
orthonormalize in the norm's inner product (the whitened frame), which for a
Sobolev norm is the Lambda^s-conjugated L2 frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import FiniteNorm, Subspace, bounded_complement, quotient_step, sin_angle_min
from .rng import stream_rng

NEG_INF = -math.inf  # explicit sentinel for exponents of (numerically) singular directions
RANK_FLOOR = 1e-13


# -- handles -------------------------------------------------------------------------

class CocycleHandle:
    """Linear time-one action ``v -> A_x v`` that advances ``x`` on each call."""

    dim: int
    has_adjoint = False
    step = 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def next_matrix(self) -> np.ndarray:
        """Dense matrix of the current time-one map; advances the driver."""
        Y = self.apply(np.eye(self.dim))
        return Y


class MatrixCocycle(CocycleHandle):
    """Cocycle driven by a step-indexed matrix generator ``matrix(n)``."""

    has_adjoint = True

    def __init__(self, matrix, dim: int, start: int = 0):
        self.matrix = matrix
        self.dim = int(dim)
        self.step = int(start)

    def apply(self, X):
        A = self.matrix(self.step)
        self.step += 1
        return A @ X

    def next_matrix(self):
        A = self.matrix(self.step)
        self.step += 1
        return np.array(A, float)


class PdeCocycleHandle(CocycleHandle):
    """Wraps an advection-diffusion or linearized-NSE cocycle and its flow state."""

    has_adjoint = True

    def __init__(self, cocycle, flow):
        self.cocycle, self.flow = cocycle, flow
        self.dim = cocycle.dim

    def apply(self, X):
        Y, self.flow = self.cocycle.advance(self.flow, X)
        self.step += 1
        return Y

    def next_matrix(self):
        um, self.flow = self.cocycle.unit_map(self.flow)
        self.step += 1
        return um.dense()


def sobolev_finite_norm(grid, s: float) -> FiniteNorm:
    """``H^s`` as a diagonal quadratic norm on real band coordinates."""
    return FiniteNorm.quadratic(grid.fourier.coord_weights(s), name=f"H^{float(s):g}")


def linearity_residual(c: CocycleHandle, rng=None, scale=1.0) -> float:
    """Relative residual of ``A(ax + by) - a Ax - b Ay`` on one step (advances ``c``)."""
    rng = rng or np.random.default_rng(0)
    x, y = rng.standard_normal((2, c.dim))
    a, b = rng.standard_normal(2)
    Y = c.apply(np.stack([x, y, a * x + b * y], axis=1))
    r = np.linalg.norm(Y[:, 2] - a * Y[:, 0] - b * Y[:, 1])
    return float(r / max(np.linalg.norm(Y), 1e-300 * scale))


# -- statistics -----------------------------------------------------------------------

def block_stats(series: np.ndarray):
    """Mean and block-averaged standard error (blocks of about sqrt(len))."""
    x = np.asarray(series, float)
    if x.size == 0:
        return math.nan, math.nan
    if np.any(np.isneginf(x)):
        return NEG_INF, 0.0
    b = max(1, int(math.sqrt(x.size)))
    nb = x.size // b
    if nb < 2:
        return float(x.mean()), math.nan
    means = x[-nb * b:].reshape(nb, b).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(nb))


BURN_IN = 0.2  # default fraction of leading steps dropped from spectral averages


def _tail(series, discard=BURN_IN):
    n = len(series)
    return series[min(n - 1, int(n * discard)):]


@dataclass
class ExponentEstimate:
    value: float
    stderr: float
    series: np.ndarray
    norm: str = ""

    def __iter__(self):
        return iter((self.value, self.stderr, self.series))


def top_exponent(c: CocycleHandle, norm, v0, n: int, discard: float = 0.5):
    """Top exponent from the renormalized growth of one vector.

    ``norm`` may be a single norm or a sequence; with a sequence the vector is
    renormalized in the first norm and the log-growth in every norm is
    recorded along the same trajectory (one estimate per norm is returned).
    """
    if n < 50:
        raise ValueError("top_exponent needs n >= 50 steps")
    single = isinstance(norm, FiniteNorm)
    norms = [norm] if single else list(norm)
    v = np.asarray(v0, float).reshape(-1)
    n0 = float(norms[0](v))
    if n0 == 0 or not np.isfinite(n0):
        raise ValueError("initial vector must be nonzero and finite")
    v = v / n0
    cur = np.array([float(nm(v)) for nm in norms])
    logs = np.full((len(norms), n), NEG_INF)
    for j in range(n):
        w = c.apply(v[:, None])[:, 0]
        a = np.array([float(nm(w)) for nm in norms])
        if not (a[0] > 0 and np.all(np.isfinite(a))):
            break  # exact collapse: the remaining steps keep the -inf sentinel
        logs[:, j] = np.log(a) - np.log(cur)
        v = w / a[0]
        cur = a / a[0]
    out = []
    for i, nm in enumerate(norms):
        s = logs[i]
        mean, se = block_stats(_tail(s, discard))
        out.append(ExponentEstimate(mean, se, s, nm.name))
    return out[0] if single else out


# -- spectra ------------------------------------------------------------------------------

@dataclass
class LyapunovRecord:
    lambdas: list
    stderr: list
    multiplicities: list
    cumulative: list
    sigma: list
    series: np.ndarray
    norm: str
    seed: Optional[int]
    n: int
    diagnostics: dict = field(default_factory=dict)
    filtration: Optional[np.ndarray] = None

    def to_dict(self, include_series=True, include_basis=False) -> dict:
        d = {
            "norm": self.norm,
            "seed": self.seed,
            "n": self.n,
            "lambda": [_jf(x) for x in self.lambdas],
            "stderr": [_jf(x) for x in self.stderr],
            "multiplicities": list(map(int, self.multiplicities)),
            "cumulative_multiplicities": list(map(int, self.cumulative)),
            "sigma": [_jf(x) for x in self.sigma],
            "diagnostics": {k: _jf(v) if isinstance(v, float) else v
                            for k, v in self.diagnostics.items()},
        }
        if include_series:
            d["series"] = [[_jf(x) for x in row] for row in np.asarray(self.series).T]
        if include_basis and self.filtration is not None:
            d["filtration"] = np.asarray(self.filtration).tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=1)


def _jf(x):
    """JSON-safe float: infinities and NaN become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def cluster_multiplicities(lambdas, resolution=0.02):
    """Group sorted exponents whose consecutive gaps are <= resolution."""
    mult = []
    for i, lam in enumerate(lambdas):
        if i == 0:
            mult.append(1)
            continue
        prev = lambdas[i - 1]
        same = (lam == prev) or (math.isfinite(lam) and math.isfinite(prev)
                                 and prev - lam <= resolution)
        if same:
            mult[-1] += 1
        else:
            mult.append(1)
    return mult, list(np.cumsum(mult))


def _orthonormalize(norm: FiniteNorm, Y):
    Q, R = np.linalg.qr(norm.whiten(Y))
    d = np.abs(np.diag(R))
    return norm.unwhiten(Q), d


def leading_spectrum(c: CocycleHandle, norm: FiniteNorm, k: int, n: int, V0=None,
                     seed: int = 0, resolution: float = 0.02,
                     discard: float = BURN_IN) -> LyapunovRecord:
    """Top ``k`` exponents by block iteration with QR in the norm's inner product."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not norm.is_quadratic:
        raise ValueError("leading_spectrum needs a quadratic norm")
    if V0 is None:
        V0 = stream_rng(seed, "vector", 0).standard_normal((c.dim, k))
    X, _ = _orthonormalize(norm, np.asarray(V0, float))
    series = np.empty((n, k))
    for j in range(n):
        X, d = _orthonormalize(norm, c.apply(X))
        with np.errstate(divide="ignore"):
            logd = np.log(d)
        logd[d <= RANK_FLOOR * max(d.max(), 1e-300)] = NEG_INF
        series[j] = logd
    lam, se = [], []
    for i in range(k):
        m, s = block_stats(_tail(series[:, i], discard))
        lam.append(m)
        se.append(s)
    order = sorted(range(k), key=lambda i: -lam[i] if lam[i] > NEG_INF else math.inf)
    lam = [lam[i] for i in order]
    se = [se[i] for i in order]
    mult, cum = cluster_multiplicities(lam, resolution)
    sigma = list(np.cumsum(lam))
    t = series[:, 0]
    q = max(1, n // 4)
    diag = {
        "running_slope": float(np.mean(t)) if np.all(np.isfinite(t)) else NEG_INF,
        "last_quarter_drift": float(abs(np.mean(t[-q:]) - np.mean(t[-2 * q:-q])))
        if n >= 8 and np.all(np.isfinite(t)) else math.nan,
        "reordered": order != list(range(k)),
        "resolution": resolution,
    }
    return LyapunovRecord(lam, se, mult, cum, sigma, series[:, order], norm.name, seed, n, diag, X)


@dataclass
class VolumeGrowth:
    sigma: float
    stderr: float
    series: np.ndarray


def volume_growth(c: CocycleHandle, norm: FiniteNorm, E0, n: int, reorth_every: int = 1) -> VolumeGrowth:
    """``1/n log det(A^n | E0)`` accumulated one step (or block) at a time."""
    if not norm.is_quadratic:
        raise ValueError("volume_growth needs a quadratic norm")
    B = E0.basis if isinstance(E0, Subspace) else np.asarray(E0, float)
    X, d0 = _orthonormalize(norm, B)
    if np.any(d0 <= RANK_FLOOR * d0.max()):
        raise ValueError("E0 is rank deficient")
    series = np.empty(n)
    since, acc = 0, 0.0
    Y = X
    for j in range(n):
        Y = c.apply(Y)
        since += 1
        if since == reorth_every or j == n - 1:
            Y, d = _orthonormalize(norm, Y)
            if np.any(d <= RANK_FLOOR * max(d.max(), 1e-300)):
                series[j:] = NEG_INF
                return VolumeGrowth(NEG_INF, 0.0, series)
            series[j] = float(np.sum(np.log(d)))
            since = 0
        else:
            series[j] = 0.0
    m, se = block_stats(series)
    return VolumeGrowth(float(np.sum(series) / n), se * (reorth_every ** 0.5), series)


@dataclass
class QuotientGrowth:
    sigma: float
    stderr: float
    series: np.ndarray
    log_sin_angles: np.ndarray
    angle_slope: float


def quotient_volume_growth(model, norm: FiniteNorm, i: int, n: int, check_every: int = 100) -> QuotientGrowth:
    """Volume growth of the quotient cocycle on complements of ``F_{i+1}``.

    ``model`` provides ``matrix(j)`` and ``flag(j, i)`` (a basis of the invariant
    subspace ``F_{i+1}`` at step ``j``).  Complements come from
    :func:`bounded_complement`.  Also tracks ``log sin angle_min(A^j E, F_{i+1})``.
    """
    F = Subspace(model.flag(0, i))
    E = bounded_complement(F, norm).subspace
    k = E.dim
    G = norm.unwhiten(np.linalg.qr(norm.whiten(E.basis))[0])
    series = np.empty(n)
    angles = np.empty(n)

    def logvol(S):
        return float(np.sum(np.log(np.abs(np.diag(np.linalg.qr(norm.whiten(S.basis))[1])))))

    for j in range(n):
        A = model.matrix(j)
        F_next = Subspace(model.flag(j + 1, i))
        E_next = bounded_complement(F_next, norm).subspace
        Ahat = quotient_step(A, E, F_next, E_next, F if j % check_every == 0 else None)
        sgn, ld = np.linalg.slogdet(Ahat)
        series[j] = (ld if sgn != 0 else NEG_INF) + logvol(E_next) - logvol(E)
        G, _ = _orthonormalize(norm, A @ G)
        angles[j] = math.log(max(sin_angle_min(Subspace(G), F_next, norm), 1e-300))
        E, F = E_next, F_next
    m, se = block_stats(series)
    q = max(2, n // 4)
    t = np.arange(n - q, n)
    slope = float(np.polyfit(t, angles[-q:], 1)[0])
    return QuotientGrowth(float(np.sum(series) / n), se, series, angles, slope)


# -- regularity functions ------------------------------------------------------------------

@dataclass
class PathScan:
    """Log operator norms of ``A^n_x`` in several norms plus one-step cross norms."""

    log_norms: dict
    cross: Optional[np.ndarray]
    horizon: int
    final_product: Optional[np.ndarray] = None
    final_log_scale: float = 0.0


def scan_path(c: CocycleHandle, norms: Sequence[FiniteNorm], horizon: int,
              cross: Optional[tuple] = None, keep_product: bool = False) -> PathScan:
    """March ``horizon`` steps recording ``log ||A^n||`` (n = 0..horizon) per norm.

    ``cross = (normB, normV)`` additionally records ``||A_{T^n x}||_{B->V}``.
    The running product is rescaled each step to avoid overflow.
    """
    from .geometry import cross_norm, operator_norm_finite

    P = np.eye(c.dim)
    scale = 0.0
    logs = {nm.name: [0.0] for nm in norms}
    cr = []
    for _ in range(horizon):
        A = c.next_matrix()
        if cross is not None:
            cr.append(cross_norm(A, *cross))
        P = A @ P
        m = np.abs(P).max()
        if m == 0:
            for nm in norms:
                logs[nm.name].append(NEG_INF)
            continue
        P /= m
        scale += math.log(m)
        for nm in norms:
            logs[nm.name].append(scale + math.log(operator_norm_finite(P, nm)))
    return PathScan({k: np.array(v) for k, v in logs.items()},
                    np.array(cr) if cross is not None else None, horizon,
                    P if keep_product else None, scale)


@dataclass
class RegularityEstimate:
    epsilon: float
    D_bar: float
    D_under: Optional[float]
    horizon: int
    argmax: int
    lower_bound: bool = True
    delta: Optional[float] = None
    K_delta: Optional[float] = None
    N_delta: Optional[int] = None


def d_bar(log_norms: np.ndarray, lambda1: float, epsilon: float):
    """``max_n ||A^n|| e^{-n(lambda + epsilon)}`` over the recorded horizon."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = np.arange(len(log_norms))
    v = log_norms - n * (lambda1 + epsilon)
    j = int(np.argmax(v))
    return float(math.exp(v[j])), j


def regularity_functions(c, norm: FiniteNorm, epsilon: float, lambda1_hat: float, horizon: int,
                         scan: Optional[PathScan] = None, samples: int = 64, seed: int = 0,
                         top_multiplicity: int = 1) -> RegularityEstimate:
    """Finite-horizon regularity functions (lower bounds of the true suprema).

    ``D_bar`` uses exact operator norms of the products.  ``D_under`` is
    ``max_{n, v} e^{n(lambda - eps)} sin angle(v, F_2) / ||A^n v||`` over sampled
    unit vectors ``v``, with ``F_2`` approximated by the span of all but the top
    ``top_multiplicity`` right singular vectors of ``A^horizon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if horizon < 100:
        raise ValueError("horizon must be >= 100")
    if scan is not None:
        db, j = d_bar(scan.log_norms[norm.name][: horizon + 1], lambda1_hat, epsilon)
        return RegularityEstimate(epsilon, db, None, horizon, j)
    rng = stream_rng(seed, "sampler", 1)
    V = rng.standard_normal((c.dim, samples))
    V = V / norm(V)
    W = V.copy()
    P = np.eye(c.dim)
    scale = 0.0
    logs = [0.0]
    vlogs = np.zeros((horizon + 1, samples))
    wscale = np.zeros(samples)
    from .geometry import operator_norm_finite
    for t in range(1, horizon + 1):
        A = c.next_matrix()
        P = A @ P
        m = np.abs(P).max()
        P /= m
        scale += math.log(m)
        logs.append(scale + math.log(operator_norm_finite(P, norm)))
        W = A @ W
        nw = norm(W)
        wscale += np.log(nw)
        W = W / nw
        vlogs[t] = wscale
    db, j = d_bar(np.array(logs), lambda1_hat, epsilon)
    # slow subspace F_2 from the right singular vectors of the final product
    Mw = norm.conjugate(P)
    _, _, Vt = np.linalg.svd(Mw)
    top = Vt[:top_multiplicity].T  # whitened frame, orthonormal
    sins = np.linalg.norm(top.T @ norm.whiten(V), axis=0)  # ||v|| = 1
    n = np.arange(horizon + 1)[:, None]
    with np.errstate(divide="ignore"):
        vals = n * (lambda1_hat - epsilon) + np.log(np.maximum(sins, 1e-300))[None, :] - vlogs
    du = float(math.exp(vals.max()))
    return RegularityEstimate(epsilon, db, du, horizon, j)


@dataclass
class KDeltaEstimate:
    K_delta: float
    N_delta: int  # -1 when no violation occurs
    inconclusive: bool
    cross_norms: np.ndarray

    def __iter__(self):
        return iter((self.K_delta, self.N_delta))


def k_delta_from_cross(cross: np.ndarray, delta: float) -> KDeltaEstimate:
    if not delta > 0:
        raise ValueError("delta must be positive")
    cross = np.asarray(cross, float)
    n = np.arange(cross.size)
    viol = np.nonzero(cross > np.exp(n * delta))[0]
    if viol.size == 0:
        return KDeltaEstimate(1.0, -1, False, cross)
    N = int(viol[-1])
    K = max(1.0, float(cross[: N + 1].max()))
    return KDeltaEstimate(K, N, N == cross.size - 1, cross)


def k_delta_estimate(c, normB: FiniteNorm, normV: FiniteNorm, delta: float, horizon: int,
                     scan: Optional[PathScan] = None) -> KDeltaEstimate:
    """``K_delta = 1 v max_{i <= N_delta} ||A_{T^i x}||_{B->V}`` with ``N_delta`` the last
    step where the cross norm exceeds ``e^{n delta}``."""
    if scan is None:
        scan = scan_path(c, [], horizon, cross=(normB, normV))
    return k_delta_from_cross(scan.cross[:horizon], delta)


@dataclass
class ComparisonCheck:
    lhs: float
    rhs: float
    K_delta: float
    N_delta: int
    inconclusive: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)


def regularity_comparison(scan: PathScan, normB: FiniteNorm, normV: FiniteNorm, lambda1: float,
                          epsilon: float, delta: float) -> ComparisonCheck:
    """Compare ``D_bar^V_eps`` with ``K_delta * D_bar^B_{eps+delta}`` on one scanned path."""
    kd = k_delta_from_cross(scan.cross, delta)
    lhs, _ = d_bar(scan.log_norms[normV.name], lambda1, epsilon)
    rb, _ = d_bar(scan.log_norms[normB.name], lambda1, epsilon + delta)
    return ComparisonCheck(lhs, kd.K_delta * rb, kd.K_delta, kd.N_delta, kd.inconclusive)


def hill_tail_index(samples, frac: float = 0.1, cap: float = 50.0) -> float:
    """Hill estimate of the tail exponent ``p`` of positive samples (capped)."""
    x = np.sort(np.asarray(samples, float))[::-1]
    x = x[x > 0]
    m = max(2, int(frac * x.size))
    if x.size < 3 or m >= x.size:
        return cap
    logs = np.log(x[:m]) - math.log(x[m])
    h = float(np.mean(logs))
    return cap if h <= 0 else min(cap, 1.0 / h)


def admissible_q(p: float) -> float:
    """Upper limit ``p(p-3)/(p-1)`` on moment orders of ``log+ K_delta``."""
    if p <= 3:
        return 0.0
    return p * (p - 3) / (p - 1)
