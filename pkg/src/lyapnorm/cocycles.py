"""Time-one solution operators for advection-diffusion and linearized 2d NSE.

Both equations are integrated with Strang splitting: an exact heat half step,
one RK3 step of the advective part with the velocity frozen at the start of
the substep, and another heat half step.  The adjoint substep uses the same
scheme with the L2-adjoint operator, and the adjoint of a whole unit interval
runs the substeps in reverse, so discrete duality holds up to rounding.

Vectors handed to cocycles are real coordinate arrays of shape ``(dim, m)``
(see :meth:`lyapnorm.spectral.Fourier.half_to_coords`); the Euclidean inner
product on them is the L2 inner product and ``H^s`` is diagonal.

For velocity models that are steady on sub-intervals (see
:meth:`lyapnorm.flows.FlowModel.segments`) the propagator of a segment is a
translate of the propagator of a fixed template.  It is assembled once as a
dense matrix from the one-substep map and reused; the dealiased operator is
exactly translation equivariant, so this agrees with direct stepping up to
rounding.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import CFLError
from .flows import FlowModel, FlowState
from .rng import stream_rng
from .spectral import NormSpec, SpectralField, SpectralGrid

DEFAULT_DT = 1 / 256
COEF_FLOOR = 1e-4


class _SplitSolver:
    kind = "abstract"
    coef_name = "kappa"

    def __init__(self, coef: float, grid: SpectralGrid, model: FlowModel, dt: float = DEFAULT_DT,
                 cfl_max: float = 0.5, use_segments: bool = True, coef_floor: float = COEF_FLOOR):
        name = self.coef_name
        if not (coef > 0 and math.isfinite(coef)):
            raise ValueError(
                f"{name} must be > 0: the time-one map is compact (and the exponents are "
                f"well defined) only with positive dissipation; got {name}={coef}")
        if coef < coef_floor:
            raise ValueError(
                f"{name}={coef} is below the floor {coef_floor}: the dissipative scale "
                f"would not be resolved at this truncation")
        if model.grid != grid:
            raise ValueError("velocity model and cocycle use different grids")
        nsub = int(round(1 / dt))
        if nsub < 1 or abs(nsub * dt - 1) > 1e-12:
            raise ValueError(f"dt={dt} must divide the unit interval")
        self.coef, self.grid, self.model = float(coef), grid, model
        self.dt, self.nsub, self.cfl_max = float(dt), nsub, float(cfl_max)
        self.use_segments = use_segments
        fo = grid.fourier
        self.fo = fo
        self._heat_half = np.exp(-self.coef * fo.ksq * self.dt / 2) * fo.bandf
        self._heat_coords = lambda t: np.exp(-self.coef * fo.hp_kabs**2 * t)
        self._step_cache: dict = {}
        self._prop_cache: dict = {}
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.fo.dim

    # -- operator pieces (overridden) ----------------------------------------
    def _snapshot(self, U):
        raise NotImplementedError

    def _op(self, snap, F):
        raise NotImplementedError

    def _op_adj(self, snap, F):
        raise NotImplementedError

    def _check_cfl(self, u_phys):
        umax = float(np.sqrt(u_phys[0] ** 2 + u_phys[1] ** 2).max())
        cfl = umax * self.dt / (2 * np.pi / self.grid.N)
        if cfl > self.cfl_max:
            raise CFLError(cfl, self.cfl_max, self.dt)

    def _rk3(self, op, snap, F):
        h = self.dt
        F1 = F + h * op(snap, F)
        F2 = 0.75 * F + 0.25 * (F1 + h * op(snap, F1))
        return F / 3 + (2 / 3) * (F2 + h * op(snap, F2))

    def _substep(self, F, snap, adjoint=False):
        F = self._heat_half * F
        if snap is not None:
            F = self._rk3(self._op_adj if adjoint else self._op, snap, F)
        return self._heat_half * F

    # -- direct integration ----------------------------------------------------
    def _direct(self, flow: FlowState, F, record: bool):
        path = [] if record else None
        for _ in range(self.nsub):
            snap = self._snapshot(self.model.velocity_half(flow))
            F = self._substep(F, snap)
            if record:
                path.append(snap)
            flow = self.model.advance(flow, self.dt)
        return F, flow, path

    # -- segment propagators -----------------------------------------------------
    def _step_matrix(self, key, template):
        snap = self._snapshot(template)
        M = self.dim
        out = np.empty((M, M))
        chunk = max(1, min(M, 2 ** 21 // (self.grid.N ** 2)))
        for a in range(0, M, chunk):
            b = min(M, a + chunk)
            X = np.zeros((M, b - a))
            X[np.arange(a, b), np.arange(b - a)] = 1.0
            F = self._substep(self.fo.coords_to_half(X), snap)
            out[:, a:b] = self.fo.half_to_coords(F)
        return out

    def _segment_factor(self, seg):
        if seg.template is None:
            return ("diag", np.concatenate([self._heat_coords(seg.duration)] * 2))
        n = seg.duration / self.dt
        steps = int(round(n))
        if steps < 1 or abs(n - steps) > 1e-9:
            raise ValueError(f"segment duration {seg.duration} is not a multiple of dt={self.dt}")
        key = (seg.key, steps)
        with self._lock:
            P = self._prop_cache.get(key)
            if P is None:
                E = self._step_cache.get(seg.key)
                if E is None:
                    E = self._step_matrix(seg.key, seg.template)
                    self._step_cache[seg.key] = E
                P = np.linalg.matrix_power(E, steps)
                self._prop_cache[key] = P
        return ("mat", P)

    def _segments(self, flow):
        if not self.use_segments:
            return None
        segs = self.model.segments(flow, 1.0)
        if segs is None:
            return None
        return [(self._segment_factor(s), s.shift) for s in segs]

    # -- public entry points --------------------------------------------------------
    def advance(self, flow: FlowState, X: np.ndarray):
        """Apply the time-one map to coordinate vectors; returns (X1, flow')."""
        X = np.asarray(X, float)
        factors = self._segments(flow)
        if factors is not None:
            return _apply_factors(self.fo, factors, X, False), self.model.advance(flow, 1.0)
        F, flow1, _ = self._direct(flow, self.fo.coords_to_half(X), False)
        return self.fo.half_to_coords(F), flow1

    def unit_map(self, flow: FlowState):
        """Record the time-one map along the path starting at ``flow``."""
        factors = self._segments(flow)
        if factors is not None:
            return UnitMap(self, "segments", factors), self.model.advance(flow, 1.0)
        path = []
        for _ in range(self.nsub):
            path.append(self._snapshot(self.model.velocity_half(flow)))
            flow = self.model.advance(flow, self.dt)
        return UnitMap(self, "path", path), flow

    def solve_unit(self, flow: FlowState, f0: SpectralField, record: bool = False):
        if f0.grid != self.grid or f0.rank != "scalar":
            raise ValueError("initial datum must be a scalar field on the cocycle grid")
        if record:
            um, flow1 = self.unit_map(flow)
            return um.apply_field(f0), flow1, um
        x1, flow1 = self.advance(flow, f0.to_coords()[:, None])
        return SpectralField.from_coords(self.grid, x1[:, 0]), flow1

    def describe(self) -> dict:
        return {"kind": self.kind, self.coef_name: self.coef, "dt": self.dt,
                "cfl_max": self.cfl_max, "N": self.grid.N}


def _apply_factors(fo, factors, X, adjoint):
    n = fo.nhp
    seq = reversed(factors) if adjoint else factors
    X = np.array(X, float, copy=True)
    k = fo.hp_k.astype(float)
    for (kind, data), shift in seq:
        if shift != (0.0, 0.0):
            ph = np.exp(1j * (k[:, 0] * shift[0] + k[:, 1] * shift[1]))[:, None]
            z = (X[:n] + 1j * X[n:]) * np.conj(ph)
            X = np.concatenate([z.real, z.imag])
        if kind == "diag":
            X = data[:, None] * X
        else:
            X = (data.T if adjoint else data) @ X
        if shift != (0.0, 0.0):
            z = (X[:n] + 1j * X[n:]) * ph
            X = np.concatenate([z.real, z.imag])
    return X


class UnitMap:
    """A recorded time-one map with forward and adjoint action on coordinates."""

    def __init__(self, solver: _SplitSolver, kind: str, data):
        self.solver, self.kind, self.data = solver, kind, data

    @property
    def dim(self):
        return self.solver.dim

    def _run(self, X, adjoint):
        X = np.asarray(X, float)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[:, None]
        s = self.solver
        if self.kind == "segments":
            Y = _apply_factors(s.fo, self.data, X, adjoint)
        else:
            F = s.fo.coords_to_half(X)
            path = reversed(self.data) if adjoint else self.data
            for snap in path:
                F = s._substep(F, snap, adjoint)
            Y = s.fo.half_to_coords(F)
        return Y[:, 0] if squeeze else Y

    def apply(self, X):
        return self._run(X, False)

    def apply_adjoint(self, X):
        return self._run(X, True)

    def apply_field(self, f: SpectralField, adjoint=False) -> SpectralField:
        return SpectralField.from_coords(f.grid, self._run(f.to_coords(), adjoint))

    def dense(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))


class AdCocycle(_SplitSolver):
    """Advection-diffusion ``f_t + u.grad f = kappa Lap f`` on the retained band."""

    kind = "advection-diffusion"
    coef_name = "kappa"

    @property
    def kappa(self):
        return self.coef

    def _snapshot(self, U):
        if U is None or not np.any(U):
            return None
        u = self.fo.phys(U)
        self._check_cfl(u)
        return u

    def _op(self, u, F):
        return -self.fo.advect(u, F)

    def _op_adj(self, u, F):
        return self.fo.advect(u, F)


class LnsCocycle(_SplitSolver):
    """Linearized vorticity equation ``eta_t + u.grad eta + Lap u . grad Lambda^-2 eta = nu Lap eta``."""

    kind = "linearized-nse"
    coef_name = "nu"

    @property
    def nu(self):
        return self.coef

    def _snapshot(self, U):
        if U is None or not np.any(U):
            return None
        fo = self.fo
        g = fo.phys(np.concatenate([U, -fo.ksq * U]))
        self._check_cfl(g[:2])
        return g

    def _op(self, g, F):
        fo = self.fo
        P = F * fo.inv_ksq
        d = fo.phys(np.stack([fo.ikx * F, fo.iky * F, fo.ikx * P, fo.iky * P]))
        return -fo.spec(g[0] * d[0] + g[1] * d[1] + g[2] * d[2] + g[3] * d[3])

    def _op_adj(self, g, F):
        fo = self.fo
        d = fo.phys(np.stack([fo.ikx * F, fo.iky * F]))
        a = fo.spec(np.stack([g[0] * d[0] + g[1] * d[1], g[2] * d[0] + g[3] * d[1]]))
        return a[0] + fo.inv_ksq * a[1]


# -- functional wrappers ----------------------------------------------------------

def ad_solve_unit(c: AdCocycle, flow: FlowState, f0: SpectralField, record=False):
    return c.solve_unit(flow, f0, record)


def ad_adjoint_solve_unit(c: AdCocycle, flow_path: UnitMap, g0: SpectralField) -> SpectralField:
    if flow_path is None:
        raise ValueError("adjoint solve needs the recorded forward path")
    return flow_path.apply_field(g0, adjoint=True)


def lns_solve_unit(c: LnsCocycle, flow: FlowState, eta0: SpectralField, record=False):
    return c.solve_unit(flow, eta0, record)


def lns_adjoint_solve_unit(c: LnsCocycle, flow_path: UnitMap, zeta0: SpectralField) -> SpectralField:
    if flow_path is None:
        raise ValueError("adjoint solve needs the recorded forward path")
    return flow_path.apply_field(zeta0, adjoint=True)


@dataclass(frozen=True)
class OperatorNormEstimate:
    value: float
    rel_change: float
    iterations: int
    converged: bool

    def __float__(self):
        return self.value


def operator_norm(solver_map: UnitMap, s_in, s_out, iters: int = 30, tol: float = 1e-10,
                  seed: int = 0, block: int = 8) -> OperatorNormEstimate:
    """Largest singular value of ``Lambda^{s_out} S Lambda^{-s_in}`` by power iteration.

    ``solver_map`` is a recorded :class:`UnitMap`; the adjoint comes from the
    duality solver, so the iteration runs in the L2-isometric frame.  A block
    of ``block`` vectors with a Rayleigh-Ritz step is iterated on ``S* S``,
    which keeps convergence fast when the top singular values nearly coincide.
    """
    if iters < 20:
        raise ValueError("operator_norm needs at least 20 iterations")
    fo = solver_map.solver.fo
    s_in = float(s_in.s if isinstance(s_in, NormSpec) else s_in)
    s_out = float(s_out.s if isinstance(s_out, NormSpec) else s_out)
    w_in, w_out = fo.coord_weights(-s_in)[:, None], fo.coord_weights(s_out)[:, None]
    b = max(1, min(int(block), fo.dim))
    V, _ = np.linalg.qr(stream_rng(seed, "sampler", 0).standard_normal((fo.dim, b)))
    sigma, prev, rel = 0.0, None, np.inf
    for it in range(1, iters + 1):
        Y = w_out * solver_map.apply(w_in * V)
        Z = w_in * solver_map.apply_adjoint(w_out * Y)
        H = V.T @ Z
        theta = float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1])
        if not theta > 0:
            return OperatorNormEstimate(0.0, 0.0, it, True)
        sigma = math.sqrt(theta)
        if prev is not None:
            rel = abs(sigma - prev) / sigma
            if rel < tol:
                return OperatorNormEstimate(sigma, rel, it, True)
        prev = sigma
        V, _ = np.linalg.qr(Z)
    return OperatorNormEstimate(sigma, rel, iters, False)
