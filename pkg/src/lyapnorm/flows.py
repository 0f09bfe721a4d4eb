"""Seeded, statistically stationary divergence-free velocity models.

A model object is a stateless description; the evolving data lives in an
immutable :class:`FlowState`.  Models that are steady on whole sub-intervals
(zero, steady and renewal shear flows) also expose :meth:`FlowModel.segments`,
describing each unit interval as translated copies of a few fixed velocity
templates; the cocycle solvers use this to reuse propagators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .rng import stream_rng
from .spectral import SpectralField, SpectralGrid, sobolev_norm

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FlowState:
    """Snapshot of a velocity path at time ``t``.

    ``internal`` holds model-specific variables (a read-only vorticity array
    for the stochastic model, a phase offset for the periodic one).  ``step``
    counts elapsed model substeps and, together with ``seed``, addresses the
    counter-based random stream.
    """

    model: "FlowModel"
    t: float
    seed: int
    step: int = 0
    internal: object = None

    @cached_property
    def u(self) -> SpectralField:
        return self.model.velocity(self)

    @property
    def rng_stream(self):
        return (self.seed, self.step)


@dataclass(frozen=True)
class Segment:
    """Velocity ``template(x + shift)`` held fixed for ``duration``.

    ``template`` is a half-spectrum array (2, N, N//2+1) or ``None`` for u = 0.
    """

    key: str
    template: Optional[np.ndarray]
    shift: tuple
    duration: float


def _check_dt(dt):
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")


class FlowModel:
    """Interface shared by all velocity models."""

    name = "abstract"
    substep: Optional[float] = None  # dt must be a multiple of this when set

    def __init__(self, grid: SpectralGrid):
        self.grid = grid

    def initial_state(self, seed: int) -> FlowState:
        return FlowState(self, 0.0, int(seed))

    def advance(self, state: FlowState, dt: float) -> FlowState:
        _check_dt(dt)
        return FlowState(self, state.t + dt, state.seed, state.step + 1, state.internal)

    def velocity_half(self, state: FlowState) -> Optional[np.ndarray]:
        """Half-spectrum velocity (2, N, Nh); ``None`` means identically zero."""
        raise NotImplementedError

    def velocity(self, state: FlowState) -> SpectralField:
        H = self.velocity_half(state)
        if H is None:
            return SpectralField.zeros(self.grid, "vector")
        return SpectralField.from_half(self.grid, H, div_free=True)

    def segments(self, state: FlowState, duration: float = 1.0):
        """Piecewise-steady description of [t, t + duration], or None."""
        return None

    def describe(self) -> dict:
        return {"name": self.name, "N": self.grid.N}


def _template(grid: SpectralGrid, ux, uy) -> np.ndarray:
    fo = grid.fourier
    return np.stack([fo.spec(np.asarray(ux, float)), fo.spec(np.asarray(uy, float))])


def _shift_half(fo, H, shift):
    cx, cy = shift
    if cx == 0 and cy == 0:
        return H
    return H * np.exp(1j * (fo.kx * cx + fo.ky * cy))


class ZeroFlow(FlowModel):
    name = "zero"

    def velocity_half(self, state):
        return None

    def segments(self, state, duration=1.0):
        return [Segment("zero", None, (0.0, 0.0), duration)]


class SteadyFlow(FlowModel):
    """Time-independent velocity ``u``."""

    name = "steady"

    def __init__(self, u: SpectralField):
        super().__init__(u.grid)
        if u.rank != "vector":
            raise ValueError("steady flow needs a vector field")
        SpectralField(u.grid, u.coeffs, div_free=True)  # validates incompressibility
        self.u = u
        self._half = u.half()

    def velocity_half(self, state):
        return self._half

    def segments(self, state, duration=1.0):
        return [Segment("steady", self._half, (0.0, 0.0), duration)]


def kolmogorov_shear(grid: SpectralGrid, amplitude: float = 1.0, wavenumber: int = 1) -> SteadyFlow:
    """Steady shear ``u = (A sin(q y), 0)``."""
    x = 2 * np.pi * np.arange(grid.N) / grid.N
    X, Y = np.meshgrid(x, x, indexing="ij")
    u = SpectralField.from_physical(grid, np.stack([amplitude * np.sin(wavenumber * Y), 0 * Y]),
                                    div_free=True)
    return SteadyFlow(u)


class TimePeriodicFlow(FlowModel):
    """``u = A (cos(theta) sin y, sin(theta) sin x)``, ``theta = 2 pi t / T + theta_0``.

    The phase offset ``theta_0`` is uniform (drawn from the seed) when
    ``random_phase`` is set, which makes the path stationary.
    """

    name = "time-periodic"

    def __init__(self, grid, amplitude=1.0, period=1.0, random_phase=True):
        super().__init__(grid)
        if period <= 0:
            raise ValueError("period must be positive")
        self.amplitude, self.period, self.random_phase = float(amplitude), float(period), random_phase
        x = 2 * np.pi * np.arange(grid.N) / grid.N
        X, Y = np.meshgrid(x, x, indexing="ij")
        self._ex = _template(grid, np.sin(Y), 0 * Y)
        self._ey = _template(grid, 0 * X, np.sin(X))

    def initial_state(self, seed):
        theta0 = 2 * np.pi * stream_rng(seed, "initial").random() if self.random_phase else 0.0
        return FlowState(self, 0.0, int(seed), 0, float(theta0))

    def velocity_half(self, state):
        th = 2 * np.pi * state.t / self.period + state.internal
        return self.amplitude * (math.cos(th) * self._ex + math.sin(th) * self._ey)

    def describe(self):
        return {"name": self.name, "N": self.grid.N, "amplitude": self.amplitude,
                "period": self.period, "random_phase": self.random_phase}


class ShearRenewalFlow(FlowModel):
    """Alternating sine shears with a fresh uniform phase every half period.

    On half-period ``m`` the velocity is ``(A sin(q y + phi_m), 0)`` for even
    ``m`` and ``(0, A sin(q x + phi_m))`` for odd ``m``; ``phi_m`` comes from the
    counter-based stream ``(seed, "velocity", m)``.
    """

    name = "shear-renewal"

    def __init__(self, grid, amplitude=1.0, period=1.0, wavenumber=1):
        super().__init__(grid)
        if period <= 0:
            raise ValueError("period must be positive")
        self.amplitude, self.period, self.q = float(amplitude), float(period), int(wavenumber)
        self.half_period = self.period / 2
        x = 2 * np.pi * np.arange(grid.N) / grid.N
        X, Y = np.meshgrid(x, x, indexing="ij")
        A, q = self.amplitude, self.q
        self._tx = _template(grid, A * np.sin(q * Y), 0 * Y)
        self._ty = _template(grid, 0 * X, A * np.sin(q * X))

    def phase(self, seed: int, m: int) -> float:
        return 2 * np.pi * stream_rng(seed, "velocity", m).random()

    def _index(self, t):
        return int(math.floor(t / self.half_period + _TOL))

    def _segment(self, seed, m, duration):
        phi = self.phase(seed, m)
        if m % 2 == 0:
            return Segment("x", self._tx, (0.0, phi / self.q), duration)
        return Segment("y", self._ty, (phi / self.q, 0.0), duration)

    def velocity_half(self, state):
        seg = self._segment(state.seed, self._index(state.t), 0.0)
        return _shift_half(self.grid.fourier, seg.template, seg.shift)

    def segments(self, state, duration=1.0):
        out, t, end = [], state.t, state.t + duration
        while t < end - _TOL:
            m = self._index(t)
            stop = min((m + 1) * self.half_period, end)
            out.append(self._segment(state.seed, m, stop - t))
            t = stop
        return out

    def describe(self):
        return {"name": self.name, "N": self.grid.N, "amplitude": self.amplitude,
                "period": self.period, "wavenumber": self.q}


@dataclass(frozen=True)
class NoiseSpec:
    """Additive forcing ``sum_j sigma_j e_j d beta_j`` on half-plane wavevectors.

    Each listed wavevector ``k`` carries two real unit-L2 velocity modes (cosine
    and sine), both with amplitude ``sigma_k``, so the total variance is
    ``2 sum_k sigma_k^2``.
    """

    modes: tuple
    sigma: tuple
    decay: Optional[float] = None

    def __post_init__(self):
        if len(self.modes) != len(self.sigma):
            raise ValueError("modes and sigma must have equal length")
        seen = set()
        for k, s in zip(self.modes, self.sigma):
            kx, ky = int(k[0]), int(k[1])
            if not (ky > 0 or (ky == 0 and kx > 0)):
                raise ValueError(f"forced mode {k} must lie in the half plane ky>0 or (ky=0, kx>0)")
            if (kx, ky) in seen:
                raise ValueError(f"duplicate forced mode {k}")
            seen.add((kx, ky))
            if not (s >= 0 and math.isfinite(s)):
                raise ValueError("sigma must be finite and non-negative")

    @classmethod
    def smooth(cls, kf: float = 3.0, amplitude: float = 0.1, decay: float = 2.0) -> "NoiseSpec":
        """Modes with ``1 <= |k| <= kf`` and ``sigma_k = amplitude |k|^-decay``."""
        r = int(math.floor(kf))
        modes, sig = [], []
        for ky in range(0, r + 1):
            for kx in range(-r, r + 1):
                if not (ky > 0 or kx > 0):
                    continue
                kk = math.hypot(kx, ky)
                if 1 <= kk <= kf:
                    modes.append((kx, ky))
                    sig.append(amplitude * kk ** (-decay))
        return cls(tuple(modes), tuple(sig), decay)

    def total_variance(self) -> float:
        return 2.0 * float(np.sum(np.square(self.sigma)))

    def moment(self, r: float) -> float:
        """``sum_j |k_j|^{2r} sigma_j^2``."""
        k = np.hypot(*np.array(self.modes, float).T)
        return 2.0 * float(np.sum(k ** (2 * r) * np.square(self.sigma)))


class GalerkinStochasticNSE(FlowModel):
    """Band-truncated 2d Navier-Stokes with additive white-in-time forcing.

    Vorticity form, exponential Euler-Maruyama:
    ``w_{n+1} = e^{-nu |k|^2 dt} (w_n - dt P(u.grad w_n) + dW_n)``,
    with the noise increment of step ``n`` drawn from ``(seed, "noise", n)``.
    ``init="stationary"`` samples each forced mode from the stationary law of
    the linear (Ornstein-Uhlenbeck) part; ``init="zero"`` starts at rest.
    """

    name = "stochastic-nse"

    def __init__(self, grid, nu: float, noise: NoiseSpec, dt: float = 1 / 256, init="stationary"):
        super().__init__(grid)
        if not nu > 0:
            raise ValueError("nu must be positive")
        _check_dt(dt)
        self.nu, self.noise, self.substep, self.init = float(nu), noise, float(dt), init
        fo = grid.fourier
        modes = np.array(noise.modes, int).reshape(-1, 2)
        if len(modes) and np.abs(modes).max() > fo.K:
            raise ValueError("forced modes outside the retained band")
        self._rows = modes[:, 0] % grid.N
        self._cols = modes[:, 1]
        kabs = np.hypot(modes[:, 0], modes[:, 1])
        self._amp = kabs * np.array(noise.sigma, float) * math.sqrt(self.substep / 2)
        zc = self._cols == 0
        self._zsel, self._zrows = np.nonzero(zc)[0], (-modes[zc, 0]) % grid.N
        self._stat_sd = np.array(noise.sigma, float) / math.sqrt(2 * self.nu)
        self._decay = np.exp(-self.nu * fo.ksq * self.substep) * fo.bandf

    def _scatter(self, z):
        H = np.zeros((self.grid.N, self.grid.fourier.Nh), complex)
        H[self._rows, self._cols] = z
        H[self._zrows, 0] = np.conj(z[self._zsel])
        return H

    def initial_state(self, seed, w0: Optional[SpectralField] = None):
        if w0 is not None:
            W = w0.half()
        elif self.init == "stationary" and len(self._rows):
            xi = stream_rng(seed, "initial").standard_normal((2, len(self._rows)))
            W = self._scatter(self._stat_sd * (xi[0] + 1j * xi[1]) / math.sqrt(2))
        else:
            W = np.zeros((self.grid.N, self.grid.N // 2 + 1), complex)
        W = np.array(W)
        W.flags.writeable = False
        return FlowState(self, 0.0, int(seed), 0, W)

    def _steps(self, dt):
        n = dt / self.substep
        m = int(round(n))
        if m < 1 or abs(n - m) > 1e-9 * max(1, n):
            raise ValueError(f"dt={dt} is not a multiple of the model substep {self.substep}")
        return m

    def advance(self, state, dt):
        _check_dt(dt)
        fo = self.grid.fourier
        W = np.array(state.internal)
        h = self.substep
        for j in range(state.step, state.step + self._steps(dt)):
            U = fo.velocity_from_vorticity(W)
            g = fo.phys(np.stack([U[0], U[1], fo.ikx * W, fo.iky * W]))
            nl = fo.spec(g[0] * g[2] + g[1] * g[3])
            W = W - h * nl
            if len(self._rows):
                xi = stream_rng(state.seed, "noise", j).standard_normal((2, len(self._rows)))
                W = W + self._scatter(self._amp * (xi[0] + 1j * xi[1]))
            W = self._decay * W
        W.flags.writeable = False
        n = self._steps(dt)
        return FlowState(self, state.t + dt, state.seed, state.step + n, W)

    def vorticity(self, state) -> SpectralField:
        return SpectralField.from_half(self.grid, state.internal)

    def velocity_half(self, state):
        return self.grid.fourier.velocity_from_vorticity(state.internal)

    def describe(self):
        return {"name": self.name, "N": self.grid.N, "nu": self.nu, "dt": self.substep,
                "init": self.init, "forced_modes": len(self.noise.modes),
                "sigma_decay": self.noise.decay, "total_variance": self.noise.total_variance()}


def advance_flow(model: FlowModel, state: FlowState, dt: float) -> FlowState:
    if state.model is not model:
        raise ValueError("state belongs to a different model")
    return model.advance(state, dt)


def velocity_at(state: FlowState) -> SpectralField:
    return state.u


def path_moment(model: FlowModel, seed: int, gamma: float, horizon: int,
                quad_dt: float = 1 / 64, spinup: float = 0.0) -> np.ndarray:
    """Per-unit-interval samples of ``int_0^1 ||u_t||_{H^gamma} dt``.

    The integral is approximated by the trapezoid rule on a grid of spacing
    ``quad_dt`` (which must be a multiple of the model substep, if any).
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    m = int(round(1 / quad_dt))
    if abs(m * quad_dt - 1) > 1e-12:
        raise ValueError("quad_dt must divide 1")
    state = model.initial_state(seed)
    if spinup > 0:
        state = model.advance(state, spinup)
    out = np.empty(horizon)
    vals = np.empty(m + 1)
    for n in range(horizon):
        for j in range(m + 1):
            vals[j] = sobolev_norm(state.u, gamma)
            if j < m:
                state = model.advance(state, quad_dt)
        out[n] = quad_dt * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
    return out
