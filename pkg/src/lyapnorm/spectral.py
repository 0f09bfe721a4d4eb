"""Fourier-coefficient engine for mean-zero fields on the 2-torus [0, 2pi)^2.

Conventions
-----------
* Physical grid points are ``x_i = 2 pi i / N`` along axis 0 and ``y_j`` along
  axis 1.  Coefficients use numpy FFT ordering on both axes, so
  ``coeffs[..., i, j]`` belongs to ``k = (fftfreq[i], fftfreq[j])``.
* ``f(x) = sum_k fhat(k) exp(i k.x)``, i.e. ``fhat = fft2(f) / N**2``.  With this
  scaling the L2 norm is taken against normalized Lebesgue measure and equals
  ``sqrt(sum |fhat|^2)``.
* Only the square band ``|k_x|, |k_y| <= K_max`` (2/3 rule) is retained, and the
  mode ``k = 0`` is always zero.
* ``grad_perp = (-d_y, d_x)`` and ``curl u = d_x u_2 - d_y u_1``.  The velocity
  recovered from a vorticity is ``u = grad_perp Delta^{-1} w``, which gives
  ``curl(biot_savart(w)) = w`` and maps ``w = sin x`` to ``u = (0, -cos x)``.

Solvers work on the half spectrum produced by ``rfft2`` (shape ``(..., N,
N//2 + 1)``) through :class:`Fourier`; :class:`SpectralField` is the immutable,
full-array public value type.
"""
from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import fft as sfft

from .errors import GridMismatchError, NumericDomainError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class SpectralGrid:
    """Square Fourier truncation with ``N`` points per dimension."""

    N: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.kmax < 2:
            raise ValueError(f"dealias cutoff K_max={self.kmax} must be >= 2")

    @property
    def d(self) -> int:
        return 2

    @property
    def kmax(self) -> int:
        # small epsilon so that e.g. 2/3 * 48 / 2 = 16 is not rounded down
        return int(np.floor(self.dealias_fraction * self.N / 2 + 1e-9))

    @property
    def fourier(self) -> "Fourier":
        return _fourier(self.N, self.kmax)

    @property
    def dim(self) -> int:
        """Number of real degrees of freedom of a scalar band field."""
        return self.fourier.dim


@functools.lru_cache(maxsize=None)
def _fourier(N: int, K: int) -> "Fourier":
    return Fourier(N, K)


class Fourier:
    """Precomputed wavenumbers and transforms for one grid (half spectrum)."""

    def __init__(self, N: int, K: int):
        self.N, self.K = N, K
        self.Nh = N // 2 + 1
        k1 = np.rint(sfft.fftfreq(N, 1.0 / N)).astype(int)
        self.k1 = k1
        self.negi = (-np.arange(N)) % N

        # full layout
        kx, ky = np.meshgrid(k1, k1, indexing="ij")
        self.band_full = (np.abs(kx) <= K) & (np.abs(ky) <= K) & ((kx != 0) | (ky != 0))
        ksq = (kx**2 + ky**2).astype(float)
        self.kabs_full = np.sqrt(np.where(self.band_full, ksq, 1.0))
        self.kx_full, self.ky_full = kx.astype(float), ky.astype(float)

        # half layout
        kxh, kyh = kx[:, : self.Nh], ky[:, : self.Nh]
        self.band = self.band_full[:, : self.Nh]
        self.bandf = self.band.astype(float)
        self.kx, self.ky = kxh.astype(float), kyh.astype(float)
        self.ksq = np.where(self.band, (kxh**2 + kyh**2).astype(float), 0.0)
        self.kabs = self.kabs_full[:, : self.Nh].copy()
        self.ikx = 1j * self.kx * self.bandf
        self.iky = 1j * self.ky * self.bandf
        self.inv_ksq = np.where(self.band, 1.0 / np.where(self.band, self.ksq, 1.0), 0.0)

        # half-plane modes (ky > 0, or ky == 0 and kx > 0) used as real coordinates
        hp = self.band & ((kyh > 0) | ((kyh == 0) & (kxh > 0)))
        rows, cols = np.nonzero(hp)
        self.hp_rows, self.hp_cols = rows, cols
        self.hp_k = np.stack([kxh[rows, cols], kyh[rows, cols]], axis=1)
        self.hp_kabs = self.kabs[rows, cols]
        zero_col = cols == 0
        self.hp_conj_sel = np.nonzero(zero_col)[0]
        self.hp_conj_rows = self.negi[rows[zero_col]]
        self.nhp = rows.size
        self.dim = 2 * rows.size
        # mirror columns for rebuilding the full array from the half one
        self._mirror_cols = N - np.arange(self.Nh, N)

    # -- transforms --------------------------------------------------------
    def phys(self, F: np.ndarray) -> np.ndarray:
        """Half spectrum -> real collocation values."""
        return sfft.irfft2(F, s=(self.N, self.N), axes=(-2, -1), norm="forward")

    def spec(self, f: np.ndarray) -> np.ndarray:
        """Real collocation values -> band-limited half spectrum."""
        return sfft.rfft2(f, axes=(-2, -1), norm="forward") * self.bandf

    def full_from_half(self, H: np.ndarray) -> np.ndarray:
        out = np.empty(H.shape[:-1] + (self.N,), dtype=complex)
        out[..., : self.Nh] = H
        out[..., self.Nh:] = np.conj(H[..., self.negi, :][..., self._mirror_cols])
        return out

    def half_from_full(self, F: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(F[..., : self.Nh])

    # -- real coordinates ---------------------------------------------------
    def half_to_coords(self, H: np.ndarray) -> np.ndarray:
        """(..., N, Nh) half spectra -> (dim, ...) real coordinates.

        Coordinates are sqrt(2) (Re, Im) of the half-plane coefficients, stacked
        real parts first; the Euclidean norm equals the L2 norm.
        """
        z = H[..., self.hp_rows, self.hp_cols]
        x = SQRT2 * np.concatenate([z.real, z.imag], axis=-1)
        return np.moveaxis(x, -1, 0)

    def coords_to_half(self, X: np.ndarray) -> np.ndarray:
        X = np.moveaxis(np.asarray(X, dtype=float), 0, -1)
        n = self.nhp
        z = (X[..., :n] + 1j * X[..., n:]) / SQRT2
        H = np.zeros(X.shape[:-1] + (self.N, self.Nh), dtype=complex)
        H[..., self.hp_rows, self.hp_cols] = z
        H[..., self.hp_conj_rows, 0] = np.conj(z[..., self.hp_conj_sel])
        return H

    def coord_weights(self, s: float) -> np.ndarray:
        """Weights |k|^s of the real coordinates (H^s is diagonal in them)."""
        w = self.hp_kabs ** float(s)
        return np.concatenate([w, w])

    # -- operators on half spectra -----------------------------------------
    def advect(self, u_phys: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Dealiased u.grad f for collocated velocity ``u_phys`` (2, N, N)."""
        g = self.phys(np.stack([self.ikx * F, self.iky * F]))
        return self.spec(u_phys[0] * g[0] + u_phys[1] * g[1])

    def velocity_from_vorticity(self, W: np.ndarray) -> np.ndarray:
        return np.stack([self.iky * W * self.inv_ksq, -self.ikx * W * self.inv_ksq], axis=-3)


Coeffs = np.ndarray


@dataclass(frozen=True)
class NormSpec:
    """Homogeneous Sobolev order ``s`` with an optional admissible range."""

    s: float
    gamma_prime: Union[float, None] = None

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise ValueError("Sobolev order must be finite")
        if self.gamma_prime is not None and abs(self.s) > self.gamma_prime:
            raise ValueError(f"|s|={abs(self.s)} exceeds gamma'={self.gamma_prime}")


def _order(ns) -> float:
    return float(ns.s if isinstance(ns, NormSpec) else ns)


class SpectralField:
    """Immutable real, mean-zero scalar or 2-vector field in Fourier form.

    ``coeffs`` is the full ``(N, N)`` (scalar) or ``(2, N, N)`` (vector) array.
    On construction the array is projected onto Hermitian-symmetric, mean-zero,
    band-limited coefficients.
    """

    __slots__ = ("grid", "coeffs", "div_free")

    def __init__(self, grid: SpectralGrid, coeffs, *, div_free: bool = False, _trusted=False):
        c = np.array(coeffs, dtype=complex, copy=True)
        N = grid.N
        if c.shape not in ((N, N), (2, N, N)):
            raise GridMismatchError(f"coefficient shape {c.shape} does not match N={N}")
        if not np.all(np.isfinite(c)):
            raise NumericDomainError("non-finite Fourier coefficients")
        fo = grid.fourier
        if not _trusted:
            c = 0.5 * (c + np.conj(c[..., fo.negi, :][..., fo.negi]))
            c *= fo.band_full
        if div_free:
            if c.ndim != 3:
                raise ValueError("div_free applies to vector fields only")
            div = np.abs(fo.kx_full * c[0] + fo.ky_full * c[1])
            scale = max(np.abs(c).max() * fo.K, 1e-300)
            if div.max() > 1e-12 * scale:
                raise ValueError("vector field is not divergence free")
        c.flags.writeable = False
        self.grid = grid
        self.coeffs = c
        self.div_free = bool(div_free)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, grid: SpectralGrid, rank: str = "scalar") -> "SpectralField":
        shape = (grid.N, grid.N) if rank == "scalar" else (2, grid.N, grid.N)
        return cls(grid, np.zeros(shape, complex), div_free=rank != "scalar", _trusted=True)

    @classmethod
    def from_physical(cls, grid: SpectralGrid, values, *, div_free=False) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        F = sfft.fft2(values, axes=(-2, -1), norm="forward")
        return cls(grid, F * grid.fourier.band_full, div_free=div_free)

    @classmethod
    def from_half(cls, grid: SpectralGrid, H, *, div_free=False) -> "SpectralField":
        fo = grid.fourier
        return cls(grid, fo.full_from_half(np.asarray(H) * fo.bandf), div_free=div_free)

    @classmethod
    def from_coords(cls, grid: SpectralGrid, x) -> "SpectralField":
        return cls.from_half(grid, grid.fourier.coords_to_half(x))

    @classmethod
    def mode(cls, grid: SpectralGrid, k, amplitude: complex = 1.0) -> "SpectralField":
        """``amplitude * exp(i k.x) + c.c.``; amplitude 1/sqrt(2) gives unit L2 norm."""
        kx, ky = int(k[0]), int(k[1])
        if (kx, ky) == (0, 0) or max(abs(kx), abs(ky)) > grid.kmax:
            raise ValueError(f"mode {k} outside the retained band")
        c = np.zeros((grid.N, grid.N), complex)
        c[kx % grid.N, ky % grid.N] += amplitude
        c[-kx % grid.N, -ky % grid.N] += np.conj(amplitude)
        return cls(grid, c, _trusted=True)

    # -- views ----------------------------------------------------------------
    @property
    def rank(self) -> str:
        return "scalar" if self.coeffs.ndim == 2 else "vector"

    def physical(self) -> np.ndarray:
        return self.grid.fourier.phys(self.half())

    def half(self) -> np.ndarray:
        return self.grid.fourier.half_from_full(self.coeffs)

    def to_coords(self) -> np.ndarray:
        if self.rank != "scalar":
            raise ValueError("real coordinates are defined for scalar fields")
        return self.grid.fourier.half_to_coords(self.half())

    def norm(self, s=0.0) -> float:
        return sobolev_norm(self, s)

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: "SpectralField"):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid or other.coeffs.shape != self.coeffs.shape:
            raise GridMismatchError("fields live on different grids or ranks")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs,
                             div_free=self.div_free and other.div_free, _trusted=True)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs,
                             div_free=self.div_free and other.div_free, _trusted=True)

    def __mul__(self, a):
        if not np.isscalar(a) or np.iscomplexobj(a):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * float(a), div_free=self.div_free, _trusted=True)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"SpectralField(N={self.grid.N}, rank={self.rank}, L2={self.norm(0):.6g})"


def _same_grid(*fields: SpectralField):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid N={f.grid.N} differs from N={g.N}")


def sobolev_norm(f: SpectralField, ns) -> float:
    """Homogeneous norm ``(sum |k|^{2s} |fhat(k)|^2)^{1/2}`` (summed over components)."""
    s = _order(ns)
    w = f.grid.fourier.kabs_full ** (2.0 * s)
    val = float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))
    if not np.isfinite(val):
        raise NumericDomainError("non-finite Sobolev norm")
    return val


def sobolev_inner(f: SpectralField, g: SpectralField, ns) -> float:
    _same_grid(f, g)
    if f.coeffs.shape != g.coeffs.shape:
        raise GridMismatchError("rank mismatch")
    s = _order(ns)
    w = f.grid.fourier.kabs_full ** (2.0 * s)
    return float(np.sum(w * (np.conj(f.coeffs) * g.coeffs).real))


def apply_lambda(f: SpectralField, s: float) -> SpectralField:
    """Fourier multiplier |k|^s."""
    s = float(s)
    if not np.isfinite(s):
        raise NumericDomainError("non-finite multiplier order")
    if s == 0.0:
        return f
    return SpectralField(f.grid, f.coeffs * f.grid.fourier.kabs_full**s, div_free=f.div_free,
                         _trusted=True)


def heat_multiplier(f: SpectralField, c: float, t: float) -> SpectralField:
    """Exact heat semigroup factor ``exp(-c |k|^2 t)``."""
    if not (np.isfinite(c) and np.isfinite(t)) or c < 0 or t < 0:
        raise ValueError("heat_multiplier needs c >= 0 and t >= 0 (no backward heat flow)")
    fo = f.grid.fourier
    ksq = fo.kabs_full**2
    return SpectralField(f.grid, f.coeffs * np.exp(-c * t * ksq), div_free=f.div_free,
                         _trusted=True)


def advect(u: SpectralField, f: SpectralField) -> SpectralField:
    """Dealiased pseudospectral ``u . grad f`` for a scalar ``f``."""
    _same_grid(u, f)
    if u.rank != "vector" or f.rank != "scalar":
        raise ValueError("advect expects a vector velocity and a scalar field")
    fo = u.grid.fourier
    out = fo.advect(fo.phys(u.half()), f.half())
    return SpectralField.from_half(u.grid, out)


def curl(u: SpectralField) -> SpectralField:
    fo = u.grid.fourier
    c = 1j * fo.kx_full * u.coeffs[1] - 1j * fo.ky_full * u.coeffs[0]
    return SpectralField(u.grid, c, _trusted=True)


def biot_savart(w: SpectralField) -> SpectralField:
    """Divergence-free velocity with vorticity ``w``: ``uhat = -i k_perp what / |k|^2``."""
    if w.rank != "scalar":
        raise ValueError("biot_savart expects a scalar vorticity")
    fo = w.grid.fourier
    inv = np.where(fo.band_full, 1.0 / fo.kabs_full**2, 0.0)
    c = np.stack([1j * fo.ky_full * inv * w.coeffs, -1j * fo.kx_full * inv * w.coeffs])
    return SpectralField(w.grid, c, div_free=True, _trusted=True)


def laplacian(f: SpectralField) -> SpectralField:
    fo = f.grid.fourier
    return SpectralField(f.grid, -(fo.kabs_full**2) * fo.band_full * f.coeffs,
                         div_free=f.div_free, _trusted=True)


# -- random fields -------------------------------------------------------------

def random_scalar(grid: SpectralGrid, rng: np.random.Generator, decay: float = 0.0) -> SpectralField:
    """Gaussian field with coefficient envelope |k|^{-decay}."""
    fo = grid.fourier
    z = rng.standard_normal((2, fo.nhp))
    z = (z[0] + 1j * z[1]) * fo.hp_kabs ** (-decay)
    H = np.zeros((grid.N, fo.Nh), complex)
    H[fo.hp_rows, fo.hp_cols] = z
    H[fo.hp_conj_rows, 0] = np.conj(z[fo.hp_conj_sel])
    return SpectralField.from_half(grid, H)


def random_velocity(grid: SpectralGrid, rng: np.random.Generator, decay: float = 0.0) -> SpectralField:
    """Divergence-free velocity whose vorticity has envelope |k|^{-decay}."""
    return biot_savart(random_scalar(grid, rng, decay))


# -- checkpoint format -----------------------------------------------------------

_MAGIC = b"LYNF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIB")


def save_field(path, f: SpectralField) -> None:
    """Write ``f`` in the LYNF binary format (see docs/formats.md)."""
    c = f.coeffs.reshape((-1, f.grid.N, f.grid.N))
    rank = c.shape[0]
    payload = np.empty(c.shape + (2,), dtype="<f8")
    payload[..., 0] = c.real
    payload[..., 1] = c.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, f.grid.N, rank))
        fh.write(payload.tobytes(order="C"))


def load_field(path, grid: Union[SpectralGrid, None] = None) -> SpectralField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("truncated checkpoint header")
    magic, version, N, rank = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError("not a LYNF checkpoint")
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if rank not in (1, 2):
        raise ValueError(f"bad rank {rank}")
    if grid is None:
        grid = SpectralGrid(N)
    elif grid.N != N:
        raise GridMismatchError(f"checkpoint has N={N}, grid has N={grid.N}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if vals.size != rank * N * N * 2:
        raise ValueError("checkpoint payload has the wrong length")
    vals = vals.reshape(rank, N, N, 2)
    c = vals[..., 0] + 1j * vals[..., 1]
    if rank == 1:
        c = c[0]
    return SpectralField(grid, c, div_free=False)
