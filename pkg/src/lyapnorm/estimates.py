"""Refinement checks for the commutator and lower-order product estimates.

Products are evaluated exactly: band-limited inputs on an ``N`` grid are
embedded in a ``2N`` grid, where the quadratic products carry no aliasing.
Test fields come from fixed spectral envelopes drawn once on a reference grid
and truncated, so refining ``N`` adds modes without changing the coarse ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .rng import stream_rng
from .spectral import SpectralGrid

U_DECAY = 6.5    # |u_hat| ~ |k|^-6.5
F_DECAY = 4.5    # |f_hat| ~ |k|^-4.5
REFERENCE_N = 128


def _envelope_coeffs(N, seed, member, kind, decay, ref_N=REFERENCE_N):
    """Full (N, N) spectrum of a real field whose modes are shared with the reference grid."""
    if N > ref_N:
        raise ValueError("grid finer than the reference grid")
    ref = SpectralGrid(ref_N).fourier
    fo = SpectralGrid(N).fourier
    rng = stream_rng(seed, "ensemble", member, {"u": 0, "f": 1}[kind])
    xi = rng.standard_normal((2, ref.nhp))
    zref = (xi[0] + 1j * xi[1]) / np.sqrt(2) * ref.hp_kabs ** (-decay)
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(ref.hp_k)}
    sel = np.array([index[(int(a), int(b))] for a, b in fo.hp_k])
    z = zref[sel]
    H = np.zeros((N, fo.Nh), complex)
    H[fo.hp_rows, fo.hp_cols] = z
    H[fo.hp_conj_rows, 0] = np.conj(z[fo.hp_conj_sel])
    return fo.full_from_half(H)


class _Exact:
    """Exact products of band-limited ``N``-grid fields on the ``2N`` grid."""

    def __init__(self, N):
        self.N, self.M = N, 2 * N
        k = np.rint(sfft.fftfreq(self.M, 1.0 / self.M))
        self.kx, self.ky = np.meshgrid(k, k, indexing="ij")
        self.ksq = self.kx**2 + self.ky**2
        self.kabs = np.sqrt(np.where(self.ksq > 0, self.ksq, 1.0))  # k = 0 masked below
        kn = np.rint(sfft.fftfreq(N, 1.0 / N)).astype(int)
        self.idx = kn % self.M

    def embed(self, F):
        G = np.zeros(F.shape[:-2] + (self.M, self.M), complex)
        G[..., self.idx[:, None], self.idx[None, :]] = F
        return G

    def lam(self, G, s):
        w = np.where(self.ksq > 0, self.kabs ** float(s), 0.0)
        return G * w

    def phys(self, G):
        return sfft.ifft2(G, norm="forward").real

    def spec(self, g):
        return sfft.fft2(g, norm="forward")

    def grad(self, G):
        return self.phys(np.stack([1j * self.kx * G, 1j * self.ky * G]))

    def dot_grad(self, U, G):
        """Spectrum of ``(u . grad) g`` for velocity spectrum U (2, M, M)."""
        u = self.phys(U)
        g = self.grad(G)
        return self.spec(u[0] * g[0] + u[1] * g[1])

    def norm(self, G, s=0.0):
        w = np.where(self.ksq > 0, self.kabs ** (2 * float(s)), 0.0)
        return float(np.sqrt(np.sum(w * np.abs(G) ** 2)))


def ensemble_member(N, seed, member):
    """Velocity (2, N, N) and scalar (N, N) full spectra of one ensemble member."""
    w = _envelope_coeffs(N, seed, member, "u", U_DECAY - 1.0)  # vorticity envelope
    fo = SpectralGrid(N).fourier
    kx, ky = fo.kx_full, fo.ky_full
    inv = np.where(fo.band_full, 1.0 / fo.kabs_full**2, 0.0)
    U = np.stack([1j * ky * w * inv, -1j * kx * w * inv])
    f = _envelope_coeffs(N, seed, member, "f", F_DECAY)
    return U, f


def commutator_ratio(ex: _Exact, U, f, s, gamma=2.5):
    """``||[Lambda^s, u.grad] f|| / (||u||_{H^gamma} ||f||_{H^s})``."""
    Ug, fg = ex.embed(U), ex.embed(f)
    c = ex.lam(ex.dot_grad(Ug, fg), s) - ex.dot_grad(Ug, ex.lam(fg, s))
    return ex.norm(c) / (np.hypot(ex.norm(Ug[0], gamma), ex.norm(Ug[1], gamma)) * ex.norm(fg, s))


def lower_order_ratios(ex: _Exact, U, f, s, gamma=2.5):
    """Ratios for ``Lambda^s (Lap u.grad) Lambda^-2 f`` and ``Lambda^{s-2} (Lap u.grad) f``
    against ``||u||_{H^{gamma+2}} ||f||_{H^s}``."""
    Ug, fg = ex.embed(U), ex.embed(f)
    LU = -ex.ksq * Ug
    den = np.hypot(ex.norm(Ug[0], gamma + 2), ex.norm(Ug[1], gamma + 2)) * ex.norm(fg, s)
    a = ex.lam(ex.dot_grad(LU, ex.lam(fg, -2.0)), s)
    b = ex.lam(ex.dot_grad(LU, fg), s - 2.0)
    return ex.norm(a) / den, ex.norm(b) / den


QUANTITIES = ("commutator", "lower_order_a", "lower_order_b")


@dataclass
class RefinementRow:
    quantity: str
    s: float
    N: int
    max_ratio: float
    mean_ratio: float
    members: int


def estimate_ensemble(Ns=(32, 64, 128), s_list=(0.5, 1.0, 2.0), members=32, seed=0, gamma=2.5):
    """Max and mean normalized ratios per (quantity, s, N)."""
    rows = []
    for N in Ns:
        ex = _Exact(N)
        vals = {(q, s): [] for q in QUANTITIES for s in s_list}
        for m in range(members):
            U, f = ensemble_member(N, seed, m)
            for s in s_list:
                vals[("commutator", s)].append(commutator_ratio(ex, U, f, s, gamma))
                a, b = lower_order_ratios(ex, U, f, s, gamma)
                vals[("lower_order_a", s)].append(a)
                vals[("lower_order_b", s)].append(b)
        for (q, s), v in vals.items():
            rows.append(RefinementRow(q, float(s), N, float(np.max(v)), float(np.mean(v)), members))
    return rows


def refinement_growth(rows, limit=0.05):
    """Relative growth of the ensemble max between consecutive grids.

    Returns a list of dicts with ``quantity, s, N_coarse, N_fine, growth, ok``.
    """
    by = {}
    for r in rows:
        by.setdefault((r.quantity, r.s), []).append(r)
    out = []
    for (q, s), rs in sorted(by.items()):
        rs.sort(key=lambda r: r.N)
        for a, b in zip(rs, rs[1:]):
            g = b.max_ratio / a.max_ratio - 1.0
            out.append({"quantity": q, "s": s, "N_coarse": a.N, "N_fine": b.N,
                        "growth": g, "ok": bool(g < limit)})
    return out
