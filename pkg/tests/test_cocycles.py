import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from lyapnorm.cocycles import (AdCocycle, LnsCocycle, ad_adjoint_solve_unit, ad_solve_unit, lns_adjoint_solve_unit,
                               lns_solve_unit, operator_norm)
from lyapnorm.errors import CFLError
from lyapnorm.flows import ShearRenewalFlow, TimePeriodicFlow, ZeroFlow, kolmogorov_shear
from lyapnorm.spectral import SpectralField, SpectralGrid, random_scalar

from oracles import band_modes, heat_cross_norm, shear_generator, top_real_eigenvalue

G16 = SpectralGrid(16)


def _oracle_apply(G, N, f: SpectralField):
    """Propagate ``f`` with ``expm(G)`` in the complex mode basis."""
    modes, _ = band_modes(N)
    c = np.array([f.coeffs[kx % N, ky % N] for kx, ky in modes])
    out = expm(G) @ c
    full = np.zeros((N, N), complex)
    for (kx, ky), v in zip(modes, out):
        full[kx % N, ky % N] = v
    return full


def _sector_log_growth(c, flow_state, kx_abs):
    fo = c.fo
    sel = np.abs(fo.hp_k[:, 0]) == kx_abs
    idx = np.concatenate([np.nonzero(sel)[0], fo.nhp + np.nonzero(sel)[0]])
    um, _ = c.unit_map(flow_state)
    D = um.dense()
    # the sector is invariant under shear flow
    off = np.delete(D[:, idx], idx, axis=0)
    assert np.abs(off).max() < 1e-12
    return float(np.max(np.log(np.abs(np.linalg.eigvals(D[np.ix_(idx, idx)])))))


def _sector_generator(N, kappa, kx, linearized):
    G = shear_generator(N, kappa, linearized=linearized)
    modes, _ = band_modes(N)
    sel = [i for i, m in enumerate(modes) if m[0] == kx]
    return G[np.ix_(sel, sel)]


def test_heat_is_exact_on_zero_flow():
    m = ZeroFlow(G16)
    c = AdCocycle(0.3, G16, m)
    f = random_scalar(G16, np.random.default_rng(0))
    g, _ = ad_solve_unit(c, m.initial_state(0), f)
    fo = G16.fourier
    expect = f.coeffs * np.exp(-0.3 * (fo.kx_full**2 + fo.ky_full**2))
    assert np.abs(g.coeffs - expect).max() < 1e-14


def test_advection_diffusion_matches_matrix_exponential():
    m = kolmogorov_shear(G16)
    c = AdCocycle(0.05, G16, m)
    f = random_scalar(G16, np.random.default_rng(1), decay=1)
    g, _ = ad_solve_unit(c, m.initial_state(0), f)
    ref = _oracle_apply(shear_generator(16, 0.05), 16, f)
    assert np.abs(g.coeffs - ref).max() < 1e-5 * np.abs(ref).max()


def test_linearized_nse_matches_matrix_exponential():
    m = kolmogorov_shear(G16)
    c = LnsCocycle(0.05, G16, m)
    f = random_scalar(G16, np.random.default_rng(2), decay=1)
    g, _ = lns_solve_unit(c, m.initial_state(0), f)
    ref = _oracle_apply(shear_generator(16, 0.05, linearized=True), 16, f)
    assert np.abs(g.coeffs - ref).max() < 1e-5 * np.abs(ref).max()


def test_shear_sector_growth_matches_generator_spectrum():
    m = kolmogorov_shear(G16)
    ad = AdCocycle(0.05, G16, m)
    got = _sector_log_growth(ad, m.initial_state(0), 1)
    assert got == pytest.approx(top_real_eigenvalue(_sector_generator(16, 0.05, 1, False)), abs=1e-3)
    # kx = +-1 is degenerate for the linearized equation (the sin y mode is steady), so use kx = +-2
    lns = LnsCocycle(0.05, G16, m)
    got = _sector_log_growth(lns, m.initial_state(0), 2)
    assert got == pytest.approx(top_real_eigenvalue(_sector_generator(16, 0.05, 2, True)), abs=1e-3)


@pytest.mark.parametrize("cls", [AdCocycle, LnsCocycle])
def test_discrete_duality(cls):
    m = TimePeriodicFlow(G16, amplitude=1.0, period=1.0)
    c = cls(0.05, G16, m, dt=1 / 64)
    rng = np.random.default_rng(3)
    f, g = random_scalar(G16, rng), random_scalar(G16, rng)
    Sf, _, um = c.solve_unit(m.initial_state(5), f, record=True)
    adj = ad_adjoint_solve_unit if cls is AdCocycle else lns_adjoint_solve_unit
    Sg = adj(c, um, g)
    a = np.dot(Sf.to_coords(), g.to_coords())
    b = np.dot(f.to_coords(), Sg.to_coords())
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)
    with pytest.raises(ValueError):
        adj(c, None, g)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_linearity(a, b, seed):
    m = TimePeriodicFlow(G16, period=2.0)
    c = AdCocycle(0.1, G16, m, dt=1 / 32)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((c.dim, 2))
    fs = m.initial_state(seed)
    Y, _ = c.advance(fs, X)
    Z, _ = c.advance(fs, X @ np.array([a, b]))
    assert np.abs(Z - Y @ np.array([a, b])).max() <= 1e-12 * (1 + np.abs(Z).max())


@pytest.mark.parametrize("cls", [AdCocycle, LnsCocycle])
def test_segment_propagators_match_direct_stepping(cls):
    m = ShearRenewalFlow(G16, amplitude=1.0, period=1.0)
    fast = cls(0.05, G16, m, dt=1 / 64)
    slow = cls(0.05, G16, m, dt=1 / 64, use_segments=False)
    X = np.random.default_rng(4).standard_normal((fast.dim, 3))
    fs = m.advance(m.initial_state(2), 0.25)
    A, f1 = fast.advance(fs, X)
    B, f2 = slow.advance(fs, X)
    assert f1.t == f2.t == pytest.approx(1.25)
    assert np.abs(A - B).max() < 1e-11 * np.abs(B).max()


def test_operator_norm_heat_cross_norms():
    m = ZeroFlow(G16)
    um, _ = AdCocycle(0.1, G16, m).unit_map(m.initial_state(0))
    for s_in, s_out in [(0, 0), (0, 1), (0, 2), (-1, 0), (1, 3)]:
        est = operator_norm(um, s_in, s_out, iters=200, tol=1e-12)
        assert est.value == pytest.approx(heat_cross_norm(16, 0.1, s_in, s_out), rel=1e-6)


def test_operator_norm_matches_dense_svd():
    m = kolmogorov_shear(G16)
    c = AdCocycle(0.05, G16, m)
    um, _ = c.unit_map(m.initial_state(0))
    D = um.dense()
    fo = G16.fourier
    for s_in, s_out in [(0, 0), (0, 1), (-1, 1)]:
        M = fo.coord_weights(s_out)[:, None] * D * fo.coord_weights(-s_in)[None, :]
        est = operator_norm(um, s_in, s_out, iters=300, tol=1e-13)
        assert est.converged
        assert est.value == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)
    with pytest.raises(ValueError):
        operator_norm(um, 0, 0, iters=10)


@pytest.mark.parametrize("cls", [AdCocycle, LnsCocycle])
def test_nonpositive_dissipation_rejected(cls):
    m = ZeroFlow(G16)
    for bad in (0.0, -0.1, float("nan")):
        with pytest.raises(ValueError, match="compact"):
            cls(bad, G16, m)
    with pytest.raises(ValueError, match="floor"):
        cls(1e-6, G16, m)


def test_grid_and_dt_validation():
    with pytest.raises(ValueError):
        AdCocycle(0.1, SpectralGrid(32), ZeroFlow(G16))
    with pytest.raises(ValueError):
        AdCocycle(0.1, G16, ZeroFlow(G16), dt=0.3)


def test_cfl_violation_raises():
    g = SpectralGrid(32)
    m = kolmogorov_shear(g, amplitude=50.0)
    c = AdCocycle(0.1, g, m, dt=1 / 16)
    with pytest.raises(CFLError) as ei:
        c.advance(m.initial_state(0), np.ones((c.dim, 1)))
    assert ei.value.cfl > 0.5


def test_dissipation_bound_in_l2():
    # ||S||_{L2} <= exp(-kappa) for any divergence-free velocity
    m = TimePeriodicFlow(G16, amplitude=2.0)
    c = AdCocycle(0.2, G16, m, dt=1 / 64)
    um, _ = c.unit_map(m.initial_state(1))
    assert np.linalg.norm(um.dense(), 2) <= math.exp(-0.2) * (1 + 1e-10)


def test_operator_norm_random_frozen_flow():
    from lyapnorm.flows import SteadyFlow
    from lyapnorm.spectral import random_velocity
    u = random_velocity(G16, np.random.default_rng(11), decay=2)
    m = SteadyFlow(u * (1.0 / u.norm(0)))
    for cls in (AdCocycle, LnsCocycle):
        um, _ = cls(0.05, G16, m).unit_map(m.initial_state(0))
        D = um.dense()
        est = operator_norm(um, 0, 1, iters=300, tol=1e-13)
        w = G16.fourier.coord_weights(1)
        assert est.value == pytest.approx(np.linalg.norm(w[:, None] * D, 2), rel=1e-6)


def test_energy_decrement_per_substep_converges():
    from lyapnorm.spectral import random_velocity
    u = random_velocity(G16, np.random.default_rng(12), decay=2)
    m = TimePeriodicFlow(G16)
    f = random_scalar(G16, np.random.default_rng(13), decay=1.5)
    fo = G16.fourier
    F = f.half()
    e0 = f.norm(0) ** 2
    errs = []
    for dt in (1 / 64, 1 / 128, 1 / 256):
        c = AdCocycle(0.1, G16, m, dt=dt)
        F1 = c._substep(F, c._snapshot(u.half()))
        g = SpectralField.from_half(G16, F1)
        dec = e0 - g.norm(0) ** 2
        assert dec >= 0
        errs.append(abs(dec / (2 * 0.1 * f.norm(1) ** 2 * dt) - 1))
    assert errs[-1] < 0.05 and errs[-1] < errs[0]
