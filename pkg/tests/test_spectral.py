import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyapnorm.errors import GridMismatchError, NumericDomainError
from lyapnorm.spectral import (SpectralField, SpectralGrid, advect, apply_lambda, biot_savart, curl,
                               heat_multiplier, laplacian, load_field, random_scalar, random_velocity,
                               save_field, sobolev_inner, sobolev_norm)

G16 = SpectralGrid(16)
G32 = SpectralGrid(32)


def _xy(grid):
    x = 2 * np.pi * np.arange(grid.N) / grid.N
    return np.meshgrid(x, x, indexing="ij")


def test_band_sizes():
    assert [SpectralGrid(N).kmax for N in (16, 32, 64, 128)] == [5, 10, 21, 42]
    # 2 * number of half-plane modes in the (2K+1)^2 - 1 band
    assert G16.dim == (11 * 11 - 1)
    assert G32.dim == 21 * 21 - 1


def test_grid_validation():
    with pytest.raises(ValueError):
        SpectralGrid(7)
    with pytest.raises(ValueError):
        SpectralGrid(32, dealias_fraction=0)


def test_unit_mode_norms():
    f = SpectralField.mode(G16, (1, 2), 1 / math.sqrt(2))
    assert f.norm(0) == pytest.approx(1.0, abs=1e-14)
    assert f.norm(1) == pytest.approx(math.sqrt(5), rel=1e-14)
    assert f.norm(-1) == pytest.approx(1 / math.sqrt(5), rel=1e-14)


def test_mode_outside_band_rejected():
    with pytest.raises(ValueError):
        SpectralField.mode(G16, (6, 0))
    with pytest.raises(ValueError):
        SpectralField.mode(G16, (0, 0))


def test_physical_roundtrip_and_mean_removal():
    X, Y = _xy(G16)
    f = SpectralField.from_physical(G16, 3.0 + np.sin(X) * np.cos(2 * Y))
    assert np.allclose(f.physical(), np.sin(X) * np.cos(2 * Y), atol=1e-13)
    assert f.coeffs[0, 0] == 0


def test_coords_isometry_and_roundtrip():
    rng = np.random.default_rng(0)
    f = random_scalar(G32, rng, decay=1.0)
    x = f.to_coords()
    assert x.shape == (G32.dim,)
    assert np.linalg.norm(x) == pytest.approx(f.norm(0), rel=1e-13)
    w = G32.fourier.coord_weights(1.5)
    assert np.linalg.norm(w * x) == pytest.approx(f.norm(1.5), rel=1e-13)
    g = SpectralField.from_coords(G32, x)
    assert np.abs(g.coeffs - f.coeffs).max() < 1e-15


def test_non_finite_rejected():
    c = np.zeros((16, 16), complex)
    c[1, 0] = np.nan
    with pytest.raises(NumericDomainError):
        SpectralField(G16, c)


def test_grid_mismatch():
    a = SpectralField.mode(G16, (1, 0))
    b = SpectralField.mode(G32, (1, 0))
    with pytest.raises(GridMismatchError):
        _ = a + b
    with pytest.raises(GridMismatchError):
        sobolev_inner(a, b, 0)


def test_fields_are_immutable():
    f = SpectralField.mode(G16, (1, 1))
    with pytest.raises(ValueError):
        f.coeffs[1, 1] = 3


@settings(max_examples=40, deadline=None)
@given(s=st.floats(-3, 3), t=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_lambda_group_law(s, t, seed):
    f = random_scalar(G16, np.random.default_rng(seed))
    a = apply_lambda(apply_lambda(f, s), t)
    b = apply_lambda(f, s + t)
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-12 * np.abs(b.coeffs).max()


@settings(max_examples=30, deadline=None)
@given(s=st.floats(-2, 2), seed=st.integers(0, 2**16))
def test_lambda_shifts_sobolev_order(s, seed):
    f = random_scalar(G16, np.random.default_rng(seed))
    assert sobolev_norm(apply_lambda(f, s), 0.3) == pytest.approx(sobolev_norm(f, 0.3 + s), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0, 2), t1=st.floats(0, 1), t2=st.floats(0, 1), seed=st.integers(0, 2**16))
def test_heat_semigroup(c, t1, t2, seed):
    f = random_scalar(G16, np.random.default_rng(seed))
    a = heat_multiplier(heat_multiplier(f, c, t1), c, t2)
    b = heat_multiplier(f, c, t1 + t2)
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-13 * max(np.abs(f.coeffs).max(), 1e-300)


def test_heat_rejects_backward_time():
    f = SpectralField.mode(G16, (1, 0))
    with pytest.raises(ValueError):
        heat_multiplier(f, 1.0, -0.1)
    with pytest.raises(ValueError):
        heat_multiplier(f, -1.0, 0.1)


def test_heat_on_mode_closed_form():
    f = SpectralField.mode(G16, (2, 1), 0.5)
    g = heat_multiplier(f, 0.3, 2.0)
    assert g.norm(0) == pytest.approx(f.norm(0) * math.exp(-0.3 * 5 * 2.0), rel=1e-14)


def test_biot_savart_closed_form_and_curl_inverse():
    X, Y = _xy(G16)
    w = SpectralField.from_physical(G16, np.sin(X))
    u = biot_savart(w)
    assert np.allclose(u.physical()[0], 0, atol=1e-14)
    assert np.allclose(u.physical()[1], -np.cos(X), atol=1e-14)
    rng = np.random.default_rng(3)
    w = random_scalar(G32, rng, decay=1)
    assert np.abs(curl(biot_savart(w)).coeffs - w.coeffs).max() < 1e-14


def test_random_velocity_divergence_free():
    u = random_velocity(G32, np.random.default_rng(1), decay=2)
    fo = G32.fourier
    assert np.abs(fo.kx_full * u.coeffs[0] + fo.ky_full * u.coeffs[1]).max() < 1e-13
    assert u.div_free


def test_advect_closed_form():
    X, Y = _xy(G16)
    u = SpectralField.from_physical(G16, np.stack([np.sin(Y), 0 * Y]), div_free=True)
    f = SpectralField.from_physical(G16, np.cos(2 * X + Y))
    g = advect(u, f)
    assert np.allclose(g.physical(), -2 * np.sin(Y) * np.sin(2 * X + Y), atol=1e-13)


def test_advection_is_skew():
    rng = np.random.default_rng(5)
    u = random_velocity(G32, rng, decay=2)
    f = random_scalar(G32, rng, decay=1)
    g = random_scalar(G32, rng, decay=1)
    a = sobolev_inner(advect(u, f), g, 0)
    b = sobolev_inner(f, advect(u, g), 0)
    assert a == pytest.approx(-b, abs=1e-13 * (abs(a) + 1))


def test_laplacian_is_minus_lambda_two():
    f = random_scalar(G16, np.random.default_rng(2))
    assert np.abs(laplacian(f).coeffs + apply_lambda(f, 2).coeffs).max() < 1e-12


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    f = random_scalar(G16, rng)
    u = random_velocity(G16, rng)
    save_field(tmp_path / "f.lynf", f)
    save_field(tmp_path / "u.lynf", u)
    assert np.array_equal(load_field(tmp_path / "f.lynf").coeffs, f.coeffs)
    assert np.array_equal(load_field(tmp_path / "u.lynf", G16).coeffs, u.coeffs)
    raw = (tmp_path / "f.lynf").read_bytes()
    assert raw[:4] == b"LYNF" and len(raw) == 13 + 16 * 16 * 16
    with pytest.raises(GridMismatchError):
        load_field(tmp_path / "f.lynf", G32)
    (tmp_path / "bad.lynf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_field(tmp_path / "bad.lynf")
    (tmp_path / "short.lynf").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_field(tmp_path / "short.lynf")
