import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from lyapnorm.errors import RankError, SplittingError
from lyapnorm.geometry import (AmbientSpace, FiniteNorm, Subspace, alpha, angle_sin, bounded_complement,
                               busemann_det, hausdorff_distance, log_busemann_det, min_norm, oblique_projector,
                               operator_norm_finite, quotient_step, simultaneous_complement, sin_angle_min)

from oracles import l1_operator_norm_vertices, pixel_area, sampled_ratio_max

N6 = 6
K6 = np.arange(1, N6 + 1, dtype=float)
L2 = FiniteNorm.quadratic(np.ones(N6), "L2")
H1 = FiniteNorm.quadratic(K6, "H1")
EUC3 = FiniteNorm.quadratic(np.ones(3))


def _rand_sub(rng, n, k):
    return Subspace(rng.standard_normal((n, k)))


# -- types -------------------------------------------------------------------------

def test_type_validation():
    with pytest.raises(ValueError):
        FiniteNorm.quadratic([1.0, 0.0])
    with pytest.raises(ValueError):
        FiniteNorm.lp(0.5, [1.0])
    with pytest.raises(RankError):
        Subspace(np.array([[1.0, 2.0], [2.0, 4.0], [0, 0]]))
    with pytest.raises(ValueError):
        Subspace(np.ones((2, 3)))
    with pytest.raises(ValueError):
        AmbientSpace(3, (L2,))
    amb = AmbientSpace(N6, (L2, H1))
    with pytest.raises(ValueError):
        Subspace(np.ones((3, 1)), amb)


# -- alpha ---------------------------------------------------------------------------

def test_alpha_on_axis_and_equal_norms():
    rng = np.random.default_rng(0)
    for i in range(N6):
        assert alpha(Subspace(np.eye(N6)[:, i]), H1, L2) == pytest.approx(K6[i])
    assert alpha(_rand_sub(rng, N6, 3), H1, H1) == pytest.approx(1.0)


def test_alpha_matches_sphere_sampling():
    rng = np.random.default_rng(1)
    E = _rand_sub(rng, N6, 2)
    ref = sampled_ratio_max(E.basis, H1.weights, L2.weights, samples=100_000)
    assert alpha(E, H1, L2) == pytest.approx(ref, rel=1e-3)
    assert alpha(E, H1, L2) >= ref


def test_alpha_lp_is_flagged_approximate():
    rng = np.random.default_rng(2)
    E = _rand_sub(rng, N6, 2)
    V, B = FiniteNorm.lp(1.5, K6), FiniteNorm.lp(1.5, np.ones(N6))
    a = alpha(E, V, B)
    assert a.approximate
    C = rng.standard_normal((2, 20000))
    X = E.basis @ C
    sampled = np.max(V(X) / B(X))
    assert sampled <= a + 1e-9 and a <= sampled * (1 + 1e-3)


# -- Hausdorff distance -------------------------------------------------------------

def test_hausdorff_identity_and_orthogonal_lines():
    rng = np.random.default_rng(3)
    E = _rand_sub(rng, N6, 2)
    assert hausdorff_distance(E, E, H1) == pytest.approx(0.0, abs=1e-7)
    e, f = np.array([1.0, 0]), np.array([0, 1.0])
    oracle = min(np.linalg.norm(e - s * f) for s in (1, -1))
    eu = FiniteNorm.quadratic(np.ones(2))
    assert hausdorff_distance(Subspace(e), Subspace(f), eu) == pytest.approx(oracle)
    assert oracle == pytest.approx(math.sqrt(2))


def test_hausdorff_lp_brackets_quadratic_value():
    rng = np.random.default_rng(4)
    E, F = _rand_sub(rng, 4, 1), _rand_sub(rng, 4, 1)
    lp2 = FiniteNorm.lp(2.0 - 1e-12, np.ones(4))  # sampling path, numerically Euclidean
    d = hausdorff_distance(E, F, lp2)
    exact = hausdorff_distance(E, F, FiniteNorm.quadratic(np.ones(4)))
    lo, hi = d.bracket
    assert lo - 1e-6 <= exact <= hi + 1e-6


def test_distance_comparison_between_norms():
    rng = np.random.default_rng(5)
    for _ in range(200):
        E = _rand_sub(rng, N6, 2)
        F = Subspace(E.basis + 0.3 * rng.standard_normal((N6, 2)))
        lhs = hausdorff_distance(E, F, L2)
        rhs = 2 * max(alpha(E, H1, L2), alpha(F, H1, L2)) * hausdorff_distance(E, F, H1)
        assert lhs <= rhs * (1 + 1e-12)


def test_alpha_upper_semicontinuity():
    rng = np.random.default_rng(6)
    eps = 0.1
    for _ in range(20):
        E0 = _rand_sub(rng, N6, 2)
        a0 = alpha(E0, H1, L2)
        delta = 0.99 * eps / (a0 * (a0 + eps))
        for scale in (1e-3, 1e-2, 3e-2):
            E = Subspace(E0.basis + scale * rng.standard_normal((N6, 2)))
            if hausdorff_distance(E, E0, H1) <= delta:
                assert alpha(E, H1, L2) <= a0 + eps


# -- angles --------------------------------------------------------------------------

def test_angle_trivial_cases():
    F = Subspace(np.eye(3)[:, :2])
    assert angle_sin(np.array([1.0, 2.0, 0]), F, EUC3) == pytest.approx(0.0, abs=1e-15)
    assert angle_sin(np.array([0, 0, 3.0]), F, EUC3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        angle_sin(np.zeros(3), F, EUC3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_angle_matches_direct_minimization(seed):
    rng = np.random.default_rng(seed)
    F = _rand_sub(rng, N6, 3)
    v = rng.standard_normal(N6)
    nv = np.linalg.norm(H1.weights * v)
    res = optimize.minimize(lambda c: np.linalg.norm(H1.weights * (v - F.basis @ c)) ** 2, np.zeros(3),
                            method="BFGS", options={"gtol": 1e-12})
    assert angle_sin(v, F, H1) == pytest.approx(math.sqrt(res.fun) / nv, abs=1e-6)


# -- determinants and minimum norms ---------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.1, 3.0), k=st.integers(1, 4))
def test_det_identity_and_homogeneity(seed, c, k):
    rng = np.random.default_rng(seed)
    E = _rand_sub(rng, N6, k)
    assert busemann_det(np.eye(N6), E, H1) == pytest.approx(1.0)
    assert busemann_det(c * np.eye(N6), E, H1) == pytest.approx(c**k, rel=1e-10)


def test_det_diagonal_against_pixel_count():
    A = np.diag([2.0, 3.0])
    E = Subspace(np.eye(2))
    eu = FiniteNorm.quadratic(np.ones(2))
    assert busemann_det(A, E, eu) == pytest.approx(6.0)
    assert pixel_area(A, res=800) == pytest.approx(6.0, rel=1e-2)


def test_det_lp_identity_and_scaling():
    E = Subspace(np.random.default_rng(7).standard_normal((3, 2)))
    l1 = FiniteNorm.lp(1.0, np.array([1.0, 2.0, 3.0]))
    d1 = busemann_det(np.eye(3), E, l1)
    assert d1 == pytest.approx(1.0, abs=4 * d1.error + 1e-12)
    d2 = busemann_det(2 * np.eye(3), E, l1)
    assert d2 == pytest.approx(4.0, abs=4 * d2.error)


def test_det_singular_is_zero():
    A = np.diag([1.0, 1.0, 0.0])
    assert busemann_det(A, Subspace(np.eye(3)), EUC3) == 0.0
    assert log_busemann_det(A, Subspace(np.eye(3)), EUC3) == -math.inf


def test_min_norm_examples():
    eu = FiniteNorm.quadratic(np.ones(2))
    assert min_norm(np.eye(2), Subspace(np.eye(2)), eu) == pytest.approx(1.0)
    assert min_norm(np.diag([2.0, 0.5]), Subspace(np.eye(2)), eu) == pytest.approx(0.5)
    rng = np.random.default_rng(8)
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        assert min_norm(A, Subspace(np.eye(3)), EUC3) == pytest.approx(1 / np.linalg.norm(np.linalg.inv(A), 2))


def test_det_multiplicativity_and_sandwich():
    rng = np.random.default_rng(9)
    for _ in range(100):
        k = rng.integers(1, 4)
        A1, A2 = rng.standard_normal((N6, N6)), rng.standard_normal((N6, N6))
        E = _rand_sub(rng, N6, k)
        lhs = log_busemann_det(A1 @ A2, E, H1)
        rhs = log_busemann_det(A1, Subspace(A2 @ E.basis), H1) + log_busemann_det(A2, E, H1)
        assert math.exp(lhs - rhs) == pytest.approx(1.0, rel=1e-10)
        d = busemann_det(A1, E, H1)
        m = min_norm(A1, E, H1)
        op = operator_norm_finite(A1, H1)
        assert m**k * (1 - 1e-12) <= d <= op**k * (1 + 1e-12)


def test_det_two_norm_comparison():
    rng = np.random.default_rng(10)
    for _ in range(500):
        k = int(rng.integers(1, 4))
        A = rng.standard_normal((N6, N6))
        E = _rand_sub(rng, N6, k)
        dB, dV = busemann_det(A, E, L2), busemann_det(A, E, H1)
        aE, aAE = alpha(E, H1, L2), alpha(Subspace(A @ E.basis), H1, L2)
        assert dB <= aE**k * dV * (1 + 1e-10)
        assert dV <= aAE**k * dB * (1 + 1e-10)


# -- projectors and complements -------------------------------------------------------

def test_orthogonal_projector():
    rng = np.random.default_rng(11)
    F = _rand_sub(rng, N6, 4)
    c = bounded_complement(F, H1)
    P = oblique_projector(c.subspace, F, H1)
    assert P.norm == pytest.approx(1.0)
    assert c.certified and c.projector_norm <= math.sqrt(2)


def test_projector_residuals_and_angle_bound():
    rng = np.random.default_rng(12)
    for _ in range(20):
        E, F = _rand_sub(rng, N6, 2), _rand_sub(rng, N6, 4)
        P = oblique_projector(E, F, H1).matrix
        assert np.abs(P @ P - P).max() < 1e-10 * max(1, np.abs(P).max())
        assert np.abs(P @ F.basis).max() < 1e-10 * max(1, np.abs(P).max())
        assert np.abs(P @ E.basis - E.basis).max() < 1e-10 * max(1, np.abs(P).max())
    E, F = _rand_sub(rng, N6, 2), _rand_sub(rng, N6, 4)
    P = oblique_projector(E, F, H1).matrix
    for _ in range(500):
        v = rng.standard_normal(N6)
        assert H1(P @ v) >= angle_sin(v, F, H1) * H1(v) * (1 - 1e-12)


def test_projector_rejects_non_complements():
    E = Subspace(np.eye(3)[:, :1])
    with pytest.raises(SplittingError):
        oblique_projector(E, Subspace(np.eye(3)[:, :2]), EUC3)
    with pytest.raises(SplittingError):
        oblique_projector(E, Subspace(np.eye(3)[:, 1:2]), EUC3)


@pytest.mark.parametrize("p", [2.0, 1.0, 3.0])
def test_complement_constant(p):
    rng = np.random.default_rng(13)
    w = np.linspace(1, 2, 5)
    nm = FiniteNorm(w, p)
    for k in (1, 2, 3):
        F = _rand_sub(rng, 5, 5 - k)
        c = bounded_complement(F, nm, rng)
        assert c.projector_norm <= 3 * math.sqrt(k) + 2
        C = np.concatenate([c.subspace.basis, F.basis], axis=1)
        assert np.linalg.matrix_rank(C) == 5


def test_l1_complement_certified_by_vertex_enumeration():
    rng = np.random.default_rng(14)
    l1 = FiniteNorm.lp(1.0, np.ones(3))
    for _ in range(10):
        F = _rand_sub(rng, 3, 2)
        c = bounded_complement(F, l1, rng)
        P = oblique_projector(c.subspace, F, l1).matrix
        measured = l1_operator_norm_vertices(P, np.ones(3))
        assert c.certified and measured <= 2 + 1e-12
        assert measured == pytest.approx(c.projector_norm)


def test_simultaneous_complement():
    rng = np.random.default_rng(15)
    eu4 = FiniteNorm.quadratic(np.ones(4))
    Fs = [_rand_sub(rng, 4, 3) for _ in range(2)]
    sc = simultaneous_complement(Fs, eu4, rng)
    v = sc.subspace.basis[:, 0]
    for F in Fs:
        nrm = np.linalg.svd(F.basis, full_matrices=True)[0][:, -1]  # hyperplane normal
        sin = abs(v @ nrm) / np.linalg.norm(v)
        assert sin >= 0.1
        assert np.linalg.matrix_rank(np.concatenate([sc.subspace.basis, F.basis], axis=1)) == 4
    assert sc.certified and min(sc.sin_angles) >= 0.1
    one = simultaneous_complement(Fs[:1], eu4)
    assert one.projector_norms[0] == pytest.approx(1.0)


def test_simultaneous_complement_codim_two():
    rng = np.random.default_rng(16)
    Fs = [_rand_sub(rng, N6, 4) for _ in range(3)]
    sc = simultaneous_complement(Fs, H1, rng)
    assert sc.subspace.dim == 2 and sc.certified
    for F in Fs:
        assert np.linalg.matrix_rank(np.concatenate([sc.subspace.basis, F.basis], axis=1)) == N6
    assert sin_angle_min(sc.subspace, Fs[0], H1) == pytest.approx(sc.sin_angles[0])


# -- quotient cocycle ----------------------------------------------------------------

def test_quotient_block_triangular():
    rng = np.random.default_rng(17)
    A = rng.standard_normal((5, 5))
    A[:2, 2:] = 0  # span(e_2, e_3, e_4) is invariant
    E, F = Subspace(np.eye(5)[:, :2]), Subspace(np.eye(5)[:, 2:])
    Ahat = quotient_step(A, E, F, E, F_x=F)
    assert np.allclose(Ahat, A[:2, :2], atol=1e-14)


def _flag_cocycle(rng, n, k, steps):
    Cs = [rng.standard_normal((n, n)) for _ in range(steps + 1)]
    As = []
    for j in range(steps):
        L = rng.standard_normal((n, n))
        L[:k, k:] = 0  # keeps span(e_k..) invariant
        As.append(Cs[j + 1] @ L @ np.linalg.inv(Cs[j]))
    return Cs, As


def test_quotient_composition_matches_direct_product():
    rng = np.random.default_rng(18)
    n, k, steps = 5, 2, 12
    Cs, As = _flag_cocycle(rng, n, k, steps)
    E = [Subspace(C[:, :k]) for C in Cs]
    F = [Subspace(C[:, k:]) for C in Cs]
    prod = np.eye(k)
    for j in range(steps):
        prod = quotient_step(As[j], E[j], F[j + 1], E[j + 1], F_x=F[j]) @ prod
    An = np.eye(n)
    for A in As:
        An = A @ An
    # direct: coordinates of pi_{E_n // F_n} A^n e in the basis of E_n
    C = np.concatenate([E[-1].basis, F[-1].basis], axis=1)
    direct = np.linalg.solve(C, An @ E[0].basis)[:k]
    assert np.abs(prod - direct).max() <= 1e-8 * np.abs(direct).max()
    # determinant factorization through the projector
    eu = FiniteNorm.quadratic(np.ones(n))
    P = oblique_projector(E[-1], F[-1], eu).matrix
    lhs = log_busemann_det(P @ An, E[0], eu)
    rhs = log_busemann_det(P, Subspace(An @ E[0].basis), eu) + log_busemann_det(An, E[0], eu)
    assert lhs == pytest.approx(rhs, abs=1e-8 * abs(lhs) + 1e-10)


def test_quotient_checks_invariance_and_splitting():
    rng = np.random.default_rng(19)
    A = rng.standard_normal((4, 4))
    E, F = Subspace(np.eye(4)[:, :2]), Subspace(np.eye(4)[:, 2:])
    with pytest.raises(ValueError):
        quotient_step(A, E, F, E, F_x=F)
    with pytest.raises(SplittingError):
        quotient_step(A, E, F, Subspace(np.eye(4)[:, 2:3]))
