import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomctl.model import (
    JordanMode,
    PointInit,
    SchemeParams,
    SystemModel,
    capacity_bits,
    classical_optimum,
    infinity_norm,
    jordan_block,
    jordan_mode_norm,
    scalar_gap_lower_bound,
    similarity_scale,
    validate_scheme,
)
from zoomctl.noise import Gaussian, ScaledBG

from conftest import reference_model, reference_params


@pytest.mark.parametrize("M, want", [
    (np.eye(2), 1.0),
    ([[1.2]], 1.2),
    ([[1, -2], [3, 0.5]], 3.5),
])
def test_infinity_norm(M, want):
    assert infinity_norm(M) == want


def test_model_rejects_singular_B():
    with pytest.raises(ValueError, match="invertible"):
        SystemModel(np.eye(2), [[1, 2], [2, 4]], np.eye(2), Gaussian(np.eye(2)))


@pytest.mark.parametrize("Q", [[[1, 0], [0, -1]], [[1, 0], [0, 0]], [[1, 1], [0, 1]]])
def test_model_rejects_bad_Q(Q):
    with pytest.raises(ValueError, match="Q must be"):
        SystemModel(np.eye(2), np.eye(2), Q, Gaussian(np.eye(2)))


def test_model_noise_dimension():
    with pytest.raises(ValueError, match="noise dimension"):
        SystemModel(np.eye(2), np.eye(2), np.eye(2), ScaledBG(1.0, 2.0, n=1))


def test_model_default_init_and_gain():
    m = SystemModel([[2, 1], [0, 2]], np.eye(2), np.eye(2), Gaussian(np.eye(2)))
    assert m.init == PointInit((0.0, 0.0))
    np.testing.assert_array_equal(m.gain, [[2, 1], [0, 2]])


@pytest.mark.parametrize("mode, want", [
    (JordanMode(1.2, 1), 1.2),
    (JordanMode(2.0, 3), 3.0),
    (JordanMode(1 + 1j, 2, "complex"), 2.0),
    (JordanMode(1 - 2j, 4, "complex"), 4.0),
])
def test_jordan_mode_norm(mode, want):
    assert jordan_mode_norm(mode) == pytest.approx(want)


def test_complex_block_needs_even_size():
    with pytest.raises(ValueError):
        JordanMode(1 + 1j, 3, "complex")


def test_jordan_norm_matches_block_exhaustive():
    rng = np.random.default_rng(7)
    for _ in range(50):
        lam = float(rng.uniform(-3, 3))
        z = complex(*rng.uniform(-3, 3, 2))
        for size in range(1, 7):
            m = JordanMode(lam, size)
            assert jordan_mode_norm(m) == pytest.approx(infinity_norm(jordan_block(m)), abs=1e-12)
            if size % 2 == 0:
                c = JordanMode(z, size, "complex")
                assert jordan_mode_norm(c) == pytest.approx(infinity_norm(jordan_block(c)), abs=1e-12)


def test_similarity_scale_examples():
    np.testing.assert_allclose(similarity_scale(JordanMode(2.0, 2), 0.1), [[2, 0.1], [0, 2]])
    np.testing.assert_array_equal(similarity_scale(JordanMode(1.5, 1), 0.3), [[1.5]])
    assert abs(infinity_norm(similarity_scale(JordanMode(2.0, 3), 0.01)) - 2.01) < 1e-12
    with pytest.raises(NotImplementedError):
        similarity_scale(JordanMode(1 + 1j, 2, "complex"), 0.1)


@given(st.floats(-5, 5), st.integers(1, 6), st.floats(1e-3, 2.0))
def test_similarity_conjugation_reconstructs(lam, size, eps):
    J = jordan_block(JordanMode(lam, size))
    S = np.diag(eps ** np.arange(size))
    out = similarity_scale(JordanMode(lam, size), eps)
    np.testing.assert_allclose(S @ out @ np.linalg.inv(S), J, atol=1e-10)
    if size > 1:
        assert infinity_norm(out) == pytest.approx(abs(lam) + eps)


def test_scheme_params_exactness():
    p = reference_params()
    assert p.alpha == 0.75
    assert p.rho == pytest.approx((4 / 3) ** 3)
    assert (p.g ** -p.p) ** p.q_exp * (p.g ** p.q_exp) ** p.p == 1
    assert p.deltaN == pytest.approx(2 * 100 ** (-1 / 3))
    assert p.bin_size(-1) == 6.75
    assert p.as_dict()["g"] == "4/3"


@pytest.mark.parametrize("kw, msg", [
    (dict(K=3), "K must be even"),
    (dict(N=5), "N must be even"),
    (dict(g=Fraction(1)), "g must be > 1"),
    (dict(L=0.0), "L must be positive"),
])
def test_scheme_params_structural_errors(kw, msg):
    base = dict(K=2, N=4, g=Fraction(4, 3), p=1, q_exp=3, L=9.0, beta=3.95, eps=0.95)
    base.update(kw)
    with pytest.raises(ValueError, match=msg):
        SchemeParams(**base)


def test_g_float_rejected():
    with pytest.raises(TypeError):
        SchemeParams(K=2, N=4, g=1.3333, p=1, q_exp=3, L=9.0, beta=3.95, eps=0.95)


def test_validate_reference_passes():
    rep = validate_scheme(reference_params(), reference_model())
    assert rep.ok, rep.render()


def test_validate_reference_all_even_N():
    m = reference_model()
    p = reference_params()
    for N in range(2, 1001, 2):
        assert validate_scheme(p.with_N(N), m).ok, N


def test_validate_alpha_too_small():
    p = SchemeParams(K=2, N=100, g=Fraction(2), p=1, q_exp=3, L=9.0, beta=3.95, eps=0.95)
    rep = validate_scheme(p, reference_model())
    assert not rep["alpha_range"].passed
    assert "0.6" in rep["alpha_range"].detail


def test_validate_small_L_fails_min_bin_size():
    p = SchemeParams(K=2, N=2, g=Fraction(4, 3), p=1, q_exp=3, L=0.1, beta=3.95, eps=0.95)
    rep = validate_scheme(p, reference_model())
    assert [c.name for c in rep.failures] == ["min_bin_size"]
    # alpha L = 0.075 vs 1.2 / (1.5 - 1.2) * 2 * 2^(-1/3)
    assert 0.075 < 1.2 / 0.3 * 2 * 2 ** (-1 / 3)


def test_validate_collects_all_failures():
    p = SchemeParams(K=2, N=2, g=Fraction(2), p=1, q_exp=1, L=0.1, beta=1.5, eps=0.95)
    rep = validate_scheme(p, reference_model())
    assert len(rep.failures) >= 4
    assert "violated" in rep.render()


def test_validate_infinite_noise_moment():
    p = SchemeParams(K=2, N=100, g=Fraction(4, 3), p=1, q_exp=3, L=9.0, beta=4.5, eps=0.95)
    assert not validate_scheme(p, reference_model())["noise_moment"].passed


@pytest.mark.parametrize("K, N, n, want", [
    (2, 100, 1, math.log2(3) + math.log2(101)),
    (2, 2, 1, 2 * math.log2(3)),
    (2, 4, 2, math.log2(5) + math.log2(25)),
])
def test_capacity_bits(K, N, n, want):
    assert capacity_bits(K, N, n) == pytest.approx(want, abs=1e-12)


def test_capacity_value():
    # log2(3) + log2(101) = 8.24317..., not 8.2421
    assert capacity_bits(2, 100, 1) == pytest.approx(8.24317398, abs=1e-8)


@given(st.integers(1, 20), st.integers(1, 200), st.integers(1, 4))
def test_capacity_monotone(k, m, n):
    K, N = 2 * k, 2 * m
    c = capacity_bits(K, N, n)
    assert capacity_bits(K + 2, N, n) > c
    assert capacity_bits(K, N + 2, n) > c
    assert capacity_bits(K, N, n + 1) > c


def test_classical_optimum():
    assert classical_optimum([[1.0]], [[16 / 3]]) == pytest.approx(16 / 3)
    assert classical_optimum(np.eye(2), np.eye(2)) == 2.0
    assert classical_optimum(np.diag([2, 3]), np.diag([0.5, 0.5])) == 2.5
    assert reference_model().optimum() == pytest.approx(16 / 3, rel=1e-12)
    with pytest.raises(ValueError):
        classical_optimum(np.eye(2), np.eye(3))


def test_scalar_gap_lower_bound():
    v = scalar_gap_lower_bound(1.2, 16 / 3, 8.2421)
    assert v == pytest.approx(1.44 * 16 / 3 / (2 ** 16.4842 - 1.44), rel=1e-12)
    assert v == pytest.approx(8.38e-5, rel=2e-3)
    assert scalar_gap_lower_bound(1.0, 1.0, 1.0) == pytest.approx(1 / 3)
    assert scalar_gap_lower_bound(2.0, 1.0, 0.5) == math.inf


def test_digest_stable_and_sensitive():
    m = reference_model()
    p = reference_params()
    assert p.digest(m) == reference_params().digest(reference_model())
    assert p.digest(m) != p.with_N(102).digest(m)
    assert len(p.digest(m)) == 32
