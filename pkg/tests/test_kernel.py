import numpy as np
import pytest

from zoomctl import kernel
from zoomctl.codec import ClosedLoop
from zoomctl.kernel import STOP_CAP, STOP_RULE, LoopRunner, available_backends
from zoomctl.model import SystemModel
from zoomctl.noise import ScaledBG, sample

from conftest import reference_model, reference_params

needs_ext = pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")


def _state(r):
    return r.x.copy(), r.ist.copy(), r.fst.copy()


@needs_ext
@pytest.mark.parametrize("N", [4, 100, 1000])
def test_backends_bitwise_equal(N):
    m, p = reference_model(), reference_params(N)
    out = []
    for b in ("python", "cython"):
        r = LoopRunner(m, p, 123, backend=b, burn_in=7)
        r.run(max_T=150_000, stop_eps=1e-3, settle_T=50, check_stop=True)
        out.append(_state(r))
    for a, b in zip(*out):
        assert np.array_equal(a, b)


@needs_ext
def test_backends_equal_vector_system():
    from fractions import Fraction
    from zoomctl.model import SchemeParams
    A = np.array([[1.1, 0.2], [0.0, 0.9]])
    m = SystemModel(A, [[1.0, 0.5], [0.0, 2.0]], np.diag([1.0, 2.0]), ScaledBG(1.0, 2.0, n=2))
    p = SchemeParams(K=4, N=20, g=Fraction(5, 4), p=1, q_exp=4, L=4.0, beta=3.5, eps=1.0)
    out = []
    for b in ("python", "cython"):
        r = LoopRunner(m, p, 5, backend=b)
        r.run(max_T=50_000)
        out.append(_state(r))
    for a, b in zip(*out):
        assert np.array_equal(a, b)


def test_kernel_tracks_reference_loop():
    # The kernel steps the closed form A (e - U(e)) + w while the reference
    # loop runs A x + B u + w; rounding differences grow like ||A||^t, so the
    # comparison is over a horizon where they stay far below the tolerance.
    m, p = reference_model(), reference_params()
    W = sample(m.noise, np.random.default_rng(9), kernel.BLOCK)
    for T in (1, 2, 25, 60):
        r = LoopRunner(m, p, 9)
        r.run(max_T=T + 1)
        loop = ClosedLoop(m, p)
        xs = [0.0]
        loop.run(W[:T])
        xs += [rec.x[0] for rec in loop.records][1:] + [loop.x[0]]
        assert r.steps == T
        assert r.delta_exp == loop.enc.delta_exp
        assert r.x[0] == pytest.approx(loop.x[0], rel=1e-9, abs=1e-12)
        assert r.S == pytest.approx(np.mean(np.square(xs)), rel=1e-9)


def test_segmented_run_equals_single_run():
    m, p = reference_model(), reference_params()
    a = LoopRunner(m, p, 2)
    a.run(max_T=100_000)
    b = LoopRunner(m, p, 2)
    for T in (1, 10_000, 65_536, 65_537, 100_000):
        b.run(max_T=T)
    for u, v in zip(_state(a), _state(b)):
        assert np.array_equal(u, v)


def test_noise_block_size_irrelevant():
    m, p = reference_model(), reference_params()
    a = LoopRunner(m, p, 3, noise_block=1000)
    b = LoopRunner(m, p, 3)
    a.run(max_T=70_000)
    b.run(max_T=70_000)
    for u, v in zip(_state(a), _state(b)):
        assert np.array_equal(u, v)


def test_burn_in_and_counts():
    m, p = reference_model(), reference_params()
    r = LoopRunner(m, p, 0, burn_in=500)
    assert r.run(max_T=1000) == STOP_CAP
    assert r.n_avg == 1000
    assert r.steps == 1499
    assert r.fst[3] / r.n_avg == pytest.approx(r.S, rel=1e-9)


def test_stop_rule_fires():
    m, p = reference_model(), reference_params()
    r = LoopRunner(m, p, 0)
    assert r.run(max_T=10**7, stop_eps=1.0, settle_T=100, check_stop=True) == STOP_RULE
    assert r.ist[3] == 100


def test_backend_selection():
    assert "python" in available_backends()
    assert kernel.BACKEND in available_backends()
    with pytest.raises(ValueError):
        kernel.get_backend("fortran")


def test_wrong_x0_dimension():
    with pytest.raises(ValueError):
        LoopRunner(reference_model(), reference_params(), 0, x0=[1.0, 2.0])
