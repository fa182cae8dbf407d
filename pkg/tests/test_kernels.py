import math
import os
import subprocess
import sys

import numpy as np
import pytest

from randwave import _kernels as kern
from randwave.spectral import Lattice

needs_numba = pytest.mark.skipif(not kern.numba_kernels, reason="numba backend unavailable")


@pytest.fixture
def data():
    rng = np.random.default_rng(7)
    lat = Lattice.ball(3)
    m = len(lat)
    return rng, lat, m, rng.standard_normal((8, 8, 8))


@needs_numba
@pytest.mark.parametrize("p", [2.0, 4.0, 6.0, 3.0])
def test_power_mean_backends_agree(data, p):
    _, _, _, g = data
    a = kern.numba_kernels["power_mean"](g, p)
    b = kern.numpy_kernels["power_mean"](g, p)
    assert a == pytest.approx(b, rel=1e-13)


@needs_numba
def test_elementwise_kernels_agree(data):
    rng, lat, m, g = data
    out_a, out_b = np.empty_like(g), np.empty_like(g)
    kern.numba_kernels["cube"](g, out_a)
    kern.numpy_kernels["cube"](g, out_b)
    assert np.array_equal(out_a, out_b)
    assert kern.numba_kernels["max_abs"](g) == kern.numpy_kernels["max_abs"](g)
    w, s = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    assert kern.numba_kernels["forcing_power"](g, w, s) == pytest.approx(
        kern.numpy_kernels["forcing_power"](g, w, s), rel=1e-12)
    mx_a, pw_a = kern.numba_kernels["row_stats"](g.reshape(8, -1), 6.0)
    mx_b, pw_b = kern.numpy_kernels["row_stats"](g.reshape(8, -1), 6.0)
    assert np.array_equal(mx_a, mx_b)
    np.testing.assert_allclose(pw_a, pw_b, rtol=1e-13)


@needs_numba
def test_rotate_backends_agree(data):
    rng, lat, m, _ = data
    q, p = rng.standard_normal(1 + 2 * m), rng.standard_normal(1 + 2 * m)
    c, s, w = (rng.standard_normal(1 + 2 * m) for _ in range(3))
    qa, pa, qb, pb = q.copy(), p.copy(), q.copy(), p.copy()
    kern.numba_kernels["rotate"](qa, pa, c, s, w)
    kern.numpy_kernels["rotate"](qb, pb, c, s, w)
    np.testing.assert_allclose(qa, qb, rtol=1e-15)
    np.testing.assert_allclose(pa, pb, rtol=1e-15)


@needs_numba
def test_scatter_gather_backends_agree(data):
    rng, lat, m, _ = data
    n = 8
    idx, mirror, conj = lat.fft_map(n)
    q = rng.standard_normal(1 + 2 * m)
    size = n * n * (n // 2 + 1)
    sa, sb = np.zeros(size, complex), np.zeros(size, complex)
    kern.numba_kernels["scatter"](sa, idx, mirror, conj, q, m)
    kern.numpy_kernels["scatter"](sb, idx, mirror, conj, q, m)
    assert np.array_equal(sa, sb)
    ga, gb = np.empty_like(q), np.empty_like(q)
    kern.numba_kernels["gather"](sa, idx, conj, m, ga)
    kern.numpy_kernels["gather"](sb, idx, conj, m, gb)
    assert np.array_equal(ga, gb)
    np.testing.assert_allclose(ga, q, atol=1e-15)


@needs_numba
def test_compensated_sum_backends_agree():
    x = np.array([1e16, 1.0, -1e16, 1.0] * 1000)
    assert kern.numba_kernels["neumaier_sum"](x) == 2000.0
    assert kern.numpy_kernels["neumaier_sum"](x) == 2000.0
    rng = np.random.default_rng(3)
    y = rng.standard_normal(10 ** 5) * 10.0 ** rng.integers(-8, 8, 10 ** 5)
    assert kern.numba_kernels["neumaier_sum"](y) == pytest.approx(math.fsum(y), rel=1e-15, abs=1e-12)


def test_environment_flag_selects_numpy_backend():
    env = dict(os.environ, RANDWAVE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c",
                          "from randwave import _kernels; print(_kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "numpy"


def test_numpy_backend_gives_same_trajectory():
    code = ("import numpy as np; from randwave.harness import make_base; "
            "from randwave.evolve import evolve_full; "
            "V = make_base('power_decay', n_max=4, sigma=3.0, amplitude=0.5); "
            "r = evolve_full(V, 0.2, 0.01, keep_states=True); "
            "print(repr(float(r.energy_total[-1])), repr(float(r.states[-1].sum())))")
    res = []
    for flag in ("0", "1"):
        env = dict(os.environ, RANDWAVE_DISABLE_NUMBA=flag)
        res.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                  text=True, check=True).stdout.split())
    for a, b in zip(*res):
        assert float(a) == pytest.approx(float(b), rel=1e-12)
