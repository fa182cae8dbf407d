import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import random_spectrum
from randwave.errors import AliasingError, InvalidInputError
from randwave.spectral import (
    GridField, Lattice, SpectrumPair, analyze, dealias_grid, free_evolve, half_lattice,
    load_spectrum, lp_norm, min_grid, project_high, project_low, project_zero, save_spectrum,
    slice_norm_series, sobolev_norm, synthesize, weighted_spacetime_norm,
)

seeds = st.integers(0, 2 ** 32 - 1)


def cos_x1(n_max=1, s=0.0):
    return SpectrumPair.single_mode((1, 0, 0), n_max=n_max, s=s)


# ---- lattice ---------------------------------------------------------------

def test_half_lattice_is_canonical_and_halves_the_ball():
    modes = half_lattice(4)
    first = np.array([m[np.flatnonzero(m)[0]] for m in modes])
    assert np.all(first > 0)
    # every nonzero point of the ball is n or -n of exactly one stored mode
    r = np.arange(-4, 5)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    ball = ((g * g).sum(1) <= 16).sum() - 1
    assert 2 * len(modes) == ball


def test_lattice_rejects_non_canonical_and_duplicates():
    with pytest.raises(InvalidInputError):
        Lattice([[-1, 0, 0]])
    with pytest.raises(InvalidInputError):
        Lattice([[1, 0, 0], [1, 0, 0]])


def test_spectrum_rejects_nan():
    S = SpectrumPair.zeros(2)
    with pytest.raises(InvalidInputError):
        S.replace(a=np.array([np.nan, 0.0]))


# ---- sobolev_norm ----------------------------------------------------------

def test_norm_of_cos_sigma_zero():
    # integral of cos^2 over the normalized torus is 1/2
    assert sobolev_norm(cos_x1(), 0, component=0) == pytest.approx(math.sqrt(0.5), rel=1e-15)


def test_norm_of_cos_sigma_half():
    assert sobolev_norm(cos_x1(), 0.5, component=0) == pytest.approx(0.84090, abs=5e-6)
    assert sobolev_norm(cos_x1(), 0.5, component=0) == pytest.approx(
        math.sqrt(0.5 * math.sqrt(2.0)), rel=1e-15)


def test_norm_of_zero_spectrum():
    assert sobolev_norm(SpectrumPair.zeros(5), 1.3) == 0.0


def test_pair_norm_is_root_sum_square(rng):
    S = random_spectrum(rng, 4)
    n0 = sobolev_norm(S, 0.7, 0)
    n1 = sobolev_norm(S, 0.7, 1)
    assert sobolev_norm(S, 0.7) == pytest.approx(math.hypot(n0, n1), rel=1e-14)


def test_velocity_component_uses_shifted_weight():
    S = SpectrumPair.single_mode((1, 1, 0), n_max=2, b0=0.0, b1=1.0)
    # <n>^2 = 3, weight <n>^(2(sigma-1)) at sigma = 1 is 1
    assert sobolev_norm(S, 1.0, 1) == pytest.approx(math.sqrt(0.5))
    assert sobolev_norm(S, 0.0, 1) == pytest.approx(math.sqrt(0.5 / 3.0))


def test_norm_rejects_unknown_component():
    with pytest.raises(InvalidInputError):
        sobolev_norm(cos_x1(), 0, component=2)


# ---- projectors ------------------------------------------------------------

def test_project_low_full_range_is_identity(rng):
    S = random_spectrum(rng, 5)
    assert project_low(S, 5) == S


def test_project_low_zero_is_project_zero(rng):
    S = random_spectrum(rng, 5)
    assert project_low(S, 0) == project_zero(S)


def test_project_high_keeps_only_outer_modes():
    lat = Lattice([[1, 0, 0], [3, 0, 0]])
    S = SpectrumPair(0.0, 3, lat, np.ones(2), np.ones((2, 2)), np.ones((2, 2)))
    H = project_high(S, 2)
    assert np.array_equal(H.b[:, 0], [0, 0]) and np.array_equal(H.b[:, 1], [1, 1])
    assert np.array_equal(H.a, [0, 0])


def test_negative_cutoff_refused():
    with pytest.raises(InvalidInputError):
        project_low(SpectrumPair.zeros(2), -1)


@given(seeds, st.integers(0, 8))
def test_projector_algebra(seed, N):
    S = random_spectrum(np.random.default_rng(seed), 6)
    lo, hi = project_low(S, N), project_high(S, N)
    assert project_low(lo, N) == lo
    assert project_low(hi, N) == SpectrumPair.zeros(6)
    assert lo + hi == S


@given(seeds, st.floats(0.0, 2.0))
def test_high_projection_norm_monotone_and_bounded(seed, s):
    S = random_spectrum(np.random.default_rng(seed), 6, s=s)
    norms = [sobolev_norm(project_high(S, N), s) for N in range(7)]
    assert all(b <= a * (1 + 1e-14) for a, b in zip(norms, norms[1:]))
    for N in range(7):
        lhs = sobolev_norm(project_high(S, N), 0)
        assert lhs <= (1 + N * N) ** (-s / 2) * sobolev_norm(S, s) * (1 + 1e-12)


# ---- free evolution --------------------------------------------------------

def test_free_evolve_zero_time_is_identity(rng):
    S = random_spectrum(rng, 3)
    assert free_evolve(S, 0.0) == S


def test_free_evolve_half_period_flips_cosine():
    out = free_evolve(cos_x1(), math.pi)
    assert out.b[0, 0] == pytest.approx(-1.0, abs=1e-15)
    assert out.b[1, 0] == pytest.approx(0.0, abs=1e-15)


def test_free_evolve_zero_mode_is_affine():
    S = SpectrumPair.zeros(1).replace(a=np.array([2.0, 3.0]))
    out = free_evolve(S, 1.5)
    assert out.a[0] == 6.5 and out.a[1] == 3.0


@given(seeds, st.floats(-100, 100))
def test_free_evolve_conserves_linear_mode_energy(seed, t):
    S = random_spectrum(np.random.default_rng(seed), 4)
    out = free_evolve(S, t)
    w2 = S.lattice.abs_n ** 2
    before = w2 * (S.b[0] ** 2 + S.c[0] ** 2) + S.b[1] ** 2 + S.c[1] ** 2
    after = w2 * (out.b[0] ** 2 + out.c[0] ** 2) + out.b[1] ** 2 + out.c[1] ** 2
    np.testing.assert_allclose(after, before, rtol=1e-12)


@given(seeds, st.floats(-50, 50), st.floats(-50, 50))
def test_free_evolve_group_law(seed, t1, t2):
    S = random_spectrum(np.random.default_rng(seed), 4)
    a = free_evolve(free_evolve(S, t1), t2)
    b = free_evolve(S, t1 + t2)
    scale = np.abs(S.packed_slots()).max() * (1 + abs(t1) + abs(t2))
    np.testing.assert_allclose(a.packed_slots(), b.packed_slots(), rtol=0, atol=1e-12 * scale)


# ---- synthesis / analysis --------------------------------------------------

def test_zero_spectrum_synthesizes_to_zero():
    assert not np.any(synthesize(SpectrumPair.zeros(3), 0, 8).values)


def test_single_mode_synthesis_matches_cosine():
    F = synthesize(cos_x1(), 0, 8)
    x = GridField.coordinates(8)
    np.testing.assert_allclose(F.values, np.cos(x)[:, None, None] * np.ones((8, 8, 8)), atol=1e-15)
    assert F.values.max() == pytest.approx(1.0) and F.values[0, 0, 0] == pytest.approx(1.0)


def test_sine_and_oblique_mode_synthesis():
    S = SpectrumPair.single_mode((1, -2, 1), n_max=3, b0=0.0, c0=1.0)
    n = 10
    F = synthesize(S, 0, n)
    x = GridField.coordinates(n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    np.testing.assert_allclose(F.values, np.sin(X - 2 * Y + Z), atol=1e-14)


def test_velocity_component_synthesis():
    S = SpectrumPair.single_mode((0, 1, 0), n_max=1, b0=0.0, b1=2.0)
    F = synthesize(S, 1, 4)
    x = GridField.coordinates(4)
    np.testing.assert_allclose(F.values, 2 * np.cos(x)[None, :, None] * np.ones((4, 4, 4)), atol=1e-15)


def test_round_trip_recovers_coefficients(rng):
    S = random_spectrum(rng, 4)
    a, b, c = analyze(synthesize(S, 0, 16), 4)
    ref = np.concatenate(([S.a[0]], S.b[0], S.c[0]))
    got = np.concatenate(([a], b, c))
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) <= 1e-12


@given(seeds, st.integers(1, 5))
def test_round_trip_property(seed, n_max):
    S = random_spectrum(np.random.default_rng(seed), n_max)
    for j in (0, 1):
        a, b, c = analyze(synthesize(S, j, min_grid(n_max)), n_max)
        np.testing.assert_allclose(np.concatenate(([a], b, c)), S.packed(j), rtol=0, atol=1e-12)


def test_aliasing_grid_refused():
    with pytest.raises(AliasingError):
        synthesize(SpectrumPair.zeros(4), 0, 9)


def test_grid_sizes():
    assert min_grid(8) == 18
    assert dealias_grid(8) >= 33


# ---- lp norms --------------------------------------------------------------

def test_lp_norm_of_constant():
    F = GridField(np.full((6, 6, 6), 3.0), 2)
    for p in (1, 2, 3.5, math.inf):
        assert lp_norm(F, p) == pytest.approx(3.0)


def test_lp_norm_of_cosine():
    F = synthesize(cos_x1(), 0, 16)
    assert lp_norm(F, 2) == pytest.approx(math.sqrt(0.5), rel=1e-14)
    assert lp_norm(F, math.inf) == pytest.approx(1.0)
    # mean cos^4 = 3/8 is exact on this grid
    assert lp_norm(F, 4) == pytest.approx((3 / 8) ** 0.25, rel=1e-14)


def test_lp_norm_rejects_small_p():
    with pytest.raises(InvalidInputError):
        lp_norm(GridField(np.zeros((4, 4, 4)), 1), 0.5)


@given(seeds)
def test_parseval(seed):
    S = random_spectrum(np.random.default_rng(seed), 5)
    F = synthesize(S, 0, min_grid(5))
    assert lp_norm(F, 2) == pytest.approx(sobolev_norm(S, 0, 0), rel=1e-12)


def test_lp6_quadrature_converges_under_grid_doubling(rng):
    S = random_spectrum(rng, 4, decay=2.0)
    vals = [lp_norm(synthesize(S, 0, n), 6) for n in (12, 26, 52)]
    # degree 24 integrand: exact once the grid exceeds 6 * n_max
    assert abs(vals[1] - vals[2]) <= 1e-12 * vals[2]
    assert abs(vals[0] - vals[2]) > abs(vals[1] - vals[2])


# ---- weighted space-time norm ----------------------------------------------

def test_weighted_norm_of_zero_data():
    assert weighted_spacetime_norm(SpectrumPair.zeros(2), 2, 2, 1, 5, 0.1).value == 0.0


def test_weighted_norm_kills_zero_mode():
    S = SpectrumPair.zeros(2).replace(a=np.array([1.0, 0.0]))
    assert weighted_spacetime_norm(S, 2, 2, 1, 5, 0.1, projector="nonzero").value == 0.0


def test_weighted_norm_matches_scalar_quadrature():
    res = weighted_spacetime_norm(cos_x1(), 2, 2, 2.0, 50.0, 0.01)

    def f(t):
        return (1 + t * t) ** -2 * math.cos(t) ** 2 * 0.5

    oracle, _ = integrate.quad(f, -50, 50, limit=2000)
    assert res.value == pytest.approx(math.sqrt(oracle), rel=1e-4)
    # the reported tail bounds what the window leaves out
    full, _ = integrate.quad(f, -np.inf, np.inf, limit=2000)
    assert full - oracle <= res.tail_bound


def test_weighted_norm_refuses_divergent_weight():
    with pytest.raises(InvalidInputError):
        weighted_spacetime_norm(cos_x1(), 2, 2, 0.5, 5, 0.1)


def test_slice_series_l2_is_analytic_and_matches_grid(rng):
    S = random_spectrum(rng, 3)
    t = np.linspace(-2, 2, 7)
    a = slice_norm_series(S, t, 2)
    b = slice_norm_series(S, t, 2.0000001)
    np.testing.assert_allclose(a, b, rtol=1e-6)


# ---- serialization ---------------------------------------------------------

def test_json_round_trip_is_exact(tmp_path, rng):
    S = random_spectrum(rng, 3, s=0.25)
    p = tmp_path / "s.json"
    save_spectrum(S, p)
    assert load_spectrum(p) == S


def test_json_malformed_refused():
    with pytest.raises(InvalidInputError):
        SpectrumPair.from_json('{"s": 0}')
