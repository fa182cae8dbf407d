import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spectrum
from randwave.errors import InvalidInputError
from randwave.randomize import (
    LAWS, CoefficientLaw, SeedSpec, SignPattern, draw_multipliers, flip_sample, mgf_check, odot,
    randomize, randomize_batch,
)
from randwave.spectral import SpectrumPair, l2_packed, project_high, sobolev_norm

seeds = st.integers(0, 2 ** 63)


def ones_base(n_max=3, s=0.5):
    S = SpectrumPair.zeros(n_max, s)
    return S.replace(a=np.ones(2), b=np.ones_like(S.b), c=np.ones_like(S.c))


# ---- laws -------------------------------------------------------------------

@pytest.mark.parametrize("kind", LAWS)
def test_laws_have_mean_zero_variance_one(kind):
    x = CoefficientLaw(kind).sample(np.random.default_rng(0), 400_000)
    assert abs(x.mean()) < 4 / math.sqrt(x.size)
    assert x.var() == pytest.approx(1.0, abs=0.01)


def test_gaussian_mgf_ratio_is_one():
    rep = mgf_check(CoefficientLaw("gaussian"), np.linspace(-10, 10, 41))
    np.testing.assert_allclose(rep.ratios, 1.0, rtol=1e-15)
    assert rep.ok


def test_bernoulli_mgf_ratio_at_two():
    rep = mgf_check(CoefficientLaw("bernoulli"), [2.0])
    assert rep.ratios[0] == pytest.approx(math.cosh(2.0) / math.e ** 2, rel=1e-14)
    assert rep.ratios[0] == pytest.approx(0.509158, abs=1e-6)


@pytest.mark.parametrize("kind", LAWS)
def test_mgf_ratio_at_zero_is_one(kind):
    assert mgf_check(CoefficientLaw(kind), [0.0]).ratios[0] == 1.0


def test_uniform_mgf_matches_quadrature():
    law = CoefficientLaw("uniform")
    r3 = math.sqrt(3)
    for g in (0.3, 1.7, 4.0):
        x = np.linspace(-r3, r3, 200001)
        direct = np.trapezoid(np.exp(g * x), x) / (2 * r3)
        assert law.mgf(g) == pytest.approx(direct, rel=1e-8)


def test_mgf_violation_rejects_law():
    with pytest.raises(InvalidInputError):
        CoefficientLaw("bernoulli", subgaussian_c=0.3)
    with pytest.raises(InvalidInputError):
        CoefficientLaw("cauchy")


# ---- seeds and randomization -----------------------------------------------

def test_seed_range_checked():
    with pytest.raises(InvalidInputError):
        SeedSpec(-1)
    with pytest.raises(InvalidInputError):
        SeedSpec(0, 2 ** 64)


def test_zero_base_stays_zero():
    S = SpectrumPair.zeros(3)
    assert randomize(S, CoefficientLaw("gaussian"), SeedSpec(5)) == S


@given(seeds, st.integers(0, 1000))
def test_randomize_is_deterministic(master, sid):
    base = ones_base(2)
    law = CoefficientLaw("gaussian")
    a = randomize(base, law, SeedSpec(master, sid))
    b = randomize(base, law, SeedSpec(master, sid))
    assert a == b
    assert a.s == base.s and a.n_max == base.n_max


def test_batch_rows_equal_single_trials():
    base = ones_base(3)
    law = CoefficientLaw("uniform")
    rows = randomize_batch(base, law, 99, [4, 0, 17])
    for row, sid in zip(rows, [4, 0, 17]):
        assert np.array_equal(row, randomize(base, law, SeedSpec(99, sid)).packed_slots())


@given(seeds, st.floats(-1.0, 3.0))
def test_bernoulli_preserves_every_norm(master, sigma):
    base = random_spectrum(np.random.default_rng(master % 2 ** 32), 3)
    out = randomize(base, CoefficientLaw("bernoulli"), SeedSpec(master, 1))
    assert sobolev_norm(out, sigma) == sobolev_norm(base, sigma)


def test_gaussian_second_moment_of_cosine():
    base = SpectrumPair.single_mode((1, 0, 0), n_max=1)
    slots = randomize_batch(base, CoefficientLaw("gaussian"), 3, np.arange(100_000))
    # slots: a0, a1, b0, c0, b1, c1 ; v0 = b0 cos
    sq = 0.5 * slots[:, 2] ** 2
    se = sq.std(ddof=1) / math.sqrt(sq.size)
    assert abs(sq.mean() - 0.5) < 3 * se


def test_streams_are_uncorrelated_and_mean_zero():
    base = ones_base(2)
    law = CoefficientLaw("gaussian")
    X = draw_multipliers(law, 42, np.arange(20_000), base.packed_slots().size)
    se = 1 / math.sqrt(X.shape[0])
    assert np.all(np.abs(X.mean(axis=0)) < 4.5 * se)
    # matched slots of streams k and k+1
    r = np.corrcoef(X[:-1:2, 5], X[1::2, 5])[0, 1]
    assert abs(r) < 4 * math.sqrt(2) * se


def test_randomization_does_not_regularize():
    base = ones_base(6, s=0.0)
    law = CoefficientLaw("gaussian")
    N = 3
    ref = sobolev_norm(project_high(base, N), 0) ** 2
    vals = []
    for k in range(3000):
        out = randomize(base, law, SeedSpec(8, k))
        vals.append(sobolev_norm(project_high(out, N), 0) ** 2 / ref)
    vals = np.array(vals)
    assert abs(vals.mean() - 1.0) < 4 * vals.std(ddof=1) / math.sqrt(vals.size)


# ---- sign patterns -------------------------------------------------------------

def test_sign_pattern_entries_must_be_unit():
    with pytest.raises(InvalidInputError):
        SignPattern(np.array([1.0, 0.5]))


def test_all_plus_pattern_is_identity(rng):
    S = random_spectrum(rng, 3)
    assert odot(SignPattern.ones(S), S) == S


@given(seeds)
def test_odot_is_an_involution(master):
    S = random_spectrum(np.random.default_rng(master % 2 ** 32), 3)
    h = flip_sample(S, SeedSpec(master, 0))
    assert odot(h, odot(h, S)) == S


def test_odot_slot_mismatch_refused():
    with pytest.raises(InvalidInputError):
        odot(SignPattern(np.ones(3)), SpectrumPair.zeros(2))


@pytest.mark.parametrize("kind", LAWS)
def test_sign_flip_leaves_distribution_unchanged(kind):
    base = ones_base(1)
    law = CoefficientLaw(kind)
    n = 100_000
    slot = 3
    plain = np.array([randomize_batch(base, law, 10, np.arange(n))[:, slot]])[0]
    flipped = np.empty(n)
    signs = np.empty(n)
    for k in range(0, n, 5000):
        ids = np.arange(k, k + 5000)
        rows = randomize_batch(base, law, 11, ids)
        h = np.array([flip_sample(base, SeedSpec(12, int(i))).signs[slot] for i in ids])
        flipped[k:k + 5000] = rows[:, slot] * h
        signs[k:k + 5000] = h
    assert set(np.unique(signs)) == {-1.0, 1.0}
    for m in (1, 2, 3, 4):
        a, b = plain ** m, flipped ** m
        se = math.sqrt(a.var() / n + b.var() / n)
        assert abs(a.mean() - b.mean()) <= 4 * se + 1e-12
