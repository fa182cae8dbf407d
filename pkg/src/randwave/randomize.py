"""Randomization of Fourier coefficients.

Each stored coefficient of a base pair is multiplied by an independent draw
of a mean-zero, variance-one, sub-gaussian law.  Draws come from
counter-based Philox streams keyed by ``(master_seed, stream_id)``, so the
result of trial ``k`` does not depend on which other trials ran or in what
order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .spectral import SpectrumPair

__all__ = [
    "CoefficientLaw", "SeedSpec", "SignPattern", "MgfReport", "LAWS",
    "randomize", "mgf_check", "flip_sample", "odot", "draw_multipliers",
    "randomize_batch",
]

LAWS = ("gaussian", "bernoulli", "uniform")
_SQRT3 = math.sqrt(3.0)
_DEFAULT_GAMMAS = np.linspace(-25.0, 25.0, 501)
_U64 = 2 ** 64


def _log_sinhc(x):
    """log(sinh(x)/x), stable for all real x."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    big = xs + np.log1p(-np.exp(-2.0 * xs)) - np.log(2.0 * xs)
    return np.where(small, x * x / 6.0, big)


class MgfReport(NamedTuple):
    gammas: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    ok: bool


@dataclass(frozen=True)
class CoefficientLaw:
    """Distribution of the randomizing multipliers.

    ``subgaussian_c`` is the constant ``c`` in ``E exp(gX) <= exp(c g^2)``;
    the law is rejected at construction if the bound fails on a test grid.
    """

    kind: str = "gaussian"
    subgaussian_c: float = 0.5

    def __post_init__(self):
        if self.kind not in LAWS:
            raise InvalidInputError(f"unknown law {self.kind!r}; expected one of {LAWS}")
        rep = mgf_check(self, _DEFAULT_GAMMAS)
        if not rep.ok:
            raise InvalidInputError(
                f"{self.kind} violates the mgf bound with c={self.subgaussian_c} "
                f"(max ratio {rep.max_ratio:.6g})")

    @property
    def symmetric(self):
        return True

    def log_mgf(self, gamma):
        g = np.asarray(gamma, dtype=float)
        if self.kind == "gaussian":
            return 0.5 * g * g
        if self.kind == "bernoulli":
            return np.logaddexp(g, -g) - math.log(2.0)
        return _log_sinhc(_SQRT3 * g)

    def mgf(self, gamma):
        return np.exp(self.log_mgf(gamma))

    def sample(self, rng, size):
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "bernoulli":
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        return rng.uniform(-_SQRT3, _SQRT3, size=size)


def mgf_check(law, gamma_grid):
    """Ratios ``E exp(gX) / exp(c g^2)`` on ``gamma_grid`` (closed forms)."""
    g = np.atleast_1d(np.asarray(gamma_grid, dtype=float))
    log_ratio = law.log_mgf(g) - law.subgaussian_c * g * g
    ratios = np.exp(log_ratio)
    mx = float(ratios.max()) if ratios.size else 1.0
    return MgfReport(g, ratios, mx, bool(mx <= 1.0 + 1e-12))


@dataclass(frozen=True)
class SeedSpec:
    """Key of one reproducible random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= int(v) < _U64):
                raise InvalidInputError(f"{name} must be an integer in [0, 2^64)")

    def generator(self):
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id):
        return SeedSpec(self.master_seed, stream_id)


def _n_slots(S):
    return 2 + 4 * len(S.lattice)


def randomize(base, law, seed):
    """Multiply every coefficient of ``base`` by an independent draw of ``law``."""
    draws = law.sample(seed.generator(), _n_slots(base))
    return SpectrumPair.from_slots(base, base.packed_slots() * draws)


def draw_multipliers(law, master_seed, stream_ids, n_slots):
    """Stack of multiplier vectors, one row per stream id."""
    out = np.empty((len(stream_ids), n_slots))
    for i, sid in enumerate(stream_ids):
        out[i] = law.sample(SeedSpec(master_seed, int(sid)).generator(), n_slots)
    return out


def randomize_batch(base, law, master_seed, stream_ids):
    """Slot vectors (rows) of ``randomize(base, law, SeedSpec(master_seed, k))``
    for every ``k`` in ``stream_ids``; row ``i`` equals the single-trial
    result bit for bit."""
    return base.packed_slots() * draw_multipliers(law, master_seed, stream_ids, _n_slots(base))


@dataclass(frozen=True, eq=False)
class SignPattern:
    """A +-1 per coefficient slot (slot order of ``SpectrumPair.packed_slots``)."""

    signs: np.ndarray

    def __post_init__(self):
        s = np.array(self.signs, dtype=np.float64).ravel()
        if not np.all(np.abs(s) == 1.0):
            raise InvalidInputError("sign pattern entries must be exactly +-1")
        s.setflags(write=False)
        object.__setattr__(self, "signs", s)

    @classmethod
    def ones(cls, template):
        return cls(np.ones(_n_slots(template)))


def flip_sample(template, seed):
    """Independent fair signs, one per slot of ``template``."""
    rng = seed.generator()
    return SignPattern(2.0 * rng.integers(0, 2, size=_n_slots(template)) - 1.0)


def odot(h, S):
    """Coefficient-wise sign flip ``h . S``."""
    if h.signs.shape[0] != _n_slots(S):
        raise InvalidInputError(
            f"sign pattern has {h.signs.shape[0]} slots, spectrum has {_n_slots(S)}")
    return SpectrumPair.from_slots(S, S.packed_slots() * h.signs)
