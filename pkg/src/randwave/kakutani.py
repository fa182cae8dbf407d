"""Equivalence or singularity of centred gaussian product measures.

Two product measures with per-slot standard deviations ``x1[k]`` and
``x2[k]`` are equivalent iff the product of the per-slot Hellinger
affinities ``sqrt(2 x1 x2 / (x1^2 + x2^2))`` stays positive, and mutually
singular iff it vanishes.  Finite data can only approximate this, so the
verdict is thresholded (see :func:`affinity`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as kern
from .errors import InvalidInputError

__all__ = [
    "EQUIVALENT", "SINGULAR", "INCONCLUSIVE", "Factor", "hellinger_factor",
    "log_hellinger_terms", "VarianceSequences", "AffinityReport", "affinity", "classify",
]

EQUIVALENT = "Equivalent"
SINGULAR = "MutuallySingular"
INCONCLUSIVE = "InconclusiveFiniteData"

# defaults: last-half tail of -log(factor) below TAIL_TOL -> Equivalent;
# log affinity below log(1e-6) -> MutuallySingular
TAIL_TOL = 1e-6
SINGULAR_LOG = math.log(1e-6)


class Factor(NamedTuple):
    value: float
    degenerate: bool


def hellinger_factor(x1, x2):
    """Hellinger affinity of ``N(0, x1^2)`` and ``N(0, x2^2)``.

    Both zero gives 1 (two equal point masses); exactly one zero gives 0
    with ``degenerate`` set.
    """
    x1, x2 = float(x1), float(x2)
    if x1 < 0 or x2 < 0 or not (math.isfinite(x1) and math.isfinite(x2)):
        raise InvalidInputError("standard deviations must be finite and >= 0")
    if x1 == 0 and x2 == 0:
        return Factor(1.0, False)
    if x1 == 0 or x2 == 0:
        return Factor(0.0, True)
    return Factor(math.exp(float(log_hellinger_terms(np.array([x1]), np.array([x2]))[0])), False)


def log_hellinger_terms(x1, x2):
    """Per-slot ``log`` of the Hellinger factor for positive ``x1, x2``:
    ``-1/2 log1p((r - 1)^2 / (2 r))`` with ``r = x2 / x1``, accurate when
    ``r`` is close to 1."""
    r = x2 / x1
    return -0.5 * np.log1p((r - 1.0) ** 2 / (2.0 * r))


@dataclass(frozen=True, eq=False)
class VarianceSequences:
    """Paired per-slot standard deviations."""

    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.x1, dtype=float).ravel()
        b = np.asarray(self.x2, dtype=float).ravel()
        if a.shape != b.shape:
            raise InvalidInputError("sequences must have equal lengths")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise InvalidInputError("non-finite standard deviation")
        if (a < 0).any() or (b < 0).any():
            raise InvalidInputError("standard deviations must be >= 0")
        object.__setattr__(self, "x1", a)
        object.__setattr__(self, "x2", b)

    def __len__(self):
        return self.x1.size


@dataclass
class AffinityReport:
    log_affinity: float
    partial_ratio_sum: float
    verdict: str
    zero_mismatch: bool
    n_terms: int
    tail_contribution: float

    @property
    def affinity(self):
        return math.exp(self.log_affinity)

    def to_dict(self):
        return {
            "log_affinity": self.log_affinity if math.isfinite(self.log_affinity) else None,
            "affinity": self.affinity,
            "partial_ratio_sum": (self.partial_ratio_sum
                                  if math.isfinite(self.partial_ratio_sum) else None),
            "verdict": self.verdict,
            "zero_mismatch": self.zero_mismatch,
            "n_terms": self.n_terms,
            "tail_contribution": (self.tail_contribution
                                  if math.isfinite(self.tail_contribution) else None),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def affinity(seqs, tail_tol=TAIL_TOL, singular_log=SINGULAR_LOG):
    """Log of the Hellinger product and a finite-data verdict.

    MutuallySingular if a slot vanishes in one sequence only, or if the log
    affinity drops below ``singular_log``; Equivalent if the second half of
    the terms contributes less than ``tail_tol`` to ``-log`` affinity;
    otherwise InconclusiveFiniteData.  Slots zero in both are skipped.
    Sums are compensated and taken in slot order.
    """
    if not isinstance(seqs, VarianceSequences):
        seqs = VarianceSequences(*seqs)
    x1, x2 = seqs.x1, seqs.x2
    z1, z2 = x1 == 0, x2 == 0
    mismatch = bool(np.any(z1 != z2))
    both = ~(z1 | z2)
    n = int(both.sum())
    if mismatch:
        return AffinityReport(-math.inf, math.inf, SINGULAR, True, n, math.inf)
    a, b = x1[both], x2[both]
    terms = np.ascontiguousarray(log_hellinger_terms(a, b))
    log_aff = kern.neumaier_sum(terms)
    ratio_sum = kern.neumaier_sum(np.ascontiguousarray((b / a - 1.0) ** 2))
    tail = 0.0 - kern.neumaier_sum(terms[n // 2:]) if n else 0.0
    if log_aff < singular_log:
        verdict = SINGULAR
    elif tail < tail_tol:
        verdict = EQUIVALENT
    else:
        verdict = INCONCLUSIVE
    return AffinityReport(float(log_aff), float(ratio_sum), verdict, False, n, float(tail))


def classify(base, other, law="gaussian", tail_tol=TAIL_TOL, singular_log=SINGULAR_LOG):
    """Compare the gaussian randomizations of two spectra slot by slot; the
    standard deviation of each slot is the modulus of its coefficient.
    Slots are taken in order of increasing ``|n|`` so the tail test looks at
    the highest frequencies."""
    kind = getattr(law, "kind", law)
    if kind != "gaussian":
        raise InvalidInputError(f"classification is defined for gaussian laws only, not {kind!r}")
    if not base.same_index_set(other):
        raise InvalidInputError("spectra must share the same index set")
    abs_n = base.lattice.abs_n
    freq = np.concatenate(([0.0, 0.0], abs_n, abs_n, abs_n, abs_n))
    order = np.argsort(freq, kind="stable")
    seqs = VarianceSequences(np.abs(base.packed_slots())[order], np.abs(other.packed_slots())[order])
    return affinity(seqs, tail_tol=tail_tol, singular_log=singular_log)
