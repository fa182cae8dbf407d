"""Real Fourier data on the 3-torus.

A field is stored as

    u(x) = a + sum_n ( b_n cos(n.x) + c_n sin(n.x) )

with ``n`` running over a canonical half-lattice (first nonzero component
positive), so that every real degree of freedom is stored exactly once.
Norms use the Haar measure of total mass one: ``||cos(n.x)||_2^2 = 1/2``
and every L^p norm is a grid average.

Two representations coexist:

* :class:`SpectrumPair` -- the (position, velocity) coefficient tables;
* :class:`GridField` -- samples on a uniform ``N^3`` grid of ``[0, 2pi)^3``.

Internally the coefficients of one field are often handled as the packed
vector ``q = [a, b_1..b_M, c_1..c_M]`` (see :mod:`randwave._kernels`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from . import _kernels as kern
from .errors import AliasingError, InvalidInputError

__all__ = [
    "Lattice", "SpectrumPair", "GridField", "WindowedNorm",
    "half_lattice", "min_grid", "dealias_grid",
    "sobolev_norm", "project_low", "project_high", "project_zero",
    "free_evolve", "synthesize", "analyze", "lp_norm",
    "weighted_spacetime_norm", "load_spectrum", "save_spectrum",
]


# --------------------------------------------------------------------------
# lattice
# --------------------------------------------------------------------------

def _canonical_mask(modes):
    n = np.asarray(modes)
    first = np.where(n[:, 0] != 0, n[:, 0], np.where(n[:, 1] != 0, n[:, 1], n[:, 2]))
    return first > 0


def half_lattice(n_max):
    """All canonical ``n`` with ``0 < |n| <= n_max``, sorted by ``|n|^2``
    then lexicographically."""
    n_max = int(n_max)
    if n_max < 0:
        raise InvalidInputError("n_max must be >= 0")
    r = np.arange(-n_max, n_max + 1)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    sq = (g * g).sum(axis=1)
    keep = (sq > 0) & (sq <= n_max * n_max) & _canonical_mask(g)
    g = g[keep]
    sq = sq[keep]
    order = np.lexsort((g[:, 2], g[:, 1], g[:, 0], sq))
    return g[order].astype(np.int64)


class Lattice:
    """An immutable set of canonical half-lattice modes.

    Spectra derived from one another share the same ``Lattice`` object,
    which caches mode norms and FFT index maps.
    """

    def __init__(self, modes):
        modes = np.array(modes, dtype=np.int64).reshape(-1, 3)
        if modes.shape[0] and not _canonical_mask(modes).all():
            raise InvalidInputError("modes must be canonical: first nonzero component > 0")
        if len({tuple(m) for m in modes.tolist()}) != modes.shape[0]:
            raise InvalidInputError("duplicate modes")
        modes.setflags(write=False)
        self.modes = modes
        self._maps = {}

    @classmethod
    @lru_cache(maxsize=32)
    def ball(cls, n_max):
        """The full half-lattice ball ``|n| <= n_max`` (cached)."""
        return cls(half_lattice(n_max))

    def __len__(self):
        return self.modes.shape[0]

    @cached_property
    def _positions(self):
        return {tuple(m): k for k, m in enumerate(self.modes.tolist())}

    def contains(self, n):
        return tuple(int(x) for x in np.ravel(n)) in self._positions

    def index(self, n):
        """Position of mode ``n`` in this lattice."""
        key = tuple(int(x) for x in np.ravel(n))
        if key not in self._positions:
            raise InvalidInputError(f"mode {key} is not in the lattice")
        return self._positions[key]

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Lattice):
            return NotImplemented
        return self.modes.shape == other.modes.shape and bool(np.all(self.modes == other.modes))

    def __hash__(self):
        return hash(self.modes.tobytes())

    @cached_property
    def abs_n(self):
        v = np.sqrt((self.modes * self.modes).sum(axis=1).astype(float))
        v.setflags(write=False)
        return v

    @cached_property
    def omega(self):
        """Packed frequency vector ``[0, |n|.., |n|..]``."""
        v = np.concatenate(([0.0], self.abs_n, self.abs_n))
        v.setflags(write=False)
        return v

    @cached_property
    def bracket_sq(self):
        """Packed ``<n>^2 = 1 + |n|^2``."""
        return 1.0 + self.omega ** 2

    def max_component(self):
        return int(np.abs(self.modes).max()) if len(self) else 0

    def select(self, mask):
        return Lattice(self.modes[np.asarray(mask, dtype=bool)])

    def fft_map(self, n_grid):
        """Index arrays into a flattened ``rfftn`` spectrum of an ``n_grid^3``
        field: (idx, mirror, conj).  ``mirror`` is -1 except on the ``k3 = 0``
        plane where the conjugate partner must also be written."""
        n_grid = int(n_grid)
        hit = self._maps.get(n_grid)
        if hit is not None:
            return hit
        n = self.modes
        conj = n[:, 2] < 0
        r = np.where(conj[:, None], -n, n)
        h = n_grid // 2 + 1
        idx = ((r[:, 0] % n_grid) * n_grid + (r[:, 1] % n_grid)) * h + r[:, 2]
        mirror = np.where(
            n[:, 2] == 0,
            ((-n[:, 0] % n_grid) * n_grid + (-n[:, 1] % n_grid)) * h,
            -1,
        )
        out = (idx.astype(np.int64), mirror.astype(np.int64), conj)
        for a in out:
            a.setflags(write=False)
        self._maps[n_grid] = out
        return out


def min_grid(n_max):
    """Smallest grid that represents a band-limited field without aliasing."""
    return 2 * int(n_max) + 2


def dealias_grid(n_max):
    """Grid on which cubic products of ``|n| <= n_max`` fields project back
    onto the band without aliasing (needs more than ``4 n_max`` points)."""
    return int(sfft.next_fast_len(max(4 * int(n_max) + 1, min_grid(n_max)), real=True))


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectrumPair:
    """Coefficients of an initial-data pair ``(u0, u1)``.

    ``a[j]`` is the zero mode of ``u_j``; ``b[j, k]`` and ``c[j, k]`` are the
    cosine/sine coefficients of mode ``lattice.modes[k]``.
    """

    s: float
    n_max: int
    lattice: Lattice
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        m = len(self.lattice)
        a, b, c = _frozen(self.a), _frozen(self.b), _frozen(self.c)
        if a.shape != (2,) or b.shape != (2, m) or c.shape != (2, m):
            raise InvalidInputError(
                f"coefficient shapes {a.shape}, {b.shape}, {c.shape} do not match {m} modes")
        if not (np.isfinite(a).all() and np.isfinite(b).all() and np.isfinite(c).all()):
            raise InvalidInputError("non-finite coefficient")
        if m and self.lattice.abs_n.max() > self.n_max + 1e-12:
            raise InvalidInputError("mode outside the truncation radius n_max")
        if not math.isfinite(self.s):
            raise InvalidInputError("Sobolev index must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "n_max", int(self.n_max))
        object.__setattr__(self, "s", float(self.s))

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, n_max, s=0.0, lattice=None):
        lat = Lattice.ball(n_max) if lattice is None else lattice
        m = len(lat)
        return cls(s, n_max, lat, np.zeros(2), np.zeros((2, m)), np.zeros((2, m)))

    @classmethod
    def single_mode(cls, n, n_max=None, s=0.0, b0=1.0, c0=0.0, b1=0.0, c1=0.0):
        n = np.asarray(n, dtype=np.int64).reshape(1, 3)
        if n_max is None:
            n_max = int(math.ceil(math.sqrt(float((n * n).sum()))))
        return cls(s, n_max, Lattice(n), np.zeros(2),
                   np.array([[b0], [b1]]), np.array([[c0], [c1]]))

    @classmethod
    def from_packed(cls, template, q0, q1):
        m = len(template.lattice)
        q0 = np.asarray(q0, dtype=float)
        q1 = np.asarray(q1, dtype=float)
        return cls(template.s, template.n_max, template.lattice,
                   np.array([q0[0], q1[0]]),
                   np.stack([q0[1:1 + m], q1[1:1 + m]]),
                   np.stack([q0[1 + m:], q1[1 + m:]]))

    def replace(self, **kw):
        d = dict(s=self.s, n_max=self.n_max, lattice=self.lattice, a=self.a, b=self.b, c=self.c)
        d.update(kw)
        return SpectrumPair(**d)

    # views ------------------------------------------------------------------
    @property
    def modes(self):
        return self.lattice.modes

    def packed(self, j):
        """Packed coefficient vector of component ``j`` (0: position, 1: velocity)."""
        return np.concatenate(([self.a[j]], self.b[j], self.c[j]))

    def packed_slots(self):
        """All coefficients in slot order ``a0, a1, b0.., c0.., b1.., c1..``."""
        return np.concatenate((self.a, self.b[0], self.c[0], self.b[1], self.c[1]))

    @classmethod
    def from_slots(cls, template, slots):
        m = len(template.lattice)
        slots = np.asarray(slots, dtype=float)
        a = slots[:2]
        b0, c0, b1, c1 = (slots[2 + i * m:2 + (i + 1) * m] for i in range(4))
        return template.replace(a=a, b=np.stack([b0, b1]), c=np.stack([c0, c1]))

    def same_index_set(self, other):
        return self.lattice == other.lattice

    def _check_compatible(self, other):
        if not isinstance(other, SpectrumPair) or not self.same_index_set(other):
            raise InvalidInputError("spectra live on different index sets")

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        self._check_compatible(other)
        return self.replace(a=self.a + other.a, b=self.b + other.b, c=self.c + other.c)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.replace(a=self.a - other.a, b=self.b - other.b, c=self.c - other.c)

    def scaled(self, factor):
        return self.replace(a=self.a * factor, b=self.b * factor, c=self.c * factor)

    def __eq__(self, other):
        if not isinstance(other, SpectrumPair):
            return NotImplemented
        return (self.s == other.s and self.n_max == other.n_max
                and self.same_index_set(other)
                and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b)
                and np.array_equal(self.c, other.c))

    __hash__ = None

    # serialization ----------------------------------------------------------
    def to_json(self):
        """JSON text with every coefficient printed to 17 significant digits."""
        f = _num
        lines = ["{", f'  "s": {f(self.s)},', f'  "n_max": {self.n_max},',
                 f'  "a0": {f(self.a[0])},', f'  "a1": {f(self.a[1])},', '  "modes": [']
        rows = []
        for k, n in enumerate(self.modes.tolist()):
            rows.append(
                f'    {{"n": [{n[0]}, {n[1]}, {n[2]}], "b0": {f(self.b[0, k])}, '
                f'"c0": {f(self.c[0, k])}, "b1": {f(self.b[1, k])}, "c1": {f(self.c[1, k])}}}')
        lines.append(",\n".join(rows))
        lines.append("  ]")
        lines.append("}")
        return "\n".join(line for line in lines if line) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text) if isinstance(text, str) else dict(text)
            modes = [m["n"] for m in d["modes"]]
            b = [[m["b0"] for m in d["modes"]], [m["b1"] for m in d["modes"]]]
            c = [[m["c0"] for m in d["modes"]], [m["c1"] for m in d["modes"]]]
            n_max = int(d["n_max"])
            lat = Lattice(modes) if modes else Lattice(np.zeros((0, 3)))
            if len(lat) and lat == Lattice.ball(n_max):
                lat = Lattice.ball(n_max)
            return cls(float(d["s"]), n_max, lat,
                       np.array([d["a0"], d["a1"]], dtype=float),
                       np.array(b, dtype=float).reshape(2, -1),
                       np.array(c, dtype=float).reshape(2, -1))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise InvalidInputError(f"malformed SpectrumPair JSON: {exc}") from exc


def _num(x):
    return format(float(x), ".17g")


def save_spectrum(spec, path):
    with open(path, "w") as fh:
        fh.write(spec.to_json())


def load_spectrum(path):
    with open(path) as fh:
        return SpectrumPair.from_json(fh.read())


@dataclass(frozen=True, eq=False)
class GridField:
    """Real samples of a scalar field on the uniform ``N^3`` grid."""

    values: np.ndarray
    n_max: int = field(default=0)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise InvalidInputError("GridField needs a cubic N x N x N array")
        if not np.isfinite(v).all():
            raise InvalidInputError("non-finite grid value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_grid(self):
        return self.values.shape[0]

    @staticmethod
    def coordinates(n_grid):
        """1-D coordinate vector ``2 pi j / N``."""
        return 2.0 * np.pi * np.arange(n_grid) / n_grid


class WindowedNorm(NamedTuple):
    """Time-windowed weighted space-time norm and the bound on the mass
    (to the power ``p1``) left outside the window."""

    value: float
    tail_bound: float


# --------------------------------------------------------------------------
# norms and projectors
# --------------------------------------------------------------------------

def _packed_sq_weights(lat, sigma):
    w = lat.bracket_sq ** sigma
    w = w * 0.5
    w[0] = 1.0
    return w


def sobolev_norm(S, sigma, component="pair"):
    """``H^sigma`` norm of ``u0`` (component 0), ``H^(sigma-1)`` norm of
    ``u1`` (component 1), or the root-sum-square of both ("pair")."""
    if not all(np.isfinite(x).all() for x in (S.a, S.b, S.c)):
        raise InvalidInputError("non-finite coefficient")
    sigma = float(sigma)
    lat = S.lattice
    out = 0.0
    comps = (0, 1) if component == "pair" else (int(component),)
    for j in comps:
        if j not in (0, 1):
            raise InvalidInputError(f"unknown component {component!r}")
        w = _packed_sq_weights(lat, sigma - j)
        q = S.packed(j)
        out += float(np.dot(w, q * q))
    return math.sqrt(out)


def project_low(S, N):
    """Keep the zero mode and every ``|n| <= N``."""
    if N < 0:
        raise InvalidInputError("N must be >= 0")
    keep = S.lattice.abs_n <= N + 1e-12
    return S.replace(b=S.b * keep, c=S.c * keep)


def project_high(S, N):
    """Identity minus :func:`project_low`."""
    if N < 0:
        raise InvalidInputError("N must be >= 0")
    keep = S.lattice.abs_n > N + 1e-12
    return S.replace(a=np.zeros(2), b=S.b * keep, c=S.c * keep)


def project_zero(S):
    """Keep only the zero modes ``a_j``."""
    return S.replace(b=np.zeros_like(S.b), c=np.zeros_like(S.c))


def _propagator(omega, t):
    """(cos(wt), sin(wt)/w, w sin(wt)) with the w = 0 limits (1, t, 0)."""
    wt = omega * t
    cos_w = np.cos(wt)
    sin_w = np.sin(wt)
    safe = np.where(omega > 0, omega, 1.0)
    sin_over_w = np.where(omega > 0, sin_w / safe, t)
    return cos_w, sin_over_w, omega * sin_w


def free_packed(q0, q1, omega, t):
    """Free wave propagation of packed coefficient vectors; returns
    (position, velocity).  ``t`` may be an array of times, giving
    ``(len(t), len(q0))`` outputs."""
    t = np.asarray(t, dtype=float)
    cos_w, sin_over_w, w_sin = _propagator(omega, t[..., None] if t.ndim else t)
    return q0 * cos_w + q1 * sin_over_w, q1 * cos_w - q0 * w_sin


def free_evolve(S, t):
    """The pair ``(S(t)V, d/dt S(t)V)`` of the linear wave flow."""
    t = float(t)
    if t == 0.0:
        return S
    q0, q1 = free_packed(S.packed(0), S.packed(1), S.lattice.omega, t)
    return SpectrumPair.from_packed(S, q0, q1)


# --------------------------------------------------------------------------
# grid transforms
# --------------------------------------------------------------------------

def _check_grid(n_max, n_grid):
    if n_grid < min_grid(n_max):
        raise AliasingError(
            f"N_grid={n_grid} aliases modes up to n_max={n_max}; need >= {min_grid(n_max)}")


def _spectrum_shape(n_grid):
    return (n_grid, n_grid, n_grid // 2 + 1)


def synthesize_packed(q, lat, n_grid):
    """Grid samples of the field with packed coefficients ``q``.  Leading
    batch dimensions of ``q`` are carried through."""
    idx, mirror, conj = lat.fft_map(n_grid)
    q = np.asarray(q, dtype=float)
    m = len(lat)
    shp = _spectrum_shape(n_grid)
    size = shp[0] * shp[1] * shp[2]
    if q.ndim == 1:
        spec = np.zeros(size, dtype=np.complex128)
        kern.scatter(spec, idx, mirror, conj, q, m)
        spec = spec.reshape(shp)
        return sfft.irfftn(spec, s=(n_grid,) * 3, axes=(0, 1, 2), norm="forward")
    lead = q.shape[:-1]
    q2 = q.reshape(-1, q.shape[-1])
    spec = np.zeros((q2.shape[0], size), dtype=np.complex128)
    val = 0.5 * (q2[:, 1:1 + m] - 1j * q2[:, 1 + m:])
    val = np.where(conj, np.conj(val), val)
    spec[:, 0] = q2[:, 0]
    spec[:, idx] = val
    has = mirror >= 0
    spec[:, mirror[has]] = np.conj(val[:, has])
    spec = spec.reshape((-1,) + shp)
    out = sfft.irfftn(spec, s=(n_grid,) * 3, axes=(1, 2, 3), norm="forward")
    return out.reshape(lead + (n_grid,) * 3)


def analyze_packed(values, lat):
    """Packed coefficients of the band-limited grid field ``values`` on ``lat``."""
    n_grid = values.shape[-1]
    idx, _, conj = lat.fft_map(n_grid)
    m = len(lat)
    spec = sfft.rfftn(values, axes=(-3, -2, -1), norm="forward")
    if values.ndim == 3:
        q = np.empty(1 + 2 * m)
        kern.gather(spec.ravel(), idx, conj, m, q)
        return q
    flat = spec.reshape(spec.shape[:-3] + (-1,))
    val = flat[..., idx]
    val = np.where(conj, np.conj(val), val)
    return np.concatenate((flat[..., :1].real, 2.0 * val.real, -2.0 * val.imag), axis=-1)


def synthesize(S, component, n_grid):
    """Evaluate ``u_component`` on the ``n_grid^3`` grid."""
    n_grid = int(n_grid)
    _check_grid(S.n_max, n_grid)
    vals = synthesize_packed(S.packed(int(component)), S.lattice, n_grid)
    return GridField(vals, S.n_max)


def analyze(F, n_max, lattice=None):
    """Coefficient table ``(a, b, c)`` of a band-limited grid field on the
    half-lattice ball of radius ``n_max`` (or on ``lattice``)."""
    _check_grid(n_max, F.n_grid)
    lat = Lattice.ball(n_max) if lattice is None else lattice
    q = analyze_packed(F.values, lat)
    m = len(lat)
    return q[0], q[1:1 + m], q[1 + m:]


def lp_norm(F, p):
    """``L^p`` norm for the probability measure on the torus (grid average);
    ``p = inf`` gives the maximum modulus."""
    values = F.values if isinstance(F, GridField) else np.asarray(F)
    return _lp(values, p)


def _lp(values, p):
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise InvalidInputError("p must be >= 1 or inf")
    if math.isinf(p):
        return kern.max_abs(values)
    return kern.power_mean(values, p) ** (1.0 / p)


def _lp_batch(values, p):
    """Per-leading-index L^p norms of a stack of grids."""
    flat = values.reshape(values.shape[0], -1)
    if math.isinf(p):
        return np.abs(flat).max(axis=1)
    if p == 2.0:
        return np.sqrt(np.einsum("ij,ij->i", flat, flat) / flat.shape[1])
    return np.mean(np.abs(flat) ** p, axis=1) ** (1.0 / p)


def l2_packed(q):
    """Exact L^2 norm of a field from its packed coefficients (Parseval)."""
    q = np.asarray(q)
    return np.sqrt(q[..., 0] ** 2 + 0.5 * np.sum(q[..., 1:] ** 2, axis=-1))


_PROJECTORS = ("full", "nonzero", "high")


def _apply_projector(S, projector, N):
    if projector == "full":
        return S
    if projector == "nonzero":
        return project_high(S, 0)
    if projector == "high":
        if N is None:
            raise InvalidInputError("projector 'high' needs N")
        return project_high(S, N)
    raise InvalidInputError(f"unknown projector {projector!r}; expected one of {_PROJECTORS}")


def weighted_spacetime_norm(S, p1, p2, delta, T_max, dt, projector="full", N=None,
                            n_grid=None, chunk=128):
    """``|| <t>^-delta P S(t)V ||_{L^p1(R_t; L^p2)}`` on the window
    ``[-T_max, T_max]`` by the trapezoid rule with step ``dt``.

    The returned ``tail_bound`` bounds the neglected ``|t| > T_max`` part of
    the ``p1``-th power, taking the slice norm to be at most its largest
    observed value.
    """
    p1 = float(p1)
    p2 = float(p2)
    delta = float(delta)
    if not (1.0 <= p1 < math.inf):
        raise InvalidInputError("p1 must be finite and >= 1")
    if delta * p1 <= 1.0:
        raise InvalidInputError(f"delta={delta} must exceed 1/p1={1 / p1:.6g}: weight not integrable")
    if dt <= 0 or T_max <= 0:
        raise InvalidInputError("dt and T_max must be positive")
    P = _apply_projector(S, projector, N)
    n_t = int(round(2 * T_max / dt))
    times = np.linspace(-T_max, T_max, n_t + 1)
    slice_norms = slice_norm_series(P, times, p2, n_grid=n_grid, chunk=chunk)
    return _weighted_from_slices(times, slice_norms, p1, delta, T_max)


def _weighted_from_slices(times, slice_norms, p1, delta, T_max):
    weight = (1.0 + times ** 2) ** (-0.5 * delta * p1)
    integrand = weight * slice_norms ** p1
    total = float(np.trapezoid(integrand, times)) if hasattr(np, "trapezoid") else float(
        np.trapz(integrand, times))
    peak = float(slice_norms.max()) if slice_norms.size else 0.0
    tail = peak ** p1 * 2.0 * T_max ** (1.0 - delta * p1) / (delta * p1 - 1.0)
    return WindowedNorm(total ** (1.0 / p1), tail)


def slice_norm_series(S, times, p2, n_grid=None, chunk=128):
    """``||S(t)V||_{L^p2}`` (position component) for each time in ``times``."""
    times = np.asarray(times, dtype=float)
    lat = S.lattice
    q0, q1 = S.packed(0), S.packed(1)
    out = np.empty(times.shape[0])
    if not (np.any(q0) or np.any(q1)):
        out[:] = 0.0
        return out
    p2 = float(p2)
    if p2 == 2.0:
        pos, _ = free_packed(q0, q1, lat.omega, times)
        return l2_packed(pos)
    n_grid = min_grid(S.n_max) if n_grid is None else int(n_grid)
    _check_grid(S.n_max, n_grid)
    for lo in range(0, times.shape[0], chunk):
        tt = times[lo:lo + chunk]
        pos, _ = free_packed(q0, q1, lat.omega, tt)
        grids = synthesize_packed(pos, lat, n_grid)
        out[lo:lo + chunk] = _lp_batch(grids, p2)
    return out
