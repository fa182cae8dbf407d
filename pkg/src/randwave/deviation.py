"""Monte-Carlo tail probabilities, event-set rates and the continuity probe.

Every trial ``k`` draws its randomization from the stream
``SeedSpec(master_seed, first_stream + k)``, so results do not depend on
batch size, worker count or trial order.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as kern
from .errors import ConfigError, InvalidInputError
from .evolve import evolve_full
from .randomize import SeedSpec, draw_multipliers
from .spectral import (
    SpectrumPair, _lp_batch, _packed_sq_weights, _weighted_from_slices, dealias_grid,
    _propagator, free_packed, l2_packed, min_grid, sobolev_norm, synthesize_packed,
)

__all__ = [
    "Z95", "wilson", "TailCurve", "TailFit", "estimate_tail", "fit_tail_exponent",
    "make_functional", "FUNCTIONALS", "EventRates", "event_rates", "event_values",
    "rates_from_values", "EVENT_SETS",
    "calibrate_scales", "xt_distance", "ContinuityReport", "continuity_probe",
]

Z95 = 1.959963984540054
EVENT_SETS = ("F", "G", "H", "K")


def wilson(k, n, z=Z95):
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    k = np.asarray(k, dtype=float)
    if n <= 0:
        raise InvalidInputError("n must be positive")
    p = k / n
    z2 = z * z
    den = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / den
    lo = np.clip(centre - half, 0.0, 1.0)
    hi = np.clip(centre + half, 0.0, 1.0)
    # exact endpoints at k = 0 and k = n (the formula is off by rounding)
    lo = np.where(k == 0, 0.0, np.minimum(lo, p))
    hi = np.where(k == n, 1.0, np.maximum(hi, p))
    return lo, hi


def _stream_ids(seed, trials):
    start = int(seed.stream_id)
    return np.arange(start, start + trials, dtype=np.uint64)


def _as_seed(seed):
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed), 0)


def _map_batches(fn, items, workers):
    """``[fn(x) for x in items]``, optionally on a process pool; order kept."""
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# functionals of randomized data
# --------------------------------------------------------------------------

def _split_slots(slots, m):
    """Packed ``(q0, q1)`` from slot rows ``[a0, a1, b0.., c0.., b1.., c1..]``."""
    a0 = slots[:, :1]
    a1 = slots[:, 1:2]
    b0 = slots[:, 2:2 + m]
    c0 = slots[:, 2 + m:2 + 2 * m]
    b1 = slots[:, 2 + 2 * m:2 + 3 * m]
    c1 = slots[:, 2 + 3 * m:]
    return np.hstack((a0, b0, c0)), np.hstack((a1, b1, c1))


def _packed_mask(lat, keep_modes):
    return np.concatenate(([1.0], keep_modes, keep_modes))


def _lp_low(template, p=2.0, N=None, n_grid=None):
    lat = template.lattice
    N = template.n_max if N is None else int(N)
    keep = _packed_mask(lat, (lat.abs_n <= N + 1e-12).astype(float))
    p = float(p)
    grid = n_grid or dealias_grid(max(N, 1))

    def fn(slots):
        q0, _ = _split_slots(slots, len(lat))
        q0 = q0 * keep
        if p == 2.0:
            return l2_packed(q0)
        return _lp_batch(synthesize_packed(q0, lat, grid), p)
    return fn


def _hs_pair(template, sigma=None):
    lat = template.lattice
    sigma = template.s if sigma is None else float(sigma)
    w0 = _packed_sq_weights(lat, sigma)
    w1 = _packed_sq_weights(lat, sigma - 1.0)

    def fn(slots):
        q0, q1 = _split_slots(slots, len(lat))
        return np.sqrt(q0 * q0 @ w0 + q1 * q1 @ w1)
    return fn


def _weighted(template, p1=2.0, p2=math.inf, delta=1.0, T_max=5.0, dt=0.1,
              projector="nonzero", N=None, n_grid=None):
    lat = template.lattice
    p1, delta = float(p1), float(delta)
    if p1 < 1 or delta * p1 <= 1.0:
        raise ConfigError(f"weighted norm needs delta > 1/p1 (delta={delta}, p1={p1})")
    if projector == "full":
        keep_modes = np.ones(len(lat))
        zero = 1.0
    elif projector == "nonzero":
        keep_modes, zero = np.ones(len(lat)), 0.0
    elif projector == "high":
        if N is None:
            raise ConfigError("projector 'high' needs N")
        keep_modes, zero = (lat.abs_n > N + 1e-12).astype(float), 0.0
    else:
        raise ConfigError(f"unknown projector {projector!r}")
    keep = _packed_mask(lat, keep_modes)
    keep[0] = zero
    times = np.linspace(-T_max, T_max, int(round(2 * T_max / dt)) + 1)
    grid = n_grid or min_grid(template.n_max)
    p2 = float(p2)

    def fn(slots):
        q0, q1 = _split_slots(slots, len(lat))
        out = np.empty(slots.shape[0])
        for i in range(slots.shape[0]):
            pos, _ = free_packed(q0[i] * keep, q1[i] * keep, lat.omega, times)
            norms = l2_packed(pos) if p2 == 2.0 else _lp_batch(synthesize_packed(pos, lat, grid), p2)
            out[i] = _weighted_from_slices(times, norms, p1, delta, T_max).value
        return out
    return fn


FUNCTIONALS = {"lp_low": _lp_low, "hs_pair": _hs_pair, "weighted": _weighted}


def make_functional(name, template, **params):
    """Vectorised functional ``slots -> values`` of randomized data.

    ``lp_low``: ``||P_N v0||_{L^p}`` (params ``p``, ``N``);
    ``hs_pair``: ``H^sigma`` norm of the pair (``sigma``, default ``s``);
    ``weighted``: windowed ``||<t>^-delta P S(t)V||_{L^p1_t L^p2_x}``
    (``p1, p2, delta, T_max, dt, projector, N``).
    """
    if name not in FUNCTIONALS:
        raise ConfigError(f"unknown functional {name!r}; expected one of {sorted(FUNCTIONALS)}")
    try:
        return FUNCTIONALS[name](template, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for functional {name!r}: {exc}") from None


# --------------------------------------------------------------------------
# tail curves
# --------------------------------------------------------------------------

@dataclass
class TailCurve:
    lambdas: np.ndarray
    p_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    trials: int
    counts: np.ndarray
    functional: str = ""
    values: Optional[np.ndarray] = None

    @classmethod
    def from_values(cls, values, lambdas, functional=""):
        values = np.asarray(values, dtype=float)
        lambdas = np.asarray(lambdas, dtype=float)
        counts = (values[None, :] > lambdas[:, None]).sum(axis=1)
        lo, hi = wilson(counts, values.size)
        return cls(lambdas, counts / values.size, lo, hi, values.size, counts, functional, values)

    def to_csv(self, path, run_hash=None):
        with open(path, "w", newline="") as fh:
            if run_hash:
                fh.write(f"# run_hash {run_hash}\n")
            wr = csv.writer(fh)
            wr.writerow(("lambda", "p_hat", "ci_lo", "ci_hi", "count", "trials"))
            for row in zip(self.lambdas, self.p_hat, self.ci_lo, self.ci_hi, self.counts):
                wr.writerow([format(float(x), ".17g") for x in row[:4]] + [int(row[4]), self.trials])


def _tail_batch(args):
    name, params, base, law, master, ids = args
    fn = make_functional(name, base, **params)
    slots = base.packed_slots() * draw_multipliers(law, master, ids, base.packed_slots().size)
    return fn(slots)


def estimate_tail(functional, base, law, lambdas, trials, seed, *, params=None, batch=500,
                  workers=1, keep_values=False):
    """Exceedance probabilities ``P(X > lambda)`` of a named functional of
    ``randomize(base, law, .)`` with Wilson 95% intervals."""
    params = dict(params or {})
    if functional not in FUNCTIONALS:
        raise ConfigError(f"unknown functional {functional!r}; expected one of {sorted(FUNCTIONALS)}")
    if trials < 100:
        raise ConfigError("trials must be >= 100")
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0 or np.any(np.diff(lambdas) <= 0):
        raise ConfigError("lambdas must be a non-empty increasing grid")
    make_functional(functional, base, **params)  # validate early
    seed = _as_seed(seed)
    ids = _stream_ids(seed, trials)
    jobs = [(functional, params, base, law, seed.master_seed, ids[i:i + batch])
            for i in range(0, trials, batch)]
    values = np.concatenate(_map_batches(_tail_batch, jobs, workers))
    curve = TailCurve.from_values(values, lambdas, functional)
    if not keep_values:
        curve.values = None
    return curve


# r^2 margin by which an exponential tail must beat the gaussian model to flag
EXP_PREFERENCE = 0.01


class TailFit(NamedTuple):
    c_hat: float
    C_hat: float
    r2: float
    n_points: int
    r2_exponential: float
    flagged: bool


def _wls(x, y, w):
    X = np.column_stack((np.ones_like(x), x))
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * resid ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return coef, r2


def fit_tail_exponent(curve, r2_min=0.95):
    """Weighted least squares of ``log p_hat`` on ``lambda^2``.

    Weights are the inverse delta-method variances ``n p / (1 - p)``.  The
    fit is flagged when ``r^2 < r2_min`` or when ``log p`` linear in
    ``lambda`` (``r2_exponential``) fits clearly better than the gaussian
    model.
    """
    p = np.asarray(curve.p_hat, dtype=float)
    lam = np.asarray(curve.lambdas, dtype=float)
    ok = (p > 0) & (p < 1)
    if ok.sum() < 4:
        raise InvalidInputError(f"need >= 4 informative points (0 < p < 1), have {int(ok.sum())}")
    p, lam = p[ok], lam[ok]
    w = curve.trials * p / (1.0 - p)
    w = w / w.max()
    y = np.log(p)
    (a, b), r2 = _wls(lam * lam, y, w)
    _, r2_exp = _wls(lam, y, w)
    flagged = bool(r2 < r2_min or r2_exp - r2 > EXP_PREFERENCE)
    return TailFit(float(-b), float(math.exp(a)), float(r2), int(ok.sum()), float(r2_exp), flagged)


# --------------------------------------------------------------------------
# event sets F_N, G_N, H_N, K_N
# --------------------------------------------------------------------------

def _event_exponents(s, eps):
    return {"F": 1.0 - s + eps, "G": eps, "H": eps - s, "K": eps - s}


def _event_batch(args):
    (base, law, master, ids, N_list, delta, delta_t, T_max, dt, n_grid) = args
    lat = base.lattice
    m = len(lat)
    slots = base.packed_slots() * draw_multipliers(law, master, ids, base.packed_slots().size)
    q0, q1 = _split_slots(slots, m)
    w0 = _packed_sq_weights(lat, 1.0)
    w1 = _packed_sq_weights(lat, 0.0)
    times = np.linspace(-T_max, T_max, int(round(2 * T_max / dt)) + 1)
    cos_w, sin_over_w, _ = _propagator(lat.omega, times[:, None])
    grid_hi = n_grid or min_grid(base.n_max)
    out = {k: np.empty((len(ids), len(N_list))) for k in EVENT_SETS}
    for j, N in enumerate(N_list):
        inside = lat.abs_n <= N + 1e-12
        low = _packed_mask(lat, inside.astype(float))
        high = 1.0 - low
        ql0, ql1 = q0 * low, q1 * low
        out["F"][:, j] = np.sqrt(ql0 * ql0 @ w0 + ql1 * ql1 @ w1)
        lat_low = lat.select(inside)
        keep = np.concatenate(([0], 1 + np.flatnonzero(inside), 1 + m + np.flatnonzero(inside)))
        g_grid = dealias_grid(N)
        hi_idx = np.flatnonzero(high)
        lat_high = lat.select(~inside)
        c_hi, s_hi = cos_w[:, hi_idx], sin_over_w[:, hi_idx]
        for i in range(len(ids)):
            u = synthesize_packed(ql0[i, keep], lat_low, g_grid)
            out["G"][i, j] = kern.power_mean(u, 4) ** 0.25
            pos = np.zeros((times.size, 1 + 2 * len(lat_high)))
            pos[:, 1:] = q0[i, hi_idx] * c_hi + q1[i, hi_idx] * s_hi
            grids = synthesize_packed(pos, lat_high, grid_hi)
            sup, mean6 = kern.row_stats(grids.reshape(times.size, -1), 6.0)
            out["H"][i, j] = _weighted_from_slices(times, sup, 2.0, delta, T_max).value
            out["K"][i, j] = _weighted_from_slices(times, mean6 ** (1.0 / 6.0), 3.0, delta_t,
                                                   T_max).value
    return out


def _check_event_params(base, s, eps, delta, delta_t, N_list, trials, T_max, dt):
    if not (0.0 <= s < 1.0):
        raise ConfigError("s must lie in [0, 1)")
    if not eps > 0:
        raise ConfigError("eps must be positive")
    if not delta > 0.5:
        raise ConfigError(f"delta={delta} must exceed 1/2")
    if not delta_t > 1.0 / 3.0:
        raise ConfigError(f"delta_tilde={delta_t} must exceed 1/3")
    if trials < 1:
        raise ConfigError("trials must be positive")
    if not (T_max > 0 and dt > 0):
        raise ConfigError("T_max and dt must be positive")
    N_list = [int(n) for n in N_list]
    if not N_list or any(n < 1 or n & (n - 1) for n in N_list):
        raise ConfigError(f"N list must hold powers of two, got {N_list}")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N list must be increasing")
    if N_list[-1] > base.n_max:
        raise ConfigError(f"N={N_list[-1]} exceeds the base truncation n_max={base.n_max}")
    return N_list


def event_values(base, law, N_list, trials, seed, *, delta=1.0, delta_tilde=2.0 / 3.0,
                 T_max=4.0, dt=0.5, n_grid=None, batch=250, workers=1):
    """Raw functionals behind the four event sets, arrays ``(trials, len(N_list))``:
    F: ``||P_N V||_{H^1}``, G: ``||P_N v0||_{L^4}``,
    H: windowed ``||<t>^-delta S(t) P^N V||_{L^2_t L^inf_x}``,
    K: windowed ``||<t>^-delta_tilde S(t) P^N V||_{L^3_t L^6_x}``."""
    seed = _as_seed(seed)
    ids = _stream_ids(seed, trials)
    jobs = [(base, law, seed.master_seed, ids[i:i + batch], list(N_list), delta, delta_tilde,
             T_max, dt, n_grid) for i in range(0, trials, batch)]
    parts = _map_batches(_event_batch, jobs, workers)
    return {k: np.concatenate([p[k] for p in parts]) for k in EVENT_SETS}


@dataclass
class EventRates:
    """Membership rates per N; ``complement[k]`` is ``1 - rate[k]``."""

    N: list
    s: float
    eps: float
    delta: float
    delta_tilde: float
    trials: int
    counts: dict
    scales: dict
    rates: dict = field(init=False)
    ci: dict = field(init=False)

    def __post_init__(self):
        self.rates = {k: np.asarray(v) / self.trials for k, v in self.counts.items()}
        self.ci = {k: wilson(v, self.trials) for k, v in self.counts.items()}

    def complement(self, k):
        return 1.0 - self.rates[k]

    def complement_ci(self, k):
        lo, hi = self.ci[k]
        return 1.0 - hi, 1.0 - lo

    def to_csv(self, path, run_hash=None):
        with open(path, "w", newline="") as fh:
            if run_hash:
                fh.write(f"# run_hash {run_hash}\n")
            wr = csv.writer(fh)
            wr.writerow(("N", "set", "rate", "ci_lo", "ci_hi", "complement", "count", "trials",
                         "threshold_scale"))
            for j, n in enumerate(self.N):
                for k in (*EVENT_SETS, "E"):
                    lo, hi = self.ci[k]
                    wr.writerow([n, k] + [format(float(x), ".17g") for x in
                                          (self.rates[k][j], lo[j], hi[j], 1 - self.rates[k][j])]
                                + [int(self.counts[k][j]), self.trials,
                                   format(float(self.scales.get(k, 1.0)), ".17g")])


def _thresholds(N_list, s, eps, scales):
    ex = _event_exponents(s, eps)
    N = np.asarray(N_list, dtype=float)
    return {k: scales.get(k, 1.0) * N ** ex[k] for k in EVENT_SETS}


def rates_from_values(values, N_list, s, eps, delta, delta_tilde, scales=None):
    scales = dict(scales or {})
    thr = _thresholds(N_list, s, eps, scales)
    member = {k: values[k] <= thr[k][None, :] for k in EVENT_SETS}
    member["E"] = member["F"] & member["G"] & member["H"] & member["K"]
    trials = next(iter(values.values())).shape[0]
    counts = {k: v.sum(axis=0) for k, v in member.items()}
    return EventRates(list(N_list), s, eps, delta, delta_tilde, trials, counts,
                      {k: scales.get(k, 1.0) for k in EVENT_SETS})


def event_rates(base, law, s, eps, delta, delta_tilde, N_list, trials, seed, T_max, dt, *,
                scales=None, n_grid=None, batch=250, workers=1):
    """Empirical rates of ``F_N, G_N, H_N, K_N`` and their intersection ``E_N``.

    Membership thresholds are ``scale * N^(1-s+eps)`` (F), ``scale * N^eps``
    (G) and ``scale * N^(eps-s)`` (H, K); ``scales`` defaults to 1 for every
    set (see :func:`calibrate_scales`).
    """
    N_list = _check_event_params(base, s, eps, delta, delta_tilde, N_list, trials, T_max, dt)
    vals = event_values(base, law, N_list, trials, seed, delta=delta, delta_tilde=delta_tilde,
                        T_max=T_max, dt=dt, n_grid=n_grid, batch=batch, workers=workers)
    return rates_from_values(vals, N_list, s, eps, delta, delta_tilde, scales)


def calibrate_scales(values, N_list, s, eps, N_ref=None, complement=0.5):
    """Threshold constants putting the complement rate of every set at
    ``N_ref`` (default: smallest N) equal to ``complement`` on a pilot
    sample ``values`` from :func:`event_values`."""
    j = 0 if N_ref is None else list(N_list).index(N_ref)
    ex = _event_exponents(s, eps)
    N = float(N_list[j])
    return {k: float(np.quantile(values[k][:, j], 1.0 - complement)) / N ** ex[k]
            for k in EVENT_SETS}


# --------------------------------------------------------------------------
# continuity probe
# --------------------------------------------------------------------------

def xt_distance(traj1, traj2, s, T):
    """``sup_t ||(v1 - v2, d_t v1 - d_t v2)||_{H^s} + ||v1 - v2||_{L^4([0,T] x T^3)}``
    over the recorded times in ``[0, T]``; the time integral is the
    trapezoid rule and the space average is exact on the de-aliasing grid."""
    t1, t2 = np.asarray(traj1.times), np.asarray(traj2.times)
    if t1.shape != t2.shape or not np.allclose(t1, t2, rtol=0, atol=1e-12):
        raise InvalidInputError("trajectories are not on a common time grid")
    if traj1.states is None or traj2.states is None:
        raise InvalidInputError("xt_distance needs trajectories recorded with states")
    if not traj1.template.same_index_set(traj2.template):
        raise InvalidInputError("trajectories live on different index sets")
    win = t1 <= T + 1e-12
    if not np.any(win):
        raise InvalidInputError("no recorded time inside [0, T]")
    if t1[win][-1] < T - 1e-9 * max(1.0, T):
        raise InvalidInputError(f"time grid stops at {t1[win][-1]} < T={T}")
    lat = traj1.template.lattice
    diff = traj1.states[win] - traj2.states[win]
    w0 = _packed_sq_weights(lat, s)
    w1 = _packed_sq_weights(lat, s - 1.0)
    hs = np.sqrt(np.einsum("ij,j->i", diff[:, 0] ** 2, w0) + np.einsum("ij,j->i", diff[:, 1] ** 2, w1))
    grid = dealias_grid(traj1.template.n_max)
    quart = np.array([np.mean(synthesize_packed(d, lat, grid) ** 4) for d in diff[:, 0]])
    tt = t1[win]
    l4 = float(np.sum(0.5 * (quart[1:] + quart[:-1]) * np.diff(tt))) if tt.size > 1 else 0.0
    return float(hs.max() + l4 ** 0.25)


@dataclass
class ContinuityReport:
    eta: np.ndarray
    counts: np.ndarray
    quantile_levels: np.ndarray
    quantiles: np.ndarray          # (len(eta), len(levels))
    distances: np.ndarray          # (len(eta), trials)
    slope: float
    intercept: float
    residual: float
    rejections: int

    @property
    def median(self):
        return np.median(self.distances, axis=1)

    def to_json(self):
        return json.dumps({
            "eta": [float(x) for x in self.eta],
            "counts": [int(c) for c in self.counts],
            "quantile_levels": [float(x) for x in self.quantile_levels],
            "quantiles": [[float(format(x, ".17g")) for x in row] for row in self.quantiles],
            "median": [float(x) for x in self.median],
            "slope": self.slope, "intercept": self.intercept, "residual": self.residual,
            "rejections": int(self.rejections),
        }, indent=2)


def _unit_draw(base, law, rng, s):
    """A randomized draw rescaled to unit ``H^s`` norm."""
    slots = base.packed_slots() * law.sample(rng, base.packed_slots().size)
    W = SpectrumPair.from_slots(base, slots)
    nrm = sobolev_norm(W, s)
    if nrm == 0:
        raise InvalidInputError("base has zero H^s norm")
    return W.scaled(1.0 / nrm)


def _probe_trial(args):
    base, law, s, A, T, dt, eta_list, master, sid, record_every, max_resample = args
    rng = SeedSpec(master, sid).generator()
    rejected = 0
    eta_max = max(eta_list)
    for _ in range(max_resample):
        V = SpectrumPair.from_slots(base, base.packed_slots() * law.sample(rng, base.packed_slots().size))
        W = _unit_draw(base, law, rng, s)
        if sobolev_norm(V, s) <= A and sobolev_norm(V + W.scaled(eta_max), s) <= A:
            break
        rejected += 1
    else:
        raise InvalidInputError(f"could not draw a pair inside the ball A={A}")
    ref = evolve_full(V, T, dt, keep_states=True, record_every=record_every)
    dist = []
    for eta in eta_list:
        if eta == 0:
            dist.append(0.0)
            continue
        other = evolve_full(V + W.scaled(eta), T, dt, keep_states=True, record_every=record_every)
        dist.append(xt_distance(ref, other, s, T))
    return dist, rejected


def continuity_probe(base, law, s, A, T, eta_list, trials, seed, *, dt=0.01, record_every=5,
                     quantile_levels=(0.1, 0.25, 0.5, 0.75, 0.9), workers=1, max_resample=1000):
    """Paired flows from ``V`` and ``V + eta W`` (``W`` an independent draw
    of unit ``H^s`` norm) and the distribution of their ``X_T`` distance.

    One ``(V, W)`` pair per trial is shared by every ``eta`` (common random
    numbers); pairs leaving the ball of radius ``A`` are redrawn and counted.
    The slope is a least-squares fit of ``log median`` on ``log eta`` over
    the positive ``eta``.
    """
    eta = np.asarray(eta_list, dtype=float)
    if eta.size == 0 or np.any(eta < 0):
        raise ConfigError("eta values must be >= 0")
    if not (A > 0 and np.all(eta < A)):
        raise ConfigError("need 0 <= eta < A")
    if trials < 1:
        raise ConfigError("trials must be positive")
    seed = _as_seed(seed)
    ids = _stream_ids(seed, trials)
    jobs = [(base, law, s, A, T, dt, list(eta), seed.master_seed, int(i), record_every, max_resample)
            for i in ids]
    res = _map_batches(_probe_trial, jobs, workers)
    dist = np.array([r[0] for r in res]).T
    rejections = sum(r[1] for r in res)
    levels = np.asarray(quantile_levels, dtype=float)
    quant = np.quantile(dist, levels, axis=1).T
    med = np.median(dist, axis=1)
    pos = (eta > 0) & (med > 0)
    if pos.sum() >= 2:
        x, y = np.log(eta[pos]), np.log(med[pos])
        slope, intercept = np.polyfit(x, y, 1)
        resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    else:
        slope = intercept = resid = math.nan
    return ContinuityReport(eta, np.full(eta.size, trials), levels, quant, dist,
                            float(slope), float(intercept), resid, int(rejections))
