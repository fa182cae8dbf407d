"""Run configuration, experiment dispatch and result persistence.

A run reads one JSON config, writes its data files into an output
directory and finishes with ``manifest.json`` listing every file with its
sha256.  Data files carry a ``# run_hash`` line (hash of the config and code
version) instead of timestamps, so repeating a run reproduces them byte for
byte.
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .deviation import (
    FUNCTIONALS, continuity_probe, estimate_tail, event_rates, fit_tail_exponent,
)
from .errors import ConfigError, InvalidInputError
from .evolve import evolve_decomposed, evolve_full, fit_growth, gronwall_envelope, GRONWALL_C
from .kakutani import classify
from .randomize import LAWS, CoefficientLaw, SeedSpec, randomize
from .spectral import Lattice, SpectrumPair, dealias_grid, load_spectrum, sobolev_norm

__all__ = [
    "EXPERIMENTS", "RunConfig", "RunManifest", "load_config", "parse_override", "run",
    "make_base", "default_workers", "run_hash",
]

EXPERIMENTS = ("tails", "events", "growth", "continuity", "kakutani", "evolve")
WORKERS_ENV = "RANDWAVE_WORKERS"
_U64 = 2 ** 64


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class RunConfig:
    experiment: str
    base: Optional[str] = None
    law: str = "gaussian"
    s: Optional[float] = None
    n_max: Optional[int] = None
    n_grid: Optional[int] = None
    T: float = 1.0
    dt: float = 1e-2
    T_max: float = 4.0
    delta: float = 1.0
    delta_tilde: float = 2.0 / 3.0
    eps: float = 0.1
    p1: float = 2.0
    p2: float = 2.0
    lambdas: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    trials: int = 100
    master_seed: int = 0
    first_stream: int = 0
    out: Optional[str] = None
    # experiment specific
    functional: str = "lp_low"
    functional_params: dict = field(default_factory=dict)
    N_list: list = field(default_factory=lambda: [4, 8, 16])
    scales: dict = field(default_factory=dict)
    n_split: object = 0
    A: float = 1e3
    other: Optional[str] = None
    record_every: int = 1
    randomize: bool = True
    gronwall_C: float = GRONWALL_C
    workers: int = field(default_factory=default_workers)

    # keys that do not change results and are left out of the run hash
    _UNHASHED = ("out", "workers")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment'")
        return cls(**d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def hashed_dict(self):
        return {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}

    def validate(self):
        """Check every domain constraint of the chosen experiment; raises
        :class:`ConfigError` naming the violated one."""
        e = self.experiment
        if e not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {e!r}")
        if self.base is None:
            raise ConfigError("config needs a 'base' spectrum path")
        if self.law not in LAWS:
            raise ConfigError(f"law must be one of {LAWS}, got {self.law!r}")
        if not isinstance(self.trials, int) or isinstance(self.trials, bool) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        for name in ("master_seed", "first_stream"):
            v = getattr(self, name)
            if not (isinstance(v, int) and 0 <= v < _U64):
                raise ConfigError(f"{name} must be an integer in [0, 2^64)")
        if self.first_stream + self.trials > _U64:
            raise ConfigError("stream ids overflow 64 bits")
        if self.s is not None and not (0.0 <= self.s < 1.0):
            raise ConfigError(f"s must lie in [0, 1), got {self.s}")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if e in ("growth", "continuity", "evolve"):
            if not (self.dt > 0 and math.isfinite(self.dt)):
                raise ConfigError(f"dt must be positive, got {self.dt}")
            if not (self.T > 0 and math.isfinite(self.T)):
                raise ConfigError(f"T must be positive, got {self.T}")
            if abs(round(self.T / self.dt) * self.dt - self.T) > 1e-9 * max(1.0, self.T):
                raise ConfigError(f"T={self.T} must be a whole number of steps dt={self.dt}")
            if not (isinstance(self.record_every, int) and self.record_every >= 1):
                raise ConfigError("record_every must be a positive integer")
        if e == "growth" and self.n_split != "all":
            if not (isinstance(self.n_split, int) and self.n_split >= 0):
                raise ConfigError("n_split must be a non-negative integer or 'all'")
        if e == "tails":
            if self.trials < 100:
                raise ConfigError("tails needs trials >= 100")
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.size == 0 or np.any(np.diff(lam) <= 0):
                raise ConfigError("lambdas must be a non-empty increasing list")
            if self.functional not in FUNCTIONALS:
                raise ConfigError(f"unknown functional {self.functional!r}")
            if self.functional == "weighted":
                fp = self.functional_params
                p1 = float(fp.get("p1", self.p1))
                delta = float(fp.get("delta", self.delta))
                if delta * p1 <= 1.0:
                    raise ConfigError(f"weighted norm needs delta > 1/p1 (delta={delta}, p1={p1})")
        if e == "events":
            if not self.delta > 0.5:
                raise ConfigError(f"delta must exceed 1/2, got {self.delta}")
            if not self.delta_tilde > 1.0 / 3.0:
                raise ConfigError(f"delta_tilde must exceed 1/3, got {self.delta_tilde}")
            if not self.eps > 0:
                raise ConfigError("eps must be positive")
            if not (self.T_max > 0 and self.dt > 0):
                raise ConfigError("T_max and dt must be positive")
        if e == "continuity":
            eta = np.asarray(self.eta, dtype=float)
            if eta.size == 0 or np.any(eta < 0) or np.any(eta >= self.A):
                raise ConfigError("eta must be a non-empty list with 0 <= eta < A")
        if e == "kakutani":
            if self.other is None:
                raise ConfigError("kakutani needs an 'other' spectrum path")
            if self.law != "gaussian":
                raise ConfigError("kakutani classification is defined for the gaussian law only")
        if self.n_grid is not None and self.n_max is not None:
            if self.n_grid < dealias_grid(self.n_max):
                raise ConfigError(
                    f"n_grid={self.n_grid} aliases the cubic term; need >= {dealias_grid(self.n_max)}")
        return self


def parse_override(text):
    """``key=value`` with ``value`` parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def load_config(path=None, overrides=(), **extra):
    d = {}
    if path is not None:
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    for o in overrides:
        k, v = parse_override(o)
        d[k] = v
    d.update({k: v for k, v in extra.items() if v is not None})
    return RunConfig.from_dict(d)


def run_hash(cfg):
    blob = json.dumps({"config": cfg.hashed_dict(), "version": __version__}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# manifest and atomic writes
# --------------------------------------------------------------------------

def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str
    run_hash: str
    started: str
    finished: str
    streams: dict
    outputs: list

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    def verify(self, out_dir):
        """True iff every listed file still has its recorded hash."""
        return all(_sha256(os.path.join(out_dir, o["path"])) == o["sha256"] for o in self.outputs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    """JSON-safe numbers: non-finite floats become None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return float(format(x, ".17g")) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _base(cfg):
    base = load_spectrum(cfg.base)
    if cfg.n_max is not None and cfg.n_max != base.n_max:
        raise ConfigError(f"config n_max={cfg.n_max} differs from the base file's {base.n_max}")
    if cfg.n_grid is not None and cfg.n_grid < dealias_grid(base.n_max):
        raise ConfigError(
            f"n_grid={cfg.n_grid} aliases the cubic term; need >= {dealias_grid(base.n_max)}")
    if cfg.s is not None:
        base = base.replace(s=cfg.s)
    if not (0.0 <= base.s < 1.0) and cfg.experiment in ("growth", "continuity"):
        raise ConfigError(f"s must lie in [0, 1), got {base.s}")
    return base


def _law(cfg):
    return CoefficientLaw(cfg.law)


def _exp_tails(cfg, out, h):
    base, law = _base(cfg), _law(cfg)
    curve = estimate_tail(cfg.functional, base, law, cfg.lambdas, cfg.trials,
                          SeedSpec(cfg.master_seed, cfg.first_stream),
                          params=cfg.functional_params, workers=cfg.workers)
    files = {"tails.csv": None}
    curve.to_csv(os.path.join(out, "tails.csv"), run_hash=h)
    try:
        fit = fit_tail_exponent(curve)._asdict()
    except InvalidInputError as exc:
        fit = {"error": str(exc)}
    _atomic_write(os.path.join(out, "tail_fit.json"), _dump(_clean({"run_hash": h, **fit})))
    files["tail_fit.json"] = None
    return list(files)


def _exp_events(cfg, out, h):
    base, law = _base(cfg), _law(cfg)
    rates = event_rates(base, law, base.s, cfg.eps, cfg.delta, cfg.delta_tilde, cfg.N_list,
                        cfg.trials, SeedSpec(cfg.master_seed, cfg.first_stream), cfg.T_max, cfg.dt,
                        scales=cfg.scales, n_grid=cfg.n_grid, workers=cfg.workers)
    rates.to_csv(os.path.join(out, "events.csv"), run_hash=h)
    return ["events.csv"]


def _trial_data(cfg, base, law, k):
    if not cfg.randomize:
        return base
    return randomize(base, law, SeedSpec(cfg.master_seed, cfg.first_stream + k))


def _exp_growth(cfg, out, h):
    base, law = _base(cfg), _law(cfg)
    os.makedirs(os.path.join(out, "trajectories"), exist_ok=True)
    files, trajs, per = [], [], []
    for k in range(cfg.trials):
        sid = cfg.first_stream + k
        V = _trial_data(cfg, base, law, k)
        tr = evolve_decomposed(V, cfg.n_split, cfg.T, cfg.dt, record_every=cfg.record_every,
                               n_grid=cfg.n_grid)
        name = f"trajectories/trial_{sid}.csv"
        tr.to_csv(os.path.join(out, name), run_hash=h)
        files.append(name)
        env = gronwall_envelope(tr, cfg.gronwall_C)
        fit = fit_growth([tr], base.s)
        per.append({"stream_id": sid, "exponent": fit.exponent, "M": fit.M, "C": fit.C,
                    "residual_rms": fit.residual_rms, "degenerate": fit.degenerate,
                    "gronwall_satisfied": env.satisfied})
        trajs.append(tr)
    pooled = fit_growth(trajs, base.s)
    summary = {"run_hash": h, "model": pooled.model, "exponent": pooled.exponent, "M": pooled.M,
               "C": pooled.C, "residual_rms": pooled.residual_rms, "per_trial": per,
               "gronwall_C": cfg.gronwall_C}
    _atomic_write(os.path.join(out, "growth.json"), _dump(_clean(summary)))
    return files + ["growth.json"]


def _exp_evolve(cfg, out, h):
    base, law = _base(cfg), _law(cfg)
    os.makedirs(os.path.join(out, "trajectories"), exist_ok=True)
    files = []
    for k in range(cfg.trials):
        V = _trial_data(cfg, base, law, k)
        tr = evolve_full(V, cfg.T, cfg.dt, record_every=cfg.record_every, n_grid=cfg.n_grid)
        name = f"trajectories/trial_{cfg.first_stream + k}.csv"
        tr.to_csv(os.path.join(out, name), run_hash=h)
        files.append(name)
    return files


def _exp_continuity(cfg, out, h):
    base, law = _base(cfg), _law(cfg)
    rep = continuity_probe(base, law, base.s, cfg.A, cfg.T, cfg.eta, cfg.trials,
                           SeedSpec(cfg.master_seed, cfg.first_stream), dt=cfg.dt,
                           record_every=cfg.record_every, workers=cfg.workers)
    d = json.loads(rep.to_json())
    d["run_hash"] = h
    _atomic_write(os.path.join(out, "continuity.json"), _dump(_clean(d)))
    return ["continuity.json"]


def _exp_kakutani(cfg, out, h):
    a = load_spectrum(cfg.base)
    b = load_spectrum(cfg.other)
    rep = classify(a, b, law=cfg.law)
    d = rep.to_dict()
    d["run_hash"] = h
    _atomic_write(os.path.join(out, "kakutani.json"), _dump(_clean(d)))
    return ["kakutani.json"]


_DISPATCH = {
    "tails": _exp_tails, "events": _exp_events, "growth": _exp_growth,
    "continuity": _exp_continuity, "kakutani": _exp_kakutani, "evolve": _exp_evolve,
}


def run(cfg, out=None):
    """Validate ``cfg``, run its experiment into ``out`` (default
    ``cfg.out``) and write the manifest; returns the :class:`RunManifest`."""
    cfg.validate()
    out = out or cfg.out
    if out is None:
        raise ConfigError("no output directory given")
    os.makedirs(out, exist_ok=True)
    h = run_hash(cfg)
    started = _now()
    files = _DISPATCH[cfg.experiment](cfg, out, h)
    outputs = [{"path": f, "sha256": _sha256(os.path.join(out, f)),
                "bytes": os.path.getsize(os.path.join(out, f))} for f in files]
    streams = {"master_seed": str(cfg.master_seed), "first": cfg.first_stream,
               "count": cfg.trials}
    man = RunManifest(cfg.to_dict(), __version__, h, started, _now(), streams, outputs)
    _atomic_write(os.path.join(out, "manifest.json"), man.to_json())
    return man


# --------------------------------------------------------------------------
# base spectra
# --------------------------------------------------------------------------

PROFILES = ("single_mode", "power_decay", "custom")


def make_base(profile, *, n_max=8, s=0.0, sigma=3.0, amplitude=1.0, n=(1, 0, 0), path=None):
    """Canonical base data.

    ``single_mode``: ``u0 = cos(n.x)``; ``power_decay``: every coefficient of
    both components (zero modes included) equals ``amplitude <n>^-sigma``,
    which lies in ``H^s x H^(s-1)`` uniformly in ``n_max`` iff
    ``s < sigma - 3/2``; ``custom``: read from ``path``.
    """
    if profile == "single_mode":
        n = tuple(int(x) for x in n)
        if n == (0, 0, 0):
            raise ConfigError("single_mode needs a nonzero lattice point")
        lat = Lattice.ball(int(n_max))
        nn = np.array(n)
        if not lat.contains(nn) and lat.contains(-nn):
            nn = -nn
        if not lat.contains(nn):
            raise ConfigError(f"mode {n} lies outside n_max={n_max}")
        S = SpectrumPair.zeros(n_max, s)
        k = lat.index(nn)
        b = np.array(S.b)
        b[0, k] = amplitude
        return S.replace(b=b)
    if profile == "power_decay":
        if sigma - 1.5 <= s:
            warnings.warn(f"sigma={sigma} <= s + 3/2: data not in H^{s} uniformly in n_max "
                          "(the norm diverges as n_max grows)", stacklevel=2)
        S = SpectrumPair.zeros(n_max, s)
        coef = amplitude * (1.0 + S.lattice.abs_n ** 2) ** (-0.5 * sigma)
        both = np.stack([coef, coef])
        return S.replace(a=np.full(2, float(amplitude)), b=both, c=both)
    if profile == "custom":
        if path is None:
            raise ConfigError("custom profile needs a path")
        return load_spectrum(path).replace(s=s)
    raise ConfigError(f"profile must be one of {PROFILES}, got {profile!r}")


def describe_base(S):
    return {"n_max": S.n_max, "s": S.s, "modes": len(S.lattice),
            "hs_norm": sobolev_norm(S, S.s)}
