"""Hot inner loops, in two flavours.

Every kernel exists as a numba ``@njit`` loop and as a vectorised numpy
expression computing the same quantity; results agree to rounding (the
numpy compensated sum is ``math.fsum``, which is exactly rounded).  The
numba path is used when numba imports cleanly and
``RANDWAVE_DISABLE_NUMBA`` is unset or ``0``; set it to ``1`` to force the
numpy path, e.g. for debugging or for ``benchmarks/bench_kernels.py``.

Packed coefficient layout (used throughout): a real vector
``q = [a, b_1..b_M, c_1..c_M]`` for one field with ``M`` half-lattice modes.
"""
import math
import os

import numpy as np

__all__ = [
    "USE_NUMBA", "backend", "rotate", "cube", "power_mean", "max_abs",
    "scatter", "gather", "neumaier_sum", "forcing_power", "numpy_kernels",
    "numba_kernels", "row_stats",
]


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _flag("RANDWAVE_DISABLE_NUMBA"):
        raise ImportError("numba disabled by environment")
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------

def _np_rotate(q, p, cos_w, sin_over_w, w_sin):
    q_new = q * cos_w + p * sin_over_w
    p[:] = p * cos_w - q * w_sin
    q[:] = q_new


def _np_cube(src, out):
    np.multiply(src, src, out=out)
    np.multiply(out, src, out=out)


def _np_power_mean(x, p):
    x = np.abs(x.ravel())
    if p == 2.0:
        return float(np.mean(x * x))
    return float(np.mean(x ** p))


def _np_max_abs(x):
    return float(np.max(np.abs(x)))


def _np_scatter(out, idx, mirror, conj, q, n_modes):
    # out: flat complex spectrum, zeroed by the caller
    b = q[1:1 + n_modes]
    c = q[1 + n_modes:1 + 2 * n_modes]
    val = 0.5 * (b - 1j * c)
    val = np.where(conj, np.conj(val), val)
    out[0] = q[0]
    out[idx] = val
    has = mirror >= 0
    out[mirror[has]] = np.conj(val[has])


def _np_gather(spec, idx, conj, n_modes, q):
    val = spec[idx]
    val = np.where(conj, np.conj(val), val)
    q[0] = spec[0].real
    q[1:1 + n_modes] = 2.0 * val.real
    q[1 + n_modes:1 + 2 * n_modes] = -2.0 * val.imag


def _np_neumaier_sum(x):
    return math.fsum(np.asarray(x, dtype=float).tolist())


def _np_forcing_power(w, wt, s):
    # mean(wt * (w^3 - (s + w)^3)) = -mean(wt * (3 w^2 s + 3 w s^2 + s^3))
    return float(-np.mean(wt * s * (3.0 * w * w + 3.0 * w * s + s * s)))


def _np_row_stats(flat, p):
    a = np.abs(flat)
    return a.max(axis=1), np.mean(a ** p, axis=1)


numpy_kernels = {
    "row_stats": _np_row_stats,
    "rotate": _np_rotate,
    "cube": _np_cube,
    "power_mean": _np_power_mean,
    "max_abs": _np_max_abs,
    "scatter": _np_scatter,
    "gather": _np_gather,
    "neumaier_sum": _np_neumaier_sum,
    "forcing_power": _np_forcing_power,
}


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

numba_kernels = {}

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_rotate(q, p, cos_w, sin_over_w, w_sin):
        for i in range(q.shape[0]):
            qi = q[i]
            pi = p[i]
            q[i] = qi * cos_w[i] + pi * sin_over_w[i]
            p[i] = pi * cos_w[i] - qi * w_sin[i]

    @njit(cache=True)
    def _nb_cube(src, out):
        s = src.ravel()
        o = out.ravel()
        for i in range(s.shape[0]):
            v = s[i]
            o[i] = v * v * v

    @njit(cache=True)
    def _nb_power_mean(x, p):
        flat = x.ravel()
        n = flat.shape[0]
        acc = 0.0
        if p == 2.0:
            for i in range(n):
                acc += flat[i] * flat[i]
        elif p == 4.0:
            for i in range(n):
                v = flat[i] * flat[i]
                acc += v * v
        elif p == 6.0:
            for i in range(n):
                v = flat[i] * flat[i]
                acc += v * v * v
        else:
            for i in range(n):
                acc += abs(flat[i]) ** p
        return acc / n

    @njit(cache=True)
    def _nb_max_abs(x):
        flat = x.ravel()
        m = 0.0
        for i in range(flat.shape[0]):
            v = abs(flat[i])
            if v > m:
                m = v
        return m

    @njit(cache=True)
    def _nb_scatter(out, idx, mirror, conj, q, n_modes):
        out[0] = q[0]
        for k in range(n_modes):
            re = 0.5 * q[1 + k]
            im = -0.5 * q[1 + n_modes + k]
            if conj[k]:
                im = -im
            out[idx[k]] = complex(re, im)
            if mirror[k] >= 0:
                out[mirror[k]] = complex(re, -im)

    @njit(cache=True)
    def _nb_gather(spec, idx, conj, n_modes, q):
        q[0] = spec[0].real
        for k in range(n_modes):
            v = spec[idx[k]]
            im = v.imag
            if conj[k]:
                im = -im
            q[1 + k] = 2.0 * v.real
            q[1 + n_modes + k] = -2.0 * im

    @njit(cache=True)
    def _nb_neumaier_sum(x):
        total = 0.0
        comp = 0.0
        for i in range(x.shape[0]):
            v = x[i]
            t = total + v
            if abs(total) >= abs(v):
                comp += (total - t) + v
            else:
                comp += (v - t) + total
            total = t
        return total + comp

    @njit(cache=True)
    def _nb_forcing_power(w, wt, s):
        fw = w.ravel()
        ft = wt.ravel()
        fs = s.ravel()
        acc = 0.0
        for i in range(fw.shape[0]):
            a = fw[i]
            b = fs[i]
            acc += ft[i] * b * (3.0 * a * a + 3.0 * a * b + b * b)
        return -acc / fw.shape[0]

    @njit(cache=True)
    def _nb_row_stats(flat, p):
        rows, cols = flat.shape
        mx = np.zeros(rows)
        acc = np.zeros(rows)
        ip = int(p)
        for r in range(rows):
            m = 0.0
            t = 0.0
            for c in range(cols):
                v = abs(flat[r, c])
                if v > m:
                    m = v
                if ip == p and ip == 6:
                    v2 = v * v
                    t += v2 * v2 * v2
                else:
                    t += v ** p
            mx[r] = m
            acc[r] = t / cols
        return mx, acc

    numba_kernels = {
        "row_stats": _nb_row_stats,
        "rotate": _nb_rotate,
        "cube": _nb_cube,
        "power_mean": _nb_power_mean,
        "max_abs": _nb_max_abs,
        "scatter": _nb_scatter,
        "gather": _nb_gather,
        "neumaier_sum": _nb_neumaier_sum,
        "forcing_power": _nb_forcing_power,
    }


USE_NUMBA = _HAVE_NUMBA
_active = numba_kernels if USE_NUMBA else numpy_kernels


def backend():
    """Name of the kernel backend in use: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


rotate = _active["rotate"]
cube = _active["cube"]
max_abs = _active["max_abs"]
scatter = _active["scatter"]
gather = _active["gather"]
forcing_power = _active["forcing_power"]
_power_mean = _active["power_mean"]
_row_stats = _active["row_stats"]
_neumaier = _active["neumaier_sum"]


def power_mean(x, p):
    """Mean of ``|x|**p`` over all entries."""
    return float(_power_mean(np.ascontiguousarray(x), float(p)))


def neumaier_sum(x):
    """Compensated sum of a 1-D float array, in index order."""
    return float(_neumaier(np.ascontiguousarray(x, dtype=np.float64)))


def row_stats(flat, p):
    """Per-row ``max |x|`` and ``mean |x|^p`` of a 2-D array."""
    return _row_stats(np.ascontiguousarray(flat, dtype=np.float64), float(p))
