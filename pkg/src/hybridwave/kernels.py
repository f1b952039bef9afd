"""Hot numeric kernels: CSR matvec and the fused leapfrog update.

Two interchangeable implementations are provided: numba ``@njit`` kernels and
pure-numpy fallbacks. The active backend is picked at import time; set the
environment variable ``HYBRIDWAVE_DISABLE_NUMBA=1`` to force the numpy path
(it is also used automatically when numba is not importable). Both paths are
exposed unconditionally so they can be benchmarked and tested against each
other; see ``benchmarks/bench_kernels.py``.
"""

import os

import numpy as np

_ENV_FLAG = "HYBRIDWAVE_DISABLE_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


def csr_matvec_numpy(indptr, indices, data, x, out):
    """out = A @ x for a CSR matrix given by (indptr, indices, data)."""
    out[:] = 0.0
    if len(data) == 0:
        return out
    contrib = data * x[indices]
    rows = np.flatnonzero(np.diff(indptr) > 0)
    if rows.size:
        out[rows] = np.add.reduceat(contrib, indptr[rows])
    return out


def leapfrog_update_numpy(indptr, indices, data, mass, e_curr, e_prev, dt, f, out):
    """out = 2 e_curr - e_prev + dt^2 * (f - K e_curr) / mass, f may be None."""
    csr_matvec_numpy(indptr, indices, data, e_curr, out)
    if f is None:
        np.multiply(out, -1.0, out=out)
    else:
        np.subtract(f, out, out=out)
    out /= mass
    out *= dt * dt
    out += 2.0 * e_curr
    out -= e_prev
    return out


HAVE_NUMBA = False
csr_matvec_numba = None
leapfrog_update_numba = None

if not _numba_disabled():
    try:
        from numba import njit

        HAVE_NUMBA = True

        @njit(cache=True)
        def _csr_matvec(indptr, indices, data, x, out):
            for i in range(out.shape[0]):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * x[indices[k]]
                out[i] = acc
            return out

        @njit(cache=True)
        def _leapfrog(indptr, indices, data, mass, e_curr, e_prev, dt, out):
            dt2 = dt * dt
            for i in range(out.shape[0]):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * e_curr[indices[k]]
                out[i] = 2.0 * e_curr[i] - e_prev[i] - dt2 * acc / mass[i]
            return out

        @njit(cache=True)
        def _leapfrog_src(indptr, indices, data, mass, e_curr, e_prev, dt, f, out):
            dt2 = dt * dt
            for i in range(out.shape[0]):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * e_curr[indices[k]]
                out[i] = 2.0 * e_curr[i] - e_prev[i] + dt2 * (f[i] - acc) / mass[i]
            return out

        def csr_matvec_numba(indptr, indices, data, x, out):
            return _csr_matvec(indptr, indices, data, x, out)

        def leapfrog_update_numba(indptr, indices, data, mass, e_curr, e_prev, dt, f, out):
            if f is None:
                return _leapfrog(indptr, indices, data, mass, e_curr, e_prev, dt, out)
            return _leapfrog_src(indptr, indices, data, mass, e_curr, e_prev, dt, f, out)

    except ImportError:
        HAVE_NUMBA = False

if HAVE_NUMBA:
    csr_matvec = csr_matvec_numba
    leapfrog_update = leapfrog_update_numba
else:
    csr_matvec = csr_matvec_numpy
    leapfrog_update = leapfrog_update_numpy


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
