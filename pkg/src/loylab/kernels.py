"""Hot numerical kernels.

Every kernel exists twice: a numba ``@njit`` loop version and a vectorised
numpy version.  The public names dispatch to one of them at import time.
Set ``LOYLAB_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba is not importable).
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

__all__ = [
    "USE_NUMBA",
    "exprel",
    "resolvent_sandwich",
    "resolvent_sandwich_many",
    "product_amplitudes",
    "transient_kernel",
]

_DISABLE = os.environ.get("LOYLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

USE_NUMBA = numba is not None and not _DISABLE

# below this |x| the series for (e^x - 1)/x is used; truncation error < 3e-19
_SERIES_CUT = 1e-2


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def exprel_np(x):
    """(exp(x) - 1) / x for complex arrays, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=complex)
    out = np.ones_like(x)
    big = np.abs(x) >= _SERIES_CUT
    out[big] = np.expm1(x[big]) / x[big]
    s = x[~big]
    out[~big] = 1 + s / 2 * (1 + s / 3 * (1 + s / 4 * (1 + s / 5 * (1 + s / 6))))
    return out


def resolvent_sandwich_np(left, energies, right, z):
    return (left / (energies - z)) @ right


def resolvent_sandwich_many_np(left, energies, right, zs):
    inv = 1.0 / (energies[None, :] - np.asarray(zs)[:, None])
    return np.einsum("jq,zq,qk->zjk", left, inv, right, optimize=True)


def product_amplitudes_np(coeffs, energies, lambdas, times):
    # F(e; t) = -i sum_j c_j(e) * t * exp(-i e t) * exprel(i (e - lam_j) t)
    t = np.asarray(times, dtype=float)[:, None, None]
    d = (energies[:, None] - lambdas[None, :])[None, :, :]
    phase = np.exp(-1j * energies[None, :] * t[:, :, 0])
    k = exprel_np(1j * d * t) * t
    return -1j * phase * np.einsum("tqj,qj->tq", k, coeffs)


def transient_kernel_np(energies, lambdas, t, eta):
    # int_0^t exp(-i s (E - lam - i eta)) ds
    d = energies[:, None] - lambdas[None, :] - 1j * eta
    return t * exprel_np(-1j * d * t)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True)
    def _exprel_scalar(x):
        if abs(x) < _SERIES_CUT:
            return 1 + x / 2 * (1 + x / 3 * (1 + x / 4 * (1 + x / 5 * (1 + x / 6))))
        # exp(a + ib) - 1 = (expm1(a) + 1)(cos b - 1) + expm1(a) + i (expm1(a) + 1) sin b
        er = math.expm1(x.real)
        cm1 = -2.0 * math.sin(x.imag / 2) ** 2
        re = (er + 1.0) * cm1 + er
        im = (er + 1.0) * math.sin(x.imag)
        return complex(re, im) / x

    @numba.njit(cache=True)
    def exprel_nb(x):
        flat = x.ravel()
        out = np.empty(flat.size, dtype=np.complex128)
        for i in range(flat.size):
            out[i] = _exprel_scalar(flat[i])
        return out.reshape(x.shape)

    @numba.njit(cache=True)
    def resolvent_sandwich_nb(left, energies, right, z):
        n, m = left.shape
        p = right.shape[1]
        out = np.zeros((n, p), dtype=np.complex128)
        for q in range(m):
            r = 1.0 / (energies[q] - z)
            for j in range(n):
                lj = left[j, q] * r
                for k in range(p):
                    out[j, k] += lj * right[q, k]
        return out

    @numba.njit(cache=True)
    def resolvent_sandwich_many_nb(left, energies, right, zs):
        n, m = left.shape
        p = right.shape[1]
        out = np.zeros((zs.size, n, p), dtype=np.complex128)
        for iz in range(zs.size):
            z = zs[iz]
            for q in range(m):
                r = 1.0 / (energies[q] - z)
                for j in range(n):
                    lj = left[j, q] * r
                    for k in range(p):
                        out[iz, j, k] += lj * right[q, k]
        return out

    @numba.njit(cache=True)
    def product_amplitudes_nb(coeffs, energies, lambdas, times):
        nq, nl = coeffs.shape
        out = np.zeros((times.size, nq), dtype=np.complex128)
        for it in range(times.size):
            t = times[it]
            for q in range(nq):
                e = energies[q]
                acc = 0j
                for j in range(nl):
                    acc += coeffs[q, j] * _exprel_scalar(1j * (e - lambdas[j]) * t)
                out[it, q] = -1j * t * np.exp(-1j * e * t) * acc
        return out

    @numba.njit(cache=True)
    def transient_kernel_nb(energies, lambdas, t, eta):
        out = np.empty((energies.size, lambdas.size), dtype=np.complex128)
        for q in range(energies.size):
            for p in range(lambdas.size):
                d = energies[q] - lambdas[p] - 1j * eta
                out[q, p] = t * _exprel_scalar(-1j * d * t)
        return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _c(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def exprel(x):
    """Return (exp(x) - 1)/x elementwise, with the removable point x = 0 filled."""
    x = np.asarray(x, dtype=complex)
    if USE_NUMBA:
        return exprel_nb(_c(x))
    return exprel_np(x)


def resolvent_sandwich(left, energies, right, z):
    """Return ``left @ diag(1/(energies - z)) @ right``.

    Parameters
    ----------
    left : (n, m) complex array
    energies : (m,) real array
        Diagonal of the (already diagonalised) Q-block.
    right : (m, p) complex array
    z : complex
        Evaluation point including any regulator shift.
    """
    if USE_NUMBA:
        return resolvent_sandwich_nb(_c(left), _f(energies), _c(right), complex(z))
    return resolvent_sandwich_np(left, energies, right, z)


def resolvent_sandwich_many(left, energies, right, zs):
    """Batched :func:`resolvent_sandwich` over a vector of evaluation points."""
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if USE_NUMBA:
        return resolvent_sandwich_many_nb(_c(left), _f(energies), _c(right), _c(zs))
    return resolvent_sandwich_many_np(left, energies, right, zs)


def product_amplitudes(coeffs, energies, lambdas, times):
    """Closed-form decay-product amplitudes for exponential parent amplitudes.

    With parent amplitudes ``a(t) = sum_j exp(-i lam_j t) b_j`` and couplings
    folded into ``coeffs[q, j] = (QHP b_j)_q``, returns the (T, m) array

        F_q(t) = -i sum_j coeffs[q, j] * int_0^t exp(-i e_q (t - s)) exp(-i lam_j s) ds.
    """
    times = _f(np.atleast_1d(times))
    if USE_NUMBA:
        return product_amplitudes_nb(_c(coeffs), _f(energies), _c(lambdas), times)
    return product_amplitudes_np(np.asarray(coeffs, complex), np.asarray(energies, float),
                                 np.asarray(lambdas, complex), times)


def transient_kernel(energies, lambdas, t, eta=0.0):
    """(m, p) matrix of ``int_0^t exp(-i s (E_q - lam_p - i eta)) ds``."""
    if USE_NUMBA:
        return transient_kernel_nb(_f(energies), _c(lambdas), float(t), float(eta))
    return transient_kernel_np(np.asarray(energies, float), np.asarray(lambdas, complex), float(t), float(eta))
