"""Time evolution: exact unitary, effective non-Hermitian, decay products, V(t).

All propagators are built from eigendecompositions; nothing is time-stepped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .effective import MAX_EIGVEC_COND, EffectiveHamiltonian
from .errors import ModelError, NonDiagonalizableError
from .model import FullModel

__all__ = [
    "Trajectory",
    "ExactPropagator",
    "evolve_exact",
    "survival_amplitude",
    "evolve_effective",
    "DecayProducts",
    "decay_product_amplitudes",
    "v_of_t",
    "ComparisonMetrics",
    "compare_trajectories",
]


@dataclass
class Trajectory:
    """States on a time grid.

    ``states`` has shape (T, d).  ``space`` is "full" (d = model.dim) or
    "parallel" (d = n).  For full-space trajectories ``parallel_index`` holds
    the basis positions of the parallel levels.
    """

    times: np.ndarray
    states: np.ndarray
    space: str = "full"
    parallel_index: np.ndarray | None = None
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        if self.states.shape[0] != self.times.size:
            raise ModelError("one state per time required")

    @property
    def norm_track(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    def parallel_amplitudes(self) -> np.ndarray:
        if self.space == "parallel":
            return self.states
        if self.parallel_index is None:
            raise ModelError("full-space trajectory without parallel index")
        return self.states[:, self.parallel_index]

    def decay_law(self) -> np.ndarray:
        """p(t) = sum_k |a_k(t)|^2 over the parallel levels."""
        return np.sum(np.abs(self.parallel_amplitudes()) ** 2, axis=1)

    def columns(self):
        """Column names and rows for CSV export: time, Re/Im a_k, p, norm."""
        a = self.parallel_amplitudes()
        names = ["time"]
        for k in range(a.shape[1]):
            names += [f"re_a{k + 1}", f"im_a{k + 1}"]
        names += ["p", "norm"]
        p, norm = self.decay_law(), self.norm_track
        rows = []
        for i, t in enumerate(self.times):
            row = [t]
            for k in range(a.shape[1]):
                row += [a[i, k].real, a[i, k].imag]
            rows.append(row + [p[i], norm[i]])
        return names, rows


class ExactPropagator:
    """exp(-i t H) from one Hermitian eigendecomposition of the full H."""

    def __init__(self, model: FullModel):
        self.model = model
        self.energies, self.vectors = np.linalg.eigh(model.H)

    def evolve(self, psi0, times) -> Trajectory:
        psi0 = np.asarray(psi0, dtype=complex).ravel()
        if psi0.size != self.model.dim:
            raise ModelError(f"state must have {self.model.dim} components")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        c = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(times, self.energies))
        states = (phases * c) @ self.vectors.T
        states[times == 0.0] = psi0  # V V^dag psi0 would only agree to rounding
        return Trajectory(times, states, "full", self.model.partition.p_index, "exact")

    def amplitude(self, u, v, times) -> np.ndarray:
        """<u| exp(-i t H) |v> on a time grid.

        For u = v the weights |<E|u>|^2 are real, so A(-t) = conj(A(t)) holds
        to rounding.
        """
        u = np.asarray(u, dtype=complex).ravel()
        v = np.asarray(v, dtype=complex).ravel()
        w = (self.vectors.conj().T @ u).conj() * (self.vectors.conj().T @ v)
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.exp(-1j * np.outer(times, self.energies)) @ w


def _check_norm(psi, what="initial state"):
    nrm = float(np.linalg.norm(psi))
    if abs(nrm - 1.0) > 1e-10:
        warnings.warn(f"{what} has norm {nrm:.12g}; proceeding without renormalising",
                      RuntimeWarning, stacklevel=3)
    return nrm


def evolve_exact(model: FullModel, psi0, times, propagator: ExactPropagator | None = None) -> Trajectory:
    """psi(t) = exp(-i t H) psi0 for any real t, including negative times.

    ``psi0`` may be a full-space vector or n parallel amplitudes.
    """
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    if psi0.size == model.n and model.n != model.dim:
        psi0 = model.parallel_state(psi0)
    nrm = _check_norm(psi0)
    prop = propagator if propagator is not None else ExactPropagator(model)
    traj = prop.evolve(psi0, times)
    traj.metadata["initial_norm"] = nrm
    return traj


def survival_amplitude(model: FullModel, u, times, propagator: ExactPropagator | None = None) -> np.ndarray:
    """A(t) = <u| exp(-i t H) |u>; p(t) = |A(t)|^2 is even in t."""
    u = np.asarray(u, dtype=complex).ravel()
    if u.size == model.n and model.n != model.dim:
        u = model.parallel_state(u)
    prop = propagator if propagator is not None else ExactPropagator(model)
    return prop.amplitude(u, u, times)


def _biorthogonal(heff: EffectiveHamiltonian):
    lam, R = np.linalg.eig(heff.deviation)
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
        raise NonDiagonalizableError(
            f"effective Hamiltonian ({heff.method}) is not diagonalizable: cond = {cond:.3g}")
    return lam, R, np.linalg.inv(R)


def _nonnegative_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ModelError("effective evolution is defined for t >= 0 only")
    return times


def evolve_effective(heff: EffectiveHamiltonian, a0, times) -> Trajectory:
    """a(t) = exp(-i t H_par) a0 from the right/left eigenvectors of H_par."""
    a0 = np.asarray(a0, dtype=complex).ravel()
    if a0.size != heff.n:
        raise ModelError(f"a0 must have {heff.n} components")
    times = _nonnegative_times(times)
    lam, R, L = _biorthogonal(heff)
    b = L @ a0
    # the m0 phase is split off so that small eigenvalue shifts are not rounded away
    phases = np.exp(-1j * np.outer(times, lam)) * np.exp(-1j * heff.m0 * times)[:, None]
    states = (phases * b) @ R.T
    return Trajectory(times, states, "parallel", None, heff.method,
                      {"eigenvalues": heff.m0 + lam})


@dataclass
class DecayProducts:
    """Decay-product amplitudes F(e_q; t) on the discretised continuum.

    ``amplitudes[t, q]`` are the discrete amplitudes on the basis states
    |e_q, J> (so sum_q |F|^2 is a probability).  ``density`` divides by the
    quadrature weight to give the continuum-normalised |F_J(e; t)|^2.
    """

    times: np.ndarray
    energies: np.ndarray
    weights: np.ndarray
    amplitudes: np.ndarray
    channel_slices: dict

    def probability(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def continuum_amplitudes(self, label: str | None = None) -> np.ndarray:
        sl = self.channel_slices[label] if label is not None else slice(None)
        return self.amplitudes[:, sl] / np.sqrt(self.weights[sl])

    def density(self, label: str | None = None) -> np.ndarray:
        return np.abs(self.continuum_amplitudes(label)) ** 2


def decay_product_amplitudes(heff: EffectiveHamiltonian, model: FullModel, a0, times) -> DecayProducts:
    """F(e; t) = -i int_0^t exp(-i e (t - s)) QHP a(s) ds for the effective a(s).

    With a(s) = sum_j exp(-i lam_j s) P_j a0 every integrand is a pure
    exponential, so the integral is taken in closed form.  The resonant case
    e = lam_j is handled by the series branch of the exprel kernel.
    """
    if heff.n != model.n:
        raise ModelError("effective Hamiltonian and model differ in dimension")
    a0 = np.asarray(a0, dtype=complex).ravel()
    times = _nonnegative_times(times)
    lam, R, L = _biorthogonal(heff)
    lam = lam + heff.m0
    B = R * (L @ a0)  # columns P_j a0
    qhp = model.qhp
    if model.qhq_is_diagonal:
        energies, coeffs = np.asarray(model.qhq, float), qhp @ B
        F = kernels.product_amplitudes(coeffs, energies, lam, times)
    else:
        energies, U = np.linalg.eigh(model.qhq)
        F = kernels.product_amplitudes(U.conj().T @ qhp @ B, energies, lam, times) @ U.T
        energies = np.diag(model.qhq).real
    weights = np.ones(model.dim - model.n)
    slices = {}
    for ch in model.channels:
        weights[ch.slice] = ch.grid.weights
        slices[ch.label] = ch.slice
    return DecayProducts(times, energies, weights, F, slices)


def v_of_t(model: FullModel, t: float, eta: float = 0.0) -> np.ndarray:
    """First-order time-dependent V(t).

        V(t) = -i int_0^t PHQ exp(-i s QHQ) QHP exp(i s PHP) exp(-eta s) ds

    evaluated through the eigenbases of QHQ and PHP.  V(0) = 0 exactly.  With
    eta > 0 the damped kernel tends to -sum_j Sigma(lambda_j) P_j as t grows;
    eta = 0 is the undamped expression, which oscillates for a discrete Q.
    """
    t = float(t)
    if t < 0:
        raise ModelError("v_of_t needs t >= 0")
    if eta < 0:
        raise ModelError("damping eta must be >= 0")
    if t == 0.0:
        return np.zeros((model.n, model.n), dtype=complex)
    lam, W = np.linalg.eigh(model.php)
    if model.qhq_is_diagonal:
        E, left = np.asarray(model.qhq, float), model.phq
    else:
        E, U = np.linalg.eigh(model.qhq)
        left = model.phq @ U
    right = left.conj().T @ W
    K = kernels.transient_kernel(E, lam.astype(complex), t, eta)
    return -1j * left @ (right * K) @ W.conj().T


@dataclass
class ComparisonMetrics:
    """Errors of an effective trajectory against the projected exact one."""

    times: np.ndarray
    amplitude_error: np.ndarray  # max_k |a_k^exact - a_k^eff| per time
    decay_law_error: np.ndarray  # |p_exact - p_eff| per time
    max_amplitude_error: float
    max_decay_law_error: float

    def rows(self):
        for i, t in enumerate(self.times):
            yield [t, self.amplitude_error[i], self.decay_law_error[i]]


def compare_trajectories(exact: Trajectory, effective: Trajectory) -> ComparisonMetrics:
    if exact.times.shape != effective.times.shape or not np.array_equal(exact.times, effective.times):
        raise ModelError("trajectories use different time grids")
    a_ex = exact.parallel_amplitudes()
    a_ef = effective.parallel_amplitudes()
    if a_ex.shape != a_ef.shape:
        raise ModelError("trajectories have different parallel dimensions")
    amp = np.max(np.abs(a_ex - a_ef), axis=1) if a_ex.size else np.zeros(exact.times.size)
    dl = np.abs(exact.decay_law() - effective.decay_law())
    return ComparisonMetrics(exact.times, amp, dl,
                             float(amp.max(initial=0.0)), float(dl.max(initial=0.0)))
