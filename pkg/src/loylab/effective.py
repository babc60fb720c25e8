"""Effective non-Hermitian Hamiltonians on the parallel subspace.

Every variant returns an :class:`EffectiveHamiltonian` H_par = M - (i/2) Gamma:

========== ===============================================================
loy0       m0 I - Sigma0(m0)
loy        m0 I - Sigma(m0)
improved   m0 I + PH1P + V_imp, Sigma taken at m0 + h0 +- kappa (n = 2)
spectral   PHP - sum_j Sigma(lambda_j) P_j over the eigenpairs of PHP
iterate    PHP + V with V the fixed point of V = -sum_j Sigma(lambda_j) P_j,
           lambda_j, P_j taken from PHP + V
onedim     <psi|H|psi> - Sigma_psi(<psi|H|psi>) for P = |psi><psi|
========== ===============================================================
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ModelError, NonDiagonalizableError
from .model import FullModel, _hermitian_residual
from .self_energy import SelfEnergyEvaluator, default_eta

__all__ = [
    "EffectiveHamiltonian",
    "PauliDecomposition",
    "FixedPointResult",
    "pauli_decompose",
    "exp_php",
    "spectral_projectors",
    "v_spectral",
    "h_loy0",
    "h_loy",
    "h_loy_imp",
    "h_spectral",
    "iterate_v",
    "h_iterate",
    "h_1d",
    "METHODS",
    "compute",
]

KAPPA_RTOL = 1e-8
DEGENERACY_RTOL = 1e-8
MAX_EIGVEC_COND = 1e10


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """Complex n x n generator of the reduced evolution.

    The matrix is kept as ``m0 * I + deviation`` with the deviation computed
    directly, so differences of diagonal elements do not lose precision to m0.
    """

    deviation: np.ndarray
    m0: float = 0.0
    method: str = ""
    eta: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(np.atleast_2d(self.deviation), dtype=complex)
        if d.shape[0] != d.shape[1]:
            raise ModelError("effective Hamiltonian must be square")
        d.setflags(write=False)
        object.__setattr__(self, "deviation", d)

    @classmethod
    def from_matrix(cls, matrix, method: str = "", eta=None, m0: float = 0.0, **metadata):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(matrix - m0 * np.eye(matrix.shape[0]), m0, method, eta, dict(metadata))

    @property
    def n(self) -> int:
        return self.deviation.shape[0]

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.m0 * np.eye(self.n) + self.deviation

    @property
    def mass_part(self) -> np.ndarray:
        """M = (H + H^dag) / 2."""
        h = self.matrix
        return 0.5 * (h + h.conj().T)

    @property
    def decay_part(self) -> np.ndarray:
        """Gamma = i (H - H^dag)."""
        d = self.deviation
        return 1j * (d - d.conj().T)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.m0 + np.linalg.eigvals(self.deviation)

    def diag_difference(self) -> complex:
        if self.n != 2:
            raise ModelError("diagonal difference is defined for 2x2 Hamiltonians")
        return complex(self.deviation[0, 0] - self.deviation[1, 1])


@dataclass(frozen=True)
class PauliDecomposition:
    """m = h0 I + hx sx + hy sy + hz sz with kappa = |(hx, hy, hz)|."""

    h0: float
    hx: float
    hy: float
    hz: float
    kappa: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.hx, self.hy, self.hz])

    def h_dot_sigma(self) -> np.ndarray:
        return np.array([[self.hz, self.hx - 1j * self.hy],
                         [self.hx + 1j * self.hy, -self.hz]])

    def matrix(self) -> np.ndarray:
        return self.h0 * np.eye(2) + self.h_dot_sigma()

    @property
    def eigenvalues(self) -> tuple:
        return (self.h0 - self.kappa, self.h0 + self.kappa)


def pauli_decompose(m) -> PauliDecomposition:
    """Decompose a 2x2 Hermitian matrix on the Pauli basis."""
    m = np.asarray(m, dtype=complex)
    if m.shape != (2, 2):
        raise ModelError("Pauli decomposition needs a 2x2 matrix")
    if _hermitian_residual(m) > 1e-12:
        raise ModelError("matrix is not Hermitian")
    h0 = 0.5 * (m[0, 0].real + m[1, 1].real)
    hz = 0.5 * (m[0, 0].real - m[1, 1].real)
    m12 = 0.5 * (m[0, 1] + np.conj(m[1, 0]))
    hx, hy = m12.real, -m12.imag
    # kappa^2 = H12 H21 + hz^2
    kappa = float(np.sqrt(abs(m12) ** 2 + hz ** 2))
    return PauliDecomposition(float(h0), float(hx), float(hy), float(hz), kappa)


def exp_php(t: float, decomp: PauliDecomposition, sign: int = 1) -> np.ndarray:
    """exp(sign * i t m) from the two spectral projectors of m.

    For kappa = 0 both projector terms merge into exp(sign * i t h0) I.
    """
    if sign not in (1, -1):
        raise ModelError("sign must be +1 or -1")
    k = decomp.kappa
    if k == 0.0:
        return np.exp(sign * 1j * t * decomp.h0) * np.eye(2, dtype=complex)
    hs = decomp.h_dot_sigma() / k
    p_plus = 0.5 * (np.eye(2) + hs)
    p_minus = 0.5 * (np.eye(2) - hs)
    return (np.exp(sign * 1j * t * (decomp.h0 + k)) * p_plus
            + np.exp(sign * 1j * t * (decomp.h0 - k)) * p_minus)


# ---------------------------------------------------------------------------
# spectral form
# ---------------------------------------------------------------------------

def _cluster(values: np.ndarray, tol: float) -> list:
    """Single-linkage groups of eigenvalue indices closer than ``tol``."""
    n = values.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: (values[g].real.mean(), values[g].imag.mean()))


def spectral_projectors(K, rtol: float = DEGENERACY_RTOL):
    """Eigenvalue clusters and spectral projectors of a diagonalizable matrix.

    Returns a list of ``(lam, P)`` where ``lam`` is the cluster mean and ``P``
    the summed projector.  Hermitian input uses orthonormal eigenvectors;
    otherwise projectors are R_j L_j with L = R^-1 (bi-orthonormal left
    vectors).  Eigenvalues closer than ``rtol * (spread + eps ||K||)`` share a
    cluster.
    """
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    n = K.shape[0]
    hermitian = _hermitian_residual(K) <= 1e-14
    if hermitian:
        lam, R = np.linalg.eigh(0.5 * (K + K.conj().T))
        lam = lam.astype(complex)
        L = R.conj().T
    else:
        lam, R = np.linalg.eig(K)
        cond = np.linalg.cond(R)
        if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
            raise NonDiagonalizableError(
                f"eigenvector matrix condition number {cond:.3g} exceeds {MAX_EIGVEC_COND:.0e}; "
                f"eigenvalues {lam}")
        L = np.linalg.inv(R)
    mean = np.trace(K) / n
    spread = np.linalg.norm(K - mean * np.eye(n))
    tol = rtol * (spread + np.finfo(float).eps * np.linalg.norm(K))
    out = []
    for g in _cluster(lam, tol):
        P = R[:, g] @ L[g, :]
        out.append((complex(lam[g].mean()), P))
    return out


def _sigma_at(ev: SelfEnergyEvaluator, lam: complex, complex_arguments: bool) -> np.ndarray:
    if lam.imag == 0.0 or not complex_arguments:
        return ev.sigma(lam.real)
    if lam.imag <= -ev.eta:
        # the shifted point lam + i eta sits below the real axis, among the poles of the discrete Q spectrum
        warnings.warn(f"Im lambda = {lam.imag:.3g} is below -eta = {-ev.eta:.3g}; "
                      "Sigma is not a smooth continuum value there (increase eta or the grid density)",
                      RuntimeWarning, stacklevel=4)
    return ev.sigma_at_complex(lam)


def _evaluator(model, evaluator, eta) -> SelfEnergyEvaluator:
    if evaluator is not None:
        if evaluator.model is not model:
            raise ModelError("evaluator belongs to a different model")
        return evaluator
    return SelfEnergyEvaluator(model, eta)


def v_spectral(model: FullModel, K, evaluator: SelfEnergyEvaluator | None = None,
               eta: float | None = None, complex_arguments: bool = True,
               rtol: float = DEGENERACY_RTOL) -> np.ndarray:
    """V = -sum_j Sigma(lambda_j) P_j over the spectral decomposition of K.

    Sigma multiplies from the left, the projector from the right.  Complex
    eigenvalues are passed to ``sigma_at_complex`` unless
    ``complex_arguments`` is False, in which case their real parts are used.
    """
    ev = _evaluator(model, evaluator, eta)
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    if K.shape != (model.n, model.n):
        raise ModelError(f"K must be {model.n}x{model.n}")
    V = np.zeros((model.n, model.n), dtype=complex)
    for lam, P in spectral_projectors(K, rtol):
        V -= _sigma_at(ev, lam, complex_arguments) @ P
    return V


# ---------------------------------------------------------------------------
# effective Hamiltonians
# ---------------------------------------------------------------------------

def h_loy0(model: FullModel, evaluator: SelfEnergyEvaluator | None = None,
           eta: float | None = None) -> EffectiveHamiltonian:
    """Standard LOY Hamiltonian with the free resolvent: m0 I - Sigma0(m0)."""
    ev = _evaluator(model, evaluator, eta)
    return EffectiveHamiltonian(-ev.sigma0(model.m0), model.m0, "loy0", ev.eta)


def h_loy(model: FullModel, evaluator: SelfEnergyEvaluator | None = None,
          eta: float | None = None) -> EffectiveHamiltonian:
    """LOY Hamiltonian with the full Q-resolvent: m0 I - Sigma(m0)."""
    ev = _evaluator(model, evaluator, eta)
    return EffectiveHamiltonian(-ev.sigma(model.m0), model.m0, "loy", ev.eta)


def h_loy_imp(model: FullModel, evaluator: SelfEnergyEvaluator | None = None,
              eta: float | None = None) -> EffectiveHamiltonian:
    """Improved LOY Hamiltonian of a two-level subspace.

    With PH1P = h0 I + h.s and kappa = |h|,

        V = -1/2 Sigma(m0 + h0 + kappa) [I + h.s / kappa]
            -1/2 Sigma(m0 + h0 - kappa) [I - h.s / kappa].

    When kappa is below ``KAPPA_RTOL * ||PH1P||`` the 1/kappa form is replaced
    by the spectral form, which has the same finite limit.
    """
    if model.n != 2:
        raise ModelError("the improved LOY form is defined for a two-level subspace")
    ev = _evaluator(model, evaluator, eta)
    h1 = model.h1_parallel
    dec = pauli_decompose(h1)
    k = dec.kappa
    if k <= KAPPA_RTOL * (np.linalg.norm(h1) + np.finfo(float).tiny):
        V = v_spectral(model, model.php, ev)
        route = "spectral"
    else:
        hs = dec.h_dot_sigma() / k
        I = np.eye(2)
        V = (-0.5 * ev.sigma(model.m0 + dec.h0 + k) @ (I + hs)
             - 0.5 * ev.sigma(model.m0 + dec.h0 - k) @ (I - hs))
        route = "pauli"
    return EffectiveHamiltonian(h1 + V, model.m0, "improved", ev.eta,
                                {"route": route, "kappa": k, "h0": dec.h0})


def h_spectral(model: FullModel, evaluator: SelfEnergyEvaluator | None = None,
               eta: float | None = None) -> EffectiveHamiltonian:
    """n-level improved Hamiltonian PHP + V from the eigenpairs of PHP."""
    ev = _evaluator(model, evaluator, eta)
    V = v_spectral(model, model.php, ev)
    return EffectiveHamiltonian(model.h1_parallel + V, model.m0, "spectral", ev.eta)


@dataclass
class FixedPointResult:
    """Outcome of the fixed-point iteration for V.

    ``history[k]`` is the Frobenius norm ||V(k+1) - V(k)||; ``iterates[k]`` is
    V(k+1) (V(0) = 0 is not stored).
    """

    V: np.ndarray
    history: list
    converged: bool
    iterations: int
    iterates: list
    eta: float


def iterate_v(model: FullModel, max_iter: int = 50, tol: float = 1e-12,
              evaluator: SelfEnergyEvaluator | None = None, eta: float | None = None,
              complex_arguments: bool = True) -> FixedPointResult:
    """Solve V = -sum_j Sigma(lambda_j) P_j(PHP + V) by iteration from V = 0.

    Stops when ||V(k+1) - V(k)|| <= tol ||V(k+1)|| (Frobenius) or after
    ``max_iter`` iterations; non-convergence is reported through
    ``converged=False``.  A non-diagonalizable iterate raises
    :class:`NonDiagonalizableError` naming the iteration.
    """
    if max_iter < 1:
        raise ModelError("max_iter must be >= 1")
    if not tol > 0:
        raise ModelError("tol must be positive")
    ev = _evaluator(model, evaluator, eta)
    V = np.zeros((model.n, model.n), dtype=complex)
    history, iterates = [], []
    converged = False
    for it in range(1, max_iter + 1):
        try:
            V_new = v_spectral(model, model.php + V, ev, complex_arguments=complex_arguments)
        except NonDiagonalizableError as exc:
            raise NonDiagonalizableError(f"iteration {it}: {exc}") from exc
        step = float(np.linalg.norm(V_new - V))
        history.append(step)
        iterates.append(V_new)
        V = V_new
        if step <= tol * np.linalg.norm(V):
            converged = True
            break
    return FixedPointResult(V, history, converged, len(history), iterates, ev.eta)


def h_iterate(model: FullModel, max_iter: int = 50, tol: float = 1e-12,
              evaluator: SelfEnergyEvaluator | None = None, eta: float | None = None,
              complex_arguments: bool = True) -> EffectiveHamiltonian:
    res = iterate_v(model, max_iter, tol, evaluator, eta, complex_arguments)
    return EffectiveHamiltonian(model.h1_parallel + res.V, model.m0, "iterate", res.eta,
                                {"history": res.history, "converged": res.converged,
                                 "iterations": res.iterations})


def _unitary_with_first_column(psi: np.ndarray) -> np.ndarray:
    n = psi.size
    q, _ = np.linalg.qr(np.column_stack([psi, np.eye(n, dtype=complex)]))
    return q


def h_1d(model: FullModel, psi, evaluator_eta: float | None = None) -> EffectiveHamiltonian:
    """One-dimensional effective Hamiltonian for P = |psi><psi|.

    ``psi`` may be given on the parallel subspace or in the full basis.  The
    basis is rotated so that psi is the first vector, and Sigma_psi is the
    resolvent sandwich of that rotated model at <psi|H|psi>.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size == model.n:
        psi = model.parallel_state(psi)
    elif psi.size != model.dim:
        raise ModelError(f"psi must have {model.n} or {model.dim} components")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ModelError("psi is not normalized")
    eta = evaluator_eta if evaluator_eta is not None else default_eta(model)

    p, q = model.partition.p_index, model.partition.q_index
    if np.all(psi[q] == 0):
        # rotate inside P only; Q keeps its basis
        W = _unitary_with_first_column(psi[p])
        B = np.eye(model.dim, dtype=complex)
        B[np.ix_(p, p)] = W
    else:
        B = _unitary_with_first_column(psi)
    H = model.H
    Hr = B.conj().T @ H @ B
    Hr = 0.5 * (Hr + Hr.conj().T)
    rotated = FullModel.from_matrix(Hr, [0], m0=float(Hr[0, 0].real))
    ev = SelfEnergyEvaluator(rotated, eta)
    e_psi = float(np.real(psi.conj() @ H @ psi))
    sig = ev.sigma(e_psi)[0, 0]
    return EffectiveHamiltonian(np.array([[e_psi - model.m0 - sig]]), model.m0, "onedim", eta,
                                {"expectation": e_psi})


METHODS = {
    "loy0": h_loy0,
    "loy": h_loy,
    "improved": h_loy_imp,
    "spectral": h_spectral,
    "iterate": h_iterate,
}


def compute(model: FullModel, method: str, evaluator: SelfEnergyEvaluator | None = None,
            **kwargs) -> EffectiveHamiltonian:
    """Dispatch by method tag (``onedim`` needs ``psi=``)."""
    if method == "onedim":
        psi = kwargs.pop("psi")
        eta = evaluator.eta if evaluator is not None else kwargs.pop("eta", None)
        return h_1d(model, psi, eta)
    try:
        fn = METHODS[method]
    except KeyError:
        raise ModelError(f"unknown method {method!r}; choose from {sorted(METHODS) + ['onedim']}")
    return fn(model, evaluator=evaluator, **kwargs)
