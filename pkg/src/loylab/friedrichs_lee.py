"""Lowest sector of the generalized Friedrichs-Lee model and its CPT estimates.

The sector is spanned by |V_1>, |V_2> (identified with K0 and anti-K0) and
|n, w> (channel particle N_n plus a Theta quantum of energy w >= 0), with

    <V_j|H|V_k>   = m_jk
    <n,w|H|n,w>   = mu_n + w
    <V_j|H|n,w>   = g_jn(w)

The analytic estimates of h11 - h22 for the improved Hamiltonian use the LOY
decay matrix Gamma_jk = 2 pi sum_n g_jn(w) g_kn(w)^* at w = m0 - mu, i.e. the
pi sum g* g / f formula with weight f = 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .effective import h_loy_imp
from .errors import ModelError
from .model import Channel, ContinuumGrid, FullModel, _hermitian_residual, build_model
from .self_energy import SelfEnergyEvaluator

__all__ = [
    "HBAR_MEV_S",
    "TAU_S",
    "KAON_GAP",
    "FLParams",
    "flat_coupling",
    "threshold_coupling",
    "cpt_fl_params",
    "desk_scale_params",
    "kaon_ratio_params",
    "build_fl_sector",
    "fl_gamma",
    "loy_gamma",
    "FLAnalytic",
    "fl_diag_difference_analytic",
    "fl_estimate_kaon",
    "FLCrossValidation",
    "fl_cross_validate",
]

HBAR_MEV_S = 6.582e-22  # MeV s
TAU_S = 0.89e-10  # s, short-lived neutral kaon
KAON_GAP = 200.0  # MeV, m_K - 2 m_pi

# LOY decay matrix = 2 x fl_gamma with f = 1
LOY_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class FLParams:
    """Parameters of the two-level Friedrichs-Lee sector.

    Parameters
    ----------
    m : (2, 2) complex
        Hermitian mass matrix m_jk.
    mu : sequence of float
        Channel masses mu_n.
    couplings : sequence of callables
        One per channel; ``g(w)`` returns an array (len(w), 2) holding
        g_1n(w), g_2n(w).
    omega_max : float
        Cutoff of the Theta energy w.
    points : int
        Midpoint-rule grid size per channel.
    eta : float, optional
        Regulator; default is 3 x grid spacing.
    """

    m: np.ndarray
    mu: Sequence[float]
    couplings: Sequence[Callable]
    omega_max: float
    points: int = 16000
    eta: float | None = None
    labels: Sequence[str] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=complex)
        if m.shape != (2, 2):
            raise ModelError("mass matrix must be 2x2")
        if _hermitian_residual(m) > 1e-12:
            raise ModelError("mass matrix is not Hermitian")
        object.__setattr__(self, "m", 0.5 * (m + m.conj().T))
        mu = tuple(float(x) for x in np.atleast_1d(self.mu))
        object.__setattr__(self, "mu", mu)
        cs = tuple(self.couplings)
        if len(cs) != len(mu):
            raise ModelError(f"{len(cs)} coupling functions for {len(mu)} channels")
        object.__setattr__(self, "couplings", cs)
        if not self.omega_max > 0:
            raise ModelError("omega_max must be positive")
        if int(self.points) < 1:
            raise ModelError("points must be >= 1")
        labels = tuple(self.labels) if self.labels else tuple(f"N{k + 1}" for k in range(len(mu)))
        if len(labels) != len(mu):
            raise ModelError("one label per channel required")
        object.__setattr__(self, "labels", labels)

    @property
    def m0(self) -> float:
        return float(self.m[0, 0].real)

    @property
    def m12(self) -> complex:
        return complex(self.m[0, 1])

    def grid(self) -> ContinuumGrid:
        """Midpoint grid of w on (0, omega_max]."""
        return ContinuumGrid.uniform(0.0, self.omega_max, int(self.points))

    def coupling_values(self, k: int, omega) -> np.ndarray:
        g = np.asarray(self.couplings[k](np.atleast_1d(np.asarray(omega, dtype=float))), dtype=complex)
        if g.ndim != 2 or g.shape[1] != 2:
            raise ModelError(f"coupling {self.labels[k]!r} must return shape (len(w), 2)")
        return g


def flat_coupling(g1: complex, g2: complex | None = None, omega_max: float | None = None) -> Callable:
    """Constant couplings on [0, omega_max]; g2 defaults to conj(g1)."""
    g1 = complex(g1)
    g2 = g1.conjugate() if g2 is None else complex(g2)

    def g(w):
        w = np.asarray(w, dtype=float)
        out = np.empty((w.size, 2), dtype=complex)
        out[:, 0], out[:, 1] = g1, g2
        if omega_max is not None:
            out[(w < 0) | (w > omega_max)] = 0.0
        return out

    return g


def threshold_coupling(gamma: float, gap: float, phase: complex = 1.0) -> Callable:
    """Couplings with |g(w)|^2 = gamma/(4 pi) * sqrt(gap / w), g2 = conj(g1).

    For this profile the principal part of Sigma vanishes for an infinite
    cutoff and Sigma(x) = (i gamma/4) sqrt(gap/(x - mu)) [[1, p^2], [p*^2, 1]]
    exactly, which is the energy dependence behind the square-root bracket
    of the analytic h11 - h22.  The LOY decay matrix at w = gap has
    eigenvalues gamma and 0 when ``phase`` is real.
    """
    if gamma < 0 or gap <= 0:
        raise ModelError("need gamma >= 0 and gap > 0")
    phase = complex(phase)
    if abs(abs(phase) - 1) > 1e-12:
        raise ModelError("phase must have unit modulus")

    def g(w):
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise ModelError("threshold coupling is singular at w = 0; use a midpoint grid")
        amp = np.sqrt(gamma / (4 * np.pi) * np.sqrt(gap / w))
        return np.column_stack([amp * phase, amp * phase.conjugate()])

    return g


def cpt_fl_params(m0: float, m12: complex, mu: float, coupling: Callable, omega_max: float,
                  points: int = 16000, eta: float | None = None, **metadata) -> FLParams:
    """Single-channel CPT-invariant parameters: m11 = m22 = m0."""
    m12 = complex(m12)
    m = np.array([[m0, m12], [m12.conjugate(), m0]])
    return FLParams(m, [mu], [coupling], omega_max, points, eta, metadata=dict(metadata))


def desk_scale_params(im_m12: float = 1e-3, re_m12: float = 0.0, gamma_s: float = 0.02,
                      gap: float = 2.0, mu: float = 0.0, cutoff_ratio: float = 16.0,
                      points: int = 16000, eta: float | None = None) -> FLParams:
    """Desk-scale CPT-invariant sector in model units.

    Defaults: m0 - mu = 2, gamma_s = 0.02, Im m12 = 1e-3, threshold coupling
    profile, cutoff 16 (m0 - mu) and 16000 grid points.
    """
    return cpt_fl_params(mu + gap, complex(re_m12, im_m12), mu, threshold_coupling(gamma_s, gap),
                         cutoff_ratio * gap, points, eta, regime="desk", gamma_s=gamma_s)


def kaon_ratio_params(im_m12_ratio: float = 5e-4, gap: float = 2.0, tau_s: float = TAU_S,
                       kaon_gap: float = KAON_GAP, hbar: float = HBAR_MEV_S, **kwargs) -> FLParams:
    """Desk model with the kaon ratio gamma_s / (m0 - mu) preserved.

    gamma_s/(m0 - mu) = (hbar/tau_s)/200 MeV ~ 3.7e-14 is kept while the
    gap is rescaled to ``gap`` model units; Im m12 = im_m12_ratio * gap.
    """
    ratio = hbar / tau_s / kaon_gap
    return desk_scale_params(im_m12=im_m12_ratio * gap, gamma_s=ratio * gap, gap=gap, **kwargs)


def build_fl_sector(params: FLParams) -> FullModel:
    """Finite-grid FullModel of the (q1, q2) = (1, 0) sector."""
    m0 = params.m0
    chans = []
    for k, (mu, label) in enumerate(zip(params.mu, params.labels)):
        wgrid = params.grid()
        grid = ContinuumGrid(mu + wgrid.energies, wgrid.weights)
        chans.append(Channel(grid, params.coupling_values(k, wgrid.energies), label))
    meta = {"sector": "q1=1,q2=0", "V1": "K0", "V2": "anti-K0", "mu": params.mu,
            "omega_max": params.omega_max, **params.metadata}
    return build_model(m0, params.m - m0 * np.eye(2), chans, metadata=meta)


def fl_gamma(params: FLParams, lam: float, f_weight: Callable | float = 1.0) -> np.ndarray:
    """Gamma_jk = pi sum_n g_jn(lam) conj(g_kn(lam)) / f(lam).

    ``lam`` is the Theta energy w at which the couplings are evaluated.
    ``f_weight`` is a constant or a callable; the default f = 1 is a choice
    (the LOY decay matrix corresponds to f = 1/2).
    """
    f = f_weight(lam) if callable(f_weight) else f_weight
    f = float(f)
    if f == 0:
        raise ModelError("weight function vanishes at lambda")
    G = np.zeros((2, 2), dtype=complex)
    for k in range(len(params.mu)):
        g = params.coupling_values(k, [lam])[0]
        G += np.outer(g, g.conj())
    G = 0.5 * (G + G.conj().T)  # complex products leave a rounding-level Im on the diagonal
    return np.pi * G / f


def _single_mu(params: FLParams) -> float:
    mu = np.asarray(params.mu)
    if not np.all(mu == mu[0]):
        raise ModelError("the analytic estimate assumes a common channel mass mu")
    return float(mu[0])


def loy_gamma(params: FLParams) -> np.ndarray:
    """LOY decay matrix at the threshold distance w = m0 - mu."""
    return fl_gamma(params, params.m0 - _single_mu(params), LOY_WEIGHT)


@dataclass
class FLAnalytic:
    """Analytic h11 - h22 of the improved Hamiltonian and its approximations."""

    exact: complex
    approx2: complex
    approx3: float
    approx4: float
    gamma: np.ndarray
    gamma_s: float
    gamma_l: float
    gap: float


def fl_diag_difference_analytic(params: FLParams, gamma: np.ndarray | None = None) -> FLAnalytic:
    """Square-root formula for h11 - h22 and the three weak-mixing estimates.

    ``gamma`` overrides the LOY decay matrix (default :func:`loy_gamma`).
    Requires m11 = m22, a common mu and m0 - mu > |m12|.
    """
    m = params.m
    if abs(m[0, 0] - m[1, 1]) > 1e-12 * max(1.0, abs(m[0, 0])):
        raise ModelError("analytic estimate needs the CPT case m11 = m22")
    mu = _single_mu(params)
    a = params.m0 - mu
    m12, m21 = complex(m[0, 1]), complex(m[1, 0])
    if not a > abs(m12):
        raise ModelError(f"m0 - mu = {a} must exceed |m12| = {abs(m12)}")
    G = loy_gamma(params) if gamma is None else np.asarray(gamma, dtype=complex)
    num = m21 * G[0, 1] - m12 * G[1, 0]
    if m12 == 0:
        exact = 0j
    else:
        r = abs(m12)
        bracket = np.sqrt(a / (a - r)) - np.sqrt(a / (a + r))
        exact = 0.25j * num / r * bracket
    approx2 = 1j * num / (4 * a)
    approx3 = (-m12.real * G[0, 1].imag + m12.imag * G[0, 1].real) / (2 * a)
    rates = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    gamma_l, gamma_s = float(rates[0]), float(rates[1])
    approx4 = m12.imag * (gamma_s - gamma_l) / (4 * a)
    return FLAnalytic(complex(exact), complex(approx2), float(approx3), float(approx4),
                      G, gamma_s, gamma_l, a)


def fl_estimate_kaon(im_m12: float, tau_s: float = TAU_S, gap: float = KAON_GAP,
                     hbar: float = HBAR_MEV_S) -> float:
    """Im(m12) gamma_s / (4 (m0 - mu)) with gamma_s = hbar / tau_s, in MeV."""
    return im_m12 * (hbar / tau_s) / (4.0 * gap)


@dataclass
class FLCrossValidation:
    numeric: complex
    analytic: FLAnalytic
    relative_gap: float
    eta: float
    grid_spacing: float
    points: int


def fl_cross_validate(params: FLParams) -> FLCrossValidation:
    """Compare h11 - h22 of the improved Hamiltonian on the grid with the formula."""
    model = build_fl_sector(params)
    ev = SelfEnergyEvaluator(model, params.eta)
    heff = h_loy_imp(model, evaluator=ev)
    numeric = heff.diag_difference()
    ana = fl_diag_difference_analytic(params)
    scale = abs(ana.exact)
    if scale == 0:
        gap = 0.0 if abs(numeric) <= 1e-12 * np.linalg.norm(params.m) else float("inf")
    else:
        gap = abs(numeric - ana.exact) / scale
    return FLCrossValidation(numeric, ana, float(gap), ev.eta, model.grid_spacing, int(params.points))
