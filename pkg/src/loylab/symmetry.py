"""Antiunitary CPT operator and CPT-invariant model construction.

Theta = U K with K complex conjugation in the model basis.  On the two
parallel levels U = -sigma_x (Theta|1> = -|2>, Theta|2> = -|1>).  On the
continuum every grid point is sent to -|e, J'> with J' the paired channel
(self-pairing by default).  [Theta, H] = 0 is equivalent to U H* = H U.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .effective import EffectiveHamiltonian
from .errors import ModelError
from .model import Channel, ContinuumGrid, FullModel, build_model, lorentzian_coupling

__all__ = [
    "AntiUnitaryOp",
    "build_cpt",
    "cpt_residual",
    "CPTModelSpec",
    "make_cpt_invariant",
    "random_cpt_model",
    "diag_difference",
]

PARALLEL_CPT = -np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True, eq=False)
class AntiUnitaryOp:
    """Theta = U o K with U = U_P (+) S_Q, S_Q a signed permutation.

    ``q_perm[j]`` and ``q_sign[j]`` define (S_Q v)_j = q_sign[j] v[q_perm[j]]
    in Q-block coordinates.
    """

    p_unitary: np.ndarray
    q_perm: np.ndarray
    q_sign: np.ndarray
    p_index: np.ndarray
    q_index: np.ndarray
    basis: str = "model"

    def __post_init__(self):
        u = np.asarray(self.p_unitary, dtype=complex)
        if np.linalg.norm(u @ u.conj().T - np.eye(u.shape[0])) > 1e-12:
            raise ModelError("parallel block of U is not unitary")
        perm = np.asarray(self.q_perm, dtype=int)
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ModelError("q_perm is not a permutation")
        sign = np.asarray(self.q_sign, dtype=complex)
        if sign.shape != perm.shape or np.any(np.abs(np.abs(sign) - 1) > 1e-12):
            raise ModelError("q_sign must hold unit-modulus phases, one per Q state")
        object.__setattr__(self, "p_unitary", u)
        object.__setattr__(self, "q_perm", perm)
        object.__setattr__(self, "q_sign", sign)

    @property
    def dim(self) -> int:
        return self.p_index.size + self.q_index.size

    @cached_property
    def unitary_part(self) -> np.ndarray:
        """Dense U (dim x dim)."""
        U = np.zeros((self.dim, self.dim), dtype=complex)
        U[np.ix_(self.p_index, self.p_index)] = self.p_unitary
        U[self.q_index, self.q_index[self.q_perm]] = self.q_sign
        return U

    def apply(self, v) -> np.ndarray:
        """Theta v = U conj(v)."""
        v = np.conj(np.asarray(v, dtype=complex))
        out = np.empty_like(v)
        out[self.p_index] = self.p_unitary @ v[self.p_index]
        vq = v[self.q_index]
        out[self.q_index] = self.q_sign * vq[self.q_perm]
        return out

    def _s_left(self, a):
        # S @ a on the row index
        return self.q_sign[:, None] * a[self.q_perm]

    def _s_right(self, a):
        # a @ S on the column index: column k picks up column perm^-1(k)
        inv = np.argsort(self.q_perm)
        return a[:, inv] * self.q_sign[inv][None, :]


def build_cpt(model: FullModel, channel_pairing: dict | None = None) -> AntiUnitaryOp:
    """CPT operator for a two-level model.

    ``channel_pairing`` maps channel labels to their CPT partners; omitted
    channels are self-paired.  The mapping must be an involution and paired
    channels must share their grid.
    """
    if model.n != 2:
        raise ModelError("the CPT phase convention is defined for two parallel levels")
    m = model.dim - model.n
    pairing = dict(channel_pairing or {})
    labels = {ch.label: ch for ch in model.channels}
    for a, b in pairing.items():
        if a not in labels or b not in labels:
            raise ModelError(f"unknown channel in pairing {a!r} -> {b!r}")
        if pairing.get(b, b) != a:
            raise ModelError(f"pairing is not an involution at {a!r}")
        if not labels[a].grid.same_as(labels[b].grid):
            raise ModelError(f"paired channels {a!r} and {b!r} have different grids")
    perm = np.arange(m)
    for ch in model.channels:
        partner = labels[pairing.get(ch.label, ch.label)]
        perm[ch.slice] = np.arange(partner.start, partner.stop)
    covered = sum(ch.stop - ch.start for ch in model.channels)
    if covered != m and pairing:
        raise ModelError("pairing needs channel metadata covering the whole Q block")
    return AntiUnitaryOp(PARALLEL_CPT, perm, -np.ones(m), model.partition.p_index,
                         model.partition.q_index)


def cpt_residual(theta: AntiUnitaryOp, H) -> float:
    """Frobenius norm of U H* - H U; zero iff Theta H Theta^-1 = H.

    ``H`` is a dense matrix or a :class:`FullModel`; models are processed
    block by block so that no dense H is formed.
    """
    if not isinstance(H, FullModel):
        H = np.asarray(H, dtype=complex)
        if H.shape != (theta.dim, theta.dim):
            raise ModelError(f"H has shape {H.shape}, operator acts on dimension {theta.dim}")
        U = theta.unitary_part
        return float(np.linalg.norm(U @ H.conj() - H @ U))
    model = H
    if model.dim != theta.dim:
        raise ModelError("operator and model dimensions differ")
    up = theta.p_unitary
    pp = up @ model.php.conj() - model.php @ up
    pq = up @ model.phq.conj() - theta._s_right(model.phq)
    qp = theta._s_left(model.qhp.conj()) - model.qhp @ up
    if model.qhq_is_diagonal:
        e = np.asarray(model.qhq, dtype=float)
        # only the entries (j, perm j) of S diag(e) - diag(e) S are nonzero
        qq = theta.q_sign * (e[theta.q_perm] - e)
    else:
        a = model.qhq
        qq = theta._s_left(a.conj()) - theta._s_right(a)
    return float(np.sqrt(sum(np.linalg.norm(b) ** 2 for b in (pp, pq, qp, qq))))


@dataclass
class CPTModelSpec:
    """Input of :func:`make_cpt_invariant`.

    Parameters
    ----------
    m0 : float
        Common diagonal mass H11 = H22.
    m12 : complex
        Off-diagonal element; Im m12 is the CP-violating source.
    channels : list of (ContinuumGrid, coupling, label)
        ``coupling`` gives the row-1 couplings g_1(e) as an array over the
        grid or a callable of energy.  Row 2 is set to conj(g_1).
    q_interaction : array, optional
        Real symmetric Q-sector interaction (needed for QHQ to commute with K).
    """

    m0: float
    m12: complex
    channels: list
    q_interaction: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


def make_cpt_invariant(spec: CPTModelSpec) -> FullModel:
    """Two-level model commuting with the self-paired CPT operator."""
    if not spec.channels:
        raise ModelError("at least one decay channel is required")
    chans = []
    for i, item in enumerate(spec.channels):
        grid, g1 = item[0], item[1]
        label = item[2] if len(item) > 2 else f"J{i}"
        if not isinstance(grid, ContinuumGrid):
            raise ModelError("channel grid must be a ContinuumGrid")
        g1 = g1(grid.energies) if callable(g1) else g1
        g1 = np.asarray(g1, dtype=complex).reshape(-1)
        if g1.size == 1:
            g1 = np.full(len(grid), g1[0])
        if g1.size != len(grid):
            raise ModelError(f"channel {label!r}: {g1.size} couplings for {len(grid)} grid points")
        chans.append(Channel(grid, np.column_stack([g1, g1.conj()]), label))
    qi = spec.q_interaction
    if qi is not None:
        qi = np.asarray(qi)
        if np.iscomplexobj(qi) and np.any(qi.imag != 0):
            raise ModelError("q_interaction must be real for CPT invariance")
        qi = np.asarray(qi.real, dtype=float)
        if np.any(qi != qi.T):
            raise ModelError("q_interaction must be symmetric")
    m12 = complex(spec.m12)
    h1 = np.array([[0.0, m12], [m12.conjugate(), 0.0]])
    meta = {"cpt": "self-paired", **spec.metadata}
    return build_model(spec.m0, h1, chans, qi, meta)


def random_cpt_model(rng: np.random.Generator, points: int = 200, band=(0.0, 4.0),
                     coupling: float = 0.05, m12_scale: float = 0.05, q_scale: float = 0.0,
                     channels: int = 1) -> FullModel:
    """Random CPT-invariant two-level model with complex couplings and m12."""
    lo, hi = band
    m0 = lo + (hi - lo) * rng.uniform(0.3, 0.7)
    m12 = m12_scale * (rng.normal() + 1j * rng.normal())
    chans = []
    for c in range(channels):
        grid = ContinuumGrid.uniform(lo, hi, points)
        amp = coupling * (rng.normal() + 1j * rng.normal())
        centre = m0 + 0.1 * (hi - lo) * rng.normal()
        g = lorentzian_coupling([amp], centre, 0.5 * (hi - lo))(grid.energies)[:, 0]
        # a slowly varying phase keeps the couplings genuinely complex
        g = g * np.exp(1j * rng.uniform(0, 2 * np.pi) * (grid.energies - lo) / (hi - lo))
        chans.append((grid, g, f"J{c}"))
    qi = None
    if q_scale:
        m = points * channels
        a = rng.normal(size=(m, m)) * q_scale / np.sqrt(m)
        qi = 0.5 * (a + a.T)
    return make_cpt_invariant(CPTModelSpec(m0, m12, chans, qi))


def diag_difference(heff: EffectiveHamiltonian) -> complex:
    """h11 - h22 of a two-level effective Hamiltonian."""
    return heff.diag_difference()
