"""Finite-dimensional total Hamiltonians with a distinguished unstable subspace.

The full basis is split into a parallel block (the unstable levels, projector
P) and a perpendicular block (discretised decay continua, projector Q).  A
continuum channel is a quadrature grid; the state |e_i, J> carries the weight
w_i through a sqrt(w_i) factor in every coupling so that discrete sums over
grid points converge to energy integrals.

Models are stored block-wise.  The dense ``H`` is only assembled on request,
which keeps models with tens of thousands of grid points cheap as long as the
Q-block is diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ModelError

__all__ = [
    "ContinuumGrid",
    "Channel",
    "ChannelBlock",
    "SubspacePartition",
    "FullModel",
    "constant_coupling",
    "lorentzian_coupling",
    "build_model",
    "build_two_level_model",
    "split_blocks",
    "assemble_blocks",
    "random_hermitian",
    "random_model",
    "LoyDiagnostics",
    "diagnose_loy_conditions",
    "find_loy_crossing",
]

HERMITIAN_RTOL = 1e-12


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _hermitian_residual(m):
    m = np.asarray(m)
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)) / scale)


@dataclass(frozen=True)
class ContinuumGrid:
    """Quadrature nodes and weights for one decay channel (energy units)."""

    energies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if e.size < 1 or e.size != w.size:
            raise ModelError("grid needs equal-length energies and weights with at least one point")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(w)):
            raise ModelError("grid values must be finite")
        if np.any(np.diff(e) <= 0):
            raise ModelError("grid energies must be strictly increasing")
        if np.any(w <= 0):
            raise ModelError("grid weights must be positive")
        object.__setattr__(self, "energies", _frozen(e))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, e_min: float, e_max: float, points: int) -> "ContinuumGrid":
        """Midpoint rule on [e_min, e_max]; the endpoints themselves are never nodes."""
        if points < 1 or not e_max > e_min:
            raise ModelError("uniform grid needs points >= 1 and e_max > e_min")
        h = (e_max - e_min) / points
        e = e_min + (np.arange(points) + 0.5) * h
        return cls(e, np.full(points, h))

    def __len__(self):
        return self.energies.size

    @property
    def spacing(self) -> float:
        if self.energies.size == 1:
            return float(self.weights[0])
        return float(np.median(np.diff(self.energies)))

    def same_as(self, other: "ContinuumGrid") -> bool:
        return (len(self) == len(other) and np.array_equal(self.energies, other.energies)
                and np.array_equal(self.weights, other.weights))


@dataclass(frozen=True)
class Channel:
    """Decay channel input: a grid plus the couplings g_k(e_i) of every parallel level.

    ``couplings`` has shape (len(grid), n); entry [i, k] is g_k(e_i) so that
    <k|H|e_i, J> = g_k(e_i) * sqrt(w_i).  A callable ``energies -> array`` is
    also accepted and evaluated on the grid.
    """

    grid: ContinuumGrid
    couplings: np.ndarray | Callable
    label: str = "J"

    def coupling_table(self, n: int) -> np.ndarray:
        g = self.couplings
        if callable(g):
            g = g(self.grid.energies)
        g = np.asarray(g, dtype=complex)
        if g.ndim == 1 and n == 1:
            g = g[:, None]
        if g.shape != (len(self.grid), n):
            raise ModelError(
                f"channel {self.label!r}: couplings shape {g.shape}, expected {(len(self.grid), n)}")
        return g


@dataclass(frozen=True)
class ChannelBlock:
    """Where a channel lives inside the Q-block of a built model."""

    label: str
    grid: ContinuumGrid
    start: int
    stop: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class SubspacePartition:
    """Index sets of the parallel (P) and perpendicular (Q) subspaces."""

    parallel_indices: tuple
    size: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.parallel_indices)
        if len(idx) < 1:
            raise ModelError("parallel subspace must have dimension >= 1")
        if len(set(idx)) != len(idx):
            raise ModelError("parallel indices must be distinct")
        if min(idx) < 0 or max(idx) >= self.size:
            raise ModelError("parallel index out of basis range")
        object.__setattr__(self, "parallel_indices", idx)

    @property
    def dimension(self) -> int:
        return len(self.parallel_indices)

    @cached_property
    def p_index(self) -> np.ndarray:
        return np.array(self.parallel_indices, dtype=int)

    @cached_property
    def q_index(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.p_index] = False
        return np.flatnonzero(mask)

    @property
    def P(self) -> np.ndarray:
        p = np.zeros((self.size, self.size))
        p[self.p_index, self.p_index] = 1.0
        return p

    @property
    def Q(self) -> np.ndarray:
        return np.eye(self.size) - self.P


@dataclass(frozen=True, eq=False)
class FullModel:
    """Hermitian total Hamiltonian H = H0 + H1 stored as P/Q blocks.

    Attributes
    ----------
    partition : SubspacePartition
    m0 : float
        Degenerate eigenvalue of H0 on the parallel subspace.
    php, phq : ndarray
        Blocks P H P (n, n) and P H Q (n, m).
    qhq : ndarray
        Q H Q, either a real 1-D diagonal (m,) or a dense Hermitian (m, m).
    h0_q : ndarray
        Q H0 Q in the same two formats.  P H0 Q = 0 and P H0 P = m0 I hold by
        construction, so H1 = H - H0 is never stored.
    channels : tuple of ChannelBlock
        Grid metadata; empty for models built from a bare matrix.
    metadata : dict
    """

    partition: SubspacePartition
    m0: float
    php: np.ndarray
    phq: np.ndarray
    qhq: np.ndarray
    h0_q: np.ndarray
    channels: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.partition.dimension
        m = self.partition.size - n
        php = np.asarray(self.php, dtype=complex)
        phq = np.asarray(self.phq, dtype=complex).reshape(n, m)
        if php.shape != (n, n):
            raise ModelError(f"PHP shape {php.shape}, expected {(n, n)}")
        if _hermitian_residual(php) > HERMITIAN_RTOL:
            raise ModelError("P H P is not Hermitian")
        php = 0.5 * (php + php.conj().T)
        qhq = self._q_block(self.qhq, m, "QHQ")
        h0q = self._q_block(self.h0_q, m, "QH0Q")
        object.__setattr__(self, "m0", float(self.m0))
        object.__setattr__(self, "php", _frozen(php))
        object.__setattr__(self, "phq", _frozen(phq))
        object.__setattr__(self, "qhq", _frozen(qhq))
        object.__setattr__(self, "h0_q", _frozen(h0q))
        object.__setattr__(self, "channels", tuple(self.channels))
        seen = set()
        for ch in self.channels:
            if ch.label in seen:
                raise ModelError(f"duplicate channel label {ch.label!r}")
            seen.add(ch.label)

    @staticmethod
    def _q_block(a, m, name):
        a = np.asarray(a)
        if a.ndim == 1:
            if a.shape != (m,):
                raise ModelError(f"{name} diagonal has length {a.shape[0]}, expected {m}")
            if np.iscomplexobj(a):
                scale = max(np.max(np.abs(a)), 1.0) if m else 1.0
                if np.max(np.abs(a.imag), initial=0.0) > HERMITIAN_RTOL * scale:
                    raise ModelError(f"{name} diagonal must be real")
                a = a.real
            return a.astype(float)
        if a.shape != (m, m):
            raise ModelError(f"{name} shape {a.shape}, expected {(m, m)}")
        if _hermitian_residual(a) > HERMITIAN_RTOL:
            raise ModelError(f"{name} is not Hermitian")
        a = a.astype(complex)
        return 0.5 * (a + a.conj().T)

    # ---- construction from a dense matrix ---------------------------------

    @classmethod
    def from_matrix(cls, H, parallel_indices: Sequence[int], H0=None, m0: float | None = None,
                    metadata: dict | None = None) -> "FullModel":
        """Wrap a dense Hermitian matrix.

        Without ``H0`` the free part is taken as m0 on P plus the diagonal of
        QHQ, with m0 the mean diagonal of PHP unless given.
        """
        H = np.asarray(H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ModelError("H must be square")
        if _hermitian_residual(H) > HERMITIAN_RTOL:
            raise ModelError("H is not Hermitian")
        part = SubspacePartition(tuple(parallel_indices), H.shape[0])
        p, q = part.p_index, part.q_index
        php = H[np.ix_(p, p)]
        if H0 is None:
            if m0 is None:
                m0 = float(np.real(np.trace(php))) / part.dimension
            h0q = np.real(np.diag(H[np.ix_(q, q)])).copy()
        else:
            H0 = np.asarray(H0, dtype=complex)
            if H0.shape != H.shape or _hermitian_residual(H0) > HERMITIAN_RTOL:
                raise ModelError("H0 must be Hermitian with the shape of H")
            scale = max(np.max(np.abs(H0)), 1.0)
            if np.max(np.abs(H0[np.ix_(p, q)]), initial=0.0) > HERMITIAN_RTOL * scale:
                raise ModelError("[P, H0] != 0")
            h0p = H0[np.ix_(p, p)]
            m0_h0 = float(np.real(h0p[0, 0]))
            if np.max(np.abs(h0p - m0_h0 * np.eye(part.dimension))) > HERMITIAN_RTOL * scale:
                raise ModelError("H0 restricted to the parallel subspace is not m0 * I")
            if m0 is not None and abs(m0 - m0_h0) > HERMITIAN_RTOL * scale:
                raise ModelError("m0 disagrees with H0")
            m0 = m0_h0
            h0q = H0[np.ix_(q, q)]
            if np.count_nonzero(h0q - np.diag(np.diag(h0q))) == 0:
                h0q = np.real(np.diag(h0q)).copy()
        qhq = H[np.ix_(q, q)]
        if np.count_nonzero(qhq - np.diag(np.diag(qhq))) == 0:
            qhq = np.diag(qhq).copy()
        return cls(part, m0, php, H[np.ix_(p, q)], qhq, h0q, (), dict(metadata or {}))

    # ---- derived quantities -----------------------------------------------

    @property
    def n(self) -> int:
        return self.partition.dimension

    @property
    def dim(self) -> int:
        return self.partition.size

    @property
    def qhp(self) -> np.ndarray:
        return self.phq.conj().T

    @property
    def qhq_is_diagonal(self) -> bool:
        return self.qhq.ndim == 1

    def qhq_matrix(self) -> np.ndarray:
        return np.diag(self.qhq).astype(complex) if self.qhq.ndim == 1 else np.array(self.qhq)

    def h0_q_matrix(self) -> np.ndarray:
        return np.diag(self.h0_q).astype(complex) if self.h0_q.ndim == 1 else np.array(self.h0_q)

    @property
    def h1_parallel(self) -> np.ndarray:
        """P H1 P = PHP - m0 I."""
        return self.php - self.m0 * np.eye(self.n)

    def qh1q_matrix(self) -> np.ndarray:
        return self.qhq_matrix() - self.h0_q_matrix()

    @property
    def has_q_interaction(self) -> bool:
        if self.qhq.ndim == 1 and self.h0_q.ndim == 1:
            return not np.array_equal(self.qhq, self.h0_q)
        return bool(np.any(self.qh1q_matrix() != 0))

    def _assemble(self, pp, pq, qq):
        p, q = self.partition.p_index, self.partition.q_index
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out[np.ix_(p, p)] = pp
        out[np.ix_(p, q)] = pq
        out[np.ix_(q, p)] = pq.conj().T
        out[np.ix_(q, q)] = qq
        return out

    @cached_property
    def H(self) -> np.ndarray:
        h = self._assemble(self.php, self.phq, self.qhq_matrix())
        h.setflags(write=False)
        return h

    @cached_property
    def H0(self) -> np.ndarray:
        h = self._assemble(self.m0 * np.eye(self.n), np.zeros_like(self.phq), self.h0_q_matrix())
        h.setflags(write=False)
        return h

    @property
    def H1(self) -> np.ndarray:
        return self.H - self.H0

    @property
    def grid_spacing(self) -> float:
        """Median spacing of all channel grids; falls back to the sorted QHQ diagonal."""
        if self.channels:
            diffs = [np.diff(ch.grid.energies) for ch in self.channels if len(ch.grid) > 1]
            if diffs:
                return float(np.median(np.concatenate(diffs)))
            return float(np.median([ch.grid.weights[0] for ch in self.channels]))
        levels = np.sort(np.real(np.diag(self.qhq_matrix())) if self.qhq.ndim == 2 else self.qhq)
        gaps = np.diff(levels)
        gaps = gaps[gaps > 0]
        if gaps.size == 0:
            raise ModelError("cannot infer a grid spacing; pass eta explicitly")
        return float(np.median(gaps))

    def channel(self, label: str) -> ChannelBlock:
        for ch in self.channels:
            if ch.label == label:
                return ch
        raise KeyError(label)

    def couplings(self, label: str) -> np.ndarray:
        """Continuum couplings g_k(e_i) of one channel, shape (points, n)."""
        ch = self.channel(label)
        return (self.phq[:, ch.slice] / np.sqrt(ch.grid.weights)).T

    def parallel_state(self, amplitudes) -> np.ndarray:
        """Embed parallel-subspace amplitudes into the full basis."""
        a = np.asarray(amplitudes, dtype=complex).ravel()
        if a.size != self.n:
            raise ModelError(f"expected {self.n} parallel amplitudes, got {a.size}")
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.partition.p_index] = a
        return psi


# ---------------------------------------------------------------------------
# coupling families
# ---------------------------------------------------------------------------

def constant_coupling(values, window: tuple | None = None) -> Callable:
    """g_k(e) = values[k] inside ``window`` (inclusive) and 0 outside."""
    v = np.atleast_1d(np.asarray(values, dtype=complex))

    def g(e):
        e = np.asarray(e, dtype=float)
        out = np.broadcast_to(v, (e.size, v.size)).copy()
        if window is not None:
            out[(e < window[0]) | (e > window[1])] = 0.0
        return out

    return g


def lorentzian_coupling(values, center: float, width: float) -> Callable:
    """Form factor with |g_k(e)|^2 = |values[k]|^2 * width^2 / ((e - center)^2 + width^2)."""
    v = np.atleast_1d(np.asarray(values, dtype=complex))
    if width <= 0:
        raise ModelError("Lorentzian width must be positive")

    def g(e):
        e = np.asarray(e, dtype=float)
        f = width / np.sqrt((e - center) ** 2 + width ** 2)
        return f[:, None] * v[None, :]

    return g


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _as_channels(channels) -> list:
    out = []
    for i, ch in enumerate(channels):
        if isinstance(ch, Channel):
            out.append(ch)
        else:
            grid, g = ch[0], ch[1]
            label = ch[2] if len(ch) > 2 else f"J{i}"
            out.append(Channel(grid, g, label))
    return out


def build_model(m0: float, h1_parallel, channels: Iterable, q_interaction=None,
                metadata: dict | None = None) -> FullModel:
    """Assemble an n-level model coupled to discretised continua.

    Basis order: the n parallel levels first, then every channel's grid
    points in the order given.  QHQ is diag(grid energies) plus the optional
    Hermitian ``q_interaction`` (the Q-sector part of H1).
    """
    h1 = np.atleast_2d(np.asarray(h1_parallel, dtype=complex))
    n = h1.shape[0]
    if h1.shape != (n, n):
        raise ModelError("h1_parallel must be square")
    if _hermitian_residual(h1) > HERMITIAN_RTOL:
        raise ModelError("h1_parallel is not Hermitian")
    chans = _as_channels(channels)
    if not chans:
        raise ModelError("at least one decay channel is required")
    labels = [c.label for c in chans]
    if len(set(labels)) != len(labels):
        raise ModelError(f"overlapping channel labels: {labels}")

    blocks, energies, phq_parts = [], [], []
    start = 0
    for ch in chans:
        g = ch.coupling_table(n)
        phq_parts.append((g * np.sqrt(ch.grid.weights)[:, None]).T)
        energies.append(ch.grid.energies)
        blocks.append(ChannelBlock(ch.label, ch.grid, start, start + len(ch.grid)))
        start += len(ch.grid)
    e = np.concatenate(energies)
    phq = np.concatenate(phq_parts, axis=1)
    if q_interaction is None:
        qhq = e.copy()
    else:
        qi = np.asarray(q_interaction, dtype=complex)
        if qi.shape != (e.size, e.size):
            raise ModelError(f"q_interaction shape {qi.shape}, expected {(e.size, e.size)}")
        qhq = np.diag(e).astype(complex) + qi
    part = SubspacePartition(tuple(range(n)), n + e.size)
    php = m0 * np.eye(n) + 0.5 * (h1 + h1.conj().T)
    return FullModel(part, m0, php, phq, qhq, e, tuple(blocks), dict(metadata or {}))


def build_two_level_model(m0: float, h1_parallel, channels: Iterable, q_interaction=None,
                          metadata: dict | None = None) -> FullModel:
    """Two unstable levels |1>, |2> (e.g. K0 and anti-K0) plus decay channels.

    ``channels`` holds :class:`Channel` objects or ``(grid, couplings[, label])``
    tuples with couplings of shape (points, 2).
    """
    h1 = np.asarray(h1_parallel, dtype=complex)
    if h1.shape != (2, 2):
        raise ModelError("h1_parallel must be 2x2")
    return build_model(m0, h1, channels, q_interaction, metadata)


def split_blocks(model: FullModel):
    """Dense (PHP, PHQ, QHP, QHQ) in partition order."""
    return (np.array(model.php), np.array(model.phq), np.array(model.qhp), model.qhq_matrix())


def assemble_blocks(partition: SubspacePartition, blocks) -> np.ndarray:
    """Inverse of :func:`split_blocks`."""
    pp, pq, qp, qq = (np.asarray(b, dtype=complex) for b in blocks)
    p, q = partition.p_index, partition.q_index
    out = np.zeros((partition.size, partition.size), dtype=complex)
    out[np.ix_(p, p)] = pp
    out[np.ix_(p, q)] = pq
    out[np.ix_(q, p)] = qp
    out[np.ix_(q, q)] = qq
    return out


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_model(rng: np.random.Generator, n: int = 2, points: int = 400, band=(0.0, 4.0),
                 m0: float | None = None, coupling: float = 0.05, h1_scale: float = 0.05,
                 q_scale: float = 0.0) -> FullModel:
    """Random n-level model with one smooth complex channel over ``band``.

    Couplings are Lorentzian-weighted complex constants; ``q_scale`` > 0 adds
    a random Hermitian interaction inside the Q-block.
    """
    lo, hi = band
    if m0 is None:
        m0 = 0.5 * (lo + hi)
    grid = ContinuumGrid.uniform(lo, hi, points)
    v = coupling * (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
    g = lorentzian_coupling(v, center=m0 + rng.normal() * 0.1 * (hi - lo), width=0.5 * (hi - lo))
    qi = random_hermitian(rng, points, q_scale / np.sqrt(points)) if q_scale else None
    return build_model(m0, random_hermitian(rng, n, h1_scale), [Channel(grid, g, "J0")], qi)


# ---------------------------------------------------------------------------
# validity diagnostics for the LOY assumptions
# ---------------------------------------------------------------------------

@dataclass
class LoyDiagnostics:
    """Per-time norms entering the LOY validity conditions.

    ``php_norm`` = ||P H1 P psi_par(t)|| and ``phq_norm`` = ||P H1 Q psi_perp(t)||.
    The LOY premise requires php_norm << phq_norm; it is flagged violated when
    ``ratio = php_norm / phq_norm >= threshold`` (0/0 counts as 0).  The weak-
    transition premise compares ||PHQ psi_perp|| with ||PHP psi_par||
    (``weak_ratio``).  The componentwise checks are stored per parallel level
    k: ``decay_vs_mass`` = |(PHQ psi_perp)_k| / (m0 |a_k|),
    ``internal_vs_decay`` = |(PH1P psi_par)_k| / |(PHQ psi_perp)_k|, and
    ``rescatter_vs_feed`` = max_e |(QH1Q psi_perp)_e| / |(QHP psi_par)_e|.
    """

    times: np.ndarray
    php_norm: np.ndarray
    phq_norm: np.ndarray
    ratio: np.ndarray
    violated: np.ndarray
    weak_ratio: np.ndarray
    decay_vs_mass: np.ndarray
    internal_vs_decay: np.ndarray
    rescatter_vs_feed: np.ndarray
    threshold: float = 1.0

    def rows(self):
        for i, t in enumerate(self.times):
            yield {
                "time": t,
                "php_norm": self.php_norm[i],
                "phq_norm": self.phq_norm[i],
                "ratio": self.ratio[i],
                "violated": bool(self.violated[i]),
                "weak_ratio": self.weak_ratio[i],
            }


def _safe_ratio(num, den):
    num, den = np.broadcast_arrays(np.asarray(num, dtype=float), np.asarray(den, dtype=float))
    out = np.zeros(num.shape)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[(~pos) & (num > 0)] = np.inf
    return out


def _check_parallel_state(model: FullModel, psi0) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    if psi0.size == model.dim:
        if np.linalg.norm(psi0[model.partition.q_index]) > 0:
            raise ModelError("initial state has support on the perpendicular subspace")
        psi0 = psi0[model.partition.p_index]
    elif psi0.size != model.n:
        raise ModelError(f"state must have {model.n} or {model.dim} components")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ModelError("initial state is not normalized")
    return psi0


def diagnose_loy_conditions(model: FullModel, psi0, times, threshold: float = 1.0,
                            propagator=None) -> LoyDiagnostics:
    """Evaluate the LOY validity inequalities along the exact evolution.

    ``psi0`` is given on the parallel subspace (n amplitudes, or a full-space
    vector without Q support).  At t = 0 the perpendicular component vanishes
    exactly, so the condition fails whenever P H1 P psi0 != 0.
    """
    from .evolution import ExactPropagator

    a0 = _check_parallel_state(model, psi0)
    times = np.asarray(times, dtype=float).ravel()
    if propagator is None:
        propagator = ExactPropagator(model)
    traj = propagator.evolve(model.parallel_state(a0), times)
    p, q = model.partition.p_index, model.partition.q_index
    psi_par = traj.states[:, p]
    psi_perp = traj.states[:, q]
    t0 = times == 0.0
    psi_perp[t0] = 0.0  # initial condition holds exactly, not just to eigensolver precision

    h1p = model.h1_parallel
    internal = psi_par @ h1p.T
    decay = psi_perp @ model.phq.T
    php_norm = np.linalg.norm(internal, axis=1)
    phq_norm = np.linalg.norm(decay, axis=1)
    ratio = _safe_ratio(php_norm, phq_norm)
    weak = _safe_ratio(phq_norm, np.linalg.norm(psi_par @ model.php.T, axis=1))

    decay_vs_mass = _safe_ratio(np.abs(decay), abs(model.m0) * np.abs(psi_par))
    internal_vs_decay = _safe_ratio(np.abs(internal), np.abs(decay))
    feed = np.abs(psi_par @ model.phq.conj())
    if model.has_q_interaction:
        resc = np.abs(psi_perp @ model.qh1q_matrix().T)
        rescatter = np.max(_safe_ratio(resc, feed), axis=1)
    else:
        rescatter = np.zeros(times.size)
    return LoyDiagnostics(times, php_norm, phq_norm, ratio, ratio >= threshold, weak,
                          decay_vs_mass, internal_vs_decay, rescatter, threshold)


def find_loy_crossing(model: FullModel, psi0, t_max: float, scan_points: int = 200,
                      threshold: float = 1.0, xtol: float = 1e-10) -> float | None:
    """First time t* > 0 where the LOY ratio drops below ``threshold``.

    A coarse scan brackets the crossing, then bisection on the exact evolution
    refines it.  Returns None when the ratio never drops below the threshold on
    (0, t_max].
    """
    from .evolution import ExactPropagator

    prop = ExactPropagator(model)
    ts = np.linspace(0.0, t_max, scan_points + 1)
    r = diagnose_loy_conditions(model, psi0, ts, threshold, prop).ratio
    below = np.flatnonzero(r[1:] < threshold)
    if below.size == 0:
        return None
    k = below[0] + 1
    lo, hi = ts[k - 1], ts[k]
    if r[k - 1] < threshold:
        return float(lo)

    def ratio_at(t):
        return diagnose_loy_conditions(model, psi0, [t], threshold, prop).ratio[0]

    while hi - lo > xtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ratio_at(mid) >= threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
