"""Regularised resolvent sandwiches.

    Sigma(x)   = PHQ (QHQ  - x - i eta)^-1 QHP
    Sigma0(x)  = PHQ (QH0Q - x - i eta)^-1 QHP

The -i0 boundary value is realised by a finite eta > 0.  Both Q-blocks are
diagonalised once; afterwards every evaluation is an O(m n^2) kernel call.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import kernels
from .errors import ModelError, NumericalError
from .model import FullModel

__all__ = ["SelfEnergyEvaluator", "default_eta"]

ETA_GRID_FACTOR = 3.0


def default_eta(model: FullModel) -> float:
    """3 x the median grid spacing of the model's continua."""
    return ETA_GRID_FACTOR * model.grid_spacing


class _DiagonalisedQ:
    """PHQ U, U^dag QHP and the eigenvalues of a Q-block."""

    def __init__(self, phq, qblock):
        if qblock.ndim == 1:
            self.energies = np.asarray(qblock, dtype=float)
            self.left = np.ascontiguousarray(phq)
        else:
            e, u = np.linalg.eigh(qblock)
            self.energies = e
            self.left = np.ascontiguousarray(phq @ u)
        self.right = np.ascontiguousarray(self.left.conj().T)

    def sandwich(self, z):
        shifted = self.energies - z
        if np.any(shifted == 0):
            raise NumericalError(f"resolvent is singular at z = {z}")
        return kernels.resolvent_sandwich(self.left, self.energies, self.right, z)

    def sandwich_many(self, zs):
        return kernels.resolvent_sandwich_many(self.left, self.energies, self.right, zs)


class SelfEnergyEvaluator:
    """Evaluate Sigma and Sigma0 of a model at real or complex energies.

    Parameters
    ----------
    model : FullModel
    eta : float, optional
        Positive regulator replacing -i0.  Defaults to 3 x median grid
        spacing; the chosen value and the spacing are kept in ``metadata``.
    """

    def __init__(self, model: FullModel, eta: float | None = None):
        if eta is None:
            eta = default_eta(model)
        eta = float(eta)
        if not eta > 0:
            raise ModelError(f"eta must be positive, got {eta}")
        self.model = model
        self.eta = eta
        try:
            spacing = model.grid_spacing
        except ModelError:
            spacing = float("nan")
        self.metadata = {"eta": eta, "grid_spacing": spacing, "q_dimension": model.dim - model.n}

    @cached_property
    def _full(self) -> _DiagonalisedQ:
        return _DiagonalisedQ(self.model.phq, self.model.qhq)

    @cached_property
    def _free(self) -> _DiagonalisedQ:
        if not self.model.has_q_interaction:
            return self._full
        return _DiagonalisedQ(self.model.phq, self.model.h0_q)

    def sigma(self, x: float) -> np.ndarray:
        """Sigma(x) for real x, with the resolvent evaluated at x + i eta."""
        if np.imag(x) != 0:
            raise ModelError("sigma takes a real energy; use sigma_at_complex")
        return self._full.sandwich(float(np.real(x)) + 1j * self.eta)

    def sigma0(self, x: float) -> np.ndarray:
        """Free-resolvent version Sigma0(x); equals sigma(x) when QH1Q = 0."""
        return self._free.sandwich(float(np.real(x)) + 1j * self.eta)

    def sigma_at_complex(self, z: complex) -> np.ndarray:
        """Sigma at complex energy z: the resolvent is evaluated at z + i eta."""
        return self._full.sandwich(complex(z) + 1j * self.eta)

    def sigma_many(self, xs) -> np.ndarray:
        """Stack of sigma(x) over a vector of real or complex points, shape (k, n, n)."""
        return self._full.sandwich_many(np.asarray(xs, dtype=complex) + 1j * self.eta)

    def decay_matrix(self, x: float) -> np.ndarray:
        """Decay matrix -i (Sigma(x) - Sigma(x)^dag) induced by the term -Sigma(x).

        Positive semidefinite for every real x and eta > 0.
        """
        s = self.sigma(x)
        return -1j * (s - s.conj().T)
