"""Small dense complex linear algebra used across modules."""

from __future__ import annotations

import cmath
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ExpFailure, LogBranchFailure

EIG_COND_LIMIT = 1e8


def logm_principal(K: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm.

    Uses the eigendecomposition when the eigenbasis is well conditioned and
    falls back to a Schur-based ``scipy.linalg.logm`` otherwise.
    """
    K = np.asarray(K, dtype=complex)
    w, V = np.linalg.eig(K)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    for lam in w:
        if abs(lam) < 1e-300 or (lam.real <= 0 and abs(lam.imag) <= 1e-12 * scale):
            raise LogBranchFailure(f"eigenvalue {lam:.3e} lies on the branch cut of the logarithm")
    if np.linalg.cond(V) > EIG_COND_LIMIT:
        L = scipy.linalg.logm(K)
        return np.asarray(L, dtype=complex)
    return (V * np.log(w)) @ np.linalg.inv(V)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


class Propagator:
    """``exp(-i H t)`` for a fixed, possibly non-Hermitian, generator ``H``.

    The eigendecomposition is computed once; if its condition number exceeds
    ``EIG_COND_LIMIT`` every call goes through scaling-and-squaring instead.
    """

    def __init__(self, H: np.ndarray):
        self.H = np.asarray(H, dtype=complex)
        self.dim = self.H.shape[0]
        w, V = np.linalg.eig(self.H)
        self.spectral = bool(np.all(np.isfinite(w))) and np.linalg.cond(V) <= EIG_COND_LIMIT
        if self.spectral:
            self.w = w
            self.V = V
            self.Vinv = np.linalg.inv(V)
            self.gram = V.conj().T @ V
        # decay rates of the norm along each eigenvector
        self.rates = -2.0 * np.imag(w)

    def matrix(self, t: float) -> np.ndarray:
        if self.spectral:
            return (self.V * np.exp(-1j * self.w * t)) @ self.Vinv
        try:
            return scipy.linalg.expm(-1j * self.H * t)
        except Exception as exc:  # pragma: no cover - scipy failure path
            raise ExpFailure(str(exc)) from exc

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.spectral:
            return self.V @ (np.exp(-1j * self.w * t) * (self.Vinv @ psi))
        return self.matrix(t) @ psi

    def norm2_function(self, psi: np.ndarray):
        """Return ``f(t) = ||exp(-iHt) psi||^2`` specialised to ``psi``."""
        if self.spectral:
            c = self.Vinv @ psi
            A = np.outer(c.conj(), c) * self.gram
            E = 1j * np.add.outer(self.w.conj(), -self.w)
            A = A.ravel()
            E = E.ravel()
            if A.size <= 16:
                # scalar loop beats numpy call overhead for tiny sums
                terms = [(complex(a), complex(e)) for a, e in zip(A, E) if a != 0]

                def f(t):
                    return sum(a * cmath.exp(e * t) for a, e in terms).real

                return f

            def f(t):
                return float(np.real(np.dot(A, np.exp(E * t))))

            return f

        def f(t):
            v = self.matrix(t) @ psi
            return float(np.real(np.vdot(v, v)))

        return f


def richardson_table(values: Sequence[np.ndarray], ratio: float = 2.0) -> list[list[np.ndarray]]:
    """Richardson table for estimates at steps ``h, h/r, h/r^2, ...``.

    The error is assumed to expand in integer powers of the step, so column
    ``j`` removes the ``h^j`` term. ``table[i][j]`` uses entries ``i-j..i``.
    """
    vals = [np.asarray(v, dtype=complex) for v in values]
    table: list[list[np.ndarray]] = []
    for i, v in enumerate(vals):
        row = [v]
        for j in range(1, i + 1):
            f = ratio ** j
            row.append(row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (f - 1.0))
        table.append(row)
    return table


def psd_sqrt_factor(G: np.ndarray, rank_tol: float):
    """Eigen-factor a Hermitian PSD matrix as ``G ~ E^H E`` with ``E`` D x n."""
    G = hermitian_part(np.asarray(G, dtype=complex))
    lam, U = np.linalg.eigh(G)
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]
    lam_max = max(float(lam[0]), 0.0) if lam.size else 0.0
    keep = lam > rank_tol * lam_max
    return lam, U, keep
