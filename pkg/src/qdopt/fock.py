"""Truncated single-mode Fock-space algebra.

Every operator is a dense complex ``(n_max + 1, n_max + 1)`` numpy array acting
on Fock levels ``0..n_max``.  Truncation is treated as compression onto that
subspace: where a construction can produce the exact compressed matrix it does,
and where it cannot the truncation error is reported rather than hidden.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

__all__ = [
    "TruncationWarning",
    "TruncationError",
    "NotHermitianError",
    "StateVector",
    "Spectrum",
    "PSDCheck",
    "check_n_max",
    "ladder_operators",
    "coherent_state",
    "coherent_amplitudes",
    "displacement",
    "normal_ordered_gaussian",
    "normal_ordered_from_coefficients",
    "hermitize",
    "hermitian_spectrum",
    "psd_check",
    "default_psd_tol",
]

HERMITIAN_ATOL = 1e-10
COHERENT_DEFICIT_WARN = 1e-8


class TruncationWarning(UserWarning):
    """A state or operator does not fit comfortably in the truncated space."""


class TruncationError(ValueError):
    """A truncation precondition of an operation is violated."""


class NotHermitianError(ValueError):
    pass


def check_n_max(n_max: int) -> int:
    if isinstance(n_max, bool) or int(n_max) != n_max:
        raise ValueError(f"n_max must be an integer, got {n_max!r}")
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return n_max


def ladder_operators(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(a, a_dagger)`` truncated to levels ``0..n_max``.

    ``[a, a_dagger]`` is the identity on levels ``0..n_max-1``; the top
    diagonal entry of the commutator is ``-n_max`` because the truncated
    ``a_dagger`` cannot raise the top level.
    """
    n_max = check_n_max(n_max)
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)
    return a, a.conj().T.copy()


@dataclass(frozen=True)
class StateVector:
    """Truncated state vector; amplitudes on levels ``0..n_max``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[0] - 1

    @property
    def norm_deficit(self) -> float:
        """``1 - ||v||^2``; the probability weight lost above ``n_max``."""
        return float(1.0 - np.vdot(self.amplitudes, self.amplitudes).real)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.amplitudes.copy() if copy else self.amplitudes
        return self.amplitudes.astype(dtype)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def coherent_amplitudes(betas, n_max: int) -> np.ndarray:
    """Coherent-state amplitudes for many ``betas`` at once, shape ``(K, n_max+1)``.

    Uses the recurrence ``c[n+1] = c[n] * beta / sqrt(n+1)`` so no factorial is
    ever formed.
    """
    n_max = check_n_max(n_max)
    betas = np.atleast_1d(np.asarray(betas, dtype=complex))
    out = np.empty((betas.shape[0], n_max + 1), dtype=complex)
    out[:, 0] = np.exp(-0.5 * np.abs(betas) ** 2)
    for n in range(n_max):
        out[:, n + 1] = out[:, n] * betas / math.sqrt(n + 1)
    return out


def coherent_state(beta: complex, n_max: int, warn: bool = True) -> StateVector:
    """Truncated coherent state ``|beta>``.

    Emits :class:`TruncationWarning` when the norm deficit exceeds 1e-8.
    """
    state = StateVector(coherent_amplitudes(beta, n_max)[0])
    if warn and state.norm_deficit > COHERENT_DEFICIT_WARN:
        warnings.warn(
            f"coherent state beta={complex(beta):.4g} loses {state.norm_deficit:.3g} "
            f"of its norm above n_max={n_max}",
            TruncationWarning,
            stacklevel=2,
        )
    return state


@lru_cache(maxsize=64)
def _quadrature_generator_eigh(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    # i(a_dag - a) is Hermitian; its spectrum exponentiates the real-axis generator.
    a, ad = ladder_operators(n_max)
    mu, vecs = np.linalg.eigh(1j * (ad - a))
    mu.setflags(write=False)
    vecs.setflags(write=False)
    return mu, vecs


def displacement(beta: complex, n_max: int) -> np.ndarray:
    """Truncated displacement ``exp(beta a_dag - conj(beta) a)``.

    The generator is rotated onto the real axis, ``beta a_dag - conj(beta) a =
    U (|beta| (a_dag - a)) U^dagger`` with ``U = diag(exp(i n arg beta))``, and
    ``a_dag - a`` is exponentiated through its cached eigendecomposition.  The
    result is exactly unitary up to rounding.
    """
    n_max = check_n_max(n_max)
    beta = complex(beta)
    if beta == 0:
        return np.eye(n_max + 1, dtype=complex)
    mu, vecs = _quadrature_generator_eigh(n_max)
    phase = np.exp(1j * math.atan2(beta.imag, beta.real) * np.arange(n_max + 1))
    core = (vecs * np.exp(-1j * abs(beta) * mu)) @ vecs.conj().T
    return phase[:, None] * core * phase.conj()[None, :]


def _raising_factor(x: complex, prefactor_log: float, n_max: int) -> np.ndarray:
    # Lower-triangular matrix of exp(x a_dag) on levels 0..n_max, times exp(prefactor_log).
    # Entry (m, k) = x^(m-k) sqrt(m!/k!) / (m-k)!; built in log space.
    n = np.arange(n_max + 1)
    m, k = np.meshgrid(n, n, indexing="ij")
    d = m - k
    lower = d >= 0
    out = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    if x == 0:
        np.fill_diagonal(out, math.exp(prefactor_log))
        return out
    dl = d[lower]
    logmag = (
        dl * math.log(abs(x))
        + 0.5 * (gammaln(m[lower] + 1) - gammaln(k[lower] + 1))
        - gammaln(dl + 1)
        + prefactor_log
    )
    out[lower] = np.exp(logmag) * np.exp(1j * math.atan2(x.imag, x.real) * dl)
    return out


def normal_ordered_gaussian(scale: float, rate: float, center: complex, n_max: int) -> np.ndarray:
    """Truncated matrix of ``scale * :exp(-rate (b - center)^dag (b - center)):``.

    Equal to ``scale * D(center) diag((1 - rate)^n) D(center)^dag``.  The matrix is
    assembled from the normal-ordered factorization

        exp(-rate |c|^2) exp(rate c b_dag) (1 - rate)^(b_dag b) exp(rate conj(c) b)

    whose outer factors are triangular and exact on levels ``0..n_max``, so the
    result is the exact compression of the infinite-dimensional operator.  For
    ``rate`` in [0, 1] every term of each matrix entry carries the same phase,
    so there is no cancellation.
    """
    n_max = check_n_max(n_max)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1] for a positive operator, got {rate}")
    if scale < 0:
        raise ValueError(f"scale must be nonnegative, got {scale}")
    center = complex(center)
    tri = _raising_factor(rate * center, -0.5 * rate * abs(center) ** 2, n_max)
    diag = (1.0 - rate) ** np.arange(n_max + 1)
    out = scale * (tri * diag) @ tri.conj().T
    return 0.5 * (out + out.conj().T)


def normal_ordered_from_coefficients(coeffs, n_max: int) -> np.ndarray:
    """Matrix of ``:f(b_dag, b):`` from the Taylor coefficients of ``f``.

    ``coeffs[j, k]`` multiplies ``conj(z)^j z^k``.  Uses
    ``<m| b_dag^j b^k |n> = sqrt(m! n!) / i!`` with ``i = m - j = n - k``, so the
    result is exact for any polynomial symbol.  Entries are accumulated in
    whatever number type ``coeffs`` holds (``mpmath.mpc`` works), which makes
    this a brute-force reference for small ``n_max``.
    """
    n_max = check_n_max(n_max)
    coeffs = np.asarray(coeffs, dtype=object)
    out = np.zeros((n_max + 1, n_max + 1), dtype=object)
    for m in range(n_max + 1):
        for n in range(n_max + 1):
            total = 0
            for i in range(min(m, n) + 1):
                j, k = m - i, n - i
                if j < coeffs.shape[0] and k < coeffs.shape[1]:
                    c = coeffs[j, k]
                    if c != 0:
                        total += c * _sqrt_fact_ratio(m, n, i)
            out[m, n] = total
    return out


@lru_cache(maxsize=None)
def _sqrt_fact_ratio(m: int, n: int, i: int):
    import mpmath

    return mpmath.sqrt(mpmath.factorial(m) * mpmath.factorial(n)) / mpmath.factorial(i)


def hermitize(op: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Average ``op`` with its adjoint; reject if the asymmetry exceeds ``atol``.

    ``atol`` is scaled by ``max(1, max|op|)``.
    """
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {op.shape}")
    defect = float(np.max(np.abs(op - op.conj().T))) if op.size else 0.0
    scale = max(1.0, float(np.max(np.abs(op)))) if op.size else 1.0
    if defect > atol * scale:
        raise NotHermitianError(f"operator is not Hermitian: max |A - A^dag| = {defect:.3g}")
    return 0.5 * (op + op.conj().T)


class Spectrum(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def hermitian_spectrum(op: np.ndarray, atol: float = HERMITIAN_ATOL) -> Spectrum:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian operator."""
    values, vectors = np.linalg.eigh(hermitize(op, atol))
    return Spectrum(values, vectors)


class PSDCheck(NamedTuple):
    is_psd: bool
    min_eigenvalue: float


def default_psd_tol(values: np.ndarray) -> float:
    return 1e-9 * float(np.max(np.abs(values))) if len(values) else 0.0


def psd_check(op: np.ndarray, tol: float | None = None) -> PSDCheck:
    """``is_psd`` iff the smallest eigenvalue is ``>= -tol``.

    Default ``tol`` is 1e-9 times the largest eigenvalue magnitude.
    """
    values = np.linalg.eigvalsh(hermitize(op))
    if tol is None:
        tol = default_psd_tol(values)
    lo = float(values[0])
    return PSDCheck(lo >= -tol, lo)
