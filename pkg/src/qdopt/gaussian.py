"""Gaussian boson channel: signal prior S, noise L, and the derived H, A, M.

Conventions
-----------
* ``L`` is the anti-normally ordered noise moment ``<a a*>``, so vacuum noise
  is ``L = 1`` and a thermal mode with ``nbar`` photons has ``L = 1 + nbar``.
* Densities are taken with respect to ``dmu(z) = pi^-1 dRe z dIm z`` per mode.
* Multimode parameters are per-mode diagonals (independent modes).  Points
  for multimode densities carry the mode index on the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import check_n_max, displacement

__all__ = [
    "ChannelParams",
    "DegeneratePriorError",
    "derive_channel_matrices",
    "prior_density",
    "displaced_thermal_state",
    "thermal_state",
    "displacement_padding",
    "heterodyne_likelihood",
    "marginal_output_density",
    "posterior_density",
]


class DegeneratePriorError(ValueError):
    """The operation needs a prior with every ``S > 0``."""


@dataclass(frozen=True)
class ChannelParams:
    S: tuple[float, ...]
    L: tuple[float, ...]
    H: tuple[float, ...]
    A: tuple[float, ...]
    M: tuple[float, ...]  # inf where S == 0
    degenerate_prior: bool

    @property
    def modes(self) -> int:
        return len(self.S)

    @property
    def thermal_photons(self) -> tuple[float, ...]:
        return tuple(l - 1.0 for l in self.L)

    @property
    def output_covariance(self) -> tuple[float, ...]:
        return tuple(s + l for s, l in zip(self.S, self.L))

    def single(self) -> tuple[float, float]:
        """``(S, L)`` of a single-mode channel."""
        if self.modes != 1:
            raise ValueError(f"expected a single-mode channel, got {self.modes} modes")
        return self.S[0], self.L[0]

    def to_dict(self) -> dict:
        return {
            "S": list(self.S),
            "L": list(self.L),
            "H": list(self.H),
            "A": list(self.A),
            "M": [m if math.isfinite(m) else None for m in self.M],
            "degenerate_prior": self.degenerate_prior,
        }


def derive_channel_matrices(S, L) -> ChannelParams:
    """Per-mode ``H = 1/L - 1/(S+L)``, ``A = S/(S+L)`` and ``M = 1/S + 1/L``.

    Raises ``ValueError`` for ``L < 1`` (sub-vacuum noise) or ``S < 0``.
    """
    S = tuple(float(s) for s in np.atleast_1d(S))
    L = tuple(float(l) for l in np.atleast_1d(L))
    if len(S) != len(L) or not S:
        raise ValueError("S and L must be nonempty and have one entry per mode")
    for s, l in zip(S, L):
        if not (math.isfinite(s) and math.isfinite(l)):
            raise ValueError("S and L must be finite")
        if l < 1.0:
            raise ValueError(f"noise covariance L={l} is below the vacuum level 1")
        if s < 0.0:
            raise ValueError(f"signal covariance S={s} is negative")
    H, A, M = [], [], []
    for s, l in zip(S, L):
        h = 1.0 / l - 1.0 / (s + l)
        # 0 <= H < 1 and 1/(S+L) <= 1 - H follow from L >= 1; checked, not assumed
        if not (0.0 <= h < 1.0) or 1.0 / (s + l) > 1.0 - h + 1e-15:
            raise ArithmeticError(f"channel inequalities violated for S={s}, L={l}")
        H.append(h)
        A.append(s / (s + l))
        M.append(1.0 / s + 1.0 / l if s > 0 else math.inf)
    return ChannelParams(S, L, tuple(H), tuple(A), tuple(M), any(s == 0 for s in S))


def _per_mode(points, values) -> tuple[np.ndarray, np.ndarray, bool]:
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=complex)
    multimode = values.ndim > 0 and values.shape[-1] > 1
    if values.ndim > 0 and not multimode:
        values = values.reshape(())
    return points, values, multimode


def _gaussian(points, cov) -> np.ndarray:
    points, cov, multimode = _per_mode(points, cov)
    dens = np.exp(-np.abs(points) ** 2 / cov) / cov
    return np.prod(dens, axis=-1) if multimode else dens


def prior_density(theta, params: ChannelParams):
    """``|S|^-1 exp(-theta^dag S^-1 theta)``; requires a nondegenerate prior."""
    if params.degenerate_prior:
        raise DegeneratePriorError("prior density is a delta function when S = 0")
    return _gaussian(theta, params.S if params.modes > 1 else params.S[0])


def heterodyne_likelihood(beta, theta, L):
    """Density of outcome ``beta`` given signal ``theta``: ``|L|^-1 exp(-|beta-theta|^2/L)``."""
    L_arr = np.asarray(L, dtype=float)
    if np.any(L_arr < 1.0):
        raise ValueError("L must be >= 1")
    return _gaussian(np.asarray(beta, complex) - np.asarray(theta, complex), L)


def marginal_output_density(beta, params: ChannelParams):
    """Outcome density averaged over the prior: ``|S+L|^-1 exp(-|beta|^2/(S+L))``."""
    cov = params.output_covariance
    return _gaussian(beta, cov if params.modes > 1 else cov[0])


def posterior_density(theta, beta, params: ChannelParams):
    """``|M| exp(-(theta - A beta)^dag M (theta - A beta))``."""
    if params.degenerate_prior:
        raise DegeneratePriorError(
            "posterior needs S > 0 in every mode; with S = 0 the posterior is a delta at theta = 0"
        )
    if params.modes > 1:
        A = np.asarray(params.A)
        M = np.asarray(params.M)
    else:
        A, M = params.A[0], params.M[0]
    shift = np.asarray(theta, complex) - A * np.asarray(beta, complex)
    return _gaussian(shift, 1.0 / np.asarray(M))


def thermal_state(L: float, n_max: int) -> np.ndarray:
    """Diagonal thermal state with ``nbar = L - 1``: weights ``nbar^n / (1+nbar)^(n+1)``."""
    n_max = check_n_max(n_max)
    if L < 1.0:
        raise ValueError(f"L={L} is below the vacuum level 1")
    nbar = L - 1.0
    n = np.arange(n_max + 1)
    if nbar == 0:
        weights = (n == 0).astype(float)
    else:
        weights = np.exp(n * math.log(nbar) - (n + 1) * math.log1p(nbar))
    return np.diag(weights).astype(complex)


def displacement_padding(theta: complex, n_max: int) -> int:
    """Extra Fock levels needed so a truncated ``D(theta)`` is exact on ``0..n_max``."""
    r = abs(complex(theta))
    return int(math.ceil(6.0 * r * math.sqrt(n_max + 1) + r * r)) + 20


def displaced_thermal_state(theta: complex, L: float, n_max: int, pad: int | None = None) -> np.ndarray:
    """``D(theta) rho_thermal D(theta)^dag`` on levels ``0..n_max``.

    The displacement is built ``pad`` levels above ``n_max`` and the product is
    cropped, which reproduces the exact compression once ``pad`` is large
    enough (see :func:`displacement_padding`).  Equals the normal-ordered form
    ``|L|^-1 :exp(-(b-theta)^dag L^-1 (b-theta)):``.
    """
    n_max = check_n_max(n_max)
    if L < 1.0:
        raise ValueError(f"L={L} is below the vacuum level 1")
    if pad is None:
        pad = displacement_padding(theta, n_max)
    big = n_max + pad
    D = displacement(theta, big)
    weights = np.diag(thermal_state(L, big)).real
    rho = ((D * weights) @ D.conj().T)[: n_max + 1, : n_max + 1]
    return 0.5 * (rho + rho.conj().T)
