"""Bayes-risk and maximum-likelihood optimality of measurement strategies.

A strategy is optimal for a Bayes cost when, with posterior risk operators
``R_k`` and ``Lambda = sum_k R_k Pi_k``,

* every ``(R_k - Lambda) Pi_k`` vanishes (stationarity), and
* every ``R_k - Lambda`` is positive semidefinite (sufficiency).

:func:`optimality_check` evaluates both conditions for a discrete POVM.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fock import (
    TruncationError,
    coherent_amplitudes,
    hermitian_spectrum,
    hermitize,
    normal_ordered_gaussian,
)
from .gaussian import displaced_thermal_state
from .measurement import DiscretePOVM, identity_resolution_report
from .parallel import parallel_map

__all__ = [
    "HypothesisEnsemble",
    "OptimalityReport",
    "OptimizationResult",
    "HelstromResult",
    "MLCertificate",
    "posterior_risk_operators",
    "average_risk",
    "risk_gap",
    "optimality_check",
    "optimize_min_error",
    "helstrom_binary",
    "coherent_ml_certificate",
]


@dataclass(frozen=True)
class HypothesisEnsemble:
    """States ``rho_j`` with priors ``p_j`` and cost ``cost[j, k]`` of deciding ``k`` under ``j``."""

    states: tuple
    priors: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        states = tuple(hermitize(s) for s in self.states)
        priors = np.asarray(self.priors, dtype=float)
        cost = np.asarray(self.cost, dtype=float)
        if not states:
            raise ValueError("ensemble needs at least one state")
        shape = states[0].shape
        if any(s.shape != shape for s in states):
            raise ValueError("all states must share one truncation")
        if priors.shape != (len(states),):
            raise ValueError("need one prior per state")
        if np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError(f"priors must be a probability vector (sum={priors.sum()!r})")
        if cost.ndim != 2 or cost.shape[0] != len(states) or not np.all(np.isfinite(cost)):
            raise ValueError("cost must be a finite matrix with one row per state")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "cost", cost)

    @classmethod
    def min_error(cls, states, priors=None) -> "HypothesisEnsemble":
        """Minimum-error ensemble: ``cost = -identity``."""
        n = len(states)
        priors = np.full(n, 1.0 / n) if priors is None else priors
        return cls(tuple(states), priors, -np.eye(n))

    @property
    def n_max(self) -> int:
        return self.states[0].shape[0] - 1

    @property
    def n_outcomes(self) -> int:
        return self.cost.shape[1]

    def is_min_error(self) -> bool:
        n = len(self.states)
        return self.cost.shape == (n, n) and np.array_equal(self.cost, -np.eye(n))

    def to_dict(self) -> dict:
        return {
            "priors": self.priors.tolist(),
            "cost": self.cost.tolist(),
            "states": [np.stack([s.real, s.imag], axis=-1).tolist() for s in self.states],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HypothesisEnsemble":
        states = tuple(np.asarray(s)[..., 0] + 1j * np.asarray(s)[..., 1] for s in doc["states"])
        return cls(states, np.asarray(doc["priors"]), np.asarray(doc["cost"]))


def posterior_risk_operators(ensemble: HypothesisEnsemble) -> list[np.ndarray]:
    """``R_k = sum_j cost[j, k] p_j rho_j``."""
    weighted = [p * rho for p, rho in zip(ensemble.priors, ensemble.states)]
    out = []
    for k in range(ensemble.n_outcomes):
        R = sum(c * w for c, w in zip(ensemble.cost[:, k], weighted))
        out.append(hermitize(R))
    return out


def _check_counts(povm: DiscretePOVM, ensemble: HypothesisEnsemble):
    if len(povm) != ensemble.n_outcomes:
        raise ValueError(f"POVM has {len(povm)} outcomes, cost matrix has {ensemble.n_outcomes} columns")
    if povm.n_max != ensemble.n_max:
        raise ValueError("POVM and ensemble use different truncations")


def average_risk(povm: DiscretePOVM, ensemble: HypothesisEnsemble) -> float:
    """``Tr sum_k R_k weight_k element_k``; minus the success probability for minimum error."""
    _check_counts(povm, ensemble)
    R = posterior_risk_operators(ensemble)
    return float(sum(np.trace(Rk @ povm.effect(k)).real for k, Rk in enumerate(R)))


@dataclass
class OptimalityReport:
    lambda_op: np.ndarray
    lambda_hermiticity: float
    stationarity_residuals: np.ndarray
    min_eig_B: np.ndarray
    tol: float
    stationarity_ok: bool = field(init=False)
    nonnegativity_ok: bool = field(init=False)

    def __post_init__(self):
        self.stationarity_ok = bool(
            np.all(self.stationarity_residuals <= self.tol) and self.lambda_hermiticity <= self.tol
        )
        self.nonnegativity_ok = bool(np.all(self.min_eig_B >= -self.tol))

    @property
    def optimal(self) -> bool:
        return self.stationarity_ok and self.nonnegativity_ok

    def to_dict(self) -> dict:
        lam = self.lambda_op
        return {
            "tol": self.tol,
            "lambda_hermiticity": self.lambda_hermiticity,
            "stationarity_residuals": self.stationarity_residuals.tolist(),
            "min_eig_B": self.min_eig_B.tolist(),
            "stationarity_ok": self.stationarity_ok,
            "nonnegativity_ok": self.nonnegativity_ok,
            "lambda_op": np.stack([lam.real, lam.imag], axis=-1).tolist(),
        }


def optimality_check(povm: DiscretePOVM, ensemble: HypothesisEnsemble, tol: float = 1e-8) -> OptimalityReport:
    """Stationarity and nonnegativity certificate for ``povm``.

    A failing certificate is a result, not an error.
    """
    _check_counts(povm, ensemble)
    R = posterior_risk_operators(ensemble)
    effects = [povm.effect(k) for k in range(len(povm))]
    lam = sum(Rk @ Ek for Rk, Ek in zip(R, effects))
    defect = float(np.max(np.abs(lam - lam.conj().T)))
    lam = 0.5 * (lam + lam.conj().T)
    residuals, min_eigs = [], []
    for Rk, Ek in zip(R, effects):
        Bk = Rk - lam
        residuals.append(float(np.max(np.abs(Bk @ Ek))))
        min_eigs.append(float(np.linalg.eigvalsh(Bk)[0]))
    return OptimalityReport(lam, defect, np.array(residuals), np.array(min_eigs), tol)


def risk_gap(povm: DiscretePOVM, ensemble: HypothesisEnsemble, report: OptimalityReport) -> float:
    """``Tr sum_k (R_k - Lambda_opt) E_k``, the risk excess of ``povm`` over the certified optimum."""
    R = posterior_risk_operators(ensemble)
    return float(sum(np.trace((Rk - report.lambda_op) @ povm.effect(k)).real for k, Rk in enumerate(R)))


def _inverse_sqrt(T: np.ndarray, cutoff: float) -> np.ndarray:
    values, vectors = np.linalg.eigh(0.5 * (T + T.conj().T))
    top = float(values[-1])
    if not math.isfinite(top) or top <= 0:
        raise np.linalg.LinAlgError(f"normalizing operator is singular (largest eigenvalue {top:.3g})")
    keep = values > cutoff * top
    inv = np.zeros_like(values)
    inv[keep] = 1.0 / np.sqrt(values[keep])
    return (vectors * inv) @ vectors.conj().T


@dataclass
class OptimizationResult:
    povm: DiscretePOVM
    report: OptimalityReport
    risk_trace: list[float]

    @property
    def risk(self) -> float:
        return self.risk_trace[-1]

    @property
    def iterations(self) -> int:
        return len(self.risk_trace) - 1

    @property
    def error_probability(self) -> float:
        """``1 + risk``: the risk is minus the success probability."""
        return 1.0 + self.risk


def optimize_min_error(
    ensemble: HypothesisEnsemble,
    max_iters: int = 1000,
    tol: float = 1e-12,
    *,
    certificate_tol: float = 1e-8,
    cutoff: float = 1e-12,
) -> OptimizationResult:
    """Minimum-error POVM by the fixed-point iteration

        Pi_k <- T^-1/2 G_k Pi_k G_k T^-1/2,   G_k = p_k rho_k,   T = sum_k G_k Pi_k G_k

    starting from ``Pi_k = I / n``.  ``T^-1/2`` is a pseudo-inverse with relative
    eigenvalue cutoff ``cutoff``.  Stops once successive risks differ by less
    than ``tol``.  The part of the space the states never reach (``I - sum Pi_k``)
    is assigned to outcome 0 so the returned POVM resolves the identity.
    """
    if len(ensemble.states) < 2:
        raise ValueError("need at least two hypotheses")
    if not ensemble.is_min_error():
        raise ValueError("optimize_min_error needs the minimum-error cost -identity")
    G = [p * rho for p, rho in zip(ensemble.priors, ensemble.states)]
    d = G[0].shape[0]
    n = len(G)
    pis = [np.eye(d, dtype=complex) / n for _ in range(n)]

    def risk_of(pis):
        return -float(sum(np.trace(g @ pi).real for g, pi in zip(G, pis)))

    trace = [risk_of(pis)]
    for _ in range(max_iters):
        sandwiched = [g @ pi @ g for g, pi in zip(G, pis)]
        T = sum(sandwiched)
        W = _inverse_sqrt(T, cutoff)
        pis = [W @ s @ W for s in sandwiched]
        pis = [0.5 * (p + p.conj().T) for p in pis]
        trace.append(risk_of(pis))
        if abs(trace[-1] - trace[-2]) < tol:
            break

    remainder = np.eye(d) - sum(pis)
    remainder = 0.5 * (remainder + remainder.conj().T)
    pis[0] = pis[0] + remainder
    povm = DiscretePOVM.from_matrices(pis)
    trace[-1] = average_risk(povm, ensemble)
    deficit = np.max(np.abs(identity_resolution_report(povm).deficits))
    if deficit > 1e-8:
        raise ArithmeticError(f"optimized POVM misses the identity by {deficit:.3g}")
    return OptimizationResult(povm, optimality_check(povm, ensemble, certificate_tol), trace)


@dataclass
class HelstromResult:
    error_probability: float
    povm: DiscretePOVM
    direct_error_probability: float
    eigenvalues: np.ndarray


def helstrom_binary(p0: float, rho0: np.ndarray, p1: float, rho1: np.ndarray) -> HelstromResult:
    """Minimum binary error ``(1 - ||p1 rho1 - p0 rho0||_1) / 2`` and the projective POVM attaining it.

    Outcome 1 projects onto the positive eigenspace of ``p1 rho1 - p0 rho0``;
    the kernel goes to outcome 0, which does not change the error.
    """
    if abs(p0 + p1 - 1.0) > 1e-12:
        raise ValueError("priors must sum to 1")
    delta = p1 * np.asarray(rho1) - p0 * np.asarray(rho0)
    values, vectors = hermitian_spectrum(delta)
    pos = vectors[:, values > 0]
    pi1 = pos @ pos.conj().T
    pi0 = np.eye(delta.shape[0]) - pi1
    spectral = 0.5 * (1.0 - float(np.sum(np.abs(values))))
    direct = float(p0 * np.trace(rho0 @ pi1).real + p1 * np.trace(rho1 @ pi0).real)
    if abs(spectral - direct) > 1e-10:
        warnings.warn(
            f"Helstrom spectral and direct error differ by {abs(spectral - direct):.3g}; "
            "state traces are probably not 1",
            RuntimeWarning,
            stacklevel=2,
        )
    return HelstromResult(spectral, DiscretePOVM.from_matrices([pi0, pi1]), direct, values)


@dataclass
class MLCertificate:
    L: float
    points: np.ndarray
    eigen_residuals: np.ndarray
    min_eigenvalues: np.ndarray
    tol: float
    residual_tol: float

    @property
    def worst_residual(self) -> float:
        return float(np.max(self.eigen_residuals))

    @property
    def worst_min_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalues))

    @property
    def passed(self) -> bool:
        return self.worst_residual <= self.residual_tol and self.worst_min_eigenvalue >= -self.tol

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "points": [[float(b.real), float(b.imag)] for b in self.points],
            "eigen_residuals": self.eigen_residuals.tolist(),
            "min_eigenvalues": self.min_eigenvalues.tolist(),
            "tol": self.tol,
            "residual_tol": self.residual_tol,
            "passed": self.passed,
        }


def coherent_ml_certificate(
    L: float, beta_grid, n_max: int, tol: float = 1e-9, residual_tol: float = 1e-6
) -> MLCertificate:
    """Check that coherent projectors are maximum-likelihood optimal for displaced thermal noise ``L``.

    With ``R(beta) = -rho(beta)`` and ``Lambda = -1/L``, at each grid point:

    * ``||rho(beta)|beta> - |beta>/L|| <= residual_tol`` (stationarity), and
    * ``B(beta) = I/L - (1/L) :exp(-|b - beta|^2 / L):`` has min eigenvalue ``>= -tol``.
    """
    if L < 1.0:
        raise ValueError(f"L={L} is below the vacuum level 1")
    points = np.atleast_1d(np.asarray(beta_grid, dtype=complex))
    amps = coherent_amplitudes(points, n_max)
    deficits = 1.0 - np.sum(np.abs(amps) ** 2, axis=1)
    if np.any(deficits > 1e-8):
        worst = points[int(np.argmax(deficits))]
        raise TruncationError(f"coherent state at beta={worst:.3g} does not fit in n_max={n_max}")
    ident = np.eye(n_max + 1)

    def at(k):
        beta, vec = points[k], amps[k]
        rho = displaced_thermal_state(beta, L, n_max)
        residual = float(np.linalg.norm(rho @ vec - vec / L))
        B = ident / L - normal_ordered_gaussian(1.0 / L, 1.0 / L, beta, n_max)
        return residual, float(np.linalg.eigvalsh(B)[0])

    rows = parallel_map(at, range(points.shape[0]))
    residuals = np.array([r for r, _ in rows])
    min_eigs = np.array([m for _, m in rows])
    return MLCertificate(float(L), points, residuals, min_eigs, tol, residual_tol)
