"""Shannon-information criterion for coherent (heterodyne) quasi-measurement.

For the Gaussian channel (prior covariance S, noise L, output covariance
``sigma = S + L``) the second variation of the Shannon risk around the
coherent POVM is ``int dphi^dag (B(beta) - D(beta)) dphi dmu(beta)`` with

* ``B(beta) = H (b - beta)^dag rhobar (b - beta)``, ``rhobar`` the average
  output state ``sigma^-1 :exp(-b^dag b / sigma):`` and ``H = 1/L - 1/sigma``;
* ``D(beta) = p(beta) Cov_{theta|beta}[psi_beta(theta)]``, the posterior
  covariance of ``psi_beta(theta) = rho(theta)|beta> / <beta|rho(theta)|beta>``.

In normal-ordered form, with ``z = b - beta``,

    D(beta) = :p(b) exp(|z|^2/sigma) [exp(-(1-H)|z|^2) - exp(-|z|^2)]:

so each term is a displaced normal-ordered Gaussian with rate ``1 - H`` or
``1`` (both in [0, 1]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy.special import xlogy

from .fock import (
    TruncationError,
    _raising_factor,
    check_n_max,
    coherent_amplitudes,
    displacement,
    ladder_operators,
    normal_ordered_from_coefficients,
    normal_ordered_gaussian,
)
from .gaussian import ChannelParams, displacement_padding
from .measurement import (
    CLIP_TOL,
    DiscretePOVM,
    HeterodyneGrid,
    heterodyne_grid_povm,
    hermitian_parameters,
)
from .parallel import parallel_map

__all__ = [
    "PriorGrid",
    "InfoEstimate",
    "VariationReport",
    "LocalOptimalityReport",
    "OccupationReport",
    "PerturbationResult",
    "gaussian_prior_grid",
    "gaussian_output_grid",
    "channel_states",
    "mutual_information",
    "gaussian_heterodyne_info",
    "variation_operators",
    "variation_symbol_matrices",
    "local_optimality_certificate",
    "second_variation_form",
    "occupation_inequality_check",
    "occupation_margin",
    "info_of_heterodyne_vs_perturbed",
]

NATS_PER_BIT = math.log(2.0)
CHUNK = 128


@dataclass(frozen=True)
class PriorGrid:
    """Weighted signal points; ``tail_mass`` is prior probability left off the grid."""

    points: np.ndarray
    weights: np.ndarray
    extent: float = 0.0
    step: float = 0.0
    tail_mass: float = 0.0

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise ValueError("one weight per point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError(f"prior weights must be nonnegative and sum to 1 (sum={w.sum()})")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def spec(self) -> dict:
        return {"extent": self.extent, "step": self.step, "points": int(self.points.shape[0])}


def gaussian_prior_grid(S: float, step: float = 0.2, n_sigma: float = 6.0) -> PriorGrid:
    """Square grid over ``n_sigma`` standard deviations of the prior ``S^-1 exp(-|theta|^2/S) dmu``.

    Each real quadrature has standard deviation ``sqrt(S/2)``.  ``S = 0`` gives
    the single point ``theta = 0``.
    """
    if S < 0:
        raise ValueError("S must be nonnegative")
    if S == 0:
        return PriorGrid(np.array([0j]), np.array([1.0]))
    extent = n_sigma * math.sqrt(S / 2.0)
    grid = HeterodyneGrid(extent, step)
    pts = grid.points
    w = np.exp(-np.abs(pts) ** 2 / S)
    tail = 1.0 - math.erf((grid.half_count + 0.5) * step / math.sqrt(S)) ** 2
    return PriorGrid(pts, w / w.sum(), extent, step, max(tail, 0.0))


def gaussian_output_grid(params: ChannelParams, step: float = 0.2, n_sigma: float = 6.0) -> HeterodyneGrid:
    """Outcome grid over ``n_sigma`` standard deviations of the output density."""
    S, L = params.single()
    return HeterodyneGrid(n_sigma * math.sqrt((S + L) / 2.0), step)


def channel_states(L: float, n_max: int):
    """``theta -> rho(theta)``: the displaced thermal state in its normal-ordered form."""
    return lambda theta: normal_ordered_gaussian(1.0 / L, 1.0 / L, theta, n_max)


@dataclass
class InfoEstimate:
    value: float  # nats
    error_budget: float
    n_max: int
    quadrature: dict
    outcome_deficit: float
    clipped: int = 0

    @property
    def bits(self) -> float:
        return self.value / NATS_PER_BIT

    def to_dict(self) -> dict:
        return {
            "value_nats": self.value,
            "value_bits": self.bits,
            "error_budget": self.error_budget,
            "n_max": self.n_max,
            "quadrature": self.quadrature,
            "outcome_deficit": self.outcome_deficit,
            "clipped": self.clipped,
        }


def _state_parameter_chunks(prior: PriorGrid, states, dim: int) -> list[np.ndarray]:
    starts = range(0, prior.points.shape[0], CHUNK)

    def build(s):
        block = prior.points[s : s + CHUNK]
        out = np.empty((block.shape[0], dim * dim))
        for i, theta in enumerate(block):
            rho = np.asarray(states(theta))
            if rho.shape != (dim, dim):
                raise ValueError(f"state at theta={theta} has shape {rho.shape}, expected {(dim, dim)}")
            out[i] = hermitian_parameters(rho)
        return out

    return parallel_map(build, starts)


def _information(features: np.ndarray, param_chunks, weights: np.ndarray):
    """Mutual information from outcome features and state parameters.

    Uses ``I = sum_k [sum_theta w P ln P - p_k ln p_k]`` so one pass over the
    signal grid suffices; chunks are reduced in order.
    """
    offsets = np.cumsum([0] + [c.shape[0] for c in param_chunks])

    def partial(i):
        P = param_chunks[i] @ features.T
        lo = float(P.min())
        if lo < -CLIP_TOL:
            raise ValueError(f"negative outcome probability {lo:.3g}")
        neg = P < 0
        P[neg] = 0.0
        w = weights[offsets[i] : offsets[i + 1]]
        return w @ xlogy(P, P), w @ P, int(neg.sum())

    parts = parallel_map(partial, range(len(param_chunks)))
    a = np.zeros(features.shape[0])
    p = np.zeros(features.shape[0])
    clipped = 0
    for pa, pp, c in parts:
        a += pa
        p += pp
        clipped += c
    value = float(np.sum(a - xlogy(p, p)))
    return value, p, clipped


def mutual_information(povm: DiscretePOVM, prior: PriorGrid, states, n_max: int | None = None) -> InfoEstimate:
    """Shannon information (nats) between the signal grid and the POVM outcomes.

    ``states`` maps a signal point to its density matrix on the POVM's
    truncation.  Zero-probability terms contribute zero.  The error budget is
    the prior mass off the grid plus the outcome probability the POVM misses.
    """
    if n_max is not None and check_n_max(n_max) != povm.n_max:
        raise ValueError("n_max does not match the POVM truncation")
    chunks = _state_parameter_chunks(prior, states, povm.dim)
    value, p, clipped = _information(povm.trace_features(), chunks, prior.weights)
    deficit = float(1.0 - p.sum())
    return InfoEstimate(
        value=value,
        error_budget=prior.tail_mass + abs(deficit),
        n_max=povm.n_max,
        quadrature={"theta": prior.spec(), "outcomes": len(povm)},
        outcome_deficit=deficit,
        clipped=clipped,
    )


def gaussian_heterodyne_info(params: ChannelParams) -> float:
    """``sum_nu ln((S_nu + L_nu) / L_nu)``, the information of heterodyne detection."""
    return float(sum(math.log1p(s / l) for s, l in zip(params.S, params.L)))


@dataclass
class VariationReport:
    beta: complex
    B_op: np.ndarray
    D_op: np.ndarray
    min_eig_B: float
    min_eig_D: float
    min_eig_BminusD: float
    stationarity: float  # ||B(beta)|beta>||
    tol: float
    eigenvalues_BminusD: np.ndarray
    quadratic_form_samples: list = field(default_factory=list)

    @property
    def locally_optimal(self) -> bool:
        return min(self.min_eig_B, self.min_eig_D, self.min_eig_BminusD) >= -self.tol

    def to_dict(self) -> dict:
        return {
            "beta": [self.beta.real, self.beta.imag],
            "min_eig_B": self.min_eig_B,
            "min_eig_D": self.min_eig_D,
            "min_eig_BminusD": self.min_eig_BminusD,
            "stationarity": self.stationarity,
            "tol": self.tol,
            "locally_optimal": self.locally_optimal,
            "eigenvalues_BminusD": self.eigenvalues_BminusD.tolist(),
            "quadratic_form_samples": [[i, v] for i, v in self.quadratic_form_samples],
        }


def _d_terms(beta: complex, S: float, L: float):
    # (sign, prefactor, rate, center) of the two normal-ordered Gaussians in D(beta)
    sigma = S + L
    H = 1.0 / L - 1.0 / sigma
    terms = []
    for sign, rate in ((1.0, 1.0 - H), (-1.0, 1.0)):
        center = (1.0 - 1.0 / (rate * sigma)) * beta
        log_pref = rate * abs(center) ** 2 + (1.0 / sigma - rate) * abs(beta) ** 2
        terms.append((sign, math.exp(log_pref) / sigma, rate, center))
    return terms


def _b_and_d(beta: complex, S: float, L: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    sigma = S + L
    H = 1.0 / L - 1.0 / sigma
    a, _ = ladder_operators(n_max)
    shifted = a - beta * np.eye(n_max + 1)
    rhobar = normal_ordered_gaussian(1.0 / sigma, 1.0 / sigma, 0.0, n_max)
    B = H * shifted.conj().T @ rhobar @ shifted
    D = np.zeros_like(B)
    for sign, pref, rate, center in _d_terms(beta, S, L):
        D += sign * pref * normal_ordered_gaussian(1.0, rate, center, n_max)
    return 0.5 * (B + B.conj().T), 0.5 * (D + D.conj().T)


def variation_operators(beta: complex, params: ChannelParams, n_max: int, tol: float = 1e-9) -> VariationReport:
    """``B(beta)``, ``D(beta)`` and the spectra entering the second variation.

    Works on one mode at a time; multimode channels are independent modes and
    their operators are tensor products handled by the caller.
    """
    S, L = params.single()
    n_max = check_n_max(n_max)
    beta = complex(beta)
    vec = coherent_amplitudes(beta, n_max)[0]
    if 1.0 - np.vdot(vec, vec).real > 1e-8:
        raise TruncationError(f"coherent state at beta={beta:.3g} does not fit in n_max={n_max}")
    B, D = _b_and_d(beta, S, L, n_max)
    eig_B = np.linalg.eigvalsh(B)
    eig_D = np.linalg.eigvalsh(D)
    eig_BD = np.linalg.eigvalsh(B - D)
    return VariationReport(
        beta=beta,
        B_op=B,
        D_op=D,
        min_eig_B=float(eig_B[0]),
        min_eig_D=float(eig_D[0]),
        min_eig_BminusD=float(eig_BD[0]),
        stationarity=float(np.linalg.norm(B @ vec)),
        tol=tol,
        eigenvalues_BminusD=eig_BD,
    )


def _gaussian_coefficients(rate, center, n: int, prefactor=1):
    # Taylor coefficients of prefactor * exp(-rate |z - center|^2) in conj(z)^j z^k.
    r = mpmath.mpf(rate)
    c = mpmath.mpc(center)
    base = mpmath.mpf(prefactor) * mpmath.exp(-r * abs(c) ** 2)
    out = np.zeros((n + 1, n + 1), dtype=object)
    for j in range(n + 1):
        for k in range(n + 1):
            total = mpmath.mpc(0)
            for l in range(min(j, k) + 1):
                total += (
                    (-r) ** l / mpmath.factorial(l)
                    * (r * c) ** (j - l) / mpmath.factorial(j - l)
                    * (r * mpmath.conj(c)) ** (k - l) / mpmath.factorial(k - l)
                )
            out[j, k] = base * total
    return out


def _times_shifted_square(coeffs, beta):
    # coefficients of (conj(z) - conj(beta)) (z - beta) * f
    beta = mpmath.mpc(beta)
    n = coeffs.shape[0] - 1
    out = np.zeros_like(coeffs)
    for j in range(n + 1):
        for k in range(n + 1):
            v = abs(beta) ** 2 * coeffs[j, k]
            if j > 0 and k > 0:
                v += coeffs[j - 1, k - 1]
            if j > 0:
                v -= beta * coeffs[j - 1, k]
            if k > 0:
                v -= mpmath.conj(beta) * coeffs[j, k - 1]
            out[j, k] = v
    return out


def variation_symbol_matrices(beta: complex, params: ChannelParams, n_max: int = 12, dps: int = 40):
    """Brute-force ``(B, D)`` on levels ``0..n_max`` from their normal-ordered symbols.

    Expands each symbol in Taylor coefficients and sums exact monomial matrix
    elements in ``dps``-digit arithmetic.  Slow; meant for small ``n_max`` to
    validate :func:`variation_operators`.
    """
    S, L = params.single()
    sigma = S + L
    H = 1.0 / L - 1.0 / sigma
    with mpmath.workdps(dps):
        pbar = _gaussian_coefficients(mpmath.mpf(1) / sigma, 0, n_max, mpmath.mpf(1) / sigma)
        b_coeffs = _times_shifted_square(pbar, beta) * mpmath.mpf(H)
        d_coeffs = np.zeros((n_max + 1, n_max + 1), dtype=object)
        for sign, pref, rate, center in _d_terms(complex(beta), S, L):
            d_coeffs = d_coeffs + _gaussian_coefficients(rate, center, n_max, sign * pref)
        B = normal_ordered_from_coefficients(b_coeffs, n_max)
        D = normal_ordered_from_coefficients(d_coeffs, n_max)
        to_np = np.vectorize(lambda x: complex(x), otypes=[complex])
        return to_np(B), to_np(D)


def _shifted_frame_operator(beta: complex, S: float, L: float, n_max: int) -> np.ndarray:
    """``B - D`` rebuilt as ``p(beta) D(beta) E^dag K E D(beta)^dag``.

    ``K = :H b^dag b exp(-b^dag b/sigma) - exp(-(1-H) b^dag b) + exp(-b^dag b):``
    is diagonal and beta-free, ``E = exp(-conj(beta) b / sigma)``.  This is the
    operator after the substitution ``b - beta -> b``; agreement with the
    direct construction checks that beta enters only through the displacement
    and the outer factors.
    """
    sigma = S + L
    H = 1.0 / L - 1.0 / sigma
    big = n_max + displacement_padding(beta, n_max)
    n = np.arange(big + 1)
    q = 1.0 - 1.0 / sigma
    K = H * n * q ** np.maximum(n - 1, 0) - H**n
    K[0] = 0.0
    E = _raising_factor(-beta / sigma, 0.0, big).conj().T  # exp(-conj(beta) b / sigma)
    core = E.conj().T @ (K[:, None] * E)
    Dm = displacement(beta, big)
    p_beta = math.exp(-abs(beta) ** 2 / sigma) / sigma
    full = p_beta * Dm @ core @ Dm.conj().T
    out = full[: n_max + 1, : n_max + 1]
    return 0.5 * (out + out.conj().T)


@dataclass
class LocalOptimalityReport:
    params: ChannelParams
    points: np.ndarray
    min_eig_B: np.ndarray
    min_eig_D: np.ndarray
    min_eig_BminusD: np.ndarray
    stationarity: np.ndarray
    factorization_residual: np.ndarray
    spectral_drift: np.ndarray  # max |eig(B-D)(beta) - eig(B-D)(reference)|, diagnostic only
    validation_error: float
    tol: float
    validation_tol: float

    @property
    def passed(self) -> bool:
        t = self.tol
        return bool(
            np.min(self.min_eig_BminusD) >= -t
            and np.min(self.min_eig_B) >= -t
            and np.min(self.min_eig_D) >= -t
            and np.max(self.stationarity) <= t
            and np.max(self.factorization_residual) <= t
            and self.validation_error <= self.validation_tol
        )

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "points": [[float(b.real), float(b.imag)] for b in self.points],
            "min_eig_B": self.min_eig_B.tolist(),
            "min_eig_D": self.min_eig_D.tolist(),
            "min_eig_BminusD": self.min_eig_BminusD.tolist(),
            "stationarity": self.stationarity.tolist(),
            "factorization_residual": self.factorization_residual.tolist(),
            "spectral_drift": self.spectral_drift.tolist(),
            "validation_error": self.validation_error,
            "tol": self.tol,
            "validation_tol": self.validation_tol,
            "passed": self.passed,
        }


def local_optimality_certificate(
    params: ChannelParams,
    beta_grid,
    n_max: int,
    tol: float = 1e-8,
    validation_n_max: int = 12,
    validation_tol: float = 1e-9,
) -> LocalOptimalityReport:
    """Sweep ``B(beta) - D(beta) >= 0`` over ``beta_grid``.

    Before the sweep, the fast construction is compared with the brute-force
    symbol expansion at ``validation_n_max`` for the grid point of largest
    modulus.  Each point also rebuilds ``B - D`` in the shifted frame (see
    :func:`_shifted_frame_operator`).
    """
    S, L = params.single()
    points = np.atleast_1d(np.asarray(beta_grid, dtype=complex))
    probe = complex(points[int(np.argmax(np.abs(points)))])
    B12, D12 = _b_and_d(probe, S, L, validation_n_max)
    Bref, Dref = variation_symbol_matrices(probe, params, validation_n_max)
    validation = float(max(np.max(np.abs(B12 - Bref)), np.max(np.abs(D12 - Dref))))

    def at(k):
        rep = variation_operators(points[k], params, n_max, tol)
        shifted = _shifted_frame_operator(points[k], S, L, n_max)
        resid = float(np.max(np.abs((rep.B_op - rep.D_op) - shifted)))
        return rep.min_eig_B, rep.min_eig_D, rep.min_eig_BminusD, rep.stationarity, resid, rep.eigenvalues_BminusD

    rows = parallel_map(at, range(points.shape[0]))
    ref = rows[int(np.argmin(np.abs(points)))][5]
    drift = np.array([float(np.max(np.abs(r[5] - ref))) for r in rows])
    col = lambda i: np.array([r[i] for r in rows])  # noqa: E731
    return LocalOptimalityReport(
        params, points, col(0), col(1), col(2), col(3), col(4), drift, validation, tol, validation_tol
    )


def second_variation_form(report: VariationReport, perturbations) -> list[float]:
    """``dphi^dag (B - D) dphi`` for each perturbation.

    The component of ``dphi`` along ``|beta>`` with a real coefficient is
    removed first, which enforces the first-order resolution-of-identity
    constraint at this outcome.
    """
    n_max = report.B_op.shape[0] - 1
    phi0 = coherent_amplitudes(report.beta, n_max)[0]
    norm0 = np.vdot(phi0, phi0).real
    op = report.B_op - report.D_op
    values = []
    for i, dphi in enumerate(perturbations):
        dphi = np.asarray(dphi, dtype=complex)
        dphi = dphi - (np.vdot(phi0, dphi).real / norm0) * phi0
        v = float(np.vdot(dphi, op @ dphi).real)
        values.append(v)
        report.quadratic_form_samples.append((i, v))
    return values


@dataclass
class OccupationReport:
    h: tuple[float, ...]
    n_max: int
    holds: bool
    worst_margin: float
    equality_cases: list
    checked: int

    def to_dict(self) -> dict:
        return {
            "h": list(self.h),
            "n_max": self.n_max,
            "holds": self.holds,
            "worst_margin": self.worst_margin,
            "equality_cases": [list(c) for c in self.equality_cases],
            "checked": self.checked,
        }


def occupation_inequality_check(h, n_max: int) -> OccupationReport:
    """Diagonal form ``prod h^n * sum n >= prod h^n - [sum n == 0]`` over all tuples with ``sum n <= n_max``.

    The left side is ``:b^dag H exp(b^dag (H-1) b) b:`` and the right side
    ``:exp(b^dag (H-1) b) - exp(-b^dag b):`` in the occupation basis.  Margins
    are exact rationals (the binary values of ``h``), so there is no tolerance.
    """
    h = tuple(float(x) for x in np.atleast_1d(h))
    if not h or any(not (0.0 <= x < 1.0) for x in h):
        raise ValueError(f"every h must lie in [0, 1), got {h}")
    if int(n_max) != n_max or n_max < 0:
        raise ValueError("n_max must be a nonnegative integer")
    n_max = int(n_max)
    # each h is a dyadic rational p / 2^e, so prod h^n = num / 2^shift with integers
    ratios = [x.as_integer_ratio() for x in h]
    num_powers = []
    for p, _ in ratios:
        row = [1]
        for _ in range(n_max):
            row.append(row[-1] * p)
        num_powers.append(row)
    exps = [q.bit_length() - 1 for _, q in ratios]
    worst_num, worst_shift = None, 0
    equality = []
    checked = 0
    for occ in _tuples_up_to(len(h), n_max):
        num = 1
        shift = 0
        for row, e, n in zip(num_powers, exps, occ):
            num *= row[n]
            shift += e * n
        total = sum(occ)
        # margin = prod * total - (prod - [total == 0]) = (num * (total - 1) + [total == 0] 2^shift) / 2^shift
        m = num * (total - 1) + ((1 << shift) if total == 0 else 0)
        checked += 1
        if worst_num is None or (m << worst_shift) < (worst_num << shift):
            worst_num, worst_shift = m, shift
        if m == 0:
            equality.append(occ)
    worst = Fraction(worst_num, 1 << worst_shift)
    return OccupationReport(h, n_max, worst >= 0, float(worst), equality, checked)


def occupation_margin(h, occ) -> Fraction:
    """Exact margin of one occupation tuple (reference form of the enumeration)."""
    prod = Fraction(1)
    for x, n in zip(h, occ):
        prod *= Fraction(float(x)) ** int(n)
    total = sum(int(n) for n in occ)
    return prod * total - (prod - (1 if total == 0 else 0))


def _tuples_up_to(modes: int, n_max: int):
    if modes == 1:
        for n in range(n_max + 1):
            yield (n,)
        return
    for first in range(n_max + 1):
        for rest in _tuples_up_to(modes - 1, n_max - first):
            yield (first,) + rest


@dataclass
class PerturbationResult:
    info_coherent: float
    info_perturbed: list[float]
    error_budget: float
    resolution_errors: list[float]

    def to_dict(self) -> dict:
        return {
            "info_coherent": self.info_coherent,
            "info_perturbed": list(self.info_perturbed),
            "error_budget": self.error_budget,
            "resolution_errors": list(self.resolution_errors),
        }


def _psd_sqrt_pair(Q: np.ndarray):
    values, vectors = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    if values[0] <= 0:
        raise ArithmeticError("POVM resolution is singular")
    root = np.sqrt(values)
    return (vectors * root) @ vectors.conj().T, (vectors / root) @ vectors.conj().T


def info_of_heterodyne_vs_perturbed(
    params: ChannelParams,
    scale: float,
    seed: int,
    samples: int = 1,
    n_max: int = 40,
    prior_step: float = 0.2,
    beta_step: float = 0.2,
    n_sigma: float = 6.0,
) -> PerturbationResult:
    """Information of the coherent grid POVM against randomly perturbed rank-one families.

    Each grid vector ``phi_k`` becomes ``phi_k + scale * |phi_k| g_k`` with ``g_k``
    a unit complex Gaussian direction.  The family is renormalized by
    ``Q0^(1/2) Q^(-1/2)`` so it resolves exactly what the coherent grid resolves,
    and both families are completed with the same remainder ``I - Q0``.
    Sample ``i`` uses ``numpy.random.default_rng([seed, i])``.
    """
    if not 0.0 <= scale <= 0.1:
        raise ValueError("perturbation scale must lie in [0, 0.1]")
    S, L = params.single()
    prior = gaussian_prior_grid(S, prior_step, n_sigma)
    grid = gaussian_output_grid(params, beta_step, n_sigma)
    coherent = heterodyne_grid_povm(grid.extent, grid.step, n_max)
    Q0 = coherent.resolution()
    completed = coherent.with_remainder()
    remainder = completed.matrices
    chunks = _state_parameter_chunks(prior, channel_states(L, n_max), coherent.dim)
    info0, p0, _ = _information(completed.trace_features(), chunks, prior.weights)
    budget = prior.tail_mass + abs(1.0 - p0.sum())
    root0, _ = _psd_sqrt_pair(Q0)

    perturbed, errors = [], []
    phi = coherent.vectors
    norms = np.linalg.norm(phi, axis=1, keepdims=True)
    for i in range(samples):
        if scale == 0:
            new = phi
        else:
            rng = np.random.default_rng([seed, i])
            g = rng.standard_normal(phi.shape) + 1j * rng.standard_normal(phi.shape)
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            raw = phi + scale * norms * g
            Q = (raw.T * coherent.weights) @ raw.conj()
            _, inv_root = _psd_sqrt_pair(Q)
            new = raw @ (root0 @ inv_root).T
        povm = DiscretePOVM(
            n_max, completed.labels, completed.weights, vectors=new, matrices=remainder
        )
        err = float(np.max(np.abs(povm.resolution() - np.eye(coherent.dim))))
        if err > 1e-6 + 1e-8:
            raise ArithmeticError(f"perturbed POVM misses the identity by {err:.3g}")
        errors.append(err)
        value, _, _ = _information(povm.trace_features(), chunks, prior.weights)
        perturbed.append(value)
    return PerturbationResult(info0, perturbed, budget, errors)
