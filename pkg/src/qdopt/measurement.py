"""Discrete POVMs, grid discretizations of the coherent-state POVM, and outcome statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .fock import check_n_max, coherent_amplitudes, hermitize

__all__ = [
    "DiscretePOVM",
    "HeterodyneGrid",
    "ResolutionReport",
    "OutcomeDistribution",
    "heterodyne_grid",
    "heterodyne_grid_povm",
    "identity_resolution_report",
    "outcome_distribution",
    "hermitian_parameters",
    "povm_to_json",
    "povm_from_json",
    "CLIP_TOL",
]

CLIP_TOL = 1e-10
N_EFF_DEFICIT = 1e-3
MAX_VACUUM_DEFICIT = 0.05


def hermitian_parameters(op: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix: diagonal, then Re and Im of the upper triangle.

    Pairs with :meth:`DiscretePOVM.trace_features` so that
    ``features @ hermitian_parameters(rho)`` gives ``Tr(E_k rho)``.
    """
    op = np.asarray(op)
    iu = np.triu_indices(op.shape[0], 1)
    upper = op[iu]
    return np.concatenate([op.diagonal().real, upper.real, upper.imag])


class DiscretePOVM:
    """Finite family of effects ``weight_k * element_k``.

    Elements are stored either as vectors (rank-one ``v v^dag``) or as full
    matrices; vector outcomes come first.  Grid discretizations of the
    coherent POVM have tens of thousands of rank-one outcomes, which is why the
    vector form exists.
    """

    def __init__(self, n_max, labels, weights, *, vectors=None, matrices=None):
        self.n_max = check_n_max(n_max)
        d = self.n_max + 1
        self.vectors = np.zeros((0, d), complex) if vectors is None else np.array(vectors, dtype=complex)
        self.matrices = np.zeros((0, d, d), complex) if matrices is None else np.array(matrices, dtype=complex)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != d:
            raise ValueError(f"vectors must have shape (K, {d})")
        if self.matrices.ndim != 3 or self.matrices.shape[1:] != (d, d):
            raise ValueError(f"matrices must have shape (K, {d}, {d})")
        self.weights = np.array(weights, dtype=float)
        self.labels = list(labels)
        count = self.vectors.shape[0] + self.matrices.shape[0]
        if count < 1:
            raise ValueError("a POVM needs at least one element")
        if self.weights.shape != (count,) or len(self.labels) != count:
            raise ValueError(f"need one weight and one label per element ({count})")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be positive and finite")
        for arr in (self.vectors, self.matrices, self.weights):
            arr.setflags(write=False)

    @classmethod
    def from_matrices(cls, matrices, labels=None, weights=None) -> "DiscretePOVM":
        matrices = [hermitize(m) for m in matrices]
        n = len(matrices)
        return cls(
            matrices[0].shape[0] - 1,
            list(range(n)) if labels is None else labels,
            np.ones(n) if weights is None else weights,
            matrices=np.array(matrices),
        )

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[0]

    def element(self, k: int) -> np.ndarray:
        if k < self.n_vectors:
            v = self.vectors[k]
            return np.outer(v, v.conj())
        return self.matrices[k - self.n_vectors]

    def elements(self) -> Iterator[np.ndarray]:
        for k in range(len(self)):
            yield self.element(k)

    def effect(self, k: int) -> np.ndarray:
        """``weight_k * element_k``."""
        return self.weights[k] * self.element(k)

    def resolution(self) -> np.ndarray:
        """``sum_k weight_k element_k``."""
        nv = self.n_vectors
        total = (self.vectors.T * self.weights[:nv]) @ self.vectors.conj()
        if self.matrices.shape[0]:
            total = total + np.tensordot(self.weights[nv:], self.matrices, axes=1)
        return 0.5 * (total + total.conj().T)

    def raw_probabilities(self, rho: np.ndarray) -> np.ndarray:
        """Unclipped ``weight_k Tr(element_k rho)``."""
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state has shape {rho.shape}, POVM acts on dimension {self.dim}")
        nv = self.n_vectors
        out = np.empty(len(self))
        V = self.vectors
        out[:nv] = np.einsum("ki,ki->k", V.conj() @ rho, V).real
        if self.matrices.shape[0]:
            out[nv:] = np.einsum("kji,ij->k", self.matrices, rho).real
        return self.weights * out

    def trace_features(self) -> np.ndarray:
        """Real ``(K, dim^2)`` matrix ``F`` with ``F @ hermitian_parameters(rho) = effect traces``."""
        d = self.dim
        iu = np.triu_indices(d, 1)
        nv = self.n_vectors
        V = self.vectors
        vec_part = np.empty((nv, d * d))
        vec_part[:, :d] = np.abs(V) ** 2
        cross = V.conj()[:, iu[0]] * V[:, iu[1]]
        m = len(iu[0])
        vec_part[:, d : d + m] = 2.0 * cross.real
        vec_part[:, d + m :] = -2.0 * cross.imag
        mats = self.matrices
        mat_part = np.empty((mats.shape[0], d * d))
        if mats.shape[0]:
            lower = mats[:, iu[1], iu[0]]  # E_ji for i < j
            mat_part[:, :d] = np.einsum("kii->ki", mats).real
            mat_part[:, d : d + m] = 2.0 * lower.real
            mat_part[:, d + m :] = -2.0 * lower.imag
        return np.vstack([vec_part, mat_part]) * self.weights[:, None]

    def relabel(self, labels) -> "DiscretePOVM":
        return DiscretePOVM(self.n_max, labels, self.weights, vectors=self.vectors, matrices=self.matrices)

    def with_remainder(self, tol: float = 1e-8, label="remainder") -> "DiscretePOVM":
        """Append ``I - sum_k effect_k`` as an extra outcome if it is PSD within ``tol``."""
        rem = np.eye(self.dim) - self.resolution()
        lo = float(np.linalg.eigvalsh(rem)[0])
        if lo < -tol:
            raise ValueError(f"remainder I - sum E_k is not PSD (min eigenvalue {lo:.3g})")
        mats = np.concatenate([self.matrices, rem[None]], axis=0)
        return DiscretePOVM(
            self.n_max,
            self.labels + [label],
            np.append(self.weights, 1.0),
            vectors=self.vectors,
            matrices=mats,
        )

    def to_dict(self, compact: bool = False) -> dict:
        """JSON-ready dict.  ``compact=True`` keeps rank-one outcomes as ``vectors``."""
        doc = {
            "dim": self.dim,
            "labels": [_encode_label(l) for l in self.labels],
            "weights": [float(w) for w in self.weights],
        }
        if compact:
            doc["vectors"] = _encode_array(self.vectors)
            doc["elements"] = _encode_array(self.matrices)
        else:
            doc["elements"] = [_encode_array(m) for m in self.elements()]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscretePOVM":
        dim = int(doc["dim"])
        vectors = _decode_array(doc["vectors"]) if "vectors" in doc else None
        elements = doc.get("elements", [])
        matrices = _decode_array(elements) if len(elements) else None
        if vectors is not None and vectors.size == 0:
            vectors = None
        return cls(
            dim - 1,
            [_decode_label(l) for l in doc["labels"]],
            doc["weights"],
            vectors=vectors,
            matrices=matrices,
        )


def _encode_label(label):
    if isinstance(label, (complex, np.complexfloating)):
        return [float(label.real), float(label.imag)]
    if isinstance(label, (int, np.integer)):
        return int(label)
    return label


def _decode_label(label):
    if isinstance(label, list):
        return complex(label[0], label[1])
    return label


def _encode_array(arr: np.ndarray):
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _decode_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def povm_to_json(povm: DiscretePOVM, compact: bool = False) -> str:
    return json.dumps(povm.to_dict(compact=compact))


def povm_from_json(text: str) -> DiscretePOVM:
    return DiscretePOVM.from_dict(json.loads(text))


@dataclass(frozen=True)
class HeterodyneGrid:
    """Square lattice ``{(j step, k step)}`` with ``|Re|, |Im| <= extent``."""

    extent: float
    step: float

    def __post_init__(self):
        if self.extent <= 0 or self.step <= 0:
            raise ValueError("extent and step must be positive")

    @property
    def half_count(self) -> int:
        return int(math.floor(self.extent / self.step + 1e-9))

    @property
    def axis(self) -> np.ndarray:
        n = self.half_count
        return np.arange(-n, n + 1) * self.step

    @property
    def points(self) -> np.ndarray:
        x = self.axis
        re, im = np.meshgrid(x, x, indexing="ij")
        return (re + 1j * im).ravel()

    @property
    def cell_measure(self) -> float:
        """``step^2 / pi``: the ``dmu`` mass of one cell."""
        return self.step**2 / math.pi


def heterodyne_grid(extent: float, step: float) -> HeterodyneGrid:
    return HeterodyneGrid(float(extent), float(step))


class ResolutionReport(NamedTuple):
    deficits: np.ndarray  # 1 - <n| sum E |n>
    max_offdiagonal: float
    n_eff: int  # largest n with every level 0..n within N_EFF_DEFICIT; -1 if none

    def to_dict(self) -> dict:
        return {
            "deficits": [float(x) for x in self.deficits],
            "max_offdiagonal": self.max_offdiagonal,
            "n_eff": self.n_eff,
        }


def identity_resolution_report(povm: DiscretePOVM) -> ResolutionReport:
    total = povm.resolution()
    deficits = 1.0 - total.diagonal().real
    off = total - np.diag(total.diagonal())
    bad = np.nonzero(np.abs(deficits) > N_EFF_DEFICIT)[0]
    n_eff = int(bad[0]) - 1 if bad.size else povm.n_max
    return ResolutionReport(deficits, float(np.max(np.abs(off))), n_eff)


def heterodyne_grid_povm(
    extent: float, step: float, n_max: int, complete_with_remainder: bool = False
) -> DiscretePOVM:
    """Midpoint-rule discretization of ``|beta><beta| dmu(beta)`` on a square grid.

    The POVM is not completed to the identity unless ``complete_with_remainder``
    is set, in which case ``I - sum`` is appended when it is PSD within 1e-8.
    Raises ``ValueError`` when the vacuum level is resolved worse than 5%.
    """
    if step > 0.5:
        raise ValueError(f"grid step {step} is coarser than 0.5")
    if extent < 2:
        raise ValueError(f"grid extent {extent} is smaller than 2")
    grid = heterodyne_grid(extent, step)
    points = grid.points
    povm = DiscretePOVM(
        n_max,
        list(points),
        np.full(points.shape[0], grid.cell_measure),
        vectors=coherent_amplitudes(points, n_max),
    )
    report = identity_resolution_report(povm)
    if abs(report.deficits[0]) > MAX_VACUUM_DEFICIT:
        raise ValueError(f"grid resolves the vacuum level only to {report.deficits[0]:.3g}")
    return povm.with_remainder() if complete_with_remainder else povm


class OutcomeDistribution(NamedTuple):
    probabilities: np.ndarray
    deficit: float  # 1 - sum p
    clipped: int  # entries in [-CLIP_TOL, 0) set to zero


def outcome_distribution(povm: DiscretePOVM, rho: np.ndarray) -> OutcomeDistribution:
    """Outcome probabilities ``weight_k Tr(element_k rho)``.

    Negative values down to ``-1e-10`` are rounding and are clipped (and
    counted); anything lower raises ``ValueError``.
    """
    rho = np.asarray(rho, dtype=complex)
    trace = float(np.trace(rho).real)
    if abs(trace - 1.0) > 1e-6:
        raise ValueError(f"state trace {trace} differs from 1 by more than 1e-6")
    p = povm.raw_probabilities(rho)
    p, clipped = clip_probabilities(p)
    return OutcomeDistribution(p, float(1.0 - p.sum()), clipped)


def clip_probabilities(p: np.ndarray) -> tuple[np.ndarray, int]:
    lo = float(p.min()) if p.size else 0.0
    if lo < -CLIP_TOL:
        raise ValueError(f"negative outcome probability {lo:.3g}")
    neg = p < 0
    return np.where(neg, 0.0, p), int(neg.sum())
