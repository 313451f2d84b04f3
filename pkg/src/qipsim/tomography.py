"""Pauli-expectation state tomography and the copy-count schedule."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Protocol

import numpy as np

from .qmath import DensityOperator, RegisterLayout, SeedLike, as_generator, to_density, trace_distance

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

#: Largest q allowed with the exact copy schedule unless overridden.
FAITHFUL_MAX_QUBITS = 3


class TomographyError(ValueError):
    pass


def as_fraction(x) -> Fraction:
    """Exact rational for an int, Fraction, or decimal float/str (0.1 -> 1/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def required_copies(q: int, eps) -> int:
    """``ceil(2^(10 q) / eps^3)`` in exact arithmetic."""
    if q < 1:
        raise TomographyError("q must be at least 1")
    e = as_fraction(eps)
    if not 0 < e < 1:
        raise TomographyError("eps must lie in (0, 1)")
    return math.ceil(Fraction(2 ** (10 * q)) / e ** 3)


@dataclass(frozen=True)
class CopySchedule:
    q: int
    eps: float
    copies: int
    faithful: bool = True

    def __post_init__(self):
        if self.faithful:
            if self.q > FAITHFUL_MAX_QUBITS:
                raise TomographyError(
                    f"q={self.q} exceeds {FAITHFUL_MAX_QUBITS}; pass faithful=False with an explicit copy count"
                )
            need = required_copies(self.q, self.eps)
            if self.copies < need:
                raise TomographyError(f"{self.copies} copies is below the schedule's {need}")

    @classmethod
    def faithful_for(cls, q: int, eps) -> "CopySchedule":
        return cls(q, float(eps), required_copies(q, eps))


@lru_cache(maxsize=None)
def pauli_strings(q: int) -> tuple[str, ...]:
    return tuple("".join(p) for p in itertools.product("IXYZ", repeat=q))


@lru_cache(maxsize=256)
def pauli_matrix(label: str) -> np.ndarray:
    if not label or any(ch not in PAULIS for ch in label):
        raise TomographyError(f"malformed Pauli string {label!r}")
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULIS[ch])
    out.setflags(write=False)
    return out


def pauli_expectation(rho: DensityOperator | np.ndarray, label: str) -> float:
    mat = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho)
    p = pauli_matrix(label)
    if p.shape != mat.shape:
        raise TomographyError(f"Pauli string {label!r} does not match a {mat.shape[0]}-dim state")
    return float(np.trace(p @ mat).real)


class CopySampler(Protocol):
    """Source of i.i.d. copies that can be measured in Pauli bases."""

    n_qubits: int

    def plus_counts(self, label: str, shots: int) -> int: ...


class StateSampler:
    """Measures fresh copies of a fixed state; outcome statistics are exact.

    Measuring a Pauli observable on ``shots`` independent copies yields a
    binomial number of +1 outcomes, so the count is drawn in one step.
    """

    def __init__(self, rho: DensityOperator | np.ndarray, seed: SeedLike):
        self.matrix = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho, dtype=complex)
        self.n_qubits = int(round(np.log2(self.matrix.shape[0])))
        self.rng = as_generator(seed)

    def _p_plus(self, label: str) -> float:
        return min(1.0, max(0.0, (1.0 + pauli_expectation(self.matrix, label)) / 2))

    def plus_counts(self, label: str, shots: int) -> int:
        return int(self.rng.binomial(shots, self._p_plus(label)))

    def outcomes(self, label: str, shots: int) -> np.ndarray:
        return np.where(self.rng.random(shots) < self._p_plus(label), 1, -1)


def sample_pauli_measurement(rho: DensityOperator, pauli: str, seed: SeedLike) -> int:
    """One +/-1 outcome of measuring ``pauli`` on a copy of ``rho``."""
    sampler = StateSampler(rho, seed)
    if len(pauli) != sampler.n_qubits:
        raise TomographyError(f"Pauli string {pauli!r} has wrong length for {sampler.n_qubits} qubits")
    return int(sampler.outcomes(pauli, 1)[0])


def psd_projection(mat: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the trace."""
    herm = (mat + mat.conj().T) / 2
    vals, vecs = np.linalg.eigh(herm)
    vals = np.clip(vals, 0.0, None)
    if vals.sum() <= 0:
        return np.eye(mat.shape[0], dtype=complex) / mat.shape[0]
    out = (vecs * (vals / vals.sum())) @ vecs.conj().T
    return (out + out.conj().T) / 2


@dataclass(frozen=True, eq=False)
class TomographyEstimate:
    estimate: np.ndarray
    projected: DensityOperator
    copies_used: int
    expectations: dict


def estimate_state(sampler: CopySampler, q: int, copies: int) -> TomographyEstimate:
    """Reconstruct a q-qubit state from ``copies`` single-setting measurements.

    Copies are split evenly over all ``4^q`` Pauli strings (the identity's
    share always reads +1).  The raw estimate is
    ``2^-q sum_P <P> P``; ``projected`` is its nearest-by-clipping state.
    """
    labels = pauli_strings(q)
    if copies < len(labels):
        raise TomographyError(f"need at least {len(labels)} copies for {q} qubit(s), got {copies}")
    if sampler.n_qubits != q:
        raise TomographyError(f"sampler holds {sampler.n_qubits} qubits, expected {q}")
    base, extra = divmod(copies, len(labels))
    est = np.zeros((2 ** q, 2 ** q), dtype=complex)
    expectations = {}
    for i, label in enumerate(labels):
        shots = base + (1 if i < extra else 0)
        if set(label) == {"I"}:
            mean = 1.0
        else:
            mean = 2.0 * sampler.plus_counts(label, shots) / shots - 1.0
        expectations[label] = mean
        est += mean * pauli_matrix(label)
    est /= 2 ** q
    layout = RegisterLayout.anonymous(q)
    return TomographyEstimate(est, DensityOperator(psd_projection(est), layout), copies, expectations)


@dataclass(frozen=True)
class TomographyTrial:
    seed: int
    q: int
    eps: float
    copies: int
    trace_distance: float

    @property
    def success(self) -> bool:
        return self.trace_distance < self.eps

    def row(self) -> list:
        return [self.seed, self.q, self.eps, self.copies, repr(self.trace_distance), int(self.success)]


CSV_HEADER = ["seed", "q", "eps", "N", "trace_distance", "success"]


def run_trials(rho: DensityOperator | np.ndarray, eps, seeds, copies: int | None = None) -> list[TomographyTrial]:
    if isinstance(rho, np.ndarray):
        rho = DensityOperator(rho, RegisterLayout.anonymous(int(round(np.log2(rho.shape[0])))))
    rho = to_density(rho)
    q = rho.n_qubits
    n = required_copies(q, eps) if copies is None else copies
    trials = []
    for seed in seeds:
        est = estimate_state(StateSampler(rho, seed), q, n)
        trials.append(TomographyTrial(int(seed), q, float(eps), n, trace_distance(est.projected, rho)))
    return trials
