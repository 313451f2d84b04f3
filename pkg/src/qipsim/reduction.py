"""Single-proof verifier built from a short-interaction proof system.

The certificate is a list of round circuits plus N+k copies of the Choi
state of the prover's final channel, laid out as pairs R_1 S_1 ... R_{N+k}
S_{N+k} (R = answer qubits, S = the q = 2m+1 input qubits).  Verification:

1. replay the rounds from the circuits to get the pre-answer state,
2. permute the pairs uniformly at random and keep the first N+1,
3. tomograph S_2..S_{N+1}; reject unless the estimate is within delta/2
   of the maximally mixed state,
4. apply the channel held in (R_1, S_1) to the prover's half of the
   replayed state by post-selection and run the final measurement.

Exact schedule values are astronomically large, so every run goes through
``ReductionParameters.effective_*`` which picks up small overrides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .channels import QuantumChannel, post_select_apply
from .circuits import Circuit, circuit_to_unitary, parse_circuit, render_circuit
from .config import TOL, check_cap
from .protocol import ANSWER, PROVER, VERIFIER, WIRE, ProtocolSpec, evolve_rounds
from .qmath import (
    DensityOperator,
    PureState,
    RegisterLayout,
    UnitaryMatrix,
    apply_unitary_on,
    permute_matrix_qubits,
    reduce_matrix,
    trace_distance,
)
from .tomography import StateSampler, as_fraction, estimate_state, required_copies


class ReductionError(ValueError):
    """Malformed proof or inconsistent parameters."""


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyOverrides:
    """Desk-scale replacements for the schedule; ``None`` keeps the exact value."""

    eps: Fraction | None = None
    delta: Fraction | None = None
    N: int | None = None
    k: int | None = None
    tomography_copies: int | None = None


@dataclass(frozen=True)
class ReductionParameters:
    m: int
    g: int
    n: int
    q: int
    eps: Fraction
    delta: Fraction
    N: int
    k: int
    toy: ToyOverrides | None = None

    @property
    def effective_delta(self) -> Fraction:
        if self.toy and self.toy.delta is not None:
            return self.toy.delta
        return self.delta

    @property
    def effective_eps(self) -> Fraction:
        # with only delta overridden, invert delta = eps^2 / 4 (rounded to a decimal)
        if self.toy and self.toy.eps is not None:
            return self.toy.eps
        if self.toy and self.toy.delta is not None:
            return Fraction(repr(2 * math.sqrt(self.toy.delta)))
        return self.eps

    @property
    def effective_N(self) -> int:
        return self.toy.N if self.toy and self.toy.N is not None else self.N

    @property
    def effective_k(self) -> int:
        return self.toy.k if self.toy and self.toy.k is not None else self.k

    @property
    def pairs(self) -> int:
        return self.effective_N + self.effective_k

    @property
    def kept_pairs(self) -> int:
        return self.effective_N + 1

    @property
    def tomography_copies(self) -> int:
        """Copies fed to the tomography step: the schedule for accuracy delta/2."""
        if self.toy and self.toy.tomography_copies is not None:
            return self.toy.tomography_copies
        return required_copies(self.q, self.effective_delta / 2)

    def with_toy(self, *, eps=None, delta=None, N=None, k=None, tomography_copies=None) -> "ReductionParameters":
        toy = ToyOverrides(
            None if eps is None else as_fraction(eps),
            None if delta is None else as_fraction(delta),
            N,
            k,
            tomography_copies,
        )
        if toy.N is not None and toy.N < 0:
            raise ReductionError("N' must be nonnegative")
        if toy.k is not None and toy.k < 1:
            raise ReductionError("k' must be at least 1")
        for name in ("eps", "delta"):
            v = getattr(toy, name)
            if v is not None and not 0 < v < 1:
                raise ReductionError(f"{name}' must lie in (0, 1)")
        if toy.tomography_copies is not None and toy.tomography_copies < 4 ** self.q:
            raise ReductionError(f"tomography needs at least {4 ** self.q} copies")
        return replace(self, toy=toy)

    def as_dict(self) -> dict:
        """JSON-ready view; rationals and big integers are exact strings."""
        out = {
            "m": self.m,
            "g": self.g,
            "n": self.n,
            "q": self.q,
            "eps": str(self.eps),
            "delta": str(self.delta),
            "N": str(self.N),
            "k": str(self.k),
        }
        if self.toy is not None:
            out["effective"] = {
                "eps": str(self.effective_eps),
                "delta": str(self.effective_delta),
                "N": str(self.effective_N),
                "k": str(self.effective_k),
                "tomography_copies": str(self.tomography_copies),
            }
        return out


def compute_params(m: int, g: int, n: int) -> ReductionParameters:
    """Exact schedule for an m-round system with gap at least 1/g."""
    if m < 0 or g < 1 or n < 1:
        raise ReductionError("need m >= 0, g >= 1, n >= 1")
    q = 2 * m + 1
    eps = Fraction(1, 4 ** (q + 1) * g)
    delta = eps ** 2 / 4
    N = required_copies(q, delta / 2)
    k = math.ceil(Fraction(4 ** (q + 1) * (N + 1)) / eps)
    # the kept N+1 pairs are eps-close to a mixture of product states
    assert Fraction(4 * 4 ** q * (N + 1), N + k) <= eps
    return ReductionParameters(m, g, n, q, eps, delta, N, k)


def definetti_bound(d: int, k: int, n: int) -> float:
    """Distance bound ``4 d^2 k / n`` for k of n exchangeable d-dimensional registers."""
    if not 2 <= k <= n - 1:
        raise ReductionError(f"need 2 <= k <= n-1, got k={k}, n={n}")
    return 4 * d * d * k / n


def completeness_lower_bound(params: ReductionParameters, c) -> Fraction:
    return as_fraction(c) / 4 ** params.q - params.effective_eps - Fraction(1, 2 ** params.n)


def soundness_upper_bound(params: ReductionParameters, s) -> Fraction:
    return as_fraction(s) / 4 ** params.q + 2 * params.effective_eps + Fraction(1, 2 ** params.n)


def gap(params: ReductionParameters, c, s) -> Fraction:
    """Completeness bound minus soundness bound; nonpositive means no separation."""
    return completeness_lower_bound(params, c) - soundness_upper_bound(params, s)


# ---------------------------------------------------------------------------
# Proofs
# ---------------------------------------------------------------------------

def pair_layout(pairs: int, out_qubits: int, in_qubits: int) -> RegisterLayout:
    names, sizes = [], []
    for i in range(1, pairs + 1):
        names += [f"R{i}", f"S{i}"]
        sizes += [out_qubits, in_qubits]
    return RegisterLayout(tuple(names), tuple(sizes))


@dataclass(frozen=True, eq=False)
class QmaProof:
    classical_part: tuple[str, ...]
    quantum_part: DensityOperator
    answer_qubits: int

    def __post_init__(self):
        object.__setattr__(self, "classical_part", tuple(self.classical_part))
        for text in self.classical_part:
            parse_circuit(text)

    def circuits(self) -> list[Circuit]:
        return [parse_circuit(t) for t in self.classical_part]


def _tensor_power(mat: np.ndarray, times: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(times):
        out = np.kron(out, mat)
    return out


def product_proof(
    circuits: Sequence[Circuit | str], pair_state: np.ndarray | DensityOperator, params: ReductionParameters, answer_qubits: int
) -> QmaProof:
    """Proof whose quantum part is ``pair_state`` on every one of the N+k pairs."""
    mat = pair_state.matrix if isinstance(pair_state, DensityOperator) else np.asarray(pair_state, dtype=complex)
    pair_qubits = answer_qubits + params.q
    if mat.shape != (2 ** pair_qubits, 2 ** pair_qubits):
        raise ReductionError(f"pair state must live on {pair_qubits} qubits")
    check_cap(pair_qubits * params.pairs, "proof")
    layout = pair_layout(params.pairs, answer_qubits, params.q)
    texts = [c if isinstance(c, str) else render_circuit(c) for c in circuits]
    return QmaProof(tuple(texts), DensityOperator(_tensor_power(mat, params.pairs), layout), answer_qubits)


def build_honest_proof(
    spec: ProtocolSpec, circuits: Sequence[Circuit], final_channel: QuantumChannel, params: ReductionParameters
) -> QmaProof:
    """Round circuits plus N+k copies of the final channel's Choi state."""
    _check_circuits(spec, list(circuits), params)
    if final_channel.input_qubits != params.q:
        raise ReductionError(f"final channel takes {final_channel.input_qubits} qubits, expected q={params.q}")
    if final_channel.output_qubits != spec.answer_qubits:
        raise ReductionError("final channel output does not match the answer register")
    return product_proof(circuits, final_channel.choi, params, spec.answer_qubits)


def zero_proof(spec: ProtocolSpec, circuits: Sequence[Circuit], params: ReductionParameters) -> QmaProof:
    """All-zeros quantum part: no Choi state at all."""
    d = 2 ** (spec.answer_qubits + params.q)
    zero = np.zeros((d, d), dtype=complex)
    zero[0, 0] = 1.0
    return product_proof(circuits, zero, params, spec.answer_qubits)


def _check_circuits(spec: ProtocolSpec, circuits: list[Circuit], params: ReductionParameters) -> None:
    if params.m != spec.m:
        raise ReductionError(f"parameters are for m={params.m}, protocol has m={spec.m}")
    if len(circuits) != spec.m:
        raise ReductionError(f"expected {spec.m} round circuits, got {len(circuits)}")
    for i, c in enumerate(circuits, start=1):
        if c.width != params.q:
            raise ReductionError(f"circuit {i} has width {c.width}, expected {params.q} (P, A)")


# ---------------------------------------------------------------------------
# Verification steps
# ---------------------------------------------------------------------------

def replay_rounds(spec: ProtocolSpec, unitaries: Sequence[UnitaryMatrix | np.ndarray]) -> PureState:
    """State of (P, A, V) after the rounds and the last question, P on 2m qubits."""
    state = evolve_rounds(spec, 2 * spec.m, unitaries)[-1]
    return apply_unitary_on(state, spec.final_question, [WIRE, VERIFIER])


def perturb_unitary(u: UnitaryMatrix | np.ndarray, eta: float, seed) -> UnitaryMatrix:
    """``u exp(i theta H)`` with a random unit-norm Hermitian H and spectral distance exactly ``eta`` from u."""
    if not 0 <= eta <= 2:
        raise ReductionError("eta must lie in [0, 2]")
    mat = u.matrix if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
    rng = np.random.default_rng(seed)
    d = mat.shape[0]
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    vals, vecs = np.linalg.eigh((g + g.conj().T) / 2)
    vals = vals / np.max(np.abs(vals))
    theta = 2 * math.asin(eta / 2)
    rot = (vecs * np.exp(1j * theta * vals)) @ vecs.conj().T
    return UnitaryMatrix(mat @ rot)


def permute_pairs(rho: np.ndarray, perm: Sequence[int], pair_qubits: int) -> np.ndarray:
    """Conjugate by the pair permutation: new pair j is old pair ``perm[j]``."""
    order = [perm[j] * pair_qubits + t for j in range(len(perm)) for t in range(pair_qubits)]
    return permute_matrix_qubits(rho, order, len(perm) * pair_qubits)


def permute_and_discard(
    quantum_part: DensityOperator, params: ReductionParameters, seed, answer_qubits: int | None = None
) -> tuple[DensityOperator, tuple[int, ...]]:
    """Random pair permutation, then trace out everything past pair N+1."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pairs, kept = params.pairs, params.kept_pairs
    total = quantum_part.n_qubits
    if total % pairs:
        raise ReductionError(f"{total} qubits do not split into {pairs} pairs")
    pair_qubits = total // pairs
    out_qubits = pair_qubits - params.q if answer_qubits is None else answer_qubits
    if out_qubits < 0 or out_qubits + params.q != pair_qubits:
        raise ReductionError(f"pairs of {pair_qubits} qubits do not fit S = {params.q} qubits")
    perm = tuple(int(i) for i in rng.permutation(pairs))
    mat = permute_pairs(quantum_part.matrix, perm, pair_qubits)
    mat = reduce_matrix(mat, list(range(kept * pair_qubits)), total)
    return DensityOperator(mat, pair_layout(kept, out_qubits, params.q), check=False), perm


def averaged_input_marginal(kept: DensityOperator, q: int, first: int = 2) -> np.ndarray:
    """Mean of the S_i marginals for i = first..N+1."""
    labels = [n for n in kept.layout.names if n.startswith("S")][first - 1:]
    if not labels:
        raise ReductionError("no registers left for tomography")
    n = kept.n_qubits
    acc = np.zeros((2 ** q, 2 ** q), dtype=complex)
    for lab in labels:
        acc += reduce_matrix(kept.matrix, kept.layout.qubits(lab), n)
    return acc / len(labels)


@dataclass(frozen=True)
class VerdictReport:
    accept_probability: float
    branches: dict
    bounds: dict
    tomography_distance: float
    tomography_passed: bool
    postselect_success: float
    permutation: tuple[int, ...]
    seed: int

    def as_dict(self) -> dict:
        return {
            "accept_probability": self.accept_probability,
            "branches": dict(self.branches),
            "bounds": dict(self.bounds),
            "tomography_distance": self.tomography_distance,
            "tomography_passed": self.tomography_passed,
            "postselect_success": self.postselect_success,
            "permutation": list(self.permutation),
            "seed": self.seed,
        }

    def row(self) -> list:
        b = self.branches
        return [
            self.seed,
            repr(self.accept_probability),
            repr(b["tomography_reject"]),
            repr(b["postselect_fail"]),
            repr(b["final_accept"]),
            repr(b["final_reject"]),
            repr(self.tomography_distance),
        ]


VERDICT_CSV_HEADER = [
    "seed",
    "accept_probability",
    "tomography_reject",
    "postselect_fail",
    "final_accept",
    "final_reject",
    "tomography_distance",
]


def verify(spec: ProtocolSpec, proof: QmaProof, params: ReductionParameters, seed: int) -> VerdictReport:
    """Run the verifier once; only the tomography outcome is sampled.

    The permutation and the tomography counts come from two child streams
    of ``seed``.  Given the tomography outcome the remaining branch
    probabilities are computed exactly.
    """
    # classical part first: it is used up before any quantum step
    circuits = proof.circuits()
    _check_circuits(spec, circuits, params)
    if proof.answer_qubits != spec.answer_qubits:
        raise ReductionError("proof answer size does not match the protocol")
    check_cap(2 * spec.m + 1 + spec.verifier_qubits, "replay")
    psi = replay_rounds(spec, [circuit_to_unitary(c) for c in circuits])

    perm_ss, tomo_ss = np.random.SeedSequence(int(seed)).spawn(2)
    kept, perm = permute_and_discard(proof.quantum_part, params, np.random.default_rng(perm_ss), spec.answer_qubits)

    q = params.q
    marginal = averaged_input_marginal(kept, q)
    est = estimate_state(StateSampler(marginal, np.random.default_rng(tomo_ss)), q, params.tomography_copies)
    td = trace_distance(est.projected.matrix, np.eye(2 ** q) / 2 ** q)
    passed = td <= float(params.effective_delta) / 2

    pair_qubits = spec.answer_qubits + q
    choi = reduce_matrix(kept.matrix, list(range(pair_qubits)), kept.n_qubits)
    choi_state = DensityOperator(choi, RegisterLayout(("R", "S"), (spec.answer_qubits, q)), check=False)
    outcome = post_select_apply(choi_state, psi, [PROVER, WIRE], input_qubits=q, output_label=ANSWER, strict=False)
    p_success = outcome.success_probability
    if outcome.output_state is None:
        accept_given = 0.0
    else:
        accept_given = float(np.clip(np.trace(spec.accept_operator @ outcome.output_state.matrix).real, 0.0, 1.0))

    if passed:
        branches = {
            "tomography_reject": 0.0,
            "postselect_fail": 1.0 - p_success,
            "final_accept": p_success * accept_given,
            "final_reject": p_success * (1.0 - accept_given),
        }
    else:
        branches = {"tomography_reject": 1.0, "postselect_fail": 0.0, "final_accept": 0.0, "final_reject": 0.0}
    assert abs(sum(branches.values()) - 1.0) < TOL
    c_lb = completeness_lower_bound(params, spec.completeness)
    s_ub = soundness_upper_bound(params, spec.soundness)
    bounds = {
        "completeness_lb": float(c_lb),
        "soundness_ub": float(s_ub),
        "gap_lb": float(c_lb - s_ub),
        "gap_positive": c_lb > s_ub,
    }
    return VerdictReport(
        branches["final_accept"],
        branches,
        bounds,
        float(td),
        bool(passed),
        float(p_success),
        perm,
        int(seed),
    )
