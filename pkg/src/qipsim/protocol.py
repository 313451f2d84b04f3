"""Short-interaction proof systems: m one-qubit rounds, then one long answer.

Registers::

    P  prover private space           (prover_qubits)
    A  one-qubit message wire         (holds A_{i-1}, then Q_i, then A_i)
    V  verifier private space         (verifier_qubits)
    F  final answer A_{m+1}           (answer_qubits)

Round i: the verifier applies W_i to (A, V); the prover applies U_i to
(P, A).  After round m the verifier applies ``final_question`` to (A, V),
sends A as Q_{m+1}, the prover's final channel maps (P, A) to F, and the
verifier measures ``accept_operator`` on (F, V).  Everything starts in
|0...0>.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import QuantumChannel, apply_channel, choi_of_channel, random_channel
from .config import TOL, check_cap
from .qmath import (
    DensityOperator,
    PureState,
    RegisterLayout,
    SeedLike,
    UnitaryMatrix,
    apply_unitary_on,
    as_generator,
    random_unitary,
    zero_state,
)

PROVER, WIRE, VERIFIER, ANSWER = "P", "A", "V", "F"


class ProtocolError(ValueError):
    """Inconsistent protocol or prover description."""


def _as_unitary(u) -> UnitaryMatrix:
    return u if isinstance(u, UnitaryMatrix) else UnitaryMatrix(np.asarray(u, dtype=complex))


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    m: int
    verifier_qubits: int
    answer_qubits: int
    verifier_unitaries: tuple[UnitaryMatrix, ...]
    accept_operator: np.ndarray
    final_question: UnitaryMatrix | None = None
    completeness: float = 1.0
    soundness: float = 0.0
    name: str = "protocol"

    def __post_init__(self):
        if self.m < 0:
            raise ProtocolError("round count must be nonnegative")
        if self.answer_qubits < 1:
            raise ProtocolError("final answer needs at least one qubit")
        if self.verifier_qubits < 0:
            raise ProtocolError("verifier register size must be nonnegative")
        ws = tuple(_as_unitary(w) for w in self.verifier_unitaries)
        if len(ws) != self.m:
            raise ProtocolError(f"expected {self.m} verifier unitaries, got {len(ws)}")
        arity = 1 + self.verifier_qubits
        for i, w in enumerate(ws, start=1):
            if w.arity != arity:
                raise ProtocolError(f"W_{i} acts on {w.arity} qubits, expected {arity} (A, V)")
        object.__setattr__(self, "verifier_unitaries", ws)
        fq = UnitaryMatrix.identity(arity) if self.final_question is None else _as_unitary(self.final_question)
        if fq.arity != arity:
            raise ProtocolError(f"final question acts on {fq.arity} qubits, expected {arity}")
        object.__setattr__(self, "final_question", fq)
        acc = np.asarray(self.accept_operator, dtype=complex)
        d = 2 ** (self.answer_qubits + self.verifier_qubits)
        if acc.shape != (d, d):
            raise ProtocolError(f"accept operator must be {d}x{d} on (F, V)")
        if np.max(np.abs(acc - acc.conj().T)) > TOL:
            raise ProtocolError("accept operator is not Hermitian")
        vals = np.linalg.eigvalsh((acc + acc.conj().T) / 2)
        if vals[0] < -TOL or vals[-1] > 1 + TOL:
            raise ProtocolError("accept operator must satisfy 0 <= Pi <= I")
        acc = acc.copy()
        acc.setflags(write=False)
        object.__setattr__(self, "accept_operator", acc)
        if not (0.0 <= self.soundness < self.completeness <= 1.0):
            raise ProtocolError("need 0 <= s < c <= 1")


@dataclass(frozen=True, eq=False)
class ProverStrategy:
    prover_qubits: int
    round_unitaries: tuple[UnitaryMatrix, ...]
    final_channel: QuantumChannel
    name: str = "prover"

    def __post_init__(self):
        if self.prover_qubits < 0:
            raise ProtocolError("prover register size must be nonnegative")
        us = tuple(_as_unitary(u) for u in self.round_unitaries)
        for i, u in enumerate(us, start=1):
            if u.arity != self.prover_qubits + 1:
                raise ProtocolError(f"U_{i} acts on {u.arity} qubits, expected {self.prover_qubits + 1} (P, A)")
        object.__setattr__(self, "round_unitaries", us)
        if self.final_channel.input_qubits != self.prover_qubits + 1:
            raise ProtocolError("final channel must take (P, A) as input")

    @property
    def m(self) -> int:
        return len(self.round_unitaries)


@dataclass(frozen=True, eq=False)
class Transcript:
    round_states: tuple[PureState, ...]
    final_state: DensityOperator
    acceptance_probability: float


def _check_pair(spec: ProtocolSpec, prover: ProverStrategy) -> None:
    if prover.m != spec.m:
        raise ProtocolError(f"prover plays {prover.m} rounds, protocol has {spec.m}")
    if prover.final_channel.output_qubits != spec.answer_qubits:
        raise ProtocolError(
            f"prover answers with {prover.final_channel.output_qubits} qubits, protocol expects {spec.answer_qubits}"
        )


def build_layout(spec: ProtocolSpec, prover: ProverStrategy, labels: dict[str, str] | None = None) -> RegisterLayout:
    """Full register layout (P, A, V, F); ``labels`` renames the blocks."""
    labels = labels or {}
    names = tuple(labels.get(n, n) for n in (PROVER, WIRE, VERIFIER, ANSWER))
    layout = RegisterLayout(names, (prover.prover_qubits, 1, spec.verifier_qubits, spec.answer_qubits))
    check_cap(layout.total, "protocol layout")
    return layout


def round_layout(spec: ProtocolSpec, prover_qubits: int) -> RegisterLayout:
    return RegisterLayout((PROVER, WIRE, VERIFIER), (prover_qubits, 1, spec.verifier_qubits))


def run_rounds(spec: ProtocolSpec, prover: ProverStrategy) -> tuple[PureState, ...]:
    """Joint pure states of (P, A, V) before round 1 and after each round."""
    _check_pair(spec, prover)
    build_layout(spec, prover)
    return evolve_rounds(spec, prover.prover_qubits, prover.round_unitaries)


def evolve_rounds(spec: ProtocolSpec, prover_qubits: int, unitaries: Sequence) -> tuple[PureState, ...]:
    layout = round_layout(spec, prover_qubits)
    check_cap(layout.total)
    state = zero_state(layout)
    states = [state]
    for w, u in zip(spec.verifier_unitaries, unitaries):
        state = apply_unitary_on(state, w, [WIRE, VERIFIER])
        state = apply_unitary_on(state, u, [PROVER, WIRE])
        states.append(state)
    return tuple(states)


def finish(spec: ProtocolSpec, state: PureState | DensityOperator, final_channel: QuantumChannel) -> DensityOperator:
    """Send the last question, apply the prover's channel; returns the (F, V) state."""
    state = apply_unitary_on(state, spec.final_question, [WIRE, VERIFIER])
    return apply_channel(final_channel, state, [PROVER, WIRE], output_label=ANSWER)


def accept_probability_of(spec: ProtocolSpec, final_state: DensityOperator) -> float:
    p = float(np.trace(spec.accept_operator @ final_state.matrix).real)
    return min(1.0, max(0.0, p))


def run_protocol(spec: ProtocolSpec, prover: ProverStrategy) -> Transcript:
    states = run_rounds(spec, prover)
    final = finish(spec, states[-1], prover.final_channel)
    return Transcript(states, final, accept_probability_of(spec, final))


def acceptance_probability(spec: ProtocolSpec, prover: ProverStrategy) -> float:
    return run_protocol(spec, prover).acceptance_probability


# ---------------------------------------------------------------------------
# Reference protocols and random families
# ---------------------------------------------------------------------------

def _bell_projector() -> np.ndarray:
    v = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return np.outer(v, v.conj())


def _even_parity_projector() -> np.ndarray:
    return np.diag([1, 0, 0, 1]).astype(complex)


def _bell_prep_on_wire_and_verifier() -> np.ndarray:
    # (A, V): H on V, then CNOT V -> A
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    cnot_va = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    return cnot_va @ np.kron(np.eye(2), h)


def epr_echo_protocol(m: int = 0, test: str = "parity") -> ProtocolSpec:
    """Verifier keeps half of an EPR pair, sends the other half, tests the reply.

    The pair is created in round 1 (or by the final question when m = 0);
    every other verifier step is the identity.  ``test="parity"`` accepts on
    even Z-parity of (F, V), so an echo prover always passes and a prover
    answering a fixed basis state passes half the time.  ``test="bell"``
    projects onto the EPR state instead (a fixed answer then passes 1/4).
    """
    if test not in ("parity", "bell"):
        raise ProtocolError(f"unknown echo test {test!r}")
    prep = _bell_prep_on_wire_and_verifier()
    ws = [np.eye(4) for _ in range(m)]
    if m:
        ws[0] = prep
    return ProtocolSpec(
        m=m,
        verifier_qubits=1,
        answer_qubits=1,
        verifier_unitaries=tuple(UnitaryMatrix(w) for w in ws),
        accept_operator=_even_parity_projector() if test == "parity" else _bell_projector(),
        final_question=None if m else UnitaryMatrix(prep),
        completeness=1.0,
        soundness=0.5 if test == "parity" else 0.25,
        name=f"epr_echo_m{m}_{test}",
    )


def wire_channel(prover_qubits: int, replace_with: np.ndarray | None = None) -> QuantumChannel:
    """Final channel on (P, A) that outputs A (or a fixed state) and discards P."""
    p = prover_qubits

    def fn(x: np.ndarray) -> np.ndarray:
        t = x.reshape(2 ** p, 2, 2 ** p, 2)
        out = np.einsum("iaib->ab", t)
        if replace_with is not None:
            return np.trace(out) * np.asarray(replace_with, dtype=complex)
        return out

    return choi_of_channel(fn, p + 1, 1)


def echo_prover(m: int = 0, prover_qubits: int = 0) -> ProverStrategy:
    """Returns every question unchanged and echoes the final question."""
    us = tuple(UnitaryMatrix.identity(prover_qubits + 1) for _ in range(m))
    return ProverStrategy(prover_qubits, us, wire_channel(prover_qubits), name="echo")


def discarding_prover(m: int = 0, prover_qubits: int = 0) -> ProverStrategy:
    """Answers the final question with |0>, ignoring it."""
    us = tuple(UnitaryMatrix.identity(prover_qubits + 1) for _ in range(m))
    zero = np.array([[1, 0], [0, 0]], dtype=complex)
    return ProverStrategy(prover_qubits, us, wire_channel(prover_qubits, zero), name="discard")


def trivial_protocol(m: int = 0, verifier_qubits: int = 1, answer_qubits: int = 1, accept: float = 1.0) -> ProtocolSpec:
    """Accept operator ``accept * I``; accept=1 always accepts, 0 never does."""
    d = 2 ** (verifier_qubits + answer_qubits)
    return ProtocolSpec(
        m=m,
        verifier_qubits=verifier_qubits,
        answer_qubits=answer_qubits,
        verifier_unitaries=tuple(UnitaryMatrix.identity(1 + verifier_qubits) for _ in range(m)),
        accept_operator=accept * np.eye(d),
        name="trivial",
    )


def random_protocol(m: int, verifier_qubits: int, answer_qubits: int, seed: SeedLike) -> ProtocolSpec:
    """Haar-random W_i and a random accept operator 0 <= Pi <= I."""
    rng = as_generator(seed)
    arity = 1 + verifier_qubits
    ws = tuple(random_unitary(arity, rng) for _ in range(m))
    fq = random_unitary(arity, rng)
    d = 2 ** (answer_qubits + verifier_qubits)
    basis = random_unitary(answer_qubits + verifier_qubits, rng).matrix
    weights = rng.random(d)
    acc = (basis * weights) @ basis.conj().T
    return ProtocolSpec(m, verifier_qubits, answer_qubits, ws, (acc + acc.conj().T) / 2, fq, name="random")


def random_prover(spec: ProtocolSpec, prover_qubits: int, seed: SeedLike, env_qubits: int | None = None) -> ProverStrategy:
    rng = as_generator(seed)
    us = tuple(random_unitary(prover_qubits + 1, rng) for _ in range(spec.m))
    ch = random_channel(prover_qubits + 1, spec.answer_qubits, rng, env_qubits=env_qubits)
    return ProverStrategy(prover_qubits, us, ch, name="random")
