"""Prover-space compression.

After round i the joint state of (P, A, V) is pure, and its Schmidt rank
across the cut (P | A V) is at most 4^i.  A unitary Y_i on P rotates the
Schmidt support onto the leading ceil(log2 rank) qubits, leaving the rest
of P in |0>.  The compressed prover plays

    U'_i = Y_i U_i Y_{i-1}^dag,     final channel Phi o Ad(Y_m^dag),

so the global state after every round differs from the original only by a
unitary on P, and the verifier sees exactly the same statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TOL
from .protocol import (
    PROVER,
    WIRE,
    ProtocolSpec,
    ProverStrategy,
    acceptance_probability,
    round_layout,
    run_rounds,
)
from .qmath import (
    PureState,
    UnitaryMatrix,
    apply_unitary_on,
    complete_basis,
    operator_on,
    reduce_matrix,
    schmidt_decomposition,
    zero_state,
)


class CompressionError(RuntimeError):
    """A Schmidt rank above the 4^i ceiling, or a broken certificate."""


def _first_nonzero(v: np.ndarray, tol: float = 1e-12) -> int:
    idx = np.flatnonzero(np.abs(v) > tol)
    return int(idx[0]) if idx.size else v.size


def compress_round(
    joint_state: PureState, round_index: int, prover_label: str = PROVER, tol: float = TOL
) -> tuple[UnitaryMatrix, PureState, np.ndarray]:
    """Compressing unitary Y on the prover register, the rotated state, and the Schmidt spectrum."""
    sd = schmidt_decomposition(joint_state, [prover_label])
    p = joint_state.layout.size(prover_label)
    coeffs = sd.coefficients
    rank = int(np.count_nonzero(coeffs > tol))
    if rank > 4 ** round_index:
        raise CompressionError(
            f"round {round_index}: Schmidt rank {rank} exceeds 4^{round_index}"
        )
    # deterministic ordering: coefficient descending, then first nonzero index
    vecs = [sd.left[:, j] for j in range(rank)]
    order = sorted(range(rank), key=lambda j: (-round(float(coeffs[j]), 12), _first_nonzero(vecs[j])))
    support = []
    for j in order:
        v = vecs[j]
        piv = v[_first_nonzero(v)] if _first_nonzero(v) < v.size else 1.0
        support.append(v * (abs(piv) / piv))
    live = min(p, math.ceil(math.log2(rank))) if rank > 1 else 0
    d = 2 ** p
    stride = 2 ** (p - live)
    slots = [j * stride for j in range(rank)]
    rest = [i for i in range(d) if i not in set(slots)]
    basis = complete_basis(np.column_stack(support) if support else np.zeros((d, 0), dtype=complex))
    targets = np.zeros((d, d), dtype=complex)
    targets[slots + rest, np.arange(d)] = 1.0
    y = UnitaryMatrix(targets @ basis.conj().T)
    compressed = apply_unitary_on(joint_state, y, [prover_label])
    return y, compressed, coeffs


@dataclass(frozen=True, eq=False)
class CompressedProver:
    strategy: ProverStrategy
    support_bound_per_round: tuple[int, ...]
    certificates: tuple[np.ndarray, ...]
    compressing_unitaries: tuple[UnitaryMatrix, ...]
    round_inputs: tuple[PureState, ...]

    def support_ranks(self, tol: float = TOL) -> list[int]:
        return [int(np.count_nonzero(c > tol)) for c in self.certificates]

    def support_qubits(self, tol: float = TOL) -> list[int]:
        return [math.ceil(math.log2(r)) if r > 1 else 0 for r in self.support_ranks(tol)]


def _with_wire(u: np.ndarray) -> np.ndarray:
    return np.kron(u, np.eye(2))


def compress_prover(spec: ProtocolSpec, prover: ProverStrategy) -> CompressedProver:
    """Equivalent prover keeping at most 2i live qubits after round i."""
    run_rounds(spec, prover)  # validates sizes and the cap
    p = prover.prover_qubits
    state = zero_state(round_layout(spec, p))
    y_prev = np.eye(2 ** p, dtype=complex)
    new_us, ys, certs, inputs = [], [], [], []
    for i, (w, u) in enumerate(zip(spec.verifier_unitaries, prover.round_unitaries), start=1):
        state = apply_unitary_on(state, w, [WIRE, "V"])
        inputs.append(state)
        raw = u.matrix @ _with_wire(y_prev.conj().T)
        state = apply_unitary_on(state, raw, [PROVER, WIRE])
        y, state, coeffs = compress_round(state, i)
        new_us.append(UnitaryMatrix(_with_wire(y.matrix) @ raw))
        ys.append(y)
        certs.append(coeffs)
        y_prev = y.matrix
    final = prover.final_channel.precompose(_with_wire(y_prev.conj().T))
    strategy = ProverStrategy(p, tuple(new_us), final, name=f"{prover.name}-compressed")
    return CompressedProver(
        strategy,
        tuple(2 * i for i in range(1, spec.m + 1)),
        tuple(certs),
        tuple(ys),
        tuple(inputs),
    )


def _polar_isometry(a: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(a, full_matrices=False)
    return u @ vh


#: Eigenvalues of a round's input state below this are treated as numerical noise.
SUPPORT_EIGENVALUE_TOL = 1e-13


def _support(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    keep = vals > SUPPORT_EIGENVALUE_TOL
    return vals[keep][::-1], vecs[:, keep][:, ::-1]


def truncate_prover_space(compressed: CompressedProver, m: int | None = None) -> ProverStrategy:
    """Restrict a compressed prover to exactly 2m prover qubits.

    Each round unitary is replaced by one on (2m prover qubits, A) that agrees
    with the compressed unitary on the support of that round's input; the
    final channel is restricted to inputs whose dropped qubits are |0>.
    Provers with fewer than 2m qubits are padded with idle qubits.
    """
    strat = compressed.strategy
    m = strat.m if m is None else m
    if m != strat.m:
        raise CompressionError(f"prover plays {strat.m} rounds, asked to truncate for m={m}")
    keep = 2 * m
    p = strat.prover_qubits
    for i, (cert, bound) in enumerate(zip(compressed.certificates, compressed.support_bound_per_round), start=1):
        if int(np.count_nonzero(cert > TOL)) > 2 ** bound:
            raise CompressionError(f"round {i}: certificate exceeds the {bound}-qubit bound")
    if p <= keep:
        return pad_prover(strat, keep - p)
    drop = p - keep
    n_pa = p + 1
    new_us = []
    for i, (u, inp) in enumerate(zip(strat.round_unitaries, compressed.round_inputs), start=1):
        n = inp.layout.total
        rho_pa = reduce_matrix(inp.density().matrix, list(range(n_pa)), n)
        t = rho_pa.reshape(2 ** keep, 2 ** drop, 2, 2 ** keep, 2 ** drop, 2)
        leak = 1.0 - float(np.trace(t[:, 0, :, :, 0, :].reshape(2 ** (keep + 1), -1)).real)
        if leak > TOL:
            raise CompressionError(f"round {i}: dropped prover qubits are not |0> (weight {leak:.3e})")
        head_rho = t[:, 0, :, :, 0, :].reshape(2 ** (keep + 1), 2 ** (keep + 1))
        weights, s_in = _support(head_rho)
        r = s_in.shape[1]
        embed = np.zeros((2 ** keep, 2 ** drop, 2, r), dtype=complex)
        embed[:, 0, :, :] = s_in.reshape(2 ** keep, 2, r)
        image = (u.matrix @ embed.reshape(2 ** n_pa, r)).reshape(2 ** keep, 2 ** drop, 2, r)
        tail_weight = np.sum(np.abs(image[:, 1:, :, :]) ** 2, axis=(0, 1, 2))
        if float(weights @ tail_weight) > TOL:
            raise CompressionError(f"round {i}: compressed unitary leaves the {keep}-qubit space")
        img = _polar_isometry(image[:, 0, :, :].reshape(2 ** (keep + 1), r))
        src = complete_basis(s_in)
        dst = complete_basis(img)
        new_us.append(UnitaryMatrix(dst @ src.conj().T))
    perm = operator_on_permutation(p, keep)
    final = strat.final_channel.precompose(perm).restrict_input(keep + 1)
    return ProverStrategy(keep, tuple(new_us), final, name=f"{strat.name}-truncated")


def operator_on_permutation(p: int, keep: int) -> np.ndarray:
    """Unitary taking (P_head, A, P_tail) ordering to (P_head, P_tail, A)."""
    n = p + 1
    order = list(range(keep)) + [p] + list(range(keep, p))  # new position j holds old qubit order[j]
    d = 2 ** n
    perm = np.zeros((d, d), dtype=complex)
    for idx in range(d):
        bits = [(idx >> (n - 1 - j)) & 1 for j in range(n)]  # bits in new ordering
        old = [0] * n
        for j, q in enumerate(order):
            old[q] = bits[j]
        perm[int("".join(map(str, old)), 2), idx] = 1.0
    return perm


def pad_prover(strategy: ProverStrategy, extra: int) -> ProverStrategy:
    """Same strategy on ``extra`` more prover qubits that are never touched."""
    if extra == 0:
        return strategy
    p = strategy.prover_qubits
    n = p + extra + 1
    targets = list(range(p)) + [n - 1]
    us = tuple(UnitaryMatrix(operator_on(u.matrix, targets, n), check=False) for u in strategy.round_unitaries)
    final = strategy.final_channel.pad_input(extra, p)
    return ProverStrategy(p + extra, us, final, name=strategy.name)


def compression_report(spec: ProtocolSpec, prover: ProverStrategy, compressed: CompressedProver | None = None) -> dict:
    compressed = compressed or compress_prover(spec, prover)
    before = acceptance_probability(spec, prover)
    after = acceptance_probability(spec, compressed.strategy)
    truncated = truncate_prover_space(compressed)
    rounds = []
    for i, cert in enumerate(compressed.certificates, start=1):
        rank = int(np.count_nonzero(cert > TOL))
        rounds.append({
            "round": i,
            "schmidt_coefficients": [float(c) for c in cert],
            "schmidt_rank": rank,
            "support_qubits": math.ceil(math.log2(rank)) if rank > 1 else 0,
            "support_bound": 2 * i,
        })
    return {
        "m": spec.m,
        "prover_qubits": prover.prover_qubits,
        "rounds": rounds,
        "acceptance_before": before,
        "acceptance_after": after,
        "acceptance_truncated": acceptance_probability(spec, truncated),
        "truncated_prover_qubits": truncated.prover_qubits,
    }
