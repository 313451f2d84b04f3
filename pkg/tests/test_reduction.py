import itertools
from fractions import Fraction

import numpy as np
import pytest

from oracles import embed_operator, loop_partial_trace
from qipsim.channels import identity_channel, random_channel
from qipsim.circuits import Circuit, parse_circuit
from qipsim.protocol import (
    discarding_prover,
    echo_prover,
    epr_echo_protocol,
    evolve_rounds,
    random_protocol,
    trivial_protocol,
    wire_channel,
)
from qipsim.qmath import DensityOperator, RegisterLayout, pure_trace_distance, random_density, random_unitary
from qipsim.reduction import (
    ReductionError,
    build_honest_proof,
    completeness_lower_bound,
    compute_params,
    definetti_bound,
    gap,
    pair_layout,
    permute_and_discard,
    permute_pairs,
    perturb_unitary,
    product_proof,
    replay_rounds,
    soundness_upper_bound,
    verify,
    zero_proof,
)

EPR = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def toy(m=0, N=3, k=2, delta="0.2"):
    return compute_params(m, 10, 64).with_toy(N=N, k=k, delta=delta)


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


# ---------------------------------------------------------------- parameters

def test_schedule_m0_g10():
    p = compute_params(0, 10, 64)
    assert p.q == 1
    assert p.eps == Fraction(1, 160)
    assert p.delta == Fraction(1, 102400)
    assert p.N == 2 ** 49 * 5 ** 6
    assert p.k == 2560 * (p.N + 1)


def test_schedule_against_independent_integer_formulas():
    # integer-only restatement: N = ceil(2^(10q) * 8 / delta^3), k = ceil(4^(q+1) (N+1) / eps)
    for m, g in [(0, 1), (0, 7), (1, 3), (2, 10)]:
        p = compute_params(m, g, 32)
        q = 2 * m + 1
        eps_den = 4 ** (q + 1) * g
        delta_den = 4 * eps_den ** 2
        N = -(-(2 ** (10 * q) * 8 * delta_den ** 3) // 1)
        k = -(-(4 ** (q + 1) * (p.N + 1) * eps_den) // 1)
        assert (p.eps, p.delta, p.N, p.k) == (Fraction(1, eps_den), Fraction(1, delta_den), N, k)


def test_eps_formula_q1_g1():
    assert compute_params(0, 1, 1).eps == Fraction(1, 16)


def test_schedule_ranges():
    for m in range(6):
        for g in (1, 2, 10, 1000, 10 ** 6):
            p = compute_params(m, g, 8)
            assert 0 < p.delta < p.eps < 1
            assert p.N > 0 and p.k > 0
            assert Fraction(4 * 4 ** p.q * (p.N + 1), p.N + p.k) <= p.eps


def test_schedule_domain():
    with pytest.raises(ReductionError):
        compute_params(-1, 10, 10)
    with pytest.raises(ReductionError):
        compute_params(0, 0, 10)


def test_toy_overrides():
    p = toy()
    assert (p.effective_N, p.effective_k, p.effective_delta) == (3, 2, Fraction(1, 5))
    assert abs(float(p.effective_eps) - 2 * np.sqrt(0.2)) < 1e-15
    assert p.tomography_copies == 1_024_000
    assert p.N == 2 ** 49 * 5 ** 6  # exact values untouched


# ---------------------------------------------------------------- de Finetti

def test_definetti_values():
    assert definetti_bound(2, 2, 64) == 0.5
    assert definetti_bound(2, 2, 16) == 2.0
    assert definetti_bound(2, 2, 128) == definetti_bound(2, 2, 64) / 2
    with pytest.raises(ReductionError):
        definetti_bound(2, 1, 10)
    with pytest.raises(ReductionError):
        definetti_bound(2, 10, 10)


# ---------------------------------------------------------------- bounds

def test_gap_example():
    p = compute_params(0, 10, 64)
    got = gap(p, Fraction(1, 2), Fraction(2, 5))
    assert got == Fraction(1, 40) - Fraction(3, 160) - Fraction(2, 2 ** 64)
    assert got > 0


def test_degenerate_gap():
    p = compute_params(0, 10, 64)
    assert gap(p, Fraction(1, 2), Fraction(1, 2)) <= 0


def test_gap_structure_in_eps():
    for g in (10, 10 ** 3, 10 ** 6):
        p = compute_params(0, g, 20)
        assert gap(p, 1, 0) + 3 * p.eps == Fraction(1, 4) - Fraction(2, 2 ** 20)
    assert completeness_lower_bound(p, 1) - soundness_upper_bound(p, 1) == -3 * p.eps - Fraction(2, 2 ** 20)


# ---------------------------------------------------------------- proofs

def test_identity_honest_proof_two_pairs():
    p = toy(N=0, k=2)
    proof = build_honest_proof(epr_echo_protocol(0), [], identity_channel(1), p)
    phi = np.outer(EPR, EPR)
    assert np.allclose(proof.quantum_part.matrix, np.kron(phi, phi))


def test_classical_part_round_trip():
    spec = epr_echo_protocol(1)
    p = compute_params(1, 10, 64).with_toy(N=1, k=1, delta="0.2")
    circ = parse_circuit("width 3\nH 0\nCNOT 0 2\nT 1\n")
    proof = build_honest_proof(spec, [circ], wire_channel(2), p)
    assert proof.circuits() == [circ]


def test_honest_marginals_equal_choi():
    ch = random_channel(1, 1, 3)
    proof = build_honest_proof(epr_echo_protocol(0), [], ch, toy(N=2, k=1))
    n = proof.quantum_part.n_qubits
    for i in range(3):
        marg = loop_partial_trace(proof.quantum_part.matrix, [2 * i, 2 * i + 1], n)
        assert np.max(np.abs(marg - ch.choi.matrix)) < 1e-12


def test_circuit_width_checked():
    with pytest.raises(ReductionError):
        build_honest_proof(epr_echo_protocol(1), [Circuit(2)], wire_channel(2), compute_params(1, 10, 8).with_toy(N=1, k=1))


# ---------------------------------------------------------------- permute and discard

def test_iid_input_stays_iid():
    ch = random_channel(1, 1, 4)
    p = toy()
    proof = build_honest_proof(epr_echo_protocol(0), [], ch, p)
    for seed in range(3):
        kept, _ = permute_and_discard(proof.quantum_part, p, seed)
        want = kron_all([ch.choi.matrix] * 4)
        assert np.max(np.abs(kept.matrix - want)) < 1e-12


def test_swap_on_product_state():
    lay = RegisterLayout.of(R=1, S=1)
    s1, s2 = random_density(lay, 1).matrix, random_density(lay, 2).matrix
    p = toy(N=0, k=2)
    rho = DensityOperator(np.kron(s1, s2), pair_layout(2, 1, 1))
    for seed in range(20):
        kept, perm = permute_and_discard(rho, p, seed)
        want = s2 if perm == (1, 0) else s1
        assert np.max(np.abs(kept.matrix - want)) < 1e-12
    swapped = permute_pairs(rho.matrix, (1, 0), 2)
    assert np.allclose(swapped, np.kron(s2, s1))


def test_full_symmetrization_over_s3():
    lay = RegisterLayout.of(R=1, S=1)
    sig = [random_density(lay, 10 + i).matrix for i in range(3)]
    rho = kron_all(sig)
    perms = list(itertools.permutations(range(3)))
    avg = sum(permute_pairs(rho, perm, 2) for perm in perms) / 6
    # oracle: sum of explicitly reordered products
    want = sum(kron_all([sig[perm[j]] for j in range(3)]) for perm in perms) / 6
    assert np.max(np.abs(avg - want)) < 1e-12
    for perm in perms:
        assert np.max(np.abs(permute_pairs(avg, perm, 2) - avg)) < 1e-12


def test_block_count_mismatch():
    rho = DensityOperator(np.eye(2 ** 5) / 2 ** 5, RegisterLayout.anonymous(5))
    with pytest.raises(ReductionError):
        permute_and_discard(rho, toy(N=1, k=1), 0)


# ---------------------------------------------------------------- verification

def full_system_acceptance(spec, proof, params, seed):
    """Oracle: explicit projector on the kept pairs plus the replayed (A, V) state."""
    kept, _ = permute_and_discard(proof.quantum_part, params, np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0]))
    psi = replay_rounds(spec, []).amplitudes  # (A, V) for m = 0
    n_kept = kept.n_qubits
    n = n_kept + 2
    big = np.kron(kept.matrix, np.outer(psi, psi.conj()))
    # project (S_1, A) onto the EPR state: qubits 1 and n_kept
    proj = embed_operator(np.outer(EPR, EPR), [1, n_kept], n)
    post = proj @ big @ proj
    t = post.reshape((2,) * (2 * n))
    keep = [0, n - 1]  # (R_1, V)
    # contract every other qubit
    traced = [q for q in range(n) if q not in keep]
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for q in traced:
        cols[q] = rows[q]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    unnorm = np.einsum("".join(rows) + "".join(cols) + "->" + out, t).reshape(4, 4)
    return float(np.trace(spec.accept_operator @ unnorm).real)


def test_epr_echo_honest_window_and_oracle():
    spec = epr_echo_protocol(0)
    p = toy()
    proof = build_honest_proof(spec, [], echo_prover().final_channel, p)
    lo = (1 - float(p.effective_delta) / 2) * 1 / 4 - 0.05
    for seed in range(5):
        rep = verify(spec, proof, p, seed)
        assert lo <= rep.accept_probability <= 0.25 + 1e-9
        if rep.tomography_passed:
            assert rep.accept_probability == pytest.approx(full_system_acceptance(spec, proof, p, seed), abs=1e-10)


def test_trivial_protocol_honest_bound():
    spec = trivial_protocol(0, verifier_qubits=1)
    p = toy()
    proof = build_honest_proof(spec, [], random_channel(1, 1, 5), p)
    for seed in range(5):
        rep = verify(spec, proof, p, seed)
        assert rep.accept_probability >= (1 - float(p.effective_delta) / 2) / 4 - 1e-9


def test_zero_proof_rejected():
    spec = epr_echo_protocol(0)
    p = toy()
    rep = verify(spec, zero_proof(spec, [], p), p, 3)
    assert rep.accept_probability == 0.0
    assert not rep.tomography_passed
    # the pair itself still post-selects with 1/4 against a maximally mixed input half
    assert rep.postselect_success == pytest.approx(0.25, abs=1e-12)


def test_branches_sum_and_determinism():
    spec = epr_echo_protocol(0)
    p = toy()
    proof = product_proof([], random_density(RegisterLayout.of(R=1, S=1), 6), p, 1)
    for seed in range(5):
        a, b = verify(spec, proof, p, seed), verify(spec, proof, p, seed)
        assert a == b
        assert abs(sum(a.branches.values()) - 1) < 1e-9
        assert 0 <= a.accept_probability <= 1


def test_far_marginal_fails_tomography():
    spec = epr_echo_protocol(0)
    p = toy()
    bad_s = np.diag([0.8, 0.2])  # trace distance 0.3 from I/2
    pair = np.kron(np.diag([1.0, 0.0]), bad_s)
    proof = product_proof([], pair, p, 1)
    passes = sum(verify(spec, proof, p, s).tomography_passed for s in range(20))
    assert passes / 20 <= float(p.effective_delta) / 2


def test_discarding_choi_is_below_soundness_bound():
    spec = epr_echo_protocol(0)
    p = toy()
    proof = build_honest_proof(spec, [], discarding_prover().final_channel, p)
    accs = [verify(spec, proof, p, s).accept_probability for s in range(5)]
    assert max(accs) <= spec.soundness / 4 + float(p.effective_eps) + 0.05
    assert np.mean(accs) == pytest.approx(0.125, abs=1e-9)


def test_three_input_qubit_round_trip():
    # m = 1: q = 3, honest echo with identity round circuit
    spec = epr_echo_protocol(1)
    p = compute_params(1, 10, 64).with_toy(N=1, k=1, delta="0.2")
    proof = build_honest_proof(spec, [Circuit(3)], wire_channel(2), p)
    rep = verify(spec, proof, p, 0)
    assert rep.tomography_passed
    assert rep.postselect_success == pytest.approx(1 / 64, abs=1e-12)
    assert rep.accept_probability == pytest.approx(1 / 64, abs=1e-12)


# ---------------------------------------------------------------- error accumulation

def test_perturbation_has_exact_spectral_distance():
    u = random_unitary(3, 1).matrix
    for eta in (1e-3, 1e-2, 0.5):
        v = perturb_unitary(u, eta, 2).matrix
        assert np.linalg.norm(u - v, 2) == pytest.approx(eta, rel=1e-9)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_error_accumulation(m):
    spec = random_protocol(m, 1, 1, 40 + m)
    rng = np.random.default_rng(m)
    honest = [random_unitary(2 * m + 1, rng) for _ in range(m)]
    exact = evolve_rounds(spec, 2 * m, honest)[-1].amplitudes
    for eta in (1e-3, 1e-2):
        noisy = [perturb_unitary(u, eta, 100 * m + i) for i, u in enumerate(honest)]
        approx = evolve_rounds(spec, 2 * m, noisy)[-1].amplitudes
        assert pure_trace_distance(exact, approx) <= m * eta + 1e-12
