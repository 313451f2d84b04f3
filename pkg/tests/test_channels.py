import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import choi_by_definition, kraus_apply, loop_partial_trace, stinespring_kraus
from qipsim.channels import (
    ChannelError,
    DegenerateProofError,
    QuantumChannel,
    apply_channel,
    channel_of_choi,
    choi_layout,
    choi_of_channel,
    choi_of_stinespring,
    choi_of_unitary,
    depolarizing_channel,
    identity_channel,
    post_select_apply,
    random_channel,
    stinespring_apply,
)
from qipsim.qmath import (
    DensityOperator,
    RegisterLayout,
    basis_state,
    bell_state,
    random_density,
    random_pure_state,
    random_unitary,
    trace_distance,
)


def epr(k):
    d = 2 ** k
    v = np.zeros(d * d, dtype=complex)
    for x in range(d):
        v[x * d + x] = 1.0
    return v / np.sqrt(d)


def postselect_oracle(choi: np.ndarray, sigma: np.ndarray, k: int, l: int):
    """Project (S, X) of choi (x) sigma onto the EPR state by building the full operator."""
    big = np.kron(choi, sigma)
    proj = np.kron(np.eye(2 ** l), np.outer(epr(k), epr(k).conj()))
    n = l + 2 * k
    unnorm = loop_partial_trace(proj @ big @ proj, list(range(l)), n)
    p = np.trace(unnorm).real
    return p, unnorm / p


# ---------------------------------------------------------------- Choi states

def test_identity_choi_is_epr():
    assert np.allclose(identity_channel(1).choi.matrix, np.outer(epr(1), epr(1)))


def test_depolarizing_choi():
    ch = choi_of_channel(lambda x: np.trace(x) * np.eye(2) / 2, 1, 1)
    assert np.allclose(ch.choi.matrix, np.eye(4) / 4)


@pytest.mark.parametrize("seed", range(3))
def test_unitary_choi_two_constructions(seed):
    u = random_unitary(2, seed).matrix
    via_dilation = choi_of_unitary(u).choi.matrix
    via_sum = choi_by_definition(lambda x: u @ x @ u.conj().T, 2)
    want = np.kron(u, np.eye(4)) @ np.outer(epr(2), epr(2).conj()) @ np.kron(u, np.eye(4)).conj().T
    assert np.max(np.abs(via_dilation - via_sum)) < 1e-12
    assert np.max(np.abs(via_dilation - want)) < 1e-12


@pytest.mark.parametrize("k,l,env", [(1, 1, 1), (2, 1, 2), (1, 2, 0), (2, 2, 1)])
def test_stinespring_choi_matches_kraus_sum(k, l, env):
    n = max(l + env, k)
    v = random_unitary(n, k * 10 + l + env).matrix
    kraus = stinespring_kraus(v, k, l)
    want = choi_by_definition(lambda x: kraus_apply(kraus, x), k)
    got = choi_of_stinespring(v, k, l).choi.matrix
    assert np.max(np.abs(got - want)) < 1e-12


def test_non_tp_choi_rejected():
    bad = DensityOperator(np.diag([1.0, 0, 0, 0]), choi_layout(1, 1))
    with pytest.raises(ChannelError):
        QuantumChannel(1, 1, bad)


# ---------------------------------------------------------------- application

def test_identity_channel_action():
    rho = random_density(RegisterLayout.of(A=1), 1)
    out = apply_channel(identity_channel(1), rho)
    assert np.allclose(out.matrix, rho.matrix)


def test_depolarizing_action():
    psi = random_pure_state(RegisterLayout.of(A=2), 2)
    assert np.allclose(apply_channel(depolarizing_channel(2), psi).matrix, np.eye(4) / 4)


@pytest.mark.parametrize("seed", range(4))
def test_channel_on_bell_half_matches_dilation(seed):
    v = random_unitary(2, seed).matrix
    ch = choi_of_stinespring(v, 1, 1)
    bell = bell_state(RegisterLayout.of(A=1, B=1))
    got = apply_channel(ch, bell, ["A"]).matrix  # (output | B)
    # oracle: explicit environment, acting on qubit 0 of (A, B)
    full_v = np.kron(v, np.eye(2))  # (A, env, B)
    vec = np.zeros(8, dtype=complex)
    vec[0b000] = vec[0b101] = 1 / np.sqrt(2)  # A=x, env=0, B=x
    out = full_v @ vec
    want = loop_partial_trace(np.outer(out, out.conj()), [0, 2], 3)
    assert np.max(np.abs(got - want)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
def test_channel_linearity(seed, alpha):
    ch = random_channel(1, 2, seed)
    lay = RegisterLayout.of(A=1)
    r1, r2 = random_density(lay, seed + 1), random_density(lay, seed + 2)
    mix = DensityOperator(alpha * r1.matrix + (1 - alpha) * r2.matrix, lay)
    lhs = apply_channel(ch, mix).matrix
    rhs = alpha * apply_channel(ch, r1).matrix + (1 - alpha) * apply_channel(ch, r2).matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_choi_round_trip_on_basis_inputs():
    u = random_unitary(2, 5).matrix
    fn = lambda x: stinespring_apply(u, x, 1, 1)  # noqa: E731
    back = channel_of_choi(choi_of_channel(fn, 1, 1))
    for x in range(2):
        for y in range(2):
            e = np.zeros((2, 2), dtype=complex)
            e[x, y] = 1
            assert np.max(np.abs(back(e) - fn(e))) < 1e-9


# ---------------------------------------------------------------- post-selection

def test_postselect_identity_choi():
    rho = random_density(RegisterLayout.of(X=1), 3)
    res = post_select_apply(identity_channel(1), rho)
    assert res.success_probability == pytest.approx(0.25, abs=1e-12)
    assert trace_distance(res.output_state.matrix, rho.matrix) < 1e-12


def test_postselect_two_qubit_success():
    ch = random_channel(2, 1, 4)
    rho = random_density(RegisterLayout.of(X=2), 5)
    assert post_select_apply(ch, rho).success_probability == pytest.approx(1 / 16, abs=1e-12)


def test_postselect_degenerate_proof():
    choi = DensityOperator(np.diag([1.0, 0, 0, 0]), RegisterLayout.of(R=1, S=1))
    sigma = basis_state("1", RegisterLayout.of(X=1))
    with pytest.raises(DegenerateProofError):
        post_select_apply(choi, sigma)
    res = post_select_apply(choi, sigma, strict=False)
    assert res.success_probability == 0.0 and res.output_state is None


@pytest.mark.parametrize("seed", range(6))
def test_postselect_matches_full_projection_oracle(seed):
    rng = np.random.default_rng(seed)
    k, l = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    ch = random_channel(k, l, rng)
    rho = random_density(RegisterLayout.of(X=k), rng)
    p, want = postselect_oracle(ch.choi.matrix, rho.matrix, k, l)
    res = post_select_apply(ch, rho)
    assert res.success_probability == pytest.approx(p, abs=1e-12)
    assert np.max(np.abs(res.output_state.matrix - want)) < 1e-10


def test_postselect_non_choi_input_oracle():
    # adversarial "Choi" state: arbitrary density on (R, S)
    bad = random_density(RegisterLayout.of(R=1, S=1), 11)
    rho = random_density(RegisterLayout.of(X=1), 12)
    p, want = postselect_oracle(bad.matrix, rho.matrix, 1, 1)
    res = post_select_apply(bad, rho, input_qubits=1)
    assert res.success_probability == pytest.approx(p, abs=1e-12)
    assert np.max(np.abs(res.output_state.matrix - want)) < 1e-10


def test_postselect_with_reference_register():
    ch = random_channel(1, 1, 21)
    bell = bell_state(RegisterLayout.of(A=1, B=1))
    res = post_select_apply(ch, bell, ["A"])
    direct = apply_channel(ch, bell, ["A"])
    assert res.success_probability == pytest.approx(0.25, abs=1e-12)
    assert res.output_state.layout.names == direct.layout.names
    assert trace_distance(res.output_state.matrix, direct.matrix) < 1e-10


# ---------------------------------------------------------------- random channels

def test_random_channel_deterministic():
    a, b = random_channel(2, 1, 99), random_channel(2, 1, 99)
    assert np.array_equal(a.choi.matrix, b.choi.matrix)


def test_random_unitary_channel_without_environment():
    ch = random_channel(2, 2, 3, env_qubits=0)
    vals = np.linalg.eigvalsh(ch.choi.matrix)
    assert vals[-1] == pytest.approx(1.0, abs=1e-10)  # pure Choi state


def test_channel_restrictions():
    ch = random_channel(2, 1, 7)
    rho = random_density(RegisterLayout.of(X=1), 8)
    zero = np.diag([1.0, 0.0])
    # dropping a qubit fixed at |0> changes nothing
    assert np.allclose(ch.restrict_input(1)(rho.matrix), ch(np.kron(rho.matrix, zero)))
    # padding ignores the new qubit
    padded = ch.pad_input(1, 1)
    other = random_density(RegisterLayout.of(Y=1), 9).matrix
    assert np.allclose(padded(np.kron(rho.matrix, np.kron(other, zero))), ch(np.kron(rho.matrix, zero)))


def test_precompose():
    ch = random_channel(1, 1, 12)
    u = random_unitary(1, 13).matrix
    rho = random_density(RegisterLayout.of(X=1), 14).matrix
    assert np.allclose(ch.precompose(u)(rho), ch(u @ rho @ u.conj().T))
