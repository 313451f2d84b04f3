"""Channels stored as normalized Choi states, and post-selected application.

The Choi state of a channel from ``k`` input qubits to ``l`` output qubits
is laid out as (output ``R`` | input ``S``)::

    rho = 2^-k * sum_{x,y} Phi(|x><y|) (x) |x><y|

Given ``rho`` and an input ``sigma``, projecting the input half of ``rho``
together with ``sigma`` onto the maximally entangled state leaves
``Phi(sigma)`` on ``R``; for a genuine Choi state this succeeds with
probability ``4^-k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .config import TOL, check_cap
from .qmath import (
    DensityOperator,
    PureState,
    RegisterLayout,
    SeedLike,
    StateError,
    UnitaryMatrix,
    apply_to_vector,
    permute_matrix_qubits,
    random_unitary,
    reduce_matrix,
    to_density,
)

OUT, IN = "R", "S"


class ChannelError(ValueError):
    """Input does not describe a trace-preserving channel."""


class DegenerateProofError(ValueError):
    """Post-selection succeeds with (numerically) zero probability."""


#: Post-selection below this success probability has no conditioned state.
MIN_SUCCESS = 1e-12


def choi_layout(k: int, l: int) -> RegisterLayout:
    return RegisterLayout((OUT, IN), (l, k))


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    input_qubits: int
    output_qubits: int
    choi: DensityOperator

    def __post_init__(self):
        k, l = self.input_qubits, self.output_qubits
        if self.choi.n_qubits != k + l:
            raise ChannelError(f"Choi state has {self.choi.n_qubits} qubits, expected {k + l}")
        if self.choi.layout != choi_layout(k, l):
            object.__setattr__(self, "choi", self.choi.relabel(choi_layout(k, l)))
        err = tp_violation(self.choi.matrix, k, l)
        if err > TOL:
            raise ChannelError(f"input marginal of Choi state is not maximally mixed (error {err:.3e})")

    def __call__(self, sigma: np.ndarray) -> np.ndarray:
        return _contract(self.choi.matrix, np.asarray(sigma, dtype=complex), self.input_qubits,
                         self.output_qubits, 0) * 4 ** self.input_qubits

    def precompose(self, u: UnitaryMatrix | np.ndarray) -> "QuantumChannel":
        """Channel ``sigma -> Phi(u sigma u^dag)``."""
        m = u.matrix if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
        l = self.output_qubits
        full = np.kron(np.eye(2 ** l), m.T)
        new = full @ self.choi.matrix @ full.conj().T
        return QuantumChannel(self.input_qubits, l, DensityOperator(new, self.choi.layout, check=False))

    def restrict_input(self, keep: int) -> "QuantumChannel":
        """Restrict to inputs whose trailing ``k - keep`` qubits are |0>."""
        k, l = self.input_qubits, self.output_qubits
        drop = k - keep
        if not 0 <= drop <= k:
            raise ChannelError("cannot restrict to more inputs than the channel has")
        t = self.choi.matrix.reshape(2 ** l, 2 ** keep, 2 ** drop, 2 ** l, 2 ** keep, 2 ** drop)
        block = t[:, :, 0, :, :, 0].reshape(2 ** (l + keep), 2 ** (l + keep)) * 2 ** drop
        return QuantumChannel(keep, l, DensityOperator(block, choi_layout(keep, l), check=False))

    def pad_input(self, extra: int, position: int) -> "QuantumChannel":
        """Channel that ignores ``extra`` new input qubits inserted at ``position``.

        The new qubits are traced out before the original channel acts.
        """
        k, l = self.input_qubits, self.output_qubits
        if not 0 <= position <= k:
            raise ChannelError("insertion point outside the input register")
        t = self.choi.matrix.reshape(2 ** l, 2 ** position, 2 ** (k - position),
                                     2 ** l, 2 ** position, 2 ** (k - position))
        e = np.eye(2 ** extra, dtype=complex) / 2 ** extra
        new = np.einsum("abcdef,xy->abxcdeyf", t, e)
        d = 2 ** (l + k + extra)
        return QuantumChannel(k + extra, l, DensityOperator(new.reshape(d, d), choi_layout(k + extra, l), check=False))

    def kraus(self) -> list[np.ndarray]:
        """Kraus operators (debug view) from the eigen-decomposition of the Choi matrix."""
        k, l = self.input_qubits, self.output_qubits
        vals, vecs = np.linalg.eigh(self.choi.matrix * 2 ** k)
        out = []
        for val, vec in zip(vals[::-1], vecs[:, ::-1].T):
            if val > TOL:
                out.append(np.sqrt(val) * vec.reshape(2 ** l, 2 ** k))
        return out


def tp_violation(choi: np.ndarray, k: int, l: int) -> float:
    marginal = reduce_matrix(choi, list(range(l, l + k)), k + l)
    return float(np.max(np.abs(marginal - np.eye(2 ** k) / 2 ** k)))


def _contract(choi: np.ndarray, rho: np.ndarray, k: int, l: int, rest: int) -> np.ndarray:
    """``2^-k sum_{a,b} choi[r a, r' b] rho[a v, b v']`` on (R, rest).

    Equals ``<Phi+| (choi (x) rho) |Phi+>`` over the (input half, rho's first
    ``k`` qubits) pair.
    """
    c = choi.reshape(2 ** l, 2 ** k, 2 ** l, 2 ** k)
    r = rho.reshape(2 ** k, 2 ** rest, 2 ** k, 2 ** rest)
    out = np.einsum("iajb,avbw->ivjw", c, r, optimize=True)
    d = 2 ** (l + rest)
    return out.reshape(d, d) / 2 ** k


def _epr_vector(k: int) -> np.ndarray:
    """k EPR pairs ordered (first halves | second halves)."""
    return np.eye(2 ** k, dtype=complex).reshape(-1) / np.sqrt(2 ** k)


def choi_of_channel(apply_fn: Callable[[np.ndarray], np.ndarray], k: int, l: int) -> QuantumChannel:
    """Choi state from the sum over matrix units.

    ``apply_fn`` maps a ``2^k x 2^k`` matrix to a ``2^l x 2^l`` matrix and must
    be linear; it is called on every ``|x><y|``.
    """
    check_cap(k + l, "Choi state")
    dk, dl = 2 ** k, 2 ** l
    choi = np.zeros((dl * dk, dl * dk), dtype=complex)
    for x in range(dk):
        for y in range(dk):
            unit = np.zeros((dk, dk), dtype=complex)
            unit[x, y] = 1.0
            out = np.asarray(apply_fn(unit), dtype=complex)
            if out.shape != (dl, dl):
                raise ChannelError(f"apply_fn returned shape {out.shape}, expected {(dl, dl)}")
            choi += np.kron(out, unit)
    choi /= dk
    try:
        state = DensityOperator(choi, choi_layout(k, l))
    except StateError as exc:
        raise ChannelError(f"apply_fn is not completely positive: {exc}") from exc
    return QuantumChannel(k, l, state)


def choi_of_stinespring(v: UnitaryMatrix | np.ndarray, k: int, l: int) -> QuantumChannel:
    """Choi state of ``sigma -> tr_env[v (sigma (x) |0..0><0..0|) v^dag]``.

    ``v`` acts on ``n >= max(k, l)`` qubits; the input occupies the first
    ``k`` of them, the output is the first ``l``.  Built by applying the
    dilation to one half of ``k`` EPR pairs.
    """
    m = v.matrix if isinstance(v, UnitaryMatrix) else np.asarray(v, dtype=complex)
    n = int(round(np.log2(m.shape[0])))
    if n < max(k, l):
        raise ChannelError(f"dilation on {n} qubits cannot carry {k} inputs and {l} outputs")
    check_cap(l + k, "Choi state")
    check_cap(n, "dilation")
    # joint vector on (dilation qubits | reference copy of the input)
    epr = _epr_vector(k).reshape(2 ** k, 2 ** k)
    vec = np.zeros((2 ** k, 2 ** (n - k), 2 ** k), dtype=complex)
    vec[:, 0, :] = epr
    vec = apply_to_vector(vec.reshape(-1), m, list(range(n)), n + k)
    # order (output l | environment | reference k) and trace out the environment
    psi = vec.reshape(2 ** l, 2 ** (n - l), 2 ** k)
    choi = np.einsum("aeb,ced->abcd", psi, psi.conj()).reshape(2 ** (l + k), 2 ** (l + k))
    return QuantumChannel(k, l, DensityOperator(choi, choi_layout(k, l), check=False))


def choi_of_unitary(u: UnitaryMatrix | np.ndarray) -> QuantumChannel:
    m = u.matrix if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
    k = int(round(np.log2(m.shape[0])))
    return choi_of_stinespring(m, k, k)


def identity_channel(k: int) -> QuantumChannel:
    return choi_of_unitary(np.eye(2 ** k))


def depolarizing_channel(k: int, l: int | None = None) -> QuantumChannel:
    """The completely depolarizing channel, ``sigma -> tr(sigma) I / 2^l``."""
    l = k if l is None else l
    d = 2 ** (k + l)
    return QuantumChannel(k, l, DensityOperator(np.eye(d) / d, choi_layout(k, l), check=False))


def channel_of_choi(choi: DensityOperator | QuantumChannel) -> Callable[[np.ndarray], np.ndarray]:
    ch = choi if isinstance(choi, QuantumChannel) else _as_channel(choi)
    return ch.__call__


def _as_channel(choi: DensityOperator) -> QuantumChannel:
    if OUT in choi.layout.names and IN in choi.layout.names:
        return QuantumChannel(choi.layout.size(IN), choi.layout.size(OUT), choi)
    raise ChannelError("cannot infer input/output split of an unlabelled Choi state")


def _move_targets_first(rho: DensityOperator, targets: Iterable[str] | str | None, k: int):
    qubits = rho.layout.resolve(targets) if targets is not None else list(range(rho.n_qubits))
    if len(qubits) != k:
        raise StateError(f"channel takes {k} qubits but {len(qubits)} were targeted")
    rest = [q for q in range(rho.n_qubits) if q not in qubits]
    mat = permute_matrix_qubits(rho.matrix, qubits + rest, rho.n_qubits)
    if targets is None:
        rest_layout = RegisterLayout()
    else:
        target_set = set(qubits)
        names = [nm for nm in rho.layout.names
                 if rho.layout.size(nm) and not set(rho.layout.qubits(nm)) & target_set]
        partial = [nm for nm in rho.layout.names
                   if set(rho.layout.qubits(nm)) & target_set and not set(rho.layout.qubits(nm)) <= target_set]
        if partial:
            rest_layout = RegisterLayout.anonymous(len(rest), "rest")
        else:
            rest_layout = rho.layout.select(names)
    return mat, rest_layout


def apply_channel(
    ch: QuantumChannel,
    sigma: DensityOperator | PureState,
    targets: Iterable[str] | str | None = None,
    output_label: str = OUT,
) -> DensityOperator:
    """Apply ``ch`` to the ``targets`` of ``sigma`` (all of it by default).

    The result is laid out as (output register | untouched registers).
    """
    sigma = to_density(sigma)
    k, l = ch.input_qubits, ch.output_qubits
    mat, rest_layout = _move_targets_first(sigma, targets, k)
    rest = rest_layout.total
    check_cap(l + rest)
    out = _contract(ch.choi.matrix, mat, k, l, rest) * 4 ** k
    layout = RegisterLayout((output_label,), (l,)).concat(rest_layout)
    return DensityOperator(out, layout, check=False)


@dataclass(frozen=True, eq=False)
class PostSelectionOutcome:
    success_probability: float
    output_state: DensityOperator | None


def post_select_apply(
    choi: DensityOperator | QuantumChannel,
    sigma: DensityOperator | PureState,
    targets: Iterable[str] | str | None = None,
    input_qubits: int | None = None,
    output_label: str = OUT,
    strict: bool = True,
) -> PostSelectionOutcome:
    """Run the Choi-state post-selection analytically.

    ``choi`` may be any state on (output | input) qubits, Choi or not.  The
    input half and the ``targets`` of ``sigma`` are projected onto the
    maximally entangled state; the conditioned state of (output | rest of
    ``sigma``) is returned with the success probability.  With
    ``strict=True`` a success probability below ``MIN_SUCCESS`` raises
    :class:`DegenerateProofError`; otherwise the outcome carries no state.
    """
    if isinstance(choi, QuantumChannel):
        k, l, cmat = choi.input_qubits, choi.output_qubits, choi.choi.matrix
    else:
        if input_qubits is None:
            if IN in choi.layout.names:
                input_qubits = choi.layout.size(IN)
            elif targets is None:
                input_qubits = to_density(sigma).n_qubits
            else:
                input_qubits = len(to_density(sigma).layout.resolve(targets))
        k, l, cmat = input_qubits, choi.n_qubits - input_qubits, choi.matrix
    sigma = to_density(sigma)
    mat, rest_layout = _move_targets_first(sigma, targets, k)
    rest = rest_layout.total
    check_cap(l + rest)
    unnorm = _contract(cmat, mat, k, l, rest)
    p = float(np.trace(unnorm).real)
    if p < MIN_SUCCESS:
        if strict:
            raise DegenerateProofError(f"post-selection success probability {p:.3e} is zero")
        return PostSelectionOutcome(max(p, 0.0), None)
    out = unnorm / p
    out = (out + out.conj().T) / 2
    layout = RegisterLayout((output_label,), (l,)).concat(rest_layout)
    return PostSelectionOutcome(min(p, 1.0), DensityOperator(out, layout, check=False))


def random_channel(k: int, l: int, seed: SeedLike, env_qubits: int | None = None) -> QuantumChannel:
    """Random channel from a Haar-random Stinespring dilation.

    The dilation acts on ``l + env`` qubits (``env`` defaults to ``k``, and is
    raised if needed so the input fits).
    """
    env = k if env_qubits is None else env_qubits
    env = max(env, k - l, 0)
    n = l + env
    check_cap(n, "dilation")
    u = random_unitary(n, seed)
    return choi_of_stinespring(u, k, l)


def stinespring_apply(v: np.ndarray, sigma: np.ndarray, k: int, l: int) -> np.ndarray:
    """Reference channel action through an explicit environment."""
    n = int(round(np.log2(v.shape[0])))
    anc = np.zeros((2 ** (n - k), 2 ** (n - k)), dtype=complex)
    anc[0, 0] = 1.0
    big = v @ np.kron(sigma, anc) @ v.conj().T
    return reduce_matrix(big, list(range(l)), n)
