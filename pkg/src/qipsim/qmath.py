"""Dense complex linear algebra over labelled multi-qubit registers.

Qubits are ordered big-endian: qubit 0 is the most significant bit of a
basis index, and register blocks appear in declaration order.  A target
list may name whole registers (``"P"``) or single qubits (``"P[1]"``).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .config import TOL, RegisterCapError, check_cap, register_cap

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


class LayoutError(ValueError):
    """Bad register label, duplicate label, or inconsistent sizes."""


class StateError(ValueError):
    """A matrix or vector violates a state/unitary invariant."""


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(seed)


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Register layout
# ---------------------------------------------------------------------------

_QUBIT_RE = re.compile(r"^(?P<label>[^\[\]]+)\[(?P<idx>\d+)\]$")


@dataclass(frozen=True)
class RegisterLayout:
    names: tuple[str, ...] = ()
    sizes: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.names) != len(self.sizes):
            raise LayoutError("names and sizes differ in length")
        if len(set(self.names)) != len(self.names):
            raise LayoutError(f"duplicate register label in {self.names}")
        for name, size in zip(self.names, self.sizes):
            if size < 0:
                raise LayoutError(f"register {name!r} has negative size")
            if not name or "[" in name or "]" in name:
                raise LayoutError(f"invalid register label {name!r}")

    @classmethod
    def of(cls, **sizes: int) -> "RegisterLayout":
        return cls(tuple(sizes), tuple(sizes.values()))

    @classmethod
    def anonymous(cls, n: int, name: str = "q") -> "RegisterLayout":
        return cls((name,), (n,))

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def dim(self) -> int:
        return 2 ** self.total

    def size(self, label: str) -> int:
        return self.sizes[self.index(label)]

    def index(self, label: str) -> int:
        try:
            return self.names.index(label)
        except ValueError:
            raise LayoutError(f"unknown register label {label!r}") from None

    def offset(self, label: str) -> int:
        return sum(self.sizes[: self.index(label)])

    def qubits(self, label: str) -> list[int]:
        start = self.offset(label)
        return list(range(start, start + self.size(label)))

    def resolve(self, targets: Iterable[str] | str) -> list[int]:
        """Expand register/qubit labels into absolute qubit indices, in order."""
        if isinstance(targets, str):
            targets = [targets]
        out: list[int] = []
        for t in targets:
            m = _QUBIT_RE.match(t)
            if m:
                label, idx = m.group("label"), int(m.group("idx"))
                if idx >= self.size(label):
                    raise LayoutError(f"qubit {t!r} out of range")
                out.append(self.offset(label) + idx)
            else:
                out.extend(self.qubits(t))
        if len(set(out)) != len(out):
            raise LayoutError(f"repeated qubit in targets {list(targets)}")
        return out

    def concat(self, other: "RegisterLayout") -> "RegisterLayout":
        clash = set(self.names) & set(other.names)
        if clash:
            raise LayoutError(f"duplicate register label(s) {sorted(clash)}")
        return RegisterLayout(self.names + other.names, self.sizes + other.sizes)

    def select(self, labels: Iterable[str]) -> "RegisterLayout":
        """Sub-layout of ``labels`` kept in declaration order."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        names = tuple(n for n in self.names if n in wanted)
        return RegisterLayout(names, tuple(self.size(n) for n in names))

    def renamed(self, mapping: dict[str, str]) -> "RegisterLayout":
        return RegisterLayout(tuple(mapping.get(n, n) for n in self.names), self.sizes)


# ---------------------------------------------------------------------------
# State types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    layout: RegisterLayout = field(default=None)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        layout = self.layout
        if layout is None:
            n = int(round(np.log2(amps.size)))
            layout = RegisterLayout.anonymous(n)
            object.__setattr__(self, "layout", layout)
        if amps.size != layout.dim:
            raise StateError(f"vector of length {amps.size} does not match {layout.total} qubits")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > TOL:
            raise StateError(f"state is not normalized (norm^2 = {norm:.3e})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def n_qubits(self) -> int:
        return self.layout.total

    def density(self) -> "DensityOperator":
        v = self.amplitudes
        return DensityOperator(np.outer(v, v.conj()), self.layout, check=False)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray
    layout: RegisterLayout = field(default=None)
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StateError(f"density matrix must be square, got shape {mat.shape}")
        layout = self.layout
        if layout is None:
            n = int(round(np.log2(mat.shape[0])))
            layout = RegisterLayout.anonymous(n)
            object.__setattr__(self, "layout", layout)
        if mat.shape[0] != layout.dim:
            raise StateError(f"matrix of dimension {mat.shape[0]} does not match {layout.total} qubits")
        if self.check:
            validate_density(mat)
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def n_qubits(self) -> int:
        return self.layout.total

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def relabel(self, layout: RegisterLayout) -> "DensityOperator":
        if layout.total != self.layout.total:
            raise LayoutError("relabelling must keep the qubit count")
        return DensityOperator(self.matrix, layout, check=False)


def validate_density(mat: np.ndarray, tol: float = TOL) -> None:
    herm_err = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
    if herm_err > tol:
        raise StateError(f"matrix is not Hermitian (max deviation {herm_err:.3e})")
    tr = np.trace(mat).real
    if abs(tr - 1.0) > tol:
        raise StateError(f"trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh((mat + mat.conj().T) / 2)[0]
    if lo < -tol:
        raise StateError(f"matrix is not positive semidefinite (min eigenvalue {lo:.3e})")


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    matrix: np.ndarray
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StateError(f"unitary must be square, got shape {mat.shape}")
        arity = int(round(np.log2(mat.shape[0]))) if mat.shape[0] else 0
        if 2 ** arity != mat.shape[0]:
            raise StateError(f"dimension {mat.shape[0]} is not a power of two")
        if self.check:
            err = np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])))
            if err > TOL:
                raise StateError(f"matrix is not unitary (max |U^dag U - I| = {err:.3e})")
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def arity(self) -> int:
        return int(round(np.log2(self.matrix.shape[0])))

    @property
    def dagger(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.matrix.conj().T, check=False)

    def __matmul__(self, other: "UnitaryMatrix") -> "UnitaryMatrix":
        return UnitaryMatrix(self.matrix @ other.matrix, check=False)

    @classmethod
    def identity(cls, arity: int) -> "UnitaryMatrix":
        return cls(np.eye(2 ** arity), check=False)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def basis_state(bits: str | int, layout: RegisterLayout | None = None) -> PureState:
    """Computational basis state; ``bits`` is a bit string or an index."""
    if isinstance(bits, str):
        n = len(bits)
        index = int(bits, 2) if bits else 0
    else:
        if layout is None:
            raise ValueError("an integer basis index needs a layout")
        n, index = layout.total, bits
    layout = layout or RegisterLayout.anonymous(n)
    amps = np.zeros(layout.dim, dtype=complex)
    amps[index] = 1.0
    return PureState(amps, layout)


def zero_state(layout: RegisterLayout) -> PureState:
    return basis_state(0, layout)


def maximally_mixed(layout: RegisterLayout | int) -> DensityOperator:
    if isinstance(layout, int):
        layout = RegisterLayout.anonymous(layout)
    return DensityOperator(np.eye(layout.dim) / layout.dim, layout, check=False)


def bell_state(layout: RegisterLayout | None = None) -> PureState:
    return PureState(np.array([1, 0, 0, 1]) / np.sqrt(2), layout)


def to_density(state: PureState | DensityOperator) -> DensityOperator:
    return state.density() if isinstance(state, PureState) else state


# ---------------------------------------------------------------------------
# Tensor-index kernels on raw arrays
# ---------------------------------------------------------------------------

def apply_to_vector(vec: np.ndarray, op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``2^k x 2^k`` operator to ``targets`` of an n-qubit vector."""
    k = len(targets)
    if k == 0:
        return vec * op[0, 0] if op.size == 1 else vec
    psi = vec.reshape([2] * n)
    gate = op.reshape([2] * (2 * k))
    out = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), list(targets)))
    out = np.moveaxis(out, list(range(k)), list(targets))
    return out.reshape(-1)


def apply_to_matrix(mat: np.ndarray, op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Return ``op rho op^dag`` with ``op`` acting on ``targets``."""
    k = len(targets)
    if k == 0:
        return mat * abs(op[0, 0]) ** 2 if op.size == 1 else mat
    rho = mat.reshape([2] * (2 * n))
    gate = op.reshape([2] * (2 * k))
    rows = list(targets)
    out = np.tensordot(gate, rho, axes=(list(range(k, 2 * k)), rows))
    out = np.moveaxis(out, list(range(k)), rows)
    cols = [t + n for t in targets]
    out = np.tensordot(gate.conj(), out, axes=(list(range(k, 2 * k)), cols))
    out = np.moveaxis(out, list(range(k)), cols)
    return out.reshape(2 ** n, 2 ** n)


def apply_left(mat: np.ndarray, op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """``op`` on ``targets`` times every column of ``mat`` (rows index n qubits)."""
    k = len(targets)
    cols = mat.shape[1]
    t = mat.reshape([2] * n + [cols])
    out = np.tensordot(op.reshape([2] * (2 * k)), t, axes=(list(range(k, 2 * k)), list(targets)))
    out = np.moveaxis(out, list(range(k)), list(targets))
    return out.reshape(2 ** n, cols)


def operator_on(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of ``op`` acting on ``targets``."""
    return apply_left(np.eye(2 ** n, dtype=complex), np.asarray(op, dtype=complex), targets, n)


def reduce_matrix(mat: np.ndarray, keep: Sequence[int], n: int) -> np.ndarray:
    """Partial trace keeping qubit indices ``keep`` in the given order."""
    keep = list(keep)
    traced = [q for q in range(n) if q not in keep]
    rho = mat.reshape([2] * (2 * n))
    perm = keep + traced + [q + n for q in keep] + [q + n for q in traced]
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    rho = rho.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ijkj->ik", rho)


def permute_vector_qubits(vec: np.ndarray, order: Sequence[int], n: int) -> np.ndarray:
    """Reorder qubits so that new qubit ``j`` is old qubit ``order[j]``."""
    return vec.reshape([2] * n).transpose(list(order)).reshape(-1)


def permute_matrix_qubits(mat: np.ndarray, order: Sequence[int], n: int) -> np.ndarray:
    order = list(order)
    perm = order + [q + n for q in order]
    return mat.reshape([2] * (2 * n)).transpose(perm).reshape(2 ** n, 2 ** n)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two states with concatenated layouts."""
    layout = a.layout.concat(b.layout)
    check_cap(layout.total)
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes), layout)
    return DensityOperator(np.kron(to_density(a).matrix, to_density(b).matrix), layout, check=False)


def partial_trace(rho: DensityOperator | PureState, keep: Iterable[str]) -> DensityOperator:
    """Trace out every register not named in ``keep``."""
    rho = to_density(rho)
    sub = rho.layout.select(keep)
    qubits = rho.layout.resolve(list(sub.names))
    return DensityOperator(reduce_matrix(rho.matrix, qubits, rho.n_qubits), sub, check=False)


def apply_unitary_on(state, u: UnitaryMatrix | np.ndarray, targets: Iterable[str] | str):
    """Apply ``u`` to the listed targets; returns the same kind of state."""
    op = u.matrix if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
    qubits = state.layout.resolve(targets)
    if op.shape != (2 ** len(qubits),) * 2:
        raise StateError(
            f"operator of dimension {op.shape[0]} does not match {len(qubits)} target qubits"
        )
    n = state.layout.total
    if isinstance(state, PureState):
        return PureState(apply_to_vector(state.amplitudes, op, qubits, n), state.layout)
    return DensityOperator(apply_to_matrix(state.matrix, op, qubits, n), state.layout, check=False)


def _is_hermitian(m: np.ndarray) -> bool:
    return bool(np.allclose(m, m.conj().T, atol=TOL, rtol=0))


def trace_norm(m: np.ndarray) -> float:
    if _is_hermitian(m):
        return float(np.sum(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2))))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    ma = a.matrix if hasattr(a, "matrix") else np.asarray(a)
    mb = b.matrix if hasattr(b, "matrix") else np.asarray(b)
    if ma.shape != mb.shape:
        raise StateError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    return 0.5 * trace_norm(ma - mb)


def pure_trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace distance between pure states, sqrt(1 - |<a|b>|^2)."""
    ov = abs(np.vdot(a, b)) ** 2
    return float(np.sqrt(max(0.0, 1.0 - ov)))


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    coefficients: np.ndarray
    left: np.ndarray  # columns are left Schmidt vectors
    right: np.ndarray  # columns are right Schmidt vectors
    left_layout: RegisterLayout
    right_layout: RegisterLayout

    def rank(self, tol: float = TOL) -> int:
        return int(np.count_nonzero(self.coefficients > tol))

    def reconstruct(self) -> np.ndarray:
        """Amplitudes ordered as (left registers, right registers)."""
        mat = (self.left * self.coefficients) @ self.right.T
        return mat.reshape(-1)


def schmidt_decomposition(psi: PureState, left: Iterable[str]) -> SchmidtDecomposition:
    """Schmidt decomposition across the cut (``left`` | everything else)."""
    norm = np.vdot(psi.amplitudes, psi.amplitudes).real
    if abs(norm - 1.0) > TOL:
        raise StateError("Schmidt decomposition needs a normalized state")
    llay = psi.layout.select(left)
    rlay = psi.layout.select([n for n in psi.layout.names if n not in llay.names])
    lq = psi.layout.resolve(list(llay.names))
    rq = psi.layout.resolve(list(rlay.names))
    n = psi.layout.total
    mat = permute_vector_qubits(psi.amplitudes, lq + rq, n).reshape(2 ** len(lq), 2 ** len(rq))
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    return SchmidtDecomposition(s, u, vh.T, llay, rlay)


def random_unitary(n_qubits: int, seed: SeedLike) -> UnitaryMatrix:
    """Haar-random unitary: QR of a complex Gaussian with phase-fixed diagonal."""
    if n_qubits < 0:
        raise ValueError("qubit count must be nonnegative")
    if n_qubits > register_cap():
        raise RegisterCapError(f"{n_qubits} qubits exceeds cap {register_cap()}")
    rng = as_generator(seed)
    d = 2 ** n_qubits
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    return UnitaryMatrix(q, check=False)


def random_pure_state(layout: RegisterLayout, seed: SeedLike) -> PureState:
    rng = as_generator(seed)
    v = rng.standard_normal(layout.dim) + 1j * rng.standard_normal(layout.dim)
    return PureState(v / np.linalg.norm(v), layout)


def random_density(layout: RegisterLayout, seed: SeedLike, rank: int | None = None) -> DensityOperator:
    """Random mixed state from a Ginibre matrix (full rank by default)."""
    rng = as_generator(seed)
    rank = rank or layout.dim
    g = rng.standard_normal((layout.dim, rank)) + 1j * rng.standard_normal((layout.dim, rank))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, layout)


def measurement_distribution(
    rho: DensityOperator | PureState,
    targets: Iterable[str] | str,
    basis: Sequence[np.ndarray],
) -> np.ndarray:
    """Outcome probabilities of a projective measurement on ``targets``."""
    rho = to_density(rho)
    qubits = rho.layout.resolve(targets)
    d = 2 ** len(qubits)
    projs = [np.asarray(p, dtype=complex) for p in basis]
    for p in projs:
        if p.shape != (d, d):
            raise StateError(f"projector of shape {p.shape} does not act on {len(qubits)} qubits")
    if np.max(np.abs(sum(projs) - np.eye(d))) > TOL:
        raise StateError("measurement operators do not sum to the identity")
    reduced = reduce_matrix(rho.matrix, qubits, rho.n_qubits)
    probs = np.array([np.trace(p @ reduced).real for p in projs])
    return np.clip(probs, 0.0, 1.0)


def computational_projectors(n_qubits: int) -> list[np.ndarray]:
    d = 2 ** n_qubits
    out = []
    for i in range(d):
        p = np.zeros((d, d), dtype=complex)
        p[i, i] = 1.0
        out.append(p)
    return out


def global_phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Phase-insensitive distance between amplitude vectors."""
    ov = np.vdot(a, b)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a * phase - b))


def complete_basis(columns: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a unitary by Gram-Schmidt over e_0, e_1, ...

    At each step the canonical vector with the largest residual is taken
    (lowest index on ties), which keeps the completion well conditioned
    and deterministic.
    """
    d, r = columns.shape
    q = np.zeros((d, d), dtype=complex)
    q[:, :r] = columns
    resid = np.eye(d, dtype=complex) - columns @ columns.conj().T
    used: set[int] = set()
    for j in range(r, d):
        norms = np.linalg.norm(resid, axis=0)
        norms[list(used)] = -1.0
        i = int(np.argmax(np.round(norms, 12)))
        used.add(i)
        v = resid[:, i] / norms[i]
        v = v - q[:, :j] @ (q[:, :j].conj().T @ v)
        v /= np.linalg.norm(v)
        q[:, j] = v
        resid = resid - np.outer(v, v.conj() @ resid)
    return q
