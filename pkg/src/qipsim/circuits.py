"""Circuits over the gate set {H, T, CNOT}: text format, evaluation, synthesis.

Text format (UTF-8, one statement per line)::

    width 2
    H 0          # comments start with '#'
    CNOT 0 1

Single-qubit synthesis is an exhaustive breadth-first enumeration of
{H, T} words, deduplicated by a phase-normalized matrix fingerprint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import check_cap
from .qmath import UnitaryMatrix, apply_left

H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
T_MATRIX = np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
GATE_MATRICES = {"H": H_MATRIX, "T": T_MATRIX, "CNOT": CNOT_MATRIX}
GATE_ARITY = {"H": 1, "T": 1, "CNOT": 2}

#: Hard ceiling on synthesis depth; the table grows exponentially.
MAX_ENUMERATION_DEPTH = 24
DEFAULT_DEPTH_CAP = 20


class CircuitError(ValueError):
    """Invalid gate or circuit."""


class CircuitParseError(CircuitError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.kind not in GATE_ARITY:
            raise CircuitError(f"unknown gate {self.kind!r}")
        if len(self.qubits) != GATE_ARITY[self.kind]:
            raise CircuitError(f"{self.kind} takes {GATE_ARITY[self.kind]} qubit(s)")
        if any(q < 0 for q in self.qubits):
            raise CircuitError("qubit indices must be nonnegative")
        if self.kind == "CNOT" and self.qubits[0] == self.qubits[1]:
            raise CircuitError("CNOT control equals target")

    def render(self) -> str:
        return " ".join([self.kind, *map(str, self.qubits)])


@dataclass(frozen=True)
class Circuit:
    width: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.width < 0:
            raise CircuitError("width must be nonnegative")
        for g in self.gates:
            if max(g.qubits) >= self.width:
                raise CircuitError(f"gate {g.render()!r} out of range for width {self.width}")

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.width != self.width:
            raise CircuitError("cannot concatenate circuits of different width")
        return Circuit(self.width, self.gates + other.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def render(self) -> str:
        return render_circuit(self)

    @classmethod
    def from_word(cls, word: str, qubit: int = 0, width: int = 1) -> "Circuit":
        """Single-qubit circuit from a string such as ``"THT"`` (applied left to right)."""
        return cls(width, tuple(Gate(ch, (qubit,)) for ch in word))


def parse_circuit(text: str) -> Circuit:
    width: int | None = None
    gates: list[Gate] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = _tokens(line)
        if not tokens:
            continue
        (col0, head), rest = tokens[0], tokens[1:]
        if width is None:
            if head != "width":
                raise CircuitParseError("expected 'width <n>' header", lineno, col0)
            if len(rest) != 1:
                raise CircuitParseError("malformed width line", lineno, col0)
            width = _index(rest[0], lineno)
            continue
        if head not in GATE_ARITY:
            raise CircuitParseError(f"unknown gate {head!r}", lineno, col0)
        if len(rest) != GATE_ARITY[head]:
            raise CircuitParseError(
                f"{head} expects {GATE_ARITY[head]} qubit index(es), got {len(rest)}", lineno, col0
            )
        qubits = []
        for tok in rest:
            q = _index(tok, lineno)
            if q >= width:
                raise CircuitParseError(f"qubit index {q} out of range for width {width}", lineno, tok[0])
            qubits.append(q)
        if head == "CNOT" and qubits[0] == qubits[1]:
            raise CircuitParseError("CNOT control equals target", lineno, rest[1][0])
        gates.append(Gate(head, tuple(qubits)))
    if width is None:
        raise CircuitParseError("missing 'width <n>' header", 1, 1)
    return Circuit(width, tuple(gates))


def _tokens(line: str) -> list[tuple[int, str]]:
    out, col, cur = [], 0, ""
    for i, ch in enumerate(line, start=1):
        if ch.isspace():
            if cur:
                out.append((col, cur))
                cur = ""
        else:
            if not cur:
                col = i
            cur += ch
    if cur:
        out.append((col, cur))
    return out


def _index(tok: tuple[int, str], lineno: int) -> int:
    col, s = tok
    if not s.isdigit() or not s.isascii():
        raise CircuitParseError(f"expected a nonnegative integer, got {s!r}", lineno, col)
    return int(s)


def render_circuit(c: Circuit) -> str:
    return "\n".join([f"width {c.width}", *(g.render() for g in c.gates)]) + "\n"


def circuit_to_unitary(c: Circuit) -> UnitaryMatrix:
    """Product of the gate matrices, first gate rightmost."""
    check_cap(c.width, "circuit")
    u = np.eye(2 ** c.width, dtype=complex)
    for g in c.gates:
        u = apply_left(u, GATE_MATRICES[g.kind], g.qubits, c.width)
    return UnitaryMatrix(u)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def phase_insensitive_distance(a: np.ndarray, b: np.ndarray) -> float:
    """min over phi of the spectral norm of ``a - exp(i phi) b`` for unitaries.

    The eigenphases of ``a^dag b`` are centred on the shortest arc that
    contains them; the distance is ``2 sin(arc / 4)``.
    """
    w = np.asarray(a).conj().T @ np.asarray(b)
    phases = np.sort(np.angle(np.linalg.eigvals(w)))
    if phases.size <= 1:
        return 0.0
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * np.pi]]))
    arc = 2 * np.pi - gaps.max()
    return float(2 * math.sin(max(arc, 0.0) / 4))


def _batched_distance_1q(target: np.ndarray, stack: np.ndarray) -> np.ndarray:
    # For W in U(2), W / sqrt(det W) = [[a, b], [-b*, a*]] up to sign and the
    # eigenphase half-gap is atan2(sqrt(Im(a)^2 + |b|^2), |Re a|).
    w = np.einsum("ji,njk->nik", target.conj(), stack)
    det = w[:, 0, 0] * w[:, 1, 1] - w[:, 0, 1] * w[:, 1, 0]
    w = w / np.sqrt(det)[:, None, None]
    a, b = w[:, 0, 0], w[:, 0, 1]
    half = np.arctan2(np.sqrt(a.imag ** 2 + np.abs(b) ** 2), np.abs(a.real))
    return 2 * np.sin(half / 2)


def _fingerprint(m: np.ndarray) -> tuple:
    flat = m.reshape(-1)
    pivot = flat[np.argmax(np.abs(flat) > 1e-6)]
    norm = flat * (abs(pivot) / pivot)
    return tuple(np.round(np.concatenate([norm.real, norm.imag]), 8) + 0.0)


@lru_cache(maxsize=4)
def enumeration_table(depth: int) -> tuple[tuple[str, ...], np.ndarray]:
    """All distinct {H, T} words up to ``depth`` in (length, lexicographic) order.

    Each matrix class is represented by its lexicographically smallest word
    of minimal length.  Returns the words and a stacked ``(n, 2, 2)`` array.
    """
    if depth > MAX_ENUMERATION_DEPTH:
        raise CircuitError(f"depth {depth} exceeds enumeration limit {MAX_ENUMERATION_DEPTH}")
    seen = {_fingerprint(np.eye(2, dtype=complex))}
    words, mats = [""], [np.eye(2, dtype=complex)]
    frontier = [("", np.eye(2, dtype=complex))]
    for _ in range(depth):
        nxt = []
        for word, m in frontier:
            for letter in ("H", "T"):
                new = GATE_MATRICES[letter] @ m
                fp = _fingerprint(new)
                if fp in seen:
                    continue
                seen.add(fp)
                nxt.append((word + letter, new))
        words.extend(w for w, _ in nxt)
        mats.extend(m for _, m in nxt)
        frontier = nxt
        if not frontier:
            break
    return tuple(words), np.array(mats)


@dataclass(frozen=True)
class SynthesisResult:
    circuit: Circuit
    achieved_distance: float
    gate_count: int
    achieved: bool

    @property
    def word(self) -> str:
        return "".join(g.kind for g in self.circuit.gates)


def synthesize_single_qubit(
    u: UnitaryMatrix | np.ndarray, eps: float, depth_cap: int = DEFAULT_DEPTH_CAP
) -> SynthesisResult:
    """Shortest {H, T} word within ``eps`` of ``u`` (phase-insensitive).

    Among words of that length the closest one wins, then the
    lexicographically smallest.  If no word up to ``depth_cap`` gets within
    ``eps`` the overall closest word is returned with ``achieved=False``.
    """
    target = u.matrix if isinstance(u, UnitaryMatrix) else np.asarray(u, dtype=complex)
    if target.shape != (2, 2):
        raise CircuitError("single-qubit synthesis needs a 2x2 unitary")
    if eps <= 0:
        raise CircuitError("eps must be positive")
    if depth_cap < 0:
        raise CircuitError("depth_cap must be nonnegative")
    words, stack = enumeration_table(depth_cap)
    dist = _batched_distance_1q(target, stack)
    lengths = np.fromiter((len(w) for w in words), dtype=int, count=len(words))
    hits = np.flatnonzero(dist <= eps)
    if hits.size:
        best_len = lengths[hits].min()
        pool = hits[lengths[hits] == best_len]
        achieved = True
    else:
        pool = np.arange(len(words))
        achieved = False
    # pool is in (length, lex) order, so argmin over rounded distance breaks ties correctly
    idx = pool[np.argmin(np.round(dist[pool], 12))]
    circ = Circuit.from_word(words[idx])
    achieved_distance = phase_insensitive_distance(target, circuit_to_unitary(circ).matrix)
    return SynthesisResult(circ, achieved_distance, len(circ), achieved)


def corollary_gate_bound(n_qubits: int, eps: float) -> int:
    """Gate-count bound ``5^l * log2(5^l / eps)^3`` with constant 1, rounded up."""
    if n_qubits < 1:
        raise ValueError("qubit count must be at least 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    scale = 5 ** n_qubits
    return math.ceil(scale * math.log2(scale / eps) ** 3)
