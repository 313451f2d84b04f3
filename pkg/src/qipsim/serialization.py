"""JSON formats for matrices, protocols, provers and experiment configs.

Matrices are ``{"rows": r, "cols": c, "data": [[re, im], ...]}`` in
row-major order.  Wherever a unitary is expected, one of these forms is
accepted::

    {"matrix": {...}}            explicit matrix
    {"circuit": "width 1\\nH 0\\n"}   inline circuit text
    {"circuit_file": "h.circ"}     circuit file, relative to the JSON file
    {"identity": n}                identity on n qubits

Special cases for the final channel and the accept operator are listed in
the README.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channels import QuantumChannel, choi_layout, choi_of_stinespring, choi_of_unitary, random_channel
from .circuits import Circuit, circuit_to_unitary, parse_circuit
from .protocol import ProtocolSpec, ProverStrategy, epr_echo_protocol, trivial_protocol, wire_channel
from .qmath import DensityOperator, UnitaryMatrix


class ConfigError(ValueError):
    """Missing file or schema violation in a JSON input."""


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"matrix needs rows, cols and data: {exc}") from None
    if len(data) != rows * cols:
        raise ConfigError(f"matrix data has {len(data)} entries, expected {rows * cols}")
    try:
        flat = np.array([complex(float(re), float(im)) for re, im in data], dtype=complex)
    except (TypeError, ValueError):
        raise ConfigError("matrix entries must be [re, im] pairs") from None
    return flat.reshape(rows, cols)


def load_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ConfigError(f"{where}: missing field {key!r}")
    return obj[key]


def unitary_from_json(obj, base: Path, where: str) -> UnitaryMatrix:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    try:
        if "matrix" in obj:
            return UnitaryMatrix(matrix_from_json(obj["matrix"]))
        if "circuit" in obj:
            return circuit_to_unitary(parse_circuit(obj["circuit"]))
        if "circuit_file" in obj:
            path = base / obj["circuit_file"]
            if not path.is_file():
                raise ConfigError(f"file not found: {path}")
            return circuit_to_unitary(parse_circuit(path.read_text(encoding="utf-8")))
        if "identity" in obj:
            return UnitaryMatrix.identity(int(obj["identity"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: expected one of matrix, circuit, circuit_file, identity")


def _accept_operator(obj, d: int, where: str) -> np.ndarray:
    if isinstance(obj, str):
        if obj == "identity":
            return np.eye(d, dtype=complex)
        if obj == "zero":
            return np.zeros((d, d), dtype=complex)
        if obj == "even_parity":
            return np.diag([1.0 if bin(i).count("1") % 2 == 0 else 0.0 for i in range(d)]).astype(complex)
        raise ConfigError(f"{where}: unknown accept operator {obj!r}")
    return matrix_from_json(obj)


def protocol_from_json(obj: dict, base: Path | str = ".") -> ProtocolSpec:
    base = Path(base)
    where = "protocol"
    if isinstance(obj, dict) and "builtin" in obj:
        return _builtin_protocol(obj, where)
    m = int(_require(obj, "m", where))
    v = int(_require(obj, "verifier_qubits", where))
    a = int(obj.get("answer_qubits", 1))
    ws = [unitary_from_json(w, base, f"{where}.verifier_unitaries[{i}]") for i, w in enumerate(obj.get("verifier_unitaries", []))]
    fq = obj.get("final_question")
    fq = None if fq is None else unitary_from_json(fq, base, f"{where}.final_question")
    acc = _accept_operator(_require(obj, "accept_operator", where), 2 ** (a + v), f"{where}.accept_operator")
    try:
        return ProtocolSpec(
            m=m,
            verifier_qubits=v,
            answer_qubits=a,
            verifier_unitaries=tuple(ws),
            accept_operator=acc,
            final_question=fq,
            completeness=float(obj.get("completeness", 1.0)),
            soundness=float(obj.get("soundness", 0.0)),
            name=str(obj.get("name", "protocol")),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _builtin_protocol(obj: dict, where: str) -> ProtocolSpec:
    kind = obj["builtin"]
    try:
        if kind == "epr_echo":
            return epr_echo_protocol(int(obj.get("m", 0)), str(obj.get("test", "parity")))
        if kind == "trivial":
            return trivial_protocol(
                int(obj.get("m", 0)),
                int(obj.get("verifier_qubits", 1)),
                int(obj.get("answer_qubits", 1)),
                float(obj.get("accept", 1.0)),
            )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown builtin protocol {kind!r}")


def channel_from_json(obj, prover_qubits: int, answer_qubits: int, base: Path, where: str) -> QuantumChannel:
    k = prover_qubits + 1
    try:
        if isinstance(obj, str):
            if obj == "echo":
                return wire_channel(prover_qubits)
            if obj == "discard":
                zero = np.zeros((2, 2), dtype=complex)
                zero[0, 0] = 1.0
                return wire_channel(prover_qubits, zero)
            raise ConfigError(f"{where}: unknown final channel {obj!r}")
        if "random_seed" in obj:
            return random_channel(k, answer_qubits, int(obj["random_seed"]))
        if "unitary" in obj:
            return choi_of_unitary(unitary_from_json(obj["unitary"], base, where))
        if "stinespring" in obj:
            return choi_of_stinespring(unitary_from_json(obj["stinespring"], base, where), k, answer_qubits)
        if "choi" in obj:
            return QuantumChannel(k, answer_qubits, DensityOperator(matrix_from_json(obj["choi"]), choi_layout(k, answer_qubits)))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: expected echo, discard, random_seed, unitary, stinespring or choi")


def prover_from_json(obj: dict, spec: ProtocolSpec, base: Path | str = ".") -> ProverStrategy:
    base = Path(base)
    where = "prover"
    p = int(_require(obj, "prover_qubits", where))
    us = obj.get("round_unitaries")
    if us is None:
        us = [{"identity": p + 1}] * spec.m
    rounds = [unitary_from_json(u, base, f"{where}.round_unitaries[{i}]") for i, u in enumerate(us)]
    final = channel_from_json(_require(obj, "final_channel", where), p, spec.answer_qubits, base, f"{where}.final_channel")
    try:
        return ProverStrategy(p, tuple(rounds), final, name=str(obj.get("name", "prover")))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_protocol(path: str | Path) -> ProtocolSpec:
    path = Path(path)
    return protocol_from_json(load_json(path), path.parent)


def load_prover(path: str | Path, spec: ProtocolSpec) -> ProverStrategy:
    path = Path(path)
    return prover_from_json(load_json(path), spec, path.parent)


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def circuit_from_json(obj, base: Path, where: str) -> Circuit:
    """Circuit form of a unitary entry (``matrix`` entries are rejected)."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    try:
        if "circuit" in obj:
            return parse_circuit(obj["circuit"])
        if "circuit_file" in obj:
            path = base / obj["circuit_file"]
            if not path.is_file():
                raise ConfigError(f"file not found: {path}")
            return parse_circuit(path.read_text(encoding="utf-8"))
        if "identity" in obj:
            return Circuit(int(obj["identity"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: a circuit (circuit, circuit_file or identity) is required here")


def round_circuits_from_json(obj: dict, spec: ProtocolSpec, base: Path | str = ".") -> list[Circuit]:
    base = Path(base)
    p = int(_require(obj, "prover_qubits", "prover"))
    us = obj.get("round_unitaries")
    if us is None:
        us = [{"identity": p + 1}] * spec.m
    return [circuit_from_json(u, base, f"prover.round_unitaries[{i}]") for i, u in enumerate(us)]
