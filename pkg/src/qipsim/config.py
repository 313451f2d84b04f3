"""Central numeric tolerances and the register cap."""
from __future__ import annotations

import os

#: Tolerance used for every state/unitary/channel invariant.
TOL = 1e-9

#: Default cap on the number of qubits in any dense register.
DEFAULT_REGISTER_CAP = 12


class RegisterCapError(ValueError):
    """A register exceeds the configured qubit cap."""


def register_cap() -> int:
    """Current register cap; ``QIPSIM_REGISTER_CAP`` overrides the default."""
    raw = os.environ.get("QIPSIM_REGISTER_CAP")
    if raw is None or raw == "":
        return DEFAULT_REGISTER_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise RegisterCapError(f"QIPSIM_REGISTER_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise RegisterCapError("QIPSIM_REGISTER_CAP must be positive")
    return cap


def check_cap(qubits: int, what: str = "register") -> None:
    cap = register_cap()
    if qubits > cap:
        raise RegisterCapError(f"{what} needs {qubits} qubits, cap is {cap}")
