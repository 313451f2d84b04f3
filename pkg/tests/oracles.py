"""Slow, independent reference implementations used only by the tests.

Everything here is written with explicit index loops or textbook formulas
so that it shares no code path with the package kernels.
"""
from __future__ import annotations

import itertools

import numpy as np


def bits_of(i: int, n: int) -> tuple[int, ...]:
    return tuple((i >> (n - 1 - j)) & 1 for j in range(n))


def index_of(bits) -> int:
    out = 0
    for b in bits:
        out = 2 * out + b
    return out


def loop_partial_trace(rho: np.ndarray, keep: list[int], n: int) -> np.ndarray:
    """Element-wise sum over the traced qubits; ``keep`` order is preserved."""
    traced = [j for j in range(n) if j not in keep]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)
    for a in range(dk):
        ab = bits_of(a, len(keep))
        for b in range(dk):
            bb = bits_of(b, len(keep))
            total = 0j
            for t in range(2 ** len(traced)):
                tb = bits_of(t, len(traced))
                row = [0] * n
                col = [0] * n
                for j, q in enumerate(keep):
                    row[q], col[q] = ab[j], bb[j]
                for j, q in enumerate(traced):
                    row[q] = col[q] = tb[j]
                total += rho[index_of(row), index_of(col)]
            out[a, b] = total
    return out


def embed_operator(op: np.ndarray, targets: list[int], n: int) -> np.ndarray:
    """Full 2^n matrix of ``op`` acting on ``targets`` (in that order)."""
    d = 2 ** n
    k = len(targets)
    full = np.zeros((d, d), dtype=complex)
    for col in range(d):
        cb = list(bits_of(col, n))
        sub_in = index_of([cb[t] for t in targets])
        for sub_out in range(2 ** k):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            rb = cb.copy()
            for j, t in enumerate(targets):
                rb[t] = bits_of(sub_out, k)[j]
            full[index_of(rb), col] += amp
    return full


def choi_by_definition(apply_fn, k: int) -> np.ndarray:
    """2^-k sum_{x,y} Phi(|x><y|) (x) |x><y| built by explicit loops."""
    d = 2 ** k
    blocks = None
    for x in range(d):
        for y in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[x, y] = 1.0
            term = np.kron(apply_fn(e), e)
            blocks = term if blocks is None else blocks + term
    return blocks / d


def kraus_apply(kraus: list[np.ndarray], rho: np.ndarray) -> np.ndarray:
    return sum(K @ rho @ K.conj().T for K in kraus)


def stinespring_kraus(v: np.ndarray, k: int, l: int) -> list[np.ndarray]:
    """Kraus operators of rho -> tr_env V (rho (x) |0><0|) V^dag, output = first l qubits of V."""
    n = int(round(np.log2(v.shape[0])))
    env_in = n - k
    env_out = n - l
    # columns of V for inputs |x>|0..0>
    iso = np.stack([v[:, x * 2 ** env_in] for x in range(2 ** k)], axis=1)
    out = []
    for e in range(2 ** env_out):
        rows = [o * 2 ** env_out + e for o in range(2 ** l)]
        out.append(iso[rows, :])
    return out


def fidelity_pure(a: np.ndarray, b: np.ndarray) -> float:
    return abs(np.vdot(a, b)) ** 2


def all_permutations(n: int):
    return list(itertools.permutations(range(n)))


def max_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d
