"""Command-line driver: ``qipsim <command> [options]``.

Every command accepts ``--config FILE`` (a JSON object whose keys mirror
the long flags, with dashes written as underscores), ``--seed``,
``--trials``, ``--out`` and ``--format json|csv``.  Flags override config
values.  Reports are written with sorted keys so identical inputs give
identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .channels import random_channel
from .circuits import Circuit, circuit_to_unitary, corollary_gate_bound, synthesize_single_qubit
from .compression import CompressionError, compression_report
from .protocol import acceptance_probability
from .qmath import RegisterLayout, random_density
from .reduction import (
    VERDICT_CSV_HEADER,
    build_honest_proof,
    compute_params,
    definetti_bound,
    product_proof,
    verify,
    zero_proof,
)
from .serialization import (
    ConfigError,
    dumps,
    load_json,
    load_protocol,
    load_prover,
    matrix_from_json,
    round_circuits_from_json,
)
from .tomography import CSV_HEADER, required_copies, run_trials

#: Reported floats are rounded to this many decimals.
DIGITS = 12

PATH_KEYS = ("protocol", "prover", "matrix")


def _rounded(obj):
    if isinstance(obj, float):
        return round(obj, DIGITS) + 0.0
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _settings(args: argparse.Namespace) -> dict:
    """Config-file values overlaid with explicit flags."""
    out: dict = {}
    if args.config is not None:
        cfg = load_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        base = Path(args.config).parent
        for key, value in cfg.items():
            if key in PATH_KEYS and isinstance(value, str):
                value = str(base / value)
            out[key] = value
    for key, value in vars(args).items():
        if key in ("config", "command", "handler") or value is None:
            continue
        out[key] = value
    return out


def _need(opts: dict, key: str):
    if opts.get(key) is None:
        raise ConfigError(f"missing required setting {key!r} (flag --{key.replace('_', '-')} or config key)")
    return opts[key]


def _seed(opts: dict) -> int:
    seed = int(_need(opts, "seed"))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return seed


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(opts: dict) -> tuple[dict, list[str], list[list]]:
    spec = load_protocol(_need(opts, "protocol"))
    prover = load_prover(_need(opts, "prover"), spec)
    p = acceptance_probability(spec, prover)
    report = {
        "command": "simulate",
        "protocol": spec.name,
        "prover": prover.name,
        "m": spec.m,
        "prover_qubits": prover.prover_qubits,
        "acceptance_probability": p,
    }
    return report, ["protocol", "prover", "m", "acceptance_probability"], [[spec.name, prover.name, spec.m, round(p, DIGITS)]]


def cmd_compress(opts: dict):
    spec = load_protocol(_need(opts, "protocol"))
    prover = load_prover(_need(opts, "prover"), spec)
    report = {"command": "compress", **compression_report(spec, prover)}
    rows = [[r["round"], r["schmidt_rank"], r["support_qubits"], r["support_bound"]] for r in report["rounds"]]
    return report, ["round", "schmidt_rank", "support_qubits", "support_bound"], rows


def _params(opts: dict):
    params = compute_params(int(opts.get("m", 0)), int(opts.get("g", 10)), int(opts.get("n", 64)))
    toy = {k: opts.get(f"toy_{k}") for k in ("N", "k", "delta", "eps", "copies")}
    if any(v is not None for v in toy.values()):
        params = params.with_toy(
            N=None if toy["N"] is None else int(toy["N"]),
            k=None if toy["k"] is None else int(toy["k"]),
            delta=None if toy["delta"] is None else str(toy["delta"]),
            eps=None if toy["eps"] is None else str(toy["eps"]),
            tomography_copies=None if toy["copies"] is None else int(toy["copies"]),
        )
    return params


def cmd_params(opts: dict):
    params = _params(opts)
    ratio = Fraction(4 * 4 ** params.q * (params.N + 1), params.N + params.k)
    report = {
        "command": "params",
        **params.as_dict(),
        "definetti_ratio": str(ratio),
        "definetti_ratio_within_eps": ratio <= params.eps,
    }
    rows = [[k, report[k]] for k in ("m", "g", "n", "q", "eps", "delta", "N", "k", "definetti_ratio")]
    return report, ["name", "value"], rows


_NAMED_STATES = {
    "maximally_mixed": lambda q: np.eye(2 ** q, dtype=complex) / 2 ** q,
    "zero": lambda q: np.diag([1.0] + [0.0] * (2 ** q - 1)).astype(complex),
    "plus": lambda q: np.full((2 ** q, 2 ** q), 1.0 / 2 ** q, dtype=complex),
}


def cmd_tomography(opts: dict):
    q = int(opts.get("qubits", 1))
    eps = str(opts.get("eps", "0.2"))
    seed = _seed(opts)
    trials = int(opts.get("trials", 1))
    state = str(opts.get("state", "maximally_mixed"))
    if state == "random":
        rho = random_density(RegisterLayout.anonymous(q), seed).matrix
    elif state in _NAMED_STATES:
        rho = _NAMED_STATES[state](q)
    else:
        raise ConfigError(f"unknown state {state!r}")
    copies = opts.get("copies")
    copies = required_copies(q, eps) if copies is None else int(copies)
    results = run_trials(rho, eps, [seed + i for i in range(trials)], copies)
    failures = sum(not t.success for t in results)
    report = {
        "command": "tomography",
        "state": state,
        "q": q,
        "eps": eps,
        "N": copies,
        "trials": [
            {"seed": t.seed, "trace_distance": t.trace_distance, "success": t.success} for t in results
        ],
        "failure_fraction": failures / trials,
    }
    return report, CSV_HEADER, [t.row() for t in results]


def cmd_reduce(opts: dict):
    spec = load_protocol(_need(opts, "protocol"))
    params = _params({**opts, "m": spec.m})
    seed = _seed(opts)
    trials = int(opts.get("trials", 1))
    kind = str(opts.get("proof", "honest"))
    prover_path = opts.get("prover")
    circuits: list[Circuit] = [Circuit(params.q) for _ in range(spec.m)]
    if prover_path is not None:
        path = Path(prover_path)
        circuits = round_circuits_from_json(load_json(path), spec, path.parent)
    prover = load_prover(_need(opts, "prover"), spec) if kind == "honest" else None
    verdicts = []
    for i in range(trials):
        trial_seed = seed + i
        if kind == "honest":
            proof = build_honest_proof(spec, circuits, prover.final_channel, params)
        elif kind == "zero":
            proof = zero_proof(spec, circuits, params)
        elif kind == "random_choi":
            ch = random_channel(params.q, spec.answer_qubits, trial_seed)
            proof = product_proof(circuits, ch.choi, params, spec.answer_qubits)
        else:
            raise ConfigError(f"unknown proof kind {kind!r}")
        verdicts.append(verify(spec, proof, params, trial_seed))
    accepts = [v.accept_probability for v in verdicts]
    report = {
        "command": "reduce",
        "protocol": spec.name,
        "proof": kind,
        "params": params.as_dict(),
        "verdicts": [v.as_dict() for v in verdicts],
        "mean_accept_probability": float(np.mean(accepts)),
        "definetti_bound": definetti_bound(2 ** params.q, params.kept_pairs, params.pairs)
        if 2 <= params.kept_pairs <= params.pairs - 1
        else None,
    }
    rows = [[round(x, DIGITS) if isinstance(x, float) else x for x in v.row()] for v in verdicts]
    return report, VERDICT_CSV_HEADER, rows


def cmd_synth(opts: dict):
    eps = float(opts.get("eps", 0.1))
    depth = int(opts.get("depth", 20))
    if opts.get("word") is not None:
        target = circuit_to_unitary(Circuit.from_word(str(opts["word"]))).matrix
        source = f"word:{opts['word']}"
    elif opts.get("rz") is not None:
        theta = float(opts["rz"])
        target = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
        source = f"rz:{theta!r}"
    elif opts.get("matrix") is not None:
        target = matrix_from_json(load_json(opts["matrix"]))
        source = "matrix"
    else:
        raise ConfigError("synth needs one of --word, --rz or --matrix")
    res = synthesize_single_qubit(target, eps, depth)
    report = {
        "command": "synth",
        "target": source,
        "eps": eps,
        "depth_cap": depth,
        "word": res.word,
        "gate_count": res.gate_count,
        "achieved_distance": res.achieved_distance,
        "achieved": res.achieved,
        "gate_bound": corollary_gate_bound(1, eps) if 0 < eps < 1 else None,
    }
    row = [source, eps, res.word, res.gate_count, round(res.achieved_distance, DIGITS), int(res.achieved)]
    return report, ["target", "eps", "word", "gate_count", "achieved_distance", "achieved"], [row]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="JSON file with settings (flags override it)")
    g.add_argument("--seed", type=int, help="64-bit seed; required by randomized commands")
    g.add_argument("--trials", type=int, help="number of independent trials")
    g.add_argument("--out", help="write the report here instead of stdout")
    g.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    return common


def _toy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", type=int, help="gap denominator (default 10)")
    p.add_argument("--n", type=int, help="input length used in the 2^-n terms (default 64)")
    p.add_argument("--toy-N", dest="toy_N", type=int, help="override N")
    p.add_argument("--toy-k", dest="toy_k", type=int, help="override k")
    p.add_argument("--toy-delta", dest="toy_delta", help="override delta (decimal or fraction)")
    p.add_argument("--toy-eps", dest="toy_eps", help="override eps (decimal or fraction)")
    p.add_argument("--toy-copies", dest="toy_copies", type=int, help="override the tomography copy count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qipsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("simulate", parents=[common], help="acceptance probability of a prover")
    p.add_argument("--protocol", help="protocol JSON file")
    p.add_argument("--prover", help="prover JSON file")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("compress", parents=[common], help="prover-space compression report")
    p.add_argument("--protocol", help="protocol JSON file")
    p.add_argument("--prover", help="prover JSON file")
    p.set_defaults(handler=cmd_compress)

    p = sub.add_parser("params", parents=[common], help="exact reduction parameter schedule")
    p.add_argument("--m", type=int, help="number of rounds (default 0)")
    _toy_flags(p)
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser("tomography", parents=[common], help="seeded tomography trials")
    p.add_argument("--state", choices=("maximally_mixed", "plus", "zero", "random"), help="state to reconstruct")
    p.add_argument("--qubits", type=int, help="number of qubits (default 1)")
    p.add_argument("--eps", help="target trace distance (default 0.2)")
    p.add_argument("--copies", type=int, help="copies per trial (default: the copy schedule)")
    p.set_defaults(handler=cmd_tomography)

    p = sub.add_parser("reduce", parents=[common], help="run the single-proof verifier")
    p.add_argument("--protocol", help="protocol JSON file")
    p.add_argument("--prover", help="prover JSON file (honest proofs and round circuits)")
    p.add_argument("--proof", choices=("honest", "zero", "random_choi"), help="kind of proof (default honest)")
    _toy_flags(p)
    p.set_defaults(handler=cmd_reduce)

    p = sub.add_parser("synth", parents=[common], help="shortest {H, T} word near a 1-qubit unitary")
    p.add_argument("--word", help="target given as an {H, T} word")
    p.add_argument("--rz", type=float, help="target Rz(theta)")
    p.add_argument("--matrix", help="target as a matrix JSON file")
    p.add_argument("--eps", type=float, help="distance target (default 0.1)")
    p.add_argument("--depth", type=int, help="enumeration depth cap (default 20)")
    p.set_defaults(handler=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _settings(args)
        report, header, rows = args.handler(opts)
        fmt = opts.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError(f"unknown format {fmt!r}")
        text = dumps(_rounded(report)) if fmt == "json" else _csv(header, rows)
    except (ValueError, CompressionError) as exc:
        # ConfigError, RegisterCapError and the domain errors are all ValueErrors
        print(f"qipsim: error: {exc}", file=sys.stderr)
        return 2
    out = opts.get("out")
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
