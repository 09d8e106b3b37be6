"""Batch driver: builds specs from flags, runs verification suites, emits
deterministic JSON reports (CSV mirrors for sweeps).

Exit codes: 0 pass, 2 bound violation, 3 configuration error, 4 cap exceeded.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import models, simulate as sim, walk
from .hamiltonians import (HamiltonianSpec, band, local_clause, local_hamiltonian,
                           example_band_4x4, pauli_product, pauli_sum)
from .refsim import enumerate_paths, path_sum_check

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_BOUND, EXIT_CONFIG, EXIT_CAP = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class CapError(RuntimeError):
    pass


def _env_cap(name: str, default: int) -> int:
    try:
        return int(os.environ.get(name, default))
    except ValueError:
        return default


def build_spec(args) -> HamiltonianSpec:
    if getattr(args, "model", None):
        seed = args.seed if args.seed is not None else 0
        if args.model == "heisenberg":
            return models.heisenberg(args.n or 3, seed).spec
        if args.model == "syk":
            return models.syk(args.n or 2, seed).spec
        if args.model == "molecular":
            if not args.integrals:
                raise ConfigError("molecular model needs --integrals")
            return models.molecular(args.integrals).spec
        if args.model == "parity":
            rng = np.random.default_rng(seed)
            x = rng.integers(0, 2, args.parity_n or 2)
            return models.parity_ham(args.parity_n or 2, x).spec
        raise ConfigError(f"unknown model {args.model!r}")
    fam = args.family
    if fam is None:
        raise ConfigError("need --family or --model")
    if fam == "band":
        if args.band_example_flag:
            return example_band_4x4()
        n = args.n or 2
        d = args.d or 3
        rng = np.random.default_rng(args.seed or 0)
        N = 1 << n
        entries = {}
        for j in range(N):
            entries[(j, j)] = float(rng.uniform(-1, 1))
            k = (j + 1) % N
            v = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            entries[(j, k)] = v
            entries[(k, j)] = v.conjugate()
        return band(n, entries, d)
    if fam == "pauli-product":
        if not args.pauli:
            raise ConfigError("pauli-product needs --pauli")
        return pauli_product(args.pauli)
    if fam == "pauli-sum":
        if not args.pauli:
            raise ConfigError("pauli-sum needs --pauli STRING[,STRING...]")
        return pauli_sum([(s.strip(), 1.0) for s in args.pauli.split(",")])
    if fam in ("local-clause", "local"):
        n = args.n or 2
        rng = np.random.default_rng(args.seed or 0)
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        blk = (a + a.conj().T) / 2
        if fam == "local-clause":
            return local_clause(n, 0b1, blk)
        return local_hamiltonian(n, [(1 << w, blk) for w in range(min(n, args.m or 2))])
    raise ConfigError(f"unknown family {fam!r}")


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _digest(args_dict: dict) -> str:
    semantic = {k: v for k, v in args_dict.items() if k not in ("fn", "output", "csv")}
    return hashlib.sha256(json.dumps(semantic, sort_keys=True,
                                     default=str).encode()).hexdigest()[:16]


def cmd_verify_walk(args) -> int:
    try:
        spec = build_spec(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    max_qubits = _env_cap("PQWALK_MAX_QUBITS", 4096)
    r = args.r if args.r is not None else 1
    bits = args.bits
    variant = "extended" if spec.m > 1 else "single"
    checks = []
    try:
        if r == 0:
            checks.append({"name": "identity_walk", "pass": True, "measured": 0.0})
        else:
            build = walk.build_Q(spec, r, bits=bits, variant=variant)
            if build.circuit.num_qubits > max_qubits:
                raise CapError("qubit cap exceeded")
            cert = walk.certify_block(build)
            checks.append({"name": "block_distance", "pass": bool(cert.passed()),
                           "measured": cert.measured, "bound": cert.eps_bound})
            mismatch = path_sum_check(spec, r, extended=(variant == "extended"))
            checks.append({"name": "path_sum_consistency",
                           "pass": bool(mismatch < 1e-9), "measured": mismatch})
            c = build.cost
            checks.append({"name": "oh_query_depth_constant",
                           "pass": c.query_depth.get("O_H", 0) == 4,
                           "measured": c.query_depth.get("O_H", 0)})
            checks.append({"name": "ancilla_layout",
                           "pass": build.ancilla_count ==
                           walk.declared_ancilla_count(spec, r, variant),
                           "measured": build.ancilla_count})
    except CapError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    payload = {"schema_version": SCHEMA_VERSION, "command": "verify-walk",
               "config_digest": _digest(vars(args)), "r": r,
               "family": spec.family, "checks": checks,
               "pass": all(c["pass"] for c in checks)}
    _emit(payload, args.output)
    return EXIT_PASS if payload["pass"] else EXIT_BOUND


def cmd_simulate(args) -> int:
    try:
        spec = build_spec(args)
        if args.t is None or args.eps is None:
            raise ConfigError("simulate needs --t and --eps")
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cap = _env_cap("PQWALK_SUPPORT_CAP", sim.SUPPORT_CAP)
    try:
        report = sim.simulate(spec, args.t, args.eps, bits=args.bits,
                              support_cap=cap)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    payload = report.as_dict()
    payload["command"] = "simulate"
    payload["config_digest"] = _digest(vars(args))
    _emit(payload, args.output)
    return EXIT_PASS if report.passed() else EXIT_BOUND


def cmd_bench_depth(args) -> int:
    try:
        spec = build_spec(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rs = [int(x) for x in args.sweep.split(",")] if args.sweep else []
    variant = "extended" if spec.m > 1 else "single"
    rows = []
    for r in rs:
        build = walk.build_T(spec, r, bits=args.bits, variant=variant)
        q = walk.build_Q(spec, r, bits=args.bits, variant=variant)
        pre, _ = walk.prewalk(spec, r, variant)
        c = q.cost
        rows.append({"r": r, "oh_depth": c.query_depth.get("O_H", 0),
                     "oh_size": c.query_size.get("O_H", 0),
                     "op_depth": c.query_depth.get("O_P", 0),
                     "op_size": c.query_size.get("O_P", 0),
                     "gate_depth": c.gate_depth, "gate_size": c.gate_size,
                     "prewalk_depth": pre.cost().gate_depth})
    checks = []
    if rows:
        oh = {row["oh_depth"] for row in rows if row["r"] > 0}
        checks.append({"name": "oh_depth_constant", "pass": len(oh) <= 1,
                       "values": sorted(oh)})
        op = {row["op_depth"] for row in rows if row["r"] > 0}
        checks.append({"name": "op_depth_constant", "pass": len(op) <= 1,
                       "values": sorted(op)})
        pw = [row["prewalk_depth"] for row in rows if row["r"] >= 2]
        if len(pw) >= 3:
            # sub-linear growth: the last doubling increment cannot exceed
            # the previous one
            diffs = [b - a for a, b in zip(pw, pw[1:])]
            checks.append({"name": "prewalk_depth_concave",
                           "pass": diffs[-1] <= diffs[-2], "diffs": diffs})
    payload = {"schema_version": SCHEMA_VERSION, "command": "bench-depth",
               "config_digest": _digest(vars(args)), "rows": rows,
               "checks": checks, "pass": all(c["pass"] for c in checks)}
    _emit(payload, args.output)
    if args.csv:
        cols = ["r", "oh_depth", "oh_size", "op_depth", "op_size",
                "gate_depth", "gate_size", "prewalk_depth"]
        with open(args.csv, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(str(row[c]) for c in cols) + "\n")
    return EXIT_PASS if payload["pass"] else EXIT_BOUND


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqwalk",
                                description="parallel-walk simulation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--family", choices=["band", "pauli-product", "pauli-sum",
                                             "local-clause", "local"])
        sp.add_argument("--model", choices=["heisenberg", "syk", "molecular", "parity"])
        sp.add_argument("--pauli", help="Pauli string(s), comma separated for sums")
        sp.add_argument("--band-example", dest="band_example_flag",
                        action="store_true",
                        help="the built-in 4x4 3-band example")
        sp.add_argument("--integrals", help="molecular integral JSON path")
        sp.add_argument("--n", type=int)
        sp.add_argument("--d", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--parity-n", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--bits", type=int,
                        help="oracle precision bits; omit for exact rotations")
        sp.add_argument("--output", help="write the JSON report here")

    v = sub.add_parser("verify-walk", help="certify a walk block encoding")
    common(v)
    v.add_argument("--r", type=int, default=1)
    v.set_defaults(fn=cmd_verify_walk)

    s = sub.add_parser("simulate", help="full evolution pipeline")
    common(s)
    s.add_argument("--t", type=float)
    s.add_argument("--eps", type=float)
    s.set_defaults(fn=cmd_simulate)

    b = sub.add_parser("bench-depth", help="counted cost sweep over walk powers")
    common(b)
    b.add_argument("--sweep", default="1,2,4,8", help="comma-separated r values")
    b.add_argument("--csv", help="also mirror the table to CSV")
    b.set_defaults(fn=cmd_bench_depth)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
