"""Application model generators: Heisenberg chain, SYK Majorana model,
second-quantized molecular Hamiltonians from integral files, and the parity
ladder used as the executable amplitude check.

All randomness is classical and seeded; regenerating with the same seed
reproduces identical coefficient tables.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import CostProfile, clog2
from .hamiltonians import (PAULI, HamiltonianSpec, band, local_hamiltonian,
                           pauli_sum)
from .refsim import expm_hermitian

COEFF_TOL = 1e-12


@dataclass
class ModelInstance:
    spec: HamiltonianSpec
    provenance: dict
    oracle_costs: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Pauli string algebra (products with phase bookkeeping)

_MUL = {}
for _a in "IXYZ":
    _MUL[("I", _a)] = (1, _a)
    _MUL[(_a, "I")] = (1, _a)
    _MUL[(_a, _a)] = (1, "I")
_MUL[("X", "Y")] = (1j, "Z")
_MUL[("Y", "X")] = (-1j, "Z")
_MUL[("Y", "Z")] = (1j, "X")
_MUL[("Z", "Y")] = (-1j, "X")
_MUL[("Z", "X")] = (1j, "Y")
_MUL[("X", "Z")] = (-1j, "Y")


def pauli_mul(a: str, b: str) -> tuple[complex, str]:
    phase = 1.0 + 0j
    out = []
    for ca, cb in zip(a, b):
        ph, c = _MUL[(ca, cb)]
        phase *= ph
        out.append(c)
    return phase, "".join(out)


def string_matrix(string: str) -> np.ndarray:
    """Dense operator with qubit i = character i = bit i (little endian)."""
    m = np.array([[1.0 + 0j]])
    for c in string:  # earlier characters are lower-order bits
        m = np.kron(PAULI[c], m)
    return m


class PauliAccumulator:
    """Sparse sum of Pauli strings with complex coefficients."""

    def __init__(self, n: int):
        self.n = n
        self.terms: dict[str, complex] = {}

    def add(self, coeff: complex, string: str):
        if abs(coeff) < COEFF_TOL:
            return
        self.terms[string] = self.terms.get(string, 0j) + coeff
        if abs(self.terms[string]) < COEFF_TOL:
            del self.terms[string]

    def add_product(self, coeff: complex, factors: list[dict]):
        """Expand coeff * prod of operators, each a dict {string: coeff}."""
        acc = {"I" * self.n: coeff}
        for op in factors:
            nxt: dict[str, complex] = {}
            for s1, c1 in acc.items():
                for s2, c2 in op.items():
                    ph, s3 = pauli_mul(s1, s2)
                    nxt[s3] = nxt.get(s3, 0j) + c1 * c2 * ph
            acc = nxt
        for s, c in acc.items():
            self.add(c, s)

    def to_spec(self) -> HamiltonianSpec:
        terms = []
        for s, c in sorted(self.terms.items()):
            if abs(c.imag) > 1e-9:
                raise ValueError(f"non-Hermitian accumulation at {s}: {c}")
            terms.append((s, c.real))
        if not terms:
            raise ValueError("empty Hamiltonian")
        return pauli_sum(terms, self.n)


# ---------------------------------------------------------------------------
# Heisenberg chain


def heisenberg(n: int, seed: int, h_override=None) -> ModelInstance:
    """Nearest-neighbor exchange chain with a random longitudinal field,
    periodic boundary: clauses X_wX_{w+1} + Y_wY_{w+1} + Z_wZ_{w+1} + h_w Z_w."""
    if n < 3:
        raise ValueError("the periodic chain needs at least 3 sites")
    rng = np.random.default_rng(seed)
    h = rng.uniform(-1.0, 1.0, n) if h_override is None else np.asarray(h_override, float)
    clauses = []
    for w in range(n):
        mask = (1 << w) | (1 << ((w + 1) % n))
        pos = sorted([w, (w + 1) % n])
        blk = np.zeros((4, 4), dtype=complex)
        for p in "XYZ":
            blk += np.kron(PAULI[p], PAULI[p])
        zslot = pos.index(w)  # compressed position of qubit w
        blk += h[w] * (np.kron(np.eye(2), PAULI["Z"]) if zslot == 0
                       else np.kron(PAULI["Z"], np.eye(2)))
        clauses.append((mask, blk))
    spec = local_hamiltonian(n, clauses)
    inst = ModelInstance(spec, {"model": "heisenberg", "seed": seed, "n": n,
                                "h": [float(x) for x in h],
                                "normalization": spec.normalization})
    inst.oracle_costs = _heisenberg_oracle_costs(n, bits=32)
    return inst


def _heisenberg_oracle_costs(n: int, bits: int) -> dict:
    ln = clog2(n)
    lb = clog2(bits)
    return {
        "O_P": CostProfile(ln, n * ln, {}, {}),
        "O_H": CostProfile(ln * ln + lb, n ** 5 + n * bits, {}, {}),
        "constants": {"op_depth": f"ceil(log2 n)={ln}",
                      "oh_depth": f"ceil(log2 n)^2 + ceil(log2 b)={ln*ln+lb}"},
    }


# ---------------------------------------------------------------------------
# SYK model


def jw_majorana(p: int, n: int) -> str:
    """Majorana operator p on n qubits: Z-prefix then X (even p) or Y (odd)."""
    if not 0 <= p < 2 * n:
        raise ValueError("Majorana index out of range")
    q, odd = divmod(p, 2)
    return "Z" * q + ("Y" if odd else "X") + "I" * (n - q - 1)


def box_muller(u1: float, u2: float) -> float:
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def sample_syk_couplings(count: int, n: int, J: float, rng) -> np.ndarray:
    sigma = math.sqrt(6.0 * J * J / (2 * n) ** 3)
    out = np.empty(count)
    for i in range(count):
        u1 = 1.0 - rng.random()  # (0, 1]
        u2 = rng.random()
        out[i] = sigma * box_muller(u1, u2)
    return out


def syk(n: int, seed: int, J: float = 1.0, quad_cap: int = 3000) -> ModelInstance:
    """Four-Majorana model on 2n Majoranas (n qubits) with Gaussian couplings
    of variance 3! J^2/(2n)^3, Jordan-Wigner mapped to a Pauli sum."""
    if n < 2:
        raise ValueError("need at least two qubits (four Majorana modes)")
    quads = [(p, q, r, s)
             for p in range(2 * n) for q in range(p + 1, 2 * n)
             for r in range(q + 1, 2 * n) for s in range(r + 1, 2 * n)]
    if len(quads) > quad_cap:
        raise ValueError("Majorana quadruple enumeration cap exceeded")
    rng = np.random.default_rng(seed)
    couplings = sample_syk_couplings(len(quads), n, J, rng)
    acc = PauliAccumulator(n)
    table = {}
    for (p, q, r, s), jv in zip(quads, couplings):
        phase = 1.0 + 0j
        string = "I" * n
        for idx in (p, q, r, s):
            ph, string = pauli_mul(string, jw_majorana(idx, n))
            phase *= ph
        # the ordered-tuple sum contributes 4! permutations of each quadruple;
        # with the 1/(4*4!) prefactor each quadruple carries weight 1/4
        acc.add(phase * jv / 4.0, string)
        table[f"{p},{q},{r},{s}"] = float(jv)
    spec = acc.to_spec()
    inst = ModelInstance(spec, {"model": "syk", "seed": seed, "n": n, "J": J,
                                "couplings": table,
                                "normalization": spec.normalization,
                                "coupling_variance": 6.0 * J * J / (2 * n) ** 3})
    ln, lb = clog2(n), clog2(32)
    inst.oracle_costs = {
        "O_P": CostProfile(ln, n * ln, {}, {}),
        "O_H": CostProfile(ln * ln + lb, n ** 8 + n ** 4 * 32, {}, {}),
    }
    return inst


# ---------------------------------------------------------------------------
# molecular model


def jw_creation(p: int, n: int) -> dict:
    """a_p^dag = (1/2) Z_0..Z_{p-2} (X_{p-1} - i Y_{p-1}), indices shifted to
    base zero: Z-prefix of length p then (X - iY)/2 on qubit p."""
    zs = "Z" * p
    rest = "I" * (n - p - 1)
    return {zs + "X" + rest: 0.5, zs + "Y" + rest: -0.5j}


def jw_annihilation(p: int, n: int) -> dict:
    zs = "Z" * p
    rest = "I" * (n - p - 1)
    return {zs + "X" + rest: 0.5, zs + "Y" + rest: 0.5j}


def molecular(integrals, n: int | None = None) -> ModelInstance:
    """Second-quantized electronic Hamiltonian from an integral table.

    `integrals` is a path, JSON text, or dict with entries
    one_body: [[p, q, re, im], ...] and two_body: [[p, q, r, s, re, im], ...];
    conjugate symmetry (h_pq = h_qp^*, h_pqrs = h_srqp^*) is required.
    """
    data = _load_integrals(integrals)
    one = {(int(p), int(q)): complex(re, im) for p, q, re, im in data.get("one_body", [])}
    two = {(int(p), int(q), int(r), int(s)): complex(re, im)
           for p, q, r, s, re, im in data.get("two_body", [])}
    if not one and not two:
        raise ValueError("empty integral table")
    orbitals = set()
    for key in one:
        orbitals.update(key)
    for key in two:
        orbitals.update(key)
    n = n or max(orbitals) + 1
    for (p, q), v in one.items():
        if abs(one.get((q, p), v.conjugate()) - v.conjugate()) > 1e-9:
            raise ValueError(f"one-body integrals not Hermitian at ({p},{q})")
    for (p, q, r, s), v in two.items():
        mirror = two.get((s, r, q, p), v.conjugate())
        if abs(mirror - v.conjugate()) > 1e-9:
            raise ValueError(f"two-body integrals not Hermitian at ({p},{q},{r},{s})")
    acc = PauliAccumulator(n)
    for (p, q), v in one.items():
        acc.add_product(v, [jw_creation(p, n), jw_annihilation(q, n)])
    for (p, q, r, s), v in two.items():
        acc.add_product(0.5 * v, [jw_creation(p, n), jw_creation(q, n),
                                  jw_annihilation(r, n), jw_annihilation(s, n)])
    spec = acc.to_spec()
    inst = ModelInstance(spec, {"model": "molecular", "n": n,
                                "one_body": len(one), "two_body": len(two),
                                "normalization": spec.normalization})
    ln, lb = clog2(n), clog2(32)
    inst.oracle_costs = {
        "O_P": CostProfile(ln, n * ln, {}, {}),
        "O_H": CostProfile(ln * ln + clog2(n * 32), n ** 8 * 32 ** 4, {}, {}),
        "lookup": CostProfile(clog2(n * 32), (n * 32) ** 4, {}, {}),
    }
    return inst


def _load_integrals(integrals) -> dict:
    if isinstance(integrals, dict):
        return integrals
    text = str(integrals)
    if text.strip().startswith("{"):
        return json.loads(text)
    with open(text) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# parity ladder


def parity_dense(N: int, x) -> np.ndarray:
    """Ladder Hamiltonian on basis |j, k>, j in 0..N, k in 0..1 (index 2j+k),
    with <j,k|H|j-1,k^x_j> = sqrt((N-j+1) j)/N."""
    x = list(x)
    if len(x) != N:
        raise ValueError("bit string length must equal N")
    dim = 2 * (N + 1)
    H = np.zeros((dim, dim))
    for j in range(1, N + 1):
        amp = math.sqrt((N - j + 1) * j) / N
        for k in range(2):
            a = 2 * j + k
            b = 2 * (j - 1) + (k ^ x[j - 1])
            H[a, b] = H[b, a] = amp
    return H


def parity_ham(N: int, x) -> ModelInstance:
    """Band-registered parity ladder (odd width 7 covers the +-3 offsets)."""
    if N > 10:
        raise ValueError("ladder size capped at 10")
    H = parity_dense(N, x)
    dim = H.shape[0]
    n = max(2, math.ceil(math.log2(dim)))
    entries = {}
    for a in range(dim):
        for b in range(dim):
            if H[a, b] != 0:
                entries[(a, b)] = complex(H[a, b])
    spec = band(n, entries, 7)
    return ModelInstance(spec, {"model": "parity", "N": N,
                                "x": "".join(str(int(b)) for b in x),
                                "normalization": spec.normalization})


def parity_amplitude(N: int, x, t: float) -> float:
    """|<N, parity(x)| e^{-iHt} |0,0>| from the dense ladder."""
    x = list(x)
    H = parity_dense(N, x)
    par = 0
    for b in x:
        par ^= int(b)
    U = expm_hermitian(H, t)
    return abs(U[2 * N + par, 0])


def parity_closed_form(N: int, t: float) -> float:
    return abs(math.sin(t / N)) ** N
