"""Uniform-structured Hamiltonian families and their access oracles.

A spec describes H = sum_w H_w with every term d-sparse, normalized to
max-norm <= 1 (factor recorded).  Each family supplies the structure
functions used by the walk circuits: the neighbor map L(w,j,t), its factored
form f(j, g(w_0,t_0) o ... o g(w_{r-1},t_{r-1})) with an associative o, the
inverse L_inv with L_inv(w,j,L(w,j,t)) = g(w,t), and structural edge
membership (j,k) in H_w.  Entry access goes through EntryOracle, either exact
(entry-id table) or quantized to b bits fixed point.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
DENSE_CAP = 10  # qubits

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def principal_sqrt(z: complex) -> complex:
    """sqrt(r e^{i theta}) = sqrt(r) e^{i theta/2} with theta in (-pi, pi].

    Shared by re-weight amplitudes and coefficient state preparation so the
    two stay branch-consistent.
    """
    r = abs(z)
    if r == 0:
        return 0j
    return math.sqrt(r) * cmath.exp(0.5j * cmath.phase(z))


def edge_amplitude(z: complex, j: int, k: int) -> complex:
    """Good-branch amplitude sqrt(conj(H_jk)) for an off-diagonal edge.

    Real negative entries sit on the sqrt branch cut; they take theta = +pi
    for j < k and -pi for j > k, the zero-perturbation limit of nudging the
    imaginary part while keeping the stored matrix Hermitian.  With that
    convention conj(amp(j,k)) * amp(k,j) = H_jk holds for every j != k.
    Nonnegative diagonal entries reduce to the real square root; negative
    diagonal entries are handled by the re-weight sign widget, not here.
    """
    if z == 0:
        return 0j
    if z.imag == 0 and z.real < 0 and j != k:
        theta = math.pi if j < k else -math.pi
        return math.sqrt(-z.real) * cmath.exp(-0.5j * theta)
    return principal_sqrt(z.conjugate())


def _hweight(x: int) -> int:
    return bin(x).count("1")


def _lift(t: int, mask: int, n: int) -> int:
    """Spread the low bits of t onto the set bits of mask (LSB-first)."""
    out = 0
    pos = 0
    for i in range(n):
        if (mask >> i) & 1:
            out |= ((t >> pos) & 1) << i
            pos += 1
    return out


def _compress(x: int, mask: int, n: int) -> int:
    out = 0
    pos = 0
    for i in range(n):
        if (mask >> i) & 1:
            out |= ((x >> i) & 1) << pos
            pos += 1
    return out


def _overwrite(a: int, b: int, mask: int) -> int:
    return (a & ~mask) | (b & mask)


@dataclass
class StructureOracle:
    """The P function behind the structure queries, with its domain sizes."""
    x_size: int
    y_size: int
    P: object | None  # (x, y) -> y', bijective in y for each x; None = empty oracle

    def check_bijective(self):
        if self.P is None:
            return True  # empty oracle: vacuously valid
        for x in range(self.x_size):
            seen = {self.P(x, y) for y in range(self.y_size)}
            if len(seen) != self.y_size:
                raise ValueError(f"P({x}, .) is not a bijection")
        return True


@dataclass
class HamiltonianSpec:
    family: str
    n: int
    d: int
    m: int
    params: dict
    normalization: float
    terms: list = field(default_factory=list, repr=False)

    @property
    def N(self) -> int:
        return 1 << self.n

    # -- structure functions -------------------------------------------------

    def g_width(self) -> int:
        if self.family in ("local_clause", "local_hamiltonian"):
            return 2 * self.n  # (value, mask)
        return self.n

    def neighbor(self, w: int, j: int, t: int) -> int:
        self._check_wjt(w, j, t)
        return self.f(j, self.g(w, t))

    def g(self, w: int, t: int) -> int:
        N = self.N
        if self.family == "band":
            return (t - (self.d - 1) // 2) % N
        if self.family in ("pauli_product", "pauli_sum"):
            return self.terms[w]["s"]
        mask = self.terms[w]["s"]
        return _lift(t, mask, self.n) | (mask << self.n)

    def f(self, j: int, gval: int) -> int:
        N = self.N
        if self.family == "band":
            return (j + gval) % N
        if self.family in ("pauli_product", "pauli_sum"):
            return j ^ gval
        v, mask = gval & (N - 1), gval >> self.n
        return _overwrite(j, v, mask)

    def op(self, a: int, b: int) -> int:
        """The associative combiner on g-values."""
        N = self.N
        if self.family == "band":
            return (a + b) % N
        if self.family in ("pauli_product", "pauli_sum"):
            return a ^ b
        av, am = a & (N - 1), a >> self.n
        bv, bm = b & (N - 1), b >> self.n
        return _overwrite(av, bv, bm) | ((am | bm) << self.n)

    def L_inv(self, w: int, j: int, k: int) -> int:
        N = self.N
        if self.family == "band":
            return (k - j) % N
        if self.family in ("pauli_product", "pauli_sum"):
            return self.terms[w]["s"]
        mask = self.terms[w]["s"]
        return (k & mask) | (mask << self.n)

    def membership(self, w: int, j: int, k: int) -> int:
        """Structural [ (j,k) is an edge of the w-th term's graph ]."""
        if self.family == "band":
            off = (k - j) % self.N
            half = (self.d - 1) // 2
            return int(off <= half or off >= self.N - half)
        if self.family in ("pauli_product", "pauli_sum"):
            return int((j ^ k) == self.terms[w]["s"])
        return int(((j ^ k) & ~self.terms[w]["s"]) == 0)

    def row_pattern(self, w: int, j: int):
        return [self.neighbor(w, j, t) for t in range(self.d)]

    def structure_oracle(self) -> StructureOracle:
        if self.family == "band":
            return StructureOracle(0, 0, None)
        terms = self.terms
        return StructureOracle(self.m, self.N, lambda w, y: y ^ terms[w]["s"])

    def iterate_L(self, wvec, j, tvec) -> int:
        if len(wvec) != len(tvec) or not wvec:
            raise ValueError("w and t sequences must have equal positive length")
        for w, t in zip(wvec, tvec):
            j = self.neighbor(w, j, t)
        return j

    def factored_L(self, wvec, j, tvec) -> int:
        if len(wvec) != len(tvec) or not wvec:
            raise ValueError("w and t sequences must have equal positive length")
        acc = self.g(wvec[0], tvec[0])
        for w, t in zip(wvec[1:], tvec[1:]):
            acc = self.op(acc, self.g(w, t))
        return self.f(j, acc)

    # -- entries ---------------------------------------------------------------

    def term_entry(self, w: int, j: int, k: int) -> complex:
        if not self.membership(w, j, k):
            return 0j
        scale = 1.0 / self.normalization
        if self.family == "band":
            return self.terms[0]["entries"].get((j, k), 0j) * scale
        if self.family in ("pauli_product", "pauli_sum"):
            term = self.terms[w]
            val = term["scale"]
            for i, p in enumerate(term["string"]):
                ji, ki = (j >> i) & 1, (k >> i) & 1
                if p == "I":
                    pass
                elif p == "X":
                    pass  # entry 1 whenever bits differ; membership enforced it
                elif p == "Y":
                    val *= (-1j if (ji, ki) == (0, 1) else 1j)
                else:  # Z
                    val *= (-1) ** ji
            return val * scale
        term = self.terms[w]
        mask = term["s"]
        a = _compress(j, mask, self.n)
        b = _compress(k, mask, self.n)
        return term["block"][a, b] * scale

    def entry(self, j: int, k: int) -> complex:
        if not (0 <= j < self.N and 0 <= k < self.N):
            raise ValueError("index out of range")
        return sum((self.term_entry(w, j, k) for w in range(self.m)), 0j)

    def overlap_count(self, j: int, k: int) -> int:
        return sum(self.membership(w, j, k) for w in range(self.m))

    def rescaled_entry(self, j: int, k: int) -> complex:
        c = self.overlap_count(j, k)
        return self.entry(j, k) / c if c else 0j

    def materialize_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.n > cap:
            raise ValueError(f"n={self.n} exceeds dense cap {cap}")
        N = self.N
        H = np.zeros((N, N), dtype=complex)
        for j in range(N):
            for k in range(N):
                H[j, k] = self.entry(j, k)
        if np.linalg.norm(H - H.conj().T, np.inf) > HERMITICITY_TOL:
            raise ValueError("materialized matrix is not Hermitian")
        return H

    def edge_list(self):
        """All structural edges (j, k, c(j,k)) with c > 0."""
        out = []
        for j in range(self.N):
            for k in range(self.N):
                c = self.overlap_count(j, k)
                if c:
                    out.append((j, k, c))
        return out

    # -- plumbing ---------------------------------------------------------------

    def _check_wjt(self, w, j, t):
        if not (0 <= w < self.m and 0 <= j < self.N and 0 <= t < self.d):
            raise ValueError(f"(w={w}, j={j}, t={t}) out of range")

    def scaled(self, factor: float) -> "HamiltonianSpec":
        """Spec describing factor*H (keeps structure, rescales entries)."""
        return HamiltonianSpec(self.family, self.n, self.d, self.m, self.params,
                               self.normalization / factor, self.terms)

    def to_json(self) -> str:
        payload = {"family": self.family, "n": self.n, "d": self.d, "m": self.m,
                   "normalization": self.normalization, "params": _json_params(self.params)}
        return json.dumps(payload, indent=1, sort_keys=True)


def _json_params(params):
    def conv(v):
        if isinstance(v, complex):
            return [v.real, v.imag]
        if isinstance(v, np.ndarray):
            return [[[c.real, c.imag] for c in row] for row in v]
        if isinstance(v, dict):
            return {str(k): conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v
    return {k: conv(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# family constructors


def _max_norm(spec: HamiltonianSpec) -> float:
    if spec.n <= DENSE_CAP:
        vals = [abs(spec.entry(j, k)) for j, k, _ in spec.edge_list()]
        return max(vals) if vals else 0.0
    if spec.family in ("pauli_sum", "pauli_product"):
        return sum(abs(t["scale"]) for t in spec.terms)
    raise ValueError("cannot bound the max norm at this size")


def _normalize(spec: HamiltonianSpec) -> HamiltonianSpec:
    nrm = _max_norm(spec)
    if nrm > 1.0 + 1e-12:
        spec.normalization *= nrm
    return spec


def band(n: int, entries: dict, d: int) -> HamiltonianSpec:
    """d-band Hamiltonian from a dict {(j,k): value}; arithmetic is mod N so
    the band wraps around the ends."""
    N = 1 << n
    if d % 2 == 0:
        raise ValueError("band width must be odd")
    if not 1 <= d <= N:
        raise ValueError("band width out of range")
    half = (d - 1) // 2
    full: dict[tuple[int, int], complex] = {}
    for (j, k), v in entries.items():
        v = complex(v)
        off = (k - j) % N
        if not (off <= half or off >= N - half):
            raise ValueError(f"entry ({j},{k}) lies outside the {d}-band")
        for (a, b), val in (((j, k), v), ((k, j), v.conjugate())):
            if (a, b) in full and abs(full[(a, b)] - val) > HERMITICITY_TOL:
                raise ValueError(f"entries at ({j},{k})/({k},{j}) are not Hermitian")
            full[(a, b)] = val
    spec = HamiltonianSpec("band", n, d, 1, {"entries": dict(entries), "d": d}, 1.0,
                           terms=[{"entries": full}])
    return _normalize(spec)


def _parse_pauli(string: str, n: int | None = None):
    string = string.strip().upper()
    if not string or any(c not in "IXYZ" for c in string):
        raise ValueError(f"malformed Pauli string {string!r}")
    if n is not None and len(string) != n:
        raise ValueError(f"Pauli string length {len(string)} != n={n}")
    # qubit i = character i; s bit set where the factor is off-diagonal
    s = 0
    for i, c in enumerate(string):
        if c in "XY":
            s |= 1 << i
    return string, s


def pauli_product(string: str, scale: float = 1.0) -> HamiltonianSpec:
    string, s = _parse_pauli(string)
    n = len(string)
    if abs(complex(scale).imag) > HERMITICITY_TOL:
        raise ValueError("complex scale would break Hermiticity")
    scale = complex(scale).real
    spec = HamiltonianSpec("pauli_product", n, 1, 1, {"string": string, "scale": scale},
                           1.0, terms=[{"string": string, "scale": scale, "s": s}])
    return _normalize(spec)


def pauli_sum(terms: list, n: int | None = None) -> HamiltonianSpec:
    """terms: list of (pauli string, real scale)."""
    if not terms:
        raise ValueError("empty Pauli sum")
    n = n or len(terms[0][0])
    parsed = []
    for string, scale in terms:
        string, s = _parse_pauli(string, n)
        if abs(complex(scale).imag) > HERMITICITY_TOL:
            raise ValueError("term scales must be real")
        parsed.append({"string": string, "scale": complex(scale).real, "s": s})
    spec = HamiltonianSpec("pauli_sum", n, 1, len(parsed),
                           {"terms": [(t["string"], t["scale"]) for t in parsed]}, 1.0,
                           terms=parsed)
    return _normalize(spec)


def _check_clause(mask: int, block: np.ndarray, n: int):
    l = _hweight(mask)
    if mask <= 0 or mask >= (1 << n):
        raise ValueError("clause mask out of range")
    block = np.asarray(block, dtype=complex)
    if block.shape != (1 << l, 1 << l):
        raise ValueError(f"clause block must be {1 << l}x{1 << l} for a weight-{l} mask")
    if np.linalg.norm(block - block.conj().T, np.inf) > HERMITICITY_TOL:
        raise ValueError("clause block is not Hermitian")
    return l, block


def local_clause(n: int, mask: int, block) -> HamiltonianSpec:
    l, block = _check_clause(mask, block, n)
    spec = HamiltonianSpec("local_clause", n, 1 << l, 1, {"mask": mask, "l": l},
                           1.0, terms=[{"s": mask, "block": block}])
    return _normalize(spec)


def local_hamiltonian(n: int, clauses: list) -> HamiltonianSpec:
    """clauses: list of (mask, block); all clauses must share one locality."""
    if not clauses:
        raise ValueError("empty clause list")
    parsed = []
    ls = set()
    for mask, block in clauses:
        l, block = _check_clause(mask, block, n)
        ls.add(l)
        parsed.append({"s": mask, "block": block})
    if len(ls) != 1:
        raise ValueError("clauses must share a single locality")
    l = ls.pop()
    spec = HamiltonianSpec("local_hamiltonian", n, 1 << l, len(parsed),
                           {"l": l, "masks": [t["s"] for t in parsed]}, 1.0, terms=parsed)
    return _normalize(spec)


def make_family(family: str, **params) -> HamiltonianSpec:
    builders = {"band": band, "pauli_product": pauli_product, "pauli_sum": pauli_sum,
                "local_clause": local_clause, "local_hamiltonian": local_hamiltonian}
    if family not in builders:
        raise ValueError(f"unknown family {family!r}")
    return builders[family](**params)


def example_band_4x4() -> HamiltonianSpec:
    """The 4x4 3-band example with +-i off-diagonals and a negative diagonal."""
    e = {(0, 0): 1, (0, 1): 1j, (1, 0): -1j, (1, 1): 2, (1, 2): 3, (2, 1): 3,
         (2, 2): -1, (2, 3): -1j, (3, 2): 1j, (3, 3): 1}
    return band(2, e, 3)


# ---------------------------------------------------------------------------
# entry oracle


class EntryOracle:
    """Entry values as written by entry queries into the entry register.

    Exact mode (bits=None): the query writes an entry id (an index into the
    exact table), so rotations see full double precision.  Quantized mode:
    the query writes b bits of fixed point (b/2 per real/imaginary component,
    round to nearest on [-1, 1]); the upper triangle is quantized and the
    lower triangle mirrored, keeping the stored matrix Hermitian.  Rescaling
    by the overlap count happens downstream, in the rotation.
    """

    def __init__(self, spec: HamiltonianSpec, bits: int | None = None):
        if bits is not None and (bits < 4 or bits % 2):
            raise ValueError("bits must be an even number >= 4")
        self.spec = spec
        self.bits = bits
        self._stored: dict[tuple[int, int], complex] = {}
        self._table: list[complex] = [0j]
        self._ids: dict[tuple[int, int], int] = {}
        id_by_value: dict[complex, int] = {0j: 0}
        for j, k, _ in spec.edge_list():
            z = self._stored_value(j, k)
            self._stored[(j, k)] = z
            if bits is None:
                if z not in id_by_value:
                    id_by_value[z] = len(self._table)
                    self._table.append(z)
                self._ids[(j, k)] = id_by_value[z]
        self.register_width = bits if bits is not None else \
            max(1, (len(self._table) - 1).bit_length())

    def _stored_value(self, j: int, k: int) -> complex:
        a, b = (j, k) if j <= k else (k, j)
        z = self.spec.entry(a, b)
        if self.bits is not None:
            z = self._fixq(z.real) + 1j * self._fixq(z.imag)
        return z if j <= k else z.conjugate()

    def _fixq(self, x: float) -> float:
        scale = 1 << (self.bits // 2 - 1)
        return max(-scale, min(scale - 1, round(x * scale))) / scale

    def encode(self, j: int, k: int) -> int:
        """Register content written by a query at (j, k)."""
        if self.bits is None:
            return self._ids.get((j, k), 0)
        z = self._stored.get((j, k))
        if z is None:
            return 0
        return self._pack_fix(z.real) | (self._pack_fix(z.imag) << (self.bits // 2))

    def decode(self, reg: int) -> complex:
        """Entry value represented by a register content."""
        if self.bits is None:
            return self._table[reg]
        half = self.bits // 2
        return complex(self._unpack_fix(reg & ((1 << half) - 1)),
                       self._unpack_fix(reg >> half))

    def _pack_fix(self, x: float) -> int:
        half = self.bits // 2
        scale = 1 << (half - 1)
        v = max(-scale, min(scale - 1, int(round(x * scale))))
        return v & ((1 << half) - 1)  # two's complement

    def _unpack_fix(self, v: int) -> float:
        half = self.bits // 2
        if v >= 1 << (half - 1):
            v -= 1 << half
        return v / (1 << (half - 1))

    def stored_value(self, j: int, k: int) -> complex:
        return self._stored.get((j, k), 0j)

    def quantization_error(self) -> float:
        worst = 0.0
        for (j, k), z in self._stored.items():
            worst = max(worst, abs(z - self.spec.entry(j, k)))
        return worst

    def min_nonzero_magnitude(self) -> float:
        mags = [abs(v) for v in self._stored.values() if v != 0]
        return min(mags) if mags else 1.0
