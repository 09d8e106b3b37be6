"""Layered circuit DAG with exact desk-scale semantics and per-resource cost accounting.

Nodes are one/two-qubit gates, oracle queries, classical-reversible composite
blocks, basis-controlled small unitaries, and small dense state-preparation
unitaries.  Costs are counted along wire chains: the depth of a resource class
is the largest total charge on any path of nodes sharing qubits, the size is
the total charge.  Evaluation is sparse (dict of basis amplitudes keyed by
integer bit masks), so register widths are unbounded; dense helpers exist for
small circuits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PRUNE_DEFAULT = 1e-18


class SupportOverflow(RuntimeError):
    """Sparse evaluation exceeded the configured support cap."""


@dataclass
class CostConstants:
    """Recorded constants for composite-block charges.

    Arithmetic on b bits is charged arith_c1*ceil(log2 b)^2 depth and
    arith_c2*b^4 size.  Controlled walk/select operators are charged
    ctrl_factor times their uncontrolled cost.
    """
    arith_c1: int = 1
    arith_c2: int = 1
    ctrl_factor: int = 2


DEFAULT_COSTS = CostConstants()


def clog2(x: int) -> int:
    return max(1, int(math.ceil(math.log2(max(2, x)))))


def arith_charges(bits: int, consts: CostConstants = DEFAULT_COSTS) -> tuple[int, int]:
    """(depth, size) charge for an arithmetic block on `bits` bits."""
    lb = clog2(bits)
    return consts.arith_c1 * lb * lb, consts.arith_c2 * bits ** 4


def rotation_charges(bits: int, n_rotations: int = 2,
                     consts: CostConstants = DEFAULT_COSTS) -> tuple[int, int]:
    """Charge for an entry-conditioned rotation: angle arithmetic plus
    n_rotations fan-out controlled rotations on a `bits`-bit angle."""
    ad, asz = arith_charges(bits, consts)
    lb = clog2(bits)
    return ad + n_rotations * (2 * lb + 3), asz + n_rotations * (3 * bits + 2)


# ---------------------------------------------------------------------------
# gate matrices

_S2 = 1.0 / math.sqrt(2.0)
GATES = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
}


def rot_matrix(axis: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "z":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise ValueError(f"unknown axis {axis!r}")


def _cnot_matrix() -> np.ndarray:
    # qubit order (control, target); basis index = control*2 + ... packing is
    # little-endian in the qubits tuple: value bit0 = first listed qubit.
    m = np.eye(4, dtype=complex)
    # states with control bit set: indices 1 (c=1,t=0) and 3 (c=1,t=1) swap targets
    m[[1, 3]] = m[[3, 1]]
    return m


GATES2 = {
    "cx": _cnot_matrix(),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
    "swap": np.eye(4, dtype=complex)[[0, 2, 1, 3]],
}


def _crot_matrix(axis: str, theta: float) -> np.ndarray:
    m = np.eye(4, dtype=complex)
    r = rot_matrix(axis, theta)
    # control is qubit bit0, target bit1
    m[1, 1], m[1, 3] = r[0, 0], r[0, 1]
    m[3, 1], m[3, 3] = r[1, 0], r[1, 1]
    return m


# ---------------------------------------------------------------------------
# nodes


class Node:
    kind = "node"
    qubits: tuple[int, ...]

    def gate_charges(self, queries_as_gates: bool) -> tuple[int, int]:
        raise NotImplementedError

    def query_id(self):
        return None

    def apply_sparse(self, st: dict, prune: float) -> dict:
        raise NotImplementedError

    def adjoint(self) -> "Node":
        raise NotImplementedError

    def conjugated(self) -> "Node":
        raise NotImplementedError

    def renamed(self, qmap) -> "Node":
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits)}


def _pack(key: int, qubits) -> int:
    v = 0
    for i, q in enumerate(qubits):
        v |= ((key >> q) & 1) << i
    return v


def _scatter(v: int, qubits) -> int:
    k = 0
    for i, q in enumerate(qubits):
        k |= ((v >> i) & 1) << q
    return k


class GateNode(Node):
    kind = "gate"
    __slots__ = ("name", "qubits", "matrix", "_fast")

    def __init__(self, name: str, qubits, matrix: np.ndarray):
        self.name = name
        self.qubits = tuple(qubits)
        self.matrix = matrix
        self._fast = None
        if len(qubits) == 2:
            if np.array_equal(matrix, GATES2["cx"]):
                self._fast = "cx"
            elif np.array_equal(matrix, GATES2["swap"]):
                self._fast = "swap"

    def gate_charges(self, queries_as_gates):
        return 1, 1

    def apply_sparse(self, st, prune):
        m = self.matrix
        if len(self.qubits) == 1:
            bit = 1 << self.qubits[0]
            if m[0, 1] == 0 and m[1, 0] == 0:
                d0, d1 = m[0, 0], m[1, 1]
                return {k: a * (d1 if k & bit else d0) for k, a in st.items()}
            if m[0, 0] == 0 and m[1, 1] == 0:
                o0, o1 = m[1, 0], m[0, 1]
                return {k ^ bit: a * (o1 if k & bit else o0) for k, a in st.items()}
            m00, m01, m10, m11 = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
            out = {}
            get = out.get
            for k, a in st.items():
                if k & bit:
                    base = k ^ bit
                    c0, c1 = m01 * a, m11 * a
                else:
                    base = k
                    c0, c1 = m00 * a, m10 * a
                if c0 != 0:
                    out[base] = get(base, 0j) + c0
                if c1 != 0:
                    kk = base | bit
                    out[kk] = get(kk, 0j) + c1
            return {k: v for k, v in out.items() if abs(v) > prune}
        q0, q1 = self.qubits
        b0, b1 = 1 << q0, 1 << q1
        if self._fast == "cx":
            return {(k ^ b1 if k & b0 else k): a for k, a in st.items()}
        if self._fast == "swap":
            both = b0 | b1
            return {(k ^ both if bool(k & b0) != bool(k & b1) else k): a
                    for k, a in st.items()}
        nz = [[u for u in range(4) if m[u, v] != 0] for v in range(4)]
        permlike = all(len(c) <= 1 for c in nz)
        out = {}
        get = out.get
        for k, a in st.items():
            v = (1 if k & b0 else 0) | (2 if k & b1 else 0)
            base = k & ~(b0 | b1)
            for u in nz[v]:
                kk = base | (b0 if u & 1 else 0) | (b1 if u & 2 else 0)
                out[kk] = get(kk, 0j) + a * m[u, v]
        if permlike:
            return out
        return {k: v for k, v in out.items() if abs(v) > prune}

    def adjoint(self):
        return GateNode(self.name + "+", self.qubits, self.matrix.conj().T)

    def conjugated(self):
        return GateNode(self.name + "*", self.qubits, self.matrix.conj())

    def renamed(self, qmap):
        return GateNode(self.name, tuple(qmap[q] for q in self.qubits), self.matrix)

    def descriptor(self):
        return {"kind": "gate", "name": self.name, "qubits": list(self.qubits)}


class PermNodeBase(Node):
    """Classical reversible semantics: a bijection on the packed support value."""
    __slots__ = ("label", "qubits", "fn", "fn_inv", "_mask", "_dcache")

    def __init__(self, label, qubits, fn, fn_inv):
        self.label = label
        self.qubits = tuple(qubits)
        self.fn = fn
        self.fn_inv = fn_inv
        self._mask = 0
        for q in self.qubits:
            self._mask |= 1 << q
        self._dcache: dict[int, int] = {}

    def apply_sparse(self, st, prune):
        # cache the key-XOR delta per packed support value; repeated values
        # dominate in walk states
        qubits, fn = self.qubits, self.fn
        cache = self._dcache
        out = {}
        for k, a in st.items():
            v = 0
            for i, q in enumerate(qubits):
                v |= ((k >> q) & 1) << i
            d = cache.get(v)
            if d is None:
                x = v ^ fn(v)
                d = 0
                i = 0
                while x:
                    if x & 1:
                        d |= 1 << qubits[i]
                    x >>= 1
                    i += 1
                cache[v] = d
            out[k ^ d] = a
        return out

    def validate_bijection(self, rng=None, trials=200):
        """Exhaustive on <= 16 support bits, sampled otherwise."""
        w = len(self.qubits)
        if w <= 16:
            seen = set()
            for v in range(1 << w):
                u = self.fn(v)
                if self.fn_inv(u) != v:
                    raise ValueError(f"{self.label}: inverse mismatch at {v}")
                seen.add(u)
            if len(seen) != 1 << w:
                raise ValueError(f"{self.label}: not a bijection")
        else:
            rng = rng or np.random.default_rng(0)
            for v in rng.integers(0, 1 << w, trials, dtype=np.uint64).tolist():
                if self.fn_inv(self.fn(int(v))) != int(v):
                    raise ValueError(f"{self.label}: inverse mismatch at {v}")


class QueryNode(PermNodeBase):
    kind = "query"
    __slots__ = ("oracle_id",)

    def __init__(self, oracle_id, label, qubits, fn, fn_inv):
        super().__init__(label, qubits, fn, fn_inv)
        self.oracle_id = oracle_id

    def gate_charges(self, queries_as_gates):
        return (1, 1) if queries_as_gates else (0, 0)

    def query_id(self):
        return self.oracle_id

    def adjoint(self):
        return QueryNode(self.oracle_id, self.label + "+", self.qubits, self.fn_inv, self.fn)

    def conjugated(self):
        return self

    def renamed(self, qmap):
        return QueryNode(self.oracle_id, self.label,
                         tuple(qmap[q] for q in self.qubits), self.fn, self.fn_inv)

    def descriptor(self):
        return {"kind": "query", "oracle": self.oracle_id, "label": self.label,
                "qubits": list(self.qubits)}


class BlockNode(PermNodeBase):
    kind = "block"
    __slots__ = ("block_id", "depth_charge", "size_charge")

    def __init__(self, block_id, qubits, fn, fn_inv, depth_charge=1, size_charge=1):
        super().__init__(block_id, qubits, fn, fn_inv)
        self.block_id = block_id
        self.depth_charge = depth_charge
        self.size_charge = size_charge

    def gate_charges(self, queries_as_gates):
        return self.depth_charge, self.size_charge

    def adjoint(self):
        return BlockNode(self.block_id + "+", self.qubits, self.fn_inv, self.fn,
                         self.depth_charge, self.size_charge)

    def conjugated(self):
        return self

    def renamed(self, qmap):
        n = BlockNode(self.block_id, tuple(qmap[q] for q in self.qubits),
                      self.fn, self.fn_inv, self.depth_charge, self.size_charge)
        return n

    def descriptor(self):
        return {"kind": "block", "block": self.block_id, "qubits": list(self.qubits),
                "depth_charge": self.depth_charge, "size_charge": self.size_charge}


def xor_block(block_id, in_qubits, out_qubits, f, depth_charge=1, size_charge=1):
    """Reversible embedding (x, z) -> (x, z ^ f(x)); always a bijection."""
    nin = len(in_qubits)

    def fn(v):
        x = v & ((1 << nin) - 1)
        return v ^ (f(x) << nin)

    return BlockNode(block_id, tuple(in_qubits) + tuple(out_qubits), fn, fn,
                     depth_charge, size_charge)


def xor_query(oracle_id, label, in_qubits, out_qubits, f):
    nin = len(in_qubits)

    def fn(v):
        x = v & ((1 << nin) - 1)
        return v ^ (f(x) << nin)

    return QueryNode(oracle_id, label, tuple(in_qubits) + tuple(out_qubits), fn, fn)


class CtrlUnitaryNode(Node):
    """Small unitary on 1-2 target qubits selected by the basis value of a
    control register.  Used for entry-conditioned re-weight rotations and
    coefficient state preparation; charges follow the fan-out construction."""
    kind = "rotation"
    __slots__ = ("label", "controls", "targets", "qubits", "ufn",
                 "depth_charge", "size_charge", "_cache")

    def __init__(self, label, controls, targets, ufn, depth_charge, size_charge):
        self.label = label
        self.controls = tuple(controls)
        self.targets = tuple(targets)
        self.qubits = self.controls + self.targets
        self.ufn = ufn
        self.depth_charge = depth_charge
        self.size_charge = size_charge
        self._cache = {}

    def gate_charges(self, queries_as_gates):
        return self.depth_charge, self.size_charge

    def _matrix(self, cv):
        m = self._cache.get(cv)
        if m is None:
            m = np.asarray(self.ufn(cv), dtype=complex)
            self._cache[cv] = m
        return m

    def apply_sparse(self, st, prune):
        tb = [1 << q for q in self.targets]
        nt = len(tb)
        out = {}
        for k, a in st.items():
            cv = _pack(k, self.controls)
            m = self._matrix(cv)
            v = 0
            base = k
            for i, b in enumerate(tb):
                if k & b:
                    v |= 1 << i
                base &= ~b
            for u in range(1 << nt):
                c = m[u, v]
                if c != 0:
                    kk = base
                    for i, b in enumerate(tb):
                        if u & (1 << i):
                            kk |= b
                    out[kk] = out.get(kk, 0j) + a * c
        return {k: v for k, v in out.items() if abs(v) > prune}

    def adjoint(self):
        ufn = self.ufn
        return CtrlUnitaryNode(self.label + "+", self.controls, self.targets,
                               lambda cv: np.asarray(ufn(cv)).conj().T,
                               self.depth_charge, self.size_charge)

    def conjugated(self):
        ufn = self.ufn
        return CtrlUnitaryNode(self.label + "*", self.controls, self.targets,
                               lambda cv: np.asarray(ufn(cv)).conj(),
                               self.depth_charge, self.size_charge)

    def renamed(self, qmap):
        return CtrlUnitaryNode(self.label, tuple(qmap[q] for q in self.controls),
                               tuple(qmap[q] for q in self.targets), self.ufn,
                               self.depth_charge, self.size_charge)

    def descriptor(self):
        return {"kind": "rotation", "label": self.label,
                "controls": list(self.controls), "targets": list(self.targets),
                "depth_charge": self.depth_charge, "size_charge": self.size_charge}


class PrepNode(Node):
    """Explicit small dense unitary (state preparation over a non-power-of-two
    range, etc.) on a handful of qubits."""
    kind = "prep"
    __slots__ = ("label", "qubits", "matrix", "depth_charge", "size_charge")

    def __init__(self, label, qubits, matrix, depth_charge=1, size_charge=1):
        self.label = label
        self.qubits = tuple(qubits)
        self.matrix = np.asarray(matrix, dtype=complex)
        self.depth_charge = depth_charge
        self.size_charge = size_charge

    def gate_charges(self, queries_as_gates):
        return self.depth_charge, self.size_charge

    def apply_sparse(self, st, prune):
        qb = [1 << q for q in self.qubits]
        nq = len(qb)
        m = self.matrix
        out = {}
        for k, a in st.items():
            v = 0
            base = k
            for i, b in enumerate(qb):
                if k & b:
                    v |= 1 << i
                base &= ~b
            for u in range(1 << nq):
                c = m[u, v]
                if c != 0:
                    kk = base
                    for i, b in enumerate(qb):
                        if u & (1 << i):
                            kk |= b
                    out[kk] = out.get(kk, 0j) + a * c
        return {k: v for k, v in out.items() if abs(v) > prune}

    def adjoint(self):
        return PrepNode(self.label + "+", self.qubits, self.matrix.conj().T,
                        self.depth_charge, self.size_charge)

    def conjugated(self):
        return PrepNode(self.label + "*", self.qubits, self.matrix.conj(),
                        self.depth_charge, self.size_charge)

    def renamed(self, qmap):
        return PrepNode(self.label, tuple(qmap[q] for q in self.qubits),
                        self.matrix, self.depth_charge, self.size_charge)

    def descriptor(self):
        return {"kind": "prep", "label": self.label, "qubits": list(self.qubits),
                "depth_charge": self.depth_charge, "size_charge": self.size_charge}


# ---------------------------------------------------------------------------
# cost profile


@dataclass
class CostProfile:
    gate_depth: int = 0
    gate_size: int = 0
    query_depth: dict = field(default_factory=dict)
    query_size: dict = field(default_factory=dict)

    def validate(self):
        if self.gate_depth < 0 or self.gate_size < 0 or self.gate_depth > self.gate_size:
            raise ValueError("gate depth/size inconsistent")
        for oid, d in self.query_depth.items():
            if d < 0 or d > self.query_size.get(oid, 0):
                raise ValueError(f"query depth/size inconsistent for {oid}")
        return self

    def sequential(self, other: "CostProfile") -> "CostProfile":
        qd = dict(self.query_depth)
        qs = dict(self.query_size)
        for oid, d in other.query_depth.items():
            qd[oid] = qd.get(oid, 0) + d
        for oid, s in other.query_size.items():
            qs[oid] = qs.get(oid, 0) + s
        return CostProfile(self.gate_depth + other.gate_depth,
                           self.gate_size + other.gate_size, qd, qs)

    def parallel(self, other: "CostProfile") -> "CostProfile":
        qd = dict(self.query_depth)
        qs = dict(self.query_size)
        for oid, d in other.query_depth.items():
            qd[oid] = max(qd.get(oid, 0), d)
        for oid, s in other.query_size.items():
            qs[oid] = qs.get(oid, 0) + s
        return CostProfile(max(self.gate_depth, other.gate_depth),
                           self.gate_size + other.gate_size, qd, qs)

    def scaled(self, k: int) -> "CostProfile":
        return CostProfile(self.gate_depth * k, self.gate_size * k,
                           {o: d * k for o, d in self.query_depth.items()},
                           {o: s * k for o, s in self.query_size.items()})

    def dominates(self, other: "CostProfile") -> bool:
        """Every counter of self >= the matching counter of other."""
        if self.gate_depth < other.gate_depth or self.gate_size < other.gate_size:
            return False
        for oid, d in other.query_depth.items():
            if self.query_depth.get(oid, 0) < d:
                return False
        for oid, s in other.query_size.items():
            if self.query_size.get(oid, 0) < s:
                return False
        return True

    def as_dict(self):
        return {"gate_depth": self.gate_depth, "gate_size": self.gate_size,
                "query_depth": dict(sorted(self.query_depth.items())),
                "query_size": dict(sorted(self.query_size.items()))}


# ---------------------------------------------------------------------------
# the DAG


class CircuitDag:
    """Immutable node sequence with greedy-earliest layering.

    Qubit i corresponds to bit (1 << i) of a sparse basis key.
    """

    def __init__(self, num_qubits: int, nodes=()):
        self.num_qubits = num_qubits
        self.nodes = tuple(nodes)
        self._layers = None
        for nd in self.nodes:
            for q in nd.qubits:
                if not 0 <= q < num_qubits:
                    raise ValueError(f"qubit {q} out of range for width {num_qubits}")

    # -- structure ---------------------------------------------------------

    def layers(self):
        if self._layers is None:
            free = [0] * self.num_qubits
            layers: list[list[int]] = []
            for i, nd in enumerate(self.nodes):
                lay = max((free[q] for q in nd.qubits), default=0)
                while len(layers) <= lay:
                    layers.append([])
                layers[lay].append(i)
                for q in nd.qubits:
                    free[q] = lay + 1
            self._layers = layers
        return self._layers

    def cost(self, queries_as_gates: bool = False) -> CostProfile:
        gd = [0] * self.num_qubits
        gate_size = 0
        qdepth: dict[str, list[int]] = {}
        qsize: dict[str, int] = {}
        for nd in self.nodes:
            dch, sch = nd.gate_charges(queries_as_gates)
            if dch or sch:
                start = max((gd[q] for q in nd.qubits), default=0)
                for q in nd.qubits:
                    gd[q] = start + dch
                gate_size += sch
            else:
                # zero-charge nodes still order the wire
                start = max((gd[q] for q in nd.qubits), default=0)
                for q in nd.qubits:
                    gd[q] = start
            oid = nd.query_id()
            if oid is not None:
                arr = qdepth.setdefault(oid, [0] * self.num_qubits)
                start = max((arr[q] for q in nd.qubits), default=0)
                for q in nd.qubits:
                    arr[q] = start + 1
                qsize[oid] = qsize.get(oid, 0) + 1
        return CostProfile(max(gd, default=0), gate_size,
                           {o: max(a) for o, a in qdepth.items()}, qsize).validate()

    def depth_where(self, pred) -> int:
        """Longest wire path counting only nodes matching pred (unit charge)."""
        d = [0] * self.num_qubits
        for nd in self.nodes:
            start = max((d[q] for q in nd.qubits), default=0)
            end = start + (1 if pred(nd) else 0)
            for q in nd.qubits:
                d[q] = end
        return max(d, default=0)

    def count_where(self, pred) -> int:
        return sum(1 for nd in self.nodes if pred(nd))

    # -- algebra -----------------------------------------------------------

    def then(self, other: "CircuitDag", placement=None) -> "CircuitDag":
        """Sequential composition; `placement` maps other's qubits into self's."""
        if placement is None:
            if other.num_qubits != self.num_qubits:
                raise ValueError("width mismatch; supply a placement")
            return CircuitDag(self.num_qubits, self.nodes + other.nodes)
        mapped = []
        for nd in other.nodes:
            mapped.append(nd.renamed(placement))
        width = max([self.num_qubits] + [q + 1 for q in placement.values()])
        return CircuitDag(width, self.nodes + tuple(mapped))

    def tensor(self, other: "CircuitDag") -> "CircuitDag":
        off = self.num_qubits
        qmap = {q: q + off for q in range(other.num_qubits)}
        return CircuitDag(off + other.num_qubits,
                          self.nodes + tuple(nd.renamed(qmap) for nd in other.nodes))

    def renamed(self, qmap, width=None) -> "CircuitDag":
        width = width or (max(qmap.values()) + 1 if qmap else self.num_qubits)
        return CircuitDag(width, tuple(nd.renamed(qmap) for nd in self.nodes))

    def adjoint(self) -> "CircuitDag":
        return CircuitDag(self.num_qubits, tuple(nd.adjoint() for nd in reversed(self.nodes)))

    def conjugated(self) -> "CircuitDag":
        return CircuitDag(self.num_qubits, tuple(nd.conjugated() for nd in self.nodes))

    # -- evaluation --------------------------------------------------------

    def apply(self, state, prune: float = PRUNE_DEFAULT,
              max_support: int | None = None,
              max_work: int | None = None) -> dict:
        """Apply to a sparse state ({key: amp}) or a basis key (int).

        Raises SupportOverflow when the intermediate support exceeds
        max_support (or the cumulative per-node support exceeds max_work), so
        callers can fall back to composed measurements.
        """
        if isinstance(state, int):
            state = {state: 1.0 + 0j}
        work = 0
        for nd in self.nodes:
            state = nd.apply_sparse(state, prune)
            if max_support is not None and len(state) > max_support:
                raise SupportOverflow(f"sparse support {len(state)} > {max_support}")
            if max_work is not None:
                work += len(state)
                if work > max_work:
                    raise SupportOverflow(f"evaluation work {work} > {max_work}")
        return state

    def apply_dense(self, vec: np.ndarray, prune: float = PRUNE_DEFAULT) -> np.ndarray:
        st = {i: complex(a) for i, a in enumerate(vec) if a != 0}
        st = self.apply(st, prune)
        out = np.zeros(1 << self.num_qubits, dtype=complex)
        for k, a in st.items():
            out[k] = a
        return out

    def unitary(self, cap: int = 14) -> np.ndarray:
        if self.num_qubits > cap:
            raise ValueError(f"{self.num_qubits} qubits exceeds dense cap {cap}")
        dim = 1 << self.num_qubits
        u = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            for k, a in self.apply(col).items():
                u[k, col] = a
        return u

    def unitarity_defect(self, sample: int | None = None, seed: int = 0) -> float:
        """max |<col_i|col_j> - delta_ij| over all (or sampled) basis columns."""
        dim = 1 << self.num_qubits
        if sample is None or sample >= dim:
            cols = list(range(dim))
        else:
            cols = sorted(np.random.default_rng(seed).choice(dim, sample, replace=False).tolist())
        states = [self.apply(c) for c in cols]
        worst = 0.0
        for i, si in enumerate(states):
            for j in range(i, len(states)):
                sj = states[j]
                small, big = (si, sj) if len(si) < len(sj) else (sj, si)
                ip = sum(np.conj(si.get(k, 0j)) * a for k, a in sj.items()) \
                    if len(sj) <= len(si) else \
                    sum(np.conj(a) * sj.get(k, 0j) for k, a in si.items())
                tgt = 1.0 if i == j else 0.0
                worst = max(worst, abs(ip - tgt))
        return worst

    # -- io ------------------------------------------------------------------

    def to_json(self) -> str:
        layers = [[self.nodes[i].descriptor() for i in lay] for lay in self.layers()]
        return json.dumps({"num_qubits": self.num_qubits, "layers": layers,
                           "cost": self.cost().as_dict()}, indent=1)


def compose(a: CircuitDag, b: CircuitDag, placement=None, parallel: bool = False) -> CircuitDag:
    """Sequential (default) or parallel merge.  Parallel merge requires the
    placed supports to be disjoint."""
    if not parallel:
        return a.then(b, placement)
    if placement is None:
        placement = {q: q for q in range(b.num_qubits)}
    support_a = {q for nd in a.nodes for q in nd.qubits}
    support_b = set()
    for nd in b.nodes:
        support_b.update(placement[q] for q in nd.qubits)
    if support_a & support_b:
        raise ValueError("parallel merge with overlapping placement")
    width = max([a.num_qubits] + [q + 1 for q in placement.values()])
    return CircuitDag(width, a.nodes + tuple(nd.renamed(placement) for nd in b.nodes))


# ---------------------------------------------------------------------------
# primitive constructions


def copy_gate(b: int, width: int = 1) -> CircuitDag:
    """Fan a `width`-bit item out to b copies: |x>|0>^(b-1) -> |x>^b.

    Item i occupies qubits [i*width, (i+1)*width).  CNOT tree of depth
    ceil(log2 b), size (b-1)*width.
    """
    if b < 1:
        raise ValueError("fanout must be >= 1")
    nodes = []
    have = 1
    while have < b:
        new = min(have, b - have)
        for i in range(new):
            src, dst = i, have + i
            for w in range(width):
                nodes.append(GateNode("cx", (src * width + w, dst * width + w), GATES2["cx"]))
        have += new
    return CircuitDag(b * width, nodes)


def ctrl_rotation(axis: str, b: int) -> CircuitDag:
    """|gamma>|psi> -> |gamma> R_axis(2*pi*gamma/2^b)|psi>.

    Layout: qubits [0,b) hold gamma (bit 0 least significant), qubit b is the
    target, [b+1, 2b) are fan-out work qubits.  Counted layers are at most
    2*ceil(log2 b) + 3.
    """
    if axis not in ("x", "y", "z"):
        raise ValueError("axis must be x, y or z")
    if b < 1:
        raise ValueError("need at least one control bit")
    tgt = b
    work = list(range(b + 1, 2 * b))
    nodes = []
    pre, post = [], []
    if axis == "x":
        pre = [GateNode("h", (tgt,), GATES["h"])]
        post = [GateNode("h", (tgt,), GATES["h"])]
    elif axis == "y":
        # R_y(t) = (SH) R_z(t) (SH)^dag; one basis-change gate each side keeps
        # the counted layers at 2*ceil(log2 b) + 3
        sh = GATES["s"] @ GATES["h"]
        pre = [GateNode("hsdg", (tgt,), sh.conj().T)]
        post = [GateNode("sh", (tgt,), sh)]
    nodes.extend(pre)
    fan = copy_gate(b, 1).renamed({0: tgt, **{i: work[i - 1] for i in range(1, b)}},
                                  width=2 * b) if b > 1 else None
    if fan:
        nodes.extend(fan.nodes)
    carriers = [tgt] + work
    for ell in range(b):
        theta = 2.0 * math.pi * (1 << ell) / (1 << b)
        nodes.append(GateNode(f"crz[{ell}]", (ell, carriers[ell]), _crot_matrix("z", theta)))
    if fan:
        nodes.extend(fan.adjoint().nodes)
    nodes.extend(post)
    return CircuitDag(2 * b, nodes)


@dataclass(frozen=True)
class OpBlockSpec:
    """Associative binary operator on `width`-bit words for tree_reduce."""
    name: str
    width: int
    fn: object  # (a, b) -> a op b

    def check_associative(self, seed=0, trials=60):
        rng = np.random.default_rng(seed)
        hi = 1 << self.width
        for _ in range(trials):
            a, b, c = (int(x) for x in rng.integers(0, hi, 3))
            if self.fn(self.fn(a, b), c) != self.fn(a, self.fn(b, c)):
                raise ValueError(f"operator {self.name} is not associative "
                                 f"(witness {a},{b},{c})")


def tree_reduce(op: OpBlockSpec, m: int) -> CircuitDag:
    """Garbage-free x_1 op ... op x_m into an output register.

    Layout: inputs occupy m*width qubits, the output register the next
    `width`, scratch partial results after that.  The combine path uses
    ceil(log2 m) levels of op blocks, mirrored for the uncompute, so op-block
    depth is 2*ceil(log2 m) (+1 copy layer).
    """
    if m < 1:
        raise ValueError("need at least one operand")
    op.check_associative()
    w = m * op.width
    out = list(range(w, w + op.width))
    nodes = []
    if m == 1:
        for i in range(op.width):
            nodes.append(GateNode("cx", (i, out[i]), GATES2["cx"]))
        return CircuitDag(w + op.width, nodes)

    scratch_base = w + op.width
    scratch_used = 0
    fwd = []

    def combine(a_q, b_q):
        nonlocal scratch_used
        z = list(range(scratch_base + scratch_used, scratch_base + scratch_used + op.width))
        scratch_used += op.width
        nin = 2 * op.width

        def f(x):
            a = x & ((1 << op.width) - 1)
            b = x >> op.width
            return op.fn(a, b)

        fwd.append(xor_block(f"op:{op.name}", tuple(a_q) + tuple(b_q), tuple(z), f))
        return z

    regs = [list(range(i * op.width, (i + 1) * op.width)) for i in range(m)]
    while len(regs) > 1:
        nxt = []
        for i in range(0, len(regs) - 1, 2):
            nxt.append(combine(regs[i], regs[i + 1]))
        if len(regs) % 2:
            nxt.append(regs[-1])
        regs = nxt
    nodes.extend(fwd)
    for i in range(op.width):
        nodes.append(GateNode("cx", (regs[0][i], out[i]), GATES2["cx"]))
    for nd in reversed(fwd):
        nodes.append(nd.adjoint())
    return CircuitDag(scratch_base + scratch_used, nodes)


def _gadget_tree(controls, scratch_base, kind: str):
    """Balanced tree of reversible two-bit gadgets (AND or OR) into one result
    bit.  Returns (forward nodes, result qubit, scratch used); each level is a
    layer of disjoint unit-charge blocks."""
    fns = {"and": lambda x: 1 if x == 3 else 0, "or": lambda x: 1 if x else 0}
    fn = fns[kind]
    nodes = []
    used = 0
    regs = list(controls)
    while len(regs) > 1:
        nxt = []
        for i in range(0, len(regs) - 1, 2):
            z = scratch_base + used
            used += 1
            nodes.append(xor_block(kind, (regs[i], regs[i + 1]), (z,), fn))
            nxt.append(z)
        if len(regs) % 2:
            nxt.append(regs[-1])
        regs = nxt
    return nodes, regs[0], used


def ctrl_z_multi(b: int) -> CircuitDag:
    """Z on the target iff all b control bits are 1.

    Layout: controls [0,b), target b, AND-tree scratch after.  Counted layers
    are 2*ceil(log2 b) + 1 <= 2*ceil(log2 b) + 3.
    """
    if b < 1:
        raise ValueError("need at least one control bit")
    if b == 1:
        return CircuitDag(2, [GateNode("cz", (0, 1), GATES2["cz"])])
    tree, res, used = _gadget_tree(list(range(b)), b + 1, "and")
    nodes = list(tree)
    nodes.append(GateNode("cz", (res, b), GATES2["cz"]))
    nodes.extend(nd.adjoint() for nd in reversed(tree))
    return CircuitDag(b + 1 + used, nodes)


def reflect_zero(qubits, scratch_base, width) -> CircuitDag:
    """(2|0..0><0..0| - 1) on `qubits`: phase -1 on every other basis state.

    Realized as an OR tree into a scratch bit, Z on it, and uncompute.
    """
    qubits = list(qubits)
    if not qubits:
        raise ValueError("empty reflection support")
    if len(qubits) == 1:
        # 2|0><0| - 1 = diag(1, -1) = Z
        return CircuitDag(width, [GateNode("z", (qubits[0],), GATES["z"])])
    tree, res, used = _gadget_tree(qubits, scratch_base, "or")
    if scratch_base + used > width:
        raise ValueError("reflection scratch exceeds declared width")
    nodes = list(tree)
    nodes.append(GateNode("z", (res,), GATES["z"]))
    nodes.extend(nd.adjoint() for nd in reversed(tree))
    return CircuitDag(width, nodes)


def uniform_prep_matrix(d: int) -> np.ndarray:
    """Real orthogonal matrix on ceil(log2 d) qubits whose first column is the
    uniform superposition over the first d basis states."""
    nq = max(1, math.ceil(math.log2(d))) if d > 1 else 1
    dim = 1 << nq
    t = np.zeros(dim)
    t[:d] = 1.0 / math.sqrt(d)
    e0 = np.zeros(dim)
    e0[0] = 1.0
    if np.allclose(t, e0):
        return np.eye(dim)
    v = e0 - t
    return np.eye(dim) - 2.0 * np.outer(v, v) / (v @ v)


def global_phase(qubit: int, phi: float) -> GateNode:
    return GateNode("gphase", (qubit,), np.exp(1j * phi) * np.eye(2, dtype=complex))
