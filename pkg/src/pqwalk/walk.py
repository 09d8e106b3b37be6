"""Parallel walk circuits: pre-walk, re-weight, T/S/Q assembly, the sequential
Chebyshev baseline, and block-encoding certification.

Register layout for the power-r walk on n qubits (slot dimension 2N = n value
bits plus one garbage flag):

    a_0 .. a_r    path registers; a_0's value bits are the system
    b_0 .. b_r    mirrored copies carrying the re-weight branches
    w_0 .. w_r-1  term-choice registers (sum Hamiltonians, m > 1)
    scratch       prefix trees, entry registers, overlap counters; all
                  returned to zero inside T

The reversal operator swaps slot a_i with b_{r-i} and w_s with w_{r-1-s}; the
walk step is Q = T^dag S T.  Re-weight rotations act on the flag pair
(a_s, b_{s+1}) of their step: ordinary edges rotate the b-flag between the
kept branch (amplitude sqrt(conj(entry)), directed branch cut for real
negative off-diagonals) and the garbage branch.  A negative self-loop entry
cannot carry its sign in a scalar amplitude (the reversal pairing squares it
away), so the rotation instead emits the two-flag components
c2|a-flag> + c1|b-flag| with 2 Re(c1* c2) = entry; the reversal maps that flag
pair onto the mirrored step's pair and the pairing reproduces the sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import circuit as qc
from .circuit import (BlockNode, CircuitDag, CostConstants, DEFAULT_COSTS, GateNode,
                      GATES, GATES2, PrepNode, CtrlUnitaryNode, QueryNode,
                      arith_charges, rotation_charges, xor_block, xor_query)
from .hamiltonians import EntryOracle, HamiltonianSpec, edge_amplitude
from .refsim import spectral_distance

O_H = "O_H"
O_P = "O_P"

MAX_WALK_QUBITS = 4096
EXACT_BLOCK_TOL = 1e-8


# ---------------------------------------------------------------------------
# layout


@dataclass
class WalkLayout:
    n: int
    r: int
    m: int
    variant: str
    a_val: list = field(default_factory=list)
    a_flag: list = field(default_factory=list)
    b_val: list = field(default_factory=list)
    b_flag: list = field(default_factory=list)
    w: list = field(default_factory=list)
    scratch: dict = field(default_factory=dict)
    num_qubits: int = 0

    def alloc(self, count: int, tag: str | None = None) -> list[int]:
        qs = list(range(self.num_qubits, self.num_qubits + count))
        self.num_qubits += count
        if tag is not None:
            self.scratch.setdefault(tag, []).extend(qs)
        return qs

    @property
    def system(self) -> list[int]:
        return self.a_val[0]

    def layout_ancillas(self) -> list[int]:
        out = []
        for s in range(self.r + 1):
            if s > 0:
                out.extend(self.a_val[s])
            out.append(self.a_flag[s])
            out.extend(self.b_val[s])
            out.append(self.b_flag[s])
        for reg in self.w:
            out.extend(reg)
        return out

    def scratch_qubits(self) -> list[int]:
        return [q for qs in self.scratch.values() for q in qs]

    def key_for(self, j0: int) -> int:
        key = 0
        for i, q in enumerate(self.a_val[0]):
            key |= ((j0 >> i) & 1) << q
        return key

    def system_value(self, key: int) -> int:
        v = 0
        for i, q in enumerate(self.a_val[0]):
            v |= ((key >> q) & 1) << i
        return v

    def nonsystem_mask(self) -> int:
        mask = (1 << self.num_qubits) - 1
        for q in self.a_val[0]:
            mask &= ~(1 << q)
        return mask


def make_layout(spec: HamiltonianSpec, r: int, variant: str) -> WalkLayout:
    m = spec.m if variant == "extended" else 1
    lay = WalkLayout(spec.n, r, m, variant)
    for _ in range(r + 1):
        lay.a_val.append(lay.alloc(spec.n))
        lay.a_flag.append(lay.alloc(1)[0])
    for _ in range(r + 1):
        lay.b_val.append(lay.alloc(spec.n))
        lay.b_flag.append(lay.alloc(1)[0])
    wbits = (m - 1).bit_length() if m > 1 else 0
    for _ in range(r):
        lay.w.append(lay.alloc(wbits) if wbits else [])
    return lay


def declared_ancilla_count(spec: HamiltonianSpec, r: int, variant: str) -> int:
    base = 2 * r * spec.n + 2 * r + spec.n + 2
    if variant == "extended" and spec.m > 1:
        base += r * (spec.m - 1).bit_length()
    return base


# ---------------------------------------------------------------------------
# re-weight amplitudes (shared by the rotation nodes and the reference state)


def _qangle(theta: float, bits: int) -> float:
    step = 2.0 * math.pi / (1 << bits)
    return round(theta / step) * step


def kept_garbage_amps(z: complex, j: int, k: int, bits: int | None):
    """(kept, garbage) branch amplitudes for an ordinary edge (j,k)."""
    mag = min(1.0, abs(z))
    f = edge_amplitude(z, j, k)
    g = math.sqrt(max(0.0, 1.0 - mag))
    if bits is not None and z != 0:
        th = _qangle(2.0 * math.atan2(g, abs(f)), bits)
        ph = _qangle(math.atan2(f.imag, f.real), bits)
        f = math.cos(th / 2.0) * complex(math.cos(ph), math.sin(ph))
        g = math.sin(th / 2.0)
    return f, g


def widget_amps(z: complex, bits: int | None):
    """(c1, c2) for a negative self-loop entry z (real, z < 0)."""
    mag = min(1.0, abs(z))
    a = math.sqrt(mag)
    g0 = math.sqrt(max(0.0, 1.0 - mag))
    if bits is not None:
        th = _qangle(2.0 * math.atan2(g0, a), bits)
        a, g0 = math.cos(th / 2.0), math.sin(th / 2.0)
    return a / math.sqrt(2.0) + 1j * g0, -a / math.sqrt(2.0)


def _complete_columns(cols: list[np.ndarray]) -> np.ndarray:
    dim = cols[0].size
    V = np.stack(cols, axis=1)
    u, s, _ = np.linalg.svd(V, full_matrices=True)
    ns = u[:, int((s > 1e-12).sum()):]
    return np.concatenate([V, ns], axis=1)


def rotation_unitary(z: complex, j: int, k: int, bits: int | None) -> np.ndarray:
    """4x4 re-weight unitary on (a-flag, b-flag); basis index a + 2*b."""
    if j == k and z.imag == 0 and z.real < 0:
        c1, c2 = widget_amps(z, bits)
        col0 = np.array([0.0, c2, c1, 0.0], dtype=complex)
        return _complete_columns([col0])
    f, g = kept_garbage_amps(z, j, k, bits)
    if f == 0 and g == 0:
        u2 = np.array([[0, 1], [1, 0]], dtype=complex)  # dead edge: pure garbage
    elif f == 0:
        u2 = np.array([[0, 1], [1, 0]], dtype=complex)
    else:
        u2 = np.array([[f, -g], [g, np.conj(f)]], dtype=complex)
    out = np.zeros((4, 4), dtype=complex)
    for a in (0, 1):
        for bi in (0, 1):
            for bo in (0, 1):
                out[a + 2 * bo, a + 2 * bi] = u2[bo, bi]
    return out


# ---------------------------------------------------------------------------
# pre-walk


def prewalk(spec: HamiltonianSpec, r: int, variant: str = "single",
            lay: WalkLayout | None = None,
            consts: CostConstants = DEFAULT_COSTS) -> tuple[CircuitDag, WalkLayout]:
    """Prepare the uniform superposition over all (term-choice, path) pairs,
    path values in the a-slots, with a constant depth of structure queries."""
    if variant not in ("single", "extended"):
        raise ValueError("variant must be 'single' or 'extended'")
    if variant == "single" and spec.m != 1:
        raise ValueError("single-variant walk requires m == 1")
    lay = lay or make_layout(spec, r, variant)
    if r == 0:
        return CircuitDag(lay.num_qubits, []), lay
    n, N, d = spec.n, spec.N, spec.d
    m = spec.m if variant == "extended" else 1
    local = spec.family in ("local_clause", "local_hamiltonian")
    ad, asz = arith_charges(n, consts)
    gw = 2 * n if local else n
    gad, gasz = arith_charges(gw, consts)
    nodes: list = []
    terms = spec.terms

    # term-choice superposition
    for s in range(r):
        if m > 1:
            wb = len(lay.w[s])
            if (1 << wb) == m:
                nodes.extend(GateNode("h", (q,), GATES["h"]) for q in lay.w[s])
            else:
                nodes.append(PrepNode(f"uniform[{m}]", tuple(lay.w[s]),
                                      qc.uniform_prep_matrix(m), wb, m))

    # g-values into slots a_1..a_r (+ mask scratch for local families)
    masks = [lay.alloc(n, "mask") for _ in range(r)] if local else []
    for s in range(r):
        slot = lay.a_val[s + 1]
        if spec.family == "band":
            if d > 1:
                pd = max(1, math.ceil(math.log2(d)))
                nodes.append(PrepNode(f"uniform[{d}]", tuple(slot[:pd]),
                                      qc.uniform_prep_matrix(d), pd, d))
            half = (d - 1) // 2
            if half:
                nodes.append(BlockNode("g:offset", tuple(slot),
                                       lambda v, h=half: (v - h) % N,
                                       lambda v, h=half: (v + h) % N, ad, asz))
        elif spec.family in ("pauli_product", "pauli_sum"):
            if m == 1:
                s0 = terms[0]["s"]
                nodes.append(xor_query(O_P, "g:string", (), tuple(slot), lambda _v, s0=s0: s0))
            else:
                nodes.append(xor_query(O_P, "g:string", tuple(lay.w[s]), tuple(slot),
                                       lambda w, t=terms: t[w]["s"]))
        else:
            if m == 1:
                s0 = terms[0]["s"]
                nodes.append(xor_query(O_P, "g:mask", (), tuple(masks[s]),
                                       lambda _v, s0=s0: s0))
            else:
                nodes.append(xor_query(O_P, "g:mask", tuple(lay.w[s]), tuple(masks[s]),
                                       lambda w, t=terms: t[w]["s"]))
            ch = np.eye(4, dtype=complex)
            rt = 1.0 / math.sqrt(2.0)
            ch[1, 1], ch[1, 3], ch[3, 1], ch[3, 3] = rt, rt, rt, -rt
            for i in range(n):
                nodes.append(GateNode("ch", (masks[s][i], slot[i]), ch))

    # fan out j0 to J-copies (J_0 is a_0 itself)
    jcopy = [lay.a_val[0]] + [lay.alloc(n, "jcopy") for _ in range(r)]
    fan: list = []
    have = 1
    while have < r + 1:
        new = min(have, r + 1 - have)
        for i in range(new):
            for q in range(n):
                fan.append(GateNode("cx", (jcopy[i][q], jcopy[have + i][q]), GATES2["cx"]))
        have += new
    nodes.extend(fan)

    # prefix products of g-values: doubling levels with explicit copies so
    # every level is one copy layer plus one disjoint combine layer
    base = [list(lay.a_val[s + 1]) + (masks[s] if local else []) for s in range(r)]
    cur = {s + 1: base[s] for s in range(r)}
    op_fn = spec.op
    tree: list = []
    K = math.ceil(math.log2(r)) if r > 1 else 0
    def comb(v, gw=gw):
        return op_fn(v & ((1 << gw) - 1), v >> gw)

    for k in range(1, K + 1):
        step = 1 << (k - 1)
        nxt = dict(cur)
        copies = {}
        for s in range(step + 1, r + 1):  # copy layer first: all reads disjoint
            cp = lay.alloc(gw, "prefix")
            copies[s] = cp
            for i in range(gw):
                tree.append(GateNode("cx", (cur[s - step][i], cp[i]), GATES2["cx"]))
        for s in range(step + 1, r + 1):  # then one parallel combine layer
            out = lay.alloc(gw, "prefix")
            tree.append(xor_block("op:combine", tuple(copies[s]) + tuple(cur[s]),
                                  tuple(out), comb, gad, gasz))
            nxt[s] = out
        cur = nxt
    nodes.extend(tree)

    # path values J_s = f(j0, prefix_s) into fresh registers
    jpath = [jcopy[0]] + [lay.alloc(n, "jpath") for _ in range(r)]
    f_fn = spec.f
    fnodes: list = []
    for s in range(1, r + 1):
        def fmap(v, n=n):
            return f_fn(v & ((1 << n) - 1), v >> n)
        fnodes.append(xor_block("f:path", tuple(jcopy[s]) + tuple(cur[s]),
                                tuple(jpath[s]), fmap, gad, gasz))
    nodes.extend(fnodes)

    # prefix tree uncompute (inputs still intact)
    nodes.extend(nd.adjoint() for nd in reversed(tree))

    # erase the g-values from the slots via the inverse map, odd steps then even
    for parity in (1, 0):
        for s in range(r):
            if s % 2 != parity:
                continue
            slot = lay.a_val[s + 1]
            if spec.family == "band":
                nodes.append(xor_block(
                    "Linv:offset", tuple(jpath[s]) + tuple(jpath[s + 1]), tuple(slot),
                    lambda v, n=n: (((v >> n) & ((1 << n) - 1)) - (v & ((1 << n) - 1))) % N,
                    ad, asz))
            elif spec.family in ("pauli_product", "pauli_sum"):
                if m == 1:
                    s0 = terms[0]["s"]
                    nodes.append(xor_query(O_P, "Linv:string", (), tuple(slot),
                                           lambda _v, s0=s0: s0))
                else:
                    nodes.append(xor_query(O_P, "Linv:string", tuple(lay.w[s]), tuple(slot),
                                           lambda w, t=terms: t[w]["s"]))
            else:
                nodes.append(xor_block("Linv:andmask", tuple(jpath[s + 1]) + tuple(masks[s]),
                                       tuple(slot),
                                       lambda v, n=n: (v & ((1 << n) - 1)) & (v >> n),
                                       ad, asz))
                if m == 1:
                    s0 = terms[0]["s"]
                    nodes.append(xor_query(O_P, "Linv:mask", (), tuple(masks[s]),
                                           lambda _v, s0=s0: s0))
                else:
                    nodes.append(xor_query(O_P, "Linv:mask", tuple(lay.w[s]), tuple(masks[s]),
                                           lambda w, t=terms: t[w]["s"]))

    # move path values into the now-empty slots, then undo the fan-out
    for s in range(1, r + 1):
        for i in range(n):
            nodes.append(GateNode("swap", (jpath[s][i], lay.a_val[s][i]), GATES2["swap"]))
    nodes.extend(nd.adjoint() for nd in reversed(fan))
    return CircuitDag(lay.num_qubits, nodes), lay


# ---------------------------------------------------------------------------
# re-weight


def reweight(spec: HamiltonianSpec, r: int, variant: str, lay: WalkLayout,
             oracle: EntryOracle,
             consts: CostConstants = DEFAULT_COSTS) -> CircuitDag:
    """Copy the path to the b-slots and rotate each step's branch amplitudes
    with one entry query + one uncompute per step (all steps in parallel)."""
    n, N = spec.n, spec.N
    m = spec.m if variant == "extended" else 1
    nodes: list = []
    for s in range(r + 1):
        for i in range(n):
            nodes.append(GateNode("cx", (lay.a_val[s][i], lay.b_val[s][i]), GATES2["cx"]))
    ad, asz = arith_charges(n, consts)
    bits = oracle.bits
    rot_bits = bits if bits is not None else 64
    rdep, rsiz = rotation_charges(rot_bits, 3, consts)
    for s in range(r):
        jreg, kreg = lay.a_val[s], lay.b_val[s + 1]
        ent = lay.alloc(oracle.register_width, f"ent")
        enc = oracle.encode

        def fq(v, n=n):
            return enc(v & (N - 1), v >> n)
        query = xor_query(O_H, "entry", tuple(jreg) + tuple(kreg), tuple(ent), fq)
        nodes.append(query)

        pre_unc: list = []
        creg: list[int] = []
        if m > 1:
            # overlap count c(j,k): fetch each term's mask and test membership
            mem_bits = []
            sub: list = []
            for wv in range(m):
                wc = lay.alloc(len(lay.w[0]), "wconst")
                for i in range(len(wc)):
                    if (wv >> i) & 1:
                        sub.append(GateNode("x", (wc[i],), GATES["x"]))
                msk = lay.alloc(n, "cmask")
                sub.append(xor_query(O_P, "c:mask", tuple(wc), tuple(msk),
                                     lambda w, t=spec.terms: t[w]["s"]))
                bit = lay.alloc(1, "cbit")
                if spec.family == "pauli_sum":
                    def mem(v, n=n):
                        j, k, sk = v & (N - 1), (v >> n) & (N - 1), v >> (2 * n)
                        return int((j ^ k) == sk)
                else:
                    def mem(v, n=n):
                        j, k, sk = v & (N - 1), (v >> n) & (N - 1), v >> (2 * n)
                        return int(((j ^ k) & ~sk) == 0)
                sub.append(xor_block("c:member", tuple(jreg) + tuple(kreg) + tuple(msk),
                                     tuple(bit), mem, ad, asz))
                mem_bits.extend(bit)
            creg = lay.alloc((m).bit_length(), "count")
            sub.append(xor_block("c:add", tuple(mem_bits), tuple(creg),
                                 lambda v: bin(v).count("1"),
                                 qc.clog2(m) + 1, m))
            nodes.extend(sub)
            pre_unc = [nd.adjoint() for nd in reversed(sub)]

        dec = oracle.decode
        cw = len(creg)
        ew = oracle.register_width

        def ufn(cv, n=n, cw=cw, ew=ew):
            ereg = cv & ((1 << ew) - 1)
            rest = cv >> ew
            c = rest & ((1 << cw) - 1) if cw else 1
            rest >>= cw
            j = rest & ((1 << n) - 1)
            k = rest >> n
            z = dec(ereg) / c if c else 0j
            return rotation_unitary(z, j, k, bits)

        nodes.append(CtrlUnitaryNode(
            f"reweight[{s}]", tuple(ent) + tuple(creg) + tuple(jreg) + tuple(kreg),
            (lay.a_flag[s], lay.b_flag[s + 1]), ufn, rdep + ad, rsiz + asz))
        nodes.extend(pre_unc)
        nodes.append(query)  # XOR-output queries are self-inverse
    return CircuitDag(lay.num_qubits, nodes)


# ---------------------------------------------------------------------------
# T, S, Q


@dataclass
class WalkBuild:
    spec: HamiltonianSpec
    r: int
    variant: str
    bits: int | None
    circuit: CircuitDag
    layout: WalkLayout
    oracle: EntryOracle
    cost: qc.CostProfile
    ancilla_count: int
    scratch_count: int
    rotation_error_bound: float

    def target(self) -> np.ndarray:
        H = self.spec.materialize_dense()
        md = self.spec.d * (self.spec.m if self.variant == "extended" else 1)
        return np.linalg.matrix_power(H / md, self.r)

    def target_id(self) -> str:
        md = self.spec.d * (self.spec.m if self.variant == "extended" else 1)
        return f"(H/{md})^{self.r}"


def build_T(spec: HamiltonianSpec, r: int, bits: int | None = None,
            variant: str = "single",
            consts: CostConstants = DEFAULT_COSTS) -> WalkBuild:
    oracle = EntryOracle(spec, bits)
    pre, lay = prewalk(spec, r, variant, consts=consts)
    rew = reweight(spec, r, variant, lay, oracle, consts=consts)
    circ = CircuitDag(lay.num_qubits, pre.nodes + rew.nodes)
    if circ.num_qubits > MAX_WALK_QUBITS:
        raise ValueError("walk exceeds the qubit cap")
    return WalkBuild(spec, r, variant, bits, circ, lay, oracle, circ.cost(),
                     declared_ancilla_count(spec, r, variant),
                     len(lay.scratch_qubits()), _rotation_bound(spec, r, oracle))


def _rotation_bound(spec: HamiltonianSpec, r: int, oracle: EntryOracle) -> float:
    if oracle.bits is None:
        return EXACT_BLOCK_TOL
    mu = oracle.min_nonzero_magnitude()
    per_edge = 4.0 * 2.0 ** (-oracle.bits / 2.0) / math.sqrt(max(mu, 1e-12))
    return 2.0 * r * per_edge


def build_S(r: int, variant: str = "single", lay: WalkLayout | None = None,
            spec: HamiltonianSpec | None = None) -> CircuitDag:
    """Order reversal: slot a_i <-> b_{r-i} (values and flags) and, for the
    extended variant, w_s <-> w_{r-1-s}; one layer of disjoint swaps."""
    if lay is None:
        if spec is None:
            raise ValueError("need a layout or a spec")
        lay = make_layout(spec, r, variant)
    nodes = []
    for i in range(r + 1):
        a, b = lay.a_val[i], lay.b_val[r - i]
        for q in range(len(a)):
            nodes.append(GateNode("swap", (a[q], b[q]), GATES2["swap"]))
        nodes.append(GateNode("swap", (lay.a_flag[i], lay.b_flag[r - i]), GATES2["swap"]))
    for s in range(r // 2):
        wa, wb = lay.w[s], lay.w[r - 1 - s]
        for q in range(len(wa)):
            nodes.append(GateNode("swap", (wa[q], wb[q]), GATES2["swap"]))
    return CircuitDag(lay.num_qubits, nodes)


def build_Q(spec: HamiltonianSpec, r: int, bits: int | None = None,
            variant: str = "single",
            consts: CostConstants = DEFAULT_COSTS) -> WalkBuild:
    tb = build_T(spec, r, bits, variant, consts)
    s = build_S(r, variant, tb.layout)
    circ = CircuitDag(tb.layout.num_qubits,
                      tb.circuit.nodes + s.nodes + tb.circuit.adjoint().nodes)
    return WalkBuild(spec, r, variant, bits, circ, tb.layout, tb.oracle, circ.cost(),
                     tb.ancilla_count, tb.scratch_count,
                     2.0 * tb.rotation_error_bound if bits is not None else EXACT_BLOCK_TOL)


# ---------------------------------------------------------------------------
# certification


def extract_block(circ: CircuitDag, lay: WalkLayout, dim: int) -> np.ndarray:
    """Apply the circuit to each system basis state (everything else zero) and
    project every non-system qubit back onto zero."""
    block = np.zeros((dim, dim), dtype=complex)
    mask = lay.nonsystem_mask()
    for col in range(dim):
        for key, amp in circ.apply(lay.key_for(col)).items():
            if key & mask == 0:
                block[lay.system_value(key), col] = amp
    return block


def certify_block(build: WalkBuild) -> "qcert":
    from .lcu import make_cert  # certificate type lives with the algebra
    block = extract_block(build.circuit, build.layout, build.spec.N)
    target = build.target()
    measured = spectral_distance(block, target)
    return make_cert(alpha=1.0, ancillas=build.ancilla_count,
                     eps_bound=build.rotation_error_bound, measured=measured,
                     target_id=build.target_id(), block=block,
                     circuit=build.circuit, system=tuple(build.layout.system),
                     target=target)


# ---------------------------------------------------------------------------
# sequential Chebyshev baseline


@dataclass
class SequentialWalkBuild:
    spec: HamiltonianSpec
    bits: int | None
    t_circ: CircuitDag
    q_circ: CircuitDag
    layout: WalkLayout
    oracle: EntryOracle


def childs_step(spec: HamiltonianSpec, bits: int | None = None,
                consts: CostConstants = DEFAULT_COSTS) -> SequentialWalkBuild:
    """One step of the sequential walk Q = S(2TT^dag - 1) on two slots, with
    the reflection over the ancilla-zero subspace."""
    if spec.m != 1:
        raise ValueError("the sequential baseline supports single-term specs")
    n, N, d = spec.n, spec.N, spec.d
    oracle = EntryOracle(spec, bits)
    lay = WalkLayout(n, 0, 1, "childs")
    slot0 = lay.alloc(n)
    flag0 = lay.alloc(1)[0]
    slot1 = lay.alloc(n)
    flag1 = lay.alloc(1)[0]
    lay.a_val, lay.a_flag = [slot0], [flag0]
    lay.b_val, lay.b_flag = [slot1], [flag1]
    ad, asz = arith_charges(n, consts)
    nodes: list = []
    # neighbor superposition in slot1
    if spec.family == "band":
        if d > 1:
            pd = max(1, math.ceil(math.log2(d)))
            nodes.append(PrepNode(f"uniform[{d}]", tuple(slot1[:pd]),
                                  qc.uniform_prep_matrix(d), pd, d))
        half = (d - 1) // 2
        if half:
            nodes.append(BlockNode("g:offset", tuple(slot1),
                                   lambda v, h=half: (v - h) % N,
                                   lambda v, h=half: (v + h) % N, ad, asz))
        nodes.append(BlockNode("f:add", tuple(slot0) + tuple(slot1),
                               lambda v, n=n: (v & (N - 1)) | ((((v >> n) + v) % N) << n),
                               lambda v, n=n: (v & (N - 1)) | ((((v >> n) - v) % N) << n),
                               ad, asz))
    elif spec.family == "pauli_product":
        s0 = spec.terms[0]["s"]
        nodes.append(xor_query(O_P, "g:string", (), tuple(slot1), lambda _v, s0=s0: s0))
        for i in range(n):
            nodes.append(GateNode("cx", (slot0[i], slot1[i]), GATES2["cx"]))
    else:  # local clause
        s0 = spec.terms[0]["s"]
        for i in range(n):
            if (s0 >> i) & 1:
                nodes.append(GateNode("h", (slot1[i],), GATES["h"]))
        for i in range(n):
            if not ((s0 >> i) & 1):
                nodes.append(GateNode("cx", (slot0[i], slot1[i]), GATES2["cx"]))
    bits_ = oracle.bits
    ent = lay.alloc(oracle.register_width, "ent")
    enc, dec = oracle.encode, oracle.decode

    def fq(v, n=n):
        return enc(v & (N - 1), v >> n)
    query = xor_query(O_H, "entry", tuple(slot0) + tuple(slot1), tuple(ent), fq)
    nodes.append(query)
    rot_bits = bits_ if bits_ is not None else 64
    rdep, rsiz = rotation_charges(rot_bits, 3, consts)
    ew = oracle.register_width

    def ufn(cv, n=n, ew=ew):
        ereg = cv & ((1 << ew) - 1)
        rest = cv >> ew
        j = rest & ((1 << n) - 1)
        k = rest >> n
        return rotation_unitary(dec(ereg), j, k, bits_)

    nodes.append(CtrlUnitaryNode("reweight", tuple(ent) + tuple(slot0) + tuple(slot1),
                                 (flag0, flag1), ufn, rdep + ad, rsiz + asz))
    nodes.append(query)
    t_circ = CircuitDag(lay.num_qubits, nodes)

    anc = [flag0] + list(slot1) + [flag1]
    refl_scratch = lay.alloc(len(anc) - 1, "refl")
    refl = qc.reflect_zero(anc, refl_scratch[0], lay.num_qubits)
    t_circ = CircuitDag(lay.num_qubits, t_circ.nodes)
    s_nodes = [GateNode("swap", (slot0[i], slot1[i]), GATES2["swap"]) for i in range(n)]
    s_nodes.append(GateNode("swap", (flag0, flag1), GATES2["swap"]))
    q_circ = CircuitDag(lay.num_qubits,
                        t_circ.adjoint().nodes + refl.nodes + t_circ.nodes +
                        tuple(s_nodes))
    return SequentialWalkBuild(spec, bits, t_circ, q_circ, lay, oracle)


def chebyshev_certify(spec: HamiltonianSpec, r: int, bits: int | None = None):
    """Certificate that T^dag Q^r T block-encodes the degree-r Chebyshev
    polynomial of H/d."""
    from .lcu import make_cert
    cb = childs_step(spec, bits)
    nodes = list(cb.t_circ.nodes)
    for _ in range(r):
        nodes.extend(cb.q_circ.nodes)
    nodes.extend(cb.t_circ.adjoint().nodes)
    circ = CircuitDag(cb.layout.num_qubits, nodes)
    block = extract_block(circ, cb.layout, spec.N)
    H = spec.materialize_dense()
    w, v = np.linalg.eigh(H / spec.d)
    cheb = (v * np.cos(r * np.arccos(np.clip(w, -1.0, 1.0)))) @ v.conj().T
    measured = spectral_distance(block, cheb)
    bound = EXACT_BLOCK_TOL if bits is None else 4.0 * (r + 1) * 2.0 ** (-bits / 2.0) / \
        math.sqrt(max(cb.oracle.min_nonzero_magnitude(), 1e-12))
    return make_cert(alpha=1.0, ancillas=spec.n + 2, eps_bound=bound,
                     measured=measured, target_id=f"T_{r}(H/{spec.d})", block=block,
                     circuit=circ, system=tuple(cb.layout.system), target=cheb)


# ---------------------------------------------------------------------------
# brute-force reference state (test oracle, no circuits involved)


def reference_walk_state(build: WalkBuild, j0: int) -> dict:
    """Expected T|j0, 0> assembled directly from path enumeration and the
    branch amplitude rules; keys follow the build's register layout."""
    spec, lay, oracle = build.spec, build.layout, build.oracle
    r = build.r
    m = spec.m if build.variant == "extended" else 1
    d = spec.d
    out: dict[int, complex] = {}

    def put(key, amp):
        if amp != 0:
            out[key] = out.get(key, 0j) + amp

    def assemble(wvec, path, comps, idx, key, amp):
        if idx == r:
            put(key, amp)
            return
        for kind, c in comps[idx]:
            k2 = key
            if kind == "garbage":
                k2 |= 1 << lay.b_flag[idx + 1]
            elif kind == "aflag":
                k2 |= 1 << lay.a_flag[idx]
            elif kind == "bflag":
                k2 |= 1 << lay.b_flag[idx + 1]
            assemble(wvec, path, comps, idx + 1, k2, amp * c)

    def rec(wvec, path):
        if len(path) == r + 1:
            key = 0
            for s, jv in enumerate(path):
                for i in range(spec.n):
                    if (jv >> i) & 1:
                        key |= 1 << lay.a_val[s][i]
                        key |= 1 << lay.b_val[s][i]
            for s, wv in enumerate(wvec):
                for i, q in enumerate(lay.w[s]):
                    if (wv >> i) & 1:
                        key |= 1 << q
            comps = []
            for s in range(r):
                j, k = path[s], path[s + 1]
                c = spec.overlap_count(j, k) if build.variant == "extended" else 1
                z = oracle.stored_value(j, k) / c if c else 0j
                if j == k and z.imag == 0 and z.real < 0:
                    c1, c2 = widget_amps(z, oracle.bits)
                    comps.append([("bflag", c1), ("aflag", c2)])
                else:
                    f, g = kept_garbage_amps(z, j, k, oracle.bits)
                    row = []
                    if f != 0:
                        row.append(("kept", f))
                    if g != 0:
                        row.append(("garbage", g))
                    comps.append(row)
            assemble(wvec, path, comps, 0, key, 1.0 / math.sqrt((m * d) ** r))
            return
        s = len(path) - 1
        for w in range(m):
            for t in range(d):
                rec(wvec + [w], path + [spec.neighbor(w, path[-1], t)])

    rec([], [j0])
    return {k: v for k, v in out.items() if abs(v) > 1e-16}
