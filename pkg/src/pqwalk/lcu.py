"""Block-encoding algebra, coefficient state preparation, the select-register
power chain W, and the linear-combination assembler.

Certificates bind a circuit (or an exact composition of measured blocks) to a
dense target with a measured spectral distance.  Complex coefficient series
are handled with a state-preparation pair (conj(V), V): the bra side of the
sandwich is the entrywise-conjugated preparation circuit, so the combined
block picks up v_r^2 = a_r / alpha with the full coefficient phase (a single
V on both sides would cancel the phases to |a_r|).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import (CircuitDag, CtrlUnitaryNode, GateNode, Node, PrepNode,
                      QueryNode, BlockNode, SupportOverflow, clog2, global_phase,
                      rotation_charges)
from .circuit import GATES2
from .hamiltonians import principal_sqrt
from .refsim import spectral_distance

_CX = GATES2["cx"]


@dataclass
class BlockEncodingCert:
    alpha: float
    ancillas: int
    eps_bound: float
    measured: float
    target_id: str
    block: np.ndarray | None = None
    target: np.ndarray | None = None
    circuit: CircuitDag | None = None
    system: tuple = ()
    measurement: str = "circuit"

    def passed(self) -> bool:
        return self.measured <= self.eps_bound + 1e-12

    def as_dict(self):
        return {"alpha": self.alpha, "ancillas": self.ancillas,
                "bound": self.eps_bound, "measured": self.measured,
                "target": self.target_id, "measurement": self.measurement,
                "pass": bool(self.passed())}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True)


def make_cert(**kw) -> BlockEncodingCert:
    return BlockEncodingCert(**kw)


def project_block(circ: CircuitDag, system, dim: int,
                  max_support: int | None = None,
                  max_work: int | None = None) -> np.ndarray:
    """Upper-left block of a circuit w.r.t. the given system qubits: apply to
    each system basis state and keep all-zero amplitudes elsewhere."""
    system = list(system)
    mask = (1 << circ.num_qubits) - 1
    for q in system:
        mask &= ~(1 << q)
    block = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        key = 0
        for i, q in enumerate(system):
            if (col >> i) & 1:
                key |= 1 << q
        for k, amp in circ.apply(key, max_support=max_support,
                                 max_work=max_work).items():
            if k & mask == 0:
                row = 0
                for i, q in enumerate(system):
                    if (k >> q) & 1:
                        row |= 1 << i
                block[row, col] = amp
    return block


# ---------------------------------------------------------------------------
# product of block encodings


def be_product(u: BlockEncodingCert, v: BlockEncodingCert,
               extract: bool = False) -> BlockEncodingCert:
    """(1 x V)(1 x U) on disjoint ancillas: scales and ancillas add, errors
    cross-scale, blocks multiply exactly."""
    if u.block is None or v.block is None:
        raise ValueError("both certificates need measured blocks")
    if u.block.shape != v.block.shape:
        raise ValueError("mismatched system dimension")
    alpha = u.alpha * v.alpha
    bound = u.alpha * v.eps_bound + v.alpha * u.eps_bound
    block = v.block @ u.block
    target = v.target @ u.target if u.target is not None and v.target is not None else None
    circuit = None
    system = ()
    if u.circuit is not None and v.circuit is not None:
        circuit, system = _stack_on_system(u.circuit, u.system, v.circuit, v.system)
    measurement = "composed"
    if extract and circuit is not None:
        block = project_block(circuit, system, u.block.shape[0])
        measurement = "circuit"
    measured = spectral_distance(target, alpha * block) if target is not None else 0.0
    return BlockEncodingCert(alpha, u.ancillas + v.ancillas, bound, measured,
                             f"({u.target_id})*({v.target_id})", block, target,
                             circuit, system, measurement)


def _stack_on_system(cu: CircuitDag, su, cv: CircuitDag, sv):
    """Place two circuits so they share the system register and keep their
    ancillas disjoint; u runs first."""
    su, sv = list(su), list(sv)
    if len(su) != len(sv):
        raise ValueError("system width mismatch")
    qmap = {}
    nxt = cu.num_qubits
    for q in range(cv.num_qubits):
        if q in sv:
            qmap[q] = su[sv.index(q)]
        else:
            qmap[q] = nxt
            nxt += 1
    width = nxt
    nodes = cu.nodes + tuple(nd.renamed(qmap) for nd in cv.nodes)
    return CircuitDag(width, nodes), tuple(su)


# ---------------------------------------------------------------------------
# coefficient series and state preparation


@dataclass
class CoefficientSeries:
    values: np.ndarray  # complex a_r, r = 0..R-1

    @property
    def R(self) -> int:
        return len(self.values)

    @property
    def alpha(self) -> float:
        return float(np.sum(np.abs(self.values)))

    @property
    def s(self) -> int:
        return max(1, clog2(self.R)) if self.R > 1 else 1

    def padded(self) -> np.ndarray:
        out = np.zeros(1 << self.s, dtype=complex)
        out[: self.R] = self.values
        return out

    def sqrt_target(self) -> np.ndarray:
        """Normalized vector of principal sqrt(a_r / alpha)."""
        a = self.padded()
        return np.array([principal_sqrt(z / self.alpha) for z in a])

    @staticmethod
    def taylor(R: int) -> "CoefficientSeries":
        if R < 4:
            raise ValueError("truncation order must be at least 4")
        vals = np.array([(-1j) ** r / math.factorial(r) for r in range(R)])
        return CoefficientSeries(vals)

    @staticmethod
    def from_json(text: str) -> "CoefficientSeries":
        pairs = json.loads(text)
        return CoefficientSeries(np.array([complex(re, im) for re, im in pairs]))

    def to_json(self) -> str:
        return json.dumps([[z.real, z.imag] for z in self.values])


@dataclass
class StatePrep:
    series: CoefficientSeries
    circuit: CircuitDag
    s: int
    amplitudes: np.ndarray  # measured V|0>
    delta_l2: float
    delta_l1: float


def _qang(theta: float, bits: int | None) -> float:
    if bits is None:
        return theta
    step = 2.0 * math.pi / (1 << bits)
    return round(theta / step) * step


def state_prep(series: CoefficientSeries, bits: int | None = None) -> StatePrep:
    """Prepare sum_r sqrt(a_r/alpha)|r> with one controlled rotation layer per
    select qubit, keyed on magnitude partial sums and sqrt-phase differences.

    Qubit k holds bit (s-1-k) of r, so controls precede their target.
    """
    a = series.padded()
    alpha = series.alpha
    if alpha == 0:
        raise ValueError("all-zero coefficient vector")
    s = series.s
    mag = np.abs(a)
    theta = np.array([math.atan2(principal_sqrt(z).imag, principal_sqrt(z).real)
                      if z != 0 else 0.0 for z in a])
    prefix = np.concatenate([[0.0], np.cumsum(mag)])

    def seg(lo, hi):  # sum of |a| over [lo, hi)
        return prefix[hi] - prefix[lo]

    rot_bits = bits if bits is not None else 64
    rdep, rsiz = rotation_charges(rot_bits, 2)
    nodes: list = [global_phase(0, _qang(theta[0], bits))]
    for k in range(s):
        span = 1 << (s - k)

        def ufn(cv, span=span, k=k):
            # controls pack qubit i into bit i, but qubit i carries bit
            # (k-1-i)... of the prefix; reverse to recover the prefix value
            x = 0
            for i in range(k):
                if (cv >> i) & 1:
                    x |= 1 << (k - 1 - i)
            u = x * span
            v = u + span
            w = u + span // 2
            tot = seg(u, v)
            gamma = seg(u, w) / tot if tot > 0 else 1.0
            beta = theta[min(w, len(a) - 1)] - theta[u] if tot > 0 else 0.0
            ty = _qang(2.0 * math.acos(min(1.0, math.sqrt(max(0.0, gamma)))), bits)
            tb = _qang(beta, bits)
            c, d = math.cos(ty / 2.0), math.sin(ty / 2.0)
            ph = complex(math.cos(tb), math.sin(tb))
            return np.array([[c, -d], [ph * d, ph * c]], dtype=complex)

        if k == 0:
            nodes.append(PrepNode("coef[0]", (0,), ufn(0), rdep, rsiz))
        else:
            nodes.append(CtrlUnitaryNode(f"coef[{k}]", tuple(range(k)), (k,),
                                         ufn, rdep, rsiz))
    circ = CircuitDag(s, nodes)
    amps = np.zeros(1 << s, dtype=complex)
    for key, amp in circ.apply(0).items():
        r = 0
        for k in range(s):  # qubit k is bit (s-1-k) of r
            if (key >> k) & 1:
                r |= 1 << (s - 1 - k)
        amps[r] = amp
    tgt = series.sqrt_target()
    delta_l2 = float(np.linalg.norm(amps - tgt))
    delta_l1 = float(np.sum(np.abs(alpha * amps ** 2 - a)))
    return StatePrep(series, circ, s, amps, delta_l2, delta_l1)


def prep_pair_check(prep: StatePrep, delta: float | None = None) -> dict:
    """State-preparation-pair residual for (conj(V), V): the bra amplitudes
    are conj of the conjugated circuit's, so alpha * c_r^* d_r = alpha v_r^2."""
    series = prep.series
    a = series.padded()
    alpha = series.alpha
    residual = float(np.sum(np.abs(alpha * prep.amplitudes ** 2 - a)))
    delta = prep.delta_l2 if delta is None else delta
    bound = alpha * len(a) * max(delta, prep.delta_l2)
    return {"residual_l1": residual, "bound": bound, "delta_l2": prep.delta_l2,
            "pass": bool(residual <= bound + 1e-12)}


# ---------------------------------------------------------------------------
# controlled circuits and the power chain


def _controlled_node(nd: Node, ctrl: int, factor: int) -> Node:
    if isinstance(nd, GateNode):
        m = nd.matrix
        dim = m.shape[0]

        def ufn(cv, m=m, dim=dim):
            return m if cv else np.eye(dim, dtype=complex)
        return CtrlUnitaryNode("c-" + nd.name, (ctrl,), nd.qubits, ufn, factor, factor)
    if isinstance(nd, QueryNode):
        nin = len(nd.qubits)
        fn, fn_inv = nd.fn, nd.fn_inv

        def cf(v, fn=fn, nin=nin):
            if v >> nin:
                return (fn(v & ((1 << nin) - 1))) | (1 << nin)
            return v

        def cfi(v, fn_inv=fn_inv, nin=nin):
            if v >> nin:
                return (fn_inv(v & ((1 << nin) - 1))) | (1 << nin)
            return v
        return QueryNode(nd.oracle_id, "c-" + nd.label, nd.qubits + (ctrl,), cf, cfi)
    if isinstance(nd, BlockNode):
        nin = len(nd.qubits)
        fn, fn_inv = nd.fn, nd.fn_inv

        def cf(v, fn=fn, nin=nin):
            if v >> nin:
                return (fn(v & ((1 << nin) - 1))) | (1 << nin)
            return v

        def cfi(v, fn_inv=fn_inv, nin=nin):
            if v >> nin:
                return (fn_inv(v & ((1 << nin) - 1))) | (1 << nin)
            return v
        return BlockNode("c-" + nd.block_id, nd.qubits + (ctrl,), cf, cfi,
                         nd.depth_charge * factor, nd.size_charge * factor)
    if isinstance(nd, CtrlUnitaryNode):
        ufn = nd.ufn
        dim = 1 << len(nd.targets)

        def cu(cv, ufn=ufn, dim=dim):
            if cv & 1:
                return ufn(cv >> 1)
            return np.eye(dim, dtype=complex)
        return CtrlUnitaryNode("c-" + nd.label, (ctrl,) + nd.controls, nd.targets,
                               cu, nd.depth_charge * factor, nd.size_charge * factor)
    if isinstance(nd, PrepNode):
        m = nd.matrix
        dim = m.shape[0]

        def up(cv, m=m, dim=dim):
            return m if cv else np.eye(dim, dtype=complex)
        return CtrlUnitaryNode("c-" + nd.label, (ctrl,), nd.qubits, up,
                               nd.depth_charge * factor, nd.size_charge * factor)
    raise TypeError(f"cannot control {type(nd)}")


def controlled(circ: CircuitDag, ctrl: int, width: int, factor: int = 2,
               copy_base: int | None = None) -> tuple[CircuitDag, int]:
    """Every node controlled on its own fanned-out copy of a select qubit, so
    nodes that ran in parallel stay parallel; charges scale by `factor` (the
    recorded control-wrapper constant).  Returns (circuit, new width)."""
    nc = len(circ.nodes)
    if nc == 0:
        return CircuitDag(width, ()), width
    base = width if copy_base is None else copy_base
    copies = list(range(base, base + nc))
    new_width = base + nc
    fan: list[Node] = []
    sources = [ctrl]
    made = 0
    while made < nc:
        new = min(len(sources), nc - made)
        for i in range(new):
            fan.append(GateNode("cx", (sources[i], copies[made + i]), _CX))
        sources.extend(copies[made: made + new])
        made += new
    nodes = list(fan)
    nodes.extend(_controlled_node(nd, copies[i], factor)
                 for i, nd in enumerate(circ.nodes))
    nodes.extend(nd.adjoint() for nd in reversed(fan))
    return CircuitDag(new_width, tuple(nodes)), new_width


@dataclass
class PowerChain:
    """Select-controlled chain applying the 2^j-power encodings."""
    circuit: CircuitDag
    s: int
    select: tuple
    system: tuple
    branch_blocks: list  # measured blocks of the constituents, index j
    constituent_bound: float
    ancillas: int
    all_circuit_measured: bool = True


def build_W(walk_certs: list[BlockEncodingCert], s: int | None = None) -> PowerChain:
    """walk_certs[j] must encode K^(2^j); the chain applies constituent j
    controlled on select bit j (bit 0 first)."""
    s = s or len(walk_certs)
    if len(walk_certs) != s:
        raise ValueError(f"need exactly {s} power-of-two encodings")
    for c in walk_certs:
        if c.circuit is None:
            raise ValueError("constituents must carry circuits")
    n_sys = len(walk_certs[0].system)
    select = tuple(range(s))
    system = tuple(range(s, s + n_sys))
    width = s + n_sys
    nodes: list = []
    ancillas = 0
    for j, cert in enumerate(walk_certs):
        qmap = {}
        for q in range(cert.circuit.num_qubits):
            if q in cert.system:
                qmap[q] = system[list(cert.system).index(q)]
            else:
                qmap[q] = width
                width += 1
                ancillas += 1
        sub = cert.circuit.renamed(qmap, width)
        # prep wrote bit (s-1-k) of r on select qubit k
        ctrl = select[s - 1 - j]
        csub, width = controlled(sub, ctrl, width)
        nodes.extend(csub.nodes)
    circ = CircuitDag(width, nodes)
    return PowerChain(circ, s, select, system,
                      [c.block for c in walk_certs],
                      max(c.eps_bound for c in walk_certs), ancillas,
                      all(c.measurement == "circuit" for c in walk_certs))


def lcu_combine(prep: StatePrep, chain: PowerChain, series: CoefficientSeries,
                target: np.ndarray | None = None, target_id: str = "series(K)",
                extract: str = "auto",
                support_cap: int = 200_000) -> BlockEncodingCert:
    """(conj(V)^dag x 1) W (V x 1): block-encoding of sum_r a_r K^r.

    The measured block comes from the full circuit when the sparse evaluation
    stays under the support cap, otherwise from the exact select-branch
    identity sum_r v_r^2 * prod_j block_j^{r_j}.
    """
    if prep.s != chain.s:
        raise ValueError("select register width mismatch")
    s = prep.s
    alpha = series.alpha
    dim = chain.branch_blocks[0].shape[0]
    vprep = prep.circuit  # acts on qubits 0..s-1 == chain.select
    circ = CircuitDag(chain.circuit.num_qubits,
                      vprep.nodes + chain.circuit.nodes +
                      vprep.conjugated().adjoint().nodes)
    amps = prep.amplitudes
    block = np.zeros((dim, dim), dtype=complex)
    for r in range(1 << s):
        br = np.eye(dim, dtype=complex)
        for j in range(s):
            if (r >> j) & 1:
                br = chain.branch_blocks[j] @ br
        block += (amps[r] ** 2) * br
    measurement = "composed"
    if extract == "auto" and not chain.all_circuit_measured:
        extract = "composed"  # a constituent already overflowed honest evaluation
    if extract in ("circuit", "auto"):
        try:
            cap = None if extract == "circuit" else support_cap
            work = None if extract == "circuit" else 20 * support_cap
            block2 = project_block(circ, chain.system, dim,
                                   max_support=cap, max_work=work)
            block, measurement = block2, "circuit"
        except SupportOverflow:
            if extract == "circuit":
                raise
    if target is None:
        target = sum(series.values[r] * np.linalg.matrix_power(
            chain.branch_blocks[0], r) for r in range(series.R))
        target_id += " (from measured base)"
    bound = alpha * series.R * prep.delta_l2 + alpha * s * chain.constituent_bound
    measured = spectral_distance(target, alpha * block)
    return BlockEncodingCert(alpha, s + chain.ancillas, bound, measured, target_id,
                             block, np.asarray(target), circ, chain.system, measurement)
