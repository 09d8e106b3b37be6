"""Exact dense reference oracles: Hermitian exponentials, spectral distances,
and brute-force walk path enumeration.  Everything here is independent of the
circuit constructions so it can serve as the verification side of each check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonians import HamiltonianSpec, edge_amplitude

HERM_TOL = 1e-10
DIM_CAP = 1024


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """e^{-i h t} via eigendecomposition; h must be Hermitian."""
    h = np.asarray(h, dtype=complex)
    if h.shape[0] != h.shape[1]:
        raise ValueError("matrix must be square")
    if h.shape[0] > DIM_CAP:
        raise ValueError(f"dimension {h.shape[0]} exceeds cap {DIM_CAP}")
    if np.linalg.norm(h - h.conj().T, np.inf) > HERM_TOL:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    d = a - b
    if not d.any():
        return 0.0
    return float(np.linalg.svd(d, compute_uv=False)[0])


@dataclass
class PathTable:
    """Classically enumerated walk paths with their good-branch weights.

    Each row is (w_vec, j_vec, weight); weight is the product of edge
    amplitudes sqrt(conj(entry)) along the path (entries rescaled by the
    overlap count for sum Hamiltonians).  Negative self-loop edges carry
    magnitude sqrt(|entry|) here; their sign lives in the two-flag widget
    components, which this table tracks via the `neg_loops` step mask.
    """
    spec: HamiltonianSpec
    r: int
    j0: int
    rows: list  # (w_vec, j_vec, weight, neg_loop_mask)
    extended: bool

    def weight_norm(self) -> float:
        return sum(abs(w) ** 2 for _, _, w, _ in self.rows)


def enumerate_paths(spec: HamiltonianSpec, j0: int, r: int,
                    extended: bool = False, cap: int = 10 ** 6) -> PathTable:
    """All (w_vec, path) pairs of length r starting at j0, with weights.

    Extended mode enumerates the term choice per step and weights by the
    rescaled entries; plain mode requires m == 1.
    """
    if not extended and spec.m != 1:
        raise ValueError("plain enumeration requires a single term")
    m = spec.m if extended else 1
    if (m * spec.d) ** r > cap:
        raise ValueError("path enumeration cap exceeded")
    rows = []

    def edge_weight(j, k):
        z = spec.rescaled_entry(j, k) if extended else spec.entry(j, k)
        if j == k and z.real < 0 and z.imag == 0:
            return np.sqrt(-z.real), True
        return edge_amplitude(z, j, k), False

    def rec(wvec, path, weight, negmask):
        if len(path) == r + 1:
            rows.append((tuple(wvec), tuple(path), weight, negmask))
            return
        s = len(path) - 1
        for w in range(m):
            seen = set()
            for t in range(spec.d):
                k = spec.neighbor(w, path[-1], t)
                if k in seen:
                    continue  # duplicate columns cannot occur for valid specs
                seen.add(k)
                ew, neg = edge_weight(path[-1], k)
                rec(wvec + [w], path + [k], weight * ew,
                    negmask | ((1 << s) if neg else 0))

    rec([], [j0], 1.0 + 0j, 0)
    return PathTable(spec, r, j0, rows, extended)


def path_sum_check(spec: HamiltonianSpec, r: int, extended: bool = False) -> float:
    """max_j,k | sum over paths of entry products - (H^r)_{jk} | using raw
    entries; the brute-force counterpart of the walk's block target."""
    H = spec.materialize_dense()
    Hr = np.linalg.matrix_power(H, r)
    worst = 0.0
    m = spec.m if extended else 1
    for j0 in range(spec.N):
        acc = np.zeros(spec.N, dtype=complex)

        def rec(path, prod):
            if len(path) == r + 1:
                acc[path[-1]] += prod
                return
            for w in range(m):
                for t in range(spec.d):
                    k = spec.neighbor(w, path[-1], t)
                    z = spec.rescaled_entry(path[-1], k) if extended \
                        else spec.entry(path[-1], k)
                    if z != 0:
                        rec(path + [k], prod * z)

        rec([j0], 1.0 + 0j)
        worst = max(worst, float(np.max(np.abs(acc - Hr[j0]))))
    return worst
