"""Rate-1/2 LDPC encoding and normalized min-sum decoding.

Parity-check matrices load from the alist sparse text format.  Decoder LLRs
follow the package convention ln(P(0)/P(1)): positive means bit 0.

The encoder comes from a load-time GF(2) reduction of the parity matrix to
reduced row-echelon form: information bits sit on the non-pivot columns and
each parity bit is the XOR of the information bits selected by its row.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "LdpcCode",
    "DecodeResult",
    "load_code",
    "default_code_path",
    "code_from_adjacency",
    "encode",
    "extract_info",
    "syndrome",
    "decode_min_sum",
]


@dataclass(frozen=True)
class DecodeResult:
    posterior_llrs: np.ndarray
    hard_bits: np.ndarray
    converged: bool
    iterations_used: int


class LdpcCode:
    """Binary LDPC code defined by its parity-check adjacency lists."""

    def __init__(self, check_adj, n: int):
        m = len(check_adj)
        if m < 1 or n <= m:
            raise ValueError("parity matrix must have 1 <= m < n")
        self.n = int(n)
        self.m = int(m)
        self.k = self.n - self.m
        self.check_adj = tuple(np.asarray(a, dtype=int) for a in check_adj)

        for c, adj in enumerate(self.check_adj):
            if adj.size == 0:
                raise ValueError(f"check {c} has no variables")
            if adj.min() < 0 or adj.max() >= n:
                raise ValueError(f"check {c} references a variable out of range")
            if np.unique(adj).size != adj.size:
                raise ValueError(f"check {c} lists a variable twice")

        col_deg = np.bincount(np.concatenate(self.check_adj), minlength=n)
        if col_deg.min() < 2:
            bad = int(np.argmin(col_deg))
            raise ValueError(f"column {bad} has weight {col_deg[bad]} < 2")

        # adjacency transposed: checks touching each variable
        var_lists: list[list[int]] = [[] for _ in range(n)]
        for c, adj in enumerate(self.check_adj):
            for v in adj.tolist():
                var_lists[v].append(c)
        self.var_adj = tuple(np.asarray(a, dtype=int) for a in var_lists)

        # encoder: GF(2) reduced row-echelon form of the dense parity matrix
        dense = np.zeros((m, n), dtype=np.uint8)
        for c, adj in enumerate(self.check_adj):
            dense[c, adj] = 1
        rref, pivots = _gf2_rref(dense)
        if pivots.size < m:
            raise ValueError(
                f"parity matrix is rank-deficient over GF(2): rank {pivots.size} < {m}"
            )
        self.pivot_cols = pivots
        self.info_cols = np.setdiff1d(np.arange(n), pivots)
        self.parity_map = rref[:, self.info_cols]

        # flat edge arrays for the vectorized decoder, sorted by check
        self.edge_var = np.concatenate(self.check_adj)
        self.edge_check = np.concatenate(
            [np.full(a.size, c, dtype=int) for c, a in enumerate(self.check_adj)]
        )
        degs = np.array([a.size for a in self.check_adj])
        self.check_ptr = np.concatenate([[0], np.cumsum(degs)])[:-1]
        self.var_order = np.argsort(self.edge_var, kind="stable")
        self.edge_var_sorted = self.edge_var[self.var_order]
        vdegs = np.bincount(self.edge_var, minlength=n)
        self.var_ptr = np.concatenate([[0], np.cumsum(vdegs)])[:-1]


def _gf2_rref(mat: np.ndarray):
    a = mat.copy()
    m, n = a.shape
    pivots = []
    r = 0
    for c in range(n):
        if r == m:
            break
        rows = np.nonzero(a[r:, c])[0]
        if rows.size == 0:
            continue
        p = r + int(rows[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a, np.asarray(pivots, dtype=int)


def code_from_adjacency(check_adj, n: int) -> LdpcCode:
    return LdpcCode(check_adj, n)


def load_code(path) -> LdpcCode:
    """Load a parity-check matrix in alist format and build the code.

    Accepts both padded (fixed-width index rows with 0 fillers) and unpadded
    files; index lists are 1-based in the file.
    """
    path = Path(path)
    tokens = path.read_text().split()
    pos = 0

    def take(count: int) -> list[int]:
        nonlocal pos
        if pos + count > len(tokens):
            raise ValueError(f"unexpected end of alist in {path}")
        try:
            vals = [int(t) for t in tokens[pos : pos + count]]
        except ValueError:
            raise ValueError(f"malformed alist {path}: non-integer token") from None
        pos += count
        return vals

    n, m = take(2)
    if n < 1 or m < 1:
        raise ValueError(f"malformed alist {path}: bad dimensions {n} x {m}")
    dmax_col, dmax_row = take(2)
    col_deg = take(n)
    row_deg = take(m)
    if sum(col_deg) != sum(row_deg):
        raise ValueError(f"malformed alist {path}: degree sums differ")
    if max(col_deg) > dmax_col or max(row_deg) > dmax_row:
        raise ValueError(f"malformed alist {path}: degree exceeds declared maximum")

    remaining = len(tokens) - pos
    padded_total = n * dmax_col + m * dmax_row
    plain_total = sum(col_deg) + sum(row_deg)
    if remaining >= padded_total:
        widths_col = [dmax_col] * n
        widths_row = [dmax_row] * m
    elif remaining >= plain_total:
        widths_col = col_deg
        widths_row = row_deg
    else:
        raise ValueError(f"unexpected end of alist in {path}")

    var_adj = []
    for v in range(n):
        entries = [x for x in take(widths_col[v]) if x != 0]
        if len(entries) != col_deg[v]:
            raise ValueError(f"malformed alist {path}: column {v} degree mismatch")
        var_adj.append(np.asarray(entries, dtype=int) - 1)
    check_adj = []
    for c in range(m):
        entries = [x for x in take(widths_row[c]) if x != 0]
        if len(entries) != row_deg[c]:
            raise ValueError(f"malformed alist {path}: row {c} degree mismatch")
        check_adj.append(np.asarray(entries, dtype=int) - 1)

    from_cols = {(int(c), v) for v, adj in enumerate(var_adj) for c in adj}
    from_rows = {(c, int(v)) for c, adj in enumerate(check_adj) for v in adj}
    if from_cols != from_rows:
        raise ValueError(f"malformed alist {path}: row and column lists disagree")

    return LdpcCode(check_adj, n)


def default_code_path() -> Path:
    """Path of the shipped (144, 288) parity-check matrix."""
    return Path(resources.files("turboce").joinpath("data/ldpc_144_288.alist"))


def encode(code: LdpcCode, info_bits) -> np.ndarray:
    """Systematic encoding: info bits on the non-pivot columns, parity solved."""
    info = np.asarray(info_bits, dtype=np.uint8)
    if info.shape != (code.k,):
        raise ValueError(f"expected {code.k} info bits, got shape {info.shape}")
    cw = np.zeros(code.n, dtype=np.uint8)
    cw[code.info_cols] = info
    cw[code.pivot_cols] = (code.parity_map @ info) % 2
    return cw


def extract_info(code: LdpcCode, bits) -> np.ndarray:
    """Information bits of a codeword (the systematic positions)."""
    return np.asarray(bits, dtype=np.uint8)[code.info_cols]


def syndrome(code: LdpcCode, bits) -> np.ndarray:
    """Parity of each check for the given hard bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.bitwise_xor.reduceat(bits[code.edge_var], code.check_ptr)


def decode_min_sum(
    code: LdpcCode, channel_llrs, max_iters: int = 25, scale: float = 0.75
) -> DecodeResult:
    """Flooding-schedule normalized min-sum decoding.

    Check update: scale * (sign product excluding self) * (min magnitude
    excluding self).  Variable update: channel LLR plus incoming check
    messages.  Early exit on a zero syndrome.  The converged flag is set
    only when the syndrome is zero and every posterior is decisive
    (nonzero); an all-zero input is a fixed point and reports converged
    False even though its tie-broken hard bits form a codeword.
    """
    llr = np.asarray(channel_llrs, dtype=float)
    if llr.shape != (code.n,):
        raise ValueError(f"expected {code.n} channel LLRs, got shape {llr.shape}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if not 0.0 < scale <= 1.0:
        raise ValueError("scale must lie in (0, 1]")

    ec = code.edge_check
    ptr = code.check_ptr
    order = code.var_order
    vptr = code.var_ptr
    ev_sorted = code.edge_var_sorted

    v2c = llr[code.edge_var]
    posterior = llr.copy()
    converged = False
    iterations = max_iters
    for it in range(1, max_iters + 1):
        neg = v2c < 0
        mag = np.abs(v2c)
        parity = np.bitwise_xor.reduceat(neg, ptr)
        check_sign = np.where(parity, -1.0, 1.0)
        min1 = np.minimum.reduceat(mag, ptr)
        # first edge attaining the per-check minimum
        hit = np.flatnonzero(mag == min1[ec])
        _, first_of_check = np.unique(ec[hit], return_index=True)
        argmin_pos = hit[first_of_check]
        mag2 = mag.copy()
        mag2[argmin_pos] = np.inf
        min2 = np.minimum.reduceat(mag2, ptr)
        out_mag = min1[ec].copy()
        out_mag[argmin_pos] = min2[ec[argmin_pos]]
        edge_sign = np.where(neg, -1.0, 1.0)
        c2v = scale * check_sign[ec] * edge_sign * out_mag

        c2v_sorted = c2v[order]
        totals = np.add.reduceat(c2v_sorted, vptr)
        posterior = llr + totals
        v2c_sorted = posterior[ev_sorted] - c2v_sorted
        v2c = np.empty_like(v2c_sorted)
        v2c[order] = v2c_sorted

        hard = posterior < 0
        if not np.bitwise_xor.reduceat(hard[code.edge_var], ptr).any():
            iterations = it
            converged = bool(np.all(posterior != 0.0))
            break

    hard_bits = (posterior < 0).astype(np.uint8)
    return DecodeResult(posterior, hard_bits, converged, iterations)
