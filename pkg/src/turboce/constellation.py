"""Gray-labeled QAM constellations and LLR-to-symbol posterior statistics.

The bit LLR convention used everywhere in this package is

    LLR = ln(P(bit = 0) / P(bit = 1)),

so positive LLRs favor bit 0.  +/-inf values are legal inputs and are
handled exactly (bit probability 0 or 1), never clipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "SymbolBelief",
    "make_constellation",
    "bit_prob_one",
    "node_probabilities",
    "node_probabilities_batch",
    "symbol_belief",
    "belief_arrays",
]


@dataclass(frozen=True)
class Constellation:
    """2^Q lattice points with their bit labels, unit average power.

    ``labels[j]`` is the Q-bit pattern (MSB first) of ``points[j]``.  The
    first Q/2 bits select the in-phase amplitude, the last Q/2 bits the
    quadrature amplitude; each axis carries a Gray code, so nearest grid
    neighbours differ in exactly one bit.
    """

    order: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def point_powers(self) -> np.ndarray:
        # re^2 + im^2, the same primitive used for |mean|^2, so that a
        # one-hot belief collapses to exactly zero variance
        return self.points.real**2 + self.points.imag**2


@dataclass(frozen=True)
class SymbolBelief:
    """Posterior statistics of one QAM symbol given independent bit LLRs.

    ``hard_point`` is the most probable lattice node; ties are broken by
    the lowest node index so results are reproducible.
    """

    mean: complex
    second_moment: float
    variance: float
    hard_point: complex
    node_probs: np.ndarray


def _gray_decode(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


def make_constellation(order_q: int) -> Constellation:
    """Build the QPSK / QAM16 / QAM64 lattice for ``order_q`` bits per symbol."""
    if order_q not in (2, 4, 6):
        raise ValueError("unsupported modulation order")
    half = order_q // 2
    levels = 1 << half
    # per-axis amplitudes {+-1, +-3, ...} scaled to unit average 2-D power
    scale = math.sqrt(3.0 / (2.0 * (levels * levels - 1)))
    axis_amp = np.array(
        [(levels - 1 - 2 * _gray_decode(b)) * scale for b in range(levels)]
    )
    n = 1 << order_q
    j = np.arange(n)
    points = axis_amp[j >> half] + 1j * axis_amp[j & (levels - 1)]
    labels = ((j[:, None] >> np.arange(order_q - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order_q, points, labels)


def bit_prob_one(llr: float) -> float:
    """P(bit = 1) = 1 / (1 + e^LLR), computed without overflow for any LLR."""
    llr = float(llr)
    if math.isnan(llr):
        raise ValueError("LLR must not be NaN")
    if llr >= 0:
        z = math.exp(-llr)
        return z / (1.0 + z)
    return 1.0 / (1.0 + math.exp(llr))


def _bit_probs_one(llrs: np.ndarray) -> np.ndarray:
    if np.isnan(llrs).any():
        raise ValueError("LLR must not be NaN")
    z = np.exp(-np.abs(llrs))
    return np.where(llrs >= 0, z / (1.0 + z), 1.0 / (1.0 + z))


def node_probabilities(constellation: Constellation, llrs) -> np.ndarray:
    """Per-node probabilities: product of p(bit=1) / p(bit=0) over the label bits."""
    llrs = np.asarray(llrs, dtype=float)
    if llrs.shape != (constellation.order,):
        raise ValueError(
            f"expected {constellation.order} LLRs, got shape {llrs.shape}"
        )
    p1 = _bit_probs_one(llrs)
    factors = np.where(constellation.labels == 1, p1, 1.0 - p1)
    return factors.prod(axis=1)


def node_probabilities_batch(constellation: Constellation, llr_matrix) -> np.ndarray:
    """Node probabilities for many symbols at once; rows are LLR vectors."""
    llr_matrix = np.asarray(llr_matrix, dtype=float)
    if llr_matrix.ndim != 2 or llr_matrix.shape[1] != constellation.order:
        raise ValueError(
            f"expected (n, {constellation.order}) LLR matrix, got shape {llr_matrix.shape}"
        )
    p1 = _bit_probs_one(llr_matrix)
    lab = constellation.labels.astype(bool)
    factors = np.where(lab[None, :, :], p1[:, None, :], 1.0 - p1[:, None, :])
    return factors.prod(axis=2)


def symbol_belief(constellation: Constellation, llrs) -> SymbolBelief:
    """Posterior mean, second moment, variance and hard decision for one symbol."""
    probs = node_probabilities(constellation, llrs)
    mean = complex(probs @ constellation.points)
    second = float(probs @ constellation.point_powers)
    variance = second - (mean.real**2 + mean.imag**2)
    hard = complex(constellation.points[int(np.argmax(probs))])
    return SymbolBelief(mean, second, variance, hard, probs)


def belief_arrays(constellation: Constellation, llr_matrix):
    """Vector form of :func:`symbol_belief` over many symbols.

    Returns ``(means, second_moments, variances, hard_points)`` arrays with
    one entry per row of ``llr_matrix``.
    """
    probs = node_probabilities_batch(constellation, llr_matrix)
    means = probs @ constellation.points
    seconds = probs @ constellation.point_powers
    variances = seconds - (means.real**2 + means.imag**2)
    hard = constellation.points[probs.argmax(axis=1)]
    return means, seconds, variances, hard
