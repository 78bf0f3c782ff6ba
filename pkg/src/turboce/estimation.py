"""Single-coefficient data-aided channel estimators over one frame of slots.

Every estimator sees the observation model y_i = h * x_i + e_i where x_i is
either a pilot of known amplitude p or a decoded data symbol described by
its posterior statistics.  A pilot behaves as a belief with mean p, second
moment p^2 and variance 0, so one accessor serves both slot kinds.

``estimate_soft_general`` builds the full correlation matrix and solves it
densely; it is the reference implementation that the O(N) closed form
``estimate_soft_closed_form`` is checked against.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from .constellation import SymbolBelief

__all__ = [
    "EstimatorKind",
    "Pilot",
    "Data",
    "FrameSlotSequence",
    "NoiseContext",
    "ChannelCoefEstimate",
    "estimate_pilot_only",
    "estimate_hard",
    "estimate_hard_weighted",
    "estimate_soft_unbiased",
    "estimate_soft_general",
    "estimate_soft_closed_form",
    "estimate_soft_param",
    "estimate",
    "band_avg_variance",
]

# effective-variance floor used by the closed form when sigma^2 = 0 would
# make a per-slot denominator vanish
VARIANCE_FLOOR = 1e-12


class EstimatorKind(str, Enum):
    PILOT_ONLY = "pilot_only"
    HARD = "hard"
    HARD_WEIGHTED = "hard_weighted"
    SOFT_UNBIASED = "soft_unbiased"
    SOFT_GENERAL = "soft_general"
    SOFT_PARAM = "soft_param"


@dataclass(frozen=True)
class Pilot:
    amplitude: float


@dataclass(frozen=True)
class Data:
    belief: SymbolBelief


Slot = Union[Pilot, Data]


@dataclass(frozen=True)
class FrameSlotSequence:
    """One frame's worth of slots for a single subcarrier, in time order.

    Arrays hold the uniform per-slot statistics: posterior mean E[x_i],
    second moment E[|x_i|^2] and the most probable point [x_i].  Pilots
    enter with mean p, second moment p^2 and hard point p.
    """

    means: np.ndarray
    second_moments: np.ndarray
    hard_points: np.ndarray
    pilot_mask: np.ndarray
    pilot_amp: float

    def __post_init__(self):
        if self.means.shape[0] < 1:
            raise ValueError("a frame needs at least one slot")

    @classmethod
    def from_slots(cls, slots: Sequence[Slot]) -> "FrameSlotSequence":
        n = len(slots)
        means = np.zeros(n, complex)
        seconds = np.zeros(n)
        hard = np.zeros(n, complex)
        pilot_mask = np.zeros(n, bool)
        amp = 0.0
        for i, slot in enumerate(slots):
            if isinstance(slot, Pilot):
                p = float(slot.amplitude)
                if p <= 0:
                    raise ValueError("pilot amplitude must be positive")
                if amp and p != amp:
                    raise ValueError("all pilot amplitudes in a frame must be equal")
                amp = p
                means[i] = p
                seconds[i] = p * p
                hard[i] = p
                pilot_mask[i] = True
            else:
                b = slot.belief
                means[i] = b.mean
                seconds[i] = b.second_moment
                hard[i] = b.hard_point
        return cls(means, seconds, hard, pilot_mask, amp)

    @classmethod
    def from_beliefs(
        cls,
        n_ofdm: int,
        pilot_positions: Sequence[int],
        pilot_amp: float,
        beliefs: Iterable[SymbolBelief],
    ) -> "FrameSlotSequence":
        """Assemble a frame from pilot positions plus data beliefs in time order."""
        pilots = set(int(t) for t in pilot_positions)
        it = iter(beliefs)
        slots: list[Slot] = []
        for t in range(n_ofdm):
            if t in pilots:
                slots.append(Pilot(pilot_amp))
            else:
                slots.append(Data(next(it)))
        return cls.from_slots(slots)

    @property
    def n_ofdm(self) -> int:
        return self.means.shape[0]

    @property
    def n_pilot(self) -> int:
        return int(self.pilot_mask.sum())

    @property
    def n_data(self) -> int:
        return self.n_ofdm - self.n_pilot

    @property
    def variances(self) -> np.ndarray:
        return self.second_moments - (self.means.real**2 + self.means.imag**2)


@dataclass(frozen=True)
class NoiseContext:
    """Noise-to-channel power ratio sigma^2 plus the fitted constant C."""

    sigma_sq: float
    c_param: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sigma_sq) or self.sigma_sq < 0:
            raise ValueError("sigma_sq must be finite and non-negative")
        if not np.isfinite(self.c_param) or self.c_param < 0:
            raise ValueError("c_param must be finite and non-negative")


@dataclass(frozen=True)
class ChannelCoefEstimate:
    h_hat: complex
    kind: EstimatorKind


def _as_observation(slots: FrameSlotSequence, y) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if y.shape != (slots.n_ofdm,):
        raise ValueError(
            f"observation length {y.shape} does not match {slots.n_ofdm} slots"
        )
    return y


def estimate_pilot_only(slots: FrameSlotSequence, y) -> ChannelCoefEstimate:
    """Plain average over pilot slots: h = sum(y_i) / (n_pilot * p)."""
    y = _as_observation(slots, y)
    if slots.n_pilot == 0:
        raise ValueError("no pilots")
    h = y[slots.pilot_mask].sum() / (slots.n_pilot * slots.pilot_amp)
    return ChannelCoefEstimate(complex(h), EstimatorKind.PILOT_ONLY)


def estimate_hard(slots: FrameSlotSequence, y) -> ChannelCoefEstimate:
    """Per-term normalized average h = (1/N) sum conj([x_i]) y_i / |[x_i]|^2."""
    y = _as_observation(slots, y)
    hp = slots.hard_points
    pw = hp.real**2 + hp.imag**2
    if np.any(pw <= 0):
        raise ValueError("degenerate hard symbol")
    h = np.sum(hp.conj() * y / pw) / slots.n_ofdm
    return ChannelCoefEstimate(complex(h), EstimatorKind.HARD)


def estimate_hard_weighted(slots: FrameSlotSequence, y) -> ChannelCoefEstimate:
    """Least-squares fit of y_i = h [x_i]: h = sum conj([x_i]) y_i / sum |[x_i]|^2."""
    y = _as_observation(slots, y)
    hp = slots.hard_points
    den = float(np.sum(hp.real**2 + hp.imag**2))
    if den <= 0:
        raise ValueError("degenerate hard symbols: zero total power")
    h = np.sum(hp.conj() * y) / den
    return ChannelCoefEstimate(complex(h), EstimatorKind.HARD_WEIGHTED)


def estimate_soft_unbiased(slots: FrameSlotSequence, y) -> ChannelCoefEstimate:
    """Noise-blind generalized LS on the means: h = sum conj(Ex_i) y_i / sum |Ex_i|^2."""
    y = _as_observation(slots, y)
    phi = slots.means
    den = float(np.sum(phi.real**2 + phi.imag**2))
    if den <= 0:
        raise ValueError("unbiased estimator undefined: all slot means are zero")
    h = np.sum(phi.conj() * y) / den
    return ChannelCoefEstimate(complex(h), EstimatorKind.SOFT_UNBIASED)


def estimate_soft_general(
    slots: FrameSlotSequence, y, noise: NoiseContext
) -> ChannelCoefEstimate:
    """MMSE estimate via an explicit dense decomposition of the correlation matrix.

    h = Ex^H (Ex Ex^H + diag(var_i) + sigma^2 I)^-1 y.  O(N^3); this is the
    oracle the closed form is validated against.  The solve goes through an
    eigendecomposition with eigenvalues below 1e-10 * lambda_max treated as
    numerically zero, so the sigma^2 -> 0 limit stays accurate instead of
    amplifying rounding noise from the near-null space.
    """
    y = _as_observation(slots, y)
    phi = slots.means
    a_diag = slots.variances + noise.sigma_sq
    pw = phi.real**2 + phi.imag**2
    # exact singularity: the correlation matrix A + phi phi^H is singular iff
    # two slots have zero effective variance, or one has and its mean is zero
    n_zero = int(np.count_nonzero(a_diag <= 0.0))
    if n_zero >= 2 or (n_zero == 1 and pw[a_diag <= 0.0][0] == 0.0):
        raise ValueError("singular correlation matrix")
    r = np.outer(phi, phi.conj())
    r[np.diag_indices_from(r)] += a_diag
    lam, u = np.linalg.eigh(r)
    if not np.all(np.isfinite(lam)) or lam[-1] <= 0.0:
        raise ValueError("singular correlation matrix")
    keep = lam > 1e-10 * float(lam[-1])
    coef = (u.conj().T @ phi).conj() * (u.conj().T @ y)
    h = np.sum(coef[keep] / lam[keep])
    return ChannelCoefEstimate(complex(h), EstimatorKind.SOFT_GENERAL)


def estimate_soft_closed_form(
    slots: FrameSlotSequence, y, noise: NoiseContext
) -> ChannelCoefEstimate:
    """Rank-one-update closed form of the MMSE estimate, O(N) per coefficient.

    h = sum_i conj(Ex_i) y_i / D_i with
    D_i = E|x_i|^2 + sigma^2 + sum_{j != i} |Ex_j|^2 * A_ii / A_jj,
    A_jj = E|x_j|^2 - |Ex_j|^2 + sigma^2.
    """
    y = _as_observation(slots, y)
    phi = slots.means
    sm = slots.second_moments
    sigma_eff = noise.sigma_sq
    a = slots.variances + sigma_eff
    if np.any(a <= 0.0):
        sigma_eff = max(sigma_eff, VARIANCE_FLOOR)
        a = slots.variances + sigma_eff
        if np.any(a <= 0.0):
            raise ValueError("zero effective variance with zero noise")
    pw = phi.real**2 + phi.imag**2
    s_sum = float(np.sum(pw / a))
    den = sm + sigma_eff + a * s_sum - pw
    h = np.sum(phi.conj() * y / den)
    return ChannelCoefEstimate(complex(h), EstimatorKind.SOFT_GENERAL)


def estimate_soft_param(
    slots: FrameSlotSequence, y, noise: NoiseContext, avg_variance: float
) -> ChannelCoefEstimate:
    """Constant-ratio approximation of the closed form.

    h = sum_i conj(Ex_i) y_i / (E|x_i|^2 + sum_{j != i} |Ex_j|^2 + C * avg_var)
    where avg_var is the band-wide average soft-symbol variance supplied by
    the caller (one subcarrier's slots alone do not span the band).
    """
    y = _as_observation(slots, y)
    if avg_variance < 0:
        raise ValueError("avg_variance must be non-negative")
    phi = slots.means
    pw = phi.real**2 + phi.imag**2
    total = float(np.sum(pw))
    den = slots.second_moments + (total - pw) + noise.c_param * avg_variance
    if np.any(den <= 0):
        raise ValueError("non-positive denominator in soft-param estimate")
    h = np.sum(phi.conj() * y / den)
    return ChannelCoefEstimate(complex(h), EstimatorKind.SOFT_PARAM)


def band_avg_variance(beliefs: Iterable[SymbolBelief]) -> float:
    """Arithmetic mean of data-symbol variances; 0.0 for an empty set."""
    variances = [b.variance for b in beliefs]
    if not variances:
        return 0.0
    return float(np.mean(variances))


def estimate(
    kind: EstimatorKind,
    slots: FrameSlotSequence,
    y,
    noise: NoiseContext | None = None,
    avg_variance: float = 0.0,
) -> ChannelCoefEstimate:
    """Dispatch to one estimator by kind; soft kinds require ``noise``."""
    if kind == EstimatorKind.PILOT_ONLY:
        return estimate_pilot_only(slots, y)
    if kind == EstimatorKind.HARD:
        return estimate_hard(slots, y)
    if kind == EstimatorKind.HARD_WEIGHTED:
        return estimate_hard_weighted(slots, y)
    if kind == EstimatorKind.SOFT_UNBIASED:
        return estimate_soft_unbiased(slots, y)
    if noise is None:
        raise ValueError(f"estimator {kind.value} requires a NoiseContext")
    if kind == EstimatorKind.SOFT_GENERAL:
        return estimate_soft_closed_form(slots, y, noise)
    if kind == EstimatorKind.SOFT_PARAM:
        return estimate_soft_param(slots, y, noise, avg_variance)
    raise ValueError(f"unknown estimator kind {kind!r}")
