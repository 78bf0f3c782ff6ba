"""Iterative receiver: pilot CE, MRC equalization, demapping, decoding and
data-aided channel re-estimation.

Iteration 0 is the non-turbo receiver (pilot-only channel estimate).  Each
outer iteration rebuilds per-symbol beliefs from the latest decoder
posteriors, re-estimates every (subcarrier, antenna) coefficient with the
configured estimator, then re-equalizes and re-decodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelRealization, FrameConfig, TxFrame, data_times
from .constellation import Constellation, belief_arrays, make_constellation
from .estimation import EstimatorKind, FrameSlotSequence, NoiseContext, estimate
from .ldpc import LdpcCode, decode_min_sum, extract_info

__all__ = [
    "SigmaMode",
    "DemapMode",
    "ReceiverConfig",
    "IterationRecord",
    "IterationTrace",
    "pilot_channel_estimate",
    "equalize_and_demap",
    "dft_denoise",
    "data_belief_grids",
    "data_aided_estimate",
    "run_receiver",
]

# demapper output saturation; keeps the decoder finite in noiseless corner cases
LLR_CLIP = 1000.0
# lower bound on sigma^2 handed to the soft estimators, so certainty limits
# stay well-posed (mirrors the closed form's own variance floor)
SIGMA_FLOOR = 1e-12


class SigmaMode(str, Enum):
    TRUE_SIGMA = "true_sigma"
    C_TIMES_AVG_VARIANCE = "c_times_avg_variance"


class DemapMode(str, Enum):
    EXACT = "exact"
    MAX_LOG = "max_log"


@dataclass(frozen=True)
class ReceiverConfig:
    """Knobs of one receiver variant under test."""

    estimator: EstimatorKind = EstimatorKind.SOFT_PARAM
    outer_iterations: int = 1
    c_param: float = 17.0
    sigma_mode: SigmaMode = SigmaMode.TRUE_SIGMA
    dft_denoise: bool = False
    tap_cutoff: int = 0
    demap_mode: DemapMode = DemapMode.EXACT
    decoder_max_iters: int = 25
    decoder_scale: float = 0.75
    label: str = ""

    def __post_init__(self):
        if self.outer_iterations < 0:
            raise ValueError("outer_iterations must be non-negative")
        if self.dft_denoise and self.tap_cutoff < 1:
            raise ValueError("tap_cutoff must be at least 1 when dft_denoise is on")
        if not self.label:
            object.__setattr__(self, "label", self.estimator.value)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    channel_mse: float
    mean_abs_llr: float
    decoder_converged: bool
    frame_error: bool
    degenerate_subcarriers: int


@dataclass(frozen=True)
class IterationTrace:
    records: tuple

    def __len__(self):
        return len(self.records)

    @property
    def final_frame_error(self) -> bool:
        return self.records[-1].frame_error

    @property
    def mse(self) -> np.ndarray:
        return np.array([r.channel_mse for r in self.records])

    @property
    def frame_errors(self) -> np.ndarray:
        return np.array([r.frame_error for r in self.records])


def pilot_channel_estimate(grid: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Per (subcarrier, antenna) average over the pilot OFDM symbols."""
    pilots = grid[list(cfg.pilot_positions), :, :]
    return pilots.sum(axis=0) / (cfg.n_pilot * cfg.pilot_amp)


def dft_denoise(h_hat_row: np.ndarray, tap_cutoff: int) -> np.ndarray:
    """Project one antenna's estimate onto the first ``tap_cutoff`` delay taps."""
    h_hat_row = np.asarray(h_hat_row, dtype=complex)
    n = h_hat_row.shape[0]
    if not 1 <= tap_cutoff <= n:
        raise ValueError(f"tap_cutoff must lie in [1, {n}]")
    g = np.fft.ifft(h_hat_row)
    g[tap_cutoff:] = 0.0
    return np.fft.fft(g)


def _denoise_grid(h_hat: np.ndarray, rx_cfg: ReceiverConfig) -> np.ndarray:
    if not rx_cfg.dft_denoise:
        return h_hat
    out = np.empty_like(h_hat)
    for a in range(h_hat.shape[1]):
        out[:, a] = dft_denoise(h_hat[:, a], rx_cfg.tap_cutoff)
    return out


def equalize_and_demap(
    grid: np.ndarray,
    h_hat: np.ndarray,
    noise_power: float,
    cfg: FrameConfig,
    const: Constellation,
    n_tracked_symbols: int,
    mode: DemapMode = DemapMode.EXACT,
):
    """MRC combining followed by per-bit LLR demapping of the tracked symbols.

    Returns ``(llrs, n_degenerate)`` where ``llrs`` is the flat LLR vector of
    the tracked coded bits (symbol-major, MSB first) and ``n_degenerate``
    counts subcarriers whose combined channel power was zero (their bits get
    neutral zero LLRs).
    """
    q = const.order
    weight = np.sum(h_hat.real**2 + h_hat.imag**2, axis=1)  # (n_used,)
    degenerate = weight <= 0.0
    n_degenerate = int(np.count_nonzero(degenerate))
    safe_w = np.where(degenerate, 1.0, weight)
    z = np.einsum("tfa,fa->tf", grid, h_hat.conj()) / safe_w[None, :]
    z[:, degenerate] = 0.0
    with np.errstate(divide="ignore"):
        nu = np.where(degenerate, np.inf, np.maximum(noise_power / safe_w, 1e-30))

    dt = data_times(cfg)
    z_data = z[dt, :].reshape(-1)[:n_tracked_symbols]
    nu_data = np.tile(nu, len(dt))[:n_tracked_symbols]

    d2 = np.abs(z_data[:, None] - const.points[None, :]) ** 2
    metric = -d2 / nu_data[:, None]

    llrs = np.empty((n_tracked_symbols, q))
    for k in range(q):
        zero_half = const.labels[:, k] == 0
        if mode == DemapMode.MAX_LOG:
            llrs[:, k] = metric[:, zero_half].max(axis=1) - metric[:, ~zero_half].max(axis=1)
        else:
            llrs[:, k] = logsumexp(metric[:, zero_half], axis=1) - logsumexp(
                metric[:, ~zero_half], axis=1
            )
    return np.clip(llrs.reshape(-1), -LLR_CLIP, LLR_CLIP), n_degenerate


def data_belief_grids(
    const: Constellation,
    cfg: FrameConfig,
    tracked_llrs_flat: np.ndarray,
    n_tracked_symbols: int,
):
    """Belief statistics on the (n_data, n_used) data grid.

    Tracked symbols come from the supplied per-bit LLRs; filler positions get
    the uninformative belief (mean 0, second moment 1, hard point = node 0).
    """
    q = const.order
    total = cfg.n_data * cfg.n_used
    means = np.zeros(total, complex)
    seconds = np.ones(total)
    hard = np.full(total, const.points[0], dtype=complex)
    if n_tracked_symbols:
        llr_matrix = tracked_llrs_flat.reshape(n_tracked_symbols, q)
        m, s, _v, hp = belief_arrays(const, llr_matrix)
        means[:n_tracked_symbols] = m
        seconds[:n_tracked_symbols] = s
        hard[:n_tracked_symbols] = hp
    shape = (cfg.n_data, cfg.n_used)
    return means.reshape(shape), seconds.reshape(shape), hard.reshape(shape)


def data_aided_estimate(
    grid: np.ndarray,
    cfg: FrameConfig,
    rx_cfg: ReceiverConfig,
    mean_grid: np.ndarray,
    second_grid: np.ndarray,
    hard_grid: np.ndarray,
    sigma_sq: float,
    avg_variance: float,
) -> np.ndarray:
    """Run the configured estimator for every (subcarrier, antenna)."""
    n_ofdm, n_used, n_rx = grid.shape
    dt = data_times(cfg)
    pilot_mask = np.zeros(n_ofdm, bool)
    pilot_mask[list(cfg.pilot_positions)] = True

    means_tf = np.zeros((n_ofdm, n_used), complex)
    seconds_tf = np.zeros((n_ofdm, n_used))
    hard_tf = np.zeros((n_ofdm, n_used), complex)
    means_tf[pilot_mask, :] = cfg.pilot_amp
    seconds_tf[pilot_mask, :] = cfg.pilot_amp**2
    hard_tf[pilot_mask, :] = cfg.pilot_amp
    means_tf[dt, :] = mean_grid
    seconds_tf[dt, :] = second_grid
    hard_tf[dt, :] = hard_grid

    noise = NoiseContext(sigma_sq, rx_cfg.c_param)
    h_new = np.empty((n_used, n_rx), complex)
    for f in range(n_used):
        slots = FrameSlotSequence(
            means_tf[:, f], seconds_tf[:, f], hard_tf[:, f], pilot_mask, cfg.pilot_amp
        )
        for a in range(n_rx):
            try:
                h_new[f, a] = estimate(
                    rx_cfg.estimator, slots, grid[:, f, a], noise, avg_variance
                ).h_hat
            except ValueError as err:
                raise ValueError(
                    f"estimator {rx_cfg.estimator.value} failed at subcarrier {f}, "
                    f"antenna {a}: {err}"
                ) from err
    return h_new


def run_receiver(
    grid: np.ndarray,
    tx: TxFrame,
    ch: ChannelRealization,
    code: LdpcCode,
    rx_cfg: ReceiverConfig,
    data_llrs_override: np.ndarray | None = None,
) -> IterationTrace:
    """Run the full receive chain and return one record per iteration.

    ``data_llrs_override``, when given, replaces the decoder posteriors as
    the belief source for the data-aided re-estimation (the decoder still
    runs for the error metrics).  Used for oracle and corrupted-belief
    experiments.
    """
    cfg = tx.cfg
    if grid.shape != (cfg.n_ofdm, cfg.n_used, cfg.n_rx):
        raise ValueError("received grid shape does not match the frame config")
    if rx_cfg.dft_denoise and rx_cfg.tap_cutoff > cfg.n_used:
        raise ValueError("tap_cutoff exceeds the number of subcarriers")
    const = make_constellation(cfg.modulation_order)
    q = cfg.modulation_order
    n_tracked = tx.n_codewords * (code.n // q)
    n_bits = n_tracked * q
    if data_llrs_override is not None:
        data_llrs_override = np.asarray(data_llrs_override, dtype=float)
        if data_llrs_override.shape != (n_bits,):
            raise ValueError(f"expected {n_bits} override LLRs")

    h_pilot = pilot_channel_estimate(grid, cfg)
    pilot_power = float(np.mean(h_pilot.real**2 + h_pilot.imag**2))
    h_hat = _denoise_grid(h_pilot, rx_cfg)

    h_true = ch.h
    true_power = float(np.mean(np.abs(h_true) ** 2))

    records = []
    posterior_flat = np.zeros(n_bits)

    for it in range(rx_cfg.outer_iterations + 1):
        if it > 0:
            source = data_llrs_override if data_llrs_override is not None else posterior_flat
            mean_grid, second_grid, hard_grid = data_belief_grids(
                const, cfg, source, n_tracked
            )
            var_grid = second_grid - (mean_grid.real**2 + mean_grid.imag**2)
            avg_variance = float(np.mean(var_grid))
            if rx_cfg.sigma_mode == SigmaMode.C_TIMES_AVG_VARIANCE:
                sigma_sq = rx_cfg.c_param * avg_variance
            else:
                sigma_sq = ch.noise_power / pilot_power if pilot_power > 0 else 1.0
            sigma_sq = max(sigma_sq, SIGMA_FLOOR)
            h_hat = data_aided_estimate(
                grid, cfg, rx_cfg, mean_grid, second_grid, hard_grid,
                sigma_sq, avg_variance,
            )
            h_hat = _denoise_grid(h_hat, rx_cfg)

        mse = float(np.mean(np.abs(h_hat - h_true) ** 2) / true_power)
        llrs, n_degenerate = equalize_and_demap(
            grid, h_hat, ch.noise_power, cfg, const, n_tracked, rx_cfg.demap_mode
        )

        converged = True
        frame_error = False
        posteriors = np.empty((tx.n_codewords, code.n))
        for c in range(tx.n_codewords):
            res = decode_min_sum(
                code,
                llrs[c * code.n : (c + 1) * code.n],
                max_iters=rx_cfg.decoder_max_iters,
                scale=rx_cfg.decoder_scale,
            )
            posteriors[c] = res.posterior_llrs
            converged &= res.converged
            if np.any(extract_info(code, res.hard_bits) != tx.info_bits[c]):
                frame_error = True
        posterior_flat = posteriors.reshape(-1)

        records.append(
            IterationRecord(
                iteration=it,
                channel_mse=mse,
                mean_abs_llr=float(np.mean(np.abs(llrs))) if n_bits else 0.0,
                decoder_converged=bool(converged),
                frame_error=bool(frame_error),
                degenerate_subcarriers=n_degenerate,
            )
        )

    return IterationTrace(tuple(records))
