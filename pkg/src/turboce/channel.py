"""Synthetic frequency-selective channel, frame assembly and AWGN transmission.

The channel is a tapped delay line: L i.i.d. complex Gaussian taps with total
power 1, transformed to the frequency domain, so E|h|^2 = 1 per subcarrier
and the tap count is the single knob controlling frequency selectivity.

SNR convention: per receive antenna on unit-power data symbols, so
snr_db = 10*log10(1 / noise_power).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import make_constellation
from .ldpc import LdpcCode, encode

__all__ = [
    "FrameConfig",
    "ChannelRealization",
    "TxFrame",
    "noise_power_from_snr_db",
    "draw_channel",
    "modulate_frame",
    "transmit",
    "data_times",
    "frame_capacity",
]


@dataclass(frozen=True)
class FrameConfig:
    """Geometry of one transmission frame (time x frequency x antennas)."""

    rb_num: int = 1
    n_rx: int = 8
    modulation_order: int = 4
    n_data: int = 12
    n_pilot: int = 2
    rb_size: int = 12
    pilot_amp: float = math.sqrt(2.0)
    pilot_positions: tuple = (2, 11)

    def __post_init__(self):
        if self.rb_num < 1 or self.rb_size < 1:
            raise ValueError("rb_num and rb_size must be at least 1")
        if self.n_rx < 1:
            raise ValueError("n_rx must be at least 1")
        if self.n_data < 0 or self.n_pilot < 0 or self.n_data + self.n_pilot < 1:
            raise ValueError("frame must contain at least one OFDM symbol")
        if self.pilot_amp <= 0:
            raise ValueError("pilot_amp must be positive")
        pos = tuple(int(t) for t in self.pilot_positions)
        if len(pos) != self.n_pilot or len(set(pos)) != len(pos):
            raise ValueError("pilot_positions must be n_pilot distinct indices")
        if pos and (min(pos) < 0 or max(pos) >= self.n_ofdm):
            raise ValueError("pilot_positions out of range")
        if tuple(sorted(pos)) != pos:
            raise ValueError("pilot_positions must be sorted")
        object.__setattr__(self, "pilot_positions", pos)

    @property
    def n_ofdm(self) -> int:
        return self.n_data + self.n_pilot

    @property
    def n_used(self) -> int:
        return self.rb_num * self.rb_size


@dataclass(frozen=True)
class ChannelRealization:
    """Ground-truth per-subcarrier, per-antenna gains and the noise power."""

    h: np.ndarray  # (n_used, n_rx) complex
    noise_power: float
    taps: int


@dataclass(frozen=True)
class TxFrame:
    """One transmitted frame: info bits, codewords and the symbol grid.

    Data symbols fill the non-pilot rows time-major (all subcarriers of the
    first data symbol, then the next).  The first ``n_codewords * n / Q``
    data positions are tracked coded symbols; any remainder is random filler
    excluded from frame-error accounting.
    """

    cfg: FrameConfig
    info_bits: np.ndarray  # (n_codewords, k)
    coded_bits: np.ndarray  # (n_codewords, n)
    symbols: np.ndarray  # (n_ofdm, n_used) complex
    n_codewords: int
    n_filler: int = field(default=0)


def noise_power_from_snr_db(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def data_times(cfg: FrameConfig) -> np.ndarray:
    """Time indices of the data OFDM symbols, in order."""
    pilots = set(cfg.pilot_positions)
    return np.array([t for t in range(cfg.n_ofdm) if t not in pilots], dtype=int)


def frame_capacity(cfg: FrameConfig, code: LdpcCode) -> tuple[int, int]:
    """(number of codewords fitting the grid, leftover filler symbols)."""
    capacity_bits = cfg.n_data * cfg.n_used * cfg.modulation_order
    n_cw = capacity_bits // code.n
    filler_symbols = (capacity_bits - n_cw * code.n) // cfg.modulation_order
    return n_cw, filler_symbols


def draw_channel(
    cfg: FrameConfig, taps: int, rng: np.random.Generator, noise_power: float = 0.0
) -> ChannelRealization:
    """Draw per-antenna independent tapped-delay-line channels."""
    if not 1 <= taps <= cfg.n_used:
        raise ValueError(f"taps must lie in [1, {cfg.n_used}], got {taps}")
    if noise_power < 0:
        raise ValueError("noise_power must be non-negative")
    g = (
        rng.standard_normal((taps, cfg.n_rx)) + 1j * rng.standard_normal((taps, cfg.n_rx))
    ) * math.sqrt(0.5 / taps)
    h = np.fft.fft(g, n=cfg.n_used, axis=0)
    return ChannelRealization(h=h, noise_power=float(noise_power), taps=taps)


def modulate_frame(
    cfg: FrameConfig, code: LdpcCode, info_bits, rng: np.random.Generator
) -> TxFrame:
    """Encode info bits and map them onto the frame's data positions."""
    n_cw, n_filler = frame_capacity(cfg, code)
    info = np.asarray(info_bits, dtype=np.uint8).reshape(-1)
    required = n_cw * code.k
    if info.size != required:
        raise ValueError(
            f"info bit capacity mismatch: grid fits {n_cw} codewords of {code.k} "
            f"info bits ({required} bits required), got {info.size}"
        )
    info = info.reshape(n_cw, code.k)
    coded = np.stack([encode(code, row) for row in info]) if n_cw else np.zeros((0, code.n), np.uint8)

    const = make_constellation(cfg.modulation_order)
    q = cfg.modulation_order
    if code.n % q:
        raise ValueError(
            f"codeword length {code.n} does not align with {q}-bit symbols"
        )
    bit_weights = 1 << np.arange(q - 1, -1, -1)
    tracked_idx = (coded.reshape(-1, q) @ bit_weights).astype(int)
    filler_idx = rng.integers(0, const.size, size=n_filler)
    data_syms = const.points[np.concatenate([tracked_idx, filler_idx])]

    grid = np.zeros((cfg.n_ofdm, cfg.n_used), complex)
    grid[list(cfg.pilot_positions), :] = cfg.pilot_amp
    grid[data_times(cfg), :] = data_syms.reshape(cfg.n_data, cfg.n_used)
    return TxFrame(cfg, info, coded, grid, n_cw, n_filler)


def transmit(
    tx: TxFrame, ch: ChannelRealization, rng: np.random.Generator
) -> np.ndarray:
    """Received grid y[t, f, a] = h[f, a] * s[t, f] + CN(0, noise_power)."""
    cfg = tx.cfg
    if ch.h.shape != (cfg.n_used, cfg.n_rx):
        raise ValueError("channel dimensions do not match the frame config")
    y = tx.symbols[:, :, None] * ch.h[None, :, :]
    if ch.noise_power > 0:
        scale = math.sqrt(ch.noise_power / 2.0)
        y = y + scale * (
            rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        )
    return y
