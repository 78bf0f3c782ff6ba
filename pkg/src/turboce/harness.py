"""Monte-Carlo sweep engine and the genetic calibration of the constant C.

Reproducibility contract: every random draw of a trial derives from
SeedSequence([master_seed, snr_index, trial_index, stream]), so trials are
order-independent, all receiver configs at a given trial consume identical
channel / noise / bit realizations (paired comparison), and results do not
depend on the worker count.
"""
from __future__ import annotations

import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .channel import (
    FrameConfig,
    draw_channel,
    frame_capacity,
    modulate_frame,
    noise_power_from_snr_db,
    transmit,
)
from .constellation import make_constellation
from .estimation import EstimatorKind
from .ldpc import LdpcCode, default_code_path, load_code
from .turbo import (
    ReceiverConfig,
    SIGMA_FLOOR,
    SigmaMode,
    data_aided_estimate,
    data_belief_grids,
    dft_denoise,
    pilot_channel_estimate,
    run_receiver,
)

__all__ = [
    "BeliefSource",
    "CorruptionSpec",
    "StopRule",
    "SweepSpec",
    "SweepPoint",
    "SweepResult",
    "MseExperimentSpec",
    "GaSpec",
    "GenerationStat",
    "CalibrationResult",
    "wilson_interval",
    "run_sweep",
    "data_aided_mse_trials",
    "calibrate_c",
]

_STREAM_CHANNEL, _STREAM_TX, _STREAM_NOISE, _STREAM_CORRUPTION = range(4)
_GA_STREAM = 0x6A5

_BATCH = 64  # early-stop rule is evaluated at fixed batch boundaries only,
# so the set of trials run never depends on the worker count

WILSON_Z = 1.959963984540054  # two-sided 95%


class BeliefSource(str, Enum):
    DECODER = "decoder"
    ORACLE = "oracle"
    CORRUPTED = "corrupted"


@dataclass(frozen=True)
class CorruptionSpec:
    """Synthetic LLR damage: flip a fraction of bit signs at moderate magnitude."""

    flip_fraction: float = 0.1
    llr_min: float = 1.0
    llr_max: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ValueError("flip_fraction must lie in [0, 1]")
        if not 0.0 < self.llr_min <= self.llr_max:
            raise ValueError("llr magnitudes must satisfy 0 < llr_min <= llr_max")


@dataclass(frozen=True)
class StopRule:
    min_frame_errors: int
    max_trials: int


@dataclass(frozen=True)
class SweepSpec:
    snr_points_db: tuple
    trials_per_point: int
    estimators: tuple
    master_seed: int
    frame: FrameConfig = field(default_factory=FrameConfig)
    taps: int = 4
    stop_rule: StopRule | None = None
    belief_source: BeliefSource = BeliefSource.DECODER
    corruption: CorruptionSpec | None = None

    def __post_init__(self):
        snrs = tuple(float(s) for s in self.snr_points_db)
        if len(set(snrs)) != len(snrs):
            raise ValueError("snr points must be distinct")
        if tuple(sorted(snrs)) != snrs:
            raise ValueError("snr points must be sorted ascending")
        object.__setattr__(self, "snr_points_db", snrs)
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be at least 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        ests = tuple(self.estimators)
        if not ests:
            raise ValueError("at least one receiver config is required")
        labels = [rc.label for rc in ests]
        if len(set(labels)) != len(labels):
            raise ValueError("receiver config labels must be unique")
        object.__setattr__(self, "estimators", ests)
        if self.belief_source == BeliefSource.CORRUPTED and self.corruption is None:
            object.__setattr__(self, "corruption", CorruptionSpec())


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    label: str
    trials_run: int
    frame_errors: int
    fer: float
    fer_lo: float
    fer_hi: float
    fer_by_iteration: tuple
    mse_by_iteration: tuple
    grid_checksum: int
    wall_time: float = field(compare=False)


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    points: tuple


def wilson_interval(errors: int, trials: int, z: float = WILSON_Z):
    """Two-sided Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _stream_rng(master_seed: int, snr_idx: int, trial_idx: int, stream: int):
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, snr_idx, trial_idx, stream])
    )


def build_trial(
    frame: FrameConfig,
    taps: int,
    snr_db: float,
    master_seed: int,
    snr_idx: int,
    trial_idx: int,
    code: LdpcCode,
    belief_source: BeliefSource = BeliefSource.DECODER,
    corruption: CorruptionSpec | None = None,
):
    """One deterministic trial: frame, channel, received grid and, for the
    oracle / corrupted belief sources, the per-bit LLR override."""
    noise_power = noise_power_from_snr_db(snr_db)
    ch = draw_channel(
        frame, taps, _stream_rng(master_seed, snr_idx, trial_idx, _STREAM_CHANNEL),
        noise_power,
    )
    rng_tx = _stream_rng(master_seed, snr_idx, trial_idx, _STREAM_TX)
    n_cw, _ = frame_capacity(frame, code)
    info = rng_tx.integers(0, 2, size=n_cw * code.k)
    tx = modulate_frame(frame, code, info, rng_tx)
    grid = transmit(tx, ch, _stream_rng(master_seed, snr_idx, trial_idx, _STREAM_NOISE))

    override = None
    bits = tx.coded_bits.reshape(-1)
    if belief_source == BeliefSource.ORACLE:
        override = np.where(bits == 0, np.inf, -np.inf)
    elif belief_source == BeliefSource.CORRUPTED:
        c = corruption or CorruptionSpec()
        rng_c = _stream_rng(master_seed, snr_idx, trial_idx, _STREAM_CORRUPTION)
        mag = rng_c.uniform(c.llr_min, c.llr_max, size=bits.size)
        sign = np.where(bits == 0, 1.0, -1.0)
        flip = rng_c.random(bits.size) < c.flip_fraction
        sign[flip] *= -1.0
        override = sign * mag
    return tx, ch, grid, override


def _run_trial(spec: SweepSpec, code: LdpcCode, snr_idx: int, trial_idx: int):
    tx, ch, grid, override = build_trial(
        spec.frame, spec.taps, spec.snr_points_db[snr_idx], spec.master_seed,
        snr_idx, trial_idx, code, spec.belief_source, spec.corruption,
    )
    checksum = zlib.crc32(np.ascontiguousarray(grid).tobytes())
    rows = []
    for rc in spec.estimators:
        trace = run_receiver(grid, tx, ch, code, rc, data_llrs_override=override)
        rows.append((trace.frame_errors.astype(bool), trace.mse))
    return checksum, rows


_WORKER_STATE: dict = {}


def _worker_init(spec, code):
    _WORKER_STATE["spec"] = spec
    _WORKER_STATE["code"] = code


def _worker_trial(args):
    snr_idx, trial_idx = args
    return _run_trial(_WORKER_STATE["spec"], _WORKER_STATE["code"], snr_idx, trial_idx)


def run_sweep(spec: SweepSpec, code: LdpcCode | None = None, workers: int = 1) -> SweepResult:
    """Run the Monte-Carlo sweep; results are identical for any worker count."""
    if code is None:
        code = load_code(default_code_path())
    n_cfg = len(spec.estimators)
    points = []

    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(spec, code)
        )
    try:
        for snr_idx, snr_db in enumerate(spec.snr_points_db):
            t0 = time.perf_counter()
            err_final = [0] * n_cfg
            fer_counts = [None] * n_cfg
            mse_sums = [None] * n_cfg
            checksums = [0] * n_cfg
            n_done = 0
            max_n = spec.stop_rule.max_trials if spec.stop_rule else spec.trials_per_point
            while n_done < max_n:
                nb = min(_BATCH, max_n - n_done)
                tasks = [(snr_idx, t) for t in range(n_done, n_done + nb)]
                if pool is not None:
                    results = list(pool.map(_worker_trial, tasks))
                else:
                    results = [_run_trial(spec, code, *t) for t in tasks]
                for checksum, rows in results:
                    for i, (fe, mse) in enumerate(rows):
                        if fer_counts[i] is None:
                            fer_counts[i] = np.zeros(fe.size, dtype=int)
                            mse_sums[i] = np.zeros(mse.size)
                        fer_counts[i] += fe
                        mse_sums[i] += mse
                        err_final[i] += int(fe[-1])
                        checksums[i] = (checksums[i] + checksum) & 0xFFFFFFFFFFFFFFFF
                n_done += nb
                if spec.stop_rule and all(
                    e >= spec.stop_rule.min_frame_errors for e in err_final
                ):
                    break
            wall = time.perf_counter() - t0
            for i, rc in enumerate(spec.estimators):
                lo, hi = wilson_interval(err_final[i], n_done)
                points.append(
                    SweepPoint(
                        snr_db=snr_db,
                        label=rc.label,
                        trials_run=n_done,
                        frame_errors=err_final[i],
                        fer=err_final[i] / n_done,
                        fer_lo=lo,
                        fer_hi=hi,
                        fer_by_iteration=tuple(fer_counts[i] / n_done),
                        mse_by_iteration=tuple(mse_sums[i] / n_done),
                        grid_checksum=checksums[i],
                        wall_time=wall,
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return SweepResult(spec, tuple(points))


# ---------------------------------------------------------------------------
# decoder-free MSE experiments (oracle / corrupted beliefs)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MseExperimentSpec:
    """Channel-estimation MSE measurement without the decoding loop."""

    frame: FrameConfig
    taps: int
    snr_db: float
    n_trials: int
    master_seed: int
    estimators: tuple
    belief_source: BeliefSource = BeliefSource.ORACLE
    corruption: CorruptionSpec | None = None

    def __post_init__(self):
        if self.belief_source == BeliefSource.DECODER:
            raise ValueError("MSE experiments need an oracle or corrupted belief source")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")


def _trial_mse(h_hat, h_true):
    return float(np.mean(np.abs(h_hat - h_true) ** 2) / np.mean(np.abs(h_true) ** 2))


def data_aided_mse_trials(spec: MseExperimentSpec, code: LdpcCode | None = None):
    """Per-trial normalized channel MSE for each estimator, plus the
    pilot-only baseline.  Returns ``(pilot_mse, {label: mse_array})``."""
    if code is None:
        code = load_code(default_code_path())
    const = make_constellation(spec.frame.modulation_order)
    q = spec.frame.modulation_order
    n_cw, _ = frame_capacity(spec.frame, code)
    n_tracked = n_cw * (code.n // q)

    pilot_mse = np.empty(spec.n_trials)
    results = {rc.label: np.empty(spec.n_trials) for rc in spec.estimators}
    for trial in range(spec.n_trials):
        tx, ch, grid, override = build_trial(
            spec.frame, spec.taps, spec.snr_db, spec.master_seed, 0, trial, code,
            spec.belief_source, spec.corruption,
        )
        h_pilot = pilot_channel_estimate(grid, spec.frame)
        pilot_mse[trial] = _trial_mse(h_pilot, ch.h)
        pilot_power = float(np.mean(np.abs(h_pilot) ** 2))

        mean_grid, second_grid, hard_grid = data_belief_grids(
            const, spec.frame, override, n_tracked
        )
        var_grid = second_grid - (mean_grid.real**2 + mean_grid.imag**2)
        avg_variance = float(np.mean(var_grid))
        for rc in spec.estimators:
            if rc.sigma_mode == SigmaMode.C_TIMES_AVG_VARIANCE:
                sigma_sq = rc.c_param * avg_variance
            else:
                sigma_sq = ch.noise_power / pilot_power if pilot_power > 0 else 1.0
            sigma_sq = max(sigma_sq, SIGMA_FLOOR)
            h_hat = data_aided_estimate(
                grid, spec.frame, rc, mean_grid, second_grid, hard_grid,
                sigma_sq, avg_variance,
            )
            if rc.dft_denoise:
                for a in range(h_hat.shape[1]):
                    h_hat[:, a] = dft_denoise(h_hat[:, a], rc.tap_cutoff)
            results[rc.label][trial] = _trial_mse(h_hat, ch.h)
    return pilot_mse, results


# ---------------------------------------------------------------------------
# genetic calibration of the constant C
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaSpec:
    evaluation: MseExperimentSpec
    population: int = 16
    generations: int = 20
    c_range: tuple = (0.0, 100.0)
    mutation_sigma: float = 0.0  # 0 -> 10% of the range span
    tournament_size: int = 3
    fitness: str = "mean_mse"  # or "fer"
    fer_receiver: ReceiverConfig | None = None
    fer_trials: int = 200

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        low, high = self.c_range
        if low < 0 or high < low:
            raise ValueError("c_range must satisfy 0 <= low <= high")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be at least 2")
        if self.fitness not in ("mean_mse", "fer"):
            raise ValueError("fitness must be 'mean_mse' or 'fer'")


@dataclass(frozen=True)
class GenerationStat:
    generation: int
    best_c: float
    best_fitness: float
    mean_fitness: float


@dataclass(frozen=True)
class CalibrationResult:
    c_best: float
    history: tuple


class _PreparedSoftParamFitness:
    """Mean soft-param MSE as a function of C over a fixed trial set.

    All trial tensors are precomputed once; each candidate evaluation is a
    couple of vectorized array operations.
    """

    def __init__(self, spec: MseExperimentSpec, code: LdpcCode):
        frame = spec.frame
        const = make_constellation(frame.modulation_order)
        q = frame.modulation_order
        n_cw, _ = frame_capacity(frame, code)
        n_tracked = n_cw * (code.n // q)
        from .channel import data_times  # local import to keep module top tidy

        dt = data_times(frame)
        pilot_mask = np.zeros(frame.n_ofdm, bool)
        pilot_mask[list(frame.pilot_positions)] = True

        means_l, base_l, y_l, h_l, avg_l = [], [], [], [], []
        for trial in range(spec.n_trials):
            tx, ch, grid, override = build_trial(
                frame, spec.taps, spec.snr_db, spec.master_seed, 0, trial, code,
                spec.belief_source, spec.corruption,
            )
            mean_grid, second_grid, _hard = data_belief_grids(
                const, frame, override, n_tracked
            )
            var_grid = second_grid - (mean_grid.real**2 + mean_grid.imag**2)
            avg_l.append(float(np.mean(var_grid)))

            means_tf = np.zeros((frame.n_ofdm, frame.n_used), complex)
            seconds_tf = np.zeros((frame.n_ofdm, frame.n_used))
            means_tf[pilot_mask, :] = frame.pilot_amp
            seconds_tf[pilot_mask, :] = frame.pilot_amp**2
            means_tf[dt, :] = mean_grid
            seconds_tf[dt, :] = second_grid
            pw = means_tf.real**2 + means_tf.imag**2
            base = seconds_tf + (pw.sum(axis=0, keepdims=True) - pw)  # (n_ofdm, n_used)
            means_l.append(means_tf.T)  # (n_used, n_ofdm)
            base_l.append(base.T)
            y_l.append(np.transpose(grid, (1, 0, 2)))  # (n_used, n_ofdm, n_rx)
            h_l.append(ch.h)
        self.means = np.stack(means_l)  # (trials, n_used, n_ofdm)
        self.base = np.stack(base_l)
        self.y = np.stack(y_l)  # (trials, n_used, n_ofdm, n_rx)
        self.h = np.stack(h_l)  # (trials, n_used, n_rx)
        self.avg_var = np.array(avg_l)
        self.h_power = np.mean(np.abs(self.h) ** 2, axis=(1, 2))

    def __call__(self, c_value: float) -> float:
        den = self.base + c_value * self.avg_var[:, None, None]
        w = self.means.conj() / den
        h_hat = np.einsum("ufn,ufna->ufa", w, self.y)
        err = np.mean(np.abs(h_hat - self.h) ** 2, axis=(1, 2)) / self.h_power
        return float(np.mean(err))


def _fer_fitness(spec: GaSpec, code: LdpcCode):
    ev = spec.evaluation
    template = spec.fer_receiver or ReceiverConfig()

    def fitness(c_value: float) -> float:
        rc = replace(
            template, estimator=EstimatorKind.SOFT_PARAM, c_param=float(c_value),
            label="candidate",
        )
        sweep = SweepSpec(
            snr_points_db=(ev.snr_db,),
            trials_per_point=spec.fer_trials,
            estimators=(rc,),
            master_seed=ev.master_seed,
            frame=ev.frame,
            taps=ev.taps,
            belief_source=ev.belief_source,
            corruption=ev.corruption,
        )
        return run_sweep(sweep, code).points[0].fer

    return fitness


def calibrate_c(spec: GaSpec, fitness_fn=None, code: LdpcCode | None = None) -> CalibrationResult:
    """Tournament GA over the scalar C: blend crossover, Gaussian mutation,
    elitism of one.  Returns the best C and a per-generation history whose
    best fitness is non-increasing."""
    low, high = (float(spec.c_range[0]), float(spec.c_range[1]))
    if high == low:
        return CalibrationResult(low, ())
    if fitness_fn is None:
        if code is None:
            code = load_code(default_code_path())
        if spec.fitness == "mean_mse":
            fitness_fn = _PreparedSoftParamFitness(spec.evaluation, code)
        else:
            fitness_fn = _fer_fitness(spec, code)

    sigma = spec.mutation_sigma if spec.mutation_sigma > 0 else 0.1 * (high - low)
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.evaluation.master_seed, _GA_STREAM])
    )
    pop = rng.uniform(low, high, size=spec.population)
    fit = np.array([fitness_fn(c) for c in pop])

    def tournament():
        idx = rng.integers(0, spec.population, size=spec.tournament_size)
        return pop[idx[np.argmin(fit[idx])]]

    history = []
    for gen in range(spec.generations):
        elite = float(pop[int(np.argmin(fit))])
        children = [elite]
        while len(children) < spec.population:
            p1, p2 = tournament(), tournament()
            lo, hi = min(p1, p2), max(p1, p2)
            span = hi - lo
            child = rng.uniform(lo - 0.5 * span, hi + 0.5 * span)
            child += rng.normal(0.0, sigma)
            children.append(float(np.clip(child, low, high)))
        pop = np.array(children)
        fit = np.array([fitness_fn(c) for c in pop])
        best = int(np.argmin(fit))
        history.append(
            GenerationStat(gen, float(pop[best]), float(fit[best]), float(np.mean(fit)))
        )
    return CalibrationResult(history[-1].best_c, tuple(history))
