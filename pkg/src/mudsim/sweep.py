"""Monte-Carlo sweeps over Eb/N0 and receiver kinds.

Seeding is a counter-based split of the master seed: trial t draws from
``SeedSequence(seed, spawn_key=(t,))``, whose children feed the fading of each
user, the data bits and the noise. A trial's draws therefore do not depend on
how many trials run or on which worker runs them. The channel, bits and noise
shape of a trial are shared by every Eb/N0 point (common random numbers); only
the noise scale changes.

Work units are (Eb/N0, trial) pairs; each runs every configured receiver on
the same received frames. Results are merged in (Eb/N0, trial) order, so the
CSV bytes are independent of the worker count.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import awgn_frame, ebn0_to_n0, rayleigh_trace
from .config import SimConfig
from .engine import detect
from .metrics import (
    GenieTruth,
    MetricAccumulator,
    MetricRow,
    doppler_correlation,
    predicted_variance_ba_pic_stage0,
    predicted_variance_ba_pic_stage_l,
    sum_rate,
)
from .sequences import CodeFamily, gold_family
from .transmitter import compose_frames, modulate_bpsk, random_bits

log = logging.getLogger(__name__)

INVALID_DIVERGENCE_FRACTION = 0.10
DIAGNOSTICS_HEADER = [
    "receiver",
    "stage",
    "ebno_db",
    "valid",
    "diverged_trials",
    "sinr_mean_linear",
    "ergodic_capacity_per_user",
    "residual_variance",
    "predicted_variance",
]


@functools.lru_cache(maxsize=None)
def code_family(degree: int) -> CodeFamily:
    return gold_family(degree)


def trial_seed(master: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(trial,))


@dataclass(frozen=True)
class Trial:
    """One realisation of channel, data and unit-level noise."""

    gains: np.ndarray  # (M, K) complex
    symbols: np.ndarray  # (M, K) +/-1
    unit_noise: np.ndarray  # (M, N) complex, per-component variance 1/2

    @property
    def truth(self) -> GenieTruth:
        return GenieTruth.from_gains(self.gains, self.symbols)


def make_trial(cfg: SimConfig, trial: int) -> Trial:
    ss = trial_seed(cfg.seed, trial)
    M, K, N = cfg.symbols, cfg.users, cfg.spreading_factor
    gains = np.empty((M, K), dtype=complex)
    for k in range(K):
        child = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (0, k))
        gains[:, k] = rayleigh_trace(M, cfg.fd_tb, child, k, cfg.sinusoids).gains
    bits_seed = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (1,))
    noise_seed = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (2,))
    symbols = modulate_bpsk(random_bits((M, K), np.random.default_rng(bits_seed)))
    unit_noise = awgn_frame(1.0, (M, N), np.random.default_rng(noise_seed))
    return Trial(gains, symbols, unit_noise)


@dataclass
class UnitResult:
    """Metrics of every receiver stage for one (Eb/N0, trial) unit."""

    cells: dict = field(default_factory=dict)  # (receiver, stage) -> MetricAccumulator
    diverged: dict = field(default_factory=dict)  # receiver -> bool
    stage0_prediction: float = math.nan


def run_unit(cfg: SimConfig, ebno_db: float, trial: int) -> UnitResult:
    data = make_trial(cfg, trial)
    C = code_family(cfg.degree).matrix(cfg.users)
    n0 = ebn0_to_n0(ebno_db).n0
    r = compose_frames(C, data.gains, data.symbols, math.sqrt(n0) * data.unit_noise)
    truth = data.truth
    out = UnitResult()
    for rc in cfg.receiver_configs():
        batch = detect(rc, r, C, truth.phi)
        out.diverged[rc.kind] = batch.diverged
        for l in range(batch.stages):
            acc = MetricAccumulator(cfg.users)
            acc.add(batch.est[l], batch.quad[l], batch.bits[l], truth)
            out.cells[(rc.kind, l)] = acc
        if batch.cma_error is not None:
            R = doppler_correlation(cfg.fd_tb)
            out.stage0_prediction = float(
                np.mean(
                    [
                        predicted_variance_ba_pic_stage0(
                            cfg.users, cfg.spreading_factor, rc.mu, R, batch.cma_error[:, k]
                        )
                        for k in range(cfg.users)
                    ]
                )
            )
    return out


def _run_unit_args(args):
    return run_unit(*args)


@dataclass
class Cell:
    receiver: str
    stage: int
    ebno_db: float
    acc: MetricAccumulator
    diverged: int
    attempted: int
    predicted_variance: float = math.nan

    @property
    def valid(self) -> bool:
        return self.acc.trials > 0 and self.diverged <= INVALID_DIVERGENCE_FRACTION * self.attempted


@dataclass
class SweepResult:
    config: SimConfig
    cells: list[Cell]

    def rows(self) -> list[MetricRow]:
        cfg = self.config
        out = []
        for c in self.cells:
            if c.valid:
                g = c.acc.sinr_mean
                mse, ber = c.acc.mse, c.acc.ber
                sinr_db = 10.0 * math.log10(g) if g > 0 else -math.inf
                rate = sum_rate(g, cfg.users, cfg.spreading_factor) if math.isfinite(g) else math.inf
            else:
                mse = sinr_db = rate = ber = math.nan
            out.append(
                MetricRow(c.receiver, c.stage, c.ebno_db, mse, sinr_db, rate, ber, cfg.symbols, c.acc.trials, cfg.seed)
            )
        return out

    def row(self, receiver: str, stage: int, ebno_db: float) -> MetricRow:
        for r in self.rows():
            if r.receiver == receiver and r.stage == stage and r.ebno_db == ebno_db:
                return r
        raise KeyError((receiver, stage, ebno_db))

    def cell(self, receiver: str, stage: int, ebno_db: float) -> Cell:
        for c in self.cells:
            if c.receiver == receiver and c.stage == stage and c.ebno_db == ebno_db:
                return c
        raise KeyError((receiver, stage, ebno_db))


def _map_units(cfg: SimConfig, units: list[tuple[float, int]]):
    args = [(cfg, e, t) for e, t in units]
    if cfg.workers == 1 or len(units) == 1:
        return [run_unit(*a) for a in args]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_run_unit_args, args))


def run_sweep(config: SimConfig, out: str | Path | None = None) -> SweepResult:
    """Run every (receiver, stage, Eb/N0) cell; write CSV, diagnostics and manifest when ``out`` is set.

    Trials in which an adaptive receiver diverges are excluded from that
    receiver's cells; a cell with more than 10% diverged trials is reported as
    NaN and flagged invalid in the diagnostics file.
    """
    cfg = config
    units = [(e, t) for e in cfg.ebno_db for t in range(cfg.trials)]
    results = _map_units(cfg, units)

    rcs = cfg.receiver_configs()
    cells = []
    for rc in rcs:
        for e_idx, e in enumerate(cfg.ebno_db):
            block = results[e_idx * cfg.trials : (e_idx + 1) * cfg.trials]
            n_div = sum(u.diverged[rc.kind] for u in block)
            if n_div:
                log.warning("%s at %g dB: %d of %d trials diverged", rc.kind, e, n_div, cfg.trials)
            for l in range(rc.n_outputs):
                acc = MetricAccumulator(cfg.users)
                for u in block:
                    if not u.diverged[rc.kind]:
                        acc = acc.merge(u.cells[(rc.kind, l)])
                acc.diverged = n_div
                cells.append(Cell(rc.kind, l, float(e), acc, n_div, cfg.trials))
            if rc.kind == "ba_pic":
                _attach_predictions(cfg, cells[-rc.n_outputs :], block)
    result = SweepResult(cfg, cells)
    if out is not None:
        write_outputs(result, Path(out))
    return result


def _attach_predictions(cfg: SimConfig, stage_cells: list[Cell], block: list[UnitResult]):
    """Heuristic BA-PIC variance predictors next to the measured residual power."""
    preds = [u.stage0_prediction for u in block if not u.diverged["ba_pic"]]
    if preds:
        stage_cells[0].predicted_variance = float(np.mean(preds))
    C = code_family(cfg.degree).matrix(cfg.users)
    rho = C @ C.T
    for l in range(1, len(stage_cells)):
        prev = stage_cells[l - 1].acc
        if not prev.trials:
            continue
        eps = prev.mse_per_user()
        var = prev.residual_power()
        stage_cells[l].predicted_variance = float(
            np.mean([predicted_variance_ba_pic_stage_l(eps, rho, var, k) for k in range(cfg.users)])
        )


def dump_records(cfg: SimConfig, path: str | Path, ebno_db: float | None = None, trial: int = 0) -> None:
    """Per-symbol records of one trial for every configured receiver.

    Columns are receiver, stage, user, m, z, est, bit.
    """
    e = cfg.ebno_db[0] if ebno_db is None else ebno_db
    data = make_trial(cfg, trial)
    C = code_family(cfg.degree).matrix(cfg.users)
    r = compose_frames(C, data.gains, data.symbols, math.sqrt(ebn0_to_n0(e).n0) * data.unit_noise)
    phi = data.truth.phi
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["receiver", "stage", "user", "m", "z", "est", "bit"])
        for rc in cfg.receiver_configs():
            batch = detect(rc, r, C, phi)
            bits = batch.bits
            for l in range(batch.stages):
                for m in range(cfg.symbols):
                    for k in range(cfg.users):
                        w.writerow(
                            [rc.kind, l, k, m, repr(float(batch.z[l, m, k])), repr(float(batch.est[l, m, k])), int(bits[l, m, k])]
                        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def write_csv(rows: list[MetricRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricRow.header())
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in MetricRow.header()])


def write_diagnostics(result: SweepResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTICS_HEADER)
        for c in result.cells:
            w.writerow(
                [
                    c.receiver,
                    c.stage,
                    _fmt(c.ebno_db),
                    int(c.valid),
                    c.diverged,
                    _fmt(c.acc.sinr_mean if c.valid else math.nan),
                    _fmt(c.acc.ergodic_capacity() if c.valid else math.nan),
                    _fmt(c.acc.residual_power() if c.valid else math.nan),
                    _fmt(c.predicted_variance),
                ]
            )


def manifest(cfg: SimConfig) -> dict:
    fam = code_family(cfg.degree)
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "code_family": {"kind": fam.kind, "degree": fam.degree, "sha256": fam.fingerprint()},
        "seed_split": "SeedSequence(seed, spawn_key=(trial,)); children (trial,0,user) fading, (trial,1) bits, (trial,2) noise",
        "trial_seeds": [
            {"trial": t, "entropy": cfg.seed, "spawn_key": list(trial_seed(cfg.seed, t).spawn_key)}
            for t in range(cfg.trials)
        ],
    }


def sidecar_paths(out: Path) -> tuple[Path, Path]:
    return out.with_suffix(".diagnostics.csv"), out.with_suffix(".manifest.json")


def write_outputs(result: SweepResult, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows(), out)
    diag, man = sidecar_paths(out)
    write_diagnostics(result, diag)
    man.write_text(json.dumps(manifest(result.config), indent=2, default=list) + "\n")
