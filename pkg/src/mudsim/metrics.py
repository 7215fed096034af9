"""Estimation MSE, empirical SINR, capacity / sum-rate and BER, plus the BA-PIC variance predictors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import special

log = logging.getLogger(__name__)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class GenieTruth:
    """True amplitudes g (M, K), phases phi (M, K) and antipodal data b (M, K)."""

    g: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.g.shape == self.phi.shape == self.b.shape):
            raise MetricsError("g, phi and b must share one (M, K) shape")

    @classmethod
    def from_gains(cls, gains: np.ndarray, symbols: np.ndarray) -> "GenieTruth":
        return cls(np.abs(gains), -np.angle(gains), np.asarray(symbols, dtype=float))

    @property
    def signal(self) -> np.ndarray:
        """g * b, the quantity every receiver estimates."""
        return self.g * self.b


@dataclass
class MetricRow:
    receiver: str
    stage: int
    ebno_db: float
    mse: float
    sinr_mean_db: float
    sum_rate_bps_hz: float
    ber: float
    symbols: int
    trials: int
    seed: int

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _values(est) -> np.ndarray:
    if isinstance(est, (list, tuple)) and est and hasattr(est[0], "est"):
        raise MetricsError("pass estimate arrays; use records_to_array for record lists")
    return np.asarray(est)


def records_to_array(records, M: int, K: int, attr: str = "est", m0: int = 0) -> np.ndarray:
    """Scatter DetectionRecords into an (M, K) array."""
    out = np.full((M, K), np.nan)
    for r in records:
        out[r.m - m0, r.user] = getattr(r, attr)
    return out


def mse_channel_estimation(est, truth: GenieTruth) -> float:
    """Average over users and symbols of (|g^ b^| - g |b|)^2.

    With BPSK |b| = |b^| = 1, so the estimated channel is |est|.
    """
    est = np.real(_values(est))
    if est.size == 0:
        raise MetricsError("no detection records")
    return float(np.mean((np.abs(est) - truth.g * np.abs(truth.b)) ** 2))


def _gamma(S: np.ndarray, I: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(I > 0, S / np.where(I > 0, I, 1.0), np.inf)


def mean_finite(gamma: np.ndarray) -> float:
    finite = np.isfinite(gamma)
    if not finite.all():
        log.warning("%d user(s) with zero residual excluded from the SINR average", int((~finite).sum()))
    if not finite.any():
        return math.inf
    return float(np.mean(gamma[finite]))


def empirical_sinr(est, truth: GenieTruth) -> tuple[np.ndarray, float]:
    """Per-user SINR by genie decomposition and its user average.

    ``est`` is the receiver's (M, K) channel*data estimate. When complex, the
    imaginary part is the quadrature leakage of the coherent decision
    statistic and counts as residual; a real array measures the in-phase
    residual only. Users with zero residual report ``inf`` and are left out of
    the average.
    """
    est = _values(est)
    s = truth.signal
    S = np.mean(s**2, axis=0)
    I = np.mean(np.abs(est - s) ** 2, axis=0)
    gamma = _gamma(S, I)
    return gamma, mean_finite(gamma)


def ergodic_capacity(sinr_samples, bandwidth: float = 1.0) -> float:
    """Monte-Carlo evaluation of E{B log2(1 + Gamma)}."""
    g = np.asarray(sinr_samples, dtype=float)
    if g.size == 0:
        raise MetricsError("need at least one SINR sample")
    if np.any(g < 0):
        raise MetricsError("SINR samples must be non-negative")
    return float(bandwidth * np.mean(np.log2(1.0 + g)))


def sum_rate(sinr_mean: float, K: int, N: int) -> float:
    """(K / N) log2(1 + mean SINR) in bits/s/Hz.

    By Jensen's inequality this bounds what the receivers can achieve.
    """
    if sinr_mean < 0:
        raise MetricsError("mean SINR must be non-negative")
    return K / N * math.log2(1.0 + sinr_mean)


def ber(bits_hat, bits) -> float:
    bh = np.asarray(bits_hat)
    b = np.asarray(bits)
    if b.size == 0:
        raise MetricsError("no bits")
    return float(np.mean(bh != b))


def doppler_correlation(fd_tb: float, lag: float = 1.0) -> float:
    """R(dt) = J0(2 pi fd_tb dt), dt in symbols."""
    return float(special.j0(2.0 * np.pi * fd_tb * lag))


def predicted_variance_ba_pic_stage0(K: int, N: int, mu: float, R: float, errors, M: int | None = None) -> float:
    """Heuristic stage-0 BA-PIC interference variance.

    (K / (M R)) * sum_m (e(m) + mu)^2 / N, with the +/- mu term taken as +mu.
    """
    e = np.asarray(errors, dtype=float)
    M = e.size if M is None else M
    if M < 1 or N < 1 or not R > 0:
        raise MetricsError("need M >= 1, N >= 1 and R > 0")
    return float(K / (M * R) * np.sum((e + mu) ** 2) / N)


def predicted_variance_ba_pic_stage_l(
    mse_per_user, rho, prev_var: float, user: int, reference: int | None = None
) -> float:
    """Heuristic stage-l BA-PIC variance for ``user`` k.

    eps_k^2 + sum_{j != k} eps_j^2 (rho_kj^2 - kappa_ji rho_ki^2) * prev_var,
    where kappa_ji = 1 if i == j else -1 and i is the ``reference`` user
    (defaults to k itself).
    """
    eps = np.asarray(mse_per_user, dtype=float)
    rho = np.asarray(rho, dtype=float)
    K = eps.size
    if rho.shape != (K, K):
        raise MetricsError(f"rho must be {K}x{K}")
    k = user
    i = k if reference is None else reference
    total = eps[k]
    for j in range(K):
        if j == k:
            continue
        kappa = 1.0 if i == j else -1.0
        total += eps[j] * (rho[k, j] ** 2 - kappa * rho[k, i] ** 2) * prev_var
    return float(total)


class MetricAccumulator:
    """Running sums for one (receiver, stage, Eb/N0) cell; merging is associative."""

    _SUMS = ("sq_err", "est_count", "signal", "residual", "symbols", "bit_errors", "trials", "diverged")

    def __init__(self, K: int):
        self.K = K
        self.sq_err = np.zeros(K)
        self.est_count = 0
        self.signal = np.zeros(K)
        self.residual = np.zeros(K)
        self.symbols = 0
        self.bit_errors = 0
        self.trials = 0
        self.diverged = 0
        self.sinr_samples: list[np.ndarray] = []  # per-trial, per-user SINR

    def add(self, est: np.ndarray, quad: np.ndarray | None, bits_hat: np.ndarray, truth: GenieTruth):
        """Fold in one trial; ``est`` and ``quad`` are (M, K)."""
        s = truth.signal
        self.sq_err += np.sum((np.abs(est) - truth.g) ** 2, axis=0)
        self.est_count += est.size
        sig = np.sum(s**2, axis=0)
        res = (est - s) ** 2
        if quad is not None:
            res = res + quad**2
        res = np.sum(res, axis=0)
        self.signal += sig
        self.residual += res
        self.symbols += est.shape[0]
        self.bit_errors += int(np.sum(bits_hat != truth.b))
        self.trials += 1
        self.sinr_samples.append(_gamma(sig, res))

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        out = MetricAccumulator(self.K)
        for name in self._SUMS:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.sinr_samples = self.sinr_samples + other.sinr_samples
        return out

    @property
    def mse(self) -> float:
        return float(self.sq_err.sum() / self.est_count) if self.est_count else math.nan

    def mse_per_user(self) -> np.ndarray:
        return self.sq_err / self.symbols if self.symbols else np.full(self.K, np.nan)

    def residual_power(self) -> float:
        """Mean over users of the residual (interference plus noise) power."""
        return float(np.mean(self.residual) / self.symbols) if self.symbols else math.nan

    def sinr(self) -> np.ndarray:
        return _gamma(self.signal, self.residual)

    @property
    def sinr_mean(self) -> float:
        return mean_finite(self.sinr()) if self.symbols else math.nan

    def ergodic_capacity(self) -> float:
        if not self.sinr_samples:
            return math.nan
        g = np.concatenate(self.sinr_samples)
        g = g[np.isfinite(g)]
        return ergodic_capacity(g) if g.size else math.nan

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.symbols * self.K) if self.symbols else math.nan
