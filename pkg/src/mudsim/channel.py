"""Rayleigh flat-fading traces and AWGN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

DEFAULT_SINUSOIDS = 64
_BLOCK = 2048


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class FadingTrace:
    """Complex gains beta(m) = g(m) exp(-j phi(m)), one per symbol."""

    gains: np.ndarray = field(repr=False)
    doppler: float
    user_id: int = 0

    def __len__(self) -> int:
        return self.gains.size

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.gains)

    @property
    def phase(self) -> np.ndarray:
        """phi(m) such that gains = amplitude * exp(-1j * phase)."""
        return -np.angle(self.gains)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise spectral density; each complex component has variance n0 / 2."""

    n0: float

    def __post_init__(self):
        if not self.n0 >= 0:
            raise ChannelError(f"n0 must be >= 0, got {self.n0}")

    @property
    def component_std(self) -> float:
        return float(np.sqrt(self.n0 / 2.0))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def rayleigh_trace(
    M: int,
    fd_tb: float,
    seed=None,
    user_id: int = 0,
    sinusoids: int = DEFAULT_SINUSOIDS,
) -> FadingTrace:
    """Clarke sum-of-sinusoids Rayleigh trace sampled once per symbol.

    ``sinusoids`` arrival angles are equally spaced around the circle with a
    quarter-step offset, which keeps every Doppler frequency distinct and avoids
    exact +/- frequency pairs. Only the per-path phases are random.

    Parameters
    ----------
    M : int
        Number of symbols.
    fd_tb : float
        Normalized Doppler rate, 0 < fd_tb < 0.5.
    seed : int, SeedSequence or Generator
        Source of the per-path phases.
    """
    if M < 1:
        raise ChannelError(f"M must be >= 1, got {M}")
    if not 0.0 < fd_tb < 0.5:
        raise ChannelError(
            f"fd_tb must lie in (0, 0.5), got {fd_tb}; use constant_trace for a static channel"
        )
    if sinusoids < 32:
        raise ChannelError("at least 32 arrival angles are required")
    rng = _rng(seed)
    psi = rng.uniform(0.0, 2.0 * np.pi, sinusoids)
    theta = 2.0 * np.pi * (np.arange(sinusoids) + 0.25) / sinusoids
    w = 2.0 * np.pi * fd_tb * np.cos(theta)

    # Block evaluation: beta[m0 + i] = sum_n exp(j w_n i) * exp(j (w_n m0 + psi_n)).
    block = min(_BLOCK, M)
    base = np.exp(1j * np.outer(np.arange(block), w))
    gains = np.empty(M, dtype=complex)
    for m0 in range(0, M, block):
        n = min(block, M - m0)
        gains[m0 : m0 + n] = base[:n] @ np.exp(1j * (w * m0 + psi))
    gains /= np.sqrt(sinusoids)
    return FadingTrace(gains, float(fd_tb), user_id)


def constant_trace(M: int, gain: complex = 1.0, user_id: int = 0) -> FadingTrace:
    """Static channel: the same complex gain for every symbol."""
    if M < 1:
        raise ChannelError(f"M must be >= 1, got {M}")
    return FadingTrace(np.full(M, complex(gain)), 0.0, user_id)


def awgn_frame(noise: NoiseSpec | float, shape, seed=None) -> np.ndarray:
    """Complex white Gaussian samples with per-component variance n0 / 2."""
    if not isinstance(noise, NoiseSpec):
        noise = NoiseSpec(float(noise))
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    if any(s < 1 for s in shape):
        raise ChannelError(f"noise length must be >= 1, got {shape}")
    rng = _rng(seed)
    # draw even for n0 = 0 so the stream position does not depend on the noise level
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return noise.component_std * v


def ebn0_to_n0(ebn0_db: float, bits_per_symbol: int = 1, symbol_energy: float = 1.0) -> NoiseSpec:
    if symbol_energy <= 0:
        raise ChannelError("symbol_energy must be positive")
    return NoiseSpec(symbol_energy / (bits_per_symbol * 10.0 ** (ebn0_db / 10.0)))


def clarke_autocorrelation(fd_tb: float, lags) -> np.ndarray:
    """J0(2 pi fd_tb tau)."""
    return special.j0(2.0 * np.pi * fd_tb * np.asarray(lags, dtype=float))


def empirical_autocorrelation(gains: np.ndarray, max_lag: int) -> np.ndarray:
    """Time-average autocorrelation normalized to lag 0."""
    g = np.asarray(gains)
    M = g.size
    r = np.array([np.vdot(g[: M - t], g[t:]).real / (M - t) for t in range(max_lag + 1)])
    return r / r[0]


def fading_statistics(trace: FadingTrace, max_lag: int = 100) -> dict:
    """Summary used by the fading check: moments, Clarke tracking and KS distance."""
    b = trace.gains
    p = np.abs(b) ** 2
    ac = empirical_autocorrelation(b, max_lag)
    j0 = clarke_autocorrelation(trace.doppler, np.arange(max_lag + 1))
    ks = stats.kstest(np.abs(b), "rayleigh", args=(0.0, np.sqrt(0.5))).statistic
    return {
        "symbols": int(b.size),
        "fd_tb": trace.doppler,
        "mean_re": float(b.real.mean()),
        "mean_im": float(b.imag.mean()),
        "variance": float(np.mean(np.abs(b - b.mean()) ** 2)),
        "power_variance": float(p.var()),
        "max_acf_error": float(np.max(np.abs(ac - j0))),
        "ks_rayleigh": float(ks),
    }
