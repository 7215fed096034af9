"""BPSK data, spreading and the composite chip-rate received signal."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import FadingTrace, NoiseSpec, awgn_frame
from .sequences import SpreadingCode


class TransmitterError(ValueError):
    pass


@dataclass(frozen=True)
class UserFrame:
    bits: np.ndarray = field(repr=False)  # antipodal symbols b(m)
    code: SpreadingCode
    trace: FadingTrace

    def __post_init__(self):
        if len(self.bits) != len(self.trace):
            raise TransmitterError("bits and fading trace must cover the same symbols")


@dataclass(frozen=True)
class ReceivedFrame:
    samples: np.ndarray = field(repr=False)
    m: int = 0

    def __len__(self) -> int:
        return self.samples.size


def modulate_bpsk(bits) -> np.ndarray:
    """Map bit 0 -> +1 and bit 1 -> -1."""
    b = np.asarray(bits)
    if b.size == 0:
        raise TransmitterError("need at least one bit")
    if not np.isin(b, (0, 1)).all():
        raise TransmitterError("bits must be 0 or 1")
    return 1.0 - 2.0 * b.astype(float)


def random_bits(shape, seed=None) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.integers(0, 2, size=shape, dtype=np.int8)


def compose_received(
    users: Sequence[UserFrame],
    noise: NoiseSpec | None,
    m: int,
    seed=None,
) -> ReceivedFrame:
    """r(m) = sum_k beta_k(m) b_k(m) c_k + v(m) for one symbol period."""
    if not users:
        raise TransmitterError("need at least one user")
    n = len(users[0].code)
    if any(len(u.code) != n for u in users):
        raise TransmitterError("all users must share the spreading factor")
    r = np.zeros(n, dtype=complex)
    for u in users:
        r += u.trace.gains[m] * u.bits[m] * u.code.chips
    if noise is not None and noise.n0 > 0:
        r += awgn_frame(noise, n, seed)
    return ReceivedFrame(r, m)


def compose_frames(
    codes: np.ndarray,
    gains: np.ndarray,
    symbols: np.ndarray,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Batch form of :func:`compose_received`.

    Parameters
    ----------
    codes : (K, N) real chip matrix
    gains : (M, K) complex fading gains
    symbols : (M, K) antipodal data
    noise : (M, N) complex, optional

    Returns
    -------
    (M, N) complex array, one received frame per row.
    """
    codes = np.asarray(codes, dtype=float)
    gains = np.asarray(gains)
    if gains.shape != symbols.shape or gains.shape[1] != codes.shape[0]:
        raise TransmitterError(
            f"shape mismatch: gains {gains.shape}, symbols {symbols.shape}, codes {codes.shape}"
        )
    r = (gains * symbols) @ codes
    if noise is not None:
        r = r + noise
    return r
