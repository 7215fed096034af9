"""Binary spreading sequences: m-sequences, Gold families and correlation tools.

Chips are mapped bit 0 -> +a and bit 1 -> -a, with a = 1/sqrt(N) so that every
code carries unit energy over one symbol.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Preferred pairs (tap exponents, x^n term included) known to give three-valued
# cross-correlation with the LFSR convention used below.
DEFAULT_PREFERRED_PAIRS: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {
    5: ((5, 2), (5, 4, 3, 2)),
    6: ((6, 1), (6, 5, 2, 1)),
    7: ((7, 3), (7, 3, 2, 1)),
    9: ((9, 4), (9, 6, 4, 3)),
    10: ((10, 3), (10, 8, 3, 2)),
    11: ((11, 2), (11, 8, 5, 2)),
}


class SequenceError(ValueError):
    """Raised for invalid LFSR parameters or non-preferred pairs."""


@dataclass(frozen=True)
class SpreadingCode:
    """Real antipodal chip vector with equal-magnitude chips."""

    chips: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=float)
        if chips.ndim != 1 or chips.size == 0:
            raise SequenceError("chips must be a non-empty 1-D vector")
        mags = np.abs(chips)
        if not np.allclose(mags, mags[0], rtol=0, atol=1e-12) or mags[0] == 0:
            raise SequenceError("all chips must share one non-zero magnitude")
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)

    def __len__(self) -> int:
        return self.chips.size

    @property
    def energy(self) -> float:
        return float(np.dot(self.chips, self.chips))

    def normalized(self) -> "SpreadingCode":
        return SpreadingCode(self.chips / np.sqrt(self.energy), self.label)


@dataclass(frozen=True)
class CodeFamily:
    codes: tuple[SpreadingCode, ...]
    degree: int
    kind: str  # "gold" or "msequence"

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def length(self) -> int:
        return len(self.codes[0])

    def matrix(self, k: int | None = None) -> np.ndarray:
        """Chip matrix of the first ``k`` codes (all codes by default), one row per code."""
        codes = self.codes if k is None else self.codes[:k]
        return np.vstack([c.chips for c in codes])

    def fingerprint(self) -> str:
        """sha256 over the chip bytes, used in run manifests."""
        return hashlib.sha256(self.matrix().tobytes()).hexdigest()


def _lfsr_bits(degree: int, taps: Sequence[int], seed_state: int, count: int) -> np.ndarray:
    # Fibonacci register s[0..n-1]; output s[n-1]; feedback = xor of s[t-1] for t in taps.
    state = [(seed_state >> i) & 1 for i in range(degree)]
    out = np.empty(count, dtype=np.int8)
    for i in range(count):
        out[i] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return out


def _check_taps(degree: int, taps: Sequence[int]) -> tuple[int, ...]:
    if not 3 <= degree <= 16:
        raise SequenceError(f"degree must lie in [3, 16], got {degree}")
    taps = tuple(sorted(set(int(t) for t in taps), reverse=True))
    if not taps or taps[0] != degree or taps[-1] < 1:
        raise SequenceError(f"taps {taps} must include the degree {degree} and lie in [1, degree]")
    return taps


def lfsr_period(degree: int, taps: Sequence[int], seed_state: int) -> int:
    """Number of clocks until the register returns to ``seed_state``."""
    taps = _check_taps(degree, taps)
    mask = (1 << degree) - 1
    if seed_state & mask == 0:
        raise SequenceError("seed state must be non-zero (all-zero register is a fixed point)")
    start = seed_state & mask
    state = start
    for period in range(1, 1 << degree):
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
        if state == start:
            return period
    return 1 << degree  # unreachable for a non-zero start


def m_sequence(degree: int, taps: Sequence[int], seed_state: int | None = None) -> np.ndarray:
    """Maximal-length sequence of length ``2**degree - 1`` as unnormalized +/-1 chips.

    Parameters
    ----------
    degree : int
        Register length, 3..16.
    taps : sequence of int
        Exponents of the feedback polynomial, e.g. ``(5, 2)`` for x^5 + x^2 + 1.
    seed_state : int, optional
        Non-zero initial register fill as a bit mask. Defaults to all ones.

    Raises
    ------
    SequenceError
        For a zero fill or for taps whose period is shorter than ``2**degree - 1``.
    """
    taps = _check_taps(degree, taps)
    length = (1 << degree) - 1
    if seed_state is None:
        seed_state = length
    period = lfsr_period(degree, taps, seed_state)
    if period != length:
        raise SequenceError(
            f"taps {taps} are not primitive: period {period} < {length}"
        )
    bits = _lfsr_bits(degree, taps, seed_state, length)
    return 1.0 - 2.0 * bits


def gold_correlation_values(degree: int) -> tuple[int, int, int]:
    """Three unnormalized periodic cross-correlation values of a Gold family."""
    if degree % 4 == 0:
        raise SequenceError(f"no preferred pairs exist for degree {degree} (multiple of 4)")
    t = 2 ** ((degree + 1) // 2) + 1 if degree % 2 else 2 ** ((degree + 2) // 2) + 1
    return (-t, -1, t - 2)


def periodic_cross_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unnormalized periodic cross-correlation sum_n a[n] b[n+s] for every shift s."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise SequenceError("sequences must have equal length")
    return np.array([np.dot(a, np.roll(b, -s)) for s in range(a.size)])


def gold_family(
    degree: int = 5,
    preferred_pair: tuple[Sequence[int], Sequence[int]] | None = None,
    seed_states: tuple[int, int] | None = None,
) -> CodeFamily:
    """Gold family of ``2**degree + 1`` unit-energy codes.

    Construction order is ``[u, v, u*v, u*T(v), ..., u*T^(N-1)(v)]`` where ``T`` is a
    cyclic shift by one chip and ``*`` is the chip-wise product.
    """
    if preferred_pair is None:
        try:
            preferred_pair = DEFAULT_PREFERRED_PAIRS[degree]
        except KeyError:
            raise SequenceError(f"no default preferred pair for degree {degree}") from None
    seeds = seed_states or (None, None)
    u = m_sequence(degree, preferred_pair[0], seeds[0])
    v = m_sequence(degree, preferred_pair[1], seeds[1])

    allowed = set(gold_correlation_values(degree))
    spectrum = set(np.rint(periodic_cross_correlation(u, v)).astype(int).tolist())
    if not spectrum <= allowed:
        raise SequenceError(
            f"taps {preferred_pair} are not a preferred pair: cross-correlation "
            f"values {sorted(spectrum)} outside {sorted(allowed)}"
        )

    n = u.size
    raw = [u, v] + [u * np.roll(v, -s) for s in range(n)]
    labels = ["u", "v"] + [f"u*T^{s}v" for s in range(n)]
    a = 1.0 / np.sqrt(n)
    codes = tuple(SpreadingCode(chips * a, lab) for chips, lab in zip(raw, labels))
    return CodeFamily(codes=codes, degree=degree, kind="gold")


def msequence_family(degree: int, taps: Sequence[int], seed_state: int | None = None) -> CodeFamily:
    """All cyclic shifts of one m-sequence, normalized."""
    seq = m_sequence(degree, taps, seed_state) / np.sqrt((1 << degree) - 1)
    codes = tuple(SpreadingCode(np.roll(seq, -s), f"T^{s}") for s in range(seq.size))
    return CodeFamily(codes=codes, degree=degree, kind="msequence")


def cross_correlation(a: SpreadingCode, b: SpreadingCode) -> float:
    """Zero-lag inner product of two codes."""
    if len(a) != len(b):
        raise SequenceError(f"length mismatch: {len(a)} vs {len(b)}")
    return float(np.dot(a.chips, b.chips))


def correlation_matrix(codes: Sequence[SpreadingCode] | np.ndarray) -> np.ndarray:
    """K x K matrix of zero-lag correlations."""
    c = codes if isinstance(codes, np.ndarray) else np.vstack([x.chips for x in codes])
    return c @ c.T
