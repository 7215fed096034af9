"""Per-symbol multiuser detectors: MF, conventional PIC/SIC and the blind adaptive BA-PIC/BA-SIC.

All receivers assume a genie phase reference: user k's frame is derotated by
exp(+j phi_k) and decisions use the real part. Each detector also keeps the
quadrature part of its (scaled) despreader output, which the SINR measurement
needs.

These functions process one received frame at a time and are written for
clarity; :mod:`mudsim.engine` runs the same algorithms over whole trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .sequences import SpreadingCode
from .transmitter import ReceivedFrame

KINDS = ("mf", "sic", "pic", "ba_sic", "ba_pic")
ADAPTIVE_KINDS = ("ba_sic", "ba_pic")
STAGED_KINDS = ("pic", "ba_pic")
DIVERGENCE_FACTOR = 1e3


class ReceiverError(ValueError):
    pass


@dataclass(frozen=True)
class ReceiverConfig:
    kind: str
    stages: int = 1
    mu: float = 0.0  # effective CMA step on unit-energy codes
    per_stage_weights: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ReceiverError(f"unknown receiver {self.kind!r}; expected one of {KINDS}")
        if self.kind in STAGED_KINDS and self.stages < 1:
            raise ReceiverError(f"{self.kind} needs stages >= 1")
        if self.kind in ADAPTIVE_KINDS and not self.mu > 0:
            raise ReceiverError(f"{self.kind} needs mu > 0")

    @property
    def n_outputs(self) -> int:
        """Number of stage outputs produced (stages 0..L for PIC kinds)."""
        return self.stages + 1 if self.kind in STAGED_KINDS else 1


@dataclass(frozen=True)
class DetectionRecord:
    user: int
    m: int
    stage: int
    z: float  # real decision variable
    est: float  # joint channel*data estimate
    quad: float = 0.0  # quadrature part of the scaled despreader output
    alpha: float = 1.0

    @property
    def bit(self) -> int:
        return decide(self.z)


@dataclass(frozen=True)
class DespreaderWeights:
    w: np.ndarray = field(repr=False)
    mu: float
    ref_norm: float = 1.0
    diverged: bool = False


def decide(z) -> np.ndarray | int:
    """Hard BPSK decision with z == 0 mapped to +1."""
    if np.ndim(z) == 0:
        return 1 if z >= 0 else -1
    return np.where(np.asarray(z) >= 0, 1, -1).astype(np.int8)


def _sgn(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


def _samples(frame) -> np.ndarray:
    return frame.samples if isinstance(frame, ReceivedFrame) else np.asarray(frame)


def _chips(code) -> np.ndarray:
    return code.chips if isinstance(code, SpreadingCode) else np.asarray(code, dtype=float)


def derotate(frame, phi: float) -> np.ndarray:
    """Real part of the frame rotated by exp(+j phi)."""
    return (np.exp(1j * phi) * _samples(frame)).real


def _despread(samples: np.ndarray, phi: float, w: np.ndarray) -> complex:
    return complex(np.dot(np.exp(1j * phi) * samples, w))


def matched_filter(frame, code, phi: float, user: int = 0, m: int = 0) -> DetectionRecord:
    """Correlate the derotated frame with the user's code; estimate = decision variable."""
    c = _chips(code)
    s = _samples(frame)
    if s.size != c.size:
        raise ReceiverError(f"frame length {s.size} != code length {c.size}")
    zc = _despread(s, phi, c)
    return DetectionRecord(user, m, 0, zc.real, zc.real, zc.imag)


def conventional_pic(frame, codes, phases, stages: int, m: int = 0, initial=None):
    """Multistage parallel interference cancellation.

    Stage 0 is the matched-filter bank. Stage l cancels every other user's
    stage-(l-1) estimate, re-rotated to that user's phase, from the received
    frame before despreading.

    Parameters
    ----------
    initial : array of K reals, optional
        Replaces the stage-0 estimates used for the first cancellation (genie feed).

    Returns
    -------
    list of ``stages + 1`` lists of K :class:`DetectionRecord`.
    """
    if stages < 1:
        raise ReceiverError("stages must be >= 1")
    s = _samples(frame)
    C = np.vstack([_chips(c) for c in codes])
    phases = np.asarray(phases, dtype=float)
    K = C.shape[0]
    out = [[matched_filter(s, C[k], phases[k], k, m) for k in range(K)]]
    est = np.array([r.est for r in out[0]]) if initial is None else np.asarray(initial, float)
    for l in range(1, stages + 1):
        recon = (est * np.exp(-1j * phases))[:, None] * C
        total = recon.sum(axis=0)
        recs = []
        for k in range(K):
            zc = _despread(s - (total - recon[k]), phases[k], C[k])
            recs.append(DetectionRecord(k, m, l, zc.real, zc.real, zc.imag))
        out.append(recs)
        est = np.array([r.est for r in recs])
    return out


def conventional_sic(frame, codes, phases, m: int = 0, genie=None, return_residual: bool = False):
    """Successive cancellation in order of decreasing |despreader output|.

    At every stage each not-yet-detected user is despread from the current
    residual; the largest magnitude wins (ties go to the lowest index), and its
    estimate, re-rotated to its phase and respread, is subtracted.

    ``genie`` (K reals) replaces the subtracted amplitude with the true g*b.
    """
    s = _samples(frame).astype(complex).copy()
    C = np.vstack([_chips(c) for c in codes])
    phases = np.asarray(phases, dtype=float)
    remaining = list(range(C.shape[0]))
    recs = []
    while remaining:
        zs = [_despread(s, phases[u], C[u]) for u in remaining]
        i = int(np.argmax([abs(z.real) for z in zs]))
        u, zc = remaining.pop(i), zs[i]
        recs.append(DetectionRecord(u, m, 0, zc.real, zc.real, zc.imag))
        amp = zc.real if genie is None else genie[u]
        s -= amp * np.exp(-1j * phases[u]) * C[u]
    return (recs, s) if return_residual else recs


def init_weights(codes, mu: float, stages: int | None = None):
    """Despreader weights initialised to the spreading codes.

    Returns a list of K weights, or ``stages + 1`` such lists when ``stages`` is given.
    """
    C = [_chips(c) for c in codes]

    def bank():
        return [DespreaderWeights(c.copy(), mu, float(np.linalg.norm(c))) for c in C]

    return bank() if stages is None else [bank() for _ in range(stages + 1)]


def cma_update(weights: DespreaderWeights, r_derot: np.ndarray, z: float) -> DespreaderWeights:
    """One constant-modulus step, w <- w - mu (|z| - 1) sign(z) r.

    The run is flagged as diverged once ||w|| exceeds 1e3 times the code norm;
    diverged weights are not updated further.
    """
    if weights.diverged:
        return weights
    e = abs(z) - 1.0
    w = weights.w - weights.mu * e * _sgn(z) * np.asarray(r_derot, dtype=float)
    diverged = not np.all(np.isfinite(w)) or np.linalg.norm(w) > DIVERGENCE_FACTOR * weights.ref_norm
    return replace(weights, w=w, diverged=bool(diverged))


def scaling_factor(w, code) -> float:
    """Mean chip amplitude of the code over mean amplitude of the weights."""
    wv = w.w if isinstance(w, DespreaderWeights) else np.asarray(w, dtype=float)
    wbar = np.mean(np.abs(wv))
    if wbar == 0:
        raise ReceiverError("all-zero despreader weights: adaptation collapsed")
    return float(np.mean(np.abs(_chips(code))) / wbar)


def ba_sic(frame, codes, phases, weights: Sequence[DespreaderWeights], m: int = 0):
    """Blind adaptive SIC for one symbol.

    Every remaining user is despread from the residual with its adaptive weights;
    the strongest is detected, its weights take one CMA step on that residual,
    and alpha * z respread with its code is cancelled.

    Returns ``(records in detection order, updated weights)``.
    """
    s = _samples(frame).astype(complex).copy()
    C = np.vstack([_chips(c) for c in codes])
    phases = np.asarray(phases, dtype=float)
    new = list(weights)
    remaining = list(range(C.shape[0]))
    recs = []
    while remaining:
        zs = [_despread(s, phases[u], weights[u].w) for u in remaining]
        i = int(np.argmax([abs(z.real) for z in zs]))
        u, zc = remaining.pop(i), zs[i]
        new[u] = cma_update(weights[u], derotate(s, phases[u]), zc.real)
        a = scaling_factor(new[u], C[u])
        recs.append(DetectionRecord(u, m, 0, zc.real, a * zc.real, a * zc.imag, a))
        s -= a * zc.real * np.exp(-1j * phases[u]) * C[u]
    return recs, new


def ba_pic(frame, codes, phases, weights, stages: int, m: int = 0, per_stage: bool = True):
    """Blind adaptive PIC for one symbol.

    Stage l cancels alpha^(l-1)_j z^(l-1)_j c_j for every j != k and despreads
    the result with user k's adaptive weights. With ``per_stage`` each stage owns
    a weight bank adapted on its own input; otherwise the stage-0 bank is shared,
    adapted at stage 0 only, and later stages despread with the weights held at
    the start of the symbol while alpha follows the updated weights.

    Parameters
    ----------
    weights : list of ``stages + 1`` lists of K :class:`DespreaderWeights`

    Returns
    -------
    (list of ``stages + 1`` record lists, updated weights)
    """
    if stages < 1:
        raise ReceiverError("stages must be >= 1")
    s = _samples(frame)
    C = np.vstack([_chips(c) for c in codes])
    phases = np.asarray(phases, dtype=float)
    K = C.shape[0]
    banks = [list(b) for b in weights]
    out = []
    est = None
    held = [w.w for w in banks[0]]
    for l in range(stages + 1):
        bank = banks[l] if per_stage else banks[0]
        adapt = per_stage or l == 0
        if l == 0:
            inputs = [s] * K
        else:
            recon = (est * np.exp(-1j * phases))[:, None] * C
            total = recon.sum(axis=0)
            inputs = [s - (total - recon[k]) for k in range(K)]
        recs = []
        for k in range(K):
            # a shared bank despreads every stage of this symbol with the
            # weights it held before the stage-0 update
            w = bank[k].w if per_stage or l == 0 else held[k]
            zc = _despread(inputs[k], phases[k], w)
            if adapt:
                bank[k] = cma_update(bank[k], derotate(inputs[k], phases[k]), zc.real)
            a = scaling_factor(bank[k], C[k])
            recs.append(DetectionRecord(k, m, l, zc.real, a * zc.real, a * zc.imag, a))
        out.append(recs)
        est = np.array([r.est for r in recs])
    return out, banks
