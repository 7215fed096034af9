"""Whole-trial detection: the receivers of :mod:`mudsim.receivers` over an (M, N) frame array.

MF, PIC and SIC work in the correlation domain (despread once, then cancel via
the code correlation matrix), which is algebraically identical to cancelling
chips. The adaptive receivers run compiled per-symbol loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .receivers import ReceiverConfig, decide


@dataclass
class DetectionBatch:
    """Outputs of one receiver over one trial; arrays are (stage, M, K)."""

    kind: str
    z: np.ndarray
    est: np.ndarray
    quad: np.ndarray
    alpha: np.ndarray | None = None
    order: np.ndarray | None = None  # (M, K) detection order, SIC kinds
    cma_error: np.ndarray | None = None  # (M, K) stage-0 CMA error, BA-PIC
    diverged: bool = False

    @property
    def stages(self) -> int:
        return self.z.shape[0]

    @property
    def bits(self) -> np.ndarray:
        return decide(self.z)

    def complex_estimate(self) -> np.ndarray:
        return self.est + 1j * self.quad


def _despread_all(r: np.ndarray, codes: np.ndarray) -> np.ndarray:
    return r @ codes.T


def mf_batch(r, codes, rot) -> DetectionBatch:
    zc = _despread_all(r, codes) * rot
    z = zc.real[None]
    return DetectionBatch("mf", z, z, zc.imag[None])


def pic_batch(r, codes, rot, stages: int) -> DetectionBatch:
    R = codes @ codes.T
    diag = np.diag(R)
    Y = _despread_all(r, codes)
    zc = Y * rot
    zs, qs = [zc.real], [zc.imag]
    conj_rot = np.conj(rot)
    for _ in range(stages):
        x = zs[-1] * conj_rot
        zc = (Y - x @ R + x * diag) * rot
        zs.append(zc.real)
        qs.append(zc.imag)
    z = np.stack(zs)
    return DetectionBatch("pic", z, z, np.stack(qs))


def sic_batch(r, codes, rot) -> DetectionBatch:
    M = r.shape[0]
    K = codes.shape[0]
    R = codes @ codes.T
    Y = _despread_all(r, codes)
    rows = np.arange(M)
    z = np.zeros((M, K))
    quad = np.zeros((M, K))
    order = np.zeros((M, K), dtype=np.int64)
    done = np.zeros((M, K), dtype=bool)
    for s in range(K):
        zc = Y * rot
        mag = np.where(done, -np.inf, np.abs(zc.real))
        u = np.argmax(mag, axis=1)
        sel = zc[rows, u]
        z[rows, u] = sel.real
        quad[rows, u] = sel.imag
        order[:, s] = u
        done[rows, u] = True
        Y -= (sel.real * np.conj(rot[rows, u]))[:, None] * R[u]
    return DetectionBatch("sic", z[None], z[None], quad[None], order=order)


def ba_sic_batch(r, codes, rot, mu: float) -> DetectionBatch:
    W = np.array(codes, dtype=float, copy=True)
    z, est, quad, alpha, order, diverged = _kernels.ba_sic_kernel(
        np.ascontiguousarray(r, dtype=complex),
        np.ascontiguousarray(codes, dtype=float),
        np.ascontiguousarray(rot, dtype=complex),
        W,
        float(mu),
    )
    return DetectionBatch(
        "ba_sic", z[None], est[None], quad[None], alpha[None], order=order, diverged=bool(diverged.any())
    )


def ba_pic_batch(r, codes, rot, stages: int, mu: float, per_stage: bool = True) -> DetectionBatch:
    W = np.repeat(np.asarray(codes, dtype=float)[None], stages + 1, axis=0)
    z, est, quad, alpha, err0, diverged = _kernels.ba_pic_kernel(
        np.ascontiguousarray(r, dtype=complex),
        np.ascontiguousarray(codes, dtype=float),
        np.ascontiguousarray(rot, dtype=complex),
        W,
        float(mu),
        bool(per_stage),
    )
    return DetectionBatch(
        "ba_pic", z, est, quad, alpha, cma_error=err0, diverged=bool(diverged.any())
    )


def detect(config: ReceiverConfig, r: np.ndarray, codes: np.ndarray, phases: np.ndarray) -> DetectionBatch:
    """Run one receiver over a trial.

    Parameters
    ----------
    r : (M, N) complex received frames
    codes : (K, N) chip matrix
    phases : (M, K) genie channel phases phi_k(m)
    """
    rot = np.exp(1j * np.asarray(phases, dtype=float))
    if config.kind == "mf":
        return mf_batch(r, codes, rot)
    if config.kind == "pic":
        return pic_batch(r, codes, rot, config.stages)
    if config.kind == "sic":
        return sic_batch(r, codes, rot)
    if config.kind == "ba_sic":
        return ba_sic_batch(r, codes, rot, config.mu)
    return ba_pic_batch(r, codes, rot, config.stages, config.mu, config.per_stage_weights)
