"""Effective channel, zero-forcing digital precoder, sum rate and LOS success metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array_channel import ChannelRealization, complex_normal
from .protocol import TrainingResult, los_identified

COND_LIMIT = 1e8


class BeamConflictError(np.linalg.LinAlgError):
    """Effective channel too ill-conditioned to invert; ``pair`` names the clashing UEs (0-based)."""

    def __init__(self, message: str, pair: tuple[int, int] | None = None, cond: float = np.inf):
        super().__init__(message)
        self.pair = pair
        self.cond = cond


@dataclass(eq=False)
class EffectiveChannel:
    h_e: np.ndarray

    @property
    def k(self) -> int:
        return self.h_e.shape[0]

    def cond(self) -> float:
        return float(np.linalg.cond(self.h_e))

    def rank_deficient(self, limit: float = COND_LIMIT) -> bool:
        return not self.cond() < limit


@dataclass(eq=False)
class PrecodeSolution:
    f_bb: np.ndarray
    f_bb_unnormalized: np.ndarray
    column_norms: np.ndarray


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return vectors
    return np.stack([getattr(v, "weights", v) for v in vectors], axis=1)


def effective_channel(w_hats, channels: Sequence[ChannelRealization], f_hats) -> EffectiveChannel:
    """``[H_e]_{i,k} = w_i^H H_i f_k``; ``w_hats``/``f_hats`` are columns or codeword lists."""
    w = _as_matrix(w_hats)
    f = _as_matrix(f_hats)
    k = len(channels)
    if w.shape[1] != k or f.shape[1] != k:
        raise ValueError(f"need {k} combiners and precoders, got {w.shape[1]} and {f.shape[1]}")
    rows = []
    for i, h in enumerate(channels):
        hm = getattr(h, "matrix", h)
        if hm.shape != (w.shape[0], f.shape[0]):
            raise ValueError(f"channel {i} has shape {hm.shape}")
        rows.append(w[:, i].conj() @ hm @ f)
    return EffectiveChannel(np.array(rows))


def noisy_effective_channel(h_e: EffectiveChannel, pilot_power: float, noise_var: float,
                            rng: np.random.Generator) -> EffectiveChannel:
    """Uplink estimate of ``H_e``: each entry seen once at the training SNR, scaled back by the pilot amplitude."""
    noise = complex_normal(rng, noise_var, h_e.h_e.shape)
    return EffectiveChannel(h_e.h_e + noise / np.sqrt(pilot_power))


def _conflict_pair(f_rf: np.ndarray) -> tuple[int, int] | None:
    k = f_rf.shape[1]
    gram = np.abs(f_rf.conj().T @ f_rf)
    norms = np.sqrt(np.real(np.diag(gram)))
    for i in range(k):
        for j in range(i + 1, k):
            if gram[i, j] >= (1 - 1e-12) * norms[i] * norms[j]:
                return (i, j)
    return None


def zf_precoder(h_e: EffectiveChannel | np.ndarray, f_rf: np.ndarray | None = None,
                cond_limit: float = COND_LIMIT) -> PrecodeSolution:
    """``F_BB = H_e^H (H_e H_e^H)^{-1}`` with every hybrid column ``F_RF F_BB[:, k]`` scaled to unit norm.

    Raises :class:`BeamConflictError` when two UEs share an analog beam or the
    effective channel is too ill-conditioned.
    """
    he = getattr(h_e, "h_e", h_e)
    k = he.shape[0]
    if he.shape != (k, k):
        raise ValueError(f"effective channel must be square, got {he.shape}")
    if f_rf is not None:
        pair = _conflict_pair(f_rf)
        if pair is not None:
            raise BeamConflictError(f"UEs {pair[0]} and {pair[1]} share one analog beam", pair)
    cond = float(np.linalg.cond(he))
    if not cond < cond_limit:
        pair = _worst_pair(he)
        raise BeamConflictError(f"effective channel condition number {cond:.3g} "
                                f"(UEs {pair[0]} and {pair[1]} collide)", pair, cond)
    f_bb = he.conj().T @ np.linalg.inv(he @ he.conj().T)
    hybrid = f_bb if f_rf is None else f_rf @ f_bb
    norms = np.linalg.norm(hybrid, axis=0)
    return PrecodeSolution(f_bb / norms, f_bb, norms)


def _worst_pair(he: np.ndarray) -> tuple[int, int]:
    cols = he / np.maximum(np.linalg.norm(he, axis=0), 1e-300)
    gram = np.abs(cols.conj().T @ cols)
    np.fill_diagonal(gram, -1.0)
    i, j = np.unravel_index(int(np.argmax(gram)), gram.shape)
    return (int(min(i, j)), int(max(i, j)))


def equal_powers(p_total: float, k: int) -> np.ndarray:
    return np.full(k, p_total / k)


def sinr(channels, f_rf: np.ndarray, f_bb: np.ndarray, w_hats, powers, noise_var: float) -> np.ndarray:
    w = _as_matrix(w_hats)
    powers = np.asarray(powers, dtype=float)
    out = np.empty(len(channels))
    for k, h in enumerate(channels):
        hm = getattr(h, "matrix", h)
        gains = np.abs(w[:, k].conj() @ hm @ f_rf @ f_bb) ** 2 * powers
        interference = gains.sum() - gains[k]
        out[k] = gains[k] / (interference + noise_var)
    return out


def sum_rate(channels, f_rf: np.ndarray, f_bb: np.ndarray, w_hats, powers, noise_var: float) -> float:
    """Averaged sum rate ``(1/K) sum_k log2(1 + SINR_k)`` in bps/Hz."""
    return float(np.mean(np.log2(1.0 + sinr(channels, f_rf, f_bb, w_hats, powers, noise_var))))


def success_rate(results: Sequence[TrainingResult],
                 truths: Sequence[Sequence[ChannelRealization]]) -> float:
    """Fraction of (trial, UE) pairs whose LOS path was identified."""
    if len(results) != len(truths):
        raise ValueError("results and channel batches differ in length")
    flags = [los_identified(r, t) for r, t in zip(results, truths)]
    return float(np.mean(np.concatenate(flags))) if flags else float("nan")
