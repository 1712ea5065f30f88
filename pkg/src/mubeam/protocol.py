"""Beam training schedules: simultaneous multiuser, TDMA hierarchical, and exhaustive sweep.

Measurements are evaluated in beamspace. With ``B_k = H_k F`` for the
bottom-layer DFT matrix ``F``, a BS codeword built as ``F c`` and a UE
combiner ``w`` give ``w^H H_k F c = (w^H B_k) c``. All received samples are
``sqrt(P) * w^H H f + noise`` with unit-norm ``w``/``f`` so the noise term is
a scalar ``CN(0, sigma^2)`` draw.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .amcf import HierarchicalCodebook
from .array_channel import (ANGLE_SLACK, ChannelRealization, SystemConfig, complex_normal,
                            dft_coverage, dft_matrix)
from .bs_codebook import (CoverageSet, layer_sets_from_gamma, mainlobe_coefficients,
                          static_bs_codebook, top_layer_sets, update_gamma)

SCHEMES = ("simultaneous", "tdma", "sweep")


@dataclass
class LayerRecord:
    layer: int
    stage: str
    codewords: list[str]
    powers_db: list[list[float]]
    phi: list[int]
    gamma: list[int]
    users: list[int]


@dataclass
class TrainingTrace:
    scheme: str
    seed: int | None = None
    records: list[LayerRecord] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = []
        for rec in self.records:
            row = {"scheme": self.scheme, "seed": self.seed}
            row.update(asdict(rec))
            lines.append(json.dumps(row, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(eq=False)
class TrainingResult:
    """Selected bottom-layer codeword indices (1-based) for every UE."""

    scheme: str
    f_idx: np.ndarray
    w_idx: np.ndarray
    slots_used: int
    trace: TrainingTrace
    n_bs: int
    n_ue: int

    @property
    def f_hat(self) -> np.ndarray:
        """Analog precoder ``F_RF`` with column ``k`` the DFT beam chosen for UE ``k``."""
        return _dft(self.n_bs)[:, self.f_idx - 1]

    @property
    def w_hat(self) -> np.ndarray:
        return _dft(self.n_ue)[:, self.w_idx - 1]

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.f_idx.tolist(), self.w_idx.tolist()))


@lru_cache(maxsize=16)
def _dft(n: int) -> np.ndarray:
    mat = dft_matrix(n)
    mat.setflags(write=False)
    return mat


def _log2(n: int) -> int:
    return int(n).bit_length() - 1


def overhead(scheme: str, n_bs: int, n_ue: int, k: int) -> int:
    """Training time slots of each scheme."""
    s, t = _log2(n_bs), _log2(n_ue)
    if scheme == "simultaneous":
        return 2 * (k + s + t - 1)
    if scheme == "sweep":
        return n_bs * n_ue
    if scheme == "tdma":
        return 2 * k * (s + t)
    raise ValueError(f"unknown scheme {scheme!r}")


def feedback_overhead(scheme: str, n_bs: int, n_ue: int, k: int) -> int:
    s = _log2(n_bs)
    if scheme == "simultaneous":
        return k * (s - 1)
    if scheme == "sweep":
        return k
    if scheme == "tdma":
        return k * s
    raise ValueError(f"unknown scheme {scheme!r}")


def _check_inputs(cfg: SystemConfig, channels: Sequence[ChannelRealization], ue_codebook=None):
    if len(channels) != cfg.k_users:
        raise ValueError(f"expected {cfg.k_users} channels, got {len(channels)}")
    for h in channels:
        if h.matrix.shape != (cfg.n_ue, cfg.n_bs):
            raise ValueError(f"channel shape {h.matrix.shape} != ({cfg.n_ue}, {cfg.n_bs})")
    if ue_codebook is not None and (ue_codebook.n != cfg.n_ue or ue_codebook.depth != cfg.ue_layers):
        raise ValueError("UE codebook does not match n_ue")
    if cfg.n_ue < 2 or cfg.n_bs < 2:
        raise ValueError("training needs at least two antennas at each end")


class _Link:
    """Noisy pilot measurements for one set of channels."""

    def __init__(self, cfg: SystemConfig, channels, ue_codebook: HierarchicalCodebook | None,
                 rng: np.random.Generator | None, noise_var: float):
        self.amp = np.sqrt(cfg.pilot_power)
        self.noise_var = noise_var
        self.rng = rng
        if noise_var > 0 and rng is None:
            raise ValueError("a random source is required when noise_var > 0")
        f = _dft(cfg.n_bs)
        # beamspace channels, shape (K, n_ue, n_bs)
        self.beamspace = np.stack([h.matrix for h in channels]) @ f
        if ue_codebook is not None:
            stacked, self.offsets = ue_codebook.stacked()
            self.ue_space = np.einsum("ac,kab->kcb", stacked.conj(), self.beamspace)

    def noise(self, shape):
        if self.noise_var == 0:
            return np.zeros(shape, dtype=complex)
        return complex_normal(self.rng, self.noise_var, shape)

    def ue_rows(self, k: int, layer: int, positions) -> np.ndarray:
        return self.ue_space[k, self.offsets[layer - 1] + np.asarray(positions) - 1]

    def sample(self, clean: np.ndarray) -> np.ndarray:
        return self.amp * clean + self.noise(clean.shape)


def _powers_db(p: np.ndarray) -> list[float]:
    return [round(float(x), 6) for x in 10 * np.log10(np.maximum(p, 1e-300)).ravel()]


def _parent_block(gamma, layer: int, n_bs: int) -> list[int]:
    """Bottom indices under the layer-``layer`` codewords listed in ``gamma`` (layer 0 = everything)."""
    width = n_bs // 2 ** layer
    out = set()
    for g in set(int(x) for x in gamma):
        out.update(range((g - 1) * width + 1, g * width + 1))
    return sorted(out)


def _descend(cfg: SystemConfig, link: _Link, users: list[int],
             bs_pair: Callable[[int, np.ndarray], tuple[CoverageSet, CoverageSet]],
             trace: TrainingTrace, label: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Hierarchical descent for the UEs in ``users`` sharing every BS transmission.

    Returns (gamma at the bottom layer, UE bottom index, slots used).
    """
    s_bs, t_ue = cfg.bs_layers, cfg.ue_layers
    n_users = len(users)
    gamma = np.ones(n_users, dtype=int)
    ue_sel = np.ones(n_users, dtype=int)
    slots = 0
    for s in range(1, s_bs):
        sets = bs_pair(s, gamma)
        coeffs = np.stack([mainlobe_coefficients(c.psi, cfg.n_bs) for c in sets], axis=1)
        names = [f"{label}({s},{c.slot}):{_runs(c.psi)}" for c in sets]
        phi = np.empty(n_users, dtype=int)
        powers = []
        if s <= t_ue:
            for i, k in enumerate(users):
                rows = link.ue_rows(k, s, [2 * ue_sel[i] - 1, 2 * ue_sel[i]])
                # index [bs, ue]; argmax order gives the lower BS index on ties
                p = np.abs(link.sample((rows @ coeffs).T)) ** 2
                bs, ue = np.unravel_index(int(np.argmax(p)), p.shape)
                phi[i] = bs + 1
                ue_sel[i] = 2 * (ue_sel[i] - 1) + ue + 1
                powers.append(_powers_db(p))
            slots += 4
            stage = "joint"
        else:
            for i, k in enumerate(users):
                row = link.ue_rows(k, t_ue, [ue_sel[i]])[0]
                p = np.abs(link.sample(row @ coeffs)) ** 2
                phi[i] = int(np.argmax(p)) + 1
                powers.append(_powers_db(p))
            slots += 2
            stage = "bs"
        gamma = update_gamma(gamma, phi)
        if np.any(gamma < 1) or np.any(gamma > 2 ** s):
            raise RuntimeError(f"feedback out of range at layer {s}: {gamma}")
        trace.records.append(LayerRecord(s, stage, names, powers, phi.tolist(),
                                         gamma.tolist(), list(users)))

    # UE layers left over when the UE array is as large as the BS array
    for s in range(s_bs, t_ue + 1):
        union = _parent_block(gamma, s_bs - 1, cfg.n_bs)
        coeff = mainlobe_coefficients(union, cfg.n_bs)
        powers = []
        for i, k in enumerate(users):
            rows = link.ue_rows(k, s, [2 * ue_sel[i] - 1, 2 * ue_sel[i]])
            p = np.abs(link.sample(rows @ coeff)) ** 2
            ue_sel[i] = 2 * (ue_sel[i] - 1) + int(np.argmax(p)) + 1
            powers.append(_powers_db(p))
        slots += 2
        trace.records.append(LayerRecord(s, "ue", [f"{label}(union):{_runs(union)}"], powers,
                                         [], gamma.tolist(), list(users)))

    # bottom layer: uplink, the BS listens with the two children of each selection
    phi = np.empty(n_users, dtype=int)
    powers = []
    for i, k in enumerate(users):
        row = link.ue_rows(k, t_ue, [ue_sel[i]])[0]
        cols = np.array([2 * gamma[i] - 2, 2 * gamma[i] - 1])
        p = np.abs(link.sample(row[cols])) ** 2
        phi[i] = int(np.argmax(p)) + 1
        powers.append(_powers_db(p))
        slots += 2
    gamma = update_gamma(gamma, phi)
    trace.records.append(LayerRecord(s_bs, "uplink", [f"f_c children of {label}"], powers,
                                     phi.tolist(), gamma.tolist(), list(users)))
    return gamma, ue_sel, slots


def _runs(psi) -> str:
    psi = list(psi)
    parts, start = [], psi[0]
    for a, b in zip(psi, psi[1:] + [None]):
        if b != a + 1:
            parts.append(f"{start}-{a}" if a != start else f"{a}")
            start = b
    return ",".join(parts)


def run_simultaneous(cfg: SystemConfig, channels: Sequence[ChannelRealization],
                     ue_codebook: HierarchicalCodebook, rng: np.random.Generator | None = None,
                     noise_var: float | None = None, seed: int | None = None) -> TrainingResult:
    """All UEs train together against two adaptive multi-mainlobe BS codewords per layer."""
    _check_inputs(cfg, channels, ue_codebook)
    nv = cfg.noise_var if noise_var is None else noise_var
    link = _Link(cfg, channels, ue_codebook, rng, nv)
    trace = TrainingTrace("simultaneous", seed)

    def adaptive(s, gamma):
        return top_layer_sets(cfg.n_bs) if s == 1 else layer_sets_from_gamma(s, gamma, cfg.n_bs)

    gamma, ue_sel, slots = _descend(cfg, link, list(range(cfg.k_users)), adaptive, trace, "C")
    return TrainingResult("simultaneous", gamma, ue_sel, slots, trace, cfg.n_bs, cfg.n_ue)


def run_tdma_hierarchical(cfg: SystemConfig, channels: Sequence[ChannelRealization],
                          ue_codebook: HierarchicalCodebook,
                          bs_static_codebook: list[list[CoverageSet]] | None = None,
                          rng: np.random.Generator | None = None,
                          noise_var: float | None = None, seed: int | None = None) -> TrainingResult:
    """User-by-user hierarchical descent over a fixed contiguous BS codebook."""
    _check_inputs(cfg, channels, ue_codebook)
    book = static_bs_codebook(cfg.n_bs) if bs_static_codebook is None else bs_static_codebook
    nv = cfg.noise_var if noise_var is None else noise_var
    link = _Link(cfg, channels, ue_codebook, rng, nv)
    trace = TrainingTrace("tdma", seed)

    def static(s, gamma):
        g = int(gamma[0])
        return book[s - 1][2 * g - 2], book[s - 1][2 * g - 1]

    f_idx = np.empty(cfg.k_users, dtype=int)
    w_idx = np.empty(cfg.k_users, dtype=int)
    slots = 0
    for k in range(cfg.k_users):
        gamma, ue_sel, used = _descend(cfg, link, [k], static, trace, "V_BS")
        f_idx[k], w_idx[k] = gamma[0], ue_sel[0]
        slots += used
    return TrainingResult("tdma", f_idx, w_idx, slots, trace, cfg.n_bs, cfg.n_ue)


def run_exhaustive(cfg: SystemConfig, channels: Sequence[ChannelRealization],
                   rng: np.random.Generator | None = None, noise_var: float | None = None,
                   seed: int | None = None) -> TrainingResult:
    """Beam sweeping over every (BS, UE) DFT codeword pair; UEs measure in parallel."""
    _check_inputs(cfg, channels)
    nv = cfg.noise_var if noise_var is None else noise_var
    link = _Link(cfg, channels, None, rng, nv)
    w = _dft(cfg.n_ue)
    # (K, n_bs, n_ue) grid of w^H H f
    clean = np.einsum("am,kab->kbm", w.conj(), link.beamspace)
    p = np.abs(link.sample(clean)) ** 2
    flat = np.argmax(p.reshape(cfg.k_users, -1), axis=1)
    f_idx, w_idx = np.divmod(flat, cfg.n_ue)
    trace = TrainingTrace("sweep", seed)
    best = p.reshape(cfg.k_users, -1)[np.arange(cfg.k_users), flat]
    trace.records.append(LayerRecord(cfg.bs_layers, "sweep", [f"all {cfg.n_bs}x{cfg.n_ue} pairs"],
                                     [_powers_db(np.array([b])) for b in best],
                                     [], (f_idx + 1).tolist(), list(range(cfg.k_users))))
    return TrainingResult("sweep", f_idx + 1, w_idx + 1, cfg.n_bs * cfg.n_ue, trace,
                          cfg.n_bs, cfg.n_ue)


def run_scheme(scheme: str, cfg: SystemConfig, channels, ue_codebook, rng,
               noise_var: float | None = None, seed: int | None = None) -> TrainingResult:
    if scheme == "simultaneous":
        return run_simultaneous(cfg, channels, ue_codebook, rng, noise_var, seed)
    if scheme == "tdma":
        return run_tdma_hierarchical(cfg, channels, ue_codebook, None, rng, noise_var, seed)
    if scheme == "sweep":
        return run_exhaustive(cfg, channels, rng, noise_var, seed)
    raise ValueError(f"unknown scheme {scheme!r}")


def los_identified(result: TrainingResult, channels: Sequence[ChannelRealization]) -> np.ndarray:
    """Per-UE flag: both selected beams cover the LOS departure and arrival angles."""
    ok = np.empty(len(channels), dtype=bool)
    for k, h in enumerate(channels):
        f_lo, f_hi = dft_coverage(result.n_bs, int(result.f_idx[k]))
        w_lo, w_hi = dft_coverage(result.n_ue, int(result.w_idx[k]))
        ok[k] = (f_lo - ANGLE_SLACK <= h.los.theta_bs <= f_hi + ANGLE_SLACK
                 and w_lo - ANGLE_SLACK <= h.los.theta_ue <= w_hi + ANGLE_SLACK)
    return ok
