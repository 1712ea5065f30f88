"""Constant-modulus codeword synthesis by alternating minimisation.

The design target is a flat beam of height ``sqrt(2/B)`` over ``[omega0,
omega0 + B]`` sampled on a uniform ``Q``-point angle grid. Both half steps
of the alternation (phase of the target, then the codeword) are solved in
closed form, so the fitting error never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .array_channel import (ANGLE_SLACK, Codeword, beam_gain, dft_matrix,
                            dft_coverage, is_power_of_two, steering_matrix)

DEFAULT_ITERS = 50


def default_grid_size(n: int) -> int:
    return 16 * n


@dataclass(frozen=True)
class BeamSpec:
    omega0: float
    width: float
    n: int
    q: int | None = None
    max_iters: int = DEFAULT_ITERS

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", default_grid_size(self.n))
        if not -1.0 <= self.omega0 < 1.0:
            raise ValueError(f"omega0={self.omega0} outside [-1, 1)")
        if not 0.0 < self.width <= 2.0:
            raise ValueError(f"width={self.width} outside (0, 2]")
        if self.omega0 + self.width > 1.0 + 1e-12:
            raise ValueError("beam coverage runs past +1")
        if self.q <= self.n:
            raise ValueError(f"grid size q={self.q} must exceed n={self.n}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @property
    def coverage(self) -> tuple[float, float]:
        return (self.omega0, min(self.omega0 + self.width, 1.0))


@dataclass(frozen=True, eq=False)
class GainTemplate:
    grid: np.ndarray
    target: np.ndarray


@dataclass(eq=False)
class AmcfState:
    v: np.ndarray
    theta: np.ndarray
    objective: float


@dataclass(eq=False)
class AmcfResult:
    """Designed codeword plus the per-iteration fitting error ``||g - |A^H v|||^2``.

    ``objective[0]`` belongs to the initial codeword, ``objective[m]`` to
    iterate ``m``.
    """

    codeword: Codeword
    objective: list[float] = field(default_factory=list)
    initial: np.ndarray | None = None


def quantized_grid(q: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(1, q + 1) - 1.0) / q


def ideal_gain(spec: BeamSpec, omega: float) -> float:
    lo, hi = spec.coverage
    if lo - ANGLE_SLACK <= omega <= hi + ANGLE_SLACK:
        return float(np.sqrt(2.0 / spec.width))
    return 0.0


def gain_template(spec: BeamSpec) -> GainTemplate:
    grid = quantized_grid(spec.q)
    lo, hi = spec.coverage
    inside = (grid >= lo - ANGLE_SLACK) & (grid <= hi + ANGLE_SLACK)
    return GainTemplate(grid, np.where(inside, np.sqrt(2.0 / spec.width), 0.0))


def build_grid_matrix(n: int, q: int) -> np.ndarray:
    """``sqrt(n)`` times the steering vectors at the ``q`` grid angles, shape ``(n, q)``.

    The rows are orthogonal with ``A @ A^H = q * I``.
    """
    if q <= n:
        raise ValueError(f"grid size q={q} must exceed n={n}")
    return np.sqrt(n) * steering_matrix(n, quantized_grid(q))


def zc_init(spec: BeamSpec) -> Codeword:
    """Zadoff-Chu style chirp spanning ``[omega0, omega0 + B]``.

    The entry index in the exponent runs from 1, not 0.
    """
    n = spec.n
    idx = np.arange(1, n + 1, dtype=float)
    if n % 2 == 0:
        chirp = spec.width * idx ** 2 / (2 * n)
    else:
        chirp = spec.width * idx * (idx + 1) / (2 * n)
    v = np.exp(1j * np.pi * (chirp + idx * spec.omega0)) / np.sqrt(n)
    return Codeword(v, (spec.coverage,))


def amcf_phase_update(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.angle(a.conj().T @ v)


def amcf_codeword_update(p: np.ndarray, previous: np.ndarray | None = None) -> np.ndarray:
    """Constant-modulus maximiser of ``p^H v + v^H p``: the phase of ``p`` at modulus ``1/sqrt(N)``.

    Entries where ``p`` vanishes keep the phase of ``previous`` (or zero phase).
    """
    p = np.asarray(p, dtype=complex)
    n = p.shape[0]
    phase = np.angle(p)
    dead = np.abs(p) == 0
    if dead.any():
        phase[dead] = np.angle(previous[dead]) if previous is not None else 0.0
    return np.exp(1j * phase) / np.sqrt(n)


def amcf_objective(a: np.ndarray, target: np.ndarray, v: np.ndarray) -> float:
    return float(np.sum((target - np.abs(a.conj().T @ v)) ** 2))


def amcf_design(spec: BeamSpec, init: Callable[[BeamSpec], Codeword] = zc_init,
                tol: float | None = None, grid_matrix: np.ndarray | None = None) -> AmcfResult:
    """Alternate the closed-form phase and codeword updates ``spec.max_iters`` times.

    ``tol`` enables an early exit on relative objective change; by default all
    iterations run.
    """
    a = build_grid_matrix(spec.n, spec.q) if grid_matrix is None else grid_matrix
    g = gain_template(spec).target
    v0 = init(spec).weights
    v = v0.copy()
    history = [amcf_objective(a, g, v)]
    for _ in range(spec.max_iters):
        theta = amcf_phase_update(a, v)
        r = g * np.exp(1j * theta)
        v = amcf_codeword_update(a @ r, previous=v)
        history.append(amcf_objective(a, g, v))
        if tol is not None and abs(history[-2] - history[-1]) <= tol * max(history[-2], 1e-300):
            break
    return AmcfResult(Codeword(v, (spec.coverage,)), history, v0)


def shift_codeword(v: Codeword, s: int, m: int) -> Codeword:
    """Translate the leftmost layer-``s`` codeword to position ``m`` (steps of ``2/2^s``)."""
    if not 1 <= m <= 2 ** s:
        raise IndexError(f"position {m} outside 1..{2 ** s}")
    n = v.n
    step = (m - 1) / 2 ** (s - 1)
    # the shift is a unit-modulus phase ramp; keep it exactly unimodular
    ramp = np.exp(1j * np.pi * np.arange(n) * step)
    width = 2.0 / 2 ** s
    cov = (-1.0 + (m - 1) * width, -1.0 + m * width)
    return Codeword(v.weights * ramp, (cov,), layer=s, index=m)


class HierarchicalCodebook:
    """Layered codebook, layer ``s`` (1-based) holding ``2**s`` codewords as columns."""

    def __init__(self, layers: list[np.ndarray], coverages: list[list[tuple[float, float]]],
                 objectives: dict[int, list[float]] | None = None):
        self.layers = layers
        self.coverages = coverages
        self.objectives = objectives or {}

    @property
    def n(self) -> int:
        return self.layers[0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def matrix(self, s: int) -> np.ndarray:
        return self.layers[s - 1]

    def __getitem__(self, key: tuple[int, int]) -> Codeword:
        s, m = key
        if not 1 <= s <= self.depth or not 1 <= m <= 2 ** s:
            raise IndexError(f"no codeword ({s}, {m})")
        return Codeword(self.layers[s - 1][:, m - 1], (self.coverages[s - 1][m - 1],), s, m)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All codewords as columns plus the column offset of every layer.

        Codeword ``(s, m)`` is column ``offsets[s - 1] + m - 1``.
        """
        offsets = np.cumsum([0] + [lay.shape[1] for lay in self.layers[:-1]])
        return np.concatenate(self.layers, axis=1), offsets


def build_ue_codebook(n_ue: int, q: int | None = None, m_iters: int = DEFAULT_ITERS,
                      tol: float | None = None) -> HierarchicalCodebook:
    """UE hierarchical codebook with ``log2(n_ue)`` layers.

    Layers above the bottom come from AMCF on the leftmost beam, shifted
    across the angle space; the bottom layer is the exact DFT grid.
    """
    if not is_power_of_two(n_ue) or n_ue < 2:
        raise ValueError(f"n_ue={n_ue} must be a power of two >= 2")
    q = default_grid_size(n_ue) if q is None else q
    depth = n_ue.bit_length() - 1
    a = build_grid_matrix(n_ue, q)
    layers, coverages, objectives = [], [], {}
    for s in range(1, depth):
        res = amcf_design(BeamSpec(-1.0, 2.0 / 2 ** s, n_ue, q, m_iters), tol=tol, grid_matrix=a)
        objectives[s] = res.objective
        shifted = [shift_codeword(res.codeword, s, m) for m in range(1, 2 ** s + 1)]
        layers.append(np.stack([c.weights for c in shifted], axis=1))
        coverages.append([c.coverage[0] for c in shifted])
    layers.append(dft_matrix(n_ue))
    coverages.append([dft_coverage(n_ue, m) for m in range(1, n_ue + 1)])
    return HierarchicalCodebook(layers, coverages, objectives)


def codebook_patterns(book: HierarchicalCodebook, q: int | None = None):
    """Yield ``(layer, index, omegas, gain)`` with gain ``|A^H v|`` on the grid."""
    omegas = quantized_grid(default_grid_size(book.n) if q is None else q)
    for s in range(1, book.depth + 1):
        mat = book.matrix(s)
        for m in range(1, mat.shape[1] + 1):
            yield s, m, omegas, beam_gain(mat[:, m - 1], omegas)
