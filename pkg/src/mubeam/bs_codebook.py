"""Adaptive multi-mainlobe BS codebook.

Every BS codeword above the bottom layer is a phased sum of bottom-layer
DFT beams. Which beams enter the sum is decided from the indices the UEs
fed back at the previous layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_channel import ANGLE_SLACK, Codeword, dft_coverage, dft_matrix, is_power_of_two


@dataclass(frozen=True)
class CoverageSet:
    """Bottom-codeword indices (1-based, sorted) merged into one BS codeword."""

    psi: tuple[int, ...]
    layer: int
    slot: int
    n_bs: int

    def __post_init__(self):
        if any(not 1 <= n <= self.n_bs for n in self.psi):
            raise ValueError(f"index outside 1..{self.n_bs} in coverage set")
        object.__setattr__(self, "psi", tuple(sorted(set(int(n) for n in self.psi))))

    def __len__(self):
        return len(self.psi)

    def intervals(self) -> tuple[tuple[float, float], ...]:
        runs: list[list[float]] = []
        for n in self.psi:
            lo, hi = dft_coverage(self.n_bs, n)
            if runs and abs(runs[-1][1] - lo) < ANGLE_SLACK:
                runs[-1][1] = hi
            else:
                runs.append([lo, hi])
        return tuple((lo, hi) for lo, hi in runs)


def mainlobe_phase(n, n_bs: int):
    """Phase ``n*pi*(-1 + 1/N_BS)`` attached to bottom beam ``n`` inside a sum."""
    return np.asarray(n) * np.pi * (-1.0 + 1.0 / n_bs)


def mainlobe_coefficients(psi, n_bs: int) -> np.ndarray:
    """Weights on the DFT beams such that ``dft_matrix(n_bs) @ c`` is the unit-norm codeword."""
    idx = np.asarray(psi, dtype=int)
    if idx.size == 0:
        raise ValueError("empty coverage set")
    c = np.zeros(n_bs, dtype=complex)
    # the DFT beams are orthonormal, so the sum has norm sqrt(|psi|)
    c[idx - 1] = np.exp(1j * mainlobe_phase(idx, n_bs)) / np.sqrt(idx.size)
    return c


def multi_mainlobe_codeword(psi: CoverageSet, n_bs: int | None = None,
                            basis: np.ndarray | None = None) -> Codeword:
    n_bs = psi.n_bs if n_bs is None else n_bs
    if len(psi) == 0:
        raise ValueError("empty coverage set")
    basis = dft_matrix(n_bs) if basis is None else basis
    w = basis @ mainlobe_coefficients(psi.psi, n_bs)
    w /= np.linalg.norm(w)
    return Codeword(w, psi.intervals(), layer=psi.layer, index=psi.slot)


def _members(n_bs: int, region: list[tuple[float, float]]) -> list[int]:
    """Bottom indices whose coverage lies inside one of the closed ``region`` intervals."""
    if not region:
        return []
    n = np.arange(1, n_bs + 1)
    lo = -1.0 + (2 * n - 2) / n_bs
    hi = -1.0 + 2 * n / n_bs
    a, b = np.asarray(region, dtype=float).T
    inside = (lo[:, None] >= a - ANGLE_SLACK) & (hi[:, None] <= b + ANGLE_SLACK)
    return n[inside.any(axis=1)].tolist()


def top_layer_sets(n_bs: int) -> tuple[CoverageSet, CoverageSet]:
    if not is_power_of_two(n_bs) or n_bs < 2:
        raise ValueError(f"n_bs={n_bs} must be a power of two >= 2")
    return tuple(CoverageSet(tuple(_members(n_bs, [(m - 2.0, m - 1.0)])), 1, m, n_bs)
                 for m in (1, 2))


def layer_region(s: int, m: int) -> tuple[float, float]:
    """Coverage of the ``m``-th contiguous codeword at layer ``s`` of a static codebook."""
    return (-1.0 + (m - 1) / 2 ** (s - 1), -1.0 + m / 2 ** (s - 1))


def layer_sets_from_gamma(s: int, gamma_prev, n_bs: int) -> tuple[CoverageSet, CoverageSet]:
    """Split the children of the layer ``s-1`` selections into odd and even positions.

    Slot 1 gathers the left child ``2*gamma - 1`` of every distinct parent
    ``gamma``, slot 2 the right child ``2*gamma``.
    """
    depth = int(n_bs).bit_length() - 1
    if not 2 <= s <= depth - 1:
        raise ValueError(f"layer {s} outside 2..{depth - 1}")
    parents = set(int(g) for g in np.asarray(gamma_prev).ravel())
    if any(not 1 <= g <= 2 ** (s - 1) for g in parents):
        raise ValueError(f"feedback {sorted(parents)} outside 1..{2 ** (s - 1)}")
    odd = [layer_region(s, m) for m in range(1, 2 ** s + 1) if m % 2 == 1 and (m + 1) // 2 in parents]
    even = [layer_region(s, m) for m in range(1, 2 ** s + 1) if m % 2 == 0 and m // 2 in parents]
    return (CoverageSet(tuple(_members(n_bs, odd)), s, 1, n_bs),
            CoverageSet(tuple(_members(n_bs, even)), s, 2, n_bs))


def update_gamma(gamma_prev, phi) -> np.ndarray:
    gamma_prev = np.asarray(gamma_prev, dtype=int)
    phi = np.asarray(phi, dtype=int)
    if gamma_prev.shape != phi.shape:
        raise ValueError(f"length mismatch: {gamma_prev.shape} vs {phi.shape}")
    if np.any((phi < 1) | (phi > 2)):
        raise ValueError("phi entries must be 1 or 2")
    return 2 * (gamma_prev - 1) + phi


def static_bs_codebook(n_bs: int) -> list[list[CoverageSet]]:
    """Non-adaptive BS hierarchy: layer ``s`` holds ``2**s`` contiguous coverage sets.

    Layers ``1..log2(n_bs)``; the bottom layer sets are singletons.
    """
    depth = int(n_bs).bit_length() - 1
    width = lambda s: n_bs // 2 ** s  # noqa: E731
    return [[CoverageSet(tuple(range((m - 1) * width(s) + 1, m * width(s) + 1)), s, m, n_bs)
             for m in range(1, 2 ** s + 1)] for s in range(1, depth + 1)]
