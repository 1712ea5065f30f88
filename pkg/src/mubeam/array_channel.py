"""Array response, DFT codebook grid, and Saleh-Valenzuela channel primitives.

Every angle handled here is in the cosine domain, ``theta = cos(omega)``,
with ``theta`` in ``[-1, 1]``. Physical angles only appear inside
:func:`generate_channel`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Interval = tuple[float, float]

# Slack used for every closed-interval membership test on the angle grid.
ANGLE_SLACK = 1e-12


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, user count and power budget of the multiuser link."""

    n_bs: int = 128
    n_ue: int = 16
    n_rf: int = 8
    k_users: int = 8
    noise_var: float = 1.0
    p_total: float = 1.0
    # "split": each training pilot carries p_total/K; "full": the whole budget
    pilot_mode: str = "split"

    def __post_init__(self):
        if self.pilot_mode not in ("split", "full"):
            raise ValueError(f"pilot_mode must be 'split' or 'full', got {self.pilot_mode!r}")
        if not is_power_of_two(self.n_bs) or not is_power_of_two(self.n_ue):
            raise ValueError(f"n_bs={self.n_bs} and n_ue={self.n_ue} must be powers of two")
        if self.n_ue > self.n_bs:
            raise ValueError(f"n_ue={self.n_ue} exceeds n_bs={self.n_bs}")
        if self.k_users < 1 or self.k_users > self.n_rf:
            raise ValueError(f"need 1 <= k_users <= n_rf, got k={self.k_users}, n_rf={self.n_rf}")
        if not (self.p_total > 0 and self.noise_var > 0):
            raise ValueError("p_total and noise_var must be positive")

    @property
    def bs_layers(self) -> int:
        return int(self.n_bs).bit_length() - 1

    @property
    def ue_layers(self) -> int:
        return int(self.n_ue).bit_length() - 1

    @property
    def pilot_power(self) -> float:
        if self.pilot_mode == "full":
            return self.p_total
        return self.p_total / self.k_users

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Return a copy whose noise variance realises ``p_total / (K sigma^2) = SNR``."""
        return SystemConfig(self.n_bs, self.n_ue, self.n_rf, self.k_users,
                            noise_var_from_snr(snr_db, self.p_total, self.k_users),
                            self.p_total, self.pilot_mode)


def noise_var_from_snr(snr_db: float, p_total: float, k_users: int) -> float:
    return p_total / (k_users * 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    theta_ue: float
    theta_bs: float

    def __post_init__(self):
        for name in ("theta_ue", "theta_bs"):
            t = getattr(self, name)
            if not -1.0 <= t <= 1.0:
                raise ValueError(f"{name}={t} outside [-1, 1]")


@dataclass(eq=False)
class ChannelRealization:
    """One UE's multipath channel; ``paths[0]`` is the LOS path."""

    paths: list[ChannelPath]
    matrix: np.ndarray

    def __post_init__(self):
        expected = assemble_channel(self.paths, *self.matrix.shape)
        if not np.allclose(self.matrix, expected, rtol=1e-10, atol=1e-10):
            raise ValueError("channel matrix does not match its path expansion")

    @classmethod
    def from_paths(cls, paths: Sequence[ChannelPath], n_ue: int, n_bs: int) -> "ChannelRealization":
        paths = list(paths)
        return cls(paths, assemble_channel(paths, n_ue, n_bs))

    @property
    def los(self) -> ChannelPath:
        return self.paths[0]

    @property
    def n_ue(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_bs(self) -> int:
        return self.matrix.shape[1]


@dataclass(eq=False)
class Codeword:
    """Complex weights of one beam plus the cosine-domain region it serves.

    ``layer``/``index`` locate the codeword in its hierarchical codebook,
    1-based. ``coverage`` is a union of closed intervals.
    """

    weights: np.ndarray
    coverage: tuple[Interval, ...] = field(default_factory=tuple)
    layer: int = 0
    index: int = 0

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def covers(self, theta: float) -> bool:
        return any(lo - ANGLE_SLACK <= theta <= hi + ANGLE_SLACK for lo, hi in self.coverage)


def steering_vector(n: int, theta: float) -> np.ndarray:
    """Unit-norm half-wavelength ULA response ``exp(j*pi*i*theta)/sqrt(n)``, i = 0..n-1."""
    if n < 1:
        raise ValueError(f"antenna count must be >= 1, got {n}")
    if not -1.0 <= theta <= 1.0:
        raise ValueError(f"theta={theta} outside [-1, 1]")
    return np.exp(1j * np.pi * np.arange(n) * theta) / np.sqrt(n)


def steering_matrix(n: int, thetas: np.ndarray) -> np.ndarray:
    """Columns are ``steering_vector(n, theta)`` for each theta (no range check)."""
    thetas = np.asarray(thetas, dtype=float)
    return np.exp(1j * np.pi * np.outer(np.arange(n), thetas)) / np.sqrt(n)


def dft_center(n_total: int, index: int) -> float:
    return -1.0 + (2 * index - 1) / n_total


def dft_coverage(n_total: int, index: int) -> Interval:
    return (-1.0 + (2 * index - 2) / n_total, -1.0 + 2 * index / n_total)


def _dft_codeword(n_total: int, index: int, layer: int) -> Codeword:
    if not 1 <= index <= n_total:
        raise IndexError(f"codeword index {index} outside 1..{n_total}")
    return Codeword(steering_vector(n_total, dft_center(n_total, index)),
                    (dft_coverage(n_total, index),), layer=layer, index=index)


def dft_codeword_bs(n_bs: int, n: int) -> Codeword:
    return _dft_codeword(n_bs, n, layer=int(n_bs).bit_length() - 1)


def dft_codeword_ue(n_ue: int, m: int) -> Codeword:
    return _dft_codeword(n_ue, m, layer=int(n_ue).bit_length() - 1)


def dft_matrix(n: int) -> np.ndarray:
    """All ``n`` bottom-layer codewords as columns, column ``i`` is index ``i+1``."""
    return steering_matrix(n, dft_center(n, np.arange(1, n + 1)))


def bin_index(n_total: int, theta: float) -> int:
    """1-based index of the bottom codeword whose coverage holds ``theta``."""
    return int(min(max(np.floor((theta + 1.0) * n_total / 2.0) + 1, 1), n_total))


def assemble_channel(paths: Sequence[ChannelPath], n_ue: int, n_bs: int) -> np.ndarray:
    gains = np.array([p.gain for p in paths], dtype=complex)
    a_ue = steering_matrix(n_ue, [p.theta_ue for p in paths])
    a_bs = steering_matrix(n_bs, [p.theta_bs for p in paths])
    scale = np.sqrt(n_bs * n_ue / len(paths))
    return scale * (a_ue * gains) @ a_bs.conj().T


def generate_channel(cfg: SystemConfig, l_paths: int, gain_vars: Sequence[float],
                     rng: np.random.Generator) -> ChannelRealization:
    """Draw one Saleh-Valenzuela channel with complex Gaussian path gains.

    Physical AoA/AoD are uniform on ``[0, 2*pi)`` and mapped through the cosine,
    so the cosine-domain angles follow the arcsine law, not a uniform one.
    """
    if l_paths < 1:
        raise ValueError("need at least one path")
    if len(gain_vars) != l_paths:
        raise ValueError(f"expected {l_paths} path variances, got {len(gain_vars)}")
    std = np.sqrt(np.asarray(gain_vars, dtype=float) / 2.0)
    gains = std * (rng.standard_normal(l_paths) + 1j * rng.standard_normal(l_paths))
    omegas = rng.uniform(0.0, 2.0 * np.pi, size=(2, l_paths))
    thetas = np.clip(np.cos(omegas), -1.0, 1.0)
    paths = [ChannelPath(complex(g), float(tu), float(tb))
             for g, tu, tb in zip(gains, thetas[0], thetas[1])]
    return ChannelRealization.from_paths(paths, cfg.n_ue, cfg.n_bs)


def complex_normal(rng: np.random.Generator, variance: float, size=None):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def measure(w: Codeword | np.ndarray, h: ChannelRealization | np.ndarray,
            f: Codeword | np.ndarray, power: float, noise_var: float,
            rng: np.random.Generator | None = None) -> complex:
    """Received pilot sample ``sqrt(power) * w^H H f + w^H n`` with pilot ``s = 1``."""
    w = getattr(w, "weights", w)
    f = getattr(f, "weights", f)
    h = getattr(h, "matrix", h)
    if h.shape != (w.shape[0], f.shape[0]):
        raise ValueError(f"shape mismatch: w {w.shape}, H {h.shape}, f {f.shape}")
    sample = np.sqrt(power) * (w.conj() @ h @ f)
    if noise_var > 0:
        if rng is None:
            raise ValueError("a random source is required when noise_var > 0")
        sample = sample + w.conj() @ complex_normal(rng, noise_var, w.shape[0])
    return complex(sample)


def beam_gain(weights: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """``|A^H v|`` evaluated at ``omegas``, i.e. ``sqrt(N) * |alpha(N, omega)^H v|``."""
    n = weights.shape[0]
    return np.abs(np.sqrt(n) * steering_matrix(n, omegas).conj().T @ weights)


def gain_db(gain: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.maximum(gain, 1e-15))
