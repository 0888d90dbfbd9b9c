"""Single-path channel state, Markov AoD dynamics and measurement models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from beamtrack.array_geometry import ArrayConfig, BeamVector, steering_vector
from beamtrack.exceptions import ConfigurationError, DomainError

# mirror images summed when folding Gaussian mass back into [-1, 1)
_N_IMAGES = 3


@dataclass(frozen=True)
class PathState:
    aod: float
    aoa: float
    gain: complex

    def __post_init__(self):
        for name in ("aod", "aoa"):
            value = getattr(self, name)
            if not -1.0 <= value < 1.0:
                raise DomainError(f"{name} must lie in [-1, 1), got {value}")


@dataclass(frozen=True)
class MobilityModel:
    sigma_p: float

    def __post_init__(self):
        if not self.sigma_p >= 0:
            raise ConfigurationError(f"sigma_p must be nonnegative, got {self.sigma_p}")


@dataclass(frozen=True, eq=False)
class Measurement:
    """Received samples of one training cycle.

    ``noise_var`` is the per-component variance; each complex sample carries
    noise of total variance ``2 * noise_var``. Zero means noiseless.
    """

    samples: np.ndarray
    beam_indices: tuple
    noise_var: float

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples, dtype=complex))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "beam_indices", tuple(int(i) for i in self.beam_indices))
        if samples.ndim != 1 or len(samples) != len(self.beam_indices):
            raise DomainError("samples and beam_indices must have the same length")
        if not self.noise_var >= 0:
            raise DomainError("noise_var must be nonnegative")


@dataclass(frozen=True, eq=False)
class AodPrior:
    """Discrete AoD distribution: ``mass[k]`` sits at angle ``grid[k]``."""

    grid: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        mass = np.atleast_1d(np.asarray(self.mass, dtype=float))
        if grid.shape != mass.shape:
            raise DomainError("grid and mass must have the same shape")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-12:
            raise DomainError("prior mass must be nonnegative and sum to 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def point_mass(cls, theta: float) -> "AodPrior":
        return cls(np.array([theta]), np.array([1.0]))

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.mass > threshold)


_JUST_BELOW_ONE = float(np.nextafter(1.0, -1.0))


def reflect_into_range(x):
    """Fold angles into ``[-1, 1)`` by reflecting at the boundaries."""
    if isinstance(x, (float, int)):
        y = (x + 1.0) % 4.0
        y = (4.0 - y if y > 2.0 else y) - 1.0
        return _JUST_BELOW_ONE if y >= 1.0 else y
    y = np.mod(np.asarray(x, dtype=float) + 1.0, 4.0)
    y = np.where(y > 2.0, 4.0 - y, y) - 1.0
    # the reflection of +1 is +1 itself; nudge it inside the half-open range
    y = np.where(y >= 1.0, _JUST_BELOW_ONE, y)
    return float(y) if y.ndim == 0 else y


def evolve_aod(prev: float, model: MobilityModel, rng: np.random.Generator) -> float:
    """One step of the Gaussian random walk, reflected at +-1."""
    if not -1.0 <= prev < 1.0:
        raise DomainError(f"prev must lie in [-1, 1), got {prev}")
    if model.sigma_p == 0:
        return float(prev)
    return reflect_into_range(prev + model.sigma_p * rng.standard_normal())


def _gauss_mass(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Standard normal mass on ``[lo, hi]``, accurate in both tails."""
    right = lo > 0
    return np.where(right, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def bin_midpoints(grid_size: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(grid_size) + 1.0) / grid_size


def discretize_aod_prior(prev: float, model: MobilityModel, grid_size: int) -> AodPrior:
    """Distribution of the next AoD over the ``M`` grid bins.

    Bin ``k`` covers ``[-1 + 2k/M, -1 + 2(k+1)/M)``; its mass is the Gaussian
    mass of that interval, including the mass reflected back from beyond the
    boundaries, and it is placed at the bin midpoint.
    """
    if not -1.0 <= prev <= 1.0:
        raise DomainError(f"prev must lie in [-1, 1], got {prev}")
    centers = bin_midpoints(grid_size)
    if model.sigma_p == 0:
        mass = np.zeros(grid_size)
        mass[min(int(np.floor((prev + 1.0) * grid_size / 2.0)), grid_size - 1)] = 1.0
        return AodPrior(centers, mass)

    edges = -1.0 + 2.0 * np.arange(grid_size + 1) / grid_size
    lo, hi = edges[:-1], edges[1:]
    sigma = model.sigma_p
    mass = np.zeros(grid_size)
    for n in range(-_N_IMAGES, _N_IMAGES + 1):
        shift = 4.0 * n
        mass += _gauss_mass((shift + lo - prev) / sigma, (shift + hi - prev) / sigma)
        mass += _gauss_mass((shift + 2.0 - hi - prev) / sigma, (shift + 2.0 - lo - prev) / sigma)
    mass /= mass.sum()
    return AodPrior(centers, mass)


def sample_gain(rng: np.random.Generator, size=None):
    """Circularly-symmetric complex Gaussian gain with ``E|beta|^2 = 1``."""
    z = rng.standard_normal(size=(2,) if size is None else (*np.atleast_1d(size), 2))
    beta = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    return complex(beta) if size is None else beta


def channel_matrix(paths: Sequence[PathState], tx_cfg: ArrayConfig, rx_cfg: ArrayConfig) -> np.ndarray:
    """``H = sqrt(N_b N_m) sum_l beta_l a_m(aoa_l) a_b(aod_l)^H`` (``N_m x N_b``)."""
    if len(paths) < 1:
        raise DomainError("at least one path is required")
    scale = np.sqrt(tx_cfg.num_antennas * rx_cfg.num_antennas)
    H = np.zeros((rx_cfg.num_antennas, tx_cfg.num_antennas), dtype=complex)
    for p in paths:
        H += p.gain * np.outer(steering_vector(rx_cfg, p.aoa), steering_vector(tx_cfg, p.aod).conj())
    return scale * H


def complex_noise(rng: np.random.Generator, noise_var: float, size) -> np.ndarray:
    z = rng.standard_normal(size=(*np.atleast_1d(size), 2))
    return np.sqrt(noise_var) * (z[..., 0] + 1j * z[..., 1])


def observe(
    path: PathState,
    beams: Sequence[BeamVector],
    noise_var: float,
    rng: np.random.Generator | None,
    tx_cfg: ArrayConfig | None = None,
) -> Measurement:
    """Scalar outputs ``beta * a_b(aod)^H f_i + n_i`` with ideal receive combining.

    The combiner is matched to the AoA, so ``w^H a_m(aoa) = 1`` and the AoA
    drops out of the samples.
    """
    if len(beams) == 0:
        raise DomainError("at least one training beam is required")
    if tx_cfg is None:
        tx_cfg = ArrayConfig(len(beams[0].coefficients))
    F = np.column_stack([b.coefficients for b in beams])
    samples = path.gain * (steering_vector(tx_cfg, path.aod).conj() @ F)
    if noise_var > 0:
        if rng is None:
            raise DomainError("a random generator is required for noisy observations")
        samples = samples + complex_noise(rng, noise_var, len(beams))
    return Measurement(samples, [b.index for b in beams], noise_var)


def snr_db_to_noise_var(snr_db: float) -> float:
    """Per-component noise variance for ``SNR = E|beta|^2 / (2 sigma^2)``."""
    if np.isposinf(snr_db):
        return 0.0
    return 0.5 * 10.0 ** (-snr_db / 10.0)
