"""Uniform linear array steering vectors and the two-aperture beam codebook.

Angles are normalized, ``theta = sin(phi)``, and live in ``[-1, 1]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from beamtrack.exceptions import ConfigurationError, DomainError


class ApertureClass(enum.Enum):
    FULL = "full"
    HALF = "half"

    @classmethod
    def parse(cls, value: "ApertureClass | str") -> "ApertureClass":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown aperture class {value!r}") from None


@dataclass(frozen=True)
class ArrayConfig:
    num_antennas: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ConfigurationError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if not self.spacing_ratio > 0:
            raise ConfigurationError(f"spacing_ratio must be positive, got {self.spacing_ratio}")


def _check_angles(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) > 1.0):
        raise DomainError("normalized angle must lie in [-1, 1]")
    return theta


def _phase_ramp(cfg: ArrayConfig, theta: np.ndarray) -> np.ndarray:
    k = np.arange(cfg.num_antennas)
    return 2j * np.pi * cfg.spacing_ratio * np.multiply.outer(theta, k)


def steering_vector(cfg: ArrayConfig, theta) -> np.ndarray:
    """Array response ``a(theta)`` with unit norm.

    A scalar ``theta`` gives a vector of length ``num_antennas``; an array of
    angles gives one response per row.
    """
    theta = _check_angles(theta)
    return np.exp(_phase_ramp(cfg, theta)) / np.sqrt(cfg.num_antennas)


def steering_derivative(cfg: ArrayConfig, theta) -> np.ndarray:
    """Derivative of :func:`steering_vector` with respect to ``theta``."""
    theta = _check_angles(theta)
    k = np.arange(cfg.num_antennas)
    return (2j * np.pi * cfg.spacing_ratio * k) * np.exp(_phase_ramp(cfg, theta)) / np.sqrt(cfg.num_antennas)


def aod_error(est, true, spacing_ratio: float = 0.5):
    """Angle error modulo the steering-vector period ``1 / spacing_ratio``.

    With ``spacing_ratio >= 0.5`` the array cannot tell ``theta`` from
    ``theta - 1/spacing_ratio`` (at half-wavelength spacing, ``+1`` and ``-1``),
    so the error is folded into ``[-P/2, P/2)``. Denser arrays have ``P > 2``,
    never alias inside ``[-1, 1)``, and keep the plain difference.
    """
    diff = np.asarray(est, dtype=float) - np.asarray(true, dtype=float)
    period = 1.0 / spacing_ratio
    if period <= 2.0:
        diff = np.mod(diff + period / 2.0, period) - period / 2.0
    return diff


def grid_angles(grid_size: int) -> np.ndarray:
    """The uniform grid ``-1 + 2k/M``, ``k = 0..M-1``."""
    return -1.0 + 2.0 * np.arange(grid_size) / grid_size


def nearest_bin(theta, grid_size: int):
    """Index of the grid point closest to ``theta``, clipped to the grid."""
    idx = np.rint((np.asarray(theta, dtype=float) + 1.0) * grid_size / 2.0).astype(int)
    idx = np.clip(idx, 0, grid_size - 1)
    return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True, eq=False)
class BeamVector:
    coefficients: np.ndarray
    steer_angle: float
    aperture_class: ApertureClass
    index: int

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=complex)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        if abs(np.linalg.norm(coeffs) - 1.0) > 1e-12:
            raise DomainError("beam coefficients must have unit norm")


def half_aperture_beam(cfg: ArrayConfig, theta: float) -> np.ndarray:
    """Steering vector with the last half of the elements switched off, renormalized."""
    if cfg.num_antennas % 2:
        raise ConfigurationError("half-aperture beams need an even number of antennas")
    coeffs = steering_vector(cfg, theta)
    coeffs[cfg.num_antennas // 2:] = 0.0
    return coeffs * np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class Codebook:
    """Full- and half-aperture beams steered to the same ``M``-point grid.

    Entry ``k`` (``k < M``) is the full-aperture beam at ``-1 + 2k/M`` and
    entry ``M + k`` the half-aperture beam at the same angle.
    """

    entries: tuple
    grid_size: int
    config: ArrayConfig
    matrix: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, index: int) -> BeamVector:
        return self.entries[index]

    @property
    def steer_angles(self) -> np.ndarray:
        return np.array([b.steer_angle for b in self.entries])

    def index_of(self, aperture_class, k: int) -> int:
        aperture_class = ApertureClass.parse(aperture_class)
        if not 0 <= k < self.grid_size:
            raise IndexError(f"grid index {k} out of range")
        offset = 0 if aperture_class is ApertureClass.FULL else self.grid_size
        if offset >= len(self.entries):
            raise IndexError("codebook has no half-aperture entries")
        return offset + k

    def locate(self, index: int) -> tuple[ApertureClass, int]:
        beam = self.entries[index]
        return beam.aperture_class, index % self.grid_size

    def beams(self, indices) -> list[BeamVector]:
        return [self.entries[int(i)] for i in indices]


def build_codebook(cfg: ArrayConfig, grid_size: int, include_half: bool = True) -> Codebook:
    if grid_size < 2:
        raise ConfigurationError(f"grid_size must be at least 2, got {grid_size}")
    if include_half and cfg.num_antennas % 2:
        raise ConfigurationError(
            f"half-aperture beams need an even num_antennas, got {cfg.num_antennas}"
        )
    angles = grid_angles(grid_size)
    full = steering_vector(cfg, angles)
    blocks = [full]
    if include_half:
        half = full.copy()
        half[:, cfg.num_antennas // 2:] = 0.0
        blocks.append(half * np.sqrt(2.0))
    matrix = np.vstack(blocks)
    matrix.setflags(write=False)

    entries = []
    for index, coeffs in enumerate(matrix):
        cls = ApertureClass.FULL if index < grid_size else ApertureClass.HALF
        entries.append(BeamVector(coeffs, float(angles[index % grid_size]), cls, index))
    return Codebook(tuple(entries), grid_size, cfg, matrix)


def beam_pattern(cfg: ArrayConfig, coefficients: np.ndarray, theta) -> np.ndarray:
    """Magnitude of the array response ``|a(theta)^H f|``."""
    return np.abs(steering_vector(cfg, theta).conj() @ coefficients)


def half_power_beamwidth(cfg: ArrayConfig, coefficients: np.ndarray, resolution: int = 20001) -> float:
    """3 dB width of the main lobe, measured on a dense sweep of ``[-1, 1]``."""
    theta = np.linspace(-1.0, 1.0, resolution)
    power = beam_pattern(cfg, coefficients, theta) ** 2
    peak = int(np.argmax(power))
    above = power >= power[peak] / 2.0
    lo = peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = peak
    while hi < resolution - 1 and above[hi + 1]:
        hi += 1
    return float(theta[hi] - theta[lo])
