"""Maximum-likelihood AoD and gain estimation by projection-residual grid search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from beamtrack.array_geometry import ArrayConfig, BeamVector, grid_angles, steering_vector
from beamtrack.channel import Measurement, MobilityModel
from beamtrack.exceptions import DegenerateDirectionError, DomainError, EstimationFailure

# below this ||g(theta)||^2 the beams have a null at theta
NULL_THRESHOLD = 1e-15
# residuals this close to the minimum (relative to ||y||^2) count as ties
TIE_RTOL = 1e-10
# search window covers at least prev +- WINDOW_SIGMAS * sigma_p
WINDOW_SIGMAS = 4.0


@dataclass(frozen=True)
class AodEstimate:
    aod_hat: float
    gain_hat: complex
    residual: float
    window: tuple
    bin: int


def _array_config(beams: Sequence[BeamVector], tx_cfg: ArrayConfig | None) -> ArrayConfig:
    return tx_cfg if tx_cfg is not None else ArrayConfig(len(beams[0].coefficients))


def beam_matrix(beams: Sequence[BeamVector]) -> np.ndarray:
    return np.column_stack([b.coefficients for b in beams])


def beam_responses(cfg: ArrayConfig, F: np.ndarray, theta) -> np.ndarray:
    """``g(theta)_i = a(theta)^H f_i``; one row per angle."""
    return steering_vector(cfg, theta).conj() @ F


def projection(theta: float, beams: Sequence[BeamVector], tx_cfg: ArrayConfig | None = None) -> np.ndarray:
    """Rank-1 orthogonal projector onto the noiseless response direction ``g(theta)``."""
    cfg = _array_config(beams, tx_cfg)
    g = beam_responses(cfg, beam_matrix(beams), theta)
    energy = np.vdot(g, g).real
    if energy < NULL_THRESHOLD:
        raise DegenerateDirectionError(f"training beams have a null at theta={theta}")
    return np.outer(g, g.conj()) / energy


def _pick(residual: np.ndarray, scale) -> np.ndarray:
    """Lowest index among the bins tied with the minimum residual."""
    best = np.min(residual, axis=-1, keepdims=True)
    tied = residual <= best + TIE_RTOL * np.asarray(scale)[..., None]
    return np.argmax(tied, axis=-1)


def ml_estimate(
    m: Measurement,
    codebook,
    grid_size: int,
    window: tuple | None = None,
    tx_cfg: ArrayConfig | None = None,
) -> AodEstimate:
    """Joint ML estimate of the AoD (on the grid) and the complex gain.

    ``codebook`` is anything indexable by ``m.beam_indices`` that yields
    :class:`BeamVector` objects. ``window`` is an inclusive bin range; the
    default searches the whole grid.
    """
    beams = [codebook[i] for i in m.beam_indices]
    cfg = _array_config(beams, tx_cfg)
    lo, hi = (0, grid_size - 1) if window is None else (int(window[0]), int(window[1]))
    if not 0 <= lo <= hi < grid_size:
        raise DomainError(f"window {window} is not a nonempty range of the {grid_size}-point grid")

    theta = grid_angles(grid_size)[lo:hi + 1]
    G = beam_responses(cfg, beam_matrix(beams), theta)
    energy = np.einsum("ki,ki->k", G.conj(), G).real
    y = m.samples
    valid = energy >= NULL_THRESHOLD
    if not np.any(valid):
        raise EstimationFailure(f"every bin in window {window} is a null of the training beams")

    gains = np.where(valid, (G.conj() @ y) / np.where(valid, energy, 1.0), 0.0)
    fit_error = y[None, :] - gains[:, None] * G
    residual = np.where(valid, np.einsum("ki,ki->k", fit_error.conj(), fit_error).real, np.inf)
    k = int(_pick(residual, np.vdot(y, y).real))
    return AodEstimate(float(theta[k]), complex(gains[k]), float(residual[k]), (lo, hi), lo + k)


def search_window(
    prev_aod: float,
    beams: Sequence[BeamVector],
    model: MobilityModel,
    grid_size: int,
    margin_sigmas: float = WINDOW_SIGMAS,
) -> tuple[int, int]:
    """Bins between the two beam directions, widened to ``prev +- margin_sigmas * sigma_p``."""
    angles = [b.steer_angle for b in beams]
    lo = min(min(angles), prev_aod - margin_sigmas * model.sigma_p)
    hi = max(max(angles), prev_aod + margin_sigmas * model.sigma_p)
    scale = grid_size / 2.0
    lo_bin = int(np.floor((lo + 1.0) * scale + 1e-9))
    hi_bin = int(np.ceil((hi + 1.0) * scale - 1e-9))
    return max(lo_bin, 0), min(hi_bin, grid_size - 1)


def batch_grid_search(samples: np.ndarray, responses: np.ndarray, lo=None, hi=None):
    """Vectorized ML search over many independent measurements.

    Parameters
    ----------
    samples : (B, n) complex
    responses : (B, n, K) or (n, K) complex
        Noiseless per-beam responses ``g(theta_k)`` on the search grid.
    lo, hi : (B,) int, optional
        Inclusive window per row; bins outside are excluded.

    Returns
    -------
    bins : (B,) int
        Selected bin, or -1 where the window holds only beam nulls.
    gains : (B,) complex
    """
    energy = np.sum(np.abs(responses) ** 2, axis=-2)
    if responses.ndim == 2:
        corr = samples @ responses.conj()
        energy = np.broadcast_to(energy, corr.shape)
    else:
        corr = np.einsum("bn,bnk->bk", samples, responses.conj())
    y_energy = np.sum(np.abs(samples) ** 2, axis=-1)
    valid = energy >= NULL_THRESHOLD
    if lo is not None:
        k = np.arange(energy.shape[-1])
        valid = valid & (k >= np.asarray(lo)[:, None]) & (k <= np.asarray(hi)[:, None])
    safe = np.where(valid, energy, 1.0)
    residual = np.where(valid, np.maximum(y_energy[:, None] - np.abs(corr) ** 2 / safe, 0.0), np.inf)
    bins = _pick(residual, y_energy)
    rows = np.arange(len(bins))
    gains = corr[rows, bins] / safe[rows, bins]
    # rows whose window holds only nulls report bin -1
    bins = np.where(np.any(valid, axis=-1), bins, -1)
    return bins, gains
