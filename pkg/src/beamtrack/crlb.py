"""Cramer-Rao lower bound on the AoD under joint (gain, AoD) estimation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from beamtrack.array_geometry import ArrayConfig, BeamVector, steering_derivative, steering_vector
from beamtrack.channel import AodPrior
from beamtrack.estimation import NULL_THRESHOLD, beam_matrix
from beamtrack.exceptions import DomainError, InformationDeficitError, SelectionInfeasibleError

# bracket below this fraction of Q means the pair carries no angle information
DEFICIT_RTOL = 1e-10
# deficient bins cost this multiple of the worst finite bin in the same average
DEFICIT_PENALTY = 1e3


@dataclass(frozen=True)
class CrlbInputs:
    gain: complex
    noise_var: float
    theta: float
    beams: tuple

    def __post_init__(self):
        if not self.noise_var > 0:
            raise DomainError("noise_var must be positive")
        if not abs(self.gain) > 0:
            raise DomainError("gain must be nonzero")
        object.__setattr__(self, "beams", tuple(self.beams))


def fisher_terms(g, dg, gain_power: float, noise_var: float):
    """The Q, P and C terms of the bound from stacked beam responses.

    ``g`` and ``dg`` hold ``a(theta)^H f_i`` and ``(da/dtheta)^H f_i`` along
    the last axis-but-one (beam axis ``-2``), any leading/trailing axes
    broadcast.
    """
    energy = np.sum(np.abs(g) ** 2, axis=-2)
    q = gain_power * np.sum(np.abs(dg) ** 2, axis=-2) / noise_var
    p = gain_power * np.sum(np.conj(g) * dg, axis=-2) / (2.0 * noise_var)
    with np.errstate(divide="ignore"):
        c = 2.0 * noise_var / (gain_power * energy)
    return q, p, c, energy


def crlb_from_responses(g, dg, gain_power: float, noise_var: float) -> np.ndarray:
    """Vectorized bound; deficient entries come back as ``inf``.

    ``Q - 2 Re(P C P*)`` equals the information in the part of ``dg``
    orthogonal to ``g``; computing that residual directly avoids the
    cancellation of the difference form near deficient angles.
    """
    energy = np.sum(np.abs(g) ** 2, axis=-2)
    q = np.sum(np.abs(dg) ** 2, axis=-2)
    ok = energy >= NULL_THRESHOLD
    coef = np.sum(np.conj(g) * dg, axis=-2) / np.where(ok, energy, 1.0)
    resid = np.sum(np.abs(dg - np.expand_dims(coef, -2) * g) ** 2, axis=-2)
    ok &= resid > DEFICIT_RTOL * q
    bracket = gain_power * resid / noise_var
    with np.errstate(divide="ignore"):
        return np.where(ok, 1.0 / np.where(ok, bracket, 1.0), np.inf)


def _responses(cfg: ArrayConfig, F: np.ndarray, theta):
    g = steering_vector(cfg, theta).conj() @ F
    dg = steering_derivative(cfg, theta).conj() @ F
    # beams along axis -2, angles along -1
    return np.swapaxes(np.atleast_2d(g), -1, -2), np.swapaxes(np.atleast_2d(dg), -1, -2)


def crlb_aod(inp: CrlbInputs, tx_cfg: ArrayConfig | None = None) -> float:
    cfg = tx_cfg or ArrayConfig(len(inp.beams[0].coefficients))
    g, dg = _responses(cfg, beam_matrix(inp.beams), np.array([inp.theta]))
    value = float(crlb_from_responses(g, dg, abs(inp.gain) ** 2, inp.noise_var)[0])
    if not np.isfinite(value):
        raise InformationDeficitError(f"beam pair carries no AoD information at theta={inp.theta}")
    return value


def crlb_curve(
    beams: Sequence[BeamVector],
    theta,
    noise_var: float,
    gain_power: float = 1.0,
    tx_cfg: ArrayConfig | None = None,
) -> np.ndarray:
    """Bound at each angle in ``theta``; ``inf`` where the pair is deficient."""
    cfg = tx_cfg or ArrayConfig(len(beams[0].coefficients))
    g, dg = _responses(cfg, beam_matrix(beams), np.asarray(theta, dtype=float))
    return crlb_from_responses(g, dg, gain_power, noise_var)


def penalized_average(curves: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Prior-weighted average along the last axis with the deficient-bin penalty.

    Returns ``inf`` for rows where every bin is deficient.
    """
    finite = np.isfinite(curves)
    worst = np.max(np.where(finite, curves, -np.inf), axis=-1, keepdims=True)
    filled = np.where(finite, curves, DEFICIT_PENALTY * worst)
    avg = filled @ mass
    return np.where(np.any(finite, axis=-1), avg, np.inf)


def average_crlb(
    beams: Sequence[BeamVector],
    prior: AodPrior,
    gain_power: float = 1.0,
    noise_var: float = 1.0,
    tx_cfg: ArrayConfig | None = None,
) -> float:
    """Average of the bound over a discrete AoD prior."""
    support = prior.support()
    curve = crlb_curve(beams, prior.grid[support], noise_var, gain_power, tx_cfg)
    value = float(penalized_average(curve, prior.mass[support]))
    if not np.isfinite(value):
        raise SelectionInfeasibleError("beam pair is deficient on the whole prior support")
    return value


def write_crlb_csv(path, theta, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta", "crlb"])
        for t, v in zip(theta, values):
            writer.writerow([repr(float(t)), repr(float(v))])
