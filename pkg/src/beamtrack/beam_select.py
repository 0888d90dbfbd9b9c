"""Beam-pair selection by minimum prior-averaged CRLB, and the offline lookup table."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from beamtrack.array_geometry import ApertureClass, Codebook, grid_angles, nearest_bin, steering_derivative, steering_vector
from beamtrack.channel import AodPrior, MobilityModel, discretize_aod_prior
from beamtrack.crlb import crlb_from_responses, penalized_average
from beamtrack.exceptions import ConfigurationError, SelectionInfeasibleError

log = logging.getLogger(__name__)

DEFAULT_SIGMA_P_LIST = (0.01, 0.02, 0.05, 0.1, 0.2)
CLASS_PAIRS = tuple(product((ApertureClass.FULL, ApertureClass.HALF), repeat=2))
# pairs per vectorized chunk in the exhaustive search
_CHUNK = 4096


@dataclass(frozen=True)
class BeamPairChoice:
    index_i: int
    index_j: int
    separation_bins: int
    aperture_pair: tuple
    avg_crlb: float

    def __post_init__(self):
        if self.index_i == self.index_j:
            raise ValueError("a beam pair needs two distinct codebook entries")

    @property
    def indices(self) -> tuple[int, int]:
        return self.index_i, self.index_j


class PairEvaluator:
    """Average CRLB of arbitrary codebook pairs under one fixed prior.

    Beam responses on the prior support are computed once, so evaluating
    many pairs costs only a few array reductions per pair.
    """

    def __init__(self, codebook: Codebook, prior: AodPrior, noise_var: float = 1.0, gain_power: float = 1.0):
        self.codebook = codebook
        support = prior.support()
        self.mass = prior.mass[support]
        theta = prior.grid[support]
        cfg = codebook.config
        C = codebook.matrix.T
        self._g = (steering_vector(cfg, theta).conj() @ C).T
        self._dg = (steering_derivative(cfg, theta).conj() @ C).T
        self.noise_var = noise_var
        self.gain_power = gain_power
        self.evaluations = 0

    def __call__(self, ii, jj) -> np.ndarray:
        ii = np.atleast_1d(np.asarray(ii, dtype=int))
        jj = np.atleast_1d(np.asarray(jj, dtype=int))
        self.evaluations += len(ii)
        g = np.stack([self._g[ii], self._g[jj]], axis=-2)
        dg = np.stack([self._dg[ii], self._dg[jj]], axis=-2)
        curves = crlb_from_responses(g, dg, self.gain_power, self.noise_var)
        with np.errstate(invalid="ignore"):
            return penalized_average(curves, self.mass)


def _prior_at(codebook: Codebook, prev_aod: float, model: MobilityModel) -> tuple[int, AodPrior]:
    center = nearest_bin(prev_aod, codebook.grid_size)
    theta_c = float(grid_angles(codebook.grid_size)[center])
    return center, discretize_aod_prior(theta_c, model, codebook.grid_size)


def _choice(codebook: Codebook, i: int, j: int, value: float) -> BeamPairChoice:
    (ci, ki), (cj, kj) = codebook.locate(i), codebook.locate(j)
    if kj < ki or (kj == ki and j < i):
        i, j, ci, cj, ki, kj = j, i, cj, ci, kj, ki
    return BeamPairChoice(int(i), int(j), int(kj - ki), (ci, cj), float(value))


def select_pair_exhaustive(codebook: Codebook, prev_aod: float, model: MobilityModel, noise_var: float = 1.0) -> BeamPairChoice:
    """Global minimum of the average CRLB over all unordered codebook pairs."""
    _, prior = _prior_at(codebook, prev_aod, model)
    evaluate = PairEvaluator(codebook, prior, noise_var)
    ii, jj = np.triu_indices(len(codebook), k=1)
    values = np.concatenate([evaluate(ii[s:s + _CHUNK], jj[s:s + _CHUNK]) for s in range(0, len(ii), _CHUNK)])
    best = int(np.argmin(values))
    if not np.isfinite(values[best]):
        raise SelectionInfeasibleError("every beam pair is deficient on the prior support")
    return _choice(codebook, ii[best], jj[best], values[best])


def symmetric_candidates(codebook: Codebook, center: int):
    """Pairs straddling ``center`` for every separation and class combination.

    Separation ``s`` runs over ``0..M/2 - 1`` bins with the lower beam at
    ``center - ceil(s/2)``; for odd ``s`` the mirrored placement has the same
    average CRLB by symmetry, so one of the two suffices. Yields
    ``(separation, class_lo, class_hi, index_lo, index_hi)``; beams beyond
    the grid edges are clamped onto the edge bin.
    """
    M = codebook.grid_size
    classes = {b.aperture_class for b in codebook.entries}
    for s in range(0, M // 2):
        lo = min(max(center - (s + 1) // 2, 0), M - 1)
        hi = min(max(center + s // 2, 0), M - 1)
        for cl_lo, cl_hi in CLASS_PAIRS:
            if cl_lo not in classes or cl_hi not in classes:
                continue
            i, j = codebook.index_of(cl_lo, lo), codebook.index_of(cl_hi, hi)
            if i != j:
                yield s, cl_lo, cl_hi, i, j


def select_pair_symmetric(codebook: Codebook, prev_aod: float, model: MobilityModel, noise_var: float = 1.0) -> BeamPairChoice:
    """One-dimensional search over pairs placed symmetrically about the previous AoD."""
    center, prior = _prior_at(codebook, prev_aod, model)
    evaluate = PairEvaluator(codebook, prior, noise_var)
    cands = list(symmetric_candidates(codebook, center))
    values = evaluate([c[3] for c in cands], [c[4] for c in cands])
    best = int(np.argmin(values))
    if not np.isfinite(values[best]):
        raise SelectionInfeasibleError("every symmetric beam pair is deficient on the prior support")
    _, cl_lo, cl_hi, i, j = cands[best]
    return BeamPairChoice(i, j, codebook.locate(j)[1] - codebook.locate(i)[1], (cl_lo, cl_hi), float(values[best]))


@dataclass(frozen=True)
class LookupTable:
    """Optimal pair geometry per mobility level, tabulated at an interior AoD."""

    sigma_p_list: tuple
    separations: tuple
    aperture_pairs: tuple
    grid_size: int | None = None
    num_antennas: int | None = None

    def __post_init__(self):
        n = len(self.sigma_p_list)
        if len(self.separations) != n or len(self.aperture_pairs) != n:
            raise ConfigurationError("lookup table columns have different lengths")
        if list(self.sigma_p_list) != sorted(self.sigma_p_list):
            raise ConfigurationError("sigma_p_list must be ascending")

    def __len__(self):
        return len(self.sigma_p_list)

    def entry(self, sigma_p: float) -> tuple[int, tuple]:
        """Nearest tabulated entry; equidistant picks the smaller sigma_p."""
        if not len(self):
            raise ConfigurationError("lookup table is empty")
        dist = np.abs(np.asarray(self.sigma_p_list, dtype=float) - sigma_p)
        k = int(np.flatnonzero(dist <= dist.min() * (1 + 1e-12) + 1e-15)[0])
        return self.separations[k], self.aperture_pairs[k]

    def separation_is_monotone(self) -> bool:
        return all(a <= b for a, b in zip(self.separations, self.separations[1:]))

    def save(self, path) -> None:
        lines = []
        if self.grid_size is not None:
            lines.append(f"# grid_size={self.grid_size}")
        if self.num_antennas is not None:
            lines.append(f"# num_antennas={self.num_antennas}")
        lines.append("sigma_p,separation_bins,class_i,class_j")
        for s, sep, (ci, cj) in zip(self.sigma_p_list, self.separations, self.aperture_pairs):
            lines.append(f"{s!r},{sep},{ci.value},{cj.value}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "LookupTable":
        meta, rows = {}, []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = int(value)
                continue
            rows.append(line.split(","))
        if not rows or rows[0] != ["sigma_p", "separation_bins", "class_i", "class_j"]:
            raise ConfigurationError(f"{path}: missing or malformed lookup table header")
        body = rows[1:]
        return cls(
            tuple(float(r[0]) for r in body),
            tuple(int(r[1]) for r in body),
            tuple((ApertureClass.parse(r[2]), ApertureClass.parse(r[3])) for r in body),
            meta.get("grid_size"),
            meta.get("num_antennas"),
        )


def build_lookup_table(
    codebook: Codebook,
    sigma_p_list=DEFAULT_SIGMA_P_LIST,
    noise_var: float = 1.0,
    report_monotonicity: bool = True,
) -> LookupTable:
    sigma_p_list = tuple(sorted(float(s) for s in sigma_p_list))
    seps, classes = [], []
    for sigma_p in sigma_p_list:
        choice = select_pair_symmetric(codebook, 0.0, MobilityModel(sigma_p), noise_var)
        seps.append(choice.separation_bins)
        classes.append(choice.aperture_pair)
    lut = LookupTable(sigma_p_list, tuple(seps), tuple(classes), codebook.grid_size, codebook.config.num_antennas)
    if report_monotonicity and not lut.separation_is_monotone():
        log.warning("optimal separation is not monotone in sigma_p: %s", dict(zip(sigma_p_list, seps)))
    return lut


def pair_indices(codebook: Codebook, separation: int, aperture_pair, centers):
    """Codebook indices of the pair centred on grid bins ``centers`` (vectorized)."""
    M = codebook.grid_size
    centers = np.asarray(centers, dtype=int)
    lo = np.clip(centers - (separation + 1) // 2, 0, M - 1)
    hi = np.clip(centers + separation // 2, 0, M - 1)
    cl_lo, cl_hi = aperture_pair
    off_lo = 0 if cl_lo is ApertureClass.FULL else M
    off_hi = 0 if cl_hi is ApertureClass.FULL else M
    return lo + off_lo, hi + off_hi


def lut_to_pair(
    lut: LookupTable,
    sigma_p: float,
    prev_aod: float,
    codebook: Codebook,
    noise_var: float = 1.0,
) -> BeamPairChoice:
    separation, aperture_pair = lut.entry(sigma_p)
    i, j = pair_indices(codebook, separation, aperture_pair, nearest_bin(prev_aod, codebook.grid_size))
    i, j = int(i), int(j)
    _, prior = _prior_at(codebook, prev_aod, MobilityModel(sigma_p))
    value = float(PairEvaluator(codebook, prior, noise_var)(i, j)[0])
    return BeamPairChoice(i, j, codebook.locate(j)[1] - codebook.locate(i)[1], tuple(aperture_pair), value)
