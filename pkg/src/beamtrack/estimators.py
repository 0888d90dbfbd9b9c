"""Estimator-style wrappers around grid ML estimation and beam-pair selection."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from beamtrack._validation import check_angles, check_complex_array, check_positive_int
from beamtrack.array_geometry import ArrayConfig, BeamVector, aod_error, build_codebook, grid_angles, nearest_bin
from beamtrack.beam_select import DEFAULT_SIGMA_P_LIST, build_lookup_table, pair_indices
from beamtrack.estimation import batch_grid_search, beam_responses


class MLAodEstimator(BaseEstimator):
    """Grid ML estimator of the AoD for a fixed set of training beams.

    ``fit`` takes the beams (an ``N x n`` matrix or a list of
    :class:`BeamVector`); ``predict`` maps rows of received samples to AoD
    estimates on the ``grid_size``-point grid.

    Examples
    --------
    >>> from beamtrack import ArrayConfig, steering_vector
    >>> F = np.column_stack([steering_vector(ArrayConfig(8), t) for t in (-0.25, 0.25)])
    >>> est = MLAodEstimator(n_antennas=8, grid_size=16).fit(F)
    >>> y = steering_vector(ArrayConfig(8), 0.125).conj() @ F
    >>> est.predict(y[None, :])
    array([0.125])
    """

    def __init__(self, n_antennas=32, spacing_ratio=0.5, grid_size=192):
        self.n_antennas = n_antennas
        self.spacing_ratio = spacing_ratio
        self.grid_size = grid_size

    def fit(self, F, y=None):
        check_positive_int(self.grid_size, "grid_size", 2)
        if len(F) and isinstance(F[0], BeamVector):
            F = np.column_stack([b.coefficients for b in F])
        F = check_complex_array(F, name="F")
        if F.shape[0] != self.n_antennas:
            raise ValueError(f"F must have {self.n_antennas} rows (one per antenna), got {F.shape[0]}")
        cfg = ArrayConfig(self.n_antennas, self.spacing_ratio)
        self.grid_ = grid_angles(self.grid_size)
        self.responses_ = beam_responses(cfg, F, self.grid_).T
        self.n_beams_ = F.shape[1]
        return self

    def estimate(self, Y, window=None):
        """AoD estimates and least-squares gains for every row of ``Y``."""
        check_is_fitted(self, "responses_")
        Y = check_complex_array(Y, name="Y")
        if Y.shape[1] != self.n_beams_:
            raise ValueError(f"Y must have {self.n_beams_} columns, got {Y.shape[1]}")
        lo = hi = None
        if window is not None:
            lo = np.full(len(Y), int(window[0]))
            hi = np.full(len(Y), int(window[1]))
        bins, gains = batch_grid_search(Y, self.responses_, lo, hi)
        # rows whose window is all nulls have no estimate
        return np.where(bins >= 0, self.grid_[np.maximum(bins, 0)], np.nan), gains

    def predict(self, Y, window=None):
        return self.estimate(Y, window)[0]

    def score(self, Y, theta):
        """Negative mean squared AoD error."""
        theta = check_angles(theta)
        return -float(np.mean(aod_error(self.predict(Y), theta, self.spacing_ratio) ** 2))


class BeamPairSelector(BaseEstimator):
    """Offline CRLB-optimal beam-pair table with per-AoD pair lookup.

    ``fit`` runs the symmetric beam-pair search for every mobility level in
    ``sigma_p_list``; ``predict`` centres the tabulated pair on each previous
    AoD estimate and returns codebook indices, one ``(i, j)`` row per input.
    """

    def __init__(self, n_antennas=32, spacing_ratio=0.5, grid_size=192, sigma_p_list=DEFAULT_SIGMA_P_LIST):
        self.n_antennas = n_antennas
        self.spacing_ratio = spacing_ratio
        self.grid_size = grid_size
        self.sigma_p_list = sigma_p_list

    def fit(self, X=None, y=None):
        check_positive_int(self.grid_size, "grid_size", 2)
        self.codebook_ = build_codebook(ArrayConfig(self.n_antennas, self.spacing_ratio), self.grid_size)
        self.lut_ = build_lookup_table(self.codebook_, self.sigma_p_list)
        return self

    def predict(self, prev_aod, sigma_p):
        check_is_fitted(self, "lut_")
        prev_aod = check_angles(prev_aod, "prev_aod")
        separation, classes = self.lut_.entry(sigma_p)
        i, j = pair_indices(self.codebook_, separation, classes, nearest_bin(prev_aod, self.grid_size))
        return np.column_stack([i, j])

    def transform(self, prev_aod, sigma_p):
        """Beamforming matrices ``(n, N, 2)`` for the selected pairs."""
        pairs = self.predict(prev_aod, sigma_p)
        return np.stack([self.codebook_.matrix[pairs[:, 0]], self.codebook_.matrix[pairs[:, 1]]], axis=-1)
