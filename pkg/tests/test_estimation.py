import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamtrack.array_geometry import ArrayConfig, build_codebook, grid_angles, steering_vector
from beamtrack.beam_select import pair_indices
from beamtrack.channel import Measurement, MobilityModel, PathState, observe, sample_gain
from beamtrack.estimation import (
    NULL_THRESHOLD,
    batch_grid_search,
    beam_responses,
    ml_estimate,
    projection,
    search_window,
)
from beamtrack.exceptions import DegenerateDirectionError, DomainError, EstimationFailure

CFG = ArrayConfig(32)
CB = build_codebook(CFG, 192)
GRID = grid_angles(192)


def brute_force(y, beams, theta_grid):
    """Direct residual ||(I - Q) y||^2 per angle with an explicit projector."""
    best, best_k = np.inf, None
    for k, theta in enumerate(theta_grid):
        g = np.array([np.vdot(steering_vector(CFG, theta), b.coefficients) for b in beams])
        e = np.vdot(g, g).real
        if e < NULL_THRESHOLD:
            continue
        Q = np.outer(g, g.conj()) / e
        r = np.linalg.norm(y - Q @ y) ** 2
        if r < best - 1e-10 * np.vdot(y, y).real:
            best, best_k = r, k
    return best_k, best


@given(st.floats(-1, 1), st.integers(0, 383), st.integers(0, 383))
def test_projector_algebra(theta, i, j):
    beams = [CB[i], CB[j]]
    g = beam_responses(CFG, np.column_stack([b.coefficients for b in beams]), theta)
    if np.vdot(g, g).real < NULL_THRESHOLD:
        with pytest.raises(DegenerateDirectionError):
            projection(theta, beams)
        return
    Q = projection(theta, beams)
    np.testing.assert_allclose(Q @ Q, Q, atol=1e-12)
    np.testing.assert_allclose(Q, Q.conj().T, atol=1e-12)
    assert np.trace(Q).real == pytest.approx(1.0, abs=1e-12)


def test_projector_annihilates_matched_noiseless():
    theta = 0.1
    beams = [CB[int(np.argmin(np.abs(GRID - theta)))], CB[100]]
    y = 0.7j * beam_responses(CFG, np.column_stack([b.coefficients for b in beams]), theta)
    Q = projection(theta, beams)
    assert np.linalg.norm(y - Q @ y) < 1e-14
    assert abs(Q[0, 0]) > abs(Q[1, 1])


def test_projector_null_direction():
    # full beam at grid point 96 (theta=0) has a null 6 bins away
    with pytest.raises(DegenerateDirectionError):
        projection(float(GRID[102]), [CB[96]])


def test_noiseless_on_grid_recovery():
    beta = 0.8 - 0.6j
    i, j = pair_indices(CB, 4, ("full", "full"), 96)
    m = observe(PathState(float(GRID[97]), 0.0, beta), [CB[int(i)], CB[int(j)]], 0.0, None)
    est = ml_estimate(m, CB, 192, window=(90, 102))
    assert est.bin == 97 and est.aod_hat == GRID[97]
    assert abs(est.gain_hat - beta) < 1e-10
    assert est.residual <= 1e-20 * np.vdot(m.samples, m.samples).real


def test_matches_brute_force(rng):
    for _ in range(20):
        i, j = rng.integers(0, 384, 2)
        theta = rng.uniform(-1, 1)
        m = observe(PathState(theta, 0.0, sample_gain(rng)), [CB[i], CB[j]], 0.05, rng)
        est = ml_estimate(m, CB, 192)
        k, r = brute_force(m.samples, [CB[i], CB[j]], GRID)
        assert est.bin == k
        assert est.residual == pytest.approx(r, rel=1e-9, abs=1e-12)


def test_gain_is_least_squares(rng):
    m = observe(PathState(0.3, 0.0, 1.0), [CB[120], CB[126]], 0.1, rng)
    est = ml_estimate(m, CB, 192)
    g = beam_responses(CFG, np.column_stack([CB[120].coefficients, CB[126].coefficients]), est.aod_hat)
    beta, *_ = np.linalg.lstsq(g[:, None], m.samples, rcond=None)
    assert est.gain_hat == pytest.approx(beta[0], abs=1e-12)


def test_phase_and_scale_invariance(rng):
    m = observe(PathState(-0.42, 0.0, 1.0), [CB[40], CB[236]], 0.05, rng)
    base = ml_estimate(m, CB, 192)
    rot = np.exp(1j * 0.9)
    m2 = Measurement(3.5 * rot * m.samples, m.beam_indices, m.noise_var)
    est = ml_estimate(m2, CB, 192)
    assert est.bin == base.bin
    assert est.gain_hat == pytest.approx(3.5 * rot * base.gain_hat, abs=1e-12)


def test_window_is_respected(rng):
    m = observe(PathState(0.5, 0.0, 1.0), [CB[140], CB[148]], 0.01, rng)
    est = ml_estimate(m, CB, 192, window=(10, 20))
    assert 10 <= est.bin <= 20
    assert est.window == (10, 20)


def test_bad_window():
    m = Measurement([1.0, 1.0], [0, 1], 0.1)
    for window in [(5, 4), (-1, 3), (0, 192)]:
        with pytest.raises(DomainError):
            ml_estimate(m, CB, 192, window=window)


def test_all_null_window_fails():
    # single full beam at bin 96; bins 102 and 108 are both nulls
    m = Measurement([0.1], [96], 0.1)
    with pytest.raises(EstimationFailure):
        ml_estimate(m, CB, 192, window=(102, 102))


def test_tie_breaks_to_lowest_index():
    # beam 96 is null at 102, 108, ...; a zero sample on it ties every null
    m = Measurement([0.0, 1.0], [96, 123], 0.0)
    y = np.array([0.0, 1.0])
    theta = GRID[100:115]
    G = beam_responses(CFG, np.column_stack([CB[96].coefficients, CB[123].coefficients]), theta)
    est = ml_estimate(m, CB, 192, window=(100, 114))
    zeros = [100 + k for k in range(15) if abs(G[k, 0]) ** 2 < 1e-20]
    assert zeros and est.bin == min(zeros)
    assert est.residual == pytest.approx(0.0, abs=1e-12 * np.vdot(y, y).real)


def test_search_window_rules():
    beams = [CB[96 - 5], CB[96 + 5]]  # about prev +- 0.052
    lo, hi = search_window(0.0, beams, MobilityModel(0.05), 192)
    assert GRID[lo] <= -0.2 and GRID[hi] >= 0.2
    assert lo == 96 - 20 and hi == 96 + 20
    assert search_window(0.0, beams, MobilityModel(0.0), 192) == (91, 101)
    assert search_window(0.99, [CB[189], CB[191]], MobilityModel(0.1), 192)[1] == 191
    assert search_window(0.0, beams, MobilityModel(0.05), 192, margin_sigmas=1.0) == (91, 101)


def test_windowed_equals_full_when_argmin_inside(rng):
    agree = 0
    for _ in range(1000):
        prev = rng.uniform(-0.9, 0.9)
        c = int(np.rint((prev + 1) * 96))
        i, j = pair_indices(CB, 4, ("full", "full"), c)
        beams = [CB[int(i)], CB[int(j)]]
        theta = float(np.clip(prev + 0.05 * rng.standard_normal(), -1, 0.999))
        m = observe(PathState(theta, 0.0, sample_gain(rng)), beams, 0.05, rng)
        window = search_window(prev, beams, MobilityModel(0.05), 192)
        full = ml_estimate(m, CB, 192)
        if window[0] <= full.bin <= window[1]:
            agree += 1
            assert ml_estimate(m, CB, 192, window=window).bin == full.bin
    assert agree > 0


def test_batch_search_matches_scalar(rng):
    F = np.column_stack([CB[90].coefficients, CB[290].coefficients])
    R = beam_responses(CFG, F, GRID).T
    Y = np.empty((50, 2), dtype=complex)
    bins = []
    for b in range(50):
        m = observe(PathState(rng.uniform(-1, 1), 0.0, sample_gain(rng)), [CB[90], CB[290]], 0.02, rng)
        Y[b] = m.samples
        bins.append(ml_estimate(m, CB, 192).bin)
    got, gains = batch_grid_search(Y, R)
    np.testing.assert_array_equal(got, bins)
    # per-row response tensors give the same answer
    got3, _ = batch_grid_search(Y, np.broadcast_to(R, (50, *R.shape)))
    np.testing.assert_array_equal(got3, bins)


def test_batch_search_all_null_rows():
    R = beam_responses(CFG, CB[96].coefficients[:, None], GRID).T
    bins, _ = batch_grid_search(np.ones((2, 1), dtype=complex), R, np.array([102, 0]), np.array([102, 191]))
    assert bins[0] == -1 and bins[1] >= 0


def test_efficiency_near_crlb_at_fine_grid(rng):
    """At high SNR on a fine grid the local error tracks the bound."""
    from beamtrack.crlb import crlb_curve

    K = 1536
    beams = [CB[94], CB[98]]
    F = np.column_stack([b.coefficients for b in beams])
    R = beam_responses(CFG, F, grid_angles(K)).T
    theta, nv, T = 0.004, 0.005, 4000
    y = np.exp(2j * np.pi * rng.random(T))[:, None] * beam_responses(CFG, F, theta)
    y = y + np.sqrt(nv) * (rng.standard_normal((T, 2)) + 1j * rng.standard_normal((T, 2)))
    lo, hi = search_window(0.0, beams, MobilityModel(0.0), K)
    bins, _ = batch_grid_search(y, R, np.full(T, lo), np.full(T, hi))
    mse = np.mean((grid_angles(K)[bins] - theta) ** 2)
    assert 0.8 <= mse / crlb_curve(beams, [theta], nv)[0] <= 1.3
