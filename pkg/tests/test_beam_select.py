import logging

import numpy as np
import pytest

from beamtrack.array_geometry import ApertureClass, ArrayConfig, build_codebook, grid_angles
from beamtrack.beam_select import (
    BeamPairChoice,
    LookupTable,
    PairEvaluator,
    build_lookup_table,
    lut_to_pair,
    pair_indices,
    select_pair_exhaustive,
    select_pair_symmetric,
    symmetric_candidates,
)
from beamtrack.channel import MobilityModel, discretize_aod_prior
from beamtrack.crlb import average_crlb
from beamtrack.exceptions import ConfigurationError

FULL, HALF = ApertureClass.FULL, ApertureClass.HALF
SMALL = build_codebook(ArrayConfig(8), 24)
BIG = build_codebook(ArrayConfig(32), 192)


def _snap(cb, prev):
    return float(grid_angles(cb.grid_size)[int(np.rint((prev + 1) * cb.grid_size / 2))])


def test_choice_invariants():
    with pytest.raises(ValueError):
        BeamPairChoice(3, 3, 0, (FULL, FULL), 1.0)


def test_exhaustive_beats_every_pair_by_direct_evaluation():
    prev, model = 0.1, MobilityModel(0.1)
    choice = select_pair_exhaustive(SMALL, prev, model)
    prior = discretize_aod_prior(_snap(SMALL, prev), model, 24)
    best = np.inf
    for i in range(len(SMALL)):
        for j in range(i + 1, len(SMALL)):
            try:
                best = min(best, average_crlb((SMALL[i], SMALL[j]), prior))
            except Exception:
                continue
    assert choice.avg_crlb == pytest.approx(best, rel=1e-12)


def test_order_invariance():
    prior = discretize_aod_prior(0.0, MobilityModel(0.05), 192)
    ev = PairEvaluator(BIG, prior)
    np.testing.assert_array_equal(ev([94, 10, 200], [98, 300, 5]), ev([98, 300, 5], [94, 10, 200]))


def test_exhaustive_full_scale_is_symmetric():
    choice = select_pair_exhaustive(BIG, 0.0, MobilityModel(0.05))
    a, b = BIG[choice.index_i].steer_angle, BIG[choice.index_j].steer_angle
    assert abs((a + b) / 2) <= 2 / 192 + 1e-12


def test_symmetric_matches_exhaustive_on_small_instance(rng):
    for _ in range(10):
        prev = rng.uniform(-0.6, 0.6)
        model = MobilityModel(rng.uniform(0.02, 0.3))
        ex = select_pair_exhaustive(SMALL, prev, model)
        sy = select_pair_symmetric(SMALL, prev, model)
        assert sy.avg_crlb == pytest.approx(ex.avg_crlb, rel=1e-9)


def test_symmetric_search_size():
    cands = list(symmetric_candidates(BIG, 96))
    assert len(cands) <= 4 * 192 // 2
    prior = discretize_aod_prior(0.0, MobilityModel(0.05), 192)
    ev = PairEvaluator(BIG, prior)
    ev([c[3] for c in cands], [c[4] for c in cands])
    assert ev.evaluations == len(cands)


def test_symmetric_handles_edge():
    choice = select_pair_symmetric(BIG, 0.999, MobilityModel(0.05))
    assert 0 <= choice.index_i < len(BIG) and 0 <= choice.index_j < len(BIG)
    assert choice.index_i != choice.index_j


def test_selection_certificate(rng):
    for _ in range(20):
        prev = rng.uniform(-0.8, 0.8)
        model = MobilityModel(rng.uniform(0.01, 0.2))
        choice = select_pair_symmetric(BIG, prev, model)
        prior = discretize_aod_prior(_snap(BIG, prev), model, 192)
        ev = PairEvaluator(BIG, prior)
        ii = rng.integers(0, len(BIG), 200)
        jj = (ii + rng.integers(1, len(BIG), 200)) % len(BIG)
        assert np.all(ev(ii, jj) >= choice.avg_crlb * (1 - 1e-12))


def test_lut_round_trip_at_zero():
    lut = build_lookup_table(BIG, report_monotonicity=False)
    assert len(lut) == 5
    for sigma in lut.sigma_p_list:
        direct = select_pair_symmetric(BIG, 0.0, MobilityModel(sigma))
        via = lut_to_pair(lut, sigma, 0.0, BIG)
        assert (via.index_i, via.index_j) == (direct.index_i, direct.index_j)
        assert via.avg_crlb == pytest.approx(direct.avg_crlb)


def test_lut_translation_near_invariance():
    lut = build_lookup_table(BIG, (0.05,))
    via = lut_to_pair(lut, 0.05, 0.3, BIG)
    direct = select_pair_symmetric(BIG, 0.3, MobilityModel(0.05))
    assert via.avg_crlb <= 1.05 * direct.avg_crlb


def test_lut_monotonicity_diagnostic(caplog):
    with caplog.at_level(logging.WARNING):
        lut = build_lookup_table(BIG)
    assert lut.separation_is_monotone() == ("not monotone" not in caplog.text)


def test_lut_entry_rules():
    lut = LookupTable((0.01, 0.05), (6, 4), ((FULL, FULL), (HALF, FULL)))
    assert lut.entry(0.05) == (4, (HALF, FULL))
    assert lut.entry(0.04) == (4, (HALF, FULL))
    assert lut.entry(0.03) == (6, (FULL, FULL))  # equidistant: smaller sigma_p
    with pytest.raises(ConfigurationError):
        LookupTable((), (), ()).entry(0.1)
    with pytest.raises(ConfigurationError):
        LookupTable((0.05, 0.01), (1, 2), ((FULL, FULL),) * 2)


def test_lut_clamps_at_edge():
    lut = LookupTable((0.05,), (4,), ((FULL, HALF),))
    choice = lut_to_pair(lut, 0.05, 0.99, BIG)
    assert BIG.locate(choice.index_i) == (FULL, 189)
    assert BIG.locate(choice.index_j) == (HALF, 191)


def test_pair_indices_vectorized():
    lo, hi = pair_indices(BIG, 5, (FULL, HALF), np.array([0, 96, 191]))
    np.testing.assert_array_equal(lo, [0, 93, 188])
    np.testing.assert_array_equal(hi, [192 + 2, 192 + 98, 192 + 191])


def test_lut_file_round_trip(tmp_path):
    lut = build_lookup_table(SMALL, (0.02, 0.1), report_monotonicity=False)
    path = tmp_path / "lut.csv"
    lut.save(path)
    again = LookupTable.load(path)
    assert again == lut
    lut.save(tmp_path / "b.csv")
    assert path.read_bytes() == (tmp_path / "b.csv").read_bytes()
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ConfigurationError):
        LookupTable.load(tmp_path / "bad.csv")


def test_determinism():
    a = select_pair_symmetric(BIG, 0.2, MobilityModel(0.1))
    b = select_pair_symmetric(BIG, 0.2, MobilityModel(0.1))
    assert a == b
