"""Closed-loop Monte-Carlo simulation of beam tracking and its baselines.

Every trial draws its randomness (AoD/AoA trajectory, gains, noise) from a
generator seeded by ``(seed, trial_index)``. All schemes and SNRs in one run
reuse those draws, so scheme comparisons use common random numbers and the
results do not depend on batching or thread count.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from beamtrack.array_geometry import (
    ApertureClass,
    ArrayConfig,
    aod_error,
    BeamVector,
    build_codebook,
    grid_angles,
    nearest_bin,
    steering_vector,
)
from beamtrack.beam_select import DEFAULT_SIGMA_P_LIST, LookupTable, build_lookup_table, pair_indices
from beamtrack.channel import (
    MobilityModel,
    PathState,
    observe,
    reflect_into_range,
    sample_gain,
    snr_db_to_noise_var,
)
from beamtrack.estimation import WINDOW_SIGMAS, AodEstimate, batch_grid_search, beam_responses, ml_estimate
from beamtrack.exceptions import ConfigurationError

log = logging.getLogger(__name__)

PROPOSED = "proposed"
BEAM_CYCLING = "beam_cycling"
FIXED_PAIR = "fixed_pair"
# bytes of noise draws held per batch
_BATCH_BYTES = 64 * 2**20


@dataclass(frozen=True)
class Scheme:
    kind: str
    param: int | None = None

    def __post_init__(self):
        if self.kind not in (PROPOSED, BEAM_CYCLING, FIXED_PAIR):
            raise ConfigurationError(f"unknown scheme {self.kind!r}")
        if self.kind != PROPOSED and (self.param is None or self.param < 1):
            raise ConfigurationError(f"scheme {self.kind} needs a positive integer parameter")

    @classmethod
    def parse(cls, text: "str | Scheme") -> "Scheme":
        if isinstance(text, Scheme):
            return text
        kind, _, param = str(text).strip().lower().partition(":")
        try:
            return cls(kind, int(param) if param else None)
        except ValueError:
            raise ConfigurationError(f"malformed scheme {text!r}") from None

    @property
    def name(self) -> str:
        return self.kind if self.param is None else f"{self.kind}:{self.param}"

    def beams_per_cycle(self) -> int:
        return {PROPOSED: 2, FIXED_PAIR: 2}.get(self.kind, self.param)


DEFAULT_SCHEMES = (Scheme(PROPOSED), Scheme(BEAM_CYCLING, 32), Scheme(FIXED_PAIR, 5))


@dataclass(frozen=True)
class SimConfig:
    n_tx: int = 32
    n_rx: int = 32
    spacing_ratio: float = 0.5
    grid_size: int = 192
    estimation_grid_size: int | None = None
    sigma_p: float = 0.05
    snr_db_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    horizon: int = 100
    trials: int = 1000
    schemes: tuple = DEFAULT_SCHEMES
    seed: int = 0
    warmup: int = 5
    feedback_delay: int = 1
    cold_start_beams: int = 32
    fixed_pair_aperture: str = "full"
    on_grid: bool = False
    window_sigmas: float = WINDOW_SIGMAS
    sigma_p_list: tuple = DEFAULT_SIGMA_P_LIST
    lut: LookupTable | None = field(default=None, compare=False)
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(Scheme.parse(s) for s in self.schemes))
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        if self.horizon < 1 or self.trials < 1:
            raise ConfigurationError("horizon and trials must be at least 1")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigurationError("warmup must lie in [0, horizon)")
        if self.feedback_delay < 0:
            raise ConfigurationError("feedback_delay must be nonnegative")
        if self.sigma_p < 0:
            raise ConfigurationError("sigma_p must be nonnegative")
        if not self.window_sigmas >= 0:
            raise ConfigurationError("window_sigmas must be nonnegative")
        ApertureClass.parse(self.fixed_pair_aperture)

    @property
    def est_grid_size(self) -> int:
        return self.estimation_grid_size or self.grid_size

    @property
    def noise_width(self) -> int:
        """Noise samples drawn per cycle; wide enough for every scheme in the run."""
        widths = [self.cold_start_beams, 2]
        widths += [s.param for s in self.schemes if s.kind == BEAM_CYCLING]
        return max(widths)


@dataclass
class TrackingTrace:
    scheme: str
    true_aod: np.ndarray
    est_aod: np.ndarray
    oow: np.ndarray
    beam_i: np.ndarray
    beam_j: np.ndarray
    spacing_ratio: float = 0.5

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(aod_error(self.est_aod, self.true_aod, self.spacing_ratio))

    def __len__(self):
        return len(self.true_aod)

    @property
    def records(self):
        return [
            (t, float(a), float(e), float(d), bool(o), int(i), int(j))
            for t, (a, e, d, o, i, j) in enumerate(
                zip(self.true_aod, self.est_aod, self.abs_err, self.oow, self.beam_i, self.beam_j)
            )
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "true_aod", "est_aod", "abs_err", "oow_flag", "beam_i", "beam_j"])
            for t, a, e, d, o, i, j in self.records:
                w.writerow([t, repr(a), repr(e), repr(d), int(o), i, j])


@dataclass(frozen=True)
class MseRow:
    scheme: str
    snr_db: float
    sigma_p: float
    mse: float
    trials: int
    beams_per_cycle: int


@dataclass
class MseReport:
    rows: list

    def lookup(self, scheme, snr_db: float) -> MseRow:
        name = Scheme.parse(scheme).name
        for row in self.rows:
            if row.scheme == name and row.snr_db == float(snr_db):
                return row
        raise KeyError((name, snr_db))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "snr_db", "sigma_p", "mse", "trials", "beams_per_cycle"])
            for r in self.rows:
                w.writerow([r.scheme, repr(r.snr_db), repr(r.sigma_p), repr(r.mse), r.trials, r.beams_per_cycle])


# -- randomness -------------------------------------------------------------


@dataclass
class TrialDraws:
    """Random inputs of a set of trials, stacked along axis 0."""

    aod: np.ndarray  # (B, H)
    aoa: np.ndarray  # (B, H)
    gain: np.ndarray  # (B, H) complex
    noise: np.ndarray  # (B, H, W) complex, unit per-component variance


def _walk(start: float, steps: np.ndarray, sigma_p: float, grid_size: int | None) -> np.ndarray:
    path = np.empty(len(steps) + 1)
    path[0] = start if grid_size is None else grid_angles(grid_size)[nearest_bin(start, grid_size)]
    for t, z in enumerate(steps, 1):
        nxt = reflect_into_range(path[t - 1] + sigma_p * z)
        path[t] = nxt if grid_size is None else grid_angles(grid_size)[nearest_bin(nxt, grid_size)]
    return path


def draw_trial(rng: np.random.Generator, cfg: SimConfig, width: int | None = None) -> TrialDraws:
    """Random inputs of one trial, consumed from ``rng`` in a fixed order.

    Noise is drawn last with beam as the slowest axis, so a wider draw only
    appends beams and leaves every other value unchanged.
    """
    H = cfg.horizon
    W = width or cfg.noise_width
    snap = cfg.est_grid_size if cfg.on_grid else None
    starts = rng.uniform(-1.0, 1.0, size=2)
    steps = rng.standard_normal((2, H - 1))
    aod = _walk(starts[0], steps[0], cfg.sigma_p, snap)
    aoa = _walk(starts[1], steps[1], cfg.sigma_p, None)
    gain = sample_gain(rng, H)
    z = rng.standard_normal((W, 2, H))
    noise = (z[:, 0, :] + 1j * z[:, 1, :]).T
    return TrialDraws(aod[None], aoa[None], gain[None], noise[None])


def draw_trials(cfg: SimConfig, trial_indices) -> TrialDraws:
    draws = [draw_trial(np.random.default_rng([cfg.seed, int(k)]), cfg) for k in trial_indices]
    return TrialDraws(*(np.concatenate([getattr(d, f) for d in draws]) for f in ("aod", "aoa", "gain", "noise")))


# -- simulation engine -------------------------------------------------------


def cycling_beams(cfg: ArrayConfig, n_beams: int) -> list[BeamVector]:
    """``n_beams`` full-aperture beams at uniformly spaced directions."""
    angles = grid_angles(n_beams)
    return [BeamVector(steering_vector(cfg, a), float(a), ApertureClass.FULL, k) for k, a in enumerate(angles)]


class _Engine:
    """Precomputed tables shared by all batches of one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.tx = ArrayConfig(cfg.n_tx, cfg.spacing_ratio)
        self.codebook = build_codebook(self.tx, cfg.grid_size)
        self.K = cfg.est_grid_size
        self.theta = grid_angles(self.K)
        # (beams, K) responses a(theta_k)^H f_b of every codebook entry
        self.table = beam_responses(self.tx, self.codebook.matrix.T, self.theta).T
        self._cycling = {}
        self.delay = cfg.feedback_delay
        self.sigma_eff = cfg.sigma_p * np.sqrt(max(self.delay, 1))
        self.lut_entry = self._lut_entry() if any(s.kind == PROPOSED for s in cfg.schemes) else None

    def _lut_entry(self):
        cfg = self.cfg
        lut = cfg.lut if cfg.lut is not None else build_lookup_table(self.codebook, cfg.sigma_p_list, report_monotonicity=False)
        return lut.entry(self.sigma_eff)

    def cycling(self, n: int):
        if n not in self._cycling:
            beams = cycling_beams(self.tx, n)
            F = np.column_stack([b.coefficients for b in beams])
            self._cycling[n] = (F, beam_responses(self.tx, F, self.theta).T)
        return self._cycling[n]

    def _cycle_full(self, n, aod, gain, noise, scale):
        F, resp = self.cycling(n)
        y = gain[:, None] * (steering_vector(self.tx, aod).conj() @ F) + scale * noise[:, :n]
        bins, _ = batch_grid_search(y, resp)
        return bins

    def _cycle_pair(self, ii, jj, lo, hi, aod, gain, noise, scale):
        C = self.codebook.matrix
        a = steering_vector(self.tx, aod).conj()
        g_true = np.stack([np.einsum("bn,bn->b", a, C[ii]), np.einsum("bn,bn->b", a, C[jj])], axis=1)
        y = gain[:, None] * g_true + scale * noise[:, :2]
        resp = np.stack([self.table[ii], self.table[jj]], axis=1)
        bins, _ = batch_grid_search(y, resp, lo, hi)
        return bins

    def _window(self, prev, ii, jj, sigma):
        steer = grid_angles(self.cfg.grid_size)
        M = self.cfg.grid_size
        lo_a = np.minimum(np.minimum(steer[ii % M], steer[jj % M]), prev - self.cfg.window_sigmas * sigma)
        hi_a = np.maximum(np.maximum(steer[ii % M], steer[jj % M]), prev + self.cfg.window_sigmas * sigma)
        lo = np.floor((lo_a + 1.0) * self.K / 2.0 + 1e-9).astype(int)
        hi = np.ceil((hi_a + 1.0) * self.K / 2.0 - 1e-9).astype(int)
        return np.clip(lo, 0, self.K - 1), np.clip(hi, 0, self.K - 1)

    def run(self, scheme: Scheme, draws: TrialDraws, noise_var: float):
        """Simulate one scheme on a batch; returns ``(est, oow, beam_i, beam_j)``."""
        cfg = self.cfg
        B, H = draws.aod.shape
        scale = np.sqrt(noise_var)
        est = np.empty((B, H))
        oow = np.zeros((B, H), dtype=bool)
        bi = np.full((B, H), -1)
        bj = np.full((B, H), -1)
        half_bin = 1.0 / self.K

        for t in range(H):
            aod, gain, noise = draws.aod[:, t], draws.gain[:, t], draws.noise[:, t]
            if scheme.kind == BEAM_CYCLING or t == 0:
                n = scheme.param if scheme.kind == BEAM_CYCLING else cfg.cold_start_beams
                est[:, t] = self.theta[self._cycle_full(n, aod, gain, noise, scale)]
                continue

            if self.delay == 0:
                prev = draws.aod[:, t - 1]
            else:
                prev = est[:, max(t - self.delay, 0)]
            centers = nearest_bin(prev, cfg.grid_size)
            if scheme.kind == PROPOSED:
                sep, classes = self.lut_entry
                ii, jj = pair_indices(self.codebook, sep, classes, centers)
                sigma = self.sigma_eff
            else:
                cls = ApertureClass.parse(cfg.fixed_pair_aperture)
                off = 0 if cls is ApertureClass.FULL else cfg.grid_size
                ii = np.clip(centers - scheme.param, 0, cfg.grid_size - 1) + off
                jj = np.clip(centers + scheme.param, 0, cfg.grid_size - 1) + off
                sigma = cfg.sigma_p
            lo, hi = self._window(prev, ii, jj, sigma)
            bins = self._cycle_pair(ii, jj, lo, hi, aod, gain, noise, scale)
            est[:, t] = np.where(bins >= 0, self.theta[np.maximum(bins, 0)], prev)
            oow[:, t] = (aod < self.theta[lo] - half_bin) | (aod >= self.theta[hi] + half_bin)
            bi[:, t], bj[:, t] = ii, jj
        return est, oow, bi, bj


def _threads(cfg: SimConfig) -> int:
    env = os.environ.get("BEAMTRACK_THREADS", "").strip()
    try:
        cap = int(env) if env else 0
    except ValueError:
        raise ConfigurationError(f"BEAMTRACK_THREADS must be an integer, got {env!r}") from None
    return max(1, cfg.threads or cap or os.cpu_count() or 1)


def _batches(cfg: SimConfig):
    per_trial = cfg.noise_width * cfg.horizon * 16
    size = max(1, min(cfg.trials, _BATCH_BYTES // per_trial))
    return [range(s, min(s + size, cfg.trials)) for s in range(0, cfg.trials, size)]


def _trace(scheme: Scheme, draws: TrialDraws, out, row: int = 0, spacing: float = 0.5) -> TrackingTrace:
    est, oow, bi, bj = out
    return TrackingTrace(scheme.name, draws.aod[row].copy(), est[row], oow[row], bi[row], bj[row], spacing)


def _scheme_of(cfg: SimConfig, kinds, scheme) -> Scheme:
    if scheme is not None:
        scheme = Scheme.parse(scheme)
    else:
        matching = [s for s in cfg.schemes if s.kind in kinds]
        if not matching:
            raise ConfigurationError(f"configuration has no scheme of kind {kinds}")
        scheme = matching[0]
    if scheme.kind not in kinds:
        raise ConfigurationError(f"scheme {scheme.name} is not one of {kinds}")
    return scheme


def _single(cfg: SimConfig, scheme: Scheme, rng, snr_db) -> TrackingTrace:
    cfg = replace(cfg, schemes=tuple(dict.fromkeys(cfg.schemes + (scheme,))))
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 0])
    draws = draw_trial(rng, cfg)
    snr = cfg.snr_db_list[0] if snr_db is None else snr_db
    out = _Engine(cfg).run(scheme, draws, snr_db_to_noise_var(snr))
    return _trace(scheme, draws, out, spacing=cfg.spacing_ratio)


def run_tracking(cfg: SimConfig, rng: np.random.Generator | None = None, snr_db: float | None = None) -> TrackingTrace:
    """One trajectory of the proposed two-beam tracker (cycle 0 is the cold start).

    Without ``rng`` the trajectory is trial 0 of ``cfg.seed``; ``snr_db``
    defaults to the first entry of ``cfg.snr_db_list``.
    """
    return _single(cfg, Scheme(PROPOSED), rng, snr_db)


def run_baseline(cfg: SimConfig, rng: np.random.Generator | None = None, snr_db: float | None = None, scheme=None) -> TrackingTrace:
    """One trajectory of a beam-cycling or fixed-pair baseline."""
    return _single(cfg, _scheme_of(cfg, (BEAM_CYCLING, FIXED_PAIR), scheme), rng, snr_db)


def cold_start(cfg: SimConfig, rng: np.random.Generator, path: PathState | None = None, snr_db: float | None = None) -> AodEstimate:
    """One beam-cycling cycle followed by a full-grid ML estimate."""
    tx = ArrayConfig(cfg.n_tx, cfg.spacing_ratio)
    if path is None:
        path = PathState(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), sample_gain(rng))
    beams = cycling_beams(tx, cfg.cold_start_beams)
    snr = cfg.snr_db_list[0] if snr_db is None else snr_db
    m = observe(path, beams, snr_db_to_noise_var(snr), rng, tx)
    return ml_estimate(m, beams, cfg.est_grid_size, tx_cfg=tx)


def simulate(cfg: SimConfig, snr_db: float, schemes=None, trial_indices=None):
    """Run schemes on shared draws; returns ``({name: (est, oow, bi, bj)}, draws)``."""
    schemes = cfg.schemes if schemes is None else tuple(Scheme.parse(s) for s in schemes)
    cfg = replace(cfg, schemes=tuple(dict.fromkeys(cfg.schemes + schemes)))
    engine = _Engine(cfg)
    draws = draw_trials(cfg, range(cfg.trials) if trial_indices is None else trial_indices)
    nv = snr_db_to_noise_var(snr_db)
    return {s.name: engine.run(s, draws, nv) for s in schemes}, draws


def track_traces(cfg: SimConfig, snr_db: float, schemes=None, trial: int = 0) -> list[TrackingTrace]:
    """Traces of several schemes on one shared trajectory (trial ``trial`` of ``cfg.seed``)."""
    schemes = cfg.schemes if schemes is None else tuple(Scheme.parse(s) for s in schemes)
    out, draws = simulate(cfg, snr_db, schemes, trial_indices=[trial])
    return [_trace(s, draws, out[s.name], spacing=cfg.spacing_ratio) for s in schemes]


def run_mse_sweep(cfg: SimConfig) -> MseReport:
    """MSE per (scheme, SNR) after excluding the warm-up cycles."""
    if cfg.trials < 1000:
        log.warning("mse sweep with %d trials per cell; 1000 or more is recommended", cfg.trials)
    engine = _Engine(cfg)
    noise_vars = [snr_db_to_noise_var(s) for s in cfg.snr_db_list]

    def work(trials):
        draws = draw_trials(cfg, trials)
        err = np.empty((len(cfg.schemes), len(noise_vars), len(trials)))
        for a, scheme in enumerate(cfg.schemes):
            for b, nv in enumerate(noise_vars):
                est = engine.run(scheme, draws, nv)[0]
                e = aod_error(est, draws.aod, cfg.spacing_ratio)[:, cfg.warmup:]
                err[a, b] = np.sum(e**2, axis=1)
        return err

    batches = _batches(cfg)
    with ThreadPoolExecutor(max_workers=min(_threads(cfg), len(batches))) as pool:
        per_trial = np.concatenate(list(pool.map(work, batches)), axis=2)
    cycles = cfg.horizon - cfg.warmup
    rows = []
    for a, scheme in enumerate(cfg.schemes):
        for b, snr in enumerate(cfg.snr_db_list):
            mse = float(np.sum(per_trial[a, b])) / (cfg.trials * cycles)
            rows.append(MseRow(scheme.name, snr, cfg.sigma_p, mse, cfg.trials, scheme.beams_per_cycle()))
    return MseReport(rows)

