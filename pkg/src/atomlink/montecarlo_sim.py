"""Monte Carlo replay of the fluorescence, scan and entanglement sequences.

Time origin of every trial is the leading half-maximum of the excitation
pulse; a trial occupies a detection slot ``[0, slot)``. Each (trial, channel)
produces at most one record: when an atom photon and background photons both
arrive, the earliest one is kept.

Randomness: sequences are generated in fixed-size blocks, block ``k`` drawing
from the named substream ``"sequence-block/<k>"`` of the master seed, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import functools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from atomlink import quantum_core as qc
from atomlink.bloch import emission_profile, reference_excitation
from atomlink.optics_coupling import CollectionOptics, coupling_efficiency
from atomlink.streams import substream
from atomlink.tweezer_holo import SiteLayout

# Table I of the ten-channel array
TABLE_P_ATOM = (3.4e-3, 3.0e-3, 3.5e-3, 3.9e-3, 2.6e-3, 1.3e-3, 3.8e-3, 4.7e-3, 1.1e-3, 1.9e-3)
TABLE_ETA_NET = (0.009, 0.008, 0.009, 0.010, 0.007, 0.003, 0.010, 0.012, 0.003, 0.005)
TABLE_P_EMPTY = (4.8e-6, 5.3e-6, 6.7e-6, 4.3e-6, 4.3e-6, 2.4e-6, 5.3e-6, 7.2e-6, 3.3e-6, 3.3e-6)
TABLE_RATIO = (0.001, 0.002, 0.002, 0.001, 0.002, 0.002, 0.001, 0.002, 0.003, 0.002)
TABLE_BACKGROUND_HZ = (23.0, 20.0, 48.0, 31.0, 30.0, 16.0, 27.0, 28.0, 22.0, 28.0)

SCHEMA_VERSION = "atomlink.records/1"
DETECTOR_H, DETECTOR_V, DETECTOR_NONE = 0, 1, 2
DETECTOR_NAMES = ("H", "V", "none-split")
ORIGIN_ATOM, ORIGIN_BACKGROUND = 0, 1
ORIGIN_NAMES = ("atom", "background")

RECORD_DTYPE = np.dtype(
    [
        ("sequence_id", "<i8"),
        ("trial_id", "<i4"),
        ("channel", "<i2"),
        ("detector", "i1"),
        ("timestamp_ns", "<f8"),
        ("origin", "i1"),
    ]
)


def empty_records() -> np.ndarray:
    return np.empty(0, dtype=RECORD_DTYPE)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ChannelChain:
    """Per-channel detection-efficiency chain and background.

    ``crosstalk[i, j]`` is the click probability on channel ``i`` from an atom
    at site ``j``, relative to channel ``i``'s own atom; ``None`` takes it
    from the optics model (see :func:`optical_crosstalk`).
    """

    p_init: float = 0.90
    eta_ext: float = 0.67
    eta_net: tuple[float, ...] = TABLE_ETA_NET
    eta_fiber: float = 0.8
    eta_det: float = 0.8
    background_rate: tuple[float, ...] = TABLE_BACKGROUND_HZ
    detection_window: float = 100.0
    crosstalk: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "eta_net", tuple(float(v) for v in np.atleast_1d(self.eta_net)))
        bg = np.atleast_1d(np.asarray(self.background_rate, dtype=float))
        if bg.size == 1:
            bg = np.full(len(self.eta_net), bg[0])
        object.__setattr__(self, "background_rate", tuple(float(v) for v in bg))
        if len(self.background_rate) != len(self.eta_net):
            raise ValueError("eta_net and background_rate need one entry per channel")
        for name in ("p_init", "eta_ext", "eta_fiber", "eta_det"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if any(not 0 <= v <= 1 for v in self.eta_net):
            raise ValueError("eta_net entries must lie in [0, 1]")
        if any(v < 0 for v in self.background_rate):
            raise ValueError("background rates must be non-negative")
        if not self.detection_window > 0:
            raise ValueError("detection window must be positive")
        if self.crosstalk is not None:
            x = np.asarray(self.crosstalk, dtype=float)
            if x.shape != (self.n_channels, self.n_channels) or np.any(x < 0):
                raise ValueError("crosstalk must be a non-negative n_channels x n_channels matrix")
            object.__setattr__(self, "crosstalk", x)

    @property
    def n_channels(self) -> int:
        return len(self.eta_net)

    def click_probability(self, include_init: bool = True) -> np.ndarray:
        """Atom click probability inside the detection window, per channel."""
        common = self.eta_ext * self.eta_fiber * self.eta_det * (self.p_init if include_init else 1.0)
        return common * np.asarray(self.eta_net)

    def background_probability(self, duration_ns: float | None = None) -> np.ndarray:
        """Probability of at least one background click in ``duration_ns`` (default: the window)."""
        d = self.detection_window if duration_ns is None else duration_ns
        return -np.expm1(-np.asarray(self.background_rate) * d * 1e-9)

    def crosstalk_matrix(self, optics: CollectionOptics = CollectionOptics()) -> np.ndarray:
        if self.crosstalk is not None:
            return self.crosstalk
        return optical_crosstalk(self.n_channels, optics)


def optical_crosstalk(n: int, optics: CollectionOptics = CollectionOptics()) -> np.ndarray:
    """Relative coupling of site ``j`` into waveguide ``i`` from the overlap model."""
    sep = (np.arange(n)[:, None] - np.arange(n)[None, :]) * optics.site_pitch
    d = np.zeros((n, n, 3))
    d[..., 0] = sep
    return coupling_efficiency(d, optics) / optics.peak_efficiency


@dataclass(frozen=True)
class SequenceConfig:
    n_sites: int = 10
    loading_probability: float = 0.5
    trials_per_cycle: int = 40
    atom_measurement_exposure: float = 40.0  # ms
    detection_slot: float = 10.0  # us
    heating_loss_per_run: float = 0.05
    pushout_error: float = 0.02
    pushout_repeats: int = 5
    rng_seed: int = 0
    n_sequences: int = 1500
    block_size: int = 1024

    def __post_init__(self):
        for name in ("n_sites", "trials_per_cycle", "pushout_repeats", "block_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.n_sequences < 0:
            raise ValueError("n_sequences must be non-negative")
        for name in ("loading_probability", "heating_loss_per_run", "pushout_error"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if not self.detection_slot > 0 or not self.atom_measurement_exposure > 0:
            raise ValueError("slot and exposure must be positive")

    @property
    def slot_ns(self) -> float:
        return self.detection_slot * 1e3


# ---------------------------------------------------------------------------
# emission times


@functools.lru_cache(maxsize=1)
def reference_emission_profile() -> np.ndarray:
    """1-ns binned emission profile over ``[0, 150)`` ns at the reference excitation."""
    traj = reference_excitation().trajectory(horizon=150.0, dt=0.05)
    prof = emission_profile(traj, 1.0, 150.0, start=0.0)
    prof.setflags(write=False)
    return prof


def emission_time_sample(profile, rng: np.random.Generator, size=None, bin: float = 1.0, start: float = 0.0):
    """Inverse-CDF sample of emission times from a binned profile.

    The bin is chosen from the cumulative distribution and the time is spread
    uniformly inside it.
    """
    p = np.asarray(profile, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not p.sum() > 0:
        raise ValueError("profile must be a non-empty, non-negative histogram")
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    u = rng.random(size)
    k = np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)
    t = start + bin * (k + rng.random(size))
    return t if size is not None else float(t)


@dataclass(frozen=True)
class EmissionSource:
    """Binned emission-time distribution for atom photons."""

    profile: np.ndarray = field(default_factory=reference_emission_profile)
    bin: float = 1.0
    start: float = 0.0

    def window_fraction(self, window: float) -> float:
        p = np.asarray(self.profile, dtype=float)
        edges = self.start + self.bin * np.arange(p.size + 1)
        covered = np.clip((window - edges[:-1]) / self.bin, 0.0, 1.0)
        return float((p * covered).sum() / p.sum())

    def sample(self, rng: np.random.Generator, size=None):
        return emission_time_sample(self.profile, rng, size, self.bin, self.start)


def _coerce_source(source) -> EmissionSource:
    if source is None:
        return EmissionSource()
    if isinstance(source, EmissionSource):
        return source
    return EmissionSource(np.asarray(source, dtype=float))


def _earliest_background(rng, n_bg: np.ndarray, slot_ns: float) -> np.ndarray:
    """Earliest of ``n`` uniform arrivals in ``[0, slot)`` for each entry of ``n_bg`` (> 0)."""
    return slot_ns * (1.0 - rng.random(n_bg.shape) ** (1.0 / n_bg))


def sample_detection(
    chain: ChannelChain,
    atom_present: bool,
    emission_time_source=None,
    rng: np.random.Generator | None = None,
    *,
    channel: int = 0,
    slot_ns: float | None = None,
) -> np.void | None:
    """One detection trial on one channel.

    The atom clicks with the chain probability inside the detection window;
    its timestamp is drawn from the emission profile. Background photons are
    Poisson over ``[0, slot_ns)`` (default: the detection window). The
    earlier click wins. Returns a record with sequence/trial ids 0, or None.
    """
    if rng is None:
        raise ValueError("an explicit generator is required")
    src = _coerce_source(emission_time_source)
    slot = chain.detection_window if slot_ns is None else slot_ns
    best_t, origin = math.inf, -1
    if atom_present:
        frac = src.window_fraction(chain.detection_window)
        p = min(1.0, chain.click_probability()[channel] / frac) if frac > 0 else 0.0
        if rng.random() < p:
            best_t, origin = src.sample(rng), ORIGIN_ATOM
    n_bg = rng.poisson(chain.background_rate[channel] * slot * 1e-9)
    if n_bg > 0:
        t_bg = float(_earliest_background(rng, np.array([n_bg]), slot)[0])
        if t_bg < best_t:
            best_t, origin = t_bg, ORIGIN_BACKGROUND
    if origin < 0:
        return None
    rec = np.zeros((), dtype=RECORD_DTYPE)
    rec["channel"] = channel
    rec["detector"] = DETECTOR_NONE
    rec["timestamp_ns"] = best_t
    rec["origin"] = origin
    return rec[()]


# ---------------------------------------------------------------------------
# fluorescence sequence


@dataclass(frozen=True)
class FluorescenceRun:
    records: np.ndarray
    presence: np.ndarray  # (n_sequences, n_sites) initial atom measurement
    final_presence: np.ndarray  # (n_sequences, n_sites) final atom measurement
    n_trials: int
    slot_ns: float


def _blocks(n: int, size: int) -> list[tuple[int, int, int]]:
    return [(k, k * size, min(size, n - k * size)) for k in range((n + size - 1) // size)]


def _run_blocks(fn: Callable, config: SequenceConfig, rng, threads: int, stream: str):
    blocks = _blocks(config.n_sequences, config.block_size)
    if isinstance(rng, np.random.Generator):
        return [fn(rng, seq0, size) for _, seq0, size in blocks]
    seed = config.rng_seed if rng is None else int(rng)
    jobs = [(substream(seed, f"{stream}/{k}"), seq0, size) for k, seq0, size in blocks]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def run_fluorescence_sequence(
    config: SequenceConfig = SequenceConfig(),
    chain: ChannelChain = ChannelChain(),
    rng: np.random.Generator | int | None = None,
    *,
    source=None,
    init_failure: Literal["no-photon", "depolarized"] = "no-photon",
    optics: CollectionOptics = CollectionOptics(),
    threads: int = 1,
) -> FluorescenceRun:
    """Loading, initial atom image, ``trials_per_cycle`` excitations, final image.

    ``rng`` may be a generator (used for every block in order), an integer
    master seed, or None for ``config.rng_seed``.
    """
    if chain.n_channels != config.n_sites:
        raise ValueError("chain needs one channel per site")
    src = _coerce_source(source)
    slot = config.slot_ns
    frac = src.window_fraction(chain.detection_window)
    base = chain.click_probability(include_init=init_failure == "no-photon")
    p_full = np.minimum(1.0, base / frac) if frac > 0 else np.zeros_like(base)
    rel = chain.crosstalk_matrix(optics) * p_full[:, None]  # (channel, site)
    np.fill_diagonal(rel, p_full)
    bg_mean = np.asarray(chain.background_rate) * slot * 1e-9
    T, C = config.trials_per_cycle, config.n_sites

    def block(gen, seq0, size):
        present = gen.random((size, C)) < config.loading_probability
        p_click = 1.0 - np.prod(1.0 - present[:, None, :] * rel[None, :, :], axis=2)
        atom = gen.random((size, T, C)) < p_click[:, None, :]
        n_bg = gen.poisson(bg_mean, (size, T, C))
        t = np.full((size, T, C), np.inf)
        t[atom] = src.sample(gen, int(atom.sum()))
        has_bg = n_bg > 0
        t_bg = np.full((size, T, C), np.inf)
        t_bg[has_bg] = _earliest_background(gen, n_bg[has_bg], slot)
        origin = np.where(t_bg < t, ORIGIN_BACKGROUND, ORIGIN_ATOM)
        t = np.minimum(t, t_bg)
        survive = gen.random((size, C)) >= config.heating_loss_per_run
        s, k, c = np.nonzero(np.isfinite(t))
        rec = np.empty(s.size, dtype=RECORD_DTYPE)
        rec["sequence_id"] = s + seq0
        rec["trial_id"] = k
        rec["channel"] = c
        rec["detector"] = DETECTOR_NONE
        rec["timestamp_ns"] = t[s, k, c]
        rec["origin"] = origin[s, k, c]
        return rec, present, present & survive

    parts = _run_blocks(block, config, rng, threads, "sequence-block")
    if not parts:
        z = np.zeros((0, C), dtype=bool)
        return FluorescenceRun(empty_records(), z, z, T, slot)
    return FluorescenceRun(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        T,
        slot,
    )


# ---------------------------------------------------------------------------
# position scan


@dataclass(frozen=True)
class ScanConfig:
    trials: int = 200
    exposure_ms: float = 30.0
    loading_probability: float = 0.5
    background_rate: float = 25.0  # Hz per site
    rng_seed: int = 0


@dataclass(frozen=True)
class ScanResult:
    counts: np.ndarray  # (layouts, trials, sites)
    loaded: np.ndarray  # (layouts, trials, sites)
    mean_loaded: np.ndarray  # (layouts,) model mean counts for a loaded site

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))

    def grid(self, steps: int) -> np.ndarray:
        return self.totals.reshape(steps, steps)


def run_scan_simulation(
    layouts: Sequence[SiteLayout],
    optics: CollectionOptics = CollectionOptics(),
    fluorescence_rate: float = 1000.0,
    config: ScanConfig = ScanConfig(),
    rng: np.random.Generator | int | None = None,
    *,
    optimum=(0.0, 0.0, 0.0),
) -> ScanResult:
    """Photon-count histograms for rigid displacements of the array.

    ``fluorescence_rate`` is the detected rate (Hz) of a loaded atom at the
    coupling optimum, which sits at ``optimum`` in layout coordinates. Each
    layout draws from the substream ``"scan/<index>"``.
    """
    if fluorescence_rate < 0:
        raise ValueError("fluorescence rate must be non-negative")
    expo = config.exposure_ms * 1e-3
    out_counts, out_loaded, means = [], [], []
    for idx, lay in enumerate(layouts):
        gen = rng if isinstance(rng, np.random.Generator) else substream(
            config.rng_seed if rng is None else int(rng), f"scan/{idx}"
        )
        disp = np.asarray(lay.r_ref) - np.asarray(optimum, dtype=float)
        rel = coupling_efficiency(disp, optics) / optics.peak_efficiency
        mean_atom = fluorescence_rate * expo * rel
        loaded = gen.random((config.trials, lay.n_sites)) < config.loading_probability
        lam = loaded * mean_atom + config.background_rate * expo
        out_counts.append(gen.poisson(lam))
        out_loaded.append(loaded)
        means.append(mean_atom + config.background_rate * expo)
    return ScanResult(np.array(out_counts), np.array(out_loaded), np.array(means))


# ---------------------------------------------------------------------------
# entanglement sequence


@dataclass(frozen=True)
class AnalyzerSetting:
    theta: float = 0.0
    kind: Literal["circular", "linear"] = "circular"

    def kets(self) -> tuple[qc.PolarizationKet, qc.PolarizationKet]:
        return qc.analyzer_basis(self.theta, self.kind)


@dataclass(frozen=True)
class Imperfections:
    """Error budget of the atom-photon correlation measurement.

    ``pushout_error`` is the per-application probability that an atom which
    should be removed survives the push-out; ``pushout_repeats`` applications
    compound to ``1 - (1 - e)^n``. Initialization failures either emit no
    detectable photon (default) or a depolarized photon.
    """

    heating_loss: float = 0.0
    pushout_error: float = 0.0
    pushout_repeats: int = 5
    tilt: float = 0.0
    init_failure: Literal["no-photon", "depolarized"] = "no-photon"
    zeeman_splitting: float = 0.0  # MHz
    elapsed_time: float = 0.0  # us

    @classmethod
    def ideal(cls) -> Imperfections:
        return cls()

    @classmethod
    def budget(cls, config: SequenceConfig = SequenceConfig(), tilt: float = 0.17) -> Imperfections:
        return cls(config.heating_loss_per_run, config.pushout_error, config.pushout_repeats, tilt)

    @property
    def false_survival(self) -> float:
        return 1.0 - (1.0 - self.pushout_error) ** self.pushout_repeats

    def joint_state(self) -> qc.JointAtomPhotonState:
        amps = qc.emission_state(self.tilt).amplitudes
        return qc.JointAtomPhotonState(amps, self.zeeman_splitting, self.elapsed_time)


def outcome_table(basis: AnalyzerSetting, imp: Imperfections) -> tuple[np.ndarray, np.ndarray]:
    """``P(detector)`` and ``P(atom in m=-1 | detector)`` for an atom-origin photon."""
    state = imp.joint_state()
    p_det = np.zeros(2)
    q_minus = np.full(2, 0.5)
    for d, ket in enumerate(basis.kets()):
        proj = qc.project_photon(state, ket)
        p_det[d] = proj.probability
        if not proj.is_null:
            q_minus[d] = qc.atom_minus_probability(proj.state)
    return p_det / p_det.sum(), q_minus


@dataclass(frozen=True)
class EntanglementRun:
    records: np.ndarray
    present: np.ndarray  # (n,) initial atom measurement
    heralded: np.ndarray  # (n,) a click occurred within the cycle
    detector: np.ndarray  # (n,) DETECTOR_H / DETECTOR_V, -1 without herald
    survived: np.ndarray  # (n,) final atom measurement
    basis: AnalyzerSetting

    def survival_counts(self) -> dict[int, tuple[int, int]]:
        """``{detector: (survivals, heralds)}`` over present, heralded sequences."""
        use = self.present & self.heralded
        return {
            d: (int(np.sum(self.survived & use & (self.detector == d))), int(np.sum(use & (self.detector == d))))
            for d in (DETECTOR_H, DETECTOR_V)
        }


def run_entanglement_sequence(
    config: SequenceConfig = SequenceConfig(trials_per_cycle=30),
    chain: ChannelChain = ChannelChain(),
    basis: AnalyzerSetting = AnalyzerSetting(),
    imperfections: Imperfections = Imperfections(),
    rng: np.random.Generator | int | None = None,
    *,
    channel: int = 0,
    source=None,
    threads: int = 1,
) -> EntanglementRun:
    """Heralded atom-photon correlation runs on one site.

    Per sequence: loading, then up to ``trials_per_cycle`` attempts until the
    first click on ``channel``. An atom photon is analysed in ``basis`` with
    the joint-state projection probabilities; the atom is then read out by
    state-selective push-out with the imperfections applied.
    """
    imp = imperfections
    src = _coerce_source(source)
    window = chain.detection_window
    T = config.trials_per_cycle
    depol = imp.init_failure == "depolarized"
    p_atom = float(chain.click_probability(include_init=not depol)[channel])
    p_good = chain.p_init if depol else 1.0  # fraction of atom photons from a prepared atom
    bg_mean = chain.background_rate[channel] * window * 1e-9
    p_det, q_minus = outcome_table(basis, imp)
    keep = 1.0 - imp.heating_loss
    f = imp.false_survival
    # truncate emission times to the detection window
    p = np.asarray(src.profile, dtype=float)
    edges = src.start + src.bin * np.arange(p.size + 1)
    inside = np.clip((window - edges[:-1]) / src.bin, 0.0, 1.0) * p
    win_src = EmissionSource(inside, src.bin, src.start)

    def block(gen, seq0, size):
        present = gen.random(size) < config.loading_probability
        atom = (gen.random((size, T)) < p_atom) & present[:, None]
        n_bg = gen.poisson(bg_mean, (size, T))
        click = atom | (n_bg > 0)
        heralded = click.any(axis=1)
        trial = np.where(heralded, np.argmax(click, axis=1), -1)
        rows = np.nonzero(heralded)[0]
        k = trial[rows]
        t_atom = np.full(rows.size, np.inf)
        a = atom[rows, k]
        t_atom[a] = win_src.sample(gen, int(a.sum()))
        nb = n_bg[rows, k]
        t_bg = np.full(rows.size, np.inf)
        t_bg[nb > 0] = _earliest_background(gen, nb[nb > 0], window)
        from_atom = t_atom <= t_bg
        prepared = from_atom & (gen.random(rows.size) < p_good)
        u = gen.random(rows.size)
        det = np.where(prepared, np.where(u < p_det[0], DETECTOR_H, DETECTOR_V), np.where(u < 0.5, DETECTOR_H, DETECTOR_V))
        q = np.where(prepared, q_minus[det], 0.5)
        p_survive = keep * (q + (1.0 - q) * f) * present[rows]
        survived = np.zeros(size, dtype=bool)
        survived[rows] = gen.random(rows.size) < p_survive
        detector = np.full(size, -1, dtype=np.int8)
        detector[rows] = det
        rec = np.empty(rows.size, dtype=RECORD_DTYPE)
        rec["sequence_id"] = rows + seq0
        rec["trial_id"] = k
        rec["channel"] = channel
        rec["detector"] = det
        rec["timestamp_ns"] = np.minimum(t_atom, t_bg)
        rec["origin"] = np.where(from_atom, ORIGIN_ATOM, ORIGIN_BACKGROUND)
        return rec, present, heralded, detector, survived

    parts = _run_blocks(block, config, rng, threads, "sequence-block")
    if not parts:
        z = np.zeros(0, dtype=bool)
        return EntanglementRun(empty_records(), z, z, np.zeros(0, dtype=np.int8), z, basis)
    cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    return EntanglementRun(*cat, basis)


# ---------------------------------------------------------------------------
# record IO


def record_dicts(records: np.ndarray, include_truth: bool = True):
    for r in records:
        d = {
            "sequence_id": int(r["sequence_id"]),
            "trial_id": int(r["trial_id"]),
            "channel": int(r["channel"]),
            "detector": DETECTOR_NAMES[int(r["detector"])],
            "timestamp_ns": float(r["timestamp_ns"]),
        }
        if include_truth:
            d["origin"] = ORIGIN_NAMES[int(r["origin"])]
        yield d


def write_records(path: str | Path, records: np.ndarray, meta: dict | None = None, include_truth: bool = True) -> Path:
    """Line-delimited JSON: a schema header line, then one record per line."""
    path = Path(path)
    fields = [n for n in RECORD_DTYPE.names if include_truth or n != "origin"]
    header = {"schema": SCHEMA_VERSION, "fields": fields, "meta": meta or {}}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for d in record_dicts(records, include_truth):
            fh.write(json.dumps(d) + "\n")
    return path


def read_records(path: str | Path) -> tuple[np.ndarray, dict]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported record schema {header.get('schema')!r}")
        rows = [json.loads(line) for line in fh if line.strip()]
    rec = np.zeros(len(rows), dtype=RECORD_DTYPE)
    for i, d in enumerate(rows):
        rec[i] = (
            d["sequence_id"],
            d["trial_id"],
            d["channel"],
            DETECTOR_NAMES.index(d["detector"]),
            d["timestamp_ns"],
            ORIGIN_NAMES.index(d.get("origin", "atom")),
        )
    return rec, header


def config_dict(obj) -> dict:
    """Plain-dict view of a config dataclass for manifests."""
    d = asdict(obj)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
