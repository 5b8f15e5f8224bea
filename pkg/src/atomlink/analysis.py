"""Estimators on detection records: conditional probabilities, crosstalk,
background rates, fringe fits and Stokes vectors.

The estimators are blind: they read ids, channels, detectors and timestamps
but never the simulation's origin tag.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from atomlink.fitting import FitResult, levenberg_marquardt
from atomlink.montecarlo_sim import ChannelChain
from atomlink.quantum_core import StokesVector, stokes_and_purity

CONFIDENCE = 0.68
_Z = float(norm.ppf(0.5 + CONFIDENCE / 2))


def wilson_interval(k, n, z: float = _Z) -> tuple[np.ndarray, np.ndarray]:
    """Wilson score interval; NaN where ``n == 0``."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = k / n
        den = 1 + z**2 / n
        centre = (p + z**2 / (2 * n)) / den
        half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / den
    return centre - half, centre + half


def _in_window(records, window: float) -> np.ndarray:
    t = records["timestamp_ns"]
    return records[(t >= 0) & (t < window)]


def _click_counts(records, presence, window):
    """``clicks[s, i]``: in-window clicks on channel ``i`` in sequence ``s``."""
    n_seq, n_ch = presence.shape
    rec = _in_window(records, window)
    clicks = np.zeros((n_seq, n_ch), dtype=np.int64)
    np.add.at(clicks, (rec["sequence_id"], rec["channel"].astype(np.int64)), 1)
    return clicks


# ---------------------------------------------------------------------------
# conditional probabilities


@dataclass(frozen=True)
class ConditionalProbs:
    p_present: np.ndarray
    p_absent: np.ndarray
    clicks_present: np.ndarray
    clicks_absent: np.ndarray
    attempts_present: np.ndarray
    attempts_absent: np.ndarray
    ci_present: tuple[np.ndarray, np.ndarray]
    ci_absent: tuple[np.ndarray, np.ndarray]

    @property
    def defined_present(self) -> np.ndarray:
        return self.attempts_present > 0

    @property
    def defined_absent(self) -> np.ndarray:
        return self.attempts_absent > 0

    def sigma_present(self) -> np.ndarray:
        return binomial_sigma(self.p_present, self.attempts_present)

    def sigma_absent(self) -> np.ndarray:
        return binomial_sigma(self.p_absent, self.attempts_absent)


def binomial_sigma(p, n):
    p, n = np.asarray(p, dtype=float), np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sqrt(p * (1 - p) / n)


def conditional_probs(records, presence, n_trials: int, window: float = 100.0) -> ConditionalProbs:
    """``P(p_i|a_i)`` and ``P(p_i|not a_i)`` per channel.

    ``presence`` is the ``(n_sequences, n_sites)`` initial atom measurement and
    every sequence has ``n_trials`` attempts. Entries without attempts are NaN.
    """
    presence = np.asarray(presence, dtype=bool)
    clicks = _click_counts(records, presence, window)
    k_a = (clicks * presence).sum(axis=0)
    k_e = (clicks * ~presence).sum(axis=0)
    n_a = presence.sum(axis=0) * n_trials
    n_e = (~presence).sum(axis=0) * n_trials
    with np.errstate(invalid="ignore", divide="ignore"):
        p_a = np.where(n_a > 0, k_a / np.maximum(n_a, 1), np.nan)
        p_e = np.where(n_e > 0, k_e / np.maximum(n_e, 1), np.nan)
    return ConditionalProbs(p_a, p_e, k_a, k_e, n_a, n_e, wilson_interval(k_a, n_a), wilson_interval(k_e, n_e))


def infer_net_coupling(P_click, chain: ChannelChain = ChannelChain()):
    """Remove initialization, excitation, fiber and detector factors from a click probability."""
    denom = chain.p_init * chain.eta_ext * chain.eta_fiber * chain.eta_det
    if denom <= 0:
        raise ZeroDivisionError("chain factors must be positive to back out the coupling")
    out = np.asarray(P_click, dtype=float) / denom
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# crosstalk


@dataclass(frozen=True)
class CrosstalkMatrix:
    values: np.ndarray
    stderr: np.ndarray
    attempts: np.ndarray
    defined: np.ndarray

    def max_offdiagonal(self) -> float:
        off = ~np.eye(len(self.values), dtype=bool) & self.defined
        return float(np.max(self.values[off])) if off.any() else float("nan")


def crosstalk_from_counts(clicks, attempts, diag_clicks, diag_attempts) -> CrosstalkMatrix:
    """Crosstalk from conditioned counts.

    ``clicks[i, j]`` / ``attempts[i, j]`` count channel-``i`` clicks while site
    ``i`` is empty and site ``j`` occupied; ``diag_*`` hold the ``P(p_i|a_i)``
    counts. Entries without conditioning data, or with an empty diagonal, are
    NaN and flagged undefined.
    """
    clicks, attempts = np.asarray(clicks, dtype=float), np.asarray(attempts, dtype=float)
    dk, dn = np.asarray(diag_clicks, dtype=float), np.asarray(diag_attempts, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_off = clicks / attempts
        p_diag = dk / dn
        vals = p_off / p_diag[:, None]
        rel_var = np.where(clicks > 0, (1 - p_off) / clicks, 1.0 / attempts / np.maximum(p_off, 1e-300) ** 2)
        rel_var_d = (1 - p_diag) / dk
        err = np.abs(vals) * np.sqrt(rel_var + rel_var_d[:, None])
        # with zero off-diagonal clicks quote the one-count scale
        err = np.where(clicks > 0, err, 1.0 / attempts / p_diag[:, None])
    n = len(vals)
    defined = (attempts > 0) & (dk > 0)[:, None]
    eye = np.eye(n, dtype=bool)
    defined[eye] = dk > 0
    vals = np.where(defined, vals, np.nan)
    vals[eye & defined] = 1.0
    err = np.where(defined & ~eye, err, np.where(eye, 0.0, np.nan))
    return CrosstalkMatrix(vals, err, attempts.astype(np.int64), defined)


def crosstalk_matrix(records, presence, n_trials: int, window: float = 100.0) -> CrosstalkMatrix:
    """``P(p_i | not a_i & a_j) / P(p_i | a_i)`` from records and initial presence."""
    presence = np.asarray(presence, dtype=bool)
    clicks = _click_counts(records, presence, window)
    empty = (~presence).astype(np.int64)
    occ = presence.astype(np.int64)
    # cond[s, i, j] = site i empty and site j occupied
    k = np.einsum("si,si,sj->ij", clicks, empty, occ)
    n = np.einsum("si,sj->ij", empty, occ) * n_trials
    dk = (clicks * presence).sum(axis=0)
    dn = presence.sum(axis=0) * n_trials
    np.fill_diagonal(k, 0)
    np.fill_diagonal(n, 0)
    return crosstalk_from_counts(k, n, dk, dn)


# ---------------------------------------------------------------------------
# background


@dataclass(frozen=True)
class BackgroundEstimate:
    rate_hz: np.ndarray
    stderr_hz: np.ndarray
    counts: np.ndarray
    exposure_s: float  # per channel
    window_ns: tuple[float, float]


def background_rate(
    records,
    n_slots: int,
    slot_ns: float,
    n_channels: int,
    pulse_time: float = 0.0,
    window: tuple[float, float] = (1_000.0, 11_000.0),
) -> BackgroundEstimate:
    """Click rate in the post-pulse window ``[pulse + 1 us, pulse + 11 us]``.

    The window is clipped to the slot; ``n_slots`` counts the trials
    contributing exposure to each channel.
    """
    lo = pulse_time + window[0]
    hi = min(pulse_time + window[1], slot_ns)
    if hi <= lo:
        raise ValueError("background window lies outside the detection slot")
    t = records["timestamp_ns"]
    sel = records[(t >= lo) & (t < hi)]
    counts = np.bincount(sel["channel"].astype(np.int64), minlength=n_channels)
    expo = n_slots * (hi - lo) * 1e-9
    rate = counts / expo if expo > 0 else np.zeros(n_channels)
    return BackgroundEstimate(rate, np.sqrt(counts) / expo if expo > 0 else np.zeros(n_channels), counts, expo, (lo, hi))


# ---------------------------------------------------------------------------
# fringe fit


class FringeError(ValueError):
    """Insufficient angular coverage for a fringe fit."""


@dataclass(frozen=True)
class FringeFit:
    A: float
    B: float
    C: float
    stderr: tuple[float, float, float]
    residual_rms: float
    result: FitResult

    @property
    def visibility(self) -> float:
        """Fringe contrast ``|A| / C``."""
        return abs(self.A) / self.C

    @property
    def visibility_2a(self) -> float:
        """Alternative reading ``2 |A|`` (peak-to-peak amplitude)."""
        return 2 * abs(self.A)


def fit_fringe(angles, successes, trials, *, angle_factor: float = 1.0, max_iter: int = 500) -> FringeFit:
    """Binomially weighted fit of ``A sin(k theta + B) + C``.

    ``k = angle_factor``; pass :data:`atomlink.quantum_core.FRINGE_ANGLE_FACTOR`
    when ``angles`` are analyzer angles. Point variances use
    ``p~(1 - p~)/n`` with ``p~ = (s + 1)/(n + 2)`` so that points at 0 or 1
    keep a finite weight. The start values come from the exact linear
    regression on ``(sin, cos, 1)``; the result has ``A >= 0`` and
    ``B in [0, 2 pi)``.
    """
    th = np.asarray(angles, dtype=float) * angle_factor
    s = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    if np.any(n <= 0):
        raise FringeError("every angle needs at least one trial")
    phases = np.unique(np.round(np.mod(th, 2 * np.pi), 12))
    if phases.size < 4:
        raise FringeError("need at least 4 distinct angles")
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * np.pi]]))
    if 2 * np.pi - gaps.max() < np.pi - 1e-9:
        raise FringeError("angles must span at least half a period")
    y = s / n
    pt = (s + 1) / (n + 2)
    sigma = np.sqrt(pt * (1 - pt) / n)
    X = np.column_stack([np.sin(th), np.cos(th), np.ones_like(th)])
    a, b, c = np.linalg.lstsq(X / sigma[:, None], y / sigma, rcond=None)[0]
    p0 = np.array([math.hypot(a, b), math.atan2(b, a), c])

    def residual(p):
        return (p[0] * np.sin(th + p[1]) + p[2] - y) / sigma

    def jac(p):
        return np.column_stack([np.sin(th + p[1]), p[0] * np.cos(th + p[1]), np.ones_like(th)]) / sigma[:, None]

    res = levenberg_marquardt(residual, p0, jac, max_iter=max_iter, scale_cov=False)
    A, B, C = res.params
    if A < 0:
        A, B = -A, B + math.pi
    B = math.fmod(B, 2 * math.pi)
    B = B + 2 * math.pi if B < 0 else B
    rms = float(np.sqrt(np.mean((A * np.sin(th + B) + C - y) ** 2)))
    return FringeFit(float(A), float(B), float(C), tuple(map(float, res.stderr)), rms, res)


def visibility_degradation(snr: float) -> float:
    """Upper bound ``1/SNR`` on the visibility loss from uncorrelated background."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    return 1.0 / snr


# ---------------------------------------------------------------------------
# Stokes


@dataclass(frozen=True)
class StokesEstimate:
    vector: StokesVector
    stderr: tuple[float, float, float]
    defined: tuple[bool, bool, bool]

    @property
    def purity(self) -> float:
        return stokes_and_purity(self.vector)


def stokes_estimate(counts: dict) -> StokesEstimate:
    """Stokes vector from ``{"s1": (N_H, N_V), "s2": (N_D, N_A), "s3": (N_s+, N_s-)}``.

    A setting without counts gives a NaN component flagged undefined. The
    components are clamped to [-1, 1] and, if the length exceeds one from
    noise, scaled back onto the sphere.
    """
    comps, errs, ok = [], [], []
    for key in ("s1", "s2", "s3"):
        n_p, n_m = counts.get(key, (0, 0))
        tot = n_p + n_m
        if tot <= 0:
            comps.append(float("nan"))
            errs.append(float("nan"))
            ok.append(False)
            continue
        v = (n_p - n_m) / tot
        comps.append(float(np.clip(v, -1.0, 1.0)))
        errs.append(float(2 * math.sqrt(max(n_p * n_m, 0) / tot**3)))
        ok.append(True)
    vec = np.array(comps)
    r = np.sqrt(np.nansum(vec**2))
    if r > 1:
        vec = vec / r
    return StokesEstimate(StokesVector(*map(float, vec)), tuple(errs), tuple(ok))


# ---------------------------------------------------------------------------
# histograms and tables


def histogram(values, bin_width: float, start: float | None = None, stop: float | None = None):
    """Integer binning ``floor((v - start) / bin_width)``; returns ``(edges, counts)``.

    Values outside ``[start, stop)`` are dropped when the bounds are given;
    otherwise the range covers all values and the total is preserved.
    """
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0 and (start is None or stop is None):
        return np.empty(0), np.empty(0, dtype=np.int64)
    lo = float(np.floor(v.min() / bin_width) * bin_width) if start is None else float(start)
    if stop is None:
        nb = int(np.floor((v.max() - lo) / bin_width)) + 1
    else:
        nb = int(math.ceil((stop - lo) / bin_width - 1e-12))
    idx = np.floor((v - lo) / bin_width).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < nb)]
    counts = np.bincount(idx, minlength=nb)[:nb].astype(np.int64)
    return lo + bin_width * np.arange(nb + 1), counts


TABLE_ROWS = (
    "P(p_i|a_i)x10^3",
    "eta_net",
    "P(p_i|abar_i)x10^6",
    "P(p_i|abar_i)/P(p_i|a_i)",
    "background",
)


def table_rows(probs: ConditionalProbs | None, chain: ChannelChain, background_hz=None) -> list[list[str]]:
    """Table-I layout: one row per quantity, one column per channel."""
    if probs is None:
        return []
    n = len(probs.p_present)
    eta = infer_net_coupling(probs.p_present, chain)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = probs.p_absent / probs.p_present
    bg = np.full(n, np.nan) if background_hz is None else np.asarray(background_hz, dtype=float)
    fmt = lambda v, f: "nan" if not np.isfinite(v) else f.format(v)  # noqa: E731
    return [
        [TABLE_ROWS[0]] + [fmt(v * 1e3, "{:.2f}") for v in probs.p_present],
        [TABLE_ROWS[1]] + [fmt(v * 100, "{:.2f}%") for v in eta],
        [TABLE_ROWS[2]] + [fmt(v * 1e6, "{:.2f}") for v in probs.p_absent],
        [TABLE_ROWS[3]] + [fmt(v, "{:.4f}") for v in ratio],
        [TABLE_ROWS[4]] + [fmt(v, "{:.1f} Hz") for v in bg],
    ]


def table_csv(rows: list[list[str]], n_channels: int = 10, path: str | Path | None = None) -> str:
    """Comma-separated table with a header row; header only when ``rows`` is empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity"] + [f"ch{i + 1}" for i in range(n_channels)])
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
