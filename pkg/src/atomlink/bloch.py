"""Two-level excitation model with branching decay.

State variables are ``rho11`` (ground), ``rho22`` (excited), the coherence
``rho12`` and ``rho_out``, the population that has left the two levels through
the detectable 2/3 branch. The equations of motion are

    d rho11/dt  =  Omega * Im(rho12) + (Gamma/3) rho22
    d rho22/dt  = -Omega * Im(rho12) - Gamma rho22
    d rho12/dt  = (-i delta - gamma) rho12 + (i Omega / 2)(rho22 - rho11)
    d rho_out/dt = (2 Gamma / 3) rho22

Units: time in ns, every rate in rad/ns. A quoted frequency ``f`` in MHz enters
as ``2 pi f * 1e-3`` (see :func:`mhz`); the decay rate is ``1/tau`` with the
26 ns excited-state lifetime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Literal

import numba
import numpy as np
from scipy.optimize import brentq

from atomlink.fitting import FitResult, levenberg_marquardt

DECAY_RATE = 1.0 / 26.0  # 1/ns
DETECTABLE_BRANCH = 2.0 / 3.0
STABILITY_FACTOR = 0.1


def mhz(f: float) -> float:
    """Convert a frequency in MHz to an angular rate in rad/ns."""
    return 2.0 * math.pi * f * 1e-3


class StepSizeError(ValueError):
    """Integration step violates the stability guard."""


class EmissionError(ValueError):
    """Emission profile cannot be normalized."""


# ---------------------------------------------------------------------------
# pulses


@dataclass(frozen=True)
class PulseSpec:
    """Excitation pulse in terms of its Rabi-frequency envelope.

    ``smoothed_square`` is the product of a rising and a falling raised-cosine
    edge, each taking ``rise_time`` to go from 0 to full amplitude; the edge
    separation is solved so that the envelope's FWHM equals ``fwhm``. A
    ``tabulated`` pulse takes ``table = (t_ns, relative_amplitude)`` relative
    to ``t0``.
    """

    kind: Literal["smoothed_square", "gaussian", "tabulated"] = "smoothed_square"
    fwhm: float = 23.8
    rise_time: float = 40.0
    peak: float = mhz(21.55)
    t0: float = 0.0
    table: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind != "tabulated" and not self.fwhm > 0:
            raise ValueError("fwhm must be positive")
        if self.rise_time < 0:
            raise ValueError("rise_time must be non-negative")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated pulse needs a table")


def _raised_cosine_fwhm(sep: float, rise: float) -> float:
    """FWHM of the unit-normalized product of two raised-cosine edges ``sep`` apart."""
    if sep >= rise:
        return sep
    c = math.pi * sep / (2 * rise)
    sc = math.sin(c)
    peak = (1 + sc) ** 2 / 4
    # both edges still ramping: the product reduces to (sin c + cos u)^2 / 4
    cos_u = (1 + sc) / math.sqrt(2) - sc
    u = math.acos(max(-1.0, min(1.0, cos_u)))
    if u > math.pi / 2 - abs(c):
        u = c - math.asin(peak - 1)
    return 2 * u * rise / math.pi


def edge_separation(fwhm: float, rise: float) -> float:
    """Invert :func:`_raised_cosine_fwhm` for the edge separation."""
    if rise == 0 or fwhm >= rise:
        return fwhm
    return brentq(lambda s: _raised_cosine_fwhm(s, rise) - fwhm, -rise * (1 - 1e-12), rise, xtol=1e-13)


def _edge(x: np.ndarray, rise: float) -> np.ndarray:
    if rise == 0:
        return (x >= 0).astype(float)
    y = 0.5 * (1 + np.sin(np.pi * np.clip(x, -rise / 2, rise / 2) / rise))
    return y


def pulse_envelope(spec: PulseSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized envelope ``t -> Omega(t)`` (rad/ns) with maximum ``spec.peak``."""
    if spec.kind == "gaussian":
        a = 4 * math.log(2) / spec.fwhm**2

        def gaussian(t):
            t = np.asarray(t, dtype=float)
            return spec.peak * np.exp(-a * (t - spec.t0) ** 2)

        return gaussian

    if spec.kind == "smoothed_square":
        rise = spec.rise_time
        sep = edge_separation(spec.fwhm, rise)
        top = float(_edge(np.array(sep / 2), rise) ** 2)

        def smoothed(t):
            x = np.asarray(t, dtype=float) - spec.t0
            return spec.peak * _edge(x + sep / 2, rise) * _edge(sep / 2 - x, rise) / top

        return smoothed

    if spec.kind == "tabulated":
        tt, amp = (np.asarray(a, dtype=float) for a in spec.table)
        amp = np.clip(amp, 0.0, None)
        amp = amp / amp.max()

        def tabulated(t):
            x = np.asarray(t, dtype=float) - spec.t0
            return spec.peak * np.interp(x, tt, amp, left=0.0, right=0.0)

        return tabulated

    raise ValueError(f"unknown pulse kind {spec.kind!r}")


def pulse_support(spec: PulseSpec) -> tuple[float, float]:
    """Interval outside which the envelope is (numerically) zero."""
    if spec.kind == "smoothed_square":
        half = (edge_separation(spec.fwhm, spec.rise_time) + spec.rise_time) / 2
        return spec.t0 - half, spec.t0 + half
    if spec.kind == "gaussian":
        half = 3 * spec.fwhm
        return spec.t0 - half, spec.t0 + half
    tt = np.asarray(spec.table[0], dtype=float)
    return spec.t0 + tt.min(), spec.t0 + tt.max()


def load_tabulated_pulse(path: str | Path, peak: float, t0: float = 0.0) -> PulseSpec:
    """Read a two-column ``t_ns amplitude`` text file into a tabulated pulse."""
    data = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected two columns (t_ns, relative_amplitude)")
    t, amp = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    return PulseSpec(kind="tabulated", fwhm=float("nan"), peak=peak, t0=t0, table=(t, amp))


def measured_fwhm(envelope: Callable, t_lo: float, t_hi: float, n: int = 200_001) -> float:
    """Numerically measured FWHM of an envelope by linear interpolation."""
    t = np.linspace(t_lo, t_hi, n)
    y = envelope(t)
    half = y.max() / 2
    above = np.nonzero(y >= half)[0]
    i0, i1 = above[0], above[-1]
    if i0 == 0 or i1 == n - 1:
        raise ValueError("envelope does not fall below half maximum inside the interval")
    left = np.interp(half, [y[i0 - 1], y[i0]], [t[i0 - 1], t[i0]])
    right = np.interp(half, [y[i1 + 1], y[i1]], [t[i1 + 1], t[i1]])
    return float(right - left)


# ---------------------------------------------------------------------------
# dynamics


@dataclass(frozen=True)
class TwoLevelParams:
    rabi_envelope: Callable[[np.ndarray], np.ndarray]
    detuning: float = 0.0
    dephasing: float = 0.0
    decay: float = DECAY_RATE

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError("decay rate must be positive")
        if self.dephasing < 0:
            raise ValueError("dephasing must be non-negative")


@dataclass(frozen=True)
class BlochState:
    rho11: float = 1.0
    rho22: float = 0.0
    rho12: complex = 0j
    rho_out: float = 0.0

    @classmethod
    def ground(cls) -> BlochState:
        return cls()

    @classmethod
    def excited(cls) -> BlochState:
        return cls(0.0, 1.0, 0j, 0.0)


@dataclass(frozen=True)
class BlochTrajectory:
    times: np.ndarray
    rho11: np.ndarray
    rho22: np.ndarray
    rho12: np.ndarray
    rho_out: np.ndarray
    dt: float
    decay: float = DECAY_RATE

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> BlochState:
        return BlochState(float(self.rho11[i]), float(self.rho22[i]), complex(self.rho12[i]), float(self.rho_out[i]))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def rho_out_at(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.rho_out)


@numba.njit(cache=True)
def _rk4_kernel(omega_half, dt, delta, gamma, decay, y0):  # pragma: no cover - compiled
    n = (omega_half.shape[0] - 1) // 2
    out = np.empty((n + 1, 5))
    r11, r22, x, y, ro = y0[0], y0[1], y0[2], y0[3], y0[4]
    out[0, 0] = r11
    out[0, 1] = r22
    out[0, 2] = x
    out[0, 3] = y
    out[0, 4] = ro
    g3 = decay / 3.0
    g23 = 2.0 * decay / 3.0
    for k in range(n):
        o1 = omega_half[2 * k]
        o2 = omega_half[2 * k + 1]
        o3 = omega_half[2 * k + 2]

        a11 = o1 * y + g3 * r22
        a22 = -o1 * y - decay * r22
        ax = -gamma * x + delta * y
        ay = -delta * x - gamma * y + 0.5 * o1 * (r22 - r11)
        ao = g23 * r22

        h = 0.5 * dt
        t11, t22, tx, ty = r11 + h * a11, r22 + h * a22, x + h * ax, y + h * ay
        b11 = o2 * ty + g3 * t22
        b22 = -o2 * ty - decay * t22
        bx = -gamma * tx + delta * ty
        by = -delta * tx - gamma * ty + 0.5 * o2 * (t22 - t11)
        bo = g23 * t22

        t11, t22, tx, ty = r11 + h * b11, r22 + h * b22, x + h * bx, y + h * by
        c11 = o2 * ty + g3 * t22
        c22 = -o2 * ty - decay * t22
        cx = -gamma * tx + delta * ty
        cy = -delta * tx - gamma * ty + 0.5 * o2 * (t22 - t11)
        co = g23 * t22

        t11, t22, tx, ty = r11 + dt * c11, r22 + dt * c22, x + dt * cx, y + dt * cy
        d11 = o3 * ty + g3 * t22
        d22 = -o3 * ty - decay * t22
        dx = -gamma * tx + delta * ty
        dy = -delta * tx - gamma * ty + 0.5 * o3 * (t22 - t11)
        do = g23 * t22

        s = dt / 6.0
        r11 += s * (a11 + 2 * b11 + 2 * c11 + d11)
        r22 += s * (a22 + 2 * b22 + 2 * c22 + d22)
        x += s * (ax + 2 * bx + 2 * cx + dx)
        y += s * (ay + 2 * by + 2 * cy + dy)
        ro += s * (ao + 2 * bo + 2 * co + do)
        out[k + 1, 0] = r11
        out[k + 1, 1] = r22
        out[k + 1, 2] = x
        out[k + 1, 3] = y
        out[k + 1, 4] = ro
    return out


def integrate(
    params: TwoLevelParams,
    init: BlochState,
    t_span: tuple[float, float],
    dt: float,
) -> BlochTrajectory:
    """Fixed-step classical RK4 solution on a uniform grid.

    Raises
    ------
    StepSizeError
        If ``dt`` exceeds ``0.1 / max(Gamma, max Omega, |delta|)``.
    """
    t_start, t_stop = map(float, t_span)
    if not dt > 0 or t_stop <= t_start:
        raise StepSizeError("need dt > 0 and a non-empty time span")
    n = int(math.ceil((t_stop - t_start) / dt - 1e-9))
    half_grid = t_start + 0.5 * dt * np.arange(2 * n + 1)
    omega = np.asarray(params.rabi_envelope(half_grid), dtype=float)
    if np.any(omega < 0):
        raise ValueError("Rabi envelope must be non-negative")
    fastest = max(params.decay, float(omega.max(initial=0.0)), abs(params.detuning))
    if dt > STABILITY_FACTOR / fastest * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt} ns exceeds the guard {STABILITY_FACTOR / fastest:.4g} ns")
    y0 = np.array([init.rho11, init.rho22, init.rho12.real, init.rho12.imag, init.rho_out], dtype=float)
    out = _rk4_kernel(omega, float(dt), float(params.detuning), float(params.dephasing), float(params.decay), y0)
    return BlochTrajectory(
        times=half_grid[::2].copy(),
        rho11=out[:, 0],
        rho22=out[:, 1],
        rho12=out[:, 2] + 1j * out[:, 3],
        rho_out=out[:, 4],
        dt=float(dt),
        decay=params.decay,
    )


def emission_profile(
    traj: BlochTrajectory, bin: float = 1.0, horizon: float = 150.0, start: float | None = None
) -> np.ndarray:
    """Normalized detectable-emission histogram over ``[start, start + horizon)``.

    Each bin holds the increase of ``rho_out`` across it, i.e. the integral of
    ``(2/3) Gamma rho22``.
    """
    t0 = traj.times[0] if start is None else float(start)
    if t0 < traj.times[0] - 1e-9 or t0 + horizon > traj.times[-1] + 1e-9:
        raise ValueError("profile horizon exceeds the trajectory span")
    nbins = int(round(horizon / bin))
    edges = t0 + bin * np.arange(nbins + 1)
    mass = np.diff(traj.rho_out_at(edges))
    total = mass.sum()
    if not total > 0:
        raise EmissionError("no emission inside the profile horizon")
    return mass / total


def excitation_efficiency(traj: BlochTrajectory, window: tuple[float, float]) -> float:
    """Detectable population emitted inside ``window``."""
    a, b = window
    lo, hi = traj.span
    if a < lo - 1e-9 or b > hi + 1e-9:
        raise ValueError("window outside the trajectory span")
    return float(traj.rho_out_at(b) - traj.rho_out_at(a))


# ---------------------------------------------------------------------------
# reference excitation and detection timeline


@dataclass(frozen=True)
class Excitation:
    """Pulse plus the static parameters of one excitation experiment.

    The detection clock is zero at the leading half-maximum of the pulse; the
    100 ns detection window is ``[0, 100)`` ns on that clock.
    """

    pulse: PulseSpec
    detuning: float = 0.0
    dephasing: float = 0.0
    decay: float = DECAY_RATE

    def params(self) -> TwoLevelParams:
        return TwoLevelParams(pulse_envelope(self.pulse), self.detuning, self.dephasing, self.decay)

    def trajectory(self, horizon: float = 150.0, dt: float = 0.05) -> BlochTrajectory:
        t_lo = min(pulse_support(self.pulse)[0], 0.0)
        n = math.ceil((0.0 - t_lo) / dt)
        return integrate(self.params(), BlochState.ground(), (-n * dt, horizon), dt)


def reference_excitation(**overrides) -> Excitation:
    """Excitation with the best-fit pulse parameters from the emission-profile fit.

    FWHM 23.26 ns, peak Rabi frequency 2 pi x 21.55 MHz, dephasing
    2 pi x 2.87 MHz, detuning -2 pi x 0.38 MHz, 40 ns edges, and the pulse
    centred half a FWHM after the detection clock origin.
    """
    fwhm = overrides.pop("fwhm", 23.26)
    pulse = PulseSpec(
        kind=overrides.pop("kind", "smoothed_square"),
        fwhm=fwhm,
        rise_time=overrides.pop("rise_time", 40.0),
        peak=overrides.pop("peak", mhz(21.55)),
        t0=overrides.pop("t0", fwhm / 2),
    )
    exc = Excitation(
        pulse,
        detuning=overrides.pop("detuning", mhz(-0.38)),
        dephasing=overrides.pop("dephasing", mhz(2.87)),
        decay=overrides.pop("decay", DECAY_RATE),
    )
    if overrides:
        raise TypeError(f"unknown overrides: {sorted(overrides)}")
    return exc


# ---------------------------------------------------------------------------
# profile fitting

PROFILE_PARAMS = ("fwhm", "peak", "detuning", "dephasing", "t0")
# search box: FWHM 2-200 ns, Rabi frequency and |detuning| up to 2 pi x 100 MHz,
# dephasing up to 2 pi x 50 MHz; the pulse centre is bounded relative to the data
PROFILE_BOUNDS = (
    np.array([2.0, 1e-4, -mhz(100.0), 0.0, -np.inf]),
    np.array([200.0, mhz(100.0), mhz(100.0), mhz(50.0), np.inf]),
)


@dataclass(frozen=True)
class ProfileFit:
    values: dict[str, float]
    stderr: dict[str, float]
    result: FitResult

    def __getitem__(self, key: str) -> float:
        return self.values[key]


def model_profile(
    values: dict[str, float],
    nbins: int,
    bin: float = 1.0,
    start: float = 0.0,
    kind: str = "smoothed_square",
    rise_time: float = 40.0,
    decay: float = DECAY_RATE,
    dt: float = 0.25,
) -> np.ndarray:
    pulse = PulseSpec(kind=kind, fwhm=values["fwhm"], rise_time=rise_time, peak=abs(values["peak"]), t0=values["t0"])
    params = TwoLevelParams(pulse_envelope(pulse), values["detuning"], abs(values["dephasing"]), decay)
    fastest = max(decay, abs(values["peak"]), abs(values["detuning"]))
    # shrink the step by whole factors of two so bin edges stay on the grid
    while dt > STABILITY_FACTOR / fastest:
        dt /= 2
    t_lo = min(pulse_support(pulse)[0], start)
    t_hi = start + nbins * bin
    n = math.ceil((start - t_lo) / dt)
    traj = integrate(params, BlochState.ground(), (start - n * dt, t_hi + dt), dt)
    return emission_profile(traj, bin, nbins * bin, start)


def default_profile_guess(counts: np.ndarray, bin: float = 1.0, start: float = 0.0, decay: float = DECAY_RATE) -> dict[str, float]:
    """Deterministic starting point for :func:`fit_profile`.

    The pulse centre comes from the data centroid minus one lifetime; the peak
    Rabi frequency from the pi-pulse condition for a pulse of the nominal
    23.8 ns photodiode width.
    """
    counts = np.asarray(counts, dtype=float)
    centres = start + bin * (np.arange(len(counts)) + 0.5)
    centroid = float((centres * counts).sum() / counts.sum())
    fwhm = 23.8
    return {
        "fwhm": fwhm,
        "peak": math.pi / (1.06 * fwhm),
        "detuning": -mhz(0.2),
        "dephasing": mhz(1.0),
        "t0": centroid - 1.0 / decay,
    }


def fit_profile(
    observed,
    pulse_family: str = "smoothed_square",
    init_guess: dict[str, float] | None = None,
    *,
    bin: float = 1.0,
    start: float = 0.0,
    rise_time: float = 40.0,
    decay: float = DECAY_RATE,
    dt: float = 0.25,
    max_iter: int = 500,
) -> ProfileFit:
    """Least-squares fit of the normalized emission model to a binned profile.

    ``observed`` is a histogram of counts (or any non-negative weights) with
    bins of width ``bin`` starting at ``start`` on the detection clock. Both
    data and model are normalized to unit sum before comparison.
    """
    counts = np.asarray(observed, dtype=float)
    if np.count_nonzero(counts) < 50:
        raise ValueError("need at least 50 non-empty bins to fit a profile")
    data = counts / counts.sum()
    guess = dict(default_profile_guess(counts, bin, start, decay) if init_guess is None else init_guess)
    p0 = np.array([guess[k] for k in PROFILE_PARAMS], dtype=float)

    def residual(p):
        vals = dict(zip(PROFILE_PARAMS, p))
        try:
            return model_profile(vals, len(counts), bin, start, pulse_family, rise_time, decay, dt) - data
        except EmissionError:
            # a trial point with no emission in the window is simply rejected
            return np.full_like(data, np.inf)

    # fd steps on the natural scale of each parameter
    steps = np.array([1e-4, 1e-6, 1e-6, 1e-6, 1e-4])
    lo, hi = PROFILE_BOUNDS[0].copy(), PROFILE_BOUNDS[1].copy()
    horizon = len(counts) * bin
    lo[4], hi[4] = start - horizon, start + horizon
    result = levenberg_marquardt(residual, p0, fd_steps=steps, bounds=(lo, hi), max_iter=max_iter)
    p = result.params.copy()
    # populations are even in the detuning: only |delta| is identified, the
    # reported sign follows the initial guess
    p[1], p[3] = abs(p[1]), abs(p[3])
    p[2] = math.copysign(abs(p[2]), guess["detuning"])
    values = dict(zip(PROFILE_PARAMS, map(float, p)))
    stderr = dict(zip(PROFILE_PARAMS, map(float, result.stderr)))
    return ProfileFit(values, stderr, replace(result, params=p))
