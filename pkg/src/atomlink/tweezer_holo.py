"""Tweezer-array geometry and weighted Gerchberg-Saxton hologram synthesis.

Focal-plane model: the SLM field ``exp(i phi)`` on an ``N x N`` grid is taken to
the focal plane by an orthonormal 2D DFT (``norm="ortho"``), so total power is
``N**2`` in both planes. Focal-plane sample ``(kx, ky)`` (centred, see
:func:`numpy.fft.fftshift`) sits at ``(kx, ky) * focal_pitch`` micrometres,
where ``focal_pitch = lambda f / (N p_slm)`` is folded into a single number
stored on the mask.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from atomlink.streams import as_generator

MASK_MAGIC = b"PHM1"
_HEADER = struct.Struct("<4sId")  # magic, N, pitch: 16 bytes


@dataclass(frozen=True)
class SiteLayout:
    """Sites at ``r_ref + i * delta_r`` for ``i = 0 .. n_sites - 1`` (micrometres)."""

    r_ref: tuple[float, float, float] = (0.0, 0.0, 0.0)
    delta_r: tuple[float, float, float] = (7.5, 0.0, 0.0)
    n_sites: int = 10

    def __post_init__(self):
        object.__setattr__(self, "r_ref", tuple(float(v) for v in self.r_ref))
        object.__setattr__(self, "delta_r", tuple(float(v) for v in self.delta_r))
        if len(self.r_ref) != 3 or len(self.delta_r) != 3:
            raise ValueError("r_ref and delta_r must be 3-vectors")
        if self.n_sites < 1:
            raise ValueError("n_sites must be at least 1")
        if self.n_sites > 1 and not np.linalg.norm(self.delta_r) > 0:
            raise ValueError("delta_r must be non-zero for more than one site")

    def shifted(self, offset) -> SiteLayout:
        return replace(self, r_ref=tuple(np.add(self.r_ref, offset)))


def target_positions(layout: SiteLayout) -> np.ndarray:
    """``(n_sites, 3)`` array of site positions."""
    i = np.arange(layout.n_sites)[:, None]
    return np.asarray(layout.r_ref) + i * np.asarray(layout.delta_r)


@dataclass(frozen=True)
class PhaseMask:
    phase: np.ndarray
    pitch: float = 1.0  # focal-plane micrometres per DFT sample

    def __post_init__(self):
        ph = np.asarray(self.phase, dtype=float)
        if ph.ndim != 2 or ph.shape[0] != ph.shape[1]:
            raise ValueError("phase mask must be a square grid")
        object.__setattr__(self, "phase", np.mod(ph, 2 * np.pi))

    @property
    def n(self) -> int:
        return self.phase.shape[0]


@dataclass(frozen=True)
class SpotMetrics:
    intensities: np.ndarray
    uniformity: float
    efficiency: float
    history: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


class HologramConfigError(ValueError):
    """Invalid synthesis request (grid size, target placement)."""


def focal_field(mask: PhaseMask) -> np.ndarray:
    """Centred focal-plane field of a unit-amplitude SLM illuminated by ``mask``."""
    return np.fft.fftshift(np.fft.fft2(np.exp(1j * mask.phase), norm="ortho"))


def uniformity(intensities) -> float:
    i = np.asarray(intensities, dtype=float)
    lo, hi = i.min(), i.max()
    if hi + lo == 0:
        return 0.0
    return float(1 - (hi - lo) / (hi + lo))


def _target_pixels(targets, n: int, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(targets, dtype=float))[:, :2]
    k = np.rint(pts / pitch).astype(int)
    half = n // 2
    if np.any(k < -half) or np.any(k >= half):
        raise HologramConfigError(f"target outside the {n}x{n} focal grid (|k| must stay below {half})")
    rows, cols = k[:, 1] + half, k[:, 0] + half
    if len(set(zip(rows.tolist(), cols.tolist()))) != len(rows):
        raise HologramConfigError("two targets fall on the same focal sample")
    return rows, cols


def spot_metrics(mask: PhaseMask, targets, history=None) -> SpotMetrics:
    """Independent forward propagation of ``mask`` and spot statistics."""
    rows, cols = _target_pixels(targets, mask.n, mask.pitch)
    inten = np.abs(focal_field(mask)) ** 2
    spots = inten[rows, cols]
    eff = float(spots.sum() / inten.sum())
    return SpotMetrics(spots, uniformity(spots), eff, np.empty(0) if history is None else np.asarray(history))


def wgs_synthesize(
    targets,
    grid: int = 512,
    iterations: int = 50,
    seed: int | None = 0,
    *,
    pitch: float = 0.75,
    rng: np.random.Generator | None = None,
) -> tuple[PhaseMask, SpotMetrics]:
    """Weighted Gerchberg-Saxton synthesis of a multi-spot phase mask.

    Parameters
    ----------
    targets : array_like, shape (K, 2) or (K, 3)
        Focal-plane spot positions in micrometres relative to the optical
        axis; a third (axial) column is ignored.
    grid : int
        Grid size ``N`` (power of two).
    iterations : int
        Number of WGS iterations.
    seed : int
        Master seed; the random initial phase comes from stream ``"wgs/init"``.
    pitch : float
        Focal-plane micrometres per DFT sample.

    Returns
    -------
    mask, metrics
        Metrics are recomputed from the final mask by a fresh forward
        transform. ``metrics.history`` holds the uniformity seen at each
        iteration.

    Notes
    -----
    Weights are updated with the amplitude ratio ``w <- w * mean|A| / |A_k|``.
    """
    n = int(grid)
    if n < 2 or n & (n - 1):
        raise HologramConfigError(f"grid size must be a power of two, got {grid}")
    if iterations < 1:
        raise HologramConfigError("need at least one iteration")
    rows, cols = _target_pixels(targets, n, pitch)
    # un-shifted indices of the targets in the raw fft2 output
    half = n // 2
    r_raw, c_raw = (rows - half) % n, (cols - half) % n

    gen = as_generator(rng, seed, "wgs/init")
    phase = gen.uniform(0.0, 2 * np.pi, size=(n, n))
    weights = np.ones(len(rows))
    history = np.empty(iterations)
    for it in range(iterations):
        far = np.fft.fft2(np.exp(1j * phase), norm="ortho")
        spots = far[r_raw, c_raw]
        amp = np.abs(spots)
        history[it] = uniformity(amp**2)
        weights = weights * (amp.mean() / amp)
        target = np.zeros((n, n), dtype=complex)
        target[r_raw, c_raw] = weights * spots / amp
        phase = np.angle(np.fft.ifft2(target, norm="ortho"))
    mask = PhaseMask(phase, pitch)
    return mask, spot_metrics(mask, np.column_stack([cols - half, rows - half]) * pitch, history)


# ---------------------------------------------------------------------------
# scan grids


def scan_grid(base: SiteLayout, extent: float, steps: int, plane: str = "xy") -> list[SiteLayout]:
    """Rigid displacements of ``base`` on a centred uniform grid.

    Offsets along each scanned axis are ``linspace(-extent, extent, steps)``.
    ``xy`` layouts are row-major in y (slow) then x (fast), so index
    ``iy * steps + ix``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if steps == 1:
        return [base]
    offs = np.linspace(-extent, extent, steps)
    if plane == "xy":
        return [base.shifted((dx, dy, 0.0)) for dy in offs for dx in offs]
    if plane == "z":
        return [base.shifted((0.0, 0.0, dz)) for dz in offs]
    raise ValueError(f"unknown scan plane {plane!r}")


def argmax_scan(count_maps) -> tuple[int, float]:
    """Index and value of the largest total; ties go to the lowest index."""
    totals = np.asarray(count_maps, dtype=float).ravel()
    if totals.size == 0:
        raise ValueError("empty count map")
    k = int(np.argmax(totals))
    return k, float(totals[k])


# ---------------------------------------------------------------------------
# mask IO


def save_mask(mask: PhaseMask, path: str | Path, fmt: str = "binary") -> Path:
    """Write a mask as binary (16-byte header + float64 LE row-major) or text."""
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MASK_MAGIC, mask.n, float(mask.pitch)))
            fh.write(mask.phase.astype("<f8").tobytes(order="C"))
    elif fmt == "text":
        np.savetxt(path, mask.phase, fmt="%.17g", header=f"N={mask.n} pitch={mask.pitch!r}")
    else:
        raise ValueError(f"unknown mask format {fmt!r}")
    return path


def load_mask(path: str | Path) -> PhaseMask:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MASK_MAGIC:
        _, n, pitch = _HEADER.unpack_from(raw)
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if data.size != n * n:
            raise ValueError(f"{path}: expected {n * n} samples, found {data.size}")
        return PhaseMask(data.reshape(n, n).copy(), pitch)
    header = raw.split(b"\n", 1)[0].decode()
    fields = dict(tok.split("=") for tok in header.lstrip("# ").split())
    return PhaseMask(np.loadtxt(path), float(fields["pitch"]))
