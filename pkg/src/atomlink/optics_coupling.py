"""Scalar Gaussian mode-overlap model of atom-to-waveguide coupling.

The waveguide mode is imaged back to the atom plane (waist = MFD/2 divided by
the magnification) and overlapped with the collection mode of the objective
(waist ``lambda / (pi NA)``). Transverse offsets give the displaced-Gaussian
overlap per axis. An axial offset gives the longitudinal overlap of two
Gaussian beams per axis, ``(1 + (dz/z_a)^2)^(-1/2)`` with
``z_a = pi (w_a^2 + w_coll^2) / lambda``. The model is separable in x, y
and z.

Lengths are in micrometres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CollectionOptics:
    numerical_aperture: float = 0.7
    magnification: float = 3.33
    mfd: tuple[float, float] = (3.1, 2.1)
    pitch: float = 25.0
    wavelength: float = 0.780
    peak_efficiency: float = 0.5

    def __post_init__(self):
        if not 0 < self.numerical_aperture < 1:
            raise ValueError("numerical aperture must lie in (0, 1)")
        if not self.magnification > 0:
            raise ValueError("magnification must be positive")
        if min(self.mfd) <= 0 or self.wavelength <= 0:
            raise ValueError("mode-field diameters and wavelength must be positive")
        if not 0 <= self.peak_efficiency <= 1:
            raise ValueError("peak efficiency must lie in [0, 1]")

    @property
    def site_pitch(self) -> float:
        """Waveguide pitch imaged into the atom plane."""
        return self.pitch / self.magnification


@dataclass(frozen=True)
class CouplingProfile:
    displacement: np.ndarray
    efficiency: np.ndarray
    peak: float


class ProfileError(ValueError):
    """Profile does not cross half maximum on both sides."""


def atom_plane_mode(optics: CollectionOptics = CollectionOptics()) -> tuple[float, float, float]:
    """Waveguide waists ``(w_x, w_y)`` in the atom plane and the collection waist."""
    w_x = optics.mfd[0] / 2 / optics.magnification
    w_y = optics.mfd[1] / 2 / optics.magnification
    w_coll = optics.wavelength / (math.pi * optics.numerical_aperture)
    return w_x, w_y, w_coll


def axial_ranges(optics: CollectionOptics = CollectionOptics()) -> tuple[float, float]:
    w_x, w_y, w_c = atom_plane_mode(optics)
    lam = optics.wavelength
    return math.pi * (w_x**2 + w_c**2) / lam, math.pi * (w_y**2 + w_c**2) / lam


def coupling_efficiency(displacement, optics: CollectionOptics = CollectionOptics()):
    """Coupling efficiency for an atom displaced by ``displacement`` (..., 3) um."""
    d = np.asarray(displacement, dtype=float)
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    w_x, w_y, w_c = atom_plane_mode(optics)
    z_x, z_y = axial_ranges(optics)
    eta = optics.peak_efficiency * np.exp(-2 * dx**2 / (w_x**2 + w_c**2) - 2 * dy**2 / (w_y**2 + w_c**2))
    eta = eta / np.sqrt((1 + (dz / z_x) ** 2) * (1 + (dz / z_y) ** 2))
    return eta if eta.ndim else float(eta)


def axis_profile(axis: int, extent: float, n: int = 2001, optics: CollectionOptics = CollectionOptics()) -> CouplingProfile:
    """Sample the efficiency along one axis through the optimum."""
    x = np.linspace(-extent, extent, n)
    d = np.zeros((n, 3))
    d[:, axis] = x
    return CouplingProfile(x, coupling_efficiency(d, optics), optics.peak_efficiency)


def fwhm(profile: CouplingProfile) -> float:
    """Full width at half maximum by linear interpolation between samples."""
    x = np.asarray(profile.displacement, dtype=float)
    y = np.asarray(profile.efficiency, dtype=float)
    k = int(np.argmax(y))
    half = y[k] / 2
    left = np.nonzero(y[:k] < half)[0]
    right = np.nonzero(y[k:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ProfileError("profile does not fall below half maximum on both sides; widen the sampled range")
    i = left[-1]
    j = k + right[0]
    x_l = np.interp(half, [y[i], y[i + 1]], [x[i], x[i + 1]])
    x_r = np.interp(half, [y[j], y[j - 1]], [x[j], x[j - 1]])
    return float(x_r - x_l)


def model_fwhms(optics: CollectionOptics = CollectionOptics()) -> tuple[float, float, float]:
    """FWHM of the coupling along x, y and z."""
    w = max(atom_plane_mode(optics))
    z = max(axial_ranges(optics))
    return (
        fwhm(axis_profile(0, 4 * w, optics=optics)),
        fwhm(axis_profile(1, 4 * w, optics=optics)),
        fwhm(axis_profile(2, 6 * z, optics=optics)),
    )


def map_atom_to_waveguide_plane(position, optics: CollectionOptics = CollectionOptics()):
    return np.asarray(position, dtype=float) * optics.magnification if np.ndim(position) else float(position) * optics.magnification
