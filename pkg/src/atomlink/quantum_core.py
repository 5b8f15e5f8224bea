"""Finite-dimensional atom/photon state algebra.

Conventions (used by every other module):

* Photon polarization kets are stored in the linear ``(H, V)`` basis.
* Circular states are ``|sigma+> = (|H> + i|V>)/sqrt(2)`` and
  ``|sigma-> = (|H> - i|V>)/sqrt(2)``.
* Joint atom-photon amplitudes are ordered
  ``(+1 sigma-, +1 sigma+, -1 sigma-, -1 sigma+)`` where ``+1``/``-1`` label the
  ``m_F = +1`` / ``m_F = -1`` Zeeman sublevels.
* Stokes components are ``s1 = H/V``, ``s2 = D/A`` and ``s3 = sigma+/sigma-``,
  i.e. ``(<sigma_x>, <sigma_y>, <sigma_z>)`` of the polarization qubit with the
  circular states as the z eigenbasis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

SQRT_HALF = 1.0 / math.sqrt(2.0)
NULL_PROBABILITY = 1e-15

# Ratio between the analyzer angle of the measurement basis and the argument of
# the fitted fringe A*sin(phi + B) + C. Survival follows cos^2(theta) =
# (1 + cos 2 theta)/2, hence phi = 2 theta. Exposed, not hard-wired, because the
# conversion from a rotated waveplate angle is setup dependent.
FRINGE_ANGLE_FACTOR = 2.0


class InvalidStokesVector(ValueError):
    """Raised when a Stokes vector lies outside the Poincare sphere."""


@dataclass(frozen=True)
class PolarizationKet:
    amp_H: complex
    amp_V: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_H, self.amp_V], dtype=complex)

    @classmethod
    def from_vector(cls, v) -> PolarizationKet:
        return cls(complex(v[0]), complex(v[1]))

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalized(self) -> PolarizationKet:
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero ket")
        return PolarizationKet.from_vector(self.vector / n)

    def inner(self, other: PolarizationKet) -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.vector, other.vector))

    def stokes(self) -> StokesVector:
        h, v = self.amp_H, self.amp_V
        n2 = abs(h) ** 2 + abs(v) ** 2
        cross = h.conjugate() * v
        return StokesVector(
            (abs(h) ** 2 - abs(v) ** 2) / n2,
            2.0 * cross.real / n2,
            2.0 * cross.imag / n2,
        )


H = PolarizationKet(1.0 + 0j, 0j)
V = PolarizationKet(0j, 1.0 + 0j)
SIGMA_PLUS = PolarizationKet(SQRT_HALF + 0j, 1j * SQRT_HALF)
SIGMA_MINUS = PolarizationKet(SQRT_HALF + 0j, -1j * SQRT_HALF)


def circular_components(ket: PolarizationKet) -> tuple[complex, complex]:
    """Return ``(<sigma+|ket>, <sigma-|ket>)``."""
    return SIGMA_PLUS.inner(ket), SIGMA_MINUS.inner(ket)


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def length(self) -> float:
        return math.sqrt(self.s1**2 + self.s2**2 + self.s3**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])


@dataclass(frozen=True)
class WaveplateSetting:
    """Linear retarder; retardance pi is a half-wave plate, pi/2 a quarter-wave plate."""

    retardance: float
    fast_axis_angle: float

    def __post_init__(self):
        object.__setattr__(self, "retardance", float(self.retardance) % (2 * math.pi))
        object.__setattr__(self, "fast_axis_angle", float(self.fast_axis_angle) % math.pi)

    @classmethod
    def half_wave(cls, angle: float) -> WaveplateSetting:
        return cls(math.pi, angle)

    @classmethod
    def quarter_wave(cls, angle: float) -> WaveplateSetting:
        return cls(math.pi / 2, angle)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.fast_axis_angle), math.sin(self.fast_axis_angle)
        rot = np.array([[c, -s], [s, c]])
        half = self.retardance / 2
        core = np.diag([np.exp(-1j * half), np.exp(1j * half)])
        return rot @ core @ rot.T


def apply_waveplate(ket: PolarizationKet, wp: WaveplateSetting) -> PolarizationKet:
    return PolarizationKet.from_vector(wp.matrix() @ ket.vector)


def analyzer_basis(
    theta: float, basis_kind: Literal["circular", "linear"] = "circular"
) -> tuple[PolarizationKet, PolarizationKet]:
    """Orthonormal analyzer pair rotated by ``theta``.

    ``circular``: ``{cos t |s+> + sin t |s->, -sin t |s+> + cos t |s->}``;
    ``linear``: the same with ``|H>``, ``|V>`` in place of ``|s+>``, ``|s->``.
    The first ket is routed to detector D_H, the second to D_V.
    """
    c, s = math.cos(theta), math.sin(theta)
    if basis_kind == "circular":
        a, b = SIGMA_PLUS.vector, SIGMA_MINUS.vector
    elif basis_kind == "linear":
        a, b = H.vector, V.vector
    else:
        raise ValueError(f"unknown basis kind {basis_kind!r}")
    return PolarizationKet.from_vector(c * a + s * b), PolarizationKet.from_vector(-s * a + c * b)


@dataclass(frozen=True)
class JointAtomPhotonState:
    """Two-qubit atom (m_F = +1/-1) times photon (sigma-/sigma+) state.

    ``zeeman_splitting`` (MHz) and ``elapsed_time`` (us) optionally add the
    Larmor phase ``exp(i 2 pi dnu t)`` to the ``m_F = +1`` branch.
    """

    amplitudes: tuple[complex, complex, complex, complex]
    zeeman_splitting: float = 0.0
    elapsed_time: float = 0.0
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(2, 2)
        phase = np.exp(1j * 2 * math.pi * self.zeeman_splitting * self.elapsed_time)
        amps = amps * np.array([[phase], [1.0]])
        object.__setattr__(self, "amplitudes", tuple(complex(a) for a in np.asarray(self.amplitudes).ravel()))
        object.__setattr__(self, "_matrix", amps)

    @property
    def matrix(self) -> np.ndarray:
        """2x2 array indexed ``[atom, photon]`` with the precession phase applied."""
        return self._matrix.copy()

    @property
    def vector(self) -> np.ndarray:
        return self._matrix.ravel().copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self._matrix))

    def normalized(self) -> JointAtomPhotonState:
        n = self.norm()
        return JointAtomPhotonState(
            tuple(np.asarray(self.amplitudes) / n), self.zeeman_splitting, self.elapsed_time
        )

    def density_matrix(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())


def bell_state() -> JointAtomPhotonState:
    return JointAtomPhotonState((SQRT_HALF, 0.0, 0.0, SQRT_HALF))


def product_state(atom_plus: bool, photon: PolarizationKet) -> JointAtomPhotonState:
    p, m = circular_components(photon)
    row = (m, p)
    amps = row + (0.0, 0.0) if atom_plus else (0.0, 0.0) + row
    return JointAtomPhotonState(amps)


def tilted_emission_ket(sigma: Literal["+", "-"], tilt: float) -> PolarizationKet:
    """Polarization collected from a sigma transition viewed at ``tilt`` off the quantization axis.

    The dipole ``(x + i y)/sqrt(2)`` projects to ``(cos tilt, i)`` in the
    transverse plane, an ellipse with axis ratio ``cos tilt``.
    """
    c = math.cos(tilt)
    sign = 1.0 if sigma == "+" else -1.0
    return PolarizationKet(c + 0j, sign * 1j).normalized()


def emission_state(tilt: float = 0.0) -> JointAtomPhotonState:
    """Atom-photon state produced by the decay, with optional axis tilt.

    ``tilt = 0`` reproduces :func:`bell_state`.
    """
    e_minus = circular_components(tilted_emission_ket("-", tilt))
    e_plus = circular_components(tilted_emission_ket("+", tilt))
    amps = np.array([[e_minus[1], e_minus[0]], [e_plus[1], e_plus[0]]]) * SQRT_HALF
    return JointAtomPhotonState(tuple(amps.ravel()))


def photon_density_matrix(state: JointAtomPhotonState) -> np.ndarray:
    """Reduced photon density matrix in the (H, V) basis."""
    m = state.matrix  # [atom, (sigma-, sigma+)]
    to_hv = np.column_stack([SIGMA_MINUS.vector, SIGMA_PLUS.vector])
    psi = m @ to_hv.T  # [atom, (H, V)]
    rho = psi.T @ psi.conj()
    return rho / np.trace(rho).real


def stokes_from_density(rho: np.ndarray) -> StokesVector:
    return StokesVector(
        float((rho[0, 0] - rho[1, 1]).real),
        float(2 * rho[1, 0].real),
        float(2 * rho[1, 0].imag),
    )


class Projection(NamedTuple):
    probability: float
    state: object | None  # None signals a null outcome

    @property
    def is_null(self) -> bool:
        return self.state is None


def project_photon(state: JointAtomPhotonState, onto: PolarizationKet) -> Projection:
    """Project the photon onto ``onto``; the post-measurement atom is ``(amp_plus, amp_minus)``."""
    p, m = circular_components(onto)
    bra = np.array([m.conjugate(), p.conjugate()])  # <onto|sigma->, <onto|sigma+>
    atom = state.matrix @ bra
    prob = float(np.vdot(atom, atom).real)
    if prob < NULL_PROBABILITY:
        return Projection(prob, None)
    return Projection(prob, atom / math.sqrt(prob))


def project_atom_minus(state: JointAtomPhotonState) -> Projection:
    """Ideal state-selective push-out: keep the ``m_F = -1`` branch.

    Returns the survival probability and the heralded photon ket.
    """
    row = state.matrix[1]  # (sigma-, sigma+) amplitudes
    prob = float(np.vdot(row, row).real)
    if prob < NULL_PROBABILITY:
        return Projection(prob, None)
    row = row / math.sqrt(prob)
    ket = row[0] * SIGMA_MINUS.vector + row[1] * SIGMA_PLUS.vector
    return Projection(prob, PolarizationKet.from_vector(ket))


def atom_minus_probability(atom: np.ndarray) -> float:
    """Probability of ``m_F = -1`` for a post-projection atom vector ``(plus, minus)``."""
    return float(abs(atom[1]) ** 2 / (abs(atom[0]) ** 2 + abs(atom[1]) ** 2))


def stokes_and_purity(S: StokesVector) -> float:
    """Purity ``Tr(rho^2) = (1 + |S|^2)/2`` of the qubit with Stokes vector ``S``."""
    r = S.length()
    if r > 1.0 + 1e-9:
        raise InvalidStokesVector(f"|S| = {r:.6g} exceeds 1")
    return 0.5 * (1.0 + min(r, 1.0) ** 2)


def tilt_ellipticity(theta_tilt: float) -> float:
    """``tan(chi) = cos(theta)`` for a collection axis tilted by ``theta_tilt``."""
    return math.cos(theta_tilt)
