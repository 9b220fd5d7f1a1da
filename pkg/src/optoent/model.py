"""Physical parameters of the reduced optomechanical cavity and derived scales.

All quantities are SI. Quadratures are dimensionless: ``B1 = x / x_zpf`` and
``B2 = p / p_zpf`` with ``x_zpf = sqrt(hbar / (M w_m))`` and
``p_zpf = sqrt(hbar M w_m)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

HBAR = 1.054571817e-34
C_LIGHT = 299792458.0
TWO_PI = 2.0 * math.pi

__all__ = [
    "HBAR",
    "C_LIGHT",
    "TWO_PI",
    "ModelError",
    "SystemParams",
    "DerivedScales",
    "coupling_from_power",
    "interaction_frequency",
    "coupling_from_interaction_frequency",
    "sql_free_mass",
    "derived_scales",
    "aligo_params",
    "free_mass_params",
]


class ModelError(ValueError):
    """Invalid physical parameter."""


def _require_positive(**values):
    for name, value in values.items():
        if value is None or not np.isfinite(value) or value <= 0:
            raise ModelError(f"{name} must be strictly positive, got {value!r}")


def coupling_from_power(circulating_power, arm_length, wavelength):
    """Optomechanical coupling ``G = sqrt(2 w0 P_c / (hbar L c))``.

    Parameters
    ----------
    circulating_power : float
        Power circulating in the arm cavity, W.
    arm_length : float
        Cavity length, m.
    wavelength : float
        Laser wavelength, m.

    Returns
    -------
    float
        ``G`` in rad s^-1 m^-1.
    """
    _require_positive(circulating_power=circulating_power,
                      arm_length=arm_length, wavelength=wavelength)
    omega0 = TWO_PI * C_LIGHT / wavelength
    return math.sqrt(2.0 * omega0 * circulating_power / (HBAR * arm_length * C_LIGHT))


def interaction_frequency(coupling, mass, cavity_decay):
    """Characteristic interaction frequency ``2 G sqrt(hbar / (M gamma))``."""
    _require_positive(mass=mass, cavity_decay=cavity_decay)
    if coupling < 0:
        raise ModelError(f"coupling must be non-negative, got {coupling!r}")
    return 2.0 * coupling * math.sqrt(HBAR / (mass * cavity_decay))


def coupling_from_interaction_frequency(omega_q, mass, cavity_decay):
    """Inverse of :func:`interaction_frequency`."""
    _require_positive(mass=mass, cavity_decay=cavity_decay)
    if omega_q < 0:
        raise ModelError(f"omega_q must be non-negative, got {omega_q!r}")
    return omega_q / (2.0 * math.sqrt(HBAR / (mass * cavity_decay)))


def sql_free_mass(omega, mass):
    """Free-mass standard quantum limit ``2 hbar / (M Omega^2)`` in m^2/Hz.

    Accepts scalars or arrays. Zero frequency is rejected.
    """
    _require_positive(mass=mass)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega == 0):
        raise ModelError("the free-mass SQL diverges at zero frequency")
    out = 2.0 * HBAR / (mass * omega**2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SystemParams:
    """Constants of the reduced single-cavity model.

    ``coupling`` may be omitted when power, length and wavelength are given;
    it is then derived from them. ``detuning`` is stored only so that a
    request for a detuned cavity fails loudly.
    """

    mass: float
    mech_freq: float
    mech_damping: float
    cavity_decay: float
    arm_length: Optional[float] = None
    circulating_power: Optional[float] = None
    laser_wavelength: Optional[float] = None
    coupling: Optional[float] = None
    detuning: float = 0.0

    def __post_init__(self):
        _require_positive(mass=self.mass, mech_freq=self.mech_freq,
                          cavity_decay=self.cavity_decay)
        if not np.isfinite(self.mech_damping) or self.mech_damping < 0:
            raise ModelError(f"mech_damping must be non-negative, got {self.mech_damping!r}")
        if self.detuning != 0:
            raise ModelError("only the resonant cavity (detuning = 0) is supported")
        for name in ("arm_length", "circulating_power", "laser_wavelength"):
            value = getattr(self, name)
            if value is not None:
                _require_positive(**{name: value})
        if self.coupling is None:
            if None in (self.arm_length, self.circulating_power, self.laser_wavelength):
                raise ModelError("coupling is undetermined: give it directly or give "
                                 "arm_length, circulating_power and laser_wavelength")
            object.__setattr__(self, "coupling", coupling_from_power(
                self.circulating_power, self.arm_length, self.laser_wavelength))
        elif not np.isfinite(self.coupling) or self.coupling < 0:
            raise ModelError(f"coupling must be non-negative, got {self.coupling!r}")

    @classmethod
    def from_interaction_frequency(cls, omega_q, *, mass, mech_freq, mech_damping,
                                   cavity_decay):
        """Build parameters with ``G`` chosen to give the requested ``Omega_q``."""
        coupling = coupling_from_interaction_frequency(omega_q, mass, cavity_decay)
        return cls(mass=mass, mech_freq=mech_freq, mech_damping=mech_damping,
                   cavity_decay=cavity_decay, coupling=coupling)

    def replace(self, **changes) -> "SystemParams":
        # a derived coupling must be recomputed when its inputs change
        derived_inputs = {"arm_length", "circulating_power", "laser_wavelength"}
        if derived_inputs & changes.keys() and "coupling" not in changes \
                and self.arm_length is not None:
            changes["coupling"] = None
        return dataclasses.replace(self, **changes)

    @property
    def omega_q(self) -> float:
        return interaction_frequency(self.coupling, self.mass, self.cavity_decay)

    @property
    def alpha(self) -> float:
        """Reduced drive coefficient ``Omega_q sqrt(M / hbar)`` = ``2 G / sqrt(gamma)``."""
        return self.omega_q * math.sqrt(self.mass / HBAR)

    @property
    def x_zpf(self) -> float:
        return math.sqrt(HBAR / (self.mass * self.mech_freq))

    @property
    def p_zpf(self) -> float:
        return math.sqrt(HBAR * self.mass * self.mech_freq)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DerivedScales:
    omega_q: float
    alpha: float
    x_zpf: float
    sql: Callable = field(repr=False, compare=False)


def derived_scales(params: SystemParams) -> DerivedScales:
    mass = params.mass
    return DerivedScales(
        omega_q=params.omega_q,
        alpha=params.alpha,
        x_zpf=params.x_zpf,
        sql=lambda omega: sql_free_mass(omega, mass),
    )


def aligo_params(**overrides) -> SystemParams:
    """Reduced-cavity fit of the aLIGO antisymmetric mode."""
    values = dict(
        mass=9.446,
        mech_freq=TWO_PI * 0.9991,
        mech_damping=TWO_PI * 1e-3,
        cavity_decay=TWO_PI * 424.6,
        arm_length=3995.0,
        circulating_power=322.7e3,
        laser_wavelength=1064e-9,
    )
    values.update(overrides)
    return SystemParams(**values)


def free_mass_params(omega_q, *, mass=1.0, mech_freq=TWO_PI * 1.0,
                     mech_damping=TWO_PI * 0.01, cavity_decay=TWO_PI * 1e7):
    """Heavy suspended oscillator in the free-mass regime.

    The cavity bandwidth defaults to a value far above every other frequency
    so that the adiabatic and full models coincide.
    """
    return SystemParams.from_interaction_frequency(
        omega_q, mass=mass, mech_freq=mech_freq, mech_damping=mech_damping,
        cavity_decay=cavity_decay)
