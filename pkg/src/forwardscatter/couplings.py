"""Atomic polarizabilities and the coefficients of the coupled light-spin equations.

Polarizabilities are returned in SI units (C^2 m^2 / J). They are made
dimensionless with the beam cross-section and the carrier frequency, and
then combined into a :class:`CouplingSet` holding every constant that
drives the linearized Stokes/spin dynamics.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Sequence

from scipy import constants as sc

from .angular import HalfInt, _triangle_ok, wigner_6j

__all__ = [
    "DomainError",
    "DetuningWarning",
    "TransitionSpec",
    "HyperfineSpec",
    "BeamGeometry",
    "CouplingSet",
    "AtomicData",
    "polarizabilities",
    "dimensionless_polarizabilities",
    "static_moments",
    "coupling_set",
    "hyperfine_polarizabilities",
    "cesium_faraday_factor",
    "scattering_cross_section",
    "photon_budget",
    "load_atomic_data",
    "DETUNING_WARN_RATIO",
]

HBAR = sc.hbar
C_LIGHT = sc.c
EPS0 = sc.epsilon_0
E_A0 = sc.e * sc.physical_constants["Bohr radius"][0]

DETUNING_WARN_RATIO = 20.0
DEFAULT_ETA_MAX = 0.2


class DomainError(ValueError):
    """A physical input is outside the domain where the formulas apply."""


class DetuningWarning(UserWarning):
    """The detuning is not large compared with the linewidth."""


def _check_detuning(detuning: float, gamma: float, label: str = "detuning") -> None:
    if detuning == 0 or not math.isfinite(detuning):
        raise DomainError(f"{label} must be nonzero and finite")
    if abs(detuning) / gamma < DETUNING_WARN_RATIO:
        warnings.warn(
            f"|{label}|/gamma = {abs(detuning) / gamma:.3g} is below {DETUNING_WARN_RATIO:g}; "
            "the far-detuned approximation is questionable",
            DetuningWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class TransitionSpec:
    """A single j0 -> j optical transition. Frequencies in rad/s."""

    j0: HalfInt
    j: HalfInt
    reduced_dipole_sq: float
    detuning: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "j0", HalfInt.of(self.j0))
        object.__setattr__(self, "j", HalfInt.of(self.j))
        if self.reduced_dipole_sq < 0:
            raise DomainError("reduced_dipole_sq must be >= 0")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if not _triangle_ok(self.j0.twice, self.j.twice, 2):
            raise DomainError(f"j0={self.j0} -> j={self.j} is not a dipole transition")
        _check_detuning(self.detuning, self.gamma)


@dataclass(frozen=True)
class HyperfineSpec:
    """A ground hyperfine level F0 coupled to several excited levels F.

    ``levels`` holds ``(F, detuning)`` pairs with detunings in rad/s.
    """

    nuclear_spin: HalfInt
    j0: HalfInt
    j: HalfInt
    F0: HalfInt
    levels: tuple
    reduced_dipole_sq: float
    gamma: float

    def __post_init__(self):
        for name in ("nuclear_spin", "j0", "j", "F0"):
            object.__setattr__(self, name, HalfInt.of(getattr(self, name)))
        levels = tuple((HalfInt.of(F), float(d)) for F, d in self.levels)
        object.__setattr__(self, "levels", levels)
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        I, j0, j, F0 = self.nuclear_spin.twice, self.j0.twice, self.j.twice, self.F0.twice
        if not _triangle_ok(I, j0, F0):
            raise DomainError(f"F0={self.F0} incompatible with I={self.nuclear_spin}, j0={self.j0}")
        for F, d in levels:
            if not (_triangle_ok(I, j, F.twice) and _triangle_ok(2, F0, F.twice)):
                raise DomainError(f"excited level F={F} violates a triangle rule")
            _check_detuning(d, self.gamma, f"detuning of F={F}")


@dataclass(frozen=True)
class BeamGeometry:
    """Probe beam and sample geometry (SI units, frequencies in rad/s)."""

    cross_section: float
    linear_density: float
    sample_length: float
    photon_flux: float
    pulse_duration: float
    larmor: float
    omega_bar: float

    def __post_init__(self):
        for name in ("cross_section", "sample_length", "pulse_duration", "omega_bar"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("linear_density", "photon_flux"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    @property
    def atom_number(self) -> float:
        return self.linear_density * self.sample_length

    @property
    def photon_number(self) -> float:
        return self.photon_flux * self.pulse_duration


@dataclass(frozen=True)
class CouplingSet:
    """Coefficients of the coupled Stokes/spin equations.

    ``Jx_bar`` is the total mean spin n0*j0*L and ``length`` the sample length,
    so that the mean spin per unit length is ``Jx_bar / length``.
    """

    alpha1_bar: float
    alpha2_bar: float
    beta: float
    epsilon: float
    kappa2: float
    omega2: float
    omega: float
    theta_y: float
    theta_z: float
    Jx_bar: float
    Xi3_bar: float
    Txy_bar: float
    Tx_bar: float
    length: float = 1.0

    @property
    def jx_density(self) -> float:
        return self.Jx_bar / self.length

    def with_(self, **changes) -> "CouplingSet":
        return replace(self, **changes)

    @classmethod
    def from_rates(
        cls,
        *,
        beta: float,
        epsilon: float = 0.0,
        kappa2: float = 0.0,
        omega: float = 0.0,
        Jx_bar: float,
        Xi3_bar: float,
        length: float = 1.0,
        theta_y: float | None = None,
        theta_z: float | None = None,
    ) -> "CouplingSet":
        """Build a coupling set directly from the dynamical constants."""
        return cls(
            alpha1_bar=math.nan,
            alpha2_bar=math.nan,
            beta=beta,
            epsilon=epsilon,
            kappa2=kappa2,
            omega2=0.0,
            omega=omega,
            theta_y=epsilon if theta_y is None else theta_y,
            theta_z=beta if theta_z is None else theta_z,
            Jx_bar=Jx_bar,
            Xi3_bar=Xi3_bar,
            Txy_bar=math.nan,
            Tx_bar=math.nan,
            length=length,
        )


def _sign(exponent_twice: int) -> float:
    """(-1)**(x) for x = exponent_twice / 2, which must be an integer."""
    if exponent_twice % 2:
        raise DomainError("non-integer phase exponent")
    return -1.0 if (exponent_twice // 2) % 2 else 1.0


def polarizabilities(spec: TransitionSpec) -> tuple[float, float, float]:
    """Isotropic, orientational and alignment polarizabilities (C^2 m^2 / J)."""
    j0, j = spec.j0, spec.j
    base = spec.reduced_dipole_sq / (-HBAR * spec.detuning)
    alpha0 = base / (3.0 * math.sqrt(j0.twice + 1))
    alpha1 = _sign(j.twice + j0.twice) / math.sqrt(2.0) * wigner_6j(1, 1, 1, j0, j0, j) * base
    alpha2 = _sign(j.twice + j0.twice + 2) * wigner_6j(1, 1, 2, j0, j0, j) * base
    return alpha0, alpha1, alpha2


def dimensionless_polarizabilities(alpha1: float, alpha2: float, geom: BeamGeometry) -> tuple[float, float]:
    """4*pi*omega_bar*alpha/(S0*c) with alpha taken in Gaussian volume units."""
    scale = 4 * math.pi * geom.omega_bar / (geom.cross_section * C_LIGHT) / (4 * math.pi * EPS0)
    return alpha1 * scale, alpha2 * scale


def static_moments(j0) -> tuple[float, float]:
    """Mean alignment T_xy and orientation T_x of a spin fully polarized along x."""
    j = HalfInt.of(j0).value
    if j < 0.5:
        raise DomainError("static moments need j0 >= 1/2")
    txy = math.sqrt(15 * j * (2 * j - 1)) / (2 * math.sqrt(2 * (j + 1) * (2 * j + 1) * (2 * j + 3)))
    tx = math.sqrt(3 * j) / math.sqrt((j + 1) * (2 * j + 1))
    return txy, tx


def _faraday_coefficient(j: float) -> float:
    return math.sqrt(3.0) / (2 * math.sqrt(j * (j + 1) * (2 * j + 1)))


def _ellipticity_coefficient(j: float) -> float:
    return math.sqrt(15 * (2 * j - 1)) / (2 * math.sqrt(2 * j * (j + 1) * (2 * j + 1) * (2 * j + 3)))


def coupling_set(alpha1_bar: float, alpha2_bar: float, j0, geom: BeamGeometry) -> CouplingSet:
    """Assemble every coefficient of the linear dynamics from polarizabilities and geometry."""
    j = HalfInt.of(j0).value
    txy, tx = static_moments(j0)
    beta = _faraday_coefficient(j) * alpha1_bar
    epsilon = _ellipticity_coefficient(j) * alpha2_bar
    kappa2 = alpha2_bar * txy * geom.linear_density
    omega2 = 2 * _ellipticity_coefficient(j) * alpha2_bar * geom.photon_flux
    return CouplingSet(
        alpha1_bar=alpha1_bar,
        alpha2_bar=alpha2_bar,
        beta=beta,
        epsilon=epsilon,
        kappa2=kappa2,
        omega2=omega2,
        omega=geom.larmor + omega2,
        theta_y=epsilon,
        theta_z=beta,
        Jx_bar=geom.linear_density * j * geom.sample_length,
        Xi3_bar=geom.photon_flux,
        Txy_bar=txy,
        Tx_bar=tx,
        length=geom.sample_length,
    )


def _hyperfine_weight(spec: HyperfineSpec, F: HalfInt) -> float:
    return (F.twice + 1) * (spec.F0.twice + 1) * wigner_6j(spec.nuclear_spin, spec.j, F, 1, spec.F0, spec.j0) ** 2


def hyperfine_polarizabilities(spec: HyperfineSpec) -> tuple[float, float]:
    """Orientational and alignment polarizabilities summed over excited hyperfine levels.

    Each level F contributes the single-transition F0 -> F expression with
    the reduced dipole scaled by (2F+1)(2F0+1){I j F; 1 F0 j0}^2.
    """
    if not spec.levels:
        raise DomainError("hyperfine level list is empty")
    F0 = spec.F0
    a1 = a2 = 0.0
    for F, detuning in spec.levels:
        base = spec.reduced_dipole_sq * _hyperfine_weight(spec, F) / (-HBAR * detuning)
        a1 += _sign(F.twice + F0.twice) / math.sqrt(2.0) * wigner_6j(1, 1, 1, F0, F0, F) * base
        a2 += _sign(F.twice + F0.twice + 2) * wigner_6j(1, 1, 2, F0, F0, F) * base
    return a1, a2


FARADAY_NUMERATOR = (Fraction(11, 60), Fraction(-7, 320), Fraction(-7, 192))
FARADAY_DENOMINATOR = (Fraction(3, 10), Fraction(7, 10))


def cesium_faraday_factor(gamma: float, delta5: float, delta4: float, delta3: float) -> float:
    """Faraday angle per spin in units of the inverse scattering cross-section, beta*S0/sigma.

    Rational function of gamma/Delta_F for the Cs D2 line probed from F0=4.
    """
    for d in (delta5, delta4, delta3):
        if d == 0:
            raise DomainError("detunings must be nonzero")
    x5, x4, x3 = gamma / delta5, gamma / delta4, gamma / delta3
    n5, n4, n3 = (float(c) for c in FARADAY_NUMERATOR)
    d5, d4 = (float(c) for c in FARADAY_DENOMINATOR)
    den = d5 * x5**2 + d4 * x4**2
    if den == 0:
        raise DomainError("vanishing denominator in the Faraday factor")
    return (n5 * x5 + n4 * x4 + n3 * x3) / den


def scattering_cross_section(beta: float, cross_section: float, faraday_factor: float) -> float:
    """Off-resonant scattering cross-section implied by f = beta*S0/sigma."""
    if faraday_factor == 0:
        raise DomainError("Faraday factor is zero")
    return beta * cross_section / faraday_factor


def photon_budget(eta: float, S0: float, sigma_delta: float, N_atoms: float, eta_max: float = DEFAULT_ETA_MAX):
    """Photon number eta*S0/sigma and whether both loss inequalities hold.

    Feasible means N_atoms*sigma/S0 <= eta_max and N_ph*sigma/S0 <= eta_max.
    """
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    if not sigma_delta > 0:
        raise DomainError("sigma_delta must be positive")
    n_max = S0 / sigma_delta
    n_ph = eta * n_max
    feasible = (N_atoms / n_max <= eta_max) and (n_ph / n_max <= eta_max)
    return n_ph, feasible


@dataclass(frozen=True)
class AtomicData:
    """Reference atomic data for a hyperfine-resolved line (angular frequencies in rad/s)."""

    species: str
    nuclear_spin: HalfInt
    j0: HalfInt
    j: HalfInt
    F0: HalfInt
    gamma: float
    omega_bar: float
    reduced_dipole_sq: float
    level_offsets: tuple  # ((F, offset rad/s), ...), offset relative to the reference level
    reference_level: HalfInt
    source: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def detunings(self, reference_detuning: float) -> dict:
        """Detuning of every excited level given the detuning from the reference level."""
        return {F: reference_detuning - off for F, off in self.level_offsets}

    def hyperfine_spec(self, reference_detuning: float) -> HyperfineSpec:
        levels = tuple(self.detunings(reference_detuning).items())
        return HyperfineSpec(
            nuclear_spin=self.nuclear_spin,
            j0=self.j0,
            j=self.j,
            F0=self.F0,
            levels=levels,
            reduced_dipole_sq=self.reduced_dipole_sq,
            gamma=self.gamma,
        )

    def faraday_factor(self, reference_detuning: float) -> float:
        """beta*S0/sigma for this species; only the Cs D2, F0=4 pattern is tabulated."""
        det = {F.twice: d for F, d in self.detunings(reference_detuning).items()}
        if self.F0.twice != 8 or not {10, 8, 6} <= set(det):
            raise DomainError(f"no Faraday-factor formula for {self.species}")
        return cesium_faraday_factor(self.gamma, det[10], det[8], det[6])


def _half(value) -> HalfInt:
    return HalfInt.of(value)


def load_atomic_data(name_or_path: str | Path) -> AtomicData:
    """Load atomic reference data by bundled species name or from a JSON file.

    Frequencies in the file are in Hz and are converted to rad/s here.
    """
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        raw = json.loads(path.read_text())
    else:
        bundled = resources.files("forwardscatter") / "data" / f"{str(name_or_path).lower()}.json"
        if not bundled.is_file():
            raise FileNotFoundError(f"unknown atomic species or file: {name_or_path}")
        raw = json.loads(bundled.read_text())
    two_pi = 2 * math.pi
    levels = tuple((_half(lv["F"]), two_pi * float(lv["offset_hz"])) for lv in raw["levels"])
    dipole = float(raw["reduced_dipole_ea0"]) * E_A0
    return AtomicData(
        species=raw["species"],
        nuclear_spin=_half(raw["nuclear_spin"]),
        j0=_half(raw["j0"]),
        j=_half(raw["j"]),
        F0=_half(raw["F0"]),
        gamma=two_pi * float(raw["gamma_hz"]),
        omega_bar=two_pi * C_LIGHT / (float(raw["wavelength_nm"]) * 1e-9),
        reduced_dipole_sq=dipole**2,
        level_offsets=levels,
        reference_level=_half(raw["reference_level"]),
        source=raw.get("source", ""),
        extra={k: v for k, v in raw.items() if k not in {"levels"}},
    )

