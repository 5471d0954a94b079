"""Closed-form input-output relations when the alignment couplings vanish.

With epsilon = kappa2 = 0 the field equations reduce to a Faraday rotation
driven by J_z and the spins precess while picking up the back-action of
Xi_2. Everything here is returned as explicit coefficients or kernels so
that variances follow from quadratic forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .couplings import C_LIGHT, DomainError

__all__ = [
    "PreconditionError",
    "SpinHalfScenario",
    "LinearMap",
    "MagneticMap",
    "SpatialKernels",
    "FaradayResult",
    "io_map_zero_field",
    "io_map_magnetic",
    "spatial_solution",
    "faraday_xi",
    "retarded_initial",
    "input_covariance",
]

STATE_LABELS = ("Jz", "Jy", "Y1", "Y2")


class PreconditionError(ValueError):
    """An operation was called outside the regime it is defined for."""


@dataclass(frozen=True)
class SpinHalfScenario:
    beta: float
    Xi3_bar: float
    Jx_bar: float
    T: float
    L: float
    Omega0: float = 0.0
    xi1_in: float = 0.0
    xi2_in: float = 0.0
    retarded: bool = False
    c: float = C_LIGHT

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")
        for name in ("Xi3_bar", "Jx_bar", "T", "L"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        for name in ("xi1_in", "xi2_in"):
            if getattr(self, name) < -1:
                raise DomainError(f"{name} must be >= -1")

    @property
    def jx_density(self) -> float:
        return self.Jx_bar / self.L if self.L > 0 else 0.0


@dataclass(frozen=True)
class LinearMap:
    """out = matrix @ in over the labelled variables.

    Field variables are pulse-integrated, Y_i = int_0^T Xi_i dt, so the map
    is finite dimensional.
    """

    matrix: np.ndarray
    inputs: tuple = STATE_LABELS
    outputs: tuple = STATE_LABELS

    def apply(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def covariance(self, sigma_in) -> np.ndarray:
        return self.matrix @ np.asarray(sigma_in, dtype=float) @ self.matrix.T

    def coefficient(self, output: str, inp: str) -> float:
        return float(self.matrix[self.outputs.index(output), self.inputs.index(inp)])


def io_map_zero_field(scn: SpinHalfScenario) -> LinearMap:
    """Pulse map without a magnetic field.

    J_z is a QND variable, J_y picks up beta*Jx*int(Xi_2), and
    Xi_1^out(t) = Xi_1^in(t) + 2*beta*Xi3*J_z^in, i.e. Y_1 gains 2*beta*Xi3*T*J_z.
    """
    if scn.Omega0 != 0:
        raise PreconditionError("io_map_zero_field requires Omega0 = 0")
    m = np.eye(4)
    m[1, 3] = scn.beta * scn.Jx_bar
    m[2, 0] = 2 * scn.beta * scn.Xi3_bar * scn.T
    return LinearMap(m)


def input_covariance(scn: SpinHalfScenario, spin_variance: float | None = None) -> np.ndarray:
    """Coherent spin state plus white Stokes noise, over (Jz, Jy, Y1, Y2)."""
    sv = scn.Jx_bar / 2 if spin_variance is None else spin_variance
    shot = scn.Xi3_bar * scn.T
    return np.diag([sv, sv, shot * (1 + scn.xi1_in), shot * (1 + scn.xi2_in)])


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class MagneticMap:
    """Spin and output-field response at time t with Larmor precession.

    J(t) = rotation @ J(0) + int_0^t spin_kernel(t') Xi_2(t') dt'
    Xi_1^out(t) = Xi_1^in(t) + field_spin @ J(0) + int_0^t field_kernel(t') Xi_2(t') dt'
    """

    t: float
    beta: float
    Xi3_bar: float
    Jx_bar: float
    Omega0: float

    @property
    def rotation(self) -> np.ndarray:
        return _rotation(self.Omega0 * self.t)

    def spin_kernel(self, tp) -> np.ndarray:
        """Kernels onto (J_z, J_y), shape (2, ...) for array tp."""
        tau = self.Omega0 * (self.t - np.asarray(tp, dtype=float))
        return self.beta * self.Jx_bar * np.array([np.sin(tau), np.cos(tau)])

    @property
    def field_spin(self) -> np.ndarray:
        w = self.Omega0 * self.t
        return 2 * self.beta * self.Xi3_bar * np.array([math.cos(w), math.sin(w)])

    def field_kernel(self, tp) -> np.ndarray:
        tau = self.Omega0 * (self.t - np.asarray(tp, dtype=float))
        return 2 * self.beta**2 * self.Xi3_bar * self.Jx_bar * np.sin(tau)


def io_map_magnetic(scn: SpinHalfScenario, t: float) -> MagneticMap:
    if t < 0:
        raise DomainError("t must be >= 0")
    return MagneticMap(t, scn.beta, scn.Xi3_bar, scn.Jx_bar, scn.Omega0)


@dataclass(frozen=True)
class SpatialKernels:
    """Kernels of the spatially resolved solution at a point (z, t).

    Spin densities at z depend on the initial densities at the same z and on
    Xi_2^in; Xi_1(z, t) integrates the spins over [0, z].
    """

    z: float
    t: float
    beta: float
    Xi3_bar: float
    jx_density: float
    Omega0: float
    retarded: bool
    c: float

    def _lag(self, zp):
        if not self.retarded:
            return np.zeros_like(np.asarray(zp, dtype=float))
        return (self.z - np.asarray(zp, dtype=float)) / self.c

    @property
    def field_delay(self) -> float:
        """Delay of the boundary field reaching z; zero unless retarded."""
        return self.z / self.c if self.retarded else 0.0

    @property
    def spin_rotation(self) -> np.ndarray:
        return _rotation(self.Omega0 * self.t)

    def spin_xi2_kernel(self, tp) -> np.ndarray:
        """Kernels of the spin density at z onto Xi_2^in(t'), shape (2, ...)."""
        tp = np.asarray(tp, dtype=float)
        tau = self.t - self.field_delay
        w = self.beta * self.jx_density * np.array([np.sin(self.Omega0 * (tau - tp)), np.cos(self.Omega0 * (tau - tp))])
        return np.where(tp <= tau, w, 0.0)

    def xi1_spin_kernel(self, zp) -> np.ndarray:
        """Kernels of Xi_1(z, t) onto (J_z^in(z'), J_y^in(z')), zero outside [0, z]."""
        zp = np.asarray(zp, dtype=float)
        w = self.Omega0 * (self.t - self._lag(zp))
        k = 2 * self.beta * self.Xi3_bar * np.array([np.cos(w), np.sin(w)])
        return np.where((zp >= 0) & (zp <= self.z), k, 0.0)

    def xi1_self_kernel(self, tp) -> np.ndarray:
        """Kernel of Xi_1(z, t) onto Xi_2^in(t'), already integrated over z' in [0, z]."""
        tp = np.asarray(tp, dtype=float)
        tau = self.t - self.field_delay
        k = 2 * self.beta**2 * self.Xi3_bar * self.jx_density * self.z * np.sin(self.Omega0 * (tau - tp))
        return np.where(tp <= tau, k, 0.0)

    def evaluate(
        self,
        Jz_in: Callable,
        Jy_in: Callable,
        Xi1_in: Callable,
        Xi2_in: Callable,
        n_nodes: int = 64,
    ) -> tuple[float, float, float]:
        """(J_z(z,t), J_y(z,t), Xi_1(z,t)) for given input functions, by Gauss-Legendre quadrature."""
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        tau = max(self.t - self.field_delay, 0.0)
        tq = 0.5 * tau * (x + 1)
        wt = 0.5 * tau * w
        zq = 0.5 * self.z * (x + 1)
        wz = 0.5 * self.z * w
        j0 = np.array([Jz_in(self.z), Jy_in(self.z)], dtype=float)
        drive = Xi2_in(tq)
        spins = self.spin_rotation @ j0 + self.spin_xi2_kernel(tq) @ (wt * drive)
        xi1 = float(Xi1_in(self.t - self.field_delay))
        if self.z > 0:
            k = self.xi1_spin_kernel(zq)
            xi1 += float(np.sum(wz * (k[0] * Jz_in(zq) + k[1] * Jy_in(zq))))
            xi1 += float(np.sum(wt * self.xi1_self_kernel(tq) * drive))
        return float(spins[0]), float(spins[1]), xi1


def spatial_solution(scn: SpinHalfScenario, z: float, t: float) -> SpatialKernels:
    if not 0 <= z <= scn.L:
        raise DomainError(f"z={z} outside [0, {scn.L}]")
    if t < 0:
        raise DomainError("t must be >= 0")
    return SpatialKernels(z, t, scn.beta, scn.Xi3_bar, scn.jx_density, scn.Omega0, scn.retarded, scn.c)


class FaradayResult(NamedTuple):
    xi1: float
    kappa_sq: float


def faraday_xi(xi1_in: float, eta: float, f: float, betaJ: float) -> FaradayResult:
    """Output Mandel parameter of the Faraday signal, xi1_in + 2*eta*f*betaJ."""
    if betaJ < 0:
        raise DomainError("betaJ must be >= 0")
    k2 = 2 * eta * f * betaJ
    return FaradayResult(xi1_in + k2, k2)


def retarded_initial(Jz_in, Jy_in, z, Omega0: float, c: float = C_LIGHT):
    """Rotate initial spin profiles by Omega0*z/c so the retarded solution starts coherently."""
    z = np.asarray(z, dtype=float)
    w = Omega0 * z / c
    cw, sw = np.cos(w), np.sin(w)
    jz = np.asarray(Jz_in, dtype=float)
    jy = np.asarray(Jy_in, dtype=float)
    return cw * jz + sw * jy, -sw * jz + cw * jy
