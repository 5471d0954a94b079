"""Laplace-space transfer matrices and their space-time inversion.

The linear system for the Laplace images (p in space, s in time) of the
Stokes fluctuations Xi = (Xi_1, Xi_2) and spin densities J = (J_z, J_y) is

    A(p, s) [Xi; J] = [Xi_in(s); J_in(p)]

with a determinant that is quadratic in p. Its inverse is written in blocks
``[[M, F], [G, N]]``. The p-inversion is done analytically through the two
roots of the determinant; the s-inversion is numerical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .couplings import CouplingSet

__all__ = [
    "LaplacePoint",
    "KernelMatrices",
    "NearSingularError",
    "ContourError",
    "AccuracyError",
    "QuadratureConfig",
    "PartialFraction",
    "TimeDomainKernels",
    "determinant",
    "system_matrix",
    "kernel_images",
    "numerator_coefficients",
    "p_partial_fraction",
    "dispersion_roots_p",
    "dispersion_roots_s",
    "spatial_images",
    "invert_talbot",
    "invert_dehoog",
    "kernel_time_domain",
    "kernel_time_domain_grid",
    "kernel_time_domain_2d",
    "SINGULAR_THRESHOLD",
]

SINGULAR_THRESHOLD = 1e-300
CONTOUR_THRESHOLD = 1e-280


class NearSingularError(ArithmeticError):
    def __init__(self, p, s, value):
        super().__init__(f"|det| = {abs(value):.3g} below threshold at p={p}, s={s}")
        self.p, self.s, self.value = p, s, value


class ContourError(ArithmeticError):
    """A Laplace variable sits on a singularity of the partially inverted kernels."""


class AccuracyError(ArithmeticError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class LaplacePoint:
    p: complex
    s: complex

    def __post_init__(self):
        for v in (self.p, self.s):
            if not (math.isfinite(complex(v).real) and math.isfinite(complex(v).imag)):
                raise ValueError("Laplace variables must be finite")


@dataclass(frozen=True)
class KernelMatrices:
    """M: field -> field, N: spin -> spin, F: spin -> field, G: field -> spin."""

    M: np.ndarray
    N: np.ndarray
    F: np.ndarray
    G: np.ndarray

    def block(self) -> np.ndarray:
        return np.block([[self.M, self.F], [self.G, self.N]])


def _params(cs: CouplingSet):
    J = cs.jx_density
    X = cs.Xi3_bar
    return (cs.beta, cs.epsilon, cs.theta_y, cs.theta_z, cs.kappa2, cs.omega, J, X)


def _quadratic_in_p(s, cs: CouplingSet):
    """Coefficients (a, b, c) of det = a p^2 + b p + c."""
    bt, ep, ty, tz, k, W, J, X = _params(cs)
    s = np.asarray(s, dtype=complex)
    JX = J * X
    a = s * s + W * W
    b = 2 * (ep * tz + bt * ty) * JX * s
    c = a * k * k - 2 * (ep * ty + bt * tz) * JX * W * k + 4 * bt * ep * tz * ty * JX * JX
    return a, b, c


def determinant(pt: LaplacePoint, cs: CouplingSet) -> complex:
    a, b, c = _quadratic_in_p(pt.s, cs)
    return complex(a * pt.p * pt.p + b * pt.p + c)


def system_matrix(pt: LaplacePoint, cs: CouplingSet) -> np.ndarray:
    """The 4x4 matrix acting on (Xi_1, Xi_2, J_z, J_y) images."""
    bt, ep, ty, tz, k, W, J, X = _params(cs)
    p, s = complex(pt.p), complex(pt.s)
    return np.array(
        [
            [p, k, -2 * bt * X, 0],
            [-k, p, 0, 2 * ep * X],
            [ty * J, 0, s, -W],
            [0, -tz * J, W, s],
        ],
        dtype=complex,
    )


def numerator_coefficients(s, cs: CouplingSet) -> np.ndarray:
    """Coefficients (n2, n1, n0) in p of det * [[M, F], [G, N]].

    Shape ``s.shape + (4, 4, 3)``.
    """
    bt, ep, ty, tz, k, W, J, X = _params(cs)
    s = np.asarray(s, dtype=complex)
    a = s * s + W * W
    one = np.ones_like(s)
    zero = np.zeros_like(s)
    JX = J * X
    n = np.zeros(s.shape + (4, 4, 3), dtype=complex)

    def put(i, j, n2=zero, n1=zero, n0=zero):
        n[..., i, j, 0] = n2
        n[..., i, j, 1] = n1
        n[..., i, j, 2] = n0

    # M
    put(0, 0, n1=a, n0=2 * ep * tz * JX * s)
    put(0, 1, n0=-k * a + 2 * bt * tz * JX * W * one)
    put(1, 0, n0=k * a - 2 * ep * ty * JX * W * one)
    put(1, 1, n1=a, n0=2 * bt * ty * JX * s)
    # F
    put(0, 2, n1=2 * X * bt * s, n0=(-2 * X * ep * k * W + 4 * bt * ep * tz * J * X * X) * one)
    put(0, 3, n1=2 * X * bt * W * one, n0=2 * X * ep * k * s)
    put(1, 2, n1=2 * X * ep * W * one, n0=2 * X * bt * k * s)
    put(1, 3, n1=-2 * X * ep * s, n0=(2 * X * bt * k * W - 4 * bt * ep * ty * J * X * X) * one)
    # G
    put(2, 0, n1=-J * ty * s, n0=(J * tz * k * W - 2 * ep * ty * tz * J * J * X) * one)
    put(2, 1, n1=J * tz * W * one, n0=J * ty * k * s)
    put(3, 0, n1=J * ty * W * one, n0=J * tz * k * s)
    put(3, 1, n1=J * tz * s, n0=(-J * ty * k * W + 2 * bt * ty * tz * J * J * X) * one)
    # N
    put(2, 2, n2=s, n1=2 * ep * tz * JX * one, n0=s * k * k)
    put(2, 3, n2=W * one, n0=(W * k * k - 2 * ep * ty * JX * k) * one)
    put(3, 2, n2=-W * one, n0=(-W * k * k + 2 * bt * tz * JX * k) * one)
    put(3, 3, n2=s, n1=2 * bt * ty * JX * one, n0=s * k * k)
    return n


def kernel_images(pt: LaplacePoint, cs: CouplingSet) -> KernelMatrices:
    det = determinant(pt, cs)
    if abs(det) < SINGULAR_THRESHOLD:
        raise NearSingularError(pt.p, pt.s, det)
    n = numerator_coefficients(pt.s, cs)
    p = complex(pt.p)
    B = (n[..., 0] * p * p + n[..., 1] * p + n[..., 2]) / det
    return KernelMatrices(M=B[:2, :2], N=B[2:, 2:], F=B[:2, 2:], G=B[2:, :2])


# --------------------------------------------------------------------------
# analytic inversion in p


def _roots(a, b, c):
    """Both roots of a p^2 + b p + c, computed without cancellation."""
    disc = np.sqrt(b * b - 4 * a * c + 0j)
    sgn = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
    q = -0.5 * (b + sgn * disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(q != 0, q / a, 0.0)
        r2 = np.where(q != 0, c / q, 0.0)
    return r1, r2


@dataclass(frozen=True)
class PartialFraction:
    """Kernel image as direct + sum_pm R_pm / (p - p_pm) at a fixed s.

    For a double root the residue form degenerates; ``evaluate`` and
    ``spatial`` stay valid through the divided-difference representation.
    """

    s: complex
    roots: tuple
    residues: tuple
    direct: np.ndarray
    double_root: bool
    _reduced: np.ndarray = field(repr=False)  # (4, 4, 2): n1', n0' over a
    _mid: complex = 0
    _half_gap_sq: complex = 0

    def evaluate(self, p: complex) -> np.ndarray:
        pp, pm = self.roots
        n1, n0 = self._reduced[..., 0], self._reduced[..., 1]
        return self.direct + (n1 * p + n0) / ((p - pp) * (p - pm))

    def spatial(self, z: float) -> np.ndarray:
        """Regular part of the p-inverted kernel at z; the direct part is a delta(z) term."""
        e0, e1 = _divided_exponentials(self._mid, self._half_gap_sq, np.asarray(z, dtype=float))
        n1, n0 = self._reduced[..., 0], self._reduced[..., 1]
        return n1 * e1 + n0 * e0


def _shc(w):
    """sinh(w)/w for complex w, accurate near 0."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 1e-3
    safe = np.where(small, 1.0, w)
    w2 = w * w
    return np.where(small, 1 + w2 / 6 + w2 * w2 / 120, np.sinh(safe) / safe)


def _divided_exponentials(m, d2, z):
    """Inverse Laplace transforms of 1/((p-p+)(p-p-)) and p/((p-p+)(p-p-)).

    m is the mean root and d2 the squared half gap; both results are even
    in the half gap, so the sign of the square root is irrelevant.
    """
    d = np.sqrt(np.asarray(d2, dtype=complex))
    w = d * z
    em = np.exp(m * z)
    sh = _shc(w)
    e0 = em * z * sh
    e1 = em * (np.cosh(w) + m * z * sh)
    return e0, e1


def _reduced_numerators(s, cs: CouplingSet):
    a, b, c = _quadratic_in_p(s, cs)
    if np.any(np.abs(a) < CONTOUR_THRESHOLD):
        raise ContourError(f"s^2 + Omega^2 vanishes at s = {s}")
    n = numerator_coefficients(s, cs)
    a_ = a[..., None, None]
    direct = n[..., 0] / a_
    n1 = (n[..., 1] - n[..., 0] * (b / a)[..., None, None]) / a_
    n0 = (n[..., 2] - n[..., 0] * (c / a)[..., None, None]) / a_
    m = -b / (2 * a)
    d2 = m * m - c / a
    return direct, n1, n0, m, d2, (a, b, c)


def p_partial_fraction(s: complex, cs: CouplingSet, double_tol: float = 1e-12) -> PartialFraction:
    s = complex(s)
    direct, n1, n0, m, d2, (a, b, c) = _reduced_numerators(s, cs)
    m, d2 = complex(m), complex(d2)
    d = np.sqrt(d2)
    pp, pm = m + d, m - d
    scale = max(abs(m), abs(d), 1e-300)
    double = abs(d) <= double_tol * scale or d == 0
    if double:
        residues = (None, None)
    else:
        rp = (n1 * pp + n0) / (pp - pm)
        rm = (n1 * pm + n0) / (pm - pp)
        residues = (rp, rm)
    return PartialFraction(
        s=s,
        roots=(complex(pp), complex(pm)),
        residues=residues,
        direct=direct,
        double_root=bool(double),
        _reduced=np.stack([n1, n0], axis=-1),
        _mid=m,
        _half_gap_sq=d2,
    )


def dispersion_roots_p(s, cs: CouplingSet):
    """Spatial roots p(s) of det = 0."""
    a, b, c = _quadratic_in_p(s, cs)
    return _roots(a, b, c)


def dispersion_roots_s(p, cs: CouplingSet):
    """Temporal roots s(p) of det = 0 (det is also quadratic in s)."""
    bt, ep, ty, tz, k, W, J, X = _params(cs)
    p = np.asarray(p, dtype=complex)
    JX = J * X
    A = p * p + k * k
    B = 2 * (ep * tz + bt * ty) * JX * p
    C = W * W * A - 2 * (ep * ty + bt * tz) * JX * W * k + 4 * bt * ep * tz * ty * JX * JX
    return _roots(A, B, C)


def field_impulse(z: float, cs: CouplingSet) -> np.ndarray:
    """Coefficient of delta(t) in M(z, t): the birefringent rotation over z."""
    c, s = math.cos(cs.kappa2 * z), math.sin(cs.kappa2 * z)
    return np.array([[c, -s], [s, c]])


def spin_impulse(t: float, cs: CouplingSet) -> np.ndarray:
    """Coefficient of delta(z) in N(z, t): free precession over t."""
    c, s = math.cos(cs.omega * t), math.sin(cs.omega * t)
    return np.array([[c, s], [-s, c]])


def spatial_images(z: float, s, cs: CouplingSet) -> np.ndarray:
    """Regular parts of the p-inverted kernels at z as functions of s.

    Returns ``s.shape + (4, 4)``; the delta(t) part of M and the delta(z)
    part of N are removed so every entry decays as |s| grows.
    """
    s = np.asarray(s, dtype=complex)
    _, n1, n0, m, d2, _ = _reduced_numerators(s, cs)
    e0, e1 = _divided_exponentials(m, d2, z)
    K = n1 * e1[..., None, None] + n0 * e0[..., None, None]
    K[..., :2, :2] -= field_impulse(z, cs)
    return K


# --------------------------------------------------------------------------
# numerical inversion in s


def invert_talbot(F: Callable, t: float, nodes: int, shift: float = 0.0, real: bool = True) -> np.ndarray:
    """Fixed-Talbot inversion of an image F that maps an s array to (n, *shape).

    With ``real`` the original is assumed real and only the upper half of
    the contour is sampled; otherwise both halves are used.
    """
    if t <= 0:
        raise ValueError("Talbot inversion needs t > 0")
    M = int(nodes)
    r = 2 * M / (5 * t)
    theta = np.arange(1, M) * np.pi / M
    cot = 1 / np.tan(theta)
    sk = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1) * cot
    wk = np.exp(t * sk) * (1 + 1j * sigma)
    if real:
        s_all = np.concatenate([[r + 0j], sk]) + shift
        vals = F(s_all)
        w = np.concatenate([[0.5 * np.exp(r * t)], wk])
        extra = (1,) * (vals.ndim - 1)
        total = np.sum((w.reshape((-1,) + extra) * vals).real, axis=0)
    else:
        s_all = np.concatenate([[r + 0j], sk, np.conj(sk)]) + shift
        vals = F(s_all)
        w = np.concatenate([[0.5 * np.exp(r * t)], 0.5 * wk, 0.5 * np.conj(wk)])
        extra = (1,) * (vals.ndim - 1)
        total = np.sum(w.reshape((-1,) + extra) * vals, axis=0)
    return math.exp(shift * t) * (r / M) * total


def invert_dehoog(F: Callable, t: float, nodes: int, s0: float | None = None, tol: float = 1e-14,
                  period: float | None = None) -> np.ndarray:
    """Damped trapezoidal Bromwich sum accelerated by the quotient-difference continued fraction.

    ``nodes`` is the number of continued-fraction levels M (2M+1 image
    evaluations). ``period`` defaults to 2t; the damping defaults to
    -ln(tol)/(2*period) when ``s0`` is not given.
    """
    if t <= 0:
        raise ValueError("inversion needs t > 0")
    M = int(nodes)
    T = 2.0 * t if period is None else float(period)
    gamma = -math.log(tol) / (2 * T) if s0 is None else float(s0)
    k = np.arange(2 * M + 1)
    s = gamma + 1j * np.pi * k / T
    a = np.array(F(s), dtype=complex)
    shape = a.shape[1:]
    a = a.reshape(2 * M + 1, -1)
    a[0] = a[0] / 2
    # quotient-difference table
    e = np.zeros((2 * M + 1, a.shape[1]), dtype=complex)
    q = np.zeros((2 * M, a.shape[1]), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        q[:] = a[1:] / a[:-1]
        d = np.zeros((2 * M + 1, a.shape[1]), dtype=complex)
        d[0] = a[0]
        d[1] = -q[0]
        e_prev = np.zeros((2 * M + 1, a.shape[1]), dtype=complex)
        q_cur = q
        for r in range(1, M + 1):
            n_e = 2 * M - 2 * r + 1
            e_cur = q_cur[1 : n_e + 1] - q_cur[:n_e] + e_prev[1 : n_e + 1]
            d[2 * r] = -e_cur[0]
            if r < M:
                n_q = n_e - 1
                q_cur = q_cur[1 : n_q + 1] * e_cur[1 : n_q + 1] / e_cur[:n_q]
                d[2 * r + 1] = -q_cur[0]
            e_prev = e_cur
        zz = np.exp(1j * np.pi * t / T)
        A_prev, A_cur = np.zeros_like(d[0]), d[0]
        B_prev, B_cur = np.ones_like(d[0]), np.ones_like(d[0])
        for n in range(1, 2 * M):
            A_prev, A_cur = A_cur, A_cur + d[n] * zz * A_prev
            B_prev, B_cur = B_cur, B_cur + d[n] * zz * B_prev
        h = 0.5 * (1 + (d[2 * M - 1] - d[2 * M]) * zz)
        R = -h * (1 - np.sqrt(1 + d[2 * M] * zz / (h * h)))
        A_last = A_cur + R * A_prev
        B_last = B_cur + R * B_prev
        res = A_last / B_last
    res = np.where(np.isfinite(res), res, 0.0)
    # zero images give 0/0 in the quotients; their inverse is zero
    res = np.where(np.all(a == 0, axis=0), 0.0, res)
    out = math.exp(gamma * t) / T * res.real
    return out.reshape(shape)


@dataclass(frozen=True)
class QuadratureConfig:
    """Numerical Bromwich inversion settings.

    ``method`` is "dehoog" (damped trapezoid with continued-fraction
    acceleration) or "talbot". ``nodes`` is the base resolution; with
    ``refine`` the result at ``2*nodes`` is compared against ``nodes``.
    """

    method: str = "dehoog"
    nodes: int = 40
    s0: float | None = None
    tol: float = 1e-14
    rtol: float = 1e-6
    atol: float = 1e-9
    refine: bool = True
    retarded: bool = False
    c: float = 299792458.0

    def __post_init__(self):
        if self.method not in ("dehoog", "talbot"):
            raise ValueError(f"unknown inversion method {self.method!r}")
        if self.nodes < 2:
            raise ValueError("nodes must be >= 2")


@dataclass(frozen=True)
class TimeDomainKernels:
    """Real kernels at (z, t).

    M, N, F, G are regular parts. The full kernels add ``M_impulse`` times
    delta(t) to M and ``N_impulse`` times delta(z) to N.
    """

    z: float
    t: float
    M: np.ndarray
    N: np.ndarray
    F: np.ndarray
    G: np.ndarray
    M_impulse: np.ndarray
    N_impulse: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def block(self) -> np.ndarray:
        return np.block([[self.M, self.F], [self.G, self.N]])


def _invert(F, t, quad: QuadratureConfig, nodes: int):
    if quad.method == "talbot":
        return invert_talbot(F, t, nodes)
    return invert_dehoog(F, t, nodes, s0=quad.s0, tol=quad.tol)


def _talbot_nodes(t: float, cs: CouplingSet, nodes: int) -> int:
    # the contour crosses the imaginary axis at +-i*pi*r/2; keep it well outside +-i*Omega
    need = int(math.ceil(3 * 5 * abs(cs.omega) * t / math.pi)) + 2
    return max(nodes, need)


def _assemble(z, t, B, cs, diag):
    return TimeDomainKernels(
        z=z,
        t=t,
        M=B[:2, :2],
        N=B[2:, 2:],
        F=B[:2, 2:],
        G=B[2:, :2],
        M_impulse=field_impulse(z, cs),
        N_impulse=spin_impulse(t, cs),
        diagnostics=diag,
    )


def _refined(image, t, quad: QuadratureConfig, cs: CouplingSet, label: str):
    n = quad.nodes
    if quad.method == "talbot":
        n = _talbot_nodes(t, cs, n)
    coarse = _invert(image, t, quad, n)
    diag = {"method": quad.method, "nodes": n}
    if not quad.refine:
        return coarse, diag
    fine = _invert(image, t, quad, 2 * n)
    err = float(np.max(np.abs(fine - coarse)))
    scale = float(np.max(np.abs(fine)))
    diag.update(nodes=2 * n, refinement_change=err, scale=scale)
    if not np.all(np.isfinite(fine)) or err > quad.rtol * scale + quad.atol:
        raise AccuracyError(
            f"{label}: inversion did not converge between {n} and {2 * n} nodes "
            f"(change {err:.3g}, scale {scale:.3g})",
            diag,
        )
    return fine, diag


def kernel_time_domain(z: float, t: float, cs: CouplingSet, quad: QuadratureConfig | None = None) -> TimeDomainKernels:
    """Kernels (M, N, F, G)(z, t) by analytic p-inversion and numerical s-inversion."""
    quad = quad or QuadratureConfig()
    if z < 0 or t < 0:
        raise ValueError("z and t must be >= 0")
    t_eff = t - z / quad.c if quad.retarded else t
    if t_eff <= 0:
        # nothing has arrived yet (or t = 0 exactly): only the impulse parts survive
        zero = np.zeros((4, 4))
        if t_eff == 0 and not quad.retarded:
            zero = _time_zero_limit(z, cs)
        return _assemble(z, t, zero, cs, {"t_eff": t_eff})
    B, diag = _refined(lambda s: spatial_images(z, s, cs), t_eff, quad, cs, f"kernels at z={z}, t={t}")
    diag["t_eff"] = t_eff
    return _assemble(z, t, B, cs, diag)


def _time_zero_limit(z, cs):
    # regular parts at t = 0+: initial value theorem, lim s*K(z, s)
    s = np.array([1e12 + 0j])
    return (s[0] * spatial_images(z, s, cs)[0]).real


def kernel_time_domain_grid(zs, ts, cs: CouplingSet, quad: QuadratureConfig | None = None, workers: int | None = None):
    """Evaluate kernels over a (z, t) grid; points are independent so they run concurrently."""
    quad = quad or QuadratureConfig()
    pts = [(z, t) for z in zs for t in ts]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        res = list(ex.map(lambda zt: kernel_time_domain(zt[0], zt[1], cs, quad), pts))
    return [res[i * len(ts) : (i + 1) * len(ts)] for i in range(len(zs))]


def kernel_time_domain_2d(z: float, t: float, cs: CouplingSet, nodes: int = 32, p_nodes: int = 20) -> np.ndarray:
    """Slow cross-check: invert both p and s numerically with the Talbot contour.

    Returns the regular 4x4 block at (z, t). Only the impulse parts are
    removed analytically; the p-structure is never used.
    """
    if z <= 0 or t <= 0:
        raise ValueError("2-D inversion needs z, t > 0")

    def image_s(s_arr):
        out = np.empty((len(s_arr), 4, 4), dtype=complex)
        for i, s in enumerate(s_arr):
            a = s * s + cs.omega**2
            impulse_p = np.zeros((4, 4), dtype=complex)
            impulse_p[2:, 2:] = np.array([[s, cs.omega], [-cs.omega, s]]) / a

            def image_p(p_arr):
                vals = np.empty((len(p_arr), 4, 4), dtype=complex)
                for j, p in enumerate(p_arr):
                    A = system_matrix(LaplacePoint(p, s), cs)
                    vals[j] = np.linalg.inv(A)
                    k = cs.kappa2
                    vals[j, :2, :2] -= np.array([[p, -k], [k, p]]) / (p * p + k * k)
                    vals[j] -= impulse_p
                return vals

            roots = dispersion_roots_p(s, cs)
            shift = max(0.0, float(np.max(np.real(roots)))) + abs(cs.kappa2) + 1.0 / z
            out[i] = invert_talbot(image_p, z, p_nodes, shift=shift, real=False)
        return out

    return invert_talbot(image_s, t, _talbot_nodes(t, cs, nodes))
