"""Second-moment propagation for the linearized light-spin system.

The sample is cut into Nz cells holding cell-integrated spins
J(k) = J_density * dz. At every time step the Stokes fields are swept
through the cells against the current spins (the field transit time is
neglected), then the spins are advanced. The step is linear, so the
covariance of [J_z(1..Nz), J_y(1..Nz), Y_1, Y_2] is propagated exactly for
the discretized system; Y_i accumulates the output field at z = L.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .angular import HalfInt
from .couplings import (
    AtomicData,
    BeamGeometry,
    CouplingSet,
    DomainError,
    coupling_set,
    dimensionless_polarizabilities,
    hyperfine_polarizabilities,
    scattering_cross_section,
)
from .kernels import QuadratureConfig, field_impulse, invert_dehoog, spatial_images

__all__ = [
    "Grid",
    "NoiseSpec",
    "CovarianceState",
    "FieldProfile",
    "MonteCarloResult",
    "VarianceCurve",
    "CurvePoint",
    "SweepScenario",
    "HyperfineProbe",
    "RateProbe",
    "evaluate_point",
    "step_fields",
    "step_spins",
    "step",
    "one_step_map",
    "propagate_covariance",
    "output_mandel",
    "monte_carlo",
    "kernel_quadrature_variance",
    "sweep",
    "assemble_curve",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("betaJ", "xi1", "xi2", "xi1_faraday", "xi1_atomic_term")


@dataclass(frozen=True)
class Grid:
    Nz: int
    Nt: int
    T: float = 1.0

    def __post_init__(self):
        if self.Nz < 1 or self.Nt < 1:
            raise ValueError("Nz and Nt must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.Nz * factor, self.Nt * factor, self.T)


@dataclass(frozen=True)
class NoiseSpec:
    """Input Mandel parameters and the total transverse spin variance (None: Jx/2)."""

    xi1_in: float = 0.0
    xi2_in: float = 0.0
    spin_variance_total: float | None = None

    def __post_init__(self):
        if self.xi1_in < -1 or self.xi2_in < -1:
            raise ValueError("input Mandel parameters must be >= -1")
        if self.spin_variance_total is not None and self.spin_variance_total < 0:
            raise ValueError("spin variance must be >= 0")

    def spin_variance(self, cs: CouplingSet) -> float:
        return cs.Jx_bar / 2 if self.spin_variance_total is None else self.spin_variance_total


def _rot(angle: float) -> np.ndarray:
    """Rotation generated by d/dx (a, b) = (-b, a)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass
class FieldProfile:
    """Fields at cell midpoints and at the exit face; leading axis is (Xi_1, Xi_2)."""

    mid: np.ndarray
    out: np.ndarray


def step_fields(spins: np.ndarray, cs: CouplingSet, grid: Grid, boundary=None) -> FieldProfile:
    """Sweep the Stokes fluctuations through the cells against fixed spins.

    ``spins`` has shape (2, Nz, ...). Within a cell the birefringent rotation
    is exact and the spin source enters at the cell midpoint.
    """
    spins = np.asarray(spins, dtype=float)
    Nz = grid.Nz
    dz = cs.length / Nz
    X = cs.Xi3_bar
    batch = spins.shape[2:]
    xi = np.zeros((2,) + batch) if boundary is None else np.broadcast_to(np.asarray(boundary, dtype=float), (2,) + batch).copy()
    R_full = _rot(cs.kappa2 * dz)
    R_half = _rot(cs.kappa2 * dz / 2)
    R_quarter = _rot(cs.kappa2 * dz / 4)
    src = np.stack([2 * cs.beta * X * spins[0], -2 * cs.epsilon * X * spins[1]])
    mid = np.empty((2, Nz) + batch)
    for k in range(Nz):
        sk = src[:, k]
        mid[:, k] = np.tensordot(R_half, xi, 1) + 0.5 * np.tensordot(R_quarter, sk, 1)
        xi = np.tensordot(R_full, xi, 1) + np.tensordot(R_half, sk, 1)
    return FieldProfile(mid=mid, out=xi)


def step_spins(spins: np.ndarray, fields_mid: np.ndarray, cs: CouplingSet, dt: float, grid: Grid) -> np.ndarray:
    """Advance cell spins by dt: half precession, field kick, half precession."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    spins = np.asarray(spins, dtype=float)
    dz = cs.length / grid.Nz
    g = cs.jx_density * dz * dt
    c, s = math.cos(cs.omega * dt / 2), math.sin(cs.omega * dt / 2)

    def precess(j):
        return np.stack([c * j[0] + s * j[1], -s * j[0] + c * j[1]])

    j = precess(spins)
    j = j + np.stack([-cs.theta_y * g * fields_mid[0], cs.theta_z * g * fields_mid[1]])
    return precess(j)


def step(spins: np.ndarray, noise: np.ndarray, cs: CouplingSet, grid: Grid):
    """One time step. ``noise`` is the boundary input integrated over the step.

    Returns updated spins and the increment of the output accumulators.
    Predictor-corrector on the spin-field coupling, exact rotations inside.
    """
    dt = grid.dt
    u = np.asarray(noise, dtype=float) / dt
    f0 = step_fields(spins, cs, grid, u)
    pred = step_spins(spins, f0.mid, cs, dt, grid)
    f1 = step_fields(pred, cs, grid, u)
    mid = 0.5 * (f0.mid + f1.mid)
    new = step_spins(spins, mid, cs, dt, grid)
    dY = 0.5 * (f0.out + f1.out) * dt
    return new, dY


def one_step_map(cs: CouplingSet, grid: Grid):
    """Matrices (Phi, Psi) with x' = Phi x + Psi w over [J_z, J_y, Y_1, Y_2]."""
    Nz = grid.Nz
    n = 2 * Nz + 2
    eye = np.eye(n)
    spins = eye[: 2 * Nz].reshape(2, Nz, n)
    new, dY = step(spins, np.zeros((2, n)), cs, grid)
    Phi = np.zeros((n, n))
    Phi[: 2 * Nz] = new.reshape(2 * Nz, n)
    Phi[2 * Nz :] = eye[2 * Nz :] + dY
    new, dY = step(np.zeros((2, Nz, 2)), np.eye(2), cs, grid)
    Psi = np.zeros((n, 2))
    Psi[: 2 * Nz] = new.reshape(2 * Nz, 2)
    Psi[2 * Nz :] = dY
    return Phi, Psi


@dataclass
class CovarianceState:
    """Covariance over [J_z(1..Nz), J_y(1..Nz), Y_1, Y_2] split by noise source.

    ``atomic`` is the part seeded by the initial spin fluctuations, ``field``
    the part driven by the input light; they add up to ``matrix``.
    """

    atomic: np.ndarray
    field: np.ndarray
    Nz: int
    T: float

    @property
    def matrix(self) -> np.ndarray:
        return self.atomic + self.field

    def output_variance(self, part: str = "total") -> np.ndarray:
        m = {"total": self.matrix, "atomic": self.atomic, "field": self.field}[part]
        return np.diag(m)[-2:].copy()

    @property
    def spin_block(self) -> np.ndarray:
        return self.matrix[: 2 * self.Nz, : 2 * self.Nz]

    def check_psd(self, rel: float = 1e-9) -> float:
        m = self.matrix
        if not np.allclose(m, m.T, rtol=1e-12, atol=1e-12 * np.abs(m).max()):
            raise ValueError("covariance is not symmetric")
        lam = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
        if lam < -rel * np.trace(m):
            raise ValueError(f"covariance not positive semidefinite (min eigenvalue {lam:.3g})")
        return lam


def propagate_covariance(cs: CouplingSet, grid: Grid, noise: NoiseSpec | None = None) -> CovarianceState:
    noise = noise or NoiseSpec()
    Nz = grid.Nz
    n = 2 * Nz + 2
    Phi, Psi = one_step_map(cs, grid)
    dt = grid.dt
    D = np.diag([cs.Xi3_bar * (1 + noise.xi1_in) * dt, cs.Xi3_bar * (1 + noise.xi2_in) * dt])
    Q = Psi @ D @ Psi.T
    atomic = np.zeros((n, n))
    atomic[np.arange(2 * Nz), np.arange(2 * Nz)] = noise.spin_variance(cs) / Nz
    fld = np.zeros((n, n))
    for _ in range(grid.Nt):
        atomic = Phi @ atomic @ Phi.T
        fld = Phi @ fld @ Phi.T + Q
    atomic = 0.5 * (atomic + atomic.T)
    fld = 0.5 * (fld + fld.T)
    state = CovarianceState(atomic=atomic, field=fld, Nz=Nz, T=grid.T)
    state.check_psd()
    return state


def output_mandel(cov: CovarianceState, cs: CouplingSet, T: float | None = None, part: str = "total"):
    """Mandel parameters xi_i = Var(Y_i)/(Xi3*T) - 1 of the pulse-integrated output."""
    T = cov.T if T is None else T
    shot = cs.Xi3_bar * T
    if shot == 0:
        raise DomainError("Xi3_bar * T vanishes; Mandel parameter undefined")
    v = cov.output_variance(part)
    return float(v[0] / shot - 1), float(v[1] / shot - 1)


@dataclass(frozen=True)
class MonteCarloResult:
    variance: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    seed: int

    def mandel(self, cs: CouplingSet, T: float):
        shot = cs.Xi3_bar * T
        return self.variance / shot - 1, self.stderr / shot


def _jackknife_variance(x: np.ndarray):
    """Sample variance and its jackknife standard error along axis 0."""
    n = x.shape[0]
    s1 = x.sum(axis=0)
    s2 = (x * x).sum(axis=0)
    var = (s2 - s1 * s1 / n) / (n - 1)
    if n < 3:
        return var, np.full_like(var, np.nan)
    loo = (s2 - x * x - (s1 - x) ** 2 / (n - 1)) / (n - 2)
    se = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return var, se


def _realization_normals(seed: int, index: int, size: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    return gen.standard_normal(size)


def monte_carlo(
    cs: CouplingSet,
    grid: Grid,
    noise: NoiseSpec | None,
    n_realizations: int,
    seed: int,
    batch: int = 2048,
) -> MonteCarloResult:
    """Sample realizations of the discretized system and estimate Var(Y_1), Var(Y_2).

    Every realization draws from its own counter-based stream keyed by
    (seed, index), so results do not depend on batching.
    """
    if n_realizations < 2:
        raise ValueError("need at least 2 realizations")
    noise = noise or NoiseSpec()
    Nz, Nt, dt = grid.Nz, grid.Nt, grid.dt
    sd_spin = math.sqrt(noise.spin_variance(cs) / Nz)
    sd_field = np.sqrt(cs.Xi3_bar * dt * np.array([1 + noise.xi1_in, 1 + noise.xi2_in]))
    per = 2 * Nz + 2 * Nt
    Y = np.empty((n_realizations, 2))
    for start in range(0, n_realizations, batch):
        idx = range(start, min(start + batch, n_realizations))
        draws = np.stack([_realization_normals(seed, i, per) for i in idx], axis=-1)
        spins = sd_spin * draws[: 2 * Nz].reshape(2, Nz, -1)
        w = sd_field[:, None, None] * draws[2 * Nz :].reshape(Nt, 2, -1).transpose(1, 0, 2)
        acc = np.zeros((2, len(idx)))
        for it in range(Nt):
            spins, dY = step(spins, w[:, it], cs, grid)
            acc += dY
        Y[start : start + len(idx)] = acc.T
    var, se = _jackknife_variance(Y)
    return MonteCarloResult(variance=var, stderr=se, n_realizations=n_realizations, seed=seed)


def kernel_quadrature_variance(
    cs: CouplingSet,
    T: float,
    noise: NoiseSpec | None = None,
    quad: QuadratureConfig | None = None,
    n_t: int = 48,
    n_z: int = 48,
) -> dict:
    """Output variances from the time-domain kernels and the white-noise model.

    Y = int W(T - t') Xi_in(t') dt' + int V(L - z') J_in(z') dz', where W is
    the running time integral of M(L, .) and V the time integral of F(., T).
    """
    noise = noise or NoiseSpec()
    quad = quad or QuadratureConfig()
    L = cs.length
    x, w = np.polynomial.legendre.leggauss(n_t)
    u = 0.5 * T * (x + 1)
    wu = 0.5 * T * w
    R = field_impulse(L, cs)
    W = np.empty((n_t, 2, 2))
    for i, ui in enumerate(u):
        W[i] = R + _inverse(lambda s: spatial_images(L, s, cs)[..., :2, :2] / s[:, None, None], ui, quad)
    xz, wz = np.polynomial.legendre.leggauss(n_z)
    xx = 0.5 * L * (xz + 1)
    wx = 0.5 * L * wz
    V = np.empty((n_z, 2, 2))
    for i, xi in enumerate(xx):
        V[i] = _inverse(lambda s: spatial_images(xi, s, cs)[..., :2, 2:] / s[:, None, None], T, quad)
    xi_in = np.array([1 + noise.xi1_in, 1 + noise.xi2_in])
    field_var = cs.Xi3_bar * np.einsum("k,kij,j->i", wu, W**2, xi_in)
    spin_density_var = noise.spin_variance(cs) / L
    atomic_var = spin_density_var * np.einsum("k,kij->i", wx, V**2)
    return {"field": field_var, "atomic": atomic_var, "total": field_var + atomic_var}


def _inverse(image, t, quad: QuadratureConfig):
    n = quad.nodes
    coarse = invert_dehoog(image, t, n, s0=quad.s0, tol=quad.tol)
    if not quad.refine:
        return coarse
    fine = invert_dehoog(image, t, 2 * n, s0=quad.s0, tol=quad.tol)
    err = float(np.max(np.abs(fine - coarse)))
    if err > quad.rtol * float(np.max(np.abs(fine))) + quad.atol:
        from .kernels import AccuracyError

        raise AccuracyError(f"kernel quadrature: inversion unconverged at t={t} (change {err:.3g})")
    return fine


# --------------------------------------------------------------------------
# scenario sweep


@dataclass(frozen=True)
class HyperfineProbe:
    """Probe detuned by ``detuning`` (rad/s) from the reference level of a hyperfine line."""

    atomic: AtomicData
    detuning: float

    @property
    def spin(self):
        return self.atomic.F0

    @property
    def omega_bar(self) -> float:
        return self.atomic.omega_bar

    def alphas_bar(self, geom: BeamGeometry):
        a1, a2 = hyperfine_polarizabilities(self.atomic.hyperfine_spec(self.detuning))
        return dimensionless_polarizabilities(a1, a2, geom)

    def faraday_factor(self) -> float | None:
        try:
            return self.atomic.faraday_factor(self.detuning)
        except DomainError:
            return None


@dataclass(frozen=True)
class RateProbe:
    """Couplings given directly as Faraday angle and ellipticity per spin."""

    beta: float
    epsilon: float = 0.0
    spin: HalfInt = HalfInt(1)
    omega_bar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spin", HalfInt.of(self.spin))
        fb, fe = _coupling_factors(self.spin)
        if fe == 0 and self.epsilon != 0:
            raise DomainError("epsilon must vanish for spin 1/2")

    def alphas_bar(self, geom: BeamGeometry):
        fb, fe = _coupling_factors(self.spin)
        return self.beta / fb, (self.epsilon / fe if fe else 0.0)

    def faraday_factor(self) -> float | None:
        return None


def _coupling_factors(j0) -> tuple[float, float]:
    probe = coupling_set(1.0, 1.0, j0, BeamGeometry(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0))
    return probe.beta, probe.epsilon


@dataclass(frozen=True)
class SweepScenario:
    """A probe scenario swept in optical activity beta*J.

    The photon number is either given or follows from eta through the
    Faraday factor, N_ph = eta*f/beta. At each point the atom number is
    chosen so that beta*J hits the target.
    """

    probe: HyperfineProbe | RateProbe
    eta: float | None = None
    photon_number: float | None = None
    cross_section: float = 1e-4  # m^2
    sample_length: float = 1.0
    pulse_duration: float = 1.0
    larmor: float = 0.0
    include_light_shift: bool = False
    noise: NoiseSpec = NoiseSpec()
    grid: Grid = Grid(16, 64)
    eta_max: float = 0.2
    engine: str = "covariance"
    n_realizations: int = 10000
    seed: int = 0
    quadrature: QuadratureConfig = QuadratureConfig()
    label: str = ""

    def __post_init__(self):
        if self.eta is not None and not 0 < self.eta < 1:
            raise DomainError("eta must lie in (0, 1)")
        if self.photon_number is not None and self.photon_number < 0:
            raise DomainError("photon_number must be >= 0")
        if (self.eta is None) == (self.photon_number is None):
            raise DomainError("give exactly one of eta and photon_number")
        if self.engine not in ("covariance", "monte_carlo", "kernels"):
            raise ValueError(f"unknown engine {self.engine!r}")

    def _geometry(self, n0: float, flux: float) -> BeamGeometry:
        return BeamGeometry(
            cross_section=self.cross_section,
            linear_density=n0,
            sample_length=self.sample_length,
            photon_flux=flux,
            pulse_duration=self.pulse_duration,
            larmor=self.larmor,
            omega_bar=self.probe.omega_bar,
        )

    def base_quantities(self) -> dict:
        """Detuning-level quantities shared by every point of the sweep."""
        geom = self._geometry(0.0, 0.0)
        a1b, a2b = self.probe.alphas_bar(geom)
        probe = coupling_set(a1b, a2b, self.probe.spin, geom)
        f = self.probe.faraday_factor()
        sigma = None
        if f is not None and probe.beta != 0:
            sigma = scattering_cross_section(probe.beta, self.cross_section, f)
        if self.photon_number is not None:
            n_ph = self.photon_number
        else:
            if sigma is None:
                raise DomainError("eta needs a Faraday factor; give photon_number instead")
            n_ph = self.eta * self.cross_section / sigma
        return {
            "alpha1_bar": a1b,
            "alpha2_bar": a2b,
            "beta": probe.beta,
            "epsilon": probe.epsilon,
            "faraday_factor": f,
            "sigma_delta": sigma,
            "photon_number": n_ph,
            "faraday_slope": 2 * probe.beta * n_ph,
        }

    def couplings(self, betaJ: float, base: dict | None = None) -> tuple[CouplingSet, dict]:
        base = base or self.base_quantities()
        beta = base["beta"]
        if beta == 0:
            if base["epsilon"] != 0:
                raise DomainError("beta*J cannot fix the atom number when beta = 0")
            Jx = 0.0
        else:
            Jx = betaJ / beta
        n_atoms = Jx / self.probe.spin.value
        geom = self._geometry(n_atoms / self.sample_length, base["photon_number"] / self.pulse_duration)
        cs = coupling_set(base["alpha1_bar"], base["alpha2_bar"], self.probe.spin, geom)
        if not self.include_light_shift:
            cs = cs.with_(omega2=0.0, omega=self.larmor)
        info = {"atom_number": n_atoms, "feasible": True}
        sigma = base["sigma_delta"]
        if sigma is not None:
            atom_loss = n_atoms * sigma / self.cross_section
            photon_loss = base["photon_number"] * sigma / self.cross_section
            info.update(
                atom_loss_fraction=atom_loss,
                photon_loss_fraction=photon_loss,
                feasible=bool(atom_loss <= self.eta_max and photon_loss <= self.eta_max),
            )
        return cs, info


@dataclass(frozen=True)
class CurvePoint:
    betaJ: float
    xi1: float
    xi2: float
    xi1_faraday: float
    xi1_atomic_term: float


@dataclass
class VarianceCurve:
    points: list
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([repr(float(getattr(p, c))) for c in CSV_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "VarianceCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_COLUMNS:
            raise ValueError(f"CSV header must be {','.join(CSV_COLUMNS)}")
        pts = [CurvePoint(*(float(v) for v in r)) for r in rows[1:] if r]
        return cls(pts, metadata or {})

    def to_json(self) -> str:
        payload = {"columns": list(CSV_COLUMNS), "points": [asdict(p) for p in self.points], "metadata": self.metadata}
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _probe_metadata(probe) -> dict:
    if isinstance(probe, HyperfineProbe):
        return {
            "kind": "hyperfine",
            "species": probe.atomic.species,
            "detuning_hz": probe.detuning / (2 * math.pi),
        }
    return {"kind": "rates", "beta": probe.beta, "epsilon": probe.epsilon, "spin": str(probe.spin)}


def evaluate_point(scn: SweepScenario, betaJ: float, base: dict | None = None) -> tuple[CurvePoint, dict]:
    """Mandel parameters at one optical activity with the selected engine."""
    base = base or scn.base_quantities()
    cs, info = scn.couplings(betaJ, base)
    T = scn.pulse_duration
    shot = cs.Xi3_bar * T
    faraday = scn.noise.xi1_in + base["faraday_slope"] * betaJ
    if scn.engine == "covariance":
        cov = propagate_covariance(cs, Grid(scn.grid.Nz, scn.grid.Nt, T), scn.noise)
        xi1, xi2 = output_mandel(cov, cs, T)
        atomic = cov.output_variance("atomic") / shot
    elif scn.engine == "monte_carlo":
        res = monte_carlo(cs, Grid(scn.grid.Nz, scn.grid.Nt, T), scn.noise, scn.n_realizations, scn.seed)
        (xi1, xi2), se = res.mandel(cs, T)
        info["stderr_xi"] = [float(v) for v in se]
        # split by linearity: rerun with the spin noise alone
        spin_only = monte_carlo(
            cs, Grid(scn.grid.Nz, scn.grid.Nt, T),
            NoiseSpec(-1.0, -1.0, scn.noise.spin_variance_total), scn.n_realizations, scn.seed,
        )
        atomic = spin_only.variance / shot
    else:
        var = kernel_quadrature_variance(cs, T, scn.noise, scn.quadrature)
        xi1, xi2 = (var["total"] / shot - 1).tolist()
        atomic = var["atomic"] / shot
    point = CurvePoint(float(betaJ), float(xi1), float(xi2), float(faraday), float(atomic[0]))
    info["xi2_atomic_term"] = float(atomic[1])
    return point, info


def sweep(scn: SweepScenario, betaJ_values: Sequence[float], workers: int | None = None) -> VarianceCurve:
    """VarianceCurve over the requested optical activities.

    Points are independent; with ``workers`` > 1 they are spread over a
    process pool and collected in input order.
    """
    values = check_betaJ(betaJ_values)
    base = scn.base_quantities()
    if workers and workers > 1 and len(values) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(evaluate_point, [scn] * len(values), values, [base] * len(values)))
    else:
        results = [evaluate_point(scn, v, base) for v in values]
    return assemble_curve(scn, base, values, results)


def check_betaJ(betaJ_values: Sequence[float]) -> list:
    values = [float(v) for v in betaJ_values]
    if not values:
        raise ValueError("betaJ list is empty")
    if any(v < 0 or not math.isfinite(v) for v in values):
        raise DomainError("betaJ values must be finite and >= 0")
    return values


def assemble_curve(scn: SweepScenario, base: dict, values: Sequence[float], results: Sequence, failures=()) -> VarianceCurve:
    """Collect evaluated points into a curve; ``failures`` lists (betaJ, message) of points that failed."""
    points = [r[0] for r in results]
    per_point = [dict(betaJ=r[0].betaJ, **r[1]) for r in results]
    meta = {
        "label": scn.label,
        "probe": _probe_metadata(scn.probe),
        "eta": scn.eta,
        "engine": scn.engine,
        "engine_version": __version__,
        "grid": {"Nz": scn.grid.Nz, "Nt": scn.grid.Nt},
        "seed": scn.seed,
        "include_light_shift": scn.include_light_shift,
        "xi1_in": scn.noise.xi1_in,
        "xi2_in": scn.noise.xi2_in,
        "faraday_factor": base["faraday_factor"],
        "faraday_slope": base["faraday_slope"],
        "beta": base["beta"],
        "epsilon": base["epsilon"],
        "sigma_delta_m2": base["sigma_delta"],
        "photon_number": base["photon_number"],
        "betaJ_atoms_equal_photons": scn.probe.spin.value * base["beta"] * base["photon_number"],
        "atomic_term_convention": "xi1_atomic_term = Var(Y1 driven by the initial spin noise alone)/(Xi3*T)",
        "points": per_point,
        "warnings": [
            f"betaJ={p['betaJ']:g}: loss fraction exceeds eta_max={scn.eta_max:g}"
            for p in per_point
            if not p["feasible"]
        ],
        "failures": [{"betaJ": b, "error": m} for b, m in failures],
    }
    return VarianceCurve(points, meta)
