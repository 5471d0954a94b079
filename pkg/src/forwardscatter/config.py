"""Scenario configuration files: schema, unit conversion and physics checks."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .angular import HalfInt
from .couplings import (
    C_LIGHT,
    DETUNING_WARN_RATIO,
    E_A0,
    AtomicData,
    DetuningWarning,
    DomainError,
    load_atomic_data,
)
from .kernels import QuadratureConfig
from .moments import Grid, HyperfineProbe, NoiseSpec, RateProbe, SweepScenario

__all__ = ["ScenarioConfig", "ConfigError", "load_config", "check_config", "scenarios", "config_hash"]

LOSS_WARNING = "incoherent-loss fraction exceeds recommended bound"

_UNITS = {
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "area": {"m^2": 1.0, "cm^2": 1e-4, "mm^2": 1e-6, "um^2": 1e-12},
    "dipole": {"C*m": 1.0, "e*a0": E_A0, "D": 1e-21 / C_LIGHT},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists (field, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Quantity(_Strict):
    value: float
    unit: str

    def to(self, kind: str) -> float:
        table = _UNITS[kind]
        if self.unit not in table:
            raise ValueError(f"unit {self.unit!r} is not a {kind} unit ({', '.join(table)})")
        return self.value * table[self.unit]


def _quantity(kind: str):
    def check(q: Quantity) -> Quantity:
        q.to(kind)
        return q

    return check


class Level(_Strict):
    F: str | int
    offset: Quantity

    _c = field_validator("offset")(_quantity("frequency"))


class HyperfineData(_Strict):
    species: str = "custom"
    nuclear_spin: str | int
    j0: str | int
    j: str | int
    F0: str | int
    gamma: Quantity
    wavelength: Quantity
    reduced_dipole: Quantity
    reference_level: str | int
    levels: list[Level]

    _g = field_validator("gamma")(_quantity("frequency"))
    _w = field_validator("wavelength")(_quantity("length"))
    _d = field_validator("reduced_dipole")(_quantity("dipole"))


class TransitionData(_Strict):
    j0: str | int
    j: str | int
    gamma: Quantity
    wavelength: Quantity
    reduced_dipole: Quantity

    _g = field_validator("gamma")(_quantity("frequency"))
    _w = field_validator("wavelength")(_quantity("length"))
    _d = field_validator("reduced_dipole")(_quantity("dipole"))


class RateData(_Strict):
    beta: float
    epsilon: float = 0.0
    spin: str | int = "1/2"


class AtomicRef(_Strict):
    """Exactly one of: bundled species, data file, explicit hyperfine data, single transition, direct rates."""

    species: str | None = None
    file: str | None = None
    hyperfine: HyperfineData | None = None
    transition: TransitionData | None = None
    rates: RateData | None = None

    @model_validator(mode="after")
    def _one(self):
        given = [k for k in ("species", "file", "hyperfine", "transition", "rates") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of species, file, hyperfine, transition, rates")
        return self


class Beam(_Strict):
    cross_section: Quantity = Quantity(value=1.0, unit="cm^2")
    sample_length: Quantity = Quantity(value=1.0, unit="cm")
    pulse_duration: Quantity = Quantity(value=1.0, unit="us")
    larmor: Quantity = Quantity(value=0.0, unit="Hz")

    _a = field_validator("cross_section")(_quantity("area"))
    _l = field_validator("sample_length")(_quantity("length"))
    _t = field_validator("pulse_duration")(_quantity("time"))
    _f = field_validator("larmor")(_quantity("frequency"))


class Photons(_Strict):
    eta: float | None = None
    number: float | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.eta is None) == (self.number is None):
            raise ValueError("give exactly one of eta and number")
        if self.eta is not None and not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.number is not None and self.number < 0:
            raise ValueError("photon number must be >= 0")
        return self


class Noise(_Strict):
    xi1_in: float = Field(0.0, ge=-1)
    xi2_in: float = Field(0.0, ge=-1)


class Range(_Strict):
    start: float
    stop: float
    num: int = Field(ge=1)


class Sweep(_Strict):
    betaJ: Union[list[float], Range]
    detunings: list[Quantity] = Field(default_factory=list)

    @field_validator("betaJ")
    @classmethod
    def _nonneg(cls, v):
        vals = v if isinstance(v, list) else [v.start, v.stop]
        if isinstance(v, list) and not v:
            raise ValueError("betaJ list is empty")
        if any(x < 0 for x in vals):
            raise ValueError("betaJ values must be >= 0")
        return v

    @field_validator("detunings")
    @classmethod
    def _detunings(cls, v):
        for i, q in enumerate(v):
            q.to("frequency")
            if q.value == 0 or not math.isfinite(q.value):
                raise ValueError(f"detuning [{i}] must be nonzero")
        return v

    def betaJ_values(self) -> list[float]:
        if isinstance(self.betaJ, list):
            return [float(x) for x in self.betaJ]
        return [float(x) for x in np.linspace(self.betaJ.start, self.betaJ.stop, self.betaJ.num)]


class GridCfg(_Strict):
    Nz: int = Field(16, ge=1)
    Nt: int = Field(64, ge=1)


class Quadrature(_Strict):
    method: Literal["dehoog", "talbot"] = "dehoog"
    nodes: int = Field(40, ge=2)
    s0: Quantity | None = None
    tol: float = 1e-14
    rtol: float = 1e-6
    atol: float = 1e-9
    refine: bool = True


class MonteCarloCfg(_Strict):
    n_realizations: int = Field(10000, ge=2)


class KernelDump(_Strict):
    z: list[Quantity]
    t: list[Quantity]
    betaJ: float = Field(1.0, ge=0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    atomic: AtomicRef
    beam: Beam = Beam()
    photons: Photons
    noise: Noise = Noise()
    engine: Literal["covariance", "monte_carlo", "kernels"] = "covariance"
    sweep: Sweep
    include_light_shift: bool = False
    retardation: bool = False
    grid: GridCfg = GridCfg()
    quadrature: Quadrature = Quadrature()
    monte_carlo: MonteCarloCfg = MonteCarloCfg()
    eta_max: float = Field(0.2, gt=0, le=1)
    kernel_dump: KernelDump | None = None
    output_dir: str = "runs/scenario"
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _needs_detuning(self):
        spectral = self.atomic.species or self.atomic.file or self.atomic.hyperfine or self.atomic.transition
        if spectral and not self.sweep.detunings:
            raise ValueError("sweep.detunings is required for spectral atomic data")
        if self.atomic.rates is not None and self.sweep.detunings:
            raise ValueError("sweep.detunings has no meaning with direct rates")
        if self.atomic.rates is not None and self.photons.eta is not None:
            raise ValueError("direct rates need photons.number")
        return self


def _error_list(exc: ValidationError):
    out = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        out.append((loc, e["msg"]))
    return out


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and schema-check a JSON scenario; raises ConfigError or OSError."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"JSON parse error: {exc}")]) from exc
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_error_list(exc)) from exc


def config_hash(cfg: ScenarioConfig) -> str:
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def atomic_data(cfg: ScenarioConfig, base_dir: Path | None = None) -> AtomicData | None:
    ref = cfg.atomic
    if ref.species is not None:
        return load_atomic_data(ref.species)
    if ref.file is not None:
        p = Path(ref.file)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return load_atomic_data(p)
    two_pi = 2 * math.pi
    if ref.hyperfine is not None:
        h = ref.hyperfine
        return AtomicData(
            species=h.species,
            nuclear_spin=HalfInt.of(h.nuclear_spin),
            j0=HalfInt.of(h.j0),
            j=HalfInt.of(h.j),
            F0=HalfInt.of(h.F0),
            gamma=two_pi * h.gamma.to("frequency"),
            omega_bar=two_pi * C_LIGHT / h.wavelength.to("length"),
            reduced_dipole_sq=h.reduced_dipole.to("dipole") ** 2,
            level_offsets=tuple((HalfInt.of(lv.F), two_pi * lv.offset.to("frequency")) for lv in h.levels),
            reference_level=HalfInt.of(h.reference_level),
        )
    if ref.transition is not None:
        t = ref.transition
        # a transition is a hyperfine line with I = 0
        return AtomicData(
            species="transition",
            nuclear_spin=HalfInt(0),
            j0=HalfInt.of(t.j0),
            j=HalfInt.of(t.j),
            F0=HalfInt.of(t.j0),
            gamma=two_pi * t.gamma.to("frequency"),
            omega_bar=two_pi * C_LIGHT / t.wavelength.to("length"),
            reduced_dipole_sq=t.reduced_dipole.to("dipole") ** 2,
            level_offsets=((HalfInt.of(t.j), 0.0),),
            reference_level=HalfInt.of(t.j),
        )
    return None


def detuning_label(q) -> str:
    v = f"{q.value:g}".replace("-", "m").replace(".", "p")
    return f"delta_{v}{q.unit}"


def scenarios(cfg: ScenarioConfig, base_dir: Path | None = None) -> list[SweepScenario]:
    """One SweepScenario per configured detuning (a single one for direct rates)."""
    common = dict(
        eta=cfg.photons.eta,
        photon_number=cfg.photons.number,
        cross_section=cfg.beam.cross_section.to("area"),
        sample_length=cfg.beam.sample_length.to("length"),
        pulse_duration=cfg.beam.pulse_duration.to("time"),
        larmor=2 * math.pi * cfg.beam.larmor.to("frequency"),
        include_light_shift=cfg.include_light_shift,
        noise=NoiseSpec(cfg.noise.xi1_in, cfg.noise.xi2_in),
        grid=Grid(cfg.grid.Nz, cfg.grid.Nt),
        eta_max=cfg.eta_max,
        engine=cfg.engine,
        n_realizations=cfg.monte_carlo.n_realizations,
        seed=cfg.seed,
        quadrature=quadrature(cfg),
    )
    data = atomic_data(cfg, base_dir)
    if data is None:
        r = cfg.atomic.rates
        return [SweepScenario(RateProbe(r.beta, r.epsilon, r.spin), label="rates", **common)]
    out = []
    for q in cfg.sweep.detunings:
        probe = HyperfineProbe(data, 2 * math.pi * q.to("frequency"))
        out.append(SweepScenario(probe, label=detuning_label(q), **common))
    return out


def quadrature(cfg: ScenarioConfig) -> QuadratureConfig:
    q = cfg.quadrature
    return QuadratureConfig(
        method=q.method,
        nodes=q.nodes,
        s0=None if q.s0 is None else 2 * math.pi * q.s0.to("frequency"),
        tol=q.tol,
        rtol=q.rtol,
        atol=q.atol,
        refine=q.refine,
        retarded=cfg.retardation,
    )


def check_config(cfg: ScenarioConfig, base_dir: Path | None = None):
    """Physics checks beyond the schema. Returns (errors, warnings) as (field, message) lists."""
    errors, warns = [], []
    try:
        data = atomic_data(cfg, base_dir)
    except (OSError, KeyError, ValueError) as exc:
        return [("atomic", str(exc))], warns
    if cfg.photons.eta is not None and cfg.photons.eta > cfg.eta_max:
        warns.append(("photons.eta", f"{LOSS_WARNING} (eta={cfg.photons.eta:g} > eta_max={cfg.eta_max:g})"))
    if data is not None:
        for i, q in enumerate(cfg.sweep.detunings):
            d = 2 * math.pi * q.to("frequency")
            for F, det in data.detunings(d).items():
                if det == 0:
                    errors.append((f"sweep.detunings.{i}", f"probe is resonant with level F={F}"))
                elif abs(det) / data.gamma < DETUNING_WARN_RATIO:
                    warns.append((f"sweep.detunings.{i}", f"|detuning|/gamma = {abs(det) / data.gamma:.3g} for F={F} is below {DETUNING_WARN_RATIO:g}"))
    if errors:
        return errors, warns
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DetuningWarning)
            scns = scenarios(cfg, base_dir)
            top = max(cfg.sweep.betaJ_values())
            for scn in scns:
                base = scn.base_quantities()
                _, info = scn.couplings(top, base)
                if not info["feasible"]:
                    warns.append(
                        (f"scenario {scn.label}", f"{LOSS_WARNING} at betaJ={top:g} (atom loss {info.get('atom_loss_fraction', float('nan')):.3g})")
                    )
    except (DomainError, ValueError) as exc:
        errors.append(("atomic", str(exc)))
    return errors, warns
