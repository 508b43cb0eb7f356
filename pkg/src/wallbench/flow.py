"""Flow-condition parameter space: gas relations, DoE generation, scoring weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "FlowCondition",
    "GasModel",
    "DoeSpec",
    "DEFAULT_MACHS",
    "P_I_LEVELS",
    "condition_id",
    "static_temperature",
    "sutherland_viscosity",
    "reynolds",
    "calibrate_reference_length",
    "calibrated_gas",
    "generate_doe",
    "flow_weight",
]

DEFAULT_MACHS = (0.30, 0.50, 0.70, 0.76, 0.80, 0.82, 0.84, 0.85, 0.86, 0.88, 0.90, 0.92, 0.96)
P_I_LEVELS = (1e5, 2e5, 4e5)
N_AOA = 12

# Re anchor: M=0.85, p_i=2e5 -> Re=5e6
RE_ANCHOR = 5e6
ANCHOR_MACH = 0.85
ANCHOR_P_I = 2e5


@dataclass(frozen=True)
class FlowCondition:
    """One point (M, AoA, p_i) of the design of experiments."""

    id: str
    mach: float
    aoa_deg: float
    p_i: float

    @property
    def params(self) -> tuple[float, float, float]:
        return (self.mach, self.aoa_deg, self.p_i)


@dataclass(frozen=True)
class GasModel:
    """Perfect-gas and Sutherland constants (defaults: air)."""

    gamma: float = 1.4
    r_gas: float = 287.058
    t_ref: float = 273.15
    mu_ref: float = 1.716e-5
    s_suth: float = 110.4
    t_i: float = 322.2
    l_ref: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "r_gas", "t_ref", "mu_ref", "s_suth", "t_i", "l_ref"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"GasModel.{name} must be finite and > 0, got {v!r}")
        if self.gamma <= 1:
            raise ValidationError(f"GasModel.gamma must be > 1, got {self.gamma!r}")


def condition_id(mach: float, aoa_deg: float, p_i: float) -> str:
    """Deterministic, filesystem-safe id encoding (M, AoA, p_i)."""
    return f"m{mach:.3f}_a{aoa_deg:+08.4f}_p{p_i:.0f}"


def _default_aoa_row(mach: float) -> tuple[float, ...]:
    # half-range 15 deg up to M=0.5, 8 deg from M=0.88, linear in between
    if mach <= 0.5:
        half = 15.0
    elif mach >= 0.88:
        half = 8.0
    else:
        half = 15.0 + (8.0 - 15.0) * (mach - 0.5) / (0.88 - 0.5)
    return tuple(float(a) for a in np.linspace(-half, half, N_AOA))


@dataclass(frozen=True)
class DoeSpec:
    mach_list: tuple[float, ...] = DEFAULT_MACHS
    aoa_table: tuple[tuple[float, ...], ...] = field(
        default_factory=lambda: tuple(_default_aoa_row(m) for m in DEFAULT_MACHS)
    )
    p_i_list: tuple[float, ...] = P_I_LEVELS

    @classmethod
    def default(cls) -> "DoeSpec":
        return cls()

    @classmethod
    def from_machs(cls, machs, p_i_list=P_I_LEVELS) -> "DoeSpec":
        """Spec on an arbitrary Mach list using the default AoA range rule."""
        machs = tuple(float(m) for m in machs)
        return cls(machs, tuple(_default_aoa_row(m) for m in machs), tuple(float(p) for p in p_i_list))

    def violations(self) -> list[str]:
        problems = []
        if len(self.mach_list) == 0:
            problems.append("mach_list is empty")
        if len(set(self.mach_list)) != len(self.mach_list):
            problems.append("mach_list has duplicate values")
        if any(not (math.isfinite(m) and m >= 0) for m in self.mach_list):
            problems.append("mach_list values must be finite and >= 0")
        if len(self.aoa_table) != len(self.mach_list):
            problems.append(
                f"aoa_table has {len(self.aoa_table)} rows for {len(self.mach_list)} Mach values"
            )
        for m, row in zip(self.mach_list, self.aoa_table):
            if len(row) != N_AOA:
                problems.append(f"AoA row for M={m} has {len(row)} values, expected {N_AOA}")
            if any(b <= a for a, b in zip(row, row[1:])):
                problems.append(f"AoA row for M={m} is not strictly increasing")
            if any(not math.isfinite(a) for a in row):
                problems.append(f"AoA row for M={m} has non-finite values")
        if len(self.p_i_list) == 0:
            problems.append("p_i_list is empty")
        if len(set(self.p_i_list)) != len(self.p_i_list):
            problems.append("p_i_list has duplicate values")
        if any(not (math.isfinite(p) and p > 0) for p in self.p_i_list):
            problems.append("p_i_list values must be finite and > 0")
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ValidationError("invalid DoeSpec: " + "; ".join(problems))


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


def static_temperature(t_i: float, mach: float, gas: GasModel | None = None) -> float:
    """Isentropic static temperature T = T_i / (1 + (gamma-1)/2 M^2)."""
    gamma = (gas or GasModel()).gamma
    _check_finite(t_i=t_i, mach=mach)
    if t_i <= 0 or mach < 0:
        raise DomainError(f"need t_i > 0 and mach >= 0, got t_i={t_i!r}, mach={mach!r}")
    if mach == 0:
        return t_i
    return t_i / (1.0 + 0.5 * (gamma - 1.0) * mach * mach)


def sutherland_viscosity(t: float, gas: GasModel | None = None) -> float:
    """Molecular viscosity from Sutherland's law."""
    gas = gas or GasModel()
    _check_finite(t=t)
    if t <= 0:
        raise DomainError(f"temperature must be > 0, got {t!r}")
    if t == gas.t_ref:
        return gas.mu_ref
    return gas.mu_ref * (t / gas.t_ref) ** 1.5 * (gas.t_ref + gas.s_suth) / (t + gas.s_suth)


def reynolds(cond: FlowCondition, gas: GasModel) -> float:
    """Reynolds number from stagnation conditions.

    Evaluated in the stagnation form, so the result is exactly linear in
    ``p_i`` and in ``gas.l_ref``.
    """
    g = gas.gamma
    m = cond.mach
    t = static_temperature(gas.t_i, m, gas)
    mu = sutherland_viscosity(t, gas)
    expo = (1.0 - 2.0 * g) / (2.0 * (g - 1.0))
    factor = math.sqrt(g / gas.r_gas) * m / (math.sqrt(gas.t_i) * mu) * (1.0 + 0.5 * (g - 1.0) * m * m) ** expo
    return cond.p_i * factor * gas.l_ref


def calibrate_reference_length(gas: GasModel, target_re: float, at: FlowCondition) -> float:
    """Reference length L such that ``reynolds(at, gas with L) == target_re``."""
    if not (math.isfinite(target_re) and target_re > 0):
        raise DomainError(f"target_re must be finite and > 0, got {target_re!r}")
    if at.mach == 0:
        raise DomainError("cannot calibrate L at M=0: Re vanishes identically")
    re_unit = reynolds(at, replace(gas, l_ref=1.0))
    return target_re / re_unit


def calibrated_gas(
    gas: GasModel | None = None,
    target_re: float = RE_ANCHOR,
    mach: float = ANCHOR_MACH,
    p_i: float = ANCHOR_P_I,
) -> GasModel:
    """Gas model whose reference length hits ``target_re`` at (mach, p_i)."""
    gas = gas or GasModel()
    at = FlowCondition(condition_id(mach, 0.0, p_i), mach, 0.0, p_i)
    return replace(gas, l_ref=calibrate_reference_length(gas, target_re, at))


def generate_doe(spec: DoeSpec | None = None) -> list[FlowCondition]:
    """Full-factorial (M, AoA-row, p_i) grid, ordered Mach-major, then p_i, then AoA."""
    spec = spec or DoeSpec.default()
    spec.validate()
    conds = []
    for m, row in zip(spec.mach_list, spec.aoa_table):
        for p in spec.p_i_list:
            for a in row:
                conds.append(FlowCondition(condition_id(m, a, p), float(m), float(a), float(p)))
    if len({c.id for c in conds}) != len(conds):
        raise ValidationError("DoeSpec produces colliding condition ids")
    return conds


def flow_weight(cond: FlowCondition | float) -> float:
    """Scoring weight: 1 inside the open interval -10 < AoA < 10, else 0.5."""
    aoa = cond.aoa_deg if isinstance(cond, FlowCondition) else float(cond)
    return 1.0 if -10.0 < aoa < 10.0 else 0.5
