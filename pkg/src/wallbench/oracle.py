"""Deterministic synthetic wall-field generator.

This is not a CFD surrogate. It is a closed-form family of wall distributions
on a lofted wing, built so that the regression pipeline has exact ground truth
with features that matter for the regressors: a moving shock-like front,
lift saturation with incidence, separation-like friction loss and Reynolds
scaling of friction.

Surface. With chordwise parameter ``u`` (``s = u**2`` is the chord fraction),
spanwise ``t`` in [0, 1] and ``side`` = +1 (upper) / -1 (lower)::

    c(t)   = 1 - 0.65 t                 chord
    tau(t) = 0.12 - 0.03 t              thickness ratio
    x      = 1.2 t + c(t) s
    y      = SPAN t
    z      = 0.1 t + side c(t) tau(t) T(u)

with ``T`` the NACA 4-digit half-thickness written in ``u``. Normals are the
normalized cross product of the analytic tangents, oriented outward.

Fields, with ``a = AoA`` in radians, ``A_SAT = 0.2`` rad::

    beta      = (1 - 0.8 M^2)^(-1/2)
    a_eff     = A_SAT tanh(a / A_SAT)
    Cp_base   = beta [ -2 side a_eff e(t) L(s) + 0.4 exp(-40 s) - 0.3 tau(t)/0.12 sin(pi s) ]
    e(t)      = sqrt(1 - 0.8 t^2),   L(s) = sqrt((1 - s) / (s + 0.02))
    shock     = A(M) tanh(k (s - s_shock)),  upper surface and M > 0.7 only
    A(M)      = 8 (M - 0.7)^2
    s_shock   = 0.25 + 1.2 (M - 0.7) - 0.01 AoA_deg + 0.1 t

Friction is ``Cf = Re^q * m * (cos(phi) e_chord + sin(phi) e_span)`` where
``q = cf_scale_exponent``, ``e_chord`` / ``e_span`` are the surface-tangent
projections of the x and y axes, and::

    m   = (0.3 + exp(-8 (1 + M) s)) (1 - sep) (1 - 0.3 A(M) (1 + tanh(k (s - s_shock))) / 2 on upper)
    sep = 0.8 sigmoid((side AoA_deg - 9) / 1.5) sigmoid((s - 0.6) / 0.05)
    phi = (0.1 + 0.3 t) (1 + 0.05 side AoA_deg)

Optional noise is additive Gaussian, scaled per column by the RMS of the
noiseless column and seeded from (seed, condition id).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, SurfaceGeometry, WallField, split_dataset
from .errors import ValidationError
from .flow import DoeSpec, FlowCondition, GasModel, calibrated_gas, generate_doe, reynolds

__all__ = ["OracleConfig", "generate_geometry", "surface_parameters", "analytic_fields", "generate_dataset"]

SPAN = 3.0
A_SAT = 0.2


@dataclass(frozen=True)
class OracleConfig:
    n_p: int = 2000
    seed: int = 7
    shock_sharpness: float = 25.0
    cf_scale_exponent: float = -0.2
    noise_amplitude: float = 0.0

    def __post_init__(self):
        if self.n_p < 8:
            raise ValidationError(f"OracleConfig.n_p must be >= 8, got {self.n_p}")
        if not self.shock_sharpness > 0:
            raise ValidationError(f"OracleConfig.shock_sharpness must be > 0, got {self.shock_sharpness}")
        if self.noise_amplitude < 0:
            raise ValidationError("OracleConfig.noise_amplitude must be >= 0")


def _chord(t):
    return 1.0 - 0.65 * t


def _tau(t):
    return 0.12 - 0.03 * t


def _half_thickness(u):
    return 5.0 * (0.2969 * u - 0.126 * u**2 - 0.3516 * u**4 + 0.2843 * u**6 - 0.1036 * u**8)


def _half_thickness_du(u):
    return 5.0 * (0.2969 - 0.252 * u - 1.4064 * u**3 + 1.7058 * u**5 - 0.8288 * u**7)


def generate_geometry(cfg: OracleConfig) -> SurfaceGeometry:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_up = (cfg.n_p + 1) // 2
    u = 0.005 + 0.995 * rng.random(cfg.n_p)
    t = rng.random(cfg.n_p)
    side = np.where(np.arange(cfg.n_p) < n_up, 1.0, -1.0)

    c, tau = _chord(t), _tau(t)
    T, dT = _half_thickness(u), _half_thickness_du(u)
    coords = np.column_stack([1.2 * t + c * u**2, SPAN * t, 0.1 * t + side * c * tau * T])

    r_u = np.column_stack([2.0 * c * u, np.zeros_like(u), side * c * tau * dT])
    r_t = np.column_stack([1.2 - 0.65 * u**2, np.full_like(u, SPAN), 0.1 + side * (-0.65 * tau - 0.03 * c) * T])
    n = np.cross(r_u, r_t) * side[:, None]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return SurfaceGeometry(coords, n)


def surface_parameters(geo: SurfaceGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover (s, t, side) of each point of an oracle geometry."""
    x, y, z = geo.coords.T
    t = y / SPAN
    s = np.clip((x - 1.2 * t) / _chord(t), 0.0, 1.0)
    side = np.where(z - 0.1 * t >= 0.0, 1.0, -1.0)
    return s, t, side


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _tangents(normals):
    def project(axis):
        e = np.zeros(3)
        e[axis] = 1.0
        v = e - normals[:, axis:axis + 1] * normals
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    e_chord = project(0)
    e_span = project(1)
    e_span = e_span - np.sum(e_span * e_chord, axis=1, keepdims=True) * e_chord
    e_span /= np.linalg.norm(e_span, axis=1, keepdims=True)
    return e_chord, e_span


def analytic_fields(geo: SurfaceGeometry, cond: FlowCondition, gas: GasModel, cfg: OracleConfig) -> WallField:
    s, t, side = surface_parameters(geo)
    m, aoa = cond.mach, cond.aoa_deg
    a = np.deg2rad(aoa)
    upper = side > 0

    beta = 1.0 / np.sqrt(max(1.0 - 0.8 * m * m, 0.05))
    a_eff = A_SAT * np.tanh(a / A_SAT)
    load = np.sqrt(1.0 - 0.8 * t**2) * np.sqrt((1.0 - s) / (s + 0.02))
    thick = 0.4 * np.exp(-40.0 * s) - 0.3 * (_tau(t) / 0.12) * np.sin(np.pi * s)
    cp = beta * (-2.0 * side * a_eff * load + thick)

    amp = 8.0 * (m - 0.7) ** 2 if m > 0.7 else 0.0
    front = cfg.shock_sharpness * (s - (0.25 + 1.2 * (m - 0.7) - 0.01 * aoa + 0.1 * t))
    if amp > 0.0:
        cp = cp + np.where(upper, amp * np.tanh(front), 0.0)

    sep = 0.8 * _sigmoid((side * aoa - 9.0) / 1.5) * _sigmoid((s - 0.6) / 0.05)
    mag = (0.3 + np.exp(-8.0 * (1.0 + m) * s)) * (1.0 - sep)
    if amp > 0.0:
        mag = mag * np.where(upper, 1.0 - 0.3 * amp * 0.5 * (1.0 + np.tanh(front)), 1.0)
    phi = (0.1 + 0.3 * t) * (1.0 + 0.05 * side * aoa)
    e_chord, e_span = _tangents(geo.normals)
    scale = reynolds(cond, gas) ** cfg.cf_scale_exponent
    cf = (scale * mag)[:, None] * (np.cos(phi)[:, None] * e_chord + np.sin(phi)[:, None] * e_span)

    values = np.column_stack([cp, cf])
    if cfg.noise_amplitude > 0:
        seq = np.random.SeedSequence([cfg.seed, zlib.crc32(cond.id.encode("utf-8"))])
        rng = np.random.Generator(np.random.PCG64(seq))
        rms = np.sqrt(np.mean(values**2, axis=0))
        values = values + cfg.noise_amplitude * rms * rng.standard_normal(values.shape)
    return WallField(cond.id, values)


def generate_dataset(
    doe: DoeSpec | None = None,
    cfg: OracleConfig | None = None,
    gas: GasModel | None = None,
    seed: int = 0,
) -> Dataset:
    """Synthetic dataset with every field stored and a split drawn with ``seed``."""
    cfg = cfg or OracleConfig()
    gas = gas or calibrated_gas()
    conds = generate_doe(doe)
    geo = generate_geometry(cfg)
    fields = {c.id: analytic_fields(geo, c, gas, cfg) for c in conds}
    return Dataset(geo, conds, fields, split_dataset(conds, seed))
