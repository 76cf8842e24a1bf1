"""Frictional two-phase pressure-gradient correlations.

Two homogeneous models share the Churchill friction factor and differ only in
the effective viscosity (Cicchitti: quality weighted; Awad & Muzychka:
Maxwell-Eucken form). The Sun & Mishima model is a separated-flow
(Lockhart-Martinelli type) multiplier on the liquid-alone gradient with a
Laplace-number dependent C coefficient.

All friction factors are Fanning, so a single-phase gradient is
``2 f G^2 / (D rho)``. ``literal`` switches reproduce the variants of the
formulas in which the ln in Churchill's a-term, the square on G, the square
root in X and the sign of the C term differ from the original correlations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Literal

import numpy as np

from .datamodel import ChannelGeometry, ExperimentPoint, FlowCondition, FluidState

G_ACCEL = 9.80665
LAMINAR_RE = 2000.0
X_EPS = 1e-6

Kind = Literal["sun_mishima", "awad_muzychka", "cicchitti"]
KINDS = ("sun_mishima", "awad_muzychka", "cicchitti")


class CorrelationError(ValueError):
    """Raised when a correlation is undefined for the given state."""


@dataclass(frozen=True)
class CorrelationChoice:
    kind: Kind = "sun_mishima"
    literal_mode: bool = False
    laminar_re: float = LAMINAR_RE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown correlation {self.kind!r}; expected one of {KINDS}")
        if not self.laminar_re > 0:
            raise ValueError("laminar_re must be positive")


@dataclass(frozen=True)
class CorrelationBreakdown:
    """Intermediate quantities of one evaluation; ``None`` where the model does not define them."""

    dpdz: float
    re_2ph: float | None = None
    re_l: float | None = None
    re_v: float | None = None
    f_2ph: float | None = None
    f_l: float | None = None
    f_v: float | None = None
    mu_2ph: float | None = None
    rho_mix: float | None = None
    dpdz_l: float | None = None
    dpdz_v: float | None = None
    x_mart: float | None = None
    c_chisholm: float | None = None
    laplace: float | None = None
    phi_l_sq: float | None = None
    regime: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def churchill_friction(re: float, rel_rough: float, literal: bool = False) -> float:
    """Churchill (1977) Fanning friction factor, valid across all flow regimes.

    With ``literal=True`` the a-term is evaluated without the logarithm and
    ``rel_rough`` is used as given (callers pass the absolute roughness).
    """
    if not (re > 0 and math.isfinite(re)):
        raise CorrelationError(f"Reynolds number must be positive and finite, got {re}")
    if rel_rough < 0:
        raise CorrelationError(f"roughness must be non-negative, got {rel_rough}")
    inner = (7.0 / re) ** 0.9 + 0.27 * rel_rough
    if literal:
        a = (2.457 / inner) ** 16
    else:
        a = (2.457 * math.log(1.0 / inner)) ** 16
    b = (37530.0 / re) ** 16
    return 2.0 * ((8.0 / re) ** 12 + (a + b) ** -1.5) ** (1.0 / 12.0)


def mixture_viscosity(fluid: FluidState, model: str = "cicchitti") -> float:
    mu_l, mu_v, x = fluid.mu_l, fluid.mu_v, fluid.x
    if model in ("awad", "awad_muzychka"):
        return mu_l * (2 * mu_l + mu_v - 2 * (mu_l - mu_v) * x) / (2 * mu_l + mu_v + (mu_l - mu_v) * x)
    if model == "cicchitti":
        return (1 - x) * mu_l + x * mu_v
    raise ValueError(f"unknown viscosity model {model!r}")


def homogeneous_density(fluid: FluidState) -> float:
    return 1.0 / (fluid.x / fluid.rho_v + (1 - fluid.x) / fluid.rho_l)


def laplace_number(fluid: FluidState, d_h: float) -> float:
    drho = fluid.rho_l - fluid.rho_v
    if drho <= 0:
        raise CorrelationError("Laplace number undefined: rho_l - rho_v must be positive")
    return math.sqrt(fluid.sigma / (G_ACCEL * drho)) / d_h


def _friction(re, geom: ChannelGeometry, literal: bool) -> float:
    rough = geom.roughness if literal else geom.roughness / geom.id
    return churchill_friction(re, rough, literal)


def homogeneous_dpdz(
    fluid: FluidState,
    geom: ChannelGeometry,
    flow: FlowCondition,
    visc_model: str = "cicchitti",
    literal: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> tuple[float, CorrelationBreakdown]:
    g, d = flow.g_flux, geom.id
    mu = mixture_viscosity(fluid, visc_model)
    rho = homogeneous_density(fluid)
    re = g * d / mu
    f = _friction(re, geom, literal)
    dpdz = 2.0 * f * g * g / (d * rho)
    return dpdz, CorrelationBreakdown(
        dpdz=dpdz, re_2ph=re, f_2ph=f, mu_2ph=mu, rho_mix=rho,
        regime="laminar" if re < laminar_re else "turbulent",
    )


def _phase_gradient(g, d, quality, rho, friction, literal):
    if literal:
        return friction * g * quality**2 / (2.0 * d * rho)
    return 2.0 * friction * g * g * quality**2 / (d * rho)


def sun_mishima_dpdz(
    fluid: FluidState,
    geom: ChannelGeometry,
    flow: FlowCondition,
    literal: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> tuple[float, CorrelationBreakdown]:
    """Sun & Mishima (2009) separated-flow frictional gradient.

    The C coefficient takes the laminar form only when both phase-alone
    Reynolds numbers are below ``laminar_re``. Qualities within ``X_EPS`` of
    0 or 1 return the liquid-only or vapor-only gradient, the analytic limits
    of the multiplier.
    """
    g, d = flow.g_flux, geom.id
    la = laplace_number(fluid, geom.d_h)
    x = fluid.x

    if x <= X_EPS or x >= 1.0 - X_EPS:
        liquid = x <= X_EPS
        mu, rho = (fluid.mu_l, fluid.rho_l) if liquid else (fluid.mu_v, fluid.rho_v)
        re = g * d / mu
        f = _friction(re, geom, literal)
        dpdz = _phase_gradient(g, d, 1.0, rho, f, literal)
        if liquid:
            bd = CorrelationBreakdown(dpdz=dpdz, re_l=re, f_l=f, dpdz_l=dpdz, laplace=la, phi_l_sq=1.0,
                                      regime="laminar" if re < laminar_re else "turbulent")
        else:
            bd = CorrelationBreakdown(dpdz=dpdz, re_v=re, f_v=f, dpdz_v=dpdz, laplace=la,
                                      regime="laminar" if re < laminar_re else "turbulent")
        return dpdz, bd

    re_l = g * (1 - x) * d / fluid.mu_l
    re_v = g * x * d / fluid.mu_v
    f_l = _friction(re_l, geom, literal)
    f_v = _friction(re_v, geom, literal)
    dpdz_l = _phase_gradient(g, d, 1 - x, fluid.rho_l, f_l, literal)
    dpdz_v = _phase_gradient(g, d, x, fluid.rho_v, f_v, literal)
    ratio = dpdz_l / dpdz_v
    x_mart = ratio if literal else math.sqrt(ratio)

    if re_l < laminar_re and re_v < laminar_re:
        regime = "laminar"
        c = 26.0 * (1 + re_l / 1000.0) * (1 - math.exp(-0.153 / (0.27 * la + 0.8)))
    else:
        regime = "turbulent"
        c = 1.79 * (re_v / re_l) ** 0.4 * ((1 - x) / x) ** 0.5

    sign = -1.0 if literal else 1.0
    phi_sq = 1.0 + sign * c / x_mart**1.19 + 1.0 / x_mart**2
    dpdz = dpdz_l * phi_sq
    return dpdz, CorrelationBreakdown(
        dpdz=dpdz, re_l=re_l, re_v=re_v, f_l=f_l, f_v=f_v, dpdz_l=dpdz_l, dpdz_v=dpdz_v,
        x_mart=x_mart, c_chisholm=c, laplace=la, phi_l_sq=phi_sq, regime=regime,
    )


def evaluate_correlation(choice: CorrelationChoice, point: ExperimentPoint) -> tuple[float, CorrelationBreakdown]:
    if choice.kind == "sun_mishima":
        return sun_mishima_dpdz(point.fluid, point.geometry, point.flow,
                                literal=choice.literal_mode, laminar_re=choice.laminar_re)
    visc = "awad" if choice.kind == "awad_muzychka" else "cicchitti"
    return homogeneous_dpdz(point.fluid, point.geometry, point.flow, visc,
                            literal=choice.literal_mode, laminar_re=choice.laminar_re)


def predict(choice: CorrelationChoice, points: Iterable[ExperimentPoint]) -> np.ndarray:
    """Pressure gradients for a batch of points, one correlation call per point."""
    return np.array([evaluate_correlation(choice, p)[0] for p in points], dtype=float)
