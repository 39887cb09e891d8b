"""Single-car physics: power-unit chain, resistive powers, performance envelope.

All maps are plain algebra over ``+ - * / **`` so they accept either floats
or :class:`lapduel.exprgraph.Expr` operands and stay smooth everywhere.  The
bundled default parameter set is a documented *synthetic* car: public F1
figures (798 kg minimum weight, 120 kW MGU-K electrical limit, 2 MJ per-lap
recovery budget, 4 MJ battery) padded with plausible fitted coefficients.
No proprietary team data is involved, and nothing downstream depends on the
specific numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "VehicleParams",
    "default_car",
    "gearbox_power",
    "engine_power",
    "mguk_dc_power",
    "battery_power",
    "battery_internal_power",
    "propulsive_power",
    "external_power",
    "envelope_limits",
    "envelope_residuals",
]


@dataclass(frozen=True)
class VehicleParams:
    """Physical coefficients and operating limits of one car (SI units)."""

    m: float = 798.0                 # mass [kg]
    g: float = 9.81                  # gravity [m/s^2]
    a_g: float = -2.0e-8             # gearbox loss coefficient [1/W], < 0
    eta_e: float = 0.4               # engine Willans efficiency [-]
    p_e0: float = 3.0e4              # engine friction/pumping loss [W]
    a_k: float = 1.0e-6              # MGU-K loss coefficient [1/W], > 0
    a_b: float = 5.0e-7              # battery loss coefficient [1/W], > 0
    p_aux: float = 2.0e3             # auxiliary electrical load [W]
    c_d1: float = 0.9                # aerodynamic drag coefficient [kg/m]
    c_d2: float = 5.0                # curvature-drag term [kg]
    c_roll: float = 0.012            # rolling resistance [-]
    # input / state limits
    p_f_max: float = 2.2e6           # fuel power [W]
    p_kdc_min: float = -1.2e5        # MGU-K electrical power [W]
    p_kdc_max: float = 1.2e5
    p_brk_max: float = 6.0e6         # braking power [W]
    e_b_max: float = 4.0e6           # battery capacity [J]
    e_k2es_max: float = 2.0e6        # per-lap MGU-K -> battery recovery budget [J]
    e_f_max: float = 1.0e8           # per-lap fuel energy allocation [J]
    a_lat_min: float = -50.0         # lateral acceleration bounds [m/s^2]
    a_lat_max: float = 50.0
    # performance-envelope force polynomials  F(v) = c2 v^2 + c1 v + c0  [N]
    alpha_lat: tuple = (6.0, 40.0, 3000.0)
    beta_acc: tuple = (2.0, 30.0, 8000.0)
    beta_dec: tuple = (4.0, 50.0, 12000.0)
    car_width: float = 2.0           # [m]
    v_floor: float = 5.0             # speed lower bound [m/s]
    v_ceil: float = 120.0            # envelope validity limit [m/s]

    def validate(self) -> "VehicleParams":
        if not self.a_g < 0:
            raise ValueError("a_g must be negative")
        if not (self.a_k > 0 and self.a_b > 0):
            raise ValueError("a_k and a_b must be positive")
        if not 0 < self.eta_e < 1:
            raise ValueError("eta_e must lie in (0, 1)")
        if not self.p_kdc_min < 0 < self.p_kdc_max:
            raise ValueError("p_kdc bounds must straddle zero")
        # the MGU-K loss parabola must be able to reach the recovery limit
        if -1.0 / (4.0 * self.a_k) > self.p_kdc_min:
            raise ValueError("a_k too large: p_kdc_min unreachable")
        for name in ("p_f_max", "p_brk_max", "e_b_max", "e_k2es_max", "e_f_max",
                     "m", "car_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.a_lat_min < 0 < self.a_lat_max:
            raise ValueError("a_lat bounds must straddle zero")
        for coeffs, name in ((self.alpha_lat, "alpha_lat"),
                             (self.beta_acc, "beta_acc"),
                             (self.beta_dec, "beta_dec")):
            if len(coeffs) != 3:
                raise ValueError(f"{name} needs 3 coefficients")
            for v in (self.v_floor, 0.5 * (self.v_floor + self.v_ceil), self.v_ceil):
                if _poly2(coeffs, v) <= 0:
                    raise ValueError(f"{name} not positive at v={v}")
        return self

    def with_overrides(self, **kwargs) -> "VehicleParams":
        return replace(self, **kwargs).validate()


def default_car(**overrides) -> VehicleParams:
    """The synthetic reference car.  Override any field by keyword."""
    return VehicleParams().with_overrides(**overrides)


def _poly2(c, v):
    return c[0] * v * v + c[1] * v + c[2]


def gearbox_power(p_u, p: VehicleParams):
    """Mechanical power after gearbox losses: a_g * P_u^2 + P_u (a_g < 0)."""
    return p.a_g * p_u * p_u + p_u


def engine_power(p_f, p: VehicleParams):
    """Willans-line engine: eta_e * P_f - P_e0."""
    return p.eta_e * p_f - p.p_e0


def mguk_dc_power(p_k, p: VehicleParams):
    """MGU-K electrical power from mechanical power: a_k * P_k^2 + P_k."""
    return p.a_k * p_k * p_k + p_k


def battery_power(p_kdc, p: VehicleParams):
    """Battery terminal power including auxiliaries."""
    return p_kdc + p.p_aux


def battery_internal_power(p_kdc, p: VehicleParams):
    """Internal battery power with charge/discharge losses: a_b * P_b^2 + P_b."""
    p_b = battery_power(p_kdc, p)
    return p.a_b * p_b * p_b + p_b


def propulsive_power(p_f, p_k, p_brk, p: VehicleParams):
    """Net propulsive power: gearbox(engine + MGU-K) minus braking."""
    return gearbox_power(engine_power(p_f, p) + p_k, p) - p_brk


def external_power(v, gamma, theta, p: VehicleParams):
    """Aerodynamic + rolling + slope power at speed v on local geometry."""
    aero = (p.c_d1 + p.c_d2 * gamma) * v * v * v
    roll = p.c_roll * p.m * p.g * math.cos(theta) * v
    slope = p.m * p.g * math.sin(theta) * v
    return aero + roll + slope


def envelope_limits(v, p: VehicleParams):
    """Speed-dependent force limits (F_lat_max, F_long_max_acc, F_long_max_dec)."""
    return (_poly2(p.alpha_lat, v), _poly2(p.beta_acc, v), _poly2(p.beta_dec, v))


def envelope_residuals(f_lat, f_long_acc, f_long_dec, v, c_z_int, p: VehicleParams):
    """Grip-ellipse residuals (r_acc, r_dec); feasible iff r <= 0.

    The semi-axes shrink with the downforce-interaction coefficient: the
    right-hand side is (1 - C_z_int)^2.
    """
    f_lat_max, f_acc_max, f_dec_max = envelope_limits(v, p)
    lat = (f_lat / f_lat_max) ** 2
    rhs = (1.0 - c_z_int) ** 2
    r_acc = lat + (f_long_acc / f_acc_max) ** 2 - rhs
    r_dec = lat + (f_long_dec / f_dec_max) ** 2 - rhs
    return r_acc, r_dec
