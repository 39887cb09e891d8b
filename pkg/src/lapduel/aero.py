"""Wake-interaction models: smooth drag/downforce reduction factors.

Each reduction factor is a small feed-forward composition of affine maps and
tanh activations: an inner layer of tanh units and an outer squashing
``0.5 * (1 + tanh(z / 2))`` that clamps the output to (0, 1) by construction.
Lateral factors pair every unit with its mirror so evenness in the lateral
gap holds to machine precision.

The bundled training points are digitized approximations of published
CFD/experimental wake studies (see ``data/*.csv``); they are approximate by
nature and everything downstream treats them as shape references only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import exprgraph as eg
from .vehicle import VehicleParams

__all__ = [
    "ReductionFit",
    "AeroModel",
    "FitError",
    "fit_reduction",
    "drag_coefficient",
    "downforce_coefficient",
    "interaction_drag_power",
    "default_model",
    "disabled_model",
]

LONGITUDINAL = "longitudinal"
LATERAL = "lateral"


class FitError(RuntimeError):
    """Least-squares fit failed to reach the requested accuracy."""


@dataclass(frozen=True)
class ReductionFit:
    """One smooth scalar reduction map with output in (0, 1).

    ``kind`` tags the input domain: relative gap time in seconds for
    longitudinal fits, lateral gap normalized by car width for lateral fits.
    Lateral fits are even functions of their input.
    """

    kind: str
    weights: tuple          # unit output weights
    slopes: tuple           # unit input slopes
    offsets: tuple          # unit input offsets
    bias: float

    def _z(self, x, tanh_fn):
        z = self.bias
        for w, a, b in zip(self.weights, self.slopes, self.offsets):
            if self.kind == LATERAL:
                z = z + w * (tanh_fn(a * x + b) + tanh_fn(b - a * x))
            else:
                z = z + w * tanh_fn(a * x + b)
        return z

    def value(self, x):
        """Evaluate on a float or numpy array."""
        x = np.asarray(x, dtype=float)
        z = self._z(x, np.tanh)
        out = 0.5 * (1.0 + np.tanh(0.5 * z))
        return float(out) if out.ndim == 0 else out

    def expr(self, x: eg.Expr) -> eg.Expr:
        """Build the same map as an expression of ``x``."""
        z = self._z(x, eg.tanh)
        return 0.5 * (1.0 + eg.tanh(0.5 * z))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": list(self.weights),
            "slopes": list(self.slopes),
            "offsets": list(self.offsets),
            "bias": self.bias,
        }

    @staticmethod
    def from_dict(d: dict) -> "ReductionFit":
        return ReductionFit(
            kind=d["kind"],
            weights=tuple(d["weights"]),
            slopes=tuple(d["slopes"]),
            offsets=tuple(d["offsets"]),
            bias=float(d["bias"]),
        )


def fit_reduction(points, kind: str = LONGITUDINAL, n_units: int = 4,
                  weights=None, rms_target: float = 0.03, seed: int = 0,
                  n_starts: int = 40) -> ReductionFit:
    """Least-squares fit of a reduction factor to (input, value) points.

    Lateral fits are trained on mirrored data and are even by construction.
    Raises :class:`FitError` with the achieved error when no restart reaches
    ``rms_target``.
    """
    from scipy.optimize import least_squares

    pts = [(float(x), float(v)) for x, v in points]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points, got {len(pts)}")
    for x, v in pts:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"target value {v} at input {x} outside [0, 1]")
    if kind not in (LONGITUDINAL, LATERAL):
        raise ValueError(f"unknown fit kind {kind!r}")
    if kind == LATERAL:
        pts = pts + [(-x, v) for x, v in pts if x != 0.0]

    xs = np.array([x for x, _ in pts])
    vs = np.array([v for _, v in pts])
    if weights is None:
        wts = np.ones_like(vs)
    else:
        wts = np.asarray(weights, dtype=float)
        if kind == LATERAL:
            base = np.asarray(weights, dtype=float)
            mirrored = [w for (x, _), w in zip(points, base) if float(x) != 0.0]
            wts = np.concatenate([base, mirrored])
    span = max(xs.max() - xs.min(), 1e-6)

    def unpack(theta):
        w = theta[:n_units]
        a = theta[n_units:2 * n_units]
        b = theta[2 * n_units:3 * n_units]
        c = theta[-1]
        return ReductionFit(kind, tuple(w), tuple(a), tuple(b), float(c))

    def residuals(theta):
        return (unpack(theta).value(xs) - vs) * wts

    rng = np.random.default_rng(seed)
    best = None
    best_rms = math.inf
    for _ in range(n_starts):
        theta0 = np.concatenate([
            rng.normal(0.0, 2.0, n_units),                  # weights
            rng.normal(0.0, 8.0 / span, n_units),           # slopes
            rng.normal(0.0, 2.0, n_units),                  # offsets
            rng.normal(0.0, 1.0, 1),                        # bias
        ])
        sol = least_squares(residuals, theta0, method="trf", max_nfev=400)
        fit = unpack(sol.x)
        rms = float(np.sqrt(np.mean((fit.value(xs) - vs) ** 2)))
        if rms < best_rms:
            best, best_rms = fit, rms
        if best_rms <= 0.25 * rms_target:
            break
    if best_rms > rms_target:
        raise FitError(f"fit RMS {best_rms:.4f} exceeds target {rms_target}")
    return best


@dataclass(frozen=True)
class AeroModel:
    """The four wake-reduction fits combined into C_x,int and C_z,int."""

    drag_long: ReductionFit
    drag_lat: ReductionFit
    down_long: ReductionFit
    down_lat: ReductionFit

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict()
                for name in ("drag_long", "drag_lat", "down_long", "down_lat")}

    @staticmethod
    def from_dict(d: dict) -> "AeroModel":
        return AeroModel(**{k: ReductionFit.from_dict(v) for k, v in d.items()})


def drag_coefficient(t_gap_rel, y_gap_rel, model: AeroModel, car_width: float):
    """Combined drag-interaction coefficient C_x,int in [0, 1].

    Accepts floats/arrays or expressions; lateral gap is normalized by the
    car width before entering the lateral fit.
    """
    if isinstance(t_gap_rel, eg.Expr) or isinstance(y_gap_rel, eg.Expr):
        return model.drag_long.expr(t_gap_rel) * model.drag_lat.expr(y_gap_rel / car_width)
    return model.drag_long.value(t_gap_rel) * model.drag_lat.value(
        np.asarray(y_gap_rel, dtype=float) / car_width)


def downforce_coefficient(t_gap_rel, y_gap_rel, model: AeroModel, car_width: float):
    """Combined downforce-interaction coefficient C_z,int in [0, 1]."""
    if isinstance(t_gap_rel, eg.Expr) or isinstance(y_gap_rel, eg.Expr):
        return model.down_long.expr(t_gap_rel) * model.down_lat.expr(y_gap_rel / car_width)
    return model.down_long.value(t_gap_rel) * model.down_lat.value(
        np.asarray(y_gap_rel, dtype=float) / car_width)


def interaction_drag_power(v, c_x_int, p: VehicleParams):
    """Drag power recovered in the wake: C_x,int * c_d1 * v^3."""
    return c_x_int * p.c_d1 * v * v * v


# -- bundled data ------------------------------------------------------------


def load_points(name: str):
    """Read one bundled digitized point set (header ``input,value``)."""
    text = resources.files("lapduel.data").joinpath(name).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if lines[0] != "input,value":
        raise ValueError(f"{name}: expected header 'input,value'")
    return [tuple(float(p) for p in ln.split(",")) for ln in lines[1:]]


_TAIL_WEIGHT = 40.0


def _tail_weights(points):
    # zero-tail targets get extra weight so the fit truly vanishes there
    return [(_TAIL_WEIGHT if v < 0.005 else 1.0) for _, v in points]


def fit_default_model(seed: int = 0) -> AeroModel:
    """Refit the four factors from the bundled digitized data."""
    specs = [
        ("drag_long", "drag_long.csv", LONGITUDINAL, 5),
        ("drag_lat", "drag_lat.csv", LATERAL, 3),
        ("down_long", "down_long.csv", LONGITUDINAL, 5),
        ("down_lat", "down_lat.csv", LATERAL, 3),
    ]
    fits = {}
    for attr, fname, kind, n_units in specs:
        pts = load_points(fname)
        fits[attr] = fit_reduction(pts, kind=kind, n_units=n_units,
                                   weights=_tail_weights(pts), seed=seed)
    return AeroModel(**fits)


def default_model() -> AeroModel:
    """The frozen default wake model (fitted once from the bundled data)."""
    text = resources.files("lapduel.data").joinpath("default_fits.json").read_text(
        encoding="utf-8")
    return AeroModel.from_dict(json.loads(text))


_DISABLED = None


def disabled_model():
    """Sentinel for interaction-free runs (kept for symmetry of call sites)."""
    return _DISABLED
