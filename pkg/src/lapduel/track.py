"""Track geometry: loading, validation, resampling and synthetic archetypes.

A track is described on an arc-length grid by curvature, slope and lateral
bounds.  Sign conventions: positive lateral offset ``y`` is to the right of
the centerline, and the centerline-speed factor uses ``1 - y*|gamma|`` with
the *absolute* curvature while the heading dynamics use signed ``gamma``;
the two are deliberately asymmetric (see README notes on curvature signs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["TrackData", "TrackError", "load_track", "resample", "make_synthetic"]


class TrackError(ValueError):
    """Malformed or physically inconsistent track data."""


@dataclass(frozen=True)
class TrackData:
    """Discretized track geometry over an arc-length grid (SI units)."""

    s: np.ndarray       # arc length [m], strictly increasing, s[0] = 0
    gamma: np.ndarray   # signed curvature [1/m]
    theta: np.ndarray   # slope [rad]
    y_min: np.ndarray   # right... negative lateral bound [m] (< 0)
    y_max: np.ndarray   # positive lateral bound [m] (> 0)

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @property
    def n_points(self) -> int:
        return self.s.shape[0]

    def heading_integral(self) -> float:
        """Discrete integral of curvature over the lap, sum(gamma * ds)."""
        ds = np.diff(self.s)
        return float(np.sum(self.gamma[:-1] * ds))


def _validate(s, gamma, theta, y_min, y_max, where="track") -> TrackData:
    n = len(s)
    if n < 3:
        raise TrackError(f"{where}: need at least 3 grid points, got {n}")
    s = np.asarray(s, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    theta = np.asarray(theta, dtype=float)
    y_min = np.asarray(y_min, dtype=float)
    y_max = np.asarray(y_max, dtype=float)
    if not (s.shape == gamma.shape == theta.shape == y_min.shape == y_max.shape):
        raise TrackError(f"{where}: column length mismatch")
    if s[0] != 0.0:
        raise TrackError(f"{where}: arc length must start at 0, got {s[0]}")
    bad = np.nonzero(np.diff(s) <= 0)[0]
    if bad.size:
        raise TrackError(f"{where}: arc length not strictly increasing at row {bad[0] + 2}")
    for k in range(n):
        if not (y_min[k] < 0.0 < y_max[k]):
            raise TrackError(
                f"{where}: centerline outside bounds at row {k + 1} "
                f"(y_min={y_min[k]}, y_max={y_max[k]})"
            )
        if abs(gamma[k]) * max(abs(y_min[k]), y_max[k]) >= 1.0:
            raise TrackError(
                f"{where}: curvature too large for track width at row {k + 1} "
                f"(|gamma|*max|y| = {abs(gamma[k]) * max(abs(y_min[k]), y_max[k]):.3f} >= 1)"
            )
        if abs(theta[k]) >= math.pi / 2:
            raise TrackError(f"{where}: slope out of range at row {k + 1}")
    return TrackData(s=s, gamma=gamma, theta=theta, y_min=y_min, y_max=y_max)


_HEADER = ["s", "gamma", "theta", "y_min", "y_max"]


def load_track(path) -> TrackData:
    """Load a comma-separated track file with header ``s,gamma,theta,y_min,y_max``."""
    cols = {name: [] for name in _HEADER}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = [h.strip() for h in header.split(",")]
        if names != _HEADER:
            raise TrackError(f"{path}: expected header {','.join(_HEADER)!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise TrackError(f"{path}: row {lineno}: expected 5 columns, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError as err:
                raise TrackError(f"{path}: row {lineno}: {err}") from None
            for name, v in zip(_HEADER, values):
                cols[name].append(v)
    return _validate(cols["s"], cols["gamma"], cols["theta"], cols["y_min"],
                     cols["y_max"], where=str(path))


def save_track(t: TrackData, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_HEADER) + "\n")
        for k in range(t.n_points):
            fh.write(f"{t.s[k]:.17g},{t.gamma[k]:.17g},{t.theta[k]:.17g},"
                     f"{t.y_min[k]:.17g},{t.y_max[k]:.17g}\n")


def resample(t: TrackData, n: int) -> TrackData:
    """Resample onto a uniform n-point grid over [0, S] with linear interpolation."""
    if n < 3:
        raise TrackError(f"resample: need n >= 3, got {n}")
    s = np.linspace(0.0, t.total_length, n)
    return _validate(
        s,
        np.interp(s, t.s, t.gamma),
        np.interp(s, t.s, t.theta),
        np.interp(s, t.s, t.y_min),
        np.interp(s, t.s, t.y_max),
        where="resampled track",
    )


def _segments_to_track(segments, half_width: float, ds: float) -> TrackData:
    """Build a grid from (length, curvature) segments at roughly ds spacing.

    Each node carries the curvature of the segment starting at it, so the
    left-Riemann heading integral of piecewise-constant geometry is exact.
    """
    s_pts: list[float] = []
    g_pts: list[float] = []
    base = 0.0
    for length, gamma in segments:
        m = max(1, int(round(length / ds)))
        local = np.linspace(0.0, length, m + 1)[:-1]
        s_pts.extend((base + local).tolist())
        g_pts.extend([gamma] * len(local))
        base += length
    s_pts.append(base)
    g_pts.append(segments[-1][1])
    s = np.asarray(s_pts)
    gamma = np.asarray(g_pts)
    zeros = np.zeros_like(s)
    return _validate(s, gamma, zeros, zeros - half_width, zeros + half_width,
                     where="synthetic track")


def make_synthetic(kind: str, **params) -> TrackData:
    """Build a synthetic track archetype.

    Kinds and parameters (all lengths in m, angles in degrees):

    * ``straight``: length, half_width
    * ``oval``: straight, radius, half_width  (closed, counterclockwise)
    * ``chicane``: entry, radius, arc_deg, exit, half_width (S-curve)
    * ``high_speed_corner``: entry, radius, arc_deg, exit, half_width
    """
    half_width = float(params.pop("half_width", 6.0))
    ds = float(params.pop("ds", 2.0))
    if half_width <= 0:
        raise TrackError("half_width must be positive")

    def _radius_ok(radius):
        if radius <= 0:
            raise TrackError("radius must be positive")
        if half_width / radius >= 1.0:
            raise TrackError(
                f"radius {radius} too small for half-width {half_width}: "
                "curvature invariant |gamma|*|y| < 1 fails"
            )

    if kind == "straight":
        length = float(params.pop("length", 1000.0))
        if length <= 0:
            raise TrackError("length must be positive")
        segs = [(length, 0.0)]
    elif kind == "oval":
        straight = float(params.pop("straight", 500.0))
        radius = float(params.pop("radius", 100.0))
        _radius_ok(radius)
        arc = math.pi * radius
        segs = [(straight, 0.0), (arc, 1.0 / radius),
                (straight, 0.0), (arc, 1.0 / radius)]
    elif kind == "chicane":
        entry = float(params.pop("entry", 200.0))
        radius = float(params.pop("radius", 80.0))
        arc_deg = float(params.pop("arc_deg", 45.0))
        exit_ = float(params.pop("exit", 200.0))
        _radius_ok(radius)
        arc = math.radians(arc_deg) * radius
        segs = [(entry, 0.0), (arc, 1.0 / radius), (arc, -1.0 / radius), (exit_, 0.0)]
    elif kind == "high_speed_corner":
        entry = float(params.pop("entry", 300.0))
        radius = float(params.pop("radius", 300.0))
        arc_deg = float(params.pop("arc_deg", 60.0))
        exit_ = float(params.pop("exit", 300.0))
        _radius_ok(radius)
        arc = math.radians(arc_deg) * radius
        segs = [(entry, 0.0), (arc, 1.0 / radius), (exit_, 0.0)]
    else:
        raise TrackError(f"unknown synthetic track kind {kind!r}")
    if params:
        raise TrackError(f"unknown parameters for {kind}: {sorted(params)}")
    return _segments_to_track(segs, half_width, ds)
