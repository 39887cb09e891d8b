"""Space-domain optimal-control transcription via multiple shooting.

Each agent's 7 states and 5 inputs (plus the longitudinal force split) become
decision variables on the arc-length grid; dynamics are enforced with Euler
forward continuity equalities.  All decision variables are internally scaled
to O(1) magnitudes and every constraint row is normalized, which is what the
interior-point solver sees.  Physical quantities enter and leave through the
scale tables below.

Two-agent transcriptions couple the cars through same-node relative gaps:
wake coefficients feed the drag power and the grip-envelope shrink factor,
and an elliptical minimum-separation constraint guards collisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import aero as aero_mod
from . import exprgraph as eg
from . import vehicle as veh
from .track import TrackData
from .vehicle import VehicleParams

__all__ = [
    "AgentState",
    "AgentInput",
    "AgentSpec",
    "BoundaryConditions",
    "TranscribeOptions",
    "NlpProblem",
    "VariableSpace",
    "Transcription",
    "rhs_time_domain",
    "rhs_space_domain",
    "centerline_speed",
    "collision_residual",
    "transcribe",
]

# state order: v, E_f, E_b, t, E_K2ES, y, phi
STATE_NAMES = ("v", "e_f", "e_b", "t", "e_k2es", "y", "phi")
STATE_SCALES = np.array([50.0, 1.0e7, 1.0e6, 10.0, 1.0e6, 5.0, 0.2])
# input order: P_f, P_k, P_brk, P_K2ES, a_lat
INPUT_NAMES = ("p_f", "p_k", "p_brk", "p_k2es", "a_lat")
INPUT_SCALES = np.array([1.0e6, 1.0e5, 1.0e6, 1.0e5, 25.0])
FORCE_SCALE = 1.0e4
POWER_ROW = 1.0e5  # scale for power-unit constraint rows

IV, IEF, IEB, IT, IK2, IY, IPHI = range(7)
IPF, IPK, IBRK, IKES, IALAT = range(5)


def _sin(x):
    return eg.sin(x) if isinstance(x, eg.Expr) else math.sin(x)


def _cos(x):
    return eg.cos(x) if isinstance(x, eg.Expr) else math.cos(x)


def _tan(x):
    return eg.tan(x) if isinstance(x, eg.Expr) else math.tan(x)


@dataclass(frozen=True)
class AgentState:
    """Physical state vector (SI units)."""

    v: float
    e_f: float
    e_b: float
    t: float
    e_k2es: float
    y: float
    phi: float


@dataclass(frozen=True)
class AgentInput:
    """Physical control vector (SI units)."""

    p_f: float
    p_k: float
    p_brk: float
    p_k2es: float
    a_lat: float


def centerline_speed(v, phi, y, gamma: float):
    """Speed projected on the centerline: v cos(phi) / (1 - y |gamma|)."""
    return v * _cos(phi) / (1.0 - y * abs(gamma))


def rhs_time_domain(x, u, gamma: float, theta: float, c_x_int, c_z_int,
                    p: VehicleParams):
    """Time-domain derivatives of the 7 states (works on floats or exprs).

    ``c_z_int`` does not enter the dynamics (it shrinks the grip envelope);
    it is accepted so both interaction coefficients travel together.
    """
    del c_z_int
    v, e_f, e_b, t, e_k2, y, phi = _as_seq(x, AgentState)
    p_f, p_k, p_brk, p_k2es, a_lat = _as_seq(u, AgentInput)
    p_p = veh.propulsive_power(p_f, p_k, p_brk, p)
    p_ext = veh.external_power(v, gamma, theta, p) \
        - aero_mod.interaction_drag_power(v, c_x_int, p)
    p_i = veh.battery_internal_power(veh.mguk_dc_power(p_k, p), p)
    v_c = centerline_speed(v, phi, y, gamma)
    return (
        (p_p - p_ext) / (p.m * v),
        p_f,
        -p_i,
        1.0 if not isinstance(v, eg.Expr) else eg.const(1.0),
        -p_k2es,
        v * _sin(phi),
        a_lat / v - v_c * gamma,
    )


def rhs_space_domain(x, u, gamma: float, theta: float, c_x_int, c_z_int,
                     p: VehicleParams):
    """Space-domain derivatives: the time-domain rates divided by v_c."""
    v, _, _, _, _, y, phi = _as_seq(x, AgentState)
    f = rhs_time_domain(x, u, gamma, theta, c_x_int, c_z_int, p)
    v_c = centerline_speed(v, phi, y, gamma)
    inv_vc = 1.0 / v_c
    a_lat = _as_seq(u, AgentInput)[IALAT]
    one_m_yg = 1.0 - y * abs(gamma)
    return (
        f[0] * inv_vc,
        f[1] * inv_vc,
        f[2] * inv_vc,
        inv_vc,
        f[4] * inv_vc,
        _tan(phi) * one_m_yg,
        a_lat / (v * v_c) - gamma,
    )


def _as_seq(x, cls):
    if isinstance(x, cls):
        return tuple(getattr(x, f) for f in cls.__dataclass_fields__)
    return tuple(x)


def collision_residual(t_gap_rel, y_gap_rel, t_gap_min: float, y_gap_min: float):
    """Elliptical separation residual; feasible iff <= 0."""
    return 1.0 - (t_gap_rel / t_gap_min) ** 2 - (y_gap_rel / y_gap_min) ** 2


@dataclass(frozen=True)
class AgentSpec:
    name: str
    params: VehicleParams


@dataclass(frozen=True)
class BoundaryConditions:
    """Per-agent boundary data; tuples ordered like the agent list."""

    e_b0: tuple
    de_b_target: tuple
    t_init: tuple

    @property
    def t_gap_init(self) -> float:
        if len(self.t_init) != 2:
            raise ValueError("t_gap_init defined for two agents")
        return self.t_init[1] - self.t_init[0]

    @staticmethod
    def two_car(e_b0=2.0e6, de_b_target_a=0.0, de_b_target_b=0.0,
                t_gap_init=0.2) -> "BoundaryConditions":
        return BoundaryConditions(
            e_b0=(e_b0, e_b0),
            de_b_target=(de_b_target_a, de_b_target_b),
            t_init=(0.0, t_gap_init),
        )

    @staticmethod
    def single(e_b0=2.0e6, de_b_target=0.0, t_init=0.0) -> "BoundaryConditions":
        return BoundaryConditions((e_b0,), (de_b_target,), (t_init,))


@dataclass(frozen=True)
class TranscribeOptions:
    interactions: bool = True
    collision: bool = True
    t_gap_min: float = 0.1
    y_gap_min: float | None = None       # defaults to car width
    initial_speed: float | None = None   # standing-start equality when set
    periodic_speed: bool = False         # flying lap: v[0] = v[N-1]


class VariableSpace:
    """Global decision-variable registry shared by one transcription."""

    def __init__(self):
        self.names: list[str] = []

    @property
    def size(self) -> int:
        return len(self.names)

    def new(self, name: str) -> int:
        self.names.append(name)
        return len(self.names) - 1

    def new_block(self, prefix: str, count: int) -> np.ndarray:
        start = len(self.names)
        self.names.extend(f"{prefix}[{i}]" for i in range(count))
        return np.arange(start, start + count, dtype=np.int64)


class NlpProblem:
    """One nonlinear program over a subset of a variable space.

    Convention: equalities h(x) = 0, inequalities g(x) <= 0, and box safety
    bounds on decision variables.  Variables outside ``decision`` are read
    from ``fixed`` during evaluation.
    """

    def __init__(self, space, decision, lb, ub, objective, eq, ineq, x0,
                 fixed, eq_labels=None, ineq_labels=None, name="",
                 kkt_lb_mask=None, kkt_ub_mask=None):
        self.space = space
        self.decision = np.asarray(decision, dtype=np.int64)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.objective = objective
        self.eq = list(eq)
        self.ineq = list(ineq)
        self.x0 = np.asarray(x0, dtype=float)
        self.fixed = np.asarray(fixed, dtype=float)
        self.eq_labels = eq_labels or [f"h[{i}]" for i in range(len(self.eq))]
        self.ineq_labels = ineq_labels or [f"g[{i}]" for i in range(len(self.ineq))]
        self.name = name
        # which finite bounds belong to the model (and so get KKT multipliers)
        # as opposed to pure solver safety guards
        self.kkt_lb_mask = (np.isfinite(self.lb) if kkt_lb_mask is None
                            else np.asarray(kkt_lb_mask, dtype=bool))
        self.kkt_ub_mask = (np.isfinite(self.ub) if kkt_ub_mask is None
                            else np.asarray(kkt_ub_mask, dtype=bool))
        self._programs = None  # solver-side compile cache
        n = len(self.decision)
        if not (len(self.lb) == len(self.ub) == len(self.x0) == n):
            raise ValueError("decision/bounds/guess dimension mismatch")

    @property
    def n_dec(self) -> int:
        return len(self.decision)

    def buffer_from(self, x: np.ndarray) -> np.ndarray:
        buf = self.fixed.copy()
        buf[self.decision] = x
        return buf

    def with_guess(self, x0: np.ndarray) -> "NlpProblem":
        clone = NlpProblem(self.space, self.decision, self.lb, self.ub,
                           self.objective, self.eq, self.ineq, x0, self.fixed,
                           self.eq_labels, self.ineq_labels, self.name,
                           self.kkt_lb_mask, self.kkt_ub_mask)
        clone._programs = self._programs
        return clone


@dataclass
class _AgentVars:
    x: np.ndarray       # (N, 7) scaled state var ids
    u: np.ndarray       # (N-1, 5) scaled input var ids
    f_acc: np.ndarray   # (N-1,) scaled force-split var ids
    f_dec: np.ndarray   # (N-1,)

    def all_ids(self) -> np.ndarray:
        """Block-major id layout: 7 state blocks, 5 input blocks, force splits."""
        return np.concatenate([self.x[:, j] for j in range(7)]
                              + [self.u[:, j] for j in range(5)]
                              + [self.f_acc, self.f_dec])


class Transcription:
    """Coupled multi-agent transcription over one variable space.

    ``agent_nlps[i]`` is agent i's own program (decision variables are its
    trajectory only; the opponent enters through non-decision variables),
    which is what the game reformulations consume.
    """

    def __init__(self, agents, track, bc, aero, options):
        self.agents = list(agents)
        self.track = track
        self.bc = bc
        self.aero = aero
        self.options = options
        self.space = VariableSpace()
        self.n = track.n_points
        self.ds = np.diff(track.s)
        self._build()

    # -- variable helpers ---------------------------------------------------

    def pinned_states(self, i: int) -> dict:
        """Initial states fixed by the boundary conditions (substituted as
        constants instead of decision variables)."""
        pins = {
            (0, IEF): 0.0,
            (0, IK2): 0.0,
            (0, IEB): float(self.bc.e_b0[i]),
            (0, IT): float(self.bc.t_init[i]),
        }
        if self.options.initial_speed is not None:
            pins[(0, IV)] = float(self.options.initial_speed)
        return pins

    def state_expr(self, i: int, k: int, j: int) -> eg.Expr:
        """Physical state j of agent i at node k as an expression."""
        pin = self.pinned_states(i).get((k, j))
        if pin is not None:
            return eg.const(pin)
        return STATE_SCALES[j] * eg.var(int(self.agent_vars[i].x[k, j]))

    def input_expr(self, i: int, k: int, j: int) -> eg.Expr:
        return INPUT_SCALES[j] * eg.var(int(self.agent_vars[i].u[k, j]))

    def lap_cost(self, i: int) -> eg.Expr:
        """Physical lap duration of agent i: final time state minus t_init."""
        return self.state_expr(i, self.n - 1, IT) - self.bc.t_init[i]

    def scaled_cost(self, i: int) -> eg.Expr:
        return eg.var(int(self.agent_vars[i].x[self.n - 1, IT])) \
            - self.bc.t_init[i] / STATE_SCALES[IT]

    def single(self) -> NlpProblem:
        if len(self.agents) != 1:
            raise ValueError("single() requires a one-agent transcription")
        return self.agent_nlps[0]

    # -- construction -------------------------------------------------------

    def _build(self):
        n = self.n
        opts = self.options
        track = self.track
        n_agents = len(self.agents)
        if n_agents < 1:
            raise ValueError("need at least one agent")
        for i, spec in enumerate(self.agents):
            p = spec.params.validate()
            e0, de = self.bc.e_b0[i], self.bc.de_b_target[i]
            if not 0.0 <= e0 <= p.e_b_max:
                raise ValueError(f"{spec.name}: E_b0 outside battery bounds")
            if not 0.0 <= e0 + de <= p.e_b_max:
                raise ValueError(f"{spec.name}: battery target outside bounds")

        self.agent_vars = []
        for i, spec in enumerate(self.agents):
            a = spec.name
            xv = np.stack([self.space.new_block(f"{a}.{STATE_NAMES[j]}", n)
                           for j in range(7)], axis=1)
            uv = np.stack([self.space.new_block(f"{a}.{INPUT_NAMES[j]}", n - 1)
                           for j in range(5)], axis=1)
            fa = self.space.new_block(f"{a}.f_acc", n - 1)
            fd = self.space.new_block(f"{a}.f_dec", n - 1)
            self.agent_vars.append(_AgentVars(xv, uv, fa, fd))

        # physical expressions per agent/node
        X = [[[self.state_expr(i, k, j) for j in range(7)] for k in range(n)]
             for i in range(n_agents)]
        U = [[[self.input_expr(i, k, j) for j in range(5)] for k in range(n - 1)]
             for i in range(n_agents)]

        width = self.agents[0].params.car_width
        y_gap_min = opts.y_gap_min if opts.y_gap_min is not None else width
        interactions = opts.interactions and self.aero is not None and n_agents > 1

        # wake coefficients per (agent, node); zero when interaction disabled
        def coeffs(i, k):
            if not interactions:
                return 0.0, 0.0
            others = [j for j in range(n_agents) if j != i]
            cx = 0.0
            cz = 0.0
            for j in others:
                t_gap = X[i][k][IT] - X[j][k][IT]
                y_gap = X[i][k][IY] - X[j][k][IY]
                cx = cx + aero_mod.drag_coefficient(t_gap, y_gap, self.aero, width)
                cz = cz + aero_mod.downforce_coefficient(t_gap, y_gap, self.aero, width)
            return cx, cz

        collision_rows = []
        if opts.collision and n_agents > 1:
            for i in range(n_agents):
                for j in range(i + 1, n_agents):
                    for k in range(n):
                        t_gap = X[i][k][IT] - X[j][k][IT]
                        y_gap = X[i][k][IY] - X[j][k][IY]
                        collision_rows.append(
                            (i, j, k,
                             collision_residual(t_gap, y_gap, opts.t_gap_min, y_gap_min)))

        self.agent_nlps = []
        self._guess_full = np.zeros(self.space.size)
        for i, spec in enumerate(self.agents):
            self._build_agent(i, spec, X, U, coeffs, collision_rows)

    def _svar(self, i: int, k: int, j: int) -> eg.Expr:
        """Scaled state expression: a constant where boundary-pinned."""
        pin = self.pinned_states(i).get((k, j))
        if pin is not None:
            return eg.const(pin / STATE_SCALES[j])
        return eg.var(int(self.agent_vars[i].x[k, j]))

    def _build_agent(self, i, spec, X, U, coeffs, collision_rows):
        n = self.n
        p = spec.params
        track = self.track
        opts = self.options
        eq, eq_lab = [], []
        ineq, in_lab = [], []
        av = self.agent_vars[i]
        name = spec.name

        for k in range(n - 1):
            gamma = float(track.gamma[k])
            theta = float(track.theta[k])
            ds = float(self.ds[k])
            xk = X[i][k]
            uk = U[i][k]
            c_x, c_z = coeffs(i, k)
            f = rhs_space_domain(xk, uk, gamma, theta, c_x, c_z, p)
            for j in range(7):
                step = (ds / STATE_SCALES[j]) * f[j]
                row = self._svar(i, k + 1, j) - self._svar(i, k, j) - step
                eq.append(row)
                eq_lab.append(f"{name}.cont_{STATE_NAMES[j]}[{k}]")

            # longitudinal force split: F_acc + F_dec = P_p / v
            p_p = veh.propulsive_power(uk[IPF], uk[IPK], uk[IBRK], p)
            f_acc = FORCE_SCALE * eg.var(int(av.f_acc[k]))
            f_dec = FORCE_SCALE * eg.var(int(av.f_dec[k]))
            eq.append((f_acc + f_dec - p_p / xk[IV]) / FORCE_SCALE)
            eq_lab.append(f"{name}.f_split[{k}]")

            # grip envelope with downforce-interaction shrink
            f_lat = p.m * uk[IALAT]
            r_acc, r_dec = veh.envelope_residuals(f_lat, f_acc, f_dec, xk[IV], c_z, p)
            ineq.append(r_acc)
            in_lab.append(f"{name}.env_acc[{k}]")
            ineq.append(r_dec)
            in_lab.append(f"{name}.env_dec[{k}]")

            # MGU-K electrical power window
            p_kdc = veh.mguk_dc_power(uk[IPK], p)
            ineq.append((p_kdc - p.p_kdc_max) / POWER_ROW)
            in_lab.append(f"{name}.pkdc_hi[{k}]")
            ineq.append((p.p_kdc_min - p_kdc) / POWER_ROW)
            in_lab.append(f"{name}.pkdc_lo[{k}]")

        # collision separation (each agent carries every shared row)
        for (ia, ja, k, row) in collision_rows:
            if i in (ia, ja):
                ineq.append(row)
                in_lab.append(f"{name}.collision[{k}]")

        # boundary conditions not already substituted as pinned constants
        e0, de = self.bc.e_b0[i], self.bc.de_b_target[i]
        eq.append((X[i][n - 1][IEB] - (e0 + de)) / STATE_SCALES[IEB])
        eq_lab.append(f"{name}.bc_e_b_target")
        if opts.periodic_speed:
            eq.append(self._svar(i, 0, IV) - self._svar(i, n - 1, IV))
            eq_lab.append(f"{name}.bc_v_periodic")

        all_ids = av.all_ids()
        pinned_ids = {int(av.x[k, j]) for (k, j) in self.pinned_states(i)}
        keep = np.array([int(g) not in pinned_ids for g in all_ids])
        decision = all_ids[keep]
        lb, ub, lb_mask, ub_mask = self._bounds(p)
        x0 = self._initial_guess(i, p)
        self._guess_full[all_ids] = x0
        self.agent_nlps.append(NlpProblem(
            self.space, decision, lb[keep], ub[keep], self.scaled_cost(i),
            eq, ineq, x0[keep],
            fixed=np.zeros(self.space.size),  # patched after all agents built
            eq_labels=eq_lab, ineq_labels=in_lab, name=f"agent:{name}",
            kkt_lb_mask=lb_mask[keep], kkt_ub_mask=ub_mask[keep],
        ))
        if i == len(self.agents) - 1:
            for nlp in self.agent_nlps:
                nlp.fixed = self._guess_full.copy()

    def _bounds(self, p: VehicleParams):
        """Variable boxes, decision-block-major; masks mark model bounds.

        Model bounds carry KKT multipliers in the game reformulations; the
        unmasked ones (heading, MGU-K mechanical power) are solver safety
        guards that stay inactive by construction.
        """
        n = self.n
        m = n - 1
        size = 7 * n + 5 * m + 2 * m
        lb = np.full(size, -np.inf)
        ub = np.full(size, np.inf)
        lb_mask = np.zeros(size, dtype=bool)
        ub_mask = np.zeros(size, dtype=bool)

        def block(j):
            return slice(j * n, (j + 1) * n)

        lb[block(IV)] = p.v_floor / STATE_SCALES[IV]
        ub[block(IV)] = p.v_ceil / STATE_SCALES[IV]
        lb_mask[block(IV)] = ub_mask[block(IV)] = True
        lb[block(IEF)] = 0.0
        lb_mask[block(IEF)] = True
        ub[IEF * n + n - 1] = p.e_f_max / STATE_SCALES[IEF]   # per-lap budget
        ub_mask[IEF * n + n - 1] = True
        lb[block(IEB)] = 0.0
        ub[block(IEB)] = p.e_b_max / STATE_SCALES[IEB]
        lb_mask[block(IEB)] = ub_mask[block(IEB)] = True
        lb[block(IK2)] = 0.0
        ub[block(IK2)] = p.e_k2es_max / STATE_SCALES[IK2]
        lb_mask[block(IK2)] = ub_mask[block(IK2)] = True
        lb[block(IY)] = self.track.y_min / STATE_SCALES[IY]
        ub[block(IY)] = self.track.y_max / STATE_SCALES[IY]
        lb_mask[block(IY)] = ub_mask[block(IY)] = True
        lb[block(IPHI)] = -0.9 / STATE_SCALES[IPHI]   # safety: keeps tan/cos sane
        ub[block(IPHI)] = 0.9 / STATE_SCALES[IPHI]

        ofs = 7 * n
        for j, lo, hi, model in (
            (IPF, 0.0, p.p_f_max, True),
            (IPK, -2.5e5, 2.5e5, False),     # safety: true limit is the P_kdc window
            (IBRK, 0.0, p.p_brk_max, True),
            (IKES, p.p_kdc_min, 0.0, True),
            (IALAT, p.a_lat_min, p.a_lat_max, True),
        ):
            sl = slice(ofs + j * m, ofs + (j + 1) * m)
            lb[sl] = lo / INPUT_SCALES[j]
            ub[sl] = hi / INPUT_SCALES[j]
            lb_mask[sl] = ub_mask[sl] = model
        ofs += 5 * m
        lb[ofs:ofs + m] = 0.0            # F_long,acc >= 0
        lb_mask[ofs:ofs + m] = True
        ofs += m
        ub[ofs:ofs + m] = 0.0            # F_long,dec <= 0
        ub_mask[ofs:ofs + m] = True
        return lb, ub, lb_mask, ub_mask

    def _initial_guess(self, i: int, p: VehicleParams) -> np.ndarray:
        """Steady cruise at 70% of the power-limited top speed, centerline."""
        n = self.n
        track = self.track
        v_lim = _power_limited_speed(p)
        v_g = 0.7 * v_lim
        x = np.zeros((n, 7))
        u = np.zeros((n - 1, 5))
        fa = np.zeros(n - 1)
        fd = np.zeros(n - 1)
        x[:, IV] = v_g
        x[0, IT] = self.bc.t_init[i]
        x[0, IEB] = self.bc.e_b0[i]
        p_ext = veh.external_power(v_g, 0.0, 0.0, p)
        p_u = _invert_gearbox(p_ext, p)
        p_f = min(max((p_u + p.p_e0) / p.eta_e, 0.0), p.p_f_max)
        p_i = veh.battery_internal_power(veh.mguk_dc_power(0.0, p), p)
        for k in range(n - 1):
            ds = float(self.ds[k])
            u[k, IPF] = p_f
            u[k, IALAT] = float(np.clip(track.gamma[k] * v_g * v_g,
                                        0.9 * p.a_lat_min, 0.9 * p.a_lat_max))
            fa[k] = p_ext / v_g
            x[k + 1, IT] = x[k, IT] + ds / v_g
            x[k + 1, IEF] = x[k, IEF] + ds * p_f / v_g
            x[k + 1, IEB] = x[k, IEB] - ds * p_i / v_g
            x[k + 1, IV] = v_g
        if self.options.initial_speed is not None:
            x[0, IV] = self.options.initial_speed
        xs = x / STATE_SCALES
        us = u / INPUT_SCALES
        guess = np.concatenate([xs[:, j] for j in range(7)]
                               + [us[:, j] for j in range(5)]
                               + [fa / FORCE_SCALE, fd / FORCE_SCALE])
        return guess

    # -- extraction ---------------------------------------------------------

    def trajectories(self, buf: np.ndarray, i: int):
        """Physical (states (N,7), inputs (N-1,5), f_acc, f_dec) from a buffer."""
        av = self.agent_vars[i]
        x = buf[av.x] * STATE_SCALES
        u = buf[av.u] * INPUT_SCALES
        return x, u, buf[av.f_acc] * FORCE_SCALE, buf[av.f_dec] * FORCE_SCALE

    def gap_series(self, buf: np.ndarray, i: int, j: int):
        """(t_gap, y_gap) of agent i relative to agent j at every node."""
        xi = buf[self.agent_vars[i].x] * STATE_SCALES
        xj = buf[self.agent_vars[j].x] * STATE_SCALES
        return xi[:, IT] - xj[:, IT], xi[:, IY] - xj[:, IY]


def _power_limited_speed(p: VehicleParams) -> float:
    """Top speed on a flat straight under full engine power (bisection)."""
    p_g = veh.gearbox_power(veh.engine_power(p.p_f_max, p), p)
    lo, hi = p.v_floor, 400.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if veh.external_power(mid, 0.0, 0.0, p) < p_g:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _invert_gearbox(p_g_target: float, p: VehicleParams) -> float:
    """Power-unit output needed for a target gearbox output (principal root)."""
    disc = 1.0 + 4.0 * p.a_g * p_g_target
    if disc <= 0.0:
        return -1.0 / (2.0 * p.a_g)
    return (-1.0 + math.sqrt(disc)) / (2.0 * p.a_g)


def transcribe(agents, track: TrackData, bc: BoundaryConditions,
               aero=None, options: TranscribeOptions | None = None) -> Transcription:
    """Build the multiple-shooting transcription for 1..n agents.

    Returns a :class:`Transcription`; use ``.single()`` for the one-agent
    NLP or ``.agent_nlps`` for the per-agent problems consumed by the game
    reformulations.
    """
    if options is None:
        options = TranscribeOptions()
    if isinstance(agents, AgentSpec):
        agents = [agents]
    if track.n_points < 3:
        raise ValueError("track grid too small")
    return Transcription(agents, track, bc, aero, options)
