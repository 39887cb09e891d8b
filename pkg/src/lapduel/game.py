"""Game reformulations over per-agent lap problems.

Each agent's NLP is replaced by its first-order optimality system: the
stationarity of its Lagrangian with the opponent's trajectory held constant,
primal feasibility, sign conditions on the inequality multipliers, and
complementarity pairs relaxed Scholtes-style (mu_j * (-g_j) <= tau).  Nash
couples both KKT systems under the summed costs; Stackelberg keeps the
leader's constraints explicit and embeds only the follower's system; the
single-leader-multi-follower variant embeds one system per follower.

The relaxation parameter and the leader-cost bound live in dedicated
fixed-value slots of the shared variable space, so one compiled problem
serves the whole homotopy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exprgraph as eg
from .ocp import IT, STATE_SCALES, NlpProblem, Transcription
from .solver import SolveResult, SolverOptions, solve

__all__ = [
    "KktSystem",
    "GameSolution",
    "SolutionSet",
    "EquilibriumReport",
    "kkt_conditions",
    "scholtes_relax",
    "build_nash",
    "build_stackelberg",
    "build_multi_follower",
    "trigame",
    "classify_equilibrium",
    "best_response_check",
    "GameOptions",
    "solve_homotopy",
    "presolve_agents",
]

DEFAULT_TAU_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
INACTIVE_BOUND = 1e9


@dataclass
class KktSystem:
    """First-order system of one agent's NLP, opponent variables fixed."""

    nlp: NlpProblem
    lambda_ids: np.ndarray          # equality multiplier variable ids
    mu_ids: np.ndarray              # inequality multiplier variable ids
    stationarity: list              # one Expr per agent decision variable
    ineq_rows: list                 # Exprs aligned with mu_ids (g <= 0 form)
    ineq_labels: list

    @property
    def n_pairs(self) -> int:
        return len(self.mu_ids)


def _bound_rows(nlp: NlpProblem):
    """Model bounds as inequality expressions (lb - x <= 0, x - ub <= 0)."""
    rows, labels, kinds = [], [], []
    for d in range(nlp.n_dec):
        gid = int(nlp.decision[d])
        name = nlp.space.names[gid]
        if np.isfinite(nlp.lb[d]) and nlp.kkt_lb_mask[d]:
            rows.append(eg.const(nlp.lb[d]) - eg.var(gid))
            labels.append(f"lb:{name}")
            kinds.append(("l", d))
        if np.isfinite(nlp.ub[d]) and nlp.kkt_ub_mask[d]:
            rows.append(eg.var(gid) - eg.const(nlp.ub[d]))
            labels.append(f"ub:{name}")
            kinds.append(("u", d))
    return rows, labels, kinds


def kkt_conditions(nlp: NlpProblem, external_vars=None) -> KktSystem:
    """Build the agent's KKT system, allocating multiplier variables.

    ``external_vars`` (opponent decision ids) are implicitly constant: the
    stationarity rows differentiate only with respect to the agent's own
    decision variables.  Model variable bounds participate as inequality
    pairs alongside the general rows.
    """
    if external_vars is not None:
        overlap = set(int(i) for i in external_vars) & set(
            int(i) for i in nlp.decision)
        if overlap:
            raise ValueError("external variables overlap the agent's own")
    space = nlp.space
    tag = nlp.name.split(":")[-1] or "agent"
    lam = space.new_block(f"lam.{tag}", len(nlp.eq))
    brows, blabels, bkinds = _bound_rows(nlp)
    rows = list(nlp.ineq) + brows
    labels = list(nlp.ineq_labels) + blabels
    mu = space.new_block(f"mu.{tag}", len(rows))

    dec_ids = [int(i) for i in nlp.decision]
    pos_of = {gid: d for d, gid in enumerate(dec_ids)}
    terms: list[list] = [[] for _ in dec_ids]
    for d, gid in enumerate(dec_ids):
        dj = eg.diff(nlp.objective, gid)
        if not dj.is_zero():
            terms[d].append(dj)
    for j, row in enumerate(nlp.eq):
        lam_j = eg.var(int(lam[j]))
        for gid in eg.variables_of(row):
            d = pos_of.get(gid)
            if d is None:
                continue
            dr = eg.diff(row, gid)
            if not dr.is_zero():
                terms[d].append(lam_j * dr)
    for j, row in enumerate(nlp.ineq):
        mu_j = eg.var(int(mu[j]))
        for gid in eg.variables_of(row):
            d = pos_of.get(gid)
            if d is None:
                continue
            dr = eg.diff(row, gid)
            if not dr.is_zero():
                terms[d].append(mu_j * dr)
    n_gen = len(nlp.ineq)
    for j, (kind, d) in enumerate(bkinds):
        mu_j = eg.var(int(mu[n_gen + j]))
        terms[d].append(-mu_j if kind == "l" else mu_j)
    stationarity = [eg.balanced_sum(t) for t in terms]
    return KktSystem(nlp=nlp, lambda_ids=lam, mu_ids=mu,
                     stationarity=stationarity, ineq_rows=rows,
                     ineq_labels=labels)


def scholtes_relax(kkt: KktSystem, tau) -> list:
    """Relaxed complementarity rows: mu_j * (-g_j) - tau <= 0.

    ``tau`` may be a float or an expression (a fixed-value slot for homotopy
    continuation); at tau = 0 the rows are exact complementary slackness.
    """
    if isinstance(tau, (int, float)):
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        tau = eg.const(float(tau))
    return [eg.var(int(m)) * (-row) - tau
            for m, row in zip(kkt.mu_ids, kkt.ineq_rows)]


def _merge_fixed(problems) -> np.ndarray:
    fixed = problems[0].fixed.copy()
    size = max(p.space.size for p in problems)
    if len(fixed) < size:
        fixed = np.concatenate([fixed, np.zeros(size - len(fixed))])
    return fixed


def _assemble(name, parts, objective, decision_blocks, fixed, x0_blocks,
              lb_blocks, ub_blocks, eq, eq_labels, ineq, ineq_labels, space):
    decision = np.concatenate(decision_blocks)
    order = np.argsort(decision, kind="stable")
    decision = decision[order]
    x0 = np.concatenate(x0_blocks)[order]
    lb = np.concatenate(lb_blocks)[order]
    ub = np.concatenate(ub_blocks)[order]
    return NlpProblem(space, decision, lb, ub, objective, eq, ineq, x0,
                      fixed, eq_labels, ineq_labels, name=name,
                      kkt_lb_mask=np.zeros(len(decision), dtype=bool),
                      kkt_ub_mask=np.zeros(len(decision), dtype=bool))


def _mult_blocks(kkt: KktSystem, mult: SolveResult | None):
    """Initial multiplier values, mapped from a direct solve when given."""
    lam0 = np.zeros(len(kkt.lambda_ids))
    mu0 = np.full(len(kkt.mu_ids), 1e-3)
    if mult is not None:
        lam0[:] = mult.y
        n_gen = len(kkt.nlp.ineq)
        mu0[:n_gen] = np.maximum(mult.z, 1e-8)
        _, _, bkinds = _bound_rows(kkt.nlp)
        for j, (kind, d) in enumerate(bkinds):
            val = mult.zl[d] if kind == "l" else mult.zu[d]
            mu0[n_gen + j] = max(val, 1e-8)
    return lam0, mu0


def _kkt_block_parts(kkt: KktSystem, tau_expr, mult: SolveResult | None):
    """Decision/constraint pieces contributed by one embedded KKT system."""
    nlp = kkt.nlp
    lam0, mu0 = _mult_blocks(kkt, mult)
    decision_blocks = [nlp.decision, kkt.lambda_ids, kkt.mu_ids]
    x0_blocks = [nlp.x0, lam0, mu0]
    lb_blocks = [nlp.lb, np.full(len(kkt.lambda_ids), -np.inf),
                 np.zeros(len(kkt.mu_ids))]
    ub_blocks = [nlp.ub, np.full(len(kkt.lambda_ids), np.inf),
                 np.full(len(kkt.mu_ids), np.inf)]
    tag = nlp.name.split(":")[-1]
    eq = list(nlp.eq) + kkt.stationarity
    eq_labels = [f"{l}" for l in nlp.eq_labels] \
        + [f"stat.{tag}[{i}]" for i in range(len(kkt.stationarity))]
    ineq = list(kkt.ineq_rows) + scholtes_relax(kkt, tau_expr)
    ineq_labels = list(kkt.ineq_labels) \
        + [f"relax.{tag}[{i}]" for i in range(len(kkt.mu_ids))]
    return decision_blocks, x0_blocks, lb_blocks, ub_blocks, eq, eq_labels, \
        ineq, ineq_labels


def build_nash(ocp_a, ocp_b, tau, kkt_a: KktSystem | None = None,
               kkt_b: KktSystem | None = None, mults=(None, None)) -> NlpProblem:
    """KKT-based Nash reformulation: both systems as constraints, summed costs."""
    kkt_a = kkt_a or kkt_conditions(ocp_a, external_vars=ocp_b.decision)
    kkt_b = kkt_b or kkt_conditions(ocp_b, external_vars=ocp_a.decision)
    dec, x0, lb0, ub0, eq, eql, ineq, inl = _kkt_block_parts(kkt_a, tau, mults[0])
    dec2, x02, lb2, ub2, eq2, eql2, ineq2, inl2 = _kkt_block_parts(kkt_b, tau, mults[1])
    fixed = _merge_fixed([ocp_a, ocp_b])
    return _assemble(
        "nash", None, ocp_a.objective + ocp_b.objective,
        dec + dec2, fixed, x0 + x02, lb0 + lb2, ub0 + ub2,
        eq + eq2, eql + eql2, ineq + ineq2, inl + inl2, ocp_a.space)


def build_stackelberg(ocp_leader, ocp_follower, tau,
                      leader_cost_upper_bound=None,
                      kkt_f: KktSystem | None = None,
                      mults=(None, None)) -> NlpProblem:
    """Stackelberg reformulation: leader explicit, follower as KKT system.

    ``leader_cost_upper_bound`` may be a float or an expression slot; when
    given, the inequality J_L <= bound joins the constraint set.
    """
    kkt_f = kkt_f or kkt_conditions(ocp_follower, external_vars=ocp_leader.decision)
    dec_f, x0_f, lb_f, ub_f, eq_f, eql_f, ineq_f, inl_f = \
        _kkt_block_parts(kkt_f, tau, mults[1])
    lead = ocp_leader
    dec = [lead.decision] + dec_f
    x0 = [lead.x0] + x0_f
    lb0 = [lead.lb] + lb_f
    ub0 = [lead.ub] + ub_f
    eq = list(lead.eq) + eq_f
    eql = list(lead.eq_labels) + eql_f
    ineq = list(lead.ineq) + ineq_f
    inl = list(lead.ineq_labels) + inl_f
    if leader_cost_upper_bound is not None:
        bound = leader_cost_upper_bound
        if isinstance(bound, (int, float)):
            bound = eg.const(float(bound))
        ineq.append(lead.objective - bound)
        inl.append("leader_cost_bound")
    fixed = _merge_fixed([ocp_leader, ocp_follower])
    return _assemble(
        "stackelberg", None, lead.objective + ocp_follower.objective,
        dec, fixed, x0, lb0, ub0, eq, eql, ineq, inl, lead.space)


def build_multi_follower(ocp_leader, ocp_followers, tau,
                         kkt_followers=None, mults=None) -> NlpProblem:
    """Single-leader-multi-follower reformulation (one KKT block per follower)."""
    followers = list(ocp_followers)
    if kkt_followers is None:
        kkt_followers = []
        for i, f in enumerate(followers):
            ext = np.concatenate([ocp_leader.decision]
                                 + [g.decision for j, g in enumerate(followers)
                                    if j != i])
            kkt_followers.append(kkt_conditions(f, external_vars=ext))
    if mults is None:
        mults = [None] * len(followers)
    dec = [ocp_leader.decision]
    x0 = [ocp_leader.x0]
    lb0 = [ocp_leader.lb]
    ub0 = [ocp_leader.ub]
    eq = list(ocp_leader.eq)
    eql = list(ocp_leader.eq_labels)
    ineq = list(ocp_leader.ineq)
    inl = list(ocp_leader.ineq_labels)
    objective = ocp_leader.objective
    for f, kkt_f, m in zip(followers, kkt_followers, mults):
        d, x, l, u, e, el, g, gl = _kkt_block_parts(kkt_f, tau, m)
        dec += d
        x0 += x
        lb0 += l
        ub0 += u
        eq += e
        eql += el
        ineq += g
        inl += gl
        objective = objective + f.objective
    fixed = _merge_fixed([ocp_leader] + followers)
    return _assemble("multi_follower", None, objective, dec, fixed, x0,
                     lb0, ub0, eq, eql, ineq, inl, ocp_leader.space)


@dataclass
class GameOptions:
    tau_schedule: tuple = DEFAULT_TAU_SCHEDULE
    solver: SolverOptions = field(default_factory=SolverOptions)
    presolve_rounds: int = 1
    max_iter_first: int = 600
    max_iter_warm: int = 300


@dataclass
class GameSolution:
    """One converged game: per-agent trajectories, costs and diagnostics."""

    kind: str                      # nash | stackelberg_A | stackelberg_B | ...
    agents: list                   # agent names in transcription order
    costs: dict                    # name -> physical lap time [s]
    states: dict                   # name -> (N, 7) physical state trajectory
    inputs: dict                   # name -> (N-1, 5) physical inputs
    multipliers: dict              # name -> {"lambda": ..., "mu": ...}
    status: str
    kkt_residuals: dict            # name -> scaled stationarity norm of own system
    complementarity: float         # max_j |mu_j * g_j| over all agents
    tau: float
    result: SolveResult
    buffer: np.ndarray

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "acceptable")


@dataclass
class SolutionSet:
    """TRIGAME output: Nash plus both leader assignments."""

    nash: GameSolution
    stack_a_leader: GameSolution
    stack_b_leader: GameSolution

    def all(self):
        return (self.nash, self.stack_a_leader, self.stack_b_leader)


@dataclass
class EquilibriumReport:
    dominant_a_leader: bool
    dominant_b_leader: bool
    case: str                      # case1 | case2 | case3
    sublabel: str | None           # concurrent | nonconcurrent | stalemate
    costs: dict


class TwoCarGame:
    """Shared workspace for the game builders over one transcription.

    Allocates the relaxation slot, leader-bound slots and both agents' KKT
    multiplier blocks once, so Nash and both Stackelberg problems share
    expressions and warm starts can be copied across problems directly.
    """

    def __init__(self, trans: Transcription, options: GameOptions | None = None):
        if len(trans.agents) != 2:
            raise ValueError("TwoCarGame needs a two-agent transcription")
        self.trans = trans
        self.options = options or GameOptions()
        space = trans.space
        self.tau_id = space.new("tau")
        self.bound_ids = [space.new(f"cost_bound.{a.name}") for a in trans.agents]
        self._presolves = None
        self.kkt = [
            kkt_conditions(trans.agent_nlps[0],
                           external_vars=trans.agent_nlps[1].decision),
            kkt_conditions(trans.agent_nlps[1],
                           external_vars=trans.agent_nlps[0].decision),
        ]
        self._problems = {}

    # -- plumbing -----------------------------------------------------------

    def _tau_expr(self):
        return eg.var(self.tau_id)

    def presolves(self):
        """Per-agent direct solves used as primal/dual initialization."""
        if self._presolves is None:
            self._presolves = presolve_agents(
                self.trans, self.options.solver,
                rounds=self.options.presolve_rounds)
        return self._presolves

    def problem(self, kind: str) -> NlpProblem:
        if kind in self._problems:
            return self._problems[kind]
        a, b = self.trans.agent_nlps
        mults = self.presolves()
        if kind == "nash":
            p = build_nash(a, b, self._tau_expr(),
                           kkt_a=self.kkt[0], kkt_b=self.kkt[1], mults=mults)
        elif kind == "stackelberg_A":
            p = build_stackelberg(a, b, self._tau_expr(),
                                  leader_cost_upper_bound=eg.var(self.bound_ids[0]),
                                  kkt_f=self.kkt[1], mults=mults)
        elif kind == "stackelberg_B":
            p = build_stackelberg(b, a, self._tau_expr(),
                                  leader_cost_upper_bound=eg.var(self.bound_ids[1]),
                                  kkt_f=self.kkt[0], mults=(mults[1], mults[0]))
        else:
            raise ValueError(f"unknown game kind {kind!r}")
        self._fill_aux(p)
        for mult, nlp in zip(mults, (a, b)):
            p.fixed[nlp.decision] = mult.x
        self._problems[kind] = p
        return p

    def _fill_aux(self, p: NlpProblem, tau=1e-1, bounds=(INACTIVE_BOUND,) * 2):
        p.fixed[self.tau_id] = tau
        for slot, val in zip(self.bound_ids, bounds):
            p.fixed[slot] = val

    # -- solving ------------------------------------------------------------

    def solve_game(self, kind: str, leader_bound: float | None = None,
                   warm: SolveResult | None = None) -> GameSolution:
        p = self.problem(kind)
        if leader_bound is not None:
            slot = self.bound_ids[0] if kind == "stackelberg_A" else self.bound_ids[1]
            p.fixed[slot] = leader_bound
        result, tau = solve_homotopy(
            p, self.tau_id, self.options.tau_schedule, self.options.solver,
            warm=warm, max_iter_first=self.options.max_iter_first,
            max_iter_warm=self.options.max_iter_warm)
        return self.package(kind, p, result, tau)

    def _agent_programs(self, i: int):
        if not hasattr(self, "_progs"):
            self._progs = {}
        if i not in self._progs:
            from .tape import Program

            kkt = self.kkt[i]
            size = self.trans.space.size
            self._progs[i] = (
                Program(kkt.stationarity, np.zeros(0, np.int64), size),
                Program(kkt.ineq_rows, np.zeros(0, np.int64), size),
            )
        return self._progs[i]

    def package(self, kind, p, result, tau) -> GameSolution:
        trans = self.trans
        buf = p.buffer_from(result.x)
        costs, states, inputs, mults, resid = {}, {}, {}, {}, {}
        comp = 0.0
        for i, spec in enumerate(trans.agents):
            x, u, _, _ = trans.trajectories(buf, i)
            name = spec.name
            states[name] = x
            inputs[name] = u
            costs[name] = float(eg.evaluate(trans.lap_cost(i), buf))
            kkt = self.kkt[i]
            lam = buf[kkt.lambda_ids]
            mu = buf[kkt.mu_ids]
            mults[name] = {"lambda": lam, "mu": mu}
            stat_prog, row_prog = self._agent_programs(i)
            stat = float(np.abs(stat_prog.values(buf)).max(initial=0.0))
            resid[name] = stat / (1.0 + abs(costs[name]))
            rows = row_prog.values(buf)
            if len(rows):
                comp = max(comp, float(np.abs(mu * rows).max()))
        return GameSolution(kind=kind, agents=[a.name for a in trans.agents],
                            costs=costs, states=states, inputs=inputs,
                            multipliers=mults, status=result.status,
                            kkt_residuals=resid, complementarity=comp,
                            tau=tau, result=result, buffer=buf)


def _without_collision(nlp: NlpProblem) -> tuple[NlpProblem, np.ndarray]:
    """The agent problem minus collision rows, plus the kept-row index map."""
    keep = np.array([".collision[" not in lab for lab in nlp.ineq_labels])
    if np.all(keep):
        return nlp, keep
    sub = NlpProblem(
        nlp.space, nlp.decision, nlp.lb, nlp.ub, nlp.objective, nlp.eq,
        [r for r, k in zip(nlp.ineq, keep) if k], nlp.x0, nlp.fixed,
        nlp.eq_labels, [l for l, k in zip(nlp.ineq_labels, keep) if k],
        name=nlp.name + ":presolve", kkt_lb_mask=nlp.kkt_lb_mask,
        kkt_ub_mask=nlp.kkt_ub_mask)
    return sub, keep


def presolve_agents(trans: Transcription, sopts: SolverOptions, rounds: int = 1):
    """Warm-up solves per agent against a frozen opponent trajectory.

    Collision rows are dropped (a frozen opponent makes them artificially
    binding); the returned multipliers are padded back to the full row set.
    """
    results = []
    for round_idx in range(max(1, rounds)):
        nxt = []
        for i, nlp in enumerate(trans.agent_nlps):
            sub, keep = _without_collision(nlp)
            sub.fixed = nlp.fixed
            if round_idx == 0:
                res = solve(sub, sopts)
            else:
                res = solve(sub.with_guess(results[i].x), sopts, warm=results[i])
            nxt.append(res)
        results = nxt
        # freeze each opponent at its newest trajectory for the next round
        for i, nlp in enumerate(trans.agent_nlps):
            for j, other in enumerate(trans.agent_nlps):
                if j != i:
                    nlp.fixed[other.decision] = results[j].x
    padded = []
    for nlp, res in zip(trans.agent_nlps, results):
        _, keep = _without_collision(nlp)
        z = np.full(len(nlp.ineq), 1e-4)
        if len(res.z) == int(keep.sum()):
            z[keep] = res.z
        padded.append(SolveResult(
            x=res.x, y=res.y, z=z, zl=res.zl, zu=res.zu, s=np.zeros(0),
            obj=res.obj, status=res.status, iterations=res.iterations,
            residuals=res.residuals, mu=res.mu, wall_time=res.wall_time))
    return padded


def solve_homotopy(p: NlpProblem, tau_id: int, schedule, sopts: SolverOptions,
                   warm=None, max_iter_first=600, max_iter_warm=300):
    """Drive the Scholtes relaxation down the schedule with warm starts."""
    result = warm
    tau = None
    for stage, tau in enumerate(schedule):
        p.fixed[tau_id] = tau
        opts = SolverOptions(**{**sopts.__dict__})
        opts.max_iter = max_iter_first if stage == 0 and warm is None \
            else max_iter_warm
        result = solve(p, opts, warm=result)
        if result.status in ("infeasible", "numerical_failure"):
            break
    return result, tau


def trigame(ocp_a, ocp_b, bc=None, options: GameOptions | None = None,
            workspace: TwoCarGame | None = None,
            trans: Transcription | None = None) -> SolutionSet:
    """Nash first, then both Stackelberg games bounded by the Nash costs.

    Accepts either a workspace (preferred: expressions are shared) or the
    two agent problems plus their transcription.
    """
    if workspace is None:
        if trans is None:
            raise ValueError("trigame needs a TwoCarGame workspace or a transcription")
        workspace = TwoCarGame(trans, options)
    nash = workspace.solve_game("nash")
    names = nash.agents
    sols = {}
    for kind, leader in (("stackelberg_A", 0), ("stackelberg_B", 1)):
        if not nash.ok:
            sols[kind] = nash
            continue
        bound = nash.costs[names[leader]] / STATE_SCALES[IT]  # physical -> scaled
        sols[kind] = workspace.solve_game(kind, leader_bound=bound,
                                          warm=_map_warm(workspace, kind, nash))
    return SolutionSet(nash=nash, stack_a_leader=sols["stackelberg_A"],
                       stack_b_leader=sols["stackelberg_B"])


def _map_warm(ws: TwoCarGame, kind: str, nash: GameSolution) -> SolveResult:
    """Project the Nash solution onto a Stackelberg problem's variables."""
    p = ws.problem(kind)
    src = nash.buffer
    x = src[p.decision]
    res = nash.result
    return SolveResult(
        x=x, y=np.zeros(len(p.eq)), z=np.full(len(p.ineq), 1e-4),
        zl=np.zeros(len(x)), zu=np.zeros(len(x)), s=np.zeros(0),
        obj=0.0, status="warm", iterations=0, residuals={}, mu=1e-4,
        wall_time=0.0)


def classify_equilibrium(sols: SolutionSet, tol: float = 1e-6) -> EquilibriumReport:
    """Appendix-style dominance classification from the six costs.

    A Stackelberg solution is dominant when both its leader and follower do
    at least as well as at Nash (within ``tol``).  With both dominant, the
    sublabel compares each player's own-leader vs own-follower cost; exact
    ties resolve to "concurrent".
    """
    for slot in sols.all():
        if slot is None:
            raise ValueError("SolutionSet has an empty slot")
    a, b = sols.nash.agents
    j_an, j_bn = sols.nash.costs[a], sols.nash.costs[b]
    j_al, j_bf = sols.stack_a_leader.costs[a], sols.stack_a_leader.costs[b]
    j_bl, j_af = sols.stack_b_leader.costs[b], sols.stack_b_leader.costs[a]
    return _classify_costs(j_an, j_bn, j_al, j_bf, j_bl, j_af, tol)


def _classify_costs(j_an, j_bn, j_al, j_bf, j_bl, j_af, tol=1e-6):
    dom_a = (j_al <= j_an + tol) and (j_bf <= j_bn + tol)
    dom_b = (j_bl <= j_bn + tol) and (j_af <= j_an + tol)
    costs = {"A_nash": j_an, "B_nash": j_bn, "A_leader": j_al,
             "B_follower": j_bf, "B_leader": j_bl, "A_follower": j_af}
    if not (dom_a or dom_b):
        case, sub = "case1", None
    elif dom_a != dom_b:
        case, sub = "case2", None
    else:
        case = "case3"
        # leadership preference per player; ties count as indifferent
        a_lead = j_al < j_af - tol
        a_follow = j_af < j_al - tol
        b_lead = j_bl < j_bf - tol
        b_follow = j_bf < j_bl - tol
        if a_lead and b_lead:
            sub = "nonconcurrent"
        elif a_follow and b_follow:
            sub = "stalemate"
        else:
            sub = "concurrent"
    return EquilibriumReport(dominant_a_leader=dom_a, dominant_b_leader=dom_b,
                             case=case, sublabel=sub, costs=costs)


def best_response_check(solution: GameSolution, agent: int,
                        trans: Transcription,
                        sopts: SolverOptions | None = None) -> float:
    """Re-optimize one agent against the frozen opponent trajectory.

    Returns the cost improvement in seconds (small values certify that the
    reported point is a best response for this agent).
    """
    sopts = sopts or SolverOptions()
    nlp = trans.agent_nlps[agent]
    fixed = solution.buffer.copy()
    br = nlp.with_guess(solution.buffer[nlp.decision])
    br.fixed = fixed
    name = trans.agents[agent].name
    mults = solution.multipliers[name]
    n_gen = len(nlp.ineq)
    _, _, bkinds = _bound_rows(nlp)
    zl = np.zeros(nlp.n_dec)
    zu = np.zeros(nlp.n_dec)
    for j, (kind, d) in enumerate(bkinds):
        if kind == "l":
            zl[d] = mults["mu"][n_gen + j]
        else:
            zu[d] = mults["mu"][n_gen + j]
    warm = SolveResult(
        x=br.x0.copy(), y=mults["lambda"].copy(),
        z=np.maximum(mults["mu"][:n_gen], 1e-10), zl=zl, zu=zu,
        s=np.zeros(0), obj=0.0, status="warm", iterations=0, residuals={},
        mu=1e-6, wall_time=0.0)
    res = solve(br, sopts, warm=warm)
    if not res.optimal:
        return math.nan
    buf = br.buffer_from(res.x)
    improved = float(eg.evaluate(trans.lap_cost(agent), buf))
    return solution.costs[name] - improved
