"""Consensus engine: server update, perturbed local updates, dual updates.

One round broadcasts the server average, lets every agent take E
proximal-linearized steps on its own objective (each step randomized by
the configured mechanism), releases the average of the E iterates, and
mirrors the dual update on both sides. Objective perturbation keeps the
released iterates feasible by construction; the output-perturbation
baseline adds noise after the solve and may leave the feasible set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import mechanisms
from .accounting import PrivacyLedger
from .mechanisms import MechanismConfig, StepContext
from .penalty import ProxObjective, constrained_solve
from .problems import (
    Box,
    ConsensusProblem,
    IterateState,
    NONSMOOTH,
    SMOOTH,
    STRONGLY_CONVEX,
    Smoothness,
    SmoothInequalities,
    Unconstrained,
    consensus_residual,
    evaluate_global_objective,
    max_violation,
)

logger = logging.getLogger(__name__)

SOLVER_FEASIBILITY_TOL = 1e-6


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class DynamicRho:
    """Staircase penalty schedule min(cap, c1 * growth^floor(t/period) + c2/eps)."""

    c1: float
    c2: float
    period: int
    growth: float = 1.2
    cap: float = 1e9

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0 or self.cap <= 0:
            raise ParameterError("dynamic rho coefficients must be nonnegative, cap positive")
        if self.period < 1:
            raise ParameterError("dynamic rho period must be >= 1")
        if self.growth < 1.0:
            # the convergence analysis needs a nondecreasing penalty
            raise ParameterError("dynamic rho growth must be >= 1")


@dataclass
class ScheduleConfig:
    """Penalty and proximal step schedules plus the per-step privacy budget.

    ``epsilon_bar = inf`` selects the non-private mode: zero noise and
    the non-private step-size limits.
    """

    rho: float | DynamicRho
    regime: str
    epsilon_bar: float = math.inf

    def __post_init__(self):
        if isinstance(self.rho, (int, float)):
            if self.rho <= 0:
                raise ParameterError("constant rho must be positive")
            self.rho = float(self.rho)
        if self.epsilon_bar <= 0:
            raise ParameterError("epsilon_bar must be positive (inf for non-private)")
        if self.regime not in (SMOOTH, NONSMOOTH, STRONGLY_CONVEX):
            raise ParameterError(f"unknown eta regime {self.regime!r}")


def rho_schedule(config: ScheduleConfig, t: int) -> float:
    """Penalty parameter for round t; nondecreasing in t and capped."""
    if t < 1:
        raise ParameterError("round index starts at 1")
    r = config.rho
    if isinstance(r, float):
        return r
    value = r.c1 * r.growth ** (t // r.period)
    if math.isfinite(config.epsilon_bar):
        value += r.c2 / config.epsilon_bar
    return min(r.cap, value)


def eta_schedule(config: ScheduleConfig, descriptor: Smoothness, t: int) -> float:
    """Proximal step size for round t under the configured regime.

    smooth: 1 / (L + sqrt(t)/eps); nonsmooth: 1/sqrt(t);
    strongly convex: 2 / (alpha (t + 2)). A smooth schedule with an
    infinite budget degenerates to the non-private constant 1/L.
    """
    if t < 1:
        raise ParameterError("round index starts at 1")
    if config.regime != descriptor.regime:
        raise ParameterError(
            f"schedule regime {config.regime!r} does not match objective regime "
            f"{descriptor.regime!r}"
        )
    if config.regime == SMOOTH:
        L = descriptor.lipschitz
        if not math.isfinite(config.epsilon_bar):
            if t == 1:
                logger.info("non-private smooth schedule: using constant eta = 1/L")
            return 1.0 / L
        return 1.0 / (L + math.sqrt(t) / config.epsilon_bar)
    if config.regime == NONSMOOTH:
        return 1.0 / math.sqrt(t)
    return 2.0 / (descriptor.strong_convexity * (t + 2))


def merge_descriptors(descriptors) -> Smoothness:
    """Schedule-safe common descriptor for agents sharing a regime.

    A step size valid for every agent needs the largest smoothness
    constant and the smallest strong-convexity modulus.
    """
    regimes = {d.regime for d in descriptors}
    if len(regimes) != 1:
        raise ParameterError(f"agents mix smoothness regimes: {sorted(regimes)}")
    regime = regimes.pop()
    if regime == SMOOTH:
        return Smoothness(SMOOTH, lipschitz=max(d.lipschitz for d in descriptors))
    if regime == STRONGLY_CONVEX:
        return Smoothness(
            STRONGLY_CONVEX,
            strong_convexity=min(d.strong_convexity for d in descriptors),
        )
    return Smoothness(NONSMOOTH)


def global_update(state: IterateState, rho: float) -> np.ndarray:
    """Server average w = (1/P) sum_p (z_p - lam_p / rho)."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    return (state.z - state.lam / rho).mean(axis=0)


def local_update(
    objective,
    constraint,
    z_inner: np.ndarray,
    w: np.ndarray,
    lam: np.ndarray,
    rho: float,
    eta: float,
    noise: np.ndarray,
) -> np.ndarray:
    """One perturbed proximal-linearized step for a single agent.

    Unconstrained and box sets use the closed form of the separable
    quadratic (clipped componentwise for boxes); general smooth
    inequality sets go through the penalty continuation solve.
    """
    grad = np.asarray(objective.subgradient(z_inner), dtype=float)
    prox = ProxObjective(
        grad_f=grad, anchor=z_inner, eta=eta, rho=rho, w=w, lam=lam, noise=noise
    )
    if isinstance(constraint, Unconstrained):
        return prox.unconstrained_minimizer()
    if isinstance(constraint, Box):
        return constraint.clip(prox.unconstrained_minimizer())
    if isinstance(constraint, SmoothInequalities):
        return constrained_solve(
            prox,
            constraint.oracles,
            feasibility_tol=SOLVER_FEASIBILITY_TOL,
            start=z_inner,
        )
    raise ParameterError(f"unsupported constraint set {type(constraint).__name__}")


def finalize_round(
    inner_iterates: np.ndarray, lam: np.ndarray, w: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Average the E inner iterates and take the mirrored dual step."""
    inner_iterates = np.asarray(inner_iterates, dtype=float)
    if inner_iterates.ndim != 2 or inner_iterates.shape[0] < 1:
        raise ParameterError("finalize_round needs at least one inner iterate")
    z_new = inner_iterates.mean(axis=0)
    lam_new = lam + rho * (w - z_new)
    return z_new, lam_new


@dataclass(frozen=True)
class RoundRecord:
    t: int
    rho: float
    eta: float
    objective: float
    consensus: float
    violation: float
    noise_magnitude: float
    lam_norm: float
    # sup-norm of sum_p of the server-consistent duals
    # lam_p + rho (w^{t+1} - z_p^t), which the server update forces to zero
    dual_sum: float
    eps_basic: float
    eps_strong: float


@dataclass
class RunResult:
    state: IterateState
    avg_z: np.ndarray
    avg_w: np.ndarray
    ledger: PrivacyLedger
    rounds: list[RoundRecord] = field(default_factory=list)
    trajectory: list[IterateState] = field(default_factory=list)
    # populated only under the strongly convex regime, whose headline
    # averages are t-weighted; the plain averages are kept for comparison
    uniform_avg_z: np.ndarray | None = None
    uniform_avg_w: np.ndarray | None = None


def _strong_epsilon(count: int, eps: float, delta: float) -> float:
    if count == 0:
        return 0.0
    return eps * math.sqrt(count * math.log(1.0 / delta) / math.log(1.25 / delta))


def run(
    problem: ConsensusProblem,
    schedules: ScheduleConfig,
    mechanism: MechanismConfig,
    rounds: int,
    local_updates: int,
    seed: int = 0,
    z_init: np.ndarray | None = None,
    lam_init: np.ndarray | None = None,
    record_rounds: bool = True,
    keep_trajectory: bool = False,
) -> RunResult:
    """Run the full consensus loop for ``rounds`` rounds of ``local_updates``
    local steps each.

    Noise is drawn from one seed-derived stream per agent in (t, e)
    order, so results are bit-identical for a fixed seed no matter how
    agents would be scheduled. Returns the final state together with the
    regime-appropriate running averages of the iterates.
    """
    if rounds < 1 or local_updates < 1:
        raise ParameterError("rounds and local_updates must be >= 1")
    if mechanism.is_private and mechanism.sensitivity is None:
        raise ParameterError("a private mechanism needs a sensitivity source")
    if mechanism.is_private and schedules.epsilon_bar != mechanism.epsilon_bar:
        raise ParameterError("schedule and mechanism disagree on epsilon_bar")

    P, n = problem.agent_count, problem.dimension
    T, E = rounds, local_updates
    z = (
        np.tile(problem.feasible_point, (P, 1))
        if z_init is None
        else np.array(z_init, dtype=float).reshape(P, n)
    )
    lam = (
        np.zeros((P, n))
        if lam_init is None
        else np.array(lam_init, dtype=float).reshape(P, n)
    )
    state = IterateState(round=0, w=z.mean(axis=0), z=z, lam=lam, inner=np.zeros((P, E, n)))
    z_inner = state.z.copy()  # chained inner iterate, z_p^{t,1} = z_p^{t-1,E+1}

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(P)]
    ledger = PrivacyLedger()

    sum_z_post = np.zeros((P, n))
    sum_z_pre = np.zeros((P, n))
    sum_z_pre_weighted = np.zeros((P, n))
    sum_w = np.zeros(n)
    sum_w_weighted = np.zeros(n)

    descriptor = merge_descriptors([f.smoothness for f in problem.objectives])
    result = RunResult(state=state, avg_z=None, avg_w=None, ledger=ledger)

    for t in range(1, T + 1):
        rho = rho_schedule(schedules, t)
        eta = eta_schedule(schedules, descriptor, t)
        w = global_update(state, rho)
        dual_sum = float(
            np.abs((state.lam + rho * (w[np.newaxis, :] - state.z)).sum(axis=0)).max()
        )
        round_draws = []

        for p in range(P):
            objective = problem.objectives[p]
            constraint = problem.constraints[p]
            for e in range(1, E + 1):
                pre = z_inner[p].copy()
                sum_z_pre[p] += pre
                sum_z_pre_weighted[p] += t * pre / E
                if mechanism.is_private:
                    ctx = StepContext(t=t, e=e, p=p, z=pre, eta=eta, rho=rho)
                    sens = mechanism.sensitivity(ctx)
                    xi = mechanisms.sample_noise(mechanism, sens, n, streams[p])
                    round_draws.append(xi)
                else:
                    xi = np.zeros(n)
                if mechanism.mode == mechanisms.OUTPUT:
                    nxt = local_update(
                        objective, constraint, pre, w, state.lam[p], rho, eta, np.zeros(n)
                    )
                    nxt = nxt + xi
                else:
                    nxt = local_update(
                        objective, constraint, pre, w, state.lam[p], rho, eta, xi
                    )
                state.inner[p, e - 1] = nxt
                z_inner[p] = nxt
                sum_z_post[p] += nxt
            state.z[p], state.lam[p] = finalize_round(
                state.inner[p], state.lam[p], w, rho
            )

        if mechanism.is_private:
            # one ledger step per local solve; the leakage composes per
            # agent, so the step count is indexed by (t, e), not (t, e, p)
            for _ in range(E):
                ledger.record(mechanism.kind, mechanism.epsilon_bar, mechanism.delta_bar)

        state.w = w
        state.round = t
        sum_w += w
        sum_w_weighted += t * w

        if record_rounds:
            eps_basic = t * E * mechanism.epsilon_bar if mechanism.is_private else 0.0
            eps_strong = (
                _strong_epsilon(t * E, mechanism.epsilon_bar, mechanism.delta_bar)
                if mechanism.is_private and mechanism.kind == mechanisms.GAUSSIAN
                else math.nan
            )
            result.rounds.append(
                RoundRecord(
                    t=t,
                    rho=rho,
                    eta=eta,
                    objective=evaluate_global_objective(problem, state.z),
                    consensus=consensus_residual(w, state.z),
                    violation=max_violation(problem, state.z),
                    noise_magnitude=mechanisms.noise_magnitude(round_draws),
                    lam_norm=float(np.linalg.norm(state.lam)),
                    dual_sum=dual_sum,
                    eps_basic=eps_basic,
                    eps_strong=eps_strong,
                )
            )
        if keep_trajectory:
            result.trajectory.append(state.copy())

    denom = T * E
    if schedules.regime == SMOOTH:
        result.avg_z = sum_z_post / denom
        result.avg_w = sum_w / T
    elif schedules.regime == NONSMOOTH:
        result.avg_z = sum_z_pre / denom
        result.avg_w = sum_w / T
    else:
        scale = 2.0 / (T * (T + 1))
        result.avg_z = scale * sum_z_pre_weighted
        result.avg_w = scale * sum_w_weighted
        result.uniform_avg_z = sum_z_pre / denom
        result.uniform_avg_w = sum_w / T
    return result
