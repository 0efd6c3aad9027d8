"""Consensus problem definitions: objectives, constraint sets, iterate state.

A consensus problem couples P agents, each holding a private convex
objective oracle and a convex feasible set, through a shared global
variable. Data never leaves the oracles: the library only ever sees
values and subgradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

FEASIBILITY_TOL = 1e-9

SMOOTH = "smooth"
NONSMOOTH = "nonsmooth"
STRONGLY_CONVEX = "strongly_convex"
_REGIMES = (SMOOTH, NONSMOOTH, STRONGLY_CONVEX)


class ProblemError(ValueError):
    """Raised for inconsistent problem definitions or inputs."""


@dataclass(frozen=True)
class Smoothness:
    """Curvature regime of a local objective.

    Exactly one of the three regimes applies: smooth (gradient Lipschitz
    constant ``lipschitz``), nonsmooth, or strongly convex (modulus
    ``strong_convexity``).
    """

    regime: str
    lipschitz: float | None = None
    strong_convexity: float | None = None

    def __post_init__(self):
        if self.regime not in _REGIMES:
            raise ProblemError(f"unknown smoothness regime {self.regime!r}")
        if self.regime == SMOOTH:
            if self.lipschitz is None or self.lipschitz <= 0:
                raise ProblemError("smooth regime requires lipschitz > 0")
        elif self.lipschitz is not None:
            raise ProblemError(f"lipschitz only applies to the {SMOOTH} regime")
        if self.regime == STRONGLY_CONVEX:
            if self.strong_convexity is None or self.strong_convexity <= 0:
                raise ProblemError("strongly convex regime requires strong_convexity > 0")
        elif self.strong_convexity is not None:
            raise ProblemError(f"strong_convexity only applies to the {STRONGLY_CONVEX} regime")


@dataclass(frozen=True)
class ObjectiveOracle:
    """Deterministic value/subgradient oracle for one agent's objective."""

    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    smoothness: Smoothness


@dataclass(frozen=True)
class ConstraintOracle:
    """One smooth convex inequality h(z) <= 0.

    ``value`` returns h(z); ``gradient`` returns the gradient vector;
    ``hessian`` returns the n-by-n Hessian. Convexity and twice continuous
    differentiability are asserted by the caller, not checked.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


class Unconstrained:
    """Whole-space feasible set."""

    def violation(self, z: np.ndarray) -> float:
        return 0.0

    def contains(self, z: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return True


class Box:
    """Componentwise bounds l <= z <= u."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ProblemError("box bounds must share a shape")
        if np.any(self.lower > self.upper):
            raise ProblemError("box requires lower <= upper componentwise")

    @classmethod
    def symmetric(cls, radius: float, n: int) -> "Box":
        r = float(radius)
        return cls(np.full(n, -r), np.full(n, r))

    def clip(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.lower, self.upper)

    def violation(self, z: np.ndarray) -> float:
        below = np.maximum(self.lower - z, 0.0)
        above = np.maximum(z - self.upper, 0.0)
        return float(max(below.max(initial=0.0), above.max(initial=0.0)))

    def contains(self, z: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return self.violation(z) <= tol

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


class SmoothInequalities:
    """Feasible set {z : h_m(z) <= 0 for all m} with smooth convex h_m.

    A strictly feasible interior point must be supplied; the limit
    argument behind the penalty solve needs a point with every
    h_m strictly negative.
    """

    def __init__(self, oracles: Sequence[ConstraintOracle], interior_point):
        self.oracles = list(oracles)
        self.interior_point = np.asarray(interior_point, dtype=float)
        if not self.oracles:
            raise ProblemError("SmoothInequalities requires at least one constraint")
        worst = max(h.value(self.interior_point) for h in self.oracles)
        if worst >= 0:
            raise ProblemError(
                f"interior point is not strictly feasible (max h = {worst:g})"
            )

    def violation(self, z: np.ndarray) -> float:
        return float(max(max(h.value(z), 0.0) for h in self.oracles))

    def contains(self, z: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return self.violation(z) <= tol


ConstraintSet = Unconstrained | Box | SmoothInequalities


@dataclass
class ConsensusProblem:
    """P agents minimizing sum_p f_p(z_p) subject to z_p in W_p, z_p = w.

    ``feasible_point`` is a witness that the intersection of the local
    sets is nonempty; it doubles as the default initial iterate.
    """

    dimension: int
    objectives: Sequence[ObjectiveOracle]
    constraints: Sequence[ConstraintSet]
    feasible_point: np.ndarray

    def __post_init__(self):
        self.objectives = list(self.objectives)
        self.constraints = list(self.constraints)
        self.feasible_point = np.asarray(self.feasible_point, dtype=float)
        if self.dimension < 1:
            raise ProblemError("dimension must be >= 1")
        if not self.objectives:
            raise ProblemError("at least one agent is required")
        if len(self.objectives) != len(self.constraints):
            raise ProblemError("objectives and constraints must pair one per agent")
        if self.feasible_point.shape != (self.dimension,):
            raise ProblemError("feasible point has the wrong dimension")
        for p, (oracle, W) in enumerate(zip(self.objectives, self.constraints)):
            g = np.asarray(oracle.subgradient(self.feasible_point), dtype=float)
            if g.shape != (self.dimension,):
                raise ProblemError(f"agent {p} subgradient has shape {g.shape}")
            if not W.contains(self.feasible_point, tol=1e-9):
                raise ProblemError(f"witness point violates agent {p}'s constraint set")

    @property
    def agent_count(self) -> int:
        return len(self.objectives)


@dataclass
class IterateState:
    """Mutable per-round state of the consensus iteration.

    ``z`` and ``lam`` are (P, n); ``inner`` holds the E released inner
    iterates of the current round as (P, E, n). After a completed round
    each z_p is the arithmetic mean of that agent's inner iterates, and
    the server update forces the server-consistent duals
    lam_p + rho (w - z_p) to sum to zero across agents (the raw duals
    themselves sum to zero only at stationarity).
    """

    round: int
    w: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    inner: np.ndarray

    def copy(self) -> "IterateState":
        return IterateState(
            self.round, self.w.copy(), self.z.copy(), self.lam.copy(), self.inner.copy()
        )


@dataclass(frozen=True)
class Residuals:
    consensus: float
    violation: float


def evaluate_global_objective(problem: ConsensusProblem, z) -> float:
    """Sum of the local objective values, one local copy per agent."""
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.agent_count, problem.dimension):
        raise ProblemError(
            f"expected z of shape {(problem.agent_count, problem.dimension)}, got {z.shape}"
        )
    return float(sum(f.value(z[p]) for p, f in enumerate(problem.objectives)))


def consensus_residual(w: np.ndarray, z: np.ndarray) -> float:
    """Euclidean norm of the stacked disagreements, sqrt(sum_p ||w - z_p||^2)."""
    return float(np.sqrt(((z - w[np.newaxis, :]) ** 2).sum()))


def max_violation(problem: ConsensusProblem, z: np.ndarray) -> float:
    return max(W.violation(z[p]) for p, W in enumerate(problem.constraints))


def residuals(problem: ConsensusProblem, state: IterateState) -> Residuals:
    """Consensus residual and worst constraint violation of a state."""
    if state.z.shape != (problem.agent_count, problem.dimension):
        raise ProblemError("state does not match problem dimensions")
    return Residuals(
        consensus=consensus_residual(state.w, state.z),
        violation=max_violation(problem, state.z),
    )


def quadratic_objective(
    center: np.ndarray, weight: float = 1.0, regime: str = SMOOTH
) -> ObjectiveOracle:
    """Oracle for f(z) = weight * ||z - center||^2.

    The function is simultaneously 2w-smooth and 2w-strongly convex, so
    any regime tag is valid; the tag decides which step-size schedule
    and which convergence envelope apply.
    """
    c = np.asarray(center, dtype=float)
    w = float(weight)
    if regime == SMOOTH:
        smoothness = Smoothness(SMOOTH, lipschitz=2.0 * w)
    elif regime == STRONGLY_CONVEX:
        smoothness = Smoothness(STRONGLY_CONVEX, strong_convexity=2.0 * w)
    else:
        smoothness = Smoothness(NONSMOOTH)
    return ObjectiveOracle(
        value=lambda z: w * float(((z - c) ** 2).sum()),
        subgradient=lambda z: 2.0 * w * (z - c),
        smoothness=smoothness,
    )
