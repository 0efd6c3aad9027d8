"""Concrete problem instances: federated multiclass logistic regression and
zone-decomposed load-shedding least squares, with their sensitivity oracles
and synthetic data generation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mechanisms import OBJECTIVE, OUTPUT, SensitivityRecord
from .problems import (
    Box,
    ConsensusProblem,
    NONSMOOTH,
    ObjectiveOracle,
    ProblemError,
    Smoothness,
    quadratic_objective,
)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LogisticDataset:
    """Per-agent features and one-hot labels, normalized to ||x|| <= 1 rows."""

    features: list[np.ndarray]   # agent p: (I_p, J)
    labels: list[np.ndarray]     # agent p: (I_p, K), one-hot rows
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ProblemError("features and labels must pair per agent")
        for x, y in zip(self.features, self.labels):
            if x.shape[0] != y.shape[0]:
                raise ProblemError("sample counts differ between features and labels")
            norms = np.linalg.norm(x, axis=1)
            if np.any(norms > 1.0 + 1e-9):
                raise ProblemError("feature rows must satisfy ||x|| <= 1")
            if not np.allclose(y.sum(axis=1), 1.0):
                raise ProblemError("label rows must be one-hot")

    @property
    def agent_count(self) -> int:
        return len(self.features)

    @property
    def total_count(self) -> int:
        return sum(x.shape[0] for x in self.features)

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def label_count(self) -> int:
        return self.labels[0].shape[1]


def logistic_value_and_gradient(
    x: np.ndarray, y: np.ndarray, z: np.ndarray, total_count: int
) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(x z) against one-hot y, scaled by the global
    sample count, with its gradient x^T (softmax(x z) - y) / I."""
    probs = softmax_rows(x @ z)
    eps = np.finfo(float).tiny
    value = -float((y * np.log(probs + eps)).sum()) / total_count
    grad = x.T @ (probs - y) / total_count
    return value, grad


def logistic_error_rate(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """Fraction of samples whose argmax prediction misses the label."""
    pred = (x @ z).argmax(axis=1)
    truth = y.argmax(axis=1)
    return float((pred != truth).mean())


def _sign_pattern_directions(J: int, cap: int = 10) -> np.ndarray:
    if J <= cap:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=J)))
    else:
        # too many vertices to enumerate; take axis-aligned and all-ones patterns
        signs = np.vstack([np.eye(J), -np.eye(J), np.ones((1, J)), -np.ones((1, J))])
    return signs / np.linalg.norm(signs, axis=1, keepdims=True)


def logistic_sensitivity(
    z: np.ndarray,
    total_count: int,
    feature_universe: np.ndarray | None = None,
) -> float:
    """Worst-case L2 change of the mean gradient caused by adding one sample.

    Adding (x*, y*) contributes the rank-one term x* (softmax(z^T x*) - y*)^T
    scaled by 1/(I+1), whose Frobenius norm is ||x*|| ||softmax - y*||. The
    maximization enumerates the K labels exactly. Over features it is exact
    when an explicit finite universe is given; otherwise candidates are the
    sign-pattern extreme points of the unit ball plus the logit-difference
    directions, which is exact for K = 2 and a heuristic beyond.
    """
    z = np.asarray(z, dtype=float)
    J, K = z.shape
    if feature_universe is not None:
        candidates = np.atleast_2d(np.asarray(feature_universe, dtype=float))
    else:
        candidates = [_sign_pattern_directions(J)]
        for k in range(K):
            for k2 in range(K):
                if k == k2:
                    continue
                d = z[:, k] - z[:, k2]
                norm = np.linalg.norm(d)
                if norm > 1e-12:
                    candidates.append((d / norm)[np.newaxis, :])
                    candidates.append((-d / norm)[np.newaxis, :])
        candidates = np.vstack(candidates)
    probs = softmax_rows(candidates @ z)  # (C, K)
    best = 0.0
    feat_norms = np.linalg.norm(candidates, axis=1)
    for k in range(K):
        diff = probs.copy()
        diff[:, k] -= 1.0
        vals = feat_norms * np.linalg.norm(diff, axis=1)
        best = max(best, float(vals.max()))
    return best / (total_count + 1)


def logistic_oracle(
    x: np.ndarray, y: np.ndarray, total_count: int, regime: Smoothness | None = None
) -> ObjectiveOracle:
    """Objective oracle over the flattened (J*K,) parameter vector."""
    J, K = x.shape[1], y.shape[1]
    smooth = regime if regime is not None else Smoothness(NONSMOOTH)

    def value(zflat):
        return logistic_value_and_gradient(x, y, zflat.reshape(J, K), total_count)[0]

    def subgradient(zflat):
        return logistic_value_and_gradient(x, y, zflat.reshape(J, K), total_count)[1].ravel()

    return ObjectiveOracle(value=value, subgradient=subgradient, smoothness=smooth)


@dataclass
class LoadShedProblem:
    """Power-balance least squares per zone: f_p(z) = sum_i (a_i . z + d_i)^2."""

    coefficients: list[np.ndarray]  # zone p: (m_p, n), entries in [-1, 1]
    demands: list[np.ndarray]       # zone p: (m_p,)
    bound: float                    # box radius on z

    def __post_init__(self):
        for a in self.coefficients:
            if np.any(np.abs(a) > 1.0 + 1e-12):
                raise ProblemError("coefficient entries must lie in [-1, 1]")

    @property
    def zone_count(self) -> int:
        return len(self.coefficients)

    @property
    def dimension(self) -> int:
        return self.coefficients[0].shape[1]


def loadshed_value_and_gradient(
    a: np.ndarray, d: np.ndarray, z: np.ndarray
) -> tuple[float, np.ndarray]:
    resid = a @ z + d
    return float(resid @ resid), 2.0 * a.T @ resid


def loadshed_sensitivity(beta: float, mode: str = OBJECTIVE) -> SensitivityRecord:
    """Constant worst-case sensitivity under beta-adjacent demand data.

    Perturbing the objective protects the subgradient, whose worst-case
    change is twice the demand adjacency; perturbing the output needs
    only the adjacency itself.
    """
    if beta <= 0:
        raise ProblemError("beta must be positive")
    if mode == OBJECTIVE:
        return SensitivityRecord(l1=2.0 * beta, l2=2.0 * beta)
    if mode == OUTPUT:
        return SensitivityRecord(l1=beta, l2=beta)
    raise ProblemError(f"unknown perturbation mode {mode!r}")


def loadshed_oracle(a: np.ndarray, d: np.ndarray) -> ObjectiveOracle:
    return ObjectiveOracle(
        value=lambda z: loadshed_value_and_gradient(a, d, z)[0],
        subgradient=lambda z: loadshed_value_and_gradient(a, d, z)[1],
        smoothness=Smoothness(NONSMOOTH),
    )


@dataclass
class ConsensusQP:
    """Separable quadratic consensus instance with a closed-form optimum."""

    problem: ConsensusProblem
    centers: np.ndarray          # (P, n)
    optimum: np.ndarray          # w* = mean of centers (interior assumed)
    optimal_value: float
    dual_optimal: np.ndarray     # (P, n), lambda*_p = grad f_p(w*)

    @property
    def dual_norm(self) -> float:
        return float(np.linalg.norm(self.dual_optimal))


def make_consensus_qp(
    agents: int,
    dimension: int,
    seed: int,
    box_radius: float | None = 2.0,
    regime: str = "smooth",
) -> ConsensusQP:
    """f_p(z) = ||z - c_p||^2 with centers inside the (optional) box."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(agents, dimension))
    optimum = centers.mean(axis=0)
    objectives = [quadratic_objective(c, regime=regime) for c in centers]
    if box_radius is None:
        from .problems import Unconstrained

        constraints = [Unconstrained() for _ in range(agents)]
    else:
        constraints = [Box.symmetric(box_radius, dimension) for _ in range(agents)]
    problem = ConsensusProblem(
        dimension=dimension,
        objectives=objectives,
        constraints=constraints,
        feasible_point=np.zeros(dimension),
    )
    value = float(sum(((optimum - c) ** 2).sum() for c in centers))
    dual = 2.0 * (optimum[np.newaxis, :] - centers)
    return ConsensusQP(
        problem=problem,
        centers=centers,
        optimum=optimum,
        optimal_value=value,
        dual_optimal=dual,
    )


@dataclass
class LogisticInstance:
    dataset: LogisticDataset
    problem: ConsensusProblem
    bound: float


def make_logistic(
    agents: int,
    samples: int,
    feature_dim: int,
    label_count: int,
    seed: int,
    bound: float = 0.1,
    partition: str = "iid",
    test_fraction: float = 0.25,
) -> LogisticInstance:
    """Synthetic classification data planted on a random parameter.

    Feature rows are drawn standard normal then scaled onto the unit
    ball; labels are samples of the planted softmax model. ``partition``
    selects IID round-robin or label-skewed assignment to agents.
    """
    if partition not in ("iid", "label_skew"):
        raise ProblemError(f"unknown partition scheme {partition!r}")
    rng = np.random.default_rng(seed)
    total = samples + max(1, int(round(samples * test_fraction)))
    x = rng.standard_normal((total, feature_dim))
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
    x = x / norms * rng.uniform(0.5, 1.0, size=(total, 1))
    planted = rng.standard_normal((feature_dim, label_count)) * 2.0
    probs = softmax_rows(x @ planted)
    draws = rng.random(total)
    labels_idx = (probs.cumsum(axis=1) < draws[:, np.newaxis]).sum(axis=1)
    labels_idx = np.minimum(labels_idx, label_count - 1)
    y = np.eye(label_count)[labels_idx]

    x_train, y_train = x[:samples], y[:samples]
    x_test, y_test = x[samples:], y[samples:]

    if partition == "iid":
        order = rng.permutation(samples)
    else:
        order = np.argsort(labels_idx[:samples], kind="stable")
    shards = np.array_split(order, agents)
    features = [x_train[idx] for idx in shards]
    labels = [y_train[idx] for idx in shards]
    dataset = LogisticDataset(
        features=features, labels=labels, test_features=x_test, test_labels=y_test
    )

    total_count = dataset.total_count
    n = feature_dim * label_count
    objectives = [
        logistic_oracle(features[p], labels[p], total_count) for p in range(agents)
    ]
    constraints = [Box.symmetric(bound, n) for _ in range(agents)]
    problem = ConsensusProblem(
        dimension=n,
        objectives=objectives,
        constraints=constraints,
        feasible_point=np.zeros(n),
    )
    return LogisticInstance(dataset=dataset, problem=problem, bound=bound)


@dataclass
class LoadShedInstance:
    data: LoadShedProblem
    problem: ConsensusProblem


def make_loadshed(
    zones: int, buses_per_zone: int, dimension: int, seed: int, bound: float = 1.0
) -> LoadShedInstance:
    rng = np.random.default_rng(seed)
    coefficients = [
        rng.uniform(-1.0, 1.0, size=(buses_per_zone, dimension)) for _ in range(zones)
    ]
    demands = [rng.uniform(-0.5, 0.5, size=buses_per_zone) for _ in range(zones)]
    data = LoadShedProblem(coefficients=coefficients, demands=demands, bound=bound)
    objectives = [loadshed_oracle(a, d) for a, d in zip(coefficients, demands)]
    constraints = [Box.symmetric(bound, dimension) for _ in range(zones)]
    problem = ConsensusProblem(
        dimension=dimension,
        objectives=objectives,
        constraints=constraints,
        feasible_point=np.zeros(dimension),
    )
    return LoadShedInstance(data=data, problem=problem)


def make_synthetic(kind: str, agents: int, seed: int, **sizes):
    """Deterministic desk-scale instance of the requested family."""
    if kind == "consensus_qp":
        return make_consensus_qp(
            agents,
            sizes.get("dimension", 2),
            seed,
            box_radius=sizes.get("box_radius", 2.0),
            regime=sizes.get("regime", "smooth"),
        )
    if kind == "logistic":
        return make_logistic(
            agents,
            sizes.get("samples", 40),
            sizes.get("feature_dim", 4),
            sizes.get("label_count", 3),
            seed,
            bound=sizes.get("bound", 0.1),
            partition=sizes.get("partition", "iid"),
        )
    if kind == "loadshed":
        return make_loadshed(
            agents,
            sizes.get("buses_per_zone", 4),
            sizes.get("dimension", 3),
            seed,
            bound=sizes.get("bound", 1.0),
        )
    raise ProblemError(f"unknown synthetic kind {kind!r}")


def save_samples(path, features: np.ndarray, label_indices: np.ndarray) -> None:
    """One sample per line: feature values then the integer label index."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for row, label in zip(features, label_indices):
            cols = [repr(float(v)) for v in row] + [str(int(label))]
            fh.write("\t".join(cols) + "\n")


def load_samples(path) -> tuple[np.ndarray, np.ndarray]:
    features, labels = [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            features.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    return np.asarray(features, dtype=float), np.asarray(labels, dtype=int)
