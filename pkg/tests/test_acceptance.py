"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -s`` to see
them live). Tolerances and runtime budgets are part of the criteria."""

import math
import time

import numpy as np
import pytest

from dpadmm import engine
from dpadmm.accounting import PrivacyLedger, compose
from dpadmm.applications import (
    loadshed_sensitivity,
    loadshed_value_and_gradient,
    logistic_sensitivity,
    logistic_value_and_gradient,
    make_consensus_qp,
    make_logistic,
    softmax_rows,
)
from dpadmm.bounds import TheoryConstants, evaluate_bound
from dpadmm.engine import (
    ScheduleConfig,
    eta_schedule,
    finalize_round,
    global_update,
    local_update,
    rho_schedule,
)
from dpadmm.mechanisms import (
    MechanismConfig,
    SensitivityRecord,
    constant_sensitivity,
    empirical_dp_ratio,
    noise_parameters,
)
from dpadmm.penalty import PenalizedProblem, ProxObjective, solve_penalized
from dpadmm.problems import (
    ConsensusProblem,
    ConstraintOracle,
    IterateState,
    Unconstrained,
    consensus_residual,
    evaluate_global_objective,
    quadratic_objective,
)


def report(number, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:>2} [{status}] {name}: {detail}")
    assert passed, f"criterion {number} ({name}): {detail}"


def test_01_non_private_correctness():
    started = time.perf_counter()
    qp = make_consensus_qp(3, 5, seed=11, box_radius=2.0)
    sched = ScheduleConfig(rho=2.0, regime="smooth")
    res = engine.run(
        qp.problem,
        sched,
        MechanismConfig.non_private(),
        rounds=1000,
        local_updates=1,
        record_rounds=False,
    )
    gap = evaluate_global_objective(qp.problem, res.state.z) - qp.optimal_value
    cons = consensus_residual(res.state.w, res.state.z)
    elapsed = time.perf_counter() - started
    report(
        1,
        "non-private correctness",
        abs(gap) <= 1e-6 and cons <= 1e-6 and elapsed < 5.0,
        f"objective gap {gap:.2e}, consensus {cons:.2e}, {elapsed:.2f}s",
    )


def test_02_feasibility_separation():
    started = time.perf_counter()
    inst = make_logistic(agents=3, samples=30, feature_dim=3, label_count=3, seed=1, bound=0.1)
    J, K = inst.dataset.feature_dim, inst.dataset.label_count
    total = inst.dataset.total_count

    def source(mode):
        def src(ctx):
            d2 = logistic_sensitivity(ctx.z.reshape(J, K), total)
            if mode == "output":
                d2 = d2 / (1.0 / ctx.eta + ctx.rho)
            return SensitivityRecord(l1=math.sqrt(J * K) * d2, l2=d2)

        return src

    objective_max = 0.0
    output_violating_runs = 0
    for seed in range(20):
        for mode in ("objective", "output"):
            mech = MechanismConfig(
                kind="gaussian",
                epsilon_bar=0.05,
                delta_bar=0.01,
                mode=mode,
                sensitivity=source(mode),
            )
            sched = ScheduleConfig(rho=1.0, regime="nonsmooth", epsilon_bar=0.05)
            res = engine.run(
                inst.problem, sched, mech, rounds=30, local_updates=2, seed=seed
            )
            worst = max(r.violation for r in res.rounds)
            if mode == "objective":
                objective_max = max(objective_max, worst)
            elif worst > 0.0:
                output_violating_runs += 1
    elapsed = time.perf_counter() - started
    report(
        2,
        "feasibility separation",
        objective_max <= 1e-6 and output_violating_runs >= 18 and elapsed < 60.0,
        f"objective max violation {objective_max:.2e}, "
        f"output violating {output_violating_runs}/20, {elapsed:.1f}s",
    )


def test_03_variance_table_ordering():
    beta, delta = 0.01, 0.01
    obj = loadshed_sensitivity(beta, "objective")
    out = loadshed_sensitivity(beta, "output")
    ok = True
    for eps in (0.05, 0.1, 0.5, 1.0):
        obj_g = noise_parameters(
            MechanismConfig(kind="gaussian", epsilon_bar=eps, delta_bar=delta), obj
        ).variance
        out_g = noise_parameters(
            MechanismConfig(kind="gaussian", epsilon_bar=eps, delta_bar=delta), out
        ).variance
        obj_l = noise_parameters(MechanismConfig(kind="laplace", epsilon_bar=eps), obj).variance
        out_l = noise_parameters(MechanismConfig(kind="laplace", epsilon_bar=eps), out).variance
        ok = ok and (obj_g > out_g > obj_l > out_l)
    report(3, "variance table ordering", ok, "ObjG > OutG > ObjL > OutL at all four budgets")


def test_04_strong_composition_arithmetic():
    ledger = PrivacyLedger()
    for _ in range(500):
        ledger.record("gaussian", 0.5, 1e-6)
    strong = compose(ledger, "strong")
    basic = compose(ledger, "basic")
    oracle = 0.5 * math.sqrt(500 * math.log(1e6) / math.log(1.25e6))
    ok = (
        abs(strong.epsilon - oracle) <= 1e-6
        and round(oracle, 4) == 11.0911
        and basic.epsilon == 250.0
        and strong.delta == 1e-6
    )
    report(
        4,
        "strong composition arithmetic",
        ok,
        f"strong {strong.epsilon:.6f} vs oracle {oracle:.6f}, basic {basic.epsilon}",
    )


def test_05_pointwise_convergence():
    started = time.perf_counter()
    G = ProxObjective(
        grad_f=np.array([-4.0]),
        anchor=np.zeros(1),
        eta=1.0,
        rho=1.0,
        w=np.zeros(1),
        lam=np.zeros(1),
        noise=np.zeros(1),
    )
    h = ConstraintOracle(
        value=lambda z: float(z[0]),
        gradient=lambda z: np.array([1.0]),
        hessian=lambda z: np.zeros((1, 1)),
    )
    errors = [
        abs(solve_penalized(PenalizedProblem(G, [h], ell))[0]) for ell in (1e2, 1e3, 1e4)
    ]
    elapsed = time.perf_counter() - started
    ok = errors[2] <= 1e-3 and errors[0] > errors[1] > errors[2] and elapsed < 1.0
    report(
        5,
        "pointwise convergence",
        ok,
        f"|z - 0| over ell = {errors[0]:.2e} > {errors[1]:.2e} > {errors[2]:.2e}, {elapsed:.2f}s",
    )


def test_06_empirical_dp_ratio():
    started = time.perf_counter()
    sens = loadshed_sensitivity(0.01, "objective")
    results = {}
    for eps in (0.5, 1.0):
        cfg = MechanismConfig(kind="laplace", epsilon_bar=eps)
        # beta-adjacent worst case: true subgradients shifted by the full
        # L1 sensitivity; seed fixed for determinism of the statistic
        results[eps] = empirical_dp_ratio(
            cfg, sens, output_shift=sens.l1, rng=np.random.default_rng(5)
        )
    elapsed = time.perf_counter() - started
    ok = all(ratio <= eps + 0.1 for eps, ratio in results.items()) and elapsed < 10.0
    report(
        6,
        "empirical dp ratio",
        ok,
        ", ".join(f"eps={e}: {r:.4f} <= {e + 0.1}" for e, r in results.items())
        + f", {elapsed:.1f}s",
    )


def test_07_sensitivity_oracle_brute_force():
    started = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        J, K = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        z = rng.normal(size=(J, K))
        total = int(rng.integers(1, 60))
        universe = rng.normal(size=(8, J))
        universe /= np.maximum(np.linalg.norm(universe, axis=1, keepdims=True), 1.0)
        got = logistic_sensitivity(z, total, feature_universe=universe)
        best = 0.0
        for x in universe:
            probs = softmax_rows((x @ z)[np.newaxis, :])[0]
            for k in range(K):
                y = np.zeros(K)
                y[k] = 1.0
                best = max(best, float(np.linalg.norm(np.outer(x, probs - y))) / (total + 1))
        worst = max(worst, abs(got - best))
    elapsed = time.perf_counter() - started
    report(
        7,
        "sensitivity oracle",
        worst <= 1e-12 and elapsed < 5.0,
        f"max |heuristic - brute force| = {worst:.2e}, {elapsed:.2f}s",
    )


def test_08_theoretical_envelope():
    started = time.perf_counter()
    P, n, radius = 2, 2, 1.0
    rng = np.random.default_rng(3)
    centers = rng.uniform(-0.4, 0.4, size=(P, n))
    objectives = [quadratic_objective(c, regime="nonsmooth") for c in centers]
    from dpadmm.problems import Box

    problem = ConsensusProblem(
        dimension=n,
        objectives=objectives,
        constraints=[Box.symmetric(radius, n) for _ in range(P)],
        feasible_point=np.zeros(n),
    )
    w_star = centers.mean(axis=0)
    f_star = float(sum(((w_star - c) ** 2).sum() for c in centers))
    gamma = 2.0 * float(np.linalg.norm(2.0 * (w_star[np.newaxis, :] - centers)))

    beta, eps, E = 0.01, 1.0, 2
    sens = SensitivityRecord(2 * beta, 2 * beta)
    mech = MechanismConfig(
        kind="laplace", epsilon_bar=eps, sensitivity=constant_sensitivity(sens)
    )
    sched = ScheduleConfig(rho=1.0, regime="nonsmooth", epsilon_bar=eps)
    # analytic constants: subgradient maximized at the corner opposite the
    # center, diameter exact for the box
    u1 = 2.0 * max(
        float(np.linalg.norm(radius * np.ones(n) + np.abs(c))) for c in centers
    )
    constants = TheoryConstants(
        u1=u1,
        u2=2 * radius * math.sqrt(n),
        u3=2 * (2 * beta) ** 2,
        gamma=gamma,
        rho_first=1.0,
        rho_max=1.0,
        dimension=n,
        agents=P,
    )

    means = {}
    covered = True
    for T in (25, 100, 400):
        gaps = []
        for seed in range(20):
            res = engine.run(
                problem, sched, mech, rounds=T, local_updates=E, seed=seed, record_rounds=False
            )
            gap = (
                evaluate_global_objective(problem, res.avg_z)
                - f_star
                + gamma * consensus_residual(res.avg_w, res.avg_z)
            )
            gaps.append(gap)
        means[T] = float(np.mean(gaps))
        bound = evaluate_bound(constants, "nonsmooth", T, E, eps)
        covered = covered and means[T] <= bound
    decays = means[400] <= 0.7 * means[100]
    elapsed = time.perf_counter() - started
    report(
        8,
        "theoretical envelope",
        covered and decays and elapsed < 120.0,
        f"means {means[25]:.4f}/{means[100]:.4f}/{means[400]:.4f} under bounds, "
        f"decay {means[400] / means[100]:.2f} <= 0.7, {elapsed:.1f}s",
    )


def test_09_gradient_checks():
    started = time.perf_counter()

    def central(fn, z, h):
        grad = np.zeros_like(z)
        it = np.nditer(z, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            e = np.zeros_like(z)
            e[idx] = h
            grad[idx] = (fn(z + e) - fn(z - e)) / (2 * h)
            it.iternext()
        return grad

    rng = np.random.default_rng(6)
    x = rng.normal(size=(8, 3))
    x /= np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1.0)
    y = np.eye(4)[rng.integers(0, 4, size=8)]
    worst_logistic = 0.0
    for _ in range(20):
        z = rng.normal(size=(3, 4))
        _, grad = logistic_value_and_gradient(x, y, z, 8)
        fd = central(lambda zz: logistic_value_and_gradient(x, y, zz, 8)[0], z, 1e-6)
        worst_logistic = max(
            worst_logistic, np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-12)
        )

    a = rng.uniform(-1, 1, size=(6, 4))
    d = rng.uniform(-0.5, 0.5, size=6)
    worst_loadshed = 0.0
    for _ in range(20):
        z = rng.normal(size=4)
        _, grad = loadshed_value_and_gradient(a, d, z)
        fd = central(lambda zz: loadshed_value_and_gradient(a, d, zz)[0], z, 1e-6)
        worst_loadshed = max(
            worst_loadshed, np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-12)
        )
    elapsed = time.perf_counter() - started
    report(
        9,
        "gradient checks",
        worst_logistic <= 1e-5 and worst_loadshed <= 1e-8 and elapsed < 2.0,
        f"logistic rel err {worst_logistic:.2e}, quadratic rel err {worst_loadshed:.2e}, "
        f"{elapsed:.2f}s",
    )


def test_10_remark_equivalence():
    started = time.perf_counter()
    P, n, T, E = 2, 3, 100, 1
    rng = np.random.default_rng(7)
    centers = rng.normal(size=(P, n))
    objectives = [quadratic_objective(c) for c in centers]
    constraints = [Unconstrained() for _ in range(P)]
    problem = ConsensusProblem(
        dimension=n, objectives=objectives, constraints=constraints, feasible_point=np.zeros(n)
    )
    sched = ScheduleConfig(rho=1.0, regime="smooth", epsilon_bar=0.5)

    def run_twin(mode, sigma=0.05):
        z = np.tile(problem.feasible_point, (P, 1))
        state = IterateState(0, z.mean(axis=0), z, np.zeros((P, n)), np.zeros((P, E, n)))
        z_inner = state.z.copy()
        draws = np.random.default_rng(123)
        for t in range(1, T + 1):
            rho = rho_schedule(sched, t)
            eta = eta_schedule(sched, objectives[0].smoothness, t)
            w = global_update(state, rho)
            for p in range(P):
                for e in range(E):
                    u = draws.standard_normal(n)
                    if mode == "objective":
                        # Remark scaling: objective-side noise -(1/eta + rho) xi
                        # reproduces output perturbation by + xi exactly
                        xi = -(1.0 / eta + rho) * sigma * u
                        nxt = local_update(
                            objectives[p], constraints[p], z_inner[p], w, state.lam[p], rho, eta, xi
                        )
                    else:
                        nxt = local_update(
                            objectives[p],
                            constraints[p],
                            z_inner[p],
                            w,
                            state.lam[p],
                            rho,
                            eta,
                            np.zeros(n),
                        )
                        nxt = nxt + sigma * u
                    state.inner[p, e] = nxt
                    z_inner[p] = nxt
                state.z[p], state.lam[p] = finalize_round(state.inner[p], state.lam[p], w, rho)
            state.w = w
        return state

    a = run_twin("objective")
    b = run_twin("output")
    diff = max(
        float(np.abs(a.z - b.z).max()),
        float(np.abs(a.lam - b.lam).max()),
        float(np.abs(a.w - b.w).max()),
    )
    elapsed = time.perf_counter() - started
    report(
        10,
        "output/objective equivalence",
        diff <= 1e-10 and elapsed < 2.0,
        f"max trajectory difference {diff:.2e} over {T} rounds, {elapsed:.2f}s",
    )
