import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpadmm.penalty import (
    PenalizedProblem,
    ProxObjective,
    SolverError,
    box_constraint_oracles,
    constrained_solve,
    penalty_value_and_gradient,
    solve_penalized,
)
from dpadmm.problems import ConstraintOracle


def scalar_constraint(offset=0.0):
    # h(z) = z - offset
    return ConstraintOracle(
        value=lambda z: float(z[0] - offset),
        gradient=lambda z: np.array([1.0]),
        hessian=lambda z: np.zeros((1, 1)),
    )


def prox_1d(grad_f, eta=1.0, rho=1.0):
    return ProxObjective(
        grad_f=np.array([float(grad_f)]),
        anchor=np.zeros(1),
        eta=eta,
        rho=rho,
        w=np.zeros(1),
        lam=np.zeros(1),
        noise=np.zeros(1),
    )


class TestPenaltyValueAndGradient:
    def test_boundary_point_is_log_two(self):
        for ell in (1.0, 10.0, 1e4):
            value, _ = penalty_value_and_gradient([scalar_constraint(1.0)], ell, np.array([1.0]))
            assert value == pytest.approx(math.log(2.0), rel=1e-12)

    def test_strict_interior_vanishes(self):
        value, _ = penalty_value_and_gradient([scalar_constraint()], 10.0, np.array([-1.0]))
        assert value == pytest.approx(math.log(1 + math.exp(-10)), rel=1e-12)
        assert value == pytest.approx(4.5399e-5, rel=1e-3)

    def test_linear_growth_outside_stable_form(self):
        value, _ = penalty_value_and_gradient([scalar_constraint()], 10.0, np.array([2.0]))
        assert value == pytest.approx(20.0 + math.log(1 + math.exp(-20)), rel=1e-12)

    def test_no_overflow_for_huge_exponent(self):
        value, grad = penalty_value_and_gradient([scalar_constraint()], 1e8, np.array([50.0]))
        assert math.isfinite(value) and value == pytest.approx(5e9)
        assert math.isfinite(grad[0]) and grad[0] == pytest.approx(1e8)

    @given(st.floats(-3, 3), st.sampled_from([1.0, 10.0, 100.0, 1e3, 1e4]))
    @settings(max_examples=50)
    def test_nonnegative_everywhere(self, z, ell):
        value, _ = penalty_value_and_gradient([scalar_constraint()], ell, np.array([z]))
        assert value >= 0.0

    def test_sharpening_limits(self):
        interior, exterior = np.array([-0.5]), np.array([0.5])
        cons = [scalar_constraint()]
        interior_vals = []
        exterior_vals = []
        for ell in (1.0, 10.0, 100.0, 1e3, 1e4):
            interior_vals.append(penalty_value_and_gradient(cons, ell, interior)[0])
            exterior_vals.append(penalty_value_and_gradient(cons, ell, exterior)[0])
        assert all(b <= a for a, b in zip(interior_vals, interior_vals[1:]))
        assert interior_vals[-1] < 1e-12
        assert all(b >= a for a, b in zip(exterior_vals, exterior_vals[1:]))
        assert exterior_vals[-1] > 1e3

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        n = 3
        A = rng.normal(size=(n, n))
        H = A.T @ A + np.eye(n)
        b = rng.normal(size=n)
        quad = ConstraintOracle(
            value=lambda z: float(0.5 * z @ H @ z + b @ z - 1.0),
            gradient=lambda z: H @ z + b,
            hessian=lambda z: H,
        )
        lin = ConstraintOracle(
            value=lambda z: float(z.sum() - 0.5),
            gradient=lambda z: np.ones(n),
            hessian=lambda z: np.zeros((n, n)),
        )
        cons = [quad, lin]
        for _ in range(8):
            z = rng.normal(size=n)
            for ell in (1.0, 10.0, 100.0):
                _, grad = penalty_value_and_gradient(cons, ell, z)
                fd = np.zeros(n)
                h = 1e-6
                for i in range(n):
                    e = np.zeros(n)
                    e[i] = h
                    up = penalty_value_and_gradient(cons, ell, z + e)[0]
                    dn = penalty_value_and_gradient(cons, ell, z - e)[0]
                    fd[i] = (up - dn) / (2 * h)
                denom = max(1.0, float(np.linalg.norm(grad)))
                assert np.linalg.norm(grad - fd) / denom <= 1e-6


class TestSolvePenalized:
    def test_no_constraints_equals_closed_form(self):
        G = prox_1d(grad_f=3.0, eta=0.5, rho=2.0)
        z = solve_penalized(PenalizedProblem(G, [], 10.0))
        assert z == pytest.approx(G.unconstrained_minimizer())

    def test_inactive_constraint_reaches_unconstrained_optimum(self):
        # G(z) = 2z + z^2 has its minimum at -1, strictly feasible for h(z) = z
        G = prox_1d(grad_f=2.0)
        z = solve_penalized(PenalizedProblem(G, [scalar_constraint()], 1e4))
        assert z[0] == pytest.approx(-1.0, abs=1e-6)

    def test_active_constraint_grid_oracle(self):
        # G(z) = -4z + z^2 wants z = 2; the constraint pins it near 0
        G = prox_1d(grad_f=-4.0)
        cons = [scalar_constraint()]
        for ell in (1e2, 1e4):
            z = solve_penalized(PenalizedProblem(G, cons, ell))
            grid = np.linspace(-0.5, 0.5, 200001)
            vals = -4 * grid + grid**2 + np.log1p(np.exp(-np.abs(ell * grid))) + np.maximum(ell * grid, 0)
            assert abs(z[0] - grid[np.argmin(vals)]) <= 1e-5

    def test_first_order_condition_residual(self):
        G = prox_1d(grad_f=-4.0)
        cons = [scalar_constraint()]
        tol = 1e-8
        z = solve_penalized(PenalizedProblem(G, cons, 1e4), tol=tol)
        _, pen_grad = penalty_value_and_gradient(cons, 1e4, z)
        assert abs(G.gradient(z)[0] + pen_grad[0]) <= tol

    def test_convergence_toward_constrained_optimum(self):
        G = prox_1d(grad_f=-4.0)
        cons = [scalar_constraint()]
        errors = [abs(solve_penalized(PenalizedProblem(G, cons, ell))[0]) for ell in (1e2, 1e3, 1e4)]
        assert errors[-1] <= 1e-3
        assert errors[0] > errors[1] > errors[2]
        assert errors[0] / errors[2] >= 2.0

    def test_iteration_cap_reports_gradient_norm(self):
        G = prox_1d(grad_f=-4.0)
        with pytest.raises(SolverError, match="gradient norm"):
            solve_penalized(PenalizedProblem(G, [scalar_constraint()], 1e4), max_iter=1)


class TestConstrainedSolve:
    def test_box_agreement_with_closed_form(self):
        lower, upper = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        oracles = box_constraint_oracles(lower, upper)
        rng = np.random.default_rng(11)
        for _ in range(6):
            G = ProxObjective(
                grad_f=rng.normal(scale=3, size=2),
                anchor=rng.normal(size=2),
                eta=0.7,
                rho=1.3,
                w=rng.normal(size=2),
                lam=rng.normal(size=2),
                noise=rng.normal(scale=0.2, size=2),
            )
            z = constrained_solve(G, oracles, start=np.zeros(2))
            closed = np.clip(G.unconstrained_minimizer(), lower, upper)
            assert np.abs(z - closed).max() <= 1e-4

    def test_active_linear_constraint_kkt_oracle(self):
        n = 3
        a = np.array([1.0, 1.0, 0.0])
        h = ConstraintOracle(
            value=lambda z: float(a @ z - 1.0),
            gradient=lambda z: a.copy(),
            hessian=lambda z: np.zeros((n, n)),
        )
        G = ProxObjective(
            grad_f=np.array([-4.0, -3.0, 1.0]),
            anchor=np.zeros(n),
            eta=0.5,
            rho=2.0,
            w=np.full(n, 0.1),
            lam=np.zeros(n),
            noise=np.zeros(n),
        )
        z = constrained_solve(G, [h], start=np.zeros(n))
        # G is kappa/2 ||z - z0||^2 + const, so the answer is the projection of z0
        z0 = G.unconstrained_minimizer()
        zstar = z0 - max(float(a @ z0) - 1.0, 0.0) / float(a @ a) * a
        assert np.abs(z - zstar).max() <= 1e-4

    def test_monotone_approach_along_continuation(self):
        G = prox_1d(grad_f=-4.0)
        cons = [scalar_constraint()]
        zstar = 0.0
        dists = []
        for ell in (1e1, 1e2, 1e3, 1e4, 1e5):
            z = solve_penalized(PenalizedProblem(G, cons, ell))
            dists.append(abs(z[0] - zstar))
        assert all(b <= a for a, b in zip(dists[1:], dists[2:]))

    def test_validation(self):
        with pytest.raises(SolverError):
            PenalizedProblem(prox_1d(1.0), [], ell=0.0)
        with pytest.raises(SolverError):
            ProxObjective(
                grad_f=np.zeros(1),
                anchor=np.zeros(1),
                eta=-1.0,
                rho=1.0,
                w=np.zeros(1),
                lam=np.zeros(1),
                noise=np.zeros(1),
            )
