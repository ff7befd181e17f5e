import math

import numpy as np
import pytest

from lichflow import (
    EpsSchedule,
    Field,
    FlowConfig,
    PathAborted,
    ProblemData,
    constant_field,
    elliptic_residual,
    gradient_sq,
    integrate,
    integrability_check,
    make_grid,
    run_path,
    run_to_steady,
    solve_at_eps,
)
from conftest import TWO_PI


@pytest.fixture
def degenerate_problem(circle128):
    """B = 1 - cos x vanishes quadratically at the origin."""
    x = circle128.coordinates(0)
    return ProblemData(
        p=2.0,
        q=3.0,
        A=constant_field(circle128, 1.0),
        B=Field(circle128, 1.0 - np.cos(x)),
    )


class TestEpsSchedule:
    def test_geometric(self):
        sched = EpsSchedule.geometric(0.1, 4, FlowConfig())
        assert sched.eps_values == (0.1, 0.05, 0.025, 0.0125)

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="must not be empty"):
            EpsSchedule((), FlowConfig())

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            EpsSchedule((0.1, 0.0), FlowConfig())

    def test_rejects_nondecreasing(self):
        with pytest.raises(ValueError, match="decreasing"):
            EpsSchedule((0.1, 0.1), FlowConfig())


class TestIntegrabilityCheck:
    def test_constant_coefficient(self, circle128):
        rep = integrability_check(constant_field(circle128, 1.0), 2.0)
        assert rep.verdict == "finite"
        assert rep.integrals[-1] == pytest.approx(TWO_PI, rel=1e-12)
        assert abs(rep.slope) <= 1e-12

    def test_quadratic_zero_integrable_power(self):
        # B ~ x^2/2 near its zero, so B^(-1/3) ~ x^(-2/3) is integrable;
        # needs a fine base grid before the refinement sequence flattens
        g = make_grid(1, [4096], [TWO_PI])
        B = Field(g, 1.0 - np.cos(g.coordinates(0)))
        rep = integrability_check(B, 3.0)
        assert rep.verdict == "finite"
        assert rep.excluded_points == 1

    def test_quadratic_zero_divergent_power(self):
        # with q = 1 the integrand behaves like x^(-2): the lattice sums
        # double with every refinement
        g = make_grid(1, [4096], [TWO_PI])
        B = Field(g, 1.0 - np.cos(g.coordinates(0)))
        rep = integrability_check(B, 1.0)
        assert rep.verdict == "likely divergent"
        assert rep.slope == pytest.approx(1.0, abs=0.05)

    def test_rejects_bad_q(self, circle128):
        with pytest.raises(ValueError, match="q must be positive"):
            integrability_check(constant_field(circle128, 1.0), 0.0)

    def test_rejects_negative_b(self, circle128):
        with pytest.raises(ValueError, match="B >= 0"):
            integrability_check(constant_field(circle128, -1.0), 2.0)


class TestSolveAtEps:
    def test_unit_regularization(self, circle64):
        # B = 0 and eps = 1: the steady constant is (1/1)^(1/4) = 1
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 1.0), B=constant_field(circle64, 0.0)
        )
        report = solve_at_eps(pd, 1.0, constant_field(circle64, 1.0), FlowConfig(t_max=5000))
        assert report.converged
        assert np.abs(report.u.values - 1.0).max() <= 1e-10

    def test_closed_form_constant(self, circle64):
        # eps = 1/16 gives the steady constant (1/eps)^(1/4) = 2
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 1.0), B=constant_field(circle64, 0.0)
        )
        report = solve_at_eps(pd, 0.0625, constant_field(circle64, 1.0), FlowConfig(t_max=5000))
        assert report.converged
        assert np.abs(report.u.values - 2.0).max() <= 1e-8

    def test_warm_start_is_cheap(self, circle64):
        # starting from the answer with a grown step size converges in a
        # handful of steps instead of hundreds
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 1.0), B=constant_field(circle64, 0.0)
        )
        cold = solve_at_eps(pd, 0.0625, constant_field(circle64, 1.0), FlowConfig(t_max=5000))
        warm = solve_at_eps(
            pd, 0.0625, cold.u, FlowConfig(t_max=5000, dt_init=cold.dt_final)
        )
        assert warm.converged
        assert warm.steps <= 5
        assert warm.steps * 20 < cold.steps

    def test_rejects_nonpositive_eps(self, circle64):
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 1.0), B=constant_field(circle64, 0.0)
        )
        with pytest.raises(ValueError, match="eps must be positive"):
            solve_at_eps(pd, 0.0, constant_field(circle64, 1.0), FlowConfig())


class TestRunPath:
    def test_strictly_positive_b_matches_direct_solve(self, circle64):
        # with B bounded away from zero the continuation must land near the
        # unregularized steady state
        x = circle64.coordinates(0)
        pd = ProblemData(
            p=2.0,
            q=2.0,
            A=Field(circle64, 2.0 + np.cos(x)),
            B=constant_field(circle64, 1.0),
        )
        u0 = constant_field(circle64, 1.0)
        sched = EpsSchedule((0.1, 0.05, 0.025), FlowConfig(t_max=5000))
        path = run_path(pd, sched, u0)
        direct, _ = run_to_steady(pd, u0, FlowConfig(t_max=5000))
        assert all(r.converged for r in path.reports)
        assert path.integrability.verdict == "finite"
        assert path.bounds_ok
        # gaps shrink roughly geometrically
        assert path.gaps[1] <= 0.75 * path.gaps[0]
        # the limit field sits within O(eps_last) of the direct solution
        # (measured sensitivity |du/deps| is about 0.31 on this problem)
        gap = np.abs(path.limit_field.values - direct.u.values).max()
        assert gap <= 0.5 * sched.eps_values[-1]

    def test_degenerate_b_diagnostics(self, degenerate_problem):
        u0 = constant_field(degenerate_problem.grid, 1.0)
        sched = EpsSchedule.geometric(0.1, 5, FlowConfig(t_max=50000))
        path = run_path(degenerate_problem, sched, u0)
        assert all(r.converged for r in path.reports)
        assert path.bounds_ok
        assert all(b < a for a, b in zip(path.gaps, path.gaps[1:]))
        # residual identity: against the unregularized equation the defect
        # of the eps-steady field is exactly eps*(B-damping difference),
        # i.e. eps * u^q, up to the flow tolerance
        eps_last = sched.eps_values[-1]
        u = path.limit_field
        expected = eps_last * u.values**degenerate_problem.q
        r0 = np.abs(
            (elliptic_residual(degenerate_problem, u).linf) - np.abs(expected).max()
        )
        assert r0 <= 1e-6
        # lower barrier of each regularized problem holds at its steady state
        for eps, rep in zip(sched.eps_values, path.reports):
            lower = (1.0 / (2.0 + eps)) ** (1.0 / 5.0)
            assert rep.u.values.min() >= lower - 1e-8
            assert rep.barrier_violations == 0

    def test_gradient_bound_controlled_by_energy(self, degenerate_problem):
        # energy decay caps the Dirichlet term: at the steady state
        # int |grad u|^2 <= 2 E(u) <= 2 max recorded energy
        import dataclasses

        from lichflow import energy

        u0 = constant_field(degenerate_problem.grid, 1.0)
        eps = 0.05
        pd_eps = dataclasses.replace(degenerate_problem, eps=eps)
        report, record = run_to_steady(pd_eps, u0, FlowConfig(t_max=50000))
        assert report.converged
        grad_steady = integrate(gradient_sq(report.u))
        assert grad_steady <= 2.0 * record.column("energy").max()

    def test_abort_carries_partial_report(self, degenerate_problem):
        # an impossible flow configuration (giant frozen dt, negative shift)
        # collapses the first solve; the aborted path hands back what it has
        bad = FlowConfig(dt_init=64.0, dt_min=64.0, dt_max=64.0, t_max=1e9,
                         omega_shift=-0.015625)
        u0 = constant_field(degenerate_problem.grid, 1.0)
        with pytest.raises(PathAborted) as err:
            run_path(degenerate_problem, EpsSchedule((0.1, 0.05), bad), u0)
        assert err.value.partial.fields == []
        assert "aborted" in " ".join(err.value.partial.flags)
