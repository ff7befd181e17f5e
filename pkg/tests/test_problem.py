import math

import numpy as np
import pytest

from lichflow import (
    Field,
    PositivityError,
    ProblemData,
    appendix_subsuper,
    barrier_bounds,
    constant_field,
    elliptic_residual,
    energy,
    f_deriv,
    f_eval,
    laplacian,
    make_grid,
    materialize,
    omega_bound,
    parse_coeff,
    subsuper_init,
)
from lichflow.problem import (
    BinOp,
    Call,
    CoeffParseError,
    Const,
    Tabulated,
    smallest_operator_eigenvalue,
)
from lichflow.serialize import write_snapshot
from conftest import TWO_PI, mms_problem, random_smooth_field


class TestParser:
    def test_constant(self):
        spec = parse_coeff("1")
        assert spec.root == Const(1.0)

    def test_tree_shape(self):
        spec = parse_coeff("2 + 0.5*cos(x)")
        root = spec.root
        assert isinstance(root, BinOp) and root.op == "+"
        assert root.left == Const(2.0)
        assert isinstance(root.right, BinOp) and root.right.op == "*"
        assert root.right.left == Const(0.5)
        assert isinstance(root.right.right, Call) and root.right.right.fn == "cos"

    def test_syntax_error_offset(self):
        with pytest.raises(CoeffParseError) as err:
            parse_coeff("2 +* x")
        assert err.value.offset == 3
        assert "number" in " ".join(err.value.expected)

    def test_unknown_identifier(self):
        with pytest.raises(CoeffParseError):
            parse_coeff("2 + z")

    def test_unbalanced_paren(self):
        with pytest.raises(CoeffParseError) as err:
            parse_coeff("sin(x")
        assert err.value.expected == ("')'",)

    def test_trailing_garbage(self):
        with pytest.raises(CoeffParseError):
            parse_coeff("1 2")

    def test_precedence(self, circle64):
        f = materialize(parse_coeff("1 + 2*3"), circle64)
        assert np.all(f.values == 7.0)

    def test_subtraction_and_parens(self, circle64):
        f = materialize(parse_coeff("(1 - 3) * 2"), circle64)
        assert np.all(f.values == -4.0)

    def test_file_reference(self, tmp_path, circle64):
        snap = tmp_path / "coef.snapshot"
        write_snapshot(constant_field(circle64, 2.5), snap)
        spec = parse_coeff(f"@file:{snap}")
        assert isinstance(spec.root, Tabulated)
        f = materialize(spec, circle64)
        assert np.all(f.values == 2.5)


class TestMaterialize:
    def test_constant_field(self, circle64, torus16):
        for g in (circle64, torus16):
            f = materialize(parse_coeff("1"), g)
            assert np.all(f.values == 1.0)

    def test_exact_zero_at_origin(self, circle64):
        f = materialize(parse_coeff("1 - cos(x)"), circle64)
        assert f.values[0] == 0.0

    def test_y_on_circle_rejected(self, circle64):
        with pytest.raises(ValueError, match="'y'.*1-d"):
            materialize(parse_coeff("cos(y)"), circle64)

    def test_y_on_torus(self, torus16):
        f = materialize(parse_coeff("cos(y)"), torus16)
        assert np.allclose(f.values, np.cos(torus16.coordinates(1)))

    def test_file_wrong_grid(self, tmp_path, circle64):
        other = make_grid(1, [32], [TWO_PI])
        snap = tmp_path / "coef.snapshot"
        write_snapshot(constant_field(other, 1.0), snap)
        with pytest.raises(ValueError, match="does not match"):
            materialize(parse_coeff(f"@file:{snap}"), circle64)


class TestProblemData:
    def test_p_must_exceed_one(self, circle64):
        one = constant_field(circle64, 1.0)
        with pytest.raises(ValueError, match="p must exceed 1"):
            ProblemData(p=0.5, q=1.0, A=one, B=one)

    def test_q_positive(self, circle64):
        one = constant_field(circle64, 1.0)
        with pytest.raises(ValueError, match="q must be positive"):
            ProblemData(p=2.0, q=0.0, A=one, B=one)

    def test_a_strictly_positive(self, circle64):
        one = constant_field(circle64, 1.0)
        with pytest.raises(PositivityError):
            ProblemData(p=2.0, q=1.0, A=constant_field(circle64, 0.0), B=one)

    def test_main_mode_rejects_negative_b(self, circle64):
        one = constant_field(circle64, 1.0)
        with pytest.raises(ValueError, match="B >= 0"):
            ProblemData(p=2.0, q=1.0, A=one, B=constant_field(circle64, -1.0))
        # explicit override is allowed
        ProblemData(
            p=2.0, q=1.0, A=one, B=constant_field(circle64, -1.0), allow_negative_b=True
        )

    def test_critical_exponent_warning(self, circle64):
        one = constant_field(circle64, 1.0)
        # n = 3 puts the critical exponent at 5: q = 4 passes quietly
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ProblemData(p=2.0, q=4.0, A=one, B=one, manifold_dim_hint=3)
        with pytest.warns(UserWarning, match="critical exponent"):
            ProblemData(p=2.0, q=6.0, A=one, B=one, manifold_dim_hint=3)

    def test_default_h_is_zero(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=1.0, A=one, B=one)
        assert np.all(pd.h.values == 0.0)


class TestReactionTerm:
    def test_balanced_constant_vanishes(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        assert np.abs(f_eval(pd, one).values).max() == 0.0

    def test_constant_steady_value(self, circle64):
        # A/B = 16 with p = q = 2: the constant 16^(1/4) = 2 balances exactly
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 16.0), B=constant_field(circle64, 1.0)
        )
        out = f_eval(pd, constant_field(circle64, 2.0))
        assert np.abs(out.values).max() <= 1e-14

    def test_positivity_error_carries_location(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        vals = np.ones(64)
        vals[5] = 0.0
        with pytest.raises(PositivityError) as err:
            f_eval(pd, Field(circle64, vals))
        assert err.value.argmin == 5

    def test_derivative_constant(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        out = f_deriv(pd, one)
        assert np.allclose(out.values, -5.0, atol=1e-14)

    def test_derivative_degenerate_b(self, circle64):
        pd = ProblemData(
            p=2.0,
            q=3.0,
            A=constant_field(circle64, 1.5),
            B=constant_field(circle64, 0.0),
        )
        out = f_deriv(pd, constant_field(circle64, 1.0))
        assert np.allclose(out.values, -2.0 * 1.5, atol=1e-14)

    def test_derivative_matches_finite_differences(self, circle64):
        rng = np.random.default_rng(5)
        x = circle64.coordinates(0)
        pd = ProblemData(
            p=2.3,
            q=1.7,
            A=Field(circle64, 1.0 + 0.5 * np.cos(x)),
            B=Field(circle64, 0.8 + 0.2 * np.sin(x)),
        )
        u = random_smooth_field(circle64, rng, amplitude=0.2, offset=1.5)
        delta = 1e-5
        fd = (f_eval(pd, u + delta).values - f_eval(pd, u - delta).values) / (2 * delta)
        exact = f_deriv(pd, u).values
        assert np.abs(fd - exact).max() <= 1e-6 * (1.0 + np.abs(exact).max())


class TestOmegaBound:
    def test_worked_value(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        # p A m^-(p+1) + q B M^(q-1) + 1 = 16 + 12 + 1 on [1/2, 2]
        assert omega_bound(pd, 0.5, 2.0) == pytest.approx(29.0, abs=1e-12)

    def test_worked_value_dominates(self, circle64):
        # sampling oracle: 29 must dominate -f_u over a dense sample of the
        # range (the true maximum is 16.75 at u = 1/2)
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        us = np.linspace(0.5, 2.0, 1000)
        neg_fu = 2.0 * us ** (-3.0) + 3.0 * us**2
        assert neg_fu.max() < 29.0

    def test_degenerate_b(self, circle64):
        pd = ProblemData(
            p=2.0,
            q=3.0,
            A=constant_field(circle64, 1.5),
            B=constant_field(circle64, 0.0),
        )
        assert omega_bound(pd, 0.5, 2.0) == pytest.approx(2.0 * 1.5 * 0.5**-3 + 1.0)

    @pytest.mark.parametrize("q", [0.5, 1.0, 2.5])
    def test_shift_dominates_sampled_derivative(self, circle64, q):
        rng = np.random.default_rng(17)
        x = circle64.coordinates(0)
        pd = ProblemData(
            p=1.8,
            q=q,
            A=Field(circle64, 1.0 + 0.7 * np.cos(x)),
            B=Field(circle64, 1.2 + 0.4 * np.sin(x)),
        )
        m, M = 0.3, 2.5
        omega = omega_bound(pd, m, M)
        for u_val in rng.uniform(m, M, 1000):
            fu = f_deriv(pd, constant_field(circle64, u_val)).values
            assert (fu + omega).min() > 0


class TestEnergy:
    def test_constant_closed_form(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
        # 0 + |M|/(p-1) + |M|/(q+1) = 2 pi (1 + 1/4)
        assert energy(pd, one) == pytest.approx(2.5 * math.pi, rel=1e-13)

    def test_resolution_independent_for_constants(self):
        for n in (32, 64, 256):
            g = make_grid(1, [n], [TWO_PI])
            one = constant_field(g, 1.0)
            pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
            assert energy(pd, constant_field(g, 1.7)) == pytest.approx(
                2 * math.pi * (1.7**-1 + 1.7**4 / 4), rel=1e-13
            )

    def test_matches_fine_quadrature(self):
        # fine-grid oracle: the same functional evaluated at n = 4096 is the
        # reference; the n = 64 value must sit within O(h^2) of it
        vals = {}
        for n in (64, 4096):
            g = make_grid(1, [n], [TWO_PI])
            x = g.coordinates(0)
            one = constant_field(g, 1.0)
            pd = ProblemData(p=2.0, q=3.0, A=one, B=one)
            vals[n] = energy(pd, Field(g, 1.0 + 0.1 * np.cos(x)))
        h = TWO_PI / 64
        assert abs(vals[64] - vals[4096]) <= 0.05 * h**2

    def test_requires_main_sign(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=constant_field(circle64, -1.0), sign_b=-1)
        with pytest.raises(ValueError, match="main-equation sign"):
            energy(pd, one)

    def test_finite_for_positive_fields(self, circle64):
        rng = np.random.default_rng(23)
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=one, B=constant_field(circle64, 0.0))
        for _ in range(5):
            u = random_smooth_field(circle64, rng, amplitude=0.3, offset=1.0)
            assert math.isfinite(energy(pd, u))


class TestEllipticResidual:
    def test_balanced_constant(self, circle64):
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 16.0), B=constant_field(circle64, 1.0)
        )
        res = elliptic_residual(pd, constant_field(circle64, 2.0))
        assert res.linf <= 1e-12
        assert res.l2 <= 1e-12

    def test_manufactured_solution_order(self):
        # the manufactured steady state has measured defect 0.0064 h^2
        for n in (32, 128):
            pd, ustar = mms_problem(n)
            res = elliptic_residual(pd, Field(pd.grid, ustar))
            h = TWO_PI / n
            assert res.linf <= 0.2 * h**2

    def test_residual_is_initial_flow_speed(self, circle64):
        # |lap u0 + f(u0)| equals the flow velocity magnitude at launch,
        # measured through one tiny explicit step
        from lichflow import FlowConfig, FlowState, imex_step

        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=3.0, A=constant_field(circle64, 2.0), B=one)
        x = circle64.coordinates(0)
        u0 = Field(circle64, 1.0 + 0.2 * np.cos(x))
        res = elliptic_residual(pd, u0)
        dt = 1e-8
        state = imex_step(pd, FlowState(t=0.0, dt=dt, u=u0), omega=0.0)
        rate = (state.u.values - u0.values) / dt
        r = laplacian(u0).values + f_eval(pd, u0).values
        assert np.abs(rate - r).max() <= 1e-5 * (1.0 + np.abs(r).max())
        assert res.linf == pytest.approx(np.abs(r).max(), rel=1e-12)


class TestBarriers:
    def test_subsuper_worked_example(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=3.0, q=1.0, A=constant_field(circle64, 4.0), B=one)
        pair = subsuper_init(pd, one)
        assert pair.lower == pytest.approx(1.0)
        assert pair.upper == pytest.approx(math.sqrt(2.0), rel=1e-14)

    def test_subsuper_balanced(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=2.0, A=one, B=one)
        pair = subsuper_init(pd, one)
        assert pair.lower == pair.upper == 1.0

    def test_subsuper_requires_positive_b(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=2.0, A=one, B=constant_field(circle64, 0.0))
        with pytest.raises(ValueError, match="eps-path"):
            subsuper_init(pd, one)

    def test_subsuper_inequalities_on_random_problems(self, circle64):
        rng = np.random.default_rng(31)
        x = circle64.coordinates(0)
        for _ in range(5):
            pd = ProblemData(
                p=rng.uniform(1.5, 3.0),
                q=rng.uniform(0.5, 3.0),
                A=Field(circle64, rng.uniform(0.5, 2.0) + 0.3 * np.cos(x)),
                B=Field(circle64, rng.uniform(0.5, 2.0) + 0.3 * np.sin(x)),
            )
            u0 = random_smooth_field(circle64, rng, amplitude=0.2, offset=1.0)
            pair = subsuper_init(pd, u0)
            assert pair.lower <= u0.values.min() + 1e-15
            assert pair.upper >= u0.values.max() - 1e-15
            f_lo = f_eval(pd, constant_field(circle64, pair.lower)).values
            f_hi = f_eval(pd, constant_field(circle64, pair.upper)).values
            assert f_lo.min() >= -1e-12
            assert f_hi.max() <= 1e-12

    def test_barrier_bounds_worked_example(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=3.0, q=1.0, A=constant_field(circle64, 4.0), B=one)
        pair = barrier_bounds(pd, one)
        assert pair.lower == pytest.approx(1.0)
        assert pair.upper == pytest.approx(math.sqrt(2.0), rel=1e-14)

    def test_barrier_bounds_ratio_one(self, circle64):
        x = circle64.coordinates(0)
        coeff = Field(circle64, 1.0 + 0.4 * np.cos(x))
        pd = ProblemData(p=2.0, q=2.0, A=coeff, B=coeff)
        u0 = constant_field(circle64, 0.7)
        pair = barrier_bounds(pd, u0)
        # with A = B the ratio constant collapses past min A / max B < 1
        assert pair.lower == pytest.approx(
            min(0.7, (coeff.min() / coeff.max()) ** 0.25), rel=1e-14
        )

    def test_barrier_bounds_infinite_upper(self, circle64):
        pd = ProblemData(
            p=2.0, q=2.0, A=constant_field(circle64, 1.0), B=constant_field(circle64, 0.0)
        )
        pair = barrier_bounds(pd, constant_field(circle64, 1.0))
        assert math.isinf(pair.upper)


class TestAppendixWitnesses:
    def _pd(self, grid, b_vals, h_field):
        return ProblemData(
            p=2.0,
            q=2.0,
            A=constant_field(grid, 1.0),
            B=Field(grid, b_vals),
            h=h_field,
            sign_b=-1,
        )

    def _defect(self, pd, w):
        return (
            -laplacian(w) + pd.h * w - pd.A * (w ** -pd.p) - pd.B * (w**pd.q)
        ).values

    def test_constant_case(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = self._pd(circle64, -np.ones(64), one)
        sub, sup = appendix_subsuper(pd, one)
        # (-lap + 1) u = 1 gives u = 1, so witnesses are pure scalings
        assert np.allclose(sub.values, sub.values[0])
        assert np.allclose(sup.values, sup.values[0])
        assert self._defect(pd, sub).max() <= 1e-12
        assert self._defect(pd, sup).min() >= -1e-12
        assert np.all(sub.values <= sup.values)

    def test_varying_h_through_cg_path(self, circle64):
        # min h = -0.5 but the operator stays positive (smallest eigenvalue
        # 0.2911 measured), exercising the eigenvalue check and the
        # conjugate-gradient solve
        x = circle64.coordinates(0)
        h = Field(circle64, 1.0 + 1.5 * np.cos(x))
        assert smallest_operator_eigenvalue(h) == pytest.approx(0.2911, abs=1e-3)
        v = Field(circle64, 2.0 + np.sin(x))
        pd = self._pd(circle64, -1.0 - 0.5 * np.cos(x), h)
        sub, sup = appendix_subsuper(pd, v)
        assert self._defect(pd, sub).max() <= 1e-9
        assert self._defect(pd, sup).min() >= -1e-9
        assert np.all(sub.values <= sup.values)

    def test_linearity_of_linear_solve(self, circle64):
        from lichflow.problem import _screened_poisson_solve

        x = circle64.coordinates(0)
        h = Field(circle64, 1.0 + 0.5 * np.cos(x))
        v = Field(circle64, 1.5 + np.sin(x))
        u1 = _screened_poisson_solve(h, v)
        u2 = _screened_poisson_solve(h, v * 2.0)
        assert np.abs(u2.values - 2.0 * u1.values).max() <= 1e-9

    def test_rejects_nonpositive_operator(self, circle64):
        x = circle64.coordinates(0)
        h = Field(circle64, np.cos(x))
        pd = self._pd(circle64, -np.ones(64), h)
        with pytest.raises(ValueError, match="not positive"):
            appendix_subsuper(pd, constant_field(circle64, 1.0))

    def test_requires_appendix_sign(self, circle64):
        one = constant_field(circle64, 1.0)
        pd = ProblemData(p=2.0, q=2.0, A=one, B=one, h=one)
        with pytest.raises(ValueError, match="appendix sign"):
            appendix_subsuper(pd, one)
