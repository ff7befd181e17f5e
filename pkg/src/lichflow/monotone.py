"""Ordered sub/supersolution chains for the evolution problem.

The lift solves the linear parabolic problem with the previous iterate in
the source, by backward-difference stepping on a shared time grid:

    (1/dt + omega) w_{j+1} - lap(w_{j+1}) = w_j/dt + f(src_{j+1}) + omega src_{j+1},
    w_0 = u0.

The implicit operator is an M-matrix and the shifted source map is order
preserving, so chains started from constant sub/super barriers stay ordered
at every space-time node.  At the common limit the shift cancels and the
trajectory solves the fully implicit backward-difference scheme; the module
also provides that scheme directly (implicit_flow) as the matched-stepping
cross-check, and a time-independent fixed-point shortcut for steady states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, Grid, helmholtz_solve
from .heatflow import SteadyReport
from .problem import (
    BarrierPair,
    ProblemData,
    barrier_bounds,
    elliptic_residual,
    energy,
    f_eval,
    omega_bound,
    subsuper_init,
)
from .problem import _require_positive

__all__ = [
    "SpaceTimeField",
    "ChainReport",
    "make_time_grid",
    "parabolic_lift",
    "iterate_chain",
    "implicit_flow",
    "elliptic_fixed_point",
]


def make_time_grid(horizon: float, steps: int) -> np.ndarray:
    if not horizon > 0 or steps < 1:
        raise ValueError(f"need horizon > 0 and steps >= 1, got ({horizon}, {steps})")
    return np.linspace(0.0, float(horizon), steps + 1)


@dataclass(frozen=True)
class SpaceTimeField:
    """A field value per node of a uniform time grid starting at 0."""

    grid: Grid
    time_grid: np.ndarray
    values: np.ndarray  # shape (len(time_grid), grid.npoints)

    def __post_init__(self) -> None:
        tg = np.asarray(self.time_grid, dtype=np.float64)
        if tg.ndim != 1 or tg.size < 2 or tg[0] != 0.0:
            raise ValueError("time_grid must be 1-d, start at 0, and have >= 2 nodes")
        steps = np.diff(tg)
        if not np.all(steps > 0):
            raise ValueError("time_grid nodes must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
            raise ValueError("time_grid must be uniform")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (tg.size, self.grid.npoints):
            raise ValueError(
                f"values must have shape ({tg.size}, {self.grid.npoints}), got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("space-time field contains non-finite values")
        tg = tg.copy()
        v = v.copy()
        tg.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def n_steps(self) -> int:
        return self.time_grid.size - 1

    def slice(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    @classmethod
    def from_constant(cls, grid: Grid, time_grid: np.ndarray, value: float) -> "SpaceTimeField":
        tg = np.asarray(time_grid, dtype=np.float64)
        return cls(grid, tg, np.full((tg.size, grid.npoints), float(value)))


@dataclass
class ChainReport:
    converged: bool
    gap_history: list[float]
    ordering_violations: int
    worst_violation: float
    sub_final: SpaceTimeField
    super_final: SpaceTimeField
    omega: float
    barrier: BarrierPair
    iterations: int
    iterates_sub: list[SpaceTimeField] = dc_field(default_factory=list)
    iterates_super: list[SpaceTimeField] = dc_field(default_factory=list)


def parabolic_lift(
    pd: ProblemData, source: SpaceTimeField, u0: Field, omega: float
) -> SpaceTimeField:
    """One application of the shifted linear solve along the time grid.

    The source is evaluated at the target time node, so the linear part is
    fully implicit.
    """
    if u0.grid != source.grid:
        raise ValueError("u0 and source live on different grids")
    dt = source.dt
    alpha = 1.0 / dt + omega
    out = np.empty_like(source.values)
    out[0] = u0.values
    w = u0
    for j in range(source.n_steps):
        src = source.slice(j + 1)
        rhs = w * (1.0 / dt) + f_eval(pd, src) + src * omega
        w = helmholtz_solve(rhs, alpha)
        out[j + 1] = w.values
    return SpaceTimeField(source.grid, source.time_grid, out)


def iterate_chain(
    pd: ProblemData,
    u0: Field,
    horizon: float,
    time_steps: int,
    max_iters: int = 200,
    gap_tol: float = 1e-8,
    ordering_tol: float = 1e-8,
    keep_history: bool = False,
) -> ChainReport:
    """Alternately lift the sub and super chains until their gap closes.

    Starts from the constant barriers; counts every space-time point at
    which monotonicity of either chain, or the ordering between them, fails
    beyond ordering_tol (none are expected).
    """
    barrier = subsuper_init(pd, u0)
    omega = omega_bound(pd, barrier.lower, barrier.upper)
    tg = make_time_grid(horizon, time_steps)
    sub = SpaceTimeField.from_constant(pd.grid, tg, barrier.lower)
    sup = SpaceTimeField.from_constant(pd.grid, tg, barrier.upper)

    gaps = [float(np.max(np.abs(sup.values - sub.values)))]
    violations = 0
    worst = 0.0
    iterates_sub = [sub] if keep_history else []
    iterates_super = [sup] if keep_history else []
    converged = gaps[-1] <= gap_tol
    iterations = 0

    while not converged and iterations < max_iters:
        sub_new = parabolic_lift(pd, sub, u0, omega)
        sup_new = parabolic_lift(pd, sup, u0, omega)
        for defect in (
            sub.values - sub_new.values,      # sub chain must increase
            sup_new.values - sup.values,      # super chain must decrease
            sub_new.values - sup_new.values,  # chains must stay ordered
        ):
            mx = float(defect.max())
            worst = max(worst, mx)
            violations += int(np.count_nonzero(defect > ordering_tol))
        sub, sup = sub_new, sup_new
        if keep_history:
            iterates_sub.append(sub)
            iterates_super.append(sup)
        gaps.append(float(np.max(np.abs(sup.values - sub.values))))
        iterations += 1
        converged = gaps[-1] <= gap_tol

    return ChainReport(
        converged=converged,
        gap_history=gaps,
        ordering_violations=violations,
        worst_violation=worst,
        sub_final=sub,
        super_final=sup,
        omega=omega,
        barrier=barrier,
        iterations=iterations,
        iterates_sub=iterates_sub,
        iterates_super=iterates_super,
    )


def implicit_flow(
    pd: ProblemData,
    u0: Field,
    time_grid: np.ndarray,
    omega: float,
    tol: float = 1e-12,
    max_inner: int = 200,
) -> SpaceTimeField:
    """Backward-difference evolution on a shared time grid.

    Each step's nonlinear system is solved by the shifted Picard iteration,
    so the trajectory is the common limit the sub/super chains converge to;
    used as the matched-stepping reference in sandwich and cross-solver
    checks.
    """
    _require_positive(u0, "u0")
    tg = np.asarray(time_grid, dtype=np.float64)
    dt = float(tg[1] - tg[0])
    alpha = 1.0 / dt + omega
    out = np.empty((tg.size, u0.grid.npoints))
    out[0] = u0.values
    w = u0
    for j in range(tg.size - 1):
        prev = w
        for _ in range(max_inner):
            w_next = helmholtz_solve(prev * (1.0 / dt) + f_eval(pd, w) + w * omega, alpha)
            change = float(np.abs(w_next.values - w.values).max())
            w = w_next
            if change <= tol:
                break
        else:
            raise RuntimeError(
                f"inner iteration of the implicit step at node {j + 1} did not reach {tol:g}"
            )
        out[j + 1] = w.values
    return SpaceTimeField(u0.grid, tg, out)


def elliptic_fixed_point(
    pd: ProblemData,
    u0_guess: Field,
    max_iters: int = 2000,
    step_tol: float = 1e-11,
) -> SteadyReport:
    """Steady-state shortcut: iterate u <- (omega*I - lap)^-1 (f(u) + omega*u).

    Stops when consecutive iterates agree to step_tol in max norm; raises if
    the gap grows tenfold over 50 iterations.
    """
    _require_positive(u0_guess, "u0_guess")
    bb = barrier_bounds(pd, u0_guess)
    m = bb.lower
    M = bb.upper if math.isfinite(bb.upper) else 2.0 * max(u0_guess.max(), bb.lower)
    omega = omega_bound(pd, m, M)

    track_energy = pd.sign_b == 1
    e_initial = energy(pd, u0_guess) if track_energy else math.nan

    u = u0_guess
    gaps: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        u_new = helmholtz_solve(f_eval(pd, u) + u * omega, omega)
        gap = float(np.abs(u_new.values - u.values).max())
        u = u_new
        gaps.append(gap)
        if gap <= step_tol:
            converged = True
            break
        if len(gaps) > 50 and gaps[-1] > 10.0 * gaps[-51]:
            raise RuntimeError(
                f"fixed-point iteration diverging: gap grew from {gaps[-51]:.3g} "
                f"to {gaps[-1]:.3g} over 50 iterations"
            )

    res = elliptic_residual(pd, u)
    return SteadyReport(
        converged=converged,
        u=u,
        residual_l2=res.l2,
        residual_linf=res.linf,
        steps=iterations,
        t_final=math.nan,
        dt_final=math.nan,
        energy_initial=e_initial,
        energy_final=energy(pd, u) if track_energy else math.nan,
        dissipation_total=math.nan,
        barrier_lower=bb.lower,
        barrier_upper=bb.upper,
        barrier_violations=0,
        energy_violations=0,
        worst_energy_increase=0.0,
        omega=omega,
        message="" if converged else f"fixed point not reached in {max_iters} iterations",
    )
