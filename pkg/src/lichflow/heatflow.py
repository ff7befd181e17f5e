"""Time integration of u_t - lap(u) = f(x, u) to steady state.

One step treats the Laplacian and a stabilizing shift omega implicitly and
the shifted reaction term explicitly:

    (1/dt + omega) u_new - lap(u_new) = u/dt + f(x, u) + omega u.

With omega dominating -f_u over the barrier range, the update map is
order preserving, so positivity, the constant barriers, and comparison
between ordered initial data survive discretization.  Positivity is kept
by step rejection, never by clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, helmholtz_solve, laplacian
from .problem import (
    ProblemData,
    ResidualNorms,
    barrier_bounds,
    elliptic_residual,
    energy,
    f_eval,
    omega_bound,
)
from .problem import _require_positive

__all__ = [
    "FlowConfig",
    "FlowState",
    "TrajectoryRow",
    "TrajectoryRecord",
    "SteadyReport",
    "StepSizeCollapse",
    "imex_step",
    "steady_check",
    "run_to_steady",
]

# rejection guard: the update rate |u_new - u|/dt never exceeds the current
# flow speed when omega >= 0, so this only trips on genuinely bad steps
JUMP_GUARD_FACTOR = 10.0

GROWTH_FACTOR = 1.2
GROWTH_EVERY = 10
REJECTION_FACTOR = 0.5


@dataclass
class FlowConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 1.0
    t_max: float = 1e4
    steady_tol_residual: float = 1e-9
    steady_tol_dudt: float = 1e-10
    record_every: int = 10
    omega_shift: float | None = None

    def __post_init__(self) -> None:
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError(
                f"need 0 < dt_min <= dt_init <= dt_max, got "
                f"({self.dt_min}, {self.dt_init}, {self.dt_max})"
            )
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if not (self.steady_tol_residual > 0 and self.steady_tol_dudt > 0):
            raise ValueError("steady tolerances must be positive")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")


@dataclass
class FlowState:
    t: float
    dt: float
    u: Field
    step_count: int = 0
    last_energy: float = math.nan
    last_residuals: ResidualNorms | None = None


@dataclass(frozen=True)
class TrajectoryRow:
    t: float
    dt: float
    min_u: float
    max_u: float
    energy: float
    residual_l2: float
    residual_linf: float
    dudt_l2: float

    def astuple(self) -> tuple[float, ...]:
        return (
            self.t,
            self.dt,
            self.min_u,
            self.max_u,
            self.energy,
            self.residual_l2,
            self.residual_linf,
            self.dudt_l2,
        )


SERIES_HEADER = ("t", "dt", "min_u", "max_u", "energy", "residual_l2", "residual_linf", "dudt_l2")


@dataclass
class TrajectoryRecord:
    rows: list[TrajectoryRow] = dc_field(default_factory=list)

    def append(self, row: TrajectoryRow) -> None:
        if self.rows and row.t < self.rows[-1].t:
            raise ValueError("trajectory rows must be ordered by t")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class SteadyReport:
    converged: bool
    u: Field
    residual_l2: float
    residual_linf: float
    steps: int
    t_final: float
    dt_final: float
    energy_initial: float
    energy_final: float
    dissipation_total: float
    barrier_lower: float
    barrier_upper: float
    barrier_violations: int
    energy_violations: int
    worst_energy_increase: float
    omega: float
    message: str = ""


class StepSizeCollapse(RuntimeError):
    """dt fell below dt_min while rejecting steps; the state is attached."""

    def __init__(self, message: str, state: FlowState):
        super().__init__(message)
        self.state = state


def imex_step(pd: ProblemData, state: FlowState, omega: float, dt_min: float = 1e-14) -> FlowState:
    """Advance one accepted step, halving dt on rejection.

    A step is rejected when it loses positivity or when the update rate
    |u_new - u|_inf / dt exceeds a blow-up guard tied to the current flow
    speed.  dt underflow raises StepSizeCollapse with the state attached.
    """
    u = state.u
    f = f_eval(pd, u)
    speed = float(np.abs(laplacian(u).values + f.values).max())
    guard = JUMP_GUARD_FACTOR * (1.0 + speed)
    dt = state.dt
    while True:
        rhs = u * (1.0 / dt + omega) + f
        u_new = helmholtz_solve(rhs, 1.0 / dt + omega)
        rate = float(np.abs(u_new.values - u.values).max()) / dt
        if u_new.values.min() > 0.0 and rate <= guard:
            break
        dt *= REJECTION_FACTOR
        if dt < dt_min:
            raise StepSizeCollapse(
                f"step-size collapse at t = {state.t:.6g}: dt fell below {dt_min:.3g}",
                state,
            )
    return FlowState(
        t=state.t + dt,
        dt=dt,
        u=u_new,
        step_count=state.step_count + 1,
        last_energy=state.last_energy,
        last_residuals=state.last_residuals,
    )


def _steady(residual_linf: float, dudt_l2: float, cfg: FlowConfig) -> bool:
    # inclusive comparisons: a residual exactly at tolerance counts as steady
    return residual_linf <= cfg.steady_tol_residual and dudt_l2 <= cfg.steady_tol_dudt


def steady_check(pd: ProblemData, u: Field, dudt_l2: float, cfg: FlowConfig) -> bool:
    """True iff the steady residual and the time-derivative norm are both
    within their tolerances (inclusive)."""
    return _steady(elliptic_residual(pd, u).linf, dudt_l2, cfg)


def _l2_norm(grid_cell_volume: float, values: np.ndarray) -> float:
    return math.sqrt(grid_cell_volume * float(np.sum(values * values)))


def run_to_steady(pd: ProblemData, u0: Field, cfg: FlowConfig) -> tuple[SteadyReport, TrajectoryRecord]:
    """Iterate IMEX steps until both steady tolerances hold or t_max is hit.

    dt grows by GROWTH_FACTOR after GROWTH_EVERY accepted steps (capped at
    dt_max) and halves on rejection.  The stabilizing shift comes from the
    barrier range unless cfg.omega_shift pins it; if the trajectory leaves
    the range by more than tolerance the shift is recomputed.  Energy decay
    and barrier bounds are monitored every accepted step and violations are
    counted in the report.
    """
    _require_positive(u0, "u0")
    bb = barrier_bounds(pd, u0)
    m_omega = bb.lower
    M_omega = bb.upper if math.isfinite(bb.upper) else 2.0 * max(u0.max(), bb.lower)
    omega = cfg.omega_shift if cfg.omega_shift is not None else omega_bound(pd, m_omega, M_omega)

    track_energy = pd.sign_b == 1
    cell = u0.grid.cell_volume
    state = FlowState(t=0.0, dt=cfg.dt_init, u=u0)
    e_now = energy(pd, u0) if track_energy else math.nan
    res = elliptic_residual(pd, u0)
    state.last_energy = e_now
    state.last_residuals = res

    record = TrajectoryRecord()
    record.append(
        TrajectoryRow(0.0, cfg.dt_init, u0.min(), u0.max(), e_now, res.l2, res.linf, math.nan)
    )

    e_initial = e_now
    dissipation = 0.0
    energy_violations = 0
    worst_increase = 0.0
    barrier_violations = 0
    accepted_since_growth = 0
    converged = False
    dudt_l2 = math.inf
    message = ""

    while state.t < cfg.t_max:
        prev = state
        state = imex_step(pd, state, omega, cfg.dt_min)
        dt_used = state.t - prev.t
        rejected = state.dt < prev.dt
        accepted_since_growth = 0 if rejected else accepted_since_growth + 1

        rate = (state.u.values - prev.u.values) / dt_used
        dudt_l2 = _l2_norm(cell, rate)
        dissipation += dt_used * dudt_l2**2

        if track_energy:
            e_new = energy(pd, state.u)
            if e_new > e_now + 1e-8 * (1.0 + abs(e_now)):
                energy_violations += 1
                worst_increase = max(worst_increase, e_new - e_now)
            e_now = e_new

        mn, mx = state.u.min(), state.u.max()
        if mn < bb.lower - 1e-8 or (math.isfinite(bb.upper) and mx > bb.upper + 1e-8):
            barrier_violations += 1
            if cfg.omega_shift is None:
                m_omega = min(m_omega, 0.9 * mn)
                M_omega = max(M_omega, 1.1 * mx)
                omega = omega_bound(pd, m_omega, M_omega)
        elif mx > M_omega and cfg.omega_shift is None:
            # the finite stand-in range for an infinite barrier grew; keep
            # the shift dominant
            M_omega = 2.0 * mx
            omega = omega_bound(pd, m_omega, M_omega)

        res = elliptic_residual(pd, state.u)
        state.last_energy = e_now
        state.last_residuals = res

        if state.step_count % cfg.record_every == 0:
            record.append(
                TrajectoryRow(state.t, dt_used, mn, mx, e_now, res.l2, res.linf, dudt_l2)
            )

        if _steady(res.linf, dudt_l2, cfg):
            converged = True
            break

        if accepted_since_growth >= GROWTH_EVERY:
            state.dt = min(state.dt * GROWTH_FACTOR, cfg.dt_max)
            accepted_since_growth = 0

    if record.rows[-1].t != state.t:
        record.append(
            TrajectoryRow(
                state.t,
                state.t - (prev.t if state.step_count else 0.0),
                state.u.min(),
                state.u.max(),
                e_now,
                res.l2,
                res.linf,
                dudt_l2 if math.isfinite(dudt_l2) else math.nan,
            )
        )

    if not converged:
        message = (
            f"did not reach steady tolerances by t_max = {cfg.t_max:g} "
            f"(residual_linf = {res.linf:.3g}, dudt_l2 = {dudt_l2:.3g})"
        )

    report = SteadyReport(
        converged=converged,
        u=state.u,
        residual_l2=res.l2,
        residual_linf=res.linf,
        steps=state.step_count,
        t_final=state.t,
        dt_final=state.dt,
        energy_initial=e_initial,
        energy_final=e_now,
        dissipation_total=dissipation,
        barrier_lower=bb.lower,
        barrier_upper=bb.upper,
        barrier_violations=barrier_violations,
        energy_violations=energy_violations,
        worst_energy_increase=worst_increase,
        omega=omega,
        message=message,
    )
    return report, record
