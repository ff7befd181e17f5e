"""Continuation in the regularization parameter for degenerate damping.

When B has zeros the constant-barrier machinery fails, so the problem is
solved along a decreasing schedule of eps added to B, warm-starting each
solve from the previous steady field.  Per-eps bound triples (mass,
Dirichlet integral, accumulated dissipation) are recorded as the discrete
stand-in for uniform-in-eps estimates, and the last field is certified a
posteriori against the eps = 0 equation.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, gradient_sq, integrate
from .heatflow import FlowConfig, SteadyReport, run_to_steady
from .problem import ProblemData, ResidualNorms, elliptic_residual

__all__ = [
    "EpsSchedule",
    "BoundTriple",
    "IntegrabilityReport",
    "PathReport",
    "PathAborted",
    "integrability_check",
    "solve_at_eps",
    "run_path",
]


@dataclass(frozen=True)
class EpsSchedule:
    """Strictly decreasing positive eps values plus a per-solve flow config."""

    eps_values: tuple[float, ...]
    flow_config: FlowConfig

    def __post_init__(self) -> None:
        vals = tuple(float(e) for e in self.eps_values)
        if not vals:
            raise ValueError("eps schedule must not be empty")
        if any(e <= 0 for e in vals):
            raise ValueError("eps values must be positive")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("eps values must be strictly decreasing")
        object.__setattr__(self, "eps_values", vals)

    @classmethod
    def geometric(
        cls, eps_start: float, count: int, flow_config: FlowConfig, factor: float = 0.5
    ) -> "EpsSchedule":
        if not 0 < factor < 1:
            raise ValueError(f"factor must be in (0, 1), got {factor}")
        return cls(tuple(eps_start * factor**j for j in range(count)), flow_config)


@dataclass(frozen=True)
class BoundTriple:
    """int u^2, int |grad u|^2, and accumulated int int (du/dt)^2."""

    l2_sq: float
    grad_sq: float
    dissipation: float

    def astuple(self) -> tuple[float, float, float]:
        return (self.l2_sq, self.grad_sq, self.dissipation)


@dataclass(frozen=True)
class IntegrabilityReport:
    """Heuristic refinement-study verdict on whether int B^(-1/q) is finite."""

    verdict: str  # "finite" | "likely divergent" | "inconclusive"
    slope: float
    point_counts: tuple[int, ...]
    integrals: tuple[float, ...]
    excluded_points: int


@dataclass
class PathReport:
    eps_values: tuple[float, ...]
    fields: list[Field]
    reports: list[SteadyReport]
    bounds: list[BoundTriple]
    gaps: list[float]
    integrability: IntegrabilityReport | None
    limit_field: Field | None
    limit_residual: ResidualNorms | None
    bounds_ok: bool
    flags: list[str] = dc_field(default_factory=list)


class PathAborted(RuntimeError):
    """A per-eps solve failed; the partial report is attached."""

    def __init__(self, message: str, partial: PathReport):
        super().__init__(message)
        self.partial = partial


def integrability_check(B: Field, q: float, refinement_levels: int = 4) -> IntegrabilityReport:
    """Quadrature of B^(-1/q) on dyadic sub-lattices of the given field.

    Points where B is exactly zero are excluded from the sum.  The verdict
    fits log(integral) against log(point count): a flat sequence
    (slope <= 0.05) reads "finite", steady growth (slope >= 0.5) reads
    "likely divergent", anything else "inconclusive".  Heuristic only.
    """
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    if B.min() < 0:
        raise ValueError("integrability check requires B >= 0")
    grid = B.grid

    levels = max(1, int(refinement_levels))
    while levels > 1 and any(n % 2 ** (levels - 1) for n in grid.points_per_axis):
        levels -= 1

    mesh = B.mesh()
    counts: list[int] = []
    integrals: list[float] = []
    excluded = 0
    for k in range(levels):
        stride = 2 ** (levels - 1 - k)
        sub = mesh[tuple(slice(None, None, stride) for _ in range(grid.dim))]
        cell = grid.cell_volume * stride**grid.dim
        nonzero = sub != 0.0
        excluded = int(sub.size - np.count_nonzero(nonzero))
        counts.append(int(sub.size))
        integrals.append(float(cell * np.sum(nonzero * np.where(nonzero, sub, 1.0) ** (-1.0 / q))))

    if all(v == 0.0 for v in integrals):
        # B vanishes everywhere it is sampled: no damping at all
        return IntegrabilityReport(
            "likely divergent", math.inf, tuple(counts), tuple(integrals), excluded
        )
    if len(integrals) < 2:
        return IntegrabilityReport(
            "inconclusive", math.nan, tuple(counts), tuple(integrals), excluded
        )
    slope = float(np.polyfit(np.log(counts), np.log(integrals), 1)[0])
    if slope <= 0.05:
        verdict = "finite"
    elif slope >= 0.5:
        verdict = "likely divergent"
    else:
        verdict = "inconclusive"
    return IntegrabilityReport(verdict, slope, tuple(counts), tuple(integrals), excluded)


def solve_at_eps(
    pd: ProblemData, eps: float, u_warm_start: Field, cfg: FlowConfig
) -> SteadyReport:
    """Steady solve with B replaced by B + eps, warm-started."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    pd_eps = dataclasses.replace(pd, eps=eps)
    report, _ = run_to_steady(pd_eps, u_warm_start, cfg)
    return report


def _l2_gap(a: Field, b: Field) -> float:
    d = a - b
    return math.sqrt(integrate(d * d))


def run_path(pd: ProblemData, schedule: EpsSchedule, u0: Field) -> PathReport:
    """Solve along the eps schedule and certify the limit.

    Bound triples are flagged when any component exceeds 10x its median
    across the schedule; the last field's defect in the eps = 0 equation is
    reported as the limit certificate.  A failed per-eps solve raises
    PathAborted carrying the partial report.
    """
    if not schedule.eps_values:
        raise ValueError("eps schedule must not be empty")

    flags: list[str] = []
    try:
        integrability = integrability_check(pd.B, pd.q)
    except ValueError as exc:
        integrability = None
        flags.append(f"integrability check skipped: {exc}")
    if integrability is not None and integrability.verdict != "finite":
        flags.append(
            f"integrability check verdict: {integrability.verdict} "
            f"(slope {integrability.slope:.3g}); the eps -> 0 limit may not exist"
        )

    fields: list[Field] = []
    reports: list[SteadyReport] = []
    bounds: list[BoundTriple] = []

    def _partial() -> PathReport:
        gaps = [_l2_gap(a, b) for a, b in zip(fields, fields[1:])]
        return PathReport(
            eps_values=schedule.eps_values,
            fields=fields,
            reports=reports,
            bounds=bounds,
            gaps=gaps,
            integrability=integrability,
            limit_field=None,
            limit_residual=None,
            bounds_ok=False,
            flags=flags + ["path aborted before completion"],
        )

    warm = u0
    cfg = schedule.flow_config
    dissipation_so_far = 0.0
    for eps in schedule.eps_values:
        try:
            report = solve_at_eps(pd, eps, warm, cfg)
        except (ValueError, RuntimeError) as exc:
            raise PathAborted(f"solve at eps = {eps:g} failed: {exc}", _partial()) from exc
        # carry the step size forward with the warm start: the next leg
        # resumes where this one left off instead of re-growing dt
        if math.isfinite(report.dt_final):
            dt0 = min(max(report.dt_final, cfg.dt_min), cfg.dt_max)
            cfg = dataclasses.replace(cfg, dt_init=dt0)
        if not report.converged:
            flags.append(f"solve at eps = {eps:g} did not converge: {report.message}")
        u = report.u
        fields.append(u)
        reports.append(report)
        # the warm-started legs concatenate into one flow trajectory, so the
        # dissipation entry is cumulative along the path
        dissipation_so_far += report.dissipation_total
        bounds.append(
            BoundTriple(
                l2_sq=integrate(u * u),
                grad_sq=integrate(gradient_sq(u)),
                dissipation=dissipation_so_far,
            )
        )
        warm = u

    gaps = [_l2_gap(a, b) for a, b in zip(fields, fields[1:])]

    bounds_ok = True
    arr = np.array([b.astuple() for b in bounds])
    for i, name in enumerate(("int u^2", "int |grad u|^2", "dissipation")):
        med = float(np.median(arr[:, i]))
        worst = float(arr[:, i].max())
        if worst > 10.0 * med:
            bounds_ok = False
            flags.append(
                f"uniform bound violated for {name}: max {worst:.6g} exceeds "
                f"10x median {med:.6g}; hypothesis likely failing"
            )

    limit_field = fields[-1]
    limit_residual = elliptic_residual(pd, limit_field)
    return PathReport(
        eps_values=schedule.eps_values,
        fields=fields,
        reports=reports,
        bounds=bounds,
        gaps=gaps,
        integrability=integrability,
        limit_field=limit_field,
        limit_residual=limit_residual,
        bounds_ok=bounds_ok,
        flags=flags,
    )
