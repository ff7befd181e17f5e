"""Problem data for -lap(u) = A*u^-p - B*u^q: coefficients, nonlinearity,
stabilizing shift, energy, residuals, and constant barrier constructions.

The reaction term is handled in one signed form,

    f(x, u) = A(x) u^-p - s (B(x) + eps) u^q - h(x) u,

with s = +1 for the main equation and s = -1 for the variant with a
negative B coefficient and a linear h term.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import (
    Field,
    Grid,
    constant_field,
    gradient_sq,
    helmholtz_solve,
    integrate,
    laplacian,
)
from .serialize import read_snapshot, require_grid_match

__all__ = [
    "CoeffParseError",
    "CoefficientSpec",
    "PositivityError",
    "ProblemData",
    "BarrierPair",
    "ResidualNorms",
    "parse_coeff",
    "materialize",
    "f_eval",
    "f_deriv",
    "omega_bound",
    "energy",
    "elliptic_residual",
    "subsuper_init",
    "barrier_bounds",
    "appendix_subsuper",
]


# ---------------------------------------------------------------------------
# coefficient expressions
#
# expr   := term (('+'|'-') term)*
# term   := factor ('*' factor)*
# factor := number | 'x' | 'y' | ('sin'|'cos') '(' expr ')' | '(' expr ')'
#
# or the whole text is "@file:<path>" referencing a snapshot file.
# ---------------------------------------------------------------------------


class CoeffParseError(ValueError):
    """Syntax error in a coefficient expression, with byte offset."""

    def __init__(self, text: str, offset: int, expected: tuple[str, ...]):
        self.offset = offset
        self.expected = expected
        super().__init__(
            f"syntax error at offset {offset} in {text!r}: expected "
            + " or ".join(expected)
        )


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Coord:
    axis: int  # 0 for x, 1 for y


@dataclass(frozen=True)
class Call:
    fn: str  # "sin" or "cos"
    arg: "CoeffNode"


@dataclass(frozen=True)
class BinOp:
    op: str  # "+", "-", "*"
    left: "CoeffNode"
    right: "CoeffNode"


@dataclass(frozen=True)
class Tabulated:
    path: str


CoeffNode = Union[Const, Coord, Call, BinOp, Tabulated]


@dataclass(frozen=True)
class CoefficientSpec:
    root: CoeffNode
    text: str


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[+\-*()]))"
)

_FACTOR_EXPECTED = ("number", "'x'", "'y'", "'sin'", "'cos'", "'('")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self._advance()

    def _advance(self) -> None:
        m = _TOKEN_RE.match(self.text, self.pos)
        if m is None:
            rest = self.text[self.pos :]
            if rest.strip():
                bad = self.pos + len(rest) - len(rest.lstrip())
                raise CoeffParseError(self.text, bad, ("a valid token",))
            self.kind, self.value, self.tok_offset = "eof", "", len(self.text)
            self.pos = len(self.text)
            return
        self.tok_offset = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
        self.pos = m.end()
        if m.group("number") is not None:
            self.kind, self.value = "number", m.group("number")
        elif m.group("ident") is not None:
            self.kind, self.value = "ident", m.group("ident")
        else:
            self.kind, self.value = m.group("op"), m.group("op")

    def parse(self) -> CoeffNode:
        node = self._expr()
        if self.kind != "eof":
            raise CoeffParseError(self.text, self.tok_offset, ("'+'", "'-'", "'*'", "end of input"))
        return node

    def _expr(self) -> CoeffNode:
        node = self._term()
        while self.kind in ("+", "-"):
            op = self.kind
            self._advance()
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> CoeffNode:
        node = self._factor()
        while self.kind == "*":
            self._advance()
            node = BinOp("*", node, self._factor())
        return node

    def _factor(self) -> CoeffNode:
        if self.kind == "number":
            node = Const(float(self.value))
            self._advance()
            return node
        if self.kind == "ident":
            name = self.value
            if name == "x":
                self._advance()
                return Coord(0)
            if name == "y":
                self._advance()
                return Coord(1)
            if name in ("sin", "cos"):
                self._advance()
                if self.kind != "(":
                    raise CoeffParseError(self.text, self.tok_offset, ("'('",))
                self._advance()
                arg = self._expr()
                if self.kind != ")":
                    raise CoeffParseError(self.text, self.tok_offset, ("')'",))
                self._advance()
                return Call(name, arg)
            raise CoeffParseError(self.text, self.tok_offset, _FACTOR_EXPECTED)
        if self.kind == "(":
            self._advance()
            node = self._expr()
            if self.kind != ")":
                raise CoeffParseError(self.text, self.tok_offset, ("')'",))
            self._advance()
            return node
        raise CoeffParseError(self.text, self.tok_offset, _FACTOR_EXPECTED)


def parse_coeff(text: str) -> CoefficientSpec:
    """Parse a coefficient expression or an "@file:<path>" snapshot reference."""
    stripped = text.strip()
    if stripped.startswith("@file:"):
        path = stripped[len("@file:") :].strip()
        if not path:
            raise CoeffParseError(text, text.find("@file:") + 6, ("a file path",))
        return CoefficientSpec(Tabulated(path), text)
    return CoefficientSpec(_Parser(text).parse(), text)


def _eval_node(node: CoeffNode, grid: Grid) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(grid.npoints, node.value)
    if isinstance(node, Coord):
        if node.axis >= grid.dim:
            name = "xy"[node.axis]
            raise ValueError(f"coefficient uses '{name}' but the grid is {grid.dim}-d")
        return grid.coordinates(node.axis)
    if isinstance(node, Call):
        arg = _eval_node(node.arg, grid)
        return np.sin(arg) if node.fn == "sin" else np.cos(arg)
    if isinstance(node, BinOp):
        left = _eval_node(node.left, grid)
        right = _eval_node(node.right, grid)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        return left * right
    if isinstance(node, Tabulated):
        return require_grid_match(read_snapshot(node.path), grid, node.path).values
    raise TypeError(f"unknown coefficient node {node!r}")


def materialize(spec: CoefficientSpec, grid: Grid) -> Field:
    """Evaluate a coefficient expression at every grid point."""
    return Field(grid, _eval_node(spec.root, grid))


# ---------------------------------------------------------------------------
# problem data and the nonlinearity
# ---------------------------------------------------------------------------


class PositivityError(ValueError):
    """A field that must stay positive touched zero or below."""

    def __init__(self, u: Field, what: str = "u"):
        idx = int(np.argmin(u.values))
        coords = tuple(float(u.grid.coordinates(a)[idx]) for a in range(u.grid.dim))
        self.argmin = idx
        self.coords = coords
        super().__init__(
            f"positivity violated: min {what} = {u.values[idx]:.6g} at point "
            f"{idx} (coords {coords})"
        )


def _require_positive(u: Field, what: str = "u") -> None:
    if not u.values.min() > 0.0:
        raise PositivityError(u, what)


@dataclass(frozen=True)
class ProblemData:
    """Exponents, coefficients and regularization for the reaction term."""

    p: float
    q: float
    A: Field
    B: Field
    h: Field | None = None
    eps: float = 0.0
    sign_b: int = 1
    manifold_dim_hint: int | None = None
    allow_negative_b: bool = False

    def __post_init__(self) -> None:
        if not self.p > 1:
            raise ValueError(f"p must exceed 1 (the singular term needs p > 1), got {self.p}")
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.sign_b not in (1, -1):
            raise ValueError(f"sign_b must be +1 (main) or -1 (appendix form), got {self.sign_b}")
        if self.B.grid != self.A.grid:
            raise ValueError("A and B live on different grids")
        _require_positive(self.A, "A")
        if self.h is None:
            object.__setattr__(self, "h", constant_field(self.A.grid, 0.0))
        elif self.h.grid != self.A.grid:
            raise ValueError("h lives on a different grid than A")
        if self.sign_b == 1 and self.B.min() < 0 and not self.allow_negative_b:
            raise ValueError(
                "main-equation mode requires B >= 0 "
                "(set allow_negative_b to override, or use the appendix sign)"
            )
        n = self.manifold_dim_hint
        if n is not None and n >= 3:
            critical = (n + 2) / (n - 2)
            if self.q > critical:
                warnings.warn(
                    f"q = {self.q} exceeds the critical exponent "
                    f"(n+2)/(n-2) = {critical:g} for hinted dimension n = {n}; "
                    "the continuum existence theory may not cover this range",
                    stacklevel=2,
                )

    @property
    def grid(self) -> Grid:
        return self.A.grid

    def b_eff(self) -> np.ndarray:
        """Signed effective damping coefficient: f = A u^-p - b_eff u^q - h u."""
        return self.sign_b * (self.B.values + self.eps)


def f_eval(pd: ProblemData, u: Field) -> Field:
    """Reaction term A u^-p - sign_b (B + eps) u^q - h u."""
    _require_positive(u)
    v = u.values
    out = pd.A.values * v ** (-pd.p) - pd.b_eff() * v**pd.q - pd.h.values * v
    return Field(u.grid, out)


def f_deriv(pd: ProblemData, u: Field) -> Field:
    """Pointwise derivative of the reaction term with respect to u."""
    _require_positive(u)
    v = u.values
    out = (
        -pd.p * pd.A.values * v ** (-pd.p - 1)
        - pd.q * pd.b_eff() * v ** (pd.q - 1)
        - pd.h.values
    )
    return Field(u.grid, out)


def omega_bound(pd: ProblemData, range_min: float, range_max: float) -> float:
    """Shift making f_u + omega > 0 for all u in [range_min, range_max].

    Both contributions to -f_u are monotone in u, so endpoint maxima bound
    them; a +1 margin is added on top of the analytic bound.
    """
    m, M = float(range_min), float(range_max)
    if not 0 < m <= M:
        raise ValueError(f"need 0 < range_min <= range_max, got [{m}, {M}]")
    term_a = pd.p * pd.A.max() * m ** (-pd.p - 1)
    beff = pd.b_eff()
    coeff = max(beff.max(), 0.0) if pd.sign_b == 1 else float(np.abs(beff).max())
    # endpoint max covers both q >= 1 (increasing) and q < 1 (decreasing)
    term_b = pd.q * coeff * max(m ** (pd.q - 1), M ** (pd.q - 1))
    term_h = float(np.abs(pd.h.values).max())
    return term_a + term_b + term_h + 1.0


def energy(pd: ProblemData, u: Field) -> float:
    """Lyapunov functional of the main-equation flow.

    E(u) = 1/2 int |grad u|^2 + 1/(p-1) int A u^(1-p)
         + 1/(q+1) int (B+eps) u^(q+1).
    """
    if pd.sign_b != 1:
        raise ValueError("energy is defined only for the main-equation sign")
    _require_positive(u)
    grad_term = 0.5 * integrate(gradient_sq(u))
    v = u.values
    pot_a = integrate(Field(u.grid, pd.A.values * v ** (1.0 - pd.p))) / (pd.p - 1.0)
    pot_b = integrate(Field(u.grid, (pd.B.values + pd.eps) * v ** (pd.q + 1.0))) / (pd.q + 1.0)
    return grad_term + pot_a + pot_b


@dataclass(frozen=True)
class ResidualNorms:
    l2: float
    linf: float


def elliptic_residual(pd: ProblemData, u: Field) -> ResidualNorms:
    """Norms of lap(u) + f(x, u), the defect in the steady equation."""
    r = laplacian(u) + f_eval(pd, u)
    l2 = math.sqrt(integrate(r * r))
    return ResidualNorms(l2=l2, linf=float(np.abs(r.values).max()))


@dataclass(frozen=True)
class BarrierPair:
    """Constant lower/upper bounds sandwiching the solution."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (0 < self.lower <= self.upper):
            raise ValueError(f"need 0 < lower <= upper, got ({self.lower}, {self.upper})")


def subsuper_init(pd: ProblemData, u0: Field) -> BarrierPair:
    """Constant sub/supersolutions for the strictly damped main equation.

    Tightest constants c with f(lower) >= 0 >= f(upper) pointwise and
    lower <= u0 <= upper; requires B + eps > 0 everywhere.
    """
    if pd.sign_b != 1:
        raise ValueError("constant sub/supersolutions apply to the main-equation sign")
    _require_positive(u0, "u0")
    beff = pd.B.values + pd.eps
    if not beff.min() > 0:
        raise ValueError(
            "use eps-path: the sub/supersolution construction needs B + eps > 0 everywhere"
        )
    ratio = (pd.A.values / beff) ** (1.0 / (pd.p + pd.q))
    lower = min(u0.min(), float(ratio.min()))
    upper = max(u0.max(), float(ratio.max()))
    pair = BarrierPair(lower, upper)
    f_lo = f_eval(pd, constant_field(pd.grid, lower)).values
    f_hi = f_eval(pd, constant_field(pd.grid, upper)).values
    if f_lo.min() < -1e-12 or f_hi.max() > 1e-12:
        raise ValueError(
            "constant barriers fail the sub/supersolution inequalities "
            f"(min f(lower) = {f_lo.min():.3g}, max f(upper) = {f_hi.max():.3g}); "
            "a nonzero linear term h breaks the constant construction"
        )
    return pair


def barrier_bounds(pd: ProblemData, u0: Field) -> BarrierPair:
    """Maximum-principle bounds for the flow started at u0.

    The lower constant comes from evaluating the equation at a space-time
    minimum; the upper one is finite only when the damping coefficient is
    bounded away from zero.
    """
    _require_positive(u0, "u0")
    d = pd.b_eff()
    d_max, d_min = float(d.max()), float(d.min())
    inv_pq = 1.0 / (pd.p + pd.q)
    lower = u0.min()
    if d_max > 0:
        lower = min(lower, (pd.A.min() / d_max) ** inv_pq)
    if d_min > 0:
        upper = max(u0.max(), (pd.A.max() / d_min) ** inv_pq)
    else:
        upper = math.inf
    return BarrierPair(lower, upper)


# ---------------------------------------------------------------------------
# sub/supersolution witnesses for the appendix form
# ---------------------------------------------------------------------------


def _neg_lap_matrix(grid: Grid):
    from scipy import sparse

    mats = []
    for axis in range(grid.dim):
        n = grid.points_per_axis[axis]
        h2 = grid.spacing[axis] ** 2
        e = np.ones(n)
        m = sparse.diags([2 * e / h2, -e[:-1] / h2, -e[:-1] / h2], [0, 1, -1], format="lil")
        m[0, n - 1] += -1.0 / h2
        m[n - 1, 0] += -1.0 / h2
        mats.append(m.tocsr())
    if grid.dim == 1:
        return mats[0]
    n0, n1 = grid.points_per_axis
    # flat index = i0 + n0*i1, so the second kron factor acts on axis 0
    return sparse.kron(sparse.identity(n1), mats[0]) + sparse.kron(mats[1], sparse.identity(n0))


def smallest_operator_eigenvalue(h: Field) -> float:
    """Smallest eigenvalue of -laplacian + h on the field's grid."""
    from scipy import sparse
    from scipy.sparse.linalg import eigsh

    grid = h.grid
    op = _neg_lap_matrix(grid) + sparse.diags(h.values)
    if grid.npoints <= 2048:
        from scipy.linalg import eigvalsh

        return float(eigvalsh(op.toarray())[0])
    vals = eigsh(op, k=1, which="SA", v0=np.ones(grid.npoints), return_eigenvectors=False)
    return float(vals[0])


def _screened_poisson_solve(h: Field, v: Field, tol: float = 1e-10) -> Field:
    """Solve (-laplacian + h) u = v; constant h goes through the Fourier
    fast path, general h through preconditioned conjugate gradients."""
    grid = v.grid
    hv = h.values
    if hv.max() == hv.min():
        return helmholtz_solve(v, float(hv[0]))
    shift = max(float(hv.mean()), 1e-6)

    def apply_op(w: np.ndarray) -> np.ndarray:
        return -laplacian(Field(grid, w)).values + hv * w

    def precond(r: np.ndarray) -> np.ndarray:
        return helmholtz_solve(Field(grid, r), shift).values

    b = v.values
    x = np.zeros_like(b)
    r = b - apply_op(x)
    z = precond(r)
    d = z.copy()
    rz = float(r @ z)
    limit = tol * max(1.0, float(np.abs(b).max()))
    for _ in range(10 * grid.npoints):
        if np.abs(r).max() <= limit:
            break
        ad = apply_op(d)
        alpha = rz / float(d @ ad)
        x += alpha * d
        r -= alpha * ad
        z = precond(r)
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    else:
        raise RuntimeError("conjugate-gradient solve for (-lap + h) u = v did not converge")
    if np.abs(r).max() > limit:
        raise RuntimeError("conjugate-gradient solve for (-lap + h) u = v did not converge")
    return Field(grid, x)


def appendix_subsuper(pd: ProblemData, v: Field) -> tuple[Field, Field]:
    """Sub/supersolution witnesses (eps*u, t*u) for the appendix equation
    -lap(w) + h w = A w^-p + B w^q, built from the solution u of
    (-lap + h) u = v with v > 0.

    eps is halved (and t doubled) from 1 until the pointwise inequalities
    hold; this log-scale bisection fails with an error after 200 steps.
    """
    if pd.sign_b != -1:
        raise ValueError("appendix_subsuper applies to the appendix sign (sign_b = -1)")
    _require_positive(v, "v")
    h = pd.h
    if not h.min() > 0:
        lam0 = smallest_operator_eigenvalue(h)
        if not lam0 > 0:
            raise ValueError(
                f"operator -lap + h is not positive (smallest eigenvalue {lam0:.6g})"
            )
    u = _screened_poisson_solve(h, v)
    if not u.min() > 0:
        raise ValueError(
            "solution of (-lap + h) u = v is not positive; "
            "the witness construction requires u > 0"
        )

    # defect(c) = (-lap + h)(c*u) - A (c*u)^-p - B (c*u)^q, pointwise;
    # the linear part applied to c*u is exactly c*v
    def defect(c: float) -> np.ndarray:
        w = c * u.values
        return c * v.values - pd.A.values * w ** (-pd.p) + pd.b_eff() * w**pd.q

    eps_scale = 1.0
    for _ in range(200):
        if defect(eps_scale).max() <= 0.0:
            break
        eps_scale *= 0.5
    else:
        raise RuntimeError("bisection failure after 200 steps: no subsolution scale found")

    t_scale = 1.0
    for _ in range(200):
        if defect(t_scale).min() >= 0.0:
            break
        t_scale *= 2.0
    else:
        raise RuntimeError("bisection failure after 200 steps: no supersolution scale found")

    sub = Field(pd.grid, eps_scale * u.values)
    sup = Field(pd.grid, t_scale * u.values)
    return sub, sup
