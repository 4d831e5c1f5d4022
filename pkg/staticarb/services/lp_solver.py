"""
Linear programming core.

Solves ``min c.x  s.t.  G x <= h,  lower <= x <= upper`` with a bundled
bounded-variable primal simplex (revised, with a dense explicit basis inverse
updated by a rank-one pivot each iteration and periodically refactorized). Two equality forms are available:

* ``standard``: the simplex runs on ``[G I][x; s] = h``; the basis has one
  entry per row of ``G``.
* ``dual``: the simplex runs on the LP dual, whose basis has one entry per
  column of ``G``; the primal ``x`` is read off the simplex multipliers.
  Repair LPs have many more rows than columns, so this is what ``auto``
  picks for them.

External solvers plug in through the ``SolverBackend`` protocol.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Protocol, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from staticarb.config.settings import Settings, settings as default_settings
from staticarb.models.errors import DimensionMismatch, InputError, SolverFailure

_PIVOT_TOL = 1e-9
_STEP_TOL = 1e-12
_TIE_TOL = 1e-12


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class SolverForm(str, Enum):
    AUTO = "auto"
    STANDARD = "standard"
    DUAL = "dual"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min objective.x`` subject to ``a_ub x <= b_ub`` and variable bounds."""

    objective: np.ndarray
    a_ub: sparse.csr_matrix
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        objective = np.asarray(self.objective, dtype=float)
        n = objective.size
        a_ub = sparse.csr_matrix(self.a_ub, dtype=float)
        if a_ub.shape[1] != n:
            raise DimensionMismatch(n, a_ub.shape[1], "constraint matrix columns")
        b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        if b_ub.size != a_ub.shape[0]:
            raise DimensionMismatch(a_ub.shape[0], b_ub.size, "right-hand side")
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()

        if not (np.all(np.isfinite(objective)) and np.all(np.isfinite(a_ub.data)) and np.all(np.isfinite(b_ub))):
            raise InputError("Linear program contains NaN or infinite coefficients")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise InputError("Invalid variable bounds")
        if np.any(lower > upper):
            raise InputError("Variable lower bound exceeds upper bound")

        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_rows(self) -> int:
        return self.a_ub.shape[0]

    @property
    def n_cols(self) -> int:
        return self.objective.size

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation of ``x`` (0 when feasible)."""
        worst = 0.0
        if self.n_rows:
            worst = max(worst, float(np.max(self.a_ub @ x - self.b_ub)))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return worst


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    max_iters: Optional[int] = None
    max_iters_factor: int = 50
    stall_limit: int = 50
    refactor_interval: int = 64
    form: SolverForm = SolverForm.AUTO
    scale: bool = True

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides) -> "SolverOptions":
        settings = settings or default_settings
        values = dict(
            feas_tol=settings.solver_feas_tol,
            opt_tol=settings.solver_opt_tol,
            max_iters_factor=settings.solver_max_iters_factor,
            stall_limit=settings.solver_stall_limit,
            refactor_interval=settings.solver_refactor_interval,
            form=SolverForm(settings.solver_form),
        )
        values.update(overrides)
        return cls(**values)

    def iteration_budget(self, lp: LinearProgram) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return self.max_iters_factor * (lp.n_rows + lp.n_cols)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective_value: float
    iterations: int
    max_violation: float = 0.0
    form: str = ""
    backend: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    def diagnostics(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "objective_value": self.objective_value,
            "max_violation": self.max_violation,
            "form": self.form,
            "backend": self.backend,
        }

    def raise_for_status(self, what: str = "LP") -> "LpSolution":
        """Raise ``SolverFailure`` unless the solve ended optimal."""
        if not self.optimal:
            raise SolverFailure(f"{what} ended with status {self.status.value}", diagnostics=self.diagnostics())
        return self


class SolverBackend(Protocol):
    name: str

    def solve(self, lp: LinearProgram, options: SolverOptions) -> LpSolution:
        ...


# ---------------------------------------------------------------------------
# Simplex engine on  A x = b,  lo <= x <= hi
# ---------------------------------------------------------------------------

class _BoundedSimplex:
    """Revised primal simplex with bounded variables on an equality system."""

    def __init__(
        self,
        a: sparse.csc_matrix,
        b: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        basis: np.ndarray,
        x: np.ndarray,
        options: SolverOptions,
    ):
        self.a = a
        self.a_t = a.T.tocsr()
        self.b = b
        self.lo = lo
        self.hi = hi
        self.basis = basis
        self.x = x
        self.options = options
        self.is_basic = np.zeros(a.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0
        self._refactor()

    def _refactor(self) -> None:
        try:
            self.binv = np.linalg.inv(self.a[:, self.basis].toarray())
        except np.linalg.LinAlgError as exc:
            raise SolverFailure("Singular basis during refactorization", {"iterations": self.iterations}) from exc
        nonbasic = self.x.copy()
        nonbasic[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.b - self.a @ nonbasic)
        self._since_refactor = 0

    def multipliers(self, cost: np.ndarray) -> np.ndarray:
        return self.binv.T @ cost[self.basis]

    def _column(self, j: int) -> np.ndarray:
        start, end = self.a.indptr[j], self.a.indptr[j + 1]
        return self.binv[:, self.a.indices[start:end]] @ self.a.data[start:end]

    def run(self, cost: np.ndarray, max_iters: int, phase: str) -> LpStatus:
        opt_tol = self.options.opt_tol
        movable = self.hi > self.lo
        bland = False
        stall = 0

        while True:
            if self.iterations >= max_iters:
                logger.warning(f"Simplex {phase}: iteration limit {max_iters} reached")
                return LpStatus.ITERATION_LIMIT

            pi = self.multipliers(cost)
            d = cost - self.a_t @ pi
            nonbasic = movable & ~self.is_basic
            up = nonbasic & (self.x < self.hi) & (d < -opt_tol)
            down = nonbasic & (self.x > self.lo) & (d > opt_tol)
            candidates = np.flatnonzero(up | down)
            if candidates.size == 0:
                return LpStatus.OPTIMAL

            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if d[j] < 0 else -1.0

            alpha = self._column(j)
            delta = -direction * alpha
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            ratios = np.full(alpha.size, np.inf)
            falling = (delta < -_PIVOT_TOL) & np.isfinite(lob)
            rising = (delta > _PIVOT_TOL) & np.isfinite(hib)
            ratios[falling] = (xb[falling] - lob[falling]) / -delta[falling]
            ratios[rising] = (hib[rising] - xb[rising]) / delta[rising]
            np.maximum(ratios, 0.0, out=ratios)

            flip = self.hi[j] - self.lo[j]
            best_ratio = float(ratios.min()) if ratios.size else np.inf
            step = min(best_ratio, flip)
            if not math.isfinite(step):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if flip <= best_ratio:
                # entering variable runs to its opposite bound
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                self.x[self.basis] = xb + delta * flip
                stall = 0
                continue

            ties = np.flatnonzero(ratios <= best_ratio + _TIE_TOL)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])

            leaving = int(self.basis[r])
            self.x[self.basis] = xb + delta * step
            self.x[leaving] = self.lo[leaving] if delta[r] < 0 else self.hi[leaving]
            self.x[j] += direction * step

            pivot_row = self.binv[r] / alpha[r]
            self.binv -= np.outer(alpha, pivot_row)
            self.binv[r] = pivot_row
            self.basis[r] = j
            self.is_basic[leaving] = False
            self.is_basic[j] = True

            if step <= _STEP_TOL:
                stall += 1
                if stall >= self.options.stall_limit and not bland:
                    logger.warning(f"Simplex {phase}: {stall} degenerate pivots, switching to Bland's rule")
                    bland = True
            else:
                stall = 0

            self._since_refactor += 1
            if self._since_refactor >= self.options.refactor_interval:
                self._refactor()


def _solve_equality_form(
    a: sparse.csc_matrix,
    b: np.ndarray,
    cost: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    crash: List[Optional[Tuple[int, float]]],
    options: SolverOptions,
    max_iters: int,
) -> Tuple[LpStatus, _BoundedSimplex, int]:
    """
    Two-phase simplex on ``a x = b``.

    ``crash[i]`` optionally names a column ``±e_i`` to start row ``i`` in the
    basis; rows without a usable crash column get an artificial.

    Returns the status, the engine (positioned at the final basis) and the
    number of original columns.
    """
    n = a.shape[1]
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    crash_cols = [entry[0] for entry in crash if entry is not None]
    x[crash_cols] = 0.0
    residual = b - a @ x

    basis = np.empty(len(b), dtype=np.int64)
    art_rows, art_signs, art_values = [], [], []
    for i, entry in enumerate(crash):
        if entry is not None:
            col, sign = entry
            value = residual[i] / sign
            if lo[col] <= value <= hi[col]:
                basis[i] = col
                x[col] = value
                continue
        sign = 1.0 if residual[i] >= 0 else -1.0
        basis[i] = n + len(art_rows)
        art_rows.append(i)
        art_signs.append(sign)
        art_values.append(abs(residual[i]))

    k = len(art_rows)
    if k:
        art = sparse.csc_matrix((art_signs, (art_rows, np.arange(k))), shape=(len(b), k))
        a = sparse.hstack([a, art], format="csc")
        lo = np.concatenate([lo, np.zeros(k)])
        hi = np.concatenate([hi, np.full(k, np.inf)])
        x = np.concatenate([x, np.array(art_values)])
        cost = np.concatenate([cost, np.zeros(k)])

    engine = _BoundedSimplex(a, b, lo.copy(), hi.copy(), basis, x, options)

    if k and float(np.sum(engine.x[n:])) > options.feas_tol:
        phase_one = np.concatenate([np.zeros(n), np.ones(k)])
        status = engine.run(phase_one, max_iters, "phase 1")
        if status != LpStatus.OPTIMAL:
            return status, engine, n
        infeasibility = float(np.sum(engine.x[n:]))
        if infeasibility > options.feas_tol * max(1.0, float(np.max(np.abs(b), initial=0.0))):
            logger.debug(f"Phase 1 ended with infeasibility {infeasibility:.3e}")
            return LpStatus.INFEASIBLE, engine, n
    if k:
        # artificials may stay basic at zero but never re-enter
        engine.hi[n:] = 0.0
        engine.x[n:] = 0.0

    status = engine.run(cost, max_iters, "phase 2")
    return status, engine, n


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

def _power_of_two(values: np.ndarray) -> np.ndarray:
    out = np.ones_like(values)
    nonzero = values > 0
    out[nonzero] = np.exp2(-np.round(np.log2(values[nonzero])))
    return out


def _equilibrate(lp: LinearProgram) -> Tuple[LinearProgram, np.ndarray]:
    """Max-abs row then column scaling. Returns the scaled LP and column factors."""
    if lp.n_rows == 0:
        return lp, np.ones(lp.n_cols)
    a = lp.a_ub.tocsr()
    row_scale = _power_of_two(np.asarray(abs(a).max(axis=1).todense()).reshape(-1))
    a = sparse.diags(row_scale) @ a
    col_scale = _power_of_two(np.asarray(abs(a).max(axis=0).todense()).reshape(-1))
    a = (a @ sparse.diags(col_scale)).tocsr()
    scaled = LinearProgram(
        objective=lp.objective * col_scale,
        a_ub=a,
        b_ub=lp.b_ub * row_scale,
        lower=lp.lower / col_scale,
        upper=lp.upper / col_scale,
    )
    return scaled, col_scale


# ---------------------------------------------------------------------------
# Forms
# ---------------------------------------------------------------------------

def _solve_standard(lp: LinearProgram, options: SolverOptions, max_iters: int) -> Tuple[LpStatus, np.ndarray, int]:
    m, n = lp.n_rows, lp.n_cols
    a = sparse.hstack([lp.a_ub, sparse.identity(m, format="csr")], format="csc")
    lo = np.concatenate([lp.lower, np.zeros(m)])
    hi = np.concatenate([lp.upper, np.full(m, np.inf)])
    cost = np.concatenate([lp.objective, np.zeros(m)])
    crash = [(n + i, 1.0) for i in range(m)]
    status, engine, _ = _solve_equality_form(a, lp.b_ub.copy(), cost, lo, hi, crash, options, max_iters)
    return status, engine.x[:n].copy(), engine.iterations


def _solve_dual(lp: LinearProgram, options: SolverOptions, max_iters: int) -> Tuple[LpStatus, np.ndarray, int]:
    """
    Simplex on the dual  ``min h.y - l.z_l + u.z_u  s.t.  -G^T y + z_l - z_u = c``
    over ``y, z_l, z_u >= 0``; the primal solution is ``x = -pi``.
    """
    n = lp.n_cols
    has_lower = np.flatnonzero(np.isfinite(lp.lower))
    has_upper = np.flatnonzero(np.isfinite(lp.upper))
    n_y, n_l, n_u = lp.n_rows, has_lower.size, has_upper.size

    z_l = sparse.csc_matrix((np.ones(n_l), (has_lower, np.arange(n_l))), shape=(n, n_l))
    z_u = sparse.csc_matrix((-np.ones(n_u), (has_upper, np.arange(n_u))), shape=(n, n_u))
    a = sparse.hstack([-lp.a_ub.T, z_l, z_u], format="csc")
    cost = np.concatenate([lp.b_ub, -lp.lower[has_lower], lp.upper[has_upper]])
    width = n_y + n_l + n_u
    lo = np.zeros(width)
    hi = np.full(width, np.inf)

    crash: List[Optional[Tuple[int, float]]] = [None] * n
    lower_col = {int(j): n_y + p for p, j in enumerate(has_lower)}
    upper_col = {int(j): n_y + n_l + p for p, j in enumerate(has_upper)}
    for j in range(n):
        if j in lower_col and lp.objective[j] >= 0:
            crash[j] = (lower_col[j], 1.0)
        elif j in upper_col and lp.objective[j] <= 0:
            crash[j] = (upper_col[j], -1.0)

    status, engine, n_orig = _solve_equality_form(a, lp.objective.copy(), cost, lo, hi, crash, options, max_iters)
    full_cost = np.concatenate([cost, np.zeros(engine.a.shape[1] - n_orig)])
    if status == LpStatus.UNBOUNDED:
        status = LpStatus.INFEASIBLE
    elif status == LpStatus.INFEASIBLE:
        status = LpStatus.UNBOUNDED
    x = -engine.multipliers(full_cost)
    return status, x, engine.iterations


class BundledSimplexBackend:
    """The in-repo bounded-variable primal simplex."""

    name = "simplex"

    def solve(self, lp: LinearProgram, options: SolverOptions) -> LpSolution:
        form = options.form
        if form == SolverForm.AUTO:
            form = SolverForm.DUAL if lp.n_rows > lp.n_cols else SolverForm.STANDARD
        max_iters = options.iteration_budget(lp)

        scaled, col_scale = _equilibrate(lp) if options.scale else (lp, np.ones(lp.n_cols))
        if form == SolverForm.DUAL:
            status, x_scaled, iterations = _solve_dual(scaled, options, max_iters)
        else:
            status, x_scaled, iterations = _solve_standard(scaled, options, max_iters)

        x = x_scaled * col_scale
        if status == LpStatus.OPTIMAL:
            # snap values that drifted within tolerance of a bound
            x = np.where(np.abs(x - lp.lower) <= options.feas_tol, lp.lower, x)
            x = np.where(np.abs(x - lp.upper) <= options.feas_tol, lp.upper, x)
        solution = LpSolution(
            status=status,
            x=x,
            objective_value=float(lp.objective @ x),
            iterations=iterations,
            max_violation=lp.max_violation(x),
            form=form.value,
            backend=self.name,
        )
        logger.debug(
            f"LP {lp.n_rows}x{lp.n_cols} ({form.value}): {status.value} after {iterations} iterations, "
            f"objective {solution.objective_value:.12g}"
        )
        return solution


class ScipyHighsBackend:
    """``scipy.optimize.linprog`` with the HiGHS solvers."""

    name = "highs"

    _STATUS = {
        0: LpStatus.OPTIMAL,
        1: LpStatus.ITERATION_LIMIT,
        2: LpStatus.INFEASIBLE,
        3: LpStatus.UNBOUNDED,
    }

    def solve(self, lp: LinearProgram, options: SolverOptions) -> LpSolution:
        from scipy.optimize import linprog

        bounds = [
            (None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
            for lo, hi in zip(lp.lower, lp.upper)
        ]
        result = linprog(
            lp.objective,
            A_ub=lp.a_ub if lp.n_rows else None,
            b_ub=lp.b_ub if lp.n_rows else None,
            bounds=bounds,
            method="highs",
            options={
                "primal_feasibility_tolerance": max(options.feas_tol, 1e-10),
                "dual_feasibility_tolerance": max(options.opt_tol, 1e-10),
                "maxiter": options.iteration_budget(lp),
            },
        )
        status = self._STATUS.get(result.status)
        if status is None:
            raise SolverFailure(f"HiGHS failed: {result.message}", {"status": result.status})
        x = np.asarray(result.x, dtype=float) if result.x is not None else np.zeros(lp.n_cols)
        return LpSolution(
            status=status,
            x=x,
            objective_value=float(lp.objective @ x),
            iterations=int(getattr(result, "nit", 0) or 0),
            max_violation=lp.max_violation(x),
            form="highs",
            backend=self.name,
        )


_BACKENDS = {
    BundledSimplexBackend.name: BundledSimplexBackend,
    ScipyHighsBackend.name: ScipyHighsBackend,
}


def get_backend(name: str = "simplex") -> SolverBackend:
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise InputError(f"Unknown solver backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def solve(lp: LinearProgram, options: Optional[SolverOptions] = None) -> LpSolution:
    """Solve ``lp`` with the bundled simplex."""
    return BundledSimplexBackend().solve(lp, options or SolverOptions.from_settings())
