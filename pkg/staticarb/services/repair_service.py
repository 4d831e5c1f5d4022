"""
Repair service: minimal perturbations that remove static arbitrage.

Two objectives are supported:

* ``l1``: minimize the total absolute perturbation ``sum |eps_j|``.
* ``l1ba``: a piecewise-linear cost that is nearly flat inside each quote's
  bid/ask band and steep outside it, so repairs prefer moves that stay
  within the quoted spreads.

Both are linear programs handed to the configured solver backend.
"""
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from staticarb.config.settings import Settings, settings as default_settings
from staticarb.models.constraints import ConstraintSystem
from staticarb.models.errors import DimensionMismatch, InputError
from staticarb.models.schemas import (
    ArbitragePortfolio,
    ObjectiveKind,
    PortfolioLeg,
    RepairConfig,
    RepairResult,
)
from staticarb.models.surface import NormalizedSurface
from staticarb.services.constraint_service import ConstraintService, constraint_service
from staticarb.services.lp_solver import (
    BundledSimplexBackend,
    LinearProgram,
    LpSolution,
    SolverBackend,
    SolverOptions,
)


class RepairService:
    """Builds and solves the repair LPs and reads executable arbitrage off the bands."""

    def __init__(
        self,
        settings: Optional[Settings] = None,
        backend: Optional[SolverBackend] = None,
        constraints: Optional[ConstraintService] = None,
    ):
        """Initialize the repair service with settings and a solver backend."""
        self.settings = settings or default_settings
        self.backend = backend or BundledSimplexBackend()
        self.constraints = constraints or (
            constraint_service if settings is None else ConstraintService(self.settings)
        )

    # ------------------------------------------------------------------
    # Entry points
    # ------------------------------------------------------------------

    def repair(
        self,
        surface: NormalizedSurface,
        system: ConstraintSystem,
        config: Optional[RepairConfig] = None,
    ) -> RepairResult:
        """Dispatch to the objective named in ``config``."""
        config = config or RepairConfig()
        if config.objective == ObjectiveKind.L1BA:
            return self.repair_l1ba(surface, system, config)
        return self.repair_l1(surface, system, config)

    def repair_surface(self, surface: NormalizedSurface, config: Optional[RepairConfig] = None) -> RepairResult:
        """Build the constraint system and repair; ``build_seconds`` includes the constraint build."""
        started = time.perf_counter()
        system = self.constraints.build_constraints(surface)
        elapsed = time.perf_counter() - started
        result = self.repair(surface, system, config)
        return result.model_copy(update={"build_seconds": result.build_seconds + elapsed})

    # ------------------------------------------------------------------
    # l1
    # ------------------------------------------------------------------

    def repair_l1(
        self,
        surface: NormalizedSurface,
        system: ConstraintSystem,
        config: Optional[RepairConfig] = None,
    ) -> RepairResult:
        """
        Minimize ``sum |eps|`` subject to ``A (c + eps) >= b``.

        The perturbation is split as ``eps = eps_plus - eps_minus`` with both
        parts non-negative, giving the LP ``-A eps_plus + A eps_minus <= A c - b``.
        """
        config = config or RepairConfig(objective=ObjectiveKind.L1)
        started = time.perf_counter()
        a, b, c = self._system_arrays(surface, system)
        n = c.size
        lp = LinearProgram(
            objective=np.ones(2 * n),
            a_ub=sparse.hstack([-a, a], format="csr"),
            b_ub=a @ c - b,
            lower=np.zeros(2 * n),
            upper=np.full(2 * n, np.inf),
        )
        built = time.perf_counter()

        solution = self._solve(lp, config, "l1 repair")
        solved = time.perf_counter()

        epsilon = solution.x[:n] - solution.x[n:]
        return self._result(
            ObjectiveKind.L1,
            surface,
            a,
            b,
            c,
            epsilon,
            objective_value=float(np.abs(epsilon).sum()),
            solution=solution,
            delta0=None,
            build_seconds=built - started,
            solve_seconds=solved - built,
        )

    # ------------------------------------------------------------------
    # l1 with bid/ask bands
    # ------------------------------------------------------------------

    def compute_delta0(self, surface: NormalizedSurface) -> float:
        """Uniform in-band cost level: the smaller of 1/N and the tightest half-spread."""
        spreads_min = float(min(surface.ask_spread.min(), surface.bid_spread.min()))
        if spreads_min <= 0:
            raise InputError("Bid/ask spreads must be positive to price band-aware repairs")
        return min(1.0 / surface.n_nodes, spreads_min)

    def repair_l1ba(
        self,
        surface: NormalizedSurface,
        system: ConstraintSystem,
        config: Optional[RepairConfig] = None,
    ) -> RepairResult:
        """
        Band-aware repair.

        Per price, the cost ``f(eps)`` is the maximum of four affine pieces:
        slope ``delta0/bid_spread`` and ``delta0/ask_spread`` inside the band
        and slope 1 outside it (shifted so ``f`` is continuous). Epigraph
        variables ``t >= f(eps)`` make the problem an LP over ``(eps, t)``.
        """
        config = config or RepairConfig(objective=ObjectiveKind.L1BA)
        started = time.perf_counter()
        a, b, c = self._system_arrays(surface, system)
        n = c.size
        ask = np.asarray(surface.ask_spread, dtype=float)
        bid = np.asarray(surface.bid_spread, dtype=float)
        delta0 = self.compute_delta0(surface)
        if config.delta0_override is not None:
            if config.delta0_override > min(ask.min(), bid.min()):
                raise InputError(
                    f"delta0 override {config.delta0_override!r} exceeds the smallest half-spread "
                    f"{min(ask.min(), bid.min())!r}"
                )
            delta0 = float(config.delta0_override)

        eye = sparse.identity(n, format="csr")
        epigraph = sparse.bmat(
            [
                [-eye, -eye],
                [eye, -eye],
                [sparse.diags(-delta0 / bid), -eye],
                [sparse.diags(delta0 / ask), -eye],
                [-a, None],
            ],
            format="csr",
        )
        rhs = np.concatenate([bid - delta0, ask - delta0, np.zeros(n), np.zeros(n), a @ c - b])
        lp = LinearProgram(
            objective=np.concatenate([np.zeros(n), np.ones(n)]),
            a_ub=epigraph,
            b_ub=rhs,
            lower=np.concatenate([np.full(n, -np.inf), np.zeros(n)]),
            upper=np.full(2 * n, np.inf),
        )
        built = time.perf_counter()

        solution = self._solve(lp, config, "l1ba repair")
        solved = time.perf_counter()

        epsilon = solution.x[:n]
        cost = np.maximum.reduce([
            -epsilon - bid + delta0,
            epsilon - ask + delta0,
            -(delta0 / bid) * epsilon,
            (delta0 / ask) * epsilon,
        ])
        return self._result(
            ObjectiveKind.L1BA,
            surface,
            a,
            b,
            c,
            epsilon,
            objective_value=float(cost.sum()),
            solution=solution,
            delta0=delta0,
            build_seconds=built - started,
            solve_seconds=solved - built,
        )

    # ------------------------------------------------------------------
    # Counting and executable arbitrage
    # ------------------------------------------------------------------

    def count_perturbations(
        self,
        epsilon: Sequence[float],
        surface: NormalizedSurface,
        zero_tol: Optional[float] = None,
    ) -> Tuple[int, int]:
        """
        Count perturbed and effectively perturbed prices.

        A price is perturbed when ``|eps| > zero_tol`` and effectively
        perturbed when the move leaves its band by more than ``zero_tol``.
        A move that lands exactly on the band edge stays inside.
        """
        tol = self.settings.zero_tolerance if zero_tol is None else zero_tol
        epsilon = np.asarray(epsilon, dtype=float)
        if epsilon.shape != (surface.n_nodes,):
            raise DimensionMismatch(surface.n_nodes, epsilon.size, "perturbation vector")
        perturbed = int(np.count_nonzero(np.abs(epsilon) > tol))
        effective = int(np.count_nonzero(
            (epsilon > surface.ask_spread + tol) | (epsilon < -surface.bid_spread - tol)
        ))
        return perturbed, effective

    def effective_mask(self, epsilon: Sequence[float], surface: NormalizedSurface) -> np.ndarray:
        tol = self.settings.zero_tolerance
        epsilon = np.asarray(epsilon, dtype=float)
        return (epsilon > surface.ask_spread + tol) | (epsilon < -surface.bid_spread - tol)

    def extract_executable_arbitrage(
        self,
        system: ConstraintSystem,
        surface: NormalizedSurface,
        feas_tol: Optional[float] = None,
    ) -> List[ArbitragePortfolio]:
        """
        Rows violated even when every long leg is bought at the ask and every
        short leg sold at the bid.

        Returns:
            One portfolio per such row, sorted by descending immediate profit
        """
        tol = self.settings.solver_feas_tol if feas_tol is None else feas_tol
        a, b, c = self._system_arrays(surface, system)
        ask = c + surface.ask_spread
        bid = c - surface.bid_spread
        extremal = a.maximum(0) @ ask + a.minimum(0) @ bid
        violated = np.flatnonzero(extremal < b - tol)

        scale = surface.flat_scale
        portfolios = []
        for row_index in violated:
            row = system.rows[row_index]
            legs = []
            for var, coef in row.terms:
                if coef == 0:
                    continue
                price = float(ask[var] if coef > 0 else bid[var])
                legs.append(PortfolioLeg(
                    quote_index=int(surface.source_index[var]),
                    position=1 if coef > 0 else -1,
                    execution_price=price,
                    execution_premium=price * float(scale[var]),
                    weight=abs(float(coef)),
                ))
            portfolios.append(ArbitragePortfolio(
                legs=legs,
                immediate_profit=float(b[row_index] - extremal[row_index]),
                row_index=int(row_index),
                kind=row.kind,
                bound=float(b[row_index]),
                extremal_value=float(extremal[row_index]),
            ))
        portfolios.sort(key=lambda p: (-p.immediate_profit, p.row_index))
        if portfolios:
            logger.info(
                f"Found {len(portfolios)} executable arbitrage portfolios, "
                f"best profit {portfolios[0].immediate_profit:.6g}"
            )
        return portfolios

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _system_arrays(surface: NormalizedSurface, system: ConstraintSystem):
        if system.n_vars != surface.n_nodes:
            raise DimensionMismatch(surface.n_nodes, system.n_vars, "constraint system")
        a, b = system.to_sparse()
        return a, b, np.asarray(surface.flat_prices, dtype=float)

    def _solve(self, lp: LinearProgram, config: RepairConfig, what: str) -> LpSolution:
        options = SolverOptions.from_settings(self.settings, feas_tol=config.feas_tol)
        solution = self.backend.solve(lp, options)
        if not solution.optimal:
            logger.error(f"{what} failed: {solution.diagnostics()}")
        return solution.raise_for_status(what)

    def _result(
        self,
        objective: ObjectiveKind,
        surface: NormalizedSurface,
        a: sparse.csr_matrix,
        b: np.ndarray,
        c: np.ndarray,
        epsilon: np.ndarray,
        objective_value: float,
        solution: LpSolution,
        delta0: Optional[float],
        build_seconds: float,
        solve_seconds: float,
    ) -> RepairResult:
        repaired = c + epsilon
        residuals = a @ repaired - b
        perturbed, effective = self.count_perturbations(epsilon, surface)
        logger.info(
            f"{objective.value} repair: objective {objective_value:.6g}, "
            f"{perturbed} perturbed, {effective} effective, {solution.iterations} iterations "
            f"(build {build_seconds:.3f}s, solve {solve_seconds:.3f}s)"
        )
        return RepairResult(
            objective=objective,
            epsilon=epsilon.tolist(),
            repaired=repaired.tolist(),
            objective_value=objective_value,
            n_perturbed=perturbed,
            n_effective=effective,
            delta0_used=delta0,
            min_residual=float(residuals.min()) if residuals.size else 0.0,
            row_count=int(b.size),
            solver_status=solution.status.value,
            iterations=solution.iterations,
            build_seconds=build_seconds,
            solve_seconds=solve_seconds,
        )


# Global repair service instance
repair_service = RepairService()
