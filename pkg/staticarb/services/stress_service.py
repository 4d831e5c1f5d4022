"""
Stress service: pollute an arbitrage-free surface with log-normal noise,
repair it and measure how much of the clean surface is recovered.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from staticarb.config.settings import Settings, settings as default_settings
from staticarb.models.constraints import ConstraintSystem
from staticarb.models.errors import InputNotArbitrageFree, InvalidNoiseSpec, NonPositivePrice
from staticarb.models.schemas import NoiseSpec, ObjectiveKind, RepairConfig, StressReport
from staticarb.models.surface import NormalizedSurface
from staticarb.services.constraint_service import ConstraintService, constraint_service
from staticarb.services.repair_service import RepairService, repair_service

_UINT64 = (1 << 64) - 1


def make_noise_spec(lam: float, sigma: float, seed: int = 0, trials: int = 1) -> NoiseSpec:
    """Validated ``NoiseSpec``; domain errors surface as ``InvalidNoiseSpec``."""
    try:
        return NoiseSpec(lam=lam, sigma=sigma, seed=seed, trials=trials)
    except ValidationError as exc:
        raise InvalidNoiseSpec(f"Invalid noise parameters: {exc.errors()[0]['msg']}") from exc


def _draws(seed: int, trial: int, n: int) -> np.ndarray:
    """
    Three uniforms per index from a Philox stream keyed by (seed, trial) at
    counter ``index``, so every entry is independent of evaluation order.
    """
    key = np.array([seed & _UINT64, trial & _UINT64], dtype=np.uint64)
    out = np.empty((n, 3))
    for index in range(n):
        bit_generator = np.random.Philox(key=key, counter=np.array([index, 0, 0, 0], dtype=np.uint64))
        out[index] = np.random.Generator(bit_generator).random(3)
    return out


def _pollution_count(n: int, lam: float) -> int:
    # ceil(lam * n), guarded against float products landing just above an integer
    return min(n, math.ceil(lam * n - 1e-12))


def _select(ranks: np.ndarray, count: int) -> np.ndarray:
    return np.sort(np.argsort(ranks, kind="stable")[:count])


@dataclass(frozen=True)
class _TrialOutcome:
    lambda_hat: float
    repair_fraction: float
    log_ratios: List[float]
    dropped: int


class StressService:
    """Runs the synthetic-noise recovery protocol."""

    def __init__(
        self,
        settings: Optional[Settings] = None,
        constraints: Optional[ConstraintService] = None,
        repairs: Optional[RepairService] = None,
    ):
        """Initialize the stress service."""
        self.settings = settings or default_settings
        if settings is None:
            self.constraints = constraints or constraint_service
            self.repairs = repairs or repair_service
        else:
            self.constraints = constraints or ConstraintService(self.settings)
            self.repairs = repairs or RepairService(self.settings, constraints=self.constraints)

    @staticmethod
    def polluted_indices(n: int, spec: NoiseSpec, trial: int) -> np.ndarray:
        """The ``ceil(lambda * n)`` indices polluted in ``trial``, ascending."""
        return _select(_draws(spec.seed, trial, n)[:, 0], _pollution_count(n, spec.lam))

    def inject_noise(self, c: Sequence[float], spec: NoiseSpec, trial: int = 0) -> np.ndarray:
        """
        Multiply ``ceil(lambda N)`` entries by ``exp(zeta)``, ``zeta ~ N(0, sigma^2)``.

        Gaussians come from Box-Muller on the per-index uniforms, so the
        result only depends on (seed, trial).
        """
        c = np.asarray(c, dtype=float)
        if np.any(~np.isfinite(c)) or np.any(c <= 0):
            raise NonPositivePrice("Noise injection requires strictly positive prices")
        n = c.size
        draws = _draws(spec.seed, trial, n)
        polluted = _select(draws[:, 0], _pollution_count(n, spec.lam))

        radius = np.sqrt(-2.0 * np.log1p(-draws[polluted, 1]))
        zeta = spec.sigma * radius * np.cos(2.0 * np.pi * draws[polluted, 2])
        noisy = c.copy()
        noisy[polluted] *= np.exp(zeta)
        return noisy

    def run_stress(
        self,
        surface: NormalizedSurface,
        spec: NoiseSpec,
        objective: ObjectiveKind = ObjectiveKind.L1,
        rescale_bands: bool = False,
        jobs: int = 1,
    ) -> StressReport:
        """
        Run ``spec.trials`` pollute-repair rounds on an arbitrage-free surface.

        Raises:
            InputNotArbitrageFree: the baseline itself violates constraints
        """
        system = self.constraints.build_constraints(surface)
        baseline = self.constraints.detect_violations(system, surface.flat_prices)
        if not baseline.clean:
            raise InputNotArbitrageFree(baseline.total)

        logger.info(
            f"Stress run: lambda={spec.lam:g}, sigma={spec.sigma:g}, trials={spec.trials}, "
            f"objective={objective.value}, N={surface.n_nodes}"
        )

        def trial(index: int) -> _TrialOutcome:
            return self._run_trial(surface, system, spec, index, objective, rescale_bands)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(trial, range(spec.trials)))
        else:
            outcomes = [trial(index) for index in range(spec.trials)]

        lambda_hats = [o.lambda_hat for o in outcomes]
        report = StressReport(
            lam=spec.lam,
            sigma=spec.sigma,
            seed=spec.seed,
            trials=spec.trials,
            objective=objective,
            n_prices=surface.n_nodes,
            polluted_per_trial=_pollution_count(surface.n_nodes, spec.lam),
            lambda_hats=lambda_hats,
            mean_lambda_hat=float(np.mean(lambda_hats)),
            repair_fractions=[o.repair_fraction for o in outcomes],
            log_ratios=[r for o in outcomes for r in o.log_ratios],
            dropped_log_ratios=sum(o.dropped for o in outcomes),
        )
        logger.info(f"Stress run done: mean lambda_hat={report.mean_lambda_hat:.4f}")
        return report

    def run_stress_sweep(
        self,
        surface: NormalizedSurface,
        lambdas: Sequence[float],
        spec: NoiseSpec,
        objective: ObjectiveKind = ObjectiveKind.L1,
        rescale_bands: bool = False,
        jobs: int = 1,
    ) -> List[StressReport]:
        """One ``run_stress`` per pollution fraction, all other parameters from ``spec``."""
        reports = []
        for lam in lambdas:
            swept = make_noise_spec(lam, spec.sigma, spec.seed, spec.trials)
            reports.append(self.run_stress(surface, swept, objective, rescale_bands, jobs))
        return reports

    def _run_trial(
        self,
        surface: NormalizedSurface,
        system: ConstraintSystem,
        spec: NoiseSpec,
        trial: int,
        objective: ObjectiveKind,
        rescale_bands: bool,
    ) -> _TrialOutcome:
        tol = self.settings.zero_tolerance
        clean = np.asarray(surface.flat_prices, dtype=float)
        noisy = self.inject_noise(clean, spec, trial)
        polluted = surface.with_prices(noisy)
        if rescale_bands:
            factor = noisy / clean
            polluted = polluted.with_spreads(surface.ask_spread * factor, surface.bid_spread * factor)

        result = self.repairs.repair(polluted, system, RepairConfig(objective=objective))
        repaired = np.asarray(result.repaired, dtype=float)

        changed = np.abs(repaired - clean) > tol
        moved = np.abs(repaired - noisy) > tol
        positive = changed & (repaired > 0)
        ratios = np.log(repaired[positive] / clean[positive])
        logger.debug(f"Trial {trial}: {int(changed.sum())} prices differ from baseline, {int(moved.sum())} moved")
        return _TrialOutcome(
            lambda_hat=float(changed.mean()),
            repair_fraction=float(moved.mean()),
            log_ratios=ratios.tolist(),
            dropped=int(changed.sum() - positive.sum()),
        )


# Global stress service instance
stress_service = StressService()
