"""
Constraint service: builds the reduced static-arbitrage system, detects
violations and runs the exhaustive test-strategy check.

Every test strategy is linearized by multiplying through by its positive
strike gaps, so a vertical butterfly on nodes l < m < r becomes

    (c_r - c_m)(k_m - k_l) - (c_m - c_l)(k_r - k_m) >= 0

and the matrix ``A`` only depends on strikes and expiries.
"""
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from staticarb.config.settings import Settings, settings as default_settings
from staticarb.models.constraints import ConstraintRow, ConstraintSystem
from staticarb.models.errors import DimensionMismatch, EqualStrikes
from staticarb.models.schemas import ConstraintKind, RowViolation, ViolationReport
from staticarb.models.surface import Node, NormalizedSurface

INF = float("inf")


class ConstraintService:
    """Builds ``A c >= b`` for a normalized surface and evaluates it."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the constraint service with tolerance settings."""
        self.settings = settings or default_settings

    # ------------------------------------------------------------------
    # Slopes
    # ------------------------------------------------------------------

    @staticmethod
    def beta(surface: NormalizedSurface, node_a: Node, node_b: Node) -> float:
        """Slope of the line through two nodes in the (k, c) plane."""
        dk = surface.strike(node_a) - surface.strike(node_b)
        if dk == 0:
            raise EqualStrikes(f"Nodes {node_a} and {node_b} share strike {surface.strike(node_a)!r}")
        return (surface.price(node_a) - surface.price(node_b)) / dk

    # ------------------------------------------------------------------
    # Reduced system
    # ------------------------------------------------------------------

    def build_constraints(self, surface: NormalizedSurface) -> ConstraintSystem:
        """
        Emit the reduced constraint rows, category by category.

        Args:
            surface: Augmented, sorted normalized surface

        Returns:
            ConstraintSystem with rows ordered C1, C2, C3, C4, C5, C6.1, C6.2
        """
        builder = _RowBuilder(surface, self.settings.strike_match_tolerance)
        builder.outrights()
        builder.vertical_spreads()
        builder.vertical_butterflies()
        builder.calendar_spreads()
        builder.calendar_vertical_spreads()
        builder.calendar_butterflies_absolute()
        builder.calendar_butterflies_relative()
        rows = builder.finish()

        counts = Counter(row.kind for row in rows)
        per_category = {kind: counts.get(kind, 0) for kind in ConstraintKind}
        system = ConstraintSystem(rows=tuple(rows), n_vars=surface.n_nodes, per_category_count=per_category)
        logger.info(
            f"Built {system.row_count} constraints for N={surface.n_nodes}: "
            + ", ".join(f"{kind.value}={count}" for kind, count in per_category.items())
        )
        return system

    # ------------------------------------------------------------------
    # Detection
    # ------------------------------------------------------------------

    def detect_violations(
        self,
        system: ConstraintSystem,
        c: Sequence[float],
        tolerance: Optional[float] = None,
    ) -> ViolationReport:
        """
        Flag every row whose residual is below ``-tolerance``.

        Args:
            system: Constraint system of the surface
            c: Price vector over non-augmented nodes
            tolerance: Violation threshold, settings default when omitted

        Returns:
            ViolationReport with per-category counts and worst residual
        """
        tol = self.settings.detection_tolerance if tolerance is None else tolerance
        c = np.asarray(c, dtype=float)
        if c.shape != (system.n_vars,):
            raise DimensionMismatch(system.n_vars, c.size, "price vector")
        residuals = system.residuals(c)
        violated = np.flatnonzero(residuals < -tol)
        kinds = [system.rows[r].kind for r in violated]
        report = _report(
            kinds=kinds,
            rows=violated,
            residuals=residuals[violated],
            row_count=system.row_count,
            worst=float(residuals.min()) if residuals.size else 0.0,
            tolerance=tol,
        )
        logger.debug(f"Detected {report.total} violations out of {system.row_count} rows")
        return report

    # ------------------------------------------------------------------
    # Exhaustive oracle
    # ------------------------------------------------------------------

    def enumerate_full_cousot(
        self,
        surface: NormalizedSurface,
        c: Sequence[float],
        tolerance: Optional[float] = None,
    ) -> ViolationReport:
        """
        Check every test spread and test butterfly on the surface.

        Cost is cubic in the node count; intended for N up to about 100.
        Strategy indices in the report are ordinals of the enumeration.
        """
        tol = self.settings.oracle_tolerance if tolerance is None else tolerance
        c = np.asarray(c, dtype=float)
        if c.shape != (surface.n_nodes,):
            raise DimensionMismatch(surface.n_nodes, c.size, "price vector")
        priced = surface.with_prices(c)

        k = np.concatenate(priced.strikes)
        p = np.concatenate(priced.prices)
        e = np.concatenate([np.full(len(ks), i) for i, ks in enumerate(priced.strikes)])
        aug = np.concatenate([np.arange(len(ks)) == 0 for ks in priced.strikes])
        match_tol = self.settings.strike_match_tolerance

        kinds: List[ConstraintKind] = []
        ordinals: List[int] = []
        values: List[float] = []
        checked = 0

        def collect(kind: ConstraintKind, residual: np.ndarray, mask: np.ndarray) -> None:
            nonlocal checked
            flat_res = residual[mask]
            bad = np.flatnonzero(flat_res < -tol)
            kinds.extend([kind] * bad.size)
            ordinals.extend((checked + bad).tolist())
            values.extend(flat_res[bad].tolist())
            checked += flat_res.size

        # outrights
        collect(ConstraintKind.OUTRIGHT, p, ~aug)

        # spreads: rows are the shorter-or-equal expiry leg (higher strike)
        dk = k[:, None] - k[None, :]
        dc = p[None, :] - p[:, None]  # c_q - c_p
        not_both_aug = ~(aug[:, None] & aug[None, :])
        same = e[:, None] == e[None, :]
        later = e[:, None] < e[None, :]
        vertical = same & (dk > 0)
        collect(ConstraintKind.VERTICAL_SPREAD_LOWER, dc, vertical)
        collect(ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO, dk - dc, vertical)
        calendar = later & (np.abs(dk) <= match_tol) & not_both_aug
        collect(ConstraintKind.CALENDAR_SPREAD, dc, calendar)
        collect(ConstraintKind.CALENDAR_VERTICAL_SPREAD, dc, later & (dk > match_tol))

        # butterflies: middle node has the shortest expiry of the three
        for mid in range(len(k)):
            if aug[mid]:
                continue
            eligible = e >= e[mid]
            left = np.flatnonzero(eligible & (k < k[mid]))
            right = np.flatnonzero(eligible & (k > k[mid]))
            if not left.size or not right.size:
                continue
            residual = (
                (p[right][None, :] - p[mid]) * (k[mid] - k[left][:, None])
                - (p[mid] - p[left][:, None]) * (k[right][None, :] - k[mid])
            )
            left_same = (e[left] == e[mid])[:, None]
            right_same = (e[right] == e[mid])[None, :]
            both = left_same & right_same
            one = left_same ^ right_same
            collect(ConstraintKind.VERTICAL_BUTTERFLY, residual, both)
            collect(ConstraintKind.CALENDAR_BUTTERFLY_ABSOLUTE, residual, one)
            collect(ConstraintKind.CALENDAR_BUTTERFLY_RELATIVE, residual, ~(both | one))

        worst = min(values) if values else 0.0
        return _report(
            kinds=kinds,
            rows=np.array(ordinals, dtype=np.int64),
            residuals=np.array(values, dtype=float),
            row_count=checked,
            worst=worst,
            tolerance=tol,
        )


class _RowBuilder:
    """Accumulates rows category by category."""

    def __init__(self, surface: NormalizedSurface, match_tol: float):
        self.surface = surface
        self.match_tol = match_tol
        self._pending: Dict[ConstraintKind, List[Tuple[Tuple[Node, ...], ConstraintRow]]] = {
            kind: [] for kind in ConstraintKind
        }

    # -- row construction -------------------------------------------------

    def _row(
        self,
        kind: ConstraintKind,
        weighted: Iterable[Tuple[Node, float]],
        rhs: float = 0.0,
        anchor: Optional[Node] = None,
    ) -> None:
        terms, bound, provenance = [], rhs, []
        for node, coef in weighted:
            provenance.append(node)
            var = self.surface.var_index(node)
            if var is None:
                bound -= coef  # augmented node price is 1
            else:
                terms.append((var, coef))
        row = ConstraintRow(kind=kind, terms=tuple(terms), bound=bound, provenance=tuple(provenance))
        # rows sort by anchor node first, then by the remaining nodes
        key = (anchor if anchor is not None else row.provenance[0],) + row.provenance
        self._pending[kind].append((key, row))

    def _spread(self, kind: ConstraintKind, high: Node, low: Node, anchor: Optional[Node] = None) -> None:
        """c[high] - c[low] >= 0."""
        self._row(kind, ((high, 1.0), (low, -1.0)), anchor=anchor)

    def _butterfly(self, kind: ConstraintKind, mid: Node, left: Node, right: Node) -> None:
        s = self.surface
        kl, km, kr = s.strike(left), s.strike(mid), s.strike(right)
        self._row(kind, ((mid, -(kr - kl)), (left, kr - km), (right, km - kl)))

    def finish(self) -> List[ConstraintRow]:
        rows: List[ConstraintRow] = []
        for kind in ConstraintKind:
            rows.extend(row for _, row in sorted(self._pending[kind], key=lambda item: item[0]))
        return rows

    # -- neighbourhoods -----------------------------------------------------

    def _between(self, i_star: int, low: float, high: float) -> List[Node]:
        """Nodes of expiries after ``i_star`` with low < k < high (strict, beyond matching tolerance)."""
        found: List[Node] = []
        for i in range(i_star + 1, self.surface.m):
            k = self.surface.strikes[i]
            start = max(1, int(np.searchsorted(k, low + self.match_tol, side="right")))
            stop = len(k) if high == INF else int(np.searchsorted(k, high - self.match_tol, side="left"))
            found.extend((i, j) for j in range(start, stop))
        return found

    # -- categories ------------------------------------------------------------

    def outrights(self) -> None:
        for i, n in enumerate(self.surface.counts):
            self._row(ConstraintKind.OUTRIGHT, (((i, int(n)), 1.0),))

    def vertical_spreads(self) -> None:
        s = self.surface
        for i, n in enumerate(s.counts):
            for j in range(1, int(n) + 1):
                self._spread(ConstraintKind.VERTICAL_SPREAD_LOWER, (i, j - 1), (i, j))
            # (c_0 - c_1) / k_1 <= 1
            self._row(
                ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO,
                (((i, 1), 1.0), ((i, 0), -1.0)),
                rhs=-s.strike((i, 1)),
            )

    def vertical_butterflies(self) -> None:
        for i, n in enumerate(self.surface.counts):
            for j in range(1, int(n)):
                self._butterfly(ConstraintKind.VERTICAL_BUTTERFLY, (i, j), (i, j - 1), (i, j + 1))

    def calendar_spreads(self) -> None:
        s = self.surface
        for i1 in range(s.m):
            for i2 in range(i1 + 1, s.m):
                k2 = s.strikes[i2]
                for j1, k in enumerate(s.strikes[i1]):
                    lo = int(np.searchsorted(k2, k - self.match_tol, side="left"))
                    hi = int(np.searchsorted(k2, k + self.match_tol, side="right"))
                    for j2 in range(lo, hi):
                        if j1 == 0 and j2 == 0:
                            continue
                        self._spread(ConstraintKind.CALENDAR_SPREAD, (i2, j2), (i1, j1), anchor=(i1, j1))

    def calendar_vertical_spreads(self) -> None:
        s = self.surface
        for i_star, n in enumerate(s.counts):
            k = s.strikes[i_star]
            for j_star in range(1, int(n) + 1):
                for node in self._between(i_star, k[j_star - 1], k[j_star]):
                    anchor = (i_star, j_star)
                    self._spread(ConstraintKind.CALENDAR_VERTICAL_SPREAD, node, anchor, anchor=anchor)

    def calendar_butterflies_absolute(self) -> None:
        s = self.surface
        kind = ConstraintKind.CALENDAR_BUTTERFLY_ABSOLUTE
        for i_star, n in enumerate(s.counts):
            n = int(n)
            k = s.strikes[i_star]
            # later node as the left wing
            for j_star in range(1, n):
                for node in self._between(i_star, k[j_star - 1], k[j_star]):
                    self._butterfly(kind, (i_star, j_star), node, (i_star, j_star + 1))
            # later node as the right wing
            for j_star in range(2, n + 1):
                for node in self._between(i_star, k[j_star - 1], k[j_star]):
                    self._butterfly(kind, (i_star, j_star - 1), (i_star, j_star - 2), node)
            # later node as the right wing, beyond the last strike
            for node in self._between(i_star, k[n], INF):
                self._butterfly(kind, (i_star, n), (i_star, n - 1), node)

    def calendar_butterflies_relative(self) -> None:
        s = self.surface
        kind = ConstraintKind.CALENDAR_BUTTERFLY_RELATIVE
        for i_star, n in enumerate(s.counts):
            n = int(n)
            k = s.strikes[i_star]
            for j_star in range(1, n):
                lefts = self._between(i_star, k[j_star - 1], k[j_star])
                rights = self._between(i_star, k[j_star], k[j_star + 1])
                for left in lefts:
                    for right in rights:
                        self._butterfly(kind, (i_star, j_star), left, right)
            lefts = self._between(i_star, k[n - 1], k[n])
            rights = self._between(i_star, k[n], INF)
            for left in lefts:
                for right in rights:
                    self._butterfly(kind, (i_star, n), left, right)


def _report(
    kinds: Sequence[ConstraintKind],
    rows: np.ndarray,
    residuals: np.ndarray,
    row_count: int,
    worst: float,
    tolerance: float,
) -> ViolationReport:
    total = len(kinds)
    counts = Counter(kinds)
    calendar = sum(count for kind, count in counts.items() if kind.is_calendar)
    return ViolationReport(
        total=total,
        per_category={kind: counts.get(kind, 0) for kind in ConstraintKind},
        worst_residual=worst,
        violated_rows=[
            RowViolation(row=int(r), kind=kind, residual=float(v))
            for r, kind, v in zip(rows, kinds, residuals)
        ],
        calendar_fraction=calendar / total if total else 0.0,
        row_count=row_count,
        violated_fraction=total / row_count if row_count else 0.0,
        tolerance=tolerance,
    )


# Global constraint service instance
constraint_service = ConstraintService()
