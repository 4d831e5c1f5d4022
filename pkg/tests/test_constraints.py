"""
Tests for the reduced constraint system, violation detection and the exhaustive oracle.
"""
import numpy as np
import pytest

from conftest import random_grid, unit_surface
from staticarb.models.errors import DimensionMismatch, EqualStrikes
from staticarb.models.schemas import ConstraintKind
from staticarb.services.normalizer_service import NormalizerService
from staticarb.utils.pricing import synthetic_quotes


def _random_surface(rng, grid=None, low=0.0, high=0.9):
    expiries, strikes = grid or random_grid(rng)
    mids = [np.sort(rng.uniform(low, high, size=len(ks)))[::-1].tolist() for ks in strikes]
    # shuffle some prices so the surface is usually arbitrageable
    for row in mids:
        if len(row) > 2 and rng.random() < 0.5:
            i, j = rng.choice(len(row), size=2, replace=False)
            row[i], row[j] = row[j], row[i]
    return unit_surface(expiries, strikes, mids)


# ---------------------------------------------------------------------------
# beta
# ---------------------------------------------------------------------------

def test_beta_examples(constraints):
    surface = unit_surface([1.0], [[1.0, 2.0]], [[0.3, 0.4]])
    assert constraints.beta(surface, (0, 1), (0, 2)) == pytest.approx(0.1)
    assert constraints.beta(surface, (0, 1), (0, 0)) == pytest.approx(-0.7)

    intrinsic = unit_surface([1.0], [[1.0]], [[0.0]])
    assert constraints.beta(intrinsic, (0, 0), (0, 1)) == pytest.approx(-1.0)


def test_beta_equal_strikes(constraints, hand_surface):
    with pytest.raises(EqualStrikes):
        constraints.beta(hand_surface, (0, 1), (0, 1))


# ---------------------------------------------------------------------------
# build_constraints
# ---------------------------------------------------------------------------

def test_single_expiry_three_strikes(constraints):
    surface = unit_surface([1.0], [[0.9, 1.0, 1.1]], [[0.15, 0.1, 0.06]])
    system = constraints.build_constraints(surface)
    counts = system.per_category_count

    assert counts[ConstraintKind.OUTRIGHT] == 1
    assert counts[ConstraintKind.VERTICAL_SPREAD_LOWER] + counts[ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO] == 4
    assert counts[ConstraintKind.VERTICAL_BUTTERFLY] == 2
    assert system.row_count == 7


def test_smallest_grid(constraints):
    system = constraints.build_constraints(unit_surface([1.0], [[1.0]], [[0.2]]))
    assert system.row_count == 3
    assert [row.kind for row in system.rows] == [
        ConstraintKind.OUTRIGHT,
        ConstraintKind.VERTICAL_SPREAD_LOWER,
        ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO,
    ]


def test_category_counts_on_random_grids(constraints, rng):
    for _ in range(100):
        surface = _random_surface(rng, random_grid(rng, max_expiries=5, max_strikes=10, min_gap=0.01))
        counts = constraints.build_constraints(surface).per_category_count
        m, n = surface.m, surface.n_nodes
        assert counts[ConstraintKind.OUTRIGHT] == m
        assert counts[ConstraintKind.VERTICAL_SPREAD_LOWER] + counts[ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO] == n + m
        assert counts[ConstraintKind.VERTICAL_BUTTERFLY] == n - m


def test_calendar_spreads_match_equal_strikes(constraints):
    surface = unit_surface([0.5, 1.0], [[0.9, 1.0, 1.1], [0.9, 1.0, 1.1]], [[0.12, 0.05, 0.01], [0.15, 0.08, 0.03]])
    system = constraints.build_constraints(surface)
    assert system.per_category_count[ConstraintKind.CALENDAR_SPREAD] == 3
    assert system.per_category_count[ConstraintKind.CALENDAR_VERTICAL_SPREAD] == 0


def test_rows_have_at_most_three_terms_and_no_augmented_nodes(constraints, rng):
    for _ in range(20):
        surface = _random_surface(rng)
        system = constraints.build_constraints(surface)
        for row in system.rows:
            assert len(row.terms) <= 3
            assert all(0 <= var < surface.n_nodes for var, _ in row.terms)
            augmented = [node for node in row.provenance if surface.is_augmented(node)]
            assert len(row.terms) == len(row.provenance) - len(augmented)


def test_fx_grid_row_count(constraints, bs_surface):
    system = constraints.build_constraints(bs_surface)
    assert system.n_vars == 117
    assert system.row_count <= 4000


def test_rows_are_deterministic(constraints, bs_surface):
    first = constraints.build_constraints(bs_surface)
    second = constraints.build_constraints(bs_surface)
    assert first.rows == second.rows
    kinds = [row.kind for row in first.rows]
    order = list(ConstraintKind)
    assert kinds == sorted(kinds, key=order.index)


def test_kinds_mask_selects_rows(constraints, bs_surface):
    system = constraints.build_constraints(bs_surface)
    kinds = system.kinds
    assert kinds.shape == (system.row_count,)
    for kind, count in system.per_category_count.items():
        assert (kinds == kind.value).sum() == count
    outrights = system.per_category_count[ConstraintKind.OUTRIGHT]
    assert (kinds != ConstraintKind.OUTRIGHT.value).sum() == system.row_count - outrights


def test_rows_sorted_by_anchor_node(constraints, rng):
    spread_kinds = (ConstraintKind.CALENDAR_SPREAD, ConstraintKind.CALENDAR_VERTICAL_SPREAD)
    for _ in range(10):
        system = constraints.build_constraints(_random_surface(rng))
        for kind in spread_kinds:
            # provenance is (later, anchor)
            keys = [(row.provenance[1], row.provenance[0]) for row in system.rows if row.kind == kind]
            assert keys == sorted(keys)
            assert all(anchor[0] < later[0] for anchor, later in keys)
        for kind in (ConstraintKind.CALENDAR_BUTTERFLY_ABSOLUTE, ConstraintKind.CALENDAR_BUTTERFLY_RELATIVE):
            keys = [row.provenance for row in system.rows if row.kind == kind]
            assert keys == sorted(keys)


def test_to_sparse_matches_row_residuals(constraints, bs_surface):
    system = constraints.build_constraints(bs_surface)
    a, b = system.to_sparse()
    c = bs_surface.flat_prices
    assert a.shape == (system.row_count, bs_surface.n_nodes)
    expected = np.array([row.residual(c) for row in system.rows])
    np.testing.assert_allclose(a @ c - b, expected, atol=1e-14)


# ---------------------------------------------------------------------------
# detect_violations
# ---------------------------------------------------------------------------

def test_vertical_spread_violation(constraints, hand_surface):
    system = constraints.build_constraints(hand_surface)
    report = constraints.detect_violations(system, hand_surface.flat_prices)

    assert system.row_count == 5
    assert report.total == 1
    assert report.per_category[ConstraintKind.VERTICAL_SPREAD_LOWER] == 1
    assert report.calendar_fraction == 0.0
    assert report.worst_residual == pytest.approx(-0.1)
    assert report.violated_rows[0].residual < -report.tolerance
    assert report.row_count == system.row_count
    assert report.violated_fraction == pytest.approx(1 / system.row_count)


def test_calendar_spread_violation(constraints):
    surface = unit_surface([0.5, 1.0], [[1.0], [1.0]], [[0.5], [0.4]])
    system = constraints.build_constraints(surface)
    report = constraints.detect_violations(system, surface.flat_prices)

    assert report.total == 1
    assert report.per_category[ConstraintKind.CALENDAR_SPREAD] == 1
    assert report.calendar_fraction == 1.0


def test_total_is_sum_of_categories(constraints, rng):
    for _ in range(20):
        surface = _random_surface(rng)
        system = constraints.build_constraints(surface)
        report = constraints.detect_violations(system, surface.flat_prices)
        assert report.total == sum(report.per_category.values()) == len(report.violated_rows)


@pytest.mark.parametrize("vol", [0.05, 0.2, 0.8])
def test_black_scholes_surfaces_are_clean(constraints, vol):
    quotes, curves = synthetic_quotes(vol=vol, rate=0.03, dividend=0.01)
    surface = NormalizerService().normalize_surface(quotes, curves)
    system = constraints.build_constraints(surface)
    report = constraints.detect_violations(system, surface.flat_prices, tolerance=1e-9)
    assert report.total == 0, report.violated_rows[:5]


def test_detect_dimension_mismatch(constraints, hand_surface):
    system = constraints.build_constraints(hand_surface)
    with pytest.raises(DimensionMismatch):
        constraints.detect_violations(system, [0.1])


def test_scale_covariance(constraints, rng):
    for _ in range(20):
        expiries, strikes = random_grid(rng)
        surface = _random_surface(rng, (expiries, strikes))
        mids = [list(c[1:]) for c in surface.prices]
        scaled = unit_surface(expiries, [[3.0 * k for k in ks] for ks in strikes], mids)

        base_system = constraints.build_constraints(surface)
        scaled_system = constraints.build_constraints(scaled)
        assert base_system.row_count == scaled_system.row_count

        keep = base_system.kinds != ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO.value
        assert (~keep).sum() == base_system.per_category_count.get(ConstraintKind.VERTICAL_SPREAD_UPPER_AT_ZERO, 0)
        base = base_system.residuals(surface.flat_prices)[keep]
        other = scaled_system.residuals(scaled.flat_prices)[keep]
        decided = np.abs(base) > 1e-12
        np.testing.assert_array_equal(np.sign(base[decided]), np.sign(other[decided]))


# ---------------------------------------------------------------------------
# enumerate_full_cousot
# ---------------------------------------------------------------------------

def test_oracle_on_black_scholes(constraints):
    quotes, curves = synthetic_quotes(expiries=(0.1, 0.5, 1.0, 2.0), vol=0.25)
    surface = NormalizerService().normalize_surface(quotes, curves)
    report = constraints.enumerate_full_cousot(surface, surface.flat_prices)
    assert report.total == 0
    assert report.row_count > 0


def test_oracle_on_hand_instance(constraints, hand_surface):
    report = constraints.enumerate_full_cousot(hand_surface, hand_surface.flat_prices)
    assert report.total >= 1
    assert report.per_category[ConstraintKind.VERTICAL_SPREAD_LOWER] >= 1


def test_reduced_violations_imply_oracle_violations(constraints, rng):
    for _ in range(30):
        surface = _random_surface(rng)
        system = constraints.build_constraints(surface)
        reduced = constraints.detect_violations(system, surface.flat_prices, tolerance=1e-9)
        full = constraints.enumerate_full_cousot(surface, surface.flat_prices, tolerance=1e-9)
        if reduced.total:
            assert full.total > 0
        assert full.row_count >= system.row_count


@pytest.mark.slow
def test_repaired_prices_pass_every_test_strategy(constraints, repairs, rng):
    """Prices satisfying the reduced rows satisfy all test spreads and butterflies."""
    for _ in range(200):
        surface = _random_surface(rng, random_grid(rng, min_gap=0.05))
        system = constraints.build_constraints(surface)
        result = repairs.repair_l1(surface, system)

        repaired = np.asarray(result.repaired)
        assert constraints.detect_violations(system, repaired, tolerance=1e-8).total == 0
        report = constraints.enumerate_full_cousot(surface, repaired, tolerance=1e-7)
        assert report.total == 0, report.violated_rows[:5]
