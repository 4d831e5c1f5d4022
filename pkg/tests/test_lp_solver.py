"""
Tests for the bundled simplex solver.
"""
import itertools

import numpy as np
import pytest
from scipy import sparse

from staticarb.models.errors import InputError, SolverFailure
from staticarb.services.lp_solver import (
    BundledSimplexBackend,
    LinearProgram,
    LpStatus,
    ScipyHighsBackend,
    SolverForm,
    SolverOptions,
    get_backend,
    solve,
)

FORMS = [SolverForm.STANDARD, SolverForm.DUAL, SolverForm.AUTO]


def _lp(c, g, h, lower=0.0, upper=np.inf):
    return LinearProgram(objective=np.asarray(c, float), a_ub=sparse.csr_matrix(np.asarray(g, float)),
                         b_ub=np.asarray(h, float), lower=lower, upper=upper)


def _vertex_oracle(c, g, h, lower, upper, tol=1e-9, chunk=100_000):
    """Best objective over all basic feasible solutions of the box-constrained polytope."""
    n = len(c)
    rows = [(g[i], h[i]) for i in range(len(h))]
    rows += [(-np.eye(n)[j], -lower[j]) for j in range(n)]
    rows += [(np.eye(n)[j], upper[j]) for j in range(n)]
    a_all = np.array([r[0] for r in rows])
    b_all = np.array([r[1] for r in rows])

    best = np.inf
    subsets = itertools.combinations(range(len(rows)), n)
    while True:
        block = np.array(list(itertools.islice(subsets, chunk)), dtype=np.int64)
        if not block.size:
            return best
        mats = a_all[block]
        regular = np.abs(np.linalg.det(mats)) > 1e-10
        if not regular.any():
            continue
        points = np.linalg.solve(mats[regular], b_all[block][regular][..., None])[..., 0]
        feasible = np.all(points @ a_all.T <= b_all + tol, axis=1)
        if feasible.any():
            best = min(best, float(np.min(points[feasible] @ c)))


@pytest.mark.parametrize("form", FORMS)
def test_single_variable(form):
    solution = solve(_lp([1.0], [[-1.0]], [-3.0]), SolverOptions(form=form))
    assert solution.status == LpStatus.OPTIMAL
    assert solution.x[0] == pytest.approx(3.0)
    assert solution.objective_value == pytest.approx(3.0)


@pytest.mark.parametrize("form", FORMS)
def test_degenerate_optimum(form):
    solution = solve(_lp([1.0, 1.0], [[-1.0, -1.0]], [-1.0]), SolverOptions(form=form))
    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective_value == pytest.approx(1.0)
    assert solution.max_violation <= 1e-9


@pytest.mark.parametrize("form", [SolverForm.STANDARD, SolverForm.DUAL])
def test_free_and_upper_bounded_variables(form):
    # min -x - 2y  s.t. x + y <= 4, x free, y <= 3, x >= -inf
    lp = _lp([-1.0, -2.0], [[1.0, 1.0], [-1.0, 0.0]], [4.0, 10.0], lower=[-np.inf, 0.0], upper=[np.inf, 3.0])
    solution = solve(lp, SolverOptions(form=form))
    assert solution.status == LpStatus.OPTIMAL
    np.testing.assert_allclose(solution.x, [1.0, 3.0], atol=1e-9)
    assert solution.objective_value == pytest.approx(-7.0)


@pytest.mark.parametrize("form", [SolverForm.STANDARD, SolverForm.DUAL])
def test_infeasible(form):
    lp = _lp([1.0], [[1.0], [-1.0]], [1.0, -2.0])
    assert solve(lp, SolverOptions(form=form)).status == LpStatus.INFEASIBLE


@pytest.mark.parametrize("form", [SolverForm.STANDARD, SolverForm.DUAL])
def test_unbounded(form):
    lp = _lp([-1.0, 0.0], [[0.0, 1.0]], [1.0])
    assert solve(lp, SolverOptions(form=form)).status == LpStatus.UNBOUNDED


def test_iteration_limit_flags_solution():
    lp = _lp([-1.0, -1.0], [[1.0, 2.0], [2.0, 1.0]], [4.0, 4.0])
    solution = solve(lp, SolverOptions(form=SolverForm.STANDARD, max_iters=1))
    assert solution.status == LpStatus.ITERATION_LIMIT
    with pytest.raises(SolverFailure) as excinfo:
        solution.raise_for_status()
    assert excinfo.value.diagnostics["status"] == "IterationLimit"


def test_invalid_programs_rejected():
    with pytest.raises(InputError):
        _lp([1.0, np.nan], [[1.0, 1.0]], [1.0])
    with pytest.raises(InputError):
        _lp([1.0], [[1.0, 1.0]], [1.0])
    with pytest.raises(InputError):
        _lp([1.0], [[1.0]], [1.0], lower=2.0, upper=1.0)


@pytest.mark.slow
def test_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        rows = int(rng.integers(1, 13))
        g = rng.normal(size=(rows, n))
        g[rng.random(size=g.shape) < 0.3] = 0.0
        lower = rng.uniform(-3.0, 0.0, size=n)
        upper = lower + rng.uniform(0.5, 4.0, size=n)
        interior = rng.uniform(lower, upper)
        h = g @ interior + rng.uniform(0.0, 1.0, size=rows)
        c = rng.normal(size=n)

        expected = _vertex_oracle(c, g, h, lower, upper)
        for form in FORMS:
            solution = solve(_lp(c, g, h, lower, upper), SolverOptions(form=form))
            assert solution.status == LpStatus.OPTIMAL
            assert abs(solution.objective_value - expected) <= 1e-8 * max(1.0, abs(expected))
            assert solution.max_violation <= 1e-8


def test_deterministic():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(30, 6))
    lp = _lp(rng.uniform(0.1, 1.0, size=6), g, g @ rng.uniform(0, 1, size=6) + 0.1, upper=5.0)
    first = solve(lp)
    second = solve(lp)
    assert first.status == second.status
    assert first.objective_value == second.objective_value
    np.testing.assert_array_equal(first.x, second.x)


@pytest.mark.parametrize("form", [SolverForm.STANDARD, SolverForm.DUAL])
def test_degenerate_transportation(form):
    """Balanced transportation problem with equalities split into inequality pairs."""
    supply = np.array([10.0, 10.0, 10.0, 10.0])
    demand = np.array([10.0, 10.0, 10.0, 10.0])
    cost = np.array([[4, 4, 4, 4], [4, 4, 4, 4], [4, 4, 4, 4], [4, 4, 4, 4]], dtype=float)
    cost[np.arange(4), np.arange(4)] = 1.0
    n_s, n_d = len(supply), len(demand)

    rows, rhs = [], []
    for i in range(n_s):
        row = np.zeros(n_s * n_d)
        row[i * n_d:(i + 1) * n_d] = 1.0
        rows += [row, -row]
        rhs += [supply[i], -supply[i]]
    for j in range(n_d):
        row = np.zeros(n_s * n_d)
        row[j::n_d] = 1.0
        rows += [row, -row]
        rhs += [demand[j], -demand[j]]

    lp = _lp(cost.ravel(), rows, rhs)
    solution = solve(lp, SolverOptions(form=form, stall_limit=2))
    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective_value == pytest.approx(40.0)
    assert solution.max_violation <= 1e-9


def test_agrees_with_highs():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n, rows = 6, 40
        g = rng.normal(size=(rows, n))
        h = g @ rng.uniform(0, 1, size=n) + rng.uniform(0.0, 0.5, size=rows)
        lp = _lp(rng.uniform(-1.0, 1.0, size=n), g, h, lower=0.0, upper=2.0)
        ours = BundledSimplexBackend().solve(lp, SolverOptions())
        theirs = ScipyHighsBackend().solve(lp, SolverOptions())
        assert ours.status == theirs.status == LpStatus.OPTIMAL
        assert ours.objective_value == pytest.approx(theirs.objective_value, abs=1e-7)


def test_get_backend():
    assert get_backend("simplex").name == "simplex"
    assert get_backend("highs").name == "highs"
    with pytest.raises(InputError):
        get_backend("cplex")
