import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from lrmhedge import (B_pure, B_term, FilterState, HazardModel, PortfolioPath, discrete_oracle, p_hat,
                      run_filter, simulate_hedges, solve_pure_endowment, solve_term, solve_term_tables)
from lrmhedge.hazard import sample_killed_chains
from scenarios import mean_se, one_state, ref_hazard, ref_scenario, within

GRID = np.linspace(0.0, 5.0, 1001)


def exact_m(model, tau, terminal):
    """Constant-hazard closed form ``expm((Q - diag lambda) tau) @ terminal``."""
    return expm((model.generator - np.diag(model.hazard_values[0])) * tau) @ terminal


# --- pure endowment -------------------------------------------------------------

def test_one_state_pure_endowment():
    m = one_state(0.05, 10.0)
    table = solve_pure_endowment(m, np.linspace(0, 10, 101))
    assert table.m[0, 0] == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert np.all(table.m[-1] == 1.0)


def test_pure_endowment_matches_matrix_exponential():
    m = ref_hazard()
    table = solve_pure_endowment(m, GRID)
    for i in (0, 250, 700):
        np.testing.assert_allclose(table.m[i], exact_m(m, 5.0 - GRID[i], np.ones(2)), rtol=1e-11)


def test_pure_endowment_table_invariants():
    m = HazardModel([[-1.0, 1.0], [2.0, -2.0]], [0.0, 2.0], [[0.02, 0.2], [0.1, 0.4]], 5.0, [0.5, 0.5])
    table = solve_pure_endowment(m, GRID)
    assert np.all(table.m > 0) and np.all(table.m <= 1)
    assert np.all(table.m[-1] == 1.0)
    # monotone in t only for time-homogeneous hazards
    assert np.all(np.diff(solve_pure_endowment(ref_hazard(), GRID).m, axis=0) >= 0)


@pytest.mark.parametrize("x", [0, 1])
def test_pure_endowment_matches_monte_carlo(x):
    m = ref_hazard()
    table = solve_pure_endowment(m, GRID)
    start = np.eye(2)[x]
    _, integral = sample_killed_chains(m, start, 0.0, 5.0, 100_000, 40 + x)
    est, se = mean_se(np.exp(-integral))
    assert within(est, se, table.m[0, x])


def test_pure_endowment_grid_must_end_at_horizon():
    with pytest.raises(ValueError):
        solve_pure_endowment(ref_hazard(), np.linspace(0, 4, 11))


# --- term kernel ----------------------------------------------------------------

def test_one_state_term():
    m = one_state(0.05, 10.0)
    table = solve_term(m, 10.0, np.linspace(0, 10, 101))
    assert table.m[0, 0] == pytest.approx(0.05 * math.exp(-0.5), rel=1e-12)
    assert table.m[-1, 0] == 0.05


@pytest.mark.parametrize("u", [1.0, 2.5, 5.0])
def test_term_terminal_and_monte_carlo(u):
    m = ref_hazard()
    table = solve_term(m, u, GRID)
    np.testing.assert_array_equal(table.m[-1], m.rate(u))
    np.testing.assert_allclose(table.m[0], exact_m(m, u, m.rate(u)), rtol=1e-11)
    end, integral = sample_killed_chains(m, m.initial_dist, 0.0, u, 100_000, 1000 + int(u * 10))
    est, se = mean_se(m.rate(u)[end] * np.exp(-integral))
    assert within(est, se, float(m.initial_dist @ table.m[0]))


def test_term_tables_agree_with_single_solves():
    m = ref_hazard()
    nodes = GRID[[200, 500, 1000]]
    tables = solve_term_tables(m, nodes, GRID)
    for q, u in enumerate(nodes):
        single = solve_term(m, u, GRID)
        np.testing.assert_allclose(tables.table(q).m, single.m, rtol=1e-13)
        assert np.all(np.isnan(tables.values[GRID > u + 1e-12, q]))


@pytest.mark.parametrize("t", [0.0, 0.0012, 1.23456, 2.5, 4.9991])
def test_tables_between_grid_rows_match_closed_form(t):
    m = ref_hazard()
    coarse = np.linspace(0.0, 5.0, 101)
    table = solve_pure_endowment(m, coarse)
    np.testing.assert_allclose(table.at(t), exact_m(m, 5.0 - t, np.ones(2)), rtol=1e-12)
    np.testing.assert_allclose(table.at([t, t]), np.vstack([table.at(t)] * 2), rtol=0)
    tables = solve_term_tables(m, coarse[[60, 100]], coarse)
    kern = tables.at(t)
    for q, u in enumerate(coarse[[60, 100]]):
        if u < t:
            assert np.all(np.isnan(kern[q]))
            continue
        assert kern[q] == pytest.approx(exact_m(m, u - t, m.rate(u)), rel=1e-12)
        assert tables.table(q).at(t) == pytest.approx(kern[q], rel=1e-15)
    # linear interpolation remains available for tables without a model
    bare = type(table)(table.grid, table.m, table.kind)
    assert bare.at(0.025) == pytest.approx(0.5 * (table.m[0] + table.m[1]), rel=1e-15)


def test_term_rejects_off_grid_node():
    with pytest.raises(ValueError):
        solve_term_tables(ref_hazard(), [1.0001], GRID)


def test_table_csv(tmp_path):
    table = solve_pure_endowment(ref_hazard(), np.linspace(0, 5, 11))
    table.to_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["time", "m_0", "m_1"] and len(rows) == 12


# --- filtered projections -------------------------------------------------------

def test_p_hat_one_state_ignores_deaths():
    m = one_state(0.05, 10.0, l_a=5)
    table = solve_pure_endowment(m, np.linspace(0, 10, 1001))
    traj = run_filter(m, PortfolioPath(5, [1.0, 2.5]), table.grid)
    assert p_hat(traj.at(4.0), table) == pytest.approx(math.exp(-0.05 * 6.0), rel=1e-12)


def test_p_hat_point_mass():
    m = ref_hazard()
    table = solve_pure_endowment(m, GRID)
    s = FilterState.initial(m, time=1.0, pi=[0.0, 1.0])
    assert p_hat(s, table) == table.at(1.0)[1]


def test_p_hat_matches_oracle_filter():
    m = ref_hazard()
    deaths = PortfolioPath(10, [0.3, 0.9, 1.1, 2.0])
    table = solve_pure_endowment(m, GRID)
    traj = run_filter(m, deaths, GRID)
    oracle = discrete_oracle(m, deaths, 5e-4, record=[2.5])
    expected = float(oracle.pi[0] @ exact_m(m, 2.5, np.ones(2)))
    assert p_hat(traj.at(2.5), table) == pytest.approx(expected, abs=1e-3)


def test_B_examples():
    m = one_state(0.05, 10.0, l_a=10)
    table = solve_pure_endowment(m, np.linspace(0, 10, 101))
    assert B_pure(FilterState.initial(m, n_dead=2), table, 10) == pytest.approx(8 * math.exp(-0.5), rel=1e-12)
    assert B_pure(FilterState.initial(m, n_dead=2), table, 10) == pytest.approx(4.852, abs=5e-4)
    assert B_pure(FilterState.initial(m, n_dead=10), table, 10) == 0.0

    m5 = one_state(0.05, 2.0, l_a=5)
    tu = solve_term(m5, 2.0, np.linspace(0, 2, 101))
    assert B_term(FilterState.initial(m5, n_dead=1), tu, 5) == pytest.approx(4 * 0.05 * math.exp(-0.1), rel=1e-12)
    assert B_term(FilterState.initial(m5, n_dead=1), tu, 5) == pytest.approx(0.1810, abs=5e-5)
    assert B_term(FilterState.initial(m5, n_dead=5), tu, 5) == 0.0


def test_B_term_rejects_time_past_payment():
    m = ref_hazard()
    tu = solve_term(m, 1.0, GRID)
    with pytest.raises(ValueError):
        B_term(FilterState.initial(m, time=1.5), tu, 10)


def _resimulate(model, state, t, u, n, seed):
    """Survivors to ``u`` and the hazard at ``u`` for futures drawn from ``state``."""
    end, integral = sample_killed_chains(model, state.pi, t, u, n, seed)
    rng = np.random.default_rng(seed + 1)
    alive = rng.binomial(model.l_a - state.n_dead, np.exp(-integral))
    return alive, model.rate(u)[end]


def test_B_pure_matches_resimulation():
    m = ref_hazard()
    table = solve_pure_endowment(m, GRID)
    traj = run_filter(m, PortfolioPath(10, [0.5, 0.6, 1.4]), GRID)
    s = traj.at(2.0)
    alive, _ = _resimulate(m, s, 2.0, 5.0, 100_000, 77)
    est, se = mean_se(alive)
    assert within(est, se, B_pure(s, table, 10))


def test_B_term_matches_resimulation():
    m = ref_hazard()
    traj = run_filter(m, PortfolioPath(10, [0.5, 0.6, 1.4]), GRID)
    s = traj.at(2.0)
    tu = solve_term(m, 4.0, GRID)
    alive, lam = _resimulate(m, s, 2.0, 4.0, 100_000, 78)
    est, se = mean_se(alive * lam)
    assert within(est, se, B_term(s, tu, 10))


def test_B_tower_identity_at_zero():
    m = ref_hazard()
    table = solve_pure_endowment(m, GRID)
    assert B_pure(FilterState.initial(m), table, 10) == 10 * float(m.initial_dist @ table.m[0])


def test_B_is_a_martingale_along_scenarios():
    sc = ref_scenario(grid_steps=500)
    ens = simulate_hedges(sc, 10_000, 2024)
    agg = ens.aggregates
    b0 = agg["b_mean"][0]
    for i in (100, 250, 400, 500):
        assert abs(agg["b_mean"][i] - b0) <= 3 * agg["b_std"][i] / math.sqrt(10_000)
    # at T the projection is the realized survivor count
    assert agg["b_mean"][-1] == pytest.approx(10 - ens.n_dead_T.mean(), rel=1e-12)


@settings(max_examples=100)
@given(st.floats(0.0, 1.0), st.floats(0.0, 5.0))
def test_p_hat_dominance_and_range(p0, t):
    m = ref_hazard()
    table = solve_pure_endowment(m, np.linspace(0, 5, 201))
    s = FilterState.initial(m, time=t, pi=[p0, 1 - p0] if 0 < p0 < 1 else [0.5, 0.5])
    v = p_hat(s, table)
    row = table.at(t)
    assert row.min() - 1e-15 <= v <= row.max() + 1e-15
    assert 0 < v <= 1
    assert (v == 1.0) == (t == 5.0)
