"""QP engine against the closed-form oracles and its own KKT verifier."""

import dataclasses

import numpy as np
import pytest

from tepshare import analytic
from tepshare.equilibrium import (ExpansionMask, ToleranceSet, assemble,
                                  congestion_rent, read_prices_csv,
                                  read_solution_csv, solve, verify_kkt,
                                  write_prices_csv, write_solution_csv)
from tepshare.model import Generator, Network, Node, Renewable, ScenarioSet

from conftest import random_instance
from oracles import grid_search_objective

TOL = ToleranceSet()


def solve_instance(net, scen, mask=None):
    problem = assemble(net, scen, mask)
    return solve(problem, TOL)


def test_two_node_autarky():
    net, scen = analytic.two_node_network()
    mask = ExpansionMask().denying(lines=["tie"])
    sol = solve_instance(net, scen, mask)
    assert sol.pi[0, 0, 0] == pytest.approx(22.0 / 3.0, abs=1e-6)
    assert sol.pi[0, 1, 0] == pytest.approx(4.0, abs=1e-6)
    assert sol.f[0, 0, 0] == pytest.approx(0.0, abs=1e-8)
    assert sol.x[0] == 0.0


def test_two_node_unconstrained():
    net, scen = analytic.two_node_network(line_inv_cost=0.0, line_x_max=10.0)
    sol = solve_instance(net, scen)
    assert sol.pi[0, 0, 0] == pytest.approx(17.0 / 3.0, abs=1e-6)
    assert sol.pi[0, 1, 0] == pytest.approx(17.0 / 3.0, abs=1e-6)
    assert sol.f[0, 0, 0] == pytest.approx(2.5, abs=1e-6)


@pytest.mark.parametrize("cost", [1.0, 1.3])
def test_two_node_optimal_investment(cost):
    net, scen = analytic.two_node_network(line_inv_cost=cost)
    sol = solve_instance(net, scen)
    oracle = analytic.solve_two_node(**analytic.fig_two_curves(),
                                     marginal_cost=cost)
    assert sol.x[0] == pytest.approx(oracle.optimal_capacity, abs=1e-5)
    gap = sol.pi[0, 0, 0] - sol.pi[0, 1, 0]
    assert gap == pytest.approx(cost, abs=1e-5)
    rent = congestion_rent(sol, "tie", net)
    assert rent.expected == pytest.approx(cost * sol.x[0], abs=1e-5)
    assert rent.expected == pytest.approx(oracle.congestion_rent, abs=1e-5)


def test_two_node_matches_oracle_prices_everywhere():
    # QP and closed form agree on prices, flow and welfare to 1e-6
    for cost in (0.5, 2.0):
        net, scen = analytic.two_node_network(line_inv_cost=cost)
        sol = solve_instance(net, scen)
        oracle = analytic.solve_two_node(**analytic.fig_two_curves(),
                                         marginal_cost=cost)
        assert sol.pi[0, 0, 0] == pytest.approx(oracle.price_1, abs=1e-6)
        assert sol.pi[0, 1, 0] == pytest.approx(oracle.price_2, abs=1e-6)
        assert sol.f[0, 0, 0] == pytest.approx(oracle.flow, abs=1e-6)


def test_three_node_new_situation():
    net, scen = analytic.three_node_network()
    sol = solve_instance(net, scen)
    np.testing.assert_allclose(sol.pi[0, :, 0], 4.0, atol=1e-6)
    assert sol.q[0, 0, 0] == pytest.approx(4.0, abs=1e-6)
    assert sol.d[0, 1, 0] == pytest.approx(2.0, abs=1e-6)
    assert sol.d[0, 2, 0] == pytest.approx(2.0, abs=1e-6)


def test_three_node_old_situation():
    net, scen = analytic.three_node_network()
    sol = solve_instance(net, scen, ExpansionMask().denying(lines=["l23"]))
    assert sol.pi[0, 0, 0] == pytest.approx(3.0, abs=1e-6)
    assert sol.pi[0, 1, 0] == pytest.approx(3.0, abs=1e-6)
    assert sol.d[0, 1, 0] == pytest.approx(3.0, abs=1e-6)
    assert sol.d[0, 2, 0] == pytest.approx(0.0, abs=1e-7)
    # the open 1-2 line is uncongested: no rent
    assert congestion_rent(sol, "l12", net).expected == pytest.approx(0.0, abs=1e-6)


def test_assemble_counts_and_mask():
    net, scen = analytic.three_node_network()
    problem = assemble(net, scen)
    # d at three nodes + one generator + two lines + one investment column
    assert problem.n_variables == 3 + 1 + 2 + 1
    assert problem.b.size == 1 * 3 * 1            # one clearing row per (w, n, t)
    assert problem.is_concave()

    masked = assemble(net, scen, ExpansionMask.deny_all(net))
    assert masked.pinned.sum() == 1               # the single x column
    sol = solve(masked, TOL)
    assert np.all(sol.x == 0.0) and np.all(sol.y == 0.0) and np.all(sol.y_r == 0.0)


def test_market_clearing_row_count_two_scenarios():
    rng = np.random.default_rng(3)
    net, scen = random_instance(rng, max_scenarios=4)
    problem = assemble(net, scen)
    assert problem.b.size == scen.n_scenarios * len(net.nodes) * scen.n_periods


def test_verify_kkt_clean_on_solved_instances():
    for builder in (analytic.two_node_network, analytic.three_node_network):
        net, scen = builder()
        sol = solve_instance(net, scen)
        report = verify_kkt(net, scen, sol)
        assert report.worst <= 1e-6, f"{builder.__name__}: {report.actors}"


def _capacity_bound_instance():
    nodes = [Node("n1", "A")]
    gens = [Generator("g1", "n1", 5.0, 0.0, {"all": 1.0})]
    net = Network.build(nodes, [], gens)
    scen = ScenarioSet(
        probabilities=np.array([1.0]),
        seasons={"all": (0,)},
        demand_slope={"n1": np.array([[-1.0]])},
        demand_intercept={"n1": np.array([[10.0]])},
        annualization_hours=1.0,
    )
    return net, scen


def test_binding_capacity_price():
    net, scen = _capacity_bound_instance()
    sol = solve_instance(net, scen)
    assert sol.q[0, 0, 0] == pytest.approx(5.0, abs=1e-7)
    assert sol.pi[0, 0, 0] == pytest.approx(5.0, abs=1e-6)
    assert sol.mu_gen_cap[0, 0, 0] == pytest.approx(4.0, abs=1e-6)


def test_verify_kkt_flags_perturbed_primal():
    net, scen = _capacity_bound_instance()
    sol = solve_instance(net, scen)
    q = sol.q.copy()
    q[0, 0, 0] += 1.0
    bad = dataclasses.replace(sol, q=q)
    report = verify_kkt(net, scen, bad)
    assert report["generator"].primal * report.quantity_scale == \
        pytest.approx(1.0, abs=1e-6)


def test_verify_kkt_flags_zeroed_prices():
    net, scen = analytic.three_node_network()
    sol = solve_instance(net, scen)
    bad = dataclasses.replace(sol, pi=np.zeros_like(sol.pi))
    report = verify_kkt(net, scen, bad)
    # with prices zeroed the producer's marginal profit at q = 4 is
    # -(0 + 1*4) = -4; its magnitude shows up as the stationarity residual
    assert report["generator"].stationarity * report.money_scale == \
        pytest.approx(4.0, abs=1e-5)


def test_verify_kkt_dimension_mismatch():
    net, scen = analytic.three_node_network()
    sol = solve_instance(net, scen)
    other_net, other_scen = analytic.two_node_network()
    with pytest.raises(ValueError, match="dimensions"):
        verify_kkt(other_net, other_scen, sol)


def test_seasonal_energy_limit_binds():
    net, scen = _capacity_bound_instance()
    g = net.generators[0]
    limited = dataclasses.replace(g, q_max_seasonal={"all": np.array([3.0])})
    net = Network.build(net.nodes, net.lines, [limited])
    sol = solve_instance(net, scen)
    assert sol.q[0, 0, 0] == pytest.approx(3.0, abs=1e-7)
    assert sol.pi[0, 0, 0] == pytest.approx(7.0, abs=1e-6)
    assert sol.mu_gen_energy[0, 0, 0] == pytest.approx(6.0, abs=1e-6)
    assert verify_kkt(net, scen, sol).worst <= 1e-6


def test_renewable_investment_economics():
    # invest until price equals the (per-unit-profile) investment cost:
    # pi = 2, demand 10 - d gives d = 8, so capacity grows 1 -> 8
    nodes = [Node("n1", "A")]
    rens = [Renewable("r1", "n1", 1.0, 2.0, np.array([[1.0]]), expandable=True)]
    net = Network.build(nodes, [], [], rens)
    scen = ScenarioSet(
        probabilities=np.array([1.0]), seasons={"all": (0,)},
        demand_slope={"n1": np.array([[-1.0]])},
        demand_intercept={"n1": np.array([[10.0]])},
        annualization_hours=1.0)
    sol = solve_instance(net, scen)
    assert sol.pi[0, 0, 0] == pytest.approx(2.0, abs=1e-6)
    assert sol.y_r[0] == pytest.approx(7.0, abs=1e-6)
    assert verify_kkt(net, scen, sol).worst <= 1e-6


def test_generator_investment_economics():
    # zero installed capacity, investment cost 3, marginal cost 1:
    # invest until pi = mc + inv = 4, so q = y = 6
    nodes = [Node("n1", "A")]
    gens = [Generator("g1", "n1", 0.0, 3.0, {"all": 1.0}, expandable=True)]
    net = Network.build(nodes, [], gens)
    scen = ScenarioSet(
        probabilities=np.array([1.0]), seasons={"all": (0,)},
        demand_slope={"n1": np.array([[-1.0]])},
        demand_intercept={"n1": np.array([[10.0]])},
        annualization_hours=1.0)
    sol = solve_instance(net, scen)
    assert sol.pi[0, 0, 0] == pytest.approx(4.0, abs=1e-6)
    assert sol.y[0] == pytest.approx(6.0, abs=1e-6)
    assert sol.q[0, 0, 0] == pytest.approx(6.0, abs=1e-6)
    assert verify_kkt(net, scen, sol).worst <= 1e-6


def test_mask_relaxation_monotone():
    rng = np.random.default_rng(11)
    for _ in range(3):
        net, scen = random_instance(rng)
        denied = solve_instance(net, scen, ExpansionMask.deny_all(net)).objective
        lines_only = solve_instance(
            net, scen, ExpansionMask(
                denied_generators=frozenset(g.id for g in net.generators),
                denied_renewables=frozenset(r.id for r in net.renewables),
            )).objective
        free = solve_instance(net, scen).objective
        assert denied <= lines_only + 1e-6
        assert lines_only <= free + 1e-6


def test_zero_probability_scenario_is_inert():
    net, scen = analytic.two_node_network(line_inv_cost=1.0)
    base = solve_instance(net, scen)

    padded = ScenarioSet(
        probabilities=np.array([1.0, 0.0]),
        seasons=scen.seasons,
        demand_slope={n: np.vstack([a, [[-0.1]]])
                      for n, a in scen.demand_slope.items()},
        demand_intercept={n: np.vstack([a, [[500.0]]])
                          for n, a in scen.demand_intercept.items()},
        annualization_hours=scen.annualization_hours,
    )
    sol = solve_instance(net, padded)
    assert sol.objective == pytest.approx(base.objective, abs=1e-5)
    assert sol.x[0] == pytest.approx(base.x[0], abs=1e-5)
    assert np.all(np.isfinite(sol.pi))


def test_random_instances_verify(tmp_path):
    rng = np.random.default_rng(42)
    for _ in range(6):
        net, scen = random_instance(rng)
        sol = solve_instance(net, scen)
        report = verify_kkt(net, scen, sol)
        assert report.worst <= 1e-6


def test_brute_force_grid_agreement():
    rng = np.random.default_rng(5)
    hits = 0
    while hits < 4:
        net, scen = random_instance(rng, max_nodes=3, single_period=True,
                                      lines_only_investment=True)
        if len(net.generators) > 2:
            continue
        hits += 1
        sol = solve_instance(net, scen)
        ref = grid_search_objective(net, scen)
        assert sol.objective == pytest.approx(ref, abs=1e-2)


def test_solution_csv_roundtrip(tmp_path):
    net, scen = analytic.three_node_network()
    sol = solve_instance(net, scen)
    spath, ppath = tmp_path / "solution.csv", tmp_path / "prices.csv"
    write_solution_csv(sol, spath)
    write_prices_csv(sol, ppath)
    values = read_solution_csv(spath)
    assert values[("d[n2]", 0, 0)] == sol.d[0, 1, 0]       # bit-exact
    assert values[("x[l23]", None, None)] == sol.x[1]
    prices = read_prices_csv(ppath)
    for j, nid in enumerate(sol.node_ids):
        assert prices[(0, nid, 0)] == sol.pi[0, j, 0]


def test_empty_scenario_set_rejected():
    net, scen = analytic.two_node_network()
    empty = ScenarioSet(probabilities=np.zeros(0), seasons={},
                        demand_slope={}, demand_intercept={},
                        annualization_hours=1.0)
    with pytest.raises((ValueError, Exception)):
        assemble(net, empty)
