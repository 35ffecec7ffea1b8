import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(
    os.path.abspath(__file__))), "src"))

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(
    os.path.abspath(__file__))), "data")


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


def random_instance(rng, max_nodes=5, max_scenarios=4, max_periods=6,
                    single_period=False, lines_only_investment=False):
    """Random feasible, bounded instance within the given size caps."""
    from tepshare.model import Generator, Line, Network, Node, Renewable, ScenarioSet

    n_nodes = int(rng.integers(2, max_nodes + 1))
    ns = 1 if single_period else int(rng.integers(1, max_scenarios + 1))
    n_p = 1 if single_period else int(rng.integers(1, max_periods + 1))

    if n_p >= 2 and rng.random() < 0.5:
        cut = int(rng.integers(1, n_p))
        seasons = {"s0": tuple(range(cut)), "s1": tuple(range(cut, n_p))}
    else:
        seasons = {"s0": tuple(range(n_p))}
    labels = tuple(seasons)

    countries = [f"C{i % max(2, n_nodes - 1)}" for i in range(n_nodes)]
    nodes = [Node(f"n{i}", countries[i]) for i in range(n_nodes)]

    lines = []
    for i in range(1, n_nodes):
        expandable = rng.random() < 0.6
        lines.append(Line(
            id=f"l{i - 1}{i}", from_node=f"n{i - 1}", to_node=f"n{i}",
            f_max=float(rng.uniform(0.2, 4.0)),
            inv_cost=float(rng.uniform(0.1, 3.0)) if expandable else 0.0,
            expandable=expandable,
            x_max=float(rng.uniform(2.0, 8.0)),
        ))
    if n_nodes >= 3 and rng.random() < 0.4 and not single_period:
        lines.append(Line("lx", "n0", f"n{n_nodes - 1}",
                          f_max=float(rng.uniform(0.2, 3.0)),
                          inv_cost=1.0, expandable=False))

    gens = []
    for i in range(n_nodes):
        if rng.random() < 0.75 or i == 0:
            mc = {s: float(rng.uniform(0.5, 5.0)) for s in labels}
            q_max = None
            if rng.random() < 0.3 and not single_period:
                q_max = {labels[0]: rng.uniform(0.5, 6.0, size=ns)}
            gens.append(Generator(
                id=f"g{i}", node=f"n{i}",
                g_max=float(rng.uniform(1.0, 8.0)),
                inv_cost=float(rng.uniform(0.5, 4.0)),
                marg_cost=mc,
                marg_cost_slope=float(rng.choice([0.0, rng.uniform(0.1, 1.0)])),
                q_max_seasonal=q_max,
                expandable=(not lines_only_investment) and rng.random() < 0.4,
            ))

    rens = []
    if rng.random() < 0.5 and not single_period:
        i = int(rng.integers(0, n_nodes))
        rens.append(Renewable(
            id="r0", node=f"n{i}",
            g_r=float(rng.uniform(0.0, 2.0)),
            inv_cost=float(rng.uniform(0.5, 5.0)),
            profile=rng.uniform(0.0, 1.0, size=(ns, n_p)),
            expandable=(not lines_only_investment) and rng.random() < 0.4,
        ))

    slope, intercept = {}, {}
    for i in range(n_nodes):
        # the single-period instances feed the grid oracle, which needs a
        # demand curve at every node to eliminate d through the balance
        if single_period or rng.random() < 0.85 or i == n_nodes - 1:
            slope[f"n{i}"] = -rng.uniform(0.3, 3.0, size=(ns, n_p))
            intercept[f"n{i}"] = rng.uniform(3.0, 15.0, size=(ns, n_p))

    probs = rng.dirichlet(np.ones(ns)) if ns > 1 else np.array([1.0])
    # single-period draws feed the 1e-3-resolution grid oracle, whose
    # first-order discretization error scales with the hour weight
    weight = 1.0 if single_period else float(rng.choice([1.0, 4.0]))
    scen = ScenarioSet(
        probabilities=probs,
        seasons=seasons,
        demand_slope=slope,
        demand_intercept=intercept,
        annualization_hours=float(n_p) * weight,
    )
    return Network.build(nodes, lines, gens, rens), scen
