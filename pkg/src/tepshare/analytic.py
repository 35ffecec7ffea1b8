"""Closed-form solvers for the two-node and three-node textbook systems.

These serve two purposes: exact oracles for the QP engine (prices, flows
and welfare must agree to tight tolerances) and small pedagogical
fixtures.  Surpluses are exact triangle/trapezoid areas of the linear
curves; no numerical quadrature is involved.

The two-node construction works on the import/export curves
``I1(pi) = D1(pi) - S1(pi)`` and ``E2(pi) = S2(pi) - D2(pi)``: the
unconstrained market clears where they cross, a capacity cap wedges the
two prices apart, and the optimal capacity for a marginal investment
cost C is where the price gap has narrowed to exactly C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Generator, Line, Network, Node, ScenarioSet

__all__ = [
    "LinearCurve", "TwoNodeSolution", "ThreeNodeSolution",
    "solve_two_node", "solve_three_node",
    "fig_two_curves", "three_node_curves",
    "two_node_network", "three_node_network",
]


@dataclass(frozen=True)
class LinearCurve:
    """Inverse-form linear curve pi(q) = intercept + slope * q."""

    intercept: float
    slope: float

    def price(self, q: float) -> float:
        return self.intercept + self.slope * q

    def quantity(self, pi: float) -> float:
        return (pi - self.intercept) / self.slope


def _intersect(a: LinearCurve, b: LinearCurve) -> tuple[float, float]:
    """Price and quantity where two inverse curves cross."""
    if a.slope == b.slope:
        raise ValueError("curves are parallel; no intersection")
    q = (b.intercept - a.intercept) / (a.slope - b.slope)
    return a.price(q), q


def _consumer_surplus(d: LinearCurve, pi: float) -> float:
    q = max(0.0, d.quantity(pi))
    return 0.5 * (d.intercept - pi) * q


def _producer_surplus(s: LinearCurve, pi: float) -> float:
    q = max(0.0, s.quantity(pi))
    return 0.5 * (pi - s.intercept) * q


@dataclass(frozen=True)
class TwoNodeSolution:
    autarky_price_1: float
    autarky_price_2: float
    common_price: float
    unconstrained_flow: float
    capacity: float          # the capacity the capped quantities refer to
    price_1: float
    price_2: float
    flow: float
    welfare_gain_1: float
    welfare_gain_2: float
    congestion_rent: float
    optimal_capacity: float | None = None   # set in marginal-cost mode
    marginal_cost: float | None = None


def solve_two_node(d1: LinearCurve, s1: LinearCurve,
                   d2: LinearCurve, s2: LinearCurve,
                   *, cap: float | None = None,
                   marginal_cost: float | None = None) -> TwoNodeSolution:
    """Solve the two-node system for a given capacity or an optimal one.

    Exactly one of ``cap`` (evaluate a fixed transfer capacity) and
    ``marginal_cost`` (find the welfare-maximizing capacity for constant
    marginal investment cost C, zero when the autarky price gap is below
    C) must be given.
    """
    if (cap is None) == (marginal_cost is None):
        raise ValueError("give exactly one of cap= or marginal_cost=")
    for d in (d1, d2):
        if d.slope >= 0:
            raise ValueError("demand curves must slope down")
    for s in (s1, s2):
        if s.slope <= 0:
            raise ValueError("supply curves must slope up")

    pi1_star, _ = _intersect(d1, s1)
    pi2_star, _ = _intersect(d2, s2)

    # import curve of node 1 / export curve of node 2, quantity form:
    # I1(pi) = u1 + v1*pi,  E2(pi) = u2 + v2*pi
    v1 = 1.0 / d1.slope - 1.0 / s1.slope
    u1 = -d1.intercept / d1.slope + s1.intercept / s1.slope
    v2 = 1.0 / s2.slope - 1.0 / d2.slope
    u2 = -s2.intercept / s2.slope + d2.intercept / d2.slope
    if v2 - v1 == 0.0:
        raise ValueError("import and export curves are parallel")
    pi_bar = (u1 - u2) / (v2 - v1)
    f_bar = u1 + v1 * pi_bar

    opt_cap = None
    if marginal_cost is not None:
        # price gap as a function of flow: pi1(f) - pi2(f) = C
        gap0 = pi1_star - pi2_star
        if gap0 <= marginal_cost:
            x = 0.0
        else:
            x = max(0.0, (marginal_cost - (u2 / v2 - u1 / v1))
                    / (1.0 / v1 - 1.0 / v2))
        opt_cap = x
    else:
        x = cap

    f = min(f_bar, x) if f_bar >= 0.0 else max(f_bar, -x)
    pi1 = (f - u1) / v1
    pi2 = (f - u2) / v2

    def node_surplus(d, s, pi):
        return _consumer_surplus(d, pi) + _producer_surplus(s, pi)

    gain1 = node_surplus(d1, s1, pi1) - node_surplus(d1, s1, pi1_star)
    gain2 = node_surplus(d2, s2, pi2) - node_surplus(d2, s2, pi2_star)
    rent = (pi1 - pi2) * f

    return TwoNodeSolution(
        autarky_price_1=pi1_star, autarky_price_2=pi2_star,
        common_price=pi_bar, unconstrained_flow=f_bar,
        capacity=x, price_1=pi1, price_2=pi2, flow=f,
        welfare_gain_1=gain1, welfare_gain_2=gain2,
        congestion_rent=rent, optimal_capacity=opt_cap,
        marginal_cost=marginal_cost,
    )


@dataclass(frozen=True)
class ThreeNodeSolution:
    """Welfare before/after opening the line to the second demand node.

    Node 1 is the pure supply node; nodes 2 and 3 carry only demand.  In
    the new (connected) situation node 1's surplus is producer surplus
    and nodes 2/3 hold consumer surplus; the total-welfare rows are what
    the construction pins down.
    """

    price_old: float
    price_new: float
    supply_old: float
    supply_new: float
    demand_new: tuple[float, float]   # nodes 2 and 3
    cs_old: tuple[float, float, float]
    ps_old: tuple[float, float, float]
    tw_old: tuple[float, float, float]
    cs_new: tuple[float, float, float]
    ps_new: tuple[float, float, float]
    tw_new: tuple[float, float, float]

    @property
    def system_tw_old(self) -> float:
        return sum(self.tw_old)

    @property
    def system_tw_new(self) -> float:
        return sum(self.tw_new)

    @property
    def delta_tw(self) -> tuple[float, float, float]:
        return tuple(n - o for n, o in zip(self.tw_new, self.tw_old))


def solve_three_node(s1: LinearCurve, d2: LinearCurve,
                     d3: LinearCurve) -> ThreeNodeSolution:
    """Old situation: supply node 1 serves node 2 only; new: nodes 2 and 3.

    The new equilibrium aggregates the two demand curves horizontally;
    a demand node priced out of the market (negative quantity at the
    joint price) is dropped and the system degenerates to the old one.
    """
    if s1.slope <= 0:
        raise ValueError("supply curve must slope up")
    for d in (d2, d3):
        if d.slope >= 0:
            raise ValueError("demand curves must slope down")

    pi_old, q_old = _intersect(s1, d2)
    if q_old <= 0.0 or pi_old < 0.0:
        raise ValueError("no intersection in the positive quadrant")

    # joint demand: quantities add at each price
    agg_slope = 1.0 / (1.0 / d2.slope + 1.0 / d3.slope)
    agg_intercept = agg_slope * (d2.intercept / d2.slope + d3.intercept / d3.slope)
    pi_new, q_new = _intersect(s1, LinearCurve(agg_intercept, agg_slope))
    d2_new = max(0.0, d2.quantity(pi_new))
    d3_new = max(0.0, d3.quantity(pi_new))
    if d3.quantity(pi_new) <= 0.0:
        # node 3 priced out: new situation collapses to the old one
        pi_new, q_new = pi_old, q_old
        d2_new, d3_new = q_old, 0.0
    elif d2.quantity(pi_new) <= 0.0:
        pi_new, q_new = _intersect(s1, d3)
        d2_new, d3_new = 0.0, q_new

    cs_old = (0.0, _consumer_surplus(d2, pi_old), 0.0)
    ps_old = (_producer_surplus(s1, pi_old), 0.0, 0.0)
    cs_new = (0.0, _consumer_surplus(d2, pi_new) if d2_new > 0.0 else 0.0,
              _consumer_surplus(d3, pi_new) if d3_new > 0.0 else 0.0)
    ps_new = (_producer_surplus(s1, pi_new), 0.0, 0.0)
    tw = lambda cs, ps: tuple(c + p for c, p in zip(cs, ps))

    return ThreeNodeSolution(
        price_old=pi_old, price_new=pi_new,
        supply_old=q_old, supply_new=q_new,
        demand_new=(d2_new, d3_new),
        cs_old=cs_old, ps_old=ps_old, tw_old=tw(cs_old, ps_old),
        cs_new=cs_new, ps_new=ps_new, tw_new=tw(cs_new, ps_new),
    )


# ---------------------------------------------------------------------------
# pedagogical fixtures: curves and equivalent Network/ScenarioSet instances

def fig_two_curves() -> dict[str, LinearCurve]:
    """The worked two-node instance: D1 = 10-q, S1 = 2+2q, D2 = 10-2q, S2 = 1+q."""
    return {
        "d1": LinearCurve(10.0, -1.0),
        "s1": LinearCurve(2.0, 2.0),
        "d2": LinearCurve(10.0, -2.0),
        "s2": LinearCurve(1.0, 1.0),
    }


def three_node_curves() -> dict[str, LinearCurve]:
    """The worked three-node instance: S1 = q, D2 = D3 = 6-q."""
    return {
        "s1": LinearCurve(0.0, 1.0),
        "d2": LinearCurve(6.0, -1.0),
        "d3": LinearCurve(6.0, -1.0),
    }


def _single_period_scenarios(demand: dict[str, LinearCurve]) -> ScenarioSet:
    return ScenarioSet(
        probabilities=np.array([1.0]),
        seasons={"all": (0,)},
        demand_slope={n: np.array([[c.slope]]) for n, c in demand.items()},
        demand_intercept={n: np.array([[c.intercept]]) for n, c in demand.items()},
        annualization_hours=1.0,
    )


def two_node_network(line_inv_cost: float = 0.0,
                     line_x_max: float = 10.0,
                     line_f_max: float = 0.0,
                     expandable: bool = True) -> tuple[Network, ScenarioSet]:
    """Network equivalent of :func:`fig_two_curves`.

    Supply curves become generators with affine marginal cost; the single
    tie line runs node 2 -> node 1 so positive flow is node 1's import.
    """
    c = fig_two_curves()
    nodes = [Node("n1", "C1"), Node("n2", "C2")]
    gens = [
        Generator("g1", "n1", np.inf, 0.0, {"all": c["s1"].intercept},
                  marg_cost_slope=c["s1"].slope),
        Generator("g2", "n2", np.inf, 0.0, {"all": c["s2"].intercept},
                  marg_cost_slope=c["s2"].slope),
    ]
    lines = [Line("tie", "n2", "n1", line_f_max, line_inv_cost,
                  expandable=expandable, x_max=line_x_max)]
    net = Network.build(nodes, lines, gens)
    scen = _single_period_scenarios({"n1": c["d1"], "n2": c["d2"]})
    return net, scen


def three_node_network() -> tuple[Network, ScenarioSet]:
    """Network equivalent of :func:`three_node_curves`.

    Line l12 is an uncapped existing corridor; l23 is the zero-cost
    candidate whose expansion is capped at 10 MW to keep the zero-cost
    investment face bounded (any cap above the 2 MW equilibrium flow is
    equivalent).
    """
    c = three_node_curves()
    nodes = [Node("n1", "C1"), Node("n2", "C2"), Node("n3", "C3")]
    gens = [Generator("g1", "n1", np.inf, 0.0, {"all": c["s1"].intercept},
                      marg_cost_slope=c["s1"].slope)]
    lines = [
        Line("l12", "n1", "n2", np.inf, 0.0, expandable=False),
        Line("l23", "n2", "n3", 0.0, 0.0, expandable=True, x_max=10.0),
    ]
    net = Network.build(nodes, lines, gens)
    zero_demand = LinearCurve(0.0, -1.0)   # satiated at any positive price
    scen = _single_period_scenarios(
        {"n1": zero_demand, "n2": c["d2"], "n3": c["d3"]})
    return net, scen
