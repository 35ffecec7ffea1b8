"""Two connected markets: who gains from a cable, and how big to build it.

Walks the textbook construction: two nodes with linear supply and demand,
autarky prices, the import/export curves whose crossing gives the common
price, welfare under a capacity cap, and the optimal capacity where the
price gap has narrowed to the marginal investment cost (so congestion
rent exactly pays for the cable).  Every closed-form number is then
reproduced by the QP engine.

Run from the repository root:  python demos/two_node_story.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tepshare import analytic
from tepshare.equilibrium import ToleranceSet, assemble, congestion_rent, solve

curves = analytic.fig_two_curves()
print("curves: D1: pi = 10 - q   S1: pi = 2 + 2q")
print("        D2: pi = 10 - 2q  S2: pi = 1 + q")

aut = analytic.solve_two_node(**curves, cap=0.0)
print(f"\nautarky prices: pi1* = {aut.autarky_price_1:.4f}, "
      f"pi2* = {aut.autarky_price_2:.4f}")
print("node 1 is the scarce market; its import curve I1(pi) = 11 - 1.5 pi")
print("meets node 2's export curve E2(pi) = 1.5 pi - 6 at the common price.")

open_market = analytic.solve_two_node(**curves, marginal_cost=0.0)
print(f"\nunlimited cable: common price {open_market.common_price:.4f}, "
      f"flow {open_market.unconstrained_flow:.4f} into node 1")

capped = analytic.solve_two_node(**curves, cap=1.53)
print(f"\ncapped at 1.53 MW: pi1' = {capped.price_1:.4f}, "
      f"pi2' = {capped.price_2:.4f}")
print(f"  welfare gains: node 1 {capped.welfare_gain_1:.4f}, "
      f"node 2 {capped.welfare_gain_2:.4f} (both sides gain)")
print(f"  congestion rent {capped.congestion_rent:.4f} accrues on the cable")

print("\noptimal capacity for different marginal investment costs:")
for cost in (0.5, 1.0, 2.0, 10.0 / 3.0, 4.0):
    sol = analytic.solve_two_node(**curves, marginal_cost=cost)
    print(f"  C = {cost:4.2f}: x* = {sol.optimal_capacity:.4f}, "
          f"price gap {sol.price_1 - sol.price_2:.4f}, "
          f"rent {sol.congestion_rent:.4f} = C * x* "
          f"{cost * sol.optimal_capacity:.4f}")
print("above the autarky gap of 10/3 the cable is not worth building.")

print("\nthe QP engine reproduces the closed form:")
for cost in (1.0, 1.3):
    net, scen = analytic.two_node_network(line_inv_cost=cost)
    sol = solve(assemble(net, scen), ToleranceSet())
    oracle = analytic.solve_two_node(**curves, marginal_cost=cost)
    rent = congestion_rent(sol, "tie", net)
    print(f"  C = {cost}: QP x = {sol.x[0]:.6f} (closed form "
          f"{oracle.optimal_capacity:.6f}), QP rent {rent.expected:.6f}")
