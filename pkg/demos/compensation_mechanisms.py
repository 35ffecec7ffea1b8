"""The compensation mechanisms on a two-scenario toy, including the PPA trap.

Two equally likely scenarios; country A loses (-10, -10) from the new
line while B gains (20, 40).  Under an equal split A is owed 20 in
expectation.  The mechanisms differ in how the payment tracks the
realized scenario, and the PPA example shows why only one country can
hold a PPA under uncertainty: two one-sided PPAs stop balancing per
scenario.

Run from the repository root:  python demos/compensation_mechanisms.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from tepshare.compensation import (LineObservables, ShareRule, apply,
                                   flow_mech, ideal_mech, lump_sum, ppa,
                                   targets, value_mech)
from tepshare.welfare import DeltaWelfare

delta = DeltaWelfare.from_values(("A", "B"),
                                 [[-10.0, -10.0], [20.0, 40.0]], [0.5, 0.5])
obs = LineObservables(
    line_id="AB", from_country="A", to_country="B",
    flow=np.full((2, 1), 10.0),
    price_from=np.full((2, 1), 1.0),
    price_to=np.array([[2.0], [3.0]]),
    probabilities=np.array([0.5, 0.5]),
)
rule = ShareRule.equal(("A", "B"))
t = targets(delta, rule)
print(f"expected effects: A {delta.expected()[0]:+.0f}, "
      f"B {delta.expected()[1]:+.0f}; equal split owes A {t.of('A'):+.0f}\n")

for sched in (lump_sum(t, delta.probabilities),
              ppa(delta, obs, "A", t.of("A")),
              flow_mech(t, obs),
              value_mech(t, obs),
              ideal_mech(delta, rule)):
    ntw = apply(delta, sched)
    print(f"{sched.mechanism:>10s}: C_A = {np.round(sched.row('A'), 2)}, "
          f"post-compensation A {np.round(ntw.row('A'), 2)} "
          f"B {np.round(ntw.row('B'), 2)}")

print("\nthe stochastic PPA trap: calibrate one PPA per country and add them")
c_a = ppa(delta, obs, "A", t.of("A"))
c_b = ppa(delta, obs, "B", t.of("B"))
print(f"  A's own PPA price {c_a.parameters['ppa_price']:.2f} "
      f"pays A {c_a.row('A')}")
print(f"  B's own PPA price {c_b.parameters['ppa_price']:.2f} "
      f"pays B {c_b.row('B')}")
sums = c_a.row("A") + c_b.row("B")
print(f"  per-scenario sums {sums}: balanced in expectation, "
      "not scenario by scenario")
print("  -> with uncertainty, pick ONE country to hold the PPA; the other")
print("     pays the negation.")
