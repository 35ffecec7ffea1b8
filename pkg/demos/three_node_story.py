"""Why a welfare-improving line can be blocked, and why compensation helps.

The smallest system where the problem appears: a supply node (1) serving
a demand node (2) over an open corridor, and a second demand node (3)
that a new zero-cost line would connect.  The line raises total welfare
from 9 to 12, but node 2's consumers now compete with node 3 for the
same generation: node 2 ends up 2.5 worse off and, as a host of the new
line, could veto it.  Nodes 1 and 3 gain more than enough to compensate.

Run from the repository root:  python demos/three_node_story.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tepshare import analytic
from tepshare.equilibrium import ExpansionMask, ToleranceSet, assemble, solve
from tepshare.welfare import account, delta

sol = analytic.solve_three_node(**analytic.three_node_curves())
print("supply node 1: pi = q; demand nodes 2 and 3: pi = 6 - d\n")
print(f"old situation (no 2-3 line): price {sol.price_old:.1f}")
print(f"  TW by node: {sol.tw_old}  system {sol.system_tw_old:.1f}")
print(f"new situation (2-3 line open): price {sol.price_new:.1f}")
print(f"  TW by node: {sol.tw_new}  system {sol.system_tw_new:.1f}")
print(f"  node deltas: {tuple(round(v, 2) for v in sol.delta_tw)}")
print("\nnode 2 loses 2.5 although the system gains 3: without a deal it")
print("blocks the line; nodes 1 (+3.5) and 3 (+2.0) can afford to pay.")

print("\nthe QP engine agrees, through the full welfare accounting:")
net, scen = analytic.three_node_network()
tol = ToleranceSet()
with_line = solve(assemble(net, scen), tol)
without = solve(assemble(net, scen, ExpansionMask().denying(lines=["l23"])), tol)
dw = delta(account(with_line, net, scen), account(without, net, scen))
for c, v in zip(dw.countries, dw.expected()):
    print(f"  dTW[{c}] = {v:+.4f}")
