"""End-to-end run on the bundled synthetic 10-zone system.

Loads the fixture, samples scenarios from its synthetic hourly history,
solves the planner QP with and without the NO2-DE candidate cable,
accounts per-country welfare effects, calibrates the compensation
mechanisms for the five-country coalition and prints the risk table.
Takes about half a minute; the CLI drives the same pipeline via
``tepshare compare`` + ``tepshare compensate``.

Run from the repository root:  python demos/synthetic_case_study.py
"""

import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

import numpy as np

from tepshare.compensation import (LineObservables, ShareRule, apply,
                                   flow_mech, ideal_mech, lump_sum,
                                   no_compensation, targets, value_mech)
from tepshare.equilibrium import (ExpansionMask, ToleranceSet, assemble,
                                  congestion_rent, solve, verify_kkt)
from tepshare.ingest import load_network
from tepshare.risk import summary
from tepshare.welfare import DeltaWelfare, account, delta

CANDIDATE = "NO2-DE"
COALITION = ("NO", "DE", "DK", "AT", "FR")

t0 = time.time()
net, scen = load_network(ROOT / "data" / "synthetic_ne")
print(f"loaded {len(net.nodes)} zones, {len(net.lines)} lines, "
      f"{len(net.generators)} generators; {scen.n_scenarios} scenarios "
      f"x {scen.n_periods} periods (hour weight {scen.hour_weight:.1f})")

tol = ToleranceSet()
sol_with = solve(assemble(net, scen), tol)
sol_without = solve(assemble(net, scen,
                             ExpansionMask().denying(lines=[CANDIDATE])), tol)
for label, sol in (("with", sol_with), ("without", sol_without)):
    worst = verify_kkt(net, scen, sol).worst
    assert worst <= tol.kkt, (label, worst)

x = sol_with.x[sol_with.line_ids.index(CANDIDATE)]
rent = congestion_rent(sol_with, CANDIDATE, net)
line = net.line(CANDIDATE)
print(f"\nplanner builds {x:.1f} MW of {CANDIDATE}; expected congestion "
      f"rent {rent.expected / 1e6:.2f} M/yr = investment cost "
      f"{line.inv_cost * x / 1e6:.2f} M/yr (zero-profit condition)")

dw_full = delta(account(sol_with, net, scen), account(sol_without, net, scen))
print("\nexpected welfare effect of the cable, by country (M/yr):")
for c, v in zip(dw_full.countries, dw_full.expected()):
    print(f"  {c}: {v / 1e6:+8.2f}")
print("Norway gains, Germany and Denmark lose; Germany hosts the cable and")
print("could block it, which motivates the compensation mechanisms.")

dw = DeltaWelfare.from_values(
    COALITION, np.vstack([dw_full.row(c) for c in COALITION]),
    dw_full.probabilities)
rule = ShareRule.equal(COALITION)
t = targets(dw, rule)
obs = LineObservables.from_solution(sol_with, net, CANDIDATE)
schedules = {
    "no_comp": no_compensation(dw),
    "lump_sum": lump_sum(t, dw.probabilities),
    "flow": flow_mech(t, obs),
    "flow_value": value_mech(t, obs),
    "ideal": ideal_mech(dw, rule),
}
ensembles = {m: apply(dw, s) for m, s in schedules.items()}
rows = summary(ensembles, schedules, alpha=0.8)

print("\nrisk table (equal shares, M/yr):")
print(f"{'mechanism':<12}{'country':<9}{'std(C)':>9}{'std(NTW)':>10}"
      f"{'P(L)':>7}{'E[L]':>9}{'CVaR80':>9}")
for r in rows:
    print(f"{r.mechanism:<12}{r.country:<9}{r.std_c / 1e6:>9.2f}"
          f"{r.std_ntw / 1e6:>10.2f}{r.p_loss:>7.2f}"
          f"{r.e_loss / 1e6:>9.2f}{r.cvar_loss / 1e6:>9.2f}")

print(f"\ndone in {time.time() - t0:.0f}s; see 'tepshare compare/compensate'")
print("for the CSV-artifact version of this pipeline.")
