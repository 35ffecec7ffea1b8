"""Per-country welfare accounts and the effect of one plan versus another.

An account decomposes a solved dispatch into consumer surplus, producer
surplus (net of the producers' own investment cost), an allocated share
of congestion rent, and an allocated share of line investment cost, per
country and scenario, all annualized.  Summed over countries the
accounts reproduce the planner objective exactly; that identity is the
main internal consistency check.

Congestion rent and line investment cost need an allocation rule because
a line has two ends; the default splits both 50/50 between the endpoint
countries, and any convex per-line weights can be supplied instead.
System totals never depend on the rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .equilibrium import DispatchSolution, verify_kkt
from .model import Network, ScenarioSet

__all__ = [
    "AllocationRule", "WelfareAccount", "DeltaWelfare",
    "account", "delta", "write_welfare_csv", "write_delta_csv",
]

_FMT = "%.17g"


@dataclass(frozen=True)
class AllocationRule:
    """Convex per-line weights assigning CR and line cost to countries."""

    line_shares: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        for lid, shares in self.line_shares.items():
            total = sum(shares.values())
            if any(w < 0.0 for w in shares.values()) or abs(total - 1.0) > 1e-9:
                raise ValueError(
                    f"line {lid!r}: allocation weights must be convex "
                    f"(got sum {total})")

    @classmethod
    def equal_split(cls, network: Network) -> "AllocationRule":
        country = network.country_of
        shares = {}
        for l in network.lines:
            a, b = country[l.from_node], country[l.to_node]
            shares[l.id] = {a: 1.0} if a == b else {a: 0.5, b: 0.5}
        return cls(shares)

    def weight(self, line_id: str, country: str) -> float:
        return self.line_shares.get(line_id, {}).get(country, 0.0)


@dataclass(frozen=True)
class WelfareAccount:
    """CS/PS/CR/investment-cost/TW per (country, scenario), EUR per year."""

    countries: tuple
    cs: np.ndarray
    ps: np.ndarray
    cr: np.ndarray
    inv_cost: np.ndarray
    tw: np.ndarray
    probabilities: np.ndarray
    objective: float    # planner objective of the underlying solution

    def expected_tw(self) -> np.ndarray:
        return self.tw @ self.probabilities

    def system_tw(self) -> np.ndarray:
        """Per-scenario total over countries."""
        return self.tw.sum(axis=0)


def account(solution: DispatchSolution, network: Network,
            scenarios: ScenarioSet, allocation: AllocationRule | None = None,
            *, check_equilibrium: bool = True,
            kkt_tol: float = 1e-6) -> WelfareAccount:
    """Build per-country welfare accounts from an equilibrium solution.

    Accounts are only meaningful for market equilibria, so the solution
    is re-verified through the actor KKT conditions first (disable with
    ``check_equilibrium=False`` for diagnostic use).
    """
    if check_equilibrium:
        report = verify_kkt(network, scenarios, solution)
        if report.worst > kkt_tol:
            raise ValueError(
                f"not an equilibrium: KKT residual {report.worst:.3e} "
                f"exceeds {kkt_tol:g}")
    allocation = allocation or AllocationRule.equal_split(network)

    H = solution.hour_weight
    node_pos = {nid: i for i, nid in enumerate(solution.node_ids)}
    countries = network.countries
    cpos = {c: i for i, c in enumerate(countries)}
    country = network.country_of
    ns = scenarios.n_scenarios
    nC = len(countries)
    season_labels = solution.season_labels
    sop = solution.season_of_period

    cs = np.zeros((nC, ns))
    ps = np.zeros((nC, ns))
    cr = np.zeros((nC, ns))
    ic = np.zeros((nC, ns))

    for nid in solution.demand_nodes:
        i = node_pos[nid]
        d = solution.d[:, i, :]
        a = scenarios.demand_slope[nid]
        b = scenarios.demand_intercept[nid]
        surplus = H * np.sum((0.5 * a * d + b - solution.pi[:, i, :]) * d, axis=1)
        cs[cpos[country[nid]]] += surplus

    for gpos, g in enumerate(network.generators):
        q = solution.q[:, gpos, :]
        pi_n = solution.pi[:, node_pos[g.node], :]
        mc = np.array([g.marg_cost[season_labels[s]] for s in sop])[None, :]
        op = H * np.sum((pi_n - mc) * q - 0.5 * g.marg_cost_slope * q * q, axis=1)
        ps[cpos[country[g.node]]] += op - g.inv_cost * solution.y[gpos]

    for rpos, r in enumerate(network.renewables):
        pi_n = solution.pi[:, node_pos[r.node], :]
        out = (r.g_r + solution.y_r[rpos]) * r.profile
        op = H * np.sum(pi_n * out, axis=1)
        ps[cpos[country[r.node]]] += op - r.inv_cost * solution.y_r[rpos]

    for lpos, l in enumerate(network.lines):
        gap = (solution.pi[:, node_pos[l.to_node], :]
               - solution.pi[:, node_pos[l.from_node], :])
        rent = H * np.sum(gap * solution.f[:, lpos, :], axis=1)
        cost = l.inv_cost * solution.x[lpos]
        for c in countries:
            w = allocation.weight(l.id, c)
            if w:
                cr[cpos[c]] += w * rent
                ic[cpos[c]] += w * cost

    tw = cs + ps + cr - ic
    return WelfareAccount(countries=countries, cs=cs, ps=ps, cr=cr,
                          inv_cost=ic, tw=tw,
                          probabilities=np.asarray(scenarios.probabilities),
                          objective=solution.objective)


@dataclass(frozen=True)
class DeltaWelfare:
    """Welfare change per (country, scenario) between two plans."""

    countries: tuple
    dtw: np.ndarray          # (n_countries, n_scenarios)
    probabilities: np.ndarray

    @classmethod
    def from_values(cls, countries, dtw, probabilities) -> "DeltaWelfare":
        dtw = np.asarray(dtw, dtype=float)
        probabilities = np.asarray(probabilities, dtype=float)
        if dtw.shape != (len(countries), probabilities.size):
            raise ValueError("dtw shape does not match countries/probabilities")
        return cls(tuple(countries), dtw, probabilities)

    def expected(self) -> np.ndarray:
        return self.dtw @ self.probabilities

    def total(self) -> np.ndarray:
        """Per-scenario sum over countries."""
        return self.dtw.sum(axis=0)

    def row(self, country: str) -> np.ndarray:
        return self.dtw[self.countries.index(country)]


def delta(account_with: WelfareAccount,
          account_without: WelfareAccount) -> DeltaWelfare:
    """Welfare effect of the plan behind ``account_with`` versus the other."""
    if account_with.countries != account_without.countries:
        raise ValueError("accounts cover different countries")
    if not np.array_equal(account_with.probabilities,
                          account_without.probabilities):
        raise ValueError("accounts were built on different scenario sets")
    return DeltaWelfare(
        countries=account_with.countries,
        dtw=account_with.tw - account_without.tw,
        probabilities=account_with.probabilities,
    )


def write_welfare_csv(acc: WelfareAccount, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["country", "scenario", "cs", "ps", "cr_share",
                    "inv_cost", "tw"])
        for i, c in enumerate(acc.countries):
            for s in range(acc.probabilities.size):
                w.writerow([c, s, _FMT % acc.cs[i, s], _FMT % acc.ps[i, s],
                            _FMT % acc.cr[i, s], _FMT % acc.inv_cost[i, s],
                            _FMT % acc.tw[i, s]])


def write_delta_csv(dw: DeltaWelfare, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["country", "scenario", "delta_tw"])
        for i, c in enumerate(dw.countries):
            for s in range(dw.probabilities.size):
                w.writerow([c, s, _FMT % dw.dtw[i, s]])
