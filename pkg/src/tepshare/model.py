"""Domain types for the power-market instance and structural validation.

A problem instance is a :class:`Network` (nodes, lines, generators,
renewables) paired with a :class:`ScenarioSet` (probabilities, a season
partition of the period axis, and per-scenario inverse demand curves).
All types are immutable after construction; arrays are frozen so
instances can be shared across parallel evaluations.

Conventions
-----------
* A line's incidence is +1 at its from-node and -1 at its to-node, so a
  positive flow moves power from-node -> to-node.
* Generator marginal cost is stored per season and may carry an optional
  slope, giving an affine marginal-cost curve ``mc(q) = intercept +
  slope * q``; slope 0 recovers the constant-cost producer.
* Per-scenario data (renewable profiles, seasonal energy limits) live on
  the element that owns them and must match the ScenarioSet dimensions,
  which :func:`validate` checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "Node", "Line", "Generator", "Renewable", "DemandCurve",
    "ScenarioSet", "Network", "ValidationReport", "validate",
]


def _frozen(a) -> np.ndarray:
    """Return a float array with the writeable flag cleared."""
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Node:
    id: str
    country: str
    generators: tuple[str, ...] = ()
    renewables: tuple[str, ...] = ()


@dataclass(frozen=True)
class Line:
    """Transmission corridor; capacity f_max may be inf (uncapped).

    x_max bounds the expansion decision (inf = unbounded); a finite cap
    keeps zero-cost expansion problems bounded.
    """

    id: str
    from_node: str
    to_node: str
    f_max: float
    inv_cost: float
    expandable: bool = False
    x_max: float = np.inf


@dataclass(frozen=True)
class Generator:
    """Dispatchable producer with affine marginal cost per season.

    q_max_seasonal maps season label -> per-scenario energy budgets (MWh
    over that season's sampled periods); None means no energy limit.
    """

    id: str
    node: str
    g_max: float
    inv_cost: float
    marg_cost: Mapping[str, float]
    marg_cost_slope: float = 0.0
    q_max_seasonal: Mapping[str, np.ndarray] | None = None
    expandable: bool = False


@dataclass(frozen=True)
class Renewable:
    """Non-dispatchable producer: output = capacity * profile, no spill."""

    id: str
    node: str
    g_r: float
    inv_cost: float
    profile: np.ndarray  # (n_scenarios, n_periods) factors in [0, 1]
    expandable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "profile", _frozen(self.profile))


@dataclass(frozen=True)
class DemandCurve:
    """Inverse demand pi(d) = slope * d + intercept, slope < 0."""

    slope: float
    intercept: float

    def price_at(self, d: float) -> float:
        return self.slope * d + self.intercept


@dataclass(frozen=True)
class ScenarioSet:
    """Scenario probabilities, season partition and demand-curve data.

    demand_slope / demand_intercept map node id -> (n_scenarios,
    n_periods) arrays; nodes absent from the mapping carry no demand.
    annualization_hours scales operational surplus so results are in
    EUR/yr: each solved period stands for annualization_hours/n_periods
    hours of the year.  Fixtures whose periods ARE the full horizon set
    it equal to n_periods (weight one).
    """

    probabilities: np.ndarray
    seasons: Mapping[str, tuple[int, ...]]
    demand_slope: Mapping[str, np.ndarray]
    demand_intercept: Mapping[str, np.ndarray]
    annualization_hours: float = 8760.0
    sampled_rows: np.ndarray | None = None  # (n_scenarios, n_periods) source indices

    def __post_init__(self):
        object.__setattr__(self, "probabilities", _frozen(self.probabilities))
        object.__setattr__(self, "seasons",
                           {s: tuple(int(t) for t in ts) for s, ts in self.seasons.items()})
        object.__setattr__(self, "demand_slope",
                           {n: _frozen(a) for n, a in self.demand_slope.items()})
        object.__setattr__(self, "demand_intercept",
                           {n: _frozen(a) for n, a in self.demand_intercept.items()})

    @property
    def n_scenarios(self) -> int:
        return self.probabilities.shape[0]

    @property
    def n_periods(self) -> int:
        return sum(len(ts) for ts in self.seasons.values())

    @property
    def season_labels(self) -> tuple[str, ...]:
        return tuple(self.seasons.keys())

    @property
    def hour_weight(self) -> float:
        """Hours of the year represented by each solved period."""
        return self.annualization_hours / self.n_periods

    def season_of_period(self) -> dict[int, str]:
        return {t: s for s, ts in self.seasons.items() for t in ts}

    def demand_curve(self, node: str, scenario: int, period: int) -> DemandCurve | None:
        if node not in self.demand_slope:
            return None
        return DemandCurve(float(self.demand_slope[node][scenario, period]),
                           float(self.demand_intercept[node][scenario, period]))


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    renewables: tuple[Renewable, ...]

    @classmethod
    def build(cls, nodes, lines, generators=(), renewables=()):
        """Construct a network, attaching generator/renewable ids to nodes."""
        gens_at: dict[str, list[str]] = {}
        rens_at: dict[str, list[str]] = {}
        for g in generators:
            gens_at.setdefault(g.node, []).append(g.id)
        for r in renewables:
            rens_at.setdefault(r.node, []).append(r.id)
        attached = tuple(
            Node(n.id, n.country,
                 tuple(gens_at.get(n.id, ())), tuple(rens_at.get(n.id, ())))
            for n in nodes)
        return cls(attached, tuple(lines), tuple(generators), tuple(renewables))

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    @property
    def country_of(self) -> dict[str, str]:
        return {n.id: n.country for n in self.nodes}

    @property
    def countries(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for n in self.nodes:
            seen.setdefault(n.country)
        return tuple(seen)

    def line(self, line_id: str) -> Line:
        for l in self.lines:
            if l.id == line_id:
                return l
        raise KeyError(f"unknown line id {line_id!r}")


@dataclass
class ValidationReport:
    """Outcome of structural validation; violations are data, not faults."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def validate(network: Network, scenarios: ScenarioSet) -> ValidationReport:
    """Check every structural invariant; returns all violations found.

    Pure and idempotent: the instance is never modified and repeated
    calls return the same report.
    """
    rep = ValidationReport()
    n_sc, n_p = scenarios.n_scenarios, scenarios.n_periods
    node_ids = [n.id for n in network.nodes]

    # nodes
    seen = set()
    for n in network.nodes:
        if n.id in seen:
            rep.add(f"node {n.id!r}: duplicate id")
        seen.add(n.id)
        if not n.country:
            rep.add(f"node {n.id!r}: empty country")

    # lines
    seen = set()
    for l in network.lines:
        if l.id in seen:
            rep.add(f"line {l.id!r}: duplicate id")
        seen.add(l.id)
        if l.from_node == l.to_node:
            rep.add(f"line {l.id!r}: self-loop at node {l.from_node!r}")
        for end in (l.from_node, l.to_node):
            if end not in node_ids:
                rep.add(f"line {l.id!r}: unknown endpoint {end!r}")
        if not l.f_max >= 0.0:
            rep.add(f"line {l.id!r}: f_max must be >= 0")
        if not l.inv_cost >= 0.0:
            rep.add(f"line {l.id!r}: inv_cost must be >= 0")
        if not l.x_max >= 0.0:
            rep.add(f"line {l.id!r}: x_max must be >= 0")

    # generators
    seen = set()
    for g in network.generators:
        if g.id in seen:
            rep.add(f"generator {g.id!r}: duplicate id")
        seen.add(g.id)
        if g.node not in node_ids:
            rep.add(f"generator {g.id!r}: unknown node {g.node!r}")
        if not g.g_max >= 0.0:
            rep.add(f"generator {g.id!r}: g_max must be >= 0")
        missing = [s for s in scenarios.season_labels if s not in g.marg_cost]
        if missing:
            rep.add(f"generator {g.id!r}: marginal cost missing for seasons {missing}")
        if g.marg_cost_slope < 0.0:
            rep.add(f"generator {g.id!r}: marg_cost_slope must be >= 0")
        if g.q_max_seasonal is not None:
            for s, arr in g.q_max_seasonal.items():
                if s not in scenarios.seasons:
                    rep.add(f"generator {g.id!r}: energy limit for unknown season {s!r}")
                arr = np.asarray(arr)
                if arr.shape != (n_sc,):
                    rep.add(f"generator {g.id!r}: energy limit for season {s!r} "
                            f"has shape {arr.shape}, expected ({n_sc},)")
                elif np.any(arr < 0.0):
                    rep.add(f"generator {g.id!r}: negative energy limit in season {s!r}")

    # renewables
    seen = set()
    for r in network.renewables:
        if r.id in seen:
            rep.add(f"renewable {r.id!r}: duplicate id")
        seen.add(r.id)
        if r.node not in node_ids:
            rep.add(f"renewable {r.id!r}: unknown node {r.node!r}")
        if not r.g_r >= 0.0:
            rep.add(f"renewable {r.id!r}: installed capacity must be >= 0")
        if r.profile.shape != (n_sc, n_p):
            rep.add(f"renewable {r.id!r}: profile shape {r.profile.shape}, "
                    f"expected ({n_sc}, {n_p})")
        elif np.any(r.profile < 0.0) or np.any(r.profile > 1.0):
            rep.add(f"renewable {r.id!r}: profile entries outside [0, 1]")

    # node attachment consistency
    for n in network.nodes:
        for gid in n.generators:
            g = next((g for g in network.generators if g.id == gid), None)
            if g is None or g.node != n.id:
                rep.add(f"node {n.id!r}: lists generator {gid!r} not located there")
        for rid in n.renewables:
            r = next((r for r in network.renewables if r.id == rid), None)
            if r is None or r.node != n.id:
                rep.add(f"node {n.id!r}: lists renewable {rid!r} not located there")

    # scenario probabilities
    p = scenarios.probabilities
    if np.any(p < 0.0):
        rep.add("scenarios: negative probability")
    if abs(float(p.sum()) - 1.0) > 1e-12:
        rep.add(f"scenarios: probabilities sum to {float(p.sum())!r}, not 1")

    # season partition of the period axis
    covered: list[int] = []
    for s, ts in scenarios.seasons.items():
        covered.extend(ts)
    if sorted(covered) != list(range(n_p)):
        rep.add("scenarios: seasons do not partition the period axis "
                f"(got {sorted(covered)}, expected 0..{n_p - 1})")

    # demand curves
    for node, slope in scenarios.demand_slope.items():
        if node not in node_ids:
            rep.add(f"demand: unknown node {node!r}")
        if node not in scenarios.demand_intercept:
            rep.add(f"demand: node {node!r} has slopes but no intercepts")
            continue
        if slope.shape != (n_sc, n_p):
            rep.add(f"demand: node {node!r} slope shape {slope.shape}, "
                    f"expected ({n_sc}, {n_p})")
        elif np.any(slope >= 0.0):
            rep.add(f"demand: node {node!r} has non-negative slope "
                    "(inverse demand must be downward sloping)")
        if scenarios.demand_intercept[node].shape != slope.shape:
            rep.add(f"demand: node {node!r} intercept shape mismatch")
    for node in scenarios.demand_intercept:
        if node not in scenarios.demand_slope:
            rep.add(f"demand: node {node!r} has intercepts but no slopes")

    if scenarios.annualization_hours <= 0.0:
        rep.add("scenarios: annualization_hours must be > 0")

    return rep
