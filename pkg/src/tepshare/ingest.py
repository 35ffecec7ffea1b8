"""Build Network/ScenarioSet instances from CSV inputs.

Two demand sources are supported:

* ``timeseries.csv`` (hourly price/demand/renewable factors per node):
  scenarios are sampled as consecutive blocks, one per season, and the
  linear demand curves are fitted through each sampled (price, demand)
  point at a configured elasticity;
* ``demand_curves.csv`` (explicit slopes/intercepts per scenario, node
  and period, with ``scenarios.csv`` and ``seasons.csv``): used by the
  small analytic fixtures whose curves are exact by construction.

All files are UTF-8 CSV with a header row and ``.`` decimal separator.
Empty or ``inf`` capacity fields mean unbounded.  The key=value config
file carries the sampling, solver and run settings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ParseError, ValidationError
from .model import (DemandCurve, Generator, Line, Network, Node, Renewable,
                    ScenarioSet, validate)

__all__ = [
    "TimeSeriesTable", "SamplingConfig",
    "build_demand_curve", "sample_scenarios", "load_network", "read_config",
]

# calendar-month season windows (the data source does not define them)
_SEASON_MONTHS = {
    "winter": (12, 1, 2),
    "spring": (3, 4, 5),
    "summer": (6, 7, 8),
    "autumn": (9, 10, 11),
}


@dataclass(frozen=True)
class TimeSeriesTable:
    """Hourly history: prices, demand and renewable factors per node."""

    timestamps: np.ndarray          # datetime64[ns], strictly hourly
    nodes: tuple
    price: np.ndarray               # (n_hours, n_nodes) EUR/MWh
    demand: np.ndarray              # (n_hours, n_nodes) MW, > 0
    factors: dict                   # ren_id -> (n_hours,) in [0, 1]

    def __post_init__(self):
        ts = self.timestamps
        if ts.size >= 2:
            steps = np.diff(ts)
            if not np.all(steps == np.timedelta64(1, "h")):
                raise ValueError("timestamps must be strictly increasing "
                                 "with hourly spacing")
        if np.any(self.demand <= 0.0):
            raise ValueError("demand must be positive on every row")

    @property
    def n_hours(self) -> int:
        return self.timestamps.size

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesTable":
        df = pd.read_csv(path)
        required = {"timestamp", "node_id", "price_eur_mwh", "demand_mw"}
        missing = required - set(df.columns)
        if missing:
            raise ParseError(f"{Path(path).name}: missing columns {sorted(missing)}")
        df["timestamp"] = pd.to_datetime(df["timestamp"])
        nodes = tuple(dict.fromkeys(df["node_id"]))
        price = df.pivot(index="timestamp", columns="node_id",
                         values="price_eur_mwh")[list(nodes)]
        demand = df.pivot(index="timestamp", columns="node_id",
                          values="demand_mw")[list(nodes)]
        if price.isna().any().any() or demand.isna().any().any():
            raise ParseError(f"{Path(path).name}: missing price/demand entries")
        factors = {}
        for col in df.columns:
            if not col.endswith(":factor"):
                continue
            rid = col[: -len(":factor")]
            series = df[["timestamp", col]].dropna()
            per_ts = series.groupby("timestamp")[col].mean()
            if len(per_ts) != len(price.index):
                raise ParseError(
                    f"{Path(path).name}: factor column {col!r} does not cover "
                    "every timestamp")
            factors[rid] = per_ts.reindex(price.index).to_numpy(dtype=float)
        return cls(timestamps=price.index.to_numpy(), nodes=nodes,
                   price=price.to_numpy(dtype=float),
                   demand=demand.to_numpy(dtype=float), factors=factors)


@dataclass(frozen=True)
class SamplingConfig:
    n_scenarios: int
    hours_per_season: int = 168
    seasons: tuple = ("winter", "spring", "summer", "autumn")
    seed: int = 0
    year_range: tuple = (1900, 2100)
    elasticity: float = -0.05
    annualization_hours: float = 8760.0

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be >= 1")
        if self.hours_per_season < 1:
            raise ValueError("hours_per_season must be >= 1")


def build_demand_curve(price: float, demand: float,
                       elasticity: float) -> DemandCurve:
    """Fit a linear inverse demand curve through one (price, demand) point.

    The fitted curve passes through (demand, |price|) with local price
    elasticity equal to ``elasticity`` there; the absolute value absorbs
    historical hours with negative prices (the fitted price at the
    observed demand is then +|price|).
    """
    if demand <= 0.0:
        raise ValueError(f"demand must be positive, got {demand}")
    if elasticity >= 0.0:
        raise ValueError(f"price elasticity must be negative, got {elasticity}")
    if price == 0.0:
        raise ValueError("zero price gives a degenerate (flat) demand curve")
    p = abs(price)
    slope = (1.0 / elasticity) * p / demand
    intercept = (1.0 - 1.0 / elasticity) * p
    return DemandCurve(slope=slope, intercept=intercept)


def _season_index(timestamps, seasons) -> np.ndarray:
    months = pd.DatetimeIndex(timestamps).month.to_numpy()
    out = np.full(months.size, -1, dtype=int)
    for s_idx, label in enumerate(seasons):
        for m in _SEASON_MONTHS[label]:
            out[months == m] = s_idx
    return out


def _draw_block_starts(table: TimeSeriesTable, cfg: SamplingConfig) -> np.ndarray:
    """(n_scenarios, n_seasons) start rows of hour-consecutive blocks."""
    h = cfg.hours_per_season
    season_of = _season_index(table.timestamps, cfg.seasons)
    years = pd.DatetimeIndex(table.timestamps).year.to_numpy()
    in_years = (years >= cfg.year_range[0]) & (years <= cfg.year_range[1])
    rng = np.random.default_rng(cfg.seed)
    starts = np.empty((cfg.n_scenarios, len(cfg.seasons)), dtype=int)
    for s_idx, label in enumerate(cfg.seasons):
        ok = (season_of == s_idx) & in_years
        window = np.convolve(ok.astype(int), np.ones(h, dtype=int), "valid")
        eligible = np.flatnonzero(window == h)
        if eligible.size == 0:
            raise ValueError(
                f"season {label!r}: no window of {h} consecutive in-season "
                "hours inside the configured year range")
        starts[:, s_idx] = eligible[rng.integers(0, eligible.size,
                                                 size=cfg.n_scenarios)]
    return starts


def sample_scenarios(table: TimeSeriesTable,
                     cfg: SamplingConfig) -> ScenarioSet:
    """Draw block scenarios and fit demand curves from the sampled hours.

    Each scenario consists of one block of ``hours_per_season``
    consecutive hours per season, drawn uniformly over the feasible
    starts within that season's calendar window across the year range;
    the same blocks are shared by all nodes, since the market couples
    nodes hour by hour.  Deterministic under a fixed seed; probabilities
    are uniform.
    """
    h = cfg.hours_per_season
    starts = _draw_block_starts(table, cfg)
    rows = np.concatenate(
        [starts[:, s_idx, None] + np.arange(h)[None, :]
         for s_idx in range(len(cfg.seasons))],
        axis=1)                                        # (n_scenarios, T)

    slope = {}
    intercept = {}
    inv_e = 1.0 / cfg.elasticity
    if cfg.elasticity >= 0.0:
        raise ValueError("price elasticity must be negative")
    for j, node in enumerate(table.nodes):
        price = np.abs(table.price[rows, j])
        demand = table.demand[rows, j]
        if np.any(demand <= 0.0):
            raise ValueError(f"node {node!r}: nonpositive demand in a "
                             "sampled hour")
        slope[node] = inv_e * price / demand
        intercept[node] = (1.0 - inv_e) * price

    seasons = {label: tuple(range(s_idx * h, (s_idx + 1) * h))
               for s_idx, label in enumerate(cfg.seasons)}
    return ScenarioSet(
        probabilities=np.full(cfg.n_scenarios, 1.0 / cfg.n_scenarios),
        seasons=seasons,
        demand_slope=slope,
        demand_intercept=intercept,
        annualization_hours=cfg.annualization_hours,
        sampled_rows=rows,
    )


# ---------------------------------------------------------------------------
# CSV loading

def read_config(path) -> dict:
    """Parse a key=value config file; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{Path(path).name} line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _capacity(value, *, context) -> float:
    """Parse a capacity field; blank or 'inf' means unbounded."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return np.inf
    s = str(value).strip()
    if s == "" or s.lower() == "inf":
        return np.inf
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"{context}: cannot parse capacity {value!r}") from None


def _read(path: Path, name: str, required=True) -> pd.DataFrame | None:
    f = path / name
    if not f.exists():
        if required:
            raise ParseError(f"missing input file {name}")
        return None
    try:
        return pd.read_csv(f, dtype=str, keep_default_na=False)
    except Exception as exc:
        raise ParseError(f"{name}: {exc}") from exc


def _num(df_value, *, context) -> float:
    try:
        return float(df_value)
    except (TypeError, ValueError):
        raise ParseError(f"{context}: cannot parse number {df_value!r}") from None


def _flag(df_value, *, context) -> bool:
    s = str(df_value).strip()
    if s not in ("0", "1"):
        raise ParseError(f"{context}: expected 0 or 1, got {df_value!r}")
    return s == "1"


def load_network(source, overrides: dict | None = None):
    """Load (Network, ScenarioSet) from a fixture directory.

    The directory holds nodes/lines/generators/gen_costs and optional
    renewables/gen_energy_limits CSVs plus a ``config.txt``; demand comes
    from either explicit curves or a time series (see module docstring).
    ``overrides`` replaces config entries (CLI flags use this).

    Raises ParseError with file/row context for malformed inputs and
    ValidationError carrying the violation list if the assembled
    instance is not well-formed.
    """
    path = Path(source)
    if not path.is_dir():
        raise ParseError(f"{source}: not a directory")
    cfg = read_config(path / "config.txt") if (path / "config.txt").exists() else {}
    if overrides:
        cfg.update(overrides)

    nodes_df = _read(path, "nodes.csv")
    node_ids = []
    nodes = []
    for i, row in nodes_df.iterrows():
        ctx = f"nodes.csv row {i + 2}"
        nid = row["node_id"].strip()
        nodes.append(Node(nid, row["country"].strip()))
        node_ids.append(nid)
    known = set(node_ids)

    lines = []
    lines_df = _read(path, "lines.csv", required=False)
    if lines_df is not None:
        for i, row in lines_df.iterrows():
            ctx = f"lines.csv row {i + 2}"
            for col in ("from", "to"):
                if row[col].strip() not in known:
                    raise ParseError(f"{ctx}: unknown node id {row[col]!r}")
            lines.append(Line(
                id=row["line_id"].strip(),
                from_node=row["from"].strip(),
                to_node=row["to"].strip(),
                f_max=_capacity(row["f_max_mw"], context=ctx),
                inv_cost=_num(row["inv_cost_eur_per_mw_yr"], context=ctx),
                expandable=_flag(row["expandable"], context=ctx),
                x_max=_capacity(row.get("x_max_mw", ""), context=ctx),
            ))

    gens_df = _read(path, "generators.csv", required=False)
    costs_df = _read(path, "gen_costs.csv", required=False)
    marg_cost: dict[str, dict[str, float]] = {}
    slope_of: dict[str, float] = {}
    if costs_df is not None:
        for i, row in costs_df.iterrows():
            ctx = f"gen_costs.csv row {i + 2}"
            gid = row["gen_id"].strip()
            marg_cost.setdefault(gid, {})[row["season"].strip()] = \
                _num(row["marg_cost_eur_per_mwh"], context=ctx)
            if "marg_cost_slope" in row.index and str(row["marg_cost_slope"]).strip():
                slope_of[gid] = _num(row["marg_cost_slope"], context=ctx)

    limits_df = _read(path, "gen_energy_limits.csv", required=False)

    generators = []
    if gens_df is not None:
        for i, row in gens_df.iterrows():
            ctx = f"generators.csv row {i + 2}"
            gid = row["gen_id"].strip()
            if row["node_id"].strip() not in known:
                raise ParseError(f"{ctx}: unknown node id {row['node_id']!r}")
            if gid not in marg_cost:
                raise ParseError(f"{ctx}: no marginal costs for {gid!r} "
                                 "in gen_costs.csv")
            generators.append(Generator(
                id=gid,
                node=row["node_id"].strip(),
                g_max=_capacity(row["g_max_mw"], context=ctx),
                inv_cost=_num(row["inv_cost_eur_per_mw_yr"], context=ctx),
                marg_cost=marg_cost[gid],
                marg_cost_slope=slope_of.get(gid, 0.0),
                expandable=_flag(row["expandable"], context=ctx),
            ))

    rens_df = _read(path, "renewables.csv", required=False)

    # --- demand / scenarios
    direct = (path / "demand_curves.csv").exists()
    if direct:
        scen = _load_direct_scenarios(path, cfg)
    else:
        table = TimeSeriesTable.from_csv(path / "timeseries.csv")
        samp = SamplingConfig(
            n_scenarios=int(cfg.get("n_scenarios", 10)),
            hours_per_season=int(cfg.get("hours_per_season", 168)),
            seed=int(cfg.get("seed", 0)),
            year_range=(int(cfg.get("year_start", 1900)),
                        int(cfg.get("year_end", 2100))),
            elasticity=float(cfg.get("elasticity", -0.05)),
            annualization_hours=float(cfg.get("annualization_hours", 8760.0)),
        )
        scen = sample_scenarios(table, samp)

    ns, np_ = scen.n_scenarios, scen.n_periods

    renewables = []
    if rens_df is not None and len(rens_df):
        profiles = _renewable_profiles(path, rens_df, scen, direct,
                                       table if not direct else None)
        for i, row in rens_df.iterrows():
            ctx = f"renewables.csv row {i + 2}"
            rid = row["ren_id"].strip()
            if row["node_id"].strip() not in known:
                raise ParseError(f"{ctx}: unknown node id {row['node_id']!r}")
            renewables.append(Renewable(
                id=rid,
                node=row["node_id"].strip(),
                g_r=_num(row["g_r_mw"], context=ctx),
                inv_cost=_num(row["inv_cost_eur_per_mw_yr"], context=ctx),
                profile=profiles[rid],
                expandable=_flag(row["expandable"], context=ctx),
            ))

    if limits_df is not None and len(limits_df):
        by_gen: dict[str, dict[str, np.ndarray]] = {}
        for i, row in limits_df.iterrows():
            ctx = f"gen_energy_limits.csv row {i + 2}"
            gid = row["gen_id"].strip()
            season = row["season"].strip()
            value = _num(row["q_max_mwh"], context=ctx)
            limits = by_gen.setdefault(gid, {})
            arr = limits.setdefault(season, np.full(ns, np.inf))
            s = row["scenario"].strip()
            if s == "*":
                arr[:] = value
            else:
                w = int(s)
                if not 0 <= w < ns:
                    raise ParseError(f"{ctx}: scenario {w} out of range")
                arr[w] = value
        generators = [
            replace(g, q_max_seasonal=by_gen[g.id]) if g.id in by_gen else g
            for g in generators
        ]

    net = Network.build(nodes, lines, generators, renewables)
    report = validate(net, scen)
    if not report.ok:
        raise ValidationError(report.violations)
    return net, scen


def _load_direct_scenarios(path: Path, cfg: dict) -> ScenarioSet:
    sc_df = _read(path, "scenarios.csv")
    probs = np.empty(len(sc_df))
    for i, row in sc_df.iterrows():
        ctx = f"scenarios.csv row {i + 2}"
        w = int(row["scenario"])
        if not 0 <= w < len(sc_df):
            raise ParseError(f"{ctx}: scenario ids must be 0..n-1")
        probs[w] = _num(row["probability"], context=ctx)

    se_df = _read(path, "seasons.csv")
    seasons: dict[str, list[int]] = {}
    for i, row in se_df.iterrows():
        seasons.setdefault(row["season"].strip(), []).append(int(row["period"]))
    seasons_t = {s: tuple(ts) for s, ts in seasons.items()}
    n_periods = sum(len(ts) for ts in seasons_t.values())

    dc_df = _read(path, "demand_curves.csv")
    slope: dict[str, np.ndarray] = {}
    intercept: dict[str, np.ndarray] = {}
    filled: dict[str, np.ndarray] = {}
    for i, row in dc_df.iterrows():
        ctx = f"demand_curves.csv row {i + 2}"
        node = row["node_id"].strip()
        w, t = int(row["scenario"]), int(row["period"])
        if node not in slope:
            slope[node] = np.full((probs.size, n_periods), np.nan)
            intercept[node] = np.full((probs.size, n_periods), np.nan)
            filled[node] = np.zeros((probs.size, n_periods), dtype=bool)
        if not (0 <= w < probs.size and 0 <= t < n_periods):
            raise ParseError(f"{ctx}: scenario/period out of range")
        slope[node][w, t] = _num(row["slope"], context=ctx)
        intercept[node][w, t] = _num(row["intercept"], context=ctx)
        filled[node][w, t] = True
    for node, mask in filled.items():
        if not mask.all():
            raise ParseError(f"demand_curves.csv: node {node!r} missing "
                             "entries for some (scenario, period)")

    ann = cfg.get("annualization_hours", "match")
    annualization = float(n_periods) if str(ann).strip() == "match" else float(ann)
    return ScenarioSet(probabilities=probs, seasons=seasons_t,
                       demand_slope=slope, demand_intercept=intercept,
                       annualization_hours=annualization)


def _renewable_profiles(path: Path, rens_df, scen: ScenarioSet, direct: bool,
                        table: TimeSeriesTable | None) -> dict:
    """Per-renewable (n_scenarios, n_periods) factor arrays."""
    ns, np_ = scen.n_scenarios, scen.n_periods
    out = {}
    if direct:
        pr_df = _read(path, "ren_profiles.csv")
        arrays: dict[str, np.ndarray] = {}
        for i, row in pr_df.iterrows():
            ctx = f"ren_profiles.csv row {i + 2}"
            rid = row["ren_id"].strip()
            arr = arrays.setdefault(rid, np.full((ns, np_), np.nan))
            arr[int(row["scenario"]), int(row["period"])] = \
                _num(row["factor"], context=ctx)
        for i, row in rens_df.iterrows():
            rid = row["ren_id"].strip()
            if rid not in arrays or np.isnan(arrays[rid]).any():
                raise ParseError(f"ren_profiles.csv: incomplete profile "
                                 f"for {rid!r}")
            out[rid] = arrays[rid]
    else:
        for i, row in rens_df.iterrows():
            rid = row["ren_id"].strip()
            if rid not in table.factors:
                raise ParseError(f"timeseries.csv: no factor column "
                                 f"{rid + ':factor'!r} for renewable {rid!r}")
            out[rid] = table.factors[rid][scen.sampled_rows]
    return out
