"""Regenerate the bundled synthetic 10-zone fixture (data/synthetic_ne).

A stylized Northern-European system: five Norwegian hydro zones with
seasonal energy budgets, thermal Germany, windy Denmark, import-dependent
Austria and France, gas-fired Netherlands, and a candidate NO2-DE cable.
One year of deterministic synthetic hourly history (prices, demand,
wind/solar factors) is written alongside the static network tables.

Magnitudes are invented; the point is the qualitative pattern (cheap
limited hydro north of an expensive thermal market) that makes the new
cable valuable to the system, profitable for Norway and painful for
German and Danish producers.

Run from the repository root:  python demos/make_synthetic_ne.py
"""

import csv
from pathlib import Path

import numpy as np
import pandas as pd

OUT = Path(__file__).resolve().parent.parent / "data" / "synthetic_ne"

SEED = 20210
YEAR = "2013"

ZONES = {
    # zone: (country, mean demand MW, mean price EUR/MWh)
    "NO1": ("NO", 110.0, 27.0),
    "NO2": ("NO", 90.0, 25.0),
    "NO3": ("NO", 70.0, 26.0),
    "NO4": ("NO", 50.0, 24.0),
    "NO5": ("NO", 60.0, 25.0),
    "DE":  ("DE", 460.0, 46.0),
    "DK1": ("DK", 45.0, 42.0),
    "AT":  ("AT", 135.0, 48.0),
    "FR":  ("FR", 552.0, 45.0),
    "NL":  ("NL", 150.0, 47.0),
}

LINES = [
    # line_id, from, to, f_max, inv_cost, expandable, x_max
    ("NO1-NO2", "NO1", "NO2", 250, 36399, 1, 500),
    ("NO1-NO3", "NO1", "NO3", 120, 56874, 1, 500),
    ("NO1-NO5", "NO1", "NO5", 150, 52324, 1, 500),
    ("NO2-NO5", "NO2", "NO5", 150, 53461, 1, 500),
    ("NO5-NO3", "NO5", "NO3", 100, 79623, 1, 500),
    ("NO3-NO4", "NO3", "NO4", 80, 130809, 1, 500),
    ("NO2-DE",  "NO2", "DE",  0,  70864, 1, 500),    # the candidate cable
    ("NO2-DK1", "NO2", "DK1", 60, 0, 0, ""),
    ("NO2-NL",  "NO2", "NL",  40,  0, 0, ""),
    ("DE-DK1",  "DE", "DK1",  120, 0, 0, ""),
    ("DE-NL",   "DE", "NL",   150, 0, 0, ""),
    ("DE-AT",   "DE", "AT",   120, 0, 0, ""),
    ("DE-FR",   "DE", "FR",   180, 0, 0, ""),
]

# seasonal marginal costs per technology (winter, spring, summer, autumn)
# and a slope making each stack's marginal cost rise with output (heat-rate
# spread within the fleet), which smooths the price response to imports
TECH_COSTS = {
    "hydro":   (1.0, 1.0, 1.0, 1.0),
    "coal":    (35.2, 29.8, 30.1, 35.4),
    "lignite": (38.9, 32.9, 33.3, 39.4),
    "ccgt":    (41.0, 33.8, 35.2, 39.3),
    "gas":     (63.1, 52.1, 54.2, 60.4),
    "nuclear": (15.0, 15.0, 15.0, 15.0),
}

TECH_SLOPE = {"hydro": 0.005, "coal": 0.06, "lignite": 0.06, "ccgt": 0.09,
              "gas": 0.18, "nuclear": 0.01}

TECH_INV = {"hydro": 90000, "coal": 136559, "lignite": 140826,
            "ccgt": 70413, "gas": 38407, "nuclear": 160000}

GENERATORS = [
    # gen_id, zone, tech, g_max MW
    ("hydro_no1", "NO1", "hydro", 150),
    ("hydro_no2", "NO2", "hydro", 200),
    ("hydro_no3", "NO3", "hydro", 90),
    ("hydro_no4", "NO4", "hydro", 70),
    ("hydro_no5", "NO5", "hydro", 120),
    ("coal_de",    "DE", "coal",    260),
    ("lignite_de", "DE", "lignite", 210),
    ("ccgt_de",    "DE", "ccgt",    180),
    ("gas_de",     "DE", "gas",     140),
    ("coal_dk1",   "DK1", "coal",   40),
    ("hydro_at",   "AT", "hydro",   40),
    ("gas_at",     "AT", "gas",     60),
    ("nuclear_fr", "FR", "nuclear", 430),
    ("gas_fr",     "FR", "gas",     60),
    ("ccgt_nl",    "NL", "ccgt",    80),
    ("gas_nl",     "NL", "gas",     20),
]

# hydro seasonal energy budgets as a share of flat-out seasonal energy,
# same in every scenario ("*" rows); spring/summer carry the inflow.
# Norway is deliberately energy-long relative to its demand plus existing
# export capacity, so surplus water sits behind the candidate cable.
HYDRO_BUDGET = {
    "hydro_no1": (0.80, 0.90, 0.95, 0.85),
    "hydro_no2": (0.82, 0.92, 0.96, 0.86),
    "hydro_no3": (0.78, 0.90, 0.94, 0.84),
    "hydro_no4": (0.76, 0.88, 0.94, 0.82),
    "hydro_no5": (0.80, 0.92, 0.95, 0.85),
    "hydro_at":  (0.45, 0.60, 0.55, 0.50),
}

RENEWABLES = [
    # ren_id, zone, g_r MW, inv_cost, kind
    ("wind_de",  "DE", 290, 78735, "wind"),
    ("solar_de", "DE", 100, 66224, "solar"),
    ("wind_dk1", "DK1", 50, 78735, "wind"),
    ("wind_nl",  "NL",  20, 78735, "wind"),
]

CONFIG = """\
# synthetic Northern-European fixture: sampling and run settings
elasticity = -0.05
n_scenarios = 8
hours_per_season = 12
seed = 7
year_start = 2013
year_end = 2013
annualization_hours = 8760
candidate_line = NO2-DE
share_rule = equal:NO,DE,DK,AT,FR
mechanisms = lump,flow,value,ideal
cvar_alpha = 0.8
"""


def hourly_series(rng):
    """Synthetic hourly prices, demand and factors for one calendar year."""
    idx = pd.date_range(f"{YEAR}-01-01", f"{YEAR}-12-31 23:00", freq="h")
    n = len(idx)
    hour = idx.hour.to_numpy()
    doy = idx.dayofyear.to_numpy()
    season_peak = np.cos(2.0 * np.pi * (doy - 15) / 365.0)   # winter high
    diurnal = np.sin(2.0 * np.pi * (hour - 7) / 24.0)

    def ar_noise(scale, rho=0.95):
        eps = rng.normal(0.0, scale * np.sqrt(1 - rho**2), size=n)
        out = np.empty(n)
        out[0] = eps[0]
        for i in range(1, n):
            out[i] = rho * out[i - 1] + eps[i]
        return out

    demand, price = {}, {}
    # one continental weather driver plus a Nordic hydrological driver
    weather = ar_noise(1.0)
    hydrology = ar_noise(1.0, rho=0.995)
    for zone, (_, d0, p0) in ZONES.items():
        nordic = zone.startswith("NO")
        local = ar_noise(0.6)
        demand[zone] = d0 * (1.0 + 0.16 * season_peak + 0.10 * diurnal
                             + 0.05 * local + 0.03 * weather)
        demand[zone] = np.maximum(demand[zone], 0.2 * d0)
        driver = hydrology if nordic else weather
        swing = 0.18 if nordic else 0.25
        price[zone] = p0 * (1.0 + 0.10 * season_peak + 0.08 * diurnal
                            + swing * driver + 0.06 * local)

    factors = {}
    windiness = 0.45 + 0.15 * season_peak + 0.30 * ar_noise(0.8, rho=0.98)
    for rid, zone, _, _, kind in RENEWABLES:
        if kind == "wind":
            local = 0.12 * ar_noise(1.0, rho=0.9)
            factors[rid] = np.clip(windiness + local, 0.0, 1.0)
        else:
            daylight = np.maximum(0.0, np.sin(np.pi * (hour - 6) / 12.0))
            strength = 0.55 - 0.35 * season_peak
            factors[rid] = np.clip(
                daylight * strength * (1.0 + 0.15 * ar_noise(0.5)), 0.0, 1.0)
    return idx, demand, price, factors


def main():
    rng = np.random.default_rng(SEED)
    OUT.mkdir(parents=True, exist_ok=True)

    with open(OUT / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "country"])
        for zone, (country, _, _) in ZONES.items():
            w.writerow([zone, country])

    with open(OUT / "lines.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "from", "to", "f_max_mw",
                    "inv_cost_eur_per_mw_yr", "expandable", "x_max_mw"])
        for row in LINES:
            w.writerow(row)

    with open(OUT / "generators.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gen_id", "node_id", "g_max_mw",
                    "inv_cost_eur_per_mw_yr", "expandable"])
        for gid, zone, tech, g_max in GENERATORS:
            w.writerow([gid, zone, g_max, TECH_INV[tech], 0])

    with open(OUT / "gen_costs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gen_id", "season", "marg_cost_eur_per_mwh",
                    "marg_cost_slope"])
        for gid, _, tech, _ in GENERATORS:
            for season, cost in zip(("winter", "spring", "summer", "autumn"),
                                    TECH_COSTS[tech]):
                w.writerow([gid, season, cost, TECH_SLOPE[tech]])

    hours_per_season = 12   # must match config.txt
    n_scenarios = 8         # must match config.txt
    # wet/dry years: one systemic hydrology factor per scenario drives the
    # Norwegian budgets (Austrian hydro follows at half strength)
    wetness = rng.uniform(0.80, 1.25, size=n_scenarios)
    with open(OUT / "gen_energy_limits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gen_id", "scenario", "season", "q_max_mwh"])
        for gid, _, _, g_max in GENERATORS:
            if gid not in HYDRO_BUDGET:
                continue
            for omega in range(n_scenarios):
                factor = wetness[omega] if gid.endswith(
                    ("no1", "no2", "no3", "no4", "no5")) \
                    else 0.5 * (1.0 + wetness[omega])
                for season, share in zip(
                        ("winter", "spring", "summer", "autumn"),
                        HYDRO_BUDGET[gid]):
                    w.writerow([gid, omega, season,
                                round(min(1.0, factor * share)
                                      * g_max * hours_per_season, 1)])

    with open(OUT / "renewables.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ren_id", "node_id", "g_r_mw",
                    "inv_cost_eur_per_mw_yr", "expandable"])
        for rid, zone, g_r, inv, _ in RENEWABLES:
            w.writerow([rid, zone, g_r, inv, 0])

    idx, demand, price, factors = hourly_series(rng)
    ren_zone = {rid: zone for rid, zone, *_ in RENEWABLES}
    with open(OUT / "timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["timestamp", "node_id", "price_eur_mwh", "demand_mw"]
        header += [f"{rid}:factor" for rid in factors]
        w.writerow(header)
        stamps = idx.strftime("%Y-%m-%dT%H:%M:%S")
        for i, ts in enumerate(stamps):
            for zone in ZONES:
                row = [ts, zone, f"{price[zone][i]:.2f}",
                       f"{demand[zone][i]:.1f}"]
                row += [f"{factors[rid][i]:.3f}" if ren_zone[rid] == zone else ""
                        for rid in factors]
                w.writerow(row)

    (OUT / "config.txt").write_text(CONFIG)
    print(f"wrote {OUT} ({len(idx)} hours x {len(ZONES)} zones)")


if __name__ == "__main__":
    main()
