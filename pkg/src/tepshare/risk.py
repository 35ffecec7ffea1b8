"""Risk measures over welfare/compensation ensembles.

Works on probability-weighted scenario ensembles.  Losses are the
negative part of the net welfare effect (gains count as zero), and the
tail measure is CVaR in the Rockafellar-Uryasev form, which handles
probability atoms straddling the quantile correctly.  Standard
deviations are population statistics under the scenario weights: the
probabilities are exact model weights, not samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RiskRow", "loss", "cvar", "weighted_mean", "weighted_std",
    "correlation", "summary", "quantile_rows",
    "write_risk_table_csv", "write_correlations_csv", "write_quantiles_csv",
]

_FMT = "%.17g"


def loss(ntw) -> np.ndarray:
    """Per-scenario welfare loss: max(0, -ntw)."""
    return np.maximum(0.0, -np.asarray(ntw, dtype=float))


def weighted_mean(x, probabilities) -> float:
    return float(np.asarray(probabilities) @ np.asarray(x))


def weighted_std(x, probabilities) -> float:
    p = np.asarray(probabilities, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.size and np.ptp(x) == 0.0:
        return 0.0
    m = float(p @ x)
    return float(np.sqrt(max(0.0, p @ ((x - m) ** 2))))


def cvar(losses, probabilities, alpha: float) -> float:
    """CVaR_alpha of a discrete loss distribution.

    Evaluates min over eta of  eta + (1-alpha)^-1 * E[max(0, L - eta)];
    the minimum is attained at any alpha-quantile of L, so we take the
    smallest value whose cumulative probability reaches alpha and
    average the tail beyond it.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    L = np.asarray(losses, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    order = np.argsort(L, kind="stable")
    L, p = L[order], p[order]
    cum = np.cumsum(p)
    k = int(np.searchsorted(cum, alpha - 1e-15))
    eta = L[min(k, L.size - 1)]
    tail = float(p @ np.maximum(0.0, L - eta))
    return float(eta + tail / (1.0 - alpha))


def correlation(x, y, probabilities) -> float:
    """Probability-weighted Pearson correlation coefficient."""
    p = np.asarray(probabilities, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = weighted_std(x, p), weighted_std(y, p)
    if sx <= 0.0 or sy <= 0.0:
        raise ValueError("correlation undefined: a series has zero variance")
    mx, my = float(p @ x), float(p @ y)
    cov = float(p @ ((x - mx) * (y - my)))
    return cov / (sx * sy)


@dataclass(frozen=True)
class RiskRow:
    """One (mechanism, country) row of the risk table.

    tail_convention records what the CVaR column measures: "loss" is the
    default (CVaR of max(0, -NTW), never below E[L]); "net" is the
    sensitivity variant on -NTW directly, where gains offset the tail.
    """

    mechanism: str
    country: str
    std_c: float
    std_ntw: float
    p_loss: float
    e_loss: float
    cvar_loss: float
    tail_convention: str = "loss"

    def __post_init__(self):
        if not 0.0 <= self.p_loss <= 1.0:
            raise ValueError("loss probability outside [0, 1]")
        if self.tail_convention == "loss" and \
                self.e_loss > self.cvar_loss + 1e-9 * (1.0 + abs(self.e_loss)):
            raise ValueError("E[L] cannot exceed CVaR of L")


def summary(net_welfare_by_mechanism, schedules_by_mechanism,
            alpha: float = 0.8, cvar_on_net: bool = False) -> list[RiskRow]:
    """Risk table rows per (mechanism, country).

    Both arguments are mappings keyed by mechanism name: the
    post-compensation NetWelfare ensembles and the CompensationSchedules
    they came from (for std of the compensation amount itself).

    By default the tail measure is CVaR of the welfare loss (gains count
    as zero).  ``cvar_on_net=True`` switches to CVaR of -NTW directly, a
    sensitivity variant in which gains offset the tail (the value can
    then be negative and the E[L] <= CVaR invariant is not enforced).
    """
    rows = []
    for mech, nw in net_welfare_by_mechanism.items():
        sched = schedules_by_mechanism[mech]
        p = nw.probabilities
        for country in nw.countries:
            ntw = nw.row(country)
            L = loss(ntw)
            rows.append(RiskRow(
                mechanism=mech,
                country=country,
                std_c=weighted_std(sched.row(country), p),
                std_ntw=weighted_std(ntw, p),
                p_loss=float(p[ntw < 0.0].sum()),
                e_loss=weighted_mean(L, p),
                cvar_loss=cvar(-ntw if cvar_on_net else L, p, alpha),
                tail_convention="net" if cvar_on_net else "loss",
            ))
    return rows


def quantile_rows(values_by_mechanism, kind: str) -> list[dict]:
    """Boxplot-ready five-number summaries per (mechanism, country).

    values_by_mechanism maps mechanism -> object with .countries and
    .row(country); quantiles are plain scenario quantiles (the plotting
    convention), not probability-weighted.
    """
    rows = []
    for mech, ens in values_by_mechanism.items():
        for country in ens.countries:
            v = np.asarray(ens.row(country))
            q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
            rows.append({"kind": kind, "mechanism": mech, "country": country,
                         "min": q[0], "q1": q[1], "median": q[2],
                         "q3": q[3], "max": q[4]})
    return rows


def write_risk_table_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "country", "std_c", "std_ntw", "p_loss",
                    "e_loss", "cvar80_loss"])
        for r in rows:
            w.writerow([r.mechanism, r.country, _FMT % r.std_c,
                        _FMT % r.std_ntw, _FMT % r.p_loss, _FMT % r.e_loss,
                        _FMT % r.cvar_loss])


def write_correlations_csv(entries, path) -> None:
    """entries: iterable of (table, row_label, col_label, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["table", "row", "col", "value"])
        for table, row, col, value in entries:
            w.writerow([table, row, col, _FMT % value])


def write_quantiles_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "mechanism", "country", "min", "q1", "median",
                    "q3", "max"])
        for r in rows:
            w.writerow([r["kind"], r["mechanism"], r["country"],
                        _FMT % r["min"], _FMT % r["q1"], _FMT % r["median"],
                        _FMT % r["q3"], _FMT % r["max"]])
