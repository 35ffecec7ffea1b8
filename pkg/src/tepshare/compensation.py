"""Welfare-compensation mechanisms calibrated to a target share rule.

Every mechanism is parametrized so that the expected compensation to each
participating country equals its target transfer: the gap between its
entitled share of the expected aggregate welfare effect and its own
expected effect.  The mechanisms differ in how the per-scenario amounts
track the realized outcome:

* lump sum: constant, scenario-independent;
* PPA: one country virtually trades its flow on the new line at a fixed
  price, settling against its own spot price (bilateral only, and the
  counterparty payment is defined as the negation: with uncertainty two
  one-sided PPAs do not balance per scenario);
* flow / value based: payments proportional to the line's total flow or
  to its economic value (flow times the endpoint-average price);
* ideal: directly shares the realized aggregate effect in every scenario.

Calibration failures (zero expected flow or flow value) raise
CalibrationError rather than silently emitting zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .equilibrium import DispatchSolution
from .errors import CalibrationError
from .model import Network
from .welfare import DeltaWelfare

__all__ = [
    "ShareRule", "TransferTargets", "LineObservables",
    "CompensationSchedule", "NetWelfare",
    "targets", "lump_sum", "ppa", "flow_mech", "value_mech", "ideal_mech",
    "no_compensation", "apply",
    "write_compensation_csv", "write_parameters_csv",
]

_FMT = "%.17g"


@dataclass(frozen=True)
class ShareRule:
    """Participating countries and their entitled shares (sum to one)."""

    countries: tuple
    shares: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shares", np.asarray(self.shares, dtype=float))
        if self.shares.shape != (len(self.countries),):
            raise ValueError("one share per country required")
        if np.any(self.shares < 0.0) or abs(float(self.shares.sum()) - 1.0) > 1e-12:
            raise ValueError("shares must be nonnegative and sum to 1")

    @classmethod
    def equal(cls, countries) -> "ShareRule":
        countries = tuple(countries)
        return cls(countries, np.full(len(countries), 1.0 / len(countries)))


@dataclass(frozen=True)
class TransferTargets:
    """Expected transfer owed to each country; always sums to zero."""

    countries: tuple
    values: np.ndarray

    def of(self, country: str) -> float:
        return float(self.values[self.countries.index(country)])


def targets(delta: DeltaWelfare, rule: ShareRule) -> TransferTargets:
    """t_i = share_i * sum_j E[dTW_j] - E[dTW_i]."""
    missing = [c for c in rule.countries if c not in delta.countries]
    if missing:
        raise ValueError(f"participants missing from delta: {missing}")
    exp = delta.expected()
    sub = np.array([exp[delta.countries.index(c)] for c in rule.countries])
    t = rule.shares * sub.sum() - sub
    return TransferTargets(rule.countries, t)


@dataclass(frozen=True)
class LineObservables:
    """Flow and endpoint prices of the designated line, per (scenario, period).

    Flow is positive in the from -> to direction.  hour_weight converts
    period sums to annual figures, matching the welfare accounts.
    """

    line_id: str
    from_country: str
    to_country: str
    flow: np.ndarray          # (n_scenarios, n_periods), MW
    price_from: np.ndarray
    price_to: np.ndarray
    probabilities: np.ndarray
    hour_weight: float = 1.0

    @property
    def mid_price(self) -> np.ndarray:
        return 0.5 * (self.price_from + self.price_to)

    def total_flow(self) -> np.ndarray:
        """Annualized flow volume per scenario (MWh/yr)."""
        return self.hour_weight * self.flow.sum(axis=1)

    def total_value(self) -> np.ndarray:
        """Annualized flow value per scenario (EUR/yr), at the mid price."""
        return self.hour_weight * (self.flow * self.mid_price).sum(axis=1)

    @classmethod
    def from_solution(cls, solution: DispatchSolution, network: Network,
                      line_id: str) -> "LineObservables":
        l = network.line(line_id)
        lpos = solution.line_ids.index(line_id)
        node_pos = {nid: i for i, nid in enumerate(solution.node_ids)}
        country = network.country_of
        return cls(
            line_id=line_id,
            from_country=country[l.from_node],
            to_country=country[l.to_node],
            flow=solution.f[:, lpos, :].copy(),
            price_from=solution.pi[:, node_pos[l.from_node], :].copy(),
            price_to=solution.pi[:, node_pos[l.to_node], :].copy(),
            probabilities=np.asarray(solution.probabilities),
            hour_weight=solution.hour_weight,
        )


@dataclass(frozen=True)
class CompensationSchedule:
    """Per-country, per-scenario payments; positive means the country receives."""

    mechanism: str
    countries: tuple
    payments: np.ndarray     # (n_countries, n_scenarios)
    probabilities: np.ndarray
    parameters: dict

    def expected(self) -> np.ndarray:
        return self.payments @ self.probabilities

    def row(self, country: str) -> np.ndarray:
        return self.payments[self.countries.index(country)]

    def scenario_sums(self) -> np.ndarray:
        return self.payments.sum(axis=0)


def lump_sum(t: TransferTargets, probabilities) -> CompensationSchedule:
    """Constant payment equal to the target transfer in every scenario."""
    values = np.asarray(t.values, dtype=float)
    if abs(float(values.sum())) > 1e-9 * max(1.0, float(np.abs(values).max())):
        raise ValueError("targets do not balance to zero")
    probabilities = np.asarray(probabilities, dtype=float)
    pay = np.repeat(values[:, None], probabilities.size, axis=1)
    return CompensationSchedule("lump_sum", t.countries, pay, probabilities,
                                {f"amount[{c}]": float(v)
                                 for c, v in zip(t.countries, values)})


def ppa(delta: DeltaWelfare, obs: LineObservables, base: str,
        target: float) -> CompensationSchedule:
    """Bilateral one-sided PPA: the base country trades its line flow at a
    fixed price, the counterparty pays the negation.

    The fixed price solves E[settlement] = target.  Only the two endpoint
    countries may participate: with more, there is no defined counterparty
    for a single PPA.
    """
    endpoints = {obs.from_country, obs.to_country}
    if base not in endpoints:
        raise ValueError(f"{base!r} is not an endpoint of line {obs.line_id!r}")
    extra = set(delta.countries) - endpoints
    if extra:
        raise CalibrationError(
            f"PPA is bilateral; cannot include {sorted(extra)}")
    other = (endpoints - {base}).pop()

    sign = 1.0 if base == obs.from_country else -1.0
    price_base = obs.price_from if base == obs.from_country else obs.price_to
    fsum = obs.hour_weight * sign * obs.flow.sum(axis=1)
    vsum = obs.hour_weight * sign * (obs.flow * price_base).sum(axis=1)
    p = obs.probabilities
    ef = float(p @ fsum)
    if abs(ef) < 1e-12 * max(1.0, float(np.abs(fsum).max(initial=0.0))):
        raise CalibrationError(
            f"cannot calibrate PPA for {base!r}: zero expected flow")
    price = (target + float(p @ vsum)) / ef
    c_base = price * fsum - vsum
    pay = np.vstack([c_base, -c_base])
    return CompensationSchedule(f"ppa_{base}", (base, other), pay, p,
                                {"ppa_price": price, "base": base})


def flow_mech(t: TransferTargets, obs: LineObservables) -> CompensationSchedule:
    """C_i = alpha_i * total line flow, with alpha_i = t_i / E[total flow]."""
    fsum = obs.total_flow()
    ef = float(obs.probabilities @ fsum)
    if abs(ef) < 1e-12 * max(1.0, float(np.abs(fsum).max(initial=0.0))):
        raise CalibrationError("cannot calibrate flow mechanism: "
                               "zero expected flow")
    alpha = np.asarray(t.values) / ef
    pay = alpha[:, None] * fsum[None, :]
    params = {f"alpha[{c}]": float(a) for c, a in zip(t.countries, alpha)}
    return CompensationSchedule("flow", t.countries, pay, obs.probabilities,
                                params)


def value_mech(t: TransferTargets, obs: LineObservables) -> CompensationSchedule:
    """C_i = beta_i * total flow value (mid-price), beta_i = t_i / E[value]."""
    vsum = obs.total_value()
    ev = float(obs.probabilities @ vsum)
    if abs(ev) < 1e-12 * max(1.0, float(np.abs(vsum).max(initial=0.0))):
        raise CalibrationError("cannot calibrate value mechanism: "
                               "zero expected flow value")
    beta = np.asarray(t.values) / ev
    pay = beta[:, None] * vsum[None, :]
    params = {f"beta[{c}]": float(b) for c, b in zip(t.countries, beta)}
    return CompensationSchedule("flow_value", t.countries, pay,
                                obs.probabilities, params)


def ideal_mech(delta: DeltaWelfare, rule: ShareRule) -> CompensationSchedule:
    """Share the realized aggregate effect in every scenario:
    C_i = share_i * sum_j dTW_j - dTW_i."""
    rows = np.vstack([delta.row(c) for c in rule.countries])
    total = rows.sum(axis=0)
    pay = rule.shares[:, None] * total[None, :] - rows
    params = {f"lambda[{c}]": float(s)
              for c, s in zip(rule.countries, rule.shares)}
    return CompensationSchedule("ideal", rule.countries, pay,
                                delta.probabilities, params)


def no_compensation(delta: DeltaWelfare, countries=None) -> CompensationSchedule:
    countries = tuple(countries) if countries else delta.countries
    pay = np.zeros((len(countries), delta.probabilities.size))
    return CompensationSchedule("no_comp", countries, pay,
                                delta.probabilities, {})


@dataclass(frozen=True)
class NetWelfare:
    """Post-compensation welfare effect: dTW + C per (country, scenario)."""

    countries: tuple
    ntw: np.ndarray
    probabilities: np.ndarray

    def row(self, country: str) -> np.ndarray:
        return self.ntw[self.countries.index(country)]

    def expected(self) -> np.ndarray:
        return self.ntw @ self.probabilities


def apply(delta: DeltaWelfare, schedule: CompensationSchedule) -> NetWelfare:
    missing = [c for c in schedule.countries if c not in delta.countries]
    if missing:
        raise ValueError(f"schedule countries missing from delta: {missing}")
    if schedule.payments.shape[1] != delta.probabilities.size:
        raise ValueError("scenario count mismatch")
    rows = np.vstack([delta.row(c) for c in schedule.countries])
    return NetWelfare(schedule.countries, rows + schedule.payments,
                      delta.probabilities)


def write_compensation_csv(schedules, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "country", "scenario", "amount"])
        for sched in schedules:
            for i, c in enumerate(sched.countries):
                for s in range(sched.probabilities.size):
                    w.writerow([sched.mechanism, c, s,
                                _FMT % sched.payments[i, s]])


def write_parameters_csv(schedules, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "param", "value"])
        for sched in schedules:
            for name, value in sched.parameters.items():
                if isinstance(value, str):
                    w.writerow([sched.mechanism, name, value])
                else:
                    w.writerow([sched.mechanism, name, _FMT % value])
