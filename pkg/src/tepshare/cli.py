"""Command-line front end.

Subcommands
-----------
validate    check a fixture directory for structural violations
analytic    closed-form two-node / three-node solutions
compare     solve with and without the candidate line, write welfare deltas
compensate  calibrate mechanisms on compare's artifacts, write risk tables
report      pretty-print the tables an output directory holds

Exit codes: 0 success, 1 input error, 2 numerical failure.  Every run
writes a manifest with the resolved settings, seed, tolerances and
library versions, so outputs are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytic
from .compensation import (LineObservables, ShareRule, apply, flow_mech,
                           ideal_mech, lump_sum, no_compensation, ppa,
                           targets, value_mech, write_compensation_csv,
                           write_parameters_csv)
from .equilibrium import (ExpansionMask, ToleranceSet, assemble,
                          congestion_rent, solve, verify_kkt,
                          write_prices_csv, write_solution_csv)
from .errors import (CalibrationError, NonConvergenceError, ParseError,
                     ValidationError)
from .ingest import load_network, read_config
from .risk import (correlation, quantile_rows, summary, weighted_std,
                   write_correlations_csv, write_quantiles_csv,
                   write_risk_table_csv)
from .welfare import DeltaWelfare, account, delta, write_delta_csv, \
    write_welfare_csv

_FMT = "%.17g"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        for name, value in exc.residuals.items():
            print(f"  {name}: {value:.3e}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tepshare")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    p.set_defaults(command=None)

    v = sub.add_parser("validate", help="check a fixture directory")
    v.add_argument("--data", required=True)
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("analytic", help="closed-form example systems")
    asub = a.add_subparsers(dest="system", required=True)
    two = asub.add_parser("two-node")
    for name, default in (("d1", "10,-1"), ("s1", "2,2"),
                          ("d2", "10,-2"), ("s2", "1,1")):
        two.add_argument(f"--{name}", default=default,
                         metavar="INTERCEPT,SLOPE")
    group = two.add_mutually_exclusive_group()
    group.add_argument("--cap", type=float)
    group.add_argument("--cost", type=float)
    two.set_defaults(func=cmd_analytic_two)
    three = asub.add_parser("three-node")
    for name, default in (("s1", "0,1"), ("d2", "6,-1"), ("d3", "6,-1")):
        three.add_argument(f"--{name}", default=default,
                           metavar="INTERCEPT,SLOPE")
    three.set_defaults(func=cmd_analytic_three)

    c = sub.add_parser("compare", help="solve with/without the candidate line")
    c.add_argument("--data", required=True)
    c.add_argument("--config", help="config file overriding the fixture's")
    c.add_argument("--line", help="candidate line id")
    c.add_argument("--seed", type=int)
    c.add_argument("--out", default="out")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("compensate",
                       help="calibrate mechanisms on compare artifacts")
    k.add_argument("--out", default="out")
    k.add_argument("--mechanisms",
                   help="comma list: lump,ppa:<country>,flow,value,ideal")
    k.add_argument("--alpha", type=float, help="CVaR level (default 0.8)")
    k.add_argument("--share-rule",
                   help="equal:<c1,c2,..>, risk:<c1,c2,..> or c1=w1,c2=w2,..")
    k.set_defaults(func=cmd_compensate)

    r = sub.add_parser("report", help="print tables from an output directory")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_report)
    return p


def _curve(text) -> analytic.LinearCurve:
    try:
        intercept, slope = (float(v) for v in text.split(","))
    except ValueError:
        raise ParseError(f"expected INTERCEPT,SLOPE, got {text!r}") from None
    return analytic.LinearCurve(intercept, slope)


def cmd_validate(args) -> int:
    try:
        load_network(args.data)
    except ValidationError as exc:
        for violation in exc.violations:
            print(violation)
        return 1
    print("ok")
    return 0


def cmd_analytic_two(args) -> int:
    kwargs = {"cap": args.cap} if args.cap is not None else \
        {"marginal_cost": args.cost if args.cost is not None else 0.0}
    sol = analytic.solve_two_node(_curve(args.d1), _curve(args.s1),
                                  _curve(args.d2), _curve(args.s2), **kwargs)
    for field in ("autarky_price_1", "autarky_price_2", "common_price",
                  "unconstrained_flow", "capacity", "price_1", "price_2",
                  "flow", "welfare_gain_1", "welfare_gain_2",
                  "congestion_rent", "optimal_capacity"):
        value = getattr(sol, field)
        if value is not None:
            print(f"{field} = {value:.6g}")
    return 0


def cmd_analytic_three(args) -> int:
    sol = analytic.solve_three_node(_curve(args.s1), _curve(args.d2),
                                    _curve(args.d3))
    print(f"price: old {sol.price_old:.6g} -> new {sol.price_new:.6g}")
    for label, cs, ps, tw in (("old", sol.cs_old, sol.ps_old, sol.tw_old),
                              ("new", sol.cs_new, sol.ps_new, sol.tw_new)):
        print(f"{label}: CS {tuple(round(v, 6) for v in cs)} "
              f"PS {tuple(round(v, 6) for v in ps)} "
              f"TW {tuple(round(v, 6) for v in tw)} "
              f"system {sum(tw):.6g}")
    print("delta TW:", tuple(round(v, 6) for v in sol.delta_tw))
    return 0


def _tolerances(cfg: dict) -> ToleranceSet:
    return ToleranceSet(
        kkt=float(cfg.get("kkt_tol", 1e-6)),
        feasibility=float(cfg.get("feasibility_tol", 1e-8)),
        solver=float(cfg.get("solver_tol", 1e-10)),
        max_iterations=int(cfg.get("max_iterations", 200)),
    )


def _config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def cmd_compare(args) -> int:
    data = Path(args.data)
    cfg = read_config(data / "config.txt") if (data / "config.txt").exists() else {}
    if args.config:
        cfg.update(read_config(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg.update(overrides)
    net, scen = load_network(data, overrides)

    line_id = args.line or cfg.get("candidate_line")
    if not line_id:
        print("error: no candidate line (use --line or candidate_line=...)",
              file=sys.stderr)
        return 1
    try:
        line = net.line(line_id)
    except KeyError:
        print(f"error: unknown candidate line {line_id!r}", file=sys.stderr)
        return 1
    if not line.expandable:
        print(f"error: line {line_id!r} is not expandable", file=sys.stderr)
        return 1
    cfg["candidate_line"] = line_id

    tol = _tolerances(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # NB: the two plan solves are independent and could run concurrently on
    # the shared immutable inputs; they run sequentially so repeated runs
    # stay reproducible bit for bit.
    sol_with = solve(assemble(net, scen), tol)
    sol_without = solve(assemble(
        net, scen, ExpansionMask().denying(lines=[line_id])), tol)

    for label, sol in (("with", sol_with), ("without", sol_without)):
        report = verify_kkt(net, scen, sol)
        if report.worst > tol.kkt:
            print(f"numerical failure: plan '{label}' verification residual "
                  f"{report.worst:.3e} exceeds {tol.kkt:g}", file=sys.stderr)
            return 2

    acc_with = account(sol_with, net, scen, kkt_tol=tol.kkt)
    acc_without = account(sol_without, net, scen, kkt_tol=tol.kkt)
    dw = delta(acc_with, acc_without)

    write_solution_csv(sol_with, out / "solution_with.csv")
    write_solution_csv(sol_without, out / "solution_without.csv")
    write_prices_csv(sol_with, out / "prices_with.csv")
    write_prices_csv(sol_without, out / "prices_without.csv")
    write_welfare_csv(acc_with, out / "welfare_with.csv")
    write_welfare_csv(acc_without, out / "welfare_without.csv")
    write_delta_csv(dw, out / "delta.csv")

    obs = LineObservables.from_solution(sol_with, net, line_id)
    with open(out / "line_observables.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "period", "flow_mw", "price_from", "price_to"])
        for wi in range(scen.n_scenarios):
            for t in range(scen.n_periods):
                w.writerow([wi, t, _FMT % obs.flow[wi, t],
                            _FMT % obs.price_from[wi, t],
                            _FMT % obs.price_to[wi, t]])

    rent = congestion_rent(sol_with, line_id, net)
    manifest = {
        "command": "compare",
        "config": cfg,
        "config_hash": _config_digest(cfg),
        "seed": cfg.get("seed"),
        "tolerances": {"kkt": tol.kkt, "feasibility": tol.feasibility,
                       "solver": tol.solver,
                       "max_iterations": tol.max_iterations},
        "candidate_line": line_id,
        "line_from_country": obs.from_country,
        "line_to_country": obs.to_country,
        "hour_weight": scen.hour_weight,
        "probabilities": [(_FMT % p) for p in scen.probabilities],
        "invested_mw": _FMT % sol_with.x[sol_with.line_ids.index(line_id)],
        "expected_congestion_rent": _FMT % rent.expected,
        "objective_with": _FMT % sol_with.objective,
        "objective_without": _FMT % sol_without.objective,
        "versions": _versions(),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}/ (candidate {line_id}: "
          f"{float(manifest['invested_mw']):.1f} MW invested)")
    return 0


def _versions() -> dict:
    import scipy
    return {"tepshare": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3])}


def _read_delta(path):
    rows = list(csv.DictReader(open(path, newline="")))
    countries = list(dict.fromkeys(r["country"] for r in rows))
    n_sc = 1 + max(int(r["scenario"]) for r in rows)
    dtw = np.zeros((len(countries), n_sc))
    for r in rows:
        dtw[countries.index(r["country"]), int(r["scenario"])] = \
            float(r["delta_tw"])
    return countries, dtw


def _read_observables(out: Path, manifest: dict) -> LineObservables:
    rows = list(csv.DictReader(open(out / "line_observables.csv", newline="")))
    n_sc = 1 + max(int(r["scenario"]) for r in rows)
    n_p = 1 + max(int(r["period"]) for r in rows)
    flow = np.zeros((n_sc, n_p))
    pf = np.zeros((n_sc, n_p))
    pt = np.zeros((n_sc, n_p))
    for r in rows:
        wi, t = int(r["scenario"]), int(r["period"])
        flow[wi, t] = float(r["flow_mw"])
        pf[wi, t] = float(r["price_from"])
        pt[wi, t] = float(r["price_to"])
    return LineObservables(
        line_id=manifest["candidate_line"],
        from_country=manifest["line_from_country"],
        to_country=manifest["line_to_country"],
        flow=flow, price_from=pf, price_to=pt,
        probabilities=np.array([float(p) for p in manifest["probabilities"]]),
        hour_weight=float(manifest["hour_weight"]),
    )


def _share_rule(spec: str, delta_w: DeltaWelfare) -> ShareRule:
    spec = spec.strip()
    if spec.startswith("equal:"):
        return ShareRule.equal(tuple(c.strip() for c in spec[6:].split(",")))
    if spec.startswith("risk:"):
        countries = tuple(c.strip() for c in spec[5:].split(","))
        sig = np.array([weighted_std(delta_w.row(c), delta_w.probabilities)
                        for c in countries])
        if sig.sum() <= 0.0:
            raise CalibrationError("risk-proportional shares undefined: "
                                   "no welfare variance")
        return ShareRule(countries, sig / sig.sum())
    pairs = [item.split("=") for item in spec.split(",")]
    countries = tuple(c.strip() for c, _ in pairs)
    return ShareRule(countries, np.array([float(w) for _, w in pairs]))


def cmd_compensate(args) -> int:
    out = Path(args.out)
    if not (out / "delta.csv").exists() or not (out / "manifest.json").exists():
        print(f"error: {out}/ has no compare artifacts; run compare first",
              file=sys.stderr)
        return 1
    manifest = json.loads((out / "manifest.json").read_text())
    cfg = manifest.get("config", {})
    mech_spec = args.mechanisms or cfg.get("mechanisms", "")
    names = [m.strip() for m in mech_spec.split(",") if m.strip()]
    if not names:
        print("usage: compensate needs --mechanisms "
              "(comma list of lump,ppa:<country>,flow,value,ideal)",
              file=sys.stderr)
        return 1
    alpha = args.alpha if args.alpha is not None \
        else float(cfg.get("cvar_alpha", 0.8))

    countries, dtw = _read_delta(out / "delta.csv")
    probabilities = np.array([float(p) for p in manifest["probabilities"]])
    full = DeltaWelfare.from_values(countries, dtw, probabilities)
    rule_spec = args.share_rule or cfg.get(
        "share_rule", "equal:" + ",".join(countries))
    rule = _share_rule(rule_spec, full)
    dw = DeltaWelfare.from_values(
        rule.countries, np.vstack([full.row(c) for c in rule.countries]),
        probabilities)
    obs = _read_observables(out, manifest)
    t = targets(dw, rule)

    schedules = {"no_comp": no_compensation(dw)}
    skipped = []
    for name in names:
        try:
            if name == "lump":
                schedules["lump_sum"] = lump_sum(t, probabilities)
            elif name.startswith("ppa:"):
                base = name.split(":", 1)[1]
                schedules[f"ppa_{base}"] = ppa(dw, obs, base, t.of(base))
            elif name == "flow":
                schedules["flow"] = flow_mech(t, obs)
            elif name == "value":
                schedules["flow_value"] = value_mech(t, obs)
            elif name == "ideal":
                schedules["ideal"] = ideal_mech(dw, rule)
            else:
                print(f"error: unknown mechanism {name!r}", file=sys.stderr)
                return 1
        except (CalibrationError, ValueError) as exc:
            print(f"warning: skipping {name}: {exc}", file=sys.stderr)
            skipped.append(name)
    if len(schedules) == 1 and names:    # only the no_comp baseline remains
        print("numerical failure: every mechanism failed to calibrate",
              file=sys.stderr)
        return 2

    ensembles = {m: apply(dw, s) for m, s in schedules.items()}
    rows = summary(ensembles, schedules, alpha=alpha)
    write_compensation_csv(schedules.values(), out / "compensation.csv")
    write_parameters_csv(schedules.values(), out / "parameters.csv")
    write_risk_table_csv(rows, out / "risk_table.csv")

    entries = []
    for a in rule.countries:
        for b in rule.countries:
            try:
                value = 1.0 if a == b else correlation(dw.row(a), dw.row(b),
                                                       probabilities)
            except ValueError:   # a degenerate series has no correlation
                continue
            entries.append(("delta_tw", a, b, value))
    spot_from = (obs.price_from * obs.hour_weight).mean(axis=1)
    spot_to = (obs.price_to * obs.hour_weight).mean(axis=1)
    measures = {
        f"price_{obs.from_country}": spot_from,
        f"price_{obs.to_country}": spot_to,
        "flow": obs.total_flow(),
        "flow_value": obs.total_value(),
    }
    for c in rule.countries:
        for label, series in measures.items():
            try:
                value = correlation(dw.row(c), series, probabilities)
            except ValueError:
                continue
            entries.append(("measure", c, label, value))
    write_correlations_csv(entries, out / "correlations.csv")

    q_rows = quantile_rows(ensembles, kind="ntw")
    q_rows += quantile_rows(schedules, kind="compensation")
    write_quantiles_csv(q_rows, out / "quantiles.csv")

    manifest["compensate"] = {
        "mechanisms": names,
        "skipped": skipped,
        "share_rule": rule_spec,
        "shares": {c: _FMT % s for c, s in zip(rule.countries, rule.shares)},
        "targets": {c: _FMT % t.of(c) for c in rule.countries},
        "cvar_alpha": alpha,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    mechs = ", ".join(m for m in schedules if m != "no_comp")
    print(f"wrote {out}/ risk tables for: {mechs}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    table = out / "risk_table.csv"
    if not table.exists():
        print(f"error: {table} not found; run compensate first",
              file=sys.stderr)
        return 1
    rows = list(csv.DictReader(open(table, newline="")))
    print(f"{'mechanism':<12} {'country':<8} {'std(C)':>12} {'std(NTW)':>12} "
          f"{'P(L)':>7} {'E[L]':>12} {'CVaR80(L)':>12}")
    for r in rows:
        print(f"{r['mechanism']:<12} {r['country']:<8} "
              f"{float(r['std_c']):>12.4g} {float(r['std_ntw']):>12.4g} "
              f"{float(r['p_loss']):>7.2f} {float(r['e_loss']):>12.4g} "
              f"{float(r['cvar80_loss']):>12.4g}")
    corr = out / "correlations.csv"
    if corr.exists():
        print("\ncorrelations:")
        for r in csv.DictReader(open(corr, newline="")):
            print(f"  [{r['table']}] {r['row']} ~ {r['col']}: "
                  f"{float(r['value']):+.2f}")
    params = out / "parameters.csv"
    if params.exists():
        print("\ncalibrated parameters:")
        for r in csv.DictReader(open(params, newline="")):
            print(f"  {r['mechanism']}.{r['param']} = {r['value']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
