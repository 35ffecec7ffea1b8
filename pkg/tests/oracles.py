"""Independent oracles used by the test suite.

The grid oracle maximizes planner surplus directly from the curve data
on single-scenario, single-period instances with at most one generator
per node.  Line expansion and flows are scanned on a multiscale grid
refined to the requested resolution; at each grid point the remaining
per-node problem (one dispatch variable against the local demand curve,
with demand eliminated through the nodal balance) is a one-dimensional
concave quadratic solved exactly by clipping its stationary point.  The
oracle shares no code with the QP assembly or the interior-point solver.
"""

import numpy as np


def grid_search_objective(network, scenarios, mask=None, resolution=1e-3,
                          points=17):
    """Best objective found by grid search over (x, f) with exact nodal
    response (ns = 1, T = 1, <= 1 generator per node)."""
    assert scenarios.n_scenarios == 1 and scenarios.n_periods == 1
    H = scenarios.hour_weight
    node_ids = [n.id for n in network.nodes]
    for nid in node_ids:
        assert nid in scenarios.demand_slope, \
            "grid oracle needs a demand curve at every node"
    a = np.array([scenarios.demand_slope[n][0, 0] for n in node_ids])
    b = np.array([scenarios.demand_intercept[n][0, 0] for n in node_ids])
    node_pos = {nid: i for i, nid in enumerate(node_ids)}

    gen_at = {}
    season = list(scenarios.seasons)[0]
    for g in network.generators:
        assert np.isfinite(g.g_max)
        assert node_pos[g.node] not in gen_at, "one generator per node"
        gen_at[node_pos[g.node]] = (g.marg_cost[season], g.marg_cost_slope,
                                    g.g_max)

    ren_base = np.zeros(len(node_ids))
    for r in network.renewables:
        ren_base[node_pos[r.node]] += r.g_r * r.profile[0, 0]

    allow = (lambda lid: mask.allows_line(lid)) if mask else (lambda lid: True)
    x_dims = [l for l in network.lines if l.expandable and allow(l.id)]
    x_ub = {l.id: min(l.x_max, 20.0) for l in x_dims}
    dims = [("x", l, 0.0, x_ub[l.id]) for l in x_dims]
    for l in network.lines:
        c = l.f_max + (x_ub[l.id] if l in x_dims else 0.0)
        dims.append(("f", l, -c, c))

    def node_value(i, inflow):
        """Exact optimum of node i's surplus given its net inflow.

        With demand d = q + inflow the node's surplus is a concave
        quadratic in q; the stationary point is clipped to the dispatch
        bounds and to d >= 0.  Infeasible inflows (negative demand with
        no generator slack) yield -inf.
        """
        if i not in gen_at:
            d = inflow
            value = np.where(d >= -1e-12,
                             H * (0.5 * a[i] * d * d + b[i] * d), -np.inf)
            return value
        mc, slope, g_max = gen_at[i]
        lo = np.maximum(0.0, -inflow)
        hi = np.full_like(inflow, g_max)
        denom = slope - a[i]                 # > 0: concave in q
        q_star = (a[i] * inflow + b[i] - mc) / denom
        q = np.clip(q_star, lo, hi)
        d = q + inflow
        value = H * (0.5 * a[i] * d * d + b[i] * d - mc * q
                     - 0.5 * slope * q * q)
        return np.where(lo <= hi + 1e-12, value, -np.inf)

    def evaluate(coords):
        npts = len(coords[0])
        inflow = np.tile(ren_base[:, None], (1, npts))
        obj = np.zeros(npts)
        feasible = np.ones(npts, dtype=bool)
        x_of = {}
        for k, (kind, ref, _, _) in enumerate(dims):
            if kind == "x":
                x_of[ref.id] = coords[k]
                obj -= ref.inv_cost * coords[k]
        for k, (kind, ref, _, _) in enumerate(dims):
            if kind == "f":
                v = coords[k]
                cap = ref.f_max + x_of.get(ref.id, 0.0)
                feasible &= np.abs(v) <= cap + 1e-12
                inflow[node_pos[ref.from_node]] -= v
                inflow[node_pos[ref.to_node]] += v
        for i in range(len(node_ids)):
            obj += node_value(i, inflow[i])
        obj[~feasible] = -np.inf
        return obj

    los = np.array([lo for _, _, lo, hi in dims])
    his = np.array([hi for _, _, lo, hi in dims])
    centers = 0.5 * (los + his)
    widths = 0.5 * (his - los)

    # Pattern search: recenter at the current scale while the incumbent
    # improves (the optimum can sit far along a flow-conservation ridge),
    # and halve the window only when a round stagnates.
    best_val = -np.inf
    for _ in range(200):
        axes = [np.linspace(max(los[k], centers[k] - widths[k]),
                            min(his[k], centers[k] + widths[k]), points)
                for k in range(len(dims))]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = {k: m.ravel() for k, m in enumerate(mesh)}
        vals = evaluate(coords)
        i = int(np.argmax(vals))
        improved = vals[i] > best_val + 1e-10 * (1.0 + abs(best_val))
        if vals[i] > best_val:
            best_val = float(vals[i])
            centers = np.array([coords[k][i] for k in range(len(dims))])
        steps = np.array([(ax[-1] - ax[0]) / (points - 1) if len(ax) > 1 else 0.0
                          for ax in axes])
        if not improved:
            if np.all(steps <= resolution):
                return best_val
            widths = np.maximum(0.5 * widths, (points - 1) * resolution / 2.0)
    return best_val
