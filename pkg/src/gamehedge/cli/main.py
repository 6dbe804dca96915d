"""``gamehedge`` command line.

Subcommands
-----------
price     run the configured variant and write ``summary.json``
surface   price on a grid of spot prices, write ``surface.csv``
strategy  hedge vector at every lattice node, write ``strategy.csv``
converge  lattice versus continuum table, write ``convergence.csv``
validate  check a job file without pricing

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 gate or
budget refusal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import __version__
from ..continuum import (
    GreenFunctionQuery,
    black_scholes_price,
    complete_market_price,
    convergence_harness,
    first_order_price,
    green_price,
)
from ..errors import ArgumentError, GameHedgeError
from ..lattice.costs import price_fixed_costs, price_with_costs, transaction_cost_gate
from ..lattice.engines import (
    price_american,
    price_european,
    price_interval,
    price_lower,
    price_nonlinear_jumps,
    price_path_dependent,
)
from ..lattice.market import HedgeResult
from .config import JobConfig, load_config, plain

DEFAULT_OUT = "gamehedge_out"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path: str, header: list[str], rows: list[list], fmt: str) -> str:
    """Write ``rows`` as CSV (comma, LF, header) or as a JSON list of records."""
    if fmt == "json":
        path = os.path.splitext(path)[0] + ".json"
        records = [dict(zip(header, plain(list(r)))) for r in rows]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(records, fh, indent=1)
            fh.write("\n")
        return path
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_fmt(x) for x in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def _market_gate(cfg: JobConfig) -> dict | None:
    market = cfg.market
    if market is None or market.jump_maps is not None:
        return None
    gate = transaction_cost_gate(market, cfg.spot)
    return {"kappa1": gate.kappa1, "kappa2": gate.kappa2, "delta_n": gate.delta_n, "beta_max": gate.beta_max}


def _active_stats(h: HedgeResult) -> dict:
    if not h.active or h.active[0] is None:
        return {}
    counts: dict[str, int] = {}
    for table in h.active:
        idx, n = np.unique(np.asarray(table).ravel(), return_counts=True)
        for i, c in zip(idx, n):
            key = "-".join(map(str, h.supports[int(i)])) if h.supports else str(int(i))
            counts[key] = counts.get(key, 0) + int(c)
    root = int(np.asarray(h.active[0]).ravel()[0])
    return {"root_support": list(h.supports[root]) if h.supports else root,
            "node_counts": dict(sorted(counts.items()))}


def _result_summary(h: HedgeResult) -> dict:
    meta = {k: v for k, v in h.metadata.items() if k != "seconds"}
    out = {"price": h.price, "variant": h.variant, "metadata": meta}
    stats = _active_stats(h)
    if stats:
        out["active_measures"] = stats
    if h.exercise is not None:
        out["exercise_nodes"] = int(sum(int(np.sum(e)) for e in h.exercise[:-1]))
    return out


def run_variant(cfg: JobConfig, store: bool = True, spot=None) -> dict:
    """Price the configured variant at ``spot`` (default: the configured spot)."""
    z0 = cfg.spot if spot is None else np.asarray(spot, dtype=float)
    p, market, v = cfg.payoff, cfg.market, cfg.variant
    if v == "european":
        h = price_european(p, z0, market, fast_path=cfg.fast_path, store_strategy=store)
    elif v == "lower":
        h = price_lower(p, z0, market, store_strategy=store)
    elif v == "american":
        h = price_american(p, z0, market, store_strategy=store)
    elif v == "interval":
        res = price_interval(p, z0, market, store_strategy=store)
        return {"upper": res["upper"], "lower": res["lower"], "intrinsic_risk": res["intrinsic_risk"],
                "results": {"upper": res["upper_result"], "lower": res["lower_result"]}}
    elif v == "path_dependent":
        h = price_path_dependent(p, z0, market, budget=cfg.tree_budget, store_strategy=store)
    elif v == "nonlinear_jumps":
        h = price_nonlinear_jumps(p, z0, market, store_strategy=store)
    elif v == "costed":
        if cfg.keep is not None:
            h = price_fixed_costs(p, z0, market, cfg.keep)
        else:
            h = price_with_costs(p, z0, market, cfg.cost, v0=cfg.v0, max_iter=cfg.max_iter)
    elif v == "continuum":
        return _continuum_prices(cfg, z0)
    else:
        raise ArgumentError(f"variant {v} has no single price; use the converge command")
    return {"price": h.price, "results": {"price": h}}


def _continuum_prices(cfg: JobConfig, z0) -> dict:
    spec, p = cfg.continuum, cfg.payoff
    out = {}
    if spec.J == 1:
        out["price"] = float(black_scholes_price(p, z0, 0.0, spec))
    elif spec.J == 2:
        up = float(green_price(GreenFunctionQuery("upper", 0.0, z0, p), spec))
        lo = float(green_price(GreenFunctionQuery("lower", 0.0, z0, p), spec))
        out.update(upper=up, lower=lo, complete=float(complete_market_price(p, z0, 0.0, spec)),
                   intrinsic_risk=up - lo)
    else:
        raise ArgumentError("continuum prices cover one or two assets")
    if spec.alpha > 0.5:
        out["first_order"] = float(first_order_price(p, z0, 0.0, spec))
    return out


def _summary(cfg: JobConfig, command: str, payload: dict, seconds: float) -> dict:
    out = {"command": command, "variant": cfg.variant, "config": cfg.document, "version": __version__}
    results = payload.pop("results", {})
    out.update(payload)
    if results:
        out["details"] = {k: _result_summary(h) for k, h in results.items()}
    if cfg.variant not in ("continuum", "convergence"):
        gate = _market_gate(cfg)
        if gate is not None:
            out["gate"] = gate
    if cfg.warnings:
        out["warnings"] = list(cfg.warnings)
    out["seconds"] = seconds
    return plain(out)


def cmd_price(cfg: JobConfig, out_dir: str, args) -> dict:
    if cfg.variant == "convergence":
        return cmd_converge(cfg, out_dir, args)
    t0 = time.perf_counter()
    payload = run_variant(cfg, store=False)
    return _summary(cfg, "price", payload, time.perf_counter() - t0)


def cmd_surface(cfg: JobConfig, out_dir: str, args) -> dict:
    if cfg.surface is None:
        raise ArgumentError("surface: the job file needs a 'surface' section with lower, upper, points")
    t0 = time.perf_counter()
    spots = cfg.surface.spots()
    J = spots.shape[1]

    def one(z):
        res = run_variant(cfg, store=False, spot=z)
        res.pop("results", None)
        return res

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(one, spots))
    fields = [k for k in results[0] if isinstance(results[0][k], float)]
    header = [f"z{j + 1}" for j in range(J)] + fields
    rows = [list(z) + [r[k] for k in fields] for z, r in zip(spots, results)]
    path = write_table(os.path.join(out_dir, "surface.csv"), header, rows, args.format)
    summary = _summary(cfg, "surface", {"points": len(rows), "table": os.path.basename(path)},
                       time.perf_counter() - t0)
    return summary


def cmd_strategy(cfg: JobConfig, out_dir: str, args) -> dict:
    if cfg.variant not in ("european", "lower", "american"):
        raise ArgumentError("strategy tables are available for the european, lower and american variants")
    t0 = time.perf_counter()
    payload = run_variant(cfg, store=True)
    h: HedgeResult = payload["results"]["price"]
    if h.layout != "lattice":
        raise ArgumentError("strategy tables need a recombining lattice (period-independent factors)")
    J = h.market.J
    header = ["period"] + [f"ups{j + 1}" for j in range(J)] + [f"z{j + 1}" for j in range(J)] + \
             ["value"] + [f"gamma{j + 1}" for j in range(J)] + ["support"]
    rows = []
    for m in range(h.market.n):
        prices = h.node_prices(m)
        for k in np.ndindex(*((m + 1,) * J)):
            support = "-".join(map(str, h.supports[int(h.active[m][k])]))
            rows.append([m, *k, *prices[k], h.values[m][k], *h.gammas[m][k], support])
    path = write_table(os.path.join(out_dir, "strategy.csv"), header, rows, args.format)
    return _summary(cfg, "strategy", {"price": h.price, "rows": len(rows), "table": os.path.basename(path)},
                    time.perf_counter() - t0)


def cmd_converge(cfg: JobConfig, out_dir: str, args) -> dict:
    if cfg.continuum is None or not cfg.steps:
        raise ArgumentError("converge: the job needs variant convergence with a continuum section")
    t0 = time.perf_counter()
    rep = convergence_harness(cfg.payoff, cfg.spot, cfg.continuum, cfg.steps, fast_path=cfg.fast_path)
    header = ["tau", "n", "discrete", "continuum", "error"]
    rows = [[r.tau, r.n, r.discrete, r.continuum, r.error] for r in rep.rows]
    path = write_table(os.path.join(out_dir, "convergence.csv"), header, rows, args.format)
    payload = {"continuum_price": rep.rows[0].continuum, "orders": rep.orders,
               "monotone": rep.monotone, "table": os.path.basename(path)}
    return _summary(cfg, "converge", payload, time.perf_counter() - t0)


COMMANDS = {"price": cmd_price, "surface": cmd_surface, "strategy": cmd_strategy, "converge": cmd_converge}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamehedge", description="Guaranteed hedge prices in interval markets.")
    parser.add_argument("--version", action="version", version=f"gamehedge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("price", "surface", "strategy", "converge", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML job file")
        p.add_argument("--out", help=f"output directory (default: output.dir or {DEFAULT_OUT})")
        p.add_argument("--fast-path", choices=("auto", "on", "off"), help="override the job's fast_path")
        p.add_argument("--threads", type=int, default=1, help="worker threads for surface grids")
        p.add_argument("--format", choices=("csv", "json"), help="table format (default: output.format)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.fast_path:
            cfg.fast_path = args.fast_path
        args.format = args.format or cfg.output_format
        if args.threads < 1:
            raise ArgumentError("--threads must be at least 1")
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if args.command == "validate":
            print(json.dumps({"valid": True, "variant": cfg.variant, "warnings": cfg.warnings}, indent=1))
            return 0
        if args.command == "converge" and cfg.variant != "convergence":
            raise ArgumentError("converge: the job needs variant convergence")
        out_dir = args.out or cfg.output_dir or DEFAULT_OUT
        os.makedirs(out_dir, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = COMMANDS[args.command](cfg, out_dir, args)
        extra = sorted({str(w.message) for w in caught})
        if extra:
            summary.setdefault("warnings", []).extend(extra)
            for msg in extra:
                print(f"warning: {msg}", file=sys.stderr)
        summary["threads"] = args.threads
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=1)
            fh.write("\n")
        print(json.dumps(summary, indent=1))
        return 0
    except GameHedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
