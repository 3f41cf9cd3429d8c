"""Command-line entry point: ``latency-arb {ingest,solve,simulate,capture}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error. Every
command writes a JSON manifest next to its outputs with the parameters,
input digests, seeds and tool version.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .capture_game import SWEEP_HEADER, alpha_sweep, sweep_rows
from .cpmm import DomainError, PoolState
from .dp_policy import DpConfig, export_policy_csv, gbm_step_distribution, solve, write_values_binary
from .market_data import FormatError, empirical_distribution, ingest_ticks, pair_stats, resample_mid
from .price_models import (
    GbmParams,
    PriceChangeDistribution,
    gbm_path,
    mean_reverting_path,
    minute_paths,
    sample_path,
)
from .regime_sim import (
    Regime,
    RegimeConfig,
    simulate,
    write_figure_csvs,
    write_minutes_csv,
    write_report_csv,
)

log = logging.getLogger("latency_arb")


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, command: str, params: dict, inputs=(), outputs=(), seeds=None) -> None:
    doc = {
        "command": command,
        "parameters": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {Path(p).name: _sha256(Path(p)) for p in outputs},
        "tool_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seeds": seeds,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _ms_list(text: str | None) -> list[int]:
    if text is None:
        return []
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integer milliseconds, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise UsageError(f"expected non-negative milliseconds, got {text!r}")
    return vals


def _alpha_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--alpha-sweep expects lo:hi:step, got {text!r}") from None
    if not (0 <= lo <= hi <= 1) or step <= 0:
        raise UsageError("--alpha-sweep needs 0 <= lo <= hi <= 1 and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = [round(lo + i * step, 12) for i in range(n + 1)]
    if grid[-1] < hi - 1e-12:
        grid.append(hi)
    return grid


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


# ---------------------------------------------------------------- ingest


def cmd_ingest(args) -> int:
    src = Path(args.input)
    if not src.exists():
        print(f"error: input not found: {src}", file=sys.stderr)
        return 2
    try:
        ticks = ingest_ticks(src)
    except (FormatError, UnicodeDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 2
    if len(ticks) == 0:
        print("error: no valid ticks in input", file=sys.stderr)
        return 2
    series = resample_mid(ticks, args.step_ms)
    if len(series) < 3:
        print("error: input spans fewer than three grid steps", file=sys.stderr)
        return 2
    dist = empirical_distribution(series, args.pmax, args.n_bins)
    stats = pair_stats(series)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dist.to_json() + "\n")
    stats_path = Path(args.stats_output) if args.stats_output else out.with_suffix(".stats.json")
    stats_doc = {
        "daily_volatility": stats.daily_volatility,
        "autocorr_50ms": stats.autocorr_50ms,
        "autocorr_defined": stats.autocorr_defined,
        "n_ticks": len(ticks),
        "dropped_rows": ticks.dropped,
        "n_grid_points": len(series),
    }
    stats_path.write_text(json.dumps(stats_doc, indent=2) + "\n")
    write_manifest(out.with_suffix(".manifest.json"), "ingest", _params(args), [src], [out, stats_path])
    print(
        f"ticks={len(ticks)} dropped={ticks.dropped} grid_points={len(series)} "
        f"daily_vol={stats.daily_volatility:.6g} autocorr_50ms={stats.autocorr_50ms:.6g}"
    )
    return 0


# ---------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    try:
        cfg = DpConfig(
            delta_ms=args.delta_ms,
            t_w_max_ms=args.window_ms,
            horizon_ms=args.horizon_ms,
            fee=args.fee,
            n_price=args.n_price,
            pmax_total=args.pmax_total,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inputs = []
    if args.distribution:
        path = Path(args.distribution)
        if not path.exists():
            print(f"error: input not found: {path}", file=sys.stderr)
            return 2
        dist = PriceChangeDistribution.from_json(path.read_text())
        inputs.append(path)
    elif args.sigma_daily is not None:
        dist = gbm_step_distribution(GbmParams(args.sigma_daily), cfg)
    else:
        raise UsageError("give --distribution or --sigma-daily")
    if dist.step_ms != cfg.delta_ms:
        raise UsageError(f"distribution step {dist.step_ms} ms does not match --delta-ms {cfg.delta_ms}")
    if args.csv_stride_ms % cfg.delta_ms:
        raise UsageError("--csv-stride-ms must be a multiple of --delta-ms")
    stride = args.csv_stride_ms // cfg.delta_ms
    tables = solve(cfg, dist, value_stride=stride)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        export_policy_csv(tables, fh, t_stride=stride)
    outputs = [out]
    if args.values_bin:
        write_values_binary(tables, args.values_bin)
        outputs.append(Path(args.values_bin))
    d = tables.diagnostics
    write_manifest(out.with_suffix(".manifest.json"), "solve", _params(args), inputs, outputs)
    print(
        f"wait_fraction_profitable={d.wait_fraction:.6%} states={d.profitable_states} "
        f"max_abs_arb_minus_wait={d.max_abs_advantage:.3e} offgrid_mass={d.offgrid_mass:.3e}"
    )
    if cfg.fee == 0:
        ok = d.max_abs_advantage <= 1e-9
        print(f"indifference: max |arb - wait| = {d.max_abs_advantage:.3e} ({'holds' if ok else 'violated'} at 1e-9)")
    return 0


# ---------------------------------------------------------------- simulate


def _price_rows(args, step_ms: int, n_steps: int):
    """Return ``(rows, inputs, seeds)`` of per-minute ratio rows."""
    if args.ticks:
        path = Path(args.ticks)
        if not path.exists():
            raise FileNotFoundError(path)
        series = resample_mid(ingest_ticks(path), step_ms)
        r = series.mids[1:] / series.mids[:-1]
        full = len(r) // n_steps
        if args.minutes is not None:
            full = min(full, args.minutes)
        return r[: full * n_steps].reshape(full, n_steps), [path], None
    n_min = 2000 if args.minutes is None else args.minutes
    if args.distribution:
        path = Path(args.distribution)
        if not path.exists():
            raise FileNotFoundError(path)
        dist = PriceChangeDistribution.from_json(path.read_text())
        if dist.step_ms != step_ms:
            raise UsageError("distribution step does not match --step-ms")
        rows = minute_paths(lambda n, s, i: sample_path(dist, n, s, i), n_min, n_steps, args.seed)
        return rows, [path], {"minute_streams": args.seed}
    if args.sigma_daily is None:
        raise UsageError("give --ticks, --distribution or --sigma-daily")
    g = GbmParams(args.sigma_daily)
    if args.ar1_kappa is not None:
        sig = g.step_sigma(step_ms)
        draw = lambda n, s, i: mean_reverting_path(sig, args.ar1_kappa, n, s, step_ms, i)  # noqa: E731
    else:
        draw = lambda n, s, i: gbm_path(g, step_ms, n, s, i)  # noqa: E731
    return minute_paths(draw, n_min, n_steps, args.seed), [], {"minute_streams": args.seed}


def cmd_simulate(args) -> int:
    if args.minutes is not None and args.minutes < 0:
        raise UsageError("--minutes must be non-negative")
    regimes = [Regime.FCFS, Regime.PGA, Regime.TIMEBOOST] if args.regime == "all" else [Regime(args.regime)]
    blocks = _ms_list(args.block_time_ms)
    windows = _ms_list(args.tw_ms)
    if args.regime == "pga" and not blocks:
        raise UsageError("--regime pga requires --block-time-ms")
    if args.regime == "timeboost" and not windows:
        raise UsageError("--regime timeboost requires --tw-ms")
    blocks = blocks or [200]
    windows = windows or [200]
    configs = []
    try:
        for reg in regimes:
            params = {Regime.FCFS: [None], Regime.PGA: blocks, Regime.TIMEBOOST: windows}[reg]
            for v in params:
                configs.append(
                    RegimeConfig(
                        reg,
                        fee=args.fee,
                        step_ms=args.step_ms,
                        block_time_ms=v if reg is Regime.PGA else None,
                        t_w_ms=v if reg is Regime.TIMEBOOST else None,
                        liquidity_usd=args.liquidity_usd,
                        minute_ms=args.minute_ms,
                        rearm=args.rearm,
                    )
                )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n_steps = configs[0].steps_per_minute
    try:
        rows, inputs, seeds = _price_rows(args, args.step_ms, n_steps)
    except FileNotFoundError as exc:
        print(f"error: input not found: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 2
    if rows.shape[0] == 0:
        print("warning: no complete minutes to simulate; writing an empty report", file=sys.stderr)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    reports = [simulate(rows, c) for c in configs]
    outputs = []
    report_path = outdir / "report.csv"
    with open(report_path, "w", newline="") as fh:
        write_report_csv([r for r in reports if r.n_minutes], fh)
    outputs.append(report_path)
    for r in reports:
        if not r.n_minutes:
            continue
        tag = f"{r.config.regime.value}_{r.config.param_ms}ms"
        paths = [outdir / f"minutes_{tag}.csv", outdir / f"hist_{tag}.csv", outdir / f"cumulative_{tag}.csv"]
        with open(paths[0], "w", newline="") as fh:
            write_minutes_csv(r, fh)
        with open(paths[1], "w", newline="") as fh1, open(paths[2], "w", newline="") as fh2:
            write_figure_csvs(r, fh1, fh2)
        outputs.extend(paths)
        print(
            f"{r.config.regime.value:>9} {r.config.param_ms:>5} ms  mean={r.mean:.4f}  median={r.median:.4f}  "
            f"p99={r.p99:.4f}  se={r.stderr:.4f}  minutes={r.n_minutes}"
        )
    write_manifest(outdir / "manifest.json", "simulate", _params(args), inputs, outputs, seeds)
    return 0


# ---------------------------------------------------------------- capture


def cmd_capture(args) -> int:
    if args.alpha is None and args.alpha_sweep is None:
        raise UsageError("give --alpha or --alpha-sweep")
    if args.alpha is not None and not 0 <= args.alpha <= 1:
        raise UsageError("--alpha must be in [0, 1]")
    if not args.p > 0:
        raise UsageError("--p must be positive")
    grid = [args.alpha] if args.alpha is not None else _alpha_grid(args.alpha_sweep)
    try:
        pool = PoolState(args.x, args.y)
        result = alpha_sweep(args.p, grid, pool)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(",".join(SWEEP_HEADER) + "\n")
        for row in sweep_rows(result):
            fh.write(",".join(row) + "\n")
    write_manifest(out.with_suffix(".manifest.json"), "capture", _params(args), [], [out])
    best = result.argmax_pool_alpha
    print(f"rows={len(grid)} argmax_pool_share_alpha={best}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latency-arb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None, help="cap kernel worker threads (sets LATENCY_ARB_THREADS; 0 = auto)")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tick CSV -> step distribution JSON and pair statistics")
    p.add_argument("input", help="tick CSV (timestamp_ms,bid,ask), optionally .gz")
    p.add_argument("-o", "--output", required=True, help="distribution JSON path")
    p.add_argument("--stats-output", help="stats JSON path (default: <output>.stats.json)")
    p.add_argument("--step-ms", type=int, default=10, help="resampling step in ms (default 10)")
    p.add_argument("--pmax", type=float, default=0.01, help="ratio clamp half-width (default 0.01)")
    p.add_argument("--n-bins", type=int, default=201, help="odd number of histogram bins (default 201)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("solve", help="solve the wait/arbitrage policy by backward induction")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--distribution", help="step distribution JSON")
    src.add_argument("--sigma-daily", type=float, help="GBM daily volatility (e.g. 0.042)")
    p.add_argument("--fee", type=float, default=0.0005, help="pool fee (default 0.0005)")
    p.add_argument("--delta-ms", type=int, default=10, help="time step (default 10)")
    p.add_argument("--window-ms", type=int, default=200, help="advantage window (default 200)")
    p.add_argument("--horizon-ms", type=int, default=60_000, help="horizon (default 60000)")
    p.add_argument("--n-price", type=int, default=201, help="odd number of price nodes (default 201)")
    p.add_argument("--pmax-total", type=float, default=0.003, help="price grid half-width as a ratio (default 0.003)")
    p.add_argument("--csv-stride-ms", type=int, default=1000, help="horizon spacing of exported CSV layers (default 1000)")
    p.add_argument("--values-bin", help="also write retained value layers in the flat binary layout")
    p.add_argument("-o", "--output", required=True, help="policy CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="compare FCFS, PGA and Timeboost profits per minute")
    p.add_argument("--regime", choices=["fcfs", "pga", "timeboost", "all"], default="all")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--ticks", help="tick CSV to replay")
    src.add_argument("--distribution", help="step distribution JSON for i.i.d. Monte Carlo")
    src.add_argument("--sigma-daily", type=float, help="GBM daily volatility for Monte Carlo")
    p.add_argument("--ar1-kappa", type=float, help="with --sigma-daily: AR(1) mean-reverting returns with this strength")
    p.add_argument("--block-time-ms", help="PGA block time(s), comma-separated")
    p.add_argument("--tw-ms", help="Timeboost window(s), comma-separated")
    p.add_argument("--fee", type=float, default=0.0005, help="pool fee (default 0.0005)")
    p.add_argument("--liquidity-usd", type=float, default=1e8, help="pool value at each minute start (default 1e8)")
    p.add_argument("--minutes", type=int, help="number of minutes (Monte Carlo default 2000; replay default all)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--step-ms", type=int, default=10, help="price step (default 10)")
    p.add_argument("--minute-ms", type=int, default=60_000, help="accounting window (default 60000)")
    p.add_argument("--rearm", action="store_true", help="Timeboost: cancel the deadline when the gap closes (non-canonical)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("capture", help="fee-capture game outcomes")
    p.add_argument("--p", type=float, required=True, help="external/pool price ratio")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="capture fraction in [0, 1]")
    g.add_argument("--alpha-sweep", help="lo:hi:step grid of capture fractions")
    p.add_argument("--x", type=float, default=1.0, help="risky reserve (default 1)")
    p.add_argument("--y", type=float, default=1.0, help="numéraire reserve (default 1)")
    p.add_argument("-o", "--output", required=True, help="CSV path")
    p.set_defaults(func=cmd_capture)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        os.environ["LATENCY_ARB_THREADS"] = str(max(0, args.threads))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
