"""Command-line front end.

Subcommands cover the pipeline stages: ``simulate`` writes click records,
``reconstruct`` turns them into a Wigner map, ``recover-rho`` integrates the
map into a density matrix, and ``report`` condenses one or more artifacts
into a tidy summary.  Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io_csv
from .config import (
    RunConfig,
    analytic_wigner_fn,
    build_recipe,
    build_state,
    load_config,
)
from .em import EMConfig, run_em_batch
from .errors import ConfigError, DataError, NumericalError
from .measurement import simulate_schedule
from .recover import compare_states, integrate_rho
from .wigner import WignerEstimate, wigner_from_values

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, exact=args.exact)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    rho = build_state(cfg)
    recipe = build_recipe(cfg)
    gammas = cfg.grid.flat_gammas()
    out = _out_dir(args)
    for rep in range(cfg.repetitions):
        points = []
        for i, gamma in enumerate(gammas):
            schedule = recipe.build(gamma)
            records = simulate_schedule(
                rho,
                schedule,
                cfg.trunc,
                n_runs=cfg.n_runs,
                seed=(cfg.seed, rep),
                point_index=i,
                exact=cfg.exact_probabilities,
            )
            points.append(io_csv.PointRecords(i, complex(gamma), tuple(records)))
        name = "clicks.csv" if cfg.repetitions == 1 else f"clicks_rep{rep}.csv"
        io_csv.write_click_csv(out / name, cfg, rep, points)
        print(f"wrote {out / name} ({len(points)} points x {len(points[0].records)} settings)")
    return EXIT_OK


def _reconstruct_one(cfg: RunConfig, points: list[io_csv.PointRecords], threads: int = 1):
    """EM on every point of one click file -> (w values, final loglik, n failed)."""
    m = len(points[0].records)
    nu_bar = np.array([rec.setting.nu_bar for rec in points[0].records])
    for p in points:
        if len(p.records) != m:
            raise DataError(f"point {p.point_index} has {len(p.records)} settings, expected {m}")
        mismatch = max(
            abs(rec.setting.nu_bar - nb) for rec, nb in zip(p.records, nu_bar)
        )
        if mismatch > 1e-12:
            raise DataError(f"point {p.point_index} uses a different efficiency schedule")
    freqs = np.array([[rec.freq for rec in p.records] for p in points])
    noclick = np.array([[rec.n_noclick for rec in p.records] for p in points])
    runs = np.array([[rec.n_runs for rec in p.records] for p in points], dtype=float)
    ey = np.exp(np.array([[rec.setting.y for rec in p.records] for p in points]))
    em_cfg = EMConfig(n_iterations=cfg.n_iterations, normalization=cfg.normalization)

    def solve(sl: slice):
        return run_em_batch(
            freqs[sl], nu_bar, ey[sl], cfg.trunc.n_trunc, em_cfg,
            noclick=noclick[sl], n_runs=runs[sl],
        )

    n_chunks = max(1, min(int(threads), len(points)))
    bounds = np.linspace(0, len(points), n_chunks + 1, dtype=int)
    slices = [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(slices) == 1:
        results = [solve(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            results = list(pool.map(solve, slices))
    values = np.vstack([r.values for r in results])
    failed = np.concatenate([r.failed for r in results])
    loglik = np.concatenate([r.final_loglik for r in results])
    w = np.array(
        [np.nan if bad else wigner_from_values(v) for v, bad in zip(values, failed)]
    )
    return w, loglik, int(failed.sum())


def cmd_reconstruct(args) -> int:
    cfg = _load(args)
    maps = []
    logliks = []
    n_failed = 0
    gammas_ref = None
    for path in args.records:
        file_cfg, _, points = io_csv.read_click_csv(path)
        if file_cfg.trunc.n_trunc != cfg.trunc.n_trunc:
            raise DataError(f"{path}: truncation differs from the run config")
        gammas = np.array([p.gamma for p in points])
        if gammas_ref is None:
            gammas_ref = gammas
        elif not np.array_equal(gammas_ref, gammas):
            raise DataError(f"{path}: point set differs between records files")
        w, ll, bad = _reconstruct_one(cfg, points, threads=args.threads)
        maps.append(w)
        logliks.append(ll)
        n_failed += bad
    expected = cfg.grid.flat_gammas()
    if gammas_ref.size != expected.size or np.max(np.abs(gammas_ref - expected)) > 1e-9:
        raise DataError("records do not cover the configured grid")

    w_rec = maps[0]
    w_var = np.var(np.stack(maps), axis=0) if len(maps) > 1 else None
    w_exact = None
    if cfg.analytic_reference:
        w_exact = analytic_wigner_fn(cfg)(gammas_ref)
    out = _out_dir(args)
    io_csv.write_wigner_csv(
        out / "wigner.csv", cfg, gammas_ref, w_rec,
        w_exact=w_exact, w_variance=w_var, loglik=logliks[0],
    )
    print(f"wrote {out / 'wigner.csv'} ({w_rec.size} points, {n_failed} failed)")
    if n_failed:
        print(f"{n_failed} points failed to reconstruct", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_recover_rho(args) -> int:
    cfg = _load(args)
    file_cfg, gammas, cols = io_csv.read_wigner_csv(args.wigner)
    grid = file_cfg.grid
    expected = grid.flat_gammas()
    if gammas.size != expected.size or np.max(np.abs(gammas - expected)) > 1e-9:
        raise DataError(f"{args.wigner}: points do not match the embedded grid")
    estimate = WignerEstimate(grid=grid, w_values=cols["w_rec"].reshape(grid.n_im, grid.n_re))
    recovered = integrate_rho(estimate, cfg.trunc.n_trunc)

    exact = build_state(cfg).elements[: cfg.trunc.n_trunc, : cfg.trunc.n_trunc]
    comparison = compare_states(recovered, exact)
    out = _out_dir(args)
    io_csv.write_rho_csv(out / "rho.csv", cfg, recovered.elements)
    metrics = {
        "trace": recovered.trace,
        "hermitization_residual": recovered.hermitization_residual,
        "min_eigenvalue": recovered.min_eigenvalue(),
        "trace_warning": recovered.trace_warning,
        "fidelity_vs_configured_state": comparison.fidelity,
        "max_abs_diff_vs_configured_state": comparison.max_abs_diff,
        "trace_distance_vs_configured_state": comparison.trace_distance,
    }
    io_csv.write_metrics_json(out / "metrics.json", cfg, metrics)
    print(f"wrote {out / 'rho.csv'} and {out / 'metrics.json'}")
    for key, value in metrics.items():
        print(f"  {key} = {value}")
    return EXIT_OK


def cmd_report(args) -> int:
    t0 = time.perf_counter()
    rows = []
    for path in args.wigner:
        cfg, _, cols = io_csv.read_wigner_csv(path)
        finite = np.isfinite(cols["w_rec"]) & np.isfinite(cols["w_exact"])
        delta = float(np.mean(np.abs(cols["w_rec"] - cols["w_exact"])[finite])) if finite.any() else float("nan")
        rows.append(
            {
                "file": str(path),
                "n_runs": cfg.n_runs,
                "n_iterations": cfg.n_iterations,
                "seed": cfg.seed,
                "exact_probabilities": cfg.exact_probabilities,
                "delta_w": delta,
                "mean_variance": float(np.nanmean(cols["w_variance"]))
                if np.isfinite(cols["w_variance"]).any()
                else float("nan"),
            }
        )
    rows.sort(key=lambda r: (r["n_iterations"], r["n_runs"], r["seed"]))
    payload: dict = {"maps": rows}
    if args.metrics:
        with open(args.metrics, "r", encoding="utf-8") as fh:
            payload["rho_metrics"] = json.load(fh)
    payload["runtime_seconds"] = time.perf_counter() - t0

    header = f"{'n_iterations':>12} {'n_runs':>8} {'seed':>6} {'delta_w':>12} {'mean_var':>12}"
    print(header)
    for r in rows:
        print(
            f"{r['n_iterations']:>12} {r['n_runs']:>8} {r['seed']:>6} "
            f"{r['delta_w']:>12.6g} {r['mean_variance']:>12.6g}"
        )
    out = _out_dir(args)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clicktomo",
        description="Wigner-function reconstruction from on/off detector clicks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid scans")
        p.add_argument("--exact", action="store_true", help="exact-probability mode")
        p.add_argument("--out", default=".", help="output directory")

    p_sim = sub.add_parser("simulate", help="simulate click records on the configured grid")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="EM-reconstruct a Wigner map from click records")
    common(p_rec)
    p_rec.add_argument("--records", nargs="+", required=True, help="click CSV file(s)")
    p_rec.set_defaults(func=cmd_reconstruct)

    p_rho = sub.add_parser("recover-rho", help="integrate a Wigner map into a density matrix")
    common(p_rho)
    p_rho.add_argument("--wigner", required=True, help="Wigner CSV file")
    p_rho.set_defaults(func=cmd_recover_rho)

    p_rep = sub.add_parser("report", help="summarize Wigner maps and recovery metrics")
    common(p_rep, config_required=False)
    p_rep.add_argument("--wigner", nargs="+", required=True, help="Wigner CSV file(s)")
    p_rep.add_argument("--metrics", default=None, help="metrics JSON from recover-rho")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
