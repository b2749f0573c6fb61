"""Command-line entry point: ``stratmc {run,benchmark,error,oracle}``.

Output files (all tab-separated, first line ``# key=value ...`` metadata):

``diagnostics.tsv``
    one row per (run, iteration): steps, cumulative steps, mean exit times,
    weights, stratum sizes, flattened ``G``, fluctuation, weight error,
    occupation error. Vectors are ``;``-joined.
``weights.tsv``
    weights per (run, iteration); iteration 0 holds the initial weights.
``occupation_marginals.tsv``
    u-marginal (or full 1-d histogram) of each iteration's occupation
    estimate; consumed by ``error``.
``occupation.tsv``, ``injection.tsv``
    final histograms, averaged over runs.
``benchmark.tsv``
    un-stratified histogram (Maier-Stein) or exact stationary law (discrete).
``error.tsv``
    per-iteration TV error of the u-marginal against the benchmark.
``oracle.json``
    the exact finite-chain report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import RunConfig, a_reference
from .errors import EmptyHistogramError, GridMismatchError, StratMCError
from .estimator import (Grid, WeightedHistogram, parse_vector, read_histogram, read_table,
                        running_average, tv_distance, u_marginal, write_histogram, write_table)
from .injection import initial_state, run_method
from .kernels import stationary_distribution
from .rng import CounterRNG
from .trajectory import free_run_histogram

DIAG_COLUMNS = ["run", "iteration", "steps", "cumulative_steps", "mean_tau", "weights",
                "occupation_weights", "stratum_sizes", "G", "fluctuation", "weight_error",
                "occupation_error", "stratum_errors"]


def _out_dir(cfg: RunConfig, out) -> Path:
    d = Path(out or cfg.out or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _reference(cfg: RunConfig, grid: Grid) -> WeightedHistogram | None:
    if cfg.is_discrete:
        pi = stationary_distribution(cfg.finite_chain().chain)
        return WeightedHistogram(grid, pi)
    path = cfg.benchmark.get("file")
    return read_histogram(path, grid) if path else None


def cmd_run(cfg: RunConfig, out=None) -> dict:
    out = _out_dir(cfg, out)
    kernel, strata, grid = cfg.kernel(), cfg.strata_def(), cfg.build_grid()
    a_ref = a_reference(cfg)
    ref = _reference(cfg, grid)
    meta = {"schema": "diagnostics", "grid": grid.stamp(), "J": strata.J,
            "version": cfg.version, "seed": cfg.seed}
    diag_rows, weight_rows, marg_rows = [], [], []
    finals_occ, finals_inj = [], []
    for r in range(cfg.runs_to_average):
        init = initial_state(strata)
        weight_rows.append([r, 0, init.a])
        try:
            res = run_method(kernel, strata, cfg.N, cfg.M, cfg.version, cfg.seed, cfg.kappa(), grid,
                             cfg.max_steps, cfg.threads, init, r, a_ref, reference=ref)
        except StratMCError as e:
            raise StratMCError(f"run {r}: {e}") from e
        for it in res.iterations:
            d = it.diagnostics
            diag_rows.append([r, d["iteration"], d["steps"], d["cumulative_steps"], d["mean_tau"],
                              d["weights"], d["occupation_weights"], d["stratum_sizes"], d["G"],
                              d["fluctuation"], d["weight_error"], d["occupation_error"],
                              d["stratum_errors"]])
            weight_rows.append([r, d["iteration"] + 1, d["weights"]])
            marg_rows.append([r, d["iteration"], d["cumulative_steps"],
                              u_marginal(it.occupation).normalized().counts])
        if res.iterations:
            finals_occ.append(res.iterations[-1].occupation.normalized().counts)
        finals_inj.append(res.final.total_injection(grid).normalized().counts)

    files = {}
    files["diagnostics"] = out / "diagnostics.tsv"
    write_table(files["diagnostics"], DIAG_COLUMNS, diag_rows, meta)
    files["weights"] = out / "weights.tsv"
    write_table(files["weights"], ["run", "iteration", "weights"], weight_rows,
                {"schema": "weights", "J": strata.J})
    mgrid = Grid((grid.axes[0],))
    files["occupation_marginals"] = out / "occupation_marginals.tsv"
    write_table(files["occupation_marginals"], ["run", "iteration", "cumulative_steps", "u_marginal"],
                marg_rows, {"schema": "marginals", "grid": grid.stamp(), "marginal_grid": mgrid.stamp()})
    files["injection"] = out / "injection.tsv"
    write_histogram(files["injection"], WeightedHistogram(grid, np.mean(finals_inj, axis=0)))
    if finals_occ:
        files["occupation"] = out / "occupation.tsv"
        write_histogram(files["occupation"], WeightedHistogram(grid, np.mean(finals_occ, axis=0)))
    files["config"] = out / "config.yaml"
    cfg.save(files["config"])
    return files


def benchmark_histogram(cfg: RunConfig, steps: int | None = None) -> WeightedHistogram:
    """Long un-stratified runs from each start, pooled; or exact pi if discrete."""
    grid = cfg.build_grid()
    if cfg.is_discrete:
        return WeightedHistogram(grid, stationary_distribution(cfg.finite_chain().chain))
    steps = int(cfg.benchmark.get("steps", 1_000_000) if steps is None else steps)
    if steps <= 0:
        raise EmptyHistogramError("benchmark needs at least one step")
    starts = np.asarray(cfg.benchmark.get("starts", [[1.0, 0.0], [-1.0, 0.0]]), dtype=float)
    counts = free_run_histogram(cfg.kernel(), starts, steps, CounterRNG(cfg.seed, 2**31), grid)
    return WeightedHistogram(grid, counts.sum(axis=0))


def cmd_benchmark(cfg: RunConfig, out=None, steps: int | None = None) -> Path:
    out = _out_dir(cfg, out)
    h = benchmark_histogram(cfg, steps)
    path = out / "benchmark.tsv"
    write_histogram(path, h.normalized(), schema="benchmark",
                    steps=int(cfg.benchmark.get("steps", 0)) if not cfg.is_discrete else 0)
    return path


def error_table(run_dir, benchmark_path) -> list[list]:
    """Rows ``(iteration, mean cumulative steps, running TV, instantaneous TV, runs)``."""
    meta, cols, rows = read_table(Path(run_dir) / "occupation_marginals.tsv")
    bench = read_histogram(benchmark_path)
    if meta.get("grid") != bench.grid.stamp():
        raise GridMismatchError(f"run grid {meta.get('grid')} differs from benchmark grid "
                                f"{bench.grid.stamp()}")
    mgrid = Grid.from_stamp(meta["marginal_grid"])
    ref = u_marginal(bench).normalized()
    runs: dict[int, list] = {}
    for r in rows:
        runs.setdefault(int(r[0]), []).append((int(r[1]), int(r[2]), parse_vector(r[3])))
    per_run = []
    for r, seq in sorted(runs.items()):
        seq.sort()
        hs = [WeightedHistogram(mgrid, v) for _, _, v in seq]
        ra = running_average(hs)
        per_run.append([(it, st, tv_distance(a, ref), tv_distance(h, ref))
                        for (it, st, _), a, h in zip(seq, ra, hs)])
    n_it = min(len(p) for p in per_run) if per_run else 0
    table = []
    for i in range(n_it):
        table.append([per_run[0][i][0],
                      float(np.mean([p[i][1] for p in per_run])),
                      float(np.mean([p[i][2] for p in per_run])),
                      float(np.mean([p[i][3] for p in per_run])),
                      len(per_run)])
    return table


def cmd_error(run_dir, benchmark_path, out=None) -> Path:
    table = error_table(run_dir, benchmark_path)
    path = Path(out or run_dir) / "error.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_table(path, ["iteration", "cumulative_steps", "tv_running", "tv_instant", "runs"], table,
                {"schema": "error", "metric": "u_marginal_tv"})
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def cmd_oracle(cfg: RunConfig, out=None) -> dict:
    fsc = cfg.finite_chain()
    rep = _jsonable(oracle.report(fsc, laziness=cfg.laziness))
    rep["minorization_flag"] = "ok" if rep["minorization_ok"] else "B1 fails (try laziness)"
    if out is not None or cfg.out is not None:
        d = _out_dir(cfg, out)
        (d / "oracle.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    return rep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stratmc", description="Stratified MCMC injection measure method")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML config file or preset name")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")

    common(sub.add_parser("run", help="run the injection measure method"))
    b = sub.add_parser("benchmark", help="long un-stratified reference histogram")
    common(b)
    b.add_argument("--steps", type=int, default=None, help="override benchmark steps")
    e = sub.add_parser("error", help="error-vs-time table of a run against a benchmark")
    e.add_argument("--run", required=True, help="run output directory")
    e.add_argument("--benchmark", required=True, help="benchmark.tsv path")
    e.add_argument("--out", default=None, help="output directory (default: run directory)")
    o = sub.add_parser("oracle", help="exact report for a finite chain")
    common(o)
    o.add_argument("--laziness", type=float, default=None, help="exit-kernel laziness p")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "error":
            print(cmd_error(args.run, args.benchmark, args.out))
            return 0
        cfg = RunConfig.load(args.config).with_overrides(seed=args.seed, threads=args.threads)
        if args.command == "run":
            files = cmd_run(cfg, args.out)
            for k, v in files.items():
                print(f"{k}\t{v}")
        elif args.command == "benchmark":
            print(cmd_benchmark(cfg, args.out, args.steps))
        elif args.command == "oracle":
            if args.laziness is not None:
                cfg = cfg.with_overrides(laziness=args.laziness)
            print(json.dumps(cmd_oracle(cfg, args.out), indent=2, sort_keys=True))
    except (StratMCError, ValueError, OSError) as e:
        print(f"stratmc {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
