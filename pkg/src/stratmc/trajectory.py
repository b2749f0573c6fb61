"""Run particles from injection points to their first stratum exit.

Replicas of one batch are advanced in lockstep as numpy arrays. Every random
number a replica consumes is addressed by ``(replica, lane, step)`` in a
:class:`~stratmc.rng.CounterRNG`, so results do not depend on how replicas
are grouped into chunks or threads.

Occupation is recorded in one of three modes:

``"histogram"``
    integer visit counts of ``X_0..X_{tau-1}`` on a :class:`Grid`, summed
    over the batch;
``"points"``
    the full visited point list of each replica (small runs, tests);
``"none"``
    nothing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import TrajectoryCapError
from .estimator import Grid
from .rng import (LANE_DESTINATION, LANE_KAPPA, LANE_NOISE, LANE_RESAMPLE, CounterRNG,
                  stream_normal, stream_uniform)
from .strata import AugmentedState, KappaDistribution, StrataDef, exit_check_batch

SDE_MAX_STEPS = 10_000_000
CHAIN_MAX_STEPS = 100_000
CHUNK_SIZE = 8192
BLOCK_STEPS = 64
OCCUPATION_MODES = ("histogram", "points", "none")


def default_max_steps(kernel) -> int:
    return CHAIN_MAX_STEPS if kernel.noise_kind == "uniform" else SDE_MAX_STEPS


@dataclass
class ExitRecord:
    """One trajectory: start stratum, exit point/stratum, exit time, visits."""

    start_index: int
    start_point: np.ndarray
    exit_point: np.ndarray
    exit_index: int
    tau: int
    occupation: np.ndarray | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be at least 1")
        if self.exit_index == self.start_index:
            raise ValueError("an exit must change the stratum index")


@dataclass
class ExitBatch:
    """Exit records of ``M`` replicas started in one stratum, stored as arrays."""

    stratum: int
    start_points: np.ndarray
    exit_points: np.ndarray
    exit_index: np.ndarray
    tau: np.ndarray
    grid: Grid | None = None
    occupation: np.ndarray | None = None
    paths: list | None = None
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.weights is None:
            n = len(self.tau)
            self.weights = np.full(n, 1.0 / n) if n else np.zeros(0)

    def __len__(self) -> int:
        return int(self.tau.shape[0])

    @property
    def steps(self) -> int:
        return int(self.tau.sum())

    def record(self, i: int) -> ExitRecord:
        occ = self.paths[i] if self.paths is not None else None
        return ExitRecord(self.stratum, self.start_points[i], self.exit_points[i],
                          int(self.exit_index[i]), int(self.tau[i]), occ)

    def records(self) -> list[ExitRecord]:
        return [self.record(i) for i in range(len(self))]

    def __iter__(self):
        return iter(self.records())


def _noise_block(kernel, streams: np.ndarray, t0: int, nsteps: int) -> np.ndarray:
    counters = np.arange(t0, t0 + nsteps, dtype=np.uint64)
    if kernel.noise_kind == "uniform":
        return stream_uniform(streams, LANE_NOISE, counters)[:, :, None]
    return stream_normal(streams, LANE_NOISE, counters, kernel.noise_dim)


def _run_rows(kernel, strata: StrataDef, labels0: np.ndarray, starts: np.ndarray,
              streams: np.ndarray, kappa: np.ndarray, replica: np.ndarray, max_steps: int,
              grid: Grid | None, mode: str) -> dict:
    """Advance every row to its exit. Rows may start in different strata."""
    n, d = starts.shape
    J = strata.J
    exit_pts = np.empty_like(starts)
    exit_idx = np.empty(n, dtype=np.int64)
    tau = np.empty(n, dtype=np.int64)
    counts = np.zeros(J * grid.size, dtype=np.int64) if mode == "histogram" else None
    path_rep: list[np.ndarray] = []
    path_x: list[np.ndarray] = []

    x = np.ascontiguousarray(starts, dtype=float)
    local = np.arange(n)          # chunk row of each active particle
    labels = labels0.astype(np.int64).copy()
    kap = kappa.copy()
    t = 0
    while local.size:
        if t >= max_steps:
            i = int(local[0])
            partial = {"stratum": int(labels0[i]), "steps": t,
                       "active": replica[local].tolist(), "positions": x.copy()}
            raise TrajectoryCapError(
                f"replica {int(replica[i])} of stratum {int(labels0[i])} did not exit "
                f"within {max_steps} steps", replica=int(replica[i]), partial=partial)
        nb = min(BLOCK_STEPS, max_steps - t)
        noise = _noise_block(kernel, streams[local], t + 1, nb)
        dest_u = stream_uniform(streams[local], LANE_DESTINATION,
                                np.arange(t + 1, t + 1 + nb, dtype=np.uint64))
        rows = np.arange(local.size)
        offs = labels0[local] * (grid.size if mode == "histogram" else 0)
        bins = []
        for b in range(nb):
            if mode == "histogram":
                bins.append(offs + grid.flat_index(x))
            elif mode == "points":
                path_rep.append(local.copy())
                path_x.append(x.copy())
            xn = kernel.step_batch(x, np.ascontiguousarray(noise[rows, b]))
            new = exit_check_batch(strata.psi_matrix(xn), labels, kap, dest_u[rows, b])
            gone = new != labels
            t += 1
            if gone.any():
                li = local[gone]
                exit_pts[li] = xn[gone]
                exit_idx[li] = new[gone]
                tau[li] = t
                keep = ~gone
                local = local[keep]
                rows = rows[keep]
                offs = offs[keep]
                x = np.ascontiguousarray(xn[keep])
                labels = labels[keep]
                kap = kap[keep]
                if not local.size:
                    break
            else:
                x = xn
        if bins:
            counts += np.bincount(np.concatenate(bins), minlength=counts.size)
    out = {"exit_points": exit_pts, "exit_index": exit_idx, "tau": tau, "counts": counts}
    if mode == "points":
        if path_rep:
            pr = np.concatenate(path_rep)
            px = np.concatenate(path_x)
            order = np.argsort(pr, kind="stable")
            out["paths"] = np.split(px[order], np.cumsum(tau)[:-1])
        else:
            out["paths"] = [np.empty((0, d)) for _ in range(n)]
    return out


def _check_args(grid, occupation, max_steps, strata=None):
    if strata is not None and strata.J < 2:
        # no other stratum to move to, so the cap would be reached for sure
        raise TrajectoryCapError("a single stratum admits no exit; max_steps would be reached",
                                 replica=0, partial={"steps": 0})
    if occupation not in OCCUPATION_MODES:
        raise ValueError(f"occupation must be one of {OCCUPATION_MODES}")
    if occupation == "histogram" and grid is None:
        raise ValueError("histogram occupation needs a grid")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")


def _run_all(kernel, strata, labels0, starts, streams, kappa, replica, max_steps, grid,
             occupation, threads) -> dict:
    n = starts.shape[0]
    chunks = [slice(s, min(s + CHUNK_SIZE, n)) for s in range(0, n, CHUNK_SIZE)]

    def job(sl):
        return _run_rows(kernel, strata, labels0[sl], starts[sl], streams[sl], kappa[sl],
                         replica[sl], max_steps, grid, occupation)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(sl) for sl in chunks]

    # deterministic reduce in row order
    out = {k: np.concatenate([r[k] for r in results]) for k in ("exit_points", "exit_index", "tau")}
    out["counts"] = None
    if occupation == "histogram":
        c = np.zeros(strata.J * grid.size, dtype=np.int64)
        for r in results:
            c += r["counts"]
        out["counts"] = c.reshape(strata.J, grid.size)
    out["paths"] = [p for r in results for p in r["paths"]] if occupation == "points" else None
    return out


def _split(out: dict, group: np.ndarray, stratum: int, starts: np.ndarray, grid, occupation) -> ExitBatch:
    sel = np.asarray(group)
    return ExitBatch(
        stratum=stratum,
        start_points=starts[sel],
        exit_points=out["exit_points"][sel],
        exit_index=out["exit_index"][sel],
        tau=out["tau"][sel],
        grid=grid if occupation == "histogram" else None,
        occupation=out["counts"][stratum].copy() if occupation == "histogram" else None,
        paths=[out["paths"][i] for i in sel] if occupation == "points" else None,
    )


def run_replicas(kernel, strata: StrataDef, stratum: int, starts: np.ndarray, eta: KappaDistribution,
                 max_steps: int, rng: CounterRNG, grid: Grid | None = None,
                 occupation: str = "histogram", threads: int = 1,
                 first_replica: int = 0) -> ExitBatch:
    """Run one replica from each row of ``starts`` (replica ids consecutive)."""
    _check_args(grid, occupation, max_steps, strata)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    M = starts.shape[0]
    reps = np.arange(first_replica, first_replica + M, dtype=np.uint64)
    streams = rng.streams(reps)
    kappa = eta.from_uniform(stream_uniform(streams, LANE_KAPPA, [0])[:, 0])
    labels0 = np.full(M, stratum, dtype=np.int64)
    out = _run_all(kernel, strata, labels0, starts, streams, kappa, reps.astype(np.int64),
                   max_steps, grid, occupation, threads)
    return _split(out, np.arange(M), stratum, starts, grid, occupation)


def _as_counter_rng(rng) -> CounterRNG:
    if isinstance(rng, CounterRNG):
        return rng
    if isinstance(rng, np.random.Generator):
        return CounterRNG(int(rng.integers(0, 2**63)))
    return CounterRNG(int(rng))


def run_to_exit(kernel, strata: StrataDef, start: AugmentedState, eta: KappaDistribution,
                max_steps: int | None = None, rng=None, replica: int = 0) -> ExitRecord:
    """Single trajectory from ``start`` until its stratum index first changes.

    The occupation record holds ``X_0..X_{tau-1}``; the exit point is not
    part of it.
    """
    rng = _as_counter_rng(0 if rng is None else rng)
    if max_steps is None:
        max_steps = default_max_steps(kernel)
    x0 = np.atleast_1d(np.asarray(start.x, dtype=float))[None, :]
    b = run_replicas(kernel, strata, int(start.index), x0, eta, max_steps, rng,
                     occupation="points", first_replica=replica)
    return b.record(0)


def _starts(nu_j, streams: np.ndarray) -> np.ndarray:
    u = stream_uniform(streams, LANE_RESAMPLE, [0])[:, 0]
    return nu_j.points[nu_j.index_from_uniforms(u)]


def sample_exit_batch(kernel, strata: StrataDef, nu_j, M: int, eta: KappaDistribution,
                      max_steps: int | None, rng: CounterRNG, stratum: int,
                      grid: Grid | None = None, occupation: str = "histogram",
                      threads: int = 1) -> ExitBatch:
    """``M`` independent exits, each started from a fresh draw of ``nu_j``.

    Replica ``r`` takes its start from the resample lane of ``rng``, so the
    batch is identical for any thread count.
    """
    return sample_exit_batches(kernel, strata, [nu_j], M, eta, max_steps, [rng], [stratum],
                               grid, occupation, threads)[0]


def sample_exit_batches(kernel, strata: StrataDef, nus, M: int, eta: KappaDistribution,
                        max_steps: int | None, rngs, strata_ids=None,
                        grid: Grid | None = None, occupation: str = "histogram",
                        threads: int = 1) -> list[ExitBatch]:
    """One batch of ``M`` exits per listed stratum, advanced together.

    Equivalent to calling :func:`sample_exit_batch` once per stratum; running
    them in one array only saves interpreter overhead.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if max_steps is None:
        max_steps = default_max_steps(kernel)
    _check_args(grid, occupation, max_steps, strata)
    ids = list(range(len(nus))) if strata_ids is None else list(strata_ids)
    reps = np.arange(M, dtype=np.uint64)
    streams = np.concatenate([r.streams(reps) for r in rngs])
    starts = np.concatenate([_starts(nu, r.streams(reps)) for nu, r in zip(nus, rngs)])
    labels0 = np.repeat(np.asarray(ids, dtype=np.int64), M)
    kappa = eta.from_uniform(stream_uniform(streams, LANE_KAPPA, [0])[:, 0])
    replica = np.tile(np.arange(M, dtype=np.int64), len(ids))
    out = _run_all(kernel, strata, labels0, starts, streams, kappa, replica, max_steps,
                   grid, occupation, threads)
    return [_split(out, np.arange(g * M, (g + 1) * M), j, starts, grid, occupation)
            for g, j in enumerate(ids)]


def free_run_histogram(kernel, starts, steps: int, rng: CounterRNG, grid: Grid,
                       record_start: bool = True) -> np.ndarray:
    """Un-stratified runs, one per row of ``starts``, binned on ``grid``.

    Returns integer visit counts of shape ``(n_rows, grid.size)``. With
    ``record_start`` the visited points are ``X_0..X_{steps-1}``; otherwise
    ``X_1..X_steps``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, dtype=float)))
    n = x.shape[0]
    streams = rng.streams(np.arange(n, dtype=np.uint64))
    offs = np.arange(n, dtype=np.int64) * grid.size
    counts = np.zeros(n * grid.size, dtype=np.int64)
    t = 0
    block = 4096
    while t < steps:
        nb = min(block, steps - t)
        noise = _noise_block(kernel, streams, t + 1, nb)
        idx = np.empty((nb, n), dtype=np.int64)
        for b in range(nb):
            if record_start:
                idx[b] = offs + grid.flat_index(x)
            x = kernel.step_batch(x, np.ascontiguousarray(noise[:, b]))
            if not record_start:
                idx[b] = offs + grid.flat_index(x)
        counts += np.bincount(idx.ravel(), minlength=counts.size)
        t += nb
    return counts.reshape(n, grid.size)
