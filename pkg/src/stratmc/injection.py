"""The injection measure method: weighted injection measures, the strata
transition matrix ``G`` and the two weight updates.

Convention: ``G[k, j]`` is the fraction of exits started in stratum ``k``
that land in stratum ``j`` (row-stochastic), and weights update as row
vectors, ``a' = a G``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (NonConvergenceError, ReducibleMatrixError, StarvedStratumError,
                     StratMCError, VanishingWeightError)
from .estimator import (Grid, WeightedHistogram, accumulate_occupation, fluctuation,
                        stratum_occupation_errors, stratum_sizes, tv_distance, weight_error)
from .rng import LANE_RESAMPLE, CounterRNG
from .strata import IndexSet, KappaDistribution, StrataDef, seed_points
from .trajectory import ExitBatch, default_max_steps, sample_exit_batches

VERSIONS = ("basic", "eigen")


@dataclass
class EmpiricalMeasure:
    """Finite weighted point set; weights need not be normalized."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.points.shape[0] == 0:
            raise ValueError("empirical measure must be non-empty")
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("one weight per point is required")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and non-negative")
        if not self.total_weight > 0:
            raise ValueError("total weight must be positive")
        self._cum = np.cumsum(self.weights) / self.total_weight

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def point_mass(cls, x) -> "EmpiricalMeasure":
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :], np.ones(1))

    def normalized(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points, self.weights / self.total_weight)

    def index_from_uniforms(self, u) -> np.ndarray:
        """Inverse-CDF point selection; zero-weight points are never chosen."""
        idx = np.searchsorted(self._cum, np.asarray(u), side="right")
        return np.minimum(idx, len(self) - 1)

    def histogram(self, grid: Grid) -> WeightedHistogram:
        return WeightedHistogram.from_points(grid, self.points, self.weights)


@dataclass
class InjectionState:
    nu: list[EmpiricalMeasure]
    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if len(self.nu) != self.a.shape[0]:
            raise ValueError("one injection measure per weight is required")
        if np.any(self.a < 0) or abs(self.a.sum() - 1.0) > 1e-9:
            raise ValueError("weights must form a probability vector")

    @property
    def J(self) -> int:
        return len(self.nu)

    def total_injection(self, grid: Grid) -> WeightedHistogram:
        """Histogram of ``sum_j a_j nu_j``."""
        h = np.zeros(grid.shape)
        for aj, nj in zip(self.a, self.nu):
            if aj > 0:
                h += aj * nj.normalized().histogram(grid).counts
        return WeightedHistogram(grid, h)


def resample(nu_j: EmpiricalMeasure, M: int, rng) -> np.ndarray:
    """``M`` i.i.d. draws from ``nu_j`` (multinomial, with replacement)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if isinstance(rng, CounterRNG):
        u = rng.uniform(np.arange(M, dtype=np.uint64), LANE_RESAMPLE, [0])[:, 0]
    else:
        u = rng.random(M)
    return nu_j.points[nu_j.index_from_uniforms(u)]


def build_G(batches: Sequence[ExitBatch], J: int | None = None) -> np.ndarray:
    J = len(batches) if J is None else J
    G = np.zeros((J, J))
    for k, b in enumerate(batches):
        if len(b) == 0:
            raise StarvedStratumError(k)
        G[k] = np.bincount(b.exit_index, minlength=J)[:J] / len(b)
    return G


def lazy(G: np.ndarray, p: float) -> np.ndarray:
    if not 0 < p <= 1:
        raise ValueError("laziness p must lie in (0, 1]")
    G = np.asarray(G, dtype=float)
    return p * G + (1.0 - p) * np.eye(G.shape[0])


def _blocks(G: np.ndarray):
    n, lab = connected_components(np.asarray(G) > 0, directed=True, connection="strong")
    return n, [np.flatnonzero(lab == c).tolist() for c in range(n)]


def principal_left_eigenvector(G: np.ndarray, tol: float = 1e-12,
                               max_iters: int = 100_000) -> np.ndarray:
    """Probability vector ``z`` with ``zG = z``, by power iteration on lazy(G, 1/2).

    Reducible ``G`` is rejected with the strongly connected blocks listed.
    """
    G = np.asarray(G, dtype=float)
    J = G.shape[0]
    nb, blocks = _blocks(G)
    if nb > 1:
        raise ReducibleMatrixError(f"G is reducible; strata blocks {blocks}", blocks)
    L = lazy(G, 0.5)
    z = np.full(J, 1.0 / J)
    for _ in range(max_iters):
        # a few cheap steps, then test the residual on G itself
        for _ in range(8):
            z = z @ L
        z = np.clip(z, 0.0, None)
        z /= z.sum()
        if np.abs(z @ G - z).sum() < tol:
            return z
    raise NonConvergenceError(f"eigenvector power iteration did not reach tol={tol}")


def _new_measures(batches: Sequence[ExitBatch], contrib: np.ndarray, J: int):
    """Pool exit points by destination, exit from ``k`` weighted ``contrib[k]/M_k``."""
    pts = [[] for _ in range(J)]
    wts = [[] for _ in range(J)]
    for k, b in enumerate(batches):
        w = contrib[k] / len(b)
        for j in range(J):
            sel = b.exit_index == j
            if sel.any():
                pts[j].append(b.exit_points[sel])
                wts[j].append(np.full(int(sel.sum()), w))
    return pts, wts


def _assemble(pts, wts, J: int, allow_vanishing: bool = False) -> list[EmpiricalMeasure]:
    empty = [j for j in range(J) if not pts[j]]
    zero = [j for j in range(J) if pts[j] and np.concatenate(wts[j]).sum() <= 0]
    if empty or (zero and not allow_vanishing):
        raise VanishingWeightError(sorted(empty + zero))
    out = []
    for j in range(J):
        P = np.concatenate(pts[j])
        W = np.concatenate(wts[j])
        if W.sum() <= 0:
            # zero-weight stratum: keep its exits unweighted
            W = np.ones_like(W)
        out.append(EmpiricalMeasure(P, W / W.sum()))
    return out


def basic_update(state: InjectionState, batches: Sequence[ExitBatch], G: np.ndarray,
                 allow_vanishing: bool = False) -> InjectionState:
    """``a' = aG``; ``nu'_j`` pools exits into ``j`` weighted by ``a_k/M_k``.

    A stratum whose new weight is zero raises ``VanishingWeightError`` unless
    ``allow_vanishing`` is set, in which case its measure keeps the landed
    exits with equal weights.
    """
    J = state.J
    a_new = state.a @ G
    vanish = np.flatnonzero(a_new <= 0)
    if vanish.size and not allow_vanishing:
        raise VanishingWeightError(vanish.tolist())
    a_new = a_new / a_new.sum()
    pts, wts = _new_measures(batches, state.a, J)
    return InjectionState(_assemble(pts, wts, J, allow_vanishing), a_new)


def eigen_update(state: InjectionState, batches: Sequence[ExitBatch], G: np.ndarray,
                 solver_tol: float = 1e-12) -> InjectionState:
    """Weights ``z`` with ``zG = z``; ``nu'_j`` pools exits weighted by ``z_k/M_k``."""
    J = state.J
    z = principal_left_eigenvector(G, solver_tol)
    vanish = np.flatnonzero(z <= 0)
    if vanish.size:
        raise VanishingWeightError(vanish.tolist())
    pts, wts = _new_measures(batches, z, J)
    return InjectionState(_assemble(pts, wts, J), z)


def initial_state(strata: StrataDef, points=None, a=None) -> InjectionState:
    """Starting injection measures and uniform weights.

    Index-set strata start uniform on the states only they cover; geometric
    strata start as a point mass at the region centre. ``points`` overrides
    both with one point mass per stratum.
    """
    J = strata.J
    a = np.full(J, 1.0 / J) if a is None else np.asarray(a, dtype=float)
    if points is not None:
        return InjectionState([EmpiricalMeasure.point_mass(p) for p in points], a)
    nu = []
    for r, p in zip(strata.regions, seed_points(strata)):
        if isinstance(r, IndexSet):
            states = np.array(sorted(r.states), dtype=float)[:, None]
            own = states[strata.membership(states).sum(axis=1) == 1]
            pts = own if own.shape[0] else states
            nu.append(EmpiricalMeasure(pts, np.ones(pts.shape[0])))
        else:
            nu.append(EmpiricalMeasure.point_mass(p))
    return InjectionState(nu, a)


@dataclass
class IterationOutput:
    iteration: int
    state: InjectionState
    G: np.ndarray
    occupation: WeightedHistogram
    injection: WeightedHistogram
    diagnostics: dict
    batches: list | None = None


@dataclass
class RunResult:
    initial: InjectionState
    iterations: list[IterationOutput] = field(default_factory=list)

    @property
    def final(self) -> InjectionState:
        return self.iterations[-1].state if self.iterations else self.initial


def run_method(kernel, strata: StrataDef, N: int, M: int, version: str = "basic",
               seed: int = 0, eta: KappaDistribution | None = None, grid: Grid | None = None,
               max_steps: int | None = None, threads: int = 1,
               init: InjectionState | None = None, run_index: int = 0,
               a_ref=None, keep_batches: bool = False, solver_tol: float = 1e-12,
               reference: WeightedHistogram | None = None) -> RunResult:
    """Algorithm loop: ``N`` iterations of sample, count, update.

    The per-stratum occupation measures of iteration ``n`` are combined with
    the weights produced by that iteration's update (``a^n G^n`` or the
    eigenvector of ``G^n``).
    """
    if version not in VERSIONS:
        raise ValueError(f"version must be one of {VERSIONS}")
    if N < 0 or M < 1:
        raise ValueError("need N >= 0 and M >= 1")
    eta = eta or KappaDistribution.one()
    if grid is None:
        grid = Grid.for_states(kernel.n_states) if hasattr(kernel, "n_states") else Grid.maier_stein()
    max_steps = max_steps or default_max_steps(kernel)
    state = init or initial_state(strata)
    result = RunResult(initial=state)
    prev_inj = state.total_injection(grid)
    cum_steps = 0
    J = strata.J
    for n in range(N):
        t0 = time.perf_counter()
        rngs = [CounterRNG(seed, run_index, n, j) for j in range(J)]
        try:
            batches = sample_exit_batches(kernel, strata, state.nu, M, eta, max_steps, rngs,
                                          range(J), grid, "histogram", threads)
        except StratMCError as e:
            e.args = (f"iteration {n}: {e.args[0] if e.args else e}",) + tuple(e.args[1:])
            e.iteration = n
            raise
        G = build_G(batches, J)
        try:
            if version == "basic":
                new = basic_update(state, batches, G)
            else:
                new = eigen_update(state, batches, G, solver_tol)
        except StratMCError as e:
            e.iteration = n
            raise
        w_occ = new.a
        occ = accumulate_occupation(batches, w_occ, grid)
        inj = new.total_injection(grid)
        steps = int(sum(b.steps for b in batches))
        cum_steps += steps
        diag = {
            "iteration": n,
            "weights": new.a.copy(),
            "occupation_weights": np.asarray(w_occ, dtype=float).copy(),
            "G": G.copy(),
            "batch_sizes": np.array([len(b) for b in batches]),
            "stratum_sizes": stratum_sizes(batches, J),
            "steps": steps,
            "cumulative_steps": cum_steps,
            "mean_tau": np.array([b.tau.mean() for b in batches]),
            "fluctuation": fluctuation(prev_inj, inj),
            "weight_error": weight_error(new.a, a_ref) if a_ref is not None else float("nan"),
            "occupation_error": tv_distance(occ, reference) if reference is not None else float("nan"),
            "stratum_errors": (stratum_occupation_errors(batches, reference, strata)
                               if reference is not None else np.full(J, np.nan)),
            "seconds": time.perf_counter() - t0,
        }
        result.iterations.append(IterationOutput(n, new, G, occ, inj, diag,
                                                 batches if keep_batches else None))
        state = new
        prev_inj = inj
    return result
