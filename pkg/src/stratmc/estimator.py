"""Binned occupation/injection measures and the error diagnostics.

All comparisons are total-variation distances between mass-normalized
histograms on identical grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyHistogramError, GridMismatchError


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    bins: int

    def __post_init__(self):
        if not (self.hi > self.lo and self.bins >= 1):
            raise ValueError(f"bad axis {self}")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def index(self, x: np.ndarray) -> np.ndarray:
        """Bin index; points outside the axis range go to the edge bins."""
        i = np.floor((x - self.lo) * (self.bins / (self.hi - self.lo))).astype(np.int64)
        return np.minimum(np.maximum(i, 0), self.bins - 1)

    def stamp(self) -> str:
        return f"{self.name}:{self.lo!r}:{self.hi!r}:{self.bins}"


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) not in (1, 2):
            raise ValueError("grids are 1-d or 2-d")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.bins for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def flat_index(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        idx = self.axes[0].index(X[:, 0])
        for k in range(1, self.dims):
            idx = idx * self.axes[k].bins + self.axes[k].index(X[:, k])
        return idx

    def centers(self) -> np.ndarray:
        """Bin centres as an (size, dims) array in flat (C) order."""
        mesh = np.meshgrid(*[a.centers for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def stamp(self) -> str:
        return ";".join(a.stamp() for a in self.axes)

    @classmethod
    def from_stamp(cls, s: str) -> "Grid":
        axes = []
        for part in s.split(";"):
            name, lo, hi, bins = part.split(":")
            axes.append(Axis(name, float(lo), float(hi), int(bins)))
        return cls(tuple(axes))

    @classmethod
    def for_states(cls, n_states: int) -> "Grid":
        return cls((Axis("state", -0.5, n_states - 0.5, n_states),))

    @classmethod
    def maier_stein(cls, u_bins: int = 100, v_bins: int = 100) -> "Grid":
        return cls((Axis("u", -1.5, 1.5, u_bins), Axis("v", -1.0, 1.0, v_bins)))


@dataclass
class WeightedHistogram:
    grid: Grid
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float).reshape(self.grid.shape)
        if np.any(self.counts < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def dims(self) -> int:
        return self.grid.dims

    @property
    def total_mass(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> "WeightedHistogram":
        m = self.total_mass
        if not m > 0:
            raise EmptyHistogramError("cannot normalize a histogram with zero mass")
        return WeightedHistogram(self.grid, self.counts / m)

    @classmethod
    def zeros(cls, grid: Grid) -> "WeightedHistogram":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_points(cls, grid: Grid, X: np.ndarray, weights=None) -> "WeightedHistogram":
        idx = grid.flat_index(np.asarray(X, dtype=float))
        c = np.bincount(idx, weights=weights, minlength=grid.size).astype(float)
        return cls(grid, c)


def _check_grids(h1: WeightedHistogram, h2: WeightedHistogram):
    if h1.grid != h2.grid:
        raise GridMismatchError(f"grid mismatch: {h1.grid.stamp()} vs {h2.grid.stamp()}")


def tv_distance(h1: WeightedHistogram, h2: WeightedHistogram) -> float:
    """Half the L1 distance between the mass-normalized histograms."""
    _check_grids(h1, h2)
    p = h1.normalized().counts
    q = h2.normalized().counts
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def marginal(h: WeightedHistogram, axis: int = 0) -> WeightedHistogram:
    """Keep ``axis``, summing out the other one."""
    if h.dims != 2:
        raise ValueError("marginal needs a 2-d histogram")
    other = 1 - axis
    return WeightedHistogram(Grid((h.grid.axes[axis],)), h.counts.sum(axis=other))


def u_marginal(h: WeightedHistogram) -> WeightedHistogram:
    return h if h.dims == 1 else marginal(h, 0)


def v_marginal(h: WeightedHistogram) -> WeightedHistogram:
    return h if h.dims == 1 else marginal(h, 1)


def fluctuation(prev_injection: WeightedHistogram, curr_injection: WeightedHistogram) -> float:
    """TV change of the v-marginal of the total injection measure."""
    return tv_distance(v_marginal(prev_injection), v_marginal(curr_injection))


def weight_error(a, a_ref) -> float:
    a = np.asarray(a, dtype=float)
    a_ref = np.asarray(a_ref, dtype=float)
    if a.shape != a_ref.shape:
        raise ValueError(f"length mismatch {a.shape} vs {a_ref.shape}")
    return float(0.5 * np.abs(a - a_ref).sum())


def stratum_sizes(batches: Sequence, J: int | None = None) -> np.ndarray:
    """Number of exits landing in each stratum on this iteration."""
    if J is None:
        J = len(batches)
    sizes = np.zeros(J, dtype=np.int64)
    for b in batches:
        sizes += np.bincount(np.asarray(b.exit_index, dtype=np.int64), minlength=J)[:J]
    return sizes


def accumulate_occupation(batches: Sequence, weights, grid: Grid | None = None,
                          normalize: bool = True) -> WeightedHistogram:
    """Sum over strata of ``weight_j * mean visit counts`` of batch ``j``.

    Each batch must carry binned occupation counts. With ``normalize`` the
    result is a probability histogram estimating the target law.
    """
    weights = np.asarray(weights, dtype=float)
    if len(batches) == 0:
        raise EmptyHistogramError("no batches")
    if weights.shape != (len(batches),):
        raise ValueError("one weight per batch is required")
    grid = grid or batches[0].grid
    total = np.zeros(grid.shape)
    for w, b in zip(weights, batches):
        if len(b) == 0:
            raise EmptyHistogramError(f"empty batch for stratum {b.stratum}")
        if b.grid != grid:
            raise GridMismatchError("batch occupation grid differs from the requested grid")
        if w == 0.0:
            continue
        total += w * (b.occupation.reshape(grid.shape) / len(b))
    h = WeightedHistogram(grid, total)
    return h.normalized() if normalize else h


def stratum_occupation(batch, grid: Grid | None = None) -> WeightedHistogram:
    grid = grid or batch.grid
    return WeightedHistogram(grid, batch.occupation.reshape(grid.shape) / len(batch))


def restrict(h: WeightedHistogram, strata, j: int) -> WeightedHistogram:
    """Zero every bin whose centre lies outside stratum ``j``."""
    inside = strata.membership(h.grid.centers())[:, j].reshape(h.grid.shape)
    return WeightedHistogram(h.grid, np.where(inside, h.counts, 0.0))


def stratum_occupation_errors(batches: Sequence, reference: WeightedHistogram, strata) -> np.ndarray:
    """TV distance, stratum by stratum, between the batch occupation and the
    reference restricted to that stratum."""
    out = np.full(len(batches), np.nan)
    for b in batches:
        ref = restrict(reference, strata, b.stratum)
        if ref.total_mass > 0 and b.occupation.sum() > 0:
            out[b.stratum] = tv_distance(stratum_occupation(b, reference.grid), ref)
    return out


def running_average(hists: Sequence[WeightedHistogram]) -> list[WeightedHistogram]:
    out = []
    acc = None
    for n, h in enumerate(hists, start=1):
        c = h.normalized().counts
        acc = c.copy() if acc is None else acc + c
        out.append(WeightedHistogram(h.grid, acc / n))
    return out


def boundary_band_mass(h: WeightedHistogram, strata, width: float = 0.2) -> float:
    """Fraction of mass in bins whose centre is near some region boundary.

    A centre is in the band of an elliptical region when its normalized
    radius ``sqrt(q)`` lies within ``width`` of 1.
    """
    c = h.grid.centers()
    near = np.zeros(c.shape[0], dtype=bool)
    for r in strata.regions:
        rad = np.sqrt(r.quadratic_form(c))
        near |= np.abs(rad - 1.0) <= width
    p = h.normalized().counts.ravel()
    return float(p[near].sum())


# ---------------------------------------------------------------------------
# delimited-text export. Every file starts with one ``#`` line of
# ``key=value`` metadata (always including ``grid`` for histograms), then a
# tab-separated header row, then data rows.

def fmt(v) -> str:
    """Exact, locale-free text for numbers and vectors (``;``-joined)."""
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(fmt(x) for x in np.asarray(v).ravel())
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns: Sequence[str], rows, meta: dict | None = None) -> None:
    lines = ["# " + " ".join(f"{k}={fmt(v)}" for k, v in (meta or {}).items()),
             "\t".join(columns)]
    for r in rows:
        if len(r) != len(columns):
            raise ValueError("row length does not match the header")
        lines.append("\t".join(fmt(v) for v in r))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing metadata line")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].split())
    cols = lines[1].split("\t")
    rows = [ln.split("\t") for ln in lines[2:] if ln]
    return meta, cols, rows


def parse_vector(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(";")]) if s else np.zeros(0)


def write_histogram(path, h: WeightedHistogram, **meta) -> None:
    g = h.grid
    idx = np.array(np.unravel_index(np.arange(g.size), g.shape)).T
    cen = g.centers()
    names = [a.name for a in g.axes]
    cols = [f"i_{n}" for n in names] + names + ["mass"]
    mass = h.counts.ravel()
    rows = ([*idx[b], *cen[b], mass[b]] for b in range(g.size))
    write_table(path, cols, rows, {"kind": "histogram", "grid": g.stamp(), **meta})


def read_histogram(path, expect_grid: Grid | None = None) -> WeightedHistogram:
    meta, cols, rows = read_table(path)
    if "grid" not in meta:
        raise ValueError(f"{path}: no grid stamp")
    g = Grid.from_stamp(meta["grid"])
    if expect_grid is not None and g != expect_grid:
        raise GridMismatchError(f"{path}: grid {g.stamp()} differs from {expect_grid.stamp()}")
    mass = np.array([float(r[-1]) for r in rows])
    if mass.size != g.size:
        raise ValueError(f"{path}: expected {g.size} rows, found {mass.size}")
    return WeightedHistogram(g, mass)
