"""Strata geometry, partition of unity and the threshold exit rule.

A particle carries a stratum label next to its position (the augmented
state). It stays labelled ``j`` while ``psi_j(x) >= kappa``; otherwise it
exits into ``k != j`` drawn with probability proportional to ``psi_k(x)``.

Two partitions of unity are provided:

* ``hard``: indicator of each region divided by the number of regions that
  contain the point, so overlaps are split evenly;
* ``smooth``: ``max(1 - q_j(x), 0)`` renormalized, where ``q_j`` is the
  region's quadratic form (``q_j < 1`` inside).

With hard psi, any ``kappa`` in ``(0, 1/J]`` makes the exit rule "leave the
region", and ``kappa = 1`` makes it "enter any overlap".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InconsistentGeometryError, UncoveredPointError


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float = 0.0
    kind = "ellipse"

    def __post_init__(self):
        if min(self.semi_axes) <= 0:
            raise ValueError("ellipse semi-axes must be positive")

    def quadratic_form(self, X: np.ndarray) -> np.ndarray:
        d = X[:, :2] - np.asarray(self.center, dtype=float)
        c, s = np.cos(self.angle), np.sin(self.angle)
        # coordinates in the ellipse frame
        p = (c * d[:, 0] + s * d[:, 1]) / self.semi_axes[0]
        q = (-s * d[:, 0] + c * d[:, 1]) / self.semi_axes[1]
        return p * p + q * q

    def contains(self, X: np.ndarray) -> np.ndarray:
        return self.quadratic_form(X) < 1.0

    def to_dict(self) -> dict:
        return {"kind": "ellipse", "center": list(map(float, self.center)),
                "semi_axes": list(map(float, self.semi_axes)), "angle": float(self.angle)}


def Circle(center, radius: float) -> Ellipse:
    """Circular region; stored as an ellipse with equal semi-axes."""
    return Ellipse(tuple(center), (float(radius), float(radius)), 0.0)


@dataclass(frozen=True)
class IndexSet:
    """Explicit state list for finite chains (state index in coordinate 0)."""

    states: tuple[int, ...]
    kind = "index_set"

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError("index set must be non-empty")

    def contains(self, X: np.ndarray) -> np.ndarray:
        return np.isin(np.rint(X[:, 0]).astype(np.int64), np.asarray(self.states, dtype=np.int64))

    def quadratic_form(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.contains(X), 0.0, np.inf)

    def to_dict(self) -> dict:
        return {"kind": "index_set", "states": [int(s) for s in self.states]}


Region = Union[Ellipse, IndexSet]


def region_from_dict(d: dict) -> Region:
    kind = d.get("kind")
    if kind == "ellipse":
        return Ellipse(tuple(d["center"]), tuple(d["semi_axes"]), float(d.get("angle", 0.0)))
    if kind == "circle":
        return Circle(tuple(d["center"]), float(d["radius"]))
    if kind == "index_set":
        return IndexSet(tuple(int(s) for s in d["states"]))
    raise ValueError(f"unknown region kind {kind!r}")


@dataclass(frozen=True)
class StrataDef:
    regions: tuple[Region, ...]
    psi_mode: str = "hard"
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not self.regions:
            raise ValueError("at least one stratum is required")
        if self.psi_mode not in ("hard", "smooth"):
            raise ValueError(f"psi_mode must be 'hard' or 'smooth', got {self.psi_mode!r}")
        coef = None
        if all(isinstance(r, Ellipse) for r in self.regions):
            # q(x) = A dx^2 + B dx dy + C dy^2 for every region at once
            cx = np.array([r.center[0] for r in self.regions], dtype=float)
            cy = np.array([r.center[1] for r in self.regions], dtype=float)
            c = np.cos([r.angle for r in self.regions])
            s = np.sin([r.angle for r in self.regions])
            a2 = np.array([r.semi_axes[0] for r in self.regions], dtype=float) ** 2
            b2 = np.array([r.semi_axes[1] for r in self.regions], dtype=float) ** 2
            coef = (cx, cy, c * c / a2 + s * s / b2, 2.0 * c * s * (1.0 / a2 - 1.0 / b2),
                    s * s / a2 + c * c / b2)
        object.__setattr__(self, "_coef", coef)
        table = None
        if all(isinstance(r, IndexSet) for r in self.regions):
            n = 1 + max(max(r.states) for r in self.regions)
            table = np.zeros((n, len(self.regions)), dtype=bool)
            for j, r in enumerate(self.regions):
                table[list(r.states), j] = True
        object.__setattr__(self, "_table", table)

    def _indicator(self, X: np.ndarray) -> np.ndarray:
        if self._table is not None:
            s = np.rint(X[:, 0]).astype(np.int64)
            ok = (s >= 0) & (s < self._table.shape[0])
            out = np.zeros((X.shape[0], self.J), dtype=bool)
            out[ok] = self._table[s[ok]]
            return out
        if self._coef is not None:
            return self.quadratic_forms(X) < 1.0
        return np.stack([r.contains(X) for r in self.regions], axis=1)

    @property
    def J(self) -> int:
        return len(self.regions)

    def quadratic_forms(self, X) -> np.ndarray:
        """Quadratic form of every region, shape (n, J)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._coef is None:
            return np.stack([r.quadratic_form(X) for r in self.regions], axis=1)
        cx, cy, A, B, C = self._coef
        dx = X[:, 0:1] - cx
        dy = X[:, 1:2] - cy
        return (A * dx) * dx + (B * dx) * dy + (C * dy) * dy

    def psi_matrix(self, X) -> np.ndarray:
        """psi values for every stratum, shape (n, J); rows sum to 1."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.psi_mode == "hard" or self._coef is None:
            w = self._indicator(X).astype(float)
        else:
            w = np.maximum(1.0 - self.quadratic_forms(X), 0.0)
        tot = w.sum(axis=1)
        if np.any(tot <= 0):
            bad = X[np.flatnonzero(tot <= 0)[0]]
            raise UncoveredPointError(f"point {bad.tolist()} is outside every stratum")
        return w / tot[:, None]

    def membership(self, X) -> np.ndarray:
        return self._indicator(np.atleast_2d(np.asarray(X, dtype=float)))

    def to_dict(self) -> dict:
        return {"name": self.name, "psi_mode": self.psi_mode,
                "regions": [r.to_dict() for r in self.regions]}

    @classmethod
    def from_dict(cls, d: dict) -> "StrataDef":
        return cls(tuple(region_from_dict(r) for r in d["regions"]),
                   d.get("psi_mode", "hard"), d.get("name", "custom"))


@dataclass(frozen=True)
class AugmentedState:
    x: np.ndarray
    index: int


def psi(strata: StrataDef, j: int, x) -> float:
    """Value of the j-th partition-of-unity function at a single point."""
    if not 0 <= j < strata.J:
        raise IndexError(f"stratum {j} out of range 0..{strata.J - 1}")
    return float(strata.psi_matrix(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0, j])


@dataclass(frozen=True)
class KappaDistribution:
    """Uniform law on ``[lo, hi]`` inside [0, 1]; ``lo == hi`` is a point mass."""

    lo: float = 1.0
    hi: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ValueError("kappa support must satisfy 0 <= lo <= hi <= 1")

    @classmethod
    def one(cls) -> "KappaDistribution":
        return cls(1.0, 1.0)

    @classmethod
    def point(cls, value: float) -> "KappaDistribution":
        return cls(value, value)

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "KappaDistribution":
        return cls(lo, hi)

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        if self.degenerate:
            return np.full(np.shape(u), self.lo)
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def to_dict(self) -> dict:
        return {"lo": float(self.lo), "hi": float(self.hi)}


def draw_kappa(eta: KappaDistribution, rng: np.random.Generator) -> float:
    return float(eta.from_uniform(rng.random()))


def exit_check_batch(psi_new: np.ndarray, labels: np.ndarray, kappa: np.ndarray,
                     u: np.ndarray | None) -> np.ndarray:
    """Vectorized exit rule.

    ``psi_new`` is (n, J) at the new positions, ``u`` supplies one uniform per
    row for the destination draw (only rows that exit consume it). Returns
    the new labels.
    """
    n = labels.shape[0]
    rows = np.arange(n)
    stay = psi_new[rows, labels] >= kappa
    new = labels.copy()
    go = np.flatnonzero(~stay)
    if go.size:
        w = psi_new[go].copy()
        w[np.arange(go.size), labels[go]] = 0.0
        tot = w.sum(axis=1)
        if np.any(tot <= 0):
            raise InconsistentGeometryError("exit declared but no other stratum covers the point")
        cum = np.cumsum(w, axis=1) / tot[:, None]
        uu = u[go] if u is not None else np.zeros(go.size)
        dest = (uu[:, None] >= cum).sum(axis=1)
        # guard against rounding in the last cumulative entry
        dest = np.minimum(dest, psi_new.shape[1] - 1)
        bad = w[np.arange(go.size), dest] <= 0
        if np.any(bad):
            # land on the last stratum with positive psi
            last = psi_new.shape[1] - 1 - np.argmax(w[:, ::-1] > 0, axis=1)
            dest = np.where(bad, last, dest)
        new[go] = dest
    return new


def exit_check(strata: StrataDef, current: AugmentedState, x_new, kappa: float,
               rng: np.random.Generator) -> int:
    """New stratum label after a move to ``x_new`` (possibly unchanged)."""
    P = strata.psi_matrix(np.atleast_1d(np.asarray(x_new, dtype=float))[None, :])
    return int(exit_check_batch(P, np.array([current.index]), np.array([kappa]),
                                np.array([rng.random()]))[0])


def index_of(strata: StrataDef, x, rng: np.random.Generator) -> int:
    """Stratum label for an initial point: psi-proportional draw on overlaps."""
    p = strata.psi_matrix(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0]
    nz = np.flatnonzero(p > 0)
    if nz.size == 1:
        return int(nz[0])
    return int(rng.choice(strata.J, p=p))


# ---------------------------------------------------------------------------
# Maier-Stein presets. The noise level eps = 0.01 makes the wells at (+-1, 0)
# very sticky (equilibrium std ~0.05 in u), so every stratum that contains a
# well has a boundary within ~2 std of it; otherwise no exits would be seen.

MS_DOMAIN = ((-1.5, 1.5), (-1.0, 1.0))


def _vertical3() -> tuple[Region, ...]:
    return (
        Ellipse((-1.56, 0.0), (0.64, 4.0)),
        Ellipse((0.0, 0.0), (1.08, 4.0)),
        Ellipse((1.56, 0.0), (0.64, 4.0)),
    )


def _vertical5(angle: float = 0.0, length: float = 4.0) -> tuple[Region, ...]:
    # (offset along the band normal, half-width); the narrow bands sit on
    # the wells
    bands = [(-1.8, 0.75), (-1.0, 0.1), (0.0, 0.95), (1.0, 0.1), (1.8, 0.75)]
    c, s = np.cos(angle), np.sin(angle)
    out = []
    for off, a in bands:
        center = (off, 0.0) if abs(off) == 1.0 else (off * c, off * s)
        out.append(Ellipse(center, (a, length), angle))
    return tuple(out)


def _circles6() -> tuple[Region, ...]:
    return (
        Circle((-2.7, 0.0), 1.75),
        Circle((-1.0, 0.0), 0.12),
        Circle((0.0, 1.0), 1.45),
        Circle((0.0, -1.0), 1.45),
        Circle((1.0, 0.0), 0.12),
        Circle((2.7, 0.0), 1.75),
    )


def build_fig2_setup(name: str, psi_mode: str = "hard") -> StrataDef:
    """Named strata families covering [-1.5, 1.5] x [-1, 1].

    ``vertical3``, ``vertical5``: tall ellipses side by side.
    ``tilted5``: the five-strata family rotated by 0.25 rad.
    ``circles6``: six circles of different radii; up to four overlap.
    """
    if name == "vertical3":
        regions = _vertical3()
    elif name == "vertical5":
        regions = _vertical5()
    elif name == "tilted5":
        regions = _vertical5(angle=0.25, length=8.0)
    elif name == "circles6":
        regions = _circles6()
    else:
        raise ValueError(f"unknown strata preset {name!r}")
    return StrataDef(regions, psi_mode, name)


def seed_points(strata: StrataDef) -> list[np.ndarray]:
    """One representative point per stratum, used for the initial injection."""
    pts = []
    for j, r in enumerate(strata.regions):
        if isinstance(r, IndexSet):
            states = np.array(sorted(r.states), dtype=float)[:, None]
            own = states[strata.membership(states).sum(axis=1) == 1]
            cand = own if own.shape[0] else states
            pts.append(cand[(cand.shape[0] - 1) // 2].copy())
        else:
            pts.append(np.asarray(r.center, dtype=float))
    return pts
