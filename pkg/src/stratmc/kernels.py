"""Markov kernels: finite-state chains and Euler-Maruyama SDE steps.

Kernels are immutable. Randomness is supplied from outside, either as a
``numpy.random.Generator`` (single-step API) or as pre-drawn noise arrays
(batched API used by the trajectory engine).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NonConvergenceError, NonFiniteStateError, ReducibleChainError


@dataclass(frozen=True, eq=False)
class DiscreteChain:
    """Row-stochastic transition matrix on states ``0..n-1``.

    States are carried as 1-d state vectors holding the integer index, so the
    same trajectory code handles chains and SDEs.
    """

    P: np.ndarray
    noise_kind: str = field(default="uniform", init=False)
    noise_dim: int = field(default=1, init=False)
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValueError("P must be a non-empty square matrix")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("P must have finite non-negative entries")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows of P must sum to 1 within 1e-12")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        cum = np.cumsum(P, axis=1)
        # pin everything from the last positive entry onward to exactly 1 so
        # rounding can never select a zero-probability trailing state
        for i in range(P.shape[0]):
            last = np.flatnonzero(P[i] > 0)[-1]
            cum[i, last:] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def step_batch(self, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Advance states ``x`` (shape (n, 1)) using uniforms ``noise`` (n, 1)."""
        s = x[:, 0].astype(np.int64)
        if s.size and (s.min() < 0 or s.max() >= self.n_states):
            raise IndexError("discrete state out of range")
        nxt = (noise[:, :1] >= self._cum[s]).sum(axis=1)
        return nxt.astype(float)[:, None]

    def step(self, state, rng: np.random.Generator) -> np.ndarray:
        x = np.atleast_1d(np.asarray(state, dtype=float)).reshape(1, 1)
        return self.step_batch(x, rng.random((1, 1)))[0]


@dataclass(frozen=True, eq=False)
class SdeKernel:
    """Euler-Maruyama step ``x + h*drift(x) + noise_scale*sqrt(h)*xi``.

    ``drift`` maps an (n, d) array to an (n, d) array.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    noise_scale: float
    h: float
    dim: int = 2
    noise_kind: str = field(default="normal", init=False)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be non-negative")
        object.__setattr__(self, "_amp", float(self.noise_scale) * np.sqrt(float(self.h)))

    @property
    def noise_dim(self) -> int:
        return self.dim

    def step_batch(self, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
        f = self.drift(x)
        out = x + self.h * f + self._amp * noise
        if not np.all(np.isfinite(out)):
            raise NonFiniteStateError("non-finite state produced by SDE step")
        return out

    def step(self, state, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(state, dtype=float).reshape(1, self.dim)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError("non-finite input state")
        return self.step_batch(x, rng.standard_normal((1, self.dim)))[0]


@dataclass(frozen=True)
class MaierSteinParams:
    beta: float = 10.0
    epsilon: float = 0.01

    def __post_init__(self):
        if not (self.beta > 0 and self.epsilon > 0):
            raise ValueError("beta and epsilon must be positive")


def maier_stein_drift(u, v, params: MaierSteinParams):
    """Drift ``(u - u^3 - beta*u*v^2, -(1 + u^2)*v)``; works on scalars or arrays."""
    uu = u * u
    return u - uu * u - params.beta * u * (v * v), -(1.0 + uu) * v


def maier_stein_kernel(params: MaierSteinParams, h: float = 1e-3) -> SdeKernel:
    beta = float(params.beta)

    def drift(x: np.ndarray) -> np.ndarray:
        u = x[:, 0]
        v = x[:, 1]
        uu = u * u
        out = np.empty_like(x)
        out[:, 0] = u - uu * u - beta * u * (v * v)
        out[:, 1] = -(1.0 + uu) * v
        return out

    return SdeKernel(drift=drift, noise_scale=float(np.sqrt(params.epsilon)), h=h, dim=2)


def _strong_components(P: np.ndarray):
    n, labels = connected_components(P > 0, directed=True, connection="strong")
    return n, labels


def _gth(P: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman state reduction (subtraction-free)."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise ReducibleChainError("GTH elimination hit a zero pivot")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def stationary_distribution(chain: DiscreteChain | np.ndarray, tol: float = 1e-12,
                            max_iters: int = 10_000) -> np.ndarray:
    """Invariant distribution of an irreducible chain.

    Solved by GTH reduction, then polished by power iteration on the lazy
    chain ``(P + I)/2`` until ``||pi P - pi||_1 < tol``. Reducible chains are
    rejected up front; failure to meet ``tol`` raises ``NonConvergenceError``.
    """
    P = chain.P if isinstance(chain, DiscreteChain) else np.asarray(chain, dtype=float)
    ncomp, labels = _strong_components(P)
    if ncomp > 1:
        blocks = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        raise ReducibleChainError(f"chain is reducible; communicating classes {blocks}")
    pi = _gth(P)
    lazy = 0.5 * (P + np.eye(P.shape[0]))
    for _ in range(max_iters):
        if np.abs(pi @ P - pi).sum() < tol:
            return pi
        pi = pi @ lazy
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    raise NonConvergenceError(f"stationary distribution did not reach tol={tol}")
