"""Counter-based random streams.

Every random number used by a trajectory is a pure function of
``(key, replica, lane, counter)``, where ``key`` is derived from the run seed
and the (run, iteration, stratum) path. Replicas can therefore be stepped in
any grouping, on any number of threads, and still see bitwise-identical draws.

The mixer is the SplitMix64 finalizer applied to a Weyl sequence, evaluated on
``uint64`` arrays.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# lane layout inside one counter slot
LANE_RESAMPLE = 0
LANE_KAPPA = 1
LANE_DESTINATION = 2
LANE_NOISE = 3
N_LANES = 16
_LANE_BITS = np.uint64(4)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def derive_key(seed: int, *path: int) -> int:
    """Fold a seed and an integer path into a 64-bit stream key."""
    z = np.array([seed & _MASK64], dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(z + _GAMMA)
        for i, p in enumerate(path):
            w = np.array([(int(p) + 1) & _MASK64], dtype=np.uint64)
            z = _mix(z ^ _mix(w * _GAMMA + np.uint64(i + 1)))
    return int(z[0])


class CounterRNG:
    """Stateless generator addressed by (replica, lane, counter).

    ``CounterRNG(seed, run, iteration, stratum)`` names the stream family for
    one batch; replica ids select a stream inside it.
    """

    def __init__(self, seed: int, *path: int):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.key = derive_key(self.seed, *self.path)

    def child(self, *path: int) -> "CounterRNG":
        return CounterRNG(self.seed, *self.path, *path)

    def streams(self, replicas) -> np.ndarray:
        """Per-replica stream states, usable with :func:`stream_uniform`."""
        r = np.asarray(replicas, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return _mix(np.uint64(self.key) ^ _mix((r + np.uint64(1)) * _GAMMA))

    def bits(self, replicas, lane: int, counters) -> np.ndarray:
        """Raw 64-bit words, shape ``(len(replicas), len(counters))``."""
        return stream_bits(self.streams(replicas), lane, counters)

    def uniform(self, replicas, lane: int, counters) -> np.ndarray:
        """Doubles in [0, 1) with 53 random bits."""
        return stream_uniform(self.streams(replicas), lane, counters)

    def normal(self, replicas, lane: int, counters, dim: int) -> np.ndarray:
        """Standard normals, shape ``(n, len(counters), dim)``."""
        return stream_normal(self.streams(replicas), lane, counters, dim)


def stream_bits(states: np.ndarray, lane: int, counters) -> np.ndarray:
    if not 0 <= lane < N_LANES:
        raise ValueError(f"lane {lane} out of range")
    c = np.asarray(counters, dtype=np.uint64)
    idx = (c << _LANE_BITS) | np.uint64(lane)
    with np.errstate(over="ignore"):
        return _mix(np.asarray(states, dtype=np.uint64)[:, None] + (idx[None, :] + np.uint64(1)) * _GAMMA)


def stream_uniform(states: np.ndarray, lane: int, counters) -> np.ndarray:
    b = stream_bits(states, lane, counters)
    return (b >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def stream_normal(states: np.ndarray, lane: int, counters, dim: int) -> np.ndarray:
    """Box-Muller on lane pairs starting at ``lane``; uses ``2*ceil(dim/2)`` lanes."""
    n_pairs = (dim + 1) // 2
    if lane + 2 * n_pairs > N_LANES:
        raise ValueError("not enough lanes for requested dimension")
    cols = []
    for p in range(n_pairs):
        u1 = 1.0 - stream_uniform(states, lane + 2 * p, counters)
        u2 = stream_uniform(states, lane + 2 * p + 1, counters)
        r = np.sqrt(-2.0 * np.log(u1))
        t = 2.0 * np.pi * u2
        cols.append(r * np.cos(t))
        cols.append(r * np.sin(t))
    return np.ascontiguousarray(np.stack(cols[:dim], axis=-1))
