"""Exact quantities for finite chains with disjoint strata and kappa = 1.

With disjoint strata the exit rule is "leave ``A_j``", so everything the
sampler estimates has a closed linear-algebra form:

* ``P_hat_j = P[A_j, A_j]`` (moves that stay), ``P_bar_j`` = moves from
  ``A_j`` to outside;
* exit kernel row ``Q(x, .) = e_x (I - P_hat_j)^{-1} P_bar_j``;
* occupation ``mu_j = nu_j (I - P_hat_j)^{-1}`` with mass ``E[tau]``;
* fixed point ``nu*_j`` proportional to the entry flux ``pi|_{A_j}(I - P_hat_j)``,
  ``a*_j`` proportional to the same flux.

Vectors over states are full length ``n`` unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .errors import (AssumptionViolation, NoExitStratumError, ReducibleChainError,
                     ReducibleMatrixError, StratMCError)
from .injection import lazy, principal_left_eigenvector
from .kernels import DiscreteChain, stationary_distribution
from .strata import IndexSet, StrataDef

SINGULAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteStratifiedChain:
    chain: DiscreteChain
    partition: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        parts = tuple(tuple(sorted(int(s) for s in p)) for p in self.partition)
        object.__setattr__(self, "partition", parts)
        n = self.chain.n_states
        seen = [s for p in parts for s in p]
        if any(len(p) == 0 for p in parts):
            raise ValueError("strata must be non-empty")
        if sorted(seen) != list(range(n)):
            raise ValueError("partition must cover every state exactly once")
        lab = np.empty(n, dtype=np.int64)
        for j, p in enumerate(parts):
            lab[list(p)] = j
        object.__setattr__(self, "_label", lab)

    @classmethod
    def from_matrix(cls, P, partition) -> "FiniteStratifiedChain":
        return cls(DiscreteChain(np.asarray(P, dtype=float)), tuple(tuple(p) for p in partition))

    @property
    def P(self) -> np.ndarray:
        return self.chain.P

    @property
    def n(self) -> int:
        return self.chain.n_states

    @property
    def J(self) -> int:
        return len(self.partition)

    @property
    def labels(self) -> np.ndarray:
        return self._label

    def stratum_of(self, x: int) -> int:
        return int(self._label[x])

    def indicator(self, j: int) -> np.ndarray:
        return self._label == j

    def strata_def(self) -> StrataDef:
        return StrataDef(tuple(IndexSet(p) for p in self.partition), "hard", "finite")

    def P_hat(self, j: int) -> np.ndarray:
        A = list(self.partition[j])
        return self.P[np.ix_(A, A)]

    def P_bar(self, j: int) -> np.ndarray:
        """Rows of ``A_j``; columns inside ``A_j`` zeroed."""
        A = list(self.partition[j])
        B = self.P[A].copy()
        B[:, A] = 0.0
        return B

    def strata_mass(self, v: np.ndarray) -> np.ndarray:
        return np.bincount(self._label, weights=np.asarray(v, dtype=float), minlength=self.J)

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "partition": [list(p) for p in self.partition]}


_LU_CACHE: dict = {}


def _lu(fsc: FiniteStratifiedChain, j: int):
    key = (id(fsc), j)
    hit = _LU_CACHE.get(key)
    if hit is not None and hit[0] is fsc:
        return hit[1]
    A = list(fsc.partition[j])
    M = np.eye(len(A)) - fsc.P_hat(j)
    # structural check: every state must reach an exit
    out = fsc.P[A].sum(axis=1) - fsc.P_hat(j).sum(axis=1) > 0
    reach = out.copy()
    adj = fsc.P_hat(j) > 0
    for _ in range(len(A)):
        nxt = reach | (adj.astype(float) @ reach.astype(float) > 0)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    if not reach.all():
        stuck = [A[i] for i in np.flatnonzero(~reach)]
        raise NoExitStratumError(f"stratum {j}: states {stuck} can never leave")
    lu, piv = scipy.linalg.lu_factor(M)
    if np.min(np.abs(np.diag(lu))) < SINGULAR_TOL * max(1.0, np.abs(M).max()):
        raise NoExitStratumError(f"stratum {j}: I - P_hat is numerically singular")
    if len(_LU_CACHE) > 256:
        _LU_CACHE.clear()
    _LU_CACHE[key] = (fsc, (lu, piv))
    return lu, piv


def _green_left(fsc, j: int, v: np.ndarray) -> np.ndarray:
    """Solve ``w (I - P_hat_j) = v`` for a row vector ``v`` on ``A_j``."""
    return scipy.linalg.lu_solve(_lu(fsc, j), v, trans=1)


def _green_right(fsc, j: int, v: np.ndarray) -> np.ndarray:
    return scipy.linalg.lu_solve(_lu(fsc, j), v)


def exact_Q(fsc: FiniteStratifiedChain, laziness: float = 1.0) -> np.ndarray:
    """Exit kernel on states; ``laziness`` p gives ``pQ + (1-p)I``."""
    Q = np.zeros((fsc.n, fsc.n))
    for j, A in enumerate(fsc.partition):
        A = list(A)
        Q[A] = _green_right(fsc, j, fsc.P_bar(j))
    Q = np.clip(Q, 0.0, None)
    Q /= Q.sum(axis=1, keepdims=True)
    return Q if laziness == 1.0 else lazy(Q, laziness)


def exit_times(fsc: FiniteStratifiedChain) -> np.ndarray:
    """``E_x[tau]`` for every state (row sums of the Green operator)."""
    t = np.zeros(fsc.n)
    for j, A in enumerate(fsc.partition):
        t[list(A)] = _green_right(fsc, j, np.ones(len(A)))
    return t


def _restrict(fsc, j: int, nu) -> tuple[np.ndarray, bool]:
    nu = np.asarray(nu, dtype=float)
    A = list(fsc.partition[j])
    if nu.shape[0] == fsc.n:
        if np.any(nu[~fsc.indicator(j)] != 0):
            raise ValueError(f"measure is not supported in stratum {j}")
        return nu[A], True
    if nu.shape[0] != len(A):
        raise ValueError("measure length must be n or |A_j|")
    return nu, False


def exact_occupation(fsc: FiniteStratifiedChain, j: int, nu_j) -> np.ndarray:
    """``mu_j = nu_j (I - P_hat_j)^{-1}``; same length convention as ``nu_j``."""
    v, full = _restrict(fsc, j, nu_j)
    mu = _green_left(fsc, j, v)
    if not full:
        return mu
    out = np.zeros(fsc.n)
    out[list(fsc.partition[j])] = mu
    return out


@dataclass
class FixedPoint:
    pi: np.ndarray
    nu_star: np.ndarray
    nu_strata: list[np.ndarray]
    a_star: np.ndarray
    mu_star: np.ndarray
    G_star: np.ndarray
    expected_tau: np.ndarray

    def __iter__(self):
        # allows ``nu, a, mu = exact_fixed_point(...)``
        return iter((self.nu_star, self.a_star, self.mu_star))


def exact_fixed_point(fsc: FiniteStratifiedChain) -> FixedPoint:
    pi = stationary_distribution(fsc.chain)
    P = fsc.P
    nu_strata, flux, etau, mus = [], np.zeros(fsc.J), np.zeros(fsc.J), []
    for j, A in enumerate(fsc.partition):
        A = list(A)
        ind = fsc.indicator(j)
        # pi|_{A_j}(I - P_hat_j) equals the flux entering A_j from outside
        f = np.zeros(fsc.n)
        f[A] = pi[~ind] @ P[np.ix_(np.flatnonzero(~ind), A)]
        flux[j] = f.sum()
        if not flux[j] > 0:
            raise AssumptionViolation(f"stratum {j} receives no flux; a*_{j} = 0")
        nj = f / flux[j]
        nu_strata.append(nj)
        mu_j = exact_occupation(fsc, j, nj)
        mus.append(mu_j)
        etau[j] = mu_j.sum()
    a = flux / flux.sum()
    nu = sum(a[j] * nu_strata[j] for j in range(fsc.J))
    mu = sum(a[j] * mus[j] for j in range(fsc.J))
    Q = exact_Q(fsc)
    G = np.stack([fsc.strata_mass(nu_strata[k] @ Q) for k in range(fsc.J)])
    G /= G.sum(axis=1, keepdims=True)
    return FixedPoint(pi, nu, nu_strata, a, mu, G, etau)


def exact_G(fsc: FiniteStratifiedChain, nus: Sequence[np.ndarray], laziness: float = 1.0) -> np.ndarray:
    """Strata transition matrix for given per-stratum injection measures."""
    Q = exact_Q(fsc, laziness)
    G = np.stack([fsc.strata_mass(np.asarray(nu, dtype=float) @ Q) for nu in nus])
    return G / G.sum(axis=1, keepdims=True)


def qsd(fsc: FiniteStratifiedChain, j: int) -> np.ndarray:
    """Invariant law of ``P(x, . & A_j)/P(x, A_j)`` on ``A_j`` (full length)."""
    A = list(fsc.partition[j])
    Ph = fsc.P_hat(j)
    rs = Ph.sum(axis=1)
    if np.any(rs <= 0):
        bad = [A[i] for i in np.flatnonzero(rs <= 0)]
        raise AssumptionViolation(f"stratum {j}: states {bad} have P(x, A_j) = 0")
    Pt = Ph / rs[:, None]
    if len(A) == 1:
        v = np.ones(1)
    else:
        v = stationary_distribution(Pt)
    out = np.zeros(fsc.n)
    out[A] = v
    return out


def _qsd_mixture(fsc: FiniteStratifiedChain, j: int) -> np.ndarray:
    """Equal mixture of the QSDs of the closed classes of ``P_tilde_j``.

    Used when the restricted kernel is reducible and the QSD is not unique.
    """
    A = np.array(fsc.partition[j])
    Ph = fsc.P_hat(j)
    Pt = Ph / Ph.sum(axis=1, keepdims=True)
    ncomp, lab = connected_components(Pt > 0, directed=True, connection="strong")
    out = np.zeros(fsc.n)
    closed = []
    for cc in range(ncomp):
        idx = np.flatnonzero(lab == cc)
        if np.all(Pt[np.ix_(idx, np.flatnonzero(lab != cc))] == 0):
            closed.append(idx)
    for idx in closed:
        v = np.ones(1) if idx.size == 1 else stationary_distribution(Pt[np.ix_(idx, idx)])
        out[A[idx]] += v / len(closed)
    return out


def _qsd_any(fsc: FiniteStratifiedChain, j: int) -> np.ndarray:
    try:
        return qsd(fsc, j)
    except ReducibleChainError:
        return _qsd_mixture(fsc, j)


def coupling_constant_c(fsc: FiniteStratifiedChain, laziness: float = 1.0) -> float:
    """Largest ``c`` with ``delta_x Q >= c * (qsd_j Q)`` for every ``x`` in every ``A_j``.

    A reducible restricted kernel has several QSDs; their mixture is used,
    which gives ``c = 0`` whenever the classes exit through disjoint doors.
    """
    Q = exact_Q(fsc, laziness)
    c = 1.0
    for j, A in enumerate(fsc.partition):
        xi = _qsd_any(fsc, j) @ Q
        supp = np.flatnonzero(xi > 0)
        if supp.size == 0:
            raise AssumptionViolation(f"stratum {j}: empty QSD exit measure")
        ratios = Q[np.ix_(list(A), supp)] / xi[supp]
        c = min(c, float(ratios.min()))
    return float(min(max(c, 0.0), 1.0))


@dataclass
class Minorization:
    ok: bool
    m: int | None
    u: float
    profile: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.m, self.u))


def minorization_u_m(fsc: FiniteStratifiedChain, m_max: int = 50, laziness: float = 1.0,
                     fp: FixedPoint | None = None) -> Minorization:
    """Smallest ``m`` with ``min_{n in [m, m_max]} min_{j,k} (qsd_j Q^n)(A_k) / a*_k > 0``."""
    fp = fp or exact_fixed_point(fsc)
    Q = exact_Q(fsc, laziness)
    V = np.stack([_qsd_any(fsc, j) for j in range(fsc.J)])
    r = np.zeros(m_max + 1)
    for n in range(1, m_max + 1):
        V = V @ Q
        mass = np.stack([fsc.strata_mass(v) for v in V])
        r[n] = (mass / fp.a_star).min()
    r[0] = np.nan
    # suffix minima over [m, m_max]
    suffix = np.minimum.accumulate(r[1:][::-1])[::-1]
    for m in range(1, m_max + 1):
        if suffix[m - 1] > 1e-14:
            return Minorization(True, m, float(suffix[m - 1]), r)
    return Minorization(False, None, 0.0, r)


@dataclass
class MixingRate:
    lam: float
    slem: float

    def __float__(self):
        return self.lam

    def __iter__(self):
        return iter((self.lam, self.slem))


def mixing_rate_lambda(G: np.ndarray, m: int = 1, m_max: int | None = None) -> MixingRate:
    """Worst one-step contraction of ``(e_i - e_k) G^n`` over ``n`` in ``[m, m_max]``."""
    G = np.asarray(G, dtype=float)
    J = G.shape[0]
    m_max = m + 50 if m_max is None else m_max
    D = []
    for i in range(J):
        for k in range(i + 1, J):
            d = np.zeros(J)
            d[i], d[k] = 1.0, -1.0
            D.append(d)
    D = np.array(D) if D else np.zeros((0, J))
    D = D @ np.linalg.matrix_power(G, m)
    lam = 0.0
    for _ in range(m, m_max + 1):
        num = D @ G
        den = np.abs(D).sum(axis=1)
        ok = den > 1e-12
        if ok.any():
            lam = max(lam, float((np.abs(num[ok]).sum(axis=1) / den[ok]).max()))
        D = num
    ev = np.sort(np.abs(np.linalg.eigvals(G)))[::-1]
    slem = float(ev[1]) if J > 1 else 0.0
    return MixingRate(min(lam, 1.0), slem)


def tv(p, q) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class Theorem2Report:
    ok: bool
    c: float
    u: float
    m: int | None
    rate: float
    observed: np.ndarray
    bound: np.ndarray
    violations: list

    def __bool__(self):
        return self.ok


def theorem2_check(fsc: FiniteStratifiedChain, horizon: int = 50, laziness: float = 1.0,
                   m_max: int = 50, starts: Sequence[np.ndarray] | None = None,
                   slack: float = 1e-12) -> Theorem2Report:
    """Iterate ``nu Q`` exactly from point masses and compare with ``(1 - c^2 u)^k``.

    ``observed[k]`` is the worst TV distance at step ``k(m+1)`` over the
    starting measures (every state's point mass by default).
    """
    fp = exact_fixed_point(fsc)
    c = coupling_constant_c(fsc, laziness)
    mn = minorization_u_m(fsc, m_max, laziness, fp)
    if not (mn.ok and c * mn.u > 0):
        raise AssumptionViolation(f"theorem 2 constants unavailable: c={c}, minorization={mn}")
    rate = 1.0 - c * c * mn.u
    Q = exact_Q(fsc, laziness)
    # exact invariant law of the (possibly lazy) exit kernel equals nu*
    V = np.eye(fsc.n) if starts is None else np.atleast_2d(np.asarray(starts, dtype=float))
    Qm = np.linalg.matrix_power(Q, mn.m + 1)
    obs = np.zeros(horizon + 1)
    bound = rate ** np.arange(horizon + 1)
    obs[0] = max(tv(v, fp.nu_star) for v in V)
    viol = []
    for k in range(1, horizon + 1):
        V = V @ Qm
        obs[k] = max(tv(v, fp.nu_star) for v in V)
        if obs[k] > bound[k] + slack:
            viol.append(k)
    return Theorem2Report(not viol, c, mn.u, mn.m, rate, obs, bound, viol)


@dataclass
class Theorem3Result:
    q: float
    beta: float
    alpha: float
    degenerate: bool = False

    def __float__(self):
        return self.q


def _eq1_inner(beta: np.ndarray, c: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Inner infimum over ``alpha`` at fixed ``beta``.

    The first term increases and the second decreases in ``alpha``, so the
    infimum of the max sits at their crossing, a root of
    ``s t a^2 + ((1 - beta c) t + s - t lam) a - beta c = 0``.
    """
    S = 1.0 / (1.0 - lam)
    s = S * (1.0 - c)
    t = 1.0 - beta
    if s == 0.0:
        # c = 1: the first term is constant 1 - beta; the second tends to lam
        lin = t * (t - lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(lin > 0, beta / lin, np.inf)
        val = np.where(lin > 0, 1.0 - beta, np.maximum(1.0 - beta, lam))
        return val, alpha
    A2 = s * t
    A1 = (1.0 - beta * c) * t + s - t * lam
    A0 = -beta * c
    disc = np.sqrt(A1 * A1 - 4.0 * A2 * A0)
    # numerically stable positive root
    alpha = np.where(A1 >= 0, -2.0 * A0 / (A1 + disc), (-A1 + disc) / (2.0 * A2))
    alpha = np.minimum(alpha, beta * c / s)
    f1 = 1.0 - beta * c + alpha * s
    f2 = (1.0 + t * alpha * lam) / (1.0 + t * alpha)
    return np.maximum(f1, f2), alpha


def theorem3_limit_rate(c: float, lam: float, grid_resolution: int = 2000,
                        refinements: int = 6) -> Theorem3Result:
    """Numeric value of the limiting contraction rate of the basic version.

    ``beta`` is searched on a uniform grid, then on nested finer grids around
    the best point; the returned value never increases under refinement.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda must lie in [0, 1)")
    if c == 0.0:
        return Theorem3Result(1.0, float("nan"), float("nan"), True)
    lo, hi = 0.0, 1.0
    best = (np.inf, np.nan, np.nan)
    for _ in range(refinements + 1):
        beta = np.linspace(lo, hi, grid_resolution + 2)[1:-1]
        beta = beta[(beta > 0) & (beta < 1)]
        val, alpha = _eq1_inner(beta, c, lam)
        i = int(np.argmin(val))
        if val[i] < best[0]:
            best = (float(val[i]), float(beta[i]), float(alpha[i]))
        step = (hi - lo) / (grid_resolution + 1)
        lo, hi = max(0.0, best[1] - 2 * step), min(1.0, best[1] + 2 * step)
    return Theorem3Result(*best)


@dataclass
class Theorem4Result:
    r_infinity: float
    E: float
    rate: float
    radius: float
    infinite_radius: bool = False

    def __iter__(self):
        return iter((self.r_infinity, self.E, self.rate, self.radius))


def theorem4_rate(c: float, a_star, theta) -> Theorem4Result:
    """Closed-form constants of the eigenvector-version local rate."""
    a = np.asarray(a_star, dtype=float)
    th = np.asarray(theta, dtype=float)
    J = a.shape[0]
    if np.any(a <= 0):
        raise ValueError("a* must be strictly positive")
    if th.shape != (J, J):
        raise ValueError("theta must be J x J")
    off = ~np.eye(J, dtype=bool)
    if np.any(th[off] <= 0):
        raise ValueError("theta must be positive off the diagonal")
    one_c = 1.0 - c
    r_inf = 2.0 * one_c * a.max() * float(((np.exp(th) - 1.0) / a[:, None])[off].max())
    E = float(np.exp(2.0 * one_c * np.where(off, th, -np.inf).max(axis=1).sum()))
    rate = 1.0 - c / (r_inf + 1.0)
    if one_c == 0.0:
        return Theorem4Result(r_inf, E, rate, float("inf"), True)
    q = 1.0 - c / (r_inf * E + 1.0)
    denom = 2.0 * one_c * float((th / a[:, None])[off].max())
    radius = (1.0 + r_inf * E) / denom * (1.0 / q - 1.0)
    return Theorem4Result(r_inf, E, rate, radius)


def _perturb(G: np.ndarray, i: int, k: int, delta: float) -> np.ndarray:
    H = G.copy()
    H[i, k] += delta
    H[i] /= H[i].sum()
    return H


def estimate_theta(fsc_or_G, perturbation_size: float = 1e-5) -> np.ndarray:
    """Finite-difference sensitivity of ``log z`` to single entries of ``G*``.

    ``theta[i, k] = max_j |log z_j(G') - log z*_j| / delta`` where ``G'`` adds
    ``delta`` to entry ``(i, k)`` and renormalizes row ``i``.
    """
    G = exact_fixed_point(fsc_or_G).G_star if isinstance(fsc_or_G, FiniteStratifiedChain) \
        else np.asarray(fsc_or_G, dtype=float)
    J = G.shape[0]
    z0 = principal_left_eigenvector(G, 1e-15)
    th = np.zeros((J, J))
    for i in range(J):
        for k in range(J):
            if i == k:
                continue
            H = _perturb(G, i, k, perturbation_size)
            z = _left_eig_dense(H)
            th[i, k] = np.abs(np.log(z) - np.log(z0)).max() / perturbation_size
    return th


def _left_eig_dense(G: np.ndarray) -> np.ndarray:
    n, _ = connected_components(G > 0, directed=True, connection="strong")
    if n > 1:
        raise ReducibleMatrixError("perturbed matrix is reducible")
    J = G.shape[0]
    # solve z (G - I) = 0 with sum(z) = 1 by least squares on the stacked system
    A = np.vstack([(G - np.eye(J)).T, np.ones((1, J))])
    b = np.zeros(J + 1)
    b[-1] = 1.0
    z, *_ = np.linalg.lstsq(A, b, rcond=None)
    return z


def b3_audit(G_star: np.ndarray, theta: np.ndarray, radius: float, trials: int = 200,
             margin: float = 0.1, seed: int = 0) -> float:
    """Largest observed ratio of the sensitivity inequality's two sides.

    Random irreducible ``G`` within ``radius`` of ``G_star`` (same support) are
    drawn; a value ``<= 1 + margin`` means the inequality held with the
    inflated constants.
    """
    rng = np.random.default_rng(seed)
    J = G_star.shape[0]
    z0 = principal_left_eigenvector(G_star, 1e-15)
    off = ~np.eye(J, dtype=bool)
    worst = 0.0
    for _ in range(trials):
        E = rng.uniform(-radius, radius, size=(J, J)) * (G_star > 0)
        H = np.clip(G_star + E, 0.0, None)
        H /= H.sum(axis=1, keepdims=True)
        z = _left_eig_dense(H)
        lhs = float((np.log(z) - np.log(z0)).max())
        rhs = float((theta * np.abs(H - G_star))[off].sum())
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return worst


# ---------------------------------------------------------------------------
# instances

def two_state(laziness_free: bool = True) -> FiniteStratifiedChain:
    return FiniteStratifiedChain.from_matrix([[0.9, 0.1], [0.1, 0.9]], [(0,), (1,)])


def nine_state(p_lazy: float = 0.5) -> FiniteStratifiedChain:
    """Three strata of three states on a ring with drift toward states 3-5.

    Strata weights are far from uniform (about 0.47, 0.47, 0.07) and the
    strata-level mixing is slow. The underlying chain is made lazy so the
    exit kernel is aperiodic and the coupling constants come out positive.
    """
    n = 9
    P = np.zeros((n, n))
    right = [0.7, 0.7, 0.7, 0.3, 0.3, 0.3, 0.5, 0.5, 0.5]
    for i in range(n):
        P[i, (i + 1) % n] += right[i]
        P[i, (i - 1) % n] += 1.0 - right[i]
    P = p_lazy * P + (1.0 - p_lazy) * np.eye(n)
    return FiniteStratifiedChain.from_matrix(P, [(0, 1, 2), (3, 4, 5), (6, 7, 8)])


def random_instance(seed: int, n_states: int | None = None, n_strata: int | None = None,
                    lazy_p: float | None = None, density: float = 1.0) -> FiniteStratifiedChain:
    """Random irreducible chain with a random partition into contiguous strata.

    ``density < 1`` zeroes a random share of off-ring entries; a ring is kept
    so the chain stays irreducible.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13)) if n_states is None else n_states
    J = int(rng.integers(2, min(4, n // 2) + 1)) if n_strata is None else n_strata
    if not 2 <= J <= n:
        raise ValueError("need 2 <= J <= n")
    W = rng.exponential(size=(n, n))
    if density < 1.0:
        W *= rng.random((n, n)) < density
    perm = rng.permutation(n)
    for i in range(n):
        W[perm[i], perm[(i + 1) % n]] += rng.exponential() + 0.1
    P = W / W.sum(axis=1, keepdims=True)
    if lazy_p is not None:
        P = lazy_p * P + (1.0 - lazy_p) * np.eye(n)
        P /= P.sum(axis=1, keepdims=True)
    cuts = np.sort(rng.choice(np.arange(1, n), J - 1, replace=False))
    order = rng.permutation(n)
    parts = [tuple(int(s) for s in blk) for blk in np.split(order, cuts)]
    return FiniteStratifiedChain.from_matrix(P, parts)


def report(fsc: FiniteStratifiedChain, laziness: float = 1.0, m_max: int = 50,
           horizon: int = 50) -> dict:
    """Every oracle quantity as plain data (lists and floats)."""
    fp = exact_fixed_point(fsc)
    try:
        c = coupling_constant_c(fsc, laziness)
    except StratMCError as e:
        c, c_err = 0.0, str(e)
    else:
        c_err = None
    mn = minorization_u_m(fsc, m_max, laziness, fp)
    G_l = fp.G_star if laziness == 1.0 else lazy(fp.G_star, laziness)
    out = {
        "n_states": fsc.n, "J": fsc.J, "laziness": laziness,
        "pi": fp.pi.tolist(), "nu_star": fp.nu_star.tolist(), "a_star": fp.a_star.tolist(),
        "G_star": fp.G_star.tolist(), "expected_tau": fp.expected_tau.tolist(),
        "c": c, "a2_ok": c > 0, "minorization_ok": mn.ok, "m": mn.m, "u": mn.u,
    }
    if c_err:
        out["c_error"] = c_err
    try:
        mr = mixing_rate_lambda(G_l, mn.m or 1)
        out["lambda"], out["slem"] = mr.lam, mr.slem
    except StratMCError as e:  # pragma: no cover - defensive
        out["lambda"], out["slem"] = float("nan"), float("nan")
        out["lambda_error"] = str(e)
    if mn.ok and c * mn.u > 0:
        t2 = theorem2_check(fsc, horizon, laziness, m_max)
        out["theorem2_ok"] = t2.ok
        out["theorem2_rate"] = t2.rate
        out["theorem2_max_ratio"] = float(np.max(t2.observed[1:] / t2.bound[1:])) \
            if t2.rate > 0 else float(np.max(t2.observed[1:]))
    else:
        out["theorem2_ok"] = None
    lam = out["lambda"]
    if 0 <= lam < 1 and c > 0:
        r3 = theorem3_limit_rate(c, lam)
        out["theorem3_q"], out["theorem3_degenerate"] = r3.q, r3.degenerate
    try:
        th = estimate_theta(fp.G_star)
        th_pos = np.where(np.eye(fsc.J, dtype=bool), 0.0, np.maximum(th, 1e-300))
        r4 = theorem4_rate(c, fp.a_star, th_pos + np.eye(fsc.J))
        out["theta"] = th.tolist()
        out["theorem4"] = {"r_infinity": r4.r_infinity, "E": r4.E, "rate": r4.rate,
                           "radius": r4.radius, "infinite_radius": r4.infinite_radius}
    except (StratMCError, ValueError) as e:
        out["theorem4_error"] = str(e)
    return out
