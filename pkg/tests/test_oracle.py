import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratmc.errors import AssumptionViolation, NoExitStratumError
from stratmc.injection import EmpiricalMeasure, principal_left_eigenvector
from stratmc.kernels import stationary_distribution
from stratmc.oracle import (FiniteStratifiedChain, b3_audit, coupling_constant_c, estimate_theta, exact_G,
                            exact_Q, exact_fixed_point, exact_occupation, exit_times, minorization_u_m,
                            mixing_rate_lambda, nine_state, qsd, random_instance, report,
                            theorem2_check, theorem3_limit_rate, theorem4_rate, tv, two_state)
from stratmc.rng import CounterRNG
from stratmc.strata import KappaDistribution
from stratmc.trajectory import sample_exit_batches

# --- independent reference computations (dense inverses and eigensolves) ---


def ref_Q(fsc):
    Q = np.zeros((fsc.n, fsc.n))
    for A in fsc.partition:
        A = list(A)
        N = np.linalg.inv(np.eye(len(A)) - fsc.P[np.ix_(A, A)])
        Pb = fsc.P[A].copy()
        Pb[:, A] = 0
        Q[A] = N @ Pb
    return Q


def ref_left_eig(P):
    w, V = np.linalg.eig(P.T)
    v = np.real(V[:, np.argmin(np.abs(w - 1))])
    return v / v.sum()


def ref_c(fsc):
    Q = ref_Q(fsc)
    best = np.inf
    for A in fsc.partition:
        A = list(A)
        Ph = fsc.P[np.ix_(A, A)]
        Pt = Ph / Ph.sum(axis=1, keepdims=True)
        q = np.zeros(fsc.n)
        q[A] = ref_left_eig(Pt) if len(A) > 1 else 1.0
        xi = q @ Q
        for x in A:
            for y in range(fsc.n):
                if xi[y] > 1e-15:
                    best = min(best, Q[x, y] / xi[y])
    return best


def eq1_bruteforce(c, lam, nb=600, na=600):
    S = 1 / (1 - lam)
    best = np.inf
    for beta in np.linspace(0, 1, nb + 2)[1:-1]:
        amax = beta * c / (S * (1 - c))
        alpha = amax * np.geomspace(1e-9, 1, na, endpoint=False)
        f1 = 1 - beta * c + alpha * S * (1 - c)
        f2 = (1 + (1 - beta) * alpha * lam) / (1 + (1 - beta) * alpha)
        best = min(best, np.maximum(f1, f2).min())
    return best


# --- exact_Q ---

def test_two_state_Q():
    np.testing.assert_allclose(exact_Q(two_state()), [[0, 1], [1, 0]], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_Q_rows_and_reference(seed):
    fsc = random_instance(seed)
    Q = exact_Q(fsc)
    np.testing.assert_allclose(Q.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(Q, ref_Q(fsc), atol=1e-10)
    # exits always leave the stratum
    for j, A in enumerate(fsc.partition):
        assert np.all(Q[np.ix_(list(A), list(A))] == 0)


def test_Q_matches_simulation():
    P = np.array([[0.5, 0.3, 0.2, 0.0], [0.2, 0.4, 0.1, 0.3], [0.1, 0.2, 0.3, 0.4], [0.3, 0.1, 0.2, 0.4]])
    fsc = FiniteStratifiedChain.from_matrix(P, [(0, 1), (2, 3)])
    Q = exact_Q(fsc)
    nus = [EmpiricalMeasure.point_mass([s]) for s in range(4)]
    M = 1_000_000
    b = sample_exit_batches(fsc.chain, fsc.strata_def(), nus, M, KappaDistribution.one(), None,
                            [CounterRNG(1, s) for s in range(4)], [0, 0, 1, 1], None, "none")
    for s in range(4):
        emp = np.bincount(b[s].exit_points[:, 0].astype(int), minlength=4) / M
        assert tv(emp, Q[s]) < 0.005


def test_no_exit_stratum():
    fsc = FiniteStratifiedChain.from_matrix([[1.0, 0.0], [0.5, 0.5]], [(0,), (1,)])
    with pytest.raises(NoExitStratumError):
        exact_Q(fsc)


# --- occupation ---

def test_occupation_two_state():
    fsc = two_state()
    np.testing.assert_allclose(exact_occupation(fsc, 0, [1.0]), [10.0])
    np.testing.assert_allclose(exit_times(fsc), [10.0, 10.0])


def test_occupation_single_state_no_self_loop():
    fsc = FiniteStratifiedChain.from_matrix([[0, 1], [0.5, 0.5]], [(0,), (1,)])
    np.testing.assert_allclose(exact_occupation(fsc, 0, [1.0]), [1.0])
    assert exit_times(fsc)[0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_occupation_defining_identity(seed):
    fsc = random_instance(seed)
    rng = np.random.default_rng(seed)
    for j, A in enumerate(fsc.partition):
        nu = rng.random(len(A))
        nu /= nu.sum()
        mu = exact_occupation(fsc, j, nu)
        np.testing.assert_allclose(mu @ (np.eye(len(A)) - fsc.P_hat(j)) - nu, 0, atol=1e-12)


# --- fixed point ---

def test_fixed_point_two_state():
    fp = exact_fixed_point(two_state())
    np.testing.assert_allclose(fp.a_star, [0.5, 0.5])
    np.testing.assert_allclose(fp.nu_strata[0], [1, 0])
    np.testing.assert_allclose(fp.nu_strata[1], [0, 1])


@pytest.mark.parametrize("seed", range(10))
def test_fixed_point_random(seed):
    fsc = random_instance(seed, n_states=10, n_strata=3)
    nu, a, mu = exact_fixed_point(fsc)
    assert np.abs(nu @ exact_Q(fsc) - nu).sum() < 1e-12
    pi = ref_left_eig(fsc.P)
    assert np.abs(mu / mu.sum() - pi).sum() < 1e-10
    fp = exact_fixed_point(fsc)
    np.testing.assert_allclose(ref_left_eig(fp.G_star), fp.a_star, atol=1e-10)
    np.testing.assert_allclose(exact_G(fsc, fp.nu_strata), fp.G_star, atol=1e-14)


def test_fixed_point_weights_formula():
    # a*_j proportional to pi(A_j) / E[tau_j]
    fsc = nine_state()
    fp = exact_fixed_point(fsc)
    w = fsc.strata_mass(fp.pi) / fp.expected_tau
    np.testing.assert_allclose(fp.a_star, w / w.sum(), atol=1e-12)


# --- qsd and c ---

def test_qsd_cases():
    np.testing.assert_allclose(qsd(two_state(), 0), [1, 0])
    P = np.array([[0.4, 0.4, 0.2, 0], [0.4, 0.4, 0, 0.2], [0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5]])
    fsc = FiniteStratifiedChain.from_matrix(P, [(0, 1), (2,), (3,)])
    np.testing.assert_allclose(qsd(fsc, 0)[:2], [0.5, 0.5])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_qsd_invariance(seed):
    fsc = random_instance(seed)
    for j, A in enumerate(fsc.partition):
        Ph = fsc.P_hat(j)
        Pt = Ph / Ph.sum(axis=1, keepdims=True)
        v = qsd(fsc, j)[list(A)]
        np.testing.assert_allclose(v @ Pt, v, atol=1e-12)


def test_c_two_state():
    assert coupling_constant_c(two_state()) == 1.0


def test_c_disjoint_doors_is_zero():
    P = np.array([[0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5], [0.25, 0.25, 0.5, 0], [0.25, 0.25, 0, 0.5]])
    fsc = FiniteStratifiedChain.from_matrix(P, [(0, 1), (2,), (3,)])
    assert coupling_constant_c(fsc) == 0.0
    assert report(fsc)["a2_ok"] is False


@pytest.mark.parametrize("seed", range(8))
def test_c_bruteforce(seed):
    fsc = random_instance(seed)
    assert coupling_constant_c(fsc) == pytest.approx(ref_c(fsc), abs=1e-10)


# --- minorization and lambda ---

def test_minorization_periodic_fails_and_lazy_works():
    fsc = two_state()
    assert not minorization_u_m(fsc).ok
    mn = minorization_u_m(fsc, laziness=0.5)
    assert mn.ok and mn.m == 1 and mn.u > 0


@pytest.mark.parametrize("seed", range(6))
def test_minorization_inequality(seed):
    fsc = random_instance(seed, lazy_p=0.5)
    fp = exact_fixed_point(fsc)
    # two strata always alternate, so the exit kernel is made lazy
    mn = minorization_u_m(fsc, 30, laziness=0.5)
    assert mn.ok
    Q = exact_Q(fsc, 0.5)
    for j in range(fsc.J):
        v = qsd(fsc, j)
        for n in range(1, 31):
            v = v @ Q
            if n >= mn.m:
                assert np.all(mn.u * fp.a_star <= fsc.strata_mass(v) + 1e-12)


def test_lambda_examples():
    assert mixing_rate_lambda(np.full((2, 2), 0.5)).lam == pytest.approx(0.0, abs=1e-15)
    p = 0.5
    Gl = p * np.array([[0, 1.0], [1, 0]]) + (1 - p) * np.eye(2)
    assert mixing_rate_lambda(Gl).lam == pytest.approx(abs(1 - 2 * p), abs=1e-15)
    p = 0.8
    Gl = p * np.array([[0, 1.0], [1, 0]]) + (1 - p) * np.eye(2)
    lam, slem = mixing_rate_lambda(Gl)
    assert lam == pytest.approx(0.6) and slem == pytest.approx(0.6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_lambda_below_one(seed):
    G = np.random.default_rng(seed).random((4, 4)) + 0.01
    G /= G.sum(axis=1, keepdims=True)
    assert mixing_rate_lambda(G).lam < 1


# --- theorem 2 ---

def test_theorem2_two_state_lazy():
    r = theorem2_check(two_state(), laziness=0.5)
    assert r.ok and not r.violations


def test_theorem2_from_fixed_point():
    fsc = nine_state()
    fp = exact_fixed_point(fsc)
    r = theorem2_check(fsc, starts=[fp.nu_star])
    assert r.ok and np.all(r.observed < 1e-12)


def test_theorem2_nine_state():
    r = theorem2_check(nine_state())
    assert r.ok
    assert 0 < r.rate < 1


def test_theorem2_unavailable():
    with pytest.raises(AssumptionViolation):
        theorem2_check(two_state())


# --- theorem 3 ---

@pytest.mark.parametrize("lam", [0.0, 0.2, 0.5, 0.9])
def test_theorem3_c_one(lam):
    assert theorem3_limit_rate(1.0, lam).q == pytest.approx(lam, abs=1e-3)


def test_theorem3_c_zero_degenerate():
    r = theorem3_limit_rate(0.0, 0.3)
    assert r.q == 1.0 and r.degenerate


@pytest.mark.parametrize("c,lam", [(0.5, 0.0), (0.9, 0.3), (0.99, 0.0), (0.7, 0.8), (0.3, 0.5)])
def test_theorem3_matches_bruteforce(c, lam):
    q = theorem3_limit_rate(c, lam).q
    qb = eq1_bruteforce(c, lam)
    # analytic crossing is at least as good as any grid point, and close to it
    assert q <= qb + 1e-9
    assert qb - q < 2e-3


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.999), st.floats(0.0, 0.99))
def test_theorem3_bracket(c, lam):
    q = theorem3_limit_rate(c, lam, grid_resolution=400, refinements=3).q
    assert max(lam, 1 - c) - 1e-9 <= q < 1


# --- theorem 4 ---

def test_theorem4_example():
    th = np.log(2) * (1 - np.eye(2))
    r = theorem4_rate(0.5, [0.5, 0.5], th + np.eye(2))
    assert r.r_infinity == pytest.approx(1.0)
    assert r.E == pytest.approx(4.0)
    assert r.rate == pytest.approx(0.75)
    q = 1 - 0.5 / 5
    assert r.radius == pytest.approx(5 / (2 * 0.5 * 2 * np.log(2)) * (1 / q - 1))


def test_theorem4_c_one():
    r = theorem4_rate(1.0, [0.3, 0.7], np.ones((2, 2)))
    assert r.r_infinity == 0 and r.E == 1 and r.rate == 0 and r.infinite_radius


def test_theorem4_monotone_in_r():
    rates = [theorem4_rate(0.4, [0.5, 0.5], s * (1 - np.eye(2)) + np.eye(2)).rate for s in (0.1, 0.5, 1, 3)]
    assert np.all(np.diff(rates) > 0)


def test_theorem4_rejects_bad_weights():
    with pytest.raises(ValueError):
        theorem4_rate(0.5, [0.0, 1.0], np.ones((2, 2)))


# --- theta ---

def test_theta_symmetric():
    G = np.array([[0.3, 0.7], [0.7, 0.3]])
    th = estimate_theta(G)
    assert th[0, 1] == pytest.approx(th[1, 0], rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_theta_stable_and_b3(seed):
    fsc = random_instance(seed, lazy_p=0.5)
    t4 = estimate_theta(fsc, 1e-4)
    t5 = estimate_theta(fsc, 1e-5)
    off = ~np.eye(fsc.J, dtype=bool)
    assert np.all(np.abs(t4[off] - t5[off]) <= 0.1 * np.abs(t5[off]) + 1e-8)
    G = exact_fixed_point(fsc).G_star
    assert b3_audit(G, t5 * 1.1, 1e-3, trials=100, seed=seed) <= 1.0 + 0.1


def test_report_deterministic_and_complete():
    r1 = report(random_instance(7, lazy_p=0.5))
    r2 = report(random_instance(7, lazy_p=0.5))
    assert r1 == r2
    for k in ("pi", "a_star", "c", "m", "u", "lambda", "theorem2_ok", "theorem3_q", "theorem4"):
        assert k in r1
