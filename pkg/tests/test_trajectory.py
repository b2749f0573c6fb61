import numpy as np
import pytest

from stratmc import trajectory
from stratmc.errors import TrajectoryCapError
from stratmc.estimator import Grid
from stratmc.injection import EmpiricalMeasure
from stratmc.kernels import DiscreteChain, MaierSteinParams, maier_stein_kernel
from stratmc.oracle import FiniteStratifiedChain, random_instance, two_state
from stratmc.rng import CounterRNG
from stratmc.strata import AugmentedState, IndexSet, KappaDistribution, StrataDef, build_fig2_setup
from stratmc.trajectory import (ExitRecord, free_run_histogram, run_to_exit, sample_exit_batch,
                                sample_exit_batches)

ONE = KappaDistribution.one()


def test_two_state_geometric_exit_time():
    fsc = two_state()
    b = sample_exit_batch(fsc.chain, fsc.strata_def(), EmpiricalMeasure.point_mass([0]), 100_000,
                          ONE, None, CounterRNG(5), 0, Grid.for_states(2))
    assert np.all(b.exit_points[:, 0] == 1)
    assert np.all(b.exit_index == 1)
    assert abs(b.tau.mean() - 10.0) < 0.1
    # every step before exit is spent in state 0
    assert b.occupation[0] == b.steps and b.occupation[1] == 0


def test_deterministic_chain_single_step():
    fsc = FiniteStratifiedChain.from_matrix([[0, 1], [1, 0]], [(0,), (1,)])
    for r in range(5):
        rec = run_to_exit(fsc.chain, fsc.strata_def(), AugmentedState(np.array([0.0]), 0), ONE,
                          rng=CounterRNG(r))
        assert rec.tau == 1 and rec.exit_index == 1
        np.testing.assert_array_equal(rec.occupation, [[0.0]])


def test_single_stratum_errors_immediately():
    chain = DiscreteChain([[0.5, 0.5], [0.5, 0.5]])
    strata = StrataDef((IndexSet((0, 1)),))
    with pytest.raises(TrajectoryCapError):
        run_to_exit(chain, strata, AugmentedState(np.array([0.0]), 0), ONE, max_steps=10**9)


def test_cap_error_carries_replica():
    chain = DiscreteChain([[0.999, 0.001], [0.5, 0.5]])
    strata = StrataDef((IndexSet((0,)), IndexSet((1,))))
    with pytest.raises(TrajectoryCapError) as ei:
        sample_exit_batch(chain, strata, EmpiricalMeasure.point_mass([0]), 50, ONE, 5,
                          CounterRNG(0), 0, Grid.for_states(2))
    assert ei.value.replica is not None
    assert ei.value.partial["steps"] == 5


def test_occupation_record_excludes_exit_point():
    fsc = random_instance(3)
    rec = run_to_exit(fsc.chain, fsc.strata_def(), AugmentedState(np.array([float(fsc.partition[0][0])]), 0),
                      ONE, rng=CounterRNG(9))
    assert rec.occupation.shape[0] == rec.tau
    assert all(fsc.stratum_of(int(s)) == 0 for s in rec.occupation[:, 0])
    assert fsc.stratum_of(int(rec.exit_point[0])) == rec.exit_index


def test_exit_record_validation():
    with pytest.raises(ValueError):
        ExitRecord(0, np.zeros(1), np.zeros(1), 1, 0)
    with pytest.raises(ValueError):
        ExitRecord(0, np.zeros(1), np.zeros(1), 0, 3)


def test_point_mass_batch_starts_and_M1():
    fsc = random_instance(4)
    s0 = fsc.partition[1][0]
    b = sample_exit_batch(fsc.chain, fsc.strata_def(), EmpiricalMeasure.point_mass([s0]), 20, ONE,
                          None, CounterRNG(1), 1, Grid.for_states(fsc.n))
    assert np.all(b.start_points == s0)
    b1 = sample_exit_batch(fsc.chain, fsc.strata_def(), EmpiricalMeasure.point_mass([s0]), 1, ONE,
                           None, CounterRNG(1), 1, Grid.for_states(fsc.n))
    assert len(b1) == 1
    # replica 0 of the big batch is the same trajectory
    assert b1.tau[0] == b.tau[0] and b1.exit_index[0] == b.exit_index[0]


def _batches(threads):
    fsc = random_instance(12)
    strata = fsc.strata_def()
    nus = [EmpiricalMeasure(np.array(p, dtype=float)[:, None], np.ones(len(p))) for p in fsc.partition]
    rngs = [CounterRNG(3, 0, 0, j) for j in range(fsc.J)]
    return sample_exit_batches(fsc.chain, strata, nus, 300, KappaDistribution.uniform(), None, rngs,
                               range(fsc.J), Grid.for_states(fsc.n), "histogram", threads)


def test_thread_and_chunk_invariance(monkeypatch):
    ref = _batches(1)
    monkeypatch.setattr(trajectory, "CHUNK_SIZE", 64)
    for threads in (1, 2, 8):
        out = _batches(threads)
        for a, b in zip(ref, out):
            np.testing.assert_array_equal(a.tau, b.tau)
            np.testing.assert_array_equal(a.exit_index, b.exit_index)
            np.testing.assert_array_equal(a.exit_points, b.exit_points)
            np.testing.assert_array_equal(a.occupation, b.occupation)


def test_joint_batches_match_separate():
    fsc = random_instance(12)
    strata = fsc.strata_def()
    nus = [EmpiricalMeasure(np.array(p, dtype=float)[:, None], np.ones(len(p))) for p in fsc.partition]
    joint = sample_exit_batches(fsc.chain, strata, nus, 100, ONE, None,
                                [CounterRNG(3, 0, 0, j) for j in range(fsc.J)], range(fsc.J),
                                Grid.for_states(fsc.n))
    for j in range(fsc.J):
        solo = sample_exit_batch(fsc.chain, strata, nus[j], 100, ONE, None, CounterRNG(3, 0, 0, j), j,
                                 Grid.for_states(fsc.n))
        np.testing.assert_array_equal(joint[j].tau, solo.tau)
        np.testing.assert_array_equal(joint[j].occupation, solo.occupation)


def test_sde_exits_change_stratum():
    k = maier_stein_kernel(MaierSteinParams(), 1e-3)
    strata = build_fig2_setup("vertical5")
    b = sample_exit_batch(k, strata, EmpiricalMeasure.point_mass([1.0, 0.0]), 50, KappaDistribution.point(0.05),
                          None, CounterRNG(2), 3, Grid.maier_stein())
    assert np.all(b.exit_index != 3)
    assert b.occupation.sum() == b.steps


def test_free_run_counts():
    fsc = two_state()
    c = free_run_histogram(fsc.chain, np.zeros((3, 1)), 1000, CounterRNG(0), Grid.for_states(2))
    assert c.shape == (3, 2) and np.all(c.sum(axis=1) == 1000)
