import math

import numpy as np
import pytest

from convreveal.convention import (Boltzmann, Cosine, MagnitudeCoded, build_convention,
                                   likelihood, likelihood_vector, top_action_index)
from convreveal.value import q_all, value_iteration
from convreveal.world import State, Task
from conftest import lattice_scenario


@pytest.fixture(scope="module")
def corridor():
    sc = lattice_scenario(gamma=0.9)
    qts = [value_iteration(sc, t, tol=1e-9) for t in sc.tasks]
    return sc, qts


def softmax_oracle(values, lam):
    # hand-rolled softmax, no shared code with the implementation
    exps = [math.exp(lam * v) for v in values]
    z = sum(exps)
    return [e / z for e in exps]


def test_boltzmann_lambda_zero_limit_is_uniform(corridor):
    sc, qts = corridor
    c = Boltzmann(lam=1e-12, floor=1e-3)
    dist = c.action_distribution(State(np.array([4.0, 6.0])), sc.tasks[0], sc, qts)
    assert np.allclose(dist, 1.0 / len(sc.action_set), atol=1e-9)


def test_boltzmann_matches_softmax_oracle(corridor):
    sc, qts = corridor
    lam = 5.0
    c = Boltzmann(lam=lam, floor=1e-3)
    s = State(np.array([4.0, 6.0]))
    qs = q_all(qts[0], s)
    expected = softmax_oracle(list(qs), lam)
    expected = [(1 - 1e-3) * p + 1e-3 / len(qs) for p in expected]
    dist = c.action_distribution(s, sc.tasks[0], sc, qts)
    assert np.allclose(dist, expected, atol=1e-9)


def test_boltzmann_monotone_in_q(corridor):
    sc, qts = corridor
    c = Boltzmann(lam=5.0, floor=1e-3)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = State(rng.uniform(0, 11, 2))
        qs = q_all(qts[0], s)
        dist = c.action_distribution(s, sc.tasks[0], sc, qts)
        for i in range(len(qs)):
            for j in range(len(qs)):
                if qs[i] > qs[j]:
                    assert dist[i] > dist[j]


def test_boltzmann_requires_qtables(corridor):
    sc, _ = corridor
    c = Boltzmann()
    with pytest.raises(ValueError, match="q-tables"):
        c.action_distribution(State(np.zeros(2)), sc.tasks[0], sc, None)


def test_cosine_prefers_aimed_task_and_ties_on_bisector():
    sc = lattice_scenario(gamma=0.9)
    sc.tasks = [Task(0, np.array([3.0, 9.0]), 0.4), Task(1, np.array([9.0, 9.0]), 0.4)]
    c = Cosine(kappa=5.0, floor=1e-3)
    s = State(np.array([6.0, 3.0]))
    # the -x action leans toward task 0's goal, so it should favor task 0
    la0 = likelihood(c, s, np.array([-1.0, 0.0]), sc.tasks[0], sc)
    lb0 = likelihood(c, s, np.array([-1.0, 0.0]), sc.tasks[1], sc)
    assert la0 > lb0
    # the +y action bisects the two mirror-symmetric goals: equal likelihoods
    lau = likelihood(c, s, np.array([0.0, 1.0]), sc.tasks[0], sc)
    lbu = likelihood(c, s, np.array([0.0, 1.0]), sc.tasks[1], sc)
    assert lau == pytest.approx(lbu, abs=1e-12)


def test_cosine_zero_action_uniform_share():
    sc = lattice_scenario(gamma=0.9)
    c = Cosine(kappa=5.0, floor=1e-3)
    k = len(sc.action_set)
    dist = c.action_distribution(State(np.array([4.0, 4.0])), sc.tasks[0], sc)
    floored_uniform = (1 - 1e-3) / k + 1e-3 / k
    assert dist[0] == pytest.approx(floored_uniform, abs=1e-12)


def test_magnitude_coded_band_separation():
    sc = lattice_scenario(gamma=0.9)
    sc.action_set = np.array([[0.0, 0.0], [0.3, 0.0], [-0.3, 0.0], [1.0, 0.0],
                              [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    c = MagnitudeCoded(small_band=(0.15, 0.45), large_band=(0.7, 1.05),
                       axis=(1.0, 0.0), sharpness=40.0, floor=1e-3)
    s = State(np.array([5.0, 5.0]))
    small = np.array([0.3, 0.0])
    large = np.array([1.0, 0.0])
    # a small-band motion favors task 0, a large-band motion favors task 1
    assert likelihood(c, s, small, sc.tasks[0], sc) > likelihood(c, s, small, sc.tasks[1], sc)
    assert likelihood(c, s, large, sc.tasks[1], sc) > likelihood(c, s, large, sc.tasks[0], sc)
    # left and right motions of the same size are interchangeable
    assert likelihood(c, s, small, sc.tasks[0], sc) == pytest.approx(
        likelihood(c, s, -small, sc.tasks[0], sc), abs=1e-12)


def test_all_variants_normalize_and_respect_floor(corridor):
    sc, qts = corridor
    variants = [Boltzmann(lam=5.0, floor=1e-3), Cosine(kappa=5.0, floor=1e-3),
                MagnitudeCoded(small_band=(0.15, 0.45), large_band=(0.7, 1.05),
                               floor=1e-3)]
    k = len(sc.action_set)
    rng = np.random.default_rng(1)
    for c in variants:
        for _ in range(25):
            s = State(rng.uniform(0, 11, 2))
            for task in sc.tasks:
                dist = c.action_distribution(s, task, sc, qts)
                assert abs(dist.sum() - 1.0) <= 1e-9
                assert dist.min() >= 1e-3 / k
                assert dist.min() > 0.0


def test_likelihood_vector_matches_elementwise_calls(corridor):
    sc, qts = corridor
    sc3 = lattice_scenario(gamma=0.9)
    sc3.tasks = [Task(0, np.array([2.0, 8.0]), 0.4), Task(1, np.array([8.0, 8.0]), 0.4),
                 Task(2, np.array([5.0, 2.0]), 0.4)]
    qts3 = [value_iteration(sc3, t, tol=1e-9) for t in sc3.tasks]
    c = Boltzmann(lam=5.0, floor=1e-3)
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = State(rng.uniform(0, 11, 2))
        a = sc3.action_set[int(rng.integers(len(sc3.action_set)))]
        vec = likelihood_vector(c, s, a, sc3.tasks, sc3, qts3)
        assert len(vec) == 3
        for j, task in enumerate(sc3.tasks):
            assert vec[j] == likelihood(c, s, a, task, sc3, qts3)


def test_likelihood_vector_single_task(corridor):
    sc, qts = corridor
    c = Cosine()
    s = State(np.array([3.0, 3.0]))
    a = sc.action_set[1]
    vec = likelihood_vector(c, s, a, [sc.tasks[0]], sc, qts)
    assert vec.shape == (1,)
    assert vec[0] == likelihood(c, s, a, sc.tasks[0], sc, qts)


def test_mirror_symmetric_tasks_equal_vector_entries():
    sc = lattice_scenario(gamma=0.9)
    sc.tasks = [Task(0, np.array([3.0, 9.0]), 0.4), Task(1, np.array([9.0, 9.0]), 0.4)]
    c = Cosine(kappa=5.0)
    s = State(np.array([6.0, 3.0]))  # on the mirror axis
    vec = likelihood_vector(c, s, np.array([0.0, 1.0]), sc.tasks, sc)
    assert vec[0] == pytest.approx(vec[1], abs=1e-12)


def test_build_convention_variants_and_errors():
    assert isinstance(build_convention({"type": "boltzmann"}), Boltzmann)
    assert build_convention({"type": "boltzmann", "lambda": 3.0}).lam == 3.0
    assert isinstance(build_convention({"type": "cosine", "kappa": 2.0}), Cosine)
    mc = build_convention({"type": "magnitude_coded", "small_band": [0.1, 0.3],
                           "large_band": [0.6, 1.0]})
    assert isinstance(mc, MagnitudeCoded)
    with pytest.raises(ValueError, match="unknown convention"):
        build_convention({"type": "telepathy"})
    with pytest.raises(ValueError, match="lambda"):
        build_convention({"type": "boltzmann", "lambda": -1})


def test_unknown_task_id_for_magnitude_coded():
    sc = lattice_scenario(gamma=0.9)
    c = MagnitudeCoded(small_band=(0.1, 0.4), large_band=(0.6, 1.0))
    with pytest.raises(ValueError, match="task ids 0 and 1"):
        c.action_distribution(State(np.zeros(2)), Task(2, np.zeros(2), 0.1), sc)


def test_top_action_index_boltzmann_is_greedy(corridor):
    sc, qts = corridor
    c = Boltzmann(lam=5.0)
    s = State(np.array([4.0, 6.0]))
    qs = q_all(qts[0], s)
    assert top_action_index(c, s, sc.tasks[0], sc, qts) == int(np.argmax(qs))
