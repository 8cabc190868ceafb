from collections import deque

import numpy as np
import pytest

from convreveal.value import (ValueIterationError, cached_value_iteration, load_qtable,
                              optimal_action, q_all, q_lookup, save_qtable, v_lookup,
                              value_iteration)
from convreveal.world import State, Task
from conftest import lattice_scenario


def closed_form_v(d, gamma):
    # cost of d unit steps at -1 each, discounted: -(1 - gamma^d) / (1 - gamma)
    return -(1.0 - gamma**d) / (1.0 - gamma)


def bfs_distances(sc, goal_cell):
    """Shortest path lengths on the 4-connected lattice; independent of the backup."""
    n = sc.grid_resolution
    dist = np.full((n, n), -1, dtype=int)
    q = deque([goal_cell])
    dist[goal_cell[1], goal_cell[0]] = 0
    while q:
        x, y = q.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx_, ny_ = x + dx, y + dy
            if 0 <= nx_ < n and 0 <= ny_ < n and dist[ny_, nx_] < 0:
                dist[ny_, nx_] = dist[y, x] + 1
                q.append((nx_, ny_))
    return dist


@pytest.mark.parametrize("gamma", [0.9, 0.95])
def test_corridor_matches_geometric_series(gamma):
    sc = lattice_scenario(gamma=gamma)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    gx, gy = 10, 6
    for d in range(0, 11):
        cell = (gx - d) + gy * qt.nx
        assert qt.v[cell] == pytest.approx(closed_form_v(d, gamma), abs=1e-6)
    # spot values from hand evaluation at gamma=0.9
    if gamma == 0.9:
        row = gy * qt.nx
        assert qt.v[row + 9] == pytest.approx(-1.0, abs=1e-9)
        assert qt.v[row + 8] == pytest.approx(-1.9, abs=1e-9)
        assert qt.v[row + 7] == pytest.approx(-2.71, abs=1e-9)


def test_goal_cells_have_zero_value():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    assert np.all(qt.v[qt.goal_mask] == 0.0)
    assert np.all(qt.values[qt.goal_mask] == 0.0)


def test_value_bounds_and_v_consistency():
    sc = lattice_scenario(gamma=0.95)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    assert qt.values.max() <= 0.0
    assert qt.values.min() >= -1.0 / (1.0 - sc.gamma)
    assert np.abs(qt.v - qt.values.max(axis=1)).max() <= 1e-9


def test_bellman_residual_at_convergence():
    sc = lattice_scenario(gamma=0.9)
    tol = 1e-9
    qt = value_iteration(sc, sc.tasks[0], tol=tol)
    # re-apply one backup by hand and check the change stays below tol
    gamma = sc.gamma
    v = qt.v
    worst = 0.0
    for c in range(qt.nx * qt.ny):
        if qt.goal_mask[c]:
            continue
        p = np.array([qt.xs[c % qt.nx], qt.ys[c // qt.nx]])
        best = -np.inf
        for a in sc.action_set:
            nxt = np.clip(p + sc.dt * a, 0, qt.xs[-1])
            idx, w = qt.cell_weights(nxt)
            best = max(best, -1.0 + gamma * float(w @ v[idx]))
        worst = max(worst, abs(best - v[c]))
    assert worst < tol * 2


def test_non_convergence_raises():
    sc = lattice_scenario(gamma=0.95)
    with pytest.raises(ValueIterationError, match="residual"):
        value_iteration(sc, sc.tasks[0], tol=1e-12, max_iters=3)


def test_two_tasks_route_to_distinct_goals():
    sc = lattice_scenario(gamma=0.9)
    sc.tasks = [Task(0, np.array([2.0, 6.0]), 0.4), Task(1, np.array([9.0, 6.0]), 0.4)]
    qts = [value_iteration(sc, t, tol=1e-9) for t in sc.tasks]
    dists = [bfs_distances(sc, (2, 6)), bfs_distances(sc, (9, 6))]
    for side, x in ((0, 4.0), (1, 7.0)):
        s = State(np.array([x, 6.0]))
        for tid in (0, 1):
            a = optimal_action(qts[tid], s)
            nxt = s.position + sc.dt * a
            d_now = dists[tid][int(s.position[1]), int(s.position[0])]
            d_next = dists[tid][int(nxt[1]), int(nxt[0])]
            assert d_next == d_now - 1  # a shortest-path direction for that task
        # from the midpoint's two sides the two policies move apart
        a0 = optimal_action(qts[0], s)
        a1 = optimal_action(qts[1], s)
        assert a0[0] < 0 < a1[0]


def test_policy_argmax_matches_bfs_on_random_grids():
    rng = np.random.default_rng(42)
    for _ in range(5):
        n = int(rng.integers(8, 14))
        gx, gy = int(rng.integers(1, n - 1)), int(rng.integers(1, n - 1))
        sc = lattice_scenario(gamma=0.9, n=n, goal=(float(gx), float(gy)))
        qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
        dist = bfs_distances(sc, (gx, gy))
        for _ in range(30):
            x, y = int(rng.integers(0, n)), int(rng.integers(0, n))
            if dist[y, x] == 0:
                continue
            a = optimal_action(qt, State(np.array([float(x), float(y)])))
            nx_, ny_ = int(x + a[0]), int(y + a[1])
            assert dist[ny_, nx_] == dist[y, x] - 1


def test_policy_reaches_goal_within_twice_diameter():
    from convreveal.world import reached, step

    def rollout(sc, qt, s, budget):
        for _ in range(budget):
            if reached(s, sc.tasks[0]):
                return True
            a = optimal_action(qt, s)
            s = step(s, a, a, sc)  # both channels agree: robot acting alone
        return reached(s, sc.tasks[0])

    sc = lattice_scenario(gamma=0.95)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    diameter = 2 * (sc.grid_resolution - 1)
    rng = np.random.default_rng(3)
    for _ in range(20):  # lattice starts: capture is exact
        s = State(rng.integers(0, sc.grid_resolution, 2).astype(float))
        assert rollout(sc, qt, s, 2 * diameter)
    # continuous starts need a radius covering the worst lattice offset (sqrt(2)/2)
    sc2 = lattice_scenario(gamma=0.95, radius=0.75)
    qt2 = value_iteration(sc2, sc2.tasks[0], tol=1e-9)
    for _ in range(20):
        s = State(rng.uniform(0, sc2.grid_resolution - 1, 2))
        assert rollout(sc2, qt2, s, 2 * diameter)


def interp_oracle(qt, p, k):
    """Straightforward bilinear interpolation written independently."""
    xs, ys = qt.xs, qt.ys
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    ix = int(min(max((p[0] - xs[0]) / hx, 0.0), qt.nx - 2))
    iy = int(min(max((p[1] - ys[0]) / hy, 0.0), qt.ny - 2))
    tx = (p[0] - xs[ix]) / hx
    ty = (p[1] - ys[iy]) / hy
    tx = min(max(tx, 0.0), 1.0)
    ty = min(max(ty, 0.0), 1.0)
    q = qt.values
    c = iy * qt.nx + ix
    return ((1 - tx) * (1 - ty) * q[c, k] + tx * (1 - ty) * q[c + 1, k]
            + (1 - tx) * ty * q[c + qt.nx, k] + tx * ty * q[c + qt.nx + 1, k])


def test_q_lookup_exact_at_cell_centers():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    s = State(np.array([4.0, 6.0]))
    for k, a in enumerate(sc.action_set):
        assert q_lookup(qt, s, a) == qt.values[6 * qt.nx + 4, k]


def test_q_lookup_midpoint_average():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    # plant known values around an interior midpoint
    qt.values[6 * qt.nx + 4, 1] = -1.0
    qt.values[6 * qt.nx + 5, 1] = -2.0
    got = q_lookup(qt, State(np.array([4.5, 6.0])), sc.action_set[1])
    assert got == pytest.approx(-1.5, abs=1e-15)


def test_q_lookup_matches_independent_interpolation():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = rng.uniform(0, 11, 2)
        k = int(rng.integers(len(sc.action_set)))
        got = q_lookup(qt, State(p), sc.action_set[k])
        assert got == pytest.approx(interp_oracle(qt, p, k), abs=1e-12)


def test_q_lookup_rejects_unknown_action():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    with pytest.raises(ValueError, match="not in the scenario action set"):
        q_lookup(qt, State(np.array([4.0, 6.0])), np.array([0.5, 0.5]))


def test_v_lookup_is_max_and_zero_at_goal():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    assert v_lookup(qt, State(np.array([10.0, 6.0]))) == 0.0
    assert v_lookup(qt, State(np.array([8.0, 6.0]))) == pytest.approx(-1.9, abs=1e-9)
    rng = np.random.default_rng(11)
    for _ in range(50):
        s = State(rng.uniform(0, 11, 2))
        v = v_lookup(qt, s)
        for a in sc.action_set:
            assert v >= q_lookup(qt, s, a)


def test_optimal_action_examples():
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    a = optimal_action(qt, State(np.array([9.0, 6.0])))  # one step left of goal
    assert np.array_equal(a, [1.0, 0.0])
    a = optimal_action(qt, State(np.array([10.0, 6.0])))  # at goal: absorbing
    assert np.array_equal(a, [0.0, 0.0])


def test_optimal_action_tie_breaks_by_lowest_index():
    sc = lattice_scenario(gamma=0.9, goal=(6.0, 6.0))
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    rng = np.random.default_rng(5)
    for _ in range(100):
        s = State(rng.uniform(0, 11, 2))
        qs = q_all(qt, s)
        best, best_q = 0, qs[0]
        for k in range(1, len(qs)):  # exhaustive enumeration oracle, first-max rule
            if qs[k] > best_q:
                best, best_q = k, qs[k]
        assert np.array_equal(optimal_action(qt, s), sc.action_set[best])
    # symmetric diagonal spot: (4,4) is equidistant in x and y from goal (6,6)
    s = State(np.array([4.0, 4.0]))
    qs = q_all(qt, s)
    assert qs[1] == qs[3]  # +x and +y are exact ties on this symmetric instance
    assert np.array_equal(optimal_action(qt, s), sc.action_set[1])


def test_qtable_cache_roundtrip(tmp_path):
    sc = lattice_scenario(gamma=0.9)
    qt = value_iteration(sc, sc.tasks[0], tol=1e-9)
    path = tmp_path / "table.qt"
    save_qtable(qt, path)
    back = load_qtable(path)
    assert np.array_equal(back.values, qt.values)
    assert np.array_equal(back.v, qt.v)
    assert np.array_equal(back.goal_mask, qt.goal_mask)
    assert back.task_id == qt.task_id and back.gamma == qt.gamma


def test_cached_value_iteration_identical_results(tmp_path):
    sc = lattice_scenario(gamma=0.9)
    fresh = value_iteration(sc, sc.tasks[0], tol=1e-8)
    first = cached_value_iteration(sc, sc.tasks[0], tol=1e-8, cache_dir=tmp_path)
    second = cached_value_iteration(sc, sc.tasks[0], tol=1e-8, cache_dir=tmp_path)
    assert np.array_equal(first.values, fresh.values)
    assert np.array_equal(second.values, fresh.values)
    assert list(tmp_path.glob("*.qt"))  # cache file actually produced
