"""Per-task action-value tables computed by value iteration on a workspace lattice.

The robot-alone dynamics are deterministic (s' = s + dt * a, clamped), reward is
-1 per step and 0 inside the capture radius, so every value lies in
[-1/(1-gamma), 0]. Continuous states are handled by bilinear interpolation over
the lattice; the per-action tables make the downstream constrained argmax exact.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .world import Scenario, State, Task, scenario_hash


class ValueIterationError(RuntimeError):
    """Raised when the Bellman backup fails to reach the requested residual."""


@dataclass
class QTable:
    task_id: int
    gamma: float
    nx: int
    ny: int
    xs: np.ndarray          # (nx,) lattice x coordinates
    ys: np.ndarray          # (ny,) lattice y coordinates
    action_set: np.ndarray  # (K, 2)
    values: np.ndarray      # (nx*ny, K), row-major cells (iy*nx + ix)
    v: np.ndarray           # (nx*ny,) max over actions, kept consistent with values
    goal_mask: np.ndarray   # (nx*ny,) bool, cells inside the capture radius

    def cell_weights(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices and bilinear weights of the four cells surrounding p."""
        hx = self.xs[1] - self.xs[0]
        hy = self.ys[1] - self.ys[0]
        fx = np.clip((p[0] - self.xs[0]) / hx, 0.0, self.nx - 1.0)
        fy = np.clip((p[1] - self.ys[0]) / hy, 0.0, self.ny - 1.0)
        ix = min(int(fx), self.nx - 2)
        iy = min(int(fy), self.ny - 2)
        tx = fx - ix
        ty = fy - iy
        base = iy * self.nx + ix
        idx = np.array([base, base + 1, base + self.nx, base + self.nx + 1])
        w = np.array([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty])
        return idx, w


def _lattice(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    x0, y0, x1, y1 = scenario.bounds
    n = scenario.grid_resolution
    return np.linspace(x0, x1, n), np.linspace(y0, y1, n)


def _interp_coeffs(points: np.ndarray, xs: np.ndarray, ys: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bilinear coefficients for an (N,2) array of clamped points."""
    nx, ny = len(xs), len(ys)
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    fx = np.clip((points[:, 0] - xs[0]) / hx, 0.0, nx - 1.0)
    fy = np.clip((points[:, 1] - ys[0]) / hy, 0.0, ny - 1.0)
    ix = np.minimum(fx.astype(int), nx - 2)
    iy = np.minimum(fy.astype(int), ny - 2)
    tx = fx - ix
    ty = fy - iy
    base = iy * nx + ix
    idx = np.stack([base, base + 1, base + nx, base + nx + 1], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return idx, w


def value_iteration(scenario: Scenario, task: Task, tol: float = 1e-8,
                    max_iters: int | None = None) -> QTable:
    """Jacobi-style Bellman backups until the sup-norm residual drops below tol."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    xs, ys = _lattice(scenario)
    nx, ny = len(xs), len(ys)
    ncells = nx * ny
    gamma = scenario.gamma
    actions = scenario.action_set
    K = len(actions)
    if max_iters is None:
        max_iters = max(int(10 * np.hypot(nx - 1, ny - 1)), 100)

    gx, gy = np.meshgrid(xs, ys)               # row-major: cell = iy*nx + ix
    pos = np.stack([gx.ravel(), gy.ravel()], axis=1)
    goal_mask = np.linalg.norm(pos - task.goal, axis=1) <= task.radius

    # precompute interpolation of every cell's successor under each action
    idx_k = np.empty((K, ncells, 4), dtype=np.int64)
    w_k = np.empty((K, ncells, 4))
    x0, y0, x1, y1 = scenario.bounds
    for k in range(K):
        nxt = np.clip(pos + scenario.dt * actions[k], [x0, y0], [x1, y1])
        idx_k[k], w_k[k] = _interp_coeffs(nxt, xs, ys)

    v = np.zeros(ncells)
    q = np.zeros((ncells, K))
    resid = np.inf
    for _ in range(max_iters):
        for k in range(K):
            ev = np.einsum("cj,cj->c", w_k[k], v[idx_k[k]])
            q[:, k] = -1.0 + gamma * ev
        q[goal_mask, :] = 0.0
        v_new = q.max(axis=1)
        resid = np.abs(v_new - v).max()
        v = v_new
        if resid < tol:
            return QTable(task_id=task.id, gamma=gamma, nx=nx, ny=ny, xs=xs, ys=ys,
                          action_set=actions.copy(), values=q, v=v, goal_mask=goal_mask)
    raise ValueIterationError(
        f"value iteration did not converge after {max_iters} iterations "
        f"(residual {resid:.3e} >= tol {tol:.3e})")


def q_all(qt: QTable, s: State) -> np.ndarray:
    """Interpolated Q values at s for every discrete action, shape (K,)."""
    idx, w = qt.cell_weights(s.position)
    return w @ qt.values[idx]


def _action_index(qt: QTable, a: np.ndarray) -> int:
    d = np.abs(qt.action_set - np.asarray(a, dtype=float)).max(axis=1)
    k = int(np.argmin(d))
    if d[k] > 1e-12:
        raise ValueError(f"action {np.asarray(a)} not in the scenario action set")
    return k


def q_lookup(qt: QTable, s: State, a: np.ndarray) -> float:
    """Bilinear interpolation of the tabulated Q for a discrete action; exact at cells."""
    return float(q_all(qt, s)[_action_index(qt, a)])


def v_lookup(qt: QTable, s: State) -> float:
    """max_a Q(s, a) over the discrete action set."""
    return float(np.max(q_all(qt, s)))


def optimal_action(qt: QTable, s: State) -> np.ndarray:
    """Greedy action at s; ties broken by lowest action index."""
    qs = q_all(qt, s)
    return qt.action_set[int(np.argmax(qs))]


def optimal_action_index(qt: QTable, s: State) -> int:
    return int(np.argmax(q_all(qt, s)))


# --- optional binary cache -------------------------------------------------

_MAGIC = b"CRQT"
_VERSION = 1
CACHE_ENV = "CONVREVEAL_CACHE_DIR"


def save_qtable(qt: QTable, path) -> None:
    xs = np.ascontiguousarray(qt.xs)
    ys = np.ascontiguousarray(qt.ys)
    acts = np.ascontiguousarray(qt.action_set, dtype=float)
    vals = np.ascontiguousarray(qt.values, dtype=float)
    v = np.ascontiguousarray(qt.v, dtype=float)
    mask = np.ascontiguousarray(qt.goal_mask, dtype=np.uint8)
    header = struct.pack("<4sIiidII", _MAGIC, _VERSION, qt.task_id, len(qt.action_set),
                         qt.gamma, qt.nx, qt.ny)
    with open(path, "wb") as f:
        f.write(header)
        for arr in (xs, ys, acts, vals, v, mask):
            f.write(arr.tobytes(order="C"))


def load_qtable(path) -> QTable:
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sIiidII"))
        magic, version, task_id, K, gamma, nx, ny = struct.unpack("<4sIiidII", head)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"not a qtable cache file: {path}")
        ncells = nx * ny
        xs = np.frombuffer(f.read(8 * nx), dtype=float).copy()
        ys = np.frombuffer(f.read(8 * ny), dtype=float).copy()
        acts = np.frombuffer(f.read(8 * 2 * K), dtype=float).reshape(K, 2).copy()
        vals = np.frombuffer(f.read(8 * ncells * K), dtype=float).reshape(ncells, K).copy()
        v = np.frombuffer(f.read(8 * ncells), dtype=float).copy()
        mask = np.frombuffer(f.read(ncells), dtype=np.uint8).astype(bool)
    return QTable(task_id=task_id, gamma=gamma, nx=nx, ny=ny, xs=xs, ys=ys,
                  action_set=acts, values=vals, v=v, goal_mask=mask)


def cached_value_iteration(scenario: Scenario, task: Task, tol: float = 1e-8,
                           cache_dir=None) -> QTable:
    """value_iteration with a transparent file cache keyed by scenario content."""
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV)
    if cache_dir is None:
        return value_iteration(scenario, task, tol=tol)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = (f"{scenario_hash(scenario)}_t{task.id}_g{scenario.gamma:.6g}"
           f"_r{scenario.grid_resolution}.qt")
    path = cache_dir / key
    if path.exists():
        try:
            return load_qtable(path)
        except (ValueError, struct.error):
            path.unlink()
    qt = value_iteration(scenario, task, tol=tol)
    save_qtable(qt, path)
    return qt


def tables_for(scenario: Scenario, tol: float = 1e-8, cache_dir=None) -> list[QTable]:
    """One QTable per task, in task-id order."""
    return [cached_value_iteration(scenario, t, tol=tol, cache_dir=cache_dir)
            for t in scenario.tasks]
