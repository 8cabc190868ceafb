"""Session server exposing the live simulation over line-delimited JSON messages.

Requests:  {"v": 1, "type": "start"|"input"|"reset", "session": str, "payload": {...}}
Replies:   {"v": 1, "type": "state"|"error",          "session": str, "payload": {...}}

State payload: {t, s: [x, y], a_r: [vx, vy], belief: [...], epsilon, theta_star,
done, outcome}. The client declares its true task on start; the server uses it
only for logging and outcome metrics, never for inference or action selection.
"""
from __future__ import annotations

import json
import socketserver
import threading
from pathlib import Path

import numpy as np

from .convention import build_convention
from .reveal import TickSession, epsilon_at
from .runner import EpisodeLog, count_incorrect_inputs
from .value import QTable, tables_for
from .world import Scenario, scenario_hash

PROTOCOL_VERSION = 1


class _Episode:
    def __init__(self, gateway: "Gateway", theta_true: int, mode: str, seed: int):
        self.theta_true = theta_true
        self.mode = mode
        self.seed = seed
        self.session = TickSession(gateway.scenario, gateway.qtables,
                                   convention=gateway.convention, mode=mode)
        self.done = False
        self.outcome = None

    def snapshot(self, a_r, epsilon: float, theta_star: int) -> dict:
        s = self.session.s.position
        return {
            "t": self.session.t,
            "s": [float(s[0]), float(s[1])],
            "a_r": [float(a_r[0]), float(a_r[1])],
            "belief": [float(p) for p in self.session.belief.probabilities],
            "epsilon": float(epsilon),
            "theta_star": int(theta_star),
            "done": self.done,
            "outcome": self.outcome,
        }


class Gateway:
    """Holds sessions and turns protocol messages into simulation ticks."""

    def __init__(self, scenario: Scenario, qtables: list[QTable] | None = None,
                 log_dir=None):
        self.scenario = scenario
        self.qtables = qtables if qtables is not None else tables_for(scenario)
        self.convention = build_convention(scenario.convention_spec)
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self.sessions: dict[str, _Episode] = {}
        self._lock = threading.RLock()

    # --- protocol ---

    def handle(self, msg: dict) -> dict:
        session = msg.get("session") if isinstance(msg, dict) else None
        if not isinstance(msg, dict) or msg.get("v") != PROTOCOL_VERSION:
            return self._error(session, "bad_payload", "expected v=1 message object")
        if not isinstance(session, str) or not session:
            return self._error(None, "bad_payload", "missing session id")
        mtype = msg.get("type")
        payload = msg.get("payload") or {}
        if mtype == "start":
            return self._start(session, payload)
        if mtype == "input":
            return self._input(session, payload)
        if mtype == "reset":
            return self._reset(session)
        return self._error(session, "bad_payload", f"unknown message type {mtype!r}")

    def _error(self, session, code: str, message: str) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "error", "session": session,
                "payload": {"code": code, "message": message}}

    def _state(self, session: str, payload: dict) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "state", "session": session,
                "payload": payload}

    def _start(self, session: str, payload: dict) -> dict:
        try:
            theta_true = int(payload.get("theta_true", 0))
            mode = payload.get("mode", "ours")
            seed = int(payload.get("seed", self.scenario.rng_seed))
        except (TypeError, ValueError):
            return self._error(session, "bad_payload", "malformed start payload")
        if not (0 <= theta_true < len(self.scenario.tasks)):
            return self._error(session, "bad_payload",
                               f"theta_true must be in [0, {len(self.scenario.tasks)})")
        if mode not in ("ours", "no_assist", "unassisted"):
            return self._error(session, "bad_payload", f"unknown mode {mode!r}")
        with self._lock:
            old = self.sessions.get(session)
            if old is not None and old.session.rows:
                self._persist(old)
            ep = _Episode(self, theta_true, mode, seed)
            self.sessions[session] = ep
        sess = ep.session
        theta_star = int(np.argmax(sess.belief.log_weights))
        eps = epsilon_at(sess.schedule, sess.s, self.scenario.tasks[theta_star],
                         self.qtables[theta_star], n_tasks=len(self.scenario.tasks))
        zero = self.scenario.action_set[self.scenario.zero_action_index()]
        return self._state(session, ep.snapshot(zero, eps, theta_star))

    def _input(self, session: str, payload: dict) -> dict:
        ep = self.sessions.get(session)
        if ep is None:
            return self._error(session, "no_session", "start a session first")
        if ep.done:
            return self._error(session, "bad_state", "episode finished; start or reset")
        try:
            a_h = np.array([float(payload["vx"]), float(payload["vy"])])
        except (KeyError, TypeError, ValueError):
            return self._error(session, "bad_payload", "input payload needs vx, vy")
        res = ep.session.tick(a_h)
        reached_task = ep.session.reached_task()
        if reached_task is not None or ep.session.t >= self.scenario.max_ticks:
            ep.done = True
            ep.outcome = self._outcome(ep, reached_task)
            self._persist(ep)
        return self._state(session, ep.snapshot(res.a_r, res.epsilon_used,
                                                res.theta_star))

    def _reset(self, session: str) -> dict:
        ep = self.sessions.get(session)
        if ep is None:
            return self._error(session, "no_session", "start a session first")
        if not ep.done:
            ep.done = True
            ep.outcome = self._outcome(ep, ep.session.reached_task())
            self._persist(ep)
        snap = ep.snapshot(self.scenario.action_set[self.scenario.zero_action_index()],
                           0.0, int(np.argmax(ep.session.belief.log_weights)))
        del self.sessions[session]
        return self._state(session, snap)

    # --- bookkeeping ---

    def _outcome(self, ep: _Episode, reached_task) -> dict:
        rows = ep.session.rows
        incorrect = count_incorrect_inputs(rows, ep.theta_true, self.scenario,
                                           self.convention, self.qtables)
        return {
            "reached": None if reached_task is None else reached_task.id,
            "ticks": ep.session.t,
            "inputs": sum(1 for r in rows if r.a_h != (0.0, 0.0)),
            "incorrect_inputs": incorrect,
        }

    def _persist(self, ep: _Episode) -> None:
        if self.log_dir is None:
            return
        self.log_dir.mkdir(parents=True, exist_ok=True)
        outcome = ep.outcome or self._outcome(ep, ep.session.reached_task())
        log = EpisodeLog(scenario_hash=scenario_hash(self.scenario), mode=ep.mode,
                         seed=ep.seed, theta_true=ep.theta_true,
                         rows=ep.session.rows, outcome=outcome)
        path = self.log_dir / "episodes.jsonl"
        with self._lock:
            with open(path, "a", encoding="utf-8") as f:
                f.write(log.to_json() + "\n")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        gateway: Gateway = self.server.gateway  # type: ignore[attr-defined]
        locks = self.server.session_locks       # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                reply = gateway._error(None, "bad_payload", "not valid JSON")
            else:
                sid = msg.get("session") if isinstance(msg, dict) else None
                lock = locks.setdefault(sid, threading.Lock())
                with lock:
                    reply = gateway.handle(msg)
            self.wfile.write((json.dumps(reply, sort_keys=True) + "\n").encode("utf-8"))
            self.wfile.flush()


class GatewayServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], gateway: Gateway):
        super().__init__(addr, _Handler)
        self.gateway = gateway
        self.session_locks: dict = {}


def serve(scenario: Scenario, addr: str = "127.0.0.1:8765", log_dir=None) -> None:
    """Blocking server; one line-delimited JSON request per reply."""
    host, port = addr.rsplit(":", 1)
    gateway = Gateway(scenario, log_dir=log_dir)
    with GatewayServer((host, int(port)), gateway) as server:
        server.serve_forever()
