"""Finite-state solvers for the delay-optimal transmission problem.

States are quantized (queue, energy) pairs on a regular grid; the action is
a quantized transmit energy no larger than the stored energy.  Stage cost is
the queue length, so discounted/average-cost optimal policies minimize mean
queue length and, via Little's law, mean delay.

The kernel factorizes: given the action, the next queue depends only on the
arrival draw and the next energy only on the harvest draw, which keeps the
Bellman sweeps at matrix-multiply speed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import spsolve

from .rates import RateFunction

__all__ = [
    "MdpConfig",
    "MdpSolution",
    "TransitionKernel",
    "build_transition",
    "value_iteration",
    "policy_iteration",
    "relative_value_iteration",
    "greedy_policy_table",
    "verify_greedy_optimal",
    "TablePolicy",
    "export_policy_csv",
    "load_policy_csv",
]

_PROB_TOL = 1e-12


def _grid_index(value: float, step: float) -> int:
    """Round-half-up onto the grid."""
    return int(math.floor(value / step + 0.5))


@dataclass(frozen=True)
class MdpConfig:
    """Quantized (queue, energy) decision problem.

    drop_penalty charges each data bit lost to the queue cap.  The default 0
    is the plain truncated model; alpha / (1 - alpha) (the discounted cost of
    a bit held forever) removes the truncation artifact where the optimizer
    parks the queue at the cap to shed arrivals for free, restoring the
    infinite-buffer optimality structure on the finite grid.
    """

    rf: RateFunction
    x_pmf: Tuple[Tuple[float, float], ...]   # (value, prob), values on q grid
    y_pmf: Tuple[Tuple[float, float], ...]   # (value, prob), values on e grid
    q_cap: float = 50.0
    e_cap: float = 50.0
    q_step: float = 1.0
    e_step: float = 1.0
    alpha: float = 0.95
    action_levels: Optional[Tuple[int, ...]] = None  # e-grid indices; default all
    drop_penalty: float = 0.0

    def with_boundary_penalty(self) -> "MdpConfig":
        """Copy with the drop penalty that preserves greedy optimality."""
        from dataclasses import replace
        return replace(self, drop_penalty=self.alpha / (1.0 - self.alpha))

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must be in [0, 1)")
        if self.q_step <= 0 or self.e_step <= 0:
            raise ValueError("grid steps must be positive")
        for name, pmf, step in (("x_pmf", self.x_pmf, self.q_step),
                                ("y_pmf", self.y_pmf, self.e_step)):
            probs = [p for _, p in pmf]
            if abs(sum(probs) - 1.0) > _PROB_TOL:
                raise ValueError(f"{name} sums to {sum(probs)}, not 1")
            for v, _ in pmf:
                if abs(v / step - round(v / step)) > 1e-9:
                    raise ValueError(
                        f"{name} value {v} is not on the grid (step {step})")
        if self.action_levels is not None:
            if max(self.action_levels) >= self.n_e:
                raise ValueError("action grid exceeds the energy buffer")

    @property
    def n_q(self) -> int:
        return _grid_index(self.q_cap, self.q_step) + 1

    @property
    def n_e(self) -> int:
        return _grid_index(self.e_cap, self.e_step) + 1

    @property
    def actions(self) -> np.ndarray:
        if self.action_levels is not None:
            return np.asarray(sorted(self.action_levels), dtype=int)
        return np.arange(self.n_e, dtype=int)

    @property
    def q_values(self) -> np.ndarray:
        return np.arange(self.n_q) * self.q_step

    @property
    def stage_cost(self) -> np.ndarray:
        """Cost matrix over (iq, ie): the queue length."""
        return np.repeat(self.q_values[:, None], self.n_e, axis=1)


class TransitionKernel:
    """Product-form transition law: next queue and next energy are
    conditionally independent given the action."""

    def __init__(self, cfg: MdpConfig):
        self.cfg = cfg
        nq, ne = cfg.n_q, cfg.n_e
        x_vals = np.array([v for v, _ in cfg.x_pmf])
        self.x_probs = np.array([p for _, p in cfg.x_pmf])
        y_idx = np.array([_grid_index(v, cfg.e_step) for v, _ in cfg.y_pmf])
        self.y_probs = np.array([p for _, p in cfg.y_pmf])

        acts = cfg.actions
        # q_next[a_pos, iq, ix]: next queue index after action a and arrival x
        self.q_next = np.empty((len(acts), nq, len(x_vals)), dtype=np.intp)
        # penalty[a_pos, iq]: expected drop charge for taking action a at q
        self.penalty = np.zeros((len(acts), nq))
        q_grid = cfg.q_values
        for a_pos, ia in enumerate(acts):
            served = cfg.rf.bits(ia * cfg.e_step)
            residual = np.maximum(q_grid - served, 0.0)
            nxt = residual[:, None] + x_vals[None, :]
            idx = np.floor(nxt / cfg.q_step + 0.5).astype(np.intp)
            self.q_next[a_pos] = np.minimum(idx, nq - 1)
            if cfg.drop_penalty:
                dropped = np.maximum(nxt - cfg.q_cap, 0.0)
                self.penalty[a_pos] = cfg.drop_penalty * (
                    dropped * self.x_probs[None, :]).sum(axis=1)
        # e_next[a_pos, ie, iy]: next energy index (only valid for ie >= ia)
        self.e_next = np.empty((len(acts), ne, len(y_idx)), dtype=np.intp)
        for a_pos, ia in enumerate(acts):
            nxt = np.arange(ne)[:, None] - ia + y_idx[None, :]
            self.e_next[a_pos] = np.minimum(np.maximum(nxt, 0), ne - 1)
        # admissible[a_pos, ie]
        self.admissible = acts[:, None] <= np.arange(ne)[None, :]
        self.actions = acts

    def row(self, iq: int, ie: int, a_pos: int) -> dict:
        """Distribution over next (iq, ie) for one state-action pair."""
        if not self.admissible[a_pos, ie]:
            raise ValueError("action exceeds stored energy")
        out: dict = {}
        for ix, px in enumerate(self.x_probs):
            for iy, py in enumerate(self.y_probs):
                key = (int(self.q_next[a_pos, iq, ix]),
                       int(self.e_next[a_pos, ie, iy]))
                out[key] = out.get(key, 0.0) + px * py
        return out

    def policy_matrix(self, policy: np.ndarray) -> csr_matrix:
        """Row-stochastic matrix of the chain induced by a policy table.

        policy[iq, ie] holds positions into self.actions.
        """
        cfg = self.cfg
        nq, ne = cfg.n_q, cfg.n_e
        n = nq * ne
        nx, ny = len(self.x_probs), len(self.y_probs)
        rows = np.repeat(np.arange(n), nx * ny)
        cols = np.empty(n * nx * ny, dtype=np.intp)
        vals = np.empty(n * nx * ny)
        pxy = np.outer(self.x_probs, self.y_probs).ravel()
        at = 0
        for iq in range(nq):
            for ie in range(ne):
                a_pos = policy[iq, ie]
                qn = self.q_next[a_pos, iq, :]
                en = self.e_next[a_pos, ie, :]
                cols[at:at + nx * ny] = (qn[:, None] * ne
                                         + en[None, :]).ravel()
                vals[at:at + nx * ny] = pxy
                at += nx * ny
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    def expected_next_value(self, v: np.ndarray) -> np.ndarray:
        """E[v(next state)] over (iq, ie, a_pos), ignoring admissibility."""
        cfg = self.cfg
        nq, ne = cfg.n_q, cfg.n_e
        ev = np.empty((nq, ne, len(self.actions)))
        for a_pos in range(len(self.actions)):
            # expectation over the harvest: W[iq, ie] = E_y v[iq, e'(ie)]
            w = (v[:, self.e_next[a_pos]] * self.y_probs[None, None, :]
                 ).sum(axis=2)
            # expectation over the arrival
            acc = np.zeros((nq, ne))
            for ix, px in enumerate(self.x_probs):
                acc += px * w[self.q_next[a_pos, :, ix], :]
            ev[:, :, a_pos] = acc
        return ev

    def bellman(self, v: np.ndarray, discount: float) -> np.ndarray:
        """Q-values over (iq, ie, a_pos); inadmissible actions get +inf."""
        cost = (self.cfg.stage_cost[:, :, None]
                + self.penalty.T[:, None, :])
        qv = cost + discount * self.expected_next_value(v)
        return np.where(self.admissible.T[None, :, :], qv, np.inf)

    def policy_stage_cost(self, policy: np.ndarray) -> np.ndarray:
        """Stage cost (queue length plus drop charge) under a policy table."""
        pen = self.penalty[policy, np.arange(self.cfg.n_q)[:, None]]
        return self.cfg.stage_cost + pen


def build_transition(cfg: MdpConfig) -> TransitionKernel:
    return TransitionKernel(cfg)


@dataclass
class MdpSolution:
    policy: np.ndarray        # action positions over (iq, ie)
    value: np.ndarray         # value/bias over (iq, ie)
    avg_cost: float
    iterations: int
    residual: float
    residual_history: List[float] = field(default_factory=list)

    def action_energy(self, kernel: TransitionKernel) -> np.ndarray:
        """Transmit-energy table (same shape as policy)."""
        return kernel.actions[self.policy] * kernel.cfg.e_step


def _extract_policy(qv: np.ndarray, tol: float = 1e-10,
                    incumbent: Optional[np.ndarray] = None) -> np.ndarray:
    """Largest action among minimizers (drains energy, limits overflow).

    With an incumbent policy, ties keep the incumbent action, which makes
    policy iteration settle instead of flapping between equal-value actions.
    """
    best = qv.min(axis=2)
    near = qv <= best[:, :, None] + tol
    # argmax on a reversed view picks the largest tied index
    chosen = qv.shape[2] - 1 - np.argmax(near[:, :, ::-1], axis=2)
    if incumbent is not None:
        keep = np.take_along_axis(near, incumbent[:, :, None], axis=2)[:, :, 0]
        chosen = np.where(keep, incumbent, chosen)
    return chosen


def value_iteration(cfg: MdpConfig, kernel: Optional[TransitionKernel] = None,
                    tol: float = 1e-9, max_iter: int = 200_000) -> MdpSolution:
    kernel = kernel or build_transition(cfg)
    v = np.zeros((cfg.n_q, cfg.n_e))
    history: List[float] = []
    for it in range(1, max_iter + 1):
        qv = kernel.bellman(v, cfg.alpha)
        v_new = qv.min(axis=2)
        residual = float(np.abs(v_new - v).max())
        history.append(residual)
        v = v_new
        if residual < tol:
            return MdpSolution(_extract_policy(qv), v, math.nan, it, residual,
                               history)
    raise RuntimeError(
        f"value iteration did not reach tol={tol} in {max_iter} sweeps "
        f"(residual {history[-1]:.3e})")


def _evaluate_policy(cfg: MdpConfig, kernel: TransitionKernel,
                     policy: np.ndarray) -> np.ndarray:
    """Exact discounted value of a stationary policy via a sparse solve."""
    n = cfg.n_q * cfg.n_e
    p = kernel.policy_matrix(policy)
    a = identity(n, format="csr") - cfg.alpha * p
    v = spsolve(a.tocsc(), kernel.policy_stage_cost(policy).ravel())
    return v.reshape(cfg.n_q, cfg.n_e)


def policy_iteration(cfg: MdpConfig, kernel: Optional[TransitionKernel] = None,
                     initial_policy: Optional[np.ndarray] = None,
                     max_iter: int = 500, tie_tol: float = 1e-9) -> MdpSolution:
    kernel = kernel or build_transition(cfg)
    if initial_policy is None:
        policy = np.zeros((cfg.n_q, cfg.n_e), dtype=int)  # transmit nothing
    else:
        policy = np.asarray(initial_policy, dtype=int).copy()
    for it in range(1, max_iter + 1):
        v = _evaluate_policy(cfg, kernel, policy)
        qv = kernel.bellman(v, cfg.alpha)
        improved = _extract_policy(qv, tol=tie_tol, incumbent=policy)
        residual = float(np.abs(qv.min(axis=2) - v).max())
        if np.array_equal(improved, policy):
            return MdpSolution(policy, v, math.nan, it, residual)
        policy = improved
    raise RuntimeError(f"policy iteration did not settle in {max_iter} rounds")


def relative_value_iteration(cfg: MdpConfig,
                             kernel: Optional[TransitionKernel] = None,
                             tol: float = 1e-8, max_iter: int = 500_000,
                             ref_state: Tuple[int, int] = (0, 0),
                             ) -> MdpSolution:
    """Average cost and bias by RVI with a reference state.

    Stops when the span of the Bellman increment contracts below tol; a
    cap hit suggests the chain may have multiple ergodic sets under some
    policy (possible for these dynamics; see build_transition callers).
    """
    kernel = kernel or build_transition(cfg)
    h = np.zeros((cfg.n_q, cfg.n_e))
    history: List[float] = []
    for it in range(1, max_iter + 1):
        qv = kernel.bellman(h, 1.0)
        w = qv.min(axis=2)
        delta = w - h
        span = float(delta.max() - delta.min())
        history.append(span)
        if span < tol:
            avg = 0.5 * (delta.max() + delta.min())
            bias = w - w[ref_state]
            return MdpSolution(_extract_policy(qv), bias, float(avg), it,
                               span, history)
        h = w - w[ref_state]
    raise RuntimeError(
        f"relative value iteration span stuck at {history[-1]:.3e} after "
        f"{max_iter} sweeps; the chain may be multichain or periodic")


def greedy_policy_table(cfg: MdpConfig,
                        kernel: Optional[TransitionKernel] = None) -> np.ndarray:
    """Quantized greedy policy: min(stored energy, energy to drain the queue),
    round-half-up onto the action grid, clamped by the battery."""
    kernel = kernel or build_transition(cfg)
    acts = kernel.actions
    policy = np.zeros((cfg.n_q, cfg.n_e), dtype=int)
    for iq in range(cfg.n_q):
        want = cfg.rf.energy(iq * cfg.q_step)
        for ie in range(cfg.n_e):
            target = min(ie * cfg.e_step, want)
            ia = _grid_index(target, cfg.e_step)
            ia = min(ia, ie)
            # largest admissible action position at or below ia
            pos = int(np.searchsorted(acts, ia, side="right")) - 1
            policy[iq, ie] = max(pos, 0)
    return policy


def action_regret(cfg: MdpConfig, kernel: TransitionKernel,
                  policy: np.ndarray, v_opt: np.ndarray) -> np.ndarray:
    """Per-state Q(s, policy action) - min_a Q(s, a) at the optimal value.

    Zero regret everywhere means the policy attains the optimum at every
    state, which is robust to exact ties between actions.
    """
    qv = kernel.bellman(v_opt, cfg.alpha)
    chosen = np.take_along_axis(qv, policy[:, :, None], axis=2)[:, :, 0]
    return chosen - qv.min(axis=2)


def verify_greedy_optimal(cfg: MdpConfig,
                          kernel: Optional[TransitionKernel] = None,
                          tol: float = 1e-8) -> Tuple[bool, float]:
    """Max value gap of the quantized greedy policy vs the optimal policy."""
    kernel = kernel or build_transition(cfg)
    opt = policy_iteration(cfg, kernel)
    greedy = greedy_policy_table(cfg, kernel)
    v_greedy = _evaluate_policy(cfg, kernel, greedy)
    gap = float(np.abs(v_greedy - opt.value).max())
    return gap <= tol, gap


# -- policy export / table policies -------------------------------------------


class TablePolicy:
    """Lookup policy from an exported (q, E) -> transmit-energy table.

    States are mapped to the nearest grid point (round-half-up) and the
    returned energy is clamped to the battery, so the table is safe to use
    on off-grid states too.
    """

    kind = "table"

    def __init__(self, actions_energy: np.ndarray, q_step: float,
                 e_step: float):
        self.actions_energy = np.asarray(actions_energy, dtype=float)
        self.q_step = q_step
        self.e_step = e_step

    def decision_fn(self, rf: RateFunction):
        table = self.actions_energy
        nq, ne = table.shape
        q_step, e_step = self.q_step, self.e_step
        def look(q, E, h, y):
            iq = int(math.floor(q / q_step + 0.5))
            ie = int(math.floor(E / e_step + 0.5))
            t = table[iq if iq < nq else nq - 1, ie if ie < ne else ne - 1]
            return t if t <= E else E
        return look


def export_policy_csv(path, solution: MdpSolution, cfg: MdpConfig,
                      kernel: TransitionKernel) -> None:
    energy = solution.action_energy(kernel)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["q", "E", "action"])
        for iq in range(cfg.n_q):
            for ie in range(cfg.n_e):
                writer.writerow([iq * cfg.q_step, ie * cfg.e_step,
                                 energy[iq, ie]])


def load_policy_csv(path) -> TablePolicy:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [(float(r["q"]), float(r["E"]), float(r["action"]))
                for r in reader]
    qs = sorted({q for q, _, _ in rows})
    es = sorted({e for _, e, _ in rows})
    q_step = qs[1] - qs[0] if len(qs) > 1 else 1.0
    e_step = es[1] - es[0] if len(es) > 1 else 1.0
    table = np.zeros((len(qs), len(es)))
    for q, e, a in rows:
        table[_grid_index(q, q_step), _grid_index(e, e_step)] = a
    return TablePolicy(table, q_step, e_step)
