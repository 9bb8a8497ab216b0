"""Average-reward solvers: relative value iteration and brute force.

Relative value iteration (RVI) with an aperiodicity damping step is
the production solver; exhaustive policy enumeration is the ground
truth for instances small enough to enumerate.  Both return the same
``SolveResult`` shape so they can be cross-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import EhMdp

EXHAUSTIVE_GUARD = 10_000_000


class SolverError(RuntimeError):
    """Solver precondition violated."""


class NonConvergenceError(SolverError):
    """Iteration budget exhausted before the span tolerance was met."""

    def __init__(self, iterations: int, span: float, tol: float):
        super().__init__(
            f"no convergence after {iterations} iterations; "
            f"span {span:.3e} > tol {tol:.3e}")
        self.iterations = iterations
        self.span = span


@dataclass(frozen=True)
class Policy:
    """Deterministic action table (e, h) -> (rho, iota).

    Stored as integer arrays over the state grid: ``rho[e, h]`` is the
    transmit energy and ``iota_idx[e, h]`` indexes into ``iotas``.
    """

    rho: np.ndarray
    iota_idx: np.ndarray
    iotas: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.int64)
        idx = np.asarray(self.iota_idx, dtype=np.int64)
        if rho.shape != idx.shape or rho.ndim != 2:
            raise ValueError("rho and iota_idx must share a 2-d state shape")
        levels = np.arange(rho.shape[0])[:, None]
        if np.any(rho < 0) or np.any(rho > levels):
            raise ValueError("energy causality violated: need 0 <= rho <= e")
        if np.any(idx < 0) or np.any(idx >= len(self.iotas)):
            raise ValueError("iota index out of grid range")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "iota_idx", idx)

    @property
    def e_max(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def h_max(self) -> int:
        return self.rho.shape[1] - 1

    def action(self, e: int, h: int) -> tuple[int, float]:
        return int(self.rho[e, h]), float(self.iotas[self.iota_idx[e, h]])

    def iota_values(self) -> np.ndarray:
        return self.iotas[self.iota_idx]


@dataclass(frozen=True)
class SolveResult:
    """Optimal gain with its differential values and greedy policy."""

    gain: float
    bias: Optional[np.ndarray]
    policy: Policy
    iterations: int
    span: float


def _scatter_indices(mdp: EhMdp) -> np.ndarray:
    """Flat positions of each action row inside the padded (e, rho, iota)
    score cube, in flat-row order."""
    n_i = mdp.n_iota
    width = mdp.e_max + 1
    parts = []
    for e in range(mdp.e_max + 1):
        rho = np.arange(e + 1)
        base = (e * width + rho)[:, None] * n_i + np.arange(n_i)[None, :]
        parts.append(base.ravel())
    return np.concatenate(parts)


def _greedy(mdp: EhMdp, cube: np.ndarray) -> Policy:
    """Extract the greedy policy from the padded score cube.

    Action indices flatten as rho * n_iota + iota, so argmax ties break
    toward the smallest rho, then the smallest iota.
    """
    E, H1 = mdp.e_max + 1, mdp.h_max + 1
    n_i = mdp.n_iota
    rho = np.empty((E, H1), dtype=np.int64)
    idx = np.empty((E, H1), dtype=np.int64)
    for h in range(H1):
        scores = cube + mdp.rewards[None, :, :, h]
        flat = scores.reshape(E, -1).argmax(axis=1)
        rho[:, h] = flat // n_i
        idx[:, h] = flat % n_i
    return Policy(rho=rho, iota_idx=idx, iotas=mdp.iotas)


def solve_rvi(mdp: EhMdp, tol: float = 1e-9, max_iter: int = 100_000,
              damping: float = 0.5) -> SolveResult:
    """Relative value iteration for the optimal average reward.

    The value vector lives on (e, h); the Bellman backup averages the
    next value over levels via the transition rows and over gains via
    the channel pmf.  Values are pinned at the reference state
    (e_max, h=0) and each sweep applies the damping step
    ``v <- (1-k) v + k T v`` to guard against periodic chains.  Stops
    when span(v_new - v) < tol.
    """
    if mdp.channel.pmf[0] <= 0.0:
        raise SolverError("solver requires a channel with p(0) > 0")
    if not 0.0 < damping <= 1.0:
        raise SolverError(f"damping must lie in (0, 1], got {damping}")
    E, H1 = mdp.e_max + 1, mdp.h_max + 1
    p_h = mdp.channel.pmf
    scatter = _scatter_indices(mdp)
    cube = np.full((E, E, mdp.n_iota), -np.inf)
    flat_cube = cube.reshape(-1)
    v = np.zeros((E, H1))
    tv = np.empty_like(v)
    last_span = math.inf
    for it in range(1, max_iter + 1):
        w = v @ p_h
        flat_cube[scatter] = mdp.trans @ w
        for h in range(H1):
            tv[:, h] = (cube + mdp.rewards[None, :, :, h]).max(axis=(1, 2))
        d = tv - v
        d_hi, d_lo = d.max(), d.min()
        v += damping * d
        v -= v[E - 1, 0]
        last_span = damping * (d_hi - d_lo)
        if last_span < tol:
            gain = 0.5 * (d_hi + d_lo)
            policy = _greedy(mdp, cube)
            return SolveResult(gain=float(gain), bias=v.copy(), policy=policy,
                               iterations=it, span=float(last_span))
    raise NonConvergenceError(max_iter, last_span, tol)


def _mixed_radix_digits(values: np.ndarray, base: int, width: int) -> np.ndarray:
    """Digits of ``values`` in base ``base``, most significant first."""
    digits = np.empty((values.size, width), dtype=np.int64)
    rest = values.copy()
    for pos in range(width - 1, -1, -1):
        digits[:, pos] = rest % base
        rest //= base
    return digits


def solve_exhaustive(mdp: EhMdp, guard: int = EXHAUSTIVE_GUARD,
                     chunk_size: int = 200_000) -> SolveResult:
    """Enumerate every deterministic policy and keep the best gain.

    Each policy is scored by the long-run average reward of the battery
    chain it induces, started from a full battery (the matrix power
    limit of the lazy chain).  Ties go to the lexicographically
    smallest action table; enumeration order is exactly that order, so
    the first maximizer wins.
    """
    E, H1 = mdp.e_max + 1, mdp.h_max + 1
    n_i = mdp.n_iota
    p_h = mdp.channel.pmf
    n_act = [(e + 1) * n_i for e in range(E)]
    combos = [n ** H1 for n in n_act]
    total = math.prod(combos)
    if total > guard:
        raise SolverError(
            f"{total} deterministic policies exceed the guard of {guard}")

    # Per-level lookup tables: every way to pick one action per gain
    # collapses to one mixed transition row and one expected reward.
    rows_e, j_e = [], []
    for e in range(E):
        lo = int(mdp.row_offset[e])
        R = mdp.trans[lo:lo + n_act[e]]                       # (n_a, E)
        r = mdp.rewards[: e + 1].reshape(n_act[e], H1)        # (n_a, H1)
        digits = _mixed_radix_digits(np.arange(combos[e]), n_act[e], H1)
        row = np.zeros((combos[e], E))
        j = np.zeros(combos[e])
        for h in range(H1):
            row += p_h[h] * R[digits[:, h]]
            j += p_h[h] * r[digits[:, h], h]
        rows_e.append(row)
        j_e.append(j)

    suffix = np.ones(E + 1, dtype=np.int64)
    for e in range(E - 1, -1, -1):
        suffix[e] = suffix[e + 1] * combos[e]

    eye = np.eye(E)
    best_gain, best_index = -np.inf, -1
    for start in range(0, total, chunk_size):
        n = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        combo = [(n // suffix[e + 1]) % combos[e] for e in range(E)]
        P = np.empty((n.size, E, E))
        j = np.empty((n.size, E))
        for e in range(E):
            P[:, e, :] = rows_e[e][combo[e]]
            j[:, e] = j_e[e][combo[e]]
        M = 0.5 * (eye[None] + P)
        for _ in range(35):
            M = M @ M
            M /= M.sum(axis=2, keepdims=True)
        gains = np.einsum("ne,ne->n", M[:, E - 1, :], j)
        local = int(np.argmax(gains))
        if gains[local] > best_gain:
            best_gain = float(gains[local])
            best_index = start + local

    combo_best = [(best_index // int(suffix[e + 1])) % combos[e]
                  for e in range(E)]
    rho = np.empty((E, H1), dtype=np.int64)
    idx = np.empty((E, H1), dtype=np.int64)
    for e in range(E):
        digits = _mixed_radix_digits(np.array([combo_best[e]]), n_act[e], H1)[0]
        rho[e] = digits // n_i
        idx[e] = digits % n_i
    policy = Policy(rho=rho, iota_idx=idx, iotas=mdp.iotas)
    return SolveResult(gain=best_gain, bias=None, policy=policy,
                       iterations=total, span=0.0)


def export_policy_csv(policy: Policy, path) -> None:
    """Write the action table as CSV with iota fixed to 6 decimals."""
    with open(path, "w") as fh:
        fh.write("e,h,rho,iota\n")
        for e in range(policy.e_max + 1):
            for h in range(policy.h_max + 1):
                rho, iota = policy.action(e, h)
                fh.write(f"{e},{h},{rho},{iota:.6f}\n")
