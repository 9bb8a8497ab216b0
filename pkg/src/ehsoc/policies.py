"""Policy zoo, exact evaluation, and Monte Carlo simulation.

The three named policies are OP (the solver's optimum on the lossy
battery), OP-IDEAL (the optimum of the lossless battery, applied to
whichever battery it is evaluated on) and GP (always bypass the
battery).  ``evaluate`` computes the induced battery chain's limit
distribution and the exact long-run average reward; ``simulate`` is
the stochastic cross-check of both.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import EhMdp
from .solver import Policy, SolveResult, solve_rvi


class EvaluationError(RuntimeError):
    """Exact policy evaluation failed to converge."""


@dataclass(frozen=True)
class EvalResult:
    """Stationary battery distribution and per-level expected rewards."""

    pi: np.ndarray
    j: np.ndarray
    g_mu: float


@dataclass(frozen=True)
class SimTrace:
    """Monte Carlo rollout summary with per-slot arrays for export."""

    slots: int
    empirical_reward: float
    occupancy: np.ndarray
    rng_seed: int
    e: np.ndarray
    h: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    iota: np.ndarray
    reward: np.ndarray


def greedy_policy(mdp: EhMdp) -> Policy:
    """GP: bypass everything (rho = 0, iota = 1) in every state."""
    ones = np.flatnonzero(np.isclose(mdp.iotas, 1.0))
    if ones.size == 0:
        raise ValueError("greedy policy needs 1.0 on the iota grid")
    shape = (mdp.e_max + 1, mdp.h_max + 1)
    return Policy(rho=np.zeros(shape, dtype=np.int64),
                  iota_idx=np.full(shape, ones[0], dtype=np.int64),
                  iotas=mdp.iotas)


def op_ideal_policy(real_mdp: EhMdp, ideal_mdp: EhMdp,
                    tol: float = 1e-9, max_iter: int = 100_000) -> Policy:
    """Optimum of the lossless battery, reusable on the lossy one.

    Feasibility only depends on rho <= e, so the action table carries
    over verbatim; the two MDPs must share state and action grids.
    """
    if real_mdp.e_max != ideal_mdp.e_max or real_mdp.h_max != ideal_mdp.h_max:
        raise ValueError("real and ideal MDPs must share the state space")
    if not np.array_equal(real_mdp.iotas, ideal_mdp.iotas):
        raise ValueError("real and ideal MDPs must share the iota grid")
    return solve_rvi(ideal_mdp, tol=tol, max_iter=max_iter).policy


def stationary_from_start(P: np.ndarray, start: int, tol: float = 1e-12,
                          max_squarings: int = 60) -> tuple[np.ndarray, float]:
    """Limit distribution of the chain started at ``start``.

    Power iteration accelerated by repeated squaring of the lazy chain
    (I + P)/2; the lazy step removes periodicity without changing
    stationary distributions, and squaring reaches step counts far
    beyond any mixing time.  Picks out exactly the recurrent behavior
    reachable from the start state.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    M = 0.5 * (np.eye(n) + P)
    prev = M[start].copy()
    residual = np.inf
    for k in range(max_squarings):
        M = M @ M
        M /= M.sum(axis=1, keepdims=True)
        row = M[start]
        residual = 0.5 * float(np.abs(row - prev).sum())
        if residual < tol and k >= 2:
            pi = np.clip(row, 0.0, None)
            return pi / pi.sum(), residual
        prev = row.copy()
    raise EvaluationError(
        f"stationary distribution did not converge: TV residual {residual:.3e}")


def _policy_rows(mdp: EhMdp, policy: Policy) -> np.ndarray:
    n_i = mdp.n_iota
    return (mdp.row_offset[:, None] + policy.rho * n_i + policy.iota_idx)


def battery_chain(mdp: EhMdp, policy: Policy) -> np.ndarray:
    """Battery-level kernel P(e'|e) with the gain averaged out."""
    rows = _policy_rows(mdp, policy)
    return np.einsum("h,ehf->ef", mdp.channel.pmf, mdp.trans[rows])


def evaluate(mdp: EhMdp, policy: Policy,
             start_e: int | None = None) -> EvalResult:
    """Exact long-run average reward of a policy.

    Builds the battery-level chain, takes its limit distribution from
    ``start_e`` (default: full battery) and pairs it with the per-level
    expected rewards.
    """
    if policy.e_max != mdp.e_max or policy.h_max != mdp.h_max:
        raise ValueError("policy shape does not match the MDP state space")
    if start_e is None:
        start_e = mdp.e_max
    P = battery_chain(mdp, policy)
    hs = np.arange(mdp.h_max + 1)
    per_state = mdp.rewards[policy.rho, policy.iota_idx, hs[None, :]]
    j = per_state @ mdp.channel.pmf
    pi, _ = stationary_from_start(P, start_e)
    return EvalResult(pi=pi, j=j, g_mu=float(pi @ j))


def evaluate_with_restart_check(
        mdp: EhMdp, policy: Policy,
        tv_warn: float = 1e-6) -> tuple[EvalResult, EvalResult, bool]:
    """Evaluate from a full and from an empty battery.

    A large gap between the two limit distributions means the policy
    trapped the chain in a second recurrent set of low levels (the
    low-charge loop); the full-battery start stays the headline number.
    """
    main = evaluate(mdp, policy, start_e=mdp.e_max)
    alt = evaluate(mdp, policy, start_e=0)
    tv = 0.5 * float(np.abs(main.pi - alt.pi).sum())
    looped = tv > tv_warn
    if looped:
        warnings.warn(
            f"policy traps the battery chain: start-dependent limits "
            f"(TV distance {tv:.3g}); reporting the full-battery start",
            RuntimeWarning, stacklevel=2)
    return main, alt, looped


def simulate(mdp: EhMdp, policy: Policy, slots: int, seed: int,
             start_e: int | None = None) -> SimTrace:
    """Roll the closed-loop system forward for ``slots`` slots.

    Gains and arrivals are sampled i.i.d. from their pmfs, the battery
    steps through the same quantized update that built the MDP, and the
    realized (not expected) reward is accumulated.  Reproducible for a
    fixed seed.
    """
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    if start_e is None:
        start_e = mdp.e_max
    rng = np.random.default_rng(seed)
    H = rng.choice(mdp.h_max + 1, size=slots, p=mdp.channel.pmf)
    B = rng.choice(mdp.arrivals.b_max + 1, size=slots, p=mdp.arrivals.pmf)

    rows = _policy_rows(mdp, policy)
    nxt = mdp.nxt[rows]                        # (E, H1, b_max+1)
    step = nxt.tolist()
    h_list, b_list = H.tolist(), B.tolist()
    path = np.empty(slots, dtype=np.int64)
    e = int(start_e)
    for k in range(slots):
        path[k] = e
        e = step[e][h_list[k]][b_list[k]]

    iota = policy.iotas[policy.iota_idx[path, H]]
    rho = policy.rho[path, H]
    rewards = mdp.reward_model.reward(rho + B * iota, H)
    occupancy = np.bincount(path, minlength=mdp.e_max + 1) / slots
    return SimTrace(slots=slots, empirical_reward=float(rewards.mean()),
                    occupancy=occupancy, rng_seed=seed,
                    e=path, h=H, b=B, rho=rho, iota=iota, reward=rewards)


def export_eval_csv(result: EvalResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("e,pi,j\n")
        for e, (p, j) in enumerate(zip(result.pi, result.j)):
            fh.write(f"{e},{p:.9g},{j:.9g}\n")


def export_trace_csv(trace: SimTrace, path, stride: int = 1) -> None:
    """Per-slot CSV of the rollout, optionally decimated."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    with open(path, "w") as fh:
        fh.write("slot,e,h,rho,iota,reward\n")
        for k in range(0, trace.slots, stride):
            fh.write(f"{k},{trace.e[k]},{trace.h[k]},{trace.rho[k]},"
                     f"{trace.iota[k]:.6f},{trace.reward[k]:.9g}\n")
