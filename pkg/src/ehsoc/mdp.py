"""Finite average-reward MDP assembly for the harvesting transmitter.

The system state is the pair (battery level e, channel gain h); an
action is (transmit energy rho <= e, bypass fraction iota).  Because
arrivals and gains are i.i.d. and the gain never enters the battery
update, the transition kernel factorizes: next-level rows are indexed
by (e, rho, iota) only and the next gain is always drawn from the
channel pmf.  Rewards likewise depend on (rho, iota, h) only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .battery import (LossModel, SlotIntegrator, _round_half_away,
                      check_quantization, make_default_integrator,
                      next_energy_table, next_energy_table_split)
from .stochastics import ArrivalModel, ChannelModel, RewardModel, reward_table


class MdpBuildError(ValueError):
    """MDP construction failed a validity check."""


@dataclass(frozen=True)
class ActionGrid:
    """Discretization of the bypass fraction iota.

    ``iota_steps >= 2`` yields the uniform grid {0, 1/(n-1), ..., 1},
    which always contains both endpoints; ``iota_steps = 1`` yields the
    degenerate grid {0} used for battery-only policy searches.
    """

    iota_steps: int = 11

    def __post_init__(self):
        if self.iota_steps < 1:
            raise MdpBuildError(f"iota_steps must be >= 1, got {self.iota_steps}")

    @property
    def iotas(self) -> np.ndarray:
        if self.iota_steps == 1:
            return np.array([0.0])
        return np.linspace(0.0, 1.0, self.iota_steps)


@dataclass
class EhMdp:
    """Finite MDP with factorized transitions and rewards.

    ``trans`` holds one probability row over next levels per flat
    action index; flat indices enumerate (e asc, rho asc, iota asc)
    with ``row_offset[e] + rho * n_iota + iota_idx``.  ``nxt`` is the
    deterministic next level per (flat action, arrival) pair, from
    which ``trans`` is the arrival-pmf mixture.
    """

    e_max: int
    h_max: int
    iotas: np.ndarray
    row_offset: np.ndarray          # (e_max+1,) first flat row of each level
    trans: np.ndarray               # (n_rows, e_max+1)
    nxt: np.ndarray                 # (n_rows, b_max+1) int16
    rewards: np.ndarray             # (e_max+1, n_iota, h_max+1)
    arrivals: ArrivalModel
    channel: ChannelModel
    reward_model: RewardModel
    loss_model: LossModel
    integrator: SlotIntegrator
    lossless: bool = False

    @property
    def n_iota(self) -> int:
        return len(self.iotas)

    @property
    def n_rows(self) -> int:
        return self.trans.shape[0]

    @property
    def n_states(self) -> int:
        return (self.e_max + 1) * (self.h_max + 1)

    def row_index(self, e: int, rho: int, iota_idx: int) -> int:
        if not 0 <= rho <= e <= self.e_max:
            raise MdpBuildError(f"infeasible action rho={rho} at e={e}")
        if not 0 <= iota_idx < self.n_iota:
            raise MdpBuildError(f"iota index {iota_idx} out of range")
        return int(self.row_offset[e]) + rho * self.n_iota + iota_idx

    def transition_row(self, e: int, rho: int, iota_idx: int) -> np.ndarray:
        return self.trans[self.row_index(e, rho, iota_idx)]

    def action_count(self, e: int) -> int:
        return (e + 1) * self.n_iota


def _flat_layout(e_max: int, n_iota: int):
    counts = (np.arange(e_max + 1) + 1) * n_iota
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return offsets, int(counts.sum())


def _net_power_grid(e_max: int, iotas: np.ndarray, b_max: int):
    """Unique net stored powers over (rho, iota, b) with inverse indices."""
    b = np.arange(b_max + 1, dtype=float)
    rho = np.arange(e_max + 1, dtype=float)
    xs = (1.0 - iotas)[None, :, None] * b[None, None, :] - rho[:, None, None]
    uniq, inv = np.unique(xs, return_inverse=True)
    return uniq, inv.reshape(xs.shape)


def _rows_to_probs(nxt: np.ndarray, pmf: np.ndarray, e_max: int) -> np.ndarray:
    n_rows, n_b = nxt.shape
    width = e_max + 1
    idx = (np.arange(n_rows, dtype=np.int64)[:, None] * width
           + nxt.astype(np.int64)).ravel()
    weights = np.broadcast_to(pmf, (n_rows, n_b)).ravel()
    flat = np.bincount(idx, weights=weights, minlength=n_rows * width)
    return flat.reshape(n_rows, width)


def _assemble(e_max, h_max, iotas, nxt_by_rib, arrivals, channel,
              reward_model, loss_model, integ, lossless):
    n_iota = len(iotas)
    offsets, n_rows = _flat_layout(e_max, n_iota)
    blocks = [nxt_by_rib(e) for e in range(e_max + 1)]
    nxt = np.concatenate(blocks, axis=0)
    assert nxt.shape[0] == n_rows
    trans = _rows_to_probs(nxt, arrivals.pmf, e_max)
    rewards = reward_table(e_max, iotas, h_max, arrivals, reward_model)
    return EhMdp(e_max=e_max, h_max=h_max, iotas=np.asarray(iotas, float),
                 row_offset=offsets, trans=trans, nxt=nxt, rewards=rewards,
                 arrivals=arrivals, channel=channel, reward_model=reward_model,
                 loss_model=loss_model, integrator=integ, lossless=lossless)


def build_mdp(loss_model: LossModel, arrivals: ArrivalModel,
              channel: ChannelModel, reward_model: RewardModel,
              grid: ActionGrid | None = None,
              integ: SlotIntegrator | None = None) -> EhMdp:
    """Assemble the lossy-battery MDP.

    Fails fast if the quantum is too coarse for the battery to charge
    (the chain could otherwise never climb out of a level).
    """
    grid = grid or ActionGrid()
    integ = integ or make_default_integrator(loss_model)
    report = check_quantization(loss_model, integ, arrivals.b_max)
    if not report.passed:
        raise MdpBuildError(f"quantization check failed: {report.message}")
    e_max = loss_model.e_max_quanta
    iotas = grid.iotas
    n_b = arrivals.b_max + 1

    if integ.drain_mode == "split":
        b = np.arange(n_b, dtype=float)
        stored = (1.0 - iotas)[:, None] * b[None, :]
        ws, w_inv = np.unique(stored, return_inverse=True)
        w_inv = w_inv.reshape(stored.shape)     # (n_iota, b_max+1)
        table = next_energy_table_split(loss_model, integ, ws)

        def rows_for(e):
            block = table[e][w_inv][:, :, : e + 1]   # (n_iota, b, rho)
            return np.ascontiguousarray(
                block.transpose(2, 0, 1)).reshape(-1, n_b)
    else:
        xs, inv = _net_power_grid(e_max, iotas, arrivals.b_max)
        table = next_energy_table(loss_model, integ, xs)

        def rows_for(e):
            block = table[e][inv[: e + 1]]      # (e+1, n_iota, b_max+1)
            return block.reshape(-1, n_b)

    return _assemble(e_max, channel.h_max, iotas, rows_for, arrivals,
                     channel, reward_model, loss_model, integ, lossless=False)


def build_ideal_mdp(loss_model: LossModel, arrivals: ArrivalModel,
                    channel: ChannelModel, reward_model: RewardModel,
                    grid: ActionGrid | None = None,
                    integ: SlotIntegrator | None = None) -> EhMdp:
    """Same MDP with a lossless battery update.

    The next level is ``min(e - rho + round((1-iota)*b), e_max)``;
    rewards are unchanged.  Shares the quantization precondition with
    the lossy build so the two are always comparable.
    """
    grid = grid or ActionGrid()
    integ = integ or make_default_integrator(loss_model)
    report = check_quantization(loss_model, integ, arrivals.b_max)
    if not report.passed:
        raise MdpBuildError(f"quantization check failed: {report.message}")
    e_max = loss_model.e_max_quanta
    iotas = grid.iotas
    b = np.arange(arrivals.b_max + 1, dtype=float)
    stored = _round_half_away((1.0 - iotas)[:, None] * b[None, :])

    def rows_for(e):
        rho = np.arange(e + 1)
        nxt = e - rho[:, None, None] + stored[None, :, :]
        return np.minimum(nxt, e_max).astype(np.int16).reshape(
            -1, arrivals.b_max + 1)

    return _assemble(e_max, channel.h_max, iotas, rows_for, arrivals,
                     channel, reward_model, loss_model, integ, lossless=True)


def dump_transitions_csv(mdp: EhMdp, path) -> None:
    """Debug dump of all nonzero transition entries."""
    with open(path, "w") as fh:
        fh.write("e,rho,iota_index,e_prime,prob\n")
        for e in range(mdp.e_max + 1):
            for rho in range(e + 1):
                for i in range(mdp.n_iota):
                    row = mdp.trans[mdp.row_index(e, rho, i)]
                    for ep in np.nonzero(row)[0]:
                        fh.write(f"{e},{rho},{i},{ep},{row[ep]:.9g}\n")
