"""Arrival and channel distributions plus the slot reward function.

Energy arrivals follow a truncated geometric law on {0, ..., b_max};
the channel gain is an exponential (Rayleigh-fading power) variable
discretized into unit bins whose index doubles as the gain value.  The
reward of a transmission is the log-rate ``g(rho, h) = ln(1 + L*h*rho)``
with SNR scale ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

PMF_TOL = 1e-12
MEAN_TOL = 1e-9


class DistributionError(ValueError):
    """Invalid probability model parameters."""


def _check_pmf(pmf: np.ndarray, what: str) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or pmf.size < 1:
        raise DistributionError(f"{what} pmf must be a 1-d vector")
    if np.any(pmf < 0.0):
        raise DistributionError(f"{what} pmf has negative entries")
    if abs(pmf.sum() - 1.0) > PMF_TOL:
        raise DistributionError(f"{what} pmf sums to {pmf.sum():.17g}, not 1")
    return pmf


@dataclass(frozen=True)
class ArrivalModel:
    """Per-slot harvested energy B on {0, ..., b_max}, in quanta."""

    pmf: np.ndarray
    b_max: int
    mean: float
    geometric_ratio: Optional[float] = None

    def __post_init__(self):
        pmf = _check_pmf(self.pmf, "arrival")
        if pmf.size != self.b_max + 1:
            raise DistributionError(
                f"arrival pmf length {pmf.size} != b_max+1 = {self.b_max + 1}")
        got = float(np.arange(self.b_max + 1) @ pmf)
        if abs(got - self.mean) > MEAN_TOL:
            raise DistributionError(
                f"arrival pmf mean {got:.12g} != declared mean {self.mean:.12g}")
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def from_pmf(cls, pmf) -> "ArrivalModel":
        pmf = np.asarray(pmf, dtype=float)
        mean = float(np.arange(pmf.size) @ pmf)
        return cls(pmf=pmf, b_max=pmf.size - 1, mean=mean)


@dataclass(frozen=True)
class ChannelModel:
    """Discrete channel gain H on {0, ..., h_max}; the index is the gain."""

    pmf: np.ndarray
    h_max: int
    mean_gain: float

    def __post_init__(self):
        pmf = _check_pmf(self.pmf, "channel")
        if pmf.size != self.h_max + 1:
            raise DistributionError(
                f"channel pmf length {pmf.size} != h_max+1 = {self.h_max + 1}")
        if pmf[0] <= 0.0:
            raise DistributionError("channel pmf must have p(0) > 0")
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def from_pmf(cls, pmf) -> "ChannelModel":
        pmf = np.asarray(pmf, dtype=float)
        mean = float(np.arange(pmf.size) @ pmf)
        return cls(pmf=pmf, h_max=pmf.size - 1, mean_gain=mean)


@dataclass(frozen=True)
class RewardModel:
    """Concave log-rate reward of the transmitted energy."""

    lambda_snr: float
    form: str = "log"

    def __post_init__(self):
        if not (math.isfinite(self.lambda_snr) and self.lambda_snr >= 0.0):
            raise DistributionError(
                f"lambda_snr must be finite and >= 0, got {self.lambda_snr}")
        if self.form != "log":
            raise DistributionError(f"unknown reward form {self.form!r}")

    def reward(self, sent, h):
        """g(sent, h) = ln(1 + lambda * h * sent); vectorized."""
        return np.log1p(self.lambda_snr * np.asarray(h, float)
                        * np.asarray(sent, float))


def _trunc_geom_pmf(q: float, b_max: int) -> np.ndarray:
    # Stable for any q > 0: weights q^b computed in log space.
    b = np.arange(b_max + 1, dtype=float)
    logw = b * math.log(q)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def truncated_geometric(mean: float, b_max: int) -> ArrivalModel:
    """Truncated geometric arrivals with the exact requested mean.

    The ratio q of pmf(b) ~ q^b is solved by root bracketing; q = 1 is
    the uniform limit (mean b_max/2) and q > 1 tilts mass upward.
    """
    if not (0.0 < mean < b_max):
        raise DistributionError(
            f"mean must lie strictly inside (0, b_max={b_max}), got {mean}")
    grid = np.arange(b_max + 1, dtype=float)

    def gap(q):
        return float(grid @ _trunc_geom_pmf(q, b_max)) - mean

    lo = 1e-12
    hi = 2.0
    while gap(hi) < 0.0:
        hi *= 2.0
        if hi > 1e15:
            raise DistributionError(f"cannot bracket mean {mean}")
    q = brentq(gap, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=500)
    pmf = _trunc_geom_pmf(q, b_max)
    got = float(grid @ pmf)
    if abs(got - mean) > MEAN_TOL:
        raise DistributionError(
            f"ratio solve left mean at {got:.12g}, target {mean:.12g}")
    return ArrivalModel(pmf=pmf, b_max=b_max, mean=got, geometric_ratio=q)


def discretized_exponential(mean_gain: float, h_max: int) -> ChannelModel:
    """Exponential gain binned into unit intervals centred on integers.

    Bin 0 collects [0, 1/2], interior bins are (h-1/2, h+1/2], and the
    last bin aggregates the tail above h_max - 1/2.
    """
    if not (math.isfinite(mean_gain) and mean_gain > 0.0):
        raise DistributionError(f"mean_gain must be > 0, got {mean_gain}")
    if h_max < 1:
        raise DistributionError(f"h_max must be >= 1, got {h_max}")
    sf = lambda t: math.exp(-t / mean_gain)
    pmf = np.empty(h_max + 1)
    pmf[0] = 1.0 - sf(0.5)
    for h in range(1, h_max):
        pmf[h] = sf(h - 0.5) - sf(h + 0.5)
    pmf[h_max] = sf(h_max - 0.5)
    return ChannelModel(pmf=pmf, h_max=h_max, mean_gain=mean_gain)


def expected_reward(rho: float, iota: float, h: int,
                    arrivals: ArrivalModel, reward: RewardModel) -> float:
    """Arrival-averaged slot reward for action (rho, iota) at gain h.

    The realized reward depends on the unknown arrival only through the
    bypass term, so the expectation is a plain sum over the arrival pmf.
    """
    if rho < 0.0:
        raise DistributionError(f"rho must be >= 0, got {rho}")
    if not (0.0 <= iota <= 1.0):
        raise DistributionError(f"iota must lie in [0, 1], got {iota}")
    b = np.arange(arrivals.b_max + 1, dtype=float)
    return float(arrivals.pmf @ reward.reward(rho + b * iota, h))


def reward_table(e_max: int, iotas: np.ndarray, h_max: int,
                 arrivals: ArrivalModel, reward: RewardModel) -> np.ndarray:
    """Expected-reward tensor over (rho, iota index, h)."""
    b = np.arange(arrivals.b_max + 1, dtype=float)
    rho = np.arange(e_max + 1, dtype=float)
    out = np.empty((e_max + 1, len(iotas), h_max + 1))
    for i, iota in enumerate(iotas):
        sent = rho[:, None] + b[None, :] * iota
        for h in range(h_max + 1):
            out[:, i, h] = reward.reward(sent, h) @ arrivals.pmf
    return out


def greedy_gain(arrivals: ArrivalModel, channel: ChannelModel,
                reward: RewardModel) -> float:
    """Long-run average reward of always bypassing the battery.

    The battery level never moves, so the gain is the double sum of
    ``g(b, h)`` over both pmfs regardless of the battery model.
    """
    return float(sum(
        channel.pmf[h] * expected_reward(0.0, 1.0, h, arrivals, reward)
        for h in range(channel.h_max + 1)))
