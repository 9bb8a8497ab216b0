"""SOC-dependent storage losses and intra-slot battery dynamics.

All battery quantities are expressed in energy quanta: a battery of
capacity ``e_max`` holds integer levels ``{0, ..., e_max}`` and net
stored power is measured in quanta per slot.  The quanta <-> Joule
conversion is a pure unit choice and never enters the dynamics.

Within a slot the continuous charge level obeys ``dy/dt = x * s(y)``,
where ``x`` is the net stored power and ``s`` the storage efficiency
curve.  For the default quadratic curve this ODE has a closed-form
tanh solution (obtained by separation of variables), which is the
default integrator; a fixed-step RK4 integrator is kept alongside as
an independent route and for user-supplied curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]
LossCurve = Callable[[np.ndarray], np.ndarray]

_METHODS = ("closed-form-tanh", "rk4")
_DRAIN_MODES = ("split", "literal", "linear")


class BatteryDomainError(ValueError):
    """Input outside the battery model's physical domain."""


@dataclass(frozen=True)
class LossModel:
    """Storage efficiency curve with its capacity.

    The default quadratic form is

        s(y) = 1 - (y - e_max/2)^2 / (beta_nl * (e_max/2)^2)

    which equals 1 at half charge and ``1 - 1/beta_nl`` at both a full
    and an empty battery.  ``beta_nl`` is a dimensionless technology
    parameter, strictly greater than one; very large values approach an
    ideal (lossless) battery.  ``form`` may be a callable ``s(y)`` for
    other curves.
    """

    beta_nl: float
    e_max_quanta: int
    form: Union[str, LossCurve] = "quadratic"

    def __post_init__(self):
        if not (math.isfinite(self.beta_nl) and self.beta_nl > 1.0):
            raise BatteryDomainError(
                f"beta_nl must be finite and > 1, got {self.beta_nl}")
        if self.e_max_quanta < 1:
            raise BatteryDomainError(
                f"e_max_quanta must be >= 1, got {self.e_max_quanta}")
        if isinstance(self.form, str) and self.form != "quadratic":
            raise BatteryDomainError(f"unknown loss form {self.form!r}")

    @property
    def is_quadratic(self) -> bool:
        return not callable(self.form)


@dataclass(frozen=True)
class SlotIntegrator:
    """How the one-slot charge ODE is integrated.

    ``drain_mode`` fixes which flows the loss curve attenuates:

    * "split" (default): incoming power is stored at rate s(y) while
      transmit energy leaves at full rate, concurrently
      (dy/dt = w*s(y) - p).  Only losses on *stored* energy.
    * "literal": the net power w - p is pushed through the curve with
      its sign (dy/dt = (w - p)*s(y)); a net drain is attenuated too.
    * "linear": like "literal" for a net charge, but a net drain
      bypasses the curve (y0 + x).

    For a pure charge or a pure drain all three modes coincide except
    that "literal" attenuates the drain.
    """

    method: str = "closed-form-tanh"
    step_count: int = 16
    slot_length: float = 1.0
    drain_mode: str = "split"

    def __post_init__(self):
        if self.method not in _METHODS:
            raise BatteryDomainError(f"unknown integrator method {self.method!r}")
        if self.step_count < 1:
            raise BatteryDomainError(f"step_count must be >= 1, got {self.step_count}")
        if not (math.isfinite(self.slot_length) and self.slot_length > 0):
            raise BatteryDomainError(f"slot_length must be > 0, got {self.slot_length}")
        if self.drain_mode not in _DRAIN_MODES:
            raise BatteryDomainError(f"unknown drain_mode {self.drain_mode!r}")


def make_default_integrator(model: LossModel) -> SlotIntegrator:
    """Closed form for the quadratic curve, RK4/16 for custom curves."""
    if model.is_quadratic:
        return SlotIntegrator(method="closed-form-tanh")
    return SlotIntegrator(method="rk4", step_count=16)


def _loss_raw(y: np.ndarray, model: LossModel) -> np.ndarray:
    # No range check: integrators may evaluate slightly outside
    # [0, e_max] mid-step, where the quadratic is still the true RHS.
    if callable(model.form):
        return np.asarray(model.form(y), dtype=float)
    half = 0.5 * model.e_max_quanta
    return 1.0 - (y - half) ** 2 / (model.beta_nl * half * half)


def storage_efficiency(y: ArrayLike, model: LossModel) -> ArrayLike:
    """Fraction of incoming power stored at charge level ``y``.

    Raises BatteryDomainError for levels outside [0, e_max].
    """
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise BatteryDomainError("charge level must be finite")
    if np.any(arr < 0.0) or np.any(arr > model.e_max_quanta):
        raise BatteryDomainError(
            f"charge level outside [0, {model.e_max_quanta}]")
    val = _loss_raw(arr, model)
    return float(val) if np.isscalar(y) or arr.ndim == 0 else val


def _closed_form(x, y0, model, t):
    half = 0.5 * model.e_max_quanta
    a = half * math.sqrt(model.beta_nl)
    arg = x * t / a + np.arctanh((y0 - half) / a)
    return half + a * np.tanh(arg)


def _rk4(x, y0, model, t, steps, clamp):
    h = t / steps
    y = np.array(y0, dtype=float, copy=True)
    for _ in range(steps):
        k1 = x * _loss_raw(y, model)
        k2 = x * _loss_raw(y + 0.5 * h * k1, model)
        k3 = x * _loss_raw(y + 0.5 * h * k2, model)
        k4 = x * _loss_raw(y + h * k3, model)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if clamp:
            np.clip(y, 0.0, model.e_max_quanta, out=y)
    return y


def _integrate_many(x, y0, model, integ, clamp=True):
    """Vectorized slot integration of the net power; broadcasts x vs y0.

    A net drain has no stored component, so under "split" it leaves at
    full rate exactly as under "linear".
    """
    x, y0 = np.broadcast_arrays(np.asarray(x, float), np.asarray(y0, float))
    out = np.array(y0, copy=True)
    pending = x != 0.0
    if integ.drain_mode in ("linear", "split"):
        lin = pending & (x < 0.0)
        out[lin] = y0[lin] + x[lin] * integ.slot_length
        pending = pending & ~lin
    if np.any(pending):
        xs, ys = x[pending], y0[pending]
        if integ.method == "closed-form-tanh":
            if not model.is_quadratic:
                raise BatteryDomainError(
                    "closed-form integrator requires the quadratic loss form")
            out[pending] = _closed_form(xs, ys, model, integ.slot_length)
        else:
            out[pending] = _rk4(xs, ys, model, integ.slot_length,
                                integ.step_count, clamp)
    if clamp:
        np.clip(out, 0.0, model.e_max_quanta, out=out)
    return out


def _rk4_split(w, p, y0, model, t, steps):
    # dy/dt = w * s(y) - p; state clamped every step.
    h = t / steps
    y = np.array(y0, dtype=float, copy=True)
    for _ in range(steps):
        k1 = w * _loss_raw(y, model) - p
        k2 = w * _loss_raw(y + 0.5 * h * k1, model) - p
        k3 = w * _loss_raw(y + 0.5 * h * k2, model) - p
        k4 = w * _loss_raw(y + h * k3, model) - p
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        np.clip(y, 0.0, model.e_max_quanta, out=y)
    return y


def _integrate_split_many(w, p, y0, model, integ):
    """Concurrent store-at-s(y) / drain-at-full-rate slot dynamics.

    Pure flows keep their exact forms: w = 0 drains linearly and p = 0
    reduces to the net integrator (closed form where available).
    """
    w, p, y0 = np.broadcast_arrays(np.asarray(w, float), np.asarray(p, float),
                                   np.asarray(y0, float))
    out = np.array(y0, copy=True)
    drain_only = (w == 0.0) & (p != 0.0)
    out[drain_only] = y0[drain_only] - p[drain_only] * integ.slot_length
    store_only = (w != 0.0) & (p == 0.0)
    if np.any(store_only):
        out[store_only] = _integrate_many(w[store_only], y0[store_only],
                                          model, integ, clamp=False)
    mixed = (w != 0.0) & (p != 0.0)
    if np.any(mixed):
        steps = max(integ.step_count, 16)
        out[mixed] = _rk4_split(w[mixed], p[mixed], y0[mixed], model,
                                integ.slot_length, steps)
    np.clip(out, 0.0, model.e_max_quanta, out=out)
    return out


def integrate_slot(x: float, y0: float, model: LossModel,
                   integ: SlotIntegrator | None = None,
                   clamp: bool = True) -> float:
    """Charge level after one slot of net stored power ``x`` from ``y0``.

    x = 0 returns y0 exactly; the result is clamped to [0, e_max]
    unless ``clamp=False`` (raw ODE endpoint, used by the quantization
    diagnostic).
    """
    if integ is None:
        integ = make_default_integrator(model)
    if not (math.isfinite(x) and math.isfinite(y0)):
        raise BatteryDomainError("x and y0 must be finite")
    if y0 < 0.0 or y0 > model.e_max_quanta:
        raise BatteryDomainError(
            f"y0={y0} outside [0, {model.e_max_quanta}]")
    return float(_integrate_many(x, y0, model, integ, clamp=clamp)[()])


def _round_half_away(y):
    return np.sign(y) * np.floor(np.abs(y) + 0.5)


def next_energy(e: int, rho: float, iota: float, b: float,
                model: LossModel, integ: SlotIntegrator | None = None) -> int:
    """Quantized next battery level for one slot.

    ``rho`` quanta are drawn for transmission, a fraction ``iota`` of
    the ``b`` harvested quanta bypasses the battery, and the remainder
    is stored through the loss curve.  Under the default "split" mode
    the two flows run concurrently at their own rates; the other modes
    integrate the net flow ``(1-iota)*b - rho``.
    """
    if not (0 <= e <= model.e_max_quanta):
        raise BatteryDomainError(f"e={e} outside [0, {model.e_max_quanta}]")
    if rho < 0 or rho > e:
        raise BatteryDomainError(f"rho={rho} violates 0 <= rho <= e={e}")
    if not (0.0 <= iota <= 1.0):
        raise BatteryDomainError(f"iota={iota} outside [0, 1]")
    if b < 0:
        raise BatteryDomainError(f"b={b} must be >= 0")
    if integ is None:
        integ = make_default_integrator(model)
    if integ.drain_mode == "split":
        y = float(_integrate_split_many((1.0 - iota) * b, float(rho),
                                        float(e), model, integ)[()])
    else:
        x = (1.0 - iota) * b - rho
        y = integrate_slot(x, float(e), model, integ)
    return int(min(_round_half_away(y), model.e_max_quanta))


@dataclass(frozen=True)
class QuantizationCheck:
    """Outcome of the quantum-size diagnostic."""

    passed: bool
    worst_state: int
    min_increment: int
    message: str


def check_quantization(model: LossModel, integ: SlotIntegrator | None,
                       b_max: int) -> QuantizationCheck:
    """Verify the largest arrival stores at least one quantum everywhere.

    Every level below e_max must be able to climb when b_max arrives and
    nothing is transmitted, otherwise the chain can stall; the full
    level is exempt (it has nowhere to go).  On failure the offending
    level is reported together with the standard fix: shrink the
    quantum (scale e_max and b_max up together).
    """
    if integ is None:
        integ = make_default_integrator(model)
    if b_max < 1:
        return QuantizationCheck(False, 0, 0,
                                 "b_max must be >= 1 for the battery to charge")
    levels = np.arange(model.e_max_quanta, dtype=float)
    y = _integrate_many(float(b_max), levels, model, integ, clamp=True)
    inc = np.minimum(_round_half_away(y), model.e_max_quanta) - levels
    worst = int(np.argmin(inc))
    min_inc = int(inc[worst])
    if min_inc >= 1:
        return QuantizationCheck(True, worst, min_inc, "quantization ok")
    return QuantizationCheck(
        False, worst, min_inc,
        f"storing b_max={b_max} from level e={worst} rounds to a zero "
        f"increment; use a finer energy quantum (larger e_max and b_max)")


def next_energy_table(model: LossModel, integ: SlotIntegrator,
                      x_values: np.ndarray) -> np.ndarray:
    """Quantized next level for every (level, net power) pair.

    Returns an int16 array of shape (e_max+1, len(x_values)); read-only
    after construction, safe to share across workers.
    """
    levels = np.arange(model.e_max_quanta + 1, dtype=float)
    xg = np.broadcast_to(np.asarray(x_values, float),
                         (levels.size, len(x_values)))
    yg = np.broadcast_to(levels[:, None], xg.shape)
    y = _integrate_many(xg, yg, model, integ, clamp=True)
    tab = np.minimum(_round_half_away(y), model.e_max_quanta)
    return tab.astype(np.int16)


def next_energy_table_split(model: LossModel, integ: SlotIntegrator,
                            w_values: np.ndarray) -> np.ndarray:
    """Quantized next level for every (level, stored power, drawn power).

    Returns int16 of shape (e_max+1, len(w_values), e_max+1) with the
    last axis indexed by the transmit energy rho; entries with rho > e
    are computed but never reachable.  Built level-by-level to bound
    the integrator's temporaries.
    """
    e_top = model.e_max_quanta
    w = np.asarray(w_values, float)[:, None]
    p = np.arange(e_top + 1, dtype=float)[None, :]
    tab = np.empty((e_top + 1, w.size, e_top + 1), dtype=np.int16)
    for e in range(e_top + 1):
        y = _integrate_split_many(w, p, float(e), model, integ)
        tab[e] = np.minimum(_round_half_away(y), e_top).astype(np.int16)
    return tab
