"""Macro step size policies.

Three interchangeable controllers drive the master loop: a constant step, a
residual-energy PI controller (scale-invariant, exact local power error), and
a predictor/corrector PI controller that extrapolates simulator outputs and
measures the prediction miss.  Both adaptive policies share the same PI update
and the same rate/absolute step clamps.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from math import isfinite, sqrt
from typing import Sequence

from .energy import BondLedgerEntry

# Indicators are clamped below this before exponentiation so a vanishing
# residual cannot divide by zero; growth is then limited by theta_max anyway.
EPS_FLOOR = 1e-12


class NonFiniteIndicator(RuntimeError):
    """The error indicator evaluated to NaN or infinity."""


class InsufficientHistory(ValueError):
    """Not enough stored outputs to build an extrapolation of the requested order."""


def _broadcast(value, n: int, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * n
    values = tuple(float(v) for v in value)
    if len(values) != n:
        raise ValueError(f"{name} needs 1 or {n} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class EccoConfig:
    """Residual-energy controller parameters.

    ``rel_tol`` and ``energy_scale`` may be scalars or one value per bond; they
    set each bond's energy resolution.  The PI gains are derived from the input
    extrapolation order ``m`` and are not stored.
    """

    rel_tol: float | Sequence[float] = 1e-5
    energy_scale: float | Sequence[float] = 750.0
    alpha_s: float = 0.8
    dt_min: float = 1e-4
    dt_max: float = 1e-2
    theta_min: float = 0.2
    theta_max: float = 1.5
    m: int = 0  # input extrapolation order; constant extrapolation only

    def __post_init__(self):
        _validate_bounds(self)
        _validate_positive(self.rel_tol, "rel_tol")
        _validate_positive(self.energy_scale, "energy_scale")
        if self.m != 0:
            raise ValueError("only constant input extrapolation (m = 0) is supported")

    @property
    def k_i(self) -> float:
        return 0.3 / (self.m + 2)

    @property
    def k_p(self) -> float:
        return 0.4 / (self.m + 2)


@dataclass(frozen=True)
class PredictorCorrectorConfig:
    """Predictor/corrector controller parameters.

    ``tol`` and ``rho`` may be scalars or one value per coupling output.  The
    extrapolation order is fixed at r = m + 1 = 1; gains derive from m = 0.
    """

    tol: float | Sequence[float] = 1.0
    rho: float | Sequence[float] = 1e-4
    order: int = 1
    alpha_s: float = 0.8
    dt_min: float = 1e-4
    dt_max: float = 1e-2
    theta_min: float = 0.2
    theta_max: float = 1.5

    def __post_init__(self):
        _validate_bounds(self)
        _validate_positive(self.tol, "tol")
        _validate_nonnegative(self.rho, "rho")
        if self.order != 1:
            raise ValueError("only extrapolation order r = 1 is supported")

    @property
    def k_i(self) -> float:
        return 0.3 / self.order

    @property
    def k_p(self) -> float:
        return 0.4 / self.order


def _validate_bounds(cfg) -> None:
    if not 0.0 < cfg.dt_min <= cfg.dt_max:
        raise ValueError("require 0 < dt_min <= dt_max")
    if not 0.0 < cfg.theta_min < 1.0 < cfg.theta_max:
        raise ValueError("require 0 < theta_min < 1 < theta_max")
    if not 0.0 < cfg.alpha_s <= 1.0:
        raise ValueError("require 0 < alpha_s <= 1")


def _validate_positive(value, name: str) -> None:
    values = (value,) if isinstance(value, (int, float)) else tuple(value)
    if not all(v > 0.0 for v in values):
        raise ValueError(f"{name} must be strictly positive")


def _validate_nonnegative(value, name: str) -> None:
    values = (value,) if isinstance(value, (int, float)) else tuple(value)
    if not all(v >= 0.0 for v in values):
        raise ValueError(f"{name} must be non-negative")


def ecco_indicator(
    dE_res: Sequence[float],
    E_step: Sequence[float],
    rel_tol: Sequence[float],
    energy_scale: Sequence[float],
) -> float:
    """Scalar error indicator from per-bond residual and transmitted energies.

    RMS over bonds of dE_k / (r_k * (E0_k + |E_k|)); values <= 1 mean the
    residual energies are within tolerance.
    """
    n = len(dE_res)
    if not n == len(E_step) == len(rel_tol) == len(energy_scale):
        raise ValueError("per-bond energy and tolerance vectors must match")
    acc = 0.0
    for de, e, r, e0 in zip(dE_res, E_step, rel_tol, energy_scale):
        term = de / (r * (e0 + abs(e)))
        acc += term * term
    return sqrt(acc / n)


def pi_step_size(
    eps_now: float,
    eps_prev: float,
    dt_now: float,
    k_i: float,
    k_p: float,
    alpha_s: float,
    dt_min: float,
    dt_max: float,
    theta_min: float,
    theta_max: float,
) -> float:
    """PI step update: alpha_s * eps_now^(-k_i-k_p) * eps_prev^k_p * dt_now.

    The raw proposal is rate-clamped to [theta_min, theta_max] * dt_now first,
    then clamped to the absolute bounds [dt_min, dt_max]; the absolute bounds
    win if the two intervals are disjoint.
    """
    e_now = eps_now if eps_now > EPS_FLOOR else EPS_FLOOR
    e_prev = eps_prev if eps_prev > EPS_FLOOR else EPS_FLOOR
    raw = alpha_s * e_now ** (-k_i - k_p) * e_prev**k_p * dt_now
    dt = min(max(raw, theta_min * dt_now), theta_max * dt_now)
    return min(max(dt, dt_min), dt_max)


def predict_outputs(
    history: Sequence[tuple[float, Sequence[float]]], t_next: float, order: int
) -> list[float]:
    """Extrapolate each output to ``t_next`` through the last order+1 samples.

    Component-wise Lagrange polynomial of degree ``order``; past step sizes may
    be non-uniform.  Raises :class:`InsufficientHistory` with fewer samples.
    """
    if len(history) < order + 1:
        raise InsufficientHistory(
            f"need {order + 1} stored outputs for order {order}, have {len(history)}"
        )
    points = list(history)[-(order + 1) :]
    times = [p[0] for p in points]
    weights = []
    for j, tj in enumerate(times):
        w = 1.0
        for l, tl in enumerate(times):
            if l != j:
                w *= (t_next - tl) / (tj - tl)
        weights.append(w)
    n_out = len(points[0][1])
    return [
        sum(weights[j] * points[j][1][a] for j in range(len(points)))
        for a in range(n_out)
    ]


def pc_indicator(
    y: Sequence[float],
    y_pred: Sequence[float],
    tol: Sequence[float],
    rho: Sequence[float],
) -> float:
    """Predictor/corrector error indicator.

    Worst output of |y - y_pred| / (TOL * (1 + rho * max(|y|, |y_pred|))).
    Unlike the residual-energy indicator this is sensitive to output scaling.
    """
    if not len(y) == len(y_pred) == len(tol) == len(rho):
        raise ValueError("output, prediction, and tolerance vectors must match")
    worst = 0.0
    for ya, pa, t, r in zip(y, y_pred, tol, rho):
        err = abs(ya - pa) / (t * (1.0 + r * max(abs(ya), abs(pa))))
        if err > worst:
            worst = err
    return worst


@dataclass
class ControllerState:
    """Mutable per-run controller memory (previous indicator, output history)."""

    eps_prev: float = 1.0
    dt_current: float = 0.0
    history: deque = None  # (time, output tuple) ring buffer, capacity order+1

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=2)


class StepPolicy(ABC):
    """Interface the master loop drives once per accepted macro step."""

    name: str = "policy"

    def start(self, dt0: float | None, t0: float, outputs: Sequence[float]) -> float:
        """Reset per-run state and return the first macro step size."""
        raise NotImplementedError

    @abstractmethod
    def next_step(
        self,
        t_next: float,
        dt_used: float,
        bond_steps: Sequence[BondLedgerEntry],
        outputs: Sequence[float],
    ) -> tuple[float, float]:
        """Consume one completed step; return (next step size, logged indicator)."""


class ConstantStep(StepPolicy):
    """Fixed macro step size; the indicator is logged as 0."""

    name = "constant"

    def __init__(self, dt: float = 1e-3):
        if dt <= 0.0:
            raise ValueError("constant step size must be positive")
        self.dt = dt

    def start(self, dt0, t0, outputs):
        if dt0 is not None:
            if dt0 <= 0.0:
                raise ValueError("dt0 must be positive")
            self.dt = dt0
        return self.dt

    def next_step(self, t_next, dt_used, bond_steps, outputs):
        return self.dt, 0.0


class EccoController(StepPolicy):
    """Residual-energy PI step controller (never re-steps, coupling data only)."""

    name = "ecco"

    def __init__(self, config: EccoConfig, n_bonds: int = 1):
        if n_bonds < 1:
            raise ValueError("residual-energy control needs at least one bond")
        self.config = config
        self.rel_tol = _broadcast(config.rel_tol, n_bonds, "rel_tol")
        self.energy_scale = _broadcast(config.energy_scale, n_bonds, "energy_scale")
        self.n_bonds = n_bonds
        self.state = ControllerState()

    def start(self, dt0, t0, outputs):
        cfg = self.config
        dt0 = cfg.dt_min if dt0 is None else dt0
        if not cfg.dt_min <= dt0 <= cfg.dt_max:
            raise ValueError(f"dt0={dt0} outside [{cfg.dt_min}, {cfg.dt_max}]")
        self.state = ControllerState(eps_prev=1.0, dt_current=dt0)
        return dt0

    def next_step(self, t_next, dt_used, bond_steps, outputs):
        eps = ecco_indicator(
            [b.dE_res for b in bond_steps],
            [b.E_step for b in bond_steps],
            self.rel_tol,
            self.energy_scale,
        )
        if not isfinite(eps):
            raise NonFiniteIndicator(f"residual-energy indicator is {eps} at t={t_next}")
        cfg = self.config
        dt_next = pi_step_size(
            eps, self.state.eps_prev, dt_used,
            cfg.k_i, cfg.k_p, cfg.alpha_s,
            cfg.dt_min, cfg.dt_max, cfg.theta_min, cfg.theta_max,
        )
        self.state.eps_prev = max(eps, EPS_FLOOR)
        self.state.dt_current = dt_next
        return dt_next, eps


class PredictorCorrectorController(StepPolicy):
    """Output-extrapolation PI step controller.

    Predicts the coupling outputs with a degree-1 Lagrange extrapolation over
    the stored history and feeds the prediction miss into the same PI update.
    Until enough history exists the step size is left unchanged and the
    indicator is skipped.
    """

    name = "predictor_corrector"

    def __init__(self, config: PredictorCorrectorConfig, n_outputs: int = 2):
        if n_outputs < 1:
            raise ValueError("predictor/corrector control needs coupling outputs")
        self.config = config
        self.tol = _broadcast(config.tol, n_outputs, "tol")
        self.rho = _broadcast(config.rho, n_outputs, "rho")
        self.n_outputs = n_outputs
        self.state = ControllerState()

    def start(self, dt0, t0, outputs):
        cfg = self.config
        dt0 = cfg.dt_min if dt0 is None else dt0
        if not cfg.dt_min <= dt0 <= cfg.dt_max:
            raise ValueError(f"dt0={dt0} outside [{cfg.dt_min}, {cfg.dt_max}]")
        self.state = ControllerState(
            eps_prev=1.0, dt_current=dt0, history=deque(maxlen=self.config.order + 1)
        )
        self.state.history.append((t0, tuple(outputs)))
        return dt0

    def next_step(self, t_next, dt_used, bond_steps, outputs):
        cfg = self.config
        state = self.state
        if len(state.history) < cfg.order + 1:
            # Startup: no extrapolation possible yet, keep the step unchanged.
            state.history.append((t_next, tuple(outputs)))
            state.dt_current = dt_used
            return dt_used, 0.0
        y_pred = predict_outputs(state.history, t_next, cfg.order)
        eps = pc_indicator(outputs, y_pred, self.tol, self.rho)
        if not isfinite(eps):
            raise NonFiniteIndicator(f"predictor/corrector indicator is {eps} at t={t_next}")
        dt_next = pi_step_size(
            eps, state.eps_prev, dt_used,
            cfg.k_i, cfg.k_p, cfg.alpha_s,
            cfg.dt_min, cfg.dt_max, cfg.theta_min, cfg.theta_max,
        )
        state.eps_prev = max(eps, EPS_FLOOR)
        state.history.append((t_next, tuple(outputs)))
        state.dt_current = dt_next
        return dt_next, eps
