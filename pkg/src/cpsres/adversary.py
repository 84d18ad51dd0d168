"""Cyber-physical adversaries and their injection into closed-loop runs.

Two attack descriptions are supported:

* :class:`AdversaryModel`, the parametric adversary holding estimates ``B'``
  and ``C'`` of the plant, a malicious command policy and an optional sensor
  policy (replay or model-consistent fabrication);
* :class:`SaturationAttackScenario`, actuators stuck at fixed levels for a
  window, as in the pressure scenarios of the TE benchmark.

Both are immutable; per-run state (replay buffer, shadow state) lives in the
:class:`AttackSession` returned by ``session()``.

Commands and stuck levels are given in engineering units. Sessions translate
them to model coordinates with the run's input offset.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import ContractViolation, UndefinedRatio
from .lti_core import SaturationLimits, StateSpaceModel, saturate


@dataclass(frozen=True)
class AttackWindow:
    start: int
    duration: int | None = None  # None: until the end of the run

    def __post_init__(self):
        if self.start < 0:
            raise ContractViolation("attack start must be non-negative")
        if self.duration is not None and self.duration < 0:
            raise ContractViolation("attack duration must be non-negative")

    def active(self, k: int) -> bool:
        return k >= self.start and (self.duration is None or k < self.start + self.duration)

    @property
    def end(self) -> int | None:
        return None if self.duration is None else self.start + self.duration

    @property
    def empty(self) -> bool:
        return self.duration == 0


class AttackSession:
    """Per-run attack state. ``sensor`` runs before the controller, ``actuator`` after."""

    def __init__(self, window: AttackWindow, u_offset: np.ndarray):
        self.window = window
        self.u_offset = u_offset

    def sensor(self, k: int, y_true: np.ndarray, x: np.ndarray) -> np.ndarray:
        return y_true

    def actuator(self, k: int, u_ctrl: np.ndarray, x: np.ndarray) -> np.ndarray:
        return u_ctrl

    def inject(self, k, u_ctrl, y_true, x):
        y_seen = self.sensor(k, np.asarray(y_true, dtype=float), x)
        return self.actuator(k, np.asarray(u_ctrl, dtype=float), x), y_seen


# ---------------------------------------------------------------------------
# Saturation scenarios


@dataclass(frozen=True)
class SaturationAttackScenario:
    """Actuators forced to constant levels (engineering units) during a window."""

    levels: Mapping[int, float]
    start: int = 0
    duration: int | None = 30
    label: str = ""

    def __post_init__(self):
        if not self.levels:
            raise ContractViolation("attacked actuator set must be nonempty")
        object.__setattr__(self, "levels", dict(sorted((int(i), float(v)) for i, v in self.levels.items())))
        AttackWindow(self.start, self.duration)

    @property
    def window(self) -> AttackWindow:
        return AttackWindow(self.start, self.duration)

    def with_window(self, start: int, duration: int | None) -> "SaturationAttackScenario":
        return SaturationAttackScenario(self.levels, start, duration, self.label)

    def session(self, model: StateSpaceModel, limits: SaturationLimits, u_offset=None, y_offset=None):
        p = model.input_dim
        u_offset = np.zeros(p) if u_offset is None else np.asarray(u_offset, dtype=float)
        for i, level in self.levels.items():
            if not 0 <= i < p:
                raise ContractViolation(f"attacked actuator {i} does not exist")
            lo, hi = limits.u_min[i] + u_offset[i], limits.u_max[i] + u_offset[i]
            if not lo - 1e-12 <= level <= hi + 1e-12:
                raise ContractViolation(f"stuck level {level} outside physical range [{lo}, {hi}]")
        return _StuckSession(self.window, u_offset, self.levels)


class _StuckSession(AttackSession):
    def __init__(self, window, u_offset, levels):
        super().__init__(window, u_offset)
        self.idx = np.array(list(levels), dtype=int)
        self.vals = np.array(list(levels.values())) - u_offset[self.idx]

    def actuator(self, k, u_ctrl, x):
        if not self.window.active(k):
            return u_ctrl
        u = np.array(u_ctrl, dtype=float)
        u[self.idx] = self.vals
        return u


# Stuck-valve scenario tables, kept as printed strings (percent valve opening).
_SCENARIO_TABLES = {
    "max_pressure": (("100", "0"), ("85", "5"), ("70", "12.5")),
    "min_pressure": (("0", "100"), ("20", "75"), ("30", "50")),
}
SCENARIO_INPUTS = (0, 2)  # u1 and u3


def scenario_table(which: str, index: int, start: int = 0, duration: int | None = 30) -> SaturationAttackScenario:
    """TE pressure attack scenario ``index`` (1..3) of family ``max_pressure``/``min_pressure``."""
    if which not in _SCENARIO_TABLES:
        raise ContractViolation(f"unknown scenario family {which!r}")
    rows = _SCENARIO_TABLES[which]
    if not 1 <= index <= len(rows):
        raise ContractViolation(f"scenario index must be in 1..{len(rows)}, got {index}")
    u1, u3 = rows[index - 1]
    return SaturationAttackScenario(
        {SCENARIO_INPUTS[0]: float(u1), SCENARIO_INPUTS[1]: float(u3)},
        start,
        duration,
        label=f"{which}#{index}",
    )


def scenario_constants() -> dict[str, tuple[tuple[str, str], ...]]:
    return dict(_SCENARIO_TABLES)


# ---------------------------------------------------------------------------
# Parametric adversary

CommandPolicy = np.ndarray | Mapping[int, np.ndarray] | Callable[[int], np.ndarray] | str


@dataclass(frozen=True, eq=False)
class AdversaryModel:
    """Adversary with plant estimates ``B_est`` (B') and ``C_est`` (C').

    ``command_policy`` may be a constant p-vector, a ``{step: vector}`` schedule
    (the last scheduled value is held), a callable ``k -> vector`` or the
    strings ``"max"``/``"min"`` for actuators stuck at a saturation bound.
    Only ``attacked_inputs`` are overridden (default: all).

    ``sensor_policy``: ``None`` (actuator-only), ``"replay"`` (loop the last
    ``replay_period`` pre-attack measurements) or ``"fabricate"`` (propagate a
    shadow state with ``A``, ``B_est`` and emit ``C_est`` times it).
    """

    B_est: np.ndarray
    C_est: np.ndarray
    command_policy: CommandPolicy = "max"
    start: int = 0
    duration: int | None = 30
    attacked_inputs: tuple[int, ...] | None = None
    sensor_policy: str | None = None
    replay_period: int = 50

    def __post_init__(self):
        object.__setattr__(self, "B_est", np.atleast_2d(np.asarray(self.B_est, dtype=float)))
        object.__setattr__(self, "C_est", np.atleast_2d(np.asarray(self.C_est, dtype=float)))
        if self.sensor_policy not in (None, "replay", "fabricate"):
            raise ContractViolation(f"unknown sensor policy {self.sensor_policy!r}")
        AttackWindow(self.start, self.duration)
        if self.replay_period < 1:
            raise ContractViolation("replay_period must be positive")

    @property
    def window(self) -> AttackWindow:
        return AttackWindow(self.start, self.duration)

    def _command(self, k: int, limits: SaturationLimits, u_offset: np.ndarray) -> np.ndarray:
        pol = self.command_policy
        if isinstance(pol, str):
            if pol == "max":
                return limits.u_max + u_offset
            if pol == "min":
                return limits.u_min + u_offset
            raise ContractViolation(f"unknown command policy {pol!r}")
        if callable(pol):
            return np.asarray(pol(k), dtype=float)
        if isinstance(pol, Mapping):
            keys = [s for s in sorted(pol) if s <= k]
            if not keys:
                return np.full(limits.size, np.nan)
            return np.asarray(pol[keys[-1]], dtype=float)
        return np.asarray(pol, dtype=float)

    def session(self, model: StateSpaceModel, limits: SaturationLimits, u_offset=None, y_offset=None):
        n, p, m = model.state_dim, model.input_dim, model.output_dim
        if self.B_est.shape != (n, p) or self.C_est.shape != (m, n):
            raise ContractViolation("adversary estimates do not match plant dimensions")
        attacked = tuple(range(p)) if self.attacked_inputs is None else tuple(self.attacked_inputs)
        if any(not 0 <= i < p for i in attacked):
            raise ContractViolation("attacked input index out of range")
        u_offset = np.zeros(p) if u_offset is None else np.asarray(u_offset, dtype=float)
        return _AdversarySession(self, model, limits, u_offset, np.array(attacked, dtype=int))


class _AdversarySession(AttackSession):
    def __init__(self, adv: AdversaryModel, model, limits, u_offset, attacked):
        super().__init__(adv.window, u_offset)
        self.adv = adv
        self.model = model
        self.limits = limits
        self.attacked = attacked
        self.history: list[np.ndarray] = []
        self.shadow: np.ndarray | None = None

    def sensor(self, k, y_true, x):
        policy = self.adv.sensor_policy
        if not self.window.active(k):
            if policy == "replay":
                self.history.append(np.array(y_true))
                del self.history[: -self.adv.replay_period]
            return y_true
        if policy is None:
            return y_true
        if policy == "replay":
            if not self.history:
                self.history.append(np.array(y_true))
            return self.history[(k - self.window.start) % len(self.history)].copy()
        if self.shadow is None:
            self.shadow = np.array(x, dtype=float)
        return self.adv.C_est @ self.shadow

    def actuator(self, k, u_ctrl, x):
        if not self.window.active(k):
            return u_ctrl
        if self.shadow is not None:
            # the controller expects its own command to act through B'
            self.shadow = self.model.A @ self.shadow + self.adv.B_est @ saturate(u_ctrl, self.limits)
        cmd = self.adv._command(k, self.limits, self.u_offset)
        u = np.array(u_ctrl, dtype=float)
        sel = self.attacked
        vals = cmd[sel] - self.u_offset[sel]
        keep = np.isnan(vals)
        u[sel[~keep]] = vals[~keep]
        return u


def inject(attack, k: int, u_ctrl, y_true, x, *, model: StateSpaceModel | None = None,
           limits: SaturationLimits | None = None, u_offset=None):
    """One-shot injection ``-> (u_applied, y_seen)`` using a fresh session.

    Stateful sensor policies need a persistent session; use ``attack.session``.
    """
    u_ctrl = np.atleast_1d(np.asarray(u_ctrl, dtype=float))
    y_true = np.atleast_1d(np.asarray(y_true, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if model is None:
        model = StateSpaceModel(np.zeros((x.size, x.size)), np.zeros((x.size, u_ctrl.size)),
                                np.zeros((y_true.size, x.size)))
    if limits is None:
        limits = SaturationLimits.unbounded(u_ctrl.size)
    return attack.session(model, limits, u_offset).inject(k, u_ctrl, y_true, x)


def estimation_error(adv: AdversaryModel, plant: StateSpaceModel) -> float:
    """Largest relative Frobenius gap between (B', C') and (B, C); 0 is a perfect-knowledge adversary."""
    if adv.B_est.shape != plant.B.shape or adv.C_est.shape != plant.C.shape:
        raise ContractViolation("estimate dimensions do not match the plant")
    nb, nc = np.linalg.norm(plant.B), np.linalg.norm(plant.C)
    if nb == 0 or nc == 0:
        raise UndefinedRatio("plant B or C has zero norm")
    return float(max(np.linalg.norm(adv.B_est - plant.B) / nb, np.linalg.norm(adv.C_est - plant.C) / nc))
