"""Resilience metrics: absorb/recovery times, maximum deviation, resilience
loss, performance-and-stability resilience and the global index.

Two report modes exist. ``measured`` reports are read off a simulated attack
trajectory; ``estimated`` reports come from :func:`worst_case_estimate`, which
drives the plant to its reachable extreme for ``KA`` steps and then lets the
nominal controller recover.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import (
    CannotNormalize,
    ContractViolation,
    IncompleteEvaluation,
    NotSettledError,
)
from .lti_core import SaturationLimits, StateSpaceModel, Trajectory, simulate

REPORT_VERSION = 1
DEFAULT_BAND = 0.02


@dataclass(frozen=True)
class VariableSpec:
    """A monitored output. ``output`` indexes the plant output vector."""

    name: str
    setpoint: float
    output: int = 0
    ts_low: float | None = None
    ts_high: float | None = None
    weight: float = 0.0

    def __post_init__(self):
        if self.ts_low is not None and not self.ts_low < self.setpoint:
            raise ContractViolation(f"{self.name}: lower threshold must lie below the setpoint")
        if self.ts_high is not None and not self.setpoint < self.ts_high:
            raise ContractViolation(f"{self.name}: upper threshold must lie above the setpoint")
        if not 0.0 <= self.weight <= 1.0:
            raise ContractViolation(f"{self.name}: weight must be in [0, 1]")

    @property
    def two_sided(self) -> bool:
        return self.ts_low is not None and self.ts_high is not None

    @property
    def span(self) -> float:
        if not self.two_sided:
            raise CannotNormalize(f"{self.name} lacks a lower or upper threshold")
        return self.ts_high - self.ts_low

    def violates(self, values) -> bool:
        v = np.asarray(values, dtype=float)
        low = self.ts_low is not None and bool(np.any(v < self.ts_low))
        high = self.ts_high is not None and bool(np.any(v > self.ts_high))
        return low or high


def _series(traj, var: VariableSpec) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.y[:, var.output]
    return np.asarray(traj, dtype=float).ravel()


def settling_time(traj, var: VariableSpec, band_fraction: float = DEFAULT_BAND, from_step: int = 0,
                  *, band_abs: float | None = None) -> int:
    """Steps after ``from_step`` until the output stays within the band for the rest of the run."""
    y = _series(traj, var)
    if not 0 <= from_step < y.size:
        raise ContractViolation(f"trajectory of length {y.size} does not cover step {from_step}")
    band = band_fraction * abs(var.setpoint) if band_abs is None else band_abs
    dev = np.abs(y[from_step:] - var.setpoint)
    outside = np.flatnonzero(dev > band)
    if outside.size == 0:
        return 0
    if outside[-1] == dev.size - 1:
        raise NotSettledError(float(dev[-1]))
    return int(outside[-1] + 1)


def max_deviation(traj, var: VariableSpec, k0: int = 0, kr: int | None = None) -> float:
    """``max |y - SP|`` over steps ``k0..kr`` inclusive."""
    y = _series(traj, var)
    kr = y.size - 1 if kr is None else kr
    window = y[k0:kr + 1]
    if window.size == 0:
        raise ContractViolation("no observations in the requested window")
    return float(np.max(np.abs(window - var.setpoint)))


def resilience_loss(traj, var: VariableSpec, k0: int, kr: int) -> float:
    """``sum_{k=k0}^{kr} |y_k - SP|`` in variable units times steps."""
    y = _series(traj, var)
    if not 0 <= k0 <= kr < y.size:
        raise ContractViolation(f"window [{k0}, {kr}] not inside trajectory of length {y.size}")
    return float(np.sum(np.abs(y[k0:kr + 1] - var.setpoint)))


def normal_resilience(var: VariableSpec, KA: int, KR: int) -> float:
    """Threshold area ``NR = (TS_sup - TS_inf) * (KA + KR)``."""
    return var.span * (KA + KR)


def _pr_raw(RL: float, var: VariableSpec, KA: int, KR: int) -> float:
    if KA + KR <= 0:
        raise ContractViolation("KA + KR must be positive")
    NR = normal_resilience(var, KA, KR)
    return (NR - RL) / NR


def perf_stability_resilience(RL: float, var: VariableSpec, KA: int, KR: int) -> float:
    """``PR = (NR - RL) / NR`` clamped to ``[0, 1]``."""
    return min(1.0, max(0.0, _pr_raw(RL, var, KA, KR)))


def global_resilience(per_variable: Sequence[tuple[VariableSpec, Sequence[float]]]) -> float:
    """``GR = sum_j weight_j * min(PR_j)``."""
    total = sum(v.weight for v, _ in per_variable)
    if abs(total - 1.0) > 1e-9:
        raise ContractViolation(f"attack-surface weights sum to {total}, expected 1")
    gr = 0.0
    for var, prs in per_variable:
        if len(prs) == 0:
            if var.weight > 0:
                raise IncompleteEvaluation(f"no PR values for weighted variable {var.name}")
            continue
        gr += var.weight * min(prs)
    return gr


# ---------------------------------------------------------------------------
# Reachable states


@dataclass
class ReachableExtremes:
    chi_max: np.ndarray
    chi_min: np.ndarray
    psi_max: np.ndarray
    psi_min: np.ndarray


def _input_sum(A: np.ndarray, v: np.ndarray, KA: int) -> np.ndarray:
    acc = np.zeros(A.shape[0])
    for _ in range(KA):
        acc = A @ acc + v
    return acc


def reachable_extremes(model: StateSpaceModel, sp_state, KA: int, limits: SaturationLimits) -> ReachableExtremes:
    """``chi = A^KA SP +/- sum_{i=1}^{KA} A^(KA-i) B S_max`` and ``Psi = C chi``.

    With asymmetric limits the ``+`` branch uses ``u_max`` and the ``-`` branch
    ``u_min``. This is the constant-extreme-input state, not a bound on every
    coordinate for sign-indefinite ``A``/``B``; see :func:`reachable_bounds`.
    """
    if KA < 0:
        raise ContractViolation("KA must be non-negative")
    x = np.asarray(sp_state, dtype=float)
    free = np.linalg.matrix_power(model.A, KA) @ x
    chi_max = free + _input_sum(model.A, model.B @ limits.u_max, KA)
    chi_min = free + _input_sum(model.A, model.B @ limits.u_min, KA)
    return ReachableExtremes(chi_max, chi_min, model.C @ chi_max, model.C @ chi_min)


@dataclass
class ReachableBounds:
    """Exact per-row extremes of ``rows @ x[KA]`` over all admissible input sequences."""

    upper: np.ndarray
    lower: np.ndarray
    argmax_inputs: np.ndarray  # (rows, KA, p) sequences attaining ``upper``
    argmin_inputs: np.ndarray
    influence: np.ndarray  # (rows, KA, p) coefficient of u[i, j] in each row


def reachable_bounds(model: StateSpaceModel, sp_state, KA: int, limits: SaturationLimits,
                     rows=None, tie_tol: float = 1e-12) -> ReachableBounds:
    """Support function of the KA-step reachable set along each row of ``rows``.

    ``rows`` defaults to ``C`` (output bounds); pass the identity for state bounds.
    Inputs whose coefficient is zero are set to 0 in the maximizing sequences.
    """
    if KA < 0:
        raise ContractViolation("KA must be non-negative")
    R = model.C if rows is None else np.atleast_2d(np.asarray(rows, dtype=float))
    x = np.asarray(sp_state, dtype=float)
    p = model.input_dim
    base = R @ np.linalg.matrix_power(model.A, KA) @ x
    infl = np.zeros((R.shape[0], KA, p))
    Rk = R.copy()  # R A^(KA-1-i) for i counted from the last step backwards
    for i in range(KA - 1, -1, -1):
        infl[:, i, :] = Rk @ model.B
        Rk = Rk @ model.A
    scale = np.maximum(np.abs(infl).max(axis=(1, 2), keepdims=True), 1e-300)
    pos = infl > tie_tol * scale
    neg = infl < -tie_tol * scale
    lo = np.broadcast_to(limits.u_min, infl.shape)
    hi = np.broadcast_to(limits.u_max, infl.shape)
    arg_up = np.where(pos, hi, np.where(neg, lo, 0.0))
    arg_dn = np.where(pos, lo, np.where(neg, hi, 0.0))
    upper = base + np.sum(infl * arg_up, axis=(1, 2))
    lower = base + np.sum(infl * arg_dn, axis=(1, 2))
    return ReachableBounds(upper, lower, arg_up, arg_dn, infl)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class VariableResult:
    name: str
    KA: int
    KR: int
    MD: float
    RL: float
    PR: float | None
    clamped: bool = False
    direction: str | None = None
    violated: bool = False


@dataclass
class ResilienceReport:
    mode: str
    variables: list[VariableResult]
    GR: float | None = None
    version: int = REPORT_VERSION

    def __post_init__(self):
        if self.mode not in ("estimated", "measured"):
            raise ContractViolation(f"unknown report mode {self.mode!r}")

    def __getitem__(self, name: str) -> VariableResult:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "mode": self.mode,
            "variables": [
                {k: v for k, v in asdict(r).items() if k in ("name", "KA", "KR", "MD", "RL", "PR", "clamped")}
                | ({"direction": r.direction} if r.direction else {})
                | ({"violated": r.violated} if r.violated else {})
                for r in self.variables
            ],
            "GR": self.GR,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ResilienceReport":
        return cls(
            mode=d["mode"],
            variables=[VariableResult(**v) for v in d["variables"]],
            GR=d.get("GR"),
            version=d.get("version", REPORT_VERSION),
        )

    def table(self) -> str:
        """Plain-text KA/KR/MD/RL/PR table."""
        lines = [f"{'variable':<10}{'KA':>6}{'KR':>8}{'MD':>12}{'RL':>14}{'PR':>10}"]
        for r in self.variables:
            pr = "-" if r.PR is None else f"{100 * r.PR:.2f}%"
            lines.append(f"{r.name:<10}{r.KA:>6}{r.KR:>8}{r.MD:>12.2f}{r.RL:>14.1f}{pr:>10}")
        if self.GR is not None:
            lines.append(f"GR = {100 * self.GR:.2f}%")
        return "\n".join(lines)


def _finish(var: VariableSpec, KA: int, KR: int, MD: float, RL: float, violated: bool,
            direction: str | None = None) -> VariableResult:
    pr, clamped = None, False
    if var.two_sided:
        if KA + KR == 0:
            pr = 1.0 if RL == 0 else 0.0
            clamped = RL != 0
        else:
            raw = _pr_raw(RL, var, KA, KR)
            pr = min(1.0, max(0.0, raw))
            clamped = pr != raw
    return VariableResult(var.name, int(KA), int(KR), float(MD), float(RL), None if pr is None else float(pr),
                          bool(clamped), direction, bool(violated))


def _global(variables: Sequence[VariableSpec], results: Sequence[VariableResult]) -> float | None:
    pairs = [(v, [r.PR]) for v, r in zip(variables, results) if r.PR is not None and v.weight > 0]
    if not pairs or abs(sum(v.weight for v, _ in pairs) - 1.0) > 1e-9:
        return None
    return global_resilience(pairs)


def measure(traj: Trajectory, variables: Sequence[VariableSpec], k0: int, KA: int,
            band_fraction: float = DEFAULT_BAND) -> ResilienceReport:
    """Measured report for an attack starting at ``k0`` and absorbed for ``KA`` steps."""
    results = []
    ka = k0 + KA
    for var in variables:
        KR = settling_time(traj, var, band_fraction, ka)
        kr = ka + KR
        MD = max_deviation(traj, var, k0, kr)
        RL = resilience_loss(traj, var, k0, kr)
        violated = var.violates(_series(traj, var)[k0:kr + 1])
        results.append(_finish(var, KA, KR, MD, RL, violated))
    return ResilienceReport("measured", results, _global(variables, results))


class WorstCaseDrive:
    """Attack that replays the maximizing input sequence on influential inputs only."""

    def __init__(self, inputs: np.ndarray, influential: np.ndarray, start: int = 0):
        self.inputs = inputs  # (KA, p) model coordinates
        self.influential = influential
        self.start = start

    def session(self, model, limits, u_offset=None, y_offset=None):
        return self

    def sensor(self, k, y, x):
        return y

    def actuator(self, k, u, x):
        i = k - self.start
        if 0 <= i < len(self.inputs):
            u = np.array(u, dtype=float)
            u[self.influential] = self.inputs[i, self.influential]
        return u


@dataclass
class WorstCase:
    """Explicit worst-case run behind an estimated report entry."""

    variable: str
    direction: str
    bound: float
    trajectory: Trajectory


def worst_case_estimate(
    model: StateSpaceModel,
    controller,
    variables: Sequence[VariableSpec],
    KA: int,
    limits: SaturationLimits,
    *,
    band_fraction: float = DEFAULT_BAND,
    direction: str = "both",
    sp_state=None,
    y_offset=None,
    u_offset=None,
    max_recovery: int = 20000,
    runs: list | None = None,
) -> ResilienceReport:
    """Estimated report: saturated worst-case drive for ``KA`` steps, then nominal recovery.

    For each variable the input sequence maximizing (``direction="max"``) or
    minimizing (``"min"``) the output after ``KA`` steps is applied to the inputs
    that influence it; ``"both"`` keeps whichever side deviates more. Other
    inputs stay under nominal control. MD is the larger of the exact reachable
    bound, the literal constant-extreme-input state on the same side and the
    largest deviation seen along the run. ``runs`` collects :class:`WorstCase`
    records when given.
    """
    if direction not in ("max", "min", "both"):
        raise ContractViolation(f"direction must be max, min or both, got {direction!r}")
    if KA < 0:
        raise ContractViolation("KA must be non-negative")
    n, m = model.state_dim, model.output_dim
    x_sp = np.zeros(n) if sp_state is None else np.asarray(sp_state, dtype=float)
    y_off = np.zeros(m) if y_offset is None else np.asarray(y_offset, dtype=float)
    bounds = reachable_bounds(model, x_sp, KA, limits)
    literal = reachable_extremes(model, x_sp, KA, limits)
    results = []
    for var in variables:
        row = var.output
        up = bounds.upper[row] + y_off[row] - var.setpoint
        dn = bounds.lower[row] + y_off[row] - var.setpoint
        side = direction if direction != "both" else ("max" if abs(up) >= abs(dn) else "min")
        seq = bounds.argmax_inputs[row] if side == "max" else bounds.argmin_inputs[row]
        influential = np.flatnonzero(np.any(bounds.influence[row] != 0, axis=0))
        drive = WorstCaseDrive(seq, influential)
        traj = simulate(model, controller, x_sp, KA + max_recovery, limits=limits, attack=drive,
                        u_offset=u_offset, y_offset=y_off)
        KR = settling_time(traj, var, band_fraction, KA)
        kr = KA + KR
        bound_dev = abs(up) if side == "max" else abs(dn)
        # the literal extreme only counts when it lies on the driven side of SP
        if side == "max":
            literal_dev = max(0.0, literal.psi_max[row] + y_off[row] - var.setpoint)
        else:
            literal_dev = max(0.0, var.setpoint - literal.psi_min[row] - y_off[row])
        MD = max(bound_dev, literal_dev, max_deviation(traj, var, 0, kr))
        RL = resilience_loss(traj, var, 0, kr)
        violated = var.violates(traj.y[: kr + 1, row])
        results.append(_finish(var, KA, KR, MD, RL, violated, side))
        if runs is not None:
            runs.append(WorstCase(var.name, side, bound_dev, traj))
    return ResilienceReport("estimated", results, _global(variables, results))
