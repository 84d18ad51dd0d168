"""Simplified Tennessee Eastman (TE) plant: 4x4 transfer-function model,
operating point, thresholds and a tuned decentralized PI baseline.

Outputs are ordered (F4, P, yA3, VL) and inputs (u1, u2, u3, u4). All
simulation happens in deviation coordinates about the operating point; the
``u_offset``/``y_offset`` of a run turn results back into engineering units.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .adversary import SaturationAttackScenario, scenario_constants, scenario_table
from .lti_core import (
    DecentralizedPI,
    PILoop,
    SaturationLimits,
    StateSpaceModel,
    Trajectory,
    simulate,
)
from .metrics import VariableSpec
from .tf_algebra import (
    RationalTF,
    TransferFunctionMatrix,
    realize_matrix,
    realize_minimal,
    realize_state_space,
)

OUTPUT_NAMES = ("F4", "P", "yA3", "VL")
OUTPUT_UNITS = ("kmol/hr", "kPa", "mol %", "%")
INPUT_NAMES = ("u1", "u2", "u3", "u4")
P_INDEX = 1

# Exact printed constants. Numbers are parsed from these strings so a test
# can compare them character by character.
INPUT_SETPOINTS_TEXT = (
    ("u1", "60.95327313484253", "Feed 1 valve position", "0", "100"),
    ("u2", "25.02232231706676", "Feed 2 valve position", "0", "100"),
    ("u3", "39.25777017606444", "Purge valve position", "0", "100"),
    ("u4", "44.17670682730923", "Liquid inventory setpoint", "0", "100"),
)
OUTPUT_SETPOINTS_TEXT = (
    ("F4", "100.00", "Product flow", "kmol/hr", None, None),
    ("P", "2700.00", "Pressure", "kPa", "2000", "3000"),
    ("VL", "44.18", "Liquid inventory", "%", "0", "100"),
    ("yA3", "47.00", "Amount of A in purge", "mol %", "0", "100"),
)

U_SP = np.array([float(r[1]) for r in INPUT_SETPOINTS_TEXT])
U_MIN = np.array([float(r[3]) for r in INPUT_SETPOINTS_TEXT])
U_MAX = np.array([float(r[4]) for r in INPUT_SETPOINTS_TEXT])
_by_name = {r[0]: r for r in OUTPUT_SETPOINTS_TEXT}
Y_SP = np.array([float(_by_name[name][1]) for name in OUTPUT_NAMES])

DEFAULT_KA = 30


def te_transfer_matrix() -> TransferFunctionMatrix:
    """G(s) with rows (F4, P, yA3, VL) and columns (u1..u4); s in seconds."""
    g11 = RationalTF([0.02833], [45.0, 1.0])
    g21 = RationalTF([45.0 * 340.0, 45.0], [9000.0, 615.0, 1.0])
    g23 = RationalTF([-900.0, -11.25], [9000.0, 615.0, 1.0])
    g32 = RationalTF([1.5], [600.0, 1.0], dead_time=6.0)
    g14 = RationalTF([-3.4, 0.0], [360.0, 66.0, 1.0])
    g44 = RationalTF([1.0], [60.0, 1.0])
    z = RationalTF.zero()
    return TransferFunctionMatrix([
        [g11, z, z, g14],
        [g21, z, g23, z],
        [z, g32, z, z],
        [z, z, z, g44],
    ])


@dataclass(frozen=True)
class TEOperatingPoint:
    u_sp: tuple[float, ...] = tuple(U_SP)
    y_sp: tuple[float, ...] = tuple(Y_SP)
    u_min: tuple[float, ...] = tuple(U_MIN)
    u_max: tuple[float, ...] = tuple(U_MAX)

    def limits(self) -> SaturationLimits:
        """Valve ranges in deviation coordinates."""
        return SaturationLimits(np.array(self.u_min), np.array(self.u_max)).shifted(np.array(self.u_sp))


def te_limits() -> SaturationLimits:
    return TEOperatingPoint().limits()


@lru_cache(maxsize=8)
def _plant(Ts: float, delay_mode: str, realization: str) -> StateSpaceModel:
    G = te_transfer_matrix()
    if realization == "entrywise":
        return realize_matrix(G, Ts, delay_mode)
    if realization == "minimal":
        return realize_minimal(G, Ts)
    raise ValueError(f"unknown realization {realization!r}")


def te_plant(Ts: float = 1.0, delay_mode: str = "discrete_shift", realization: str = "entrywise") -> StateSpaceModel:
    """Discrete deviation-coordinate TE model.

    ``entrywise`` realizes each nonzero g_ij separately (simulation default);
    ``minimal`` shares poles across a column and is used for rank analysis.
    """
    return _plant(float(Ts), delay_mode, realization)


def te_variables(weights: dict[str, float] | None = None) -> list[VariableSpec]:
    """Monitored variables in output order. By default only P carries weight."""
    weights = {"P": 1.0} if weights is None else weights
    out = []
    for idx, name in enumerate(OUTPUT_NAMES):
        row = _by_name[name]
        lo = None if row[4] is None else float(row[4])
        hi = None if row[5] is None else float(row[5])
        out.append(VariableSpec(name, float(row[1]), idx, lo, hi, weights.get(name, 0.0)))
    return out


def pressure_variable() -> VariableSpec:
    return te_variables()[P_INDEX]


# Baseline decentralized PI gains, tuned on the discrete model at Ts = 1 s
# (SIMC-style starting values, then adjusted by simulating the pressure
# scenarios). kp is in % valve per output unit, ti in seconds.
BASELINE_LOOPS = (
    PILoop(input=0, output=0, kp=10.0, ti=45.0),    # u1 -> F4
    PILoop(input=2, output=1, kp=-1.0, ti=45.0),    # u3 -> P, reverse acting
    PILoop(input=1, output=2, kp=25.0, ti=64.0),    # u2 -> yA3
    PILoop(input=3, output=3, kp=3.0, ti=60.0),     # u4 -> VL
)


def te_baseline_controller(loops=BASELINE_LOOPS) -> DecentralizedPI:
    """Decentralized PI regulating deviations to zero."""
    return DecentralizedPI(tuple(loops))


def te_run(attack=None, horizon: int = 3000, Ts: float = 1.0, controller=None, noise=None,
           delay_mode: str = "discrete_shift") -> Trajectory:
    """Closed-loop TE run from the operating point."""
    model = te_plant(Ts, delay_mode)
    return simulate(
        model,
        controller or te_baseline_controller(),
        np.zeros(model.state_dim),
        horizon,
        noise=noise,
        limits=te_limits(),
        attack=attack,
        u_offset=U_SP,
        y_offset=Y_SP,
    )


def te_scenarios(start: int = 100, duration: int = DEFAULT_KA) -> dict[str, list[SaturationAttackScenario]]:
    return {
        fam: [scenario_table(fam, i, start, duration) for i in (1, 2, 3)]
        for fam in ("max_pressure", "min_pressure")
    }


def te_pressure_predictor(u1, u3, Ts: float = 1.0) -> np.ndarray:
    """Open-loop pressure ``P = g21 u1 + g23 u3`` about the operating point.

    ``u1`` and ``u3`` are absolute valve trajectories sampled at ``Ts`` and held
    between samples; the plant starts at rest.
    """
    u1 = np.asarray(u1, dtype=float) - U_SP[0]
    u3 = np.asarray(u3, dtype=float) - U_SP[2]
    if u1.shape != u3.shape:
        raise ValueError("u1 and u3 must have the same length")
    G = te_transfer_matrix()
    out = np.zeros_like(u1)
    for g, u in ((G[1, 0], u1), (G[1, 2], u3)):
        m = realize_state_space(g, Ts)
        _, y, _ = signal.dlsim((m.A, m.B, m.C, m.D, Ts), u[:, None])
        out += np.ravel(y)
    return Y_SP[P_INDEX] + out


def plant_dump() -> dict:
    """Constants in a JSON-friendly layout."""
    G = te_transfer_matrix()
    entries = []
    for i in range(4):
        for j in range(4):
            g = G[i, j]
            if not g.is_zero:
                entries.append({
                    "row": OUTPUT_NAMES[i], "col": INPUT_NAMES[j],
                    "num": [float(c) for c in g.num],
                    "den": [float(c) for c in g.den],
                    "dead_time": g.dead_time,
                })
    return {
        "name": "te",
        "outputs": [{"name": r[0], "setpoint": r[1], "description": r[2], "units": r[3],
                     "threshold_low": r[4], "threshold_high": r[5]} for r in OUTPUT_SETPOINTS_TEXT],
        "inputs": [{"name": r[0], "setpoint": r[1], "description": r[2], "min": r[3], "max": r[4]}
                   for r in INPUT_SETPOINTS_TEXT],
        "transfer_functions": entries,
        "scenarios": {
            fam: [{"u1": a, "u3": b} for a, b in rows]
            for fam, rows in scenario_constants().items()
        },
        "baseline_controller": [
            {"input": INPUT_NAMES[lp.input], "output": OUTPUT_NAMES[lp.output], "kp": lp.kp, "ti": lp.ti}
            for lp in BASELINE_LOOPS
        ],
    }
