"""Scenario configuration: JSON schema, line-anchored validation and
construction of the runnable objects (plant, controller, attack, variables).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import te_benchmark as te
from .adversary import AdversaryModel, SaturationAttackScenario, scenario_table
from .errors import ConfigError, CPSResError
from .lti_core import (
    DecentralizedPI,
    NoiseSpec,
    PILoop,
    SaturationLimits,
    StateFeedback,
    StateSpaceModel,
    discretize_zoh,
)
from .metrics import DEFAULT_BAND, VariableSpec
from .structure import ComponentTopology
from .tf_algebra import (
    DecompositionSelection,
    RationalTF,
    TransferFunctionMatrix,
    build_D,
    compute_Q,
    realize_matrix,
    realize_minimal,
)

SCHEMA_VERSION = 1

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_key = {"type": "string", "pattern": "^[0-9a-fA-F]{64}$"}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA: dict = _obj({
    "version": {"const": SCHEMA_VERSION},
    "plant": {"oneOf": [
        {"enum": ["te", "demo2", "scalar"]},
        _obj({"tf_text": {"type": "string"}}, ["tf_text"]),
        _obj({"tf_file": {"type": "string"}}, ["tf_file"]),
        _obj({"state_space": _obj({
            "A": _matrix, "B": _matrix, "C": _matrix, "continuous": {"type": "boolean"},
        }, ["A", "B", "C"])}, ["state_space"]),
    ]},
    "sample_time": {"type": "number", "exclusiveMinimum": 0},
    "delay_mode": {"enum": ["discrete_shift", "pade"]},
    "horizon": {"type": "integer", "minimum": 1},
    "x0": _vector,
    "operating_point": _obj({"u": _vector, "y": _vector}),
    "limits": _obj({"u_min": _vector, "u_max": _vector}, ["u_min", "u_max"]),
    "controller": _obj({
        "type": {"enum": ["baseline", "pi", "state_feedback", "none", "network"]},
        "loops": {"type": "array", "items": _obj({
            "input": {"type": "integer", "minimum": 0},
            "output": {"type": "integer", "minimum": 0},
            "kp": {"type": "number"},
            "ti": {"type": ["number", "null"], "exclusiveMinimum": 0},
        }, ["input", "output", "kp"])},
        "K": _matrix,
        "anti_windup": {"type": "boolean"},
    }, ["type"]),
    "variables": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "output": {"type": "integer", "minimum": 0},
        "setpoint": {"type": "number"},
        "threshold_low": {"type": ["number", "null"]},
        "threshold_high": {"type": ["number", "null"]},
        "weight": {"type": "number", "minimum": 0, "maximum": 1},
    }, ["name", "output", "setpoint"])},
    "noise": _obj({"Q": _matrix, "R": _matrix, "seed": {"type": "integer"}}, ["Q", "R", "seed"]),
    "attack": _obj({
        "type": {"enum": ["none", "saturation", "table", "adversary"]},
        "start_step": {"type": "integer", "minimum": 0},
        "duration": {"type": ["integer", "null"], "minimum": 0},
        "stuck_levels": {"type": "object", "additionalProperties": {"type": "number"}},
        "table": {"enum": ["max_pressure", "min_pressure"]},
        "index": {"type": "integer", "minimum": 1, "maximum": 3},
        "b_prime": _matrix,
        "c_prime": _matrix,
        "command": {"oneOf": [{"enum": ["max", "min"]}, _vector]},
        "attacked_inputs": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "sensor_policy": {"enum": [None, "replay", "fabricate"]},
    }, ["type"]),
    "metrics": _obj({
        "KA": {"type": "integer", "minimum": 0},
        "band_fraction": {"type": "number", "exclusiveMinimum": 0},
        "direction": {"enum": ["max", "min", "both"]},
        "max_recovery": {"type": "integer", "minimum": 1},
    }),
    "topology": _obj({
        "actuators": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "integer"}}},
        "sensors": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "integer"}}},
        "controllers": {"type": "object", "additionalProperties": _obj({
            "actuators": {"type": "array", "items": {"type": "string"}},
            "sensors": {"type": "array", "items": {"type": "string"}},
        })},
        "links": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}},
        "realization": {"enum": ["minimal", "entrywise"]},
    }),
    "montecarlo": _obj({
        "n_runs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "family": {"enum": ["max_pressure", "min_pressure"]},
        "stuck_ranges": {"type": "object", "additionalProperties": {
            "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
        "start_range": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "duration": {"type": "integer", "minimum": 0},
        "direction": {"enum": ["max", "min"]},
    }),
    "switched": _obj({
        "interval": {"type": "integer", "minimum": 1},
        "K1": _key,
        "K2": _key,
        "selection": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "D_text": {"type": "string"},
        "loop_controllers": {"type": "array", "items": _obj({
            "kp": {"type": "number"}, "ti": {"type": ["number", "null"], "exclusiveMinimum": 0},
        }, ["kp"])},
        "networks": {"type": "array", "minItems": 1, "items": _obj({
            "parallel": {"type": "array", "items": {
                "type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}},
            "latency": {"enum": [0, 1]},
        })},
        "guard": {"type": "integer", "minimum": 0},
        "warmup": {"type": "integer", "minimum": 1},
    }, ["K1", "loop_controllers"]),
    "output": _obj({
        "trajectory_csv": {"type": "string"},
        "report_json": {"type": "string"},
    }),
}, ["plant"])


def schema_text() -> str:
    return json.dumps(SCHEMA, indent=2)


def _locate(text: str, path) -> int | None:
    """Best-effort 1-based line of the JSON value at ``path``."""
    pos = 0
    found = None
    for part in path:
        if isinstance(part, str):
            idx = text.find(json.dumps(part), pos)
            if idx < 0:
                break
            pos = idx
            found = idx
        else:
            # skip to the part-th element: good enough to anchor on the parent
            continue
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def parse_config(text: str, base_dir: Path | None = None) -> dict:
    """Parse and validate a scenario document; errors carry line numbers."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for err in errors:
            path = list(err.absolute_path)
            if err.validator == "additionalProperties":
                extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
                path = path + extra[:1]
            line = _locate(text, path)
            where = "/".join(map(str, path)) or "<root>"
            prefix = f"line {line}: " if line else ""
            msgs.append(f"{prefix}{where}: {err.message}")
        raise ConfigError("\n".join(msgs))
    if base_dir is not None:
        plant = doc["plant"]
        if isinstance(plant, dict) and "tf_file" in plant:
            f = Path(plant["tf_file"])
            f = f if f.is_absolute() else base_dir / f
            if not f.exists():
                raise ConfigError(f"line {_locate(text, ['plant', 'tf_file'])}: plant/tf_file: {f} does not exist")
            doc["plant"] = {"tf_text": f.read_text()}
    return doc


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, path.parent)


# ---------------------------------------------------------------------------
# Built-in plants


def demo2_transfer_matrix() -> TransferFunctionMatrix:
    """Small coupled 2x2 plant used by examples and tests."""
    return TransferFunctionMatrix([
        [RationalTF([1.0], [5.0, 1.0]), RationalTF([0.5], [10.0, 1.0])],
        [RationalTF([0.3], [8.0, 1.0]), RationalTF([1.0], [4.0, 1.0])],
    ])


@dataclass
class Scenario:
    doc: dict
    model: StateSpaceModel
    limits: SaturationLimits
    u_offset: np.ndarray
    y_offset: np.ndarray
    variables: list[VariableSpec]
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    tf: TransferFunctionMatrix | None = None
    horizon: int = 3000
    x0: np.ndarray | None = None
    noise: NoiseSpec | None = None
    controller: Any = None
    attack: Any = None
    KA: int = te.DEFAULT_KA
    band_fraction: float = DEFAULT_BAND
    direction: str = "both"
    max_recovery: int = 20000
    builtin: str | None = None
    extras: dict = field(default_factory=dict)

    def structure_model(self) -> StateSpaceModel:
        how = self.doc.get("topology", {}).get("realization", "minimal")
        if self.tf is not None and how == "minimal":
            return realize_minimal(self.tf, self.model.sample_time)
        return self.model

    def topology(self) -> ComponentTopology:
        spec = self.doc.get("topology")
        if spec and spec.get("actuators"):
            return ComponentTopology.from_dict(spec)
        return ComponentTopology.one_per_signal(self.model.input_dim, self.model.output_dim)


def _input_index(key: str, names) -> int:
    if key in names:
        return names.index(key)
    try:
        return int(key)
    except ValueError:
        raise ConfigError(f"unknown input {key!r}") from None


def _plant(doc: dict):
    plant = doc["plant"]
    Ts = float(doc.get("sample_time", 1.0))
    delay_mode = doc.get("delay_mode", "discrete_shift")
    if plant == "te":
        return dict(model=te.te_plant(Ts, delay_mode), tf=te.te_transfer_matrix(), u_offset=te.U_SP.copy(),
                    y_offset=te.Y_SP.copy(), limits=te.te_limits(), variables=te.te_variables(),
                    input_names=te.INPUT_NAMES, output_names=te.OUTPUT_NAMES,
                    controller=te.te_baseline_controller(), builtin="te")
    if plant == "scalar":
        # x+ = 0.5 x + u about y = 10, u = 5; |u - 5| <= 1; closed-loop pole 0.4
        model = StateSpaceModel([[0.5]], [[1.0]], [[1.0]], Ts)
        return dict(model=model, tf=None, u_offset=np.array([5.0]), y_offset=np.array([10.0]),
                    limits=SaturationLimits.symmetric(1.0, 1),
                    variables=[VariableSpec("y", 10.0, 0, 5.0, 15.0, 1.0)],
                    input_names=("u",), output_names=("y",), controller=StateFeedback([[-0.1]]),
                    builtin="scalar")
    if plant == "demo2":
        G = demo2_transfer_matrix()
        model = realize_matrix(G, Ts, delay_mode)
        return dict(model=model, tf=G, u_offset=np.zeros(2), y_offset=np.zeros(2),
                    limits=SaturationLimits.symmetric(10.0, 2),
                    variables=[VariableSpec("y0", 0.0, 0), VariableSpec("y1", 0.0, 1)],
                    input_names=("u0", "u1"), output_names=("y0", "y1"),
                    controller=DecentralizedPI((PILoop(0, 0, 1.0, 5.0), PILoop(1, 1, 1.0, 4.0))),
                    builtin="demo2")
    if "tf_text" in plant:
        G = TransferFunctionMatrix.from_text(plant["tf_text"])
        model = realize_matrix(G, Ts, delay_mode)
    else:
        ss = plant["state_space"]
        if ss.get("continuous"):
            model = discretize_zoh(ss["A"], ss["B"], ss["C"], Ts)
        else:
            model = StateSpaceModel(ss["A"], ss["B"], ss["C"], Ts)
        G = None
    p, m = model.input_dim, model.output_dim
    return dict(model=model, tf=G, u_offset=np.zeros(p), y_offset=np.zeros(m),
                limits=SaturationLimits.unbounded(p),
                variables=[VariableSpec(f"y{i}", 0.0, i) for i in range(m)],
                input_names=tuple(f"u{j}" for j in range(p)), output_names=tuple(f"y{i}" for i in range(m)),
                controller=None, builtin=None)


def _attack(spec: dict | None, sc: Scenario):
    if not spec or spec["type"] == "none":
        return None
    start = spec.get("start_step", 0)
    duration = spec.get("duration", sc.KA)
    kind = spec["type"]
    if kind == "table":
        if "table" not in spec or "index" not in spec:
            raise ConfigError("attack: table attacks need 'table' and 'index'")
        return scenario_table(spec["table"], spec["index"], start, duration)
    if kind == "saturation":
        levels = spec.get("stuck_levels")
        if not levels:
            raise ConfigError("attack: saturation attacks need nonempty 'stuck_levels'")
        return SaturationAttackScenario({_input_index(k, sc.input_names): v for k, v in levels.items()},
                                        start, duration, "config")
    B = spec.get("b_prime", sc.model.B)
    C = spec.get("c_prime", sc.model.C)
    cmd = spec.get("command", "max")
    inputs = spec.get("attacked_inputs")
    return AdversaryModel(B, C, cmd if isinstance(cmd, str) else np.asarray(cmd, dtype=float), start, duration,
                          None if inputs is None else tuple(inputs), spec.get("sensor_policy"))


def _controller(spec: dict | None, sc: Scenario, default):
    if spec is None or spec["type"] == "baseline":
        return default
    kind = spec["type"]
    if kind == "none":
        return None
    if kind == "pi":
        loops = tuple(PILoop(lp["input"], lp["output"], lp["kp"], lp.get("ti")) for lp in spec.get("loops", ()))
        return DecentralizedPI(loops, anti_windup=spec.get("anti_windup", True))
    if kind == "state_feedback":
        if "K" not in spec:
            raise ConfigError("controller: state_feedback needs 'K'")
        return StateFeedback(spec["K"])
    from .switched import NetworkController  # network controllers come from the switched section

    nets = build_networks(sc)
    return NetworkController(nets[0], network_setpoints(sc))


def build_scenario(doc: dict) -> Scenario:
    """Turn a validated config document into runnable objects."""
    try:
        parts = _plant(doc)
        default_ctrl = parts.pop("controller")
        op = doc.get("operating_point")
        model = parts["model"]
        if op:
            if "u" in op:
                parts["u_offset"] = np.asarray(op["u"], dtype=float)
            if "y" in op:
                parts["y_offset"] = np.asarray(op["y"], dtype=float)
        if "limits" in doc:
            lim = SaturationLimits(doc["limits"]["u_min"], doc["limits"]["u_max"])
            parts["limits"] = lim.shifted(parts["u_offset"])
        if "variables" in doc:
            parts["variables"] = [
                VariableSpec(v["name"], v["setpoint"], v["output"], v.get("threshold_low"),
                             v.get("threshold_high"), v.get("weight", 0.0))
                for v in doc["variables"]
            ]
        for v in parts["variables"]:
            if v.output >= model.output_dim:
                raise ConfigError(f"variables: output {v.output} out of range for {model.output_dim} outputs")
        metrics = doc.get("metrics", {})
        sc = Scenario(doc=doc, **parts)
        sc.horizon = doc.get("horizon", sc.horizon)
        sc.x0 = np.asarray(doc["x0"], dtype=float) if "x0" in doc else np.zeros(model.state_dim)
        if "noise" in doc:
            n = doc["noise"]
            sc.noise = NoiseSpec(n["Q"], n["R"], n["seed"])
        sc.KA = metrics.get("KA", sc.KA)
        sc.band_fraction = metrics.get("band_fraction", sc.band_fraction)
        sc.direction = metrics.get("direction", sc.direction)
        sc.max_recovery = metrics.get("max_recovery", sc.max_recovery)
        sc.controller = _controller(doc.get("controller"), sc, default_ctrl)
        sc.attack = _attack(doc.get("attack"), sc)
        return sc
    except ConfigError:
        raise
    except (CPSResError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Switched section helpers


def network_setpoints(sc: Scenario) -> np.ndarray:
    sp = np.zeros(sc.model.output_dim)
    for v in sc.variables:
        sp[v.output] = v.setpoint - sc.y_offset[v.output]
    return sp


def decomposition_for(sc: Scenario):
    """(D, Q) from the switched section: explicit ``D_text`` or a selection on the plant."""
    spec = sc.doc.get("switched", {})
    if "D_text" in spec:
        D = TransferFunctionMatrix.from_text(spec["D_text"])
        return D, None
    if sc.tf is None:
        raise ConfigError("switched: plant has no transfer-function form; give D_text")
    n = sc.tf.shape[0]
    rows = spec.get("selection")
    sel = DecompositionSelection.diagonal(n) if rows is None else DecompositionSelection(tuple(r - 1 for r in rows))
    D = build_D(sc.tf, sel)
    return D, compute_Q(sc.tf, D)


def build_networks(sc: Scenario):
    from .switched import build_network, pi_block

    spec = sc.doc.get("switched")
    if not spec:
        raise ConfigError("controller type 'network' needs a 'switched' section")
    Ts = sc.model.sample_time
    D, Q = decomposition_for(sc)
    ctrls = [pi_block(c["kp"], c.get("ti"), Ts) for c in spec["loop_controllers"]]
    nets = []
    for i, net in enumerate(spec.get("networks", [{}])):
        parallel = [(a - 1, b - 1) for a, b in net.get("parallel", [])]
        nets.append(build_network(D, ctrls, Ts, Q=Q, parallel=parallel, latency=net.get("latency", 1),
                                  label=f"network{i}"))
    return nets
