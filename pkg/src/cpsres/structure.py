"""Rank-based structural analysis and t-resilience indices.

A component is removed by zeroing the ``B`` columns or ``C`` rows it provides,
so matrix dimensions never change. Each index reported is the largest ``t``
such that removing any ``t`` components of one kind keeps the rank
conditions; the witness is the first failing subset of size ``t + 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CombinatorialGuard, ContractViolation

MAX_SUBSETS = 10**6


def _default_tol(n: int) -> float:
    return n * np.finfo(float).eps * 1e3


def numerical_rank(M: np.ndarray, tol: float | None = None) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    tol = _default_tol(max(M.shape)) if tol is None else tol
    return int(np.sum(sv > tol * sv[0]))


def controllability_matrix(A, B) -> np.ndarray:
    """``[B | AB | ... | A^(n-1) B]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C) -> np.ndarray:
    """``[C; CA; ...; C A^(n-1)]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    return controllability_matrix(A.T, C.T).T


def is_controllable(A, B, tol: float | None = None) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return numerical_rank(controllability_matrix(A, B), _default_tol(n) if tol is None else tol) == n


def is_observable(A, C, tol: float | None = None) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return numerical_rank(observability_matrix(A, C), _default_tol(n) if tol is None else tol) == n


@dataclass(frozen=True)
class ComponentTopology:
    """Attack-surface components and the plant signals they provide.

    ``actuators`` map names to ``B`` column indices, ``sensors`` to ``C`` row
    indices. ``controllers`` own actuator and sensor names; ``links`` carry
    actuator and sensor names. A signal shared by several controllers (or
    links) is lost only when all of them are removed.
    """

    actuators: Mapping[str, tuple[int, ...]]
    sensors: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    controllers: Mapping[str, tuple[tuple[str, ...], tuple[str, ...]]] = field(default_factory=dict)
    links: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "actuators", {k: tuple(int(i) for i in v) for k, v in self.actuators.items()})
        object.__setattr__(self, "sensors", {k: tuple(int(i) for i in v) for k, v in self.sensors.items()})
        object.__setattr__(self, "controllers", {
            k: (tuple(v[0]), tuple(v[1])) for k, v in self.controllers.items()
        })
        object.__setattr__(self, "links", {k: tuple(v) for k, v in self.links.items()})
        if set(self.actuators) & set(self.sensors):
            raise ContractViolation("actuator and sensor names must be distinct")
        for name, (acts, sens) in self.controllers.items():
            for a in acts:
                if a not in self.actuators:
                    raise ContractViolation(f"controller {name} owns unknown actuator {a}")
            for s in sens:
                if s not in self.sensors:
                    raise ContractViolation(f"controller {name} owns unknown sensor {s}")
        for name, signals in self.links.items():
            for sig in signals:
                if sig not in self.actuators and sig not in self.sensors:
                    raise ContractViolation(f"link {name} carries unknown signal {sig}")

    def validate(self, p: int, m: int) -> None:
        """Every B column and C row must belong to exactly one component."""
        for kind, mapping, size in (("B column", self.actuators, p), ("C row", self.sensors, m)):
            owners = [i for idx in mapping.values() for i in idx]
            if sorted(owners) != list(range(size)):
                raise ContractViolation(f"each {kind} must belong to exactly one component")

    @classmethod
    def one_per_signal(cls, p: int, m: int, controllers: str = "per_loop") -> "ComponentTopology":
        """Non-redundant layout: one actuator per column, one sensor per row,
        one link per signal, and either one controller per actuator/sensor pair
        (``per_loop``) or a single controller owning everything (``central``)."""
        acts = {f"a{j}": (j,) for j in range(p)}
        sens = {f"s{i}": (i,) for i in range(m)}
        if controllers == "central":
            ctrls = {"c0": (tuple(acts), tuple(sens))}
        else:
            ctrls = {}
            for k in range(max(p, m)):
                ctrls[f"c{k}"] = ((f"a{k}",) if k < p else (), (f"s{k}",) if k < m else ())
        links = {name: (name,) for name in [*acts, *sens]}
        return cls(acts, sens, ctrls, links)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComponentTopology":
        ctrls = {}
        for name, c in d.get("controllers", {}).items():
            ctrls[name] = (tuple(c.get("actuators", ())), tuple(c.get("sensors", ())))
        return cls(
            {k: tuple(v) for k, v in d.get("actuators", {}).items()},
            {k: tuple(v) for k, v in d.get("sensors", {}).items()},
            ctrls,
            {k: tuple(v) for k, v in d.get("links", {}).items()},
        )

    def to_dict(self) -> dict:
        return {
            "actuators": {k: list(v) for k, v in self.actuators.items()},
            "sensors": {k: list(v) for k, v in self.sensors.items()},
            "controllers": {k: {"actuators": list(a), "sensors": list(s)} for k, (a, s) in self.controllers.items()},
            "links": {k: list(v) for k, v in self.links.items()},
        }

    def mirrored(self) -> "ComponentTopology":
        """Swap actuators and sensors (for the transposed dual system)."""
        return ComponentTopology(
            self.sensors, self.actuators,
            {k: (s, a) for k, (a, s) in self.controllers.items()},
            self.links,
        )

    def _lost_signals(self, owners: Mapping[str, Sequence[str]], removed: Sequence[str]) -> set[str]:
        removed = set(removed)
        providers: dict[str, set[str]] = {}
        for comp, signals in owners.items():
            for sig in signals:
                providers.setdefault(sig, set()).add(comp)
        return {sig for sig, comps in providers.items() if comps <= removed}

    def masks(self, kind: str, removed: Sequence[str], p: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Boolean keep-masks over B columns and C rows after removing components."""
        keep_b = np.ones(p, dtype=bool)
        keep_c = np.ones(m, dtype=bool)
        if kind == "actuator":
            lost = set(removed)
        elif kind == "sensor":
            lost = set(removed)
        elif kind == "controller":
            lost = self._lost_signals({k: (*a, *s) for k, (a, s) in self.controllers.items()}, removed)
        elif kind == "link":
            lost = self._lost_signals(self.links, removed)
        else:
            raise ContractViolation(f"unknown component kind {kind!r}")
        for name in lost:
            if name in self.actuators:
                keep_b[list(self.actuators[name])] = False
            elif name in self.sensors:
                keep_c[list(self.sensors[name])] = False
        return keep_b, keep_c

    def components(self, kind: str) -> list[str]:
        return list({"actuator": self.actuators, "sensor": self.sensors,
                     "controller": self.controllers, "link": self.links}[kind])


@dataclass(frozen=True)
class TResilience:
    t: int
    witness: tuple[str, ...] | None  # None when no subset fails
    subsets_tested: int


def _max_t(names: Sequence[str], passes: Callable[[tuple[str, ...]], bool],
           max_subsets: int | None) -> TResilience:
    tested = 1
    if not passes(()):
        return TResilience(0, (), tested)
    K = len(names)
    for t in range(1, K + 1):
        count = math.comb(K, t)
        if max_subsets is not None and tested + count > max_subsets:
            raise CombinatorialGuard(
                f"testing {tested + count} subsets exceeds the cap of {max_subsets}; pass max_subsets=None to override"
            )
        for subset in itertools.combinations(names, t):
            tested += 1
            if not passes(subset):
                return TResilience(t - 1, subset, tested)
    return TResilience(K, None, tested)


def _masked(B, C, keep_b, keep_c):
    return B * keep_b[None, :], C * keep_c[:, None]


def _resilience(kind: str, A, B, C, topology: ComponentTopology, need_ctrb: bool, need_obsv: bool,
                tol, max_subsets) -> TResilience:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    C = np.zeros((0, n)) if C is None else np.asarray(C, dtype=float).reshape(-1, n)
    p, m = B.shape[1], C.shape[0]

    def passes(removed):
        kb, kc = topology.masks(kind, removed, p, m)
        Bm, Cm = _masked(B, C, kb, kc)
        if need_ctrb and not is_controllable(A, Bm, tol):
            return False
        return not need_obsv or is_observable(A, Cm, tol)

    return _max_t(topology.components(kind), passes, max_subsets)


def t_actuator_resilience(A, B, topology: ComponentTopology, tol=None, max_subsets=MAX_SUBSETS) -> TResilience:
    """Largest t such that zeroing any t actuators keeps (A, B) controllable."""
    return _resilience("actuator", A, B, None, topology, True, False, tol, max_subsets)


def t_sensor_resilience(A, C, topology: ComponentTopology, tol=None, max_subsets=MAX_SUBSETS) -> TResilience:
    """Largest t such that zeroing any t sensors keeps (A, C) observable."""
    return _resilience("sensor", A, None, C, topology, False, True, tol, max_subsets)


def t_control_resilience(A, B, C, topology: ComponentTopology, tol=None, max_subsets=MAX_SUBSETS) -> TResilience:
    return _resilience("controller", A, B, C, topology, True, True, tol, max_subsets)


def t_communication_resilience(A, B, C, topology: ComponentTopology, tol=None,
                               max_subsets=MAX_SUBSETS) -> TResilience:
    return _resilience("link", A, B, C, topology, True, True, tol, max_subsets)


@dataclass
class StructuralReport:
    controllable: bool
    observable: bool
    R_A: int
    R_S: int
    R_C: int | None
    R_N: int | None
    witnesses: dict[str, list[str] | None]
    version: int = 1

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "controllable": self.controllable,
            "observable": self.observable,
            "R_A": self.R_A,
            "R_S": self.R_S,
            "R_C": self.R_C,
            "R_N": self.R_N,
            "witnesses": self.witnesses,
        }


def structural_report(A, B, C, topology: ComponentTopology, tol=None, max_subsets=MAX_SUBSETS) -> StructuralReport:
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    topology.validate(B.shape[1], C.shape[0])
    ra = t_actuator_resilience(A, B, topology, tol, max_subsets)
    rs = t_sensor_resilience(A, C, topology, tol, max_subsets)
    rc = t_control_resilience(A, B, C, topology, tol, max_subsets) if topology.controllers else None
    rn = t_communication_resilience(A, B, C, topology, tol, max_subsets) if topology.links else None

    def w(r):
        return None if r is None or r.witness is None else list(r.witness)

    return StructuralReport(
        controllable=is_controllable(A, B, tol),
        observable=is_observable(A, C, tol),
        R_A=ra.t,
        R_S=rs.t,
        R_C=None if rc is None else rc.t,
        R_N=None if rn is None else rn.t,
        witnesses={"actuator": w(ra), "sensor": w(rs), "controller": w(rc), "link": w(rn)},
    )
