"""Discrete-time simulation of saturated linear plants.

The plant follows

    x[k+1] = A x[k] + B sat(u[k]) + w[k]
    y[k]   = C x[k] + v[k]

with optional Gaussian process/measurement noise, a pluggable controller and
an optional attack session (see :mod:`cpsres.adversary`) that may rewrite the
controller's view of ``y`` and the commands sent to the actuators.

All arrays are float64 numpy arrays. Models are usually expressed in deviation
coordinates about an operating point; :class:`Trajectory` carries the offsets
needed to recover engineering units.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ContractViolation, DivergenceError, NumericError

OVERFLOW_GUARD = 1e12


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if name == "B" else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def _as_vector(v, size: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if arr.shape != (size,):
        raise ContractViolation(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Discrete-time plant ``(A, B, C[, D])`` sampled every ``sample_time`` seconds.

    ``D`` is a direct feedthrough used by realizations of bi-proper transfer
    functions; closed-loop plants must keep it at zero.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sample_time: float = 1.0
    D: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ContractViolation(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ContractViolation(f"B must have {n} rows, got {B.shape[0]}")
        if C.shape[1] != n:
            raise ContractViolation(f"C must have {n} columns, got {C.shape[1]}")
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else _as_matrix(self.D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ContractViolation(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        ts = float(self.sample_time)
        if not (math.isfinite(ts) and ts > 0):
            raise ContractViolation(f"sample_time must be positive and finite, got {self.sample_time}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "sample_time", ts)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]

    def frequency_response(self, omega) -> np.ndarray:
        """Return ``H(e^{j w Ts})`` with shape ``(len(omega), m, p)``."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        n = self.state_dim
        out = np.empty((omega.size, self.output_dim, self.input_dim), dtype=complex)
        for i, w in enumerate(omega):
            z = np.exp(1j * w * self.sample_time)
            out[i] = self.C @ np.linalg.solve(z * np.eye(n) - self.A, self.B) + self.D
        return out

    def dc_gain(self) -> np.ndarray:
        n = self.state_dim
        return self.C @ np.linalg.solve(np.eye(n) - self.A, self.B) + self.D

    def steady_state(self, u) -> np.ndarray:
        """State ``x`` solving ``x = A x + B u`` for a constant input."""
        u = _as_vector(u, self.input_dim, "u")
        return np.linalg.solve(np.eye(self.state_dim) - self.A, self.B @ u)

    def spectral_radius(self) -> float:
        if self.state_dim == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Process (``Q``) and measurement (``R``) covariances plus an RNG seed."""

    Q: np.ndarray
    R: np.ndarray
    seed: int = 0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ContractViolation(f"{name} must be square")
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                raise ContractViolation(f"{name} must be symmetric")
            if M.size and np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ContractViolation(f"{name} must be positive semidefinite")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractViolation("seed must fit in 64 bits")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "seed", int(self.seed))

    @staticmethod
    def _factor(M: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh(M)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))

    def sampler(self) -> Callable[[], tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng(self.seed)
        LQ, LR = self._factor(self.Q), self._factor(self.R)
        n, m = LQ.shape[0], LR.shape[0]

        def draw():
            w = LQ @ rng.standard_normal(n)
            v = LR @ rng.standard_normal(m)
            return w, v

        return draw


@dataclass(frozen=True, eq=False)
class SaturationLimits:
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.u_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ContractViolation("u_min and u_max must be vectors of equal length")
        if not np.all(lo < hi):
            raise ContractViolation("u_min must be strictly below u_max for every input")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @classmethod
    def symmetric(cls, s_max, p: int = 1) -> "SaturationLimits":
        s = np.broadcast_to(np.asarray(s_max, dtype=float), (p,))
        return cls(-s, s.copy())

    @classmethod
    def unbounded(cls, p: int) -> "SaturationLimits":
        return cls(np.full(p, -np.inf), np.full(p, np.inf))

    @property
    def size(self) -> int:
        return self.u_min.size

    def shifted(self, offset) -> "SaturationLimits":
        """Express the same physical range in coordinates relative to ``offset``."""
        offset = _as_vector(offset, self.size, "offset")
        return SaturationLimits(self.u_min - offset, self.u_max - offset)


def saturate(u, limits: SaturationLimits) -> np.ndarray:
    """Clamp ``u`` componentwise into ``[u_min, u_max]``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != limits.u_min.shape:
        raise ContractViolation(f"input has length {u.size}, limits have {limits.size}")
    return np.minimum(np.maximum(u, limits.u_min), limits.u_max)


def step(model: StateSpaceModel, x, u, limits: SaturationLimits, w=None, v=None):
    """Advance one sample. Returns ``(x_next, y)`` with ``y = C x + D sat(u) + v``."""
    x = _as_vector(x, model.state_dim, "x")
    u = _as_vector(u, model.input_dim, "u")
    w = np.zeros(model.state_dim) if w is None else _as_vector(w, model.state_dim, "w")
    v = np.zeros(model.output_dim) if v is None else _as_vector(v, model.output_dim, "v")
    for name, arr in (("x", x), ("u", u), ("w", w), ("v", v)):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite entries in {name}")
    us = saturate(u, limits)
    x_next = model.A @ x + model.B @ us + w
    y = model.C @ x + model.D @ us + v
    return x_next, y


# --------------------------------------------------------------------------
# Controllers


class Policy(Protocol):
    def __call__(self, k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...


class Controller(Protocol):
    def policy(self, model: StateSpaceModel, limits: SaturationLimits) -> Policy: ...


@dataclass(frozen=True, eq=False)
class StateFeedback:
    """``u = K x``."""

    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))

    def policy(self, model, limits):
        if self.K.shape != (model.input_dim, model.state_dim):
            raise ContractViolation(
                f"gain must be {model.input_dim}x{model.state_dim}, got {self.K.shape}"
            )
        K = self.K
        return lambda k, x, y: K @ x


@dataclass(frozen=True)
class PILoop:
    input: int
    output: int
    kp: float
    ti: float | None = None  # integral time in seconds; None for P-only


@dataclass(frozen=True)
class DecentralizedPI:
    """Independent PI loops, one actuator per measured output.

    Anti-windup is conditional integration: the integrator is frozen whenever
    the loop's command sits beyond the actuator limit and the error would push
    it further out.
    """

    loops: tuple[PILoop, ...]
    setpoints: tuple[float, ...] | None = None
    anti_windup: bool = True

    def __post_init__(self):
        object.__setattr__(self, "loops", tuple(self.loops))
        ins = [lp.input for lp in self.loops]
        outs = [lp.output for lp in self.loops]
        if len(set(ins)) != len(ins) or len(set(outs)) != len(outs):
            raise ContractViolation("PI pairing must be injective in both inputs and outputs")

    def policy(self, model, limits):
        p, m = model.input_dim, model.output_dim
        for lp in self.loops:
            if not (0 <= lp.input < p and 0 <= lp.output < m):
                raise ContractViolation(f"loop {lp} does not fit a {m}x{p} plant")
        sp = np.zeros(m) if self.setpoints is None else _as_vector(self.setpoints, m, "setpoints")
        return _PIPolicy(self, sp, model.sample_time, limits)


class _PIPolicy:
    def __init__(self, ctrl: DecentralizedPI, sp, ts, limits):
        self.loops = ctrl.loops
        self.anti_windup = ctrl.anti_windup
        self.sp = sp
        self.ts = ts
        self.limits = limits
        self.p = limits.size
        self.integral = np.zeros(len(self.loops))

    def __call__(self, k, x, y):
        u = np.zeros(self.p)
        for idx, lp in enumerate(self.loops):
            e = self.sp[lp.output] - y[lp.output]
            if lp.ti is None:
                u[lp.input] = lp.kp * e
                continue
            i_new = self.integral[idx] + e * self.ts
            cmd = lp.kp * (e + i_new / lp.ti)
            if self.anti_windup:
                lo, hi = self.limits.u_min[lp.input], self.limits.u_max[lp.input]
                push = lp.kp * e
                if (cmd > hi and push > 0) or (cmd < lo and push < 0):
                    cmd = lp.kp * (e + self.integral[idx] / lp.ti)
                    i_new = self.integral[idx]
            self.integral[idx] = i_new
            u[lp.input] = cmd
        return u


def _zero_policy(p):
    z = np.zeros(p)
    return lambda k, x, y: z


# --------------------------------------------------------------------------
# Trajectories and rollout


@dataclass(eq=False)
class Trajectory:
    """Closed-loop rollout in model coordinates.

    ``u_offset``/``y_offset`` map model coordinates back to engineering units
    (``y`` and ``u_abs`` properties).
    """

    k: np.ndarray
    states: np.ndarray
    raw_inputs: np.ndarray
    saturated_inputs: np.ndarray
    outputs: np.ndarray
    sample_time: float = 1.0
    u_offset: np.ndarray | None = None
    y_offset: np.ndarray | None = None
    seen_outputs: np.ndarray | None = None

    def __post_init__(self):
        T = len(self.k)
        for name in ("states", "raw_inputs", "saturated_inputs", "outputs"):
            if len(getattr(self, name)) != T:
                raise ContractViolation(f"{name} length differs from step count")
        if self.u_offset is None:
            self.u_offset = np.zeros(self.raw_inputs.shape[1])
        if self.y_offset is None:
            self.y_offset = np.zeros(self.outputs.shape[1])
        if self.seen_outputs is None:
            self.seen_outputs = self.outputs

    def __len__(self):
        return len(self.k)

    @property
    def times(self) -> np.ndarray:
        return self.k * self.sample_time

    @property
    def y(self) -> np.ndarray:
        return self.outputs + self.y_offset

    @property
    def u_abs(self) -> np.ndarray:
        return self.raw_inputs + self.u_offset

    @property
    def usat_abs(self) -> np.ndarray:
        return self.saturated_inputs + self.u_offset

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def write_csv(self, fh) -> None:
        n = self.states.shape[1]
        p = self.raw_inputs.shape[1]
        m = self.outputs.shape[1]
        header = (
            ["k", "t_seconds"]
            + [f"x_{i}" for i in range(n)]
            + [f"u_{i}" for i in range(p)]
            + [f"usat_{i}" for i in range(p)]
            + [f"y_{i}" for i in range(m)]
        )
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        u, us, y = self.u_abs, self.usat_abs, self.y
        for i, k in enumerate(self.k):
            row = [str(int(k)), repr(float(k * self.sample_time))]
            row += [repr(float(a)) for a in self.states[i]]
            row += [repr(float(a)) for a in u[i]]
            row += [repr(float(a)) for a in us[i]]
            row += [repr(float(a)) for a in y[i]]
            writer.writerow(row)


def simulate(
    model: StateSpaceModel,
    controller: Controller | None,
    x0,
    horizon: int,
    noise: NoiseSpec | None = None,
    limits: SaturationLimits | None = None,
    attack=None,
    *,
    u_ext=None,
    u_offset=None,
    y_offset=None,
    overflow_guard: float = OVERFLOW_GUARD,
) -> Trajectory:
    """Closed-loop rollout for ``horizon`` steps (``k = 0 .. horizon-1``).

    ``u_ext`` is an optional ``(horizon, p)`` exogenous input added to the
    controller command. ``attack`` is anything exposing
    ``session(model, limits, u_offset, y_offset)``.
    """
    if horizon < 1:
        raise ContractViolation("horizon must be at least 1")
    if np.any(model.D != 0):
        raise ContractViolation("closed-loop plants must have zero feedthrough")
    n, p, m = model.state_dim, model.input_dim, model.output_dim
    limits = SaturationLimits.unbounded(p) if limits is None else limits
    if limits.size != p:
        raise ContractViolation(f"limits cover {limits.size} inputs, plant has {p}")
    u_offset = np.zeros(p) if u_offset is None else _as_vector(u_offset, p, "u_offset")
    y_offset = np.zeros(m) if y_offset is None else _as_vector(y_offset, m, "y_offset")
    if u_ext is not None:
        u_ext = np.asarray(u_ext, dtype=float).reshape(horizon, p)
    policy = _zero_policy(p) if controller is None else controller.policy(model, limits)
    session = None if attack is None else attack.session(model, limits, u_offset, y_offset)
    draw = None if noise is None else noise.sampler()
    if draw is not None and (noise.Q.shape != (n, n) or noise.R.shape != (m, m)):
        raise ContractViolation("noise covariances do not match plant dimensions")

    xs = np.empty((horizon, n))
    us_raw = np.empty((horizon, p))
    us_sat = np.empty((horizon, p))
    ys = np.empty((horizon, m))
    seen = np.empty((horizon, m)) if session is not None else None

    A, B, C = model.A, model.B, model.C
    x = _as_vector(x0, n, "x0").copy()
    zero_n, zero_m = np.zeros(n), np.zeros(m)
    for k in range(horizon):
        norm = float(np.linalg.norm(x))
        if not math.isfinite(norm) or norm > overflow_guard:
            raise DivergenceError(k, norm)
        w, v = draw() if draw is not None else (zero_n, zero_m)
        y = C @ x + v
        y_seen = y if session is None else session.sensor(k, y, x)
        u = np.asarray(policy(k, x, y_seen), dtype=float)
        if u_ext is not None:
            u = u + u_ext[k]
        if session is not None:
            u = session.actuator(k, u, x)
        usat = np.minimum(np.maximum(u, limits.u_min), limits.u_max)
        xs[k], us_raw[k], us_sat[k], ys[k] = x, u, usat, y
        if seen is not None:
            seen[k] = y_seen
        x = A @ x + B @ usat + w

    return Trajectory(
        k=np.arange(horizon),
        states=xs,
        raw_inputs=us_raw,
        saturated_inputs=us_sat,
        outputs=ys,
        sample_time=model.sample_time,
        u_offset=u_offset,
        y_offset=y_offset,
        seen_outputs=seen,
    )


# --------------------------------------------------------------------------
# Discretization


def discretize_zoh(Ac, Bc, Cc, Ts: float, Dc=None) -> StateSpaceModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if not (Ts > 0 and math.isfinite(Ts)):
        raise ContractViolation("Ts must be positive")
    Ac = _as_matrix(Ac, "A")
    Bc = _as_matrix(Bc, "B")
    n, p = Ac.shape[0], Bc.shape[1]
    M = np.zeros((n + p, n + p))
    M[:n, :n] = Ac
    M[:n, n:] = Bc
    E = expm(M * Ts)
    if not np.all(np.isfinite(E)):
        raise NumericError("matrix exponential is not finite")
    return StateSpaceModel(E[:n, :n], E[:n, n:], Cc, Ts, Dc)


def block_diagonal(models: Sequence[StateSpaceModel]) -> StateSpaceModel:
    """Stack models side by side (inputs and outputs concatenated)."""
    from scipy.linalg import block_diag

    ts = {m.sample_time for m in models}
    if len(ts) != 1:
        raise ContractViolation("models must share a sample time")
    return StateSpaceModel(
        block_diag(*[m.A for m in models]),
        block_diag(*[m.B for m in models]),
        block_diag(*[m.C for m in models]),
        ts.pop(),
        block_diag(*[m.D for m in models]),
    )
