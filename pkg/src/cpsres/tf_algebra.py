"""Rational transfer functions, adjugates and the D/Q decentralized decomposition.

A :class:`RationalTF` is kept in gain/zero/pole form,

    g(s) = gain * prod(s - z_i) / prod(s - p_i) * exp(-dead_time * s),

which keeps products and quotients exact (root lists are concatenated and
identical factors cancel). Only sums expand to coefficients and re-factor the
numerator. Coefficient views (``num``/``den``, descending powers, monic
denominator) are derived on demand.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import (
    ContractViolation,
    DecompositionFailure,
    NonRealizableSelection,
    NumericError,
    UnsupportedOperation,
)
from .lti_core import StateSpaceModel, discretize_zoh

CANCEL_TOL = 1e-9  # relative coefficient tolerance for cancellation in sums
ROOT_MATCH_TOL = 1e-9  # relative distance under which a zero cancels a pole
ROOT_CLUSTER_TOL = 1e-5  # relative spread under which coefficient roots count as repeated
MAX_ADJUGATE_SIZE = 6
MAX_MULTIPLICITY = 4


def _sort_roots(r) -> np.ndarray:
    r = np.asarray(r, dtype=complex).ravel()
    if r.size == 0:
        return r
    return r[np.lexsort((r.imag, r.real))]


def _merge_repeated(r, tol: float = ROOT_CLUSTER_TOL) -> np.ndarray:
    """Collapse the scattered copies a root finder returns for a repeated root.

    A root of multiplicity k comes back spread over a radius of about eps**(1/k);
    roots closer than ``tol`` (relative) are replaced by their mean, and a
    cluster whose mean is numerically real is made exactly real.
    """
    r = list(np.asarray(r, dtype=complex).ravel())
    out = []
    while r:
        seed = r.pop(0)
        group = [seed]
        for z in list(r):
            if abs(z - seed) <= tol * max(abs(seed), 1.0):
                group.append(z)
                r.remove(z)
        c = complex(np.mean(group))
        if len(group) > 1 and abs(c.imag) <= tol * max(abs(c), 1.0):
            c = complex(c.real, 0.0)
        out.extend([c] * len(group))
    return _sort_roots(out)


def _real_poly(roots) -> np.ndarray:
    if len(roots) == 0:
        return np.array([1.0])
    return np.real(np.poly(roots))


def _trim(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    return c[nz[0]:] if nz.size else np.array([0.0])


def _roots_close(a: complex, b: complex, tol: float) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300) or a == b


def _cancel(zeros: np.ndarray, poles: np.ndarray, tol: float = ROOT_MATCH_TOL):
    """Remove zero/pole pairs that coincide within ``tol`` (relative)."""
    if zeros.size == 0 or poles.size == 0:
        return zeros, poles
    poles = list(poles)
    kept = []
    for z in zeros:
        hit = None
        for i, p in enumerate(poles):
            if _roots_close(z, p, tol):
                hit = i
                break
        if hit is None:
            kept.append(z)
        else:
            poles.pop(hit)
    return _sort_roots(kept), _sort_roots(poles)


class RationalTF:
    """Scalar rational transfer function with optional dead time (seconds)."""

    __slots__ = ("gain", "zeros", "poles", "dead_time")

    def __init__(self, num: Sequence[float] | float = 0.0, den: Sequence[float] | float = 1.0,
                 dead_time: float = 0.0):
        num = _trim(np.atleast_1d(np.asarray(num, dtype=float)))
        den = _trim(np.atleast_1d(np.asarray(den, dtype=float)))
        if den[0] == 0:
            raise ContractViolation("denominator must not be identically zero")
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise NumericError("non-finite coefficients")
        dead_time = float(dead_time)
        if dead_time < 0 or not math.isfinite(dead_time):
            raise ContractViolation("dead_time must be finite and non-negative")
        self.dead_time = dead_time
        if num[0] == 0:
            self._set_zero()
            return
        self.gain = float(num[0] / den[0])
        self.zeros, self.poles = _cancel(_merge_repeated(np.roots(num)), _merge_repeated(np.roots(den)), 0.0)

    def _set_zero(self):
        self.gain = 0.0
        self.zeros = np.zeros(0, dtype=complex)
        self.poles = np.zeros(0, dtype=complex)

    @classmethod
    def from_zpk(cls, gain: float, zeros=(), poles=(), dead_time: float = 0.0,
                 cancel_tol: float = ROOT_MATCH_TOL) -> "RationalTF":
        tf = cls.__new__(cls)
        tf.dead_time = float(dead_time)
        if gain == 0:
            tf._set_zero()
            return tf
        tf.gain = float(gain)
        tf.zeros, tf.poles = _cancel(_sort_roots(zeros), _sort_roots(poles), cancel_tol)
        return tf

    @classmethod
    def constant(cls, k: float) -> "RationalTF":
        return cls.from_zpk(k)

    @classmethod
    def zero(cls) -> "RationalTF":
        return cls.from_zpk(0.0)

    @classmethod
    def one(cls) -> "RationalTF":
        return cls.from_zpk(1.0)

    # -- views ---------------------------------------------------------------

    @property
    def num(self) -> np.ndarray:
        return self.gain * _real_poly(self.zeros)

    @property
    def den(self) -> np.ndarray:
        return _real_poly(self.poles)

    @property
    def is_zero(self) -> bool:
        return self.gain == 0.0

    @property
    def num_degree(self) -> int:
        return -1 if self.is_zero else len(self.zeros)

    @property
    def den_degree(self) -> int:
        return len(self.poles)

    @property
    def is_proper(self) -> bool:
        return self.num_degree <= self.den_degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num_degree < self.den_degree

    def without_delay(self) -> "RationalTF":
        return RationalTF.from_zpk(self.gain, self.zeros, self.poles, 0.0, 0.0)

    def with_delay(self, dead_time: float) -> "RationalTF":
        return RationalTF.from_zpk(self.gain, self.zeros, self.poles, dead_time, 0.0)

    def __call__(self, s) -> complex | np.ndarray:
        return tf_eval(self, s)

    def dc_gain(self) -> float:
        return float(np.real(tf_eval(self, 0.0)))

    def __repr__(self):
        if self.is_zero:
            return "RationalTF(0)"
        num = " ".join(f"{c:.6g}" for c in self.num)
        den = " ".join(f"{c:.6g}" for c in self.den)
        tail = f", dead_time={self.dead_time:g}" if self.dead_time else ""
        return f"RationalTF([{num}] / [{den}]{tail})"

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return tf_add(self, _lift(other))

    __radd__ = __add__

    def __neg__(self):
        return RationalTF.from_zpk(-self.gain, self.zeros, self.poles, self.dead_time, 0.0)

    def __sub__(self, other):
        return tf_add(self, -_lift(other))

    def __rsub__(self, other):
        return tf_add(_lift(other), -self)

    def __mul__(self, other):
        return tf_mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return tf_div(self, _lift(other))

    def __rtruediv__(self, other):
        return tf_div(_lift(other), self)


def _lift(x) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    return RationalTF.constant(float(x))


def tf_eval(a: RationalTF, s):
    """Evaluate ``a`` at complex ``s`` (scalar or array), including the delay factor."""
    s = np.asarray(s, dtype=complex)
    if a.is_zero:
        out = np.zeros_like(s)
    else:
        out = np.full_like(s, a.gain)
        for z in a.zeros:
            out = out * (s - z)
        for p in a.poles:
            out = out / (s - p)
        if a.dead_time:
            out = out * np.exp(-a.dead_time * s)
    return out[()] if out.ndim == 0 else out


def tf_mul(a: RationalTF, b: RationalTF) -> RationalTF:
    if a.is_zero or b.is_zero:
        return RationalTF.zero()
    return RationalTF.from_zpk(
        a.gain * b.gain,
        np.concatenate([a.zeros, b.zeros]),
        np.concatenate([a.poles, b.poles]),
        a.dead_time + b.dead_time,
    )


def tf_div(a: RationalTF, b: RationalTF) -> RationalTF:
    """``a / b``. A negative resulting dead time (a predictor) is rejected."""
    if b.is_zero:
        raise ZeroDivisionError("division by the zero transfer function")
    if a.is_zero:
        return RationalTF.zero()
    dt = a.dead_time - b.dead_time
    if dt < -1e-12:
        raise UnsupportedOperation(f"quotient would need negative dead time {dt:g}")
    return RationalTF.from_zpk(
        a.gain / b.gain,
        np.concatenate([a.zeros, b.poles]),
        np.concatenate([a.poles, b.zeros]),
        max(dt, 0.0),
    )


def _pole_union(pa: np.ndarray, pb: np.ndarray):
    """Return (lcm poles, poles of b missing from a, poles of a missing from b)."""
    remaining = list(pb)
    b_only_in_a = []
    for p in pa:
        hit = next((i for i, q in enumerate(remaining) if _roots_close(p, q, ROOT_MATCH_TOL)), None)
        if hit is None:
            b_only_in_a.append(p)
        else:
            remaining.pop(hit)
    # remaining: poles of b with no partner in a; b_only_in_a: poles of a with no partner in b
    lcm = np.concatenate([pa, np.asarray(remaining, dtype=complex)])
    return lcm, np.asarray(remaining, dtype=complex), np.asarray(b_only_in_a, dtype=complex)


def tf_add(a: RationalTF, b: RationalTF) -> RationalTF:
    """Sum over the least common denominator; near-total cancellation yields exact zero."""
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if abs(a.dead_time - b.dead_time) > 1e-12:
        raise UnsupportedOperation(
            f"cannot add transfer functions with dead times {a.dead_time:g} and {b.dead_time:g}"
        )
    lcm, extra_for_a, extra_for_b = _pole_union(a.poles, b.poles)
    ta = a.gain * _real_poly(np.concatenate([a.zeros, extra_for_a]))
    tb = b.gain * _real_poly(np.concatenate([b.zeros, extra_for_b]))
    size = max(ta.size, tb.size)
    ta = np.pad(ta, (size - ta.size, 0))
    tb = np.pad(tb, (size - tb.size, 0))
    num = ta + tb
    scale = np.abs(ta) + np.abs(tb)
    if np.linalg.norm(num) <= CANCEL_TOL * np.linalg.norm(scale):
        return RationalTF.zero()
    # leading coefficients that cancelled down to rounding noise
    while num.size > 1 and abs(num[0]) <= 1e-12 * scale.max():
        num, scale = num[1:], scale[1:]
    return RationalTF.from_zpk(num[0], _sort_roots(np.roots(num)), lcm, a.dead_time)


def simplify(g: RationalTF, tol: float = 1e-7) -> RationalTF:
    """Cancel approximately common zero/pole pairs (approximate GCD)."""
    if g.is_zero:
        return g
    return RationalTF.from_zpk(g.gain, g.zeros, g.poles, g.dead_time, tol)


def pade(dead_time: float, order: int = 2) -> RationalTF:
    """Diagonal Pade approximant of ``exp(-dead_time s)``."""
    if order < 1:
        raise ContractViolation("Pade order must be >= 1")
    if dead_time == 0:
        return RationalTF.one()
    q = order
    c = [
        math.factorial(2 * q - k) * math.factorial(q)
        / (math.factorial(2 * q) * math.factorial(k) * math.factorial(q - k))
        for k in range(q + 1)
    ]
    num = [c[k] * (-dead_time) ** k for k in range(q + 1)][::-1]
    den = [c[k] * dead_time ** k for k in range(q + 1)][::-1]
    return RationalTF(num, den)


# ---------------------------------------------------------------------------
# Transfer-function matrices


class TransferFunctionMatrix:
    """Rectangular grid of :class:`RationalTF` entries."""

    def __init__(self, entries: Sequence[Sequence[RationalTF | float]]):
        rows = [[_lift(e) for e in row] for row in entries]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ContractViolation("transfer-function matrix must be rectangular and non-empty")
        self.entries = rows

    @classmethod
    def zeros(cls, m: int, p: int) -> "TransferFunctionMatrix":
        return cls([[RationalTF.zero() for _ in range(p)] for _ in range(m)])

    @classmethod
    def identity(cls, n: int) -> "TransferFunctionMatrix":
        return cls([[RationalTF.one() if i == j else RationalTF.zero() for j in range(n)] for i in range(n)])

    @classmethod
    def diagonal(cls, diag: Sequence[RationalTF]) -> "TransferFunctionMatrix":
        n = len(diag)
        return cls([[diag[i] if i == j else RationalTF.zero() for j in range(n)] for i in range(n)])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0])

    def __getitem__(self, ij) -> RationalTF:
        i, j = ij
        return self.entries[i][j]

    def __iter__(self):
        return iter(self.entries)

    def evaluate(self, s: complex) -> np.ndarray:
        m, p = self.shape
        out = np.empty((m, p), dtype=complex)
        for i in range(m):
            for j in range(p):
                out[i, j] = tf_eval(self.entries[i][j], s)
        return out

    def __matmul__(self, other: "TransferFunctionMatrix") -> "TransferFunctionMatrix":
        m, k = self.shape
        k2, p = other.shape
        if k != k2:
            raise ContractViolation(f"cannot multiply {self.shape} by {other.shape}")
        out = []
        for i in range(m):
            row = []
            for j in range(p):
                acc = RationalTF.zero()
                for t in range(k):
                    acc = tf_add(acc, tf_mul(self.entries[i][t], other.entries[t][j]))
                row.append(acc)
            out.append(row)
        return TransferFunctionMatrix(out)

    def is_diagonal(self) -> bool:
        m, p = self.shape
        return all(self.entries[i][j].is_zero for i in range(m) for j in range(p) if i != j)

    def nonzero_pattern(self) -> np.ndarray:
        return np.array([[not e.is_zero for e in row] for row in self.entries])

    # -- plain-text serialization -------------------------------------------

    def to_text(self) -> str:
        """One line per entry: ``row,col: num | den | delay`` (1-based indices)."""
        lines = []
        for i, row in enumerate(self.entries):
            for j, g in enumerate(row):
                num = " ".join(repr(float(c)) for c in g.num)
                den = " ".join(repr(float(c)) for c in g.den)
                lines.append(f"{i + 1},{j + 1}: {num} | {den} | {g.dead_time!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TransferFunctionMatrix":
        cells = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                idx, body = line.split(":", 1)
                i, j = (int(t) for t in idx.split(","))
                parts = [p.strip() for p in body.split("|")]
                num = [float(t) for t in parts[0].split()]
                den = [float(t) for t in parts[1].split()]
                delay = float(parts[2]) if len(parts) > 2 and parts[2] else 0.0
            except (ValueError, IndexError) as exc:
                raise ContractViolation(f"line {lineno}: cannot parse entry {raw!r}") from exc
            if i < 1 or j < 1:
                raise ContractViolation(f"line {lineno}: indices are 1-based")
            cells[(i - 1, j - 1)] = RationalTF(num, den, delay)
        if not cells:
            raise ContractViolation("no entries found")
        m = max(i for i, _ in cells) + 1
        p = max(j for _, j in cells) + 1
        return cls([[cells.get((i, j), RationalTF.zero()) for j in range(p)] for i in range(m)])


def _det(entries: list[list[RationalTF]], rows: tuple[int, ...], cols: tuple[int, ...], memo) -> RationalTF:
    key = (rows, cols)
    if key in memo:
        return memo[key]
    if len(rows) == 1:
        out = entries[rows[0]][cols[0]]
    else:
        out = RationalTF.zero()
        r0, rest = rows[0], rows[1:]
        for idx, c in enumerate(cols):
            e = entries[r0][c]
            if e.is_zero:
                continue
            minor = _det(entries, rest, cols[:idx] + cols[idx + 1:], memo)
            if minor.is_zero:
                continue
            term = tf_mul(e, minor)
            out = tf_add(out, term if idx % 2 == 0 else -term)
    memo[key] = out
    return out


def determinant(G: TransferFunctionMatrix) -> RationalTF:
    n, p = G.shape
    if n != p:
        raise ContractViolation("determinant needs a square matrix")
    return _det(G.entries, tuple(range(n)), tuple(range(n)), {})


def adjugate(G: TransferFunctionMatrix) -> TransferFunctionMatrix:
    """Transpose of the cofactor matrix, by Laplace expansion."""
    n, p = G.shape
    if n != p:
        raise ContractViolation("adjugate needs a square matrix")
    if n > MAX_ADJUGATE_SIZE:
        raise ContractViolation(f"adjugate limited to {MAX_ADJUGATE_SIZE}x{MAX_ADJUGATE_SIZE}")
    if n == 1:
        return TransferFunctionMatrix([[RationalTF.one()]])
    memo: dict = {}
    all_idx = tuple(range(n))
    adj = [[RationalTF.zero()] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            rows = all_idx[:i] + all_idx[i + 1:]
            cols = all_idx[:j] + all_idx[j + 1:]
            minor = _det(G.entries, rows, cols, memo)
            cof = minor if (i + j) % 2 == 0 else -minor
            adj[j][i] = cof
    return TransferFunctionMatrix(adj)


# ---------------------------------------------------------------------------
# D / Q decomposition


@dataclass(frozen=True)
class DecompositionSelection:
    """``rows[J]`` is the row whose entry of column ``J`` of D is set to one."""

    rows: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))

    @classmethod
    def diagonal(cls, n: int) -> "DecompositionSelection":
        return cls(tuple(range(n)))

    def label(self) -> str:
        return "-".join(str(r + 1) for r in self.rows)


def _realizable(g: RationalTF) -> bool:
    return g.is_zero or g.is_proper


def build_D(G: TransferFunctionMatrix, sel: DecompositionSelection,
            adj: TransferFunctionMatrix | None = None) -> TransferFunctionMatrix:
    """Compensator with ``d[sel[J], J] = 1`` and ``d[i, J] = adj[i, J] / adj[sel[J], J]``."""
    n, p = G.shape
    if n != p or len(sel.rows) != n or any(not 0 <= r < n for r in sel.rows):
        raise ContractViolation("selection must pick one row per column of a square matrix")
    adj = adjugate(G) if adj is None else adj
    D = [[RationalTF.zero()] * n for _ in range(n)]
    for J, I in enumerate(sel.rows):
        pivot = adj[I, J]
        if pivot.is_zero:
            raise NonRealizableSelection(f"adjugate entry ({I + 1},{J + 1}) is zero")
        for i in range(n):
            if i == I:
                D[i][J] = RationalTF.one()
                continue
            try:
                d = simplify(tf_div(adj[i, J], pivot))
            except UnsupportedOperation as exc:
                raise NonRealizableSelection(f"d[{i + 1},{J + 1}]: {exc}") from exc
            if not _realizable(d):
                raise NonRealizableSelection(f"d[{i + 1},{J + 1}] is improper")
            D[i][J] = d
    return TransferFunctionMatrix(D)


def compute_Q(G: TransferFunctionMatrix, D: TransferFunctionMatrix) -> TransferFunctionMatrix:
    """``Q = G D``; raises if the product is not diagonal."""
    try:
        Q = G @ D
    except UnsupportedOperation as exc:
        raise DecompositionFailure(str(exc)) from exc
    n, _ = Q.shape
    for i in range(n):
        for j in range(n):
            if i != j and not Q[i, j].is_zero:
                raise DecompositionFailure(f"off-diagonal entry ({i + 1},{j + 1}) does not vanish")
    return TransferFunctionMatrix.diagonal([simplify(Q[i, i]) for i in range(n)])


def enumerate_selections(G: TransferFunctionMatrix):
    """Yield ``(selection, D, Q)`` for every realizable choice among the ``n**n``."""
    n, _ = G.shape
    adj = adjugate(G)
    for rows in itertools.product(range(n), repeat=n):
        sel = DecompositionSelection(rows)
        try:
            D = build_D(G, sel, adj)
            Q = compute_Q(G, D)
        except (NonRealizableSelection, DecompositionFailure):
            continue
        yield sel, D, Q


# ---------------------------------------------------------------------------
# Serial and parallel decompositions


def _root_sections(roots: np.ndarray) -> list[np.ndarray]:
    """Group roots into real first-order and conjugate-pair second-order polys."""
    sections = []
    roots = list(_sort_roots(roots))
    used = [False] * len(roots)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        used[i] = True
        if abs(r.imag) <= 1e-12 * max(abs(r), 1.0):
            sections.append(np.array([1.0, -r.real]))
            continue
        j = min(
            (k for k in range(len(roots)) if not used[k]),
            key=lambda k: abs(roots[k] - np.conj(r)),
            default=None,
        )
        if j is None:
            raise NumericError("complex root without a conjugate partner")
        used[j] = True
        sections.append(np.array([1.0, -2 * r.real, abs(r) ** 2]))
    return sections


@dataclass
class SerialFactors:
    """``g = gain * prod(factors) * exp(-dead_time s)``, factors monic and real."""

    gain: float
    factors: list[RationalTF]
    dead_time: float = 0.0

    def product(self) -> RationalTF:
        out = reduce(tf_mul, self.factors, RationalTF.constant(self.gain))
        return out.with_delay(self.dead_time) if self.dead_time else out


def serial_factor(g: RationalTF) -> SerialFactors:
    """Split ``g`` into a gain and proper first/second-order real sections."""
    if not g.is_proper:
        raise ContractViolation("serial factorization needs a proper transfer function")
    if g.is_zero:
        return SerialFactors(0.0, [], g.dead_time)
    zs = sorted(_root_sections(g.zeros), key=len, reverse=True)
    ps = sorted(_root_sections(g.poles), key=len, reverse=True)
    pairs: list[tuple[list[np.ndarray], list[np.ndarray]]] = []
    for z in zs:
        deg = len(z) - 1
        pick = next((i for i, p in enumerate(ps) if len(p) - 1 == deg), None)
        if pick is not None:
            pairs.append(([z], [ps.pop(pick)]))
        elif deg == 2 and sum(len(p) == 2 for p in ps) >= 2:
            firsts = [i for i, p in enumerate(ps) if len(p) == 2][:2]
            chosen = [ps[i] for i in firsts]
            for i in sorted(firsts, reverse=True):
                ps.pop(i)
            pairs.append(([z], chosen))
        elif ps:
            pairs.append(([z], [ps.pop(0)]))
        elif pairs:
            pairs[-1][0].append(z)
        else:
            raise ContractViolation("improper factor")
    # balance any factor left improper by borrowing from the remaining poles
    for zl, pl in pairs:
        while sum(len(z) - 1 for z in zl) > sum(len(p) - 1 for p in pl) and ps:
            pl.append(ps.pop())
    for p in ps:
        pairs.append(([], [p]))
    factors = []
    for zl, pl in pairs:
        num = reduce(np.polymul, zl, np.array([1.0]))
        den = reduce(np.polymul, pl, np.array([1.0]))
        factors.append(RationalTF(num, den))
    return SerialFactors(g.gain, factors, g.dead_time)


@dataclass
class PFTerm:
    residue: complex
    pole: complex
    power: int

    def as_tf(self) -> RationalTF:
        if abs(np.imag(self.pole)) > 0:
            raise ContractViolation("complex terms must be combined with their conjugate")
        return RationalTF.from_zpk(float(np.real(self.residue)), (), [np.real(self.pole)] * self.power)


@dataclass
class PartialFractions:
    """``g = constant + sum residue / (s - pole)**power`` (times the dead-time factor)."""

    constant: float
    terms: list[PFTerm]
    dead_time: float = 0.0

    def evaluate(self, s) -> complex | np.ndarray:
        s = np.asarray(s, dtype=complex)
        out = np.full_like(s, self.constant)
        for t in self.terms:
            out = out + t.residue / (s - t.pole) ** t.power
        if self.dead_time:
            out = out * np.exp(-self.dead_time * s)
        return out[()] if out.ndim == 0 else out

    def real_sections(self) -> list[RationalTF]:
        """Real-coefficient summands: conjugate terms are merged pairwise."""
        out = []
        pending = list(self.terms)
        while pending:
            t = pending.pop(0)
            if abs(np.imag(t.pole)) <= 1e-12 * max(abs(t.pole), 1.0):
                out.append(RationalTF.from_zpk(float(np.real(t.residue)), (), [t.pole.real] * t.power,
                                               self.dead_time))
                continue
            j = min(range(len(pending)),
                    key=lambda i: abs(pending[i].pole - np.conj(t.pole)) + 10 * (pending[i].power != t.power))
            pending.pop(j)
            # r/(s-p)^k + conj = 2 Re(r (s - conj p)^k) / |s-p|^{2k}
            base = np.array([1.0, -np.conj(t.pole)])
            num = t.residue * reduce(np.polymul, [base] * t.power, np.array([1.0 + 0j]))
            den = reduce(np.polymul, [np.array([1.0, -2 * t.pole.real, abs(t.pole) ** 2])] * t.power,
                         np.array([1.0]))
            out.append(RationalTF(2 * np.real(num), den, self.dead_time))
        return out


def _group_poles(poles: np.ndarray, tol: float = 1e-9):
    groups: list[tuple[complex, int]] = []
    for p in _sort_roots(poles):
        for i, (q, m) in enumerate(groups):
            if _roots_close(p, q, tol):
                groups[i] = (q, m + 1)
                break
        else:
            groups.append((p, 1))
    return groups


def _taylor_coeffs(roots: Sequence[complex], center: complex, order: int) -> np.ndarray:
    """Ascending Taylor coefficients about ``center`` of ``prod(s - r)``."""
    c = np.zeros(order + 1, dtype=complex)
    c[0] = 1.0
    for r in roots:
        # multiply by ((s - center) + (center - r))
        shifted = np.zeros_like(c)
        shifted[1:] = c[:-1]
        c = shifted + (center - r) * c
    return c


def partial_fractions(g: RationalTF) -> PartialFractions:
    """Residues, poles and the direct constant of a proper transfer function."""
    if not g.is_proper:
        raise ContractViolation("partial fractions need a proper transfer function")
    if g.is_zero:
        return PartialFractions(0.0, [], g.dead_time)
    constant = g.gain if g.num_degree == g.den_degree else 0.0
    groups = _group_poles(g.poles)
    terms = []
    for p, mult in groups:
        if mult > MAX_MULTIPLICITY:
            raise UnsupportedOperation(f"pole multiplicity {mult} exceeds {MAX_MULTIPLICITY}")
        others = []
        for q, m in groups:
            if q != p:
                others.extend([q] * m)
        order = mult - 1
        num_t = g.gain * _taylor_coeffs(g.zeros, p, order)
        den_t = _taylor_coeffs(others, p, order)
        # series division h = num_t / den_t
        h = np.zeros(order + 1, dtype=complex)
        for i in range(order + 1):
            h[i] = (num_t[i] - sum(h[j] * den_t[i - j] for j in range(i))) / den_t[0]
        for power in range(mult, 0, -1):
            r = h[mult - power]
            if abs(np.imag(p)) <= 1e-12 * max(abs(p), 1.0):
                r, pp = float(np.real(r)), float(np.real(p))
            else:
                pp = complex(p)
            terms.append(PFTerm(r, pp, power))
    return PartialFractions(float(constant), terms, g.dead_time)


# ---------------------------------------------------------------------------
# State-space realization


def realize_continuous(g: RationalTF):
    """Controllable canonical form ``(A, B, C, D)`` of the delay-free part of ``g``."""
    if not g.is_proper:
        raise ContractViolation("cannot realize an improper transfer function")
    den = g.den
    n = den.size - 1
    num = np.zeros(n + 1) if g.is_zero else g.num
    num = np.pad(num, (n + 1 - num.size, 0))
    d = num[0]
    # strictly proper remainder: b_i - d a_i for i = 1..n
    c = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -den[1:][::-1]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = c[::-1].reshape(1, n)
    return A, B, C, np.array([[d]])


def _prepend_input_delay(model: StateSpaceModel, steps: int) -> StateSpaceModel:
    """Insert ``steps`` unit delays between each input and the plant."""
    if steps <= 0:
        return model
    n, p, m = model.state_dim, model.input_dim, model.output_dim
    q = steps * p
    A = np.zeros((n + q, n + q))
    B = np.zeros((n + q, p))
    C = np.zeros((m, n + q))
    A[:n, :n] = model.A
    # delay line: xi_1 <- u, xi_{i+1} <- xi_i; plant consumes xi_steps
    B[n:n + p, :] = np.eye(p)
    for i in range(1, steps):
        A[n + i * p:n + (i + 1) * p, n + (i - 1) * p:n + i * p] = np.eye(p)
    last = slice(n + (steps - 1) * p, n + steps * p)
    A[:n, last] = model.B
    C[:, :n] = model.C
    C[:, last] = model.D
    return StateSpaceModel(A, B, C, model.sample_time)


def delay_steps(dead_time: float, Ts: float) -> int:
    return int(math.ceil(dead_time / Ts - 1e-9)) if dead_time > 0 else 0


def realize_state_space(g: RationalTF, Ts: float, delay_mode: str = "discrete_shift",
                        pade_order: int = 2) -> StateSpaceModel:
    """Discrete realization of ``g``: canonical form, ZOH, then the dead time.

    ``delay_mode`` is ``"pade"`` (rational approximant before discretization)
    or ``"discrete_shift"`` (``ceil(dead_time / Ts)`` pure delay states).
    """
    if not g.is_proper:
        raise ContractViolation("cannot realize an improper transfer function")
    if delay_mode not in ("pade", "discrete_shift"):
        raise ContractViolation(f"unknown delay mode {delay_mode!r}")
    core = g.without_delay()
    if delay_mode == "pade" and g.dead_time:
        core = tf_mul(core, pade(g.dead_time, pade_order))
    if core.den_degree == 0:
        k = 0.0 if core.is_zero else core.gain
        model = StateSpaceModel([[0.0]], [[0.0]], [[0.0]], Ts, [[k]])
    else:
        A, B, C, D = realize_continuous(core)
        model = discretize_zoh(A, B, C, Ts, D)
    if delay_mode == "discrete_shift":
        model = _prepend_input_delay(model, delay_steps(g.dead_time, Ts))
    return model


def realize_matrix(G: TransferFunctionMatrix, Ts: float, delay_mode: str = "discrete_shift",
                   pade_order: int = 2) -> StateSpaceModel:
    """Entrywise realization of a transfer-function matrix, block-assembled."""
    m, p = G.shape
    blocks = []
    for i in range(m):
        for j in range(p):
            if not G[i, j].is_zero:
                blocks.append((i, j, realize_state_space(G[i, j], Ts, delay_mode, pade_order)))
    n = sum(b.state_dim for _, _, b in blocks)
    A = np.zeros((n, n))
    B = np.zeros((n, p))
    C = np.zeros((m, n))
    D = np.zeros((m, p))
    off = 0
    for i, j, b in blocks:
        sl = slice(off, off + b.state_dim)
        A[sl, sl] = b.A
        B[sl, j] = b.B[:, 0]
        C[i, sl] = b.C[0]
        D[i, j] = b.D[0, 0]
        off += b.state_dim
    return StateSpaceModel(A, B, C, Ts, D)


def realize_minimal(G: TransferFunctionMatrix, Ts: float, pole_tol: float = 1e-9) -> StateSpaceModel:
    """Gilbert realization for matrices with simple poles.

    Dead times must be shared per column (they become input delay lines).
    """
    m, p = G.shape
    col_delay = []
    for j in range(p):
        delays = {round(G[i, j].dead_time, 12) for i in range(m) if not G[i, j].is_zero}
        if len(delays) > 1:
            raise UnsupportedOperation(f"column {j + 1} mixes dead times {sorted(delays)}")
        col_delay.append(delays.pop() if delays else 0.0)
    pfs = [[partial_fractions(G[i, j].without_delay()) for j in range(p)] for i in range(m)]
    clusters: list[complex] = []
    for row in pfs:
        for pf in row:
            for t in pf.terms:
                if t.power > 1:
                    raise UnsupportedOperation("minimal realization supports simple poles only")
                if not any(_roots_close(t.pole, c, pole_tol) for c in clusters):
                    clusters.append(t.pole)
    Dm = np.array([[pfs[i][j].constant for j in range(p)] for i in range(m)])
    A_blocks, B_rows, C_cols = [], [], []
    done = set()
    for ci, pole in enumerate(clusters):
        if ci in done:
            continue
        R = np.zeros((m, p), dtype=complex)
        for i in range(m):
            for j in range(p):
                for t in pfs[i][j].terms:
                    if _roots_close(t.pole, pole, pole_tol):
                        R[i, j] += t.residue
        U, S, Vh = np.linalg.svd(R)
        r = int(np.sum(S > 1e-9 * max(S.max(initial=0.0), 1e-300)))
        if r == 0:
            continue
        Cc = U[:, :r] * S[:r]
        Bc = Vh[:r, :]
        if abs(pole.imag) <= 1e-12 * max(abs(pole), 1.0):
            A_blocks.append(pole.real * np.eye(r))
            B_rows.append(np.real(Bc))
            C_cols.append(np.real(Cc))
        else:
            mate = next(k for k, c in enumerate(clusters) if k != ci and _roots_close(c, np.conj(pole), pole_tol))
            done.add(mate)
            sig, om = pole.real, pole.imag
            I = np.eye(r)
            A_blocks.append(np.block([[sig * I, -om * I], [om * I, sig * I]]))
            B_rows.append(np.vstack([np.real(Bc), np.imag(Bc)]))
            C_cols.append(np.hstack([2 * np.real(Cc), -2 * np.imag(Cc)]))
    from scipy.linalg import block_diag

    if A_blocks:
        A = block_diag(*A_blocks)
        B = np.vstack(B_rows)
        C = np.hstack(C_cols)
    else:
        A, B, C = np.zeros((0, 0)), np.zeros((0, p)), np.zeros((m, 0))
    model = discretize_zoh(A, B, C, Ts, Dm)
    steps = [delay_steps(d, Ts) for d in col_delay]
    if any(steps):
        model = _column_delays(model, steps)
    return model


def _column_delays(model: StateSpaceModel, steps: Sequence[int]) -> StateSpaceModel:
    n, p, m = model.state_dim, model.input_dim, model.output_dim
    q = sum(steps)
    A = np.zeros((n + q, n + q))
    B = np.zeros((n + q, p))
    C = np.zeros((m, n + q))
    A[:n, :n] = model.A
    C[:, :n] = model.C
    D = model.D.copy()
    off = n
    for j, d in enumerate(steps):
        if d == 0:
            B[:n, j] = model.B[:, j]
            continue
        B[off, j] = 1.0
        for i in range(1, d):
            A[off + i, off + i - 1] = 1.0
        last = off + d - 1
        A[:n, last] = model.B[:, j]
        C[:, last] = model.D[:, j]
        D[:, j] = 0.0
        off += d
    return StateSpaceModel(A, B, C, model.sample_time, D)


def continuous_step_response(g: RationalTF, t) -> np.ndarray:
    """Analytic unit-step response from the residues of ``g(s)/s`` (simple poles)."""
    t = np.asarray(t, dtype=float)
    integrator = RationalTF.from_zpk(1.0, (), [0.0])
    pf = partial_fractions(tf_mul(g.without_delay(), integrator))
    out = np.zeros_like(t, dtype=complex)
    tt = t - g.dead_time
    mask = tt >= 0
    for term in pf.terms:
        k = term.power
        out[mask] += term.residue * tt[mask] ** (k - 1) / math.factorial(k - 1) * np.exp(term.pole * tt[mask])
    return np.real(out)
