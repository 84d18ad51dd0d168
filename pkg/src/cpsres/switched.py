"""Switched decentralized control: keyed-hash switching signal, block
network graphs, virtual address rotation and switched closed-loop runs.

A subsystem's cyber layer is a network of SISO blocks: one loop controller
per diagonal entry of Q (node ``v_q_jj``) feeding compensator blocks
``d_ij`` (or their parallel terms) whose outputs add up at actuator ``a_i``.
With ``latency=1`` every node reads only the messages its upstream nodes
published in the previous step; ``latency=0`` evaluates the nodes in dataflow
order within the step.
"""
from __future__ import annotations

import csv
import hashlib
import hmac
import io
import ipaddress
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractViolation, EmptyPoolError
from .lti_core import SaturationLimits, StateSpaceModel, Trajectory, simulate
from .tf_algebra import RationalTF, TransferFunctionMatrix, partial_fractions, realize_state_space

KEY_BYTES = 32
DEFAULT_WARMUP = 20


# ---------------------------------------------------------------------------
# Keyed selection


def keyed_index(key: bytes, message: bytes, modulus: int) -> int:
    """First 8 bytes (big endian) of HMAC-SHA256(key, message), reduced mod ``modulus``."""
    digest = hmac.new(key, message, hashlib.sha256).digest()
    return int.from_bytes(digest[:8], "big") % modulus


def select_model(K1: bytes, j: int, N: int) -> int:
    """Active subsystem for switching interval ``j``."""
    if N < 1:
        raise ContractViolation("need at least one subsystem")
    return keyed_index(K1, int(j).to_bytes(8, "big"), N)


def _host_bytes(host) -> bytes:
    if isinstance(host, bytes):
        return host
    if isinstance(host, int):
        return host.to_bytes(8, "big")
    return str(host).encode()


def select_vipa(K2: bytes, j: int, p: int, host=b"") -> int:
    """Index of a host's virtual address for interval ``j`` in a pool of ``p``."""
    if p <= 0:
        raise EmptyPoolError("no virtual addresses available")
    return keyed_index(K2, int(j).to_bytes(8, "big") + _host_bytes(host), p)


class SubnetPool:
    """Virtual addresses of one subnet, split into disjoint per-host ranges.

    Because ranges never overlap, two hosts of the subnet cannot hold the
    same address in the same interval.
    """

    def __init__(self, cidr: str, hosts: Sequence):
        self.network = ipaddress.ip_network(cidr)
        self.hosts = list(hosts)
        if len(set(map(_host_bytes, self.hosts))) != len(self.hosts):
            raise ContractViolation("host identifiers must be unique")
        usable = list(self.network.hosts())
        share = len(usable) // max(len(self.hosts), 1)
        self._ranges = {
            _host_bytes(h): usable[i * share:(i + 1) * share] for i, h in enumerate(self.hosts)
        }

    def range_of(self, host) -> list:
        return self._ranges[_host_bytes(host)]

    def vipa(self, K2: bytes, j: int, host):
        pool = self.range_of(host)
        return pool[select_vipa(K2, j, len(pool), host)]

    def assignment(self, K2: bytes, j: int) -> dict:
        return {h: self.vipa(K2, j, h) for h in self.hosts}


class SharedClock:
    """Logical clock shared by the orchestrator and all nodes."""

    def __init__(self, step: int = 0):
        self.step = step

    def advance(self, n: int = 1) -> int:
        self.step += n
        return self.step


class Orchestrator:
    """Model selection, address rotation and switching time on one clock."""

    def __init__(self, K1: bytes, K2: bytes, N: int, interval: int, clock: SharedClock | None = None,
                 pool: SubnetPool | None = None):
        if interval < 1:
            raise ContractViolation("switching interval must be positive")
        self.K1, self.K2, self.N, self.interval = K1, K2, N, interval
        self.clock = clock or SharedClock()
        self.pool = pool
        self.selection_calls = 0

    def interval_index(self, k: int | None = None) -> int:
        return (self.clock.step if k is None else k) // self.interval

    def active_model(self, j: int) -> int:
        self.selection_calls += 1
        return select_model(self.K1, j, self.N)

    def addresses(self, j: int) -> dict:
        return {} if self.pool is None else self.pool.assignment(self.K2, j)

    def schedule(self, horizon: int) -> list[tuple[int, int]]:
        return [(j, select_model(self.K1, j, self.N)) for j in range(math.ceil(horizon / self.interval))]


def schedule_csv(schedule: Sequence[tuple[int, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["interval", "model_index"])
    w.writerows(schedule)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Network graphs


@dataclass
class Node:
    name: str
    kind: str  # q, d, s or a
    real_address: str | None = None
    virtual_address: str | None = None


@dataclass
class NetworkGraph:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)

    def add(self, name: str, kind: str):
        self.nodes.setdefault(name, Node(name, kind))

    def successors(self, name: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == name)

    def predecessors(self, name: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == name)

    def of_kind(self, kind: str) -> list[str]:
        return sorted(n for n, v in self.nodes.items() if v.kind == kind)

    def assign_real_addresses(self, cidr: str = "10.0.0.0/24"):
        hosts = ipaddress.ip_network(cidr).hosts()
        for name in sorted(self.nodes):
            self.nodes[name].real_address = str(next(hosts))

    def rotate(self, pool: SubnetPool, K2: bytes, j: int):
        for name, node in self.nodes.items():
            node.virtual_address = str(pool.vipa(K2, j, name))

    def to_dot(self) -> str:
        shapes = {"q": "box", "d": "box", "s": "ellipse", "a": "ellipse"}
        lines = ["digraph G {"]
        for name in sorted(self.nodes):
            lines.append(f'  "{name}" [shape={shapes[self.nodes[name].kind]}];')
        for a, b in sorted(self.edges):
            lines.append(f'  "{a}" -> "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def q_name(j: int) -> str:
    return f"v_q_{j + 1}{j + 1}"


def d_name(i: int, j: int, term: int | None = None) -> str:
    base = f"v_d_{i + 1}{j + 1}"
    return base if term is None else f"{base}_{term + 1}"


def parallel_split(g: RationalTF) -> list[RationalTF]:
    """Real summands of ``g``: the constant (if any) then one section per pole group."""
    pf = partial_fractions(g)
    terms = [RationalTF.constant(pf.constant)] if pf.constant != 0 else []
    return terms + pf.real_sections()


def build_graph(D: TransferFunctionMatrix, Q: TransferFunctionMatrix,
                parallel_terms: Mapping[tuple[int, int], Sequence[RationalTF]] | None = None) -> NetworkGraph:
    """Nodes and edges from D and Q.

    Edges: ``v_q_jj -> v_d_ij`` for each nonzero ``d_ij`` (and each of its
    parallel terms), ``v_d_ij -> v_a_i``, and ``v_s_i -> v_q_ii``.
    ``parallel_terms`` maps 0-based ``(i, j)`` to the summands of ``d_ij``.
    """
    if not Q.is_diagonal():
        raise ContractViolation("Q must be diagonal")
    n = Q.shape[0]
    if D.shape[1] != n:
        raise ContractViolation("D columns must match the size of Q")
    parallel_terms = parallel_terms or {}
    g = NetworkGraph()
    for j in range(n):
        if Q[j, j].is_zero:
            continue
        g.add(f"v_s_{j + 1}", "s")
        g.add(q_name(j), "q")
        g.edges.add((f"v_s_{j + 1}", q_name(j)))
    for i in range(D.shape[0]):
        for j in range(n):
            if D[i, j].is_zero or Q[j, j].is_zero:
                continue
            act = f"v_a_{i + 1}"
            g.add(act, "a")
            terms = parallel_terms.get((i, j))
            names = [d_name(i, j)] if not terms else [d_name(i, j, t) for t in range(len(terms))]
            for name in names:
                g.add(name, "d")
                g.edges.add((q_name(j), name))
                g.edges.add((name, act))
    return g


# ---------------------------------------------------------------------------
# Block networks


def pi_block(kp: float, ti: float | None, Ts: float) -> StateSpaceModel:
    """PI law ``u = kp (e + (I + Ts e) / ti)``, ``I+ = I + Ts e`` as a discrete block."""
    if ti is None:
        return StateSpaceModel([[0.0]], [[0.0]], [[0.0]], Ts, [[kp]])
    return StateSpaceModel([[1.0]], [[Ts]], [[kp / ti]], Ts, [[kp * (1 + Ts / ti)]])


def _as_block(b, Ts: float) -> StateSpaceModel:
    if isinstance(b, StateSpaceModel):
        if b.input_dim != 1 or b.output_dim != 1:
            raise ContractViolation("network blocks must be SISO")
        return b
    if isinstance(b, RationalTF):
        return realize_state_space(b, Ts)
    return realize_state_space(RationalTF.constant(float(b)), Ts)


@dataclass(eq=False)
class BlockNetwork:
    """Linear cyber layer ``z+ = F z + G e``, ``u = H z + J e`` assembled from its nodes.

    ``e`` holds the loop errors ``SP - y`` (one per diagonal entry of Q) and
    ``u`` the actuator commands.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    graph: NetworkGraph
    latency: int
    label: str = ""

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    def frequency_response(self, omega, Ts: float = 1.0) -> np.ndarray:
        n = self.state_dim
        out = []
        for w in np.atleast_1d(omega):
            z = np.exp(1j * w * Ts)
            out.append(self.H @ np.linalg.solve(z * np.eye(n) - self.F, self.G) + self.J if n else self.J + 0j)
        return np.array(out)


def build_network(D: TransferFunctionMatrix, loop_controllers: Sequence, Ts: float, *,
                  Q: TransferFunctionMatrix | None = None,
                  parallel: Mapping[tuple[int, int], Sequence[RationalTF]] | Sequence[tuple[int, int]] | None = None,
                  latency: int = 1, label: str = "") -> BlockNetwork:
    """Assemble a block network.

    ``loop_controllers[j]`` runs at ``v_q_jj`` (a :class:`StateSpaceModel`,
    a :class:`RationalTF` or a constant). ``parallel`` lists entries of D to
    split into partial-fraction terms, or maps them to explicit terms.
    ``Q`` only shapes the graph; by default every loop is present.
    """
    if latency not in (0, 1):
        raise ContractViolation("latency must be 0 or 1")
    p, n = D.shape
    if len(loop_controllers) != n:
        raise ContractViolation("one loop controller per column of D is required")
    if Q is None:
        Q = TransferFunctionMatrix.diagonal([RationalTF.one()] * n)
    if parallel is None:
        parallel = {}
    elif not isinstance(parallel, Mapping):
        parallel = {tuple(ij): parallel_split(D[ij]) for ij in parallel}
    graph = build_graph(D, Q, parallel)

    qblocks = [_as_block(c, Ts) for c in loop_controllers]
    dblocks = []  # (row i, column j, block)
    for i in range(p):
        for j in range(n):
            if D[i, j].is_zero or Q[j, j].is_zero:
                continue
            terms = parallel.get((i, j)) or [D[i, j]]
            for t in terms:
                dblocks.append((i, j, _as_block(t, Ts)))

    # state layout: q states, d states, then (latency 1) registers for e, q outputs, d outputs
    sizes = [b.state_dim for b in qblocks] + [b.state_dim for _, _, b in dblocks]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    nblk = int(offs[-1])
    nd = len(dblocks)
    nreg = (n + n + nd) if latency else 0
    nz = nblk + nreg
    r_e, r_q, r_d = nblk, nblk + n, nblk + 2 * n

    def step(z, e):
        z_next = np.zeros(nz)
        if latency:
            e_in = z[r_e:r_e + n]
            z_next[r_e:r_e + n] = e
        else:
            e_in = e
        c = np.zeros(n)
        for j, b in enumerate(qblocks):
            xs = z[offs[j]:offs[j + 1]]
            c[j] = (b.C @ xs + b.D[:, 0] * e_in[j])[0]
            z_next[offs[j]:offs[j + 1]] = b.A @ xs + b.B[:, 0] * e_in[j]
        c_in = z[r_q:r_q + n] if latency else c
        if latency:
            z_next[r_q:r_q + n] = c
        dout = np.zeros(nd)
        for t, (i, j, b) in enumerate(dblocks):
            sl = slice(offs[n + t], offs[n + t + 1])
            xs = z[sl]
            dout[t] = (b.C @ xs + b.D[:, 0] * c_in[j])[0]
            z_next[sl] = b.A @ xs + b.B[:, 0] * c_in[j]
        d_in = z[r_d:r_d + nd] if latency else dout
        if latency:
            z_next[r_d:r_d + nd] = dout
        u = np.zeros(p)
        for t, (i, _, _) in enumerate(dblocks):
            u[i] += d_in[t]
        return z_next, u

    # the node equations are linear: read the matrices off unit probes
    F = np.zeros((nz, nz))
    H = np.zeros((p, nz))
    for k in range(nz):
        unit = np.zeros(nz)
        unit[k] = 1.0
        F[:, k], H[:, k] = step(unit, np.zeros(n))
    G = np.zeros((nz, n))
    J = np.zeros((p, n))
    for k in range(n):
        unit = np.zeros(n)
        unit[k] = 1.0
        G[:, k], J[:, k] = step(np.zeros(nz), unit)
    return BlockNetwork(F, G, H, J, graph, latency, label)


def networks_equivalent(a: BlockNetwork, b: BlockNetwork, Ts: float = 1.0, tol: float = 1e-6,
                        n_freq: int = 32) -> float:
    """Largest relative gap between the two networks' error-to-command responses."""
    w = np.geomspace(1e-4, np.pi / Ts, n_freq)
    ra, rb = a.frequency_response(w, Ts), b.frequency_response(w, Ts)
    scale = max(np.abs(ra).max(), np.abs(rb).max(), 1e-300)
    return float(np.abs(ra - rb).max() / scale)


class NetworkController:
    """A fixed block network as a controller for :func:`lti_core.simulate`."""

    def __init__(self, network: BlockNetwork, setpoints=None):
        self.network = network
        self.setpoints = setpoints

    def policy(self, model, limits):
        return _SwitchingPolicy([self.network], None, 1, self.setpoints, model.output_dim)


class _SwitchingPolicy:
    def __init__(self, networks, K1, interval, setpoints, m, warmup=DEFAULT_WARMUP):
        self.networks = networks
        self.K1 = K1
        self.interval = interval
        n_loops = networks[0].G.shape[1]
        if n_loops != m:
            raise ContractViolation("networks must have one loop per plant output")
        self.sp = np.zeros(m) if setpoints is None else np.asarray(setpoints, dtype=float)
        self.warmup = warmup
        self.active = None
        self.z = None
        self.e_hist: list[np.ndarray] = []
        self.u_hist: list[np.ndarray] = []
        self.selection_calls = 0
        self.schedule: list[tuple[int, int]] = []
        self.switch_steps: list[int] = []

    def _select(self, j: int) -> int:
        if self.K1 is None:
            return 0
        self.selection_calls += 1
        return select_model(self.K1, j, len(self.networks))

    def _transfer(self, new: BlockNetwork, k: int) -> np.ndarray:
        """State of ``new`` at step k consistent with the recorded error/command history."""
        W = max(self.warmup, new.state_dim)
        k0 = max(0, k - W)
        E = self.e_hist[k0:k]
        U = self.u_hist[k0:k]
        if k0 == 0:
            z0 = np.zeros(new.state_dim)  # all networks start at rest
        else:
            # u_t = H F^t z0 + forced_t; solve for z0 in the least-squares sense
            rows, rhs = [], []
            M = new.H.copy()
            zf = np.zeros(new.state_dim)
            for e, u in zip(E, U):
                rows.append(M)
                rhs.append(u - (new.H @ zf + new.J @ e))
                zf = new.F @ zf + new.G @ e
                M = M @ new.F
            z0 = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
        z = z0
        for e in E:
            z = new.F @ z + new.G @ e
        return z

    def __call__(self, k, x, y):
        if k % self.interval == 0:
            idx = self._select(k // self.interval)
            self.schedule.append((k // self.interval, idx))
            if self.active is None:
                self.z = np.zeros(self.networks[idx].state_dim)
            elif idx != self.active:
                self.z = self._transfer(self.networks[idx], k)
                self.switch_steps.append(k)
            self.active = idx
        net = self.networks[self.active]
        e = self.sp - y
        u = net.H @ self.z + net.J @ e
        self.z = net.F @ self.z + net.G @ e
        self.e_hist.append(e)
        self.u_hist.append(u)
        return u


@dataclass(eq=False)
class SwitchedSystem:
    """Plant plus ``N`` equivalent cyber layers and the switching keys."""

    plant: StateSpaceModel
    networks: list[BlockNetwork]
    switching_interval: int
    K1: bytes
    K2: bytes = b"\x00" * KEY_BYTES
    setpoints: np.ndarray | None = None

    def __post_init__(self):
        if not self.networks:
            raise ContractViolation("need at least one subsystem")
        if self.switching_interval < 1:
            raise ContractViolation("switching interval must be positive")
        for key in (self.K1, self.K2):
            if len(key) != KEY_BYTES:
                raise ContractViolation(f"switching keys must be {KEY_BYTES} bytes")

    @property
    def N(self) -> int:
        return len(self.networks)

    def validate(self, tol: float = 1e-6) -> float:
        """Check all cyber layers share one error-to-command map; returns the largest gap."""
        gap = max((networks_equivalent(self.networks[0], n, self.plant.sample_time)
                   for n in self.networks[1:]), default=0.0)
        if gap > tol:
            raise ContractViolation(f"subsystems are not control-equivalent (relative gap {gap:.3e})")
        return gap

    def closed_loop_stable(self) -> bool:
        """Spectral radius test of every fixed subsystem's linear closed loop (saturation ignored)."""
        P = self.plant
        for net in self.networks:
            # e = -y = -C x (setpoints enter as an exogenous input)
            n, nz = P.state_dim, net.state_dim
            M = np.zeros((n + nz, n + nz))
            M[:n, :n] = P.A - P.B @ net.J @ P.C
            M[:n, n:] = P.B @ net.H
            M[n:, :n] = -net.G @ P.C
            M[n:, n:] = net.F
            if nz + n and np.max(np.abs(np.linalg.eigvals(M))) >= 1:
                return False
        return True


@dataclass
class SwitchedRun:
    trajectory: Trajectory
    schedule: list[tuple[int, int]]
    selection_calls: int
    switch_steps: list[int]
    transient: np.ndarray  # True where a step lies within the settle guard after a switch

    def schedule_csv(self) -> str:
        return schedule_csv(self.schedule)


class _Fixed:
    def __init__(self, pol):
        self.pol = pol

    def policy(self, model, limits):
        return self.pol


def simulate_switched(sw: SwitchedSystem, x0, horizon: int, *, attack=None, limits: SaturationLimits | None = None,
                      noise=None, switch_settle_guard: int = 20, warmup: int = DEFAULT_WARMUP,
                      u_offset=None, y_offset=None) -> SwitchedRun:
    """Closed-loop run where the active cyber layer follows ``select_model(K1, j, N)``."""
    pol = _SwitchingPolicy(sw.networks, sw.K1, sw.switching_interval, sw.setpoints, sw.plant.output_dim, warmup)
    traj = simulate(sw.plant, _Fixed(pol), x0, horizon, noise=noise, limits=limits, attack=attack,
                    u_offset=u_offset, y_offset=y_offset)
    mask = np.zeros(len(traj), dtype=bool)
    for k in pol.switch_steps:
        mask[k:k + switch_settle_guard] = True
    return SwitchedRun(traj, pol.schedule,
                       pol.selection_calls, pol.switch_steps, mask)
