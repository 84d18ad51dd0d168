"""Acceptance criteria 1-7. Each test records one PASS/FAIL line; the lines are
printed at the end of the pytest session (see conftest.py) and when this file
is run directly with ``python -m tests.test_acceptance``."""
import itertools
import json
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np

from cpsres.adversary import scenario_constants
from cpsres.campaign import run_campaign
from cpsres.lti_core import SaturationLimits, StateSpaceModel, simulate
from cpsres.metrics import (
    VariableSpec,
    global_resilience,
    max_deviation,
    measure,
    normal_resilience,
    perf_stability_resilience,
    reachable_extremes,
    resilience_loss,
    settling_time,
    worst_case_estimate,
)
from cpsres.structure import (
    t_actuator_resilience,
    t_communication_resilience,
    t_control_resilience,
    t_sensor_resilience,
)
from cpsres.switched import Orchestrator, select_model, simulate_switched
from cpsres.te_benchmark import (
    INPUT_SETPOINTS_TEXT,
    OUTPUT_SETPOINTS_TEXT,
    P_INDEX,
    pressure_variable,
    te_baseline_controller,
    te_limits,
    te_plant,
    te_run,
    te_scenarios,
    te_transfer_matrix,
    U_SP,
    Y_SP,
)
from cpsres.tf_algebra import RationalTF, TransferFunctionMatrix, enumerate_selections, partial_fractions, serial_factor

from .oracles import sigma
from .strategies import random_integer_system, random_stable, random_topology
from .test_structure import brute_all
from .test_switched import K1, monolithic_oracle, scalar_system
from .test_te_benchmark import PRINTED_INPUTS, PRINTED_OUTPUTS, PRINTED_SCENARIOS

RESULTS: dict[int, str] = {}
TOL_REL = 1e-9


@contextmanager
def criterion(num: int, title: str, limit_s: float | None = None):
    """Record PASS/FAIL for one criterion; a runtime limit is part of the check."""
    t0 = time.perf_counter()
    info: dict = {}
    try:
        yield info
        dt = time.perf_counter() - t0
        if limit_s is not None:
            assert dt < limit_s, f"runtime {dt:.1f}s exceeds {limit_s}s"
    except BaseException as exc:
        dt = time.perf_counter() - t0
        RESULTS[num] = f"criterion {num} FAIL  {title} ({dt:.1f}s): {type(exc).__name__}: {exc}"
        print(RESULTS[num])
        raise
    extra = ", ".join(f"{k}={v}" for k, v in info.items())
    RESULTS[num] = f"criterion {num} PASS  {title} ({dt:.1f}s{', ' + extra if extra else ''})"
    print(RESULTS[num])


# ---------------------------------------------------------------------------
# 1. closed-form extremes vs simulation and exhaustive enumeration


def _constant_input_terminal(A, B, x0, u, KA):
    x = x0.copy()
    for _ in range(KA):
        x = A @ x + B @ u
    return x


def _exhaustive_states(A, B, x0, lim, KA):
    verts = np.array(list(itertools.product(*[[lim.u_min[j], lim.u_max[j]] for j in range(B.shape[1])])))
    X = x0[None, :]
    for _ in range(KA):
        X = (X @ A.T)[:, None, :] + (verts @ B.T)[None, :, :]
        X = X.reshape(-1, A.shape[0])
    return X


def test_criterion_1_reachable_extremes():
    with criterion(1, "reachable extremes vs simulation / enumeration", limit_s=10) as info:
        rng = np.random.default_rng(2024)
        n_dom = 0
        for i in range(100):
            n, p, m = (int(v) for v in rng.integers(1, [4, 3, 3]))
            KA = int(rng.integers(0, 7))
            nonneg = i % 2 == 0
            A, B, C = random_stable(rng, n, p, m, nonneg=nonneg)
            lo = -rng.uniform(0.5, 2.0, p)
            hi = rng.uniform(0.5, 3.0, p)
            lim = SaturationLimits(lo, hi)
            x_sp = rng.uniform(-1, 1, n)
            if nonneg:
                x_sp = np.abs(x_sp)
            ext = reachable_extremes(StateSpaceModel(A, B, C), x_sp, KA, lim)
            for u, chi in ((hi, ext.chi_max), (lo, ext.chi_min)):
                np.testing.assert_allclose(chi, _constant_input_terminal(A, B, x_sp, u, KA),
                                           rtol=TOL_REL, atol=1e-12)
            if nonneg:
                X = _exhaustive_states(A, B, x_sp, lim, KA)
                scale = 1 + np.abs(X).max()
                assert np.all(X <= ext.chi_max + TOL_REL * scale)
                assert np.all(X >= ext.chi_min - TOL_REL * scale)
                n_dom += 1
        info["systems"] = 100
        info["dominance_checked"] = n_dom


# ---------------------------------------------------------------------------
# 2. metric formulas on integer-friendly fixtures


def test_criterion_2_metric_formulas():
    with criterion(2, "RL / PR / GR hand fixtures") as info:
        # SP 10, TS [0, 20]; SP 5, TS [0, 10]; attack onset k0=2 absorbed for KA=2
        y = [10, 10, 13, 16, 14, 11, 10, 10, 10, 10]
        z = [5, 5, 5, 7, 6, 5, 5, 5, 5, 5]
        vy = VariableSpec("y", 10.0, 0, 0.0, 20.0, 0.5)
        vz = VariableSpec("z", 5.0, 1, 0.0, 10.0, 0.5)
        k0, KA = 2, 2
        # hand values
        KR_y, RL_y, MD_y = 2, 3 + 6 + 4 + 1 + 0, 6
        KR_z, RL_z, MD_z = 1, 0 + 2 + 1 + 0, 2
        NR_y, NR_z = 20 * (KA + KR_y), 10 * (KA + KR_z)
        PR_y, PR_z = (NR_y - RL_y) / NR_y, (NR_z - RL_z) / NR_z
        assert (NR_y, NR_z, PR_y, PR_z) == (80, 30, 0.825, 0.9)
        GR = 0.5 * PR_y + 0.5 * PR_z

        assert settling_time(y, vy, from_step=k0 + KA) == KR_y
        assert settling_time(z, vz, from_step=k0 + KA) == KR_z
        assert resilience_loss(y, vy, k0, k0 + KA + KR_y) == RL_y
        assert resilience_loss(z, vz, k0, k0 + KA + KR_z) == RL_z
        assert max_deviation(y, vy, k0, k0 + KA + KR_y) == MD_y
        assert normal_resilience(vy, KA, KR_y) == NR_y
        assert normal_resilience(vz, KA, KR_z) == NR_z
        assert perf_stability_resilience(RL_y, vy, KA, KR_y) == PR_y
        assert perf_stability_resilience(RL_z, vz, KA, KR_z) == PR_z

        model = StateSpaceModel([[0.0]], [[1.0]], [[1.0], [1.0]])
        traj = simulate(model, None, [0.0], len(y))
        traj.outputs[:, 0] = y
        traj.outputs[:, 1] = z
        rep = measure(traj, [vy, vz], k0, KA)
        got = [(r.KR, r.MD, r.RL, r.PR) for r in (rep["y"], rep["z"])]
        assert got == [(KR_y, MD_y, RL_y, PR_y), (KR_z, MD_z, RL_z, PR_z)]
        assert rep.GR == GR
        # GR takes the minimum PR per variable over attack scenarios
        assert global_resilience([(vy, [PR_y, 0.5]), (vz, [PR_z])]) == 0.5 * 0.5 + 0.5 * PR_z
        info["GR"] = GR


# ---------------------------------------------------------------------------
# 3. structural indices vs subset enumeration


def test_criterion_3_structural_vs_brute_force():
    with criterion(3, "t-resilience vs subset enumeration", limit_s=30) as info:
        rng = np.random.default_rng(77)
        nontrivial = 0
        for _ in range(50):
            A, B, C = random_integer_system(rng)
            topo = random_topology(rng, B.shape[1], C.shape[0])
            got = (
                t_actuator_resilience(A, B, topo).t,
                t_sensor_resilience(A, C, topo).t,
                t_control_resilience(A, B, C, topo).t,
                t_communication_resilience(A, B, C, topo).t,
            )
            assert got == brute_all(A, B, C, topo), (A, B, C, topo)
            nontrivial += any(got)
        info["systems"] = 50
        info["nonzero_t"] = nontrivial


# ---------------------------------------------------------------------------
# 4. decomposition soundness


def _random_tfm(rng, n):
    rows = []
    for _ in range(n):
        row = []
        for _ in range(n):
            order = int(rng.integers(1, 3))
            den = np.poly(-rng.uniform(0.05, 2.0, order))
            num = rng.uniform(0.2, 3.0) * rng.choice([-1, 1]) * (np.poly([-rng.uniform(0.1, 3)]) if order == 2
                                                                else np.array([1.0]))
            row.append(RationalTF(num, den))
        rows.append(row)
    return TransferFunctionMatrix(rows)


def _round_trips(g: RationalTF, pts):
    ref = g(pts)
    scale = np.maximum(1.0, np.abs(ref))
    pf = partial_fractions(g)
    assert np.all(np.abs(pf.evaluate(pts) - ref) <= 1e-8 * scale)
    sf = serial_factor(g)
    assert np.all(np.abs(sf.product()(pts) - ref) <= 1e-8 * scale)


def test_criterion_4_decomposition():
    with criterion(4, "D/Q decomposition and TF round trips") as info:
        rng = np.random.default_rng(5)
        mats = [_random_tfm(rng, 2 + i % 2) for i in range(20)] + [te_transfer_matrix()]
        n_sel = worst = 0
        for G in mats:
            n = G.shape[0]
            pts = rng.uniform(-0.5, 1.0, 16) + 1j * rng.uniform(0.1, 3.0, 16)
            found = list(enumerate_selections(G))
            assert found, "no realizable selection"
            for sel, D, Q in found:
                assert Q.is_diagonal()
                for s in pts:
                    GD = G.evaluate(s) @ D.evaluate(s)
                    off = np.abs(GD - np.diag(np.diag(GD))).max()
                    worst = max(worst, off)
                    assert off <= 1e-8
                    np.testing.assert_allclose(np.diag(Q.evaluate(s)), np.diag(GD), rtol=1e-8)
                n_sel += 1
                for i in range(n):
                    for j in range(n):
                        if not D[i, j].is_zero:
                            _round_trips(D[i, j], pts)
            for i in range(n):
                for j in range(n):
                    if not G[i, j].is_zero:
                        _round_trips(G[i, j], pts)
        info["matrices"] = len(mats)
        info["selections"] = n_sel
        info["max_offdiag"] = f"{worst:.1e}"


# ---------------------------------------------------------------------------
# 5. TE qualitative reproduction


def test_criterion_5_te_properties():
    with criterion(5, "TE constants, P crossing, MD ordering, envelope", limit_s=120) as info:
        # (a) printed constants
        assert {r[0]: r[1] for r in INPUT_SETPOINTS_TEXT} == PRINTED_INPUTS
        assert {r[0]: r[1] for r in OUTPUT_SETPOINTS_TEXT} == PRINTED_OUTPUTS
        assert scenario_constants() == PRINTED_SCENARIOS
        assert [r[4:] for r in OUTPUT_SETPOINTS_TEXT if r[0] == "P"] == [("2000", "3000")]

        var = pressure_variable()
        start, KA, horizon = 100, 30, 3000
        scen = te_scenarios(start, KA)
        reports = {}
        for fam, lst in scen.items():
            for sc in lst:
                traj = te_run(sc, horizon)
                reports[sc.label] = (traj, measure(traj, [var], start, KA)["P"])
        # (b) crossing the upper threshold
        p_max = reports["max_pressure#1"][0].y[:, P_INDEX].max()
        assert p_max > 3000.0
        # (c) ordering
        mds = {k: r.MD for k, (_, r) in reports.items()}
        for fam in ("max_pressure", "min_pressure"):
            assert mds[f"{fam}#1"] > mds[f"{fam}#2"] > mds[f"{fam}#3"], mds
        # (d) envelope over the six scenarios and two 200-run campaigns
        model = te_plant()
        est = {}
        for fam, d in (("max_pressure", "max"), ("min_pressure", "min")):
            est[fam] = worst_case_estimate(model, te_baseline_controller(), [var], KA, te_limits(),
                                           direction=d, y_offset=Y_SP, u_offset=U_SP)["P"]
        for label, (_, r) in reports.items():
            e = est[label.split("#")[0]]
            assert r.MD <= e.MD * (1 + TOL_REL) and r.RL <= e.RL * (1 + TOL_REL), (label, r, e)
        n_viol = 0
        for fam in ("max_pressure", "min_pressure"):
            res = run_campaign({"plant": "te", "montecarlo": {"family": fam, "n_runs": 200, "seed": 1}})
            n_viol += len(res.violations)
            assert res.estimate["P"].MD == est[fam].MD
        assert n_viol == 0
        info["P_max"] = f"{p_max:.1f}"
        info["MD"] = "/".join(f"{mds[k]:.0f}" for k in sorted(mds))
        info["mc_runs"] = 400


# ---------------------------------------------------------------------------
# 6. switched equivalence


def test_criterion_6_switched_equivalence():
    with criterion(6, "switched decentralized loop vs monolithic") as info:
        sw = scalar_system(interval=10)
        run = simulate_switched(sw, np.zeros(sw.plant.state_dim), 500, switch_settle_guard=20)
        y_ref, _ = monolithic_oracle(500)
        gap = np.abs(run.trajectory.y[:, 0] - y_ref)[~run.transient].max()
        assert len(run.switch_steps) > 0
        assert gap < 1e-3
        a = [m for _, m in Orchestrator(K1, bytes(32), 2, 10).schedule(500)]
        b = [sigma(K1, j, 2) for j in range(50)]
        c = [select_model(K1, j, 2) for j in range(50)]
        assert a == b == c
        assert [m for _, m in run.schedule] == a
        info["switches"] = len(run.switch_steps)
        info["max_gap"] = f"{gap:.1e}"


# ---------------------------------------------------------------------------
# 7. determinism across invocations


def _cli(args, cwd):
    r = subprocess.run([sys.executable, "-m", "cpsres.cli", *args], cwd=cwd, capture_output=True, text=True)
    return r.returncode


def test_criterion_7_determinism(tmp_path):
    with criterion(7, "byte-identical CSV and campaign JSON across invocations") as info:
        n = te_plant().state_dim
        doc = {
            "plant": "te", "horizon": 600,
            "noise": {"Q": np.diag(np.full(n, 1e-4)).tolist(), "R": np.diag(np.full(4, 1e-2)).tolist(), "seed": 3},
            "attack": {"type": "table", "table": "min_pressure", "index": 2, "start_step": 100},
            "montecarlo": {"family": "max_pressure", "n_runs": 24, "seed": 9},
        }
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(doc))
        blobs = {}
        for tag in ("a", "b"):
            out = tmp_path / tag
            _cli(["simulate", "--config", str(cfg), "--out", str(out), "--quiet"], tmp_path)
            assert _cli(["montecarlo", "--config", str(cfg), "--out", str(out), "--quiet"], tmp_path) == 0
            blobs[tag] = [(out / f).read_bytes() for f in ("trajectory.csv", "campaign.json", "runs.csv")]
        assert all(len(b) > 0 for b in blobs["a"])
        assert blobs["a"] == blobs["b"]
        info["files"] = 3


def _main():
    import pathlib
    import tempfile

    tests = [test_criterion_1_reachable_extremes, test_criterion_2_metric_formulas,
             test_criterion_3_structural_vs_brute_force, test_criterion_4_decomposition,
             test_criterion_5_te_properties, test_criterion_6_switched_equivalence]
    for t in tests:
        try:
            t()
        except Exception:
            pass
    with tempfile.TemporaryDirectory() as d:
        try:
            test_criterion_7_determinism(pathlib.Path(d))
        except Exception:
            pass
    print()
    for k in sorted(RESULTS):
        print(RESULTS[k])
    return 0 if all("PASS" in v for v in RESULTS.values()) and len(RESULTS) == 7 else 1


if __name__ == "__main__":
    sys.exit(_main())
