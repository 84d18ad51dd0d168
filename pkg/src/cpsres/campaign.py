"""Monte Carlo attack campaigns checked against the worst-case estimate."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .adversary import SaturationAttackScenario, scenario_constants
from .config import Scenario, build_scenario
from .errors import ConfigError, NotSettledError
from .lti_core import simulate
from .metrics import ResilienceReport, measure, worst_case_estimate
from .switched import keyed_index

CAMPAIGN_VERSION = 1
ENVELOPE_RTOL = 1e-9


def run_seed(master_seed: int, index: int) -> int:
    """Per-run seed: keyed hash of the run index under the master seed."""
    return keyed_index(int(master_seed).to_bytes(8, "big"), int(index).to_bytes(8, "big"), 2**63)


def family_ranges(family: str) -> dict[int, tuple[float, float]]:
    """Stuck-level box spanned by the three table scenarios of a family."""
    rows = scenario_constants()[family]
    u1 = [float(r[0]) for r in rows]
    u3 = [float(r[1]) for r in rows]
    return {0: (min(u1), max(u1)), 2: (min(u3), max(u3))}


def worker_count() -> int:
    cap = os.environ.get("CPS_RES_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


@dataclass
class CampaignSpec:
    n_runs: int
    seed: int
    ranges: dict[int, tuple[float, float]]
    start_range: tuple[int, int]
    duration: int
    direction: str

    @classmethod
    def from_scenario(cls, sc: Scenario, n_runs: int | None = None, seed: int | None = None) -> "CampaignSpec":
        mc = sc.doc.get("montecarlo", {})
        family = mc.get("family")
        if "stuck_ranges" in mc:
            from .config import _input_index

            ranges = {_input_index(k, sc.input_names): tuple(v) for k, v in mc["stuck_ranges"].items()}
        elif family:
            ranges = family_ranges(family)
        else:
            raise ConfigError("montecarlo: give either 'family' or 'stuck_ranges'")
        for i, (lo, hi) in ranges.items():
            if not lo <= hi:
                raise ConfigError(f"montecarlo: empty stuck range for input {i}")
        direction = mc.get("direction") or {"max_pressure": "max", "min_pressure": "min"}.get(family, "max")
        duration = mc.get("duration", sc.KA)
        start_range = tuple(mc.get("start_range", (50, 500)))
        if start_range[0] > start_range[1]:
            raise ConfigError("montecarlo: start_range must be increasing")
        if start_range[1] + duration >= sc.horizon:
            raise ConfigError("montecarlo: horizon leaves no room for recovery after the latest attack")
        return cls(
            n_runs=mc.get("n_runs", 200) if n_runs is None else n_runs,
            seed=mc.get("seed", 0) if seed is None else seed,
            ranges=dict(sorted(ranges.items())),
            start_range=start_range,
            duration=duration,
            direction=direction,
        )

    def sample(self, index: int) -> tuple[int, SaturationAttackScenario]:
        seed = run_seed(self.seed, index)
        return seed, self.from_seed(seed, f"run{index}")

    def from_seed(self, seed: int, label: str = "") -> SaturationAttackScenario:
        """Attack drawn by a run; the logged per-run seed is enough to replay it."""
        rng = np.random.default_rng(seed)
        levels = {i: float(rng.uniform(lo, hi)) for i, (lo, hi) in self.ranges.items()}
        start = int(rng.integers(self.start_range[0], self.start_range[1] + 1))
        return SaturationAttackScenario(levels, start, self.duration, label)


def monitored(sc: Scenario):
    weighted = [v for v in sc.variables if v.weight > 0]
    return weighted or list(sc.variables)


def digest(traj) -> str:
    h = hashlib.sha256()
    for a in (traj.states, traj.saturated_inputs, traj.outputs):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


@lru_cache(maxsize=4)
def _scenario(doc_json: str) -> Scenario:
    return build_scenario(json.loads(doc_json))


def _one_run(args):
    doc_json, spec, index = args
    sc = _scenario(doc_json)
    seed, attack = spec.sample(index)
    traj = simulate(sc.model, sc.controller, sc.x0, sc.horizon, limits=sc.limits, attack=attack,
                    u_offset=sc.u_offset, y_offset=sc.y_offset)
    record = {
        "run": index,
        "seed": seed,
        "start": attack.start,
        "duration": attack.duration,
        "levels": {sc.input_names[i]: v for i, v in attack.levels.items()},
        "digest": digest(traj),
    }
    try:
        rep = measure(traj, monitored(sc), attack.start, attack.duration, sc.band_fraction)
        record["report"] = rep.to_dict()
    except NotSettledError as exc:
        record["report"] = None
        record["error"] = str(exc)
    var = monitored(sc)[0]
    y = traj.y[attack.start:, var.output] - var.setpoint
    return record, y


@dataclass
class CampaignResult:
    spec: CampaignSpec
    estimate: ResilienceReport
    runs: list[dict]
    deviations: list[np.ndarray] = field(repr=False, default_factory=list)
    estimate_deviation: np.ndarray | None = field(repr=False, default=None)

    @property
    def violations(self) -> list[dict]:
        out = []
        est = {v.name: v for v in self.estimate.variables}
        for r in self.runs:
            if r["report"] is None:
                out.append({"run": r["run"], "seed": r["seed"], "reason": r.get("error", "not settled")})
                continue
            for v in r["report"]["variables"]:
                e = est[v["name"]]
                for key in ("MD", "RL"):
                    if v[key] > getattr(e, key) * (1 + ENVELOPE_RTOL):
                        out.append({"run": r["run"], "seed": r["seed"], "variable": v["name"], "metric": key,
                                    "measured": v[key], "estimate": getattr(e, key)})
        return out

    def statistics(self) -> dict:
        stats: dict = {}
        for r in self.runs:
            if r["report"] is None:
                continue
            for v in r["report"]["variables"]:
                s = stats.setdefault(v["name"], {"MD": [], "RL": [], "PR": [], "KR": []})
                for key in s:
                    if v[key] is not None:
                        s[key].append(v[key])
        return {
            name: {key: ({"min": min(vals), "mean": float(np.mean(vals)), "max": max(vals)} if vals else None)
                   for key, vals in s.items()}
            for name, s in stats.items()
        }

    def to_dict(self) -> dict:
        viol = self.violations
        return {
            "version": CAMPAIGN_VERSION,
            "master_seed": self.spec.seed,
            "n_runs": self.spec.n_runs,
            "direction": self.spec.direction,
            "estimate": self.estimate.to_dict(),
            "runs": self.runs,
            "aggregate": {"envelope_violations": len(viol), "violations": viol, "statistics": self.statistics()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        level_names = list(self.runs[0]["levels"]) if self.runs else []
        w.writerow(["run", "seed", "start", "duration", *level_names, "variable", "KR", "MD", "RL", "PR"])
        for r in self.runs:
            head = [r["run"], r["seed"], r["start"], r["duration"], *[repr(float(r["levels"][n])) for n in level_names]]
            if r["report"] is None:
                w.writerow(head + ["", "", "", "", ""])
                continue
            for v in r["report"]["variables"]:
                w.writerow(head + [v["name"], v["KR"], repr(float(v["MD"])), repr(float(v["RL"])),
                                   "" if v["PR"] is None else repr(float(v["PR"]))])
        return buf.getvalue()

    def gnuplot_data(self) -> str:
        """Tab-separated: steps since attack onset, estimate deviation, run-wise min and max deviation."""
        if not self.deviations or self.estimate_deviation is None:
            return ""
        L = min(min(len(d) for d in self.deviations), len(self.estimate_deviation))
        stack = np.vstack([d[:L] for d in self.deviations])
        lines = ["# k_since_attack\testimate_dev\truns_min_dev\truns_max_dev"]
        for k in range(L):
            lines.append(f"{k}\t{float(self.estimate_deviation[k])!r}\t{float(stack[:, k].min())!r}\t{float(stack[:, k].max())!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def gnuplot_script(data_file: str = "envelope.dat", image: str = "envelope.png") -> str:
        return (
            "set terminal pngcairo size 900,500\n"
            f"set output '{image}'\n"
            "set xlabel 'steps since attack onset'\n"
            "set ylabel 'deviation from setpoint'\n"
            "set key top right\n"
            f"plot '{data_file}' using 1:3:4 with filledcurves lc rgb '#bbbbff' title 'Monte Carlo range', \\\n"
            f"     '{data_file}' using 1:2 with lines lw 2 lc rgb '#cc0000' title 'worst-case estimate'\n"
        )


def run_campaign(doc: dict, n_runs: int | None = None, seed: int | None = None,
                 workers: int | None = None) -> CampaignResult:
    sc = build_scenario(doc)
    spec = CampaignSpec.from_scenario(sc, n_runs, seed)
    runs_out: list = []
    est = worst_case_estimate(sc.model, sc.controller, monitored(sc), spec.duration, sc.limits,
                              band_fraction=sc.band_fraction, direction=spec.direction, y_offset=sc.y_offset,
                              u_offset=sc.u_offset, max_recovery=sc.max_recovery, runs=runs_out)
    var = monitored(sc)[0]
    est_dev = runs_out[0].trajectory.y[:, var.output] - var.setpoint
    doc_json = json.dumps(doc, sort_keys=True)
    jobs = [(doc_json, spec, i) for i in range(spec.n_runs)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or spec.n_runs < 8:
        results = [_one_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs, chunksize=max(1, spec.n_runs // (4 * workers))))
    return CampaignResult(spec, est, [r for r, _ in results], [y for _, y in results], est_dev)
