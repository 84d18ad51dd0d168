"""Measured resilience of the six TE pressure attack scenarios next to the
worst-case estimate for each direction.

    python scripts/te_scenarios.py --out results/te_scenarios
"""
import argparse
import json
from pathlib import Path

import numpy as np

from cpsres.metrics import measure, worst_case_estimate
from cpsres.te_benchmark import (
    P_INDEX,
    U_SP,
    Y_SP,
    pressure_variable,
    te_baseline_controller,
    te_limits,
    te_plant,
    te_run,
    te_scenarios,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/te_scenarios")
    ap.add_argument("--start", type=int, default=100)
    ap.add_argument("--ka", type=int, default=30)
    ap.add_argument("--horizon", type=int, default=3000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    var = pressure_variable()
    rows, traces = [], {}
    for d, fam in (("max", "max_pressure"), ("min", "min_pressure")):
        est = worst_case_estimate(te_plant(), te_baseline_controller(), [var], args.ka, te_limits(),
                                  direction=d, y_offset=Y_SP, u_offset=U_SP)["P"]
        rows.append({"case": f"estimate ({d})", "KR": est.KR, "MD": est.MD, "RL": est.RL, "PR": est.PR})
        for sc in te_scenarios(args.start, args.ka)[fam]:
            traj = te_run(sc, args.horizon)
            r = measure(traj, [var], args.start, args.ka)["P"]
            traces[sc.label] = traj.y[:, P_INDEX]
            rows.append({"case": sc.label, "u1": sc.levels[0], "u3": sc.levels[2], "KR": r.KR, "MD": r.MD,
                         "RL": r.RL, "PR": r.PR, "P_peak": float(traj.y[:, P_INDEX].max()),
                         "P_low": float(traj.y[:, P_INDEX].min())})

    print(f"{'case':<16}{'KR':>6}{'MD':>10}{'RL':>12}{'PR %':>8}")
    for r in rows:
        print(f"{r['case']:<16}{r['KR']:>6}{r['MD']:>10.2f}{r['RL']:>12.1f}{100 * r['PR']:>8.2f}")
    (out / "te_scenarios.json").write_text(json.dumps(rows, indent=2))
    np.savetxt(out / "pressure.csv", np.column_stack(list(traces.values())), delimiter=",",
               header=",".join(traces), comments="")
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for label, p in traces.items():
        ax.plot(p[: 1500], label=label)
    ax.axhline(3000, color="k", ls="--", lw=0.8)
    ax.axhline(2000, color="k", ls="--", lw=0.8)
    ax.set_xlabel("step (s)")
    ax.set_ylabel("P (kPa)")
    ax.legend(ncol=2, fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "pressure.png", dpi=120)


if __name__ == "__main__":
    main()
