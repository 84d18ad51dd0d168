"""Monte Carlo stuck-valve campaigns for both pressure directions, checked
against the worst-case estimate envelope.

    python scripts/te_montecarlo.py --runs 200 --seed 1 --out results/te_montecarlo
"""
import argparse
from pathlib import Path

import numpy as np

from cpsres.campaign import CampaignResult, run_campaign


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/te_montecarlo")
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for fam in ("max_pressure", "min_pressure"):
        res = run_campaign({"plant": "te", "montecarlo": {"family": fam, "n_runs": args.runs, "seed": args.seed}})
        d = out / fam
        d.mkdir(exist_ok=True)
        (d / "campaign.json").write_text(res.to_json())
        (d / "runs.csv").write_text(res.runs_csv())
        (d / "envelope.dat").write_text(res.gnuplot_data())
        (d / "envelope.gp").write_text(CampaignResult.gnuplot_script())
        st = res.statistics()["P"]
        est = res.estimate["P"]
        print(f"{fam}: {args.runs} runs, {len(res.violations)} envelope violations; "
              f"MD estimate {est.MD:.1f} vs runs max {st['MD']['max']:.1f}; "
              f"RL estimate {est.RL:.0f} vs runs max {st['RL']['max']:.0f}")
        _plot(res, d / "envelope.png")


def _plot(res, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    L = min(min(len(y) for y in res.deviations), len(res.estimate_deviation), 1200)
    stack = np.vstack([y[:L] for y in res.deviations])
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.fill_between(np.arange(L), stack.min(0), stack.max(0), color="#bbbbff", label="Monte Carlo range")
    ax.plot(res.estimate_deviation[:L], color="#cc0000", lw=2, label="worst-case estimate")
    ax.set_xlabel("steps since attack onset")
    ax.set_ylabel("P deviation from setpoint (kPa)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)


if __name__ == "__main__":
    main()
