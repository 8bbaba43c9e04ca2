from __future__ import annotations

from pathlib import Path
import sys


def fmt_sci(value: float) -> str:
    return f"{value:.4e}"


def main() -> None:
    root = Path(__file__).resolve().parents[1]
    sys.path.insert(0, str(root))

    from src.acdc_poset.config import load_config
    from src.acdc_poset.pipeline import run_experiment

    config_path = root / "config.example.json"
    parameter_file = root / "data" / "mtdc_parameters.json"
    out_dir = root / "outputs" / "mtdc_experiment"

    cfg = load_config(config_path)
    result = run_experiment(parameter_file, cfg, sim=cfg.simulation, out_dir=out_dir, plot=True, excel=True)
    summary = result.summary

    print(f"States / inputs: {summary['States']} / {summary['Inputs']}")
    print(f"H2 centralized:     {fmt_sci(result.centralized.h2_norm)}")
    print(f"H2 leader-follower: {fmt_sci(result.leader_follower.h2_norm)}")
    print(f"H2 ratio:           {summary['H2 ratio']:.4f}")
    print(f"Checks passed:      {summary['Checks passed']}/{summary['Checks total']}")

    failing = result.checks[result.checks["status"] != "PASS"]
    for _, row in failing.iterrows():
        print(f"  {row['status']}: {row['check']} ({row['value']})")

    print(f"Outputs written to {out_dir}")


if __name__ == "__main__":
    main()
