"""Ratio sweep orbit_sum / I over a geometric T grid; prints decade medians and drifts."""
import argparse
from pathlib import Path

from horocount import experiments as ex
from horocount.config import load_config
from horocount.pipeline import run_ratio

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "schottky2.toml"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.resolve(cfg.output_dir)
    run = run_ratio(cfg, out)
    s = run.summary
    print(f"delta = {s['delta']:.4f} +- {s['delta_stderr']:.4f}  (Poincare {s['delta_poincare']:.4f})")
    print(f"ratio in [{s['ratio_min']:.3f}, {s['ratio_max']:.3f}]; T-power/band in [{s['band_min']:.3f}, {s['band_max']:.3f}]")
    for k, m in ex.decade_medians(run.result.Ts(), run.result.ratios(), cfg.sweep.Tmin, cfg.sweep.Tmax):
        print(f"decade 1e{k}: median ratio {m:.4f}")
    for k, d in run.drifts:
        print(f"decade 1e{k}: drift {d:.4f}")
    print(f"wrote {out / 'ratio.csv'}")


if __name__ == "__main__":
    main()
