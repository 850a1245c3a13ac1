"""Fit the constant c* for U-components of orbit points over a T grid and nested windows."""
import argparse
from pathlib import Path

from horocount import experiments as ex
from horocount.config import load_config
from horocount.pipeline import context, run_audit

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "schottky2.toml"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.resolve(cfg.output_dir)
    rep = run_audit(cfg, out)
    for T, c, n in zip(rep.Tgrid, rep.c_star, rep.n_points):
        print(f"T={T:12.4g}  c*={c:10.5f}  points={n}")
    print(f"growth 1e4 -> 1e6: {rep.growth(1e4, 1e6):+.3%}; inclusions upper={rep.upper_ok} lower={rep.lower_ok}")
    ctx = context(cfg)
    a = cfg.audit
    w = ex.Window(a.rho1, a.rho2)
    for f in (1.0, 0.75, 0.5, 0.25):
        r = ex.lemma_bound_audit(ctx.spec, ctx.x, w.shrink(f), [a.Tmax], policy=ctx.policy)
        print(f"window shrink {f:4}: c*={r.c_star[-1]:.5f} points={r.n_points[-1]}")


if __name__ == "__main__":
    main()
