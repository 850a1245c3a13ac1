"""End-to-end experiment runners shared by the CLI and the scripts."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import lorentz as lz
from .config import ExperimentConfig
from .groups import GroupSpec, dumps_numbers, load_group, orthogonal_axes_schottky, radial_basepoint
from .orbits import CSV_MAGIC, EnumerationPolicy, enumerate_ball
from .patterson import DeltaEstimate, PSMeasureAtoms, build_ps_atoms, estimate_delta


@dataclass
class Context:
    cfg: ExperimentConfig
    spec: GroupSpec
    x: np.ndarray
    controlled: bool
    policy: EnumerationPolicy


def group_from_config(cfg: ExperimentConfig) -> GroupSpec:
    if cfg.group.path:
        return load_group(cfg.resolve(cfg.group.path))
    return orthogonal_axes_schottky(cfg.group.n, cfg.group.length, cfg.group.rank)


def context(cfg: ExperimentConfig, threads: int | None = None) -> Context:
    spec = group_from_config(cfg)
    if cfg.basepoint.matrix is not None:
        x = lz.check_element(np.array(cfg.basepoint.matrix, dtype=float))
        x = lz.psi(x)
        controlled = False
    else:
        x = radial_basepoint(spec, cfg.basepoint.generator)
        controlled = True
    policy = EnumerationPolicy(threads=threads or cfg.threads)
    return Context(cfg, spec, x, controlled, policy)


def delta_for(ctx: Context) -> DeltaEstimate:
    return estimate_delta(ctx.spec, ctx.cfg.delta.Rmax, ctx.policy)


def atoms_for(ctx: Context, d: DeltaEstimate) -> PSMeasureAtoms:
    s = d.delta + 0.1 if ctx.cfg.atoms.s == "auto" else float(ctx.cfg.atoms.s)
    return build_ps_atoms(ctx.spec, s, ctx.cfg.atoms.R, delta=d.delta, policy=ctx.policy)


def _center(spec_center, x) -> np.ndarray:
    if isinstance(spec_center, str):
        if spec_center == "basepoint_minus":
            return lz.endpoints(x)[1]
        if spec_center == "basepoint_plus":
            return lz.endpoints(x)[0]
        raise ValueError(f"unknown centre keyword {spec_center!r}")
    return lz.boundary_point(np.asarray(spec_center, dtype=float))


def phi_for(ctx: Context) -> ex.TestFunction:
    p = ctx.cfg.phi
    return ex.TestFunction(p.rho1, p.rho2, _center(p.center, ctx.x), p.radius)


def nu_mass_for(ctx: Context, d: DeltaEstimate) -> float:
    mode = ctx.cfg.sweep.normalization
    if mode == "unit":
        return 1.0
    if mode == "roblin":
        return ex.roblin_nu_mass(d.delta, d.intercept)
    raise ValueError(f"unknown normalization {mode!r}")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------


@dataclass
class RatioRun:
    result: ex.SweepResult
    delta: DeltaEstimate
    drifts: list
    summary: dict


def run_ratio(cfg: ExperimentConfig, out_dir: Path | None = None, threads: int | None = None) -> RatioRun:
    ctx = context(cfg, threads)
    d = delta_for(ctx)
    atoms = atoms_for(ctx, d)
    phi = phi_for(ctx)
    K = nu_mass_for(ctx, d)
    sw = cfg.sweep
    Tgrid = ex.geometric_grid(sw.Tmin, sw.Tmax, sw.points)
    res = ex.ratio_sweep(
        ctx.spec, ctx.x, phi, Tgrid, atoms, d.delta, nu_mass=K, policy=ctx.policy, delta_stderr=d.stderr, controlled_basepoint=ctx.controlled
    )
    if d.flagged:
        for r in res.records:
            r.flags = "|".join([f for f in (r.flags, "delta_methods_disagree") if f])
    drifts = ex.decade_drifts(res.Ts(), res.ratios(), sw.Tmin, sw.Tmax)
    summary = {
        "group": ctx.spec.label,
        "seed": cfg.seed,
        "delta": d.delta,
        "delta_stderr": d.stderr,
        "delta_poincare": d.poincare_delta,
        "nu_mass": K,
        "atoms": len(atoms),
        "ratio_min": float(np.nanmin(res.ratios())),
        "ratio_max": float(np.nanmax(res.ratios())),
        "band_min": float(np.min(res.band_ratios())),
        "band_max": float(np.max(res.band_ratios())),
        "decade_drifts": [[k, v] for k, v in drifts],
        "sensitivity": res.sensitivity,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = f"group={ctx.spec.label} seed={cfg.seed} delta={fmt(d.delta)} nu_mass={fmt(K)}"
        ex.write_ratio_csv(out_dir / "ratio.csv", res, meta)
        (out_dir / "ratio_summary.json").write_text(dumps_numbers(summary) + "\n")
    return RatioRun(res, d, drifts, summary)


def run_audit(cfg: ExperimentConfig, out_dir: Path | None = None, threads: int | None = None):
    ctx = context(cfg, threads)
    a = cfg.audit
    center = None if a.center is None else _center(a.center, ctx.x)
    window = ex.Window(a.rho1, a.rho2, center, a.radius)
    Tgrid = ex.geometric_grid(a.Tmin, a.Tmax, a.points)
    rep = ex.lemma_bound_audit(ctx.spec, ctx.x, window, Tgrid, policy=ctx.policy)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = [CSV_MAGIC, f"# group={ctx.spec.label} seed={cfg.seed} upper_ok={rep.upper_ok} lower_ok={rep.lower_ok}", "T,c_star,n_points"]
        lines += [f"{fmt(T)},{fmt(c)},{n}" for T, c, n in zip(rep.Tgrid, rep.c_star, rep.n_points)]
        (out_dir / "audit.csv").write_text("\n".join(lines) + "\n")
    return rep


def bumps_for(cfg: ExperimentConfig) -> list:
    return [ex.Bump2D(tuple(float(c) for c in b["center"]), float(b["radius"]), float(b.get("scale", 1.0))) for b in cfg.ledrappier.bumps]


def run_ledrappier(cfg: ExperimentConfig, out_dir: Path | None = None):
    L = cfg.ledrappier
    bumps = bumps_for(cfg)
    tab = ex.ledrappier_sweep(L.X, bumps, L.T)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = [CSV_MAGIC, f"# X={list(map(float, L.X))} seed={cfg.seed}", "f,T,S_over_T,reference"]
        for i, name in enumerate(tab.names):
            for j, T in enumerate(tab.Tgrid):
                lines.append(f"{name},{T},{fmt(tab.S_over_T[i, j])},{fmt(tab.reference[i])}")
        (out_dir / "ledrappier.csv").write_text("\n".join(lines) + "\n")
        err = tab.ratio_errors()
        (out_dir / "ledrappier_ratios.json").write_text(dumps_numbers({"names": tab.names, "T": tab.Tgrid[-1], "ratio_errors": err.tolist()}) + "\n")
    return tab


def run_orbit_sum(cfg: ExperimentConfig, T: float, threads: int | None = None) -> dict:
    ctx = context(cfg, threads)
    phi = phi_for(ctx)
    batch = enumerate_ball(ctx.spec, T, ctx.policy)
    return {"T": T, "orbit_sum": ex.orbit_sum(ctx.x, phi, batch), "elements": len(batch), "status": batch.status, "controlled_basepoint": ctx.controlled}


def atoms_summary(atoms: PSMeasureAtoms) -> dict:
    return {"s": atoms.s, "R": atoms.R, "atoms": len(atoms), "raw_mass": atoms.raw_mass}
