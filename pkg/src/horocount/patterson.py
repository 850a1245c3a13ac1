"""Critical exponents, Patterson-Sullivan atoms and PS masses of horospherical balls."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import lorentz as lz
from .groups import GroupSpec, dumps_numbers, sl2_to_so21_batch
from .orbits import EnumerationPolicy, direct_scan_sl2z, enumerate_ball, norm_bound_for_radius, orbit_distances


class InsufficientOrbit(ValueError):
    code = "E_INSUFFICIENT_ORBIT"


class DegenerateBase(ValueError):
    code = "E_DEGENERATE_BASE"


# ---------------------------------------------------------------------------
# orbit points


def orbit_points(spec: GroupSpec, Rmax: float, policy: EnumerationPolicy | None = None):
    """(distances, hyperboloid points o.gamma) over the ball of radius Rmax, sorted by distance."""
    if spec.kind == "sl2z_lattice":
        Ts = int(math.floor(math.sqrt(2 * math.cosh(Rmax)))) + 1
        scan = direct_scan_sl2z(Ts)
        m = scan.matrices
        rep = (m[:, 0, 0] > 0) | ((m[:, 0, 0] == 0) & (m[:, 0, 1] > 0))
        m = m[rep]
        d = np.arccosh(np.maximum(np.sum(m.astype(float) ** 2, axis=(1, 2)) / 2.0, 1.0))
        keep = d <= Rmax
        m, d = m[keep], d[keep]
        pts = lz.frame(2).o @ sl2_to_so21_batch(m)
    else:
        batch = enumerate_ball(spec, norm_bound_for_radius(Rmax, spec.n), policy)
        keep = batch.dists <= Rmax
        d = batch.dists[keep]
        pts = lz.frame(spec.n).o @ batch.matrices[keep]
    order = np.argsort(d, kind="stable")
    return d[order], pts[order]


# ---------------------------------------------------------------------------
# critical exponent


@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    stderr: float
    method: str
    R_range: tuple
    poincare_delta: float = math.nan
    poincare_stderr: float = math.nan
    agree: bool = True
    intercept: float = math.nan  # log C in N(R) ~ C e^{delta R}
    count: int = 0

    @property
    def flagged(self) -> bool:
        return not self.agree


def poincare_series(spec_or_dists, s: float, Rcutoff: float | None = None) -> float:
    """Partial Poincare series sum_{d(o, gamma o) <= Rcutoff} exp(-s d); identity included."""
    if isinstance(spec_or_dists, GroupSpec):
        d, _ = orbit_distances(spec_or_dists, Rcutoff)
    else:
        d = np.asarray(spec_or_dists, dtype=float)
        if Rcutoff is not None:
            d = d[d <= Rcutoff]
    return float(np.sum(np.exp(-s * d)))


def growth_regression(dists: np.ndarray, R_lo: float, R_hi: float, step: float = 0.1):
    """OLS slope/intercept of log N(R) on a grid over [R_lo, R_hi]; returns (slope, stderr, intercept)."""
    R = np.arange(R_lo, R_hi + 1e-9, step)
    N = np.searchsorted(dists, R, side="right")
    if np.any(N == 0):
        raise InsufficientOrbit("empty ball inside the regression window")
    y = np.log(N)
    X = np.stack([np.ones_like(R), R], axis=1)
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(1, len(R) - 2)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(math.sqrt(cov[1, 1])), float(coef[0])


def _window_mass(dists, s, a, b):
    sel = dists[(dists > a) & (dists <= b)]
    return float(np.sum(np.exp(-s * (sel - a))))


def poincare_abscissa(dists: np.ndarray, Rmax: float, s_hi: float):
    """Exponent at which two adjacent equal-width windows of the Poincare series carry equal mass.

    Several window pairs inside [Rmax/4, Rmax] give several estimates; their spread is the stderr.
    """
    ests = []
    for frac in (1 / 3, 1 / 4, 1 / 6):
        W = frac * Rmax
        a = Rmax - 2 * W
        while a >= Rmax / 4 - 1e-12:
            if np.any((dists > a) & (dists <= a + W)) and np.any((dists > a + W) & (dists <= a + 2 * W)):

                def gap(s, a=a, W=W):
                    return math.log(_window_mass(dists, s, a + W, a + 2 * W)) - s * W - math.log(_window_mass(dists, s, a, a + W))

                lo, hi = -1.0, s_hi + 1.0
                if gap(lo) > 0 > gap(hi):
                    ests.append(optimize.brentq(gap, lo, hi, xtol=1e-12))
            a -= W / 2
    if not ests:
        raise InsufficientOrbit("no usable window pairs for the Poincare abscissa")
    ests = np.array(ests)
    return float(np.mean(ests)), float(np.std(ests)), ests


def estimate_delta(spec: GroupSpec, Rmax: float, policy: EnumerationPolicy | None = None, min_count: int = 200, dists=None) -> DeltaEstimate:
    if dists is None:
        dists, _ = orbit_distances(spec, Rmax, policy)
    dists = np.sort(np.asarray(dists))
    count = int(np.searchsorted(dists, Rmax, side="right"))
    if count < min_count:
        growth = math.log(max(count, 2)) / max(Rmax, 1e-9)
        suggest = Rmax + math.log(min_count / max(count, 1)) / max(growth, 1e-3)
        raise InsufficientOrbit(f"only {count} orbit points within R={Rmax:g}; need {min_count} (try Rmax >= {suggest:.1f})")
    slope, se, icept = growth_regression(dists, Rmax / 2, Rmax)
    n = spec.n if isinstance(spec, GroupSpec) else 2
    p_mean, p_se, _ = poincare_abscissa(dists, Rmax, n - 1)
    agree = abs(slope - p_mean) <= 2 * math.hypot(se, p_se)
    return DeltaEstimate(
        delta=slope,
        stderr=se,
        method="growth_regression",
        R_range=(Rmax / 2, Rmax),
        poincare_delta=p_mean,
        poincare_stderr=p_se,
        agree=bool(agree),
        intercept=icept,
        count=count,
    )


# ---------------------------------------------------------------------------
# Patterson-Sullivan atoms


@dataclass
class PSMeasureAtoms:
    xi: np.ndarray  # (N, n+1) normalised boundary representatives
    weights: np.ndarray  # normalised to total mass 1
    s: float
    R: float
    raw_mass: float
    delta: float = math.nan
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)

    def scaled(self, c: float) -> "PSMeasureAtoms":
        return PSMeasureAtoms(self.xi, self.weights * c, self.s, self.R, self.raw_mass, self.delta, self.label, dict(self.extra))

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "R": self.R,
            "delta": self.delta,
            "raw_mass": self.raw_mass,
            "label": self.label,
            "atoms": [{"xi": x.tolist(), "w": float(w)} for x, w in zip(self.xi, self.weights)],
        }

    def save(self, path) -> None:
        Path(path).write_text(dumps_numbers(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "PSMeasureAtoms":
        doc = json.loads(Path(path).read_text())
        xi = np.array([a["xi"] for a in doc["atoms"]], dtype=float)
        w = np.array([a["w"] for a in doc["atoms"]], dtype=float)
        return cls(xi, w, float(doc["s"]), float(doc["R"]), float(doc.get("raw_mass", 1.0)), float(doc.get("delta", math.nan)), doc.get("label", ""))


def project_to_boundary(points: np.ndarray) -> np.ndarray:
    """Boundary point at the end of the geodesic ray from o through each point."""
    sp = lz.to_diag(points)[..., :-1]
    return lz.boundary_from_direction(sp)


def build_ps_atoms(spec: GroupSpec, s: float, R: float, delta: float = math.nan, policy: EnumerationPolicy | None = None, min_atoms: int = 500, points=None) -> PSMeasureAtoms:
    """Atoms at the visual projections of orbit points with d in [R/2, R], weights exp(-s d)."""
    if not math.isnan(delta) and s < delta:
        raise ValueError(f"exponent s={s} below the critical exponent estimate {delta}")
    if points is None:
        d, pts = orbit_points(spec, R, policy)
    else:
        d, pts = points
    sel = (d >= R / 2) & (d <= R) & (d > 0)
    if int(sel.sum()) < min_atoms:
        raise InsufficientOrbit(f"only {int(sel.sum())} atoms in the annulus [{R / 2:g}, {R:g}]; need {min_atoms}")
    d, pts = d[sel], pts[sel]
    w = np.exp(-s * d)
    raw = float(w.sum())
    return PSMeasureAtoms(project_to_boundary(pts), w / raw, float(s), float(R), raw, float(delta), spec.label)


# ---------------------------------------------------------------------------
# PS masses of U-balls


@dataclass(frozen=True)
class PSLineMass:
    T: float
    mass: float
    atom_count: int
    pole_mass: float


class PSMassProfile:
    """mu^PS_{Ug}(B_U(T)) for all T at once.

    An atom lam contributes w exp(delta beta_lam(o, o u_t g)) = w |e_1 u_t g|^delta
    where t = visual_inverse(g, lam), once |t|_inf <= T.
    """

    def __init__(self, g: np.ndarray, atoms: PSMeasureAtoms, delta: float, pole_tol: float = 1e-12):
        g = np.asarray(g, dtype=float)
        t, pole = lz.visual_inverse_safe(g, atoms.xi, pole_tol)
        if pole.all():
            raise DegenerateBase("every atom sits at the pole g^-")
        self.g = g
        self.delta = float(delta)
        self.pole_mass = float(atoms.weights[pole].sum())
        t = t[~pole]
        w = atoms.weights[~pole]
        row = np.concatenate([np.ones((len(t), 1)), t, 0.5 * np.sum(t * t, axis=1, keepdims=True)], axis=1)
        factor = np.linalg.norm(row @ g, axis=1) ** self.delta
        radius = np.max(np.abs(t), axis=1) if t.shape[1] else np.zeros(len(t))
        order = np.argsort(radius, kind="stable")
        self.t = t[order]
        self.radius = radius[order]
        self.contrib = (w * factor)[order]
        self.cum = np.cumsum(self.contrib)

    def mass(self, T) -> np.ndarray:
        k = np.searchsorted(self.radius, np.asarray(T, dtype=float), side="right")
        cum = np.concatenate([[0.0], self.cum])
        return cum[k]

    def count(self, T) -> np.ndarray:
        return np.searchsorted(self.radius, np.asarray(T, dtype=float), side="right")

    @property
    def total(self) -> float:
        return float(self.cum[-1]) if len(self.cum) else 0.0


def ps_ball_mass(g: np.ndarray, T: float, atoms: PSMeasureAtoms, delta: float) -> PSLineMass:
    prof = PSMassProfile(g, atoms, delta)
    return PSLineMass(T=float(T), mass=float(prof.mass(T)), atom_count=int(prof.count(T)), pole_mass=prof.pole_mass)


def ps_ball_mass_direct(g: np.ndarray, T: float, atoms: PSMeasureAtoms, delta: float) -> float:
    """Reference evaluation through the Busemann function (slow path, used as an oracle)."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0] - 1
    o = lz.frame(n).o
    total = 0.0
    for lam, w in zip(atoms.xi, atoms.weights):
        try:
            t = lz.visual_inverse(g, lam)
        except lz.PoleError:
            continue
        if np.max(np.abs(t)) <= T:
            total += w * math.exp(delta * float(lz.busemann(lam, o, o @ lz.u_matrix(t) @ g)))
    return total


# ---------------------------------------------------------------------------
# regularity audit


@dataclass
class RegularityReport:
    Tgrid: np.ndarray
    masses: np.ndarray
    shadow_ratios: np.ndarray
    shadow_band: float
    loglog_slope: float
    doubling: dict  # c -> array over Tgrid
    annulus: dict  # eps -> mean ratio over Tgrid
    annulus_alpha: float
    annulus_monotone: bool

    def summary(self) -> dict:
        return {
            "shadow_band": self.shadow_band,
            "loglog_slope": self.loglog_slope,
            "doubling_min": {str(c): float(np.min(v)) for c, v in self.doubling.items()},
            "doubling_max": {str(c): float(np.max(v)) for c, v in self.doubling.items()},
            "annulus": {str(e): float(v) for e, v in self.annulus.items()},
            "annulus_alpha": self.annulus_alpha,
            "annulus_monotone": self.annulus_monotone,
        }


def loglog_slope(T: np.ndarray, m: np.ndarray) -> float:
    return float(np.polyfit(np.log(T), np.log(m), 1)[0])


def measure_regularity_audit(g, atoms: PSMeasureAtoms, delta: float, Tgrid, epsGrid=(0.4, 0.2, 0.1, 0.05), cs=(1.0, 2.0, 4.0)) -> RegularityReport:
    prof = PSMassProfile(g, atoms, delta)
    T = np.asarray(Tgrid, dtype=float)
    m = prof.mass(T)
    if np.any(m <= 0):
        raise DegenerateBase("zero PS mass on part of the T grid; enlarge T or the atom set")
    ratios = m / T**delta
    doubling = {c: prof.mass(c * T) / m for c in cs}
    annulus = {e: float(np.mean((prof.mass((1 + 2 * e) * T) - m) / m)) for e in epsGrid}
    eps = np.array(sorted(annulus))
    vals = np.array([annulus[e] for e in eps])
    pos = vals > 0
    alpha = float(np.polyfit(np.log(eps[pos]), np.log(vals[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    seq = [annulus[e] for e in sorted(annulus, reverse=True)]
    monotone = all(b <= a for a, b in zip(seq, seq[1:]))
    return RegularityReport(
        Tgrid=T,
        masses=m,
        shadow_ratios=ratios,
        shadow_band=float(ratios.max() / ratios.min()),
        loglog_slope=loglog_slope(T, m),
        doubling=doubling,
        annulus=annulus,
        annulus_alpha=alpha,
        annulus_monotone=monotone,
    )


# ---------------------------------------------------------------------------
# discrepancy


def kuiper_uniform(angles: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Weighted Kuiper statistic D+ + D- of circle angles against the uniform law."""
    x = np.mod(np.asarray(angles, dtype=float), 2 * np.pi) / (2 * np.pi)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(x)
    x, w = x[order], w[order] / np.sum(w)
    F = np.cumsum(w)
    d_plus = np.max(F - x)
    d_minus = np.max(x - (F - w))
    return float(d_plus + d_minus)
