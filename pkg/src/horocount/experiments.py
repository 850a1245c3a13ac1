"""Orbit sums, the comparison integral I(phi, T, x), ratio sweeps and the lattice checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np
from scipy import integrate

from . import lorentz as lz
from .groups import GroupSpec
from .orbits import (
    EnumerationPolicy,
    OrbitBatch,
    SL2Batch,
    direct_scan_sl2z,
    enumerate_ball,
    sl2_rows_with_first_row,
)
from .patterson import PSMassProfile, PSMeasureAtoms


class QuadratureError(RuntimeError):
    code = "E_QUADRATURE"


# ---------------------------------------------------------------------------
# test functions


def bump(y):
    """C^2 bump (1 - y^2)^3 on [-1, 1]."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) < 1, (1 - y * y) ** 3, 0.0)


def _bump_poly_in_rho(rho1: float, rho2: float) -> np.poly1d:
    m, hw = 0.5 * (rho1 + rho2), 0.5 * (rho2 - rho1)
    y = np.poly1d([1 / hw, -m / hw])
    return (1 - y * y) ** 3


@dataclass(frozen=True)
class TestFunction:
    """phi(w) = scale * f(|w|_2) * h(w^-) on the light cone."""

    rho1: float
    rho2: float
    lam0: np.ndarray  # boundary point (J coordinates) at the centre of the angular bump
    radius: float  # chordal radius of the angular bump
    scale: float = 1.0

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if not 0 < self.rho1 < self.rho2:
            raise ValueError("need 0 < rho1 < rho2")
        if self.radius <= 0:
            raise ValueError("angular radius must be positive")
        object.__setattr__(self, "lam0", lz.normalize_boundary(np.asarray(self.lam0, dtype=float)))

    def f(self, rho):
        m, hw = 0.5 * (self.rho1 + self.rho2), 0.5 * (self.rho2 - self.rho1)
        return self.scale * bump((np.asarray(rho, dtype=float) - m) / hw)

    def h(self, xi):
        return bump(lz.chordal(xi, self.lam0) / self.radius)

    def __call__(self, w):
        w = np.atleast_2d(np.asarray(w, dtype=float))
        nrm = np.linalg.norm(w, axis=1)
        out = np.zeros(len(w))
        ok = (nrm >= self.rho1) & (nrm <= self.rho2)
        if ok.any():
            out[ok] = self.f(nrm[ok]) * self.h(w[ok] / nrm[ok, None])
        return out

    def with_scale(self, c: float) -> "TestFunction":
        return TestFunction(self.rho1, self.rho2, self.lam0, self.radius, self.scale * c)

    def radial_antiderivative(self, power: float):
        """G(y) = int_{rho1}^{min(y, rho2)} f(rho) rho^power d rho, in closed form."""
        p = _bump_poly_in_rho(self.rho1, self.rho2)
        coeffs = p.c[::-1]  # coeffs[k] multiplies rho^k
        ks = np.arange(len(coeffs))
        e = ks + power + 1.0
        log = np.abs(e) < 1e-12  # rho^-1 integrates to log(rho)
        e_safe = np.where(log, 1.0, e)

        def prim(y):
            y = np.asarray(y, dtype=float)[..., None]
            return np.sum(coeffs * np.where(log, np.log(y), y**e / e_safe), axis=-1)

        lo = prim(self.rho1)

        def G(y):
            y = np.clip(np.asarray(y, dtype=float), self.rho1, self.rho2)
            return self.scale * (prim(y) - lo)

        return G

    def radial_moment(self, power: float) -> float:
        return float(self.radial_antiderivative(power)(self.rho2))

    def radial_moment_quad(self, power: float) -> float:
        val, _ = integrate.quad(lambda r: float(self.f(r)) * r**power, self.rho1, self.rho2, epsabs=0, epsrel=1e-12, limit=200)
        return val


# ---------------------------------------------------------------------------
# orbit sums


def light_vector_of(x) -> np.ndarray:
    """v = e_{n+1} Psi(x) for an AK element, or the vector itself."""
    x = np.asarray(x, dtype=float)
    return x[-1].copy() if x.ndim == 2 else x


def orbit_values(x, phi: TestFunction, batch: OrbitBatch) -> np.ndarray:
    v = light_vector_of(x)
    return phi(v @ batch.matrices)


def orbit_sum(x, phi: TestFunction, batch: OrbitBatch) -> float:
    vals = orbit_values(x, phi, batch)
    return float(np.cumsum(vals)[-1]) if len(vals) else 0.0


def orbit_sum_profile(x, phi: TestFunction, batch: OrbitBatch, Tgrid) -> np.ndarray:
    """Sums over the prefixes norm <= T of a norm-sorted batch."""
    vals = orbit_values(x, phi, batch)
    cum = np.concatenate([[0.0], np.cumsum(vals)])
    k = np.searchsorted(batch.norms, np.asarray(Tgrid, dtype=float), side="right")
    return cum[k]


# ---------------------------------------------------------------------------
# the comparison integral


def star_constants(x, xi: np.ndarray) -> np.ndarray:
    """c_i with v * (rho lam_i) = c_i sqrt(rho) for unit boundary representatives lam_i."""
    v = light_vector_of(x)
    nv = np.linalg.norm(v)
    e1k = -v / nv
    e1k[0] += 1.0
    e1k[-1] += 1.0
    return np.sqrt(0.5 * nv * np.max(np.abs(e1k)) * np.max(np.abs(xi), axis=-1))


@dataclass
class IntegralSetup:
    """Precomputed pieces of I(phi, T, x) for one (phi, x, atoms, delta)."""

    phi: TestFunction
    delta: float
    nu_mass: float  # total mass of nu_o (normalisation)
    w_h: np.ndarray  # w_i h(lam_i) for atoms in supp h
    c: np.ndarray  # star constants of those atoms
    profile: PSMassProfile

    def I(self, T) -> np.ndarray:
        """Closed form: sum_i w_i h_i sum_j W_j G(min(rho2, T / (c_i r_j)^2)).

        G is a sum of powers rho^{e_k}, so the inner sum over PS atoms j reduces to
        suffix sums of W_j r_j^{-2 e_k} split at the two saturation radii.
        """
        T = np.atleast_1d(np.asarray(T, dtype=float))
        phi = self.phi
        p = _bump_poly_in_rho(phi.rho1, phi.rho2).c[::-1]
        e = np.arange(len(p)) + self.delta
        full = replace(phi, scale=1.0).radial_moment(self.delta - 1.0)
        lo_const = float(np.sum(p * phi.rho1**e / e))
        r = self.profile.radius
        W = self.profile.contrib
        pos = r > 0
        r2 = r[pos] ** 2
        Wp = W[pos]
        W0 = float(W[~pos].sum())
        suffix = lambda a: np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])
        SW = suffix(Wp)
        Sk = [suffix(Wp * r2 ** (-ek)) for ek in e]
        u = T[None, :] / (self.c[:, None] ** 2)  # (atoms, T)
        lo = np.searchsorted(r2, u / phi.rho2, side="right")  # r2 <= u/rho2: saturated
        hi = np.searchsorted(r2, u / phi.rho1, side="left")  # r2 >= u/rho1: no contribution
        hi = np.maximum(hi, lo)
        band = -lo_const * (SW[lo] - SW[hi])
        for ak, ek, S in zip(p, e, Sk):
            band = band + (ak / ek) * u**ek * (S[lo] - S[hi])
        saturated = W0 + (SW[0] - SW[lo])
        H = saturated * full + band
        return phi.scale * (self.w_h @ H) * self.nu_mass**2

    def I_quad(self, T: float) -> float:
        """Independent route: adaptive quadrature in rho of the step function mu^PS(B_U(.))."""
        d = self.delta
        total = 0.0
        for wh, c in zip(self.w_h, self.c):
            brk = T / (c * c * self.profile.radius[self.profile.radius > 0] ** 2)
            brk = np.unique(brk[(brk > self.phi.rho1) & (brk < self.phi.rho2)])
            edges = np.concatenate([[self.phi.rho1], brk, [self.phi.rho2]])

            def integrand(rho, c=c):
                return float(self.phi.f(rho)) * rho ** (d - 1.0) * float(self.profile.mass(math.sqrt(T / rho) / c))

            acc = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                if b - a <= 1e-12 * b:
                    continue
                val, err = integrate.quad(integrand, a, b, epsabs=1e-300, epsrel=1e-6, limit=200)
                if not math.isfinite(val) or err > 1e-5 * abs(val) + 1e-15:
                    raise QuadratureError(f"quadrature failed on [{a:.6g}, {b:.6g}] (estimate {val:.3e}, error {err:.1e})")
                acc += val
            total += wh * acc
        return total * self.nu_mass**2

    def band_integral(self) -> float:
        """sum_i w_i h_i c_i^{-delta} int f rho^{delta/2 - 1} d rho."""
        mom = self.phi.radial_moment(self.delta / 2 - 1.0)
        return float(np.sum(self.w_h * self.c ** (-self.delta)) * mom * self.nu_mass)


def prepare_integral(x, phi: TestFunction, atoms: PSMeasureAtoms, delta: float, nu_mass: float = 1.0) -> IntegralSetup:
    x = np.asarray(x, dtype=float)
    h = phi.h(atoms.xi)
    sel = h > 0
    return IntegralSetup(
        phi=phi,
        delta=float(delta),
        nu_mass=float(nu_mass),
        w_h=atoms.weights[sel] * h[sel],
        c=star_constants(x, atoms.xi[sel]),
        profile=PSMassProfile(x, atoms, delta),
    )


def eval_I(phi: TestFunction, T, x, atoms: PSMeasureAtoms, delta: float, nu_mass: float = 1.0, method: str = "closed") -> float:
    setup = prepare_integral(x, phi, atoms, delta, nu_mass)
    if method == "quad":
        return setup.I_quad(float(T))
    return float(setup.I(T)[0])


def roblin_nu_mass(delta: float, intercept: float) -> float:
    """|nu_o| from N(R) ~ |nu_o|^2 e^{delta R} / (delta |m^BMS|) with |m^BMS| = 1."""
    return math.sqrt(delta * math.exp(intercept))


# ---------------------------------------------------------------------------
# ratio sweeps


@dataclass
class RatioRecord:
    T: float
    orbit_sum: float
    I_value: float
    ratio: float
    t_power: float
    band_integral: float
    flags: str = ""

    CSV_HEADER = "T,orbit_sum,I_value,ratio,t_power,band_integral,flags"

    def csv_row(self) -> str:
        vals = [format(float(v), ".17g") for v in (self.T, self.orbit_sum, self.I_value, self.ratio, self.t_power, self.band_integral)]
        return ",".join(vals + [self.flags])


@dataclass
class SweepResult:
    records: list
    delta: float
    sensitivity: dict = field(default_factory=dict)
    batch_status: str = "certified"

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records])

    def Ts(self) -> np.ndarray:
        return np.array([r.T for r in self.records])

    def band_ratios(self) -> np.ndarray:
        return np.array([r.t_power / r.band_integral for r in self.records])

    @property
    def flagged(self) -> bool:
        return any(r.flags for r in self.records)


def geometric_grid(Tmin: float, Tmax: float, points: int) -> np.ndarray:
    return np.geomspace(Tmin, Tmax, points)


def ratio_sweep(
    spec: GroupSpec,
    x,
    phi: TestFunction,
    Tgrid,
    atoms: PSMeasureAtoms,
    delta: float,
    nu_mass: float = 1.0,
    policy: EnumerationPolicy | None = None,
    batch: OrbitBatch | None = None,
    delta_stderr: float = 0.0,
    controlled_basepoint: bool = True,
) -> SweepResult:
    Tgrid = np.asarray(Tgrid, dtype=float)
    if batch is None:
        batch = enumerate_ball(spec, float(Tgrid.max()), policy)
    sums = orbit_sum_profile(x, phi, batch, Tgrid)
    setup = prepare_integral(x, phi, atoms, delta, nu_mass)
    Ivals = setup.I(Tgrid)
    band = setup.band_integral()
    base_flags = []
    if batch.status != "certified":
        base_flags.append("heuristic_enumeration")
    if not controlled_basepoint:
        base_flags.append("uncontrolled_basepoint")
    records = []
    for T, S, I in zip(Tgrid, sums, Ivals):
        flags = list(base_flags)
        if I > 0:
            ratio = S / I
        else:
            ratio = math.nan
            flags.append("zero_I")
        tp = S / T ** (delta / 2)
        records.append(RatioRecord(float(T), float(S), float(I), float(ratio), float(tp), float(band), "|".join(flags)))
    sens = {}
    if delta_stderr > 0:
        for sign, key in ((-1, "minus"), (1, "plus")):
            d2 = delta + sign * delta_stderr
            s2 = prepare_integral(x, phi, atoms, d2, nu_mass)
            I2 = s2.I(Tgrid)
            with np.errstate(divide="ignore", invalid="ignore"):
                sens[key] = {"delta": d2, "ratio": (sums / I2).tolist()}
    return SweepResult(records, float(delta), sens, batch.status)


def decade_medians(T: np.ndarray, values: np.ndarray, lo: float, hi: float):
    """Medians of values over [10^k, 10^{k+1}) for the decades inside [lo, hi]."""
    k0, k1 = int(round(math.log10(lo))), int(round(math.log10(hi)))
    out = []
    for k in range(k0, k1):
        sel = (T >= 10**k) & (T < 10 ** (k + 1) * (1 + 1e-12))
        if sel.any():
            out.append((k, float(np.median(values[sel]))))
    return out


def decade_drifts(T: np.ndarray, ratios: np.ndarray, lo: float, hi: float):
    meds = decade_medians(T, ratios, lo, hi)
    return [(meds[i][0], abs(meds[i][1] - meds[i - 1][1])) for i in range(1, len(meds))]


def write_ratio_csv(path, result: SweepResult, meta: str = "") -> None:
    lines = ["# horocount-csv-v1"]
    if meta:
        lines.append(f"# {meta}")
    lines.append(RatioRecord.CSV_HEADER)
    lines += [r.csv_row() for r in result.records]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# audit of U-components


@dataclass(frozen=True)
class Window:
    """Compact window in V: |v gamma| in [rho1, rho2], optionally (v gamma)^- in a chordal cap."""

    rho1: float
    rho2: float
    center: np.ndarray | None = None
    radius: float | None = None

    def contains(self, w: np.ndarray) -> np.ndarray:
        nrm = np.linalg.norm(w, axis=-1)
        ok = (nrm >= self.rho1) & (nrm <= self.rho2)
        if self.center is not None:
            ok &= lz.chordal(w / nrm[..., None], lz.normalize_boundary(self.center)) <= self.radius
        return ok

    def shrink(self, factor: float) -> "Window":
        """Concentric sub-window (radial band and cap shrunk about their centres)."""
        m = math.sqrt(self.rho1 * self.rho2)
        lo = m * (self.rho1 / m) ** factor
        hi = m * (self.rho2 / m) ** factor
        rad = None if self.radius is None else self.radius * factor
        return Window(lo, hi, self.center, rad)


@dataclass
class AuditReport:
    Tgrid: np.ndarray
    c_star: np.ndarray  # c* from the data with norm <= T, per T in Tgrid
    n_points: np.ndarray
    upper_ok: bool
    lower_ok: bool
    defects: np.ndarray
    norms: np.ndarray

    def growth(self, T_from: float, T_to: float) -> float:
        i = int(np.argmin(np.abs(np.log(self.Tgrid / T_from))))
        j = int(np.argmin(np.abs(np.log(self.Tgrid / T_to))))
        if self.c_star[i] == 0:
            return 0.0 if self.c_star[j] == 0 else math.inf
        return float(self.c_star[j] / self.c_star[i] - 1.0)


def u_defects(x, batch: OrbitBatch, window: Window):
    """For gamma with x gamma in the window: (norms, |t|_inf, x * x gamma, defect)."""
    x = np.asarray(x, dtype=float)
    v = light_vector_of(x)
    inside = window.contains(v @ batch.matrices)
    mats = batch.matrices[inside]
    norms = batch.norms[inside]
    ts, stars = [], []
    for g in mats:
        fac = lz.iwasawa(x @ g)
        ts.append(float(np.max(np.abs(fac.t))) if fac.t.size else 0.0)
        stars.append(lz.star(x, fac.ak()))
    ts = np.array(ts)
    stars = np.array(stars)
    defects = np.abs(ts * stars - np.sqrt(norms))
    return norms, ts, stars, defects


def lemma_bound_audit(spec: GroupSpec, x, window: Window, Tgrid, batch: OrbitBatch | None = None, policy: EnumerationPolicy | None = None) -> AuditReport:
    Tgrid = np.asarray(Tgrid, dtype=float)
    if batch is None:
        batch = enumerate_ball(spec, float(Tgrid.max()), policy)
    norms, ts, stars, defects = u_defects(x, batch, window)
    c_star = np.array([defects[norms <= T].max() if np.any(norms <= T) else 0.0 for T in Tgrid])
    c = float(c_star[-1]) if len(c_star) else 0.0
    upper_ok = True
    lower_ok = True
    tol = 1e-9
    for T in Tgrid:
        inball = norms <= T
        # |gamma| <= T  =>  |t| <= (sqrt T + c) / (x * x gamma)
        if np.any(ts[inball] * stars[inball] > math.sqrt(T) + c + tol * (1 + math.sqrt(T))):
            upper_ok = False
        # |gamma| > T  =>  |t| > (sqrt T - c) / (x * x gamma)
        out = ~inball
        if np.any(ts[out] * stars[out] <= math.sqrt(T) - c - tol * (1 + math.sqrt(T))):
            lower_ok = False
    return AuditReport(Tgrid, c_star, np.array([int(np.sum(norms <= T)) for T in Tgrid]), upper_ok, lower_ok, defects, norms)


# ---------------------------------------------------------------------------
# Ledrappier check on SL2(Z)


@dataclass(frozen=True)
class Bump2D:
    center: tuple
    radius: float
    scale: float = 1.0

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=float)
        r2 = np.sum((Y - np.asarray(self.center, dtype=float)) ** 2, axis=-1) / self.radius**2
        return self.scale * np.where(r2 < 1, (1 - r2) ** 3, 0.0)

    def bounding_box(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def with_scale(self, c: float) -> "Bump2D":
        return Bump2D(self.center, self.radius, self.scale * c)

    def dilated(self, k: float) -> "Bump2D":
        return Bump2D(tuple(k * c for c in self.center), self.radius * k, self.scale)

    @property
    def reach(self) -> float:
        return math.hypot(*self.center) + self.radius


def ledrappier_reference(f: Bump2D, X) -> float:
    """int f(Y) / (|X| |Y|) dY by 2-D adaptive quadrature (polar coordinates about the bump centre)."""
    if f.scale == 0:
        return 0.0
    nX = float(np.linalg.norm(X))
    cx, cy = f.center
    if math.hypot(cx, cy) <= f.radius:
        raise ValueError("bump support must avoid the origin")

    def integrand(r, th):
        y = np.array([cx + r * math.cos(th), cy + r * math.sin(th)])
        return float(f(y)) * r / (nX * math.hypot(*y))

    val, err = integrate.dblquad(integrand, 0, 2 * math.pi, 0, f.radius, epsabs=0, epsrel=1e-10)
    if not math.isfinite(val):
        raise QuadratureError("reference integral failed")
    return val


def ledrappier_sum_fibered(X, f: Bump2D, T: int) -> float:
    """S_f(T) = sum over gamma in SL2(Z), |gamma|_2 <= T, of f(X gamma), for X = (1, 0).

    X gamma is the first row (a, b); for each primitive first row in supp f the
    admissible second rows form an arithmetic progression, counted exactly.
    """
    X = np.asarray(X, dtype=float)
    if not np.array_equal(X, [1.0, 0.0]):
        raise ValueError("fibered Ledrappier sums are implemented for X = (1, 0)")
    if f.scale == 0:
        return 0.0
    x0, x1, y0, y1 = f.bounding_box()
    total = 0.0
    for a in range(math.ceil(x0), math.floor(x1) + 1):
        bs = np.arange(math.ceil(y0), math.floor(y1) + 1)
        vals = f(np.stack([np.full(len(bs), a), bs], axis=1).astype(float))
        for b, fv in zip(bs.tolist(), vals.tolist()):
            if fv == 0.0 or gcd(a, b) != 1:
                continue
            k = len(sl2_rows_with_first_row(a, b, int(T), frobenius=True))
            total += fv * k
    return total


def ledrappier_sum_scan(X, f: Bump2D, scan: SL2Batch, T: float) -> float:
    """Same sum over an explicit SL2 batch (oracle path), Frobenius ball |gamma|_2 <= T."""
    m = scan.matrices
    sel = scan.frobenius_sq() <= T * T
    Y = np.asarray(X, dtype=float) @ m[sel].astype(float)
    return float(np.sum(f(Y)))


@dataclass
class LedrappierTable:
    Tgrid: list
    names: list
    S_over_T: np.ndarray  # (len(f), len(T))
    reference: np.ndarray  # (len(f),)

    def ratio_errors(self, Tindex: int = -1) -> np.ndarray:
        """|(S_f / S_g) / (ref_f / ref_g) - 1| for every ordered pair."""
        s = self.S_over_T[:, Tindex]
        k = len(s)
        out = np.zeros((k, k))
        for i in range(k):
            for j in range(k):
                out[i, j] = abs((s[i] / s[j]) / (self.reference[i] / self.reference[j]) - 1.0)
        return out


def ledrappier_sweep(X, fList, Tgrid, names=None) -> LedrappierTable:
    X = np.asarray(X, dtype=float)
    if np.linalg.norm(X) == 0:
        raise ValueError("X must be nonzero")
    Tgrid = [int(T) for T in Tgrid]
    S = np.zeros((len(fList), len(Tgrid)))
    for i, f in enumerate(fList):
        for j, T in enumerate(Tgrid):
            S[i, j] = ledrappier_sum_fibered(X, f, T) / T
    ref = np.array([ledrappier_reference(f, X) for f in fList])
    return LedrappierTable(Tgrid, names or [f"f{i}" for i in range(len(fList))], S, ref)


def fit_bumps(fList, T: float, fill: float = 0.4) -> list:
    """Dilate the bumps together so every support lies within |Y| <= fill * T."""
    k = fill * T / max(f.reach for f in fList)
    return [f.dilated(k) for f in fList]


def direct_scan_cross_check(X, fList, T: int = 300) -> list:
    """(fibered, scan) pairs of S_f(T) at a direct-scan-sized T."""
    scan = direct_scan_sl2z(T)
    return [(ledrappier_sum_fibered(X, f, T), ledrappier_sum_scan(X, f, scan, T)) for f in fList]
