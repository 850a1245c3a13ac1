"""Discrete groups used by the experiments: Schottky groups and the SL2(Z) lattice."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lorentz as lz


class GroupSpecError(ValueError):
    code = "E_GROUP_INVALID"


class GroupNotFound(GroupSpecError):
    code = "E_GROUP_NOT_FOUND"


class MalformedGroupFile(GroupSpecError):
    code = "E_GROUP_MALFORMED"


class GroupFormViolation(GroupSpecError):
    code = "E_GROUP_FORM"


class CertificationError(GroupSpecError):
    code = "E_PINGPONG"

    def __init__(self, msg, overlap=None):
        super().__init__(msg)
        self.overlap = overlap


# ---------------------------------------------------------------------------
# boundary caps (closed balls in the chordal metric, diagonal coordinates)


@dataclass(frozen=True)
class Cap:
    center: np.ndarray  # unit vector in S^{n-1}
    angle: float  # angular radius in [0, pi]

    @property
    def chordal_radius(self) -> float:
        return 2.0 * math.sin(self.angle / 2.0)

    def complement(self) -> "Cap":
        return Cap(-self.center, math.pi - self.angle)

    def contains(self, dirs: np.ndarray) -> np.ndarray:
        return np.arccos(np.clip(dirs @ self.center, -1.0, 1.0)) <= self.angle


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))


def image_cap(h: np.ndarray, cap: Cap) -> Cap:
    """Image of a cap under the boundary map xi -> [xi h] (Moebius maps send caps to caps)."""
    n = h.shape[0] - 1
    P = lz.frame(n).Pdiag
    c = np.append(cap.center, -math.cos(cap.angle))  # x.m - cos(theta) >= 0 at time 1
    c_new = P @ (lz.inverse(h) @ (P.T @ c))
    p, q = c_new[:-1], c_new[-1]
    pn = np.linalg.norm(p)
    cosang = -q / pn
    if cosang <= -1.0:
        return Cap(p / pn, math.pi)
    if cosang >= 1.0:
        return Cap(p / pn, 0.0)
    return Cap(p / pn, math.acos(cosang))


def cap_margin(inner: Cap, outer: Cap) -> float:
    """Positive iff inner is strictly contained in outer."""
    return outer.angle - (_angle(inner.center, outer.center) + inner.angle)


def _sphere_sample(n: int, count: int) -> np.ndarray:
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5**0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    x = np.random.default_rng(12345).normal(size=(count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---------------------------------------------------------------------------


@dataclass
class PingPongCertificate:
    attracting: list  # boundary points (J coordinates)
    repelling: list
    caps_plus: list  # Cap per generator around the attracting point
    caps_minus: list
    margins: list  # (forward margin, backward margin) per generator
    disjoint_margin: float
    samples: int

    def all_caps(self) -> list:
        return list(self.caps_plus) + list(self.caps_minus)

    def to_json(self) -> dict:
        return {
            "attracting": [list(map(float, x)) for x in self.attracting],
            "repelling": [list(map(float, x)) for x in self.repelling],
            "radii": [[c.angle for c in self.caps_plus], [c.angle for c in self.caps_minus]],
            "margins": [list(map(float, m)) for m in self.margins],
            "disjoint_margin": float(self.disjoint_margin),
            "samples": self.samples,
        }


LETTERS = "abcdfghijklmnopqrstuvwxyz"  # "e" is reserved for the identity word


@dataclass
class GroupSpec:
    n: int
    kind: str
    generators: list
    label: str = ""
    certificate: PingPongCertificate | None = None
    sl2_generators: list | None = None
    attestations: dict = field(default_factory=dict)

    def __post_init__(self):
        self.generators = [np.asarray(g, dtype=float) for g in self.generators]
        self.inverses = [lz.inverse(g) for g in self.generators]

    @property
    def rank(self) -> int:
        return len(self.generators)

    def letters(self) -> list:
        """Generators followed by their inverses; letter i and i+rank are mutually inverse."""
        return self.generators + self.inverses

    def letter_names(self) -> list:
        names = list(LETTERS[: self.rank])
        return names + [c.upper() for c in names]

    def word_matrix(self, word: str) -> np.ndarray:
        names = {c: i for i, c in enumerate(self.letter_names())}
        mats = self.letters()
        g = np.eye(self.n + 1)
        for c in ("" if word == "e" else word):
            g = g @ mats[names[c]]
        return g


# ---------------------------------------------------------------------------
# fixed points


def fixed_points(h: np.ndarray, tol: float = 1e-9):
    """(attracting, repelling, lambda) for a hyperbolic h acting on rows; None if not hyperbolic."""
    w, vl = np.linalg.eig(h.T)
    real = np.abs(w.imag) < 1e-9 * max(1.0, np.max(np.abs(w)))
    mods = np.abs(w)
    i = int(np.argmax(np.where(real, mods, -1)))
    j = int(np.argmin(np.where(real, mods, np.inf)))
    if not real[i] or mods[i] <= 1 + tol:
        return None
    xp = lz.normalize_boundary(vl[:, i].real)
    xm = lz.normalize_boundary(vl[:, j].real)
    if abs(lz.quad(xp)) > 1e-6 or abs(lz.quad(xm)) > 1e-6:
        return None
    return xp, xm, float(w[i].real)


# ---------------------------------------------------------------------------
# Schottky construction and certification


def certify_pingpong(generators, samples: int = 10_000, margin: float = 1e-6, radii=None) -> PingPongCertificate:
    gens = [np.asarray(g, dtype=float) for g in generators]
    n = gens[0].shape[0] - 1
    fps = []
    for i, h in enumerate(gens):
        fp = fixed_points(h)
        if fp is None:
            raise CertificationError(f"generator {i} is not hyperbolic")
        fps.append(fp)
    dirs_p = [lz.direction(fp[0]) for fp in fps]
    dirs_m = [lz.direction(fp[1]) for fp in fps]

    def fwd_margin(i, th_p, th_m):
        img = image_cap(gens[i], Cap(dirs_m[i], th_m).complement())
        return cap_margin(img, Cap(dirs_p[i], th_p))

    def bwd_margin(i, th_p, th_m):
        img = image_cap(lz.inverse(gens[i]), Cap(dirs_p[i], th_p).complement())
        return cap_margin(img, Cap(dirs_m[i], th_m))

    if radii is None:
        thetas = []
        for i in range(len(gens)):
            lo, hi = 0.0, math.pi / 2
            if min(fwd_margin(i, hi, hi), bwd_margin(i, hi, hi)) <= 0:
                raise CertificationError(f"generator {i}: contraction too weak for ping-pong", overlap=None)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if min(fwd_margin(i, mid, mid), bwd_margin(i, mid, mid)) > 0:
                    hi = mid
                else:
                    lo = mid
            thetas.append(hi)
        centers = dirs_p + dirs_m
        th2 = thetas + thetas
        slack = math.inf
        for a, b in itertools.combinations(range(len(centers)), 2):
            slack = min(slack, _angle(centers[a], centers[b]) - th2[a] - th2[b])
        if len(centers) == 2:
            slack = min(slack, _angle(centers[0], centers[1]) - 2 * thetas[0])
        if slack <= margin:
            raise CertificationError(
                f"ping-pong neighbourhoods overlap by {-slack:.3e} rad", overlap=float(-slack)
            )
        radii = [(t + slack / 4, t + slack / 4) for t in thetas]

    caps_p = [Cap(dirs_p[i], radii[i][0]) for i in range(len(gens))]
    caps_m = [Cap(dirs_m[i], radii[i][1]) for i in range(len(gens))]
    caps = caps_p + caps_m
    disjoint = math.inf
    for a, b in itertools.combinations(range(len(caps)), 2):
        disjoint = min(disjoint, _angle(caps[a].center, caps[b].center) - caps[a].angle - caps[b].angle)
    if disjoint < margin:
        raise CertificationError(f"ping-pong neighbourhoods overlap by {-disjoint:.3e} rad", overlap=float(-disjoint))
    margins = []
    pts = _sphere_sample(n, samples)
    bnd = lz.boundary_from_direction(pts)
    for i, h in enumerate(gens):
        mf = fwd_margin(i, radii[i][0], radii[i][1])
        mb = bwd_margin(i, radii[i][0], radii[i][1])
        if min(mf, mb) <= 0:
            raise CertificationError(f"generator {i} does not map into its attracting neighbourhood", overlap=-min(mf, mb))
        # dense sample check, independent of the cap algebra
        out_m = ~caps_m[i].contains(pts)
        img = lz.direction(bnd[out_m] @ h)
        if not np.all(caps_p[i].contains(img)):
            raise CertificationError(f"generator {i}: sampled point escapes attracting neighbourhood")
        out_p = ~caps_p[i].contains(pts)
        img = lz.direction(bnd[out_p] @ lz.inverse(h))
        if not np.all(caps_m[i].contains(img)):
            raise CertificationError(f"generator {i}: sampled point escapes repelling neighbourhood")
        margins.append((mf, mb))
    return PingPongCertificate(
        attracting=[fp[0] for fp in fps],
        repelling=[fp[1] for fp in fps],
        caps_plus=caps_p,
        caps_minus=caps_m,
        margins=margins,
        disjoint_margin=disjoint,
        samples=samples,
    )


def build_schottky(n: int, axes, label: str = "") -> GroupSpec:
    """``axes``: list of ((xi_plus, xi_minus), translation_length)."""
    gens = []
    for (xp, xm), length in axes:
        if length <= 0:
            raise ValueError("translation lengths must be positive")
        gens.append(lz.hyperbolic_element(xp, xm, length))
    cert = certify_pingpong(gens)
    return GroupSpec(n=n, kind="schottky", generators=gens, label=label or f"schottky-n{n}-r{len(gens)}", certificate=cert)


def orthogonal_axes_schottky(n: int = 2, length: float = 4.0, rank: int = 2) -> GroupSpec:
    """Rank-``rank`` Schottky group, generators translating along coordinate axes through o."""
    if rank > n:
        raise ValueError("at most n orthogonal axes through o")
    e = np.eye(n)
    axes = [((lz.boundary_from_direction(e[i]), lz.boundary_from_direction(-e[i])), length) for i in range(rank)]
    return build_schottky(n, axes, label=f"schottky-n{n}-r{rank}-l{length:g}")


# ---------------------------------------------------------------------------
# SL2 -> SO(2,1)

SL2_NORM_BAND = (1.0, 3.0)  # |rho(m)|_max / |m|_max^2 lies in this band for integer m != 0


def sl2_to_so21(m) -> np.ndarray:
    """Symmetric-square representation on (x^2, sqrt2 xy, y^2); kernel {+-I}."""
    m = np.asarray(m, dtype=float)
    (a, b), (c, d) = m
    det = a * d - b * c
    if abs(det - 1.0) > 1e-12 * max(1.0, abs(a * d), abs(b * c)):
        raise GroupFormViolation(f"det = {det!r}, expected 1")
    r2 = lz.SQRT2
    return np.array(
        [
            [a * a, r2 * a * b, b * b],
            [r2 * a * c, a * d + b * c, r2 * b * d],
            [c * c, r2 * c * d, d * d],
        ]
    )


def sl2_to_so21_batch(ms: np.ndarray) -> np.ndarray:
    ms = np.asarray(ms, dtype=float)
    a, b, c, d = ms[:, 0, 0], ms[:, 0, 1], ms[:, 1, 0], ms[:, 1, 1]
    r2 = lz.SQRT2
    out = np.empty((len(ms), 3, 3))
    out[:, 0] = np.stack([a * a, r2 * a * b, b * b], axis=1)
    out[:, 1] = np.stack([r2 * a * c, a * d + b * c, r2 * b * d], axis=1)
    out[:, 2] = np.stack([c * c, r2 * c * d, d * d], axis=1)
    return out


SL2_S = [[0, -1], [1, 0]]
SL2_T = [[1, 1], [0, 1]]


def sl2z_lattice_spec(sl2_generators=None, label: str = "sl2z") -> GroupSpec:
    gens2 = sl2_generators if sl2_generators is not None else [SL2_S, SL2_T]
    return GroupSpec(
        n=2,
        kind="sl2z_lattice",
        generators=[sl2_to_so21(g) for g in gens2],
        label=label,
        sl2_generators=[np.asarray(g, dtype=np.int64) for g in gens2],
    )


def cyclic_spec(n: int = 2, length: float = 1.0) -> GroupSpec:
    e = np.eye(n)
    h = lz.hyperbolic_element(lz.boundary_from_direction(e[0]), lz.boundary_from_direction(-e[0]), length)
    return GroupSpec(n=n, kind="schottky", generators=[h], label=f"cyclic-n{n}-l{length:g}", certificate=certify_pingpong([h]))


# ---------------------------------------------------------------------------
# validation / IO


def validate_group(spec: GroupSpec) -> dict:
    report = {"label": spec.label, "n": spec.n, "kind": spec.kind, "generators": []}
    if spec.rank < 1:
        raise GroupSpecError("a group needs at least one generator")
    for i, g in enumerate(spec.generators):
        if g.shape != (spec.n + 1, spec.n + 1):
            raise GroupFormViolation(f"generator {i} has shape {g.shape}, expected {(spec.n + 1,) * 2}")
        try:
            lz.check_element(g)
        except lz.FormViolation as exc:
            raise GroupFormViolation(f"generator {i}: {exc}") from exc
        report["generators"].append(
            {"index": i, "form_residual": lz.form_residual(g), "det": float(np.linalg.det(g)), "max_norm": float(lz.max_norm(g))}
        )
    if spec.kind == "schottky":
        spec.certificate = certify_pingpong(spec.generators)
        report["certificate"] = spec.certificate.to_json()
    elif spec.kind == "explicit":
        report["warning"] = "discreteness of explicit groups is not verified"
    report["zariski_dense"] = "attested" if spec.attestations.get("zariski_dense") else "not checked"
    return report


def _fmt(x) -> str:
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x) or math.isnan(x):
            return "null"
        return format(x, ".17g") if x != int(x) or abs(x) >= 1e16 else format(x, ".1f")
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_fmt(v)}" for k, v in x.items()) + "}"
    return json.dumps(x)


def dumps_numbers(obj) -> str:
    """JSON text with every float written with 17 significant digits."""
    return _fmt(obj)


def save_group(spec: GroupSpec, path) -> None:
    doc = {"n": spec.n, "kind": spec.kind, "label": spec.label, "generators": [g.tolist() for g in spec.generators]}
    if spec.sl2_generators is not None:
        doc["sl2_generators"] = [np.asarray(g).tolist() for g in spec.sl2_generators]
    if spec.certificate is not None:
        doc["certificate"] = spec.certificate.to_json()
    if spec.attestations:
        doc["attestations"] = spec.attestations
    Path(path).write_text(dumps_numbers(doc) + "\n")


def load_group(path, validate: bool = True) -> GroupSpec:
    p = Path(path)
    if not p.exists():
        raise GroupNotFound(f"group file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedGroupFile(f"{p}: {exc}") from exc
    try:
        n = int(doc["n"])
        kind = doc["kind"]
        if kind not in ("schottky", "sl2z_lattice", "explicit"):
            raise MalformedGroupFile(f"unknown group kind {kind!r}")
        if kind == "sl2z_lattice" and "sl2_generators" in doc:
            spec = sl2z_lattice_spec(doc["sl2_generators"], label=doc.get("label", "sl2z"))
            given = [np.asarray(g, dtype=float) for g in doc.get("generators", [])]
            if given and any(not np.array_equal(a, b) for a, b in zip(given, spec.generators)):
                raise GroupFormViolation("stored SO(2,1) generators disagree with sl2_generators")
        else:
            gens = [np.asarray(g, dtype=float) for g in doc["generators"]]
            spec = GroupSpec(n=n, kind=kind, generators=gens, label=doc.get("label", p.stem))
        spec.attestations = doc.get("attestations", {})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GroupSpecError):
            raise
        raise MalformedGroupFile(f"{p}: {exc}") from exc
    if validate:
        validate_group(spec)
    return spec


# ---------------------------------------------------------------------------
# base points


def _short_words(rank: int, max_len: int):
    for L in range(1, max_len + 1):
        for w in itertools.product(range(2 * rank), repeat=L):
            if any(w[i] == (w[i + 1] + rank) % (2 * rank) for i in range(L - 1)):
                continue
            yield w


def hyperbolic_word(spec: GroupSpec, max_len: int = 4):
    """First hyperbolic element among short words: (word letters, matrix, fixed points)."""
    mats = spec.letters()
    for w in _short_words(spec.rank, max_len):
        g = np.eye(spec.n + 1)
        for i in w:
            g = g @ mats[i]
        fp = fixed_points(g)
        if fp is not None:
            return w, g, fp
    return None


def radial_basepoint(spec: GroupSpec, generator: int | None = None) -> np.ndarray:
    """AK element x with x^- the repelling fixed point of a hyperbolic element of the group."""
    if generator is not None:
        fp = fixed_points(spec.generators[generator])
        if fp is None:
            raise GroupSpecError(f"generator {generator} is not hyperbolic")
    else:
        found = hyperbolic_word(spec)
        if found is None:
            raise GroupSpecError("no hyperbolic element among short words")
        fp = found[2]
    return lz.recover_k(fp[1])
