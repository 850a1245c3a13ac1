"""Enumeration of norm balls {gamma : |gamma|_max <= T} in a discrete group."""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from . import lorentz as lz
from .groups import GroupSpec, sl2_to_so21_batch

CSV_MAGIC = "# horocount-csv-v1"
DIRECT_SCAN_BUDGET = 500


class EnumerationError(RuntimeError):
    code = "E_ENUMERATION"


class PartialEnumeration(EnumerationError):
    code = "E_PARTIAL"

    def __init__(self, msg, batch: "OrbitBatch", certified_T: float):
        super().__init__(msg)
        self.batch = batch
        self.certified_T = certified_T


class ScanBudgetExceeded(EnumerationError):
    code = "E_BUDGET"


def default_threads() -> int:
    env = os.environ.get("HOROCOUNT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class EnumerationPolicy:
    method: str = "word_bfs"
    max_word_length: int = 200
    dedup_tolerance: float = 1e-8
    threads: int = 1
    frontier_stop_factor: float | None = None  # None: (n+1) max |g^-1|
    frontier_budget: int = 4_000_000

    def __post_init__(self):
        if self.method not in ("word_bfs", "dedup_bfs", "direct_scan"):
            raise ValueError(f"unknown enumeration method {self.method!r}")
        if self.max_word_length < 1:
            raise ValueError("max_word_length must be >= 1")
        if not self.dedup_tolerance > 0:
            raise ValueError("dedup_tolerance must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolved_threads(self) -> int:
        env = os.environ.get("HOROCOUNT_THREADS")
        return default_threads() if env else self.threads


@dataclass
class OrbitBatch:
    matrices: np.ndarray  # (N, d, d)
    words: list
    norms: np.ndarray
    dists: np.ndarray
    label: str
    T: float
    status: str  # "certified" | "heuristic"
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.words)

    def prefix(self, T: float) -> "OrbitBatch":
        """Sub-batch with norm <= T (a prefix, since the batch is norm-sorted)."""
        k = int(np.searchsorted(self.norms, T, side="right"))
        return OrbitBatch(self.matrices[:k], self.words[:k], self.norms[:k], self.dists[:k], self.label, float(T), self.status, dict(self.stats))

    def to_csv(self, path) -> None:
        d = self.matrices.shape[-1]
        cols = ["word", "norm", "dist_o"] + [f"e{i}{j}" for i in range(d) for j in range(d)]
        lines = [CSV_MAGIC, f"# label={self.label} T={self.T!r} status={self.status}", ",".join(cols)]
        for w, nrm, dist, m in zip(self.words, self.norms, self.dists, self.matrices):
            vals = [format(float(x), ".17g") for x in (nrm, dist, *m.ravel())]
            lines.append(",".join([w] + vals))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# free-group word enumeration


def stop_factor(spec: GroupSpec, policy: EnumerationPolicy) -> float:
    if policy.frontier_stop_factor is not None:
        return float(policy.frontier_stop_factor)
    return (spec.n + 1) * max(float(lz.max_norm(g)) for g in spec.inverses)


def _children(mats: np.ndarray, last: np.ndarray, letters: np.ndarray, inv_of: np.ndarray, reduce: bool):
    """Right-multiply every parent by every admissible letter, parent-major order."""
    m, k = len(mats), len(letters)
    prod = np.einsum("pij,ljk->plik", mats, letters)
    ok = np.ones((m, k), dtype=bool)
    if reduce:
        valid = last >= 0
        ok[np.nonzero(valid)[0], inv_of[last[valid]]] = False
    pidx, lidx = np.nonzero(ok)
    return prod[pidx, lidx], pidx, lidx


def _parallel_children(mats, last, letters, inv_of, reduce, threads):
    if threads <= 1 or len(mats) < 2048:
        return _children(mats, last, letters, inv_of, reduce)
    bounds = np.linspace(0, len(mats), threads + 1).astype(int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(threads) if bounds[i + 1] > bounds[i]]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda c: _children(mats[c[0] : c[1]], last[c[0] : c[1]], letters, inv_of, reduce), chunks))
    prods = np.concatenate([p[0] for p in parts])
    pidx = np.concatenate([p[1] + c[0] for p, c in zip(parts, chunks)])
    lidx = np.concatenate([p[2] for p in parts])
    return prods, pidx, lidx


class _DedupTable:
    """Grid hash on M / (tol |M|) with probing of neighbouring cells near boundaries."""

    def __init__(self, tol: float):
        self.tol = tol
        self.table: dict = {}
        self.mats: list = []

    def insert_batch(self, mats: np.ndarray, norms: np.ndarray) -> np.ndarray:
        """Boolean mask of rows that are new; new rows are recorded in order."""
        n = len(mats)
        flat = np.ascontiguousarray(mats.reshape(n, -1))
        scale = self.tol * np.maximum(1.0, norms)
        z = flat / scale[:, None]
        base = np.rint(z)
        keys = np.ascontiguousarray(base.astype(np.int64))
        frac = z - base
        near = np.abs(frac) > 0.49  # drift is ~1e-4 of a cell; probe only close calls
        near_rows = set(np.nonzero(near.any(axis=1))[0].tolist())
        kb = keys.view(np.dtype((np.void, keys.shape[1] * 8))).ravel().tolist()
        table = self.table
        start = len(self.mats)
        fresh = np.zeros(n, dtype=bool)
        pairs_i, pairs_j = [], []
        new_rows = []
        for i, k in enumerate(kb):
            j = table.get(k)
            if j is None and i in near_rows:
                idx = np.nonzero(near[i])[0]
                for r in range(1, len(idx) + 1):
                    for combo in itertools.combinations(idx, r):
                        alt = keys[i].copy()
                        alt[list(combo)] += np.where(frac[i, list(combo)] > 0, 1, -1)
                        j = table.get(alt.tobytes())
                        if j is not None:
                            break
                    if j is not None:
                        break
            if j is None:
                table[k] = start + len(new_rows)
                new_rows.append(i)
                fresh[i] = True
            else:
                pairs_i.append(i)
                pairs_j.append(j)
        if new_rows:
            self.mats.extend(flat[new_rows])
        if pairs_i:
            stored = np.stack([self.mats[j] for j in pairs_j])
            bad = np.max(np.abs(stored - flat[pairs_i]), axis=1) > 10 * scale[pairs_i]
            if bad.any():
                raise EnumerationError("dedup hash collision between distinct elements; lower dedup_tolerance")
        return fresh


def _bfs(spec: GroupSpec, T: float, policy: EnumerationPolicy, dedup: bool) -> OrbitBatch:
    if T < 1:
        raise ValueError("T must be >= 1")
    d = spec.n + 1
    r = spec.rank
    letters = np.stack(spec.letters())
    names = spec.letter_names()
    inv_of = np.array([(i + r) % (2 * r) for i in range(2 * r)])
    F = stop_factor(spec, policy)
    keep_bound = T * F * F
    threads = policy.resolved_threads()

    eye = np.eye(d)
    out_m, out_w = [eye[None]], [""]
    mats = eye[None]
    last = np.array([-1])
    words = [""]
    table = None
    if dedup:
        table = _DedupTable(policy.dedup_tolerance)
        table.insert_batch(eye[None], np.ones(1))
    above = 0
    stopped_by_rule = False
    generations = 0
    max_frontier = 1
    for _ in range(policy.max_word_length):
        generations += 1
        kids, pidx, lidx = _parallel_children(mats, last, letters, inv_of, True, threads)
        if len(kids) == 0:
            stopped_by_rule = True
            break
        norms = lz.max_norm(kids)
        if dedup:
            # elements above the keep bound are never revisited, no need to hash them
            fresh = norms > keep_bound
            low = np.nonzero(~fresh)[0]
            fresh[low] = table.insert_batch(kids[low], norms[low])
        else:
            fresh = np.ones(len(kids), dtype=bool)
        kw = [words[p] + names[l] for p, l in zip(pidx, lidx)]
        gen_min = float(np.min(norms[fresh])) if fresh.any() else math.inf
        hit = fresh & (norms <= T)
        for i in np.nonzero(hit)[0]:
            out_m.append(kids[i][None])
            out_w.append(kw[i])
        keep = fresh & (norms <= keep_bound)
        above = above + 1 if gen_min > T * F else 0
        if above >= 2 or not keep.any():
            stopped_by_rule = True
            break
        idx = np.nonzero(keep)[0]
        if len(idx) > policy.frontier_budget:
            partial = _finish(out_m, out_w, spec.label, T, "heuristic", {})
            certified_T = float(np.min(norms[keep])) / (F * F)
            raise PartialEnumeration(
                f"frontier of {len(idx)} elements exceeds budget {policy.frontier_budget}", partial.prefix(min(T, certified_T)), min(T, certified_T)
            )
        mats = kids[idx]
        last = lidx[idx]
        words = [kw[i] for i in idx]
        max_frontier = max(max_frontier, len(idx))
    status = "certified" if stopped_by_rule and spec.kind == "schottky" else "heuristic"
    stats = {"generations": generations, "stop_factor": F, "max_frontier": max_frontier, "stopped_by_rule": stopped_by_rule}
    return _finish(out_m, out_w, spec.label, T, status, stats)


def _finish(out_m, out_w, label, T, status, stats) -> OrbitBatch:
    out_w = [w or "e" for w in out_w]
    mats = np.concatenate(out_m)
    norms = lz.max_norm(mats)
    order = sorted(range(len(out_w)), key=lambda i: (norms[i], out_w[i]))
    mats = mats[order]
    return OrbitBatch(
        matrices=mats,
        words=[out_w[i] for i in order],
        norms=norms[order],
        dists=lz.distance_from_base(mats),
        label=label,
        T=float(T),
        status=status,
        stats=stats,
    )


def word_bfs(spec: GroupSpec, T: float, policy: EnumerationPolicy | None = None) -> OrbitBatch:
    return _bfs(spec, T, policy or EnumerationPolicy(), dedup=False)


def dedup_bfs(spec: GroupSpec, T: float, policy: EnumerationPolicy | None = None) -> OrbitBatch:
    return _bfs(spec, T, policy or EnumerationPolicy(method="dedup_bfs"), dedup=True)


def enumerate_ball(spec: GroupSpec, T: float, policy: EnumerationPolicy | None = None) -> OrbitBatch:
    policy = policy or EnumerationPolicy()
    if policy.method == "word_bfs":
        if spec.kind != "schottky":
            # reduced words are only unique in a free group
            return dedup_bfs(spec, T, EnumerationPolicy(**{**policy.__dict__, "method": "dedup_bfs"}))
        return word_bfs(spec, T, policy)
    if policy.method == "dedup_bfs":
        return dedup_bfs(spec, T, policy)
    if spec.kind != "sl2z_lattice":
        raise ValueError("direct_scan is only available for the SL2(Z) lattice")
    return lattice_ball_direct(T)


# ---------------------------------------------------------------------------
# SL2(Z) exhaustive scan


@dataclass
class SL2Batch:
    """Integer matrices of SL2(Z) with max |entry| <= T, sorted by (norm, entries)."""

    matrices: np.ndarray  # (N, 2, 2) int64
    norms: np.ndarray
    T: int

    def __len__(self) -> int:
        return len(self.matrices)

    def rho(self) -> np.ndarray:
        return sl2_to_so21_batch(self.matrices)

    def frobenius_sq(self) -> np.ndarray:
        return np.sum(self.matrices.astype(np.int64) ** 2, axis=(1, 2))

    def dists(self) -> np.ndarray:
        return np.arccosh(np.maximum(self.frobenius_sq() / 2.0, 1.0))


def _sort_sl2(mats: np.ndarray) -> np.ndarray:
    norms = np.max(np.abs(mats), axis=(1, 2))
    flat = mats.reshape(len(mats), 4)
    order = np.lexsort((flat[:, 3], flat[:, 2], flat[:, 1], flat[:, 0], norms))
    return mats[order]


def direct_scan_sl2z(T: int) -> SL2Batch:
    """All [[a,b],[c,d]] in SL2(Z) with max |entry| <= T by scanning (a, b, c)."""
    T = int(T)
    if T > DIRECT_SCAN_BUDGET:
        raise ScanBudgetExceeded(f"direct scan limited to T <= {DIRECT_SCAN_BUDGET} (cubic loop budget); got {T}")
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.arange(-T, T + 1, dtype=np.int64)
    B, C = np.meshgrid(rng, rng, indexing="ij")
    B, C = B.ravel(), C.ravel()
    bc1 = 1 + B * C
    parts = []
    for a in range(-T, T + 1):
        if a == 0:
            sel = bc1 == 0
            b, c = B[sel], C[sel]
            for dd in range(-T, T + 1):
                parts.append(np.stack([np.zeros_like(b), b, c, np.full_like(b, dd)], axis=1))
            continue
        sel = bc1 % a == 0
        dvals = bc1[sel] // a
        ok = np.abs(dvals) <= T
        b, c, dv = B[sel][ok], C[sel][ok], dvals[ok]
        parts.append(np.stack([np.full_like(b, a), b, c, dv], axis=1))
    mats = np.concatenate(parts).reshape(-1, 2, 2)
    mats = _sort_sl2(mats)
    return SL2Batch(mats, np.max(np.abs(mats), axis=(1, 2)), T)


def _egcd(a: int, b: int):
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def sl2_rows_with_first_row(a: int, b: int, T: int, frobenius: bool = True) -> np.ndarray:
    """All (c, d) with ad - bc = 1 and |gamma| <= T, for a primitive first row (a, b).

    Solutions form the line (c0, d0) + k (a, b); the admissible k form an interval.
    """
    g, x, y = _egcd(abs(a), abs(b))
    if g != 1:
        return np.empty((0, 2), dtype=np.int64)
    # a d - b c = 1 with d = x sgn(a), c = -y sgn(b)
    sa = 1 if a >= 0 else -1
    sb = 1 if b >= 0 else -1
    d0, c0 = x * sa, -y * sb
    if frobenius:
        rest = T * T - a * a - b * b
        if rest < 0:
            return np.empty((0, 2), dtype=np.int64)
        # |(c0, d0) + k (a, b)|^2 <= rest
        nn = a * a + b * b
        center = -(c0 * a + d0 * b) / nn
        half = math.sqrt(max(0.0, rest / nn - (1.0 / nn) ** 2)) if nn else 0.0
        k = np.arange(math.floor(center - half) - 1, math.ceil(center + half) + 2, dtype=np.int64)
        c = c0 + k * a
        dd = d0 + k * b
        ok = c * c + dd * dd <= rest
    else:
        if max(abs(a), abs(b)) > T:
            return np.empty((0, 2), dtype=np.int64)
        lo, hi = -math.inf, math.inf
        for base, step in ((c0, a), (d0, b)):
            if step:
                k1, k2 = (-T - base) / step, (T - base) / step
                lo, hi = max(lo, min(k1, k2)), min(hi, max(k1, k2))
        k = np.arange(math.floor(lo) - 1, math.ceil(hi) + 2, dtype=np.int64)
        c = c0 + k * a
        dd = d0 + k * b
        ok = (np.abs(c) <= T) & (np.abs(dd) <= T)
    return np.stack([c[ok], dd[ok]], axis=1)


def fibered_scan_sl2z(T: int, first_row_filter=None, frobenius: bool = False) -> SL2Batch:
    """Exact enumeration through the fibration over the first row.

    ``first_row_filter(a, b) -> bool`` restricts which first rows are expanded.
    With ``frobenius`` the ball is |gamma|_2 <= T instead of the max norm.
    """
    T = int(T)
    parts = []
    for a in range(-T, T + 1):
        for b in range(-T, T + 1):
            if gcd(a, b) != 1:
                continue
            if first_row_filter is not None and not first_row_filter(a, b):
                continue
            cd = sl2_rows_with_first_row(a, b, T, frobenius)
            if len(cd):
                ab = np.broadcast_to(np.array([a, b], dtype=np.int64), cd.shape)
                parts.append(np.concatenate([ab, cd], axis=1))
    mats = np.concatenate(parts).reshape(-1, 2, 2) if parts else np.empty((0, 2, 2), dtype=np.int64)
    mats = _sort_sl2(mats)
    return SL2Batch(mats, np.max(np.abs(mats), axis=(1, 2)) if len(mats) else np.empty(0, dtype=np.int64), T)


def lattice_ball_direct(T: float) -> OrbitBatch:
    """rho(SL2(Z)) ball |rho(m)|_max <= T computed from the exhaustive SL2 scan."""
    # |rho(m)|_max >= |m|_max^2
    Ts = int(math.floor(math.sqrt(T)))
    scan = direct_scan_sl2z(Ts)
    keep = scan.matrices[:, 0, 0] > 0  # one representative of each +-pair
    keep |= (scan.matrices[:, 0, 0] == 0) & (scan.matrices[:, 0, 1] > 0)
    m2 = scan.matrices[keep]
    rho = sl2_to_so21_batch(m2)
    norms = lz.max_norm(rho)
    sel = norms <= T
    rho, m2 = rho[sel], m2[sel]
    words = [f"sl2:{a}:{b}:{c}:{d}" for (a, b), (c, d) in m2.tolist()]
    return _finish([rho], words, "sl2z", T, "certified", {"sl2_threshold": Ts})


# ---------------------------------------------------------------------------
# growth profile


@dataclass
class GrowthProfile:
    R: np.ndarray
    counts: np.ndarray
    dists: np.ndarray  # sorted distances of all orbit points with d <= Rmax
    label: str
    status: str


def norm_bound_for_radius(R: float, n: int) -> float:
    """|gamma|_max <= sqrt(2 cosh 2R + n - 1) whenever d(o, gamma o) <= R."""
    return math.sqrt(2 * math.cosh(2 * R) + n - 1)


def orbit_distances(spec: GroupSpec, Rmax: float, policy: EnumerationPolicy | None = None):
    """Sorted d(o, gamma o) over the ball of radius Rmax, plus a status string."""
    if spec.kind == "sl2z_lattice":
        # cosh d = |m|_F^2 / 2 for the symmetric-square image; quotient by +-I
        Ts = int(math.floor(math.sqrt(2 * math.cosh(Rmax)))) + 1
        scan = direct_scan_sl2z(Ts)
        d = scan.dists()
        d = np.sort(d[d <= Rmax])
        return d[::2] if len(d) % 2 == 0 else d, "certified"
    batch = enumerate_ball(spec, norm_bound_for_radius(Rmax, spec.n), policy)
    d = batch.dists[batch.dists <= Rmax + 1e-12]
    return np.sort(d), batch.status


def growth_profile(spec: GroupSpec, Rmax: float, step: float = 0.25, policy: EnumerationPolicy | None = None) -> GrowthProfile:
    d, status = orbit_distances(spec, Rmax, policy)
    R = np.round(np.arange(0.0, Rmax + 1e-9, step), 12)
    counts = np.searchsorted(d, R + 1e-12, side="right")
    return GrowthProfile(R=R, counts=counts, dists=d, label=spec.label, status=status)


def group_sizes_of_powers(h: np.ndarray, T: float) -> int:
    """|{h^k : |h^k| <= T}| by direct powering (oracle for cyclic groups)."""
    count = 1
    for g in (h, lz.inverse(h)):
        p = g.copy()
        while lz.max_norm(p) <= T:
            count += 1
            p = p @ g
    return count
