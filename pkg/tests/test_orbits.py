import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from horocount import lorentz as lz
from horocount import orbits as ob
from horocount.groups import GroupSpec, _short_words, cyclic_spec, sl2_to_so21_batch

from conftest import random_element


@pytest.fixture(scope="session")
def schottky_1e3(schottky):
    return ob.word_bfs(schottky, 1e3)


def test_identity_is_always_present(schottky, lattice):
    for spec in (schottky, lattice):
        b = ob.enumerate_ball(spec, 1.0)
        assert any(np.array_equal(m, np.eye(3)) for m in b.matrices)


def test_policy_validation():
    with pytest.raises(ValueError):
        ob.EnumerationPolicy(method="dfs")
    with pytest.raises(ValueError):
        ob.EnumerationPolicy(max_word_length=0)
    with pytest.raises(ValueError):
        ob.EnumerationPolicy(dedup_tolerance=0)
    with pytest.raises(ValueError):
        ob.enumerate_ball(cyclic_spec(), 0.5)


def test_batch_invariants(schottky, schottky_1e3):
    b = schottky_1e3
    assert b.status == "certified"
    assert np.all(np.diff(b.norms) >= 0)
    assert np.all(b.norms <= b.T)
    for w, m, nrm in zip(b.words, b.matrices, b.norms):
        assert lz.max_norm(schottky.word_matrix(w) - m) <= 1e-9 * nrm
        assert lz.max_norm(m) == nrm
    flat = b.matrices.reshape(len(b), -1) / b.norms[:, None]
    for i in range(len(b)):
        d = np.max(np.abs(flat[i + 1 :] - flat[i]), axis=1)
        assert d.size == 0 or d.min() > 1e-8


def test_word_and_dedup_bfs_agree(schottky, schottky_1e3):
    d = ob.dedup_bfs(schottky, 1e3)
    assert d.words == schottky_1e3.words
    assert np.array_equal(d.matrices, schottky_1e3.matrices)


def test_certified_enumeration_is_complete(schottky, schottky_1e3):
    b = schottky_1e3
    L = max(len(w) for w in b.words if w != "e") + 2
    mats = schottky.letters()
    extra = 0
    for w in _short_words(schottky.rank, L):
        g = np.eye(3)
        for i in w:
            g = g @ mats[i]
        extra += lz.max_norm(g) <= b.T
    assert extra + 1 == len(b)


@pytest.mark.parametrize("s", [0.7, 1.5, 4.0])
def test_cyclic_ball_size_closed_form(s):
    spec = GroupSpec(n=2, kind="schottky", generators=[lz.a_matrix(s, 2)])
    for T in (1.0, 3.0, 10.0, 1e3, 1e6):
        b = ob.enumerate_ball(spec, T)
        assert len(b) == 1 + 2 * math.floor(math.log(T) / s + 1e-12)
        assert len(b) == ob.group_sizes_of_powers(spec.generators[0], T)


def test_cyclic_conjugate_matches_powering():
    spec = cyclic_spec(2, 1.0)
    for T in (10.0, 1e3, 1e5):
        assert len(ob.enumerate_ball(spec, T)) == ob.group_sizes_of_powers(spec.generators[0], T)


def test_thread_count_does_not_change_output(lattice, monkeypatch):
    monkeypatch.delenv("HOROCOUNT_THREADS", raising=False)
    T = 2 * 40**2 + 1
    one = ob.dedup_bfs(lattice, T, ob.EnumerationPolicy(method="dedup_bfs", threads=1))
    four = ob.dedup_bfs(lattice, T, ob.EnumerationPolicy(method="dedup_bfs", threads=4))
    assert one.stats["max_frontier"] >= 2048  # the parallel path actually ran
    assert one.words == four.words
    assert np.array_equal(one.matrices, four.matrices)
    monkeypatch.setenv("HOROCOUNT_THREADS", "3")
    assert ob.EnumerationPolicy(threads=1).resolved_threads() == 3
    env = ob.dedup_bfs(lattice, T, ob.EnumerationPolicy(method="dedup_bfs", threads=1))
    assert env.words == one.words


def test_partial_enumeration_reports_certified_prefix(schottky):
    policy = ob.EnumerationPolicy(frontier_budget=300)
    with pytest.raises(ob.PartialEnumeration) as info:
        ob.word_bfs(schottky, 1e8, policy)
    part = info.value.batch
    assert part.status == "heuristic" and info.value.certified_T > 1
    assert info.value.code == "E_PARTIAL"
    full = ob.word_bfs(schottky, info.value.certified_T)
    assert part.words == full.words


def test_lattice_word_bfs_falls_back_to_dedup(lattice):
    b = ob.enumerate_ball(lattice, 20.0, ob.EnumerationPolicy(method="word_bfs"))
    assert b.status == "heuristic"
    assert len(set(map(bytes, np.round(b.matrices, 6)))) == len(b)


def test_direct_scan_requires_lattice(schottky):
    with pytest.raises(ValueError):
        ob.enumerate_ball(schottky, 10.0, ob.EnumerationPolicy(method="direct_scan"))


# ---------------------------------------------------------------- SL2(Z) scans


def test_direct_scan_small():
    b = ob.direct_scan_sl2z(1)
    mats = b.matrices.tolist()
    assert [[0, -1], [1, 0]] in mats and [[1, 1], [0, 1]] in mats
    assert all(a * d - bb * c == 1 for (a, bb), (c, d) in mats)


@given(st.integers(1, 25))
def test_direct_scan_symmetry(T):
    b = ob.direct_scan_sl2z(T)
    assert len(b) % 2 == 0
    keys = {tuple(m.ravel()) for m in b.matrices}
    assert all(tuple(-m.ravel()) in keys for m in b.matrices)
    assert np.all(b.norms <= T) and np.all(np.diff(b.norms) >= 0)


def test_direct_scan_budget():
    with pytest.raises(ob.ScanBudgetExceeded):
        ob.direct_scan_sl2z(ob.DIRECT_SCAN_BUDGET + 1)


@pytest.mark.parametrize("T", [5, 17, 40])
def test_fibered_scan_matches_direct(T):
    a = ob.direct_scan_sl2z(T)
    b = ob.fibered_scan_sl2z(T)
    assert np.array_equal(a.matrices, b.matrices)


def test_frobenius_fibers_match_filter():
    T = 30
    scan = ob.direct_scan_sl2z(T)
    inside = scan.matrices[scan.frobenius_sq() <= T * T]
    fib = ob.fibered_scan_sl2z(T, frobenius=True)
    assert np.array_equal(ob._sort_sl2(inside), fib.matrices)


def test_dedup_matches_direct_scan(lattice):
    Ts = 20
    T = 2 * Ts**2 + 1  # |rho(m)| <= 2 |m|^2 + 1 covers the SL2 ball
    bfs = ob.dedup_bfs(lattice, T)
    scan = ob.direct_scan_sl2z(Ts)
    keep = (scan.matrices[:, 0, 0] > 0) | ((scan.matrices[:, 0, 0] == 0) & (scan.matrices[:, 0, 1] > 0))
    rho = sl2_to_so21_batch(scan.matrices[keep])
    corner = np.max(np.abs(bfs.matrices[:, [0, 0, -1, -1], [0, -1, 0, -1]]), axis=1)
    sel = corner <= Ts**2 * (1 + 1e-9)  # corner entries of rho(m) are a^2, b^2, c^2, d^2
    got = np.round(bfs.matrices[sel], 6)
    want = np.round(rho, 6)
    key = lambda arr: sorted(map(tuple, arr.reshape(len(arr), -1).tolist()))
    assert key(got) == key(want)


def test_lattice_ball_direct_matches_bfs(lattice):
    T = 300.0
    a = ob.lattice_ball_direct(T)
    b = ob.dedup_bfs(lattice, T)
    assert len(a) == len(b)
    assert np.allclose(np.sort(a.norms), np.sort(b.norms), rtol=1e-12)


# ---------------------------------------------------------------- growth


def test_trivial_group_growth():
    spec = GroupSpec(n=2, kind="explicit", generators=[np.eye(3)])
    prof = ob.growth_profile(spec, 5.0)
    assert np.all(prof.counts == 1)


def test_lattice_growth_slope(lattice):
    prof = ob.growth_profile(lattice, 12.0)
    assert prof.counts[0] >= 1 and np.all(np.diff(prof.counts) >= 0)
    sel = (prof.R >= 5) & (prof.R <= 12)
    slope = np.polyfit(prof.R[sel], np.log(prof.counts[sel]), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_schottky_growth_slope(schottky):
    prof = ob.growth_profile(schottky, 24.0)
    sel = prof.R >= 12
    slope = np.polyfit(prof.R[sel], np.log(prof.counts[sel]), 1)[0]
    assert 0 < slope < 1


def test_norm_is_comparable_to_exp_distance(schottky):
    b = ob.word_bfs(schottky, 1e8)
    sel = b.dists >= 2
    ratio = np.log(b.norms[sel]) / b.dists[sel]
    assert 0.5 <= ratio.min() and ratio.max() <= 1.1


def test_norm_bound_for_radius(rng):
    for _ in range(500):
        g = random_element(rng, 3, smax=4)
        R = float(lz.distance_from_base(g))
        assert lz.max_norm(g) <= ob.norm_bound_for_radius(R, 3) * (1 + 1e-12)


# ---------------------------------------------------------------- CSV


def test_csv_output(tmp_path, schottky_1e3):
    p = tmp_path / "batch.csv"
    schottky_1e3.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == ob.CSV_MAGIC
    header = lines[2].split(",")
    assert header[:3] == ["word", "norm", "dist_o"] and len(header) == 3 + 9
    rows = [ln.split(",") for ln in lines[3:]]
    assert len(rows) == len(schottky_1e3)
    for r, m in zip(rows, schottky_1e3.matrices):
        assert np.array_equal(np.array(r[3:], dtype=float).reshape(3, 3), m)
