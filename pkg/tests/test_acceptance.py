"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints,
then asserts it. Tolerances are the pinned ones; the study tests run the
full 100-replicate designs and are marked slow.
"""

import math
import time

import numpy as np
import pytest

from conftest import record
from hkpd._backend import kernels
from hkpd.clustering import adjusted_rand_index, topo_kmeans
from hkpd.inference import (AnovaChainState, GroupedSample, TwoSampleChainState, pairwise_distances, tanova, tss)
from hkpd.persistence import build_graph_filtration, build_rips, compute_diagram, diagram_from_points
from hkpd.simulate import STUDY_SIGMA, KeyShapeSpec, StudyConfig, run_study, run_timing_study, sample_key_shape
from hkpd.spectral import embed_many, evaluate_field, hk_norm, l2_distance, make_basis
from oracles import naive_pairs, random_diagram, scratch_two_sample, triangle_quadrature

REPLICATES = 100


def random_sample(rng, sizes, M=15):
    diagrams = [random_diagram(rng) for _ in range(sum(sizes))]
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return GroupedSample(embed_many(diagrams, M=M), labels)


def test_c01_incremental_updates_match_scratch():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    s2 = random_sample(rng, [27, 33])
    assert s2.basis.size == 136
    st2 = TwoSampleChainState.from_sample(s2, sigma=0.05)
    X = s2.weighted(0.05)
    for _ in range(10_000):
        i = int(rng.choice(np.flatnonzero(st2.labels == 0)))
        j = int(rng.choice(np.flatnonzero(st2.labels == 1)))
        got = st2.step(i, j)
        ref, d = scratch_two_sample(X, st2.labels)
        worst = max(worst, abs(got - ref) / ref)
        w = np.sqrt(st2.w)
        worst = max(worst, np.max(np.abs((st2.fbar - st2.gbar) * w - d)) / np.max(np.abs(d)))
    s5 = random_sample(rng, [8, 10, 12, 14, 16])
    D = pairwise_distances(s5, 0.05)
    st5 = AnovaChainState(D, s5.labels)
    for _ in range(10_000):
        a, b = (int(x) for x in rng.integers(0, s5.N, 2))
        if st5.labels[a] == st5.labels[b]:
            continue
        st5.step(a, b)
        rb, rw = tss(D, st5.labels)
        worst = max(worst, abs(st5.tssb - rb) / rb, abs(st5.tssw - rw) / rw)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 60
    record(1, ok, f"max relative error {worst:.2e} (tol 1e-8), {elapsed:.1f} s (limit 60 s)")
    assert ok


def test_c02_conservation_is_exact():
    rng = np.random.default_rng(2)
    s = random_sample(rng, [12] * 5)
    st = AnovaChainState(pairwise_distances(s, 0.05), s.labels)
    total = float(st.total) / st.scale
    _, lab, tssb, tssw, tot = kernels.tanova_chain(st.Dint, s.labels, 5, 1_000_000, 0, 3)
    again = AnovaChainState(pairwise_distances(s, 0.05), lab)
    ok = (tot == st.total and tssb + tssw == st.total and float(tssb) / st.scale + float(tssw) / st.scale == total
          and tssw == again.tssw_int and tssb == again.tssb_int)
    record(2, ok, f"TSSB + TSSW after 1e6 transpositions on N = 60: {tssb + tssw} vs {st.total} (fixed point), "
                  f"recomputed TSSW {'matches' if tssw == again.tssw_int else 'differs'}")
    assert ok


def test_c03_contraction():
    rng = np.random.default_rng(3)
    es = embed_many([random_diagram(rng) for _ in range(100)], M=15)
    grid = [0.0, 0.1, 1.0, 10.0]
    violations = sum(any(b > a for a, b in zip(norms, norms[1:]))
                     for norms in ([hk_norm(e, s) for s in grid] for e in es))
    record(3, violations == 0, f"{violations} monotonicity violations over 100 embeddings")
    assert violations == 0


def test_c04_quadrature_consistency():
    rng = np.random.default_rng(4)
    sigma = 1.0
    es = embed_many([random_diagram(rng) for _ in range(100)], M=15)
    worst = 0.0
    for a, b in zip(es[0::2], es[1::2]):
        fa = evaluate_field(a, sigma / 2, resolution=400).values
        fb = evaluate_field(b, sigma / 2, resolution=400).values
        coef = l2_distance(a, b, sigma)
        worst = max(worst, abs(triangle_quadrature((fa - fb) ** 2) - coef) / coef)
    record(4, worst <= 1e-3, f"max relative gap {worst:.2e} over 50 pairs (tol 1e-3)")
    assert worst <= 1e-3


@pytest.mark.slow
def test_c05_power_reproduction():
    cfg = StudyConfig("power", sizes=[[5, 5]], percents=[90, 95, 100], replicates=REPLICATES,
                      n_steps=100_000, seed=2024)
    t0 = time.perf_counter()
    rep = run_study(cfg)
    elapsed = time.perf_counter() - t0
    reference = {90: 91, 95: 100, 100: 100}
    got = {s["percent"]: 100 * s["rejection_rate"] for s in rep.summary()}
    ok = all(abs(got[p] - reference[p]) <= 7 for p in reference) and elapsed < 1800
    record(5, ok, "rejection % at 90/95/100: " + "/".join(f"{got[p]:.0f}" for p in reference)
           + f" (reference 91/100/100, tol 7), {elapsed / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_c06_noise_robustness():
    # locations are pre-specified at 4/4 (one cloud per location) and random otherwise
    means = []
    for mode, sizes in [("pre-specified", [[4, 4]]), ("random", [[5, 5], [20, 20], [100, 100]])]:
        cfg = StudyConfig("noise", sizes=sizes, percents=[100], mode=mode, replicates=REPLICATES,
                          n_steps=100_000, seed=7)
        means += [s["mean_p"] for s in run_study(cfg).summary()]
    ok = all(abs(m - 0.5) <= 0.12 for m in means)
    record(6, ok, "mean p at 4/4, 5/5, 20/20, 100/100: " + ", ".join(f"{m:.3f}" for m in means)
           + " (band 0.5 +/- 0.12)")
    assert ok


@pytest.mark.slow
def test_c07_tanova_sensitivity():
    cfg = StudyConfig("sensitivity", test="tanova", sizes=[[5, 5, 5], [20, 20, 20]], percents=[100],
                      replicates=REPLICATES, n_steps=100_000, seed=7)
    rep = run_study(cfg)
    small = rep.p_values("5/5/5", 100)
    large = rep.p_values("20/20/20", 100)
    ok = small.mean() <= 0.01 and large.max() <= 0.001
    record(7, ok, f"n=5: mean p {small.mean():.4f} (<= 0.01); n=20: max p {large.max():.1e} (<= 0.001)")
    assert ok


@pytest.mark.slow
def test_c08_timing_growth():
    cfg = StudyConfig("timing", test="tanova", sizes=[[4, 4, 4], [5, 20, 100]], percents=[100],
                      n_steps=1_000_000, repeats=3, seed=8)
    rep = run_timing_study(cfg)
    ta, pm = rep.growth("tanova"), rep.growth("permanova")
    ok = ta < 3 and ta < pm
    secs = ", ".join(f"N={r['N']}: T-ANOVA {r['tanova_s']:.2f} s, PERMANOVA {r['permanova_s']:.2f} s"
                     for r in rep.rows)
    record(8, ok, f"growth N=12 -> 125: T-ANOVA {ta:.2f} (< 3), PERMANOVA {pm:.1f} [{secs}]")
    assert ok


@pytest.mark.slow
def test_c09_null_calibration():
    out = []
    for test, sizes in [("two-sample", [5, 5]), ("tanova", [5, 5, 5])]:
        cfg = StudyConfig("null", test=test, sizes=[sizes], percents=[100], replicates=REPLICATES,
                          n_steps=100_000, seed=7)
        out.append((test, run_study(cfg).summary()[0]["rejections"]))
    ok = all(r <= 12 for _, r in out)
    record(9, ok, ", ".join(f"{t}: {r}/100 rejections" for t, r in out) + " (limit 12)")
    assert ok


@pytest.mark.slow
def test_c10_clustering_recovery():
    truth = np.repeat([0, 1, 2], 10)
    specs = [KeyShapeSpec("full-key")] * 10 + [KeyShapeSpec("box-only")] * 10 + [KeyShapeSpec("extra-hole")] * 10
    perfect, max_p = 0, 0.0
    for seed in range(REPLICATES):
        rng = np.random.default_rng(seed)
        ds = [diagram_from_points(sample_key_shape(s, rng.integers(2 ** 63)).points) for s in specs]
        es = embed_many(ds)
        c = topo_kmeans(es, 3, sigma=STUDY_SIGMA, seed=seed)
        perfect += adjusted_rand_index(truth, c.assignments) == 1.0
        res = tanova(GroupedSample(es, c.assignments), sigma=STUDY_SIGMA, n_steps=100_000, seed=seed)
        max_p = max(max_p, res.p_value)
    ok = perfect >= 95 and max_p <= 0.001
    record(10, ok, f"ARI = 1 in {perfect}/100 seeds (need 95); max T-ANOVA p across recovered clusters "
                   f"{max_p:.1e} (<= 0.001)")
    assert ok


def test_c11_persistence_correctness():
    mismatches = cases = 0
    for seed in range(300):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        if seed % 2:
            W = np.triu(rng.integers(1, 6, (n, n)).astype(float), 1)
            f = build_graph_filtration(W + W.T)
        else:
            pts = rng.random((n, 2))
            if seed % 3 == 0:
                pts = np.round(pts * 3) / 3
            f = build_rips(pts)
        for dim in (0, 1):
            cases += 1
            mismatches += not np.array_equal(compute_diagram(f, dim).pairs, naive_pairs(f, dim))
    sq = diagram_from_points(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), dim=1).pairs
    square_ok = sq.shape == (1, 2) and sq[0, 0] == 1.0 and sq[0, 1] == math.sqrt(2)
    ok = mismatches == 0 and square_ok
    record(11, ok, f"{mismatches}/{cases} oracle mismatches on <= 8 vertices; unit square H1 = "
                   f"{tuple(map(float, sq[0])) if len(sq) else None}")
    assert ok
