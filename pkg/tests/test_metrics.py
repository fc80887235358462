import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodulecad.detect import Candidate, Source
from nodulecad.metrics import (
    CPM_RATES,
    FrocCurve,
    HitLabel,
    NoduleAnnotation,
    ScanRecord,
    bootstrap_ci,
    bootstrap_cpms,
    cpm,
    cpm_from_sensitivities,
    evaluate,
    froc_curve,
    froc_from_records,
    match_hits,
    scan_records,
    sensitivity_at,
)

from oracles import brute_cpm, brute_sensitivities


def cand(x, score, scan="a", y=0.0):
    return Candidate(scan, (x, y, 0.0), 2.0, score, Source.FUSED)


def ann(x, d=10.0, scan="a", y=0.0):
    return NoduleAnnotation(scan, (x, y, 0.0), d)


def test_match_hits_labels():
    cs = [cand(0, 0.4), cand(3, 0.9), cand(50, 0.8), cand(0, 0.9, scan="b")]
    m = match_hits(cs, [ann(1)])
    assert m.labels == [HitLabel.DUPLICATE, HitLabel.TP, HitLabel.FP, HitLabel.FP]
    assert m.detected == [True] and m.credited_by == [1]


def test_match_boundary_and_scale():
    cs = [cand(5.0, 0.5)]
    assert match_hits(cs, [ann(0)]).detected == [True]  # exactly on the radius
    assert match_hits([cand(5.001, 0.5)], [ann(0)]).detected == [False]
    assert match_hits([cand(7.0, 0.5)], [ann(0)], scale=1.5).detected == [True]


def test_match_ties_go_to_lowest_index_and_fpr_score_wins():
    cs = [cand(0, 0.5), cand(1, 0.5)]
    assert match_hits(cs, [ann(0)]).credited_by == [0]
    cs = [cand(0, 0.9), cand(1, 0.1).with_fpr(0.95)]
    assert match_hits(cs, [ann(0)]).credited_by == [1]


def test_one_candidate_credits_two_annotations():
    m = match_hits([cand(0, 0.5)], [ann(1), ann(-1)])
    assert m.detected == [True, True] and m.labels == [HitLabel.TP]


def test_froc_curve_example():
    c = froc_curve([0.9, 0.5, 0.1], [0.95, 0.6], n_scans=2, n_nodules=4)
    assert c.points() == [(0.0, 0.25), (0.5, 0.5), (1.0, 0.5), (1.5, 0.5)]
    assert sensitivity_at(c, 0.25) == 0.25 and sensitivity_at(c, 8) == 0.5
    with pytest.raises(ValueError):
        froc_curve([], [], 0, 1)


def test_cpm_examples():
    assert cpm_from_sensitivities([0.5] * 7) == 0.5
    assert cpm_from_sensitivities([0.893, 0.917, 0.930, 0.942, 0.960, 0.966, 0.973]) == pytest.approx(0.94014, abs=1e-5)
    with pytest.raises(ValueError):
        cpm_from_sensitivities([1.0] * 6)
    assert cpm(FrocCurve((0.0,), (0.0,))) == 0.0
    assert cpm(FrocCurve((0.0, 0.2), (1.0, 1.0))) == 1.0


world = st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(0, 30), st.integers(0, 30))


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(world, st.integers(1, 20)), max_size=15),
    st.lists(st.tuples(world, st.integers(2, 12)), min_size=1, max_size=5),
)
def test_froc_matches_brute_threshold_sweep(raw_c, raw_a):
    cs = [Candidate(s, (x, y, 0.0), 1.0, sc / 20, Source.FUSED) for (s, x, y), sc in raw_c]
    an = [NoduleAnnotation(s, (x, y, 0.0), float(d)) for (s, x, y), d in raw_a]
    recs = scan_records(cs, an, scan_ids=["a", "b", "c"])
    curve = froc_from_records(recs)
    got = [sensitivity_at(curve, r) for r in CPM_RATES]
    expect = brute_sensitivities(
        [(c.scan_id, c.center, c.score) for c in cs], [(a.scan_id, a.center, a.diameter_mm) for a in an], 3, CPM_RATES
    )
    np.testing.assert_allclose(got, expect, atol=1e-12)
    fp = [s for r in recs for s in r.fp_scores]
    tp = [s for r in recs for s in r.tp_scores]
    assert cpm(curve) == pytest.approx(brute_cpm(fp, tp, 3, len(an), CPM_RATES), abs=1e-12)


# a coarse grid keeps the rescaling below strictly increasing in floating point
scores = st.lists(st.integers(0, 1000).map(lambda k: k / 1000), max_size=12)


@settings(max_examples=60, deadline=None)
@given(scores, scores, st.integers(1, 4), st.randoms(use_true_random=False))
def test_froc_invariants(fp, tp, n_scans, rnd):
    n_nod = len(tp) + 1
    c = froc_curve(fp, tp, n_scans, n_nod)
    assert list(c.fp_per_scan) == sorted(set(c.fp_per_scan))
    assert all(a <= b for a, b in zip(c.sensitivity, c.sensitivity[1:]))
    assert all(0 <= s <= 1 for s in c.sensitivity)
    # only the score order matters
    g = lambda v: v**3 + 2  # noqa: E731
    assert froc_curve([g(v) for v in fp], [g(v) for v in tp], n_scans, n_nod) == c
    fp2, tp2 = list(fp), list(tp)
    rnd.shuffle(fp2)
    rnd.shuffle(tp2)
    assert froc_curve(fp2, tp2, n_scans, n_nod) == c


def test_scan_records_counts_empty_scans():
    recs = scan_records([cand(0, 0.5)], [ann(0)], scan_ids=["a", "z"])
    assert [r.scan_id for r in recs] == ["a", "z"]
    assert recs[1] == ScanRecord("z", (), (), 0)


def test_bootstrap_degenerate_and_reproducible():
    recs = [ScanRecord("a", (0.2,), (0.9,), 1)] * 4
    lo, hi = bootstrap_ci(recs, n=200, seed=1)
    assert lo == hi == 1.0
    r2 = [ScanRecord("a", (0.2, 0.7), (0.9,), 1), ScanRecord("b", (0.8,), (0.3,), 2), ScanRecord("c", (), (), 0)]
    a = bootstrap_cpms(r2, n=300, seed=9)
    assert np.array_equal(a, bootstrap_cpms(r2, n=300, seed=9), equal_nan=True)
    assert np.isnan(a).any()  # resamples of only scan c have no nodules
    lo, hi = bootstrap_ci(r2, n=300, seed=9)
    assert lo <= hi
    with pytest.raises(ValueError):
        bootstrap_cpms([], n=1)


def test_evaluate_report_table():
    recs = [ScanRecord("a", (0.2,), (0.9,), 1)]
    rep = evaluate(recs, n_bootstrap=0)
    assert rep.cpm == 1.0 and rep.sensitivities == (1.0,) * 7
    text = rep.table()
    assert text.splitlines()[-1] == "CPM 1.000" and "CI" not in text
