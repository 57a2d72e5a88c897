import itertools
import math

import numpy as np
import pytest

from casande_lab.environment import Trajectory, Turn
from casande_lab.knowledge import make_patient
from casande_lab.metrics import (
    EmptyExperiencedSet,
    EmptyInput,
    EvaluationReport,
    aggregate,
    confirmation_score,
    ddf1,
    differential_recall_precision,
    dshm,
    evaluate_patient,
    exploration_score,
    gtpa,
    gtpa_at_k,
    interaction_length,
    positive_evidence_recall,
    resample_21,
    resample_indices,
    severe_rates,
    t_quantile_975,
    write_report_csv,
)

from conftest import binary_kb


def dist_from_set(s, D):
    v = np.zeros(D)
    for d in s:
        v[d] = 1.0 / len(s)
    return v


# brute-force set oracle, written against plain python sets with no shared code
def oracle(pred_p, gt_p, severe, gt_path, k, tau=0.01):
    P = {i for i, x in enumerate(pred_p) if x > tau}
    G = {i for i, x in enumerate(gt_p) if x > tau}
    inter = [i for i in P if i in G]
    rec = len(inter) / len(G)
    prec = len(inter) / len(P) if P else 0.0
    f1 = 0.0 if rec + prec == 0 else 2 * rec * prec / (rec + prec)
    sg = [s for s in severe if s in G]
    sn = [s for s in severe if s not in G]
    ri = sum(1 for s in sg if s in P) / len(sg) if sg else None
    ro = sum(1 for s in sn if s not in P) / len(sn) if sn else None
    if ri is None and ro is None:
        h = 1.0
    elif ri is None:
        h = ro
    elif ro is None:
        h = ri
    else:
        h = 0.0 if ri + ro == 0 else 2 * ri * ro / (ri + ro)
    ranked = sorted(range(len(pred_p)), key=lambda i: (-pred_p[i], i))
    return f1, h, int(gt_path in P), int(gt_path in ranked[:k])


def random_instance(rng):
    D = int(rng.integers(2, 10))
    def vec():
        v = rng.dirichlet(np.full(D, 0.5))
        v[rng.random(D) < 0.3] = 0.0
        if rng.random() < 0.2:
            v[int(rng.integers(D))] = 0.01  # boundary value
        return v / v.sum() if v.sum() > 0 else np.eye(D)[0]
    gt = vec()
    if gt.max() <= 0.01:
        gt = np.eye(D)[0]
    pred = vec()
    severe = {d for d in range(D) if rng.random() < 0.4}
    return pred, gt, severe, int(rng.integers(D)), int(rng.integers(1, D + 1))


def test_against_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pred, gt, severe, g, k = random_instance(rng)
        f1, h, a, ak = oracle(pred.tolist(), gt.tolist(), severe, g, k)
        assert ddf1(pred, gt) == f1
        assert dshm(pred, gt, severe) == h
        assert gtpa(pred, g) == a
        assert gtpa_at_k(pred, g, k) == ak


def test_worked_five_set():
    dist = [0.349, 0.243, 0.153, 0.152, 0.103, 0.0, 0.0, 0.0]
    assert ddf1(dist, dist) == 1.0
    for g in range(5):
        assert gtpa(dist, g) == 1


def test_set_examples():
    pred, gt = dist_from_set({0, 1, 2}, 4), dist_from_set({0, 1, 3}, 4)
    r, p = differential_recall_precision(pred, gt)
    assert r == p == 2 / 3 and ddf1(pred, gt) == pytest.approx(2 / 3, abs=1e-15)
    assert ddf1(dist_from_set({0}, 4), dist_from_set({1}, 4)) == 0.0


def test_dshm_examples():
    gt = dist_from_set({0, 2}, 3)
    assert dshm(gt, gt, {0, 1}) == 1.0
    assert severe_rates(dist_from_set({0, 1}, 3), gt, {0, 1}) == (1.0, 0.0)
    assert dshm(dist_from_set({0, 1}, 3), gt, {0, 1}) == 0.0
    assert dshm(dist_from_set({1}, 3), gt, set()) == 1.0


def test_gtpa_examples():
    onehot = np.eye(6)[2]
    assert gtpa(onehot, 2) == 1 and gtpa_at_k(onehot, 2, 1) == 1
    ranked = [0.5, 0.3, 0.2, 0.0]
    assert gtpa_at_k(ranked, 2, 1) == 0
    five = [0.4, 0.3, 0.2, 0.089, 0.011]
    assert gtpa(five, 4) == 1 and gtpa_at_k(five, 4, 3) == 0


def test_interaction_length():
    assert interaction_length([[1, 2, 3, 4, 5]]) == 5
    assert interaction_length([[1, 2], [1, 2, 3, 4]]) == 3
    with pytest.raises(EmptyInput):
        interaction_length([])


def test_positive_evidence_recall():
    kb = binary_kb(p_yes=((0.5,) * 5, (0.5,) * 5))
    p = make_patient(kb, age=3, sex="F", chief_complaint=0, values={0: True, 1: True, 2: True, 3: True},
                     gt_pathology=0, gt_differential=[0.5, 0.5])
    assert positive_evidence_recall(p, [1, 2, 3, 4]) == 1.0
    assert positive_evidence_recall(p, [4]) == 0.0
    assert positive_evidence_recall(p, [1, 3, 4]) == pytest.approx(2 / 3)
    lone = make_patient(kb, age=3, sex="F", chief_complaint=0, values={0: True}, gt_pathology=0,
                        gt_differential=[0.5, 0.5])
    with pytest.raises(EmptyExperiencedSet):
        positive_evidence_recall(lone, [1])


def test_trajectory_scores():
    assert exploration_score([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert confirmation_score([0.2, 0.8], [0.2, 0.8]) == 1.0
    assert confirmation_score([0.5, 0.5], [1, 0]) == pytest.approx(0.5, abs=1e-15)


def test_resampling():
    assert resample_indices(21) == list(range(21))
    assert resample_21([7]) == [7] * 21
    assert resample_indices(5)[10] == 2
    # ties at .5 round up: L=3 gives f*(L-1) = 0.5 at k=5
    assert resample_indices(3)[5] == 1
    for L in range(1, 60):
        idx = resample_indices(L)
        assert idx[0] == 0 and idx[-1] == L - 1 and idx == sorted(idx)
        assert idx == [math.floor(k / 20 * (L - 1) + 0.5 + 1e-12) for k in range(21)]


def report(v):
    names = ("IL", "PER", "DDR", "DDP", "DDF1", "DSHM", "rule_in", "rule_out", "GTPA", "GTPA@1", "GTPA@3", "GTPA@5")
    series = {s: [0.0] * 21 for s in ("exploration", "confirmation", "rule_in", "rule_out", "dshm")}
    return EvaluationReport("m", [], {n: v for n in names}, series)


def test_aggregate():
    one = aggregate([report(0.5)])
    assert one.ci == {} and one.means["DDF1"] == 0.5
    same = aggregate([report(0.7)] * 3)
    lo, hi = same.ci["DDF1"]
    assert lo == hi == pytest.approx(0.7)
    agg = aggregate([report(0.9), report(1.0), report(0.8)])
    assert agg.means["DDF1"] == pytest.approx(0.9)
    half = 4.302652729749464 * 0.1 / math.sqrt(3)
    assert agg.ci["DDF1"][1] - agg.means["DDF1"] == pytest.approx(half, rel=1e-9)
    # df = 2 has the closed form (2p - 1) / sqrt(2 p (1 - p))
    assert t_quantile_975(2) == pytest.approx(0.95 / math.sqrt(2 * 0.975 * 0.025), rel=1e-9)


def test_report_csv(tmp_path):
    path = tmp_path / "r.csv"
    write_report_csv([aggregate([report(0.9), report(1.0), report(0.8)])], path, metrics=("DDF1",))
    lines = path.read_text().splitlines()
    assert lines[0] == "metric,method,n_runs,mean,ci95_low,ci95_high"
    assert lines[1].startswith("DDF1,m,3,")


def test_evaluate_patient_record():
    kb = binary_kb(prior=(0.5, 0.5), p_yes=((0.9, 0.8, 0.5), (0.1, 0.2, 0.5)), severe=(1,))
    p = make_patient(kb, age=30, sex="M", chief_complaint=0, values={0: True, 1: True}, gt_pathology=0,
                     gt_differential=[0.97, 0.03])
    turns = [Turn(0, 0, "q0", "yes", 0.0, {}, [0.6, 0.4], False),
             Turn(1, 1, "q1", "yes", 1.5, {}, [0.995, 0.005], False),
             Turn(1, 3, "exit", None, 0.0, {}, [0.995, 0.005], True)]
    rec = evaluate_patient(Trajectory(turns, 3), p, kb)
    assert rec["IL"] == 1 and rec["PER"] == 1.0 and rec["GTPA"] == 1.0
    assert rec["DDR"] == 0.5 and rec["DDP"] == 1.0
    assert rec["rule_in"] == 0.0 and rec["rule_out"] == 1.0 and rec["DSHM"] == 0.0
    assert all(len(v) == 21 for v in rec["series"].values())


def test_ranges_symmetry_and_monotone_k():
    rng = np.random.default_rng(11)
    for _ in range(500):
        pred, gt, severe, g, _ = random_instance(rng)
        for v in (ddf1(pred, gt), dshm(pred, gt, severe), *differential_recall_precision(pred, gt)):
            assert 0.0 <= v <= 1.0
        if pred.max() > 0.01:
            assert ddf1(pred, gt) == pytest.approx(ddf1(gt, pred), abs=1e-15)
        hits = [gtpa_at_k(pred, g, k) for k in range(1, len(pred) + 1)]
        assert hits == sorted(hits) and hits[-1] == 1
        b = rng.dirichlet(np.ones(len(pred)))
        assert 0.0 <= exploration_score(pred, b) <= 1.0 and 0.0 <= confirmation_score(b, gt) <= 1.0
