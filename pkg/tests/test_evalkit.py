"""Metrics, rank statistics, proxy perceptual measures, and the analysis
layer, all pinned to hand-computed or independently verified values."""

import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from skelnvs.evalkit import (
    ComparisonReport,
    FeatureNetSpec,
    MetricRecord,
    bootstrap_se,
    compare_models,
    fid_proxy,
    iou_binned_improvement,
    line_plot_svg,
    lpips_proxy,
    make_report,
    mann_whitney_u,
    metric_l1,
    metric_psnr,
    metric_ssim,
    normalized_deltas,
    rankdata,
    records_from_csv,
    records_from_images,
    records_to_csv,
    spearman_correlation,
)
from skelnvs.evalkit.featnet import extract_features, frechet_distance, pooled_features


def img(value=0.0, size=16):
    return np.full((size, size, 3), value, dtype=np.float64)


def rand_img(rng, size=32):
    return rng.uniform(0.0, 1.0, size=(size, size, 3))


# ---------------------------------------------------------------- metrics


def test_psnr_known_values():
    # constant offset of 0.5 -> MSE 0.25 -> 10*log10(4) = 20*log10(2)
    assert metric_psnr(img(0.5), img(0.0)) == pytest.approx(20.0 * math.log10(2.0), abs=1e-9)
    assert metric_psnr(img(1.0), img(0.0)) == 0.0
    assert metric_psnr(img(0.7), img(0.7)) == 99.0  # identical images hit the cap


def test_l1_known_value():
    assert metric_l1(img(0.25), img(0.0)) == pytest.approx(0.25, abs=1e-12)
    a = np.zeros((4, 4, 3))
    a[0, 0, 0] = 1.0
    assert metric_l1(a, np.zeros_like(a)) == pytest.approx(1.0 / 48.0, abs=1e-12)


def test_ssim_identical_is_one():
    rng = np.random.default_rng(0)
    x = rand_img(rng)
    assert metric_ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images_closed_form():
    # zero variance: SSIM reduces to C1/(mu_a^2 + mu_b^2 + C1) with C1 = 0.01^2
    c1 = 0.01**2
    expect = c1 / (1.0 + c1)
    assert metric_ssim(img(0.0), img(1.0)) == pytest.approx(expect, rel=1e-9)


def test_metric_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        metric_psnr(img(0.0, 16), img(0.0, 17))


# ---------------------------------------------------------------- rank stats


def test_rankdata_midranks():
    assert np.array_equal(rankdata([10.0, 20.0, 20.0, 30.0]), [1.0, 2.5, 2.5, 4.0])


def test_u_test_exact_enumeration_one_sixth():
    # complete separation of 2 vs 2: only 1 of the C(4,2)=6 rank splits is as extreme
    res = mann_whitney_u([3.0, 4.0], [1.0, 2.0], alternative="greater")
    assert res["method"] == "exact"
    assert res["U"] == 4.0
    assert res["p"] == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_u_test_ties_take_normal_path_with_half_wins():
    res = mann_whitney_u([1.0, 2.0], [2.0, 3.0], alternative="less")
    assert res["method"] == "normal"  # tie forces the approximation
    assert res["U"] == 0.5  # the tied pair contributes half a win


def test_u_test_matches_scipy_asymptotic_and_exact():
    rng = np.random.default_rng(7)
    x = rng.normal(0.3, 1.0, 8)
    y = rng.normal(0.0, 1.0, 8)
    mine = mann_whitney_u(x, y, alternative="greater")
    asym = mannwhitneyu(x, y, alternative="greater", method="asymptotic")
    exact = mannwhitneyu(x, y, alternative="greater", method="exact")
    assert mine["U"] == pytest.approx(float(asym.statistic), abs=1e-9)
    assert mine["p"] == pytest.approx(float(asym.pvalue), abs=1e-12)
    assert abs(mine["p"] - float(exact.pvalue)) <= 0.01


def test_u_test_total_dominance_is_decisive():
    a = np.arange(20) + 100.0
    b = np.arange(20, dtype=np.float64)
    assert mann_whitney_u(a, b, alternative="greater")["p"] < 1e-3
    assert mann_whitney_u(a, b, alternative="less")["p"] > 0.999


def test_u_test_input_validation():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [2.0], alternative="two-sided")


def test_bootstrap_se_constant_and_gaussian():
    assert bootstrap_se(np.ones(50)) == 0.0
    vals = np.random.default_rng(1).normal(0.0, 1.0, 100)
    se = bootstrap_se(vals, n_boot=1000, seed=0)
    classic = vals.std(ddof=1) / 10.0
    assert se == pytest.approx(classic, rel=0.3)
    assert bootstrap_se(vals, seed=0) == se  # deterministic in seed


def test_spearman_known_values():
    assert spearman_correlation([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman_correlation([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman_correlation([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert spearman_correlation([1, 2, 3], [5, 5, 5]) == 0.0  # constant side


# ---------------------------------------------------------------- proxy nets


def test_featnet_deterministic_and_shaped():
    spec = FeatureNetSpec()
    rng = np.random.default_rng(2)
    x = rand_img(rng)
    f1 = extract_features(x, spec)
    f2 = extract_features(x, spec)
    assert len(f1) == len(spec.widths)
    for a, b in zip(f1, f2):
        assert np.array_equal(a, b)
    assert pooled_features(x, spec).shape == (spec.pooled_dim,)


def test_lpips_proxy_zero_self_positive_other_symmetric():
    spec = FeatureNetSpec()
    rng = np.random.default_rng(2)
    a, b = rand_img(rng), rand_img(rng)
    assert lpips_proxy(a, a, spec) == 0.0
    d = lpips_proxy(a, b, spec)
    assert d > 0.0
    assert lpips_proxy(b, a, spec) == pytest.approx(d, rel=1e-12)


def test_frechet_distance_mean_shift_only():
    # identical covariances: distance reduces to ||mu_a - mu_b||^2 = 5
    sig = np.eye(3) * 0.3
    d = frechet_distance(np.zeros(3), sig, np.array([0.0, 1.0, 2.0]), sig)
    assert d == pytest.approx(5.0, abs=1e-9)


def test_fid_proxy_identical_sets_and_order_invariance():
    spec = FeatureNetSpec()
    rng = np.random.default_rng(2)
    sets = [rand_img(rng) for _ in range(6)]
    assert fid_proxy(sets, list(reversed(sets)), spec) == pytest.approx(0.0, abs=1e-6)
    other = [rand_img(rng) + 0.1 for _ in range(6)]
    d = fid_proxy(sets, other, spec)
    assert d > 0.0
    assert fid_proxy(other, sets, spec) == pytest.approx(d, rel=1e-6)


def test_fid_proxy_needs_two_images():
    spec = FeatureNetSpec()
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        fid_proxy([rand_img(rng)], [rand_img(rng)], spec)


# ---------------------------------------------------------------- analysis


def make_records(tag, metric_shift=0.0, n=8, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        base_l1 = rng.uniform(0.1, 0.3)
        out.append(
            MetricRecord(
                sample_id=f"s{i:02d}",
                model=tag,
                l1=base_l1 - metric_shift * 0.05,
                psnr=15.0 + rng.uniform(0, 2) + metric_shift * 3.0,
                ssim=0.5 + rng.uniform(0, 0.1) + metric_shift * 0.1,
                lpips=0.2 + rng.uniform(0, 0.05) - metric_shift * 0.02,
                bbox_iou=float(i) / (n - 1),
            )
        )
    return out


def test_records_csv_round_trip(tmp_path):
    records = make_records("m")
    path = tmp_path / "records.csv"
    records_to_csv(records, path)
    back = records_from_csv(path)
    assert back == sorted(records, key=lambda r: r.sample_id)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        records_from_csv(empty)


def test_records_from_images_and_report():
    rng = np.random.default_rng(3)
    refs = {f"s{i}": rand_img(rng) for i in range(3)}
    gens = {k: np.clip(v + 0.05, 0, 1) for k, v in refs.items()}
    ious = {k: 0.5 for k in refs}
    recs = records_from_images(gens, refs, ious, "m")
    assert [r.sample_id for r in recs] == sorted(refs)
    report = make_report(recs, gens, refs)
    assert report.count == 3
    assert math.isfinite(report.fid)
    dumped = json.loads(json.dumps(report.to_dict()))
    assert dumped["means"].keys() == report.means.keys()
    with pytest.raises(ValueError):
        records_from_images({}, refs, ious, "m")


def test_compare_models_directions_and_significance():
    better = make_records("model", metric_shift=1.0)
    worse = make_records("base", metric_shift=0.0)
    rep = compare_models(better, worse)
    assert rep.count == 8
    assert set(rep.tests) == {"l1", "psnr", "ssim", "lpips"}
    assert rep.tests["l1"]["alternative"] == "less"
    assert rep.tests["psnr"]["alternative"] == "greater"
    # the shift is decisive in every metric
    assert set(rep.significant_05) == {"l1", "psnr", "ssim", "lpips"}
    assert rep.mean_delta["psnr"] > 0 and rep.mean_delta["l1"] < 0
    # comparing a model against itself finds nothing
    self_rep = compare_models(make_records("a"), make_records("a"))
    assert self_rep.significant_05 == []
    round_trip = ComparisonReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert round_trip == rep


def test_compare_models_requires_aligned_ids():
    a = make_records("a")
    b = make_records("b")[:-1]
    with pytest.raises(ValueError):
        compare_models(a, b)


def test_normalized_deltas_sign_rules():
    m = MetricRecord("s", "m", l1=0.1, psnr=20.0, ssim=0.8, lpips=0.15, bbox_iou=0.5)
    b = MetricRecord("s", "b", l1=0.2, psnr=18.0, ssim=0.7, lpips=0.20, bbox_iou=0.5)
    d = normalized_deltas(m, b)
    # lower-is-better metrics are negated; PSNR scaled to comparable units
    assert d["l1"] == pytest.approx(0.1)
    assert d["lpips"] == pytest.approx(0.05)
    assert d["psnr"] == pytest.approx(0.02)
    assert d["ssim"] == pytest.approx(0.1)
    assert all(v > 0 for v in d.values())  # every direction improved


def test_iou_binned_improvement_recovers_planted_trend():
    # improvement grows linearly with IoU by construction
    base = make_records("b", n=40, seed=1)
    model = []
    for r in base:
        model.append(
            MetricRecord(
                sample_id=r.sample_id,
                model="m",
                l1=r.l1 - 0.05 * r.bbox_iou,
                psnr=r.psnr + 2.0 * r.bbox_iou,
                ssim=r.ssim + 0.05 * r.bbox_iou,
                lpips=r.lpips - 0.02 * r.bbox_iou,
                bbox_iou=r.bbox_iou,
            )
        )
    out = iou_binned_improvement(model, base, bins=5, n_boot=200, seed=0)
    assert out["edges"] == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], abs=1e-12)
    assert sum(r["count"] for r in out["bins"]) == 40
    assert out["spearman"]["combined"] == pytest.approx(1.0)
    means = [r["metrics"]["combined"]["mean"] for r in out["bins"] if r["count"]]
    assert means == sorted(means)
    # self-comparison is exactly flat at zero
    flat = iou_binned_improvement(base, base, bins=5, n_boot=50, seed=0)
    for row in flat["bins"]:
        if row["count"]:
            assert row["metrics"]["combined"]["mean"] == 0.0


def test_iou_binning_edge_cases():
    base = make_records("b", n=6, seed=2)
    with pytest.raises(ValueError):
        iou_binned_improvement(base, base, bins=[0.1, 0.5, 1.0])  # must start at 0
    out = iou_binned_improvement(base, base, bins=[0.0, 0.5, 1.0], n_boot=50)
    assert len(out["bins"]) == 2
    # iou exactly 1.0 lands in the top bin
    assert out["bins"][-1]["count"] >= 1


def test_line_plot_svg_is_valid_xml(tmp_path):
    path = tmp_path / "plot.svg"
    series = [
        {"label": "a", "x": [0.1, 0.3, 0.5], "y": [0.0, 0.5, None], "err": [0.1, 0.2, None]},
        {"label": "b", "x": [0.1, 0.3], "y": [-0.2, 0.1], "err": None},
    ]
    line_plot_svg(series, path, title="trend", xlabel="iou", ylabel="gain")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    with pytest.raises(ValueError):
        line_plot_svg([{"label": "e", "x": [], "y": []}], tmp_path / "empty.svg")
