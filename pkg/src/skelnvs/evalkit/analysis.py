"""Per-sample metric records, aggregate reports, model comparison with
direction-aware U tests, and the skeleton-quality (IoU-binned improvement)
analysis."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .featnet import FeatureNetSpec, fid_proxy, lpips_proxy
from .metrics import metric_l1, metric_psnr, metric_ssim
from .stats import bootstrap_se, mann_whitney_u, spearman_correlation

# metric -> alternative hypothesis when testing "model improves on baseline"
METRIC_DIRECTIONS = {"l1": "less", "psnr": "greater", "ssim": "greater", "lpips": "less"}
METRIC_NAMES = tuple(METRIC_DIRECTIONS)


@dataclass
class MetricRecord:
    sample_id: str
    model: str
    l1: float
    psnr: float
    ssim: float
    lpips: float
    bbox_iou: float

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass
class MetricReport:
    model: str
    count: int
    means: dict[str, float]
    stds: dict[str, float]
    fid: float

    def to_dict(self) -> dict:
        return asdict(self)


def records_from_images(
    generated: dict[str, np.ndarray],
    references: dict[str, np.ndarray],
    ious: dict[str, float],
    model_tag: str,
    spec: FeatureNetSpec | None = None,
) -> list[MetricRecord]:
    """Score each generated image against its reference; ids are sorted so
    downstream aggregation is order-independent."""
    spec = spec or FeatureNetSpec()
    missing = sorted(set(references) - set(generated))
    if missing:
        raise ValueError(f"generated images missing for {len(missing)} ids, first: {missing[0]}")
    records = []
    for sid in sorted(references):
        gen, ref = generated[sid], references[sid]
        records.append(
            MetricRecord(
                sample_id=sid,
                model=model_tag,
                l1=metric_l1(gen, ref),
                psnr=metric_psnr(gen, ref),
                ssim=metric_ssim(gen, ref),
                lpips=lpips_proxy(gen, ref, spec),
                bbox_iou=float(ious[sid]),
            )
        )
    return records


def make_report(
    records: list[MetricRecord],
    generated: dict[str, np.ndarray] | None = None,
    references: dict[str, np.ndarray] | None = None,
    spec: FeatureNetSpec | None = None,
) -> MetricReport:
    if not records:
        raise ValueError("no records to report on")
    recs = sorted(records, key=lambda r: r.sample_id)
    means = {m: float(np.mean([r.metric(m) for r in recs])) for m in METRIC_NAMES}
    stds = {m: float(np.std([r.metric(m) for r in recs])) for m in METRIC_NAMES}
    fid = float("nan")
    if generated is not None and references is not None:
        ids = sorted(references)
        fid = fid_proxy([generated[i] for i in ids], [references[i] for i in ids], spec)
    return MetricReport(model=recs[0].model, count=len(recs), means=means, stds=stds, fid=fid)


def records_to_csv(records: list[MetricRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "model", "l1", "psnr", "ssim", "lpips", "bbox_iou"])
        for r in sorted(records, key=lambda r: r.sample_id):
            # repr keeps the round-trip exact; these files feed the stats
            writer.writerow(
                [r.sample_id, r.model]
                + [repr(r.metric(m)) for m in ("l1", "psnr", "ssim", "lpips", "bbox_iou")]
            )


def records_from_csv(path) -> list[MetricRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no metric records in {path}")
    try:
        return [
            MetricRecord(
                sample_id=row["sample_id"],
                model=row["model"],
                l1=float(row["l1"]),
                psnr=float(row["psnr"]),
                ssim=float(row["ssim"]),
                lpips=float(row["lpips"]),
                bbox_iou=float(row["bbox_iou"]),
            )
            for row in rows
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed metric records in {path}: {exc}") from exc


def _aligned(records_a: list[MetricRecord], records_b: list[MetricRecord]):
    a = {r.sample_id: r for r in records_a}
    b = {r.sample_id: r for r in records_b}
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))[:3]
        only_b = sorted(set(b) - set(a))[:3]
        raise ValueError(f"record sets differ: only-in-A {only_a}, only-in-B {only_b}")
    ids = sorted(a)
    return ids, a, b


@dataclass
class ComparisonReport:
    model_a: str
    model_b: str
    count: int
    tests: dict[str, dict]          # metric -> {U, p, alternative, method}
    mean_a: dict[str, float]
    mean_b: dict[str, float]
    mean_delta: dict[str, float]    # A - B, raw metric units
    significant_05: list[str] = field(default_factory=list)
    significant_01: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(**d)


def compare_models(records_a: list[MetricRecord], records_b: list[MetricRecord]) -> ComparisonReport:
    """Direction-aware one-sided U tests of A improving on B, per metric:
    lower-better metrics use alternative 'less', higher-better 'greater'."""
    ids, a, b = _aligned(records_a, records_b)
    tests, mean_a, mean_b, delta = {}, {}, {}, {}
    sig05, sig01 = [], []
    for m in METRIC_NAMES:
        va = np.array([a[i].metric(m) for i in ids])
        vb = np.array([b[i].metric(m) for i in ids])
        alt = METRIC_DIRECTIONS[m]
        res = mann_whitney_u(va, vb, alternative=alt)
        tests[m] = {"U": res["U"], "p": res["p"], "alternative": alt, "method": res["method"]}
        mean_a[m] = float(va.mean())
        mean_b[m] = float(vb.mean())
        delta[m] = float(va.mean() - vb.mean())
        if res["p"] < 0.05:
            sig05.append(m)
        if res["p"] < 0.01:
            sig01.append(m)
    return ComparisonReport(
        model_a=records_a[0].model if records_a else "A",
        model_b=records_b[0].model if records_b else "B",
        count=len(ids),
        tests=tests,
        mean_a=mean_a,
        mean_b=mean_b,
        mean_delta=delta,
        significant_05=sig05,
        significant_01=sig01,
    )


def normalized_deltas(rec_model: MetricRecord, rec_base: MetricRecord) -> dict[str, float]:
    """Per-sample improvement of model over baseline, sign/scale normalized:
    L1 and LPIPS deltas are negated (so positive = better), PSNR is scaled by
    0.01, SSIM is used raw."""
    return {
        "l1": -(rec_model.l1 - rec_base.l1),
        "lpips": -(rec_model.lpips - rec_base.lpips),
        "psnr": 0.01 * (rec_model.psnr - rec_base.psnr),
        "ssim": rec_model.ssim - rec_base.ssim,
    }


def iou_binned_improvement(
    records_model: list[MetricRecord],
    records_baseline: list[MetricRecord],
    bins: int | list[float] = 5,
    n_boot: int = 1000,
    seed: int = 0,
) -> dict:
    """Bin aligned samples by skeleton bbox IoU and report, per bin, the mean
    normalized improvement and its bootstrap SE — per metric and combined
    (mean of the four normalized deltas). Also reports Spearman rank
    correlation between bin IoU centers and mean improvements."""
    ids, a, b = _aligned(records_model, records_baseline)
    edges = np.linspace(0.0, 1.0, bins + 1) if isinstance(bins, int) else np.asarray(bins, dtype=np.float64)
    if len(edges) < 2 or not np.all(np.diff(edges) > 0) or edges[0] != 0.0 or edges[-1] != 1.0:
        raise ValueError("bins must partition [0, 1] with increasing edges")

    deltas = {m: [] for m in METRIC_NAMES}
    combined, ious = [], []
    for i in ids:
        d = normalized_deltas(a[i], b[i])
        for m in METRIC_NAMES:
            deltas[m].append(d[m])
        combined.append(float(np.mean(list(d.values()))))
        ious.append(a[i].bbox_iou)
    ious = np.asarray(ious)
    # right-inclusive last bin so iou = 1.0 lands in the top bin
    which = np.clip(np.searchsorted(edges, ious, side="right") - 1, 0, len(edges) - 2)

    table = []
    for k in range(len(edges) - 1):
        mask = which == k
        row: dict = {
            "lo": float(edges[k]),
            "hi": float(edges[k + 1]),
            "center": float((edges[k] + edges[k + 1]) / 2.0),
            "count": int(mask.sum()),
            "metrics": {},
        }
        for m in list(METRIC_NAMES) + ["combined"]:
            vals = np.asarray(combined if m == "combined" else deltas[m])[mask]
            if len(vals) == 0:
                row["metrics"][m] = {"mean": None, "se": None}
            elif len(vals) == 1:
                row["metrics"][m] = {"mean": float(vals[0]), "se": None}
            else:
                row["metrics"][m] = {
                    "mean": float(vals.mean()),
                    "se": bootstrap_se(vals, n_boot=n_boot, seed=seed),
                }
        table.append(row)

    spearman = {}
    for m in list(METRIC_NAMES) + ["combined"]:
        pts = [(r["center"], r["metrics"][m]["mean"]) for r in table if r["metrics"][m]["mean"] is not None]
        if len(pts) >= 2:
            xs, ys = zip(*pts)
            spearman[m] = spearman_correlation(np.array(xs), np.array(ys))
        else:
            spearman[m] = None

    return {"edges": [float(e) for e in edges], "bins": table, "spearman": spearman}
