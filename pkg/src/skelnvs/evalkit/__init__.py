from .metrics import metric_l1, metric_psnr, metric_ssim
from .featnet import FeatureNetSpec, extract_features, lpips_proxy, fid_proxy
from .stats import mann_whitney_u, bootstrap_se, rankdata, spearman_correlation
from .analysis import (
    MetricRecord,
    MetricReport,
    ComparisonReport,
    records_from_images,
    records_from_csv,
    records_to_csv,
    make_report,
    compare_models,
    normalized_deltas,
    iou_binned_improvement,
)
from .svg import line_plot_svg

__all__ = [
    "ComparisonReport",
    "FeatureNetSpec",
    "MetricRecord",
    "MetricReport",
    "bootstrap_se",
    "compare_models",
    "extract_features",
    "fid_proxy",
    "iou_binned_improvement",
    "line_plot_svg",
    "lpips_proxy",
    "make_report",
    "mann_whitney_u",
    "metric_l1",
    "metric_psnr",
    "metric_ssim",
    "normalized_deltas",
    "rankdata",
    "records_from_csv",
    "records_from_images",
    "records_to_csv",
    "spearman_correlation",
]
