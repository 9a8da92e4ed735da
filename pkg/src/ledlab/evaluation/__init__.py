"""Metrics, baselines, the ablation harness and report writers."""
from .ablations import ABLATIONS, AblationRow, parse_ablations, run_ablations
from .baselines import (BASELINES, CenterBaseline, HeuristicBaseline, RandomBaseline, RandomNodeBaseline,
                        extract_patch, make_baseline, ssim, ssim_map)
from .metrics import (MetricsReport, PredictionRecord, accuracy_at, error_cdf, localization_error,
                      make_record, mean_error)
from .predictors import ModelPredictor, evaluate
from .reports import (cdf_svg, format_table, heatmap_svg, read_records_jsonl, read_reports_csv,
                      write_cdf_csv, write_records_jsonl, write_report_bundle, write_reports_csv)

__all__ = [
    "ABLATIONS", "AblationRow", "BASELINES", "CenterBaseline", "HeuristicBaseline", "MetricsReport",
    "ModelPredictor", "PredictionRecord", "RandomBaseline", "RandomNodeBaseline", "accuracy_at",
    "cdf_svg", "error_cdf", "evaluate", "extract_patch", "format_table", "heatmap_svg",
    "localization_error", "make_baseline", "make_record", "mean_error", "parse_ablations",
    "read_records_jsonl", "read_reports_csv", "run_ablations", "ssim", "ssim_map", "write_cdf_csv",
    "write_records_jsonl", "write_report_bundle", "write_reports_csv",
]
