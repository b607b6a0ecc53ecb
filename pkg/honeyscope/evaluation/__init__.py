from honeyscope.evaluation.metrics import (
    MatchCounts, MetricsReport, match_detections, compute_metrics, evaluate, pr_table,
)
from honeyscope.evaluation.report import format_table, format_pr_table, write_report
