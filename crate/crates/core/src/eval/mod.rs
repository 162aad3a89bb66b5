//! Depth-prediction metrics and map-level free-space evaluation.

mod depth;
mod freespace;

pub use depth::{depth_metrics, sparsify_ause, sparsification_curves, DepthMetricReport, DELTA_THRESHOLDS};
pub use freespace::{build_gt_map, free_space_report, FreeSpaceReport};

/// Renders rows as CSV with a header line.
pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
