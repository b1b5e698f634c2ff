//! Parallel driver for the cosine sweep, and its CSV and SVG renderings.

use std::fmt::Write as _;

use rayon::prelude::*;
use ridekit_core::pipeline::{check_targets, summarize, sweep_row, SegConfig, SweepResult, SweepRow};
use ridekit_core::synth::{sweep_rho, SynthSpec};

use crate::error::{Error, Result};

/// Same rows as the sequential core sweep, in target order, for any `jobs`.
pub fn run_sweep(
    base: &SynthSpec,
    targets: &[f64],
    per_target: usize,
    cfg: &SegConfig,
    jobs: usize,
) -> Result<SweepResult> {
    check_targets(targets)?;
    if per_target == 0 {
        return Err(Error::Usage("per_target must be >= 1".into()));
    }
    let samples = sweep_rho(base, targets, per_target)?;
    let row = |(i, s)| sweep_row(targets[i / per_target], s, cfg);
    let rows: Vec<SweepRow> = if jobs <= 1 {
        samples.iter().enumerate().map(row).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| samples.par_iter().enumerate().map(row).collect())
    };
    for r in rows.iter().filter(|r| r.failed.is_some()) {
        log::warn!("sweep row at rho {} failed: {}", r.target_rho, r.failed.as_deref().unwrap_or(""));
    }
    Ok(summarize(rows)?)
}

pub fn to_csv(result: &SweepResult) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &result.rows {
        w.serialize(row).expect("rows serialize to CSV");
    }
    w.into_inner().expect("in-memory writer")
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Scatter of achieved cosine against IoU gain, per-target means as a line.
pub fn to_svg(result: &SweepResult) -> String {
    let ok: Vec<&SweepRow> = result.rows.iter().filter(|r| r.failed.is_none()).collect();
    let (y_lo, y_hi) = ok
        .iter()
        .map(|r| r.delta_iou)
        .chain(result.per_target.iter().map(|t| t.mean_delta_iou))
        .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let y_span = (y_hi - y_lo).max(1e-6);
    let px = |rho: f64| PAD + (rho + 1.0) / 2.0 * (W - 2.0 * PAD);
    let py = |d: f64| H - PAD - (d - y_lo) / y_span * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"#,
        b = H - PAD,
        r = W - PAD
    );
    let zero = py(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{zero:.2}" x2="{r}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11" text-anchor="middle">"#);
    for tick in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}">{tick}</text>"#, px(tick), H - PAD + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y_hi:.2}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y_lo:.2}</text>"#, PAD - 4.0, H - PAD + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">achieved rho</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{y}" transform="rotate(-90 14 {y})">delta IoU (gap - composite)</text>"#,
        y = H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20">pearson r = {:.3}, spearman = {:.3}</text>"#,
        W / 2.0,
        result.pearson_r,
        result.spearman_r
    );
    s.push_str("</g>\n");
    s.push_str(r##"<g fill="#1f77b4" fill-opacity="0.7">"##);
    s.push('\n');
    for r in &ok {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, px(r.achieved_rho), py(r.delta_iou));
    }
    s.push_str("</g>\n");
    let points: Vec<String> =
        result.per_target.iter().map(|t| format!("{:.2},{:.2}", px(t.target_rho), py(t.mean_delta_iou))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, points.join(" "));
    s.push_str("</svg>\n");
    s
}
