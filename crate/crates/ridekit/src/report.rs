//! JSON documents printed by the subcommands. Every type here has a schema
//! under `schemas/`.

use ridekit_core::disc::{Degenerate, TheoremReport};
use ridekit_core::pipeline::{Metrics, SegMode};
use ridekit_core::retinex::LossBreakdown;
use ridekit_core::synth::{AchievedStats, SynthSpec};
use ridekit_core::ImageGrid;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TheoremRow {
    pub index: usize,
    pub rho: Option<f64>,
    pub xi: Option<f64>,
    pub degenerate: Option<Degenerate>,
    pub d_i: f64,
    pub d_l: f64,
    pub d_r: f64,
    pub lhs: f64,
    pub rhs: Option<f64>,
    /// `None` when the factor is unbounded.
    pub bound_factor: Option<f64>,
    pub slack: Option<f64>,
    pub holds: bool,
    pub entangled: bool,
}

impl TheoremRow {
    pub fn new(index: usize, r: &TheoremReport) -> Self {
        Self {
            index,
            rho: r.rho,
            xi: r.xi,
            degenerate: r.degenerate,
            d_i: r.d_i,
            d_l: r.d_l,
            d_r: r.d_r,
            lhs: r.lhs,
            rhs: r.rhs,
            bound_factor: (!r.bound_factor.is_infinite()).then(|| r.bound_factor.value()),
            slack: r.slack,
            holds: r.holds,
            entangled: r.entangled,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremOutput {
    pub count: usize,
    pub all_hold: bool,
    pub eps_r: f64,
    pub rows: Vec<TheoremRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthOutput {
    pub spec: SynthSpec,
    pub achieved: AchievedStats,
    pub theorem: TheoremRow,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeOutput {
    pub input: String,
    pub init_loss: LossBreakdown,
    pub loss: LossBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Mean `|I - L * R|` over all values.
    pub reconstruction_error: f64,
    /// Solved ME term over its value at the initialization.
    pub me_ratio: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MapStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl MapStats {
    pub fn of(g: &ImageGrid) -> Self {
        let d = g.data();
        Self {
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            mean: d.iter().sum::<f64>() / d.len() as f64,
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapOutput {
    pub input: String,
    pub window: usize,
    pub loss: LossBreakdown,
    pub delta_l: MapStats,
    pub delta_r: MapStats,
    pub alpha_l: MapStats,
    pub alpha_r: MapStats,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentOutput {
    pub input: String,
    pub method: SegMode,
    pub threshold_used: f64,
    pub foreground_pixels: usize,
    pub metrics: Option<Metrics>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalLossOutput {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retinex: Option<LossBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empty: Option<bool>,
}
