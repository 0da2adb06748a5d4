use std::path::Path;

use hazard_twin_core::district::BuildingType;
use hazard_twin_core::equity::EquityIndex;
use hazard_twin_core::scenario::HazardTimeline;
use hazard_twin_core::thermal::{daily_blackout_peaks, Rc2State};
use hazard_twin_core::SeriesMatrix;
use serde::{Deserialize, Serialize};

use super::estimate::{FusionReport, MetricsFile, StreamWeights, FUSION_JSON, METRICS_JSON};
use super::network::{InterventionReport, INTERVENTION_REPORT};
use crate::artifacts::{self as art, read_json};
use crate::error::TwinResult;
use crate::manifest;

pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionLine {
    pub id: String,
    pub name: String,
    pub d_rpop_pct: Option<f64>,
    pub d_r95_pct: Option<f64>,
    pub d_oh_pct: Option<f64>,
    pub on_staff_front: bool,
    pub on_cost_front: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    /// Lowest and highest daily blackout peak over all schools, °C.
    pub school_blackout_peaks_c: Option<[f64; 2]>,
    pub fusion_initial: StreamWeights,
    pub fusion_final: StreamWeights,
    pub pooled_rmse: Option<f64>,
    pub pooled_mae: Option<f64>,
    pub rmse_iot: Option<f64>,
    pub rmse_uav: Option<f64>,
    pub r_eq: f64,
    pub interventions: Vec<InterventionLine>,
    /// Intervention ids from the largest to the smallest risk reduction.
    pub ranking: Vec<String>,
}

/// Daily blackout peaks of every node of `btype`.
pub fn blackout_peaks(truth: &SeriesMatrix, district: &hazard_twin_core::district::District, timeline: &HazardTimeline, btype: BuildingType) -> Vec<f64> {
    district
        .nodes
        .iter()
        .filter(|n| n.btype == btype)
        .flat_map(|n| {
            let states: Vec<Rc2State> = truth.row(n.id).iter().map(|&t| Rc2State { t_w: t, t_z: t }).collect();
            daily_blackout_peaks(&states, timeline)
        })
        .collect()
}

/// Collects the headline numbers from the artifacts in `dir` into `summary.json`.
pub fn write(dir: &Path) -> TwinResult<Summary> {
    let district = art::read_nodes(&dir.join(art::NODES))?;
    let timeline = art::read_timeline(&dir.join(art::TIME))?;
    let truth = art::read_time_by_node(&dir.join(art::TRUTH))?;
    let peaks = blackout_peaks(&truth, &district, &timeline, BuildingType::School);
    let band = (!peaks.is_empty()).then(|| {
        [peaks.iter().copied().fold(f64::INFINITY, f64::min), peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max)]
    });
    let fusion: FusionReport = read_json(&dir.join(FUSION_JSON))?;
    let metrics: MetricsFile = read_json(&dir.join(METRICS_JSON))?;
    let equity: EquityIndex = read_json(&dir.join(art::EQUITY_SUMMARY))?;
    let report: InterventionReport = read_json(&dir.join(INTERVENTION_REPORT))?;
    let seed = manifest::load(dir)?.stages.get("generate").map_or(0, |r| r.seed);

    let interventions: Vec<InterventionLine> = report
        .outcomes
        .iter()
        .map(|r| InterventionLine {
            id: r.outcome.id.clone(),
            name: r.outcome.name.clone(),
            d_rpop_pct: r.outcome.d_rpop_pct,
            d_r95_pct: r.outcome.d_r95_pct,
            d_oh_pct: r.outcome.d_oh_pct,
            on_staff_front: r.on_staff_front,
            on_cost_front: r.on_cost_front,
        })
        .collect();
    let mut order: Vec<&InterventionLine> = interventions.iter().collect();
    order.sort_by(|a, b| a.d_rpop_pct.unwrap_or(f64::INFINITY).total_cmp(&b.d_rpop_pct.unwrap_or(f64::INFINITY)));
    let v = &metrics.validation;
    let summary = Summary {
        seed,
        school_blackout_peaks_c: band,
        fusion_initial: fusion.initial,
        fusion_final: fusion.last,
        pooled_rmse: v.pooled.map(|m| m.rmse),
        pooled_mae: v.pooled.map(|m| m.mae),
        rmse_iot: v.iot.map(|m| m.rmse),
        rmse_uav: v.uav.map(|m| m.rmse),
        r_eq: equity.r_eq,
        ranking: order.iter().map(|l| l.id.clone()).collect(),
        interventions,
    };
    art::write_json(&dir.join(SUMMARY), &summary)?;
    Ok(summary)
}
