use std::collections::BTreeMap;

use hazard_twin_core::calibration::{train, validate, CalibParams, LossReport, SourceMetrics, ValidationMetrics};
use hazard_twin_core::district::BuildingType;
use hazard_twin_core::fusion::{assimilate_node, fuse_weights};
use hazard_twin_core::sensing::{Stream, StreamSet};
use hazard_twin_core::thermal::Rc2Params;
use hazard_twin_core::SeriesMatrix;
use serde::{Deserialize, Serialize};

use super::{figure_csv, time_cell, Ctx};
use crate::artifacts::{self as art, fmt};
use crate::error::TwinResult;

pub const FUSION_SERIES: &str = "fusion_weights_series.csv";
pub const FUSION_JSON: &str = "fusion_weights.json";
pub const ASSIMILATED: &str = "assimilated.csv";
pub const CALIB_PARAMS: &str = "calib_params.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamWeights {
    pub iot: f64,
    pub uav: f64,
    pub sat: f64,
}

impl From<[f64; 3]> for StreamWeights {
    fn from(w: [f64; 3]) -> Self {
        Self { iot: w[0], uav: w[1], sat: w[2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub steps: usize,
    pub initial: StreamWeights,
    #[serde(rename = "final")]
    pub last: StreamWeights,
}

fn load_streams(ctx: &Ctx) -> TwinResult<StreamSet> {
    let s = &ctx.config.sensing;
    art::read_streams(ctx.dir, [s.iot_sigma, s.uav_sigma, s.sat_sigma])
}

pub(super) fn fuse(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let streams = load_streams(ctx)?;
    let state = fuse_weights(&streams, &ctx.config.fusion)?;
    let w = &state.history;

    art::write_csv(
        &ctx.path(FUSION_SERIES),
        &["t", "w_iot", "w_uav", "w_sat"].map(String::from),
        w.iter().enumerate().map(|(t, w)| [t.to_string(), fmt(w[0]), fmt(w[1]), fmt(w[2])]),
    )?;
    let report = FusionReport { steps: w.len(), initial: w[0].into(), last: state.w_ema.into() };
    art::write_json(&ctx.path(FUSION_JSON), &report)?;

    let rows = district
        .nodes
        .iter()
        .map(|n| assimilate_node(ctx.config.thermal.get(n.btype), &timeline, &streams, w, n.id, &ctx.config.fusion))
        .collect::<Result<Vec<_>, _>>()?;
    art::write_time_by_node(&ctx.path(ASSIMILATED), &SeriesMatrix::from_rows(rows)?)?;

    let mut fig = Vec::new();
    for (t, wt) in w.iter().enumerate().take(timeline.len()) {
        let [ti, th] = time_cell(&timeline, t);
        for s in Stream::ALL {
            fig.push(vec![ti.clone(), th.clone(), s.name().to_string(), fmt(wt[s as usize])]);
        }
    }
    let fig = figure_csv(ctx, "fig5_fusion_weights.csv", &["t_index", "time_h", "stream", "weight"], fig)?;
    Ok(vec![FUSION_SERIES.into(), FUSION_JSON.into(), ASSIMILATED.into(), fig])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    /// Calibrated physical parameters keyed by type token.
    pub per_type: BTreeMap<String, Rc2Params>,
    pub model: CalibParams,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub validation: ValidationMetrics,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    pub final_loss: Option<LossReport>,
}

pub(super) fn calibrate(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let streams = load_streams(ctx)?;
    let cfg = &ctx.config.calibration;
    let outcome = train(&district, &timeline, &streams, cfg, ctx.config.seed)?;
    let metrics = validate(&outcome.params, &district, &timeline, &streams, &outcome.val_nodes, cfg.min_points);

    let per_type =
        BuildingType::ALL.iter().map(|&t| (t.token().to_string(), outcome.params.physical(t))).collect();
    art::write_json(
        &ctx.path(CALIB_PARAMS),
        &CalibrationFile {
            per_type,
            model: outcome.params.clone(),
            loss_history: outcome.history.iter().map(|l| l.total).collect(),
        },
    )?;
    let file = MetricsFile {
        validation: metrics,
        train_nodes: outcome.train_nodes.clone(),
        val_nodes: outcome.val_nodes.clone(),
        final_loss: outcome.history.last().cloned(),
    };
    art::write_json(&ctx.path(METRICS_JSON), &file)?;
    let row = |name: &str, m: &Option<SourceMetrics>| match m {
        Some(m) => [name.to_string(), fmt(m.rmse), fmt(m.mae), m.count.to_string()],
        None => [name.to_string(), String::new(), String::new(), "0".into()],
    };
    art::write_csv(
        &ctx.path(METRICS_CSV),
        &["source", "rmse", "mae", "count"].map(String::from),
        [row("IoT", &metrics.iot), row("UAV", &metrics.uav), row("SAT", &metrics.sat), row("pooled", &metrics.pooled)],
    )?;
    for (name, m) in [("IoT", &metrics.iot), ("UAV", &metrics.uav), ("SAT", &metrics.sat)] {
        if m.is_none() {
            ctx.warnings.push(format!("{name}: fewer than {} validation points, not reported", cfg.min_points));
        }
    }

    let mut fig = Vec::new();
    for &node in &outcome.val_nodes {
        let pred = outcome.params.predict(district.nodes[node].btype, &timeline);
        for (k, s) in pred.iter().enumerate() {
            let [ti, th] = time_cell(&timeline, k);
            fig.push(vec![ti.clone(), th.clone(), node.to_string(), "model".into(), fmt(s.t_z)]);
            for stream in Stream::ALL {
                if let Some(y) = streams.observed_at(stream, node, k) {
                    fig.push(vec![ti.clone(), th.clone(), node.to_string(), stream.name().into(), fmt(y)]);
                }
            }
        }
    }
    let fig = figure_csv(ctx, "fig4_calibration.csv", &["t_index", "time_h", "node", "series", "value"], fig)?;
    Ok(vec![CALIB_PARAMS.into(), METRICS_JSON.into(), METRICS_CSV.into(), fig])
}
