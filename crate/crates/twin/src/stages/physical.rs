use hazard_twin_core::district::{generate_district, BuildingType, District};
use hazard_twin_core::scenario::{build_timeline, HazardTimeline};
use hazard_twin_core::sensing::synthesize_streams;
use hazard_twin_core::thermal::{node_seed, simulate_building};
use hazard_twin_core::SeriesMatrix;

use super::{figure_csv, time_cell, Ctx};
use crate::artifacts::{self as art, fmt};
use crate::config::PipelineConfig;
use crate::error::TwinResult;

pub(super) fn generate(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = generate_district(&ctx.config.district, ctx.config.seed)?;
    let timeline = build_timeline(&ctx.config.scenario)?;
    art::write_nodes(&ctx.path(art::NODES), &district)?;
    art::write_timeline(&ctx.path(art::TIME), &timeline)?;
    Ok(vec![art::NODES.into(), art::TIME.into()])
}

/// True indoor temperature of every node, node-major.
pub fn simulate_truth(config: &PipelineConfig, district: &District, timeline: &HazardTimeline) -> TwinResult<SeriesMatrix> {
    let rows = district
        .nodes
        .iter()
        .map(|n| {
            let states = simulate_building(
                config.thermal.get(n.btype),
                timeline,
                &config.truth.mode(n.btype),
                node_seed(config.seed, n.id),
            )?;
            Ok(states.iter().map(|s| s.t_z).collect())
        })
        .collect::<TwinResult<Vec<Vec<f64>>>>()?;
    Ok(SeriesMatrix::from_rows(rows)?)
}

pub(super) fn simulate(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let truth = simulate_truth(ctx.config, &district, &timeline)?;
    art::write_time_by_node(&ctx.path(art::TRUTH), &truth)?;

    // Forcing plus one representative building of each type.
    let reps: Vec<(String, usize)> = BuildingType::ALL
        .iter()
        .filter_map(|&t| district.nodes.iter().find(|n| n.btype == t).map(|n| (format!("T_z {} n{}", t.token(), n.id), n.id)))
        .collect();
    let mut rows = Vec::new();
    for k in 0..timeline.len() {
        let [ti, th] = time_cell(&timeline, k);
        let mut push = |series: &str, v: f64| rows.push(vec![ti.clone(), th.clone(), series.to_string(), fmt(v)]);
        push("T_out", timeline.t_out[k]);
        push("outage", timeline.outage[k]);
        for (label, id) in &reps {
            push(label, truth.get(*id, k));
        }
    }
    let fig = figure_csv(ctx, "fig3_thermal.csv", &["t_index", "time_h", "series", "value"], rows)?;
    Ok(vec![art::TRUTH.into(), fig])
}

pub(super) fn sense(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let truth = art::read_time_by_node(&ctx.path(art::TRUTH))?;
    let streams = synthesize_streams(&truth, &district, &timeline, &ctx.config.sensing, ctx.config.seed)?;
    art::write_streams(ctx.dir, &streams)?;
    Ok([art::IOT, art::UAV, art::UAV_IDX, art::SAT, art::SAT_IDX].map(String::from).to_vec())
}
