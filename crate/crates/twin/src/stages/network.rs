use hazard_twin_core::affiliation::{build_knn_graph, centrality_and_criticals, grl_update};
use hazard_twin_core::district::District;
use hazard_twin_core::equity::{community_index, node_risks, EquityConfig, NodeRisk};
use hazard_twin_core::intervention::{apply_intervention, eval_metrics, outcome_front, InterventionOutcome, OhMode};
use hazard_twin_core::scenario::HazardTimeline;
use hazard_twin_core::thermal::{node_seed, simulate_building};
use hazard_twin_core::SeriesMatrix;
use serde::{Deserialize, Serialize};

use super::{figure_csv, simulate_truth, Ctx};
use crate::artifacts::{self as art, fmt, parse_f64};
use crate::config::PipelineConfig;
use crate::error::{TwinError, TwinResult};

pub const GRAPH_REPORT: &str = "graph_report.json";
pub const EDGES: &str = "edges.csv";
pub const INTERVENTION_TABLE: &str = "intervention_table.csv";
pub const INTERVENTION_REPORT: &str = "intervention_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCentrality {
    pub id: usize,
    pub betweenness: f64,
    pub closeness: f64,
    pub eigenvector: f64,
    pub crit_score: f64,
    pub community: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub sigma: f64,
    pub edges: usize,
    pub modularity: f64,
    pub communities: usize,
    pub community_top: Vec<Vec<usize>>,
    pub global_top: Vec<usize>,
    pub nodes: Vec<NodeCentrality>,
}

pub(super) fn graph(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let cfg = &ctx.config.graph;
    let initial = build_knn_graph(&district, cfg)?;
    if !initial.is_connected() {
        return Err(TwinError::Config(format!("the {}-nearest-neighbour graph is disconnected; raise graph.k", cfg.k)));
    }
    let g = grl_update(&initial, &district, &timeline, cfg)?;
    let rep = centrality_and_criticals(&g, &district, cfg)?;

    art::write_csv(
        &ctx.path(EDGES),
        &["u", "v", "d", "w0", "w", "gain"].map(String::from),
        g.edges.iter().zip(&rep.edge_gain).map(|(e, gain)| {
            [e.u.to_string(), e.v.to_string(), fmt(e.d), fmt(e.w0), fmt(e.w), fmt(*gain)]
        }),
    )?;
    let nodes = (0..g.n)
        .map(|i| NodeCentrality {
            id: i,
            betweenness: rep.betweenness[i],
            closeness: rep.closeness[i],
            eigenvector: rep.eigenvector[i],
            crit_score: rep.crit_score[i],
            community: rep.community[i],
        })
        .collect();
    art::write_json(
        &ctx.path(GRAPH_REPORT),
        &GraphReport {
            sigma: g.sigma,
            edges: g.edges.len(),
            modularity: rep.modularity,
            communities: rep.community_top.len(),
            community_top: rep.community_top.clone(),
            global_top: rep.global_top.clone(),
            nodes,
        },
    )?;
    Ok(vec![EDGES.into(), GRAPH_REPORT.into()])
}

const EQUITY_HEADER: [&str; 5] = ["id", "exposure", "V", "E", "r_node"];

pub(super) fn equity(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let cfg = &ctx.config.equity;
    let risks = node_risks(&district, &timeline, cfg)?;
    let index = community_index(&risks, &district.populations(), cfg)?;
    art::write_csv(
        &ctx.path(art::EQUITY_NODES),
        &EQUITY_HEADER.map(String::from),
        risks.iter().map(|r| [r.id.to_string(), fmt(r.exposure), fmt(r.v), fmt(r.e), fmt(r.r_node)]),
    )?;
    art::write_json(&ctx.path(art::EQUITY_SUMMARY), &index)?;
    let fig = figure_csv(
        ctx,
        "fig8_deciles.csv",
        &["decile", "count", "mean", "weighted_mean", "population"],
        index.deciles.iter().map(|d| {
            [d.decile.to_string(), d.count.to_string(), fmt(d.mean), fmt(d.weighted_mean), fmt(d.population)]
        }),
    )?;
    Ok(vec![art::EQUITY_NODES.into(), art::EQUITY_SUMMARY.into(), fig])
}

/// Reads `equity_per_node.csv` back into risk records.
pub fn read_equity_nodes(path: &std::path::Path) -> TwinResult<Vec<NodeRisk>> {
    let (head, rows) = art::read_csv(path)?;
    if head != EQUITY_HEADER {
        return Err(TwinError::artifact(path, format!("expected header {}", EQUITY_HEADER.join(","))));
    }
    rows.iter()
        .map(|r| {
            let id = r[0].trim().parse().map_err(|_| TwinError::artifact(path, format!("bad id {:?}", r[0])))?;
            Ok(NodeRisk {
                id,
                exposure: parse_f64(&r[1], path)?,
                v: parse_f64(&r[2], path)?,
                e: parse_f64(&r[3], path)?,
                r_node: parse_f64(&r[4], path)?,
            })
        })
        .collect()
}

/// Minimal frame used when no equity artifacts exist: every factor at 0.5.
pub fn fallback_risks(district: &District, config: &EquityConfig) -> Vec<NodeRisk> {
    district.nodes.iter().map(|n| NodeRisk::compose(n.id, 0.5, 0.5, 0.5, config)).collect()
}

/// District mean of the hours each building spends above `threshold`.
pub fn indoor_overheating_hours(truth: &SeriesMatrix, dt_h: f64, threshold: f64) -> f64 {
    if truth.rows() == 0 {
        return 0.0;
    }
    let total: usize = truth.iter_rows().map(|r| r.iter().filter(|&&t| t > threshold).count()).sum();
    total as f64 * dt_h / truth.rows() as f64
}

/// Indoor overheating hours with the outages lifted on `islanded` nodes.
fn islanded_overheating(
    config: &PipelineConfig,
    district: &District,
    timeline: &HazardTimeline,
    base: &SeriesMatrix,
    islanded: &[usize],
) -> TwinResult<f64> {
    let mut grid_up = timeline.clone();
    grid_up.outage.iter_mut().for_each(|u| *u = 0.0);
    let mut post = base.clone();
    for &i in islanded {
        let n = &district.nodes[i];
        let states = simulate_building(config.thermal.get(n.btype), &grid_up, &config.truth.mode(n.btype), node_seed(config.seed, n.id))?;
        for (k, s) in states.iter().enumerate() {
            post.set(i, k, s.t_z);
        }
    }
    Ok(indoor_overheating_hours(&post, timeline.dt_h, config.intervention.oh_threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutcome {
    #[serde(flatten)]
    pub outcome: InterventionOutcome,
    pub on_staff_front: bool,
    pub on_cost_front: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    /// "proxy" or "resimulated".
    pub oh_mode: String,
    pub fallback_frame: bool,
    pub outcomes: Vec<RankedOutcome>,
}

pub(super) fn intervene(ctx: &mut Ctx) -> TwinResult<Vec<String>> {
    let config = ctx.config;
    let district = art::read_nodes(&ctx.path(art::NODES))?;
    let timeline = art::read_timeline(&ctx.path(art::TIME))?;
    let equity_path = ctx.path(art::EQUITY_NODES);
    let fallback = !equity_path.is_file();
    let baseline = if fallback {
        ctx.warnings.push("equity artifacts absent; using the V = E = exposure = 0.5 frame".into());
        fallback_risks(&district, &config.equity)
    } else {
        read_equity_nodes(&equity_path)?
    };
    if baseline.len() != district.len() {
        return Err(TwinError::artifact(equity_path, "node count differs from nodes.csv"));
    }
    let populations = district.populations();
    let threshold = config.intervention.oh_threshold;
    let indoor = if config.intervention.resimulate_oh {
        let truth = simulate_truth(config, &district, &timeline)?;
        Some((indoor_overheating_hours(&truth, timeline.dt_h, threshold), truth))
    } else {
        None
    };

    let mut outcomes = Vec::new();
    let mut warnings = Vec::new();
    for iv in &config.intervention.catalogue {
        let applied = apply_intervention(&baseline, &district, iv, &config.equity)?;
        let oh = match &indoor {
            None => OhMode::Proxy { threshold },
            Some((base, truth)) if iv.islands_power => {
                OhMode::Given { base: *base, post: islanded_overheating(config, &district, &timeline, truth, &applied.mask)? }
            }
            Some((base, _)) => {
                let mean_exp = |r: &[NodeRisk]| r.iter().map(|x| x.exposure).sum::<f64>() / r.len() as f64;
                let ratio = if mean_exp(&baseline) > 0.0 { mean_exp(&applied.risks) / mean_exp(&baseline) } else { 1.0 };
                OhMode::Given { base: *base, post: base * ratio }
            }
        };
        outcomes.push(eval_metrics(&baseline, &applied.risks, &populations, &timeline, iv, oh)?);
        if let Some(w) = &applied.warning {
            ctx.warnings.push(w.clone());
        }
        warnings.push(applied.warning);
    }
    let staff = outcome_front(&outcomes, |o| o.staff_hours_per_day);
    let cost = outcome_front(&outcomes, |o| o.cost_kusd);
    let ranked: Vec<RankedOutcome> = outcomes
        .into_iter()
        .zip(warnings)
        .enumerate()
        .map(|(i, (outcome, warning))| RankedOutcome { outcome, on_staff_front: staff[i], on_cost_front: cost[i], warning })
        .collect();

    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    art::write_csv(
        &ctx.path(INTERVENTION_TABLE),
        &[
            "id",
            "name",
            "d_rpop_pct",
            "d_r95_pct",
            "d_oh_pct",
            "staff_hours",
            "cost_kusd",
            "on_staff_front",
            "on_cost_front",
        ]
        .map(String::from),
        ranked.iter().map(|r| {
            let o = &r.outcome;
            [
                o.id.clone(),
                o.name.clone(),
                opt(o.d_rpop_pct),
                opt(o.d_r95_pct),
                opt(o.d_oh_pct),
                fmt(o.staff_hours_per_day),
                fmt(o.cost_kusd),
                r.on_staff_front.to_string(),
                r.on_cost_front.to_string(),
            ]
        }),
    )?;
    let oh_mode = if indoor.is_some() { "resimulated" } else { "proxy" };
    art::write_json(
        &ctx.path(INTERVENTION_REPORT),
        &InterventionReport { oh_mode: oh_mode.into(), fallback_frame: fallback, outcomes: ranked.clone() },
    )?;
    let mut fig = Vec::new();
    for r in &ranked {
        let o = &r.outcome;
        for (axis, resource, on) in [("staff", o.staff_hours_per_day, r.on_staff_front), ("cost", o.cost_kusd, r.on_cost_front)] {
            fig.push([o.id.clone(), axis.to_string(), fmt(resource), opt(o.d_rpop_pct), on.to_string()]);
        }
    }
    let fig = figure_csv(ctx, "fig9_pareto.csv", &["id", "axis", "resource", "d_rpop_pct", "on_front"], fig)?;
    Ok(vec![INTERVENTION_TABLE.into(), INTERVENTION_REPORT.into(), fig])
}
