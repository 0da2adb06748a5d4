//! Parameterised interventions on node risk, their scoring, and Pareto
//! fronts over resource and improvement axes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::district::{BuildingType, District};
use crate::equity::{EquityConfig, NodeRisk};
use crate::scenario::HazardTimeline;
use crate::stats::{mean, quantile_linear};
use crate::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "value", rename_all = "snake_case"))]
pub enum Mask {
    /// The highest-risk fraction of nodes (count rounded up).
    TopFraction(f64),
    ByType(BuildingType),
    Custom(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intervention {
    pub id: String,
    pub name: String,
    pub mask: Mask,
    pub exposure_scale: f64,
    pub dv: f64,
    pub de: f64,
    pub staff_hours_per_day: f64,
    pub cost_kusd: f64,
    /// Removes outages on the masked nodes (used by the re-simulated
    /// overheating-hours mode).
    pub islands_power: bool,
}

impl Intervention {
    pub fn identity(id: &str) -> Self {
        Self {
            id: id.into(),
            name: "No action".into(),
            mask: Mask::Custom(Vec::new()),
            exposure_scale: 1.0,
            dv: 0.0,
            de: 0.0,
            staff_hours_per_day: 0.0,
            cost_kusd: 0.0,
            islands_power: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_scale > 0.0 && self.exposure_scale <= 1.0) {
            bail!(InvalidConfig, "{}: exposure scale must lie in (0, 1]", self.id);
        }
        if self.staff_hours_per_day < 0.0 || self.cost_kusd < 0.0 {
            bail!(InvalidConfig, "{}: resources must be nonnegative", self.id);
        }
        if let Mask::TopFraction(f) = self.mask {
            if !(0.0..=1.0).contains(&f) {
                bail!(InvalidConfig, "{}: mask fraction must lie in [0, 1]", self.id);
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn iv(id: &str, name: &str, mask: Mask, s: f64, dv: f64, de: f64, staff: f64, cost: f64, islands: bool) -> Intervention {
    Intervention {
        id: id.into(),
        name: name.into(),
        mask,
        exposure_scale: s,
        dv,
        de,
        staff_hours_per_day: staff,
        cost_kusd: cost,
        islands_power: islands,
    }
}

/// The five reference interventions.
pub fn standard_interventions() -> Vec<Intervention> {
    use Mask::*;
    alloc::vec![
        iv("I1", "Preemptive Cooling Center", TopFraction(0.10), 0.70, -0.05, -0.10, 8.0, 50.0, false),
        iv("I2", "Reactive Opening", TopFraction(0.10), 0.90, 0.0, -0.05, 3.0, 15.0, false),
        iv("I3", "Microgrid (Clinic-First)", ByType(BuildingType::Clinic), 0.50, -0.05, 0.0, 0.0, 120.0, true),
        iv("I4", "Microgrid (Vulnerable Block)", TopFraction(0.15), 0.65, 0.0, 0.0, 0.0, 180.0, true),
        iv("I5", "Targeted Outreach / Retrofits", TopFraction(0.10), 1.0, -0.03, -0.12, 6.0, 30.0, false),
    ]
}

/// Node positions selected by `mask`, resolved against baseline risks.
pub fn resolve_mask(mask: &Mask, risks: &[NodeRisk], district: &District) -> Result<Vec<usize>> {
    let n = risks.len();
    let mut out = match mask {
        Mask::TopFraction(f) => {
            let count = (libm::ceil(f * n as f64 - 1e-9) as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| risks[b].r_node.total_cmp(&risks[a].r_node).then(a.cmp(&b)));
            order.truncate(count);
            order
        }
        Mask::ByType(t) => {
            if district.len() != n {
                bail!(Shape, "district and risk list differ in length");
            }
            (0..n).filter(|&i| district.nodes[i].btype == *t).collect()
        }
        Mask::Custom(ids) => {
            if let Some(bad) = ids.iter().find(|&&i| i >= n) {
                bail!(InvalidInput, "mask index {bad} out of range");
            }
            ids.clone()
        }
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub risks: Vec<NodeRisk>,
    pub mask: Vec<usize>,
    pub warning: Option<String>,
}

/// Applies `iv` to the nodes at `mask`; other nodes are untouched.
pub fn apply_masked(risks: &[NodeRisk], mask: &[usize], iv: &Intervention, config: &EquityConfig) -> Result<Applied> {
    iv.validate()?;
    let mut out = risks.to_vec();
    for &i in mask {
        let r = risks.get(i).ok_or_else(|| crate::Error::InvalidInput(alloc::format!("mask index {i} out of range")))?;
        out[i] = NodeRisk::compose(
            r.id,
            (r.exposure * iv.exposure_scale).clamp(0.0, 1.0),
            (r.v + iv.dv).clamp(0.0, 1.0),
            (r.e + iv.de).clamp(0.0, 1.0),
            config,
        );
    }
    let warning = mask.is_empty().then(|| alloc::format!("{}: empty mask, intervention has no effect", iv.id));
    Ok(Applied { risks: out, mask: mask.to_vec(), warning })
}

pub fn apply_intervention(
    risks: &[NodeRisk],
    district: &District,
    iv: &Intervention,
    config: &EquityConfig,
) -> Result<Applied> {
    let mask = resolve_mask(&iv.mask, risks, district)?;
    apply_masked(risks, &mask, iv, config)
}

/// Hours with outdoor temperature above `threshold`.
pub fn overheating_hours(t_out: &[f64], dt_h: f64, threshold: f64) -> f64 {
    t_out.iter().filter(|&&t| t > threshold).count() as f64 * dt_h
}

/// How the post-intervention overheating hours are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OhMode {
    /// Outdoor hours scaled by the ratio of mean exposures.
    Proxy { threshold: f64 },
    /// Externally computed baseline and post values.
    Given { base: f64, post: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterventionOutcome {
    pub id: String,
    pub name: String,
    /// Percent changes; negative is an improvement, `None` when the
    /// baseline is zero.
    pub d_rpop_pct: Option<f64>,
    pub d_r95_pct: Option<f64>,
    pub d_oh_pct: Option<f64>,
    pub oh_base: f64,
    pub oh_post: f64,
    pub staff_hours_per_day: f64,
    pub cost_kusd: f64,
    /// `d_rpop_pct` per unit cost and per staff hour.
    pub e_cost: Option<f64>,
    pub e_staff: Option<f64>,
    pub mask_size: usize,
}

fn pct(base: f64, post: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (post - base) / base)
}

pub fn eval_metrics(
    baseline: &[NodeRisk],
    post: &[NodeRisk],
    populations: &[f64],
    timeline: &HazardTimeline,
    iv: &Intervention,
    oh: OhMode,
) -> Result<InterventionOutcome> {
    if baseline.len() != post.len() || baseline.len() != populations.len() || baseline.is_empty() {
        bail!(Shape, "baseline, post and populations must be non-empty and of equal length");
    }
    if baseline.iter().zip(post).any(|(a, b)| a.id != b.id) {
        bail!(InvalidInput, "baseline and post node sets differ");
    }
    let pop_sum = |r: &[NodeRisk]| r.iter().zip(populations).map(|(x, p)| p * x.r_node).sum::<f64>();
    let d_rpop_pct = pct(pop_sum(baseline), pop_sum(post));
    let q95 = |r: &[NodeRisk]| quantile_linear(&r.iter().map(|x| x.r_node).collect::<Vec<_>>(), 0.95);
    let d_r95_pct = pct(q95(baseline), q95(post));
    let (oh_base, oh_post) = match oh {
        OhMode::Proxy { threshold } => {
            let base = overheating_hours(&timeline.t_out, timeline.dt_h, threshold);
            let exp = |r: &[NodeRisk]| mean(&r.iter().map(|x| x.exposure).collect::<Vec<_>>());
            let ratio = if exp(baseline) > 0.0 { exp(post) / exp(baseline) } else { 1.0 };
            (base, base * ratio)
        }
        OhMode::Given { base, post } => (base, post),
    };
    let mask_size = baseline.iter().zip(post).filter(|(a, b)| a != b).count();
    let per = |r: f64| d_rpop_pct.filter(|_| r > 0.0).map(|d| d / r);
    Ok(InterventionOutcome {
        id: iv.id.clone(),
        name: iv.name.clone(),
        d_rpop_pct,
        d_r95_pct,
        d_oh_pct: pct(oh_base, oh_post),
        oh_base,
        oh_post,
        staff_hours_per_day: iv.staff_hours_per_day,
        cost_kusd: iv.cost_kusd,
        e_cost: per(iv.cost_kusd),
        e_staff: per(iv.staff_hours_per_day),
        mask_size,
    })
}

/// `a` dominates `b` when it is no worse on both (minimised) axes and
/// strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points (both axes minimised), ascending.
/// Sort-and-sweep: after ordering by the first axis (then the second), a
/// point is on the front iff its second coordinate beats every earlier
/// point's, with exact duplicates kept together.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)));
    let mut front = Vec::new();
    let mut best = f64::INFINITY;
    let mut last: Option<(f64, f64)> = None;
    for &i in &order {
        let p = points[i];
        if p.1 < best || last == Some(p) {
            front.push(i);
            best = best.min(p.1);
            last = Some(p);
        }
    }
    front.sort_unstable();
    front
}

/// Front membership over `(resource, d_rpop_pct)`; outcomes with an
/// undefined change are never on the front.
pub fn outcome_front(outcomes: &[InterventionOutcome], resource: impl Fn(&InterventionOutcome) -> f64) -> Vec<bool> {
    let defined: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].d_rpop_pct.is_some()).collect();
    let pts: Vec<(f64, f64)> =
        defined.iter().map(|&i| (resource(&outcomes[i]), outcomes[i].d_rpop_pct.unwrap_or(0.0))).collect();
    let mut on = alloc::vec![false; outcomes.len()];
    for j in pareto_front(&pts) {
        on[defined[j]] = true;
    }
    on
}
