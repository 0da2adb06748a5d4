//! Equity-adjusted node risk and the population-weighted community index.

use alloc::vec::Vec;

use crate::district::District;
use crate::scenario::HazardTimeline;
use crate::spatial::knn_with_self;
use crate::stats::{mean, percentile_rank, weighted_mean};
use crate::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EquityConfig {
    /// Amplification of sensitivity in the community index.
    pub gamma: f64,
    pub beta_phys: f64,
    pub beta_sens: f64,
    /// Floor of the system exposure.
    pub eps_exp: f64,
    /// Spatial smoothing neighbourhood (self included); 1 disables.
    pub smooth_k: usize,
    pub heat_threshold: f64,
    pub heat_span: f64,
    /// Minimum timeline length for the heat term.
    pub min_heat_steps: usize,
    /// Spread below which the composite counts as constant.
    pub constant_tol: f64,
}

impl Default for EquityConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            beta_phys: 0.6,
            beta_sens: 0.4,
            eps_exp: 0.05,
            smooth_k: 5,
            heat_threshold: 30.0,
            heat_span: 10.0,
            min_heat_steps: 12,
            constant_tol: 1e-9,
        }
    }
}

impl EquityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 || self.beta_phys < 0.0 || self.beta_sens < 0.0 || self.beta_phys + self.beta_sens > 1.0 + 1e-12 {
            bail!(InvalidConfig, "gamma and betas must be nonnegative with beta_phys + beta_sens <= 1");
        }
        if !(0.0..=1.0).contains(&self.eps_exp) || self.smooth_k == 0 || !(self.heat_span > 0.0) {
            bail!(InvalidConfig, "eps_exp must lie in [0, 1], smooth_k >= 1 and heat_span > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeRisk {
    pub id: usize,
    pub exposure: f64,
    /// Ranked physical vulnerability.
    pub v: f64,
    /// Ranked socio-economic sensitivity.
    pub e: f64,
    pub r_node: f64,
}

impl NodeRisk {
    pub fn compose(id: usize, exposure: f64, v: f64, e: f64, config: &EquityConfig) -> Self {
        Self { id, exposure, v, e, r_node: exposure * (config.beta_phys * v + config.beta_sens * e) }
    }
}

/// Mean over each node's `k` nearest neighbours, itself included.
pub fn knn_smooth(xy: &[(f64, f64)], values: &[f64], k: usize) -> Result<Vec<f64>> {
    if xy.len() != values.len() {
        bail!(Shape, "{} coordinates for {} values", xy.len(), values.len());
    }
    if k == 0 || k > values.len() {
        bail!(InvalidInput, "k = {k} out of range for {} nodes", values.len());
    }
    Ok((0..values.len())
        .map(|i| knn_with_self(xy, i, k).iter().map(|&j| values[j]).sum::<f64>() / k as f64)
        .collect())
}

/// District-wide exposure: half the outage duty fraction plus half the
/// normalised mean heat excess, floored at `eps_exp`.
pub fn exposure_sys(timeline: &HazardTimeline, config: &EquityConfig) -> Result<f64> {
    if timeline.is_empty() {
        bail!(InvalidInput, "timeline is empty");
    }
    let outage_frac = timeline.outage.iter().filter(|&&u| u > 0.5).count() as f64 / timeline.len() as f64;
    let heat_norm = if timeline.len() >= config.min_heat_steps {
        let excess: Vec<f64> = timeline.t_out.iter().map(|t| (t - config.heat_threshold).max(0.0)).collect();
        (mean(&excess) / config.heat_span).min(1.0)
    } else {
        0.0
    };
    Ok((0.5 * outage_frac + 0.5 * heat_norm).max(config.eps_exp))
}

/// Ranked (and optionally smoothed then re-ranked) vulnerability and
/// sensitivity per node.
pub fn ranked_factors(district: &District, config: &EquityConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = percentile_rank(&district.nodes.iter().map(|n| n.vuln).collect::<Vec<_>>());
    let mut e = percentile_rank(&district.nodes.iter().map(|n| n.energy_burden).collect::<Vec<_>>());
    if config.smooth_k > 1 {
        let xy = district.xy();
        v = percentile_rank(&knn_smooth(&xy, &v, config.smooth_k)?);
        e = percentile_rank(&knn_smooth(&xy, &e, config.smooth_k)?);
    }
    Ok((v, e))
}

/// Equity-adjusted risk per node.
pub fn node_risks(district: &District, timeline: &HazardTimeline, config: &EquityConfig) -> Result<Vec<NodeRisk>> {
    config.validate()?;
    if district.is_empty() {
        bail!(InvalidInput, "district is empty");
    }
    let exposure = exposure_sys(timeline, config)?;
    let (v, e) = ranked_factors(district, config)?;
    let mut risks: Vec<NodeRisk> =
        (0..district.len()).map(|i| NodeRisk::compose(district.nodes[i].id, exposure, v[i], e[i], config)).collect();
    let r: Vec<f64> = risks.iter().map(|x| x.r_node).collect();
    let spread = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min);
    if spread < config.constant_tol {
        for (x, ranked) in risks.iter_mut().zip(percentile_rank(&r)) {
            x.r_node = ranked;
        }
    }
    Ok(risks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecileRow {
    /// 1 (least at risk) to 10.
    pub decile: usize,
    pub count: usize,
    pub mean: f64,
    pub weighted_mean: f64,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquityIndex {
    pub r_eq: f64,
    pub gamma: f64,
    pub beta_phys: f64,
    pub beta_sens: f64,
    pub deciles: Vec<DecileRow>,
}

/// Decile of each node (1..=10) by ascending `r_node`, ties by position.
pub fn decile_labels(risks: &[NodeRisk]) -> Vec<usize> {
    let n = risks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risks[a].r_node.total_cmp(&risks[b].r_node).then(a.cmp(&b)));
    let mut out = alloc::vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * 10 / n + 1;
    }
    out
}

/// `R_eq = sum P V (1 + gamma E) / sum P` and the decile table.
pub fn community_index(risks: &[NodeRisk], populations: &[f64], config: &EquityConfig) -> Result<EquityIndex> {
    if risks.len() != populations.len() {
        bail!(Shape, "{} risks for {} populations", risks.len(), populations.len());
    }
    if populations.iter().any(|p| *p < 0.0) {
        bail!(InvalidInput, "populations must be nonnegative");
    }
    let total: f64 = populations.iter().sum();
    if !(total > 0.0) {
        bail!(InvalidInput, "total population is zero");
    }
    let r_eq = risks.iter().zip(populations).map(|(r, p)| p * r.v * (1.0 + config.gamma * r.e)).sum::<f64>() / total;
    let labels = decile_labels(risks);
    let deciles = (1..=10)
        .filter_map(|d| {
            let members: Vec<usize> = (0..risks.len()).filter(|&i| labels[i] == d).collect();
            if members.is_empty() {
                return None;
            }
            let r: Vec<f64> = members.iter().map(|&i| risks[i].r_node).collect();
            let p: Vec<f64> = members.iter().map(|&i| populations[i]).collect();
            let pop: f64 = p.iter().sum();
            Some(DecileRow {
                decile: d,
                count: members.len(),
                mean: mean(&r),
                weighted_mean: if pop > 0.0 { weighted_mean(&r, &p) } else { mean(&r) },
                population: pop,
            })
        })
        .collect();
    Ok(EquityIndex { r_eq, gamma: config.gamma, beta_phys: config.beta_phys, beta_sens: config.beta_sens, deciles })
}
