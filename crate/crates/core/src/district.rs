//! Synthetic building population on the unit square.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{bail, rng, Result};

/// Functional building class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BuildingType {
    MultiFamily,
    SingleFamily,
    Commercial,
    School,
    Grocery,
    Clinic,
}

impl BuildingType {
    pub const ALL: [BuildingType; 6] = [
        BuildingType::MultiFamily,
        BuildingType::SingleFamily,
        BuildingType::Commercial,
        BuildingType::School,
        BuildingType::Grocery,
        BuildingType::Clinic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            BuildingType::MultiFamily => "MF",
            BuildingType::SingleFamily => "SF",
            BuildingType::Commercial => "COM",
            BuildingType::School => "SCH",
            BuildingType::Grocery => "GRO",
            BuildingType::Clinic => "CLI",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.token() == token)
    }

    /// Default share of the building stock.
    pub fn default_fraction(self) -> f64 {
        match self {
            BuildingType::MultiFamily => 0.45,
            BuildingType::SingleFamily => 0.33,
            BuildingType::Commercial => 0.15,
            BuildingType::School => 0.02,
            BuildingType::Grocery => 0.03,
            BuildingType::Clinic => 0.02,
        }
    }

    /// Inclusive occupant range.
    pub fn population_range(self) -> (u32, u32) {
        match self {
            BuildingType::MultiFamily => (20, 60),
            BuildingType::SingleFamily => (2, 5),
            BuildingType::Commercial => (1, 15),
            BuildingType::School => (100, 500),
            BuildingType::Grocery => (20, 80),
            BuildingType::Clinic => (10, 60),
        }
    }

    pub fn vulnerability_baseline(self) -> f64 {
        match self {
            BuildingType::MultiFamily => 0.55,
            BuildingType::SingleFamily => 0.45,
            BuildingType::Commercial => 0.40,
            BuildingType::School => 0.70,
            BuildingType::Grocery => 0.50,
            BuildingType::Clinic => 0.65,
        }
    }

    /// Service priority, 1 = most critical.
    pub fn priority_rank(self) -> u8 {
        match self {
            BuildingType::Clinic => 1,
            BuildingType::School => 2,
            BuildingType::Grocery => 3,
            BuildingType::MultiFamily => 4,
            BuildingType::Commercial => 5,
            BuildingType::SingleFamily => 6,
        }
    }

    /// Minimum count enforced by [`generate_district`].
    pub fn required_minimum(self) -> usize {
        match self {
            BuildingType::School | BuildingType::Clinic => 1,
            BuildingType::Grocery => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub btype: BuildingType,
    pub pop: u32,
    /// Household income, k$.
    pub income: f64,
    pub energy_burden: f64,
    pub vuln: f64,
    pub has_sensor: bool,
    /// Demand proxy: population min-max normalised over the district.
    pub req: f64,
}

impl NodeRecord {
    pub fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct District {
    pub nodes: Vec<NodeRecord>,
    pub seed: u64,
}

impl District {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().map(NodeRecord::xy).collect()
    }

    pub fn count(&self, btype: BuildingType) -> usize {
        self.nodes.iter().filter(|n| n.btype == btype).count()
    }

    pub fn sensor_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.has_sensor).map(|n| n.id).collect()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| f64::from(n.pop)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DistrictConfig {
    pub n: usize,
    /// Type shares in [`BuildingType::ALL`] order.
    pub fractions: [f64; 6],
    pub sensor_fraction: f64,
    pub income_noise_sd: f64,
    pub vuln_noise_sd: f64,
}

impl Default for DistrictConfig {
    fn default() -> Self {
        Self {
            n: 120,
            fractions: BuildingType::ALL.map(BuildingType::default_fraction),
            sensor_fraction: 0.10,
            income_noise_sd: 8.0,
            vuln_noise_sd: 0.05,
        }
    }
}

/// `30 + 70 (0.5 x + 0.5 y)` k$, before noise and clipping.
pub fn income_trend(x: f64, y: f64) -> f64 {
    30.0 + 70.0 * (0.5 * x + 0.5 * y)
}

/// Energy burden from min-max normalised income and position.
pub fn energy_burden(income_norm: f64, x: f64, y: f64) -> f64 {
    let spatial = 0.5 + 0.5 * libm::sin(2.0 * PI * x) * libm::sin(2.0 * PI * y);
    (0.8 * (1.0 - income_norm) + 0.2 * spatial).clamp(0.0, 1.0)
}

fn min_max_normalise(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return alloc::vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn sample_type(fractions: &[f64; 6], u: f64) -> BuildingType {
    let mut acc = 0.0;
    for (t, f) in BuildingType::ALL.into_iter().zip(fractions) {
        acc += f;
        if u < acc {
            return t;
        }
    }
    BuildingType::ALL[5]
}

/// Builds the district: positions, types (patched to satisfy the facility
/// minima), attributes, and the sensor subset.
pub fn generate_district(config: &DistrictConfig, seed: u64) -> Result<District> {
    let sum: f64 = config.fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || config.fractions.iter().any(|f| *f < 0.0) {
        bail!(InvalidConfig, "type fractions must be nonnegative and sum to 1 (got {sum})");
    }
    let required: usize = BuildingType::ALL.iter().map(|t| t.required_minimum()).sum();
    if config.n < required {
        bail!(InvalidConfig, "district needs at least {required} nodes for the facility minima");
    }
    if config.income_noise_sd < 0.0 || config.vuln_noise_sd < 0.0 {
        bail!(InvalidConfig, "noise standard deviations must be nonnegative");
    }

    let mut rng = rng::stream(seed, rng::DISTRICT);
    let n = config.n;
    let xy: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let mut types: Vec<BuildingType> =
        (0..n).map(|_| sample_type(&config.fractions, rng.random::<f64>())).collect();

    // Patch facility minima by converting MultiFamily nodes; fall back to the
    // lowest-priority type that still has a surplus.
    for needed in [BuildingType::School, BuildingType::Grocery, BuildingType::Clinic] {
        while types.iter().filter(|t| **t == needed).count() < needed.required_minimum() {
            let donor_type = donor_type(&types).expect("n >= required minima");
            let donors: Vec<usize> = (0..n).filter(|&i| types[i] == donor_type).collect();
            let pick = donors[rng.random_range(0..donors.len())];
            types[pick] = needed;
        }
    }

    let income_noise = Normal::new(0.0, config.income_noise_sd)
        .map_err(|_| crate::Error::InvalidConfig("income noise".into()))?;
    let vuln_noise = Normal::new(0.0, config.vuln_noise_sd)
        .map_err(|_| crate::Error::InvalidConfig("vulnerability noise".into()))?;

    let mut pops = Vec::with_capacity(n);
    let mut incomes = Vec::with_capacity(n);
    let mut vulns = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = types[i].population_range();
        pops.push(rng.random_range(lo..=hi));
        let (x, y) = xy[i];
        incomes.push((income_trend(x, y) + income_noise.sample(&mut rng)).clamp(20.0, 180.0));
        vulns.push((types[i].vulnerability_baseline() + vuln_noise.sample(&mut rng)).clamp(0.0, 1.0));
    }

    let income_norm = min_max_normalise(&incomes);
    let req = min_max_normalise(&pops.iter().map(|p| f64::from(*p)).collect::<Vec<_>>());
    let nodes = (0..n)
        .map(|i| NodeRecord {
            id: i,
            x: xy[i].0,
            y: xy[i].1,
            btype: types[i],
            pop: pops[i],
            income: incomes[i],
            energy_burden: energy_burden(income_norm[i], xy[i].0, xy[i].1),
            vuln: vulns[i],
            has_sensor: false,
            req: req[i],
        })
        .collect();

    assign_sensors(District { nodes, seed }, config.sensor_fraction, seed)
}

fn donor_type(types: &[BuildingType]) -> Option<BuildingType> {
    let count = |t: BuildingType| types.iter().filter(|x| **x == t).count();
    if count(BuildingType::MultiFamily) > 0 {
        return Some(BuildingType::MultiFamily);
    }
    let mut candidates: Vec<BuildingType> =
        BuildingType::ALL.into_iter().filter(|t| count(*t) > t.required_minimum()).collect();
    candidates.sort_by_key(|t| core::cmp::Reverse(t.priority_rank()));
    candidates.first().copied()
}

/// Number of sensor nodes for a district of `n` nodes.
pub fn sensor_count(n: usize, fraction: f64) -> usize {
    (libm::ceil(fraction * n as f64 - 1e-9) as usize).min(n)
}

/// Flags exactly `ceil(fraction * N)` nodes as instrumented, sampled without
/// replacement. Any previous assignment is discarded.
pub fn assign_sensors(mut district: District, fraction: f64, seed: u64) -> Result<District> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        bail!(InvalidConfig, "sensor fraction must lie in (0, 1], got {fraction}");
    }
    let n = district.len();
    let k = sensor_count(n, fraction);
    let mut rng = rng::stream(seed, rng::SENSORS);
    for node in &mut district.nodes {
        node.has_sensor = false;
    }
    for i in sample(&mut rng, n, k) {
        district.nodes[i].has_sensor = true;
    }
    Ok(district)
}
