//! Hazard timeline on a fixed time grid, and the generic hazard-coupling
//! relations: weighted compound stress, logistic hazard transition, and the
//! loss-integral resilience function.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioConfig {
    pub duration_h: f64,
    pub dt_min: f64,
    /// Mean outdoor temperature, °C.
    pub t_mean: f64,
    /// Diurnal amplitude, °C.
    pub t_amplitude: f64,
    /// Phase shift as a fraction of a day.
    pub t_phase: f64,
    pub outage_period_h: f64,
    pub outage_length_h: f64,
    /// Hour at which the first outage starts.
    pub outage_phase_h: f64,
    /// Ventilation (smoke) modulation factor in [0, 1].
    pub smoke: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_h: 72.0,
            dt_min: 10.0,
            t_mean: 32.0,
            t_amplitude: 8.0,
            t_phase: 0.15,
            outage_period_h: 6.0,
            outage_length_h: 4.0,
            outage_phase_h: 0.0,
            smoke: 0.15,
        }
    }
}

impl ScenarioConfig {
    pub fn outdoor_temperature(&self, t_h: f64) -> f64 {
        self.t_mean + self.t_amplitude * libm::sin(2.0 * PI * (t_h / 24.0 - self.t_phase))
    }

    pub fn outage_at(&self, t_h: f64) -> bool {
        crate::scalar::rem_euclid(t_h - self.outage_phase_h, self.outage_period_h) < self.outage_length_h
    }
}

/// Shared time grid with the forcing series every downstream stage reads.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardTimeline {
    pub dt_h: f64,
    pub t_h: Vec<f64>,
    pub t_out: Vec<f64>,
    /// Outage indicator, 0 or 1.
    pub outage: Vec<f64>,
    pub smoke: Vec<f64>,
}

impl HazardTimeline {
    /// Validates array lengths and value domains.
    pub fn new(dt_h: f64, t_h: Vec<f64>, t_out: Vec<f64>, outage: Vec<f64>, smoke: Vec<f64>) -> Result<Self> {
        if !(dt_h > 0.0) {
            bail!(InvalidInput, "timeline step must be positive");
        }
        let n = t_h.len();
        if t_out.len() != n || outage.len() != n || smoke.len() != n {
            bail!(Shape, "timeline arrays differ in length");
        }
        if outage.iter().any(|u| *u != 0.0 && *u != 1.0) {
            bail!(InvalidInput, "outage indicator must be 0 or 1");
        }
        if smoke.iter().any(|s| !(0.0..=1.0).contains(s)) {
            bail!(InvalidInput, "smoke factor must lie in [0, 1]");
        }
        Ok(Self { dt_h, t_h, t_out, outage, smoke })
    }

    pub fn len(&self) -> usize {
        self.t_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_h.is_empty()
    }

    pub fn is_outage(&self, k: usize) -> bool {
        self.outage[k] > 0.5
    }

    pub fn outage_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.outage.iter().filter(|u| **u > 0.5).count() as f64 / self.len() as f64
    }

    /// Steps per `hours` hours, when that is a whole number.
    pub fn steps_per(&self, hours: f64) -> Option<usize> {
        let s = hours / self.dt_h;
        let r = libm::round(s);
        ((s - r).abs() < 1e-9 && r >= 1.0).then_some(r as usize)
    }
}

/// Samples the configured forcing on the `dt` grid.
pub fn build_timeline(config: &ScenarioConfig) -> Result<HazardTimeline> {
    if !(config.duration_h > 0.0) || !(config.dt_min > 0.0) {
        bail!(InvalidConfig, "duration and time step must be positive");
    }
    if !(config.outage_period_h > 0.0) || config.outage_length_h < 0.0 {
        bail!(InvalidConfig, "outage period must be positive and length nonnegative");
    }
    if !(0.0..=1.0).contains(&config.smoke) {
        bail!(InvalidConfig, "smoke factor must lie in [0, 1]");
    }
    let steps = config.duration_h * 60.0 / config.dt_min;
    let n = libm::round(steps);
    if (steps - n).abs() > 1e-9 {
        bail!(InvalidConfig, "time step {} min does not divide {} h", config.dt_min, config.duration_h);
    }
    let n = n as usize;
    let t_h: Vec<f64> = (0..n).map(|k| k as f64 * config.dt_min / 60.0).collect();
    let t_out = t_h.iter().map(|&t| config.outdoor_temperature(t)).collect();
    let outage = t_h.iter().map(|&t| if config.outage_at(t) { 1.0 } else { 0.0 }).collect();
    HazardTimeline::new(config.dt_min / 60.0, t_h, t_out, outage, alloc::vec![config.smoke; n])
}

/// Intensity transform `f_j(H_j, T, S)`.
pub type HazardTransform = fn(f64, f64, f64) -> f64;

pub fn identity_transform(h: f64, _t: f64, _s: f64) -> f64 {
    h
}

/// Weighted combination of concurrent hazard intensities.
#[derive(Debug, Clone)]
pub struct HazardCoupling {
    pub weights: Vec<f64>,
    pub intensities: Vec<f64>,
    pub transforms: Vec<HazardTransform>,
}

impl HazardCoupling {
    pub fn with_identity(weights: Vec<f64>, intensities: Vec<f64>) -> Self {
        let transforms = alloc::vec![identity_transform as HazardTransform; weights.len()];
        Self { weights, intensities, transforms }
    }

    /// Adapts the hazard weights with the centred-reward reinforcement step
    /// used for stream reliabilities. Weights are kept nonnegative.
    pub fn reinforce(&mut self, rewards: &[f64], qualities: &[f64], alpha: f64) -> Result<()> {
        let state = crate::fusion::RlWeights { w: self.weights.clone(), alpha };
        let next = crate::fusion::rl_weight_update(&state, rewards, qualities)?;
        self.weights = next.w.into_iter().map(|w| w.max(0.0)).collect();
        Ok(())
    }
}

/// `H_c = sum_j w_j f_j(H_j, T, S)` with the weights normalised to sum 1.
pub fn compound_stress(coupling: &HazardCoupling, temperature: f64, smoke: f64) -> Result<f64> {
    let n = coupling.weights.len();
    if n == 0 {
        bail!(InvalidInput, "at least one hazard is required");
    }
    if coupling.intensities.len() != n || coupling.transforms.len() != n {
        bail!(Shape, "weights, intensities and transforms differ in length");
    }
    if coupling.weights.iter().any(|w| *w < 0.0) {
        bail!(InvalidInput, "hazard weights must be nonnegative");
    }
    let total: f64 = coupling.weights.iter().sum();
    if !(total > 0.0) {
        bail!(InvalidInput, "hazard weights are all zero");
    }
    Ok(coupling
        .weights
        .iter()
        .zip(&coupling.intensities)
        .zip(&coupling.transforms)
        .map(|((w, h), f)| w / total * f(*h, temperature, smoke))
        .sum())
}

/// Logistic hazard-transition model with coefficients on
/// (1, temperature, stress, time).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionModel {
    pub theta: [f64; 4],
}

pub fn transition_probability(model: &TransitionModel, temperature: f64, stress: f64, t_h: f64) -> f64 {
    let [t0, t1, t2, t3] = model.theta;
    logistic(t0 + t1 * temperature + t2 * stress + t3 * t_h)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceSeries {
    pub l0: f64,
    pub t0: f64,
    /// Grid times strictly after `t0`.
    pub t_h: Vec<f64>,
    pub r: Vec<f64>,
}

/// Resilience `R(t) = 1 - int_{t0}^{t} |L - L0| / (L0 (t - t0))`, integrated
/// with the trapezoidal rule on the grid of `t_h` (linear interpolation of
/// `L` at `t0` when `t0` falls between grid points).
pub fn resilience_trajectory(t_h: &[f64], l: &[f64], l0: f64, t0: f64) -> Result<ResilienceSeries> {
    if !(l0 > 0.0) {
        bail!(InvalidInput, "baseline performance must be positive");
    }
    if t_h.len() != l.len() || t_h.len() < 2 {
        bail!(Shape, "performance series needs at least two samples on its time grid");
    }
    if t0 < t_h[0] || t0 >= t_h[t_h.len() - 1] {
        bail!(InvalidInput, "t0 must lie inside the series and before its end");
    }
    let first = t_h.iter().position(|&t| t > t0).expect("t0 before last sample");
    let start_l = {
        let (ta, tb) = (t_h[first - 1], t_h[first]);
        l[first - 1] + (l[first] - l[first - 1]) * (t0 - ta) / (tb - ta)
    };
    let mut out_t = Vec::with_capacity(t_h.len() - first);
    let mut out_r = Vec::with_capacity(t_h.len() - first);
    let mut integral = 0.0;
    let (mut prev_t, mut prev_dev) = (t0, (start_l - l0).abs());
    for k in first..t_h.len() {
        let dev = (l[k] - l0).abs();
        integral += 0.5 * (prev_dev + dev) * (t_h[k] - prev_t);
        out_t.push(t_h[k]);
        out_r.push(1.0 - integral / (l0 * (t_h[k] - t0)));
        prev_t = t_h[k];
        prev_dev = dev;
    }
    Ok(ResilienceSeries { l0, t0, t_h: out_t, r: out_r })
}
