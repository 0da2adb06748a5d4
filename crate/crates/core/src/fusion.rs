//! Adaptive multimodal stream weighting.
//!
//! Each step every stream gets a quality score from its trailing window
//! (availability, smoothness and, for the sparse streams, freshness). Scores
//! go through a tempered softmax and an exponential moving average that is
//! renormalised onto the simplex. A centred-reward reliability update and a
//! Kalman assimilation step ([`kalman`]) complete the module.

pub mod kalman;

use alloc::vec::Vec;

use crate::sensing::StreamSet;
use crate::{bail, Result, SeriesMatrix};

pub use kalman::{assimilate_node, fused_observation, kalman_assimilate, KalmanModel};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FusionConfig {
    /// Trailing window, in columns of each stream.
    pub window: usize,
    /// EMA factor on the previous weights.
    pub beta: f64,
    /// Softmax temperature.
    pub tau: f64,
    /// Freshness decay constants, in steps.
    pub tau_uav: f64,
    pub tau_sat: f64,
    /// Mean absolute step change (°C) that halves the consistency score.
    pub delta_ref: f64,
    /// Kalman process-noise variances for (T_w, T_z) per step, °C².
    pub kalman_q: [f64; 2],
    /// Kalman measurement-noise variance of the fused observation, °C².
    pub kalman_r: f64,
    /// Initial state variance, °C².
    pub kalman_p0: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            window: 6,
            beta: 0.99,
            tau: 0.25,
            tau_uav: 12.0,
            tau_sat: 48.0,
            delta_ref: 1.0,
            kalman_q: [0.05, 0.05],
            kalman_r: 0.36,
            kalman_p0: 1.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            bail!(InvalidConfig, "fusion window must be at least one step");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            bail!(InvalidConfig, "EMA factor must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau_uav > 0.0 && self.tau_sat > 0.0 && self.delta_ref > 0.0) {
            bail!(InvalidConfig, "temperatures, freshness constants and delta_ref must be positive");
        }
        if self.kalman_q.iter().any(|q| *q < 0.0) || !(self.kalman_r > 0.0) || self.kalman_p0 < 0.0 {
            bail!(InvalidConfig, "Kalman variances must be nonnegative (measurement variance positive)");
        }
        Ok(())
    }
}

/// Quality terms behind one stream's score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamQuality {
    /// Non-missing fraction of the window.
    pub availability: f64,
    /// `1 / (1 + mean|diff| / delta_ref)`.
    pub consistency: f64,
    /// `exp(-age / tau)`; 1 for the dense stream.
    pub freshness: f64,
}

impl StreamQuality {
    pub fn score(&self) -> f64 {
        (0.8 * self.availability + 0.2 * self.consistency) * self.freshness
    }
}

const EMPTY: StreamQuality = StreamQuality { availability: 0.0, consistency: 0.5, freshness: 0.0 };

fn window_quality(m: &SeriesMatrix, rows: &[usize], cols: core::ops::Range<usize>, delta_ref: f64) -> (f64, f64) {
    let mut present = 0usize;
    let mut total = 0usize;
    let mut diff_sum = 0.0;
    let mut diff_n = 0usize;
    for &r in rows {
        let row = &m.row(r)[cols.clone()];
        total += row.len();
        present += row.iter().filter(|v| !v.is_nan()).count();
        for pair in row.windows(2) {
            if !pair[0].is_nan() && !pair[1].is_nan() {
                diff_sum += libm::fabs(pair[1] - pair[0]);
                diff_n += 1;
            }
        }
    }
    let q = if total == 0 { 0.0 } else { present as f64 / total as f64 };
    let r = if diff_n == 0 { 0.5 } else { 1.0 / (1.0 + diff_sum / diff_n as f64 / delta_ref) };
    (q, r)
}

fn sparse_quality(m: &SeriesMatrix, idx: &[usize], t: usize, window: usize, tau: f64, delta_ref: f64) -> StreamQuality {
    // last column observed at or before t
    let last = match idx.partition_point(|&i| i <= t) {
        0 => return EMPTY,
        p => p - 1,
    };
    let rows: Vec<usize> = (0..m.rows()).collect();
    let start = (last + 1).saturating_sub(window);
    let (q, r) = window_quality(m, &rows, start..last + 1, delta_ref);
    let age = (t - idx[last]) as f64;
    StreamQuality { availability: q, consistency: r, freshness: libm::exp(-age / tau) }
}

/// Quality terms for IoT, UAV and SAT at global step `t`. IoT availability is
/// measured over the instrumented rows only.
pub fn stream_quality(streams: &StreamSet, t: usize, config: &FusionConfig) -> [StreamQuality; 3] {
    let iot_rows = streams.iot_rows();
    let iot = if t < streams.iot.cols() && !iot_rows.is_empty() {
        let start = (t + 1).saturating_sub(config.window);
        let (q, r) = window_quality(&streams.iot, &iot_rows, start..t + 1, config.delta_ref);
        StreamQuality { availability: q, consistency: r, freshness: 1.0 }
    } else {
        StreamQuality { freshness: 1.0, ..EMPTY }
    };
    let uav = sparse_quality(&streams.uav, &streams.uav_idx, t, config.window, config.tau_uav, config.delta_ref);
    let sat = sparse_quality(&streams.sat, &streams.sat_idx, t, config.window, config.tau_sat, config.delta_ref);
    [iot, uav, sat]
}

/// Scores `[s_iot, s_uav, s_sat]` at step `t`.
pub fn stream_scores(streams: &StreamSet, t: usize, config: &FusionConfig) -> [f64; 3] {
    stream_quality(streams, t, config).map(|q| q.score())
}

/// `softmax((s - max s) / tau)`.
pub fn softmax_weights(scores: [f64; 3], tau: f64) -> [f64; 3] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|s| libm::exp((s - max) / tau));
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

/// One EMA update from `prev` towards `w`, renormalised to sum 1.
pub fn ema_update(prev: [f64; 3], w: [f64; 3], beta: f64) -> [f64; 3] {
    let mixed = [0, 1, 2].map(|i| beta * prev[i] + (1.0 - beta) * w[i]);
    let z: f64 = mixed.iter().sum();
    mixed.map(|v| v / z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    pub w_ema: [f64; 3],
    /// Smoothed weights after each step.
    pub history: Vec<[f64; 3]>,
}

impl FusionState {
    pub fn new() -> Self {
        Self { w_ema: [1.0 / 3.0; 3], history: Vec::new() }
    }

    /// Folds one step of scores into the state.
    pub fn push_scores(&mut self, scores: [f64; 3], config: &FusionConfig) {
        self.w_ema = ema_update(self.w_ema, softmax_weights(scores, config.tau), config.beta);
        self.history.push(self.w_ema);
    }
}

impl Default for FusionState {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs the score -> softmax -> EMA scan over the whole horizon.
pub fn fuse_weights(streams: &StreamSet, config: &FusionConfig) -> Result<FusionState> {
    config.validate()?;
    streams.validate()?;
    let horizon = streams.horizon();
    if horizon == 0 {
        bail!(InvalidInput, "streams cover no time steps");
    }
    let mut state = FusionState::new();
    for t in 0..horizon {
        state.push_scores(stream_scores(streams, t, config), config);
    }
    Ok(state)
}

/// Per-stream reliability weights with learning rate `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlWeights {
    pub w: Vec<f64>,
    pub alpha: f64,
}

/// `w_i += alpha (r_i - mean r)(x_i - mean x)`.
pub fn rl_weight_update(state: &RlWeights, rewards: &[f64], qualities: &[f64]) -> Result<RlWeights> {
    let n = state.w.len();
    if rewards.len() != n || qualities.len() != n {
        bail!(Shape, "rewards and qualities must match the weight count {n}");
    }
    if n == 0 {
        return Ok(state.clone());
    }
    let r_bar = rewards.iter().sum::<f64>() / n as f64;
    let x_bar = qualities.iter().sum::<f64>() / n as f64;
    let w = (0..n)
        .map(|i| state.w[i] + state.alpha * (rewards[i] - r_bar) * (qualities[i] - x_bar))
        .collect();
    Ok(RlWeights { w, alpha: state.alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::StreamSet;

    fn smooth_streams(n: usize, t_len: usize) -> StreamSet {
        let iot = SeriesMatrix::filled(n, t_len, 25.0);
        let uav_idx: Vec<usize> = (0..t_len).collect();
        let sat_idx = uav_idx.clone();
        StreamSet {
            uav: SeriesMatrix::filled(n, t_len, 25.0),
            sat: SeriesMatrix::filled(n, t_len, 25.0),
            iot,
            uav_idx,
            sat_idx,
            sigmas: [0.4, 0.8, 1.2],
        }
    }

    #[test]
    fn symmetric_streams_score_equally_and_stay_uniform() {
        let s = smooth_streams(3, 20);
        let cfg = FusionConfig::default();
        let scores = stream_scores(&s, 10, &cfg);
        assert_eq!(scores[0], scores[1]);
        assert_eq!(scores[1], scores[2]);
        let state = fuse_weights(&s, &cfg).unwrap();
        for w in &state.history {
            for v in w {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn freshness_decays_by_e_at_one_time_constant() {
        let mut s = smooth_streams(2, 40);
        s.uav = SeriesMatrix::filled(2, 2, 25.0);
        s.uav_idx = alloc::vec![0, 5];
        let cfg = FusionConfig::default();
        let q = stream_quality(&s, 5 + cfg.tau_uav as usize, &cfg)[1];
        assert!((q.freshness - libm::exp(-1.0)).abs() < 1e-12);
        let fresh = stream_quality(&s, 5, &cfg)[1];
        assert!((q.score() - fresh.score() * libm::exp(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn missing_iot_window_scores_only_consistency() {
        let mut s = smooth_streams(2, 20);
        // row 0 instrumented early, then silent
        for t in 0..20 {
            s.iot.set(1, t, f64::NAN);
            if t >= 5 {
                s.iot.set(0, t, f64::NAN);
            }
        }
        let cfg = FusionConfig::default();
        let q = stream_quality(&s, 15, &cfg)[0];
        assert_eq!(q.availability, 0.0);
        assert_eq!(q.score(), 0.2 * q.consistency);
        assert_eq!(q.score(), 0.1);
    }

    #[test]
    fn softmax_arithmetic() {
        let w = softmax_weights([1.0, 0.0, 0.0], 1.0);
        let e = libm::exp(1.0);
        assert!((w[0] - e / (e + 2.0)).abs() < 1e-12);
        assert!((w[0] - 0.576).abs() < 1e-3 && (w[1] - 0.212).abs() < 1e-3);
        let after = ema_update([1.0 / 3.0; 3], w, 0.0);
        assert_eq!(after, w);
    }

    #[test]
    fn rl_update_cases() {
        let state = RlWeights { w: alloc::vec![0.3, 0.3, 0.4], alpha: 0.1 };
        let same = rl_weight_update(&state, &[0.2, 0.2, 0.2], &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(same.w, state.w);
        // rewards (0.5, -0.25, -0.25) around 0, qualities (0.2, -0.1, -0.1) around 0
        let next = rl_weight_update(&state, &[0.5, -0.25, -0.25], &[0.2, -0.1, -0.1]).unwrap();
        assert!((next.w[0] - 0.31).abs() < 1e-12);
        assert!(rl_weight_update(&state, &[0.0], &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let s = smooth_streams(1, 3);
        assert!(fuse_weights(&s, &FusionConfig { beta: 1.0, ..Default::default() }).is_err());
        assert!(fuse_weights(&s, &FusionConfig { window: 0, ..Default::default() }).is_err());
    }
}
