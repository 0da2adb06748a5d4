//! Virtual observation streams: dense IoT, hourly UAV frames and six-hourly
//! satellite passes, each with Gaussian noise.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::district::District;
use crate::scenario::HazardTimeline;
use crate::{bail, rng, spatial, Result, SeriesMatrix};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SensingConfig {
    pub iot_sigma: f64,
    pub uav_sigma: f64,
    pub sat_sigma: f64,
    pub uav_interval_min: f64,
    pub sat_interval_min: f64,
    /// Nodes (self included) averaged into each satellite pixel; 0 or 1
    /// disables the box average.
    pub sat_box_neighbors: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            iot_sigma: 0.4,
            uav_sigma: 0.8,
            sat_sigma: 1.2,
            uav_interval_min: 60.0,
            sat_interval_min: 360.0,
            sat_box_neighbors: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stream {
    Iot,
    Uav,
    Sat,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Iot, Stream::Uav, Stream::Sat];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Iot => "iot",
            Stream::Uav => "uav",
            Stream::Sat => "sat",
        }
    }
}

/// The three observation streams. IoT is dense over the timeline; UAV and
/// SAT are sparse with one column per entry of their index arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSet {
    pub iot: SeriesMatrix,
    pub uav: SeriesMatrix,
    pub uav_idx: Vec<usize>,
    pub sat: SeriesMatrix,
    pub sat_idx: Vec<usize>,
    /// Noise standard deviation per stream, °C.
    pub sigmas: [f64; 3],
}

impl StreamSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.iot.rows();
        if self.uav.rows() != n || self.sat.rows() != n {
            bail!(Shape, "streams disagree on node count");
        }
        if self.uav.cols() != self.uav_idx.len() || self.sat.cols() != self.sat_idx.len() {
            bail!(Shape, "sparse stream columns and index arrays differ in length");
        }
        for idx in [&self.uav_idx, &self.sat_idx] {
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                bail!(InvalidInput, "sparse index arrays must be strictly increasing");
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.iot.rows()
    }

    /// Global time length covering every stream.
    pub fn horizon(&self) -> usize {
        let last = |idx: &[usize]| idx.last().map_or(0, |i| i + 1);
        self.iot.cols().max(last(&self.uav_idx)).max(last(&self.sat_idx))
    }

    /// Rows of the IoT matrix that carry at least one observation.
    pub fn iot_rows(&self) -> Vec<usize> {
        (0..self.iot.rows()).filter(|&r| self.iot.row(r).iter().any(|v| !v.is_nan())).collect()
    }

    /// Value observed by `stream` for `node` exactly at step `t`.
    pub fn observed_at(&self, stream: Stream, node: usize, t: usize) -> Option<f64> {
        let v = match stream {
            Stream::Iot => (t < self.iot.cols()).then(|| self.iot.get(node, t))?,
            Stream::Uav => self.uav_idx.binary_search(&t).ok().map(|c| self.uav.get(node, c))?,
            Stream::Sat => self.sat_idx.binary_search(&t).ok().map(|c| self.sat.get(node, c))?,
        };
        (!v.is_nan()).then_some(v)
    }

    pub fn sigma(&self, stream: Stream) -> f64 {
        self.sigmas[stream as usize]
    }
}

/// Sample indices `0, s, 2s, ...` for an interval of `interval_min` minutes.
pub fn sample_indices(timeline: &HazardTimeline, interval_min: f64) -> Result<Vec<usize>> {
    let Some(stride) = timeline.steps_per(interval_min / 60.0) else {
        bail!(InvalidConfig, "sampling interval {interval_min} min is not a multiple of the time step");
    };
    Ok((0..timeline.len()).step_by(stride).collect())
}

/// Draws the three streams from the `N x T` truth matrix.
pub fn synthesize_streams(
    truth: &SeriesMatrix,
    district: &District,
    timeline: &HazardTimeline,
    config: &SensingConfig,
    seed: u64,
) -> Result<StreamSet> {
    if truth.rows() != district.len() || truth.cols() != timeline.len() {
        bail!(
            Shape,
            "truth is {}x{}, expected {}x{}",
            truth.rows(),
            truth.cols(),
            district.len(),
            timeline.len()
        );
    }
    let noise = |sd: f64| Normal::new(0.0, sd).map_err(|_| crate::Error::InvalidConfig("noise sigma".into()));
    let (iot_noise, uav_noise, sat_noise) =
        (noise(config.iot_sigma)?, noise(config.uav_sigma)?, noise(config.sat_sigma)?);
    let n = district.len();
    let t_len = timeline.len();

    let mut rng_iot = rng::substream(seed, rng::SENSING, 0);
    let mut iot = SeriesMatrix::missing(n, t_len);
    for node in district.nodes.iter().filter(|node| node.has_sensor) {
        for t in 0..t_len {
            if !timeline.is_outage(t) {
                iot.set(node.id, t, truth.get(node.id, t) + iot_noise.sample(&mut rng_iot));
            }
        }
    }

    let uav_idx = sample_indices(timeline, config.uav_interval_min)?;
    let mut rng_uav = rng::substream(seed, rng::SENSING, 1);
    let mut uav = SeriesMatrix::missing(n, uav_idx.len());
    for (c, &t) in uav_idx.iter().enumerate() {
        for r in 0..n {
            uav.set(r, c, truth.get(r, t) + uav_noise.sample(&mut rng_uav));
        }
    }

    let sat_idx = sample_indices(timeline, config.sat_interval_min)?;
    let neighbourhoods: Vec<Vec<usize>> = if config.sat_box_neighbors > 1 {
        let xy = district.xy();
        (0..n).map(|i| spatial::knn_with_self(&xy, i, config.sat_box_neighbors)).collect()
    } else {
        (0..n).map(|i| alloc::vec![i]).collect()
    };
    let mut rng_sat = rng::substream(seed, rng::SENSING, 2);
    let mut sat = SeriesMatrix::missing(n, sat_idx.len());
    for (c, &t) in sat_idx.iter().enumerate() {
        for (r, hood) in neighbourhoods.iter().enumerate() {
            let field = hood.iter().map(|&j| truth.get(j, t)).sum::<f64>() / hood.len() as f64;
            sat.set(r, c, field + sat_noise.sample(&mut rng_sat));
        }
    }

    Ok(StreamSet {
        iot,
        uav,
        uav_idx,
        sat,
        sat_idx,
        sigmas: [config.iot_sigma, config.uav_sigma, config.sat_sigma],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::district::{generate_district, DistrictConfig};
    use crate::scenario::{build_timeline, ScenarioConfig};

    fn fixture() -> (District, HazardTimeline, SeriesMatrix) {
        let d = generate_district(&DistrictConfig::default(), 4).unwrap();
        let tl = build_timeline(&ScenarioConfig::default()).unwrap();
        let mut truth = SeriesMatrix::filled(d.len(), tl.len(), 0.0);
        for r in 0..d.len() {
            for t in 0..tl.len() {
                truth.set(r, t, 25.0 + r as f64 * 0.01 + (t as f64 * 0.05).sin());
            }
        }
        (d, tl, truth)
    }

    #[test]
    fn noiseless_streams_reproduce_truth() {
        let (d, tl, truth) = fixture();
        let cfg = SensingConfig { iot_sigma: 0.0, uav_sigma: 0.0, sat_sigma: 0.0, sat_box_neighbors: 0, ..Default::default() };
        let s = synthesize_streams(&truth, &d, &tl, &cfg, 1).unwrap();
        s.validate().unwrap();
        for r in 0..d.len() {
            for (c, &t) in s.uav_idx.iter().enumerate() {
                assert_eq!(s.uav.get(r, c), truth.get(r, t));
            }
            for (c, &t) in s.sat_idx.iter().enumerate() {
                assert_eq!(s.sat.get(r, c), truth.get(r, t));
            }
            for t in 0..tl.len() {
                if let Some(v) = s.observed_at(Stream::Iot, r, t) {
                    assert_eq!(v, truth.get(r, t));
                }
            }
        }
    }

    #[test]
    fn column_counts_and_dropout() {
        let (d, tl, truth) = fixture();
        let s = synthesize_streams(&truth, &d, &tl, &SensingConfig::default(), 2).unwrap();
        assert_eq!(s.uav_idx.len(), 72);
        assert_eq!(s.sat_idx.len(), 12);
        assert_eq!(s.horizon(), 432);
        let sensors = d.sensor_ids();
        assert_eq!(s.iot_rows(), sensors);
        for &r in &sensors {
            let missing = s.iot.row(r).iter().filter(|v| v.is_nan()).count() as f64 / tl.len() as f64;
            assert!((missing - tl.outage_fraction()).abs() < 1e-12);
            for t in 0..tl.len() {
                assert_eq!(s.iot.is_observed(r, t), !tl.is_outage(t));
            }
        }
        for node in d.nodes.iter().filter(|n| !n.has_sensor) {
            assert!(s.iot.row(node.id).iter().all(|v| v.is_nan()));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (d, tl, _) = fixture();
        let bad = SeriesMatrix::filled(d.len(), tl.len() - 1, 0.0);
        assert!(synthesize_streams(&bad, &d, &tl, &SensingConfig::default(), 0).is_err());
    }
}
