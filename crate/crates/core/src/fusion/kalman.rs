//! Linear-Gaussian state estimation on `x' = A x + B u + noise`,
//! `y = C x + noise`, discretised per assimilation step.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::FusionConfig;
use crate::scenario::HazardTimeline;
use crate::sensing::{Stream, StreamSet};
use crate::thermal::{hvac_power, solar_gain, Rc2Params, Rc2State};
use crate::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q_proc: DMatrix<f64>,
    pub r_meas: DMatrix<f64>,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KalmanModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q_proc: DMatrix<f64>,
        r_meas: DMatrix<f64>,
        x: DVector<f64>,
        p: DMatrix<f64>,
    ) -> Result<Self> {
        let n = x.len();
        let m = c.nrows();
        if a.shape() != (n, n) || b.nrows() != n || c.ncols() != n {
            bail!(Shape, "state-space matrices disagree with state dimension {n}");
        }
        if q_proc.shape() != (n, n) || p.shape() != (n, n) || r_meas.shape() != (m, m) {
            bail!(Shape, "covariance shapes disagree with the model");
        }
        for (name, cov) in [("process", &q_proc), ("measurement", &r_meas), ("state", &p)] {
            if !is_symmetric(cov) {
                bail!(InvalidInput, "{name} covariance is not symmetric");
            }
        }
        Ok(Self { a, b, c, q_proc, r_meas, x, p })
    }

    /// Linearised 2R2C model with state `[T_w, T_z]`, input `[T_out, Q_zone]`
    /// and the zone temperature as the only observation. The smoke factor
    /// damps the outdoor conductance.
    pub fn from_rc2(params: &Rc2Params, smoke: f64, x0: Rc2State, config: &FusionConfig) -> Self {
        let g_wo = (1.0 - smoke) / params.r_wo;
        let g_wz = 1.0 / params.r_wz;
        let (cw, cz) = (params.c_w, params.c_z);
        let a = DMatrix::from_row_slice(2, 2, &[-(g_wo + g_wz) / cw, g_wz / cw, g_wz / cz, -g_wz / cz]);
        let b = DMatrix::from_row_slice(2, 2, &[g_wo / cw, 0.0, 0.0, 1.0 / cz]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        Self {
            a,
            b,
            c,
            q_proc: DMatrix::from_diagonal(&DVector::from_row_slice(&config.kalman_q)),
            r_meas: DMatrix::from_element(1, 1, config.kalman_r),
            x: DVector::from_row_slice(&[x0.t_w, x0.t_z]),
            p: DMatrix::identity(2, 2) * config.kalman_p0,
        }
    }

    /// `(A_d, B_d)` from repeated first-order steps `I + A dt / n`, with `n`
    /// chosen so each sub-step stays inside the explicit stability region.
    pub fn discretise(&self, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n_state = self.x.len();
        let norm = self.a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let n = (libm::ceil(dt * norm) as usize).max(1);
        let h = dt / n as f64;
        let step = DMatrix::identity(n_state, n_state) + &self.a * h;
        let mut ad = DMatrix::identity(n_state, n_state);
        let mut bd = DMatrix::zeros(n_state, self.b.ncols());
        for _ in 0..n {
            bd += &ad * &self.b * h;
            ad = &step * ad;
        }
        (ad, bd)
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    (m - m.transpose()).iter().all(|v| v.abs() <= 1e-12 * scale)
}

/// Predict over `dt`, then update with `y` if present (predict-only
/// otherwise). The update uses the Joseph form to keep `P` symmetric PSD.
pub fn kalman_assimilate(model: &KalmanModel, u: &DVector<f64>, y: Option<&DVector<f64>>, dt: f64) -> Result<KalmanModel> {
    if u.len() != model.b.ncols() {
        bail!(Shape, "input has length {}, model expects {}", u.len(), model.b.ncols());
    }
    let (ad, bd) = model.discretise(dt);
    let mut next = model.clone();
    next.x = &ad * &model.x + &bd * u;
    next.p = &ad * &model.p * ad.transpose() + &model.q_proc;
    let Some(y) = y else {
        return Ok(next);
    };
    if y.len() != model.c.nrows() {
        bail!(Shape, "observation has length {}, model expects {}", y.len(), model.c.nrows());
    }
    let s = &model.c * &next.p * model.c.transpose() + &model.r_meas;
    let Some(s_inv) = s.clone().try_inverse() else {
        bail!(Numerical, "innovation covariance is singular");
    };
    if s.determinant().abs() < 1e-300 {
        bail!(Numerical, "innovation covariance is singular");
    }
    let gain = &next.p * model.c.transpose() * s_inv;
    let innovation = y - &model.c * &next.x;
    next.x += &gain * innovation;
    let n = model.x.len();
    let i_kc = DMatrix::identity(n, n) - &gain * &model.c;
    next.p = &i_kc * &next.p * i_kc.transpose() + &gain * &model.r_meas * gain.transpose();
    next.p = (&next.p + next.p.transpose()) * 0.5;
    Ok(next)
}

/// Fused zone-temperature observation of `node` at step `t`: the fusion
/// weights renormalised over the streams that observe the node at `t`.
pub fn fused_observation(streams: &StreamSet, weights: &[f64; 3], node: usize, t: usize) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, stream) in Stream::ALL.into_iter().enumerate() {
        if let Some(v) = streams.observed_at(stream, node, t) {
            num += weights[i] * v;
            den += weights[i];
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Filters one node over the timeline and returns the posterior `T_z` mean
/// after each step.
pub fn assimilate_node(
    params: &Rc2Params,
    timeline: &HazardTimeline,
    streams: &StreamSet,
    weights: &[[f64; 3]],
    node: usize,
    config: &FusionConfig,
) -> Result<Vec<f64>> {
    if weights.len() < timeline.len() {
        bail!(Shape, "fusion weights shorter than the timeline");
    }
    let x0 = Rc2State { t_w: params.setpoint, t_z: params.setpoint };
    let mut model = KalmanModel::from_rc2(params, timeline.smoke.first().copied().unwrap_or(0.0), x0, config);
    let mut out = Vec::with_capacity(timeline.len());
    for (t, w) in weights.iter().enumerate().take(timeline.len()) {
        let dt = if t == 0 { 0.0 } else { timeline.dt_h };
        let k = t.saturating_sub(1);
        let q_zone = params.q_int
            + solar_gain(params.solar_peak, timeline.t_h[k])
            + hvac_power(model.x[1], params, timeline.is_outage(k));
        let u = DVector::from_row_slice(&[timeline.t_out[k], q_zone]);
        let y = fused_observation(streams, w, node, t).map(|v| DVector::from_element(1, v));
        model = kalman_assimilate(&model, &u, y.as_ref(), dt)?;
        out.push(model.x[1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(prior_var: f64, r: f64) -> KalmanModel {
        KalmanModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, r),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, prior_var),
        )
        .unwrap()
    }

    #[test]
    fn conjugate_scalar_update() {
        let m = scalar(1.0, 1.0);
        let y = DVector::from_element(1, 1.0);
        let post = kalman_assimilate(&m, &DVector::zeros(1), Some(&y), 1.0).unwrap();
        assert!((post.x[0] - 0.5).abs() < 1e-12);
        assert!((post.p[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_measurement_pins_state() {
        let m = KalmanModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2) * 1e-14,
            DVector::from_row_slice(&[1.0, 2.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let y = DVector::from_row_slice(&[5.0, -3.0]);
        let post = kalman_assimilate(&m, &DVector::zeros(1), Some(&y), 0.1).unwrap();
        assert!((post.x[0] - 5.0).abs() < 1e-9 && (post.x[1] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn predict_only_never_shrinks_covariance() {
        let mut m = scalar(0.7, 1.0);
        m.q_proc = DMatrix::from_element(1, 1, 0.1);
        let next = kalman_assimilate(&m, &DVector::zeros(1), None, 1.0).unwrap();
        assert!(next.p[(0, 0)] >= m.p[(0, 0)]);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let m = scalar(0.0, 0.0);
        let y = DVector::from_element(1, 1.0);
        assert!(kalman_assimilate(&m, &DVector::zeros(1), Some(&y), 1.0).is_err());
    }

    #[test]
    fn shape_checks() {
        let bad = KalmanModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn discretisation_matches_exponential_for_decay() {
        let m = KalmanModel::new(
            DMatrix::from_element(1, 1, -2.0),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let (ad, bd) = m.discretise(0.01);
        assert!((ad[(0, 0)] - libm::exp(-0.02)).abs() < 1e-3);
        assert!((bd[(0, 0)] - (1.0 - libm::exp(-0.02))).abs() < 1e-3);
    }
}
