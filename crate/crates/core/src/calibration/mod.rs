//! Grey-box calibration of per-type 2R2C parameters and an initial-state
//! regressor against the merged observation streams.
//!
//! The objective on a window is `l_seq + lambda_phys * l_phys + l_soft`:
//! an outage-weighted Huber misfit of the closed-loop rollout, the squared
//! wall and zone balance residuals of that rollout (centred differences on
//! the grid), and a quadratic penalty on blackout temperatures outside a
//! plausible band. Gradients with respect to the log-parameters and the
//! initial state come from forward-mode duals; the regressor weights get
//! theirs by backpropagating the initial-state gradient by hand.

mod dual;
mod mlp;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

pub use dual::Dual;
pub use mlp::{InitNet, NetGrad};

use crate::district::{BuildingType, District};
use crate::scalar::Scalar;
use crate::scenario::HazardTimeline;
use crate::sensing::{Stream, StreamSet};
use crate::thermal::{rollout, wall_balance, zone_balance, Rc2Params, Rc2State, StepForcing, MAX_SUBSTEPS, STEP_LAMBDA};
use crate::{bail, rng, stats, Error, Result};

/// Number of calibrated physical parameters per type.
pub const PHYS: usize = 7;
const TYPES: usize = BuildingType::ALL.len();
type WinDual = Dual<{ PHYS + 2 }>;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per epoch.
    pub windows: usize,
    /// Window length in grid steps.
    pub window_len: usize,
    pub huber_delta: f64,
    pub phys_scale: f64,
    pub lambda_phys: f64,
    /// Blackout temperature band, °C, and the weight of its penalty.
    pub soft_lo: f64,
    pub soft_hi: f64,
    pub soft_weight: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub clip_norm: f64,
    /// Draw the windows once and reject steps that raise the loss.
    pub full_batch: bool,
    pub val_fraction: f64,
    /// IoT availability a node needs to be sampled for training.
    pub min_availability: f64,
    /// Below this many points a source is reported as absent.
    pub min_points: usize,
    /// Log-parameters stay within this distance of their initial value.
    pub log_bound: f64,
    /// Steps the outage state and thermostat regime must have held before a
    /// physics residual point.
    pub residual_settle: usize,
    /// Fastest decay rate, 1/h, a calibrated type may reach; `R_wz` is
    /// raised to respect it.
    pub max_stiffness: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            windows: 32,
            window_len: 72,
            huber_delta: 1.0,
            phys_scale: 1.0,
            lambda_phys: 12.0,
            soft_lo: 31.5,
            soft_hi: 35.5,
            soft_weight: 0.0,
            lr: 0.1,
            lr_decay: 0.5,
            decay_every: 333,
            clip_norm: 5.0,
            full_batch: false,
            val_fraction: 0.2,
            min_availability: 0.3,
            min_points: 50,
            log_bound: 4.0,
            residual_settle: 6,
            max_stiffness: 250.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows == 0 || self.window_len < 2 {
            bail!(InvalidConfig, "need at least one window of two or more steps");
        }
        if !(self.huber_delta > 0.0 && self.phys_scale > 0.0 && self.lr > 0.0 && self.clip_norm > 0.0) {
            bail!(InvalidConfig, "huber_delta, phys_scale, lr and clip_norm must be positive");
        }
        if self.lambda_phys < 0.0 || self.soft_weight < 0.0 || self.soft_lo > self.soft_hi {
            bail!(InvalidConfig, "loss weights must be nonnegative and the soft band ordered");
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(0.0..=1.0).contains(&self.min_availability) {
            bail!(InvalidConfig, "val_fraction must lie in [0, 1) and min_availability in [0, 1]");
        }
        if !(self.max_stiffness > 0.0) {
            bail!(InvalidConfig, "max_stiffness must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 || !(self.log_bound > 0.0) {
            bail!(InvalidConfig, "lr_decay must lie in (0, 1], decay_every and log_bound positive");
        }
        Ok(())
    }
}

/// Calibrated model: log-parameters per type plus a log-offset shared by all
/// types, fixed base values (setpoint and solar peak), and the initial-state
/// regressor. Types without training data still move with the shared offset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibParams {
    /// `ln` of `(C_w, C_z, R_wo, R_wz, Q_int, Q_max, db)` per type.
    pub raw: [[f64; PHYS]; TYPES],
    pub shared: [f64; PHYS],
    pub base: [Rc2Params; TYPES],
    pub net: InitNet,
}

impl CalibParams {
    pub fn init(mu: f64, sigma: f64, seed: u64) -> Self {
        let base = BuildingType::ALL.map(Rc2Params::default_for);
        let raw = base.map(|p| to_raw(&p));
        let mut r = rng::substream(seed, rng::CALIBRATION, 2);
        Self { raw, shared: [0.0; PHYS], base, net: InitNet::init(&mut r, mu, sigma) }
    }

    pub fn physical(&self, btype: BuildingType) -> Rc2Params {
        self.physical_with::<f64>(btype, |_, v| v)
    }

    fn physical_with<S: Scalar>(&self, btype: BuildingType, lift: impl Fn(usize, f64) -> S) -> Rc2Params<S> {
        let r = &self.raw[btype.index()];
        let b = &self.base[btype.index()];
        let v = |i: usize| lift(i, r[i] + self.shared[i]).exp();
        Rc2Params {
            c_w: v(0),
            c_z: v(1),
            r_wo: v(2),
            r_wz: v(3),
            q_int: v(4),
            q_max: v(5),
            db: v(6),
            setpoint: S::cst(b.setpoint),
            solar_peak: S::cst(b.solar_peak),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.raw.iter().flatten().chain(&self.shared).copied().collect();
        v.extend(self.net.flatten());
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) {
        for (x, y) in self.raw.iter_mut().flatten().chain(&mut self.shared).zip(v) {
            *x = *y;
        }
        self.net.unflatten(&v[(TYPES + 1) * PHYS..]);
    }

    /// Raises `R_wz` of any type whose fastest decay rate exceeds `cap`
    /// (1/h), or that the capped integrator could not resolve on a `dt` grid.
    fn limit_stiffness(&mut self, cap: f64, dt: f64) {
        let cap = cap.min(0.9 * MAX_SUBSTEPS as f64 * STEP_LAMBDA / dt);
        for t in BuildingType::ALL {
            let p = self.physical(t);
            let excess = p.stiffness(0.0) - cap;
            if excess <= 0.0 {
                continue;
            }
            let g_wz = 1.0 / p.r_wz;
            let allowed = (g_wz - excess / (1.0 / p.c_w + 1.0 / p.c_z)).max(0.05 * g_wz);
            self.raw[t.index()][3] += libm::log(g_wz / allowed);
        }
    }

    /// Closed-loop prediction over the whole timeline from the regressed
    /// initial state at the first step.
    pub fn predict(&self, btype: BuildingType, timeline: &HazardTimeline) -> Vec<Rc2State> {
        let p = self.physical(btype);
        let x0 = self.net.predict(btype, timeline.t_h[0]);
        let n = p.substeps(0.0, timeline.dt_h);
        rollout(&p, timeline, x0, 0, timeline.len() - 1, n)
    }
}

fn to_raw(p: &Rc2Params) -> [f64; PHYS] {
    [p.c_w, p.c_z, p.r_wo, p.r_wz, p.q_int, p.q_max, p.db].map(libm::log)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub l_seq: f64,
    pub l_phys: f64,
    pub l_soft: f64,
    pub total: f64,
    pub lambda_data: f64,
    pub lambda_phys: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

impl SourceMetrics {
    fn from_pairs(pairs: &[(f64, f64)]) -> Option<Self> {
        if pairs.is_empty() {
            return None;
        }
        let (pred, obs): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        Some(Self { rmse: stats::rmse(&pred, &obs), mae: stats::mae(&pred, &obs), count: pairs.len() })
    }
}

/// Per-source and pooled errors on the validation nodes; `None` marks a
/// source with fewer points than the configured minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationMetrics {
    pub iot: Option<SourceMetrics>,
    pub uav: Option<SourceMetrics>,
    pub sat: Option<SourceMetrics>,
    pub pooled: Option<SourceMetrics>,
}

/// Observation per step with IoT taking precedence over UAV over SAT.
pub fn merge_observations(streams: &StreamSet, node: usize, len: usize) -> Vec<Option<f64>> {
    (0..len).map(|t| Stream::ALL.into_iter().find_map(|s| streams.observed_at(s, node, t))).collect()
}

fn huber<S: Scalar>(r: S, delta: f64) -> S {
    let a = if r.value() < 0.0 { -r } else { r };
    if a.value() <= delta {
        (r * r).scale(0.5)
    } else {
        (a - S::cst(0.5 * delta)).scale(delta)
    }
}

/// Sequence misfit and soft-bound penalty of `states`, the rollout over
/// steps `start..=start + states.len() - 1`, against `obs` (indexed
/// globally). The misfit is the mean over observed steps; the penalty the
/// mean over blackout steps. Both are zero when their step set is empty.
pub fn sequence_loss<S: Scalar>(
    states: &[Rc2State<S>],
    obs: &[Option<f64>],
    timeline: &HazardTimeline,
    start: usize,
    config: &TrainConfig,
) -> (S, S) {
    let mut seq = S::cst(0.0);
    let mut n_obs = 0usize;
    let mut soft = S::cst(0.0);
    let mut n_out = 0usize;
    for (i, s) in states.iter().enumerate() {
        let t = start + i;
        let u = timeline.outage[t];
        if let Some(y) = obs[t] {
            seq = seq + huber(s.t_z - S::cst(y), config.huber_delta).scale(1.0 + 0.5 * u);
            n_obs += 1;
        }
        if timeline.is_outage(t) {
            let below = (S::cst(config.soft_lo) - s.t_z).relu();
            let above = (s.t_z - S::cst(config.soft_hi)).relu();
            soft = soft + below * below + above * above;
            n_out += 1;
        }
    }
    if n_obs > 0 {
        seq = seq.scale(1.0 / n_obs as f64);
    }
    if n_out > 0 {
        soft = soft.scale(config.soft_weight / n_out as f64);
    }
    (seq, soft)
}

/// Thermostat regime: 0 off (outage or at or below the setpoint),
/// 1 proportional, 2 saturated.
fn regime(p: &Rc2Params, t_z: f64, outage: bool) -> u8 {
    if outage || t_z <= p.setpoint {
        0
    } else if t_z < p.setpoint + p.db {
        1
    } else {
        2
    }
}

/// Interior steps `k` of a rollout whose zone temperatures `t_z` start at
/// grid step `start`, such that the outage state and the thermostat regime
/// hold from step `k - settle` through `k + 1`. Switches and the fast zone
/// transient they excite are not resolved by a centred difference on the
/// grid, so they stay out of the stencil.
pub fn residual_points(timeline: &HazardTimeline, params: &Rc2Params, t_z: &[f64], start: usize, settle: usize) -> Vec<usize> {
    if t_z.len() < 3 {
        return Vec::new();
    }
    let end = start + t_z.len() - 1;
    let tag = |j: usize| {
        let u = timeline.is_outage(j.min(timeline.len() - 1));
        (u, regime(params, t_z[j - start], u))
    };
    let first = start + settle.max(1);
    (first..end).filter(|&k| (k - settle.max(1)..=k + 1).all(|j| tag(j) == tag(k))).collect()
}

/// Mean of `(R_w/S)² + (R_z/S)²` over `points`, where `R_w` and `R_z` are
/// the wall and zone balance residuals of the rollout `states` (starting at
/// grid step `start`) with time derivatives from centred differences and
/// the balances averaged over the forcing of the two straddled steps.
pub fn physics_residual<S: Scalar>(
    params: &Rc2Params<S>,
    states: &[Rc2State<S>],
    timeline: &HazardTimeline,
    start: usize,
    points: &[usize],
    scale: f64,
) -> Result<S> {
    if points.is_empty() {
        bail!(InvalidInput, "empty residual sample set");
    }
    let solar_peak = params.solar_peak.value();
    let inv2dt = 1.0 / (2.0 * timeline.dt_h);
    let mut acc = S::cst(0.0);
    for &k in points {
        if k <= start || k + 1 >= start + states.len() {
            bail!(InvalidInput, "residual point {k} outside the rollout span");
        }
        let i = k - start;
        let (prev, cur, next) = (&states[i - 1], &states[i], &states[i + 1]);
        // Forcing is held per step, so the stencil straddles steps k-1 and k.
        let (fa, fb) = (StepForcing::at(timeline, k - 1, solar_peak), StepForcing::at(timeline, k, solar_peak));
        let wall = (wall_balance(cur, params, &fa) + wall_balance(cur, params, &fb)).scale(0.5);
        let zone = (zone_balance(cur, params, &fa) + zone_balance(cur, params, &fb)).scale(0.5);
        let r_w = params.c_w * (next.t_w - prev.t_w).scale(inv2dt) - wall;
        let r_z = params.c_z * (next.t_z - prev.t_z).scale(inv2dt) - zone;
        let (r_w, r_z) = (r_w.scale(1.0 / scale), r_z.scale(1.0 / scale));
        acc = acc + r_w * r_w + r_z * r_z;
    }
    Ok(acc.scale(1.0 / points.len() as f64))
}

/// One training window: a node and the first grid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub node: usize,
    pub start: usize,
}

fn window_loss<S: Scalar>(
    p: &Rc2Params<S>,
    x0: Rc2State<S>,
    obs: &[Option<f64>],
    timeline: &HazardTimeline,
    start: usize,
    config: &TrainConfig,
) -> Result<[S; 3]> {
    let end = start + config.window_len;
    let pf = p.map(Scalar::value);
    let states = rollout(p, timeline, x0, start, end, pf.substeps(0.0, timeline.dt_h));
    let (seq, soft) = sequence_loss(&states, obs, timeline, start, config);
    let t_z: Vec<f64> = states.iter().map(|s| s.t_z.value()).collect();
    let points = residual_points(timeline, &pf, &t_z, start, config.residual_settle);
    let phys = if points.is_empty() {
        S::cst(0.0)
    } else {
        physics_residual(p, &states, timeline, start, &points, config.phys_scale)?
    };
    Ok([seq, phys, soft])
}

fn report(parts: [f64; 3], config: &TrainConfig) -> LossReport {
    let [l_seq, l_phys, l_soft] = parts;
    LossReport {
        l_seq,
        l_phys,
        l_soft,
        total: l_seq + config.lambda_phys * l_phys + l_soft,
        lambda_data: 1.0,
        lambda_phys: config.lambda_phys,
    }
}

/// Inputs shared by every loss evaluation of a run.
pub struct Problem<'a> {
    pub district: &'a District,
    pub timeline: &'a HazardTimeline,
    /// Merged observations per node (empty for nodes never sampled).
    pub obs: Vec<Vec<Option<f64>>>,
    pub config: &'a TrainConfig,
}

impl<'a> Problem<'a> {
    pub fn new(district: &'a District, timeline: &'a HazardTimeline, streams: &StreamSet, config: &'a TrainConfig) -> Self {
        let obs = (0..district.len()).map(|n| merge_observations(streams, n, timeline.len())).collect();
        Self { district, timeline, obs, config }
    }

    /// Mean loss over `windows`.
    pub fn loss(&self, params: &CalibParams, windows: &[Window]) -> Result<LossReport> {
        let mut acc = [0.0; 3];
        for w in windows {
            let bt = self.district.nodes[w.node].btype;
            let p = params.physical(bt);
            let x0 = params.net.predict(bt, self.timeline.t_h[w.start]);
            let parts = window_loss(&p, x0, &self.obs[w.node], self.timeline, w.start, self.config)?;
            acc.iter_mut().zip(parts).for_each(|(a, v)| *a += v);
        }
        let n = windows.len().max(1) as f64;
        Ok(report(acc.map(|a| a / n), self.config))
    }

    /// Mean loss over `windows` and its gradient in the
    /// [`CalibParams::flatten`] layout.
    pub fn loss_and_grad(&self, params: &CalibParams, windows: &[Window]) -> Result<(LossReport, Vec<f64>)> {
        let mut acc = [0.0; 3];
        let mut g_raw = [[0.0; PHYS]; TYPES + 1];
        let mut g_net = params.net.zero_grad();
        let lp = self.config.lambda_phys;
        for w in windows {
            let bt = self.district.nodes[w.node].btype;
            let p = params.physical_with::<WinDual>(bt, |i, v| WinDual::var(v, i));
            let (x0, trace) = params.net.forward(bt, self.timeline.t_h[w.start]);
            let x0 = Rc2State { t_w: WinDual::var(x0.t_w, PHYS), t_z: WinDual::var(x0.t_z, PHYS + 1) };
            let parts = window_loss(&p, x0, &self.obs[w.node], self.timeline, w.start, self.config)?;
            let total = parts[0] + parts[1].scale(lp) + parts[2];
            acc.iter_mut().zip(parts).for_each(|(a, v)| *a += v.v);
            for t in [bt.index(), TYPES] {
                g_raw[t].iter_mut().zip(&total.d[..PHYS]).for_each(|(g, d)| *g += d);
            }
            params.net.backward(bt, &trace, [total.d[PHYS], total.d[PHYS + 1]], &mut g_net);
        }
        let n = windows.len().max(1) as f64;
        let mut grad: Vec<f64> = g_raw.iter().flatten().copied().collect();
        grad.extend(g_net.flatten());
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((report(acc.map(|a| a / n), self.config), grad))
    }
}

/// Sensor nodes split into training and validation sets by a seeded shuffle.
pub fn split_nodes(district: &District, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids = district.sensor_ids();
    ids.shuffle(&mut rng::substream(seed, rng::CALIBRATION, 0));
    let n_val = if ids.len() < 2 { 0 } else { libm::ceil(val_fraction * ids.len() as f64 - 1e-9) as usize };
    let val = ids.split_off(ids.len() - n_val.min(ids.len() - 1));
    let (mut train, mut val) = (ids, val);
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// IoT availability of a node: the fraction of steps with an observation.
pub fn iot_availability(streams: &StreamSet, node: usize) -> f64 {
    let row = streams.iot.row(node);
    if row.is_empty() {
        return 0.0;
    }
    row.iter().filter(|v| !v.is_nan()).count() as f64 / row.len() as f64
}

fn sample_windows<R: Rng>(rng: &mut R, problem: &Problem, nodes: &[usize], count: usize) -> Result<Vec<Window>> {
    let last = problem.timeline.len() - 1 - problem.config.window_len;
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count {
            bail!(InvalidInput, "no window with observations could be sampled");
        }
        let node = nodes[rng.random_range(0..nodes.len())];
        let start = rng.random_range(0..=last);
        let obs = &problem.obs[node][start..=start + problem.config.window_len];
        if obs.iter().any(Option::is_some) {
            out.push(Window { node, start });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CalibParams,
    /// Loss after each epoch (on that epoch's windows).
    pub history: Vec<LossReport>,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.t += 1;
        let c1 = 1.0 - libm::pow(b1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(b2, f64::from(self.t));
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / (libm::sqrt(self.v[i] / c2) + eps);
        }
    }
}

/// Fits the calibration on the training split of the sensor nodes.
pub fn train(
    district: &District,
    timeline: &HazardTimeline,
    streams: &StreamSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    streams.validate()?;
    if streams.nodes() != district.len() || streams.iot.cols() != timeline.len() {
        bail!(Shape, "streams do not match the district and timeline");
    }
    if timeline.len() <= config.window_len {
        bail!(InvalidInput, "timeline shorter than one training window");
    }
    let (split_train, val_nodes) = split_nodes(district, config.val_fraction, seed);
    let train_nodes: Vec<usize> =
        split_train.into_iter().filter(|&n| iot_availability(streams, n) >= config.min_availability).collect();
    if train_nodes.is_empty() {
        bail!(InvalidInput, "no well-observed training nodes");
    }
    let problem = Problem::new(district, timeline, streams, config);
    let seen: Vec<f64> = train_nodes.iter().flat_map(|&n| problem.obs[n].iter().flatten().copied()).collect();
    let mu = stats::mean(&seen);
    let sd = libm::sqrt(seen.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / seen.len() as f64);
    let mut params = CalibParams::init(mu, sd.max(1.0), seed);
    let start: Vec<f64> = params.raw.iter().flatten().chain(&params.shared).copied().collect();
    let lo: Vec<f64> = start.iter().map(|r| r - config.log_bound).collect();
    let hi: Vec<f64> = start.iter().map(|r| r + config.log_bound).collect();

    let mut sampler = rng::substream(seed, rng::CALIBRATION, 1);
    let mut theta = params.flatten();
    let mut adam = Adam { m: alloc::vec![0.0; theta.len()], v: alloc::vec![0.0; theta.len()], t: 0 };
    let mut history = Vec::with_capacity(config.epochs);
    let mut windows = sample_windows(&mut sampler, &problem, &train_nodes, config.windows)?;
    let mut backoff = 1.0;
    for epoch in 0..config.epochs {
        if !config.full_batch && epoch > 0 {
            windows = sample_windows(&mut sampler, &problem, &train_nodes, config.windows)?;
        }
        let (loss, mut grad) = problem.loss_and_grad(&params, &windows)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(alloc::format!(
                "calibration diverged at epoch {epoch}: l_seq={} l_phys={} l_soft={}",
                loss.l_seq,
                loss.l_phys,
                loss.l_soft
            )));
        }
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if norm > config.clip_norm {
            grad.iter_mut().for_each(|g| *g *= config.clip_norm / norm);
        }
        let lr = config.lr * libm::pow(config.lr_decay, (epoch / config.decay_every) as f64) * backoff;
        let saved = (theta.clone(), adam.m.clone(), adam.v.clone(), adam.t);
        adam.step(&mut theta, &grad, lr);
        for i in 0..lo.len() {
            theta[i] = theta[i].clamp(lo[i], hi[i]);
        }
        params.unflatten(&theta);
        params.limit_stiffness(config.max_stiffness, timeline.dt_h);
        let projected = params.flatten();
        theta[..lo.len()].copy_from_slice(&projected[..lo.len()]);
        if config.full_batch {
            // Compare with the recorded value so both sides come from `loss`.
            let before = history.last().copied().unwrap_or(loss);
            let after = problem.loss(&params, &windows)?;
            if !(after.total <= before.total) {
                (theta, adam.m, adam.v, adam.t) = saved;
                params.unflatten(&theta);
                backoff *= 0.5;
                history.push(before);
                continue;
            }
            history.push(after);
        } else {
            history.push(loss);
        }
    }
    Ok(TrainOutcome { params, history, train_nodes, val_nodes })
}

/// Full-series errors per source on `nodes`.
pub fn validate(
    params: &CalibParams,
    district: &District,
    timeline: &HazardTimeline,
    streams: &StreamSet,
    nodes: &[usize],
    min_points: usize,
) -> ValidationMetrics {
    let mut pairs: [Vec<(f64, f64)>; 3] = Default::default();
    for &n in nodes {
        let pred = params.predict(district.nodes[n].btype, timeline);
        for (si, stream) in Stream::ALL.into_iter().enumerate() {
            for (t, s) in pred.iter().enumerate() {
                if let Some(y) = streams.observed_at(stream, n, t) {
                    pairs[si].push((s.t_z, y));
                }
            }
        }
    }
    let [iot, uav, sat] = pairs.each_ref().map(|p| SourceMetrics::from_pairs(p).filter(|m| m.count >= min_points));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    for (m, p) in [iot, uav, sat].iter().zip(&pairs) {
        if m.is_some() {
            pooled.extend_from_slice(p);
        }
    }
    ValidationMetrics { iot, uav, sat, pooled: SourceMetrics::from_pairs(&pooled) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_timeline, ScenarioConfig};
    use crate::thermal::{controlled_step, substeps_for};

    fn timeline() -> HazardTimeline {
        build_timeline(&ScenarioConfig::default()).unwrap()
    }

    #[test]
    fn huber_branches() {
        assert!((huber(0.5, 1.0) - 0.125).abs() < 1e-15);
        assert!((huber(-3.0, 1.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn sequence_loss_weights_outage_steps() {
        let tl = timeline();
        let cfg = TrainConfig { soft_weight: 0.0, ..TrainConfig::default() };
        let on = (0..tl.len()).find(|&k| tl.is_outage(k)).unwrap();
        let off = (0..tl.len()).find(|&k| !tl.is_outage(k)).unwrap();
        for (k, want) in [(off, 0.125), (on, 0.1875)] {
            let mut obs = alloc::vec![None; tl.len()];
            obs[k] = Some(30.0);
            let states = [Rc2State { t_w: 30.0, t_z: 30.5 }];
            let (seq, _) = sequence_loss(&states, &obs, &tl, k, &cfg);
            assert!((seq - want).abs() < 1e-12, "{seq} vs {want}");
        }
    }

    #[test]
    fn perfect_fit_has_zero_sequence_loss() {
        let tl = timeline();
        let states: Vec<Rc2State> = (0..10).map(|k| Rc2State { t_w: 30.0, t_z: 28.0 + k as f64 * 0.1 }).collect();
        let obs: Vec<Option<f64>> = (0..tl.len()).map(|k| (k < 10).then_some(28.0 + k as f64 * 0.1)).collect();
        let (seq, _) = sequence_loss(&states, &obs, &tl, 0, &TrainConfig::default());
        assert_eq!(seq, 0.0);
    }

    fn open_loop_residual(dt_min: f64, hours: f64, shift: f64, scale: f64) -> f64 {
        let tl = build_timeline(&ScenarioConfig { dt_min, ..ScenarioConfig::default() }).unwrap();
        let p = Rc2Params { q_max: 0.0, ..Rc2Params::default_for(BuildingType::School) };
        let n = substeps_for(&p, &tl);
        let end = tl.steps_per(hours).unwrap();
        let mut states = alloc::vec![Rc2State { t_w: 28.0, t_z: 26.0 }];
        for k in 0..end {
            let s = *states.last().unwrap();
            states.push(controlled_step(s, &p, &StepForcing::at(&tl, k, p.solar_peak), tl.dt_h, n));
        }
        states.iter_mut().for_each(|s| s.t_z += shift);
        let pts: Vec<usize> = (tl.steps_per(1.0).unwrap()..end).collect();
        physics_residual(&p, &states, &tl, 0, &pts, scale).unwrap()
    }

    #[test]
    fn residual_of_own_rollout_is_second_order() {
        let coarse = open_loop_residual(10.0, 12.0, 0.0, 1.0);
        let fine = open_loop_residual(5.0, 12.0, 0.0, 1.0);
        // Mean squared residual of an O(dt^2) stencil shrinks ~16x.
        assert!(fine < coarse / 10.0, "{coarse} -> {fine}");
        assert!(coarse < 0.01, "{coarse}");
        assert!(open_loop_residual(10.0, 12.0, 1.0, 1.0) > coarse);
        let quarter = open_loop_residual(10.0, 12.0, 0.0, 2.0);
        assert!((quarter - coarse / 4.0).abs() <= 1e-12);
        let tl = timeline();
        let p = Rc2Params::default_for(BuildingType::School);
        assert!(physics_residual(&p, &[Rc2State { t_w: 0.0, t_z: 0.0 }; 3], &tl, 0, &[], 1.0).is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = crate::district::generate_district(&crate::district::DistrictConfig::default(), 42).unwrap();
        let (a, b) = split_nodes(&d, 0.2, 9);
        assert_eq!((a.clone(), b.clone()), split_nodes(&d, 0.2, 9));
        assert_eq!(b.len(), 3);
        assert_eq!(a.len() + b.len(), d.sensor_ids().len());
        assert!(a.iter().all(|x| !b.contains(x)));
    }
}
