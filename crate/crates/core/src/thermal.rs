//! Forward building physics.
//!
//! The zone model is a two-resistance, two-capacitance (2R2C) network with a
//! wall node `T_w` and a zone-air node `T_z`:
//!
//! ```text
//! C_w dT_w/dt = (T_out - T_w) / R_wo + (T_z - T_w) / R_wz
//! C_z dT_z/dt = (T_w - T_z) / R_wz + Q_int + Q_sol + Q_hvac
//! ```
//!
//! Smoke scales the outdoor conductance `1/R_wo` by `(1 - smoke)`, cooling is
//! lost whenever the outage indicator is set, and time integration is
//! explicit midpoint RK2 with the forcing held constant over each grid step.
//! The module also carries three side models: a convective-radiative surface
//! flux, a single-zone PM2.5 mass balance, and an exponential damage law.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_distr::{Distribution, Normal, Uniform};

use crate::district::BuildingType;
use crate::scalar::Scalar;
use crate::scenario::HazardTimeline;
use crate::{bail, rng, Result};

pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;

/// 2R2C parameters. Capacitances in kWh/°C, resistances in °C/kW, powers in kW.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rc2Params<S = f64> {
    pub c_w: S,
    pub c_z: S,
    pub r_wo: S,
    pub r_wz: S,
    pub q_int: S,
    /// Maximum cooling power (positive number, applied with negative sign).
    pub q_max: S,
    /// Proportional band of the thermostat, °C.
    pub db: S,
    pub setpoint: S,
    pub solar_peak: S,
}

pub const MAX_SUBSTEPS: usize = 1600;
/// Largest `h * lambda_max` an RK2 substep may take.
pub const STEP_LAMBDA: f64 = 0.125;

impl Rc2Params<f64> {
    /// Stand-in parameters per building type, chosen so that the default
    /// heat-wave forcing yields afternoon blackout peaks in the low 30s °C.
    pub fn default_for(btype: BuildingType) -> Self {
        let (c_w, c_z, r_wo, r_wz, q_int, solar_peak) = match btype {
            BuildingType::MultiFamily => (9.0, 2.0, 0.50, 0.10, 1.5, 1.0),
            BuildingType::SingleFamily => (6.0, 1.2, 0.70, 0.15, 0.6, 0.6),
            BuildingType::Commercial => (8.0, 2.0, 0.45, 0.08, 2.5, 1.5),
            BuildingType::School => (12.0, 2.5, 0.55, 0.12, 1.5, 1.0),
            BuildingType::Grocery => (10.0, 2.5, 0.40, 0.08, 3.0, 1.5),
            BuildingType::Clinic => (15.0, 3.0, 0.60, 0.10, 2.0, 1.0),
        };
        let mut p = Self { c_w, c_z, r_wo, r_wz, q_int, q_max: 0.0, db: 0.5, setpoint: 24.0, solar_peak };
        p.q_max = p.design_cooling_load(40.0, 0.15) * 2.0;
        p
    }

    /// Steady cooling load that holds the setpoint at outdoor temperature
    /// `t_out` with the given smoke factor.
    pub fn design_cooling_load(&self, t_out: f64, smoke: f64) -> f64 {
        let r_path = self.r_wo / (1.0 - smoke) + self.r_wz;
        ((t_out - self.setpoint) / r_path + self.q_int + self.solar_peak).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.c_w, self.c_z, self.r_wo, self.r_wz];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            bail!(InvalidInput, "capacitances and resistances must be positive and finite");
        }
        if self.q_max < 0.0 || self.db < 0.0 {
            bail!(InvalidInput, "cooling capacity and deadband must be nonnegative");
        }
        Ok(())
    }

    /// Upper bound on the fastest decay rate, 1/h: the Gershgorin bound of
    /// the passive network plus the thermostat loop gain.
    pub fn stiffness(&self, smoke: f64) -> f64 {
        let g_wo = (1.0 - smoke) / self.r_wo;
        let g_wz = 1.0 / self.r_wz;
        let mut lambda = (g_wo + g_wz) / self.c_w + g_wz / self.c_z;
        if self.db > 0.0 {
            lambda += self.q_max / (self.db * self.c_z);
        }
        lambda
    }

    /// Explicit substeps per grid step of `dt` hours that keep
    /// `h * lambda_max <= STEP_LAMBDA`, capped at [`MAX_SUBSTEPS`].
    pub fn substeps(&self, smoke: f64, dt: f64) -> usize {
        (libm::ceil(dt * self.stiffness(smoke) / STEP_LAMBDA) as usize).clamp(1, MAX_SUBSTEPS)
    }
}

impl<S: Scalar> Rc2Params<S> {
    pub fn map<T>(&self, f: impl Fn(S) -> T) -> Rc2Params<T> {
        Rc2Params {
            c_w: f(self.c_w),
            c_z: f(self.c_z),
            r_wo: f(self.r_wo),
            r_wz: f(self.r_wz),
            q_int: f(self.q_int),
            q_max: f(self.q_max),
            db: f(self.db),
            setpoint: f(self.setpoint),
            solar_peak: f(self.solar_peak),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rc2State<S = f64> {
    pub t_w: S,
    pub t_z: S,
}

impl<S: Scalar> Rc2State<S> {
    pub fn value(&self) -> Rc2State<f64> {
        Rc2State { t_w: self.t_w.value(), t_z: self.t_z.value() }
    }
}

/// Solar gain: a half sine between 06:00 and 18:00.
pub fn solar_gain(solar_peak: f64, t_h: f64) -> f64 {
    solar_peak * libm::sin(PI * (crate::scalar::rem_euclid(t_h, 24.0) - 6.0) / 12.0).max(0.0)
}

/// Cooling power (<= 0). Proportional over `[setpoint, setpoint + db]` and
/// saturated at `-q_max` above; zero during an outage.
pub fn hvac_power<S: Scalar>(t_z: S, p: &Rc2Params<S>, outage: bool) -> S {
    if outage {
        return S::cst(0.0);
    }
    let excess = t_z - p.setpoint;
    let frac = if p.db.value() > 0.0 {
        (excess / p.db).clamp01()
    } else if excess.value() > 0.0 {
        S::cst(1.0)
    } else {
        S::cst(0.0)
    };
    -(p.q_max * frac)
}

/// Forcing held constant across one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepForcing {
    pub t_out: f64,
    pub smoke: f64,
    pub outage: bool,
    /// Solar plus any injected gain, kW.
    pub extra_gain: f64,
}

impl StepForcing {
    pub fn at(timeline: &HazardTimeline, k: usize, solar_peak: f64) -> Self {
        Self {
            t_out: timeline.t_out[k],
            smoke: timeline.smoke[k],
            outage: timeline.is_outage(k),
            extra_gain: solar_gain(solar_peak, timeline.t_h[k]),
        }
    }
}

/// Wall-node heat balance `C_w dT_w/dt`, kW.
pub fn wall_balance<S: Scalar>(s: &Rc2State<S>, p: &Rc2Params<S>, f: &StepForcing) -> S {
    let g_wo = S::cst(1.0 - f.smoke) / p.r_wo;
    (S::cst(f.t_out) - s.t_w) * g_wo + (s.t_z - s.t_w) / p.r_wz
}

/// Zone-node heat balance `C_z dT_z/dt`, kW, with the thermostat closed.
pub fn zone_balance<S: Scalar>(s: &Rc2State<S>, p: &Rc2Params<S>, f: &StepForcing) -> S {
    (s.t_w - s.t_z) / p.r_wz + p.q_int + S::cst(f.extra_gain) + hvac_power(s.t_z, p, f.outage)
}

fn controlled_rhs<S: Scalar>(s: &Rc2State<S>, p: &Rc2Params<S>, f: &StepForcing) -> Rc2State<S> {
    Rc2State { t_w: wall_balance(s, p, f) / p.c_w, t_z: zone_balance(s, p, f) / p.c_z }
}

fn midpoint<S: Scalar>(s: Rc2State<S>, dt: f64, rhs: impl Fn(&Rc2State<S>) -> Rc2State<S>) -> Rc2State<S> {
    let k1 = rhs(&s);
    let half = S::cst(0.5 * dt);
    let mid = Rc2State { t_w: s.t_w + k1.t_w * half, t_z: s.t_z + k1.t_z * half };
    let k2 = rhs(&mid);
    let h = S::cst(dt);
    Rc2State { t_w: s.t_w + k2.t_w * h, t_z: s.t_z + k2.t_z * h }
}

/// One midpoint-RK2 step of the open-loop network with a fixed effective
/// outdoor temperature and total zone heat input `q_total`.
pub fn rc2_step(state: Rc2State, params: &Rc2Params, t_out_eff: f64, q_total: f64, dt: f64) -> Result<Rc2State> {
    if !(dt > 0.0) {
        bail!(InvalidInput, "time step must be positive");
    }
    let p = params;
    Ok(midpoint(state, dt, |s| Rc2State {
        t_w: ((t_out_eff - s.t_w) / p.r_wo + (s.t_z - s.t_w) / p.r_wz) / p.c_w,
        t_z: ((s.t_w - s.t_z) / p.r_wz + q_total) / p.c_z,
    }))
}

/// Advances one grid step of `dt` hours with the thermostat in the loop,
/// split into `substeps` RK2 steps.
pub fn controlled_step<S: Scalar>(
    state: Rc2State<S>,
    params: &Rc2Params<S>,
    forcing: &StepForcing,
    dt: f64,
    substeps: usize,
) -> Rc2State<S> {
    let h = dt / substeps as f64;
    (0..substeps).fold(state, |s, _| midpoint(s, h, |x| controlled_rhs(x, params, forcing)))
}

/// Closed-loop rollout over grid steps `start..end`, returning `end - start + 1`
/// states (the initial one included).
pub fn rollout<S: Scalar>(
    params: &Rc2Params<S>,
    timeline: &HazardTimeline,
    init: Rc2State<S>,
    start: usize,
    end: usize,
    substeps: usize,
) -> Vec<Rc2State<S>> {
    let solar_peak = params.solar_peak.value();
    let mut out = Vec::with_capacity(end - start + 1);
    out.push(init);
    let mut s = init;
    for k in start..end {
        s = controlled_step(s, params, &StepForcing::at(timeline, k, solar_peak), timeline.dt_h, substeps);
        out.push(s);
    }
    out
}

/// Substep count for the timeline grid, sized for a smoke-free envelope.
pub fn substeps_for(params: &Rc2Params, timeline: &HazardTimeline) -> usize {
    params.substeps(0.0, timeline.dt_h)
}

/// How the "true" indoor series is synthesised.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TruthMode {
    /// 2R2C physics with log-normal per-node parameter jitter and an extra
    /// zone gain during outages sized to lift the steady state by
    /// `outage_drift` °C.
    Rc2Truth { jitter: f64, outage_drift: f64 },
    /// First-order lag of the zone towards the smoke-damped outdoor
    /// temperature plus a per-node offset, lifted by `outage_drift` °C while
    /// an outage holds. Time constant and offset are drawn per node.
    CoupledTruth { tau_h: (f64, f64), offset_c: (f64, f64), outage_drift: f64 },
}

/// Per-node seed derived from a run seed.
pub fn node_seed(seed: u64, node_id: usize) -> u64 {
    seed ^ (node_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Initial state taken after a spin-up over the first day of the timeline
/// (or the whole timeline if shorter), starting from the setpoint.
pub fn spun_up_state(params: &Rc2Params, timeline: &HazardTimeline, substeps: usize) -> Rc2State {
    let steps = timeline.steps_per(24.0).unwrap_or(timeline.len()).min(timeline.len());
    let start = Rc2State { t_w: params.setpoint, t_z: params.setpoint };
    *rollout(params, timeline, start, 0, steps, substeps).last().expect("non-empty rollout")
}

/// Synthesises one building's true `(T_w, T_z)` series on the timeline grid.
pub fn simulate_building(
    params: &Rc2Params,
    timeline: &HazardTimeline,
    mode: &TruthMode,
    seed: u64,
) -> Result<Vec<Rc2State>> {
    if timeline.is_empty() {
        bail!(InvalidInput, "timeline is empty");
    }
    params.validate()?;
    let mut rng = rng::substream(seed, rng::THERMAL, 0);
    match *mode {
        TruthMode::Rc2Truth { jitter, outage_drift } => {
            let mut p = *params;
            if jitter > 0.0 {
                let z = Normal::new(0.0, jitter).map_err(|_| crate::Error::InvalidConfig("jitter".into()))?;
                for v in [&mut p.c_w, &mut p.c_z, &mut p.r_wo, &mut p.r_wz, &mut p.q_int] {
                    *v *= libm::exp(z.sample(&mut rng));
                }
            }
            let n = substeps_for(&p, timeline);
            let mut s = spun_up_state(&p, timeline, n);
            let mut out = Vec::with_capacity(timeline.len());
            out.push(s);
            for k in 0..timeline.len() - 1 {
                let mut f = StepForcing::at(timeline, k, p.solar_peak);
                if f.outage && outage_drift != 0.0 {
                    f.extra_gain += outage_drift / (p.r_wo / (1.0 - f.smoke) + p.r_wz);
                }
                s = controlled_step(s, &p, &f, timeline.dt_h, n);
                out.push(s);
            }
            Ok(out)
        }
        TruthMode::CoupledTruth { tau_h, offset_c, outage_drift } => {
            if !(tau_h.0 > 0.0 && tau_h.1 >= tau_h.0 && offset_c.1 >= offset_c.0) {
                bail!(InvalidConfig, "coupling ranges must be ordered with positive time constants");
            }
            let tau = sample_range(&mut rng, tau_h)?;
            let offset = sample_range(&mut rng, offset_c)?;
            let target = |k: usize| {
                (1.0 - timeline.smoke[k]) * (timeline.t_out[k] + offset) + outage_drift * timeline.outage[k]
            };
            let rate = (timeline.dt_h / tau).min(1.0);
            let spin = timeline.steps_per(24.0).unwrap_or(timeline.len()).min(timeline.len());
            let mut t_z = target(0);
            for k in 0..spin {
                t_z += rate * (target(k) - t_z);
            }
            let mut out = Vec::with_capacity(timeline.len());
            out.push(Rc2State { t_w: t_z, t_z });
            for k in 0..timeline.len() - 1 {
                t_z += rate * (target(k) - t_z);
                out.push(Rc2State { t_w: t_z, t_z });
            }
            Ok(out)
        }
    }
}

fn sample_range(rng: &mut rng::TwinRng, (lo, hi): (f64, f64)) -> Result<f64> {
    if hi == lo {
        return Ok(lo);
    }
    Ok(Uniform::new(lo, hi).map_err(|_| crate::Error::InvalidConfig("range".into()))?.sample(rng))
}

/// Per-step maxima of `T_z` over blackout steps, one value per whole day.
pub fn daily_blackout_peaks(states: &[Rc2State], timeline: &HazardTimeline) -> Vec<f64> {
    let per_day = timeline.steps_per(24.0).unwrap_or(timeline.len());
    states
        .chunks(per_day)
        .enumerate()
        .filter_map(|(d, day)| {
            day.iter()
                .enumerate()
                .filter(|(i, _)| timeline.is_outage(d * per_day + i))
                .map(|(_, s)| s.t_z)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFluxParams {
    /// Convective coefficient, W/m²K.
    pub h: f64,
    pub emissivity: f64,
    pub sigma: f64,
}

impl SurfaceFluxParams {
    pub fn new(h: f64, emissivity: f64) -> Self {
        Self { h, emissivity, sigma: STEFAN_BOLTZMANN }
    }
}

/// Convective plus radiative boundary flux out of a surface, W/m².
/// Temperatures in kelvin.
pub fn surface_flux(p: &SurfaceFluxParams, t_s: f64, t_inf: f64, t_sur: f64) -> Result<f64> {
    if t_s < 0.0 || t_inf < 0.0 || t_sur < 0.0 {
        bail!(InvalidInput, "absolute temperatures must be nonnegative");
    }
    if p.h < 0.0 || !(0.0..=1.0).contains(&p.emissivity) {
        bail!(InvalidInput, "h must be nonnegative and emissivity within [0, 1]");
    }
    let pow4 = |t: f64| t * t * t * t;
    Ok(p.h * (t_s - t_inf) + p.emissivity * p.sigma * (pow4(t_s) - pow4(t_sur)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pm25Params {
    /// Air-exchange rate, 1/h.
    pub a: f64,
    /// Penetration factor.
    pub p: f64,
    /// Deposition rate, 1/h.
    pub k_dep: f64,
    /// Clean-air delivery rate, m³/h.
    pub cadr: f64,
    /// Zone volume, m³.
    pub v: f64,
    /// Indoor source, µg/m³/h.
    pub s_ind: f64,
}

impl Pm25Params {
    pub fn removal_rate(&self) -> f64 {
        self.a + self.k_dep + self.cadr / self.v
    }

    /// Equilibrium concentration for a constant outdoor level.
    pub fn steady_state(&self, c_out: f64) -> f64 {
        (self.a * self.p * c_out + self.s_ind) / self.removal_rate()
    }
}

/// Single-zone PM2.5 balance integrated with midpoint RK2, sub-stepped so
/// that each step removes at most half the excess; output clipped at 0.
/// Returns one value per entry of `c_out`, the first being `c0`.
pub fn pm25_rollout(params: &Pm25Params, c_out: &[f64], c0: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        bail!(InvalidInput, "time step must be positive");
    }
    if c0 < 0.0 {
        bail!(InvalidInput, "initial concentration must be nonnegative");
    }
    let p = params;
    if [p.a, p.p, p.k_dep, p.cadr, p.s_ind].iter().any(|v| *v < 0.0) || !(p.v > 0.0) {
        bail!(InvalidInput, "PM2.5 parameters must be nonnegative with positive volume");
    }
    let removal = p.removal_rate();
    let rhs = |c: f64, outdoor: f64| p.a * p.p * outdoor - removal * c + p.s_ind;
    let n = (libm::ceil(2.0 * dt * removal) as usize).max(1);
    let h = dt / n as f64;
    let mut out = Vec::with_capacity(c_out.len());
    let mut c = c0;
    if !c_out.is_empty() {
        out.push(c);
    }
    for &outdoor in c_out.iter().take(c_out.len().saturating_sub(1)) {
        for _ in 0..n {
            let mid = c + 0.5 * h * rhs(c, outdoor);
            c = (c + h * rhs(mid, outdoor)).max(0.0);
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageModel {
    pub beta: f64,
    pub eps0: f64,
    pub k0: f64,
}

/// Damage index and degraded stiffness for strain `eps_s`.
pub fn damage(model: &DamageModel, eps_s: f64) -> (f64, f64) {
    let d = 1.0 - libm::exp(-model.beta * (eps_s - model.eps0).max(0.0));
    let d = d.min(1.0 - f64::EPSILON);
    (d, (1.0 - d) * model.k0)
}
