//! Initial-state regressor: a per-type embedding plus time-of-day encoding
//! feeding one tanh hidden layer, producing `(T_w, T_z)` at a window start.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::district::BuildingType;
use crate::thermal::Rc2State;

pub const EMBED: usize = 4;
pub const INPUTS: usize = EMBED + 2;
pub const HIDDEN: usize = 16;
const TYPES: usize = BuildingType::ALL.len();

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitNet {
    pub embed: [[f64; EMBED]; TYPES],
    pub w1: [[f64; INPUTS]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [[f64; HIDDEN]; 2],
    pub b2: [f64; 2],
    /// Output de-standardisation: `T = mu + sigma * out`.
    pub mu: f64,
    pub sigma: f64,
}

/// Hidden activations kept for the backward pass.
pub struct Trace {
    z: [f64; INPUTS],
    h: [f64; HIDDEN],
}

impl InitNet {
    pub const PARAM_COUNT: usize = TYPES * EMBED + HIDDEN * INPUTS + HIDDEN + 2 * HIDDEN + 2;

    pub fn init<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> Self {
        let mut net = Self {
            embed: [[0.0; EMBED]; TYPES],
            w1: [[0.0; INPUTS]; HIDDEN],
            b1: [0.0; HIDDEN],
            w2: [[0.0; HIDDEN]; 2],
            b2: [0.0; 2],
            mu,
            sigma,
        };
        let normal = Normal::new(0.0, 0.1).expect("valid sd");
        let mut flat = net.flatten();
        flat.iter_mut().for_each(|v| *v = normal.sample(rng));
        let n = flat.len();
        flat[n - 2..].iter_mut().for_each(|v| *v = 0.0);
        net.unflatten(&flat);
        net
    }

    fn encode(&self, btype: BuildingType, t_h: f64) -> [f64; INPUTS] {
        let mut z = [0.0; INPUTS];
        z[..EMBED].copy_from_slice(&self.embed[btype.index()]);
        let phase = 2.0 * PI * t_h / 24.0;
        z[EMBED] = libm::sin(phase);
        z[EMBED + 1] = libm::cos(phase);
        z
    }

    pub fn forward(&self, btype: BuildingType, t_h: f64) -> (Rc2State, Trace) {
        let z = self.encode(btype, t_h);
        let mut h = [0.0; HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let a: f64 = self.b1[j] + self.w1[j].iter().zip(&z).map(|(w, x)| w * x).sum::<f64>();
            *hj = libm::tanh(a);
        }
        let out = |k: usize| self.b2[k] + self.w2[k].iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
        let state = Rc2State { t_w: self.mu + self.sigma * out(0), t_z: self.mu + self.sigma * out(1) };
        (state, Trace { z, h })
    }

    pub fn predict(&self, btype: BuildingType, t_h: f64) -> Rc2State {
        self.forward(btype, t_h).0
    }

    /// Accumulates into `grad` (flattened layout) the gradient of a loss
    /// whose derivative with respect to the predicted state is `g_state`.
    #[allow(clippy::needless_range_loop)]
    pub fn backward(&self, btype: BuildingType, trace: &Trace, g_state: [f64; 2], grad: &mut NetGrad) {
        let g_o = [self.sigma * g_state[0], self.sigma * g_state[1]];
        let mut g_h = [0.0; HIDDEN];
        for k in 0..2 {
            grad.b2[k] += g_o[k];
            for j in 0..HIDDEN {
                grad.w2[k][j] += g_o[k] * trace.h[j];
                g_h[j] += self.w2[k][j] * g_o[k];
            }
        }
        let mut g_z = [0.0; INPUTS];
        for j in 0..HIDDEN {
            let g_a = g_h[j] * (1.0 - trace.h[j] * trace.h[j]);
            grad.b1[j] += g_a;
            for i in 0..INPUTS {
                grad.w1[j][i] += g_a * trace.z[i];
                g_z[i] += self.w1[j][i] * g_a;
            }
        }
        for i in 0..EMBED {
            grad.embed[btype.index()][i] += g_z[i];
        }
    }

    pub fn zero_grad(&self) -> NetGrad {
        let mut g = self.clone();
        g.unflatten(&alloc::vec![0.0; Self::PARAM_COUNT]);
        g
    }

    /// Trainable weights in a fixed order (embeddings, layer 1, layer 2).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::PARAM_COUNT);
        self.embed.iter().for_each(|r| v.extend_from_slice(r));
        self.w1.iter().for_each(|r| v.extend_from_slice(r));
        v.extend_from_slice(&self.b1);
        self.w2.iter().for_each(|r| v.extend_from_slice(r));
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) {
        let mut it = v.iter().copied();
        let mut take = |dst: &mut [f64]| dst.iter_mut().for_each(|x| *x = it.next().expect("flat length"));
        self.embed.iter_mut().for_each(|r| take(r));
        self.w1.iter_mut().for_each(|r| take(r));
        take(&mut self.b1);
        self.w2.iter_mut().for_each(|r| take(r));
        take(&mut self.b2);
    }
}

/// Gradient with the same shape as the network.
pub type NetGrad = InitNet;
