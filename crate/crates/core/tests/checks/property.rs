use std::sync::OnceLock;

use hazard_twin_core::affiliation::{build_knn_graph, grl_update, GrlConfig, W_MAX, W_MIN};
use hazard_twin_core::calibration::{CalibParams, Problem, TrainConfig, Window, PHYS};
use hazard_twin_core::district::{generate_district, BuildingType, District, DistrictConfig};
use hazard_twin_core::equity::{node_risks, ranked_factors, EquityConfig, NodeRisk};
use hazard_twin_core::fusion::{ema_update, fuse_weights, softmax_weights, FusionConfig, FusionState};
use hazard_twin_core::intervention::{apply_masked, eval_metrics, Intervention, Mask, OhMode};
use hazard_twin_core::scenario::{build_timeline, HazardTimeline, ScenarioConfig};
use hazard_twin_core::sensing::{synthesize_streams, SensingConfig, StreamSet};
use hazard_twin_core::stats::percentile_rank;
use hazard_twin_core::thermal::{node_seed, simulate_building, Rc2Params, TruthMode};
use hazard_twin_core::SeriesMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ensure, runner, Check};

pub struct Fixture {
    pub district: District,
    pub timeline: HazardTimeline,
    pub truth: SeriesMatrix,
    pub streams: StreamSet,
}

/// Default district and scenario with jittered physics truth, seed 7.
pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let district = generate_district(&DistrictConfig::default(), 7).unwrap();
        let timeline = build_timeline(&ScenarioConfig::default()).unwrap();
        let mode = TruthMode::Rc2Truth { jitter: 0.05, outage_drift: 1.2 };
        let rows = district
            .nodes
            .iter()
            .map(|n| {
                let p = Rc2Params::default_for(n.btype);
                simulate_building(&p, &timeline, &mode, node_seed(7, n.id)).unwrap().iter().map(|s| s.t_z).collect()
            })
            .collect();
        let truth = SeriesMatrix::from_rows(rows).unwrap();
        let streams = synthesize_streams(&truth, &district, &timeline, &SensingConfig::default(), 7).unwrap();
        Fixture { district, timeline, truth, streams }
    })
}

/// Analytic loss gradient against central differences at 20 random points.
pub fn calibration_gradient() -> Check {
    let f = fixture();
    let config = TrainConfig { soft_weight: 0.5, ..TrainConfig::default() };
    let problem = Problem::new(&f.district, &f.timeline, &f.streams, &config);
    let sensors = f.district.sensor_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let phys = (BuildingType::ALL.len() + 1) * PHYS;
    let (mut checked, mut worst) = (0, 0.0f64);
    for point in 0..20 {
        let mut params = CalibParams::init(28.0, 3.0, point);
        for v in params.raw.iter_mut().flatten().chain(&mut params.shared) {
            *v += jitter.sample(&mut rng);
        }
        let last = f.timeline.len() - 1 - config.window_len;
        let windows: Vec<Window> = (0..2)
            .map(|_| Window { node: sensors[rng.random_range(0..sensors.len())], start: rng.random_range(0..=last) })
            .collect();
        let (_, grad) = problem.loss_and_grad(&params, &windows).map_err(|e| e.to_string())?;
        let theta = params.flatten();
        ensure!(grad.len() == theta.len(), "gradient has {} entries for {} parameters", grad.len(), theta.len());
        // Every physical coordinate, plus a sample of the regressor weights.
        let mut coords: Vec<usize> = (0..phys).collect();
        coords.extend((0..8).map(|_| rng.random_range(phys..theta.len())));
        for i in coords {
            let h = f64::EPSILON.cbrt() * theta[i].abs().max(1.0);
            let eval = |x: f64| {
                let mut t = theta.clone();
                t[i] = x;
                let mut p = params.clone();
                p.unflatten(&t);
                problem.loss(&p, &windows).map(|l| l.total)
            };
            let up = eval(theta[i] + h).map_err(|e| e.to_string())?;
            let down = eval(theta[i] - h).map_err(|e| e.to_string())?;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-5);
            ensure!(rel < 1e-3, "point {point} coord {i}: fd {fd} vs analytic {}", grad[i]);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(format!("{checked} coordinates at 20 points, max relative error {worst:.1e}"))
}

pub fn sensing_noise_spread() -> Check {
    let f = fixture();
    let cfg = SensingConfig::default();
    let mut iot = Vec::new();
    for n in 0..f.district.len() {
        for t in 0..f.timeline.len() {
            let y = f.streams.iot.get(n, t);
            let expect_obs = f.district.nodes[n].has_sensor && !f.timeline.is_outage(t);
            ensure!(!y.is_nan() == expect_obs, "IoT presence wrong at node {n} step {t}");
            if expect_obs {
                iot.push(y - f.truth.get(n, t));
            }
        }
    }
    let mut uav = Vec::new();
    for (c, &t) in f.streams.uav_idx.iter().enumerate() {
        for n in 0..f.district.len() {
            uav.push(f.streams.uav.get(n, c) - f.truth.get(n, t));
        }
    }
    let mut detail = Vec::new();
    for (name, res, sigma) in [("iot", &iot, cfg.iot_sigma), ("uav", &uav, cfg.uav_sigma)] {
        let m = res.iter().sum::<f64>() / res.len() as f64;
        let sd = (res.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / res.len() as f64).sqrt();
        ensure!(m.abs() < 4.0 * sigma / (res.len() as f64).sqrt(), "{name} bias {m}");
        ensure!((sd / sigma - 1.0).abs() < 0.05, "{name} spread {sd} vs {sigma}");
        detail.push(format!("{name} sd {sd:.3} (sigma {sigma})"));
    }
    Ok(detail.join(", "))
}

pub fn fusion_simplex() -> Check {
    let f = fixture();
    let state = fuse_weights(&f.streams, &FusionConfig::default()).map_err(|e| e.to_string())?;
    ensure!(state.history.len() == f.timeline.len(), "one weight vector per step");
    for (t, w) in state.history.iter().enumerate() {
        ensure!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && w.iter().all(|v| *v >= 0.0), "step {t}: {w:?}");
    }
    let steps = prop::collection::vec([-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0], 1..50);
    runner(256)
        .run(&(steps, 0.01f64..5.0, 0.01f64..0.999), |(steps, tau, beta)| {
            let cfg = FusionConfig { tau, beta, ..FusionConfig::default() };
            let mut state = FusionState::new();
            for s in &steps {
                let w = softmax_weights(*s, tau);
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && w.iter().all(|x| *x >= 0.0));
                let before = state.w_ema;
                state.push_scores(*s, &cfg);
                prop_assert_eq!(state.w_ema, ema_update(before, w, beta));
                prop_assert!((state.w_ema.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && state.w_ema.iter().all(|x| *x >= 0.0));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("default run and 256 random score sequences stay on the simplex within 1e-9".into())
}

pub fn seeded_draws_repeat() -> Check {
    let f = fixture();
    let cfg = DistrictConfig::default();
    ensure!(generate_district(&cfg, 7).map_err(|e| e.to_string())? == f.district, "district differs for the same seed");
    ensure!(generate_district(&cfg, 8).map_err(|e| e.to_string())? != f.district, "district ignores the seed");
    let again = synthesize_streams(&f.truth, &f.district, &f.timeline, &SensingConfig::default(), 7).map_err(|e| e.to_string())?;
    let bits = |m: &SeriesMatrix| m.iter_rows().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
    for (a, b, name) in [(&again.iot, &f.streams.iot, "iot"), (&again.uav, &f.streams.uav, "uav"), (&again.sat, &f.streams.sat, "sat")] {
        ensure!(bits(a) == bits(b), "{name} stream differs for the same seed");
    }
    Ok("district and streams bit-identical for a repeated seed".into())
}

fn unit() -> impl Strategy<Value = f64> {
    0.0f64..=1.0
}

/// Risk rises with each factor; relief interventions never raise it.
pub fn monotonicity() -> Check {
    runner(256)
        .run(&(unit(), unit(), unit(), unit(), 0.0f64..2.0, unit()), |(x, v, e, dx, gamma, bp)| {
            let cfg = EquityConfig { gamma, beta_phys: bp, beta_sens: 1.0 - bp, ..EquityConfig::default() };
            let base = NodeRisk::compose(0, x, v, e, &cfg).r_node;
            prop_assert!(NodeRisk::compose(0, (x + dx).min(1.0), v, e, &cfg).r_node >= base);
            prop_assert!(NodeRisk::compose(0, x, (v + dx).min(1.0), e, &cfg).r_node >= base);
            prop_assert!(NodeRisk::compose(0, x, v, (e + dx).min(1.0), &cfg).r_node >= base);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let f = fixture();
    let nodes = prop::collection::vec((unit(), unit(), unit(), 1u32..400), 1..60);
    runner(256)
        .run(&(nodes, 0.05f64..=1.0, -0.3f64..=0.0, -0.3f64..=0.0, unit()), |(nodes, scale, dv, de, frac)| {
            let cfg = EquityConfig::default();
            let base: Vec<NodeRisk> =
                nodes.iter().enumerate().map(|(i, &(x, v, e, _))| NodeRisk::compose(i, x, v, e, &cfg)).collect();
            let pops: Vec<f64> = nodes.iter().map(|n| f64::from(n.3)).collect();
            let iv = Intervention { exposure_scale: scale, dv, de, mask: Mask::TopFraction(frac), ..Intervention::identity("T") };
            let count = ((frac * base.len() as f64) - 1e-9).ceil() as usize;
            let mask: Vec<usize> = (0..count.min(base.len())).collect();
            let post = apply_masked(&base, &mask, &iv, &cfg).unwrap().risks;
            for (a, b) in base.iter().zip(&post) {
                prop_assert!(b.r_node <= a.r_node + 1e-15);
            }
            let out = eval_metrics(&base, &post, &pops, &f.timeline, &iv, OhMode::Proxy { threshold: 30.0 }).unwrap();
            for d in [out.d_rpop_pct, out.d_r95_pct, out.d_oh_pct].into_iter().flatten() {
                prop_assert!(d <= 1e-9, "{out:?}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("r_node nondecreasing in exposure, V and E; relief never raises node risk, R_pop, R95 or OH".into())
}

/// Edge weights, rank values and shifted factors stay within their bounds.
pub fn clipping_bounds() -> Check {
    let f = fixture();
    for (eta, gamma) in [(0.0, 1.0), (5.0, 1.0), (0.5, 1.5), (0.01, 0.2), (50.0, 0.995)] {
        let cfg = GrlConfig { eta, gamma, ..GrlConfig::default() };
        let g0 = build_knn_graph(&f.district, &cfg).map_err(|e| e.to_string())?;
        let g = grl_update(&g0, &f.district, &f.timeline, &cfg).map_err(|e| e.to_string())?;
        ensure!(g.edges.iter().all(|e| (W_MIN..=W_MAX).contains(&e.w)), "weights escape the clip (eta {eta}, gamma {gamma})");
    }
    let (v, e) = ranked_factors(&f.district, &EquityConfig::default()).map_err(|e| e.to_string())?;
    ensure!(v.iter().chain(&e).all(|x| (0.0..=1.0).contains(x)), "ranked factors outside [0, 1]");
    let risks = node_risks(&f.district, &f.timeline, &EquityConfig::default()).map_err(|e| e.to_string())?;
    ensure!(risks.iter().all(|r| (0.0..=1.0).contains(&r.r_node)), "node risk outside [0, 1]");

    runner(256)
        .run(&prop::collection::vec(-1e6f64..1e6, 1..80), |values| {
            prop_assert!(percentile_rank(&values).iter().all(|r| (0.0..=1.0).contains(r)));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let shift = (unit(), unit(), unit(), -2.0f64..2.0, -2.0f64..2.0, 0.01f64..=1.0);
    runner(256)
        .run(&shift, |(x, v, e, dv, de, scale)| {
            let cfg = EquityConfig::default();
            let iv = Intervention { exposure_scale: scale, dv, de, ..Intervention::identity("T") };
            let out = apply_masked(&[NodeRisk::compose(0, x, v, e, &cfg)], &[0], &iv, &cfg).unwrap().risks[0];
            prop_assert!([out.exposure, out.v, out.e].iter().all(|x| (0.0..=1.0).contains(x)));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("edge weights in [{W_MIN}, {W_MAX}], ranks and shifted factors in [0, 1]"))
}
