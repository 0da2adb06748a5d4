use hazard_twin_core::affiliation::{betweenness, AffiliationGraph};
use hazard_twin_core::district::BuildingType;
use hazard_twin_core::equity::{community_index, decile_labels, EquityConfig, NodeRisk};
use hazard_twin_core::fusion::kalman::{kalman_assimilate, KalmanModel};
use hazard_twin_core::intervention::pareto_front;
use hazard_twin_core::scenario::{build_timeline, HazardTimeline, ScenarioConfig};
use hazard_twin_core::stats::{percentile_rank, quantile_linear};
use hazard_twin_core::thermal::{
    rc2_step, rollout, substeps_for, wall_balance, zone_balance, Rc2Params, Rc2State, StepForcing,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure, runner, Check};

fn euler_rollout(p: &Rc2Params, tl: &HazardTimeline, x0: Rc2State, n: usize) -> Vec<Rc2State> {
    let h = tl.dt_h / n as f64;
    let mut s = x0;
    let mut out = vec![s];
    for k in 0..tl.len() - 1 {
        let f = StepForcing::at(tl, k, p.solar_peak);
        for _ in 0..n {
            let dw = wall_balance(&s, p, &f) / p.c_w;
            let dz = zone_balance(&s, p, &f) / p.c_z;
            s = Rc2State { t_w: s.t_w + h * dw, t_z: s.t_z + h * dz };
        }
        out.push(s);
    }
    out
}

/// Closed-loop RK2 rollouts against explicit Euler on a 100x finer step.
pub fn rk2_vs_fine_euler() -> Check {
    let tl = build_timeline(&ScenarioConfig::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for bt in BuildingType::ALL {
        let p = Rc2Params::default_for(bt);
        let n = substeps_for(&p, &tl);
        let x0 = Rc2State { t_w: 27.0, t_z: 25.0 };
        let rk = rollout(&p, &tl, x0, 0, tl.len() - 1, n);
        let eu = euler_rollout(&p, &tl, x0, 100 * n);
        let dev = rk.iter().zip(&eu).map(|(a, b)| (a.t_z - b.t_z).abs().max((a.t_w - b.t_w).abs())).fold(0.0, f64::max);
        ensure!(dev <= 1e-3, "{bt:?}: max deviation {dev:.2e} °C");
        worst = worst.max(dev);
    }
    Ok(format!("max |RK2 - Euler/100| = {worst:.2e} °C over {} steps, all types", tl.len()))
}

/// Open-loop step response after ten slowest time constants.
pub fn open_loop_steady_state() -> Check {
    let mut worst = 0.0f64;
    for bt in BuildingType::ALL {
        let p = Rc2Params::default_for(bt);
        let (t_out, q) = (33.0, 2.0);
        let (gw, gz) = (1.0 / p.r_wo, 1.0 / p.r_wz);
        let a = DMatrix::from_row_slice(2, 2, &[-(gw + gz) / p.c_w, gz / p.c_w, gz / p.c_z, -gz / p.c_z]);
        let slow = a.complex_eigenvalues().iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
        let dt = 0.01;
        // Step response from the unforced equilibrium.
        let mut s = Rc2State { t_w: t_out, t_z: t_out };
        for _ in 0..(10.0 / slow / dt).ceil() as usize {
            s = rc2_step(s, &p, t_out, q, dt).map_err(|e| e.to_string())?;
        }
        let want = t_out + q * (p.r_wo + p.r_wz);
        let err = (s.t_z - want).abs();
        ensure!(err <= 1e-4, "{bt:?}: {} vs {want}", s.t_z);
        worst = worst.max(err);
    }
    Ok(format!("max |T_z - (T_out + Q(R_wo + R_wz))| = {worst:.2e} °C"))
}

/// Scalar predict/update against the Gaussian conjugate posterior.
pub fn kalman_conjugate() -> Check {
    let strategy = (-40.0f64..40.0, 1e-3f64..10.0, 0.0f64..2.0, 1e-3f64..5.0, -40.0f64..40.0);
    runner(500)
        .run(&strategy, |(m, p0, q, r, y)| {
            let one = |v: f64| DMatrix::from_element(1, 1, v);
            let model =
                KalmanModel::new(one(0.0), one(0.0), one(1.0), one(q), one(r), DVector::from_element(1, m), one(p0)).unwrap();
            let post = kalman_assimilate(&model, &DVector::from_element(1, 0.0), Some(&DVector::from_element(1, y)), 1.0)
                .unwrap();
            let prior = p0 + q;
            let var = 1.0 / (1.0 / prior + 1.0 / r);
            let mean = var * (m / prior + y / r);
            prop_assert!((post.x[0] - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{} vs {mean}", post.x[0]);
            prop_assert!((post.p[(0, 0)] - var).abs() <= 1e-12 * var.max(1.0), "{} vs {var}", post.p[(0, 0)]);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("500 random scalar updates within 1e-12 of the conjugate posterior".into())
}

/// Every simple path between each pair, by exhaustive search.
fn brute_betweenness(n: usize, edges: &[(usize, usize, u32)]) -> Vec<f64> {
    let mut adj = vec![vec![]; n];
    for &(a, b, c) in edges {
        adj[a].push((b, c));
        adj[b].push((a, c));
    }
    fn walk(u: usize, t: usize, adj: &[Vec<(usize, u32)>], path: &mut Vec<usize>, len: u32, out: &mut Vec<(u32, Vec<usize>)>) {
        if u == t {
            out.push((len, path.clone()));
            return;
        }
        for &(v, c) in &adj[u] {
            if !path.contains(&v) {
                path.push(v);
                walk(v, t, adj, path, len + c, out);
                path.pop();
            }
        }
    }
    let mut cb = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let mut paths = Vec::new();
            walk(s, t, &adj, &mut vec![s], 0, &mut paths);
            let Some(best) = paths.iter().map(|p| p.0).min() else { continue };
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.0 == best).map(|p| &p.1).collect();
            for (v, c) in cb.iter_mut().enumerate() {
                if v != s && v != t {
                    *c += shortest.iter().filter(|p| p.contains(&v)).count() as f64 / shortest.len() as f64;
                }
            }
        }
    }
    cb
}

pub fn betweenness_brute_force() -> Check {
    let mut edges_seen = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let density = rng.random_range(0.2..0.7);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(density) {
                    // Small integer costs make tied shortest paths common.
                    edges.push((a, b, rng.random_range(1..=3u32)));
                }
            }
        }
        edges_seen += edges.len();
        let unit: Vec<(usize, usize, f64)> = edges.iter().map(|&(a, b, _)| (a, b, 1.0)).collect();
        let graph = AffiliationGraph::from_edges(n, &unit).map_err(|e| e.to_string())?;
        let cost: Vec<f64> = graph
            .edges
            .iter()
            .map(|e| f64::from(edges.iter().find(|x| x.0 == e.u && x.1 == e.v).expect("edge").2))
            .collect();
        let got = betweenness(&graph, &cost);
        let want = brute_betweenness(n, &edges);
        for v in 0..n {
            ensure!((got[v] - want[v]).abs() < 1e-9, "seed {seed} node {v}: {} vs {}", got[v], want[v]);
        }
    }
    Ok(format!("100 random 8-node graphs ({edges_seen} edges) match path enumeration"))
}

fn brute_front(points: &[(f64, f64)]) -> Vec<usize> {
    let dominated = |a: (f64, f64), b: (f64, f64)| a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1);
    (0..points.len()).filter(|&i| !points.iter().any(|&q| dominated(q, points[i]))).collect()
}

pub fn pareto_brute_force() -> Check {
    let strategy = (prop::collection::vec((0u8..12, 0u8..12), 0..40), any::<bool>());
    runner(1000)
        .run(&strategy, |(raw, fine)| {
            // Coarse integer grids force ties and duplicates; the fine variant spreads them.
            let scale = if fine { 0.37 } else { 1.0 };
            let points: Vec<(f64, f64)> = raw.iter().map(|&(a, b)| (f64::from(a) * scale, -f64::from(b) * scale)).collect();
            prop_assert_eq!(pareto_front(&points), brute_front(&points));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random outcome sets match the O(n^2) dominance scan".into())
}

pub fn rank_tables_brute_force() -> Check {
    let values = prop::collection::vec(prop_oneof![0u8..6, 0u8..255].prop_map(f64::from), 2..60);
    runner(300)
        .run(&values, |values| {
            let n = values.len();
            let got = percentile_rank(&values);
            let constant = values.iter().all(|v| *v == values[0]);
            for i in 0..n {
                let below = values.iter().filter(|v| **v < values[i]).count() as f64;
                let ties = values.iter().filter(|v| **v == values[i]).count() as f64;
                let want = if constant { 0.5 } else { (below + (ties - 1.0) / 2.0) / (n - 1) as f64 };
                prop_assert!((got[i] - want).abs() < 1e-12, "{i}: {} vs {want}", got[i]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    runner(300)
        .run(&(prop::collection::vec(-50.0f64..50.0, 1..50), 0.0f64..=1.0), |(values, q)| {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let pos = q * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            let want = sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]);
            prop_assert!((quantile_linear(&values, q) - want).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let rows = prop::collection::vec((0u8..20, 0.0f64..1.0, 0.0f64..1.0, 0u32..500), 10..150);
    runner(300)
        .run(&rows, |rows| {
            let cfg = EquityConfig::default();
            let risks: Vec<NodeRisk> = rows
                .iter()
                .enumerate()
                .map(|(i, &(r, v, e, _))| NodeRisk { id: i, exposure: 1.0, v, e, r_node: f64::from(r) / 20.0 })
                .collect();
            let pops: Vec<f64> = rows.iter().map(|r| f64::from(r.3)).collect();
            let labels = decile_labels(&risks);
            let n = risks.len();
            for i in 0..n {
                let before = (0..n).filter(|&j| (risks[j].r_node, j) < (risks[i].r_node, i)).count();
                prop_assert_eq!(labels[i], before * 10 / n + 1);
            }
            let total: f64 = pops.iter().sum();
            let Ok(index) = community_index(&risks, &pops, &cfg) else {
                prop_assert!(total == 0.0);
                return Ok(());
            };
            let r_eq: f64 = risks.iter().zip(&pops).map(|(r, p)| p * r.v * (1.0 + cfg.gamma * r.e)).sum::<f64>() / total;
            prop_assert!((index.r_eq - r_eq).abs() < 1e-12);
            for row in &index.deciles {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == row.decile).collect();
                prop_assert_eq!(row.count, members.len());
                let mean = members.iter().map(|&i| risks[i].r_node).sum::<f64>() / members.len() as f64;
                let pop: f64 = members.iter().map(|&i| pops[i]).sum();
                let weighted =
                    if pop > 0.0 { members.iter().map(|&i| pops[i] * risks[i].r_node).sum::<f64>() / pop } else { mean };
                prop_assert!((row.mean - mean).abs() < 1e-12);
                prop_assert!((row.weighted_mean - weighted).abs() < 1e-12);
                prop_assert!((row.population - pop).abs() < 1e-9);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("percentile ranks, linear quantiles and decile tables match recomputation (300 cases each)".into())
}
