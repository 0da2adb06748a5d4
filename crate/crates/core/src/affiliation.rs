//! Affiliation network among district assets: a k-nearest-neighbour graph
//! whose edge weights are reinforced under hazard stress, followed by
//! centrality scoring, greedy modularity communities and coverage-aware
//! selection of critical nodes.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::district::{BuildingType, District};
use crate::scenario::HazardTimeline;
use crate::spatial::{distance, knn_excluding_self, mean_nearest_distance};
use crate::stats::percentile_rank;
use crate::{bail, Result};

pub const W_MIN: f64 = 1e-2;
pub const W_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GrlConfig {
    pub k: usize,
    pub eta: f64,
    pub gamma: f64,
    /// Distance scale of the initial weights; the district's mean
    /// nearest-neighbour distance when unset.
    pub sigma: Option<f64>,
    /// Critical nodes per community.
    pub m: usize,
    /// Size of the global critical list.
    pub top_k: usize,
    /// Node priors in [`BuildingType::ALL`] order.
    pub priors: [f64; 6],
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self {
            k: 8,
            eta: 0.01,
            gamma: 0.995,
            sigma: None,
            m: 2,
            top_k: 10,
            priors: [0.5, 0.3, 0.4, 0.8, 0.6, 1.0],
            eps: 1e-6,
            max_iter: 10_000,
        }
    }
}

impl GrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 8 {
            bail!(InvalidConfig, "k must lie in 1..=8, got {}", self.k);
        }
        if !(self.eta >= 0.0 && self.gamma > 0.0) || self.sigma.is_some_and(|s| !(s > 0.0)) || !(self.eps > 0.0) {
            bail!(InvalidConfig, "eta must be nonnegative; gamma, sigma and eps positive");
        }
        Ok(())
    }

    pub fn prior(&self, btype: BuildingType) -> f64 {
        self.priors[btype.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub d: f64,
    pub w0: f64,
    pub w: f64,
}

/// Undirected weighted graph; edges are stored once with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct AffiliationGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub sigma: f64,
}

impl AffiliationGraph {
    /// Graph from explicit weighted edges (`w0` set to `w`).
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a == b || a >= n || b >= n {
                bail!(InvalidInput, "bad edge ({a}, {b}) for {n} nodes");
            }
            out.push(Edge { u: a.min(b), v: a.max(b), d: 1.0, w0: w, w });
        }
        out.sort_by_key(|e| (e.u, e.v));
        out.dedup_by_key(|e| (e.u, e.v));
        Ok(Self { n, edges: out, sigma: 1.0 })
    }

    /// Adjacency lists of `(neighbour, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, i));
            adj[e.v].push((e.u, i));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Relative gain `(w - w0) / (w0 + eps)` per edge.
    pub fn edge_gains(&self, eps: f64) -> Vec<f64> {
        self.edges.iter().map(|e| (e.w - e.w0) / (e.w0 + eps)).collect()
    }
}

/// Union of every node's `k` nearest neighbours with `w = w0 = exp(-d/sigma)`.
pub fn build_knn_graph(district: &District, config: &GrlConfig) -> Result<AffiliationGraph> {
    config.validate()?;
    let n = district.len();
    if n < 2 {
        bail!(InvalidInput, "graph needs at least two nodes");
    }
    if config.k >= n {
        bail!(InvalidConfig, "k = {} must be below the node count {n}", config.k);
    }
    let xy = district.xy();
    let sigma = config.sigma.unwrap_or_else(|| mean_nearest_distance(&xy));
    if !(sigma > 0.0) {
        bail!(InvalidInput, "distance scale is not positive (coincident nodes?)");
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| knn_excluding_self(&xy, i, config.k).into_iter().map(move |j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            let d = distance(xy[u], xy[v]);
            let w0 = libm::exp(-d / sigma);
            Edge { u, v, d, w0, w: w0 }
        })
        .collect();
    Ok(AffiliationGraph { n, edges, sigma })
}

/// Normalised stress at step `k`: half outage, half heat above 30 °C over a
/// 10 °C span.
pub fn stress(timeline: &HazardTimeline, k: usize) -> f64 {
    let heat = ((timeline.t_out[k] - 30.0) / 10.0).clamp(0.0, 1.0);
    0.5 * timeline.outage[k].clamp(0.0, 1.0) + 0.5 * heat
}

/// Reinforcement pass over the timeline: each step scores nodes by
/// `p(n)(1 + s(t))`, centres the scores, and moves every edge weight by
/// `w <- clip(gamma w + eta (u_a + u_b))`.
pub fn grl_update(
    graph: &AffiliationGraph,
    district: &District,
    timeline: &HazardTimeline,
    config: &GrlConfig,
) -> Result<AffiliationGraph> {
    config.validate()?;
    if district.len() != graph.n {
        bail!(Shape, "district has {} nodes, graph {}", district.len(), graph.n);
    }
    let priors: Vec<f64> = district.nodes.iter().map(|n| config.prior(n.btype)).collect();
    let mean_prior = crate::stats::mean(&priors);
    let mut out = graph.clone();
    for k in 0..timeline.len() {
        let s = 1.0 + stress(timeline, k);
        for e in &mut out.edges {
            let g = (priors[e.u] - mean_prior) * s + (priors[e.v] - mean_prior) * s;
            e.w = (config.gamma * e.w + config.eta * g).clamp(W_MIN, W_MAX);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn same(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Single-source Dijkstra with shortest-path counts and predecessor lists,
/// returning vertices in nondecreasing distance order.
fn dijkstra(
    adj: &[Vec<(usize, usize)>],
    cost: &[f64],
    s: usize,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<usize>>, Vec<usize>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut pred = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.push(Visit { dist: 0.0, node: s });
    while let Some(Visit { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        order.push(u);
        for &(v, e) in &adj[u] {
            let nd = d + cost[e];
            if done[v] {
                continue;
            }
            if same(nd, dist[v]) {
                sigma[v] += sigma[u];
                pred[v].push(u);
            } else if nd < dist[v] {
                dist[v] = nd;
                sigma[v] = sigma[u];
                pred[v] = vec![u];
                heap.push(Visit { dist: nd, node: v });
            }
        }
    }
    (dist, sigma, pred, order)
}

/// Traversal cost `1 / (w + eps)` per edge.
pub fn edge_costs(graph: &AffiliationGraph, eps: f64) -> Vec<f64> {
    graph.edges.iter().map(|e| 1.0 / (e.w + eps)).collect()
}

/// Brandes betweenness on the given edge costs (undirected, unnormalised:
/// each unordered pair counted once).
pub fn betweenness(graph: &AffiliationGraph, cost: &[f64]) -> Vec<f64> {
    let adj = graph.adjacency();
    let mut cb = vec![0.0; graph.n];
    for s in 0..graph.n {
        let (_, sigma, pred, order) = dijkstra(&adj, cost, s);
        let mut delta = vec![0.0; graph.n];
        for &w in order.iter().rev() {
            for &v in &pred[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb.iter_mut().for_each(|c| *c *= 0.5);
    cb
}

/// Closeness on edge costs, scaled by the reachable fraction so that
/// disconnected graphs stay comparable.
pub fn closeness(graph: &AffiliationGraph, cost: &[f64]) -> Vec<f64> {
    let adj = graph.adjacency();
    (0..graph.n)
        .map(|s| {
            let (dist, ..) = dijkstra(&adj, cost, s);
            let reach: Vec<f64> = dist.iter().copied().filter(|d| d.is_finite() && *d > 0.0).collect();
            let total: f64 = reach.iter().sum();
            if reach.is_empty() || graph.n < 2 || total <= 0.0 {
                return 0.0;
            }
            let r = reach.len() as f64;
            (r / (graph.n - 1) as f64) * (r / total)
        })
        .collect()
}

/// Eigenvector centrality on weights by power iteration on `A + I`
/// (unit Euclidean norm).
pub fn eigenvector(graph: &AffiliationGraph, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = graph.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut x = vec![1.0 / libm::sqrt(n as f64); n];
    for _ in 0..max_iter {
        let mut y = x.clone();
        for e in &graph.edges {
            y[e.u] += e.w * x[e.v];
            y[e.v] += e.w * x[e.u];
        }
        let norm = libm::sqrt(y.iter().map(|v| v * v).sum::<f64>());
        if !(norm > 0.0) {
            bail!(Numerical, "eigenvector iteration collapsed");
        }
        y.iter_mut().for_each(|v| *v /= norm);
        let change: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = y;
        if change < tol * n as f64 {
            return Ok(x);
        }
    }
    bail!(Numerical, "eigenvector centrality did not converge in {max_iter} iterations")
}

/// Greedy agglomerative modularity maximisation on weights. Returns a
/// community label per node (labels ordered by smallest member) and the
/// final modularity.
pub fn greedy_modularity(graph: &AffiliationGraph) -> (Vec<usize>, f64) {
    let n = graph.n;
    let two_m: f64 = 2.0 * graph.edges.iter().map(|e| e.w).sum::<f64>();
    let mut label: Vec<usize> = (0..n).collect();
    if n == 0 || two_m <= 0.0 {
        return (label, 0.0);
    }
    // e[i][j]: fraction of edge ends joining communities i and j (symmetric).
    let mut e = vec![vec![0.0; n]; n];
    let mut a = vec![0.0; n];
    for ed in &graph.edges {
        let f = ed.w / two_m;
        e[ed.u][ed.v] += f;
        e[ed.v][ed.u] += f;
        a[ed.u] += f;
        a[ed.v] += f;
    }
    let mut alive = vec![true; n];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if !alive[j] || e[i][j] <= 0.0 {
                    continue;
                }
                let dq = 2.0 * (e[i][j] - a[i] * a[j]);
                if best.is_none_or(|(b, ..)| dq > b) {
                    best = Some((dq, i, j));
                }
            }
        }
        let Some((_, i, j)) = best.filter(|b| b.0 > 0.0) else { break };
        for k in (0..n).filter(|&k| k != i && k != j) {
            e[i][k] += e[j][k];
            e[k][i] = e[i][k];
            e[j][k] = 0.0;
            e[k][j] = 0.0;
        }
        e[i][j] = 0.0;
        e[j][i] = 0.0;
        a[i] += a[j];
        a[j] = 0.0;
        alive[j] = false;
        label.iter_mut().filter(|l| **l == j).for_each(|l| *l = i);
    }
    let mut ids: Vec<usize> = label.clone();
    ids.sort_unstable();
    ids.dedup();
    let relabelled: Vec<usize> = label.iter().map(|l| ids.binary_search(l).expect("label present")).collect();
    let q = modularity(graph, &relabelled);
    (relabelled, q)
}

/// Modularity of a partition on weights.
pub fn modularity(graph: &AffiliationGraph, label: &[usize]) -> f64 {
    let two_m: f64 = 2.0 * graph.edges.iter().map(|e| e.w).sum::<f64>();
    if two_m <= 0.0 {
        return 0.0;
    }
    let k = label.iter().copied().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for e in &graph.edges {
        if label[e.u] == label[e.v] {
            inside[label[e.u]] += 2.0 * e.w;
        }
        tot[label[e.u]] += e.w;
        tot[label[e.v]] += e.w;
    }
    (0..k).map(|c| inside[c] / two_m - (tot[c] / two_m) * (tot[c] / two_m)).sum()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticalReport {
    /// Rank-normalised centralities.
    pub betweenness: Vec<f64>,
    pub closeness: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub crit_score: Vec<f64>,
    pub community: Vec<usize>,
    pub modularity: f64,
    /// Top-`m` node ids per community, best first.
    pub community_top: Vec<Vec<usize>>,
    pub global_top: Vec<usize>,
    pub edge_gain: Vec<f64>,
}

fn ranked_desc(ids: impl Iterator<Item = usize>, score: &[f64]) -> Vec<usize> {
    let mut v: Vec<usize> = ids.collect();
    v.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    v
}

/// Composite criticality `(0.5 b + 0.3 c + 0.2 e)(0.5 + 0.5 pop)(0.5 + 0.5 req)`
/// on rank-normalised inputs.
pub fn crit_score(b: f64, c: f64, e: f64, pop: f64, req: f64) -> f64 {
    (0.5 * b + 0.3 * c + 0.2 * e) * (0.5 + 0.5 * pop) * (0.5 + 0.5 * req)
}

pub fn centrality_and_criticals(
    graph: &AffiliationGraph,
    district: &District,
    config: &GrlConfig,
) -> Result<CriticalReport> {
    config.validate()?;
    if district.len() != graph.n {
        bail!(Shape, "district has {} nodes, graph {}", district.len(), graph.n);
    }
    let cost = edge_costs(graph, config.eps);
    let b = percentile_rank(&betweenness(graph, &cost));
    let c = percentile_rank(&closeness(graph, &cost));
    let e = percentile_rank(&eigenvector(graph, 1e-9, config.max_iter)?);
    let pop = percentile_rank(&district.populations());
    let req = percentile_rank(&district.nodes.iter().map(|n| n.req).collect::<Vec<_>>());
    let crit: Vec<f64> = (0..graph.n).map(|i| crit_score(b[i], c[i], e[i], pop[i], req[i])).collect();
    let (community, q) = greedy_modularity(graph);
    let n_comm = community.iter().copied().max().map_or(0, |m| m + 1);
    let community_top = (0..n_comm)
        .map(|k| {
            let mut top = ranked_desc((0..graph.n).filter(|&i| community[i] == k), &crit);
            top.truncate(config.m);
            top
        })
        .collect();
    let mut global_top = ranked_desc(0..graph.n, &crit);
    global_top.truncate(config.top_k);
    Ok(CriticalReport {
        betweenness: b,
        closeness: c,
        eigenvector: e,
        crit_score: crit,
        community,
        modularity: q,
        community_top,
        global_top,
        edge_gain: graph.edge_gains(config.eps),
    })
}
